//! Small dense least-squares kernels on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR, SVD};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, C64};

/// Gram condition numbers above this switch to an orthogonal factorization.
pub(crate) const MAX_GRAM_CONDITION: f64 = 1e8;

pub(crate) struct Solved {
    pub coefficients: Vec<C64>,
    pub gram_condition: f64,
}

fn to_na(m: &Matrix) -> DMatrix<C64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Ratio of extreme eigenvalues of a Hermitian positive semidefinite matrix;
/// infinite when the smallest is not positive.
pub(crate) fn hermitian_condition(gram: &DMatrix<C64>) -> f64 {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min.is_nan() || min <= 0.0 || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn rank_tolerance(svd: &SVD<C64, nalgebra::Dyn, nalgebra::Dyn>, rows: usize, cols: usize) -> f64 {
    let smax = svd.singular_values.max();
    smax * (rows.max(cols) as f64 * f64::EPSILON).max(1e-12)
}

/// Solves `min_β ‖x − Bβ‖₂` from its normal equations `(BᴴB) β = Bᴴx`.
///
/// When the Gram matrix is worse conditioned than [`MAX_GRAM_CONDITION`],
/// `design` is invoked to materialize `(B, x)` and the problem is solved
/// through a Householder QR of `B`. Rank is judged from the singular values
/// of `B`; a numerically rank-deficient `B` is an error.
pub(crate) fn solve_normal_equations(
    gram: &Matrix,
    rhs: &[C64],
    design: impl FnOnce() -> Result<(Matrix, Vec<C64>)>,
) -> Result<Solved> {
    let r = gram.rows();
    let g = to_na(gram);
    let gram_condition = hermitian_condition(&g);
    if gram_condition <= MAX_GRAM_CONDITION {
        if let Some(chol) = Cholesky::new(g) {
            let beta = chol.solve(&DVector::from_column_slice(rhs));
            return Ok(Solved {
                coefficients: beta.iter().copied().collect(),
                gram_condition,
            });
        }
    }
    let (b, x) = design()?;
    let (rows, cols) = (b.rows(), b.cols());
    let svd = SVD::new(to_na(&b), true, true);
    let tol = rank_tolerance(&svd, rows, cols);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < r {
        return Err(Error::DegenerateBasis { rank, expected: r });
    }
    let qr = QR::new(to_na(&b));
    let qhx = qr.q().adjoint() * DVector::from_column_slice(&x);
    let beta = qr
        .r()
        .solve_upper_triangular(&qhx)
        .ok_or_else(|| Error::NonFinite("singular triangular factor".into()))?;
    Ok(Solved {
        coefficients: beta.iter().copied().collect(),
        gram_condition,
    })
}

/// Solves `G Z = R` for Hermitian PSD `G` with several right-hand sides
/// (columns of `R`). Ill-conditioned systems get the minimum-norm solution
/// through an SVD pseudo-inverse instead of failing.
pub(crate) fn solve_hermitian(gram: &Matrix, rhs: &Matrix) -> Result<(Matrix, f64)> {
    let g = to_na(gram);
    let b = to_na(rhs);
    let cond = hermitian_condition(&g);
    let z = match (cond <= MAX_GRAM_CONDITION)
        .then(|| Cholesky::new(g.clone()))
        .flatten()
    {
        Some(chol) => chol.solve(&b),
        None => {
            let n = g.nrows();
            let svd = SVD::new(g, true, true);
            let tol = rank_tolerance(&svd, n, n);
            svd.solve(&b, tol)
                .map_err(|e| Error::NonFinite(e.to_string()))?
        }
    };
    let out = Matrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)])?;
    Ok((out, cond))
}
