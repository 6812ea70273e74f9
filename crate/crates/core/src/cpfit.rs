//! Synthetic CP data, coefficient least squares (exact and sketched), the
//! decoupled per-slice formulation of the ALS subproblem, and CP-ALS.

use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics::{expand, rank1_gram, CpModel};
use crate::error::{Error, Result};
use crate::lstsq::{solve_hermitian, solve_normal_equations};
use crate::rng::{derive_seed, SeededRng};
use crate::sketch::{targets_for_ratio, MapKind, SketchPlan, Stage};
use crate::tensor::{
    mode_product, norm, norm_slice, outer_product, vectorize, DenseTensor, Matrix, C64, ONE,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SynthKind {
    /// Factor entries i.i.d. N(0,1).
    Gaussian,
    /// Factor entries `1 + σ·g` with `g` i.i.d. N(0,1).
    Coherent { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub shape: Vec<usize>,
    pub rank: usize,
    pub kind: SynthKind,
    pub seed: u64,
}

/// Draws the unit-normalized factors of `spec` with all weights equal to one.
/// Entries are drawn mode by mode, column by column.
pub fn random_model(spec: &SynthSpec) -> Result<CpModel> {
    if spec.rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if spec.shape.is_empty() || spec.shape.contains(&0) {
        return Err(Error::InvalidShape(format!("{:?}", spec.shape)));
    }
    let (offset, sigma) = match spec.kind {
        SynthKind::Gaussian => (0.0, 1.0),
        SynthKind::Coherent { sigma } if sigma > 0.0 && sigma.is_finite() => (1.0, sigma),
        SynthKind::Coherent { sigma } => {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {sigma}"
            )))
        }
    };
    let mut rng = SeededRng::new(spec.seed);
    let factors = spec
        .shape
        .iter()
        .map(|&n| {
            let mut cols = Vec::with_capacity(spec.rank);
            for _ in 0..spec.rank {
                let col: Vec<C64> = (0..n)
                    .map(|_| C64::new(offset + sigma * rng.standard_normal(), 0.0))
                    .collect();
                let nrm = norm_slice(&col);
                cols.push(col.into_iter().map(|v| v / nrm).collect());
            }
            Matrix::from_columns(&cols)
        })
        .collect::<Result<Vec<_>>>()?;
    CpModel::new(vec![ONE; spec.rank], factors)
}

/// Random model plus its exact dense expansion `Σ_k ○_j y_k⁽ʲ⁾`.
pub fn synthesize(spec: &SynthSpec) -> Result<(CpModel, DenseTensor)> {
    let model = random_model(spec)?;
    let dense = model.to_dense()?;
    Ok((model, dense))
}

/// Solution of a coefficient least-squares problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LsSolution {
    pub coefficients: Vec<C64>,
    /// `‖target − Σ_k β_k basis_k‖` for the (possibly sketched) target.
    pub residual: f64,
    /// Condition number of the normal-equations Gram matrix.
    pub gram_condition: f64,
}

impl LsSolution {
    /// `c_{n,α} = ‖α_p‖₂ / ‖reference‖₂`.
    pub fn relative_norm(&self, reference: &[C64]) -> Result<f64> {
        relative_coefficient_norm(reference, &self.coefficients)
    }
}

fn check_basis(shape: &[usize], factors: &[Matrix]) -> Result<usize> {
    if factors.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.len(),
            found: factors.len(),
        });
    }
    let r = factors[0].cols();
    for (f, &n) in factors.iter().zip(shape) {
        if f.rows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: f.rows(),
            });
        }
        if f.cols() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: f.cols(),
            });
        }
    }
    Ok(r)
}

fn conj_row(v: &[C64]) -> Matrix {
    Matrix::new(1, v.len(), v.iter().map(|z| z.conj()).collect()).expect("non-empty vector")
}

/// Contracts `x` against `conj(y_k⁽ˡ⁾)` on every mode except `keep`. The
/// result holds `⟨X, ○_ℓ y_k⁽ˡ⁾⟩` (one value) or, when `keep` is given, the
/// corresponding mode-`keep` vector.
fn contract(
    x: &DenseTensor,
    factors: &[Matrix],
    k: usize,
    keep: Option<usize>,
) -> Result<Vec<C64>> {
    let mut acc: Option<DenseTensor> = None;
    for (l, f) in factors.iter().enumerate() {
        if Some(l) == keep {
            continue;
        }
        let row = conj_row(&f.column(k));
        acc = Some(mode_product(acc.as_ref().unwrap_or(x), &row, l)?);
    }
    Ok(acc.map_or_else(|| x.data().to_vec(), DenseTensor::into_data))
}

/// `BᴴB` for the design whose columns are `vect(○_ℓ y_k⁽ˡ⁾)`.
fn normal_gram(factors: &[Matrix]) -> Matrix {
    rank1_gram(factors).transpose()
}

fn rank1_design(factors: &[Matrix]) -> Result<Matrix> {
    let r = factors[0].cols();
    let columns = (0..r)
        .map(|k| {
            let cols: Vec<Vec<C64>> = factors.iter().map(|f| f.column(k)).collect();
            let refs: Vec<&[C64]> = cols.iter().map(Vec::as_slice).collect();
            Ok(vectorize(&outer_product(&refs)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(&columns)
}

/// `α = argmin_β ‖X − Σ_k β_k ○_j y_k⁽ʲ⁾‖` through the normal equations
/// `(BᴴB)β = Bᴴ vect(X)`. `BᴴB` and `Bᴴ vect(X)` are formed from factor
/// inner products and mode contractions, so `B` is only materialized for the
/// ill-conditioned fallback.
pub fn ls_coefficients(x: &DenseTensor, factors: &[Matrix]) -> Result<LsSolution> {
    let r = check_basis(x.shape(), factors)?;
    let gram = normal_gram(factors);
    let rhs = (0..r)
        .map(|k| Ok(contract(x, factors, k, None)?[0]))
        .collect::<Result<Vec<_>>>()?;
    let solved =
        solve_normal_equations(&gram, &rhs, || Ok((rank1_design(factors)?, vectorize(x))))?;
    let mut resid = x.clone();
    resid.axpy(-ONE, &expand(factors, &solved.coefficients)?)?;
    Ok(LsSolution {
        residual: resid.norm(),
        coefficients: solved.coefficients,
        gram_condition: solved.gram_condition,
    })
}

fn dense_ls(design: Matrix, target: Vec<C64>) -> Result<LsSolution> {
    let adj = design.adjoint();
    let gram = adj.matmul(&design)?;
    let rhs = adj.mul_vec(&target)?;
    let solved = solve_normal_equations(&gram, &rhs, || Ok((design.clone(), target.clone())))?;
    let fitted = design.mul_vec(&solved.coefficients)?;
    let residual = target
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(LsSolution {
        coefficients: solved.coefficients,
        residual,
        gram_condition: solved.gram_condition,
    })
}

/// Applies each mode stage of `plan` to every factor column (`A_ℓ y_k⁽ˡ⁾`).
fn sketch_factors(
    plan: &SketchPlan,
    factors: &[Matrix],
    skip: Option<usize>,
) -> Result<Vec<Matrix>> {
    let r = factors[0].cols();
    let sketched: Vec<Vec<Vec<C64>>> = (0..r)
        .map(|k| {
            let cols: Vec<Vec<C64>> = factors.iter().map(|f| f.column(k)).collect();
            let refs: Vec<&[C64]> = cols.iter().map(Vec::as_slice).collect();
            Ok(plan.sketch_rank1(&refs)?.factors)
        })
        .collect::<Result<_>>()?;
    (0..factors.len())
        .map(|l| {
            if Some(l) == skip {
                return Ok(factors[l].clone());
            }
            let cols: Vec<Vec<C64>> = sketched.iter().map(|s| s[l].clone()).collect();
            Matrix::from_columns(&cols)
        })
        .collect()
}

/// `α_p = argmin_β ‖X ×_j A_j − Σ_k β_k ○_j A_j y_k⁽ʲ⁾‖`, or with a second
/// stage `A`, `argmin_β ‖A vect(X ×_j A_j) − Σ_k β_k A vect(○_j A_j y_k⁽ʲ⁾)‖`.
///
/// The data tensor is sketched once; each basis tensor is sketched factor by
/// factor.
pub fn compressed_ls_coefficients(
    x: &DenseTensor,
    factors: &[Matrix],
    plan: &SketchPlan,
) -> Result<LsSolution> {
    check_basis(x.shape(), factors)?;
    if plan.shape() != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "plan expects {:?}, tensor is {:?}",
            plan.shape(),
            x.shape()
        )));
    }
    let sketched = sketch_factors(plan, factors, None)?;
    match plan.second_stage() {
        None => ls_coefficients(&plan.sketch_modewise(x)?, &sketched),
        Some(second) => {
            let design = rank1_design(&sketched)?;
            let r = design.cols();
            let columns = (0..r)
                .map(|k| second.apply(&design.column(k)))
                .collect::<Result<Vec<_>>>()?;
            dense_ls(Matrix::from_columns(&columns)?, plan.sketch_full(x)?)
        }
    }
}

/// The `(d−1)`-mode slice `X^{(j,h)}`: row `h` of `X_(j)` re-tensorized.
pub fn mode_slice(x: &DenseTensor, mode: usize, h: usize) -> Result<DenseTensor> {
    let (left, n, right) = x.mode_split(mode)?;
    if x.order() < 2 {
        return Err(Error::InvalidArgument(
            "slicing needs at least two modes".into(),
        ));
    }
    if h >= n {
        return Err(Error::InvalidArgument(format!(
            "slice index {h} out of range for extent {n}"
        )));
    }
    let mut shape = x.shape().to_vec();
    shape.remove(mode);
    let src = x.data();
    let mut data = Vec::with_capacity(left * right);
    for r in 0..right {
        let base = left * (h + n * r);
        data.extend_from_slice(&src[base..base + left]);
    }
    DenseTensor::new(shape, data)
}

fn without(factors: &[Matrix], mode: usize) -> Vec<Matrix> {
    factors
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != mode)
        .map(|(_, f)| f.clone())
        .collect()
}

/// Solves one decoupled slice problem
/// `argmin_{α′} ‖X^{(j,h)} − Σ_k α′_k ○_{ℓ≠j} y_k⁽ˡ⁾‖`, optionally with every
/// mode `ℓ ≠ j` sketched by `plan` (whose mode-`j` map is ignored). The
/// solution satisfies `α′_k = α_k y⁽ʲ⁾_{k,h}` for exact data.
pub fn decoupled_ls_slice(
    x: &DenseTensor,
    factors: &[Matrix],
    mode: usize,
    h: usize,
    plan: Option<&SketchPlan>,
) -> Result<Vec<C64>> {
    check_basis(x.shape(), factors)?;
    let slice = mode_slice(x, mode, h)?;
    let reduced = without(factors, mode);
    let sol = match plan {
        None => ls_coefficients(&slice, &reduced)?,
        Some(plan) => compressed_ls_coefficients(&slice, &reduced, &plan.without_mode(mode)?)?,
    };
    Ok(sol.coefficients)
}

/// Runs [`decoupled_ls_slice`] for every `h ∈ [n_j]` in parallel and stacks
/// the solutions as the rows of an `n_j × r` matrix `[α′_{j,h,k}]`.
pub fn decoupled_mode_solve(
    x: &DenseTensor,
    factors: &[Matrix],
    mode: usize,
    plan: Option<&SketchPlan>,
) -> Result<Matrix> {
    let (_, n, _) = x.mode_split(mode)?;
    let rows = (0..n)
        .into_par_iter()
        .map(|h| decoupled_ls_slice(x, factors, mode, h, plan))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Factor update `ỹ⁽ʲ⁾_{k,h} = α′_{j,h,k} / α_k`.
pub fn factor_update(alpha_prime: &Matrix, weights: &[C64]) -> Result<Matrix> {
    if alpha_prime.cols() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: alpha_prime.cols(),
        });
    }
    if let Some((index, w)) = weights.iter().enumerate().find(|(_, w)| w.norm() < 1e-12) {
        return Err(Error::ZeroWeight {
            index,
            value: w.norm(),
        });
    }
    Matrix::from_fn(alpha_prime.rows(), alpha_prime.cols(), |h, k| {
        alpha_prime[(h, k)] / weights[k]
    })
}

/// Matricized ALS subproblem
/// `min_Ŷ ‖X_(j) − Ŷ (Y⁽ᵈ⁻¹⁾ ⊙ … ⊙ Y⁽ʲ⁺¹⁾ ⊙ Y⁽ʲ⁻¹⁾ ⊙ … ⊙ Y⁽⁰⁾)ᵀ‖_F`
/// solved through its Khatri–Rao normal equations. With a plan, modes
/// `ℓ ≠ j` of both the data and the factors are sketched first.
pub fn solve_mode(
    x: &DenseTensor,
    factors: &[Matrix],
    mode: usize,
    plan: Option<&SketchPlan>,
) -> Result<Matrix> {
    let r = check_basis(x.shape(), factors)?;
    x.mode_split(mode)?;
    let (data, fs) = match plan {
        None => (x.clone(), factors.to_vec()),
        Some(plan) => {
            if plan.second_stage().is_some() {
                return Err(Error::InvalidPlan(
                    "ALS subproblems take modewise plans only".into(),
                ));
            }
            (
                plan.sketch_modes_except(x, Some(mode))?,
                sketch_factors(plan, factors, Some(mode))?,
            )
        }
    };
    // Kᵀ conj(K) is the Hadamard product of Y⁽ˡ⁾ᵀ conj(Y⁽ˡ⁾) over ℓ ≠ j.
    let gram = Matrix::from_fn(r, r, |k, h| {
        fs.iter()
            .enumerate()
            .filter(|&(l, _)| l != mode)
            .map(|(_, f)| {
                (0..f.rows())
                    .map(|i| f[(i, k)] * f[(i, h)].conj())
                    .sum::<C64>()
            })
            .fold(ONE, |a, b| a * b)
    })?;
    // Mᴴ where M = X_(j) conj(K); column k of M is X contracted on ℓ ≠ j.
    let n = x.shape()[mode];
    let m_cols = (0..r)
        .map(|k| contract(&data, &fs, k, Some(mode)))
        .collect::<Result<Vec<_>>>()?;
    let m_adj = Matrix::from_fn(r, n, |k, i| m_cols[k][i].conj())?;
    let (z, _) = solve_hermitian(&gram, &m_adj)?;
    Ok(z.adjoint())
}

/// How compressed ALS sketches its subproblems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlsSketch {
    pub kind: MapKind,
    /// Per-mode compression ratio `c_s`; targets are `⌈c_s n_j⌉`.
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Stop once `|e_cpd(t−1) − e_cpd(t)| < tol`.
    pub tol: f64,
    pub seed: u64,
    pub sketch: Option<AlsSketch>,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            sketch: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlsStep {
    pub iter: usize,
    pub e_cpd: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlsFit {
    pub model: CpModel,
    pub history: Vec<AlsStep>,
    pub converged: bool,
}

impl AlsFit {
    pub fn final_error(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |s| s.e_cpd)
    }
}

/// CP-ALS. Factors start as normalized Gaussian draws from `opts.seed`; each
/// sweep cycles modes `0…d−1`, solving the matricized subproblem, then
/// renormalizes the updated columns into the weights. With `opts.sketch`
/// set, one modewise plan (seed `derive_seed(opts.seed, sweep + 1)`) is drawn
/// per sweep and every subproblem of that sweep is compressed with it.
/// `e_cpd = ‖X − X̂‖/‖X‖` is always measured on the full data.
pub fn cp_als(x: &DenseTensor, rank: usize, opts: &AlsOptions) -> Result<AlsFit> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "max_iters must be at least 1".into(),
        ));
    }
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bad tolerance {}",
            opts.tol
        )));
    }
    let x_norm = norm(x);
    if x_norm == 0.0 {
        return Err(Error::ZeroDenominator("e_cpd (tensor is zero)"));
    }
    let shape = x.shape().to_vec();
    let targets = opts
        .sketch
        .map(|s| targets_for_ratio(&shape, s.ratio))
        .transpose()?;

    let init = random_model(&SynthSpec {
        shape: shape.clone(),
        rank,
        kind: SynthKind::Gaussian,
        seed: opts.seed,
    })?;
    let mut factors = init.factors().to_vec();
    let mut weights = vec![ONE; rank];
    let mut history = Vec::new();
    let mut converged = false;
    let start = Instant::now();

    for iter in 0..opts.max_iters {
        let plan = match (opts.sketch, &targets) {
            (Some(s), Some(t)) => Some(SketchPlan::new(
                &shape,
                t,
                s.kind,
                None,
                derive_seed(opts.seed, iter as u64 + 1),
            )?),
            _ => None,
        };
        for mode in 0..shape.len() {
            let solved = solve_mode(x, &factors, mode, plan.as_ref())?;
            for k in 0..rank {
                let col = solved.column(k);
                let nrm = norm_slice(&col);
                if !nrm.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "factor {k} of mode {mode} at sweep {iter}"
                    )));
                }
                weights[k] = C64::new(nrm, 0.0);
                if nrm > 0.0 {
                    for (i, v) in col.iter().enumerate() {
                        factors[mode][(i, k)] = v / nrm;
                    }
                }
            }
        }
        let mut resid = x.clone();
        resid.axpy(-ONE, &expand(&factors, &weights)?)?;
        let e_cpd = resid.norm() / x_norm;
        if !e_cpd.is_finite() {
            return Err(Error::NonFinite(format!("objective at sweep {iter}")));
        }
        let prev = history.last().map(|s: &AlsStep| s.e_cpd);
        history.push(AlsStep {
            iter,
            e_cpd,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if prev.is_some_and(|p| (p - e_cpd).abs() < opts.tol) {
            converged = true;
            break;
        }
    }
    Ok(AlsFit {
        model: CpModel::new(weights, factors)?,
        history,
        converged,
    })
}

/// `c_{n,X} = ‖X_p‖ / ‖X‖` for flattened data.
pub fn relative_tensor_norm(original: &[C64], projected: &[C64]) -> Result<f64> {
    let denom = norm_slice(original);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("c_n_X"));
    }
    Ok(norm_slice(projected) / denom)
}

/// `c_{n,α} = ‖α_p‖₂ / ‖α‖₂`.
pub fn relative_coefficient_norm(alpha: &[C64], alpha_p: &[C64]) -> Result<f64> {
    let denom = norm_slice(alpha);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("c_n_alpha"));
    }
    Ok(norm_slice(alpha_p) / denom)
}

/// `‖α_p − α‖₂ / ‖α‖₂`.
pub fn relative_coefficient_error(alpha: &[C64], alpha_p: &[C64]) -> Result<f64> {
    if alpha.len() != alpha_p.len() {
        return Err(Error::DimensionMismatch {
            expected: alpha.len(),
            found: alpha_p.len(),
        });
    }
    let denom = norm_slice(alpha);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("relative coefficient error"));
    }
    let diff: Vec<C64> = alpha.iter().zip(alpha_p).map(|(a, b)| b - a).collect();
    Ok(norm_slice(&diff) / denom)
}

/// `e_cpd = ‖X − X̂‖ / ‖X‖`.
pub fn reconstruction_error(x: &DenseTensor, x_hat: &DenseTensor) -> Result<f64> {
    let denom = norm(x);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("e_cpd"));
    }
    let mut resid = x.clone();
    resid.axpy(-ONE, x_hat)?;
    Ok(resid.norm() / denom)
}

/// True when every stage of the plan is the identity.
pub fn is_identity_plan(plan: &SketchPlan) -> bool {
    plan.stages().iter().all(Stage::is_identity)
        && plan.second_stage().is_none_or(Stage::is_identity)
}
