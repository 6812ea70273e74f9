//! Dense complex tensors and the deterministic multilinear algebra built on
//! them: fibers, unfoldings, mode products, outer and inner products.
//!
//! Storage is colexicographic (mode 0 varies fastest). With that order the
//! vectorization of `X ×₀ U₀ ×₁ U₁ … ×_{d-1} U_{d-1}` equals
//! `(U_{d-1} ⊗ … ⊗ U₀) · vect(X)` with no permutation, and the mode-`j`
//! unfolding lists columns with the smallest remaining mode varying fastest.
//!
//! Mode indices are zero-based throughout the API.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Work (in complex multiply-adds) above which mode products fan out over threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// A `d`-mode array of complex doubles stored colexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape(
            "a tensor needs at least one mode".into(),
        ));
    }
    if let Some(pos) = shape.iter().position(|&n| n == 0) {
        return Err(Error::InvalidShape(format!("extent of mode {pos} is zero")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::InvalidShape(format!("{shape:?} overflows usize")))
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![ZERO; len],
        })
    }

    pub fn from_real(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Result<Self> {
        let len = check_shape(&shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (i, n) in idx.iter_mut().zip(&shape) {
                *i += 1;
                if *i < *n {
                    break;
                }
                *i = 0;
            }
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of modes `d`.
    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Linear offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .rev()
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    /// Splits the shape around `mode` into (product of earlier extents,
    /// extent of `mode`, product of later extents).
    pub fn mode_split(&self, mode: usize) -> Result<(usize, usize, usize)> {
        self.check_mode(mode)?;
        let left = self.shape[..mode].iter().product();
        let right = self.shape[mode + 1..].iter().product();
        Ok((left, self.shape[mode], right))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            })
        } else {
            Ok(())
        }
    }

    /// Returns the same data under a different shape with equal element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v * a).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: C64, other: &DenseTensor) -> Result<()> {
        same_shape(self, other)?;
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    /// True when every imaginary part is exactly `+0.0`.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|v| v.im.to_bits() == 0)
    }
}

fn same_shape(x: &DenseTensor, y: &DenseTensor) -> Result<()> {
    if x.shape != y.shape {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape, y.shape
        )));
    }
    Ok(())
}

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(format!("{rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidShape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds an `rows × columns.len()` matrix whose k-th column is `columns[k]`.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidShape("ragged columns".into()));
        }
        Self::from_fn(rows, cols, |i, k| columns[k][i])
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![ZERO; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> C64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, k)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: (0..self.cols)
                .flat_map(|j| (0..self.rows).map(move |i| (i, j)))
                .map(|(i, j)| self[(i, j)])
                .collect(),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Matrix {
        let mut t = self.transpose();
        t.data.iter_mut().for_each(|v| *v = v.conj());
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = vec![ZERO; self.rows * other.cols];
        for (i, out_row) in out.chunks_mut(other.cols).enumerate() {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, out)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Mode-`j` matricization `X_(j)`: an `n_j × ∏_{ℓ≠j} n_ℓ` matrix whose
/// columns are the mode-`j` fibers.
pub fn unfold(x: &DenseTensor, mode: usize) -> Result<Matrix> {
    let (left, n, right) = x.mode_split(mode)?;
    let cols = left * right;
    let mut data = vec![ZERO; n * cols];
    for r in 0..right {
        for i in 0..n {
            let src = &x.data[left * (i + n * r)..left * (i + n * r + 1)];
            let dst = i * cols + r * left;
            data[dst..dst + left].copy_from_slice(src);
        }
    }
    Matrix::new(n, cols, data)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    let mut out = DenseTensor::zeros(shape.to_vec())?;
    let (left, n, right) = out.mode_split(mode)?;
    if m.rows != n || m.cols != left * right {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix cannot fold into mode {mode} of {shape:?}",
            m.rows, m.cols
        )));
    }
    for r in 0..right {
        for i in 0..n {
            let src = i * m.cols + r * left;
            out.data[left * (i + n * r)..left * (i + n * r + 1)]
                .copy_from_slice(&m.data[src..src + left]);
        }
    }
    Ok(out)
}

/// The `j`-mode product `X ×_j U`: every mode-`j` fiber is multiplied by `U`.
pub fn mode_product(x: &DenseTensor, u: &Matrix, mode: usize) -> Result<DenseTensor> {
    let (left, n, right) = x.mode_split(mode)?;
    if u.cols != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u.cols,
        });
    }
    let m = u.rows;
    let mut shape = x.shape.clone();
    shape[mode] = m;
    let mut out = vec![ZERO; left * m * right];

    let slab = |(r, dst): (usize, &mut [C64])| {
        let src = &x.data[r * left * n..(r + 1) * left * n];
        for i in 0..m {
            let dst_fiber = &mut dst[i * left..(i + 1) * left];
            for (k, &coef) in u.row(i).iter().enumerate() {
                if coef == ZERO {
                    continue;
                }
                for (d, &s) in dst_fiber.iter_mut().zip(&src[k * left..(k + 1) * left]) {
                    *d += coef * s;
                }
            }
        }
    };
    if left * m * n * right >= PAR_THRESHOLD && right > 1 {
        out.par_chunks_mut(left * m).enumerate().for_each(slab);
    } else {
        out.chunks_mut(left * m).enumerate().for_each(slab);
    }
    DenseTensor::new(shape, out)
}

/// Applies several mode products in the order given. Modes must be distinct.
pub fn multi_mode_product(x: &DenseTensor, maps: &[(usize, &Matrix)]) -> Result<DenseTensor> {
    let mut seen = vec![false; x.order()];
    for &(mode, _) in maps {
        x.check_mode(mode)?;
        if std::mem::replace(&mut seen[mode], true) {
            return Err(Error::DuplicateMode(mode));
        }
    }
    let mut iter = maps.iter();
    let Some(&(mode, u)) = iter.next() else {
        return Ok(x.clone());
    };
    let mut acc = mode_product(x, u, mode)?;
    for &(mode, u) in iter {
        acc = mode_product(&acc, u, mode)?;
    }
    Ok(acc)
}

/// Colexicographic flattening.
pub fn vectorize(x: &DenseTensor) -> Vec<C64> {
    x.data.clone()
}

/// `y⁽⁰⁾ ○ y⁽¹⁾ ○ … ○ y⁽ᵈ⁻¹⁾`.
pub fn outer_product(vectors: &[&[C64]]) -> Result<DenseTensor> {
    let Some((first, rest)) = vectors.split_first() else {
        return Err(Error::Empty("outer product of zero vectors"));
    };
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    check_shape(&shape)?;
    let mut data = first.to_vec();
    for v in rest {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &c in v.iter() {
            next.extend(data.iter().map(|&a| a * c));
        }
        data = next;
    }
    DenseTensor::new(shape, data)
}

/// `⟨X, Y⟩ = Σ X_i · conj(Y_i)`, conjugate-linear in the second argument.
pub fn inner(x: &DenseTensor, y: &DenseTensor) -> Result<C64> {
    same_shape(x, y)?;
    Ok(inner_slices(&x.data, &y.data))
}

pub(crate) fn inner_slices(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

pub(crate) fn norm_slice(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm(x: &DenseTensor) -> f64 {
    norm_slice(&x.data)
}

/// Columnwise Kronecker product: column `k` is `a_k ⊗ b_k`, which equals
/// `vectorize(b_k ○ a_k)`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            expected: a.cols,
            found: b.cols,
        });
    }
    Matrix::from_fn(a.rows * b.rows, a.cols, |row, k| {
        a[(row / b.rows, k)] * b[(row % b.rows, k)]
    })
}
