//! Random Johnson–Lindenstrauss maps used as per-mode building blocks.
//!
//! Two variants are provided:
//!
//! * **Gaussian**: an explicit `m × n` matrix `G / √m` with i.i.d. standard
//!   normal entries.
//! * **FJLT**: the implicit operator `(1/√m) · R · F · D`, where `D` flips
//!   signs with a Rademacher vector, `F` is the *unnormalized* length-`n` DFT
//!   (`F[p,k] = exp(-2πi·pk/n)`, entries of unit modulus) and `R` keeps `m`
//!   distinct rows. Equivalently `√(n/m) · R · F_unitary · D`. With `m = n`
//!   the operator is an exact isometry.
//!
//! The FJLT is never materialized when applied; `F` runs through an FFT of
//! the exact length `n` (no zero padding).

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{mode_product, DenseTensor, Matrix, C64, ZERO};

/// Fibers times length above which FJLT mode application goes parallel.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq)]
pub enum Embedding {
    Gaussian(Matrix),
    Fjlt(Fjlt),
}

/// Implicit restriction · DFT · sign-flip operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Fjlt {
    n: usize,
    signs: Vec<f64>,
    rows: Vec<usize>,
    scale: f64,
}

impl Fjlt {
    /// Builds the operator from explicit parts. `signs` must be ±1 and `rows`
    /// strictly increasing indices below `signs.len()`.
    pub fn from_parts(signs: Vec<f64>, rows: Vec<usize>) -> Result<Self> {
        let n = signs.len();
        let m = rows.len();
        if m == 0 || m > n {
            return Err(Error::InvalidDimensions(format!(
                "FJLT needs 1 <= m <= n, got m={m}, n={n}"
            )));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidDimensions("signs must be +1 or -1".into()));
        }
        if rows.windows(2).any(|w| w[0] >= w[1]) || rows[m - 1] >= n {
            return Err(Error::InvalidDimensions(
                "selected rows must be distinct, sorted and below n".into(),
            ));
        }
        Ok(Self {
            n,
            signs,
            rows,
            scale: 1.0 / (m as f64).sqrt(),
        })
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn plan(&self) -> Arc<dyn Fft<f64>> {
        FftPlanner::new().plan_fft_forward(self.n)
    }

    /// Applies the operator to one fiber held in `buf` (overwritten), writing
    /// the `m` outputs through `emit`.
    fn apply_fiber(
        &self,
        fft: &dyn Fft<f64>,
        buf: &mut [C64],
        scratch: &mut [C64],
        mut emit: impl FnMut(usize, C64),
    ) {
        for (v, &s) in buf.iter_mut().zip(&self.signs) {
            *v *= s;
        }
        fft.process_with_scratch(buf, scratch);
        for (i, &row) in self.rows.iter().enumerate() {
            emit(i, buf[row] * self.scale);
        }
    }

    fn dense(&self) -> Result<Matrix> {
        let n = self.n;
        Matrix::from_fn(self.rows.len(), n, |i, k| {
            let phase = -2.0 * PI * ((self.rows[i] * k) % n) as f64 / n as f64;
            C64::from_polar(self.scale * self.signs[k], phase)
        })
    }
}

/// Dense Gaussian map `G / √m`, `G` with i.i.d. N(0,1) real entries.
pub fn gaussian_embedding(m: usize, n: usize, rng: &mut SeededRng) -> Result<Embedding> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!(
            "Gaussian embedding needs m, n >= 1, got m={m}, n={n}"
        )));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let data = (0..m * n)
        .map(|_| C64::new(scale * rng.standard_normal(), 0.0))
        .collect();
    Ok(Embedding::Gaussian(Matrix::new(m, n, data)?))
}

/// Fast JL map `(1/√m)·R·F·D` with Rademacher signs and `m` rows drawn
/// uniformly without replacement.
pub fn fjlt_embedding(m: usize, n: usize, rng: &mut SeededRng) -> Result<Embedding> {
    if m == 0 || m > n {
        return Err(Error::InvalidDimensions(format!(
            "FJLT needs 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    let signs = (0..n).map(|_| rng.rademacher()).collect();
    let rows = rng.distinct_sorted(n, m);
    Ok(Embedding::Fjlt(Fjlt::from_parts(signs, rows)?))
}

impl Embedding {
    pub fn target_dim(&self) -> usize {
        match self {
            Embedding::Gaussian(a) => a.rows(),
            Embedding::Fjlt(f) => f.rows.len(),
        }
    }

    pub fn source_dim(&self) -> usize {
        match self {
            Embedding::Gaussian(a) => a.cols(),
            Embedding::Fjlt(f) => f.n,
        }
    }

    /// Explicit `m × n` matrix of the map.
    pub fn to_dense(&self) -> Result<Matrix> {
        match self {
            Embedding::Gaussian(a) => Ok(a.clone()),
            Embedding::Fjlt(f) => f.dense(),
        }
    }

    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.source_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim(),
                found: x.len(),
            });
        }
        match self {
            Embedding::Gaussian(a) => a.mul_vec(x),
            Embedding::Fjlt(f) => {
                let fft = f.plan();
                let mut buf = x.to_vec();
                let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
                let mut out = vec![ZERO; f.rows.len()];
                f.apply_fiber(fft.as_ref(), &mut buf, &mut scratch, |i, v| out[i] = v);
                Ok(out)
            }
        }
    }

    /// `X ×_mode A`. The FJLT path runs one FFT per mode-`mode` fiber.
    pub fn apply_to_mode(&self, x: &DenseTensor, mode: usize) -> Result<DenseTensor> {
        let f = match self {
            Embedding::Gaussian(a) => return mode_product(x, a, mode),
            Embedding::Fjlt(f) => f,
        };
        let (left, n, right) = x.mode_split(mode)?;
        if n != f.n {
            return Err(Error::DimensionMismatch {
                expected: f.n,
                found: n,
            });
        }
        let m = f.rows.len();
        let fft = f.plan();
        let scratch_len = fft.get_inplace_scratch_len();
        let src = x.data();

        // Fiber-major staging buffer: fiber `l + left*r` occupies `m` slots.
        let mut staged = vec![ZERO; left * right * m];
        let run =
            |(fiber, out): (usize, &mut [C64]), buf: &mut Vec<C64>, scratch: &mut Vec<C64>| {
                let (l, r) = (fiber % left, fiber / left);
                let base = l + left * n * r;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = src[base + left * k];
                }
                f.apply_fiber(fft.as_ref(), buf, scratch, |i, v| out[i] = v);
            };
        if left * right * n >= PAR_THRESHOLD {
            staged.par_chunks_mut(m).enumerate().for_each_init(
                || (vec![ZERO; n], vec![ZERO; scratch_len]),
                |(buf, scratch), item| run(item, buf, scratch),
            );
        } else {
            let (mut buf, mut scratch) = (vec![ZERO; n], vec![ZERO; scratch_len]);
            staged
                .chunks_mut(m)
                .enumerate()
                .for_each(|item| run(item, &mut buf, &mut scratch));
        }

        let mut shape = x.shape().to_vec();
        shape[mode] = m;
        let mut out = vec![ZERO; left * m * right];
        for (fiber, vals) in staged.chunks(m).enumerate() {
            let (l, r) = (fiber % left, fiber / left);
            let base = l + left * m * r;
            for (i, &v) in vals.iter().enumerate() {
                out[base + left * i] = v;
            }
        }
        DenseTensor::new(shape, out)
    }
}
