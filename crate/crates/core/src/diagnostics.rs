//! CP models in standard form and their coherence diagnostics.

use std::fmt;

use crate::cpfit::{random_model, SynthKind, SynthSpec};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::stats;
use crate::tensor::{inner_slices, norm_slice, outer_product, DenseTensor, Matrix, C64, ONE};

/// Tolerance on `‖y‖₂ − 1` accepted by [`CpModel::new`].
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// A rank-`r` CP model `Σ_k α_k y_k⁽⁰⁾ ○ … ○ y_k⁽ᵈ⁻¹⁾` with unit-norm factors.
///
/// Factor `ℓ` is stored as an `n_ℓ × r` matrix whose column `k` is `y_k⁽ˡ⁾`.
#[derive(Clone, Debug, PartialEq)]
pub struct CpModel {
    weights: Vec<C64>,
    factors: Vec<Matrix>,
}

fn check_factor_ranks(weights_len: usize, factors: &[Matrix]) -> Result<()> {
    if weights_len == 0 {
        return Err(Error::Empty("CP model of rank zero"));
    }
    if factors.is_empty() {
        return Err(Error::Empty("CP model with no modes"));
    }
    for f in factors {
        if f.cols() != weights_len {
            return Err(Error::DimensionMismatch {
                expected: weights_len,
                found: f.cols(),
            });
        }
    }
    Ok(())
}

impl CpModel {
    /// Rejects any factor column whose norm differs from one by more than
    /// [`UNIT_NORM_TOL`].
    pub fn new(weights: Vec<C64>, factors: Vec<Matrix>) -> Result<Self> {
        check_factor_ranks(weights.len(), &factors)?;
        for (mode, f) in factors.iter().enumerate() {
            for index in 0..f.cols() {
                let norm = norm_slice(&f.column(index));
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::NonUnitFactor { mode, index, norm });
                }
            }
        }
        Ok(Self { weights, factors })
    }

    /// Normalizes every factor column and absorbs the norms into the weights:
    /// `α_k ← α_k ∏_ℓ ‖y_k⁽ˡ⁾‖₂`.
    pub fn normalized(mut weights: Vec<C64>, mut factors: Vec<Matrix>) -> Result<Self> {
        check_factor_ranks(weights.len(), &factors)?;
        for (mode, f) in factors.iter_mut().enumerate() {
            for (k, w) in weights.iter_mut().enumerate() {
                let norm = norm_slice(&f.column(k));
                if !norm.is_finite() || norm <= 0.0 {
                    return Err(Error::NonUnitFactor {
                        mode,
                        index: k,
                        norm,
                    });
                }
                *w *= norm;
                for i in 0..f.rows() {
                    f[(i, k)] /= norm;
                }
            }
        }
        Ok(Self { weights, factors })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    /// `y_k⁽ˡ⁾`.
    pub fn vector(&self, mode: usize, k: usize) -> Vec<C64> {
        self.factors[mode].column(k)
    }

    pub fn with_weights(&self, weights: Vec<C64>) -> Result<Self> {
        if weights.len() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                found: weights.len(),
            });
        }
        Ok(Self {
            weights,
            factors: self.factors.clone(),
        })
    }

    /// Dense expansion `Σ_k α_k ○_ℓ y_k⁽ˡ⁾`.
    pub fn to_dense(&self) -> Result<DenseTensor> {
        expand(&self.factors, &self.weights)
    }

    /// `G_{kh} = ⟨○_ℓ y_k⁽ˡ⁾, ○_ℓ y_h⁽ˡ⁾⟩ = ∏_ℓ ⟨y_k⁽ˡ⁾, y_h⁽ˡ⁾⟩`.
    pub fn gram(&self) -> Matrix {
        rank1_gram(&self.factors)
    }

    /// `‖Σ_k α_k ○_ℓ y_k⁽ˡ⁾‖²` computed from the Gram matrix.
    pub fn norm_sqr(&self) -> f64 {
        let g = self.gram();
        let mut acc = C64::new(0.0, 0.0);
        for (k, &ak) in self.weights.iter().enumerate() {
            for (h, &ah) in self.weights.iter().enumerate() {
                acc += ak * ah.conj() * g[(k, h)];
            }
        }
        acc.re.max(0.0)
    }
}

/// Dense expansion of arbitrary (not necessarily unit) factor matrices.
pub(crate) fn expand(factors: &[Matrix], weights: &[C64]) -> Result<DenseTensor> {
    let shape: Vec<usize> = factors.iter().map(Matrix::rows).collect();
    let mut out = DenseTensor::zeros(shape)?;
    for (k, &w) in weights.iter().enumerate() {
        let cols: Vec<Vec<C64>> = factors.iter().map(|f| f.column(k)).collect();
        let refs: Vec<&[C64]> = cols.iter().map(Vec::as_slice).collect();
        out.axpy(w, &outer_product(&refs)?)?;
    }
    Ok(out)
}

/// Gram matrix of the rank-one tensors whose factors are the columns of
/// `factors` (factor matrices need not have unit columns).
pub(crate) fn rank1_gram(factors: &[Matrix]) -> Matrix {
    let r = factors[0].cols();
    let cols: Vec<Vec<Vec<C64>>> = factors
        .iter()
        .map(|f| (0..r).map(|k| f.column(k)).collect())
        .collect();
    Matrix::from_fn(r, r, |k, h| {
        cols.iter()
            .map(|c| inner_slices(&c[k], &c[h]))
            .fold(ONE, |a, b| a * b)
    })
    .expect("rank is positive")
}

/// Modewise and basis coherence of a CP model.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceReport {
    pub rank: usize,
    pub order: usize,
    /// `μ_ℓ = max_{k≠h} |⟨y_k⁽ˡ⁾, y_h⁽ˡ⁾⟩|`.
    pub mode_coherence: Vec<f64>,
    /// `μ = max_ℓ μ_ℓ`.
    pub max_coherence: f64,
    /// `μ′ = max_{k≠h} ∏_ℓ |⟨y_k⁽ˡ⁾, y_h⁽ˡ⁾⟩|`.
    pub basis_coherence: f64,
    /// `μ^{d−1} < 1/(2r)`.
    pub admissible: bool,
}

impl fmt::Display for CoherenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rank={}", self.rank)?;
        writeln!(f, "order={}", self.order)?;
        for (l, mu) in self.mode_coherence.iter().enumerate() {
            writeln!(f, "mode_coherence_{l}={mu}")?;
        }
        writeln!(f, "max_coherence={}", self.max_coherence)?;
        writeln!(f, "basis_coherence={}", self.basis_coherence)?;
        writeln!(f, "admissible={}", self.admissible)
    }
}

/// Rank one has no distinct pairs; all its coherences are 0.
pub fn coherence(model: &CpModel) -> CoherenceReport {
    let r = model.rank();
    let d = model.order();
    let abs_grams: Vec<Matrix> = model
        .factors
        .iter()
        .map(|f| {
            let g = f.adjoint().matmul(f).expect("conformable");
            Matrix::from_fn(r, r, |k, h| C64::new(g[(k, h)].norm(), 0.0)).expect("rank is positive")
        })
        .collect();
    let pairs = || (0..r).flat_map(|k| (0..r).filter(move |&h| h != k).map(move |h| (k, h)));
    let mode_coherence: Vec<f64> = abs_grams
        .iter()
        .map(|g| pairs().map(|(k, h)| g[(k, h)].re).fold(0.0, f64::max))
        .collect();
    let max_coherence = mode_coherence.iter().copied().fold(0.0, f64::max);
    let basis_coherence = pairs()
        .map(|(k, h)| abs_grams.iter().map(|g| g[(k, h)].re).product::<f64>())
        .fold(0.0, f64::max);
    CoherenceReport {
        rank: r,
        order: d,
        mode_coherence,
        max_coherence,
        basis_coherence,
        admissible: max_coherence.powi(d as i32 - 1) < 1.0 / (2.0 * r as f64),
    }
}

/// Range for `‖α‖₂² / ‖Y‖²` implied by the basis coherence `μ′`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormBound {
    /// `1/(1+(r−1)μ′) ≤ ratio ≤ 1/(1−(r−1)μ′)`.
    Bounded { lower: f64, upper: f64 },
    /// `μ′ ≥ 1/(r−1)`: only the lower bound survives.
    Vacuous { lower: f64 },
}

impl NormBound {
    pub fn contains(&self, ratio: f64) -> bool {
        match *self {
            NormBound::Bounded { lower, upper } => ratio >= lower && ratio <= upper,
            NormBound::Vacuous { lower } => ratio >= lower,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientBound {
    pub basis_coherence: f64,
    pub bound: NormBound,
    /// The actual `‖α‖₂² / ‖Y‖²` of the model.
    pub ratio: f64,
}

/// Gershgorin bounds on the eigenvalues of the unit-diagonal Gram matrix of
/// the rank-one basis tensors give `‖α‖₂²/‖Y‖²` in
/// `[1/(1+(r−1)μ′), 1/(1−(r−1)μ′)]`.
pub fn coefficient_norm_bound(model: &CpModel) -> CoefficientBound {
    let r = model.rank() as f64;
    let mu = coherence(model).basis_coherence;
    let spread = (r - 1.0) * mu;
    let lower = 1.0 / (1.0 + spread);
    let bound = if spread < 1.0 {
        NormBound::Bounded {
            lower,
            upper: 1.0 / (1.0 - spread),
        }
    } else {
        NormBound::Vacuous { lower }
    };
    let alpha_sq: f64 = model.weights.iter().map(|w| w.norm_sqr()).sum();
    let y_sq = model.norm_sqr();
    let ratio = if y_sq > 0.0 {
        alpha_sq / y_sq
    } else {
        f64::INFINITY
    };
    CoefficientBound {
        basis_coherence: mu,
        bound,
        ratio,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceStats {
    /// `μ` of each trial's model, in trial order.
    pub per_trial: Vec<f64>,
    pub max: f64,
    pub median: f64,
    pub mean: f64,
}

/// Draws `trials` Gaussian CP models with `d` modes of extent `n` and rank
/// `r` (trial `t` seeded with `derive_seed(seed, t)`) and reports the spread
/// of their maximum modewise coherence.
pub fn subgaussian_coherence_check(
    n: usize,
    r: usize,
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<CoherenceStats> {
    if n == 0 || r == 0 || d == 0 || trials == 0 {
        return Err(Error::InvalidArgument(
            "n, r, d and trials must all be positive".into(),
        ));
    }
    let per_trial = (0..trials)
        .map(|t| {
            let spec = SynthSpec {
                shape: vec![n; d],
                rank: r,
                kind: SynthKind::Gaussian,
                seed: derive_seed(seed, t as u64),
            };
            Ok(coherence(&random_model(&spec)?).max_coherence)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CoherenceStats {
        max: per_trial.iter().copied().fold(0.0, f64::max),
        median: stats::median(&per_trial),
        mean: stats::mean(&per_trial),
        per_trial,
    })
}
