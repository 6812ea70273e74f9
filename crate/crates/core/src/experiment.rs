//! Compression-ratio sweeps and their CSV records.
//!
//! Every trial draws a fresh plan seeded with
//! `derive_seed(derive_seed(seed, ratio_index), trial)`; trials run in
//! parallel but rows are always emitted sorted by `(c_s, trial, metric)`.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::cpfit::{
    compressed_ls_coefficients, relative_coefficient_error, relative_coefficient_norm,
    relative_tensor_norm, AlsStep,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sketch::{targets_for_ratio, MapKind, SketchPlan};
use crate::stats::{summarize, Summary};
use crate::tensor::{DenseTensor, Matrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    /// `‖X_p‖ / ‖X‖`.
    RelativeNorm,
    /// `‖α_p‖₂ / ‖α‖₂`.
    CoefficientNorm,
    /// `‖α_p − α‖₂ / ‖α‖₂`.
    CoefficientError,
    /// `‖X − X̂‖ / ‖X‖`.
    ReconstructionError,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::RelativeNorm => "c_n_X",
            Metric::CoefficientNorm => "c_n_alpha",
            Metric::CoefficientError => "alpha_rel_err",
            Metric::ReconstructionError => "e_cpd",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One `(c_s, trial, metric)` measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
    /// Only populated when timing is requested; wall times would otherwise
    /// make reruns differ.
    pub wall_ms: Option<f64>,
}

pub const CSV_HEADER: &str = "experiment,c_s,trial,seed,metric,value,wall_ms";

/// Writes `# <invocation>`, the header row and one row per record.
pub fn write_records<W: Write>(
    mut w: W,
    invocation: &str,
    records: &[ExperimentRecord],
) -> Result<()> {
    writeln!(w, "# {invocation}")?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let wall = r.wall_ms.map(|t| format!("{t:.3}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.experiment, r.ratio, r.trial, r.seed, r.metric, r.value, wall
        )?;
    }
    Ok(())
}

/// Writes an ALS fit history as `iter,e_cpd,elapsed_ms`.
pub fn write_history<W: Write>(
    mut w: W,
    invocation: &str,
    history: &[AlsStep],
    record_time: bool,
) -> Result<()> {
    writeln!(w, "# {invocation}")?;
    writeln!(w, "iter,e_cpd,elapsed_ms")?;
    for s in history {
        let t = if record_time {
            format!("{:.3}", s.elapsed_ms)
        } else {
            String::new()
        };
        writeln!(w, "{},{},{}", s.iter, s.e_cpd, t)?;
    }
    Ok(())
}

/// Pooled statistics over all trials for one `(c_s, metric)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioSummary {
    pub ratio: f64,
    pub metric: Metric,
    pub summary: Summary,
}

pub fn summarize_records(records: &[ExperimentRecord]) -> Vec<RatioSummary> {
    let mut keys: Vec<(f64, Metric)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.ratio, r.metric)) {
            keys.push((r.ratio, r.metric));
        }
    }
    keys.into_iter()
        .map(|(ratio, metric)| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.ratio == ratio && r.metric == metric)
                .map(|r| r.value)
                .collect();
            RatioSummary {
                ratio,
                metric,
                summary: summarize(&values),
            }
        })
        .collect()
}

/// Sweep settings shared by all experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub kind: MapKind,
    pub seed: u64,
    pub record_time: bool,
}

impl Sweep {
    /// Ratios sorted ascending; rejects empty, duplicate or out-of-range values.
    fn sorted_ratios(&self) -> Result<Vec<f64>> {
        if self.ratios.is_empty() {
            return Err(Error::InvalidArgument("no compression ratios given".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        let mut r = self.ratios.clone();
        for &c in &r {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "compression ratio must lie in (0, 1], got {c}"
                )));
            }
        }
        r.sort_by(f64::total_cmp);
        if r.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate compression ratio".into()));
        }
        Ok(r)
    }

    fn plan(&self, shape: &[usize], ratio: f64, seed: u64) -> Result<SketchPlan> {
        let targets = match self.kind {
            MapKind::Identity => shape.to_vec(),
            _ => targets_for_ratio(shape, ratio)?,
        };
        SketchPlan::new(shape, &targets, self.kind, None, seed)
    }

    /// Runs `trial(ratio, seed)` over the whole grid, returning one batch of
    /// `(metric, value)` pairs per grid point, in grid order.
    fn run<F>(&self, experiment: &str, trial: F) -> Result<Vec<ExperimentRecord>>
    where
        F: Fn(f64, u64) -> Result<Vec<(Metric, f64)>> + Sync,
    {
        let ratios = self.sorted_ratios()?;
        let grid: Vec<(usize, usize)> = (0..ratios.len())
            .flat_map(|i| (0..self.trials).map(move |t| (i, t)))
            .collect();
        let rows = grid
            .par_iter()
            .map(|&(i, t)| {
                let seed = derive_seed(derive_seed(self.seed, i as u64), t as u64);
                let start = Instant::now();
                let values = trial(ratios[i], seed)?;
                let wall = self
                    .record_time
                    .then(|| start.elapsed().as_secs_f64() * 1e3);
                Ok(values
                    .into_iter()
                    .map(|(metric, value)| ExperimentRecord {
                        experiment: experiment.to_string(),
                        ratio: ratios[i],
                        trial: t,
                        seed,
                        metric,
                        value,
                        wall_ms: wall,
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(rows.into_iter().flatten().collect())
    }
}

/// Relative norm `c_{n,X}` of modewise sketches of `x` across the sweep.
pub fn norm_experiment(x: &DenseTensor, sweep: &Sweep) -> Result<Vec<ExperimentRecord>> {
    sweep.run("norm", |ratio, seed| {
        let plan = sweep.plan(x.shape(), ratio, seed)?;
        let projected = plan.sketch_modewise(x)?;
        Ok(vec![(
            Metric::RelativeNorm,
            relative_tensor_norm(x.data(), projected.data())?,
        )])
    })
}

/// Compressed coefficient recovery against a reference `α` for a fixed basis.
pub fn ls_experiment(
    x: &DenseTensor,
    factors: &[Matrix],
    reference: &[C64],
    sweep: &Sweep,
) -> Result<Vec<ExperimentRecord>> {
    sweep.run("ls", |ratio, seed| {
        let plan = sweep.plan(x.shape(), ratio, seed)?;
        let alpha_p = compressed_ls_coefficients(x, factors, &plan)?.coefficients;
        Ok(vec![
            (
                Metric::CoefficientNorm,
                relative_coefficient_norm(reference, &alpha_p)?,
            ),
            (
                Metric::CoefficientError,
                relative_coefficient_error(reference, &alpha_p)?,
            ),
        ])
    })
}
