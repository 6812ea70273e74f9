//! Modewise sketches `X ×₀ A₀ … ×_{d-1} A_{d-1}` and the two-stage operator
//! `A · vect(X ×₀ A₀ … ×_{d-1} A_{d-1})`.
//!
//! A plan is fully determined by `(seed, shape, per-mode specs, second-stage
//! spec)`. Mode `ℓ` draws its map from `derive_seed(seed, ℓ)` and the second
//! stage from `derive_seed(seed, d)`, so matrices never need to be stored.

use std::fmt;
use std::str::FromStr;

use crate::embedding::{fjlt_embedding, gaussian_embedding, Embedding};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{norm_slice, vectorize, DenseTensor, Matrix, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    Identity,
    Gaussian,
    Fjlt,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapKind::Identity => "identity",
            MapKind::Gaussian => "gaussian",
            MapKind::Fjlt => "fjlt",
        })
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(MapKind::Identity),
            "gaussian" => Ok(MapKind::Gaussian),
            "fjlt" => Ok(MapKind::Fjlt),
            other => Err(Error::Format(format!("unknown map kind `{other}`"))),
        }
    }
}

/// Kind and target dimension of one stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageSpec {
    pub kind: MapKind,
    pub target: usize,
}

impl StageSpec {
    pub fn new(kind: MapKind, target: usize) -> Self {
        Self { kind, target }
    }
}

impl fmt::Display for StageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.target)
    }
}

impl FromStr for StageSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, target) = s
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("stage `{s}` is not kind:target")))?;
        let target = target
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad target dimension in `{s}`")))?;
        Ok(Self::new(kind.parse()?, target))
    }
}

/// One realized stage of a plan.
#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Identity(usize),
    Embed(Embedding),
}

impl Stage {
    fn draw(spec: StageSpec, source: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        match spec.kind {
            MapKind::Identity if spec.target == source => Ok(Stage::Identity(source)),
            MapKind::Identity => Err(Error::InvalidPlan(format!(
                "identity stage cannot map {source} to {}",
                spec.target
            ))),
            MapKind::Gaussian => Ok(Stage::Embed(gaussian_embedding(
                spec.target,
                source,
                &mut rng,
            )?)),
            MapKind::Fjlt => Ok(Stage::Embed(fjlt_embedding(spec.target, source, &mut rng)?)),
        }
    }

    pub fn source_dim(&self) -> usize {
        match self {
            Stage::Identity(n) => *n,
            Stage::Embed(e) => e.source_dim(),
        }
    }

    pub fn target_dim(&self) -> usize {
        match self {
            Stage::Identity(n) => *n,
            Stage::Embed(e) => e.target_dim(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Stage::Identity(_))
    }

    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        match self {
            Stage::Identity(n) if x.len() == *n => Ok(x.to_vec()),
            Stage::Identity(n) => Err(Error::DimensionMismatch {
                expected: *n,
                found: x.len(),
            }),
            Stage::Embed(e) => e.apply(x),
        }
    }

    pub fn to_dense(&self) -> Result<Matrix> {
        match self {
            Stage::Identity(n) => Matrix::identity(*n),
            Stage::Embed(e) => e.to_dense(),
        }
    }
}

/// Per-mode maps plus an optional second-stage map on the vectorized result.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchPlan {
    seed: u64,
    shape: Vec<usize>,
    mode_specs: Vec<StageSpec>,
    second_spec: Option<StageSpec>,
    modes: Vec<Stage>,
    second: Option<Stage>,
}

/// Per-mode target dimensions `⌈c_s · n_j⌉`, clamped to `[1, n_j]`.
///
/// A relative slack of `1e-12` absorbs binary rounding so that, e.g.,
/// `0.3 · 100` maps to 30 rather than 31.
pub fn targets_for_ratio(shape: &[usize], ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compression ratio must lie in (0, 1], got {ratio}"
        )));
    }
    Ok(shape
        .iter()
        .map(|&n| {
            let raw = ratio * n as f64;
            let m = (raw - raw * 1e-12).ceil() as usize;
            m.clamp(1, n)
        })
        .collect())
}

/// Smallest `s` with `s^d ≥ len`.
pub fn cube_side(len: usize, d: usize) -> usize {
    let mut s = (len as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    let pow = |s: usize| (0..d).try_fold(1usize, |acc, _| acc.checked_mul(s));
    while s > 1 && pow(s - 1).is_some_and(|p| p >= len) {
        s -= 1;
    }
    while pow(s).is_some_and(|p| p < len) {
        s += 1;
    }
    s
}

/// Factor-wise sketch of a rank-one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchedRank1 {
    pub factors: Vec<Vec<C64>>,
    pub norms: Vec<f64>,
}

impl SketchPlan {
    /// Plan with the same map kind on every mode.
    pub fn new(
        shape: &[usize],
        targets: &[usize],
        kind: MapKind,
        second: Option<StageSpec>,
        seed: u64,
    ) -> Result<Self> {
        if targets.len() != shape.len() {
            return Err(Error::InvalidPlan(format!(
                "{} targets for a {}-mode shape",
                targets.len(),
                shape.len()
            )));
        }
        let specs = targets.iter().map(|&m| StageSpec::new(kind, m)).collect();
        Self::from_specs(shape, specs, second, seed)
    }

    pub fn from_specs(
        shape: &[usize],
        mode_specs: Vec<StageSpec>,
        second_spec: Option<StageSpec>,
        seed: u64,
    ) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidPlan(format!("bad shape {shape:?}")));
        }
        if mode_specs.len() != shape.len() {
            return Err(Error::InvalidPlan(format!(
                "{} mode maps for a {}-mode shape",
                mode_specs.len(),
                shape.len()
            )));
        }
        let modes = mode_specs
            .iter()
            .zip(shape)
            .enumerate()
            .map(|(l, (&spec, &n))| Stage::draw(spec, n, derive_seed(seed, l as u64)))
            .collect::<Result<Vec<_>>>()?;
        let intermediate: usize = modes.iter().map(Stage::target_dim).product();
        let second = second_spec
            .map(|spec| Stage::draw(spec, intermediate, derive_seed(seed, shape.len() as u64)))
            .transpose()?;
        Ok(Self {
            seed,
            shape: shape.to_vec(),
            mode_specs,
            second_spec,
            modes,
            second,
        })
    }

    /// Every mode (and the second stage, if requested) is the identity.
    pub fn identity(shape: &[usize], with_second_stage: bool) -> Result<Self> {
        let second =
            with_second_stage.then(|| StageSpec::new(MapKind::Identity, shape.iter().product()));
        Self::new(shape, shape, MapKind::Identity, second, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn stages(&self) -> &[Stage] {
        &self.modes
    }

    pub fn second_stage(&self) -> Option<&Stage> {
        self.second.as_ref()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.modes.iter().map(Stage::target_dim).collect()
    }

    /// `∏ m_ℓ`, the length after the modewise stage.
    pub fn intermediate_dim(&self) -> usize {
        self.modes.iter().map(Stage::target_dim).product()
    }

    /// Length of the final output: `m′` with a second stage, else `∏ m_ℓ`.
    pub fn output_dim(&self) -> usize {
        self.second
            .as_ref()
            .map_or_else(|| self.intermediate_dim(), Stage::target_dim)
    }

    /// The plan restricted to every mode except `mode`, with no second stage.
    /// Used for the `(d−1)`-mode slice problems of decoupled ALS.
    pub fn without_mode(&self, mode: usize) -> Result<Self> {
        if mode >= self.shape.len() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.shape.len(),
            });
        }
        if self.second.is_some() {
            return Err(Error::InvalidPlan(
                "cannot restrict a plan that has a second stage".into(),
            ));
        }
        if self.shape.len() == 1 {
            return Err(Error::InvalidPlan("cannot remove the only mode".into()));
        }
        let keep = |v: &[StageSpec]| {
            v.iter()
                .enumerate()
                .filter(|&(l, _)| l != mode)
                .map(|(_, s)| *s)
                .collect::<Vec<_>>()
        };
        let mut shape = self.shape.clone();
        shape.remove(mode);
        let mut modes = self.modes.clone();
        modes.remove(mode);
        Ok(Self {
            seed: self.seed,
            shape,
            mode_specs: keep(&self.mode_specs),
            second_spec: None,
            modes,
            second: None,
        })
    }

    fn check_shape(&self, x: &DenseTensor) -> Result<()> {
        if x.shape() != self.shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "plan expects {:?}, tensor is {:?}",
                self.shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// `X ×₀ A₀ … ×_{d-1} A_{d-1}`, modes applied in ascending order.
    pub fn sketch_modewise(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.sketch_modes_except(x, None)
    }

    /// Like [`Self::sketch_modewise`] but leaves `skip` untouched.
    pub fn sketch_modes_except(&self, x: &DenseTensor, skip: Option<usize>) -> Result<DenseTensor> {
        self.check_shape(x)?;
        let mut acc: Option<DenseTensor> = None;
        for (l, stage) in self.modes.iter().enumerate() {
            let Stage::Embed(e) = stage else { continue };
            if Some(l) == skip {
                continue;
            }
            acc = Some(e.apply_to_mode(acc.as_ref().unwrap_or(x), l)?);
        }
        Ok(acc.unwrap_or_else(|| x.clone()))
    }

    /// `A · vect(X ×₀ A₀ … ×_{d-1} A_{d-1})`; requires a second stage.
    pub fn sketch_full(&self, x: &DenseTensor) -> Result<Vec<C64>> {
        let second = self.second.as_ref().ok_or(Error::MissingSecondStage)?;
        let modewise = self.sketch_modewise(x)?;
        second.apply(&vectorize(&modewise))
    }

    /// Sketches a rank-one tensor `y⁽⁰⁾ ○ … ○ y⁽ᵈ⁻¹⁾` one factor at a time:
    /// returns `A_ℓ y⁽ˡ⁾` and `‖A_ℓ y⁽ˡ⁾‖₂` per mode.
    pub fn sketch_rank1(&self, vectors: &[&[C64]]) -> Result<SketchedRank1> {
        if vectors.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: vectors.len(),
            });
        }
        let factors = self
            .modes
            .iter()
            .zip(vectors)
            .map(|(stage, v)| stage.apply(v))
            .collect::<Result<Vec<_>>>()?;
        let norms = factors.iter().map(|f| norm_slice(f)).collect();
        Ok(SketchedRank1 { factors, norms })
    }

    /// Deterministic text descriptor from which the plan can be re-derived.
    pub fn descriptor(&self) -> String {
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(",");
        format!(
            "sketchplan 1\nseed {}\nshape {}\nmodes {}\nsecond {}\n",
            self.seed,
            join(&mut self.shape.iter().map(|n| n.to_string())),
            join(&mut self.mode_specs.iter().map(|s| s.to_string())),
            self.second_spec
                .map_or_else(|| "none".to_string(), |s| s.to_string()),
        )
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("descriptor is missing `{key}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(Error::Format(format!("expected `{key} …`, found `{line}`"))),
            }
        };
        if field("sketchplan")? != "1" {
            return Err(Error::Format("unsupported descriptor version".into()));
        }
        let seed = field("seed")?
            .parse()
            .map_err(|_| Error::Format("bad seed".into()))?;
        let shape = field("shape")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format("bad shape".into()))?;
        let modes = field("modes")?
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<StageSpec>>>()?;
        let second = match field("second")?.as_str() {
            "none" => None,
            s => Some(s.parse()?),
        };
        Self::from_specs(&shape, modes, second, seed)
    }
}

/// Parameters for sketching a plain vector through a reshaped cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorSketchParams {
    pub order: usize,
    pub kind: MapKind,
    pub mode_target: usize,
    pub second: StageSpec,
    pub seed: u64,
}

/// Zero-pads `x` to `s^d` with `s = ⌈N^{1/d}⌉`, reshapes it colexicographically
/// into a `d`-mode cube and applies the two-stage sketch.
pub fn vector_subspace_sketch(x: &[C64], params: &VectorSketchParams) -> Result<Vec<C64>> {
    let d = params.order;
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "vector sketching needs d >= 2, got {d}"
        )));
    }
    let plan = vector_plan(x.len(), params)?;
    let side = plan.shape()[0];
    let mut padded = x.to_vec();
    padded.resize(side.pow(d as u32), ZERO);
    let cube = DenseTensor::new(vec![side; d], padded)?;
    plan.sketch_full(&cube)
}

/// The plan [`vector_subspace_sketch`] uses for inputs of length `len`.
pub fn vector_plan(len: usize, params: &VectorSketchParams) -> Result<SketchPlan> {
    let side = cube_side(len.max(1), params.order);
    let target = match params.kind {
        MapKind::Identity => side,
        _ => params.mode_target,
    };
    SketchPlan::new(
        &vec![side; params.order],
        &vec![target; params.order],
        params.kind,
        Some(params.second),
        params.seed,
    )
}
