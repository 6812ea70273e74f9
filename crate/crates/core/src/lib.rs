//! Modewise Johnson–Lindenstrauss embeddings for dense tensors.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense complex tensors, unfoldings and mode products.
//! * [`embedding`]: Gaussian and fast (restriction · DFT · sign) JL maps.
//! * [`sketch`]: per-mode sketch plans and the two-stage operator.
//! * [`diagnostics`]: coherence of CP bases and coefficient-norm bounds.
//! * [`cpfit`]: synthetic CP data, (compressed) coefficient least squares,
//!   decoupled slice problems and CP-ALS.
//! * [`io`] and [`experiment`]: the DTEN file format and the sweep harness
//!   behind the `mwjl` binary.

pub mod cli;
pub mod cpfit;
pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod io;
mod lstsq;
pub mod rng;
pub mod sketch;
pub mod stats;
pub mod tensor;

pub use cpfit::{LsSolution, SynthKind, SynthSpec};
pub use diagnostics::{CoherenceReport, CpModel};
pub use embedding::Embedding;
pub use error::{Error, Result};
pub use rng::SeededRng;
pub use sketch::{MapKind, SketchPlan, StageSpec};
pub use tensor::{DenseTensor, Matrix, C64};
