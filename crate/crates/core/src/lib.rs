//! Sparse Bayesian compressive-sensing reconstruction of wavelet-sparse
//! signals, with a point-estimated (`mpe`) or marginalized (`ipe`) noise
//! precision.

pub mod cli;
pub mod dense;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod io;
pub mod ipe;
pub mod metrics;
pub mod mpe;
pub mod oracle_check;
pub mod parallel;
pub mod sbl;
pub mod seeds;
pub mod sensing;
pub mod synth;
pub mod wavelet;

pub use engine::{ActionKind, ActionPlan, EngineOptions, ReconstructionResult};
pub use error::{BcsError, Result};
pub use ipe::{InitialB0, IpeOptions};
pub use sbl::{NoiseParam, Problem, SblState};
