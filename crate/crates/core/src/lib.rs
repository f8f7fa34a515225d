//! Bayesian regression for size-and-shape landmark data.
//!
//! Each object is a `k × p` pre-form `X_i = Y_i R_i`: an observed
//! size-and-shape `Y_i` times an unobserved rotation `R_i ∈ SO(p)`. The
//! columns of `X_i` are Gaussian with mean `Z_i β_l` and covariance `Σ`.
//! Posterior draws of `(β, Σ, R_1 … R_n)` come from a Gibbs sampler in which
//! the rotation step is exact for `p = 2` and Metropolis for `p = 3`, and
//! every stored draw is mapped to a unique representative of its rotation
//! orbit.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod identification;
pub mod io;
pub mod model;
pub mod sampler;
pub mod synthetic;

pub use diagnostics::{coverage_report, summarize, PosteriorSummary};
pub use error::{Error, ErrorKind, Result};
pub use geometry::{decompose, helmertize, ss_distance, Configuration, PreForm, Rotation, SizeAndShape};
pub use identification::{identify_draw, IdentificationPolicy};
pub use model::{Dataset, Observation, ParamState, Priors};
pub use sampler::{gibbs_run, run_chains, Chain, SamplerConfig};
pub use synthetic::{default_scenario, generate, ScenarioSpec, Simulation};
