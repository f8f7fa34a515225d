//! Synthetic datasets drawn from the latent-rotation model.
//!
//! Pre-forms are generated directly: `X_i` has independent columns
//! `N_k(μ_i column, Σ)` with `Σ = κ I_k`, and `X_i` is split into its
//! size-and-shape `Y_i` and the discarded orientation `R̆_i`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{decompose, PreForm, Rotation};
use crate::identification::{identify_draw, IdentificationPolicy};
use crate::model::{mean_configuration, Dataset, Observation, ParamState};

/// Redraws allowed for a rank-deficient pre-form before giving up.
pub const MAX_DEGENERATE_RETRIES: usize = 10;

/// True coefficient columns of the simulation study.
pub const BETA_1: [f64; 3] = [60.0, 1.0, 100.0];
pub const BETA_2: [f64; 3] = [10.0, 30.0, 180.0];
pub const BETA_3: [f64; 3] = [20.0, 400.0, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub p: usize,
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub kappa: f64,
    /// `p` columns `β_l` of length `k·d` (landmark-major packing).
    pub beta_true: Vec<Vec<f64>>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p == 2 || self.p == 3) {
            return Err(Error::InvalidArgument(format!("p must be 2 or 3, got {}", self.p)));
        }
        if self.k < self.p || self.d == 0 || self.n == 0 {
            return Err(Error::InvalidArgument(format!(
                "need k ≥ p, d ≥ 1, n ≥ 1; got k={}, p={}, d={}, n={}",
                self.k, self.p, self.d, self.n
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.beta_true.len() != self.p || self.beta_true.iter().any(|b| b.len() != self.k * self.d) {
            return Err(Error::InvalidArgument(format!(
                "beta_true must hold {} columns of length {}",
                self.p,
                self.k * self.d
            )));
        }
        Ok(())
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        DMatrix::identity(self.k, self.k) * self.kappa
    }

    /// Truth with identity rotations, before identification.
    pub fn raw_state(&self) -> ParamState {
        ParamState {
            beta: self.beta_true.iter().map(|b| DVector::from_vec(b.clone())).collect(),
            sigma: self.sigma(),
            rotations: Vec::new(),
        }
    }
}

/// The simulation-study scenario: `k = 3`, `d = 1`, `z_i = 1`, `Σ = κ I_3`.
pub fn default_scenario(p: usize, n: usize, kappa: f64, seed: u64) -> Result<ScenarioSpec> {
    let beta_true = match p {
        2 => vec![BETA_1.to_vec(), BETA_2.to_vec()],
        3 => vec![BETA_1.to_vec(), BETA_2.to_vec(), BETA_3.to_vec()],
        _ => return Err(Error::InvalidArgument(format!("p must be 2 or 3, got {p}"))),
    };
    let spec = ScenarioSpec { p, k: 3, d: 1, n, kappa, beta_true, seed };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True `β` and `Σ`. The rotations are the latent `R_i = R̆_iᵀ`, so
    /// `Y_i R_i` is the generated `X_i`.
    pub raw: ParamState,
    /// `raw` mapped by the identification constraint.
    pub identified: ParamState,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    /// The generated `X_i` before decomposition.
    pub preforms: Vec<PreForm>,
}

/// Draws the pre-forms `X_i` and covariates `z_i`. For `d > 1` the
/// covariates are `(1, ε_2, …, ε_d)` with standard normal `ε`; for `d = 1`
/// they are the intercept `z_i = 1`.
pub fn generate_preforms(spec: &ScenarioSpec) -> Result<Vec<(PreForm, DVector<f64>)>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let state = spec.raw_state();
    let sd = spec.kappa.sqrt();
    let mut out = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let z = DVector::from_fn(spec.d, |h, _| if h == 0 { 1.0 } else { StandardNormal.sample(&mut rng) });
        let mu = mean_configuration(&state, &z)?;
        let mut attempt = 0;
        loop {
            let noise = DMatrix::from_fn(spec.k, spec.p, |_, _| StandardNormal.sample(&mut rng));
            let pre = PreForm::new(&mu + noise * sd)?;
            match decompose(&pre) {
                Ok(_) => {
                    out.push((pre, z));
                    break;
                }
                Err(Error::DegenerateConfiguration(msg)) if attempt < MAX_DEGENERATE_RETRIES => {
                    attempt += 1;
                    warn!("object {i}: degenerate draw ({msg}); redrawing (attempt {attempt})");
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Generates a dataset and its ground truth; deterministic given the seed.
pub fn generate(spec: &ScenarioSpec) -> Result<Simulation> {
    let preforms = generate_preforms(spec)?;
    let mut items = Vec::with_capacity(preforms.len());
    let mut orientations = Vec::with_capacity(preforms.len());
    for (pre, z) in &preforms {
        let (y, r) = decompose(pre)?;
        items.push(Observation { y, z: z.clone() });
        orientations.push(r.transpose());
    }
    let dataset = Dataset::new(items)?;
    let mut raw = spec.raw_state();
    raw.rotations = orientations;
    let identified = identify_draw(&raw, &IdentificationPolicy::default())?;
    Ok(Simulation {
        dataset,
        truth: GroundTruth { raw, identified },
        preforms: preforms.into_iter().map(|(p, _)| p).collect(),
    })
}

/// `X_i = Y_i R_i` from the stored truth.
pub fn reconstruct_preform(sim: &Simulation, i: usize) -> Option<DMatrix<f64>> {
    let item = sim.dataset.items().get(i)?;
    let r: &Rotation = sim.truth.raw.rotations.get(i)?;
    Some(item.y.y() * r.matrix())
}
