//! Gibbs / Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: every coefficient column `β_l` from its
//! Gaussian full conditional, `Σ` from its inverse-Wishart full conditional,
//! and every latent rotation `R_i` from its Matrix Fisher full conditional
//! (exactly for `p = 2`, by one Metropolis step for `p = 3`).

pub mod rotation;
pub mod wishart;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::geometry::Rotation;
use crate::identification::{identify_draw, IdentificationPolicy};
use crate::model::{cholesky, complete_data_loglik, Dataset, ParamState, Priors};

pub use rotation::{sample_rotation_p2, sample_rotation_p3, sample_von_mises};
pub use wishart::{sample_inverse_wishart, sample_wishart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Total number of sweeps.
    pub iterations: usize,
    /// Sweeps discarded before draws are stored.
    pub burn_in: usize,
    pub seed: u64,
    /// Per-angle proposal scale (radians) of the `p = 3` rotation step.
    /// Aim for 25–45% acceptance.
    pub euler_step: f64,
    pub thin: usize,
    pub identification: IdentificationPolicy,
    /// Keep the latent rotations in stored draws. Large runs can switch
    /// this off; stored draws then carry an empty rotation list.
    pub store_rotations: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 3000,
            seed: 0,
            euler_step: 0.5,
            thin: 1,
            identification: IdentificationPolicy::default(),
            store_rotations: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be positive".into()));
        }
        if !(self.euler_step > 0.0 && self.euler_step <= std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!(
                "euler step {} outside (0, π]",
                self.euler_step
            )));
        }
        Ok(())
    }

    /// Number of draws a run stores.
    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Stored posterior draws, identified per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<ParamState>,
    /// Complete-data log-likelihood of each stored draw.
    pub loglik: Vec<f64>,
    /// Acceptance rate of the `p = 3` rotation step; `None` for `p = 2`.
    pub acceptance_rate: Option<f64>,
    pub seed: u64,
}

/// Counts of Metropolis proposals and acceptances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptanceStats {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Independent RNG stream for chain `chain_index` of a run seeded by `seed`.
pub fn chain_rng(seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

/// Gaussian full conditional of one coefficient column, in precision form.
#[derive(Debug, Clone)]
pub struct BetaConditional {
    pub mean: DVector<f64>,
    precision_chol: Cholesky<f64, Dyn>,
}

impl BetaConditional {
    /// `V* = (Σ_i Z_iᵀ Σ⁻¹ Z_i + V⁻¹)⁻¹`, `M* = V* (Σ_i Z_iᵀ Σ⁻¹ x_i + V⁻¹ M)`
    /// for response columns `x_i` with covariates `z_i`.
    ///
    /// With `Z_i = I_k ⊗ z_iᵀ` the data precision is `Σ⁻¹ ⊗ Σ_i z_i z_iᵀ`
    /// and the data term of the right-hand side is the row-major vec of
    /// `Σ⁻¹ Σ_i x_i z_iᵀ`.
    pub fn compute<'a>(
        columns: impl IntoIterator<Item = (DVector<f64>, &'a DVector<f64>)>,
        sigma_inv: &DMatrix<f64>,
        prior_mean: &DVector<f64>,
        prior_precision: &DMatrix<f64>,
    ) -> Result<Self> {
        let k = sigma_inv.nrows();
        let kd = prior_mean.len();
        let d = kd / k;
        let mut szz = DMatrix::<f64>::zeros(d, d);
        let mut sxz = DMatrix::<f64>::zeros(k, d);
        for (x, z) in columns {
            szz.ger(1.0, z, z, 1.0);
            sxz.ger(1.0, &x, z, 1.0);
        }
        let precision = sigma_inv.kronecker(&szz) + prior_precision;
        let weighted = sigma_inv * sxz;
        let data_rhs = DVector::from_fn(kd, |idx, _| weighted[(idx / d, idx % d)]);
        let rhs = data_rhs + prior_precision * prior_mean;
        let precision_chol = Cholesky::new(precision.clone()).ok_or_else(|| {
            let diag = precision.diagonal();
            Error::Numerical(format!(
                "β full-conditional precision is not positive definite (diagonal range [{:e}, {:e}])",
                diag.min(),
                diag.max()
            ))
        })?;
        let mean = precision_chol.solve(&rhs);
        Ok(Self { mean, precision_chol })
    }

    /// `V*`, formed explicitly; only for reporting and tests.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision_chol.inverse()
    }

    /// `M* + L⁻ᵀ ε` with `V*⁻¹ = L Lᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let eps = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        let offset = self
            .precision_chol
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + offset
    }
}

fn latent_responses(state: &ParamState, data: &Dataset) -> Vec<DMatrix<f64>> {
    data.items()
        .iter()
        .zip(&state.rotations)
        .map(|(item, r)| item.y.y() * r.matrix())
        .collect()
}

fn sigma_inverse(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky(sigma, "Σ")?.inverse())
}

/// Full conditional of `β_l` given the current `Σ` and rotations.
pub fn beta_full_conditional(state: &ParamState, data: &Dataset, priors: &Priors, l: usize) -> Result<BetaConditional> {
    let sigma_inv = sigma_inverse(&state.sigma)?;
    let xs = latent_responses(state, data);
    beta_conditional_from_responses(&xs, data, priors, &sigma_inv, l)
}

fn beta_conditional_from_responses(
    xs: &[DMatrix<f64>],
    data: &Dataset,
    priors: &Priors,
    sigma_inv: &DMatrix<f64>,
    l: usize,
) -> Result<BetaConditional> {
    let columns = xs
        .iter()
        .zip(data.items())
        .map(|(x, item)| (x.column(l).into_owned(), &item.z));
    BetaConditional::compute(columns, sigma_inv, &priors.m()[l], &priors.v_inv()[l])
}

/// Replaces `β_l` by a draw from its full conditional.
pub fn sample_beta<R: Rng + ?Sized>(
    state: &mut ParamState,
    data: &Dataset,
    priors: &Priors,
    l: usize,
    rng: &mut R,
) -> Result<()> {
    let cond = beta_full_conditional(state, data, priors, l)?;
    state.beta[l] = cond.sample(rng);
    Ok(())
}

/// `(ν*, Ψ*)` with `ν* = ν + n p` and
/// `Ψ* = Ψ + Σ_i Σ_l (X_{i,l} − Z_i β_l)(X_{i,l} − Z_i β_l)ᵀ`.
pub fn sigma_full_conditional(state: &ParamState, data: &Dataset, priors: &Priors) -> Result<(f64, DMatrix<f64>)> {
    let nu_star = priors.nu() + (data.n() * data.p()) as f64;
    let mut psi_star = priors.psi().clone();
    for (item, r) in data.items().iter().zip(&state.rotations) {
        let resid = item.y.y() * r.matrix() - crate::model::mean_configuration(state, &item.z)?;
        psi_star += &resid * resid.transpose();
    }
    Ok((nu_star, psi_star))
}

/// Replaces `Σ` by a draw from its inverse-Wishart full conditional.
pub fn sample_sigma<R: Rng + ?Sized>(state: &mut ParamState, data: &Dataset, priors: &Priors, rng: &mut R) -> Result<()> {
    let (nu_star, psi_star) = sigma_full_conditional(state, data, priors)?;
    state.sigma = sample_inverse_wishart(nu_star, &psi_star, rng).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("internal: Ψ* rejected: {msg}")),
        e => e,
    })?;
    Ok(())
}

/// Matrix Fisher parameter `F_i = Y_iᵀ Σ⁻¹ μ_i` of the full conditional of
/// `R_i`, whose density is `∝ exp(tr(R_i F_iᵀ))`.
pub fn rotation_conditional_params(state: &ParamState, data: &Dataset, i: usize) -> Result<DMatrix<f64>> {
    let item = data
        .items()
        .get(i)
        .ok_or_else(|| Error::InvalidArgument(format!("object index {i} out of range")))?;
    let chol = cholesky(&state.sigma, "Σ")?;
    let mu = crate::model::mean_configuration(state, &item.z)?;
    Ok(item.y.y().transpose() * chol.solve(&mu))
}

fn sample_rotation<R: Rng + ?Sized>(
    f: &DMatrix<f64>,
    current: &Rotation,
    euler_step: f64,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) -> Result<Rotation> {
    match f.nrows() {
        2 => Ok(sample_rotation_p2(f, rng)),
        3 => {
            let (r, accepted) = sample_rotation_p3(f, current, euler_step, rng);
            stats.proposed += 1;
            stats.accepted += accepted as u64;
            Ok(r)
        }
        p => Err(Error::InvalidArgument(format!("rotation updates need p ∈ {{2, 3}}, got {p}"))),
    }
}

/// One full Gibbs sweep over `β`, `Σ` and the rotations.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ParamState,
    data: &Dataset,
    priors: &Priors,
    euler_step: f64,
    rng: &mut R,
    stats: &mut AcceptanceStats,
) -> Result<()> {
    let xs = latent_responses(state, data);
    let sigma_inv = sigma_inverse(&state.sigma).with_context(|| "β update".into())?;
    for l in 0..data.p() {
        let cond = beta_conditional_from_responses(&xs, data, priors, &sigma_inv, l)
            .with_context(|| format!("β column {}", l + 1))?;
        state.beta[l] = cond.sample(rng);
    }

    sample_sigma(state, data, priors, rng).with_context(|| "Σ update".into())?;

    let chol = cholesky(&state.sigma, "Σ")?;
    let weighted: Vec<DMatrix<f64>> = state
        .coefficient_matrices()
        .iter()
        .map(|b| chol.solve(b))
        .collect();
    for (i, item) in data.items().iter().enumerate() {
        // Σ⁻¹ μ_i = Σ_h z_ih Σ⁻¹ B_h
        let mut sigma_inv_mu = DMatrix::zeros(data.k(), data.p());
        for (zh, wb) in item.z.iter().zip(&weighted) {
            sigma_inv_mu += wb * *zh;
        }
        let f = item.y.y().transpose() * sigma_inv_mu;
        state.rotations[i] = sample_rotation(&f, &state.rotations[i], euler_step, rng, stats)
            .with_context(|| format!("rotation {}", i + 1))?;
    }
    Ok(())
}

/// Starting point: `β` by per-column least squares with every `R_i = I`,
/// `Σ = Ψ/(ν + k + 1)` (the prior mode), `R_i = I`.
pub fn initial_state(data: &Dataset, priors: &Priors) -> Result<ParamState> {
    let (k, d, p) = (data.k(), data.d(), data.p());
    let mut szz = DMatrix::<f64>::zeros(d, d);
    for item in data.items() {
        szz.ger(1.0, &item.z, &item.z, 1.0);
    }
    let szz_chol = Cholesky::new(szz).ok_or_else(|| {
        Error::Numerical("covariate cross-product is singular; least-squares start undefined".into())
    })?;
    let mut b: Vec<DMatrix<f64>> = vec![DMatrix::zeros(k, p); d];
    for w in 0..k {
        for l in 0..p {
            let mut rhs = DVector::<f64>::zeros(d);
            for item in data.items() {
                rhs.axpy(item.y.y()[(w, l)], &item.z, 1.0);
            }
            let coef = szz_chol.solve(&rhs);
            for h in 0..d {
                b[h][(w, l)] = coef[h];
            }
        }
    }
    let sigma = priors.psi() / (priors.nu() + k as f64 + 1.0);
    ParamState::from_coefficients(&b, sigma, vec![Rotation::identity(p); data.n()])
}

fn check_inputs(data: &Dataset, priors: &Priors, config: &SamplerConfig) -> Result<()> {
    config.validate()?;
    priors.check_compatible(data)?;
    config.identification.validate(data.d())?;
    if !(data.p() == 2 || data.p() == 3) {
        return Err(Error::InvalidArgument(format!(
            "sampler supports p ∈ {{2, 3}}, got {}",
            data.p()
        )));
    }
    Ok(())
}

/// Runs one chain on stream 0 of `config.seed`.
pub fn gibbs_run(data: &Dataset, priors: &Priors, config: &SamplerConfig) -> Result<Chain> {
    run_chain(data, priors, config, 0)
}

/// Runs `n_chains` independent chains in parallel, chain `c` on stream `c`.
pub fn run_chains(data: &Dataset, priors: &Priors, config: &SamplerConfig, n_chains: usize) -> Result<Vec<Chain>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(data, priors, config, c))
        .collect()
}

fn run_chain(data: &Dataset, priors: &Priors, config: &SamplerConfig, chain_index: u64) -> Result<Chain> {
    check_inputs(data, priors, config)?;
    let mut rng = chain_rng(config.seed, chain_index);
    let mut state = initial_state(data, priors)?;
    let mut stats = AcceptanceStats::default();
    let mut draws = Vec::with_capacity(config.kept_draws());
    let mut loglik = Vec::with_capacity(config.kept_draws());
    for t in 0..config.iterations {
        sweep(&mut state, data, priors, config.euler_step, &mut rng, &mut stats)
            .with_context(|| format!("sweep {}", t + 1))?;
        if t >= config.burn_in && (t - config.burn_in) % config.thin == 0 {
            let mut identified = identify_draw(&state, &config.identification)
                .with_context(|| format!("identifying draw at sweep {}", t + 1))?;
            loglik.push(complete_data_loglik(&identified, data)?);
            if !config.store_rotations {
                identified.rotations.clear();
            }
            draws.push(identified);
        }
    }
    Ok(Chain {
        draws,
        loglik,
        acceptance_rate: stats.rate(),
        seed: config.seed,
    })
}
