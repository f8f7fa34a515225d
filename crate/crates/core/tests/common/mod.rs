//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls into the library's own conditional formulas.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sizeshape::geometry::{decompose, euler_from_rotation, rotation_from_angle};
use sizeshape::model::design_matrix;
use sizeshape::sampler::rotation::{sample_haar_rotation, sample_rotation_p3, sample_von_mises, von_mises_params};
use sizeshape::sampler::{sample_inverse_wishart, sweep, AcceptanceStats, BetaConditional};
use sizeshape::{Dataset, Observation, ParamState, PreForm, Priors, Rotation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-5.0..5.0))
}

pub fn random_spd(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(k, k)
}

/// Composite Simpson's rule on `[a, b]` with `2m` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Bin probabilities of an unnormalized density on `[lo, hi)`.
pub fn bin_probabilities(density: impl Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    let mass: Vec<f64> = (0..bins)
        .map(|b| simpson(&density, lo + b as f64 * w, lo + (b + 1) as f64 * w, 16))
        .collect();
    let z: f64 = mass.iter().sum();
    mass.into_iter().map(|m| m / z).collect()
}

pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &x in xs {
        let b = (((x - lo) / (hi - lo)) * bins as f64).floor() as isize;
        counts[b.clamp(0, bins as isize - 1) as usize] += 1.0;
    }
    counts.into_iter().map(|c| c / xs.len() as f64).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// TV distance between `draws` von Mises angles and the grid-normalized
/// density `exp(tr(R(θ) Fᵀ))`, which is evaluated directly from `F` rather
/// than through `(κ, η)`.
pub fn von_mises_tv(f: &DMatrix<f64>, draws: usize, bins: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (kappa, eta) = von_mises_params(f);
    let samples: Vec<f64> = (0..draws).map(|_| sample_von_mises(eta, kappa, &mut rng)).collect();
    let target = |theta: f64| {
        let r = rotation_from_angle(theta);
        r.matrix().component_mul(f).sum().exp()
    };
    let expected = bin_probabilities(target, 0.0, TAU, bins);
    total_variation(&histogram(&samples, 0.0, TAU, bins), &expected)
}

/// Same as [`von_mises_tv`] but through the full `p = 2` rotation draw.
pub fn rotation_p2_tv(f: &DMatrix<f64>, draws: usize, bins: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let samples: Vec<f64> = (0..draws)
        .map(|_| {
            let r = sizeshape::sampler::sample_rotation_p2(f, &mut rng);
            let a = r.matrix()[(1, 0)].atan2(r.matrix()[(0, 0)]);
            a.rem_euclid(TAU)
        })
        .collect();
    let target = |theta: f64| rotation_from_angle(theta).matrix().component_mul(f).sum().exp();
    total_variation(&histogram(&samples, 0.0, TAU, bins), &bin_probabilities(target, 0.0, TAU, bins))
}

/// TV distance of the ZYZ polar angle of `p = 3` Metropolis draws with a
/// zero parameter against the Haar marginal `sin θ2 / 2`.
pub fn haar_polar_tv(draws: usize, burn_in: usize, step: f64, bins: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let f = DMatrix::zeros(3, 3);
    let mut r = Rotation::identity(3);
    let mut polar = Vec::with_capacity(draws);
    for t in 0..burn_in + draws {
        r = sample_rotation_p3(&f, &r, step, &mut rng).0;
        if t >= burn_in {
            polar.push(euler_from_rotation(&r)[1]);
        }
    }
    total_variation(&histogram(&polar, 0.0, PI, bins), &bin_probabilities(f64::sin, 0.0, PI, bins))
}

/// `E[tr R]` under the Matrix Fisher distribution `∝ exp(c · tr R)` on
/// `SO(3)`, by quadrature over the rotation angle `ω`, whose Haar density
/// is `(1 − cos ω)/π` on `[0, π]`.
pub fn mf_scalar_trace_expectation(c: f64) -> f64 {
    let w = |omega: f64| (c * (1.0 + 2.0 * omega.cos())).exp() * (1.0 - omega.cos());
    let num = simpson(|o| (1.0 + 2.0 * o.cos()) * w(o), 0.0, PI, 4000);
    let den = simpson(w, 0.0, PI, 4000);
    num / den
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let b = n / batches;
    let mean = xs.iter().sum::<f64>() / n as f64;
    let bm: Vec<f64> = (0..batches).map(|j| xs[j * b..(j + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let var = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Dense `(M*, V*)` with explicit design matrices and explicit inverses.
pub fn dense_beta_posterior(
    xs: &[DVector<f64>],
    zs: &[DVector<f64>],
    sigma: &DMatrix<f64>,
    m: &DVector<f64>,
    v: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = sigma.nrows();
    let sigma_inv = sigma.clone().try_inverse().unwrap();
    let v_inv = v.clone().try_inverse().unwrap();
    let mut prec = v_inv.clone();
    let mut rhs = &v_inv * m;
    for (x, z) in xs.iter().zip(zs) {
        let zi = design_matrix(z, k).unwrap();
        prec += zi.transpose() * &sigma_inv * &zi;
        rhs += zi.transpose() * &sigma_inv * x;
    }
    let cov = prec.try_inverse().unwrap();
    (&cov * rhs, cov)
}

/// Largest z-score over the entries of the mean and covariance of `draws`
/// β draws from the library conditional against the dense oracle.
pub fn beta_conjugacy_max_z(draws: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (k, d, n) = (3, 2, 8);
    let sigma = random_spd(&mut rng, k);
    let v = random_spd(&mut rng, k * d);
    let m = DVector::from_fn(k * d, |_, _| rng.random_range(-1.0..1.0));
    let xs: Vec<_> = (0..n).map(|_| DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0))).collect();
    let zs: Vec<_> = (0..n).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
    let (mean, cov) = dense_beta_posterior(&xs, &zs, &sigma, &m, &v);
    let cond = BetaConditional::compute(
        xs.iter().cloned().zip(zs.iter()),
        &sigma.clone().try_inverse().unwrap(),
        &m,
        &v.clone().try_inverse().unwrap(),
    )
    .unwrap();
    let samples: Vec<DVector<f64>> = (0..draws).map(|_| cond.sample(&mut rng)).collect();
    let nf = draws as f64;
    let emp_mean = samples.iter().fold(DVector::zeros(k * d), |a, s| a + s) / nf;
    let mut emp_cov = DMatrix::zeros(k * d, k * d);
    for s in &samples {
        let c = s - &mean;
        emp_cov += &c * c.transpose();
    }
    emp_cov /= nf;
    let mut worst: f64 = 0.0;
    for i in 0..k * d {
        worst = worst.max((emp_mean[i] - mean[i]).abs() / (cov[(i, i)] / nf).sqrt());
        for j in 0..k * d {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / nf).sqrt();
            worst = worst.max((emp_cov[(i, j)] - cov[(i, j)]).abs() / se);
        }
    }
    worst
}

/// Largest relative entrywise error (scaled by the largest entry) of the
/// mean of `draws` inverse-Wishart draws at `ν = k + 4` against `Ψ/(ν − k − 1)`.
pub fn inverse_wishart_mean_rel_error(k: usize, draws: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let psi = random_spd(&mut rng, k);
    let nu = k as f64 + 4.0;
    let mut acc = DMatrix::zeros(k, k);
    for _ in 0..draws {
        acc += sample_inverse_wishart(nu, &psi, &mut rng).unwrap();
    }
    acc /= draws as f64;
    let expected = &psi / (nu - k as f64 - 1.0);
    (acc - &expected).amax() / expected.amax()
}

/// Draws a full state from the prior, with rotations set by the data.
fn prior_draw(priors: &Priors, rng: &mut ChaCha8Rng) -> ParamState {
    let beta = priors
        .m()
        .iter()
        .zip(priors.v())
        .map(|(m, v)| {
            let l = v.clone().cholesky().unwrap().unpack();
            m + l * DVector::from_fn(m.len(), |_, _| StandardNormal.sample(rng))
        })
        .collect();
    let sigma = sample_inverse_wishart(priors.nu(), priors.psi(), rng).unwrap();
    ParamState { beta, sigma, rotations: Vec::new() }
}

/// Draws `X_i ~ N(μ, Σ)` columnwise and splits it into `(Y_i, R_i)` with
/// `Y_i R_i = X_i`.
fn simulate_data(state: &ParamState, n: usize, rng: &mut ChaCha8Rng) -> (Dataset, Vec<Rotation>) {
    let k = state.sigma.nrows();
    let p = state.beta.len();
    let mu = state_mean(state);
    let l = state.sigma.clone().cholesky().unwrap().unpack();
    let mut items = Vec::with_capacity(n);
    let mut rots = Vec::with_capacity(n);
    while items.len() < n {
        let e = DMatrix::from_fn(k, p, |_, _| StandardNormal.sample(rng));
        let x = &mu + &l * e;
        if let Ok((y, r)) = decompose(&PreForm::new(x).unwrap()) {
            items.push(Observation { y, z: DVector::from_element(1, 1.0) });
            rots.push(r.transpose());
        }
    }
    (Dataset::new(items).unwrap(), rots)
}

fn state_mean(state: &ParamState) -> DMatrix<f64> {
    let k = state.sigma.nrows();
    DMatrix::from_fn(k, state.beta.len(), |w, l| state.beta[l][w])
}

/// Test functions of a state and its data: every β entry, the lower
/// triangle of Σ, the entries of `R_1` and the residual sum of squares
/// `Σ_i ‖Y_i R_i − μ‖²`.
fn moments(state: &ParamState, data: &Dataset) -> Vec<f64> {
    let mut out: Vec<f64> = state.beta.iter().flat_map(|b| b.iter().copied()).collect();
    let k = state.sigma.nrows();
    for a in 0..k {
        for b in 0..=a {
            out.push(state.sigma[(a, b)]);
        }
    }
    out.extend(state.rotations[0].matrix().iter().copied());
    let mu = state_mean(state);
    let rss: f64 = data
        .items()
        .iter()
        .zip(&state.rotations)
        .map(|(it, r)| (it.y.y() * r.matrix() - &mu).norm_squared())
        .sum();
    out.push(rss);
    out
}

pub struct GewekeResult {
    pub names: Vec<String>,
    pub z: Vec<f64>,
}

impl GewekeResult {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |a: f64, b| a.max(b.abs()))
    }
}

/// Marginal-conditional versus successive-conditional simulation for an
/// intercept-only model with `n` objects.
pub fn geweke(k: usize, p: usize, n: usize, sweeps: usize, euler_step: f64, seed: u64) -> GewekeResult {
    let priors = Priors::isotropic(k, 1, p, 0.5, 1.0, Some(k as f64 + 5.0), None).unwrap();
    let mut rng = rng(seed);

    let mut marginal: Vec<Vec<f64>> = Vec::new();
    for _ in 0..sweeps {
        let mut s = prior_draw(&priors, &mut rng);
        let (data, rots) = simulate_data(&s, n, &mut rng);
        s.rotations = rots;
        marginal.push(moments(&s, &data));
    }

    let mut state = prior_draw(&priors, &mut rng);
    let (mut data, rots) = simulate_data(&state, n, &mut rng);
    state.rotations = rots;
    let mut stats = AcceptanceStats::default();
    let mut successive: Vec<Vec<f64>> = Vec::new();
    for _ in 0..sweeps {
        sweep(&mut state, &data, &priors, euler_step, &mut rng, &mut stats).unwrap();
        successive.push(moments(&state, &data));
        let (d, rots) = simulate_data(&state, n, &mut rng);
        data = d;
        state.rotations = rots;
    }

    let mut names: Vec<String> = Vec::new();
    for l in 0..p {
        for w in 0..k {
            names.push(format!("beta_{}_{}", l + 1, w + 1));
        }
    }
    for a in 0..k {
        for b in 0..=a {
            names.push(format!("sigma_{}_{}", a + 1, b + 1));
        }
    }
    for c in 0..p {
        for r in 0..p {
            names.push(format!("r1_{}_{}", r + 1, c + 1));
        }
    }
    names.push("rss".into());
    let z = (0..names.len())
        .map(|j| {
            let a: Vec<f64> = marginal.iter().map(|m| m[j]).collect();
            let b: Vec<f64> = successive.iter().map(|m| m[j]).collect();
            let (ma, sa) = mean_se(&a);
            let (mb, sb) = batch_means(&b, 50);
            (ma - mb) / (sa * sa + sb * sb).sqrt()
        })
        .collect();
    GewekeResult { names, z }
}

/// Haar draw helper for tests that need random rotations.
pub fn haar(p: usize, rng: &mut ChaCha8Rng) -> Rotation {
    sample_haar_rotation(p, rng)
}

/// `min_θ ‖a R(θ) − b‖` for `p = 2` by a fine grid and golden-section
/// refinement.
pub fn planar_distance_by_search(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let obj = |t: f64| (a * rotation_from_angle(t).matrix() - b).norm();
    let grid = 3600;
    let (mut best_t, mut best) = (0.0, f64::INFINITY);
    for i in 0..grid {
        let t = i as f64 * TAU / grid as f64;
        let v = obj(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = (best_t - TAU / grid as f64, best_t + TAU / grid as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if obj(m1) < obj(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    obj(0.5 * (lo + hi)).min(best)
}
