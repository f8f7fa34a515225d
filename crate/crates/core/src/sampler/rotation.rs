//! Samplers for the latent-rotation full conditional, a Matrix Fisher
//! distribution with density `∝ exp(tr(R Fᵀ))` with respect to Haar measure.
//!
//! For `p = 2` the rotation angle is von Mises distributed and is drawn
//! exactly. For `p = 3` the update is a random-walk Metropolis step in Z–Y–Z
//! Euler angles. Haar measure in those coordinates has density
//! `sin θ2 / (8π²)`, so the Euler-space target is
//! `exp(tr(R(θ) Fᵀ)) · sin θ2`.
//!
//! The Euler chart is offset by a fixed rotation `C = R_y(π/2)ᵀ`:
//! `R = E(θ1, θ2, θ3) · C`. The identity then sits at `θ2 = π/2`, well away
//! from the coordinate singularities at `θ2 ∈ {0, π}`. Haar measure is
//! bi-invariant, so the offset only changes the target to
//! `exp(tr(E(θ) (F Cᵀ)ᵀ)) · sin θ2`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, Quaternion, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{
    euler_from_rotation, reflect_polar, rotation_from_angle, rotation_from_euler, wrap_angle, Rotation,
};

/// Below this concentration the von Mises draw is taken as uniform.
const KAPPA_UNIFORM: f64 = 1e-10;

/// `(κ, η)` with `tr(R(θ) Fᵀ) = κ cos(θ − η)` for a 2 × 2 parameter `F`.
pub fn von_mises_params(f: &DMatrix<f64>) -> (f64, f64) {
    let c = f[(0, 0)] + f[(1, 1)];
    let s = f[(1, 0)] - f[(0, 1)];
    (c.hypot(s), s.atan2(c))
}

/// Draws from the von Mises distribution `∝ exp(κ cos(θ − μ))` on `[0, 2π)`
/// by Best and Fisher's wrapped-Cauchy envelope rejection.
pub fn sample_von_mises<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa < KAPPA_UNIFORM {
        return rng.random_range(0.0..TAU);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = ((1.0 + r * z) / (r + z)).clamp(-1.0, 1.0);
        let c = kappa * (r - f);
        if c * (2.0 - c) > u2 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let offset = f.acos();
            let theta = if u3 < 0.5 { mu - offset } else { mu + offset };
            return wrap_angle(theta);
        }
    }
}

/// Exact draw from the `p = 2` Matrix Fisher distribution with parameter `F`.
pub fn sample_rotation_p2<R: Rng + ?Sized>(f: &DMatrix<f64>, rng: &mut R) -> Rotation {
    let (kappa, eta) = von_mises_params(f);
    rotation_from_angle(sample_von_mises(eta, kappa, rng))
}

/// Fixed offset of the Euler chart, `R_y(π/2)ᵀ`.
pub fn euler_chart_offset() -> DMatrix<f64> {
    rotation_from_euler(0.0, FRAC_PI_2, 0.0).matrix().transpose()
}

/// Chart coordinates `θ` with `R = E(θ) · C`.
pub fn euler_chart_coordinates(r: &Rotation) -> [f64; 3] {
    let m = r.matrix() * euler_chart_offset().transpose();
    euler_from_rotation(&Rotation::from_matrix_unchecked(m))
}

/// Rotation at chart coordinates `θ`.
pub fn rotation_from_chart(theta: [f64; 3]) -> Rotation {
    let e = rotation_from_euler(theta[0], theta[1], theta[2]);
    Rotation::from_matrix_unchecked(e.into_inner() * euler_chart_offset())
}

/// Log target in chart coordinates, `tr(E(θ) Gᵀ) + ln sin θ2` with
/// `G = F Cᵀ`. Returns `−∞` on the boundary `θ2 ∈ {0, π}`.
pub fn euler_log_target(theta: [f64; 3], g: &DMatrix<f64>) -> f64 {
    let s2 = theta[1].sin();
    if !(s2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let e = rotation_from_euler(theta[0], theta[1], theta[2]);
    e.matrix().component_mul(g).sum() + s2.ln()
}

/// Metropolis acceptance probability `min(1, exp(log_ratio))`.
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Symmetric random-walk proposal on the Euler box: wrapped Gaussian steps
/// for `θ1`, `θ3` and a reflected Gaussian step for `θ2`.
pub fn propose_euler<R: Rng + ?Sized>(theta: [f64; 3], step: f64, rng: &mut R) -> [f64; 3] {
    let mut eps = || -> f64 { StandardNormal.sample(rng) };
    [
        wrap_angle(theta[0] + step * eps()),
        reflect_polar(theta[1] + step * eps()),
        wrap_angle(theta[2] + step * eps()),
    ]
}

/// One Metropolis update of a `p = 3` rotation targeting the Matrix Fisher
/// distribution with parameter `F`. Returns the new rotation and whether the
/// proposal was accepted.
pub fn sample_rotation_p3<R: Rng + ?Sized>(
    f: &DMatrix<f64>,
    current: &Rotation,
    step: f64,
    rng: &mut R,
) -> (Rotation, bool) {
    let g = f * euler_chart_offset().transpose();
    let theta = euler_chart_coordinates(current);
    let proposal = propose_euler(theta, step, rng);
    let log_ratio = euler_log_target(proposal, &g) - euler_log_target(theta, &g);
    let u: f64 = rng.random();
    if u < acceptance_probability(log_ratio) {
        (rotation_from_chart(proposal), true)
    } else {
        (current.clone(), false)
    }
}

/// Haar-uniform draw from `SO(p)`, `p ∈ {2, 3}`.
pub fn sample_haar_rotation<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Rotation {
    match p {
        2 => rotation_from_angle(rng.random_range(0.0..TAU)),
        3 => {
            let mut g = || -> f64 { StandardNormal.sample(rng) };
            let q = UnitQuaternion::from_quaternion(Quaternion::new(g(), g(), g(), g()));
            let m = q.to_rotation_matrix();
            Rotation::from_matrix_unchecked(DMatrix::from_iterator(3, 3, m.matrix().iter().copied()))
        }
        _ => panic!("Haar sampling implemented for p ∈ {{2, 3}}, got {p}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn von_mises_identity_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let f = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-5.0..5.0));
            let (kappa, eta) = von_mises_params(&f);
            for j in 0..360 {
                let theta = j as f64 * TAU / 360.0;
                let r = rotation_from_angle(theta);
                let lhs = r.matrix().component_mul(&f).sum();
                assert!((lhs - kappa * (theta - eta).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaled_identity_parameters() {
        let (kappa, eta) = von_mises_params(&(DMatrix::identity(2, 2) * 3.5));
        assert_eq!(eta, 0.0);
        assert!((kappa - 7.0).abs() < 1e-15);
    }

    #[test]
    fn von_mises_draws_in_range_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mu = 1.0;
        let n = 20_000;
        let mut s = 0.0;
        let mut c = 0.0;
        for _ in 0..n {
            let t = sample_von_mises(mu, 50.0, &mut rng);
            assert!((0.0..TAU).contains(&t));
            s += t.sin();
            c += t.cos();
        }
        assert!((s.atan2(c) - mu).abs() < 0.01);
    }

    #[test]
    fn von_mises_huge_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let kappa = 1e7;
        let n = 20_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let t = sample_von_mises(0.0, kappa, &mut rng);
            let d = if t > PI { t - TAU } else { t };
            sq += d * d;
        }
        let var = sq / n as f64;
        // ≈ 1/κ for large κ
        assert!((var * kappa - 1.0).abs() < 0.05, "{}", var * kappa);
    }

    #[test]
    fn chart_round_trip_and_identity_location() {
        let theta = euler_chart_coordinates(&Rotation::identity(3));
        assert!((theta[1] - FRAC_PI_2).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let r = sample_haar_rotation(3, &mut rng);
            let back = rotation_from_chart(euler_chart_coordinates(&r));
            assert!((back.matrix() - r.matrix()).amax() < 1e-9);
        }
    }

    #[test]
    fn haar_rotations_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for p in [2, 3] {
            for _ in 0..100 {
                let r = sample_haar_rotation(p, &mut rng);
                assert!(Rotation::new(r.matrix().clone()).is_ok());
            }
        }
    }

    #[test]
    fn metropolis_output_stays_in_so3() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let f = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-3.0..3.0));
        let mut r = Rotation::identity(3);
        for _ in 0..2000 {
            r = sample_rotation_p3(&f, &r, 0.5, &mut rng).0;
            assert!(Rotation::new(r.matrix().clone()).is_ok());
        }
    }

    /// Detailed balance on three discretized θ2 states with a symmetric
    /// uniform proposal and the Metropolis acceptance function.
    #[test]
    fn detailed_balance_three_states() {
        let g = DMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.7 + if i == j { 2.0 } else { 0.0 });
        let states = [[0.3, 0.4, 1.0], [0.3, 1.5, 1.0], [0.3, 2.8, 1.0]];
        let pi_unnorm: Vec<f64> = states.iter().map(|t| euler_log_target(*t, &g).exp()).collect();
        let z: f64 = pi_unnorm.iter().sum();
        let pi: Vec<f64> = pi_unnorm.iter().map(|x| x / z).collect();
        let mut p = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let lr = euler_log_target(states[j], &g) - euler_log_target(states[i], &g);
                    p[i][j] = 0.5 * acceptance_probability(lr);
                }
            }
            p[i][i] = 1.0 - p[i].iter().sum::<f64>();
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((pi[i] * p[i][j] - pi[j] * p[j][i]).abs() < 1e-14);
            }
            let stationary: f64 = (0..3).map(|a| pi[a] * p[a][i]).sum();
            assert!((stationary - pi[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_has_zero_target() {
        let g = DMatrix::identity(3, 3);
        assert_eq!(euler_log_target([0.0, 0.0, 0.0], &g), f64::NEG_INFINITY);
    }
}
