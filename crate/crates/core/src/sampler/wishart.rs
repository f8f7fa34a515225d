//! Wishart and inverse-Wishart draws via the Bartlett decomposition.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::cholesky;

/// Lower-triangular Bartlett factor `A` with `A Aᵀ ~ Wishart(ν, I_k)`.
fn bartlett_factor<R: Rng + ?Sized>(nu: f64, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(nu > k as f64 - 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Wishart degrees of freedom {nu} must exceed k − 1 = {}",
            k as f64 - 1.0
        )));
    }
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let chi2 = ChiSquared::new(nu - i as f64)
            .map_err(|e| Error::Numerical(format!("chi-square({}): {e}", nu - i as f64)))?;
        a[(i, i)] = chi2.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    Ok(a)
}

/// `W ~ Wishart(ν, S)` with `E[W] = ν S`.
pub fn sample_wishart<R: Rng + ?Sized>(nu: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let l = cholesky(scale, "Wishart scale")?.unpack();
    let a = bartlett_factor(nu, scale.nrows(), rng)?;
    let la = l * a;
    let w = &la * la.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

/// `Σ ~ IW(ν, Ψ)`, i.e. `Σ⁻¹ ~ Wishart(ν, Ψ⁻¹)`, with `E[Σ] = Ψ/(ν − k − 1)`.
///
/// With `Ψ = C Cᵀ` and the Bartlett factor `A`, `W = C⁻ᵀ A Aᵀ C⁻¹` is a
/// `Wishart(ν, Ψ⁻¹)` draw and `Σ = W⁻¹ = (C A⁻ᵀ)(C A⁻ᵀ)ᵀ`; neither `Ψ` nor
/// `W` is inverted explicitly.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(nu: f64, psi: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let c = cholesky(psi, "inverse-Wishart scale")?.unpack();
    let k = psi.nrows();
    let a = bartlett_factor(nu, k, rng)?;
    // Solve A Tᵀ = Cᵀ  ⇒  T = C A⁻ᵀ.
    let t_t = a
        .solve_lower_triangular(&c.transpose())
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    let t = t_t.transpose();
    let sigma = &t * t.transpose();
    Ok((&sigma + sigma.transpose()) * 0.5)
}
