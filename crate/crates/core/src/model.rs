//! Latent-rotation Gaussian regression model.
//!
//! Each object contributes a size-and-shape representative `Y_i` (`k × p`)
//! and covariates `z_i` (length `d`). With a latent rotation `R_i ∈ SO(p)`,
//! `X_i = Y_i R_i` has independent columns
//! `X_{i,l} ~ N_k(Z_i β_l, Σ)` where `Z_i = I_k ⊗ z_iᵀ`.
//!
//! # Coefficient packing
//!
//! The coefficients are `d` matrices `B_h` (`k × p`). They are stored as `p`
//! column vectors `β_l` of length `k·d`, with entry `w·d + h` equal to
//! `[B_h]_{w,l}` (landmark-major). This is the ordering under which
//! `Z_i β_l` is column `l` of `Σ_h z_{ih} B_h` for `Z_i = I_k ⊗ z_iᵀ`; when
//! `d = 1` it coincides with `β_l = B_{1,l}`.
//!
//! # Inverse-Wishart convention
//!
//! `Σ ~ IW(ν, Ψ)` has density `∝ |Σ|^{−(ν+k+1)/2} exp(−tr(Ψ Σ⁻¹)/2)` and mean
//! `Ψ / (ν − k − 1)` when `ν > k + 1`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::{Rotation, SizeAndShape};

/// One object: its size-and-shape and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: SizeAndShape,
    pub z: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<Observation>,
    k: usize,
    p: usize,
    d: usize,
}

impl Dataset {
    pub fn new(items: Vec<Observation>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset must contain at least one object".into()))?;
        let (k, p, d) = (first.y.k(), first.y.p(), first.z.len());
        if d == 0 {
            return Err(Error::InvalidArgument("covariate vectors must be non-empty".into()));
        }
        for (i, item) in items.iter().enumerate() {
            if item.y.k() != k || item.y.p() != p || item.z.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "object {i} has shape ({}, {}, d={}), expected ({k}, {p}, d={d})",
                    item.y.k(),
                    item.y.p(),
                    item.z.len()
                )));
            }
            if item.z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("object {i} has non-finite covariates")));
            }
        }
        Ok(Self { items, k, p, d })
    }

    /// Intercept-only dataset (`d = 1`, `z_i = 1`).
    pub fn intercept_only(ys: Vec<SizeAndShape>) -> Result<Self> {
        Self::new(
            ys.into_iter()
                .map(|y| Observation { y, z: DVector::from_element(1, 1.0) })
                .collect(),
        )
    }

    pub fn items(&self) -> &[Observation] {
        &self.items
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Two copies of every object, in order.
    pub fn doubled(&self) -> Self {
        let mut items = self.items.clone();
        items.extend(self.items.iter().cloned());
        Self { items, ..*self }
    }
}

/// Conjugate priors: `β_l ~ N(M_l, V_l)`, `Σ ~ IW(ν, Ψ)`.
#[derive(Debug, Clone)]
pub struct Priors {
    m: Vec<DVector<f64>>,
    v: Vec<DMatrix<f64>>,
    v_inv: Vec<DMatrix<f64>>,
    nu: f64,
    psi: DMatrix<f64>,
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("{what} must be square")));
    }
    let asym = (m - m.transpose()).amax();
    let scale = m.amax().max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::Numerical(format!("{what} is not symmetric (max asymmetry {asym:e})")));
    }
    Cholesky::new(m.clone()).ok_or_else(|| {
        let diag = m.diagonal();
        Error::Numerical(format!(
            "{what} is not positive definite (diagonal range [{:e}, {:e}])",
            diag.min(),
            diag.max()
        ))
    })
}

impl Priors {
    pub fn new(m: Vec<DVector<f64>>, v: Vec<DMatrix<f64>>, nu: f64, psi: DMatrix<f64>) -> Result<Self> {
        if m.is_empty() || m.len() != v.len() {
            return Err(Error::InvalidArgument(format!(
                "need one (M_l, V_l) pair per coordinate column, got {} means and {} covariances",
                m.len(),
                v.len()
            )));
        }
        let kd = m[0].len();
        let k = psi.nrows();
        if kd == 0 || k == 0 || kd % k != 0 {
            return Err(Error::InvalidArgument(format!(
                "prior mean length {kd} is not a positive multiple of k = {k}"
            )));
        }
        let mut v_inv = Vec::with_capacity(v.len());
        for (l, (ml, vl)) in m.iter().zip(&v).enumerate() {
            if ml.len() != kd || vl.shape() != (kd, kd) {
                return Err(Error::InvalidArgument(format!(
                    "prior for column {} has inconsistent dimensions",
                    l + 1
                )));
            }
            let chol = cholesky(vl, &format!("V_{}", l + 1)).map_err(|e| match e {
                Error::Numerical(msg) => Error::InvalidArgument(msg),
                e => e,
            })?;
            v_inv.push(chol.inverse());
        }
        cholesky(&psi, "Ψ").map_err(|e| match e {
            Error::Numerical(msg) => Error::InvalidArgument(msg),
            e => e,
        })?;
        if !(nu > k as f64 - 1.0) {
            return Err(Error::InvalidArgument(format!(
                "inverse-Wishart degrees of freedom ν = {nu} must exceed k − 1 = {}",
                k - 1
            )));
        }
        Ok(Self { m, v, v_inv, nu, psi })
    }

    /// `M_l = m·1`, `V_l = v_scale·I`, `ν = k + 1`, `Ψ = I_k` unless given.
    pub fn isotropic(k: usize, d: usize, p: usize, m: f64, v_scale: f64, nu: Option<f64>, psi: Option<DMatrix<f64>>) -> Result<Self> {
        let kd = k * d;
        Self::new(
            vec![DVector::from_element(kd, m); p],
            vec![DMatrix::identity(kd, kd) * v_scale; p],
            nu.unwrap_or(k as f64 + 1.0),
            psi.unwrap_or_else(|| DMatrix::identity(k, k)),
        )
    }

    /// The simulation-study defaults: `M_l = 0`, `V_l = 10⁶ I`, `ν = k + 1`,
    /// `Ψ = I_k`.
    pub fn vague(k: usize, d: usize, p: usize) -> Self {
        Self::isotropic(k, d, p, 0.0, 1e6, None, None).expect("vague priors are valid")
    }

    pub fn m(&self) -> &[DVector<f64>] {
        &self.m
    }

    pub fn v(&self) -> &[DMatrix<f64>] {
        &self.v
    }

    /// Prior precisions `V_l⁻¹`, computed once at construction.
    pub fn v_inv(&self) -> &[DMatrix<f64>] {
        &self.v_inv
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn k(&self) -> usize {
        self.psi.nrows()
    }

    pub fn p(&self) -> usize {
        self.m.len()
    }

    pub fn d(&self) -> usize {
        self.m[0].len() / self.k()
    }

    pub fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if (self.k(), self.p(), self.d()) != (data.k(), data.p(), data.d()) {
            return Err(Error::InvalidArgument(format!(
                "priors are for (k, p, d) = ({}, {}, {}) but data has ({}, {}, {})",
                self.k(),
                self.p(),
                self.d(),
                data.k(),
                data.p(),
                data.d()
            )));
        }
        Ok(())
    }
}

/// Current values of `β`, `Σ` and the latent rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub beta: Vec<DVector<f64>>,
    pub sigma: DMatrix<f64>,
    pub rotations: Vec<Rotation>,
}

impl ParamState {
    /// Builds a state from the coefficient matrices `B_1 … B_d`.
    pub fn from_coefficients(b: &[DMatrix<f64>], sigma: DMatrix<f64>, rotations: Vec<Rotation>) -> Result<Self> {
        let first = b
            .first()
            .ok_or_else(|| Error::InvalidArgument("need at least one coefficient matrix".into()))?;
        let (k, p) = first.shape();
        let d = b.len();
        if b.iter().any(|bh| bh.shape() != (k, p)) {
            return Err(Error::InvalidArgument("coefficient matrices differ in shape".into()));
        }
        let beta = (0..p)
            .map(|l| DVector::from_fn(k * d, |idx, _| b[idx % d][(idx / d, l)]))
            .collect();
        Ok(Self { beta, sigma, rotations })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn k(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn d(&self) -> usize {
        self.beta.first().map_or(0, |b| b.len() / self.k().max(1))
    }

    /// Coefficient matrix `B_h` for a 0-based `h`.
    pub fn coefficient_matrix(&self, h: usize) -> DMatrix<f64> {
        let (k, d, p) = (self.k(), self.d(), self.p());
        DMatrix::from_fn(k, p, |w, l| self.beta[l][w * d + h])
    }

    pub fn coefficient_matrices(&self) -> Vec<DMatrix<f64>> {
        (0..self.d()).map(|h| self.coefficient_matrix(h)).collect()
    }

    /// Right-multiplies every `B_h` by `m`.
    pub fn rotate_coefficients(&self, m: &DMatrix<f64>) -> Self {
        let b: Vec<_> = self.coefficient_matrices().into_iter().map(|bh| bh * m).collect();
        Self::from_coefficients(&b, self.sigma.clone(), self.rotations.clone()).expect("shapes preserved")
    }
}

/// `Z_i = I_k ⊗ z_iᵀ`, a `k × (k·d)` matrix.
pub fn design_matrix(z: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("covariate vector must be non-empty".into()));
    }
    Ok(DMatrix::<f64>::identity(k, k).kronecker(&z.transpose()))
}

/// `μ = Σ_h z_h B_h`.
pub fn mean_configuration(state: &ParamState, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (k, d, p) = (state.k(), state.d(), state.p());
    if z.len() != d {
        return Err(Error::InvalidArgument(format!(
            "covariate vector has length {}, expected d = {d}",
            z.len()
        )));
    }
    Ok(DMatrix::from_fn(k, p, |w, l| {
        (0..d).map(|h| z[h] * state.beta[l][w * d + h]).sum()
    }))
}

fn check_state(state: &ParamState, data: &Dataset) -> Result<()> {
    if (state.k(), state.p(), state.d()) != (data.k(), data.p(), data.d()) {
        return Err(Error::InvalidArgument(format!(
            "state has (k, p, d) = ({}, {}, {}) but data has ({}, {}, {})",
            state.k(),
            state.p(),
            state.d(),
            data.k(),
            data.p(),
            data.d()
        )));
    }
    if state.rotations.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "state has {} rotations for {} objects",
            state.rotations.len(),
            data.n()
        )));
    }
    Ok(())
}

/// Complete-data log-likelihood: the sum over objects `i` and columns `l` of
/// `log N_k(X_{i,l}; Z_i β_l, Σ)` with `X_i = Y_i R_i`.
pub fn complete_data_loglik(state: &ParamState, data: &Dataset) -> Result<f64> {
    check_state(state, data)?;
    let chol = cholesky(&state.sigma, "Σ")?;
    let k = data.k() as f64;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let per_column = -0.5 * (k * (2.0 * PI).ln() + log_det);
    let mut total = 0.0;
    for (item, r) in data.items().iter().zip(&state.rotations) {
        let x = item.y.y() * r.matrix();
        let resid = x - mean_configuration(state, &item.z)?;
        // tr(residᵀ Σ⁻¹ resid) = ‖L⁻¹ resid‖²
        let whitened = chol
            .l()
            .solve_lower_triangular(&resid)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        total += data.p() as f64 * per_column - 0.5 * whitened.norm_squared();
    }
    Ok(total)
}

/// `|tr(Λᵀ μᵀ Σ⁻¹ μ Λ) − tr(μᵀ Σ⁻¹ μ)|`, which vanishes for every rotation
/// `Λ`: the mean is only identified up to right rotation.
pub fn trace_invariance_check(mu: &DMatrix<f64>, sigma: &DMatrix<f64>, lambda: &Rotation) -> Result<f64> {
    let chol = cholesky(sigma, "Σ")?;
    let quad = |m: &DMatrix<f64>| (m.transpose() * chol.solve(m)).trace();
    let rotated = mu * lambda.matrix();
    Ok((quad(&rotated) - quad(mu)).abs())
}
