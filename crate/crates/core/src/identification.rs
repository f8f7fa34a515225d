//! Post-hoc identification of posterior draws.
//!
//! The likelihood is unchanged when every `B_h` is right-multiplied by a
//! common rotation `Λ` (and the latent rotations follow). A draw is mapped to
//! a canonical representative by choosing `Λ` so that the top `p × p` block of
//! the reference matrix `B_ref Λ` is lower triangular with nonnegative
//! diagonal in its first `p − 1` positions. The last diagonal entry keeps
//! its sign, since `Λ` must stay in `SO(p)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rotation;
use crate::model::ParamState;

/// Which coefficient matrix carries the constraint (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationPolicy {
    pub reference_h: usize,
}

impl Default for IdentificationPolicy {
    fn default() -> Self {
        Self { reference_h: 1 }
    }
}

impl IdentificationPolicy {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.reference_h == 0 || self.reference_h > d {
            return Err(Error::InvalidArgument(format!(
                "reference coefficient index {} outside 1..={d}",
                self.reference_h
            )));
        }
        Ok(())
    }
}

/// `Λ ∈ SO(p)` such that `b Λ` satisfies the identification constraints.
pub fn constraint_rotation(b: &DMatrix<f64>) -> Result<Rotation> {
    let (k, p) = b.shape();
    if k < p || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "reference matrix is {k}×{p}; need at least p rows"
        )));
    }
    let top = b.rows(0, p).into_owned();
    // top = Lᵀ-form: topᵀ = Q R  ⇒  top Q = Rᵀ (lower triangular).
    let qr = top.transpose().qr();
    let r = qr.r();
    let mut q = qr.q();

    let diag: Vec<f64> = (0..p).map(|j| r[(j, j)]).collect();
    let largest = diag.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(largest > 0.0) || smallest < 1e-12 * largest {
        return Err(Error::DegenerateConstraint(format!(
            "top {p}×{p} block of the reference matrix is rank deficient"
        )));
    }

    for (j, &rjj) in diag.iter().enumerate().take(p - 1) {
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(p - 1).neg_mut();
    }
    Ok(Rotation::from_matrix_unchecked(q))
}

/// Whether the top block of `b` is lower triangular (to `tol`) with
/// nonnegative leading `p − 1` diagonal entries.
pub fn satisfies_constraints(b: &DMatrix<f64>, tol: f64) -> bool {
    let p = b.ncols();
    if b.nrows() < p {
        return false;
    }
    for w in 0..p {
        for l in (w + 1)..p {
            if b[(w, l)].abs() > tol {
                return false;
            }
        }
    }
    (0..p.saturating_sub(1)).all(|l| b[(l, l)] >= -tol)
}

/// Remaps a draw to its identified version. Every `B_h` and every latent
/// rotation are right-multiplied by the same `Λ`, so `Y_i R_i − μ_i` only
/// changes by that rotation and the complete-data likelihood is preserved.
pub fn identify_draw(state: &ParamState, policy: &IdentificationPolicy) -> Result<ParamState> {
    policy.validate(state.d())?;
    let lambda = constraint_rotation(&state.coefficient_matrix(policy.reference_h - 1))?;
    let mut out = state.rotate_coefficients(lambda.matrix());
    out.rotations = state.rotations.iter().map(|r| r.compose(&lambda)).collect();
    Ok(out)
}
