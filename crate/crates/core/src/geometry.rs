//! Landmark preprocessing and rotation-group utilities.
//!
//! A raw configuration of `k + 1` landmarks in `p` dimensions is mapped to a
//! `k × p` pre-form by the Helmert submatrix, which removes location. The
//! pre-form is then split by a singular value decomposition into a
//! rotation-free size-and-shape representative `Y = UΔ` and a rotation
//! `R ∈ SO(p)` with `pre = Y Rᵀ`.
//!
//! The Helmert submatrix here is `k × (k + 1)`: the first (mean) row of the
//! full square Helmert matrix is dropped, which is what makes the pre-form
//! `k × p`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the orthogonality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-10;

/// Relative singular-value threshold below which a pre-form is rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Raw landmark coordinates of one object, `(k + 1) × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    coords: DMatrix<f64>,
}

impl Configuration {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        let p = coords.ncols();
        if !(p == 2 || p == 3) {
            return Err(Error::InvalidArgument(format!(
                "configurations must have 2 or 3 coordinate columns, got {p}"
            )));
        }
        if coords.nrows() < p + 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least {} landmarks in dimension {p}, got {}",
                p + 1,
                coords.nrows()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "configuration contains non-finite coordinates".into(),
            ));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Number of landmarks minus one.
    pub fn k(&self) -> usize {
        self.coords.nrows() - 1
    }

    pub fn p(&self) -> usize {
        self.coords.ncols()
    }

    /// Adds the row vector `t` to every landmark.
    pub fn translated(&self, t: &[f64]) -> Result<Self> {
        if t.len() != self.p() {
            return Err(Error::InvalidArgument(format!(
                "translation has length {}, expected {}",
                t.len(),
                self.p()
            )));
        }
        let mut coords = self.coords.clone();
        for mut row in coords.row_iter_mut() {
            for (c, v) in row.iter_mut().zip(t) {
                *c += v;
            }
        }
        Self::new(coords)
    }
}

/// Helmertized configuration, `k × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreForm {
    coords: DMatrix<f64>,
}

impl PreForm {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        if coords.nrows() == 0 || coords.ncols() == 0 {
            return Err(Error::InvalidArgument("empty pre-form".into()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "pre-form contains non-finite entries".into(),
            ));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.coords
    }

    /// A `(k + 1)`-landmark configuration whose pre-form is `self`, with
    /// centroid at `translation`.
    pub fn to_configuration(&self, translation: &[f64]) -> Result<Configuration> {
        let h = helmert_submatrix(self.coords.nrows())?;
        let cfg = Configuration::new(h.transpose() * &self.coords)?;
        cfg.translated(translation)
    }
}

/// Size-and-shape representative `Y` of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeAndShape {
    y: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl SizeAndShape {
    /// Wraps an arbitrary `k × p` representative. Any matrix is a valid
    /// representative of its own rotation class; `decompose` produces the
    /// canonical one.
    pub fn from_matrix(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidArgument("empty size-and-shape matrix".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "size-and-shape matrix contains non-finite entries".into(),
            ));
        }
        let mut singular_values: Vec<f64> = y.clone().svd(false, false).singular_values.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { y, singular_values })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.y
    }

    /// Nonincreasing singular values of `Y`.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }
}

/// An element of `SO(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    /// Validates `RᵀR = I` and `det R = +1` to [`ROTATION_TOL`].
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() || r.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "rotation must be square, got {}×{}",
                r.nrows(),
                r.ncols()
            )));
        }
        let p = r.nrows();
        let gram = r.transpose() * &r;
        let off = (gram - DMatrix::identity(p, p)).amax();
        if !(off <= ROTATION_TOL) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthogonal (max |RᵀR − I| = {off:e})"
            )));
        }
        let det = r.determinant();
        if !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::InvalidArgument(format!(
                "orthogonal matrix has determinant {det}, not +1"
            )));
        }
        Ok(Self(r))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub(crate) fn from_matrix_unchecked(r: DMatrix<f64>) -> Self {
        debug_assert!(Rotation::new(r.clone()).is_ok(), "not a rotation: {r}");
        Self(r)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Rotation {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Rotation::new(matrix_from_rows(&rows)?)
    }
}

impl From<Rotation> for Vec<Vec<f64>> {
    fn from(r: Rotation) -> Self {
        matrix_to_rows(&r.0)
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// The `k × (k + 1)` Helmert submatrix. Row `j` (1-based) is
/// `(−d_j, …, −d_j, j·d_j, 0, …, 0)` with `j` leading entries and
/// `d_j = 1/√(j(j+1))`.
pub fn helmert_submatrix(k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "Helmert submatrix needs k ≥ 1".into(),
        ));
    }
    let mut h = DMatrix::zeros(k, k + 1);
    for row in 0..k {
        let j = (row + 1) as f64;
        let dj = 1.0 / (j * (j + 1.0)).sqrt();
        for col in 0..=row {
            h[(row, col)] = -dj;
        }
        h[(row, row + 1)] = j * dj;
    }
    Ok(h)
}

/// Removes location: `H · X̃`.
pub fn helmertize(cfg: &Configuration) -> Result<PreForm> {
    let h = helmert_submatrix(cfg.k())?;
    if h.ncols() != cfg.coords().nrows() {
        return Err(Error::InvalidArgument(format!(
            "Helmert submatrix has {} columns but configuration has {} landmarks",
            h.ncols(),
            cfg.coords().nrows()
        )));
    }
    PreForm::new(h * cfg.coords())
}

/// Splits a pre-form into `(Y, R)` with `pre = Y Rᵀ`, `Y = UΔ`, `R ∈ SO(p)`.
///
/// The SVD sign ambiguity is fixed so the result is a function of the
/// rotation class of `pre`: the largest-magnitude entry of each of the first
/// `p − 1` columns of `U` is made positive, and the last column is flipped
/// whenever needed to give `det R = +1`. Reflection information therefore
/// ends up in `Y`.
pub fn decompose(pre: &PreForm) -> Result<(SizeAndShape, Rotation)> {
    let x = pre.coords();
    let (k, p) = x.shape();
    if k < p {
        return Err(Error::InvalidArgument(format!(
            "pre-form has {k} rows and {p} columns; need k ≥ p"
        )));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let largest = sv[order[0]];
    let smallest = sv[order[p - 1]];
    if !(largest > 0.0) || smallest < RANK_TOL * largest {
        return Err(Error::DegenerateConfiguration(format!(
            "pre-form is rank deficient (singular values {largest:e} … {smallest:e})"
        )));
    }

    let mut u_sorted = DMatrix::zeros(k, p);
    let mut v = DMatrix::zeros(p, p);
    let mut singular_values = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v.set_column(dst, &v_t.row(src).transpose());
        singular_values.push(sv[src]);
    }

    for j in 0..p.saturating_sub(1) {
        let col = u_sorted.column(j);
        let pivot = col.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            u_sorted.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    if v.determinant() < 0.0 {
        u_sorted.column_mut(p - 1).neg_mut();
        v.column_mut(p - 1).neg_mut();
    }

    let delta = DMatrix::from_diagonal(&DVector::from_vec(singular_values.clone()));
    let y = u_sorted * delta;
    Ok((
        SizeAndShape { y, singular_values },
        Rotation::from_matrix_unchecked(orthonormalize(v)),
    ))
}

/// Re-projects a nearly orthogonal matrix onto the orthogonal group, which
/// removes the last few ulps of drift left by the SVD.
fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => u * v_t,
        _ => unreachable!("SVD always returns requested factors"),
    }
}

/// Planar rotation by `theta` radians.
pub fn rotation_from_angle(theta: f64) -> Rotation {
    let theta = theta.rem_euclid(TAU);
    let (s, c) = theta.sin_cos();
    Rotation::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
}

/// Angle of a planar rotation, in `[0, 2π)`.
pub fn angle_from_rotation(r: &Rotation) -> f64 {
    let m = r.matrix();
    m[(1, 0)].atan2(m[(0, 0)]).rem_euclid(TAU)
}

fn rot_z(a: f64) -> DMatrix<f64> {
    let (s, c) = a.sin_cos();
    DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
}

fn rot_y(a: f64) -> DMatrix<f64> {
    let (s, c) = a.sin_cos();
    DMatrix::from_row_slice(3, 3, &[c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c])
}

/// Z–Y–Z Euler rotation `R_z(θ1) · R_y(θ2) · R_z(θ3)`.
///
/// The canonical box is `θ1, θ3 ∈ [0, 2π)`, `θ2 ∈ [0, π]`. Angles outside it
/// are accepted; the matrix is periodic in each angle.
pub fn rotation_from_euler(theta1: f64, theta2: f64, theta3: f64) -> Rotation {
    Rotation::from_matrix_unchecked(rot_z(theta1) * rot_y(theta2) * rot_z(theta3))
}

/// Inverse of [`rotation_from_euler`] on the canonical box. At the
/// coordinate singularities `θ2 ∈ {0, π}` the split between `θ1` and `θ3` is
/// arbitrary; `θ3 = 0` is returned.
pub fn euler_from_rotation(r: &Rotation) -> [f64; 3] {
    let m = r.matrix();
    let theta2 = m[(2, 2)].clamp(-1.0, 1.0).acos();
    let s2 = theta2.sin();
    if s2 < 1e-12 {
        // R = R_z(θ1 ± θ3); put everything into θ1.
        let theta1 = m[(1, 0)].atan2(m[(0, 0)]);
        return [theta1.rem_euclid(TAU), theta2, 0.0];
    }
    let theta1 = m[(1, 2)].atan2(m[(0, 2)]);
    let theta3 = m[(2, 1)].atan2(-m[(2, 0)]);
    [theta1.rem_euclid(TAU), theta2, theta3.rem_euclid(TAU)]
}

/// Rotation `R ∈ SO(p)` minimizing `‖a R − b‖_F`.
pub fn optimal_rotation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Rotation> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let p = a.ncols();
    let m = a.transpose() * b;
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return Vᵀ".into()))?;
    let mut r = &u * &v_t;
    if r.determinant() < 0.0 {
        // Flip the direction belonging to the smallest singular value.
        let j = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(j, _)| j)
            .unwrap_or(p - 1);
        let mut u = u;
        u.column_mut(j).neg_mut();
        r = u * v_t;
    }
    Ok(Rotation::from_matrix_unchecked(orthonormalize(r)))
}

/// Size-and-shape distance between two `k × p` representatives:
/// `min_{R ∈ SO(p)} ‖a R − b‖_F`.
pub fn procrustes_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let r = optimal_rotation(a, b)?;
    Ok((a * r.matrix() - b).norm())
}

/// Riemannian size-and-shape distance `ρ_p`.
pub fn ss_distance(y1: &SizeAndShape, y2: &SizeAndShape) -> Result<f64> {
    procrustes_distance(y1.y(), y2.y())
}

/// Wraps an angle into `[0, 2π)`.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

/// Reflects an angle into `[0, π]` (period `2π` mirror images).
pub(crate) fn reflect_polar(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t > PI {
        TAU - t
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn helmert_small_cases() {
        let h1 = helmert_submatrix(1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((h1[(0, 0)] + s).abs() < 1e-15 && (h1[(0, 1)] - s).abs() < 1e-15);

        let h2 = helmert_submatrix(2).unwrap();
        let s6 = 1.0 / 6f64.sqrt();
        let expected = DMatrix::from_row_slice(2, 3, &[-s, s, 0.0, -s6, -s6, 2.0 * s6]);
        assert!((h2 - expected).amax() < 1e-15);
    }

    #[test]
    fn helmert_rejects_zero() {
        assert!(matches!(helmert_submatrix(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn helmert_orthonormal_rows_sum_to_zero() {
        for k in 1..=20 {
            let h = helmert_submatrix(k).unwrap();
            let hht = &h * h.transpose();
            assert!((hht - DMatrix::identity(k, k)).amax() < 1e-12, "k={k}");
            for row in h.row_iter() {
                assert!(row.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn helmertize_constant_configuration_is_zero() {
        let cfg = Configuration::new(DMatrix::from_row_slice(4, 2, &[3.0, -1.0, 3.0, -1.0, 3.0, -1.0, 3.0, -1.0]))
            .unwrap();
        assert!(helmertize(&cfg).unwrap().coords().amax() < 1e-14);
    }

    #[test]
    fn helmertize_triangle() {
        let cfg = Configuration::new(DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0])).unwrap();
        let pre = helmertize(&cfg).unwrap();
        // rows: H_1 = (−1/√2, 1/√2, 0), H_2 = (−1/√6, −1/√6, 2/√6)
        let s = 1.0 / 2f64.sqrt();
        let s6 = 1.0 / 6f64.sqrt();
        let expected = DMatrix::from_row_slice(2, 2, &[s, 0.0, -s6, 2.0 * s6]);
        assert!((pre.coords() - expected).amax() < 1e-15);
    }

    #[test]
    fn helmertize_is_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = Configuration::new(random_matrix(&mut rng, 5, 3)).unwrap();
        let moved = cfg.translated(&[10.0, -3.5, 0.25]).unwrap();
        let a = helmertize(&cfg).unwrap();
        let b = helmertize(&moved).unwrap();
        assert!((a.coords() - b.coords()).amax() < 1e-12);
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(DMatrix::zeros(2, 2)).is_err()); // k = 1 < p
        assert!(Configuration::new(DMatrix::zeros(5, 4)).is_err());
        let mut m = DMatrix::zeros(4, 2);
        m[(0, 0)] = f64::NAN;
        assert!(Configuration::new(m).is_err());
    }

    #[test]
    fn preform_configuration_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pre = PreForm::new(random_matrix(&mut rng, 3, 2)).unwrap();
        let cfg = pre.to_configuration(&[5.0, 7.0]).unwrap();
        assert_eq!(cfg.k(), 3);
        let back = helmertize(&cfg).unwrap();
        assert!((back.coords() - pre.coords()).amax() < 1e-12);
    }

    #[test]
    fn decompose_canonical_input_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2, 3] {
            let pre = PreForm::new(random_matrix(&mut rng, 4, p)).unwrap();
            let (ss, _) = decompose(&pre).unwrap();
            let (ss2, r2) = decompose(&PreForm::new(ss.y().clone()).unwrap()).unwrap();
            assert!((ss2.y() - ss.y()).amax() < 1e-10);
            assert!((r2.matrix() - DMatrix::identity(p, p)).amax() < 1e-10);
        }
    }

    #[test]
    fn decompose_reconstructs_and_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = random_matrix(&mut rng, 3, 2);
            let pre = PreForm::new(x.clone()).unwrap();
            let (ss, r) = decompose(&pre).unwrap();
            assert!((ss.y() * r.matrix().transpose() - &x).norm() < 1e-8);
            let sv = ss.singular_values();
            assert!(sv.windows(2).all(|w| w[0] >= w[1]) && sv[1] >= 0.0);
            assert!((r.matrix().determinant() - 1.0).abs() < 1e-10);
            // YᵀY eigenvalues are the squared singular values.
            let yty = ss.y().transpose() * ss.y();
            let mut eig: Vec<f64> = yty.symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            for (e, s) in eig.iter().zip(sv) {
                assert!((e - s * s).abs() < 1e-9 * (1.0 + e));
            }
        }
    }

    #[test]
    fn decompose_rejects_rank_deficient() {
        let pre = PreForm::new(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0])).unwrap();
        assert!(matches!(decompose(&pre), Err(Error::DegenerateConfiguration(_))));
        let zero = PreForm::new(DMatrix::zeros(3, 2)).unwrap();
        assert!(matches!(decompose(&zero), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn planar_rotations() {
        assert!((rotation_from_angle(0.0).matrix() - DMatrix::identity(2, 2)).amax() < 1e-15);
        let q = rotation_from_angle(PI / 2.0);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((q.matrix() - expected).amax() < 1e-15);
        let (a, b) = (5.5, 2.1);
        let lhs = rotation_from_angle(a).compose(&rotation_from_angle(b));
        let rhs = rotation_from_angle((a + b) % TAU);
        assert!((lhs.matrix() - rhs.matrix()).amax() < 1e-12);
        assert!((angle_from_rotation(&rotation_from_angle(4.0)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn euler_identity_and_gimbal() {
        assert!((rotation_from_euler(0.0, 0.0, 0.0).matrix() - DMatrix::identity(3, 3)).amax() < 1e-15);
        let r = rotation_from_euler(0.7, 0.0, 1.9);
        assert!((r.matrix() - rot_z(2.6)).amax() < 1e-12);
    }

    #[test]
    fn euler_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let t = [
                rng.random_range(0.0..TAU),
                rng.random_range(0.01..PI - 0.01),
                rng.random_range(0.0..TAU),
            ];
            let r = rotation_from_euler(t[0], t[1], t[2]);
            assert!(Rotation::new(r.matrix().clone()).is_ok());
            let back = euler_from_rotation(&r);
            for (x, y) in t.iter().zip(back) {
                let diff = (x - y).rem_euclid(TAU);
                assert!(diff.min(TAU - diff) < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        assert!(Rotation::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(Rotation::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn distance_zero_on_rotated_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = random_matrix(&mut rng, 4, 3);
        let q = rotation_from_euler(0.3, 1.2, 2.2);
        assert!(procrustes_distance(&y, &y).unwrap() < 1e-12);
        assert!(procrustes_distance(&y, &(&y * q.matrix())).unwrap() < 1e-9);
    }

    #[test]
    fn distance_distinguishes_reflections() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let mut mirrored = y.clone();
        mirrored.column_mut(1).neg_mut();
        assert!(procrustes_distance(&y, &mirrored).unwrap() > 1e-3);
    }

    #[test]
    fn distance_shape_mismatch() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(4, 2);
        assert!(matches!(procrustes_distance(&a, &b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn reflect_polar_stays_in_range() {
        for x in [-7.0, -0.5, 0.0, 1.0, 3.5, 6.0, 9.9] {
            let r = reflect_polar(x);
            assert!((0.0..=PI).contains(&r));
        }
        assert!((reflect_polar(-0.5) - 0.5).abs() < 1e-15);
        assert!((reflect_polar(PI + 0.5) - (PI - 0.5)).abs() < 1e-12);
    }
}
