//! Rotation representations and the small amount of SO(3) algebra the rest of
//! the crate is built on.
//!
//! The 6D form (first two matrix columns, decoded by Gram-Schmidt) is the only
//! storage and wire format. [`RotMatrix`] is the working form; [`UnitQuat`] is
//! used where a half-angle form is numerically better (geodesic distance,
//! swing-twist).

use std::fmt;

use nalgebra::{Matrix3, Vector3, SVD};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance used when checking that a matrix is a proper rotation.
pub const MATRIX_TOLERANCE: f64 = 1e-6;
/// Tolerance for "unit" vector arguments.
pub const UNIT_TOLERANCE: f64 = 1e-9;

const DECODE_EPS: f64 = 1e-12;
const RANK_ONE_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RotationError {
    #[error("6D decode failed: first column is zero")]
    ZeroFirstColumn,
    #[error("6D decode failed: second column is parallel to the first")]
    ParallelColumns,
    #[error("6D decode failed: non-finite component")]
    NonFinite,
    #[error("not a rotation matrix (orthonormality error {orthonormality:.3e}, det {det:.9})")]
    InvalidMatrix { orthonormality: f64, det: f64 },
    #[error("{name} must be a unit vector (norm {norm})")]
    NonUnitVector { name: &'static str, norm: f64 },
    #[error("alignment needs at least one direction pair")]
    EmptyInput,
    #[error("length mismatch: {sources} sources, {targets} targets, {weights} weights")]
    LengthMismatch {
        sources: usize,
        targets: usize,
        weights: usize,
    },
    #[error("alignment weights must be positive and finite")]
    BadWeight,
}

/// Continuous 6D rotation encoding: two stacked 3-vectors `a1`, `a2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub const IDENTITY: Rot6D = Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn first(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn second(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn to_matrix(&self) -> Result<RotMatrix, RotationError> {
        rot6d_to_matrix(self)
    }
}

impl From<[f64; 6]> for Rot6D {
    fn from(v: [f64; 6]) -> Self {
        Rot6D(v)
    }
}

/// A proper rotation matrix. Columns are the images of the basis vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMatrix(Matrix3<f64>);

impl RotMatrix {
    pub fn identity() -> Self {
        RotMatrix(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and determinant.
    pub fn new(m: Matrix3<f64>) -> Result<Self, RotationError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(RotationError::InvalidMatrix {
                orthonormality: f64::INFINITY,
                det: f64::NAN,
            });
        }
        let orthonormality = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if orthonormality > MATRIX_TOLERANCE || (det - 1.0).abs() > MATRIX_TOLERANCE {
            return Err(RotationError::InvalidMatrix { orthonormality, det });
        }
        Ok(RotMatrix(m))
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let (s, c) = angle.sin_cos();
        let cross = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        RotMatrix(Matrix3::identity() * c + cross * s + (k * k.transpose()) * (1.0 - c))
    }

    pub fn rx(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    pub fn ry(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rz(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotMatrix(self.0.transpose())
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn to_rot6d(&self) -> Rot6D {
        matrix_to_rot6d(self)
    }

    pub fn to_quat(&self) -> UnitQuat {
        UnitQuat::from_matrix(self)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.to_quat().angle()
    }
}

impl std::ops::Mul for RotMatrix {
    type Output = RotMatrix;
    fn mul(self, rhs: RotMatrix) -> RotMatrix {
        RotMatrix(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&RotMatrix> for &RotMatrix {
    type Output = RotMatrix;
    fn mul(self, rhs: &RotMatrix) -> RotMatrix {
        RotMatrix(self.0 * rhs.0)
    }
}

/// Unit quaternion `(w, x, y, z)`, canonicalized to `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes. Returns `None` for a zero quaternion.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let s = if w < 0.0 { -1.0 / n } else { 1.0 / n };
        Some(UnitQuat {
            w: w * s,
            x: x * s,
            y: y * s,
            z: z * s,
        })
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let k = axis / n * s;
        Self::new(c, k.x, k.y, k.z).unwrap_or(Self::IDENTITY)
    }

    /// Shepperd's method: branch on the largest diagonal term.
    pub fn from_matrix(r: &RotMatrix) -> Self {
        let m = &r.0;
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace >= m[(0, 0)] && trace >= m[(1, 1)] && trace >= m[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] >= m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Self::new(w, x, y, z).unwrap_or(Self::IDENTITY)
    }

    pub fn to_matrix(&self) -> RotMatrix {
        let UnitQuat { w, x, y, z } = *self;
        RotMatrix(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        // w stays >= 0, so this is already canonical.
        UnitQuat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product, re-canonicalized.
    pub fn mul(&self, o: &UnitQuat) -> UnitQuat {
        let w = self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z;
        let x = self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y;
        let y = self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x;
        let z = self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w;
        UnitQuat::new(w, x, y, z).unwrap_or(UnitQuat::IDENTITY)
    }

    pub fn dot(&self, o: &UnitQuat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }
}

impl fmt::Display for UnitQuat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.w, self.x, self.y, self.z)
    }
}

/// Gram-Schmidt decode: `b1 = a1/|a1|`, `b2` = normalized rejection of `a2`
/// from `b1`, `b3 = b1 x b2`.
pub fn rot6d_to_matrix(r: &Rot6D) -> Result<RotMatrix, RotationError> {
    if r.0.iter().any(|v| !v.is_finite()) {
        return Err(RotationError::NonFinite);
    }
    let a1 = r.first();
    let a2 = r.second();
    let n1 = a1.norm();
    if n1 <= DECODE_EPS {
        return Err(RotationError::ZeroFirstColumn);
    }
    let b1 = a1 / n1;
    let rejected = a2 - b1 * b1.dot(&a2);
    let n2 = rejected.norm();
    if n2 <= DECODE_EPS * a2.norm().max(1.0) {
        return Err(RotationError::ParallelColumns);
    }
    let b2 = rejected / n2;
    let b3 = b1.cross(&b2);
    Ok(RotMatrix(Matrix3::from_columns(&[b1, b2, b3])))
}

pub fn matrix_to_rot6d(m: &RotMatrix) -> Rot6D {
    let c = &m.0;
    Rot6D([
        c[(0, 0)],
        c[(1, 0)],
        c[(2, 0)],
        c[(0, 1)],
        c[(1, 1)],
        c[(2, 1)],
    ])
}

/// Angle of `aᵀb` in radians, in `[0, pi]`. Symmetric.
pub fn geodesic_angle(a: &RotMatrix, b: &RotMatrix) -> f64 {
    relative_rotation(a, b).to_quat().angle()
}

/// `aᵀ·b`: the rotation taking frame `a` to frame `b`, expressed in `a`.
pub fn relative_rotation(a: &RotMatrix, b: &RotMatrix) -> RotMatrix {
    RotMatrix(a.0.transpose() * b.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingTwist {
    pub swing: RotMatrix,
    pub twist: RotMatrix,
    /// Set when the rotation maps `axis` onto its antipode; `twist` is then
    /// identity and `swing` carries the whole rotation.
    pub degenerate: bool,
}

impl SwingTwist {
    /// Signed twist angle about the decomposition axis, in `(-pi, pi]`.
    pub fn twist_angle(&self, axis: &Vec3) -> f64 {
        let q = self.twist.to_quat();
        let s = q.vector().dot(axis);
        2.0 * s.atan2(q.w)
    }
}

fn check_unit(name: &'static str, v: &Vec3) -> Result<(), RotationError> {
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(RotationError::NonUnitVector { name, norm });
    }
    Ok(())
}

/// Factor `m = swing · twist` with `twist` a rotation about `axis` and
/// `swing` free of any component about it.
pub fn swing_twist(m: &RotMatrix, axis: &Vec3) -> Result<SwingTwist, RotationError> {
    check_unit("axis", axis)?;
    let q = m.to_quat();
    let projected = axis * q.vector().dot(axis);
    let norm = (q.w * q.w + projected.norm_squared()).sqrt();
    if norm < UNIT_TOLERANCE {
        return Ok(SwingTwist {
            swing: *m,
            twist: RotMatrix::identity(),
            degenerate: true,
        });
    }
    let twist = UnitQuat::new(q.w, projected.x, projected.y, projected.z)
        .expect("twist quaternion has non-zero norm");
    let swing = q.mul(&twist.conjugate());
    Ok(SwingTwist {
        swing: swing.to_matrix(),
        twist: twist.to_matrix(),
        degenerate: false,
    })
}

/// A deterministic unit vector perpendicular to `u`.
pub fn any_perpendicular(u: &Vec3) -> Vec3 {
    let a = u.abs();
    let basis = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let p = basis - u * u.dot(&basis);
    p / p.norm()
}

/// Minimal-angle rotation taking `u` to `v`. For antipodal inputs the half
/// turn is taken about the part of `fallback_axis` perpendicular to `u`.
pub fn shortest_arc(u: &Vec3, v: &Vec3, fallback_axis: &Vec3) -> Result<RotMatrix, RotationError> {
    check_unit("u", u)?;
    check_unit("v", v)?;
    check_unit("fallback_axis", fallback_axis)?;
    Ok(shortest_arc_unchecked(u, v, fallback_axis))
}

pub(crate) fn shortest_arc_unchecked(u: &Vec3, v: &Vec3, fallback_axis: &Vec3) -> RotMatrix {
    let d = u.dot(v);
    if d < -1.0 + 1e-9 {
        let p = fallback_axis - u * fallback_axis.dot(u);
        let axis = if p.norm() > 1e-6 {
            p / p.norm()
        } else {
            any_perpendicular(u)
        };
        return RotMatrix::from_axis_angle(&axis, std::f64::consts::PI);
    }
    let c = u.cross(v);
    match UnitQuat::new(1.0 + d, c.x, c.y, c.z) {
        Some(q) => q.to_matrix(),
        None => RotMatrix::identity(),
    }
}

/// Weighted orthogonal Procrustes: the proper rotation minimizing
/// `Σ wᵢ |R·sᵢ − tᵢ|²`. Rank-deficient (collinear) inputs return the
/// zero-twist solution, i.e. [`shortest_arc`] between the common lines.
pub fn procrustes_rotation(
    source_dirs: &[Vec3],
    target_dirs: &[Vec3],
    weights: &[f64],
) -> Result<RotMatrix, RotationError> {
    let fallback = source_dirs
        .first()
        .map(any_perpendicular)
        .unwrap_or_else(Vec3::z);
    procrustes_with_fallback(source_dirs, target_dirs, weights, &fallback)
}

/// [`procrustes_rotation`] with an explicit antipodal fallback axis for the
/// rank-one case.
pub fn procrustes_with_fallback(
    source_dirs: &[Vec3],
    target_dirs: &[Vec3],
    weights: &[f64],
    fallback_axis: &Vec3,
) -> Result<RotMatrix, RotationError> {
    if source_dirs.len() != target_dirs.len() || source_dirs.len() != weights.len() {
        return Err(RotationError::LengthMismatch {
            sources: source_dirs.len(),
            targets: target_dirs.len(),
            weights: weights.len(),
        });
    }
    if source_dirs.is_empty() {
        return Err(RotationError::EmptyInput);
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(RotationError::BadWeight);
    }
    if source_dirs.len() == 1 {
        let u = source_dirs[0].normalize();
        let v = target_dirs[0].normalize();
        return Ok(shortest_arc_unchecked(&u, &v, fallback_axis));
    }

    // Correlation H = Σ w t sᵀ; the optimum maximizes tr(Rᵀ H).
    let mut h = Matrix3::zeros();
    for ((s, t), w) in source_dirs.iter().zip(target_dirs).zip(weights) {
        h += t * s.transpose() * *w;
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    let (mut s_max, mut s_mid) = (0usize, 0usize);
    for i in 0..3 {
        if sv[i] > sv[s_max] {
            s_max = i;
        }
    }
    let mut second = -1.0;
    for i in 0..3 {
        if i != s_max && sv[i] > second {
            second = sv[i];
            s_mid = i;
        }
    }
    if sv[s_mid] <= RANK_ONE_RATIO * sv[s_max] {
        let from = v_t.row(s_max).transpose().normalize();
        let to = u.column(s_max).into_owned().normalize();
        let fb = {
            let n = fallback_axis.norm();
            if n > 0.0 {
                fallback_axis / n
            } else {
                any_perpendicular(&from)
            }
        };
        return Ok(shortest_arc_unchecked(&from, &to, &fb));
    }

    let mut correction = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        let mut s_min = 0;
        for i in 0..3 {
            if sv[i] < sv[s_min] {
                s_min = i;
            }
        }
        correction[(s_min, s_min)] = -1.0;
    }
    let r = u * correction * v_t;
    Ok(RotMatrix(orthonormalize(&r)))
}

/// One Gram-Schmidt pass on the first two columns; removes SVD round-off.
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let b1 = m.column(0).normalize();
    let a2 = m.column(1).into_owned();
    let b2 = (a2 - b1 * b1.dot(&a2)).normalize();
    Matrix3::from_columns(&[b1, b2, b1.cross(&b2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_rotation(rng: &mut impl Rng) -> RotMatrix {
        loop {
            let q: [f64; 4] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let n2: f64 = q.iter().map(|v| v * v).sum();
            if n2 > 1e-3 && n2 <= 1.0 {
                return UnitQuat::new(q[0], q[1], q[2], q[3]).unwrap().to_matrix();
            }
        }
    }

    fn random_unit(rng: &mut impl Rng) -> Vec3 {
        random_rotation(rng).column(0)
    }

    fn assert_mat_eq(a: &RotMatrix, b: &RotMatrix, tol: f64) {
        let d = (a.matrix() - b.matrix()).abs().max();
        assert!(d <= tol, "matrices differ by {d}:\n{a:?}\n{b:?}");
    }

    #[test]
    fn decode_identity_and_quarter_turn() {
        assert_mat_eq(
            &rot6d_to_matrix(&Rot6D::IDENTITY).unwrap(),
            &RotMatrix::identity(),
            0.0,
        );
        let m = rot6d_to_matrix(&Rot6D([0.0, 1.0, 0.0, -1.0, 0.0, 0.0])).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(*m.matrix(), expected);
        assert_mat_eq(&m, &RotMatrix::rz(FRAC_PI_2), 1e-15);
    }

    #[test]
    fn decode_orthogonalizes_skewed_input() {
        // a1 = (2,0,0) -> b1 = x; a2 = (1,1,0) minus its x part -> b2 = y.
        let m = rot6d_to_matrix(&Rot6D([2.0, 0.0, 0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_mat_eq(&m, &RotMatrix::identity(), 1e-15);
        assert!(RotMatrix::new(*m.matrix()).is_ok());
        assert_abs_diff_eq!(m.matrix().determinant(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn decode_errors_name_the_defect() {
        assert_eq!(
            rot6d_to_matrix(&Rot6D([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])),
            Err(RotationError::ZeroFirstColumn)
        );
        assert_eq!(
            rot6d_to_matrix(&Rot6D([1.0, 0.0, 0.0, -3.0, 0.0, 0.0])),
            Err(RotationError::ParallelColumns)
        );
        assert_eq!(
            rot6d_to_matrix(&Rot6D([f64::NAN, 0.0, 0.0, 0.0, 1.0, 0.0])),
            Err(RotationError::NonFinite)
        );
    }

    #[test]
    fn encode_takes_first_two_columns() {
        assert_eq!(RotMatrix::identity().to_rot6d(), Rot6D::IDENTITY);
        let r = RotMatrix::rz(FRAC_PI_2).to_rot6d();
        let expected = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in r.0.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn invalid_matrix_rejected() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(matches!(
            RotMatrix::new(m),
            Err(RotationError::InvalidMatrix { .. })
        ));
        assert!(RotMatrix::new(Matrix3::identity() * 1.01).is_err());
    }

    #[test]
    fn geodesic_examples_and_quat_dot_oracle() {
        assert_eq!(geodesic_angle(&RotMatrix::identity(), &RotMatrix::identity()), 0.0);
        assert_abs_diff_eq!(
            geodesic_angle(&RotMatrix::identity(), &RotMatrix::rz(FRAC_PI_2)),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let oracle = 2.0 * a.to_quat().dot(&b.to_quat()).abs().min(1.0).acos();
            let got = geodesic_angle(&a, &b);
            assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
            assert_abs_diff_eq!(got, geodesic_angle(&b, &a), epsilon = 1e-12);
        }
    }

    #[test]
    fn geodesic_is_accurate_near_zero_and_pi() {
        let tiny = 1e-9;
        assert_abs_diff_eq!(
            geodesic_angle(&RotMatrix::identity(), &RotMatrix::rx(tiny)),
            tiny,
            epsilon = 1e-20
        );
        assert_abs_diff_eq!(
            geodesic_angle(&RotMatrix::identity(), &RotMatrix::ry(PI - 1e-7)),
            PI - 1e-7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn swing_twist_pure_cases() {
        let st = swing_twist(&RotMatrix::rz(40f64.to_radians()), &Vec3::z()).unwrap();
        assert_mat_eq(&st.swing, &RotMatrix::identity(), 1e-15);
        assert_mat_eq(&st.twist, &RotMatrix::rz(40f64.to_radians()), 1e-15);
        assert!(!st.degenerate);

        let st = swing_twist(&RotMatrix::rx(30f64.to_radians()), &Vec3::z()).unwrap();
        assert_mat_eq(&st.twist, &RotMatrix::identity(), 1e-15);
        assert_mat_eq(&st.swing, &RotMatrix::rx(30f64.to_radians()), 1e-15);
    }

    #[test]
    fn swing_twist_degenerate_and_errors() {
        let st = swing_twist(&RotMatrix::rx(PI), &Vec3::z()).unwrap();
        assert!(st.degenerate);
        assert_eq!(st.twist, RotMatrix::identity());
        assert!(matches!(
            swing_twist(&RotMatrix::identity(), &Vec3::new(0.0, 0.0, 2.0)),
            Err(RotationError::NonUnitVector { .. })
        ));
    }

    #[test]
    fn swing_twist_recomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = random_rotation(&mut rng);
            let axis = random_unit(&mut rng);
            let st = swing_twist(&m, &axis).unwrap();
            assert_mat_eq(&(st.swing * st.twist), &m, 1e-10);
            // twist fixes the axis; swing has no component about it.
            assert!((st.twist.rotate(&axis) - axis).norm() < 1e-10);
            assert!(st.swing.to_quat().vector().dot(&axis).abs() < 1e-10);
            assert!(st.twist.angle() <= m.angle() + 1e-9);
        }
    }

    #[test]
    fn shortest_arc_cases() {
        let x = Vec3::x();
        let y = Vec3::y();
        let z = Vec3::z();
        assert_mat_eq(&shortest_arc(&x, &x, &z).unwrap(), &RotMatrix::identity(), 0.0);
        assert_mat_eq(&shortest_arc(&x, &y, &z).unwrap(), &RotMatrix::rz(FRAC_PI_2), 1e-15);
        let half = shortest_arc(&x, &-x, &z).unwrap();
        assert!((half.rotate(&x) + x).norm() < 1e-15);
        assert_mat_eq(&half, &RotMatrix::rz(PI), 1e-15);
        // fallback parallel to u: still a valid half turn.
        let half = shortest_arc(&x, &-x, &x).unwrap();
        assert!((half.rotate(&x) + x).norm() < 1e-15);
        assert!(shortest_arc(&(x * 2.0), &y, &z).is_err());
    }

    #[test]
    fn procrustes_identity_and_known_rotation() {
        let src = [Vec3::x(), Vec3::y(), Vec3::new(1.0, 1.0, 1.0).normalize()];
        let w = [1.0; 3];
        assert_mat_eq(
            &procrustes_rotation(&src, &src, &w).unwrap(),
            &RotMatrix::identity(),
            1e-12,
        );
        let rz = RotMatrix::rz(FRAC_PI_2);
        let tgt: Vec<_> = src.iter().map(|s| rz.rotate(s)).collect();
        assert_mat_eq(&procrustes_rotation(&src, &tgt, &w).unwrap(), &rz, 1e-9);
    }

    #[test]
    fn procrustes_collinear_returns_zero_twist() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = random_unit(&mut rng);
            let r = random_rotation(&mut rng);
            let t = r.rotate(&s);
            let src = [s, -s];
            let tgt = [t, -t];
            let got = procrustes_rotation(&src, &tgt, &[1.0, 2.0]).unwrap();
            let arc = shortest_arc(&s, &t, &any_perpendicular(&s)).unwrap();
            assert_mat_eq(&got, &arc, 1e-9);
        }
    }

    #[test]
    fn procrustes_errors() {
        assert_eq!(procrustes_rotation(&[], &[], &[]), Err(RotationError::EmptyInput));
        assert!(matches!(
            procrustes_rotation(&[Vec3::x()], &[], &[1.0]),
            Err(RotationError::LengthMismatch { .. })
        ));
        assert_eq!(
            procrustes_rotation(&[Vec3::x(), Vec3::y()], &[Vec3::x(), Vec3::y()], &[1.0, 0.0]),
            Err(RotationError::BadWeight)
        );
    }

    #[test]
    fn procrustes_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let residual = |r: &RotMatrix, s: &[Vec3], t: &[Vec3], w: &[f64]| -> f64 {
            s.iter()
                .zip(t)
                .zip(w)
                .map(|((s, t), w)| w * (r.rotate(s) - t).norm_squared())
                .sum()
        };
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let src: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
            let tgt: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let best = procrustes_rotation(&src, &tgt, &w).unwrap();
            assert_abs_diff_eq!(best.matrix().determinant(), 1.0, epsilon = 1e-12);
            let e = residual(&best, &src, &tgt, &w);
            for _ in 0..1000 {
                let cand = random_rotation(&mut rng);
                assert!(e <= residual(&cand, &src, &tgt, &w) + 1e-12);
            }
        }
    }

    #[test]
    fn relative_rotation_examples() {
        let r30 = RotMatrix::rz(30f64.to_radians());
        assert_mat_eq(&relative_rotation(&RotMatrix::identity(), &r30), &r30, 1e-15);
        assert_mat_eq(&relative_rotation(&r30, &r30), &RotMatrix::identity(), 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            assert_mat_eq(&(a * relative_rotation(&a, &b)), &b, 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rot() -> impl Strategy<Value = RotMatrix> {
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_filter_map(
                "non-degenerate quaternion",
                |(w, x, y, z)| {
                    let n = w * w + x * x + y * y + z * z;
                    (n > 1e-3).then(|| UnitQuat::new(w, x, y, z).unwrap().to_matrix())
                },
            )
        }

        proptest! {
            #[test]
            fn gram_schmidt_invariances(r in rot(), scale in 0.01f64..100.0, shear in -10.0f64..10.0) {
                let six = r.to_rot6d();
                let a1 = six.first() * scale;
                let a2 = six.second() + six.first() * shear;
                let skewed = Rot6D([a1.x, a1.y, a1.z, a2.x, a2.y, a2.z]);
                let back = rot6d_to_matrix(&skewed).unwrap();
                prop_assert!(geodesic_angle(&back, &r) < 1e-9);
            }

            #[test]
            fn round_trip_through_6d(r in rot()) {
                let back = rot6d_to_matrix(&matrix_to_rot6d(&r)).unwrap();
                prop_assert!((back.matrix() - r.matrix()).abs().max() < 1e-9);
            }

            #[test]
            fn triangle_inequality(a in rot(), b in rot(), c in rot()) {
                let ab = geodesic_angle(&a, &b);
                let bc = geodesic_angle(&b, &c);
                let ac = geodesic_angle(&a, &c);
                prop_assert!(ac <= ab + bc + 1e-9);
            }

            #[test]
            fn quaternion_round_trip_is_canonical(r in rot()) {
                let q = r.to_quat();
                prop_assert!(q.w >= 0.0);
                prop_assert!(((q.w * q.w + q.vector().norm_squared()) - 1.0).abs() < 1e-12);
                prop_assert!((q.to_matrix().matrix() - r.matrix()).abs().max() < 1e-12);
            }
        }
    }
}
