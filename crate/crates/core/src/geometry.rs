//! SE(3)/SO(3) algebra, camera projection and pixel/point conversions.
//!
//! Rotations are stored as 3x3 matrices; quaternions only appear at the
//! trajectory I/O boundary.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3, Vector6};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth z={0}")]
    NonPositiveDepth(f64),
    #[error("invalid depth value d={0}")]
    InvalidDepth(f64),
}

/// Rigid transform in SE(3). Maps points from the "child" frame into the
/// "parent" frame: `p_parent = R * p_child + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a (not necessarily normalised) quaternion
    /// `(qx, qy, qz, qw)` and a translation.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Self {
        let quat = nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]);
        let unit = UnitQuaternion::from_quaternion(quat);
        Pose {
            rotation: unit.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Quaternion `(qx, qy, qz, qw)` of the rotation part.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let unit = UnitQuaternion::from_matrix(&self.rotation);
        let q = unit.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rot_t = self.rotation.transpose();
        Pose {
            rotation: rot_t,
            translation: -(rot_t * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Frobenius deviation of `R^T R` from identity; 0 for a perfect rotation.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).norm()
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// Element of se(3): translational part `v`, rotational part `w` (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub v: Vec3,
    pub w: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Twist {
            v: Vec3::zeros(),
            w: Vec3::zeros(),
        }
    }

    pub fn new(v: Vec3, w: Vec3) -> Self {
        Twist { v, w }
    }

    pub fn from_vector(xi: &Vector6<f64>) -> Self {
        Twist {
            v: Vec3::new(xi[0], xi[1], xi[2]),
            w: Vec3::new(xi[3], xi[4], xi[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.w.norm_squared()).sqrt()
    }
}

/// Pinhole camera intrinsics. `depth_scale` is raw depth units per metre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub depth_scale: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            depth_scale: 5000.0,
        }
    }

    /// Intrinsics of the next-coarser pyramid level (everything halved).
    pub fn half(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx * 0.5,
            fy: self.fy * 0.5,
            cx: self.cx * 0.5,
            cy: self.cy * 0.5,
            width: self.width / 2,
            height: self.height / 2,
            depth_scale: self.depth_scale,
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula. Small-angle branch below 1e-8 rad.
pub fn so3_exp(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let wx = skew(w);
    if theta < 1e-8 {
        return Mat3::identity() + wx + 0.5 * wx * wx;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * wx + b * wx * wx
}

/// Principal-branch rotation logarithm.
pub fn so3_log(rot: &Mat3) -> Vec3 {
    let trace = rot.trace();
    let cos_theta = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let vee = Vec3::new(
        rot[(2, 1)] - rot[(1, 2)],
        rot[(0, 2)] - rot[(2, 0)],
        rot[(1, 0)] - rot[(0, 1)],
    );
    if theta < 1e-8 {
        return 0.5 * vee;
    }
    if theta > std::f64::consts::PI - 1e-6 {
        // Near pi the antisymmetric part vanishes; recover the axis from the
        // symmetric part R + I instead.
        let m = rot + Mat3::identity();
        let col = (0..3)
            .max_by(|&a, &b| {
                m.column(a)
                    .norm_squared()
                    .partial_cmp(&m.column(b).norm_squared())
                    .unwrap()
            })
            .unwrap();
        let axis = m.column(col).normalize();
        // Fix the sign using the antisymmetric part where it is nonzero.
        let axis = if vee.dot(&axis) < 0.0 { -axis } else { axis };
        return theta * axis;
    }
    (theta / (2.0 * theta.sin())) * vee
}

fn so3_left_jacobian_v(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let wx = skew(w);
    if theta < 1e-6 {
        return Mat3::identity() + 0.5 * wx + (1.0 / 6.0) * wx * wx;
    }
    let t2 = theta * theta;
    let b = (1.0 - theta.cos()) / t2;
    let c = (theta - theta.sin()) / (t2 * theta);
    Mat3::identity() + b * wx + c * wx * wx
}

fn so3_left_jacobian_v_inv(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let wx = skew(w);
    if theta < 1e-4 {
        return Mat3::identity() - 0.5 * wx + (1.0 / 12.0) * wx * wx;
    }
    let half = 0.5 * theta;
    let cot = half.cos() / half.sin();
    let coeff = (1.0 - half * cot) / (theta * theta);
    Mat3::identity() - 0.5 * wx + coeff * wx * wx
}

/// Closed-form exponential map se(3) -> SE(3).
pub fn se3_exp(xi: &Twist) -> Pose {
    let rotation = so3_exp(&xi.w);
    let translation = so3_left_jacobian_v(&xi.w) * xi.v;
    Pose {
        rotation,
        translation,
    }
}

/// Inverse of [`se3_exp`] on the principal branch.
pub fn se3_log(pose: &Pose) -> Twist {
    let w = so3_log(&pose.rotation);
    let v = so3_left_jacobian_v_inv(&w) * pose.translation;
    Twist { v, w }
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project(k: &Intrinsics, p: &Vec3) -> Result<Vec2, GeometryError> {
    if p.z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(p.z));
    }
    Ok(Vec2::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

/// Lifts a pixel with depth `d` (metres) back to a camera-frame point.
pub fn backproject(k: &Intrinsics, u: &Vec2, d: f64) -> Result<Vec3, GeometryError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(GeometryError::InvalidDepth(d));
    }
    Ok(Vec3::new(
        (u.x - k.cx) * d / k.fx,
        (u.y - k.cy) * d / k.fy,
        d,
    ))
}

/// Rotation angle (radians) and translation norm (metres) between two poses.
pub fn pose_delta(a: &Pose, b: &Pose) -> (f64, f64) {
    let rel = a.inverse().compose(b);
    let cos_theta = ((rel.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    (cos_theta.acos(), rel.translation.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_twist(rng: &mut StdRng, max_angle: f64) -> Twist {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.gen_range(0.0..max_angle);
        Twist {
            v: Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
            w: axis * angle,
        }
    }

    fn random_pose(rng: &mut StdRng) -> Pose {
        se3_exp(&random_twist(rng, 3.0))
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let p = se3_exp(&Twist::zero());
        assert_relative_eq!(p.rotation, Mat3::identity(), epsilon = 1e-15);
        assert_relative_eq!(p.translation, Vec3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let xi = Twist::new(Vec3::zeros(), Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let p = se3_exp(&xi);
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(p.rotation, expected, epsilon = 1e-12);
        assert_relative_eq!(p.translation, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn log_of_identity_is_zero() {
        let xi = se3_log(&Pose::identity());
        assert!(xi.norm() < 1e-15);
    }

    #[test]
    fn log_of_pure_translation() {
        let p = Pose::new(Mat3::identity(), Vec3::new(1.0, 2.0, 3.0));
        let xi = se3_log(&p);
        assert_relative_eq!(xi.v, Vec3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
        assert!(xi.w.norm() < 1e-12);
    }

    #[test]
    fn exp_log_roundtrip_random_twists() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let xi = random_twist(&mut rng, std::f64::consts::PI - 1e-3);
            let back = se3_log(&se3_exp(&xi));
            assert!(
                (back.to_vector() - xi.to_vector()).norm() < 1e-9,
                "roundtrip failed for {:?}",
                xi
            );
        }
    }

    #[test]
    fn exp_produces_valid_rotations() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let p = random_pose(&mut rng);
            assert!(p.orthonormality_error() < 1e-9);
            assert!((p.rotation.determinant() - 1.0).abs() < 1e-9);
            let round = p.inverse().compose(&p);
            assert!(round.orthonormality_error() < 1e-9);
            assert!(round.translation.norm() < 1e-9);
            assert_relative_eq!(round.rotation, Mat3::identity(), epsilon = 1e-9);
        }
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let left = (a * b) * c;
            let right = a * (b * c);
            assert_relative_eq!(left.rotation, right.rotation, epsilon = 1e-9);
            assert_relative_eq!(left.translation, right.translation, epsilon = 1e-9);
        }
    }

    #[test]
    fn project_optical_axis_hits_principal_point() {
        let k = Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480);
        let uv = project(&k, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(uv, Vec2::new(319.5, 239.5), epsilon = 1e-12);
    }

    #[test]
    fn project_direct_arithmetic() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100);
        let uv = project(&k, &Vec3::new(1.0, 1.0, 2.0)).unwrap();
        assert_relative_eq!(uv, Vec2::new(100.0, 100.0), epsilon = 1e-12);
    }

    #[test]
    fn project_rejects_non_positive_depth() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100);
        assert!(project(&k, &Vec3::new(0.0, 0.0, 0.0)).is_err());
        assert!(project(&k, &Vec3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn backproject_principal_point() {
        let k = Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480);
        let p = backproject(&k, &Vec2::new(319.5, 239.5), 2.0).unwrap();
        assert_relative_eq!(p, Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn backproject_rejects_zero_depth() {
        let k = Intrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480);
        assert!(matches!(
            backproject(&k, &Vec2::new(10.0, 10.0), 0.0),
            Err(GeometryError::InvalidDepth(_))
        ));
    }

    #[test]
    fn project_backproject_roundtrip() {
        let k = Intrinsics::new(525.0, 500.0, 319.5, 239.5, 640, 480);
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..500 {
            let p = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.1..5.0),
            );
            let uv = project(&k, &p).unwrap();
            let back = backproject(&k, &uv, p.z).unwrap();
            assert!((back - p).norm() < 1e-12);
            // And pixel-space roundtrip on valid pixels.
            let reuv = project(&k, &back).unwrap();
            assert!((reuv - uv).norm() < 1e-10);
        }
    }

    #[test]
    fn pose_delta_identical_poses() {
        let p = Pose::identity();
        let (rot, trans) = pose_delta(&p, &p);
        assert_eq!(rot, 0.0);
        assert_eq!(trans, 0.0);
    }

    #[test]
    fn pose_delta_pure_shift() {
        let a = Pose::identity();
        let b = Pose::new(Mat3::identity(), Vec3::new(0.5, 0.0, 0.0));
        let (rot, trans) = pose_delta(&a, &b);
        assert_relative_eq!(rot, 0.0, epsilon = 1e-12);
        assert_relative_eq!(trans, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pose_delta_matches_quaternion_oracle() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..500 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let (rot, trans) = pose_delta(&a, &b);

            // Independent oracle via unit quaternions.
            let qa = UnitQuaternion::from_matrix(&a.rotation);
            let qb = UnitQuaternion::from_matrix(&b.rotation);
            let rot_oracle = qa.rotation_to(&qb).angle();
            let trans_oracle = (a.rotation.transpose() * (b.translation - a.translation)).norm();

            assert_relative_eq!(rot, rot_oracle, epsilon = 1e-9);
            assert_relative_eq!(trans, trans_oracle, epsilon = 1e-9);
        }
    }
}
