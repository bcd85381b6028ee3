//! Rigid transforms and the SE(2) in-hand pose parameterization.
//!
//! Frames: the world has the table plane at z = 0 with +z up. The
//! end-effector (EE) frame has +z along the tool axis toward the tip and
//! +y along the gripper closing axis (the two tactile pads sit at ±y).
//! The object frame is the tool's bbox-centered metric frame; canonical
//! coordinates are `scale * object` (unit-sphere normalized).

use geom::Vec3;
use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};

pub type RigidTransform = Isometry3<f64>;

/// SE(2) in-hand pose: translation (x, z) in the EE x–z plane and
/// rotation θ about EE y, all relative to the nominal grasp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InHandPose {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
}

impl InHandPose {
    pub const IDENTITY: InHandPose = InHandPose {
        x: 0.0,
        z: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, z: f64, theta: f64) -> Self {
        Self { x, z, theta }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.z, self.theta]
    }

    /// The object-frame→EE-frame transform this pose encodes.
    pub fn to_ee_transform(self) -> RigidTransform {
        let rot = UnitQuaternion::from_axis_angle(&nalgebra::Vector3::y_axis(), self.theta);
        Isometry3::from_parts(Translation3::new(self.x, 0.0, self.z), rot)
    }

    /// Object-frame→world transform given the EE pose.
    pub fn to_world_transform(self, ee: &RigidTransform) -> RigidTransform {
        ee * self.to_ee_transform()
    }
}

/// Projects a relative SE(3) pose onto the SE(2) in-hand parameters:
/// keeps the x and z translations and the y-axis twist of the rotation,
/// zeroing everything else.
pub fn project_se2(ee: &RigidTransform, prior_object_pose: &RigidTransform) -> InHandPose {
    let rel = ee.inverse() * prior_object_pose;
    let t = rel.translation.vector;
    let r = rel.rotation.to_rotation_matrix();
    let m = r.matrix();
    // Twist about +y: for R_y(θ), m[(0,2)] = sin θ, m[(2,0)] = −sin θ,
    // m[(0,0)] = m[(2,2)] = cos θ.
    let theta = (m[(0, 2)] - m[(2, 0)]).atan2(m[(0, 0)] + m[(2, 2)]);
    InHandPose::new(t.x, t.z, theta)
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    } else if x <= -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    }
    x
}

/// `(translation error in mm, rotation error in degrees)` between an
/// estimated and ground-truth in-hand pose.
pub fn pose_errors(estimate: InHandPose, truth: InHandPose) -> (f64, f64) {
    let trans_mm =
        ((estimate.x - truth.x).powi(2) + (estimate.z - truth.z).powi(2)).sqrt() * 1000.0;
    let rot_deg = wrap_angle(estimate.theta - truth.theta).abs().to_degrees();
    (trans_mm, rot_deg)
}

/// Serializes a rigid transform as 12 row-major values (rows of [R | t]).
pub fn transform_to_rows(t: &RigidTransform) -> [f64; 12] {
    let m = t.to_homogeneous();
    let mut out = [0.0; 12];
    for r in 0..3 {
        for c in 0..4 {
            out[r * 4 + c] = m[(r, c)];
        }
    }
    out
}

pub fn transform_from_rows(rows: &[f64; 12]) -> RigidTransform {
    let mut m = Matrix3::zeros();
    for r in 0..3 {
        for c in 0..3 {
            m[(r, c)] = rows[r * 4 + c];
        }
    }
    let rot = Rotation3::from_matrix(&m);
    Isometry3::from_parts(
        Translation3::new(rows[3], rows[7], rows[11]),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// Applies a transform to a point.
pub fn apply(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.transform_point(&nalgebra::Point3::from(p)).coords
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_relative_pose_projects_to_zero() {
        let ee = Isometry3::from_parts(
            Translation3::new(0.1, -0.2, 0.5),
            UnitQuaternion::from_euler_angles(0.3, -0.1, 0.7),
        );
        let xi = project_se2(&ee, &ee);
        assert!(xi.x.abs() < 1e-12 && xi.z.abs() < 1e-12 && xi.theta.abs() < 1e-12);
    }

    #[test]
    fn pure_y_rotation_projects_exactly() {
        let ee: RigidTransform = Isometry3::identity();
        let ten_deg = 10f64.to_radians();
        let prior = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&nalgebra::Vector3::y_axis(), ten_deg),
        );
        let xi = project_se2(&ee, &prior);
        assert!((xi.theta - ten_deg).abs() < 1e-12);
        assert!(xi.x.abs() < 1e-12 && xi.z.abs() < 1e-12);
    }

    #[test]
    fn out_of_plane_components_match_swing_twist_oracle() {
        // 5 mm y-translation and 8° x-rotation mixed with in-plane parts.
        let ee: RigidTransform = Isometry3::identity();
        let rot = UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), 8f64.to_radians())
            * UnitQuaternion::from_axis_angle(&nalgebra::Vector3::y_axis(), 12f64.to_radians());
        let prior = Isometry3::from_parts(Translation3::new(0.003, 0.005, -0.007), rot);
        let xi = project_se2(&ee, &prior);
        assert!((xi.x - 0.003).abs() < 1e-12);
        assert!((xi.z + 0.007).abs() < 1e-12);

        // Quaternion swing-twist decomposition about y as the oracle.
        let q = prior.rotation.quaternion();
        let (w, y) = (q.w, q.j);
        let norm = (w * w + y * y).sqrt();
        let twist_angle = 2.0 * (y / norm).atan2(w / norm);
        assert!(
            (wrap_angle(xi.theta - twist_angle)).abs() < 1e-9,
            "{} vs {}",
            xi.theta,
            twist_angle
        );
    }

    #[test]
    fn pose_error_wraps_angles() {
        let a = InHandPose::new(0.0, 0.0, 359f64.to_radians());
        let b = InHandPose::new(0.0, 0.0, 0.0);
        let (_, rot) = pose_errors(a, b);
        assert!((rot - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_pose_gives_zero_errors() {
        let xi = InHandPose::new(0.004, -0.002, 0.2);
        let (t, r) = pose_errors(xi, xi);
        assert_eq!((t, r), (0.0, 0.0));
    }

    #[test]
    fn random_pose_errors_match_formula() {
        let est = InHandPose::new(0.004, -0.006, 0.3);
        let gt = InHandPose::new(0.001, 0.002, -0.1);
        let (t, r) = pose_errors(est, gt);
        let want_t = ((0.003f64).powi(2) + (0.008f64).powi(2)).sqrt() * 1000.0;
        assert!((t - want_t).abs() < 1e-9);
        assert!((r - 0.4f64.to_degrees()).abs() < 1e-9);
    }

    #[test]
    fn transform_row_serialization_roundtrips() {
        let t = Isometry3::from_parts(
            Translation3::new(0.3, -0.1, 0.9),
            UnitQuaternion::from_euler_angles(0.2, 0.4, -0.6),
        );
        let rows = transform_to_rows(&t);
        let back = transform_from_rows(&rows);
        assert!((t.translation.vector - back.translation.vector).norm() < 1e-12);
        assert!(t.rotation.angle_to(&back.rotation) < 1e-12);
    }

    #[test]
    fn in_hand_pose_composes_with_ee() {
        let ee = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, 0.15),
            UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), std::f64::consts::PI),
        );
        let xi = InHandPose::new(0.005, -0.003, 0.1);
        let obj = xi.to_world_transform(&ee);
        // Recovering xi through the projection closes the loop.
        let back = project_se2(&ee, &obj);
        assert!((back.x - xi.x).abs() < 1e-12);
        assert!((back.z - xi.z).abs() < 1e-12);
        assert!((back.theta - xi.theta).abs() < 1e-12);
    }
}
