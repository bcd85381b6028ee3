//! Analytic shear-field synthesis.
//!
//! The membrane shear direction at a grid point combines the plane
//! reaction force transmitted through the grasp with a torsion vortex
//! around the sensor normal driven by the contact lever arm:
//!
//!   raw(g) = P_tangential[ F̂ + κ_t · τ_n · (ẑ_s × r_g) ]
//!
//! where τ_n = ((p_c − grasp center) × F̂) · ẑ_s. Raw vectors above the
//! magnitude threshold are normalized to unit length, others zeroed.

use geom::Vec3;

use crate::sensor::{SensorFrame, SensorGrid, SensorId, ShearField};
use crate::sim::scene::PressResult;

/// Torsion coupling, 1/m.
pub const KAPPA_T: f64 = 25.0;

/// Raw (unnormalized) shear vector at one metric grid point.
///
/// Exposed separately so tests can evaluate the closed form point by
/// point against the assembled field.
pub fn raw_shear_at(
    frame: &SensorFrame,
    sx: f64,
    sy: f64,
    force_dir: Vec3,
    torsion_n: f64,
    kappa: f64,
) -> [f64; 2] {
    let r_g = frame.axis_x * sx + frame.axis_y * sy;
    let vortex = frame.normal.cross(&r_g) * (kappa * torsion_n);
    let total = force_dir + vortex;
    // Components along the in-plane axes are the tangential projection.
    [total.dot(&frame.axis_x), total.dot(&frame.axis_y)]
}

/// Synthesizes the full 600-point shear field for one sensor.
///
/// `grasp_center` is the EE origin in world coordinates; `pad_offset` is
/// the membrane distance from the EE origin along ±y.
pub fn synthesize_shear(
    press: &PressResult,
    sensor: SensorId,
    pad_offset: f64,
) -> ShearField {
    let frame_w = SensorFrame::in_ee(sensor, pad_offset).to_world(&press.ee_pose);
    let grasp_center = press.ee_pose.translation.vector;
    let lever = press.contact_centroid - grasp_center;
    let torsion_n = lever.cross(&press.reaction_dir).dot(&frame_w.normal);

    let raw: Vec<[f64; 2]> = SensorGrid::metric_points()
        .into_iter()
        .map(|(sx, sy)| raw_shear_at(&frame_w, sx, sy, press.reaction_dir, torsion_n, KAPPA_T))
        .collect();
    ShearField::from_raw(sensor, raw)
}

/// Convenience: both sensors for one resolved press.
pub fn synthesize_both(press: &PressResult, pad_offset: f64) -> [ShearField; 2] {
    [
        synthesize_shear(press, SensorId::Left, pad_offset),
        synthesize_shear(press, SensorId::Right, pad_offset),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Translation3, UnitQuaternion};

    fn upright_press(contact: Vec3) -> PressResult {
        // EE directly above the origin with the standard flip (tool axis
        // down): x_ee = x_w, y_ee = −y_w, z_ee = −z_w.
        let ee = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, 0.10),
            UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), std::f64::consts::PI),
        );
        PressResult {
            ee_pose: ee,
            object_pose: ee,
            contact_centroid: contact,
            reaction_dir: Vec3::new(0.0, 0.0, 1.0),
            penetration: 0.0015,
        }
    }

    #[test]
    fn torsion_free_press_gives_a_parallel_field() {
        // Contact directly below the grasp center: lever ∥ F ⇒ τ_n = 0.
        let press = upright_press(Vec3::new(0.0, 0.0, 0.0));
        let field = synthesize_shear(&press, SensorId::Left, 0.02);
        assert!(field.is_unit_or_zero());
        // All vectors equal the normalized tangential projection of F.
        let frame = SensorFrame::in_ee(SensorId::Left, 0.02).to_world(&press.ee_pose);
        let f_tan = [
            press.reaction_dir.dot(&frame.axis_x),
            press.reaction_dir.dot(&frame.axis_y),
        ];
        let mag = (f_tan[0] * f_tan[0] + f_tan[1] * f_tan[1]).sqrt();
        assert!(mag > 1e-8, "upright press must have tangential force on the pad");
        let expect = [f_tan[0] / mag, f_tan[1] / mag];
        for v in &field.vectors {
            assert!((v[0] - expect[0]).abs() < 1e-9);
            assert!((v[1] - expect[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_torsion_gives_a_vortex() {
        // Force along the sensor normal has no tangential part; a nonzero
        // τ_n then makes every vector perpendicular to r_g.
        let frame = SensorFrame::in_ee(SensorId::Right, 0.02);
        let force = frame.normal; // purely normal
        for (sx, sy) in SensorGrid::metric_points().into_iter().step_by(37) {
            if sx == 0.0 && sy == 0.0 {
                continue;
            }
            let raw = raw_shear_at(&frame, sx, sy, force, 0.5, KAPPA_T);
            // r_g in-plane coordinates are (sx, sy); perpendicularity in
            // the plane means u·sx + v·sy = 0.
            let dot = raw[0] * sx + raw[1] * sy;
            assert!(dot.abs() < 1e-12, "not a vortex at ({}, {})", sx, sy);
        }
    }

    #[test]
    fn mixed_case_matches_per_point_closed_form() {
        let press = upright_press(Vec3::new(0.01, -0.02, 0.0));
        let pad = 0.019;
        for sensor in SensorId::BOTH {
            let field = synthesize_shear(&press, sensor, pad);
            let frame = SensorFrame::in_ee(sensor, pad).to_world(&press.ee_pose);
            let lever = press.contact_centroid - press.ee_pose.translation.vector;
            let tau = lever.cross(&press.reaction_dir).dot(&frame.normal);
            for (k, (sx, sy)) in SensorGrid::metric_points().into_iter().enumerate() {
                // Independent recomputation of the formula.
                let r_g = frame.axis_x * sx + frame.axis_y * sy;
                let total = press.reaction_dir + frame.normal.cross(&r_g) * (KAPPA_T * tau);
                let mut u = total.dot(&frame.axis_x);
                let mut v = total.dot(&frame.axis_y);
                let mag = (u * u + v * v).sqrt();
                if mag > crate::sensor::SHEAR_NORM_THRESHOLD {
                    u /= mag;
                    v /= mag;
                } else {
                    u = 0.0;
                    v = 0.0;
                }
                assert!((field.vectors[k][0] - u).abs() < 1e-12);
                assert!((field.vectors[k][1] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn both_pads_read_the_same_rigid_material_motion() {
        // The vortex term is (τ·ẑ_s)(ẑ_s × r_g): flipping the pad normal
        // flips both factors, so a rigid tool shears both gels with the
        // same world-frame field. The synthesized pads must agree exactly.
        let press = upright_press(Vec3::new(0.015, 0.0, 0.0));
        let [l, r] = synthesize_both(&press, 0.02);
        for (a, b) in l.vectors.iter().zip(&r.vectors) {
            assert!((a[0] - b[0]).abs() < 1e-12);
            assert!((a[1] - b[1]).abs() < 1e-12);
        }
        // And the torsion term measurably shifts the field relative to a
        // torsion-free press through the grasp axis.
        let centered = upright_press(Vec3::new(0.0, 0.0, 0.0));
        let [l0, _] = synthesize_both(&centered, 0.02);
        let max_shift = l
            .vectors
            .iter()
            .zip(&l0.vectors)
            .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs())
            .fold(0.0f64, f64::max);
        assert!(max_shift > 1e-4, "torsion had no effect: {}", max_shift);
    }
}
