//! Penetration-threshold contact labeling on surface samples.

use geom::{Band, NormalizationInfo, QuerySample, TriangleMesh, Vec3};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Result, VitaError};
use crate::pose::RigidTransform;

/// Labels `n_points` on-surface samples with soft-contact flags: a point
/// is in contact when its world plane distance is at most `threshold`.
///
/// Sampling is balance-biased: positives and negatives are drawn from a
/// larger pool toward a 50/50 split, limited by availability; when the
/// positive pool is thin, positives are oversampled with replacement so
/// at least 10% of labels are positive whenever any contact exists.
/// Returned query points are in the canonical frame.
pub fn label_contacts(
    mesh: &TriangleMesh,
    object_pose: &RigidTransform,
    norm: &NormalizationInfo,
    threshold: f64,
    n_points: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<QuerySample>> {
    let pool_size = (n_points * 4).max(2000);
    let pool = geom::sample::sample_surface_points_with_normals(mesh, pool_size, rng);

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (p, n) in pool {
        let w = crate::pose::apply(object_pose, p);
        if w.z <= threshold {
            positives.push((p, n));
        } else {
            negatives.push((p, n));
        }
    }
    if positives.is_empty() {
        return Err(VitaError::InconsistentScene {
            detail: "no contact points found under the penetration threshold".into(),
        });
    }

    let want_pos = (n_points / 2).min(positives.len()).max(n_points / 10);
    let mut picked: Vec<(Vec3, Vec3, bool)> = Vec::with_capacity(n_points);
    for k in 0..want_pos {
        // Oversample with replacement only when the pool is short.
        let (p, n) = positives[k % positives.len()];
        picked.push((p, n, true));
    }
    let want_neg = n_points - picked.len();
    for k in 0..want_neg {
        let (p, n) = negatives[k % negatives.len().max(1)];
        picked.push((p, n, false));
    }

    // Shuffle deterministically so labels are not ordered.
    for i in (1..picked.len()).rev() {
        let j = rng.random_range(0..=i);
        picked.swap(i, j);
    }

    Ok(picked
        .into_iter()
        .map(|(p, n, c)| QuerySample {
            q: norm.to_canonical(p),
            s_star: 0.0,
            n_star: Some(n),
            c_star: Some(c),
            band: Band::On,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::InHandPose;
    use crate::sim::scene::{resolve_press, sample_interaction};
    use crate::sim::PENETRATION_DEPTH;
    use geom::{build_tool_mesh, normalize_to_unit_sphere, ToolKind};

    fn rng(tag: u64) -> ChaCha12Rng {
        ndiff::rng::stream(7, &[tag])
    }

    fn setup(tool: ToolKind, vertical: bool, tag: u64) -> (geom::TriangleMesh, NormalizationInfo, RigidTransform) {
        let mesh = build_tool_mesh(tool);
        let (_, norm) = normalize_to_unit_sphere(&mesh).unwrap();
        let mut r = rng(tag);
        let mut scene = sample_interaction(tool, &mut r);
        if vertical {
            scene.xi_star = InHandPose::IDENTITY;
            scene.tilt = 0.0;
            scene.yaw = 0.0;
        }
        let pts = geom::sample_surface_points(&mesh, 2000, &mut r);
        let press = resolve_press(&mesh, &scene, &pts, PENETRATION_DEPTH).unwrap();
        (mesh, norm, press.object_pose)
    }

    #[test]
    fn all_positives_satisfy_the_threshold_exactly() {
        let (mesh, norm, pose) = setup(ToolKind::Hex, false, 1);
        let samples =
            label_contacts(&mesh, &pose, &norm, PENETRATION_DEPTH, 1000, &mut rng(2)).unwrap();
        assert_eq!(samples.len(), 1000);
        for s in &samples {
            let p_metric = norm.to_metric(s.q);
            let w = crate::pose::apply(&pose, p_metric);
            if s.c_star.unwrap() {
                assert!(w.z <= PENETRATION_DEPTH + 1e-9);
            } else {
                assert!(w.z > PENETRATION_DEPTH - 1e-9);
            }
        }
        let pos = samples.iter().filter(|s| s.c_star.unwrap()).count();
        assert!(pos >= 100, "only {} positives", pos);
    }

    #[test]
    fn rectangle_flat_press_covers_the_bottom_face() {
        let (mesh, norm, pose) = setup(ToolKind::Rectangle, true, 3);
        let samples =
            label_contacts(&mesh, &pose, &norm, PENETRATION_DEPTH, 1000, &mut rng(4)).unwrap();
        // Positives in the object frame lie on the tip face (+z object,
        // pressed downward into the table); they should span most of it.
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in samples.iter().filter(|s| s.c_star.unwrap()) {
            let p = norm.to_metric(s.q);
            xs.push(p.x);
            ys.push(p.y);
        }
        let span_x = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        let span_y = ys.iter().cloned().fold(f64::MIN, f64::max)
            - ys.iter().cloned().fold(f64::MAX, f64::min);
        // The face is 0.05 × 0.03; covered span area over half the face.
        assert!(span_x * span_y > 0.5 * 0.05 * 0.03, "{} x {}", span_x, span_y);
    }

    #[test]
    fn shrinking_threshold_shrinks_the_positive_set_toward_tangency() {
        let (mesh, norm, pose) = setup(ToolKind::Semisphere, true, 5);
        let wide =
            label_contacts(&mesh, &pose, &norm, PENETRATION_DEPTH, 1000, &mut rng(6)).unwrap();
        let narrow =
            label_contacts(&mesh, &pose, &norm, PENETRATION_DEPTH / 8.0, 1000, &mut rng(6))
                .unwrap();
        let spread = |samples: &[QuerySample]| {
            let pts: Vec<Vec3> = samples
                .iter()
                .filter(|s| s.c_star.unwrap())
                .map(|s| norm.to_metric(s.q))
                .collect();
            let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
            pts.iter().map(|p| (p - mean).norm()).sum::<f64>() / pts.len() as f64
        };
        assert!(spread(&narrow) < spread(&wide));
    }

    #[test]
    fn no_contact_is_an_inconsistent_scene() {
        let mesh = build_tool_mesh(ToolKind::Cylinder);
        let (_, norm) = normalize_to_unit_sphere(&mesh).unwrap();
        // Object floating far above the plane.
        let pose = nalgebra::Isometry3::from_parts(
            nalgebra::Translation3::new(0.0, 0.0, 0.5),
            nalgebra::UnitQuaternion::identity(),
        );
        let err = label_contacts(&mesh, &pose, &norm, PENETRATION_DEPTH, 100, &mut rng(8));
        assert!(err.is_err());
    }
}
