//! Point-to-point ICP baseline.

use geom::Vec3;
use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use rayon::prelude::*;

use crate::error::{Result, VitaError};
use crate::pose::{apply, RigidTransform};

#[derive(Debug, Clone)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop when the relative RMSE change drops below this.
    pub rel_rmse_tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            rel_rmse_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Transform applied to the model points: estimated model→world.
    pub transform: RigidTransform,
    pub rmse: f64,
    pub iterations: usize,
}

fn nearest(points: &[Vec3], q: Vec3) -> Vec3 {
    let mut best = points[0];
    let mut best_d = f64::INFINITY;
    for &p in points {
        let d = (p - q).norm_squared();
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    best
}

/// Least-squares rigid fit mapping `src` onto `dst` (Kabsch with SVD).
fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    let n = src.len() as f64;
    let cs: Vec3 = src.iter().sum::<Vec3>() / n;
    let cd: Vec3 = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    if svd.singular_values[1].abs() < 1e-12 {
        return Err(VitaError::Inference {
            detail: "degenerate correspondence covariance in ICP".into(),
        });
    }
    let mut r = vt.transpose() * u.transpose();
    if r.determinant() < 0.0 {
        let mut v = vt.transpose();
        v.column_mut(2).scale_mut(-1.0);
        r = v * u.transpose();
    }
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let t = cd - rot * cs;
    Ok(Isometry3::from_parts(Translation3::from(t), rot))
}

/// Iterates nearest-neighbor correspondence and rigid refitting until the
/// RMSE stops improving. `model` points are in the model frame; `init`
/// places them in the world; `observed` is the world-frame target cloud.
pub fn icp_baseline(
    model: &[Vec3],
    observed: &[Vec3],
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<IcpResult> {
    if model.is_empty() || observed.is_empty() {
        return Err(VitaError::Contract {
            op: "icp_baseline",
            detail: "empty input cloud".into(),
        });
    }
    let mut transform = *init;
    let mut last_rmse = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let placed: Vec<Vec3> = model.iter().map(|&p| apply(&transform, p)).collect();
        // For each observed point, its nearest placed model point.
        let pairs: Vec<(Vec3, Vec3)> = observed
            .par_iter()
            .map(|&o| {
                let m = nearest(&placed, o);
                (m, o)
            })
            .collect();
        let rmse = (pairs
            .iter()
            .map(|(m, o)| (m - o).norm_squared())
            .sum::<f64>()
            / pairs.len() as f64)
            .sqrt();

        if last_rmse.is_finite() && (last_rmse - rmse).abs() / last_rmse.max(1e-12) < cfg.rel_rmse_tol
        {
            last_rmse = rmse;
            break;
        }
        last_rmse = rmse;

        let (src, dst): (Vec<Vec3>, Vec<Vec3>) = pairs.into_iter().unzip();
        let delta = fit_rigid(&src, &dst)?;
        transform = delta * transform;
    }

    Ok(IcpResult {
        transform,
        rmse: last_rmse,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_cloud(n: usize) -> Vec<Vec3> {
        // Irregular surface samples of the rectangle tool; regular grids
        // alias the nearest-neighbor step into spurious local minima.
        let mesh = geom::build_tool_mesh(geom::ToolKind::Rectangle);
        let mut rng = ndiff::rng::stream(0x1c9, &[n as u64]);
        geom::sample_surface_points(&mesh, n, &mut rng)
    }

    #[test]
    fn identity_for_identical_clouds() {
        let cloud = box_cloud(200);
        let res = icp_baseline(&cloud, &cloud, &Isometry3::identity(), &IcpConfig::default())
            .unwrap();
        assert!(res.rmse < 1e-12);
        assert!(res.transform.translation.vector.norm() < 1e-10);
        assert!(res.transform.rotation.angle() < 1e-10);
    }

    #[test]
    fn recovers_a_small_perturbation() {
        let model = box_cloud(3000);
        let truth = Isometry3::from_parts(
            Translation3::new(0.005, -0.003, 0.002),
            UnitQuaternion::from_axis_angle(&nalgebra::Vector3::y_axis(), 5f64.to_radians()),
        );
        let observed: Vec<Vec3> = model.iter().map(|&p| apply(&truth, p)).collect();
        let res = icp_baseline(
            &model,
            &observed,
            &Isometry3::identity(),
            &IcpConfig::default(),
        )
        .unwrap();
        let dt = (res.transform.translation.vector - truth.translation.vector).norm();
        let dr = res.transform.rotation.angle_to(&truth.rotation);
        assert!(dt < 5e-4, "translation error {}", dt);
        assert!(dr.to_degrees() < 0.5, "rotation error {}", dr.to_degrees());
    }

    #[test]
    fn empty_inputs_are_contract_errors() {
        let cloud = box_cloud(50);
        assert!(icp_baseline(&[], &cloud, &Isometry3::identity(), &IcpConfig::default()).is_err());
        assert!(icp_baseline(&cloud, &[], &Isometry3::identity(), &IcpConfig::default()).is_err());
    }
}
