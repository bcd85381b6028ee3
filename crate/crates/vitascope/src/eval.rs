//! Scene evaluation, metric aggregation, and ablation comparisons.

use std::collections::BTreeMap;
use std::time::Instant;

use geom::{chamfer_distance, Frame, PointCloud, ToolKind, TriangleMesh};
use rayon::prelude::*;

use crate::error::{Result, VitaError};
use crate::fields::model::FieldModel;
use crate::infer::contact_pred::{predict_contact_patch, ContactPredConfig, SurfaceSource};
use crate::infer::pose_est::{estimate_pose, PoseConfig, PoseSource};
use crate::infer::trial::{infer_trial_code, TrialConfig};
use crate::infer::Observation;
use crate::pose::{pose_errors, InHandPose};
use crate::sim::record::InteractionRecord;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub pose: PoseConfig,
    pub trial: TrialConfig,
    pub contact: ContactPredConfig,
    /// Worker bound for scene fan-out; 0 uses the global pool as-is.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pose: PoseConfig::default(),
            trial: TrialConfig::default(),
            contact: ContactPredConfig::default(),
            jobs: 0,
        }
    }
}

/// Wall-clock per inference stage, milliseconds. Logged to a separate
/// timing sidecar; never part of deterministic reports.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub pose_ms: f64,
    pub trial_ms: f64,
    pub contact_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SceneResult {
    pub scene_id: usize,
    pub tool: ToolKind,
    pub xi_star: InHandPose,
    pub xi_hat: InHandPose,
    pub trans_err_mm: f64,
    pub rot_err_deg: f64,
    pub pose_residual: f64,
    pub pose_steps: usize,
    pub pose_restarts: usize,
    pub trial_initial_residual: f64,
    pub trial_final_residual: f64,
    pub trial_steps: usize,
    pub contact_cd: f64,
    pub contact_points: usize,
    pub contact_forward_passes: usize,
    pub max_sdf_magnitude: f64,
    pub timings: StageTimings,
}

impl SceneResult {
    /// Machine-parsable record, deterministic (no timing).
    pub fn to_kv(&self) -> String {
        format!(
            "scene={} tool={} xi_star={:.6},{:.6},{:.6} xi_hat={:.6},{:.6},{:.6} \
             trans_err_mm={:.4} rot_err_deg={:.4} pose_residual={:.6} pose_steps={} \
             pose_restarts={} trial_residual_init={:.6} trial_residual_final={:.6} \
             trial_steps={} contact_cd={:.6} contact_points={} contact_forward_passes={}",
            self.scene_id,
            self.tool,
            self.xi_star.x,
            self.xi_star.z,
            self.xi_star.theta,
            self.xi_hat.x,
            self.xi_hat.z,
            self.xi_hat.theta,
            self.trans_err_mm,
            self.rot_err_deg,
            self.pose_residual,
            self.pose_steps,
            self.pose_restarts,
            self.trial_initial_residual,
            self.trial_final_residual,
            self.trial_steps,
            self.contact_cd,
            self.contact_points,
            self.contact_forward_passes,
        )
    }
}

/// Ground-truth contact patch of a record, canonical frame.
pub fn gt_contact_patch(rec: &InteractionRecord) -> PointCloud {
    PointCloud::new(
        rec.queries
            .iter()
            .filter(|q| q.c_star == Some(true))
            .map(|q| q.q)
            .collect(),
        Frame::Canonical,
    )
}

/// Runs the three inference stages on one record and scores them.
pub fn evaluate_scene(
    model: &FieldModel<f32>,
    rec: &InteractionRecord,
    scene_id: usize,
    recon_meshes: &BTreeMap<ToolKind, TriangleMesh>,
    cfg: &EvalConfig,
) -> Result<SceneResult> {
    Ok(evaluate_scene_with_patch(model, rec, scene_id, recon_meshes, cfg)?.0)
}

/// As [`evaluate_scene`] but also returns the predicted patch (for PLY
/// export).
pub fn evaluate_scene_with_patch(
    model: &FieldModel<f32>,
    rec: &InteractionRecord,
    scene_id: usize,
    recon_meshes: &BTreeMap<ToolKind, TriangleMesh>,
    cfg: &EvalConfig,
) -> Result<(SceneResult, crate::infer::contact_pred::ContactPatch)> {
    let obs = Observation::from_record(rec);

    let t0 = Instant::now();
    let pose = estimate_pose(&model.object, rec.tool, &obs, &cfg.pose)?;
    let pose_ms = t0.elapsed().as_secs_f64() * 1000.0;

    let t1 = Instant::now();
    let trial = infer_trial_code(&model.tactile, pose.xi, &obs.shear, &cfg.trial)?;
    let trial_ms = t1.elapsed().as_secs_f64() * 1000.0;

    let t2 = Instant::now();
    let surface_mesh = recon_meshes.get(&rec.tool);
    let patch = predict_contact_patch(
        model,
        rec.tool,
        &obs.ee_pose,
        pose.xi,
        &trial.psi,
        surface_mesh,
        &cfg.contact,
    )?;
    let contact_ms = t2.elapsed().as_secs_f64() * 1000.0;

    let gt_patch = gt_contact_patch(rec);
    let predicted = PointCloud::new(patch.canonical.clone(), Frame::Canonical);
    let contact_cd = chamfer_distance(&predicted, &gt_patch)?;
    let (trans_err_mm, rot_err_deg) = pose_errors(pose.xi, rec.xi_star);

    let result = SceneResult {
        scene_id,
        tool: rec.tool,
        xi_star: rec.xi_star,
        xi_hat: pose.xi,
        trans_err_mm,
        rot_err_deg,
        pose_residual: pose.residual,
        pose_steps: pose.steps,
        pose_restarts: pose.restarts_used,
        trial_initial_residual: trial.initial_residual(),
        trial_final_residual: trial.final_residual(),
        trial_steps: trial.steps,
        contact_cd,
        contact_points: patch.world.len(),
        contact_forward_passes: patch.forward_passes,
        max_sdf_magnitude: patch
            .sdf_magnitudes
            .iter()
            .fold(0.0f64, |a, &b| a.max(b)),
        timings: StageTimings {
            pose_ms,
            trial_ms,
            contact_ms,
        },
    };
    Ok((result, patch))
}

/// Canonical unit-sphere mesh: the self-contained fallback surface when
/// an untrained field has no usable zero level set.
pub fn fallback_sphere_mesh() -> TriangleMesh {
    geom::marching::marching_cubes_scalar(
        &|p| p.norm() - 0.8,
        24,
        geom::marching::GridBounds::cube(1.0),
    )
}

/// Builds the reconstruction meshes once (shared across scenes) for the
/// configured surface source. A field without a level set falls back to
/// a canonical sphere so evaluation of untrained models stays finite.
pub fn reconstruction_meshes(
    model: &FieldModel<f32>,
    tools: &[ToolKind],
    cfg: &ContactPredConfig,
) -> Result<BTreeMap<ToolKind, TriangleMesh>> {
    let mut out = BTreeMap::new();
    for &tool in tools {
        let mesh = match cfg.source {
            SurfaceSource::Learned => model
                .object
                .reconstruct_mesh(tool, cfg.recon_resolution)
                .unwrap_or_else(|_| fallback_sphere_mesh()),
            SurfaceSource::GroundTruth => {
                let norm = model.object.norm_for(tool)?;
                geom::build_tool_mesh(tool).map_vertices(|v| norm.to_canonical(v))
            }
        };
        out.insert(tool, mesh);
    }
    Ok(out)
}

/// Evaluates all records; results are ordered by scene id regardless of
/// the worker fan-out.
pub fn evaluate_dataset(
    model: &FieldModel<f32>,
    records: &[InteractionRecord],
    cfg: &EvalConfig,
) -> Result<Vec<SceneResult>> {
    let tools: Vec<ToolKind> = {
        let mut t: Vec<ToolKind> = records.iter().map(|r| r.tool).collect();
        t.sort();
        t.dedup();
        t
    };
    let meshes = reconstruction_meshes(model, &tools, &cfg.contact)?;

    let run = || -> Vec<Result<SceneResult>> {
        records
            .par_iter()
            .enumerate()
            .map(|(i, rec)| evaluate_scene(model, rec, i, &meshes, cfg))
            .collect()
    };
    let results: Vec<Result<SceneResult>> = if cfg.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| VitaError::Inference {
                detail: format!("worker pool: {}", e),
            })?;
        pool.install(run)
    } else {
        run()
    };

    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    out.sort_by_key(|r| r.scene_id);
    Ok(out)
}

/// Per-tool metric row of the summary report.
#[derive(Debug, Clone)]
pub struct ToolMetrics {
    pub tool: String,
    pub recon_cd: f64,
    pub trans_err_mm: f64,
    pub rot_err_deg: f64,
    pub contact_cd: f64,
    pub scenes: usize,
}

/// The Tables I/II-style summary: per-tool rows plus their arithmetic
/// mean.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rows: Vec<ToolMetrics>,
    pub mean: ToolMetrics,
}

/// Reconstruction Chamfer distance (normalized geometries) for one tool.
pub fn reconstruction_cd(
    model: &FieldModel<f32>,
    tool: ToolKind,
    resolution: usize,
    samples: usize,
) -> Result<f64> {
    let recon = model
        .object
        .reconstruct_mesh(tool, resolution)
        .unwrap_or_else(|_| fallback_sphere_mesh());
    let norm = model.object.norm_for(tool)?;
    let gt = geom::build_tool_mesh(tool).map_vertices(|v| norm.to_canonical(v));
    let mut rng = ndiff::rng::stream(0xcd, &[tool.index() as u64]);
    let a = geom::sample_surface_points(&recon, samples, &mut rng);
    let b = geom::sample_surface_points(&gt, samples, &mut rng);
    Ok(chamfer_distance(
        &PointCloud::new(a, Frame::Canonical),
        &PointCloud::new(b, Frame::Canonical),
    )?)
}

pub fn build_report(
    model: &FieldModel<f32>,
    results: &[SceneResult],
    recon_resolution: usize,
) -> Result<MetricsReport> {
    let mut tools: Vec<ToolKind> = results.iter().map(|r| r.tool).collect();
    tools.sort();
    tools.dedup();

    let mut rows = Vec::with_capacity(tools.len());
    for tool in tools {
        let scenes: Vec<&SceneResult> = results.iter().filter(|r| r.tool == tool).collect();
        let n = scenes.len() as f64;
        rows.push(ToolMetrics {
            tool: tool.name().to_string(),
            recon_cd: reconstruction_cd(model, tool, recon_resolution, 8192)?,
            trans_err_mm: scenes.iter().map(|r| r.trans_err_mm).sum::<f64>() / n,
            rot_err_deg: scenes.iter().map(|r| r.rot_err_deg).sum::<f64>() / n,
            contact_cd: scenes.iter().map(|r| r.contact_cd).sum::<f64>() / n,
            scenes: scenes.len(),
        });
    }
    let k = rows.len() as f64;
    let mean = ToolMetrics {
        tool: "mean".to_string(),
        recon_cd: rows.iter().map(|r| r.recon_cd).sum::<f64>() / k,
        trans_err_mm: rows.iter().map(|r| r.trans_err_mm).sum::<f64>() / k,
        rot_err_deg: rows.iter().map(|r| r.rot_err_deg).sum::<f64>() / k,
        contact_cd: rows.iter().map(|r| r.contact_cd).sum::<f64>() / k,
        scenes: rows.iter().map(|r| r.scenes).sum(),
    };
    Ok(MetricsReport { rows, mean })
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>12} {:>14} {:>13} {:>14} {:>7}\n",
            "tool", "recon_cd_m2", "trans_err_mm", "rot_err_deg", "contact_cd_m2", "scenes"
        ));
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            out.push_str(&format!(
                "{:<12} {:>12.5} {:>14.3} {:>13.3} {:>14.5} {:>7}\n",
                r.tool, r.recon_cd, r.trans_err_mm, r.rot_err_deg, r.contact_cd, r.scenes
            ));
        }
        out
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            out.push_str(&format!(
                "tool={} recon_cd={:.6} trans_err_mm={:.4} rot_err_deg={:.4} contact_cd={:.6} scenes={}\n",
                r.tool, r.recon_cd, r.trans_err_mm, r.rot_err_deg, r.contact_cd, r.scenes
            ));
        }
        out
    }
}

/// Ablation table row: a named variant and its mean metrics.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub present: bool,
    pub mean_contact_cd: f64,
    pub mean_trans_err_mm: f64,
    pub mean_rot_err_deg: f64,
}

/// Evaluates the ablation axes: pose-source variants reuse the base
/// model; `wo acts` / `wo obj pose` take retrained variant models when
/// available and are listed as absent otherwise.
pub fn ablation_suite(
    base: &FieldModel<f32>,
    wo_acts: Option<&FieldModel<f32>>,
    wo_obj_pose: Option<&FieldModel<f32>>,
    records: &[InteractionRecord],
    cfg: &EvalConfig,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    let mut run = |name: &str, model: Option<&FieldModel<f32>>, source: PoseSource| -> Result<()> {
        match model {
            None => rows.push(AblationRow {
                name: name.to_string(),
                present: false,
                mean_contact_cd: f64::NAN,
                mean_trans_err_mm: f64::NAN,
                mean_rot_err_deg: f64::NAN,
            }),
            Some(m) => {
                let mut c = cfg.clone();
                c.pose.source = source;
                let results = evaluate_dataset(m, records, &c)?;
                let n = results.len() as f64;
                rows.push(AblationRow {
                    name: name.to_string(),
                    present: true,
                    mean_contact_cd: results.iter().map(|r| r.contact_cd).sum::<f64>() / n,
                    mean_trans_err_mm: results.iter().map(|r| r.trans_err_mm).sum::<f64>() / n,
                    mean_rot_err_deg: results.iter().map(|r| r.rot_err_deg).sum::<f64>() / n,
                });
            }
        }
        Ok(())
    };

    run("full", Some(base), PoseSource::Both)?;
    run("v_pcd", Some(base), PoseSource::VisionOnly)?;
    run("t_pcd", Some(base), PoseSource::TactileOnly)?;
    run("wo_acts", wo_acts, PoseSource::Both)?;
    run("wo_obj_pose", wo_obj_pose, PoseSource::Both)?;
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>14} {:>14} {:>13}\n",
        "variant", "contact_cd_m2", "trans_err_mm", "rot_err_deg"
    ));
    for r in rows {
        if r.present {
            out.push_str(&format!(
                "{:<12} {:>14.5} {:>14.3} {:>13.3}\n",
                r.name, r.mean_contact_cd, r.mean_trans_err_mm, r.mean_rot_err_deg
            ));
        } else {
            out.push_str(&format!("{:<12} {:>14} {:>14} {:>13}\n", r.name, "absent", "-", "-"));
        }
    }
    out
}
