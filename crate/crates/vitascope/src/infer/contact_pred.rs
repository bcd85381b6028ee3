//! Contact-patch prediction: one forward pass of the contact field over
//! canonical surface samples at the inferred (ξ̂, ψ̂).

use geom::{Frame, PointCloud, ToolKind, TriangleMesh, Vec3};
use ndiff::DenseArray;

use crate::error::{Result, VitaError};
use crate::fields::contact::POOLED_LEN;
use crate::fields::model::FieldModel;
use crate::fields::tactile::TRIAL_CODE_PER_SENSOR;
use crate::pose::{InHandPose, RigidTransform};
use crate::sensor::{SensorGrid, SensorId};

/// Where the canonical surface samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceSource {
    /// Sampled from the learned reconstruction (self-contained).
    Learned,
    /// Sampled from the ground-truth mesh (ablation parity).
    GroundTruth,
}

impl std::str::FromStr for SurfaceSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "learned" => Ok(SurfaceSource::Learned),
            "gt" => Ok(SurfaceSource::GroundTruth),
            other => Err(format!("unknown surface source `{}`", other)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContactPredConfig {
    /// Contact classification threshold ε.
    pub epsilon: f64,
    /// Canonical surface samples evaluated.
    pub n_surface: usize,
    pub source: SurfaceSource,
    /// Marching resolution for the learned reconstruction.
    pub recon_resolution: usize,
    pub seed: u64,
}

impl Default for ContactPredConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            n_surface: 2000,
            source: SurfaceSource::Learned,
            recon_resolution: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContactPatch {
    /// Predicted contact points in the world frame.
    pub world: PointCloud,
    /// The same points in the canonical frame.
    pub canonical: Vec<Vec3>,
    /// Per-returned-point probability.
    pub probabilities: Vec<f64>,
    /// |SDF| of every returned point under the object module.
    pub sdf_magnitudes: Vec<f64>,
    /// Always 1: the stage is a single forward pass.
    pub forward_passes: usize,
}

/// Predicts the extrinsic contact patch.
///
/// Surface samples (from the learned reconstruction or the GT mesh) are
/// scored by the contact module conditioned on (ξ̂, ψ̂); points with
/// probability above ε are mapped to the world through X(ξ̂). When no
/// point clears ε the single most probable point is returned so callers
/// always get a finite patch.
pub fn predict_contact_patch(
    model: &FieldModel<f32>,
    tool: ToolKind,
    ee_pose: &RigidTransform,
    xi: InHandPose,
    psi: &DenseArray<f64>,
    surface_mesh: Option<&TriangleMesh>,
    cfg: &ContactPredConfig,
) -> Result<ContactPatch> {
    let norm = model.object.norm_for(tool)?;

    // Canonical surface samples.
    let mesh_owned;
    let mesh: &TriangleMesh = match (cfg.source, surface_mesh) {
        (_, Some(m)) => m,
        (SurfaceSource::Learned, None) => {
            mesh_owned = model.object.reconstruct_mesh(tool, cfg.recon_resolution)?;
            &mesh_owned
        }
        (SurfaceSource::GroundTruth, None) => {
            mesh_owned = geom::build_tool_mesh(tool).map_vertices(|v| norm.to_canonical(v));
            &mesh_owned
        }
    };
    let mut rng = ndiff::rng::stream(cfg.seed, &[0xc0, tool.index() as u64]);
    let surface = geom::sample_surface_points(mesh, cfg.n_surface, &mut rng);
    if surface.is_empty() {
        return Err(VitaError::Contract {
            op: "predict_contact_patch",
            detail: "empty surface sample set".into(),
        });
    }

    // Object features at the samples.
    let params = model.object.generated(tool)?;
    let mut qdata = Vec::with_capacity(surface.len() * 3);
    for p in &surface {
        qdata.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
    }
    let q = DenseArray::new(vec![surface.len(), 3], qdata)?;
    let (sdf, z_o) = model.object.forward(&params, &q)?;

    // Pooled predicted shear at (ξ̂, ψ̂).
    let grid: DenseArray<f32> = SensorGrid::normalized_queries();
    let mut pooled = [0.0f64; POOLED_LEN];
    for sensor in SensorId::BOTH {
        let half: Vec<f32> = psi.data()
            [sensor.index() * TRIAL_CODE_PER_SENSOR..(sensor.index() + 1) * TRIAL_CODE_PER_SENSOR]
            .iter()
            .map(|&v| v as f32)
            .collect();
        let pred = model.tactile.forward(
            sensor,
            &xi.to_array(),
            &DenseArray::from_vec(half),
            &grid,
        )?;
        let n = pred.rows() as f64;
        let mut mu = 0.0f64;
        let mut mv = 0.0f64;
        for i in 0..pred.rows() {
            mu += pred.at(i, 0) as f64;
            mv += pred.at(i, 1) as f64;
        }
        pooled[sensor.index() * 2] = mu / n;
        pooled[sensor.index() * 2 + 1] = mv / n;
    }

    let psi32 = DenseArray::from_vec(psi.data().iter().map(|&v| v as f32).collect());
    let input = model.contact.assemble_input(&q, &z_o, &pooled)?;
    let probs = model.contact.forward(&xi.to_array(), &psi32, &input)?;

    // Threshold; fall back to the argmax point when nothing clears ε.
    let object_pose = xi.to_world_transform(ee_pose);
    let mut keep: Vec<usize> = (0..surface.len())
        .filter(|&i| probs.at(i, 0) as f64 > cfg.epsilon)
        .collect();
    if keep.is_empty() {
        let argmax = (0..surface.len())
            .max_by(|&a, &b| probs.at(a, 0).partial_cmp(&probs.at(b, 0)).unwrap())
            .unwrap();
        keep.push(argmax);
    }

    let canonical: Vec<Vec3> = keep.iter().map(|&i| surface[i]).collect();
    // Object (grasp) frame is the bbox-centered metric frame: canonical
    // divided by the normalization scale.
    let world: Vec<Vec3> = canonical
        .iter()
        .map(|&c| crate::pose::apply(&object_pose, c / norm.scale))
        .collect();
    Ok(ContactPatch {
        world: PointCloud::new(world, Frame::World),
        canonical: canonical.clone(),
        probabilities: keep.iter().map(|&i| probs.at(i, 0) as f64).collect(),
        sdf_magnitudes: keep.iter().map(|&i| (sdf.at(i, 0) as f64).abs()).collect(),
        forward_passes: 1,
    })
}
