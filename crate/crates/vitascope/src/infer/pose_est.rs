//! In-hand pose estimation by gradient descent on the surface
//! signed-distance loss through the frozen object module.

use std::sync::Arc;

use geom::{NormalizationInfo, ToolKind, Vec3};
use ndiff::nn::mlp_forward_tape;
use ndiff::{cosine_lr, Adam, DenseArray, MlpParams, NodeId, Real, Tape};

use crate::error::{Result, VitaError};
use crate::fields::object::ObjectModel;
use crate::infer::Observation;
use crate::pose::{InHandPose, RigidTransform};

/// Which observation modalities drive the pose loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseSource {
    Both,
    VisionOnly,
    TactileOnly,
}

impl PoseSource {
    pub fn name(self) -> &'static str {
        match self {
            PoseSource::Both => "both",
            PoseSource::VisionOnly => "vision",
            PoseSource::TactileOnly => "tactile",
        }
    }
}

impl std::str::FromStr for PoseSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "both" => Ok(PoseSource::Both),
            "vision" => Ok(PoseSource::VisionOnly),
            "tactile" => Ok(PoseSource::TactileOnly),
            other => Err(format!("unknown pose source `{}`", other)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseConfig {
    pub steps: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub source: PoseSource,
    /// Restart with perturbed θ when the final residual exceeds this.
    pub restart_threshold: f64,
    /// θ perturbations tried on restart, radians.
    pub restart_offsets: Vec<f64>,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            steps: 250,
            lr_max: 5e-3,
            lr_min: 1e-4,
            source: PoseSource::Both,
            restart_threshold: 0.05,
            restart_offsets: vec![
                10f64.to_radians(),
                -10f64.to_radians(),
                20f64.to_radians(),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoseEstimate {
    pub xi: InHandPose,
    pub object_pose: RigidTransform,
    /// Mean |SDF| at the estimate, canonical units.
    pub residual: f64,
    pub steps: usize,
    pub restarts_used: usize,
}

/// Observed clouds premapped into the EE frame, as per-column arrays.
struct EeClouds<T> {
    cols: Option<[Arc<DenseArray<T>>; 3]>,
}

impl<T: Real> EeClouds<T> {
    fn new(ee_inv: &RigidTransform, points: &[Vec3]) -> Self {
        if points.is_empty() {
            return Self { cols: None };
        }
        let n = points.len();
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for p in points {
            let q = crate::pose::apply(ee_inv, *p);
            x.push(T::from_f64(q.x));
            y.push(T::from_f64(q.y));
            z.push(T::from_f64(q.z));
        }
        let col = |v: Vec<T>| Arc::new(DenseArray::new(vec![n, 1], v).expect("cloud col"));
        Self {
            cols: Some([col(x), col(y), col(z)]),
        }
    }

    fn len(&self) -> usize {
        self.cols.as_ref().map(|c| c[0].len()).unwrap_or(0)
    }
}

/// Builds the mean |O(S·X(ξ)⁻¹q)| node for one cloud.
///
/// `xi = (x, z, θ)` are scalar tape nodes. The inverse in-hand transform
/// is applied per column: a = q − t, then p = R_y(θ)ᵀ a.
fn cloud_loss_node<T: Real>(
    tape: &mut Tape<T>,
    params_nodes: &ndiff::MlpNodes,
    spec: &ndiff::MlpSpec,
    cloud: &EeClouds<T>,
    scale: f64,
    x: NodeId,
    z: NodeId,
    theta: NodeId,
) -> Result<NodeId> {
    let cols = cloud.cols.as_ref().expect("nonempty cloud");
    let n = cols[0].len();
    let ones = tape.constant_owned(DenseArray::filled(vec![n, 1], T::ONE));
    let qx = tape.constant(cols[0].clone());
    let qy = tape.constant(cols[1].clone());
    let qz = tape.constant(cols[2].clone());

    let xb = tape.mul_scalar(ones, x)?;
    let zb = tape.mul_scalar(ones, z)?;
    let ax = tape.sub(qx, xb)?;
    let az = tape.sub(qz, zb)?;

    let c = tape.cos(theta);
    let s = tape.sin(theta);
    // R_y(θ)ᵀ: px = c·ax − s·az ; pz = s·ax + c·az.
    let c_ax = tape.mul_scalar(ax, c)?;
    let s_az = tape.mul_scalar(az, s)?;
    let px = tape.sub(c_ax, s_az)?;
    let s_ax = tape.mul_scalar(ax, s)?;
    let c_az = tape.mul_scalar(az, c)?;
    let pz = tape.add(s_ax, c_az)?;

    let canon = tape.concat_cols(&[px, qy, pz])?;
    let canon = tape.affine(canon, scale, 0.0);
    let (sdf, _) = mlp_forward_tape(tape, spec, params_nodes, canon)?;
    let a = tape.abs(sdf);
    Ok(tape.mean_all(a))
}

/// One full descent from a fixed initialization; returns the estimate and
/// the post-step residual.
#[allow(clippy::too_many_arguments)]
fn run_descent<T: Real>(
    params: &MlpParams<T>,
    spec: &ndiff::MlpSpec,
    scale: f64,
    visual: &EeClouds<T>,
    tactile: &EeClouds<T>,
    source: PoseSource,
    init: InHandPose,
    cfg: &PoseConfig,
) -> Result<(InHandPose, f64)> {
    let mut xv = Arc::new(DenseArray::scalar(T::from_f64(init.x)));
    let mut zv = Arc::new(DenseArray::scalar(T::from_f64(init.z)));
    let mut tv = Arc::new(DenseArray::scalar(T::from_f64(init.theta)));
    let mut adam = Adam::<T>::new();

    let build = |tape: &mut Tape<T>,
                 xv: &Arc<DenseArray<T>>,
                 zv: &Arc<DenseArray<T>>,
                 tv: &Arc<DenseArray<T>>|
     -> Result<(NodeId, NodeId, NodeId, NodeId)> {
        let x = tape.param(xv.clone());
        let z = tape.param(zv.clone());
        let theta = tape.param(tv.clone());
        let nodes = params.nodes_const(tape);
        let use_v = source != PoseSource::TactileOnly && visual.len() > 0;
        let use_t = source != PoseSource::VisionOnly && tactile.len() > 0;
        let loss = match (use_v, use_t) {
            (true, true) => {
                let lv = cloud_loss_node(tape, &nodes, spec, visual, scale, x, z, theta)?;
                let lt = cloud_loss_node(tape, &nodes, spec, tactile, scale, x, z, theta)?;
                let hv = tape.affine(lv, 0.5, 0.0);
                let ht = tape.affine(lt, 0.5, 0.0);
                tape.add(hv, ht)?
            }
            (true, false) => cloud_loss_node(tape, &nodes, spec, visual, scale, x, z, theta)?,
            (false, true) => cloud_loss_node(tape, &nodes, spec, tactile, scale, x, z, theta)?,
            (false, false) => {
                return Err(VitaError::Contract {
                    op: "estimate_pose",
                    detail: "no observation points for the selected source".into(),
                })
            }
        };
        Ok((loss, x, z, theta))
    };

    for step in 0..cfg.steps {
        let mut tape = Tape::<T>::new();
        let (loss, x, z, theta) = build(&mut tape, &xv, &zv, &tv)?;
        let loss_val = tape.value(loss).scalar_value().to_f64();
        if !loss_val.is_finite() {
            return Err(VitaError::Inference {
                detail: format!("non-finite pose loss at step {}", step),
            });
        }
        let grads = tape.backward(loss)?;
        let gx = grads.get(x).cloned();
        let gz = grads.get(z).cloned();
        let gt = grads.get(theta).cloned();
        drop(tape);

        let lr = cosine_lr(step, cfg.steps, cfg.lr_max, cfg.lr_min);
        let mut slots = vec![
            ("pose.x".to_string(), &mut xv),
            ("pose.z".to_string(), &mut zv),
            ("pose.theta".to_string(), &mut tv),
        ];
        adam.step(
            &mut slots,
            &[gx.as_ref(), gz.as_ref(), gt.as_ref()],
            lr,
        )?;
    }

    // Final residual at the final estimate.
    let mut tape = Tape::<T>::new();
    let (loss, ..) = build(&mut tape, &xv, &zv, &tv)?;
    let residual = tape.value(loss).scalar_value().to_f64();
    let xi = InHandPose::new(
        xv.scalar_value().to_f64(),
        zv.scalar_value().to_f64(),
        tv.scalar_value().to_f64(),
    );
    Ok((xi, residual))
}

/// Estimates the SE(2) in-hand pose from visuo-tactile clouds.
///
/// Initializes at ξ = 0 (the EE pose), runs Adam with a cosine schedule,
/// and retries from perturbed θ when the residual stays above the restart
/// threshold; the best residual wins.
pub fn estimate_pose<T: Real>(
    object: &ObjectModel<T>,
    tool: ToolKind,
    obs: &Observation,
    cfg: &PoseConfig,
) -> Result<PoseEstimate> {
    let norm: NormalizationInfo = object.norm_for(tool)?;
    let params = object.generated(tool)?;
    let spec = object.config.mlp_spec();
    let ee_inv = obs.ee_pose.inverse();
    let visual = EeClouds::<T>::new(&ee_inv, &obs.visual);
    let tactile = EeClouds::<T>::new(&ee_inv, &obs.tactile);

    match cfg.source {
        PoseSource::Both if visual.len() == 0 && tactile.len() == 0 => {
            return Err(VitaError::Contract {
                op: "estimate_pose",
                detail: "empty visual and tactile clouds".into(),
            })
        }
        PoseSource::VisionOnly if visual.len() == 0 => {
            return Err(VitaError::Contract {
                op: "estimate_pose",
                detail: "empty visual cloud".into(),
            })
        }
        PoseSource::TactileOnly if tactile.len() == 0 => {
            return Err(VitaError::Contract {
                op: "estimate_pose",
                detail: "empty tactile cloud".into(),
            })
        }
        _ => {}
    }

    let init = InHandPose::IDENTITY;
    let (mut best_xi, mut best_residual) = run_descent(
        &params, &spec, norm.scale, &visual, &tactile, cfg.source, init, cfg,
    )?;
    let mut restarts_used = 0;
    if best_residual > cfg.restart_threshold {
        for &offset in &cfg.restart_offsets {
            restarts_used += 1;
            let restart_init = InHandPose::new(init.x, init.z, init.theta + offset);
            let (xi, residual) = run_descent(
                &params,
                &spec,
                norm.scale,
                &visual,
                &tactile,
                cfg.source,
                restart_init,
                cfg,
            )?;
            if residual < best_residual {
                best_xi = xi;
                best_residual = residual;
            }
            if best_residual <= cfg.restart_threshold {
                break;
            }
        }
    }

    Ok(PoseEstimate {
        xi: best_xi,
        object_pose: best_xi.to_world_transform(&obs.ee_pose),
        residual: best_residual,
        steps: cfg.steps,
        restarts_used,
    })
}

/// Plain evaluation of the pose loss at a given ξ (no gradients); used by
/// tests and diagnostics.
pub fn pose_loss_at<T: Real>(
    object: &ObjectModel<T>,
    tool: ToolKind,
    obs: &Observation,
    source: PoseSource,
    xi: InHandPose,
) -> Result<f64> {
    let norm = object.norm_for(tool)?;
    let params = object.generated(tool)?;
    let ee_inv = obs.ee_pose.inverse();
    let inv_xi = xi.to_ee_transform().inverse();
    let eval = |points: &[Vec3]| -> Result<f64> {
        let n = points.len();
        let mut data = Vec::with_capacity(n * 3);
        for p in points {
            let q = crate::pose::apply(&inv_xi, crate::pose::apply(&ee_inv, *p)) * norm.scale;
            data.extend_from_slice(&[T::from_f64(q.x), T::from_f64(q.y), T::from_f64(q.z)]);
        }
        let input = DenseArray::new(vec![n, 3], data)?;
        let (s, _) = params.forward(&input)?;
        Ok(s.data().iter().map(|v| v.to_f64().abs()).sum::<f64>() / n as f64)
    };
    Ok(match source {
        PoseSource::Both => 0.5 * eval(&obs.visual)? + 0.5 * eval(&obs.tactile)?,
        PoseSource::VisionOnly => eval(&obs.visual)?,
        PoseSource::TactileOnly => eval(&obs.tactile)?,
    })
}
