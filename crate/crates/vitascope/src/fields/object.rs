//! The object module: a hypernetwork-conditioned signed-distance field
//! over canonical-frame query points, pretrained with an L1 SDF loss plus
//! normal alignment, then frozen.

use std::sync::Arc;

use geom::marching::{marching_cubes, GridBounds};
use geom::{NormalizationInfo, QuerySample, ToolKind, TriangleMesh, Vec3};
use ndiff::hyper::hypernet_forward_tape;
use ndiff::nn::{mlp_forward_tape, mlp_input_gradient_tape};
use ndiff::{Adam, DenseArray, HyperNetParams, HyperNetSpec, MlpParams, MlpSpec, Real, Tape};

use crate::error::{Result, VitaError};
use crate::fields::hcat;

/// Latent code length for object identity.
pub const OBJECT_CODE_LEN: usize = 8;
/// Standard deviation of the object-code initialization.
const CODE_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
pub struct ObjectConfig {
    pub code_len: usize,
    /// One hypernetwork shared across tools (codes select the shape) or
    /// one hypernetwork per tool.
    pub shared: bool,
    pub hidden: usize,
    pub trunk_width: usize,
    pub omega0: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            code_len: OBJECT_CODE_LEN,
            shared: true,
            hidden: 256,
            trunk_width: 128,
            omega0: 30.0,
        }
    }
}

impl ObjectConfig {
    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec {
            input: 3,
            hidden: self.hidden,
            output: 1,
            omega0: self.omega0,
        }
    }

    pub fn hyper_spec(&self) -> HyperNetSpec {
        HyperNetSpec {
            code_len: self.code_len,
            trunk_width: self.trunk_width,
            target: self.mlp_spec(),
        }
    }
}

/// The trained object field: hypernetwork(s), per-tool codes, and the
/// canonical-frame normalization of every tool.
#[derive(Debug, Clone)]
pub struct ObjectModel<T> {
    pub config: ObjectConfig,
    pub tools: Vec<ToolKind>,
    /// One entry when `config.shared`, else parallel with `tools`.
    pub hypernets: Vec<HyperNetParams<T>>,
    /// Parallel with `tools`.
    pub codes: Vec<Arc<DenseArray<T>>>,
    /// Parallel with `tools`.
    pub norms: Vec<NormalizationInfo>,
}

impl<T: Real> ObjectModel<T> {
    pub fn init(
        config: ObjectConfig,
        tools: Vec<(ToolKind, NormalizationInfo)>,
        seed: u64,
    ) -> Self {
        let n_nets = if config.shared { 1 } else { tools.len() };
        let mut hypernets = Vec::with_capacity(n_nets);
        for i in 0..n_nets {
            let mut rng = ndiff::rng::stream(seed, &[0x0b, i as u64]);
            hypernets.push(HyperNetParams::init(config.hyper_spec(), &mut rng));
        }
        let mut codes = Vec::with_capacity(tools.len());
        for (i, _) in tools.iter().enumerate() {
            let mut rng = ndiff::rng::stream(seed, &[0x0c, i as u64]);
            let data: Vec<T> = (0..config.code_len)
                .map(|_| T::from_f64(ndiff::rng::normal(&mut rng) * CODE_INIT_STD))
                .collect();
            codes.push(Arc::new(DenseArray::from_vec(data)));
        }
        ObjectModel {
            config,
            tools: tools.iter().map(|(t, _)| *t).collect(),
            hypernets,
            codes,
            norms: tools.into_iter().map(|(_, n)| n).collect(),
        }
    }

    pub fn tool_index(&self, tool: ToolKind) -> Result<usize> {
        self.tools
            .iter()
            .position(|&t| t == tool)
            .ok_or(VitaError::Contract {
                op: "object_model",
                detail: format!("tool `{}` not in the model", tool),
            })
    }

    pub fn hypernet_for(&self, index: usize) -> &HyperNetParams<T> {
        if self.config.shared {
            &self.hypernets[0]
        } else {
            &self.hypernets[index]
        }
    }

    pub fn norm_for(&self, tool: ToolKind) -> Result<NormalizationInfo> {
        Ok(self.norms[self.tool_index(tool)?])
    }

    /// Generates the concrete SDF MLP for a tool.
    pub fn generated(&self, tool: ToolKind) -> Result<MlpParams<T>> {
        let i = self.tool_index(tool)?;
        Ok(self.hypernet_for(i).forward(&self.codes[i])?)
    }

    /// Batch forward: canonical queries `[N,3]` → `(sdf [N,1], activations
    /// [N,512])`. The activation matrix concatenates both hidden layers.
    pub fn forward(
        &self,
        params: &MlpParams<T>,
        q: &DenseArray<T>,
    ) -> Result<(DenseArray<T>, DenseArray<T>)> {
        let (s, hidden) = params.forward(q)?;
        Ok((s, hcat(&hidden[0], &hidden[1])))
    }

    /// Single-point forward: `(s, z_O)`.
    pub fn forward_point(
        &self,
        params: &MlpParams<T>,
        q: Vec3,
    ) -> Result<(f64, Vec<f64>)> {
        let input = DenseArray::new(
            vec![1, 3],
            vec![T::from_f64(q.x), T::from_f64(q.y), T::from_f64(q.z)],
        )?;
        let (s, z) = self.forward(params, &input)?;
        Ok((
            s.scalar_value().to_f64(),
            z.data().iter().map(|v| v.to_f64()).collect(),
        ))
    }

    /// Unit surface normal at a canonical point: the normalized spatial
    /// gradient of the field.
    pub fn surface_normal(&self, params: &MlpParams<T>, q: Vec3) -> Result<Vec3> {
        let input = DenseArray::new(
            vec![1, 3],
            vec![T::from_f64(q.x), T::from_f64(q.y), T::from_f64(q.z)],
        )?;
        let g = params.input_gradient(&input)?;
        let v = Vec3::new(
            g.data()[0].to_f64(),
            g.data()[1].to_f64(),
            g.data()[2].to_f64(),
        );
        let n = v.norm();
        if n < 1e-12 {
            return Err(VitaError::Contract {
                op: "surface_normal",
                detail: format!("degenerate (zero) field gradient at {:?}", q),
            });
        }
        Ok(v / n)
    }

    pub fn cast<U: Real>(&self) -> ObjectModel<U> {
        ObjectModel {
            config: self.config,
            tools: self.tools.clone(),
            hypernets: self.hypernets.iter().map(|h| h.cast()).collect(),
            codes: self.codes.iter().map(|c| Arc::new(c.cast())).collect(),
            norms: self.norms.clone(),
        }
    }
}

impl ObjectModel<f32> {
    /// Extracts the zero level set of the learned field on the canonical
    /// grid and keeps the largest connected component.
    pub fn reconstruct_mesh(&self, tool: ToolKind, resolution: usize) -> Result<TriangleMesh> {
        let params = self.generated(tool)?;
        let field = |pts: &[Vec3]| -> Vec<f64> {
            let mut data = Vec::with_capacity(pts.len() * 3);
            for p in pts {
                data.push(p.x as f32);
                data.push(p.y as f32);
                data.push(p.z as f32);
            }
            let input = DenseArray::new(vec![pts.len(), 3], data).expect("grid batch");
            let (s, _) = params.forward(&input).expect("reconstruction forward");
            s.data().iter().map(|&v| v as f64).collect()
        };
        let mesh = marching_cubes(&field, resolution, GridBounds::cube(1.1));
        if mesh.is_empty() {
            return Err(VitaError::Contract {
                op: "reconstruct_mesh",
                detail: format!("empty level set for `{}`", tool),
            });
        }
        Ok(mesh.largest_component())
    }
}

// ---------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------

/// Per-tool pretraining input: canonical query samples plus frame info.
pub struct PretrainInput {
    pub tool: ToolKind,
    pub norm: NormalizationInfo,
    pub samples: Vec<QuerySample>,
}

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_normal: f64,
    /// Samples drawn per tool per step; 0 means the full set every step.
    pub batch_per_tool: usize,
    pub seed: u64,
    pub object: ObjectConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 1e-4,
            lambda_normal: 0.01,
            batch_per_tool: 1024,
            seed: 0,
            object: ObjectConfig::default(),
        }
    }
}

impl PretrainConfig {
    /// Paper-scale settings (long).
    pub fn paper(mut self) -> Self {
        self.epochs = 50_000;
        self.lr = 1e-5;
        self.batch_per_tool = 0;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PretrainLog {
    pub epoch: usize,
    pub sdf_l1: f64,
    pub normal_misalign: f64,
    pub total: f64,
}

impl PretrainLog {
    pub fn to_kv(&self) -> String {
        format!(
            "epoch={} sdf_l1={:.6} normal_misalign={:.6} total={:.6}",
            self.epoch, self.sdf_l1, self.normal_misalign, self.total
        )
    }
}

struct ToolData {
    all_q: DenseArray<f32>,
    all_s: DenseArray<f32>,
    surf_q: DenseArray<f32>,
    surf_n: DenseArray<f32>,
}

fn gather_rows(src: &DenseArray<f32>, idx: &[usize]) -> DenseArray<f32> {
    let m = src.cols();
    let mut data = Vec::with_capacity(idx.len() * m);
    for &i in idx {
        data.extend_from_slice(src.row(i));
    }
    DenseArray::new(vec![idx.len(), m], data).expect("gather shape")
}

/// Pretrains the object field on per-tool query sets; the returned model
/// is frozen by convention (downstream training never touches it).
pub fn pretrain_object(
    inputs: &[PretrainInput],
    cfg: &PretrainConfig,
) -> Result<(ObjectModel<f32>, Vec<PretrainLog>)> {
    if inputs.is_empty() {
        return Err(VitaError::Contract {
            op: "pretrain_object",
            detail: "no tools given".into(),
        });
    }
    let mut model = ObjectModel::<f32>::init(
        cfg.object,
        inputs.iter().map(|i| (i.tool, i.norm)).collect(),
        cfg.seed,
    );

    // Flatten per-tool supervision into dense arrays once.
    let data: Vec<ToolData> = inputs
        .iter()
        .map(|input| {
            let n = input.samples.len();
            let mut all_q = Vec::with_capacity(n * 3);
            let mut all_s = Vec::with_capacity(n);
            let mut surf_q = Vec::new();
            let mut surf_n = Vec::new();
            for s in &input.samples {
                all_q.extend_from_slice(&[s.q.x as f32, s.q.y as f32, s.q.z as f32]);
                all_s.push(s.s_star as f32);
                if let Some(n_star) = s.n_star {
                    surf_q.extend_from_slice(&[s.q.x as f32, s.q.y as f32, s.q.z as f32]);
                    surf_n.extend_from_slice(&[
                        n_star.x as f32,
                        n_star.y as f32,
                        n_star.z as f32,
                    ]);
                }
            }
            ToolData {
                all_q: DenseArray::new(vec![n, 3], all_q).expect("pretrain q"),
                all_s: DenseArray::new(vec![n, 1], all_s).expect("pretrain s"),
                surf_q: DenseArray::new(vec![surf_q.len() / 3, 3], surf_q).expect("pretrain sq"),
                surf_n: DenseArray::new(vec![surf_n.len() / 3, 3], surf_n).expect("pretrain sn"),
            }
        })
        .collect();

    let mut adam = Adam::<f32>::new();
    let mut logs = Vec::new();
    let n_tools = inputs.len();

    for epoch in 0..cfg.epochs {
        let mut tape = Tape::<f32>::new();

        // Leaf every trainable parameter once per step.
        let hyper_nodes: Vec<_> = model.hypernets.iter().map(|h| h.nodes(&mut tape)).collect();
        let code_nodes: Vec<_> = model
            .codes
            .iter()
            .map(|c| tape.param(c.clone()))
            .collect();

        let mut tool_losses = Vec::with_capacity(n_tools);
        let mut sdf_log = 0.0f64;
        let mut normal_log = 0.0f64;

        for (ti, td) in data.iter().enumerate() {
            let net_idx = if cfg.object.shared { 0 } else { ti };
            let generated = hypernet_forward_tape(
                &mut tape,
                &cfg.object.hyper_spec(),
                &hyper_nodes[net_idx],
                code_nodes[ti],
            )?;

            // Batch selection.
            let (qb, sb, sqb, snb) = if cfg.batch_per_tool == 0 {
                (
                    td.all_q.clone(),
                    td.all_s.clone(),
                    td.surf_q.clone(),
                    td.surf_n.clone(),
                )
            } else {
                let mut rng =
                    ndiff::rng::stream(cfg.seed, &[0x0e, epoch as u64, ti as u64]);
                use rand::Rng;
                let b = cfg.batch_per_tool.min(td.all_q.rows());
                let idx: Vec<usize> =
                    (0..b).map(|_| rng.random_range(0..td.all_q.rows())).collect();
                let bs = (cfg.batch_per_tool / 3).max(1).min(td.surf_q.rows());
                let sidx: Vec<usize> =
                    (0..bs).map(|_| rng.random_range(0..td.surf_q.rows())).collect();
                (
                    gather_rows(&td.all_q, &idx),
                    gather_rows(&td.all_s, &idx),
                    gather_rows(&td.surf_q, &sidx),
                    gather_rows(&td.surf_n, &sidx),
                )
            };

            let q_node = tape.constant_owned(qb);
            let s_node = tape.constant_owned(sb);
            let (pred, _) =
                mlp_forward_tape(&mut tape, &cfg.object.mlp_spec(), &generated.mlp, q_node)?;
            let diff = tape.sub(pred, s_node)?;
            let absdiff = tape.abs(diff);
            let l1 = tape.mean_all(absdiff);

            let sq_node = tape.constant_owned(sqb);
            let sn_node = tape.constant_owned(snb);
            let grad =
                mlp_input_gradient_tape(&mut tape, &cfg.object.mlp_spec(), &generated.mlp, sq_node)?;
            let dot = tape.mul(grad, sn_node)?;
            let align = tape.row_sum(dot);
            let mis = tape.affine(align, -1.0, 1.0);
            let normal_term = tape.mean_all(mis);

            sdf_log += tape.value(l1).scalar_value() as f64;
            normal_log += tape.value(normal_term).scalar_value() as f64;

            let weighted = tape.affine(normal_term, cfg.lambda_normal, 0.0);
            let tool_loss = tape.add(l1, weighted)?;
            tool_losses.push(tool_loss);
        }

        let mut total = tool_losses[0];
        for &tl in &tool_losses[1..] {
            total = tape.add(total, tl)?;
        }
        let total = tape.affine(total, 1.0 / n_tools as f64, 0.0);

        let total_val = tape.value(total).scalar_value() as f64;
        if !total_val.is_finite() {
            return Err(VitaError::Training {
                epoch,
                interaction: 0,
                detail: format!("non-finite pretraining loss {}", total_val),
            });
        }

        let grads = tape.backward(total)?;

        // Assemble the Adam update in a stable order.
        let mut grad_refs = Vec::new();
        for (hi, hn) in hyper_nodes.iter().enumerate() {
            let ids = [
                hn.trunk_w[0],
                hn.trunk_b[0],
                hn.trunk_w[1],
                hn.trunk_b[1],
                hn.head_w[0],
                hn.head_b[0],
                hn.head_w[1],
                hn.head_b[1],
                hn.head_w[2],
                hn.head_b[2],
            ];
            for id in ids {
                grad_refs.push((format!("object.h{}", hi), grads.get(id)));
            }
        }
        for (ci, &cn) in code_nodes.iter().enumerate() {
            grad_refs.push((format!("object.code{}", ci), grads.get(cn)));
        }

        drop(tape);

        let mut params: Vec<(String, &mut Arc<DenseArray<f32>>)> = Vec::new();
        for (hi, h) in model.hypernets.iter_mut().enumerate() {
            for (suffix, p) in h.named_mut() {
                params.push((format!("object.h{}.{}", hi, suffix), p));
            }
        }
        for (ci, c) in model.codes.iter_mut().enumerate() {
            params.push((format!("object.code{}", ci), c));
        }
        let gvec: Vec<Option<&DenseArray<f32>>> = grad_refs.iter().map(|(_, g)| *g).collect();
        adam.step(&mut params, &gvec, cfg.lr)?;

        logs.push(PretrainLog {
            epoch,
            sdf_l1: sdf_log / n_tools as f64,
            normal_misalign: normal_log / n_tools as f64,
            total: total_val,
        });
    }

    Ok((model, logs))
}
