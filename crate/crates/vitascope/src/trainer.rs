//! Joint training of the tactile and contact modules with the object
//! module frozen: per-interaction trial codes are free parameters learned
//! auto-decoder style alongside the hypernetworks against the weighted
//! shear + embedding + hypernetwork-regularizer + contact loss.

use std::sync::Arc;

use ndiff::{Adam, DenseArray, Real, Tape};

use crate::error::{Result, VitaError};
use crate::fields::contact::{self, ContactConfig, ContactModel};
use crate::fields::model::{FieldModel, ModelConfig};
use crate::fields::object::ObjectModel;
use crate::fields::tactile::{
    self, TactileConfig, TactileModel, TRIAL_CODE_LEN, TRIAL_CODE_PER_SENSOR,
};
use crate::sensor::{SensorGrid, SensorId, ShearField, SHEAR_NORM_THRESHOLD};
use crate::sim::record::InteractionRecord;

/// Weights and schedule of the joint stage. Defaults are the desk-scale
/// settings; [`TrainingConfig::paper`] switches to the long schedule.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub lambda_shear: f64,
    pub lambda_emb: f64,
    pub lambda_hyper: f64,
    pub lambda_contact: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Interactions per optimizer step.
    pub batch: usize,
    pub seed: u64,
    /// Std of the per-component Gaussian shear augmentation.
    pub noise_std: f64,
    pub tactile: TactileConfig,
    pub contact: ContactConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_shear: 0.1,
            lambda_emb: 0.2,
            lambda_hyper: 25.0,
            lambda_contact: 2.0,
            epochs: 40,
            lr: 1e-4,
            batch: 12,
            seed: 0,
            noise_std: 0.1,
            tactile: TactileConfig::default(),
            contact: ContactConfig::default(),
        }
    }
}

impl TrainingConfig {
    /// Paper-scale schedule.
    pub fn paper(mut self) -> Self {
        self.epochs = 20;
        self.lr = 1e-5;
        self.batch = 1;
        self
    }
}

/// Std of the trial-code initialization.
pub const TRIAL_CODE_INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub struct TrainLog {
    pub epoch: usize,
    pub shear: f64,
    pub emb: f64,
    pub hyper: f64,
    pub contact: f64,
    pub total: f64,
}

impl TrainLog {
    pub fn to_kv(&self) -> String {
        format!(
            "epoch={} shear={:.6} emb={:.6} hyper={:.6} contact={:.6} total={:.6}",
            self.epoch, self.shear, self.emb, self.hyper, self.contact, self.total
        )
    }
}

/// Squared L2 norm of a trial code.
pub fn embedding_loss<T: Real>(psi: &DenseArray<T>) -> f64 {
    psi.norm_sq_f64()
}

fn mean_sq_params<T: Real>(params: &ndiff::MlpParams<T>) -> f64 {
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for w in &params.weights {
        acc += w.norm_sq_f64();
        count += w.len();
    }
    for b in &params.biases {
        acc += b.norm_sq_f64();
        count += b.len();
    }
    acc / count as f64
}

/// The hypernetwork regularizer for one interaction: count-normalized
/// squared norms of the generated tactile parameters (both sensors,
/// averaged) plus the generated contact parameters.
pub fn hyper_regularizer<T: Real>(
    tactile: &TactileModel<T>,
    contact_model: &ContactModel<T>,
    xi: &[f64; 3],
    psi: &DenseArray<T>,
) -> Result<f64> {
    let psi_l = DenseArray::from_vec(psi.data()[..TRIAL_CODE_PER_SENSOR].to_vec());
    let psi_r = DenseArray::from_vec(psi.data()[TRIAL_CODE_PER_SENSOR..].to_vec());
    let gen_l = tactile.generated(SensorId::Left, xi, &psi_l)?;
    let gen_r = tactile.generated(SensorId::Right, xi, &psi_r)?;

    let xi_c = if contact_model.config.zero_pose {
        [0.0; 3]
    } else {
        *xi
    };
    let mut code = Vec::with_capacity(15);
    for v in xi_c {
        code.push(T::from_f64(v));
    }
    code.extend_from_slice(psi.data());
    let gen_c = contact_model.net.forward(&DenseArray::from_vec(code))?;

    Ok((mean_sq_params(&gen_l) + mean_sq_params(&gen_r)) / 2.0 + mean_sq_params(&gen_c))
}

/// Applies Gaussian component noise to a unit-or-zero shear field and
/// re-normalizes, keeping the unit-vector invariant.
pub fn augment_shear(
    field: &ShearField,
    noise_std: f64,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Vec<[f64; 2]> {
    field
        .vectors
        .iter()
        .map(|[u, v]| {
            let nu = u + ndiff::rng::normal(rng) * noise_std;
            let nv = v + ndiff::rng::normal(rng) * noise_std;
            let mag = (nu * nu + nv * nv).sqrt();
            if mag > SHEAR_NORM_THRESHOLD {
                [nu / mag, nv / mag]
            } else {
                [0.0, 0.0]
            }
        })
        .collect()
}

/// Per-record constant tensors prepared once before the epoch loop.
struct RecordData {
    xi: [f64; 3],
    /// `[q ⊕ z_O]` (or zeroed activations under the ablation), `[N, 515]`.
    base_input: DenseArray<f32>,
    labels: DenseArray<f32>,
    shear_unit: [ShearField; 2],
}

/// Trains the tactile and contact hypernetworks plus the trial-code table
/// against a dataset of interactions; the object module stays frozen.
pub fn train_joint(
    records: &[InteractionRecord],
    object: &ObjectModel<f32>,
    cfg: &TrainingConfig,
) -> Result<(FieldModel<f32>, Vec<TrainLog>)> {
    if records.is_empty() {
        return Err(VitaError::Contract {
            op: "train_joint",
            detail: "no training interactions".into(),
        });
    }
    let mut contact_cfg = cfg.contact;
    contact_cfg.activation_len = 2 * object.config.hidden;
    let model_config = ModelConfig {
        object: object.config,
        tactile: cfg.tactile,
        contact: contact_cfg,
        seed: cfg.seed,
    };
    let mut model = FieldModel::init(model_config, object.clone());

    // Trial-code table, one row per interaction.
    model.trial_codes = (0..records.len())
        .map(|i| {
            let mut rng = ndiff::rng::stream(cfg.seed, &[0x90, i as u64]);
            let data: Vec<f32> = (0..TRIAL_CODE_LEN)
                .map(|_| (ndiff::rng::normal(&mut rng) * TRIAL_CODE_INIT_STD) as f32)
                .collect();
            Arc::new(DenseArray::from_vec(data))
        })
        .collect();

    // Precompute frozen-object activations and constants per record.
    let mut data: Vec<RecordData> = Vec::with_capacity(records.len());
    for rec in records {
        let params = model.object.generated(rec.tool)?;
        let n = rec.queries.len();
        let mut qdata = Vec::with_capacity(n * 3);
        let mut labels = Vec::with_capacity(n);
        for s in &rec.queries {
            qdata.extend_from_slice(&[s.q.x as f32, s.q.y as f32, s.q.z as f32]);
            labels.push(if s.c_star == Some(true) { 1.0f32 } else { 0.0 });
        }
        let q = DenseArray::new(vec![n, 3], qdata)?;
        let (_, z_o) = model.object.forward(&params, &q)?;
        let z_block = if contact_cfg.zero_activations {
            DenseArray::zeros(vec![n, contact_cfg.activation_len])
        } else {
            z_o
        };
        data.push(RecordData {
            xi: rec.xi_star.to_array(),
            base_input: crate::fields::hcat(&q, &z_block),
            labels: DenseArray::new(vec![n, 1], labels)?,
            shear_unit: [rec.shear[0].clone(), rec.shear[1].clone()],
        });
    }

    let grid: Arc<DenseArray<f32>> = Arc::new(SensorGrid::normalized_queries());
    let t_param_count = cfg.tactile.hyper_spec().generated_len() as f64;
    let c_param_count = contact_cfg.hyper_spec().generated_len() as f64;

    let mut adam = Adam::<f32>::new();
    let mut psi_adams: Vec<Adam<f32>> = (0..records.len()).map(|_| Adam::new()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // Deterministic shuffle of the interaction order.
        let mut order: Vec<usize> = (0..records.len()).collect();
        let mut shuffle_rng = ndiff::rng::stream(cfg.seed, &[0x91, epoch as u64]);
        for i in (1..order.len()).rev() {
            use rand::Rng;
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut ep_shear = 0.0f64;
        let mut ep_emb = 0.0f64;
        let mut ep_hyper = 0.0f64;
        let mut ep_contact = 0.0f64;

        for batch in order.chunks(cfg.batch.max(1)) {
            let mut tape = Tape::<f32>::new();
            let tl_nodes = model.tactile.nets[0].nodes(&mut tape);
            let tr_nodes = model.tactile.nets[1].nodes(&mut tape);
            let c_nodes = model.contact.net.nodes(&mut tape);
            let grid_node = tape.constant(grid.clone());

            let mut psi_nodes = Vec::with_capacity(batch.len());
            let mut rec_losses = Vec::with_capacity(batch.len());

            for &ri in batch {
                let rd = &data[ri];
                let psi_node = tape.param(model.trial_codes[ri].clone());
                psi_nodes.push((ri, psi_node));

                let xi_node =
                    tape.constant_owned(DenseArray::from_vec(
                        rd.xi.iter().map(|&v| v as f32).collect(),
                    ));

                // Noise-augmented targets for this epoch.
                let mut preds = Vec::with_capacity(2);
                let mut flats = Vec::with_capacity(2);
                let mut shear_nodes = Vec::with_capacity(2);
                for sensor in SensorId::BOTH {
                    let mut noise_rng = ndiff::rng::stream(
                        cfg.seed,
                        &[0xa0, epoch as u64, ri as u64, sensor.index() as u64],
                    );
                    let aug = augment_shear(&rd.shear_unit[sensor.index()], cfg.noise_std, &mut noise_rng);
                    let mut obs = Vec::with_capacity(SensorGrid::POINTS * 2);
                    for [u, v] in aug {
                        obs.push(u as f32);
                        obs.push(v as f32);
                    }
                    let obs_node = tape.constant_owned(DenseArray::new(
                        vec![SensorGrid::POINTS, 2],
                        obs,
                    )?);

                    let half = sensor.index() * TRIAL_CODE_PER_SENSOR;
                    let psi_row = tape.reshape(psi_node, vec![1, TRIAL_CODE_LEN])?;
                    let psi_half = tape.slice_cols(psi_row, half, TRIAL_CODE_PER_SENSOR)?;
                    let hyper_nodes = if sensor == SensorId::Left {
                        &tl_nodes
                    } else {
                        &tr_nodes
                    };
                    let (pred, generated) = tactile::predict_on_tape(
                        &mut tape,
                        &cfg.tactile,
                        hyper_nodes,
                        xi_node,
                        psi_half,
                        grid_node,
                    )?;
                    let loss = tactile::shear_loss_on_tape(&mut tape, pred, obs_node)?;
                    preds.push(pred);
                    flats.push(generated.flat);
                    shear_nodes.push(loss);
                }
                let shear_sum = tape.add(shear_nodes[0], shear_nodes[1])?;
                let shear = tape.affine(shear_sum, 0.5, 0.0);

                // Pooled predicted shear per sensor.
                let mean_l = tape.mean_rows(preds[0]);
                let mean_l = tape.reshape(mean_l, vec![1, 2])?;
                let mean_r = tape.mean_rows(preds[1]);
                let mean_r = tape.reshape(mean_r, vec![1, 2])?;
                let pooled = tape.concat_cols(&[mean_l, mean_r])?;

                let base_node = tape.constant_owned(rd.base_input.clone());
                let (probs, gen_c) = contact::predict_on_tape(
                    &mut tape,
                    &contact_cfg,
                    &c_nodes,
                    xi_node,
                    psi_node,
                    base_node,
                    Some(pooled),
                )?;
                let labels_node = tape.constant_owned(rd.labels.clone());
                let bce = tape.bce_mean(probs, labels_node, contact::BCE_EPS)?;

                // Hypernetwork regularizer from the generated flats.
                let mut t_sq = None;
                for f in flats.iter().flatten() {
                    let sq = tape.mul(*f, *f)?;
                    let s = tape.sum_all(sq);
                    t_sq = Some(match t_sq {
                        None => s,
                        Some(acc) => tape.add(acc, s)?,
                    });
                }
                let t_term = tape.affine(t_sq.unwrap(), 0.5 / t_param_count, 0.0);
                let mut c_sq = None;
                for f in gen_c.flat {
                    let sq = tape.mul(f, f)?;
                    let s = tape.sum_all(sq);
                    c_sq = Some(match c_sq {
                        None => s,
                        Some(acc) => tape.add(acc, s)?,
                    });
                }
                let c_term = tape.affine(c_sq.unwrap(), 1.0 / c_param_count, 0.0);
                let hyper = tape.add(t_term, c_term)?;

                let psi_sq = tape.mul(psi_node, psi_node)?;
                let emb = tape.sum_all(psi_sq);

                ep_shear += tape.value(shear).scalar_value() as f64;
                ep_emb += tape.value(emb).scalar_value() as f64;
                ep_hyper += tape.value(hyper).scalar_value() as f64;
                ep_contact += tape.value(bce).scalar_value() as f64;

                let w_shear = tape.affine(shear, cfg.lambda_shear, 0.0);
                let w_emb = tape.affine(emb, cfg.lambda_emb, 0.0);
                let w_hyper = tape.affine(hyper, cfg.lambda_hyper, 0.0);
                let w_con = tape.affine(bce, cfg.lambda_contact, 0.0);
                let s1 = tape.add(w_shear, w_emb)?;
                let s2 = tape.add(w_hyper, w_con)?;
                rec_losses.push(tape.add(s1, s2)?);
            }

            let mut total = rec_losses[0];
            for &l in &rec_losses[1..] {
                total = tape.add(total, l)?;
            }
            let total = tape.affine(total, 1.0 / batch.len() as f64, 0.0);
            let total_val = tape.value(total).scalar_value();
            if !total_val.is_finite() {
                return Err(VitaError::Training {
                    epoch,
                    interaction: batch[0],
                    detail: format!("non-finite loss {}", total_val),
                });
            }

            let grads = tape.backward(total)?;

            // Hypernetwork update.
            let node_order = [tl_nodes, tr_nodes, c_nodes];
            let mut grad_list = Vec::new();
            for nodes in &node_order {
                let ids = [
                    nodes.trunk_w[0],
                    nodes.trunk_b[0],
                    nodes.trunk_w[1],
                    nodes.trunk_b[1],
                    nodes.head_w[0],
                    nodes.head_b[0],
                    nodes.head_w[1],
                    nodes.head_b[1],
                    nodes.head_w[2],
                    nodes.head_b[2],
                ];
                for id in ids {
                    grad_list.push(grads.get(id));
                }
            }
            let psi_grads: Vec<(usize, Option<DenseArray<f32>>)> = psi_nodes
                .iter()
                .map(|&(ri, node)| (ri, grads.get(node).cloned()))
                .collect();
            drop(tape);

            let mut params: Vec<(String, &mut Arc<DenseArray<f32>>)> = Vec::new();
            let [left_net, right_net] = &mut model.tactile.nets;
            for (prefix, net) in [
                ("tactile.left", left_net),
                ("tactile.right", right_net),
                ("contact", &mut model.contact.net),
            ] {
                for (suffix, p) in net.named_mut() {
                    params.push((format!("{}.{}", prefix, suffix), p));
                }
            }
            adam.step(&mut params, &grad_list, cfg.lr)?;

            // Per-row trial-code updates (only visited rows step).
            for (ri, g) in psi_grads {
                if let Some(g) = g {
                    let mut row = vec![(
                        format!("trial_code.{}", ri),
                        &mut model.trial_codes[ri],
                    )];
                    psi_adams[ri].step(&mut row, &[Some(&g)], cfg.lr)?;
                }
            }
        }

        let n = records.len() as f64;
        let log = TrainLog {
            epoch,
            shear: ep_shear / n,
            emb: ep_emb / n,
            hyper: ep_hyper / n,
            contact: ep_contact / n,
            total: cfg.lambda_shear * ep_shear / n
                + cfg.lambda_emb * ep_emb / n
                + cfg.lambda_hyper * ep_hyper / n
                + cfg.lambda_contact * ep_contact / n,
        };
        logs.push(log);
    }

    Ok((model, logs))
}
