//! The full field model and its checkpoint serialization.

use std::path::Path;
use std::sync::Arc;

use geom::{NormalizationInfo, ToolKind, Vec3};
use ndiff::{Checkpoint, DenseArray, HyperNetParams, Real};

use crate::error::{Result, VitaError};
use crate::fields::contact::{ContactConfig, ContactInputMode, ContactModel};
use crate::fields::object::{ObjectConfig, ObjectModel};
use crate::fields::tactile::{TactileConfig, TactileModel, TRIAL_CODE_LEN};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Architecture and variant switches, echoed into every checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub object: ObjectConfig,
    pub tactile: TactileConfig,
    pub contact: ContactConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            object: ObjectConfig::default(),
            tactile: TactileConfig::default(),
            contact: ContactConfig::default(),
            seed: 0,
        }
    }
}

/// Object checkpoint plus the jointly trained tactile/contact modules and
/// the per-interaction trial-code table.
#[derive(Debug, Clone)]
pub struct FieldModel<T> {
    pub config: ModelConfig,
    pub object: ObjectModel<T>,
    pub tactile: TactileModel<T>,
    pub contact: ContactModel<T>,
    pub trial_codes: Vec<Arc<DenseArray<T>>>,
}

impl<T: Real> FieldModel<T> {
    pub fn init(config: ModelConfig, object: ObjectModel<T>) -> Self {
        FieldModel {
            config,
            object,
            tactile: TactileModel::init(config.tactile, config.seed),
            contact: ContactModel::init(config.contact, config.seed),
            trial_codes: Vec::new(),
        }
    }

    pub fn cast<U: Real>(&self) -> FieldModel<U> {
        FieldModel {
            config: self.config,
            object: self.object.cast(),
            tactile: self.tactile.cast(),
            contact: self.contact.cast(),
            trial_codes: self
                .trial_codes
                .iter()
                .map(|c| Arc::new(c.cast()))
                .collect(),
        }
    }
}

fn put_hypernet<T: Real>(ck: &mut Checkpoint, prefix: &str, h: &HyperNetParams<T>) -> Result<()> {
    for (suffix, arr) in h.named() {
        ck.put(&format!("{}.{}", prefix, suffix), &arr)?;
    }
    Ok(())
}

fn get_hypernet<T: Real>(
    ck: &Checkpoint,
    prefix: &str,
    spec: ndiff::HyperNetSpec,
) -> Result<HyperNetParams<T>> {
    let g = |suffix: &str| ck.get_shared::<T>(&format!("{}.{}", prefix, suffix));
    Ok(HyperNetParams {
        spec,
        trunk_w: [g("trunk_w0")?, g("trunk_w1")?],
        trunk_b: [g("trunk_b0")?, g("trunk_b1")?],
        head_w: [g("head_w0")?, g("head_w1")?, g("head_w2")?],
        head_b: [g("head_b0")?, g("head_b1")?, g("head_b2")?],
    })
}

fn meta_f64(ck: &Checkpoint, key: &str) -> Result<f64> {
    ck.meta(key)
        .ok_or_else(|| VitaError::Contract {
            op: "checkpoint",
            detail: format!("missing meta `{}`", key),
        })?
        .parse()
        .map_err(|e: std::num::ParseFloatError| VitaError::Contract {
            op: "checkpoint",
            detail: format!("bad meta `{}`: {}", key, e),
        })
}

fn meta_usize(ck: &Checkpoint, key: &str) -> Result<usize> {
    Ok(meta_f64(ck, key)? as usize)
}

fn meta_bool(ck: &Checkpoint, key: &str) -> Result<bool> {
    match ck.meta(key) {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        other => Err(VitaError::Contract {
            op: "checkpoint",
            detail: format!("bad meta `{}`: {:?}", key, other),
        }),
    }
}

fn write_common_meta(ck: &mut Checkpoint, config: &ModelConfig, object: &ObjectModel<f32>) {
    ck.set_meta("format_version", MODEL_FORMAT_VERSION.to_string());
    ck.set_meta("seed", config.seed.to_string());
    ck.set_meta("object.code_len", config.object.code_len.to_string());
    ck.set_meta("object.shared", config.object.shared.to_string());
    ck.set_meta("object.hidden", config.object.hidden.to_string());
    ck.set_meta("object.trunk", config.object.trunk_width.to_string());
    ck.set_meta("object.omega0", format!("{:?}", config.object.omega0));
    ck.set_meta(
        "tools",
        object
            .tools
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(","),
    );
    for (tool, norm) in object.tools.iter().zip(&object.norms) {
        ck.set_meta(
            &format!("norm.{}", tool.name()),
            format!(
                "{:?},{:?},{:?},{:?}",
                norm.center.x, norm.center.y, norm.center.z, norm.scale
            ),
        );
    }
}

fn read_object_common(ck: &Checkpoint) -> Result<(ObjectConfig, Vec<ToolKind>, Vec<NormalizationInfo>)> {
    let config = ObjectConfig {
        code_len: meta_usize(ck, "object.code_len")?,
        shared: meta_bool(ck, "object.shared")?,
        hidden: meta_usize(ck, "object.hidden")?,
        trunk_width: meta_usize(ck, "object.trunk")?,
        omega0: meta_f64(ck, "object.omega0")?,
    };
    let tools: Vec<ToolKind> = ck
        .meta("tools")
        .ok_or_else(|| VitaError::Contract {
            op: "checkpoint",
            detail: "missing meta `tools`".into(),
        })?
        .split(',')
        .map(|s| s.parse::<ToolKind>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| VitaError::Contract {
            op: "checkpoint",
            detail: e,
        })?;
    let mut norms = Vec::with_capacity(tools.len());
    for tool in &tools {
        let raw = ck
            .meta(&format!("norm.{}", tool.name()))
            .ok_or_else(|| VitaError::Contract {
                op: "checkpoint",
                detail: format!("missing meta `norm.{}`", tool.name()),
            })?;
        let parts: Vec<f64> = raw
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e: std::num::ParseFloatError| VitaError::Contract {
                op: "checkpoint",
                detail: format!("bad norm meta: {}", e),
            })?;
        norms.push(NormalizationInfo {
            center: Vec3::new(parts[0], parts[1], parts[2]),
            scale: parts[3],
        });
    }
    Ok((config, tools, norms))
}

impl ObjectModel<f32> {
    /// Serializes the pretrained object module (sections `H_O` and
    /// `object_codes`).
    pub fn to_checkpoint(&self, seed: u64) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        let config = ModelConfig {
            object: self.config,
            seed,
            ..Default::default()
        };
        write_common_meta(&mut ck, &config, self);
        ck.set_meta("kind", "object");
        for (i, h) in self.hypernets.iter().enumerate() {
            put_hypernet(&mut ck, &format!("object.h{}", i), h)?;
        }
        for (tool, code) in self.tools.iter().zip(&self.codes) {
            ck.put(&format!("object.code.{}", tool.name()), code)?;
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let (config, tools, norms) = read_object_common(ck)?;
        let n_nets = if config.shared { 1 } else { tools.len() };
        let mut hypernets = Vec::with_capacity(n_nets);
        for i in 0..n_nets {
            hypernets.push(get_hypernet(
                ck,
                &format!("object.h{}", i),
                config.hyper_spec(),
            )?);
        }
        let mut codes = Vec::with_capacity(tools.len());
        for tool in &tools {
            codes.push(ck.get_shared::<f32>(&format!("object.code.{}", tool.name()))?);
        }
        Ok(ObjectModel {
            config,
            tools,
            hypernets,
            codes,
            norms,
        })
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        Ok(self.to_checkpoint(seed)?.write(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}

impl FieldModel<f32> {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = self.object.to_checkpoint(self.config.seed)?;
        ck.meta.remove("kind");
        ck.set_meta("kind", "full");
        ck.set_meta("tactile.hidden", self.config.tactile.hidden.to_string());
        ck.set_meta("tactile.trunk", self.config.tactile.trunk_width.to_string());
        ck.set_meta("tactile.omega0", format!("{:?}", self.config.tactile.omega0));
        ck.set_meta("contact.hidden", self.config.contact.hidden.to_string());
        ck.set_meta("contact.trunk", self.config.contact.trunk_width.to_string());
        ck.set_meta("contact.omega0", format!("{:?}", self.config.contact.omega0));
        ck.set_meta("contact.mode", self.config.contact.mode.name());
        ck.set_meta(
            "contact.activation_len",
            self.config.contact.activation_len.to_string(),
        );
        ck.set_meta(
            "contact.zero_activations",
            self.config.contact.zero_activations.to_string(),
        );
        ck.set_meta(
            "contact.zero_pose",
            self.config.contact.zero_pose.to_string(),
        );
        ck.set_meta("trial_codes", self.trial_codes.len().to_string());
        put_hypernet(&mut ck, "tactile.left", &self.tactile.nets[0])?;
        put_hypernet(&mut ck, "tactile.right", &self.tactile.nets[1])?;
        put_hypernet(&mut ck, "contact", &self.contact.net)?;
        if !self.trial_codes.is_empty() {
            let n = self.trial_codes.len();
            let mut data = Vec::with_capacity(n * TRIAL_CODE_LEN);
            for c in &self.trial_codes {
                data.extend_from_slice(c.data());
            }
            let table = DenseArray::new(vec![n, TRIAL_CODE_LEN], data)?;
            ck.put("trial_code_table", &table)?;
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let object = ObjectModel::from_checkpoint(ck)?;
        let tactile_config = TactileConfig {
            hidden: meta_usize(ck, "tactile.hidden")?,
            trunk_width: meta_usize(ck, "tactile.trunk")?,
            omega0: meta_f64(ck, "tactile.omega0")?,
        };
        let contact_mode: ContactInputMode = ck
            .meta("contact.mode")
            .unwrap_or("pooled")
            .parse()
            .map_err(|e| VitaError::Contract {
                op: "checkpoint",
                detail: e,
            })?;
        let contact_config = ContactConfig {
            hidden: meta_usize(ck, "contact.hidden")?,
            trunk_width: meta_usize(ck, "contact.trunk")?,
            omega0: meta_f64(ck, "contact.omega0")?,
            mode: contact_mode,
            activation_len: meta_usize(ck, "contact.activation_len")?,
            zero_activations: meta_bool(ck, "contact.zero_activations")?,
            zero_pose: meta_bool(ck, "contact.zero_pose")?,
        };
        let seed = meta_f64(ck, "seed")? as u64;
        let tactile = TactileModel {
            config: tactile_config,
            nets: [
                get_hypernet(ck, "tactile.left", tactile_config.hyper_spec())?,
                get_hypernet(ck, "tactile.right", tactile_config.hyper_spec())?,
            ],
        };
        let contact = ContactModel {
            config: contact_config,
            net: get_hypernet(ck, "contact", contact_config.hyper_spec())?,
        };
        let n_codes = meta_usize(ck, "trial_codes")?;
        let trial_codes = if n_codes > 0 {
            let table: DenseArray<f32> = ck.get("trial_code_table")?;
            (0..n_codes)
                .map(|i| {
                    Arc::new(DenseArray::from_vec(table.row(i).to_vec()))
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(FieldModel {
            config: ModelConfig {
                object: object.config,
                tactile: tactile_config,
                contact: contact_config,
                seed,
            },
            object,
            tactile,
            contact,
            trial_codes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_checkpoint()?.write(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use geom::{build_tool_mesh, normalize_to_unit_sphere};

    fn tiny_model() -> FieldModel<f32> {
        let tools: Vec<(ToolKind, NormalizationInfo)> = [ToolKind::Rectangle, ToolKind::Hex]
            .iter()
            .map(|&t| {
                let (_, n) = normalize_to_unit_sphere(&build_tool_mesh(t)).unwrap();
                (t, n)
            })
            .collect();
        let config = ModelConfig {
            object: ObjectConfig {
                hidden: 16,
                trunk_width: 8,
                ..Default::default()
            },
            tactile: TactileConfig {
                hidden: 16,
                trunk_width: 8,
                omega0: 30.0,
            },
            contact: ContactConfig {
                hidden: 16,
                trunk_width: 8,
                ..Default::default()
            },
            seed: 42,
        };
        let object = ObjectModel::init(config.object, tools, 42);
        let mut model = FieldModel::init(config, object);
        model.trial_codes = (0..5)
            .map(|i| {
                Arc::new(DenseArray::from_vec(vec![i as f32 * 0.01; TRIAL_CODE_LEN]))
            })
            .collect();
        model
    }

    #[test]
    fn full_checkpoint_roundtrips_bitwise() {
        let model = tiny_model();
        let ck = model.to_checkpoint().unwrap();
        let bytes = ck.to_bytes();
        let back = FieldModel::from_checkpoint(&Checkpoint::from_bytes(&bytes, "t").unwrap()).unwrap();
        let ck2 = back.to_checkpoint().unwrap();
        assert_eq!(ck2.to_bytes(), bytes);
        assert_eq!(back.trial_codes.len(), 5);
        assert_eq!(back.object.tools, model.object.tools);
    }

    #[test]
    fn object_checkpoint_roundtrips_bitwise() {
        let model = tiny_model();
        let ck = model.object.to_checkpoint(42).unwrap();
        let bytes = ck.to_bytes();
        let back =
            ObjectModel::from_checkpoint(&Checkpoint::from_bytes(&bytes, "t").unwrap()).unwrap();
        assert_eq!(back.to_checkpoint(42).unwrap().to_bytes(), bytes);
        // Norm info survives.
        assert!((back.norms[0].scale - model.object.norms[0].scale).abs() < 1e-12);
    }
}
