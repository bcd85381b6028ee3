//! Visuo-tactile implicit fields over grasped tools.
//!
//! A desk-scale pipeline around three hypernetwork-conditioned neural
//! fields: a signed-distance object module, per-sensor tactile shear
//! modules, and a contact-probability module. Includes an analytic
//! press-against-plane simulator for data generation, two-stage training
//! (SDF pretraining, then joint shear/contact training with per-trial
//! latent codes), and three-stage inference: SE(2) in-hand pose by
//! gradient descent on the SDF, trial-code inference from observed shear,
//! and a single contact forward pass. A point-to-point ICP baseline is
//! provided for comparison.

pub mod config;
mod error;
pub mod eval;
pub mod fields;
pub mod infer;
pub mod pose;
pub mod sensor;
pub mod sim;
pub mod trainer;

pub use error::{Result, VitaError};
pub use fields::model::{FieldModel, ModelConfig};
pub use fields::object::ObjectModel;
pub use pose::{pose_errors, project_se2, InHandPose, RigidTransform};
pub use sensor::{SensorGrid, SensorId, ShearField};
pub use sim::record::{DatasetManifest, InteractionRecord};
