//! Three-stage inference: pose via SDF descent, trial-code via shear
//! matching, then one contact forward pass. Plus the ICP baseline.

pub mod contact_pred;
pub mod icp;
pub mod pose_est;
pub mod trial;

use geom::Vec3;

use crate::pose::RigidTransform;
use crate::sensor::ShearField;
use crate::sim::record::InteractionRecord;

/// Everything inference sees about a scene.
#[derive(Debug, Clone)]
pub struct Observation {
    pub ee_pose: RigidTransform,
    /// Partial visual cloud, world frame.
    pub visual: Vec<Vec3>,
    /// Merged tactile cloud, world frame.
    pub tactile: Vec<Vec3>,
    pub shear: [ShearField; 2],
}

impl Observation {
    pub fn from_record(rec: &InteractionRecord) -> Self {
        Observation {
            ee_pose: rec.ee_pose,
            visual: rec.visual.clone(),
            tactile: rec.tactile_merged(),
            shear: [rec.shear[0].clone(), rec.shear[1].clone()],
        }
    }
}
