//! Analytic contact simulator: quasi-static press-against-plane scenes
//! with penetration-threshold contact labels, force/torsion shear
//! synthesis, and partial visuo-tactile cloud rendering.

pub mod clouds;
pub mod contacts;
pub mod record;
pub mod scene;
pub mod shear;

/// Penetration depth of the resolved quasi-static press, and the
/// soft-contact labeling threshold, in meters.
pub const PENETRATION_DEPTH: f64 = 0.0015;

/// Contact points collected per interaction.
pub const CONTACT_POINTS: usize = 1000;
