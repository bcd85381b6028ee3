//! Canonical-frame normalization: map a metric mesh into the unit sphere.

use crate::error::{GeomError, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Margin keeping the scaled max radius strictly inside 1.0 despite
/// floating-point rounding.
const RADIUS_MARGIN: f64 = 1e-9;

/// The world↔canonical map: `canonical = scale * (p - center)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationInfo {
    pub center: Vec3,
    pub scale: f64,
}

impl NormalizationInfo {
    pub fn identity() -> Self {
        Self {
            center: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn to_canonical(&self, p: Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn to_metric(&self, q: Vec3) -> Vec3 {
        q / self.scale + self.center
    }
}

/// Zero-centers a mesh at its bounding-box center and scales it to fit the
/// unit sphere (max vertex radius in `[0.99, 1.0]`).
pub fn normalize_to_unit_sphere(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizationInfo)> {
    if mesh.vertices.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    let (lo, hi) = mesh.bounding_box();
    let center = (lo + hi) / 2.0;
    let max_r = mesh
        .vertices
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0f64, f64::max);
    if max_r == 0.0 {
        return Err(GeomError::Degenerate {
            op: "normalize_to_unit_sphere",
            detail: "all vertices coincide".into(),
        });
    }
    let scale = (1.0 - RADIUS_MARGIN) / max_r;
    let info = NormalizationInfo { center, scale };
    let canonical = mesh.map_vertices(|v| info.to_canonical(v));
    Ok((canonical, info))
}
