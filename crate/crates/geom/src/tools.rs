//! Procedural construction of the six tool geometries.
//!
//! Bounding boxes are fixed by the published dimensions; tip profiles
//! follow the qualitative contact-mode ordering (ridge line, flat patch,
//! apex point, flat hexagon, flat disc, dome point). All tools are
//! bbox-centered at the origin with the tool tip along +z.

use std::fmt;
use std::str::FromStr;

use crate::mesh::TriangleMesh;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ToolKind {
    Mountain,
    Rectangle,
    Pyramid,
    Hex,
    Cylinder,
    Semisphere,
}

impl ToolKind {
    pub const ALL: [ToolKind; 6] = [
        ToolKind::Mountain,
        ToolKind::Rectangle,
        ToolKind::Pyramid,
        ToolKind::Hex,
        ToolKind::Cylinder,
        ToolKind::Semisphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToolKind::Mountain => "mountain",
            ToolKind::Rectangle => "rectangle",
            ToolKind::Pyramid => "pyramid",
            ToolKind::Hex => "hex",
            ToolKind::Cylinder => "cylinder",
            ToolKind::Semisphere => "semisphere",
        }
    }

    /// Published bounding-box dimensions in meters, `[x, y, z]`.
    pub fn bbox_dims(self) -> [f64; 3] {
        match self {
            ToolKind::Mountain => [0.04, 0.04, 0.08],
            ToolKind::Rectangle => [0.05, 0.03, 0.08],
            ToolKind::Pyramid => [0.04, 0.04, 0.08],
            ToolKind::Hex => [0.04, 0.035, 0.10],
            ToolKind::Cylinder => [0.04, 0.04, 0.08],
            ToolKind::Semisphere => [0.04, 0.035, 0.117],
        }
    }

    pub fn index(self) -> usize {
        ToolKind::ALL.iter().position(|&k| k == self).unwrap()
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToolKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown tool `{}`", s))
    }
}

/// Box centered at the origin with the given full extents.
pub fn axis_aligned_box(extent: Vec3) -> TriangleMesh {
    let h = extent / 2.0;
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8u32 {
        vertices.push(Vec3::new(
            sign(i & 1 != 0) * h.x,
            sign(i & 2 != 0) * h.y,
            sign(i & 4 != 0) * h.z,
        ));
    }
    let triangles = vec![
        [0, 2, 1],
        [1, 2, 3], // z-
        [4, 5, 6],
        [5, 7, 6], // z+
        [0, 1, 4],
        [1, 5, 4], // y-
        [2, 6, 3],
        [3, 6, 7], // y+
        [0, 4, 2],
        [2, 4, 6], // x-
        [1, 3, 5],
        [3, 7, 5], // x+
    ];
    TriangleMesh::new(vertices, triangles)
}

/// Extrudes a convex CCW polygon (in `(u, v)` coordinates) along `axis`
/// from `lo` to `hi`. `(eu, ev, axis)` must be a right-handed orthonormal
/// triple so the winding comes out outward.
fn convex_prism(
    polygon: &[(f64, f64)],
    eu: Vec3,
    ev: Vec3,
    axis: Vec3,
    lo: f64,
    hi: f64,
) -> TriangleMesh {
    let n = polygon.len();
    let at = |(u, v): (f64, f64), a: f64| eu * u + ev * v + axis * a;
    let mut vertices = Vec::with_capacity(2 * n);
    for &p in polygon {
        vertices.push(at(p, lo));
    }
    for &p in polygon {
        vertices.push(at(p, hi));
    }
    let b = |i: usize| (i % n) as u32;
    let t = |i: usize| (n + i % n) as u32;
    let mut triangles = Vec::new();
    // Caps (fan; valid for convex polygons).
    for i in 1..n - 1 {
        triangles.push([b(0), b(i + 1), b(i)]);
        triangles.push([t(0), t(i), t(i + 1)]);
    }
    // Sides.
    for i in 0..n {
        triangles.push([b(i), b(i + 1), t(i + 1)]);
        triangles.push([b(i), t(i + 1), t(i)]);
    }
    TriangleMesh::new(vertices, triangles)
}

fn mountain() -> TriangleMesh {
    // House profile in the x–z plane (ridge line along y at z = +0.04),
    // extruded along y. Polygon is CCW in (u=z, v=x).
    let profile = [
        (-0.04, -0.02),
        (0.01, -0.02),
        (0.04, 0.0),
        (0.01, 0.02),
        (-0.04, 0.02),
    ];
    convex_prism(
        &profile,
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        -0.02,
        0.02,
    )
}

fn pyramid() -> TriangleMesh {
    // Box shaft with a four-sided pyramidal tip.
    let (hx, hy) = (0.02, 0.02);
    let (z0, z1, z_apex) = (-0.04, 0.01, 0.04);
    let ring = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)];
    let mut vertices: Vec<Vec3> = ring.iter().map(|&(x, y)| Vec3::new(x, y, z0)).collect();
    vertices.extend(ring.iter().map(|&(x, y)| Vec3::new(x, y, z1)));
    vertices.push(Vec3::new(0.0, 0.0, z_apex));
    let apex = 8u32;
    let mut triangles = vec![[0, 2, 1], [0, 3, 2]];
    for i in 0..4u32 {
        let j = (i + 1) % 4;
        triangles.push([i, j, 4 + j]);
        triangles.push([i, 4 + j, 4 + i]);
        triangles.push([4 + i, 4 + j, apex]);
    }
    TriangleMesh::new(vertices, triangles)
}

fn hex() -> TriangleMesh {
    // Flat-topped hexagonal prism; vertices chosen with exact decimal
    // coordinates so the bounding box matches the published dimensions.
    let polygon = [
        (0.02, 0.0),
        (0.01, 0.0175),
        (-0.01, 0.0175),
        (-0.02, 0.0),
        (-0.01, -0.0175),
        (0.01, -0.0175),
    ];
    convex_prism(
        &polygon,
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        -0.05,
        0.05,
    )
}

const RING_SEGMENTS: usize = 32;

fn ellipse_ring(a: f64, b: f64) -> Vec<(f64, f64)> {
    (0..RING_SEGMENTS)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / RING_SEGMENTS as f64;
            (a * th.cos(), b * th.sin())
        })
        .collect()
}

fn cylinder() -> TriangleMesh {
    convex_prism(
        &ellipse_ring(0.02, 0.02),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        -0.04,
        0.04,
    )
}

fn semisphere() -> TriangleMesh {
    // Elliptical shaft capped by an ellipsoidal dome. The dome equator is
    // the shaft's top ring, so the transition is seamless and watertight.
    let (a, b, c) = (0.02, 0.0175, 0.02);
    let z_lo = -0.0585;
    let z_hi = 0.0585;
    let z1 = z_hi - c;
    let n = RING_SEGMENTS;
    let n_phi = 8usize;

    let ring = ellipse_ring(a, b);
    let mut vertices: Vec<Vec3> = ring.iter().map(|&(x, y)| Vec3::new(x, y, z_lo)).collect();
    // Dome rings j = 0..n_phi-1 (j = 0 is the shaft top ring), then pole.
    for j in 0..n_phi {
        let phi = std::f64::consts::FRAC_PI_2 * j as f64 / n_phi as f64;
        let (cp, sp) = (phi.cos(), phi.sin());
        for &(x, y) in &ring {
            vertices.push(Vec3::new(x * cp, y * cp, z1 + c * sp));
        }
    }
    let pole = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, z_hi));

    let bot = |k: usize| (k % n) as u32;
    let ringv = |j: usize, k: usize| (n + j * n + k % n) as u32;

    let mut triangles = Vec::new();
    // Bottom cap (fan, reversed).
    for k in 1..n - 1 {
        triangles.push([bot(0), bot(k + 1), bot(k)]);
    }
    // Shaft sides.
    for k in 0..n {
        triangles.push([bot(k), bot(k + 1), ringv(0, k + 1)]);
        triangles.push([bot(k), ringv(0, k + 1), ringv(0, k)]);
    }
    // Dome bands.
    for j in 0..n_phi - 1 {
        for k in 0..n {
            triangles.push([ringv(j, k), ringv(j, k + 1), ringv(j + 1, k + 1)]);
            triangles.push([ringv(j, k), ringv(j + 1, k + 1), ringv(j + 1, k)]);
        }
    }
    // Last band to the pole.
    for k in 0..n {
        triangles.push([ringv(n_phi - 1, k), ringv(n_phi - 1, k + 1), pole]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Builds one of the six tools, bbox-centered with tip along +z.
pub fn build_tool_mesh(kind: ToolKind) -> TriangleMesh {
    match kind {
        ToolKind::Mountain => mountain(),
        ToolKind::Rectangle => axis_aligned_box(Vec3::new(0.05, 0.03, 0.08)),
        ToolKind::Pyramid => pyramid(),
        ToolKind::Hex => hex(),
        ToolKind::Cylinder => cylinder(),
        ToolKind::Semisphere => semisphere(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_tool_is_watertight_genus_zero_and_outward() {
        for kind in ToolKind::ALL {
            let m = build_tool_mesh(kind);
            m.check_watertight()
                .unwrap_or_else(|e| panic!("{}: {}", kind, e));
            assert_eq!(m.euler_characteristic(), 2, "{}", kind);
            assert!(m.signed_volume() > 0.0, "{} wound inward", kind);
        }
    }

    #[test]
    fn bounding_boxes_match_published_dimensions() {
        for kind in ToolKind::ALL {
            let m = build_tool_mesh(kind);
            let ext = m.bounding_box_extent();
            let want = kind.bbox_dims();
            for d in 0..3 {
                assert!(
                    (ext[d] - want[d]).abs() < 1e-12,
                    "{} axis {}: {} vs {}",
                    kind,
                    d,
                    ext[d],
                    want[d]
                );
            }
            // Centered at the origin.
            let (lo, hi) = m.bounding_box();
            for d in 0..3 {
                assert!((lo[d] + hi[d]).abs() < 1e-12, "{} not centered", kind);
            }
        }
    }

    #[test]
    fn tool_tips_face_positive_z() {
        // The distinguishing tip feature sits on the +z half.
        for kind in ToolKind::ALL {
            let m = build_tool_mesh(kind);
            let max_z = m.vertices.iter().map(|v| v.z).fold(f64::MIN, f64::max);
            assert!((max_z - kind.bbox_dims()[2] / 2.0).abs() < 1e-12, "{}", kind);
        }
        // Mountain's ridge is a line: exactly two vertices at max z.
        let m = build_tool_mesh(ToolKind::Mountain);
        let max_z = m.vertices.iter().map(|v| v.z).fold(f64::MIN, f64::max);
        let ridge: Vec<_> = m.vertices.iter().filter(|v| v.z == max_z).collect();
        assert_eq!(ridge.len(), 2);
        // Pyramid and semisphere taper to a single apex vertex.
        for kind in [ToolKind::Pyramid, ToolKind::Semisphere] {
            let m = build_tool_mesh(kind);
            let max_z = m.vertices.iter().map(|v| v.z).fold(f64::MIN, f64::max);
            let apex: Vec<_> = m.vertices.iter().filter(|v| v.z == max_z).collect();
            assert_eq!(apex.len(), 1, "{}", kind);
        }
    }
}
