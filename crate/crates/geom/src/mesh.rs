//! Indexed triangle meshes with watertightness checks.

use std::collections::HashMap;

use crate::error::{GeomError, Result};
use crate::Vec3;

/// Watertight, consistently wound triangle mesh in meters (or canonical
/// units after normalization). Face normals are precomputed.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub face_normals: Vec<Vec3>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let face_normals = compute_face_normals(&vertices, &triangles);
        Self {
            vertices,
            triangles,
            face_normals,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_vertices(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed volume via the divergence theorem; positive for outward
    /// winding.
    pub fn signed_volume(&self) -> f64 {
        let mut v = 0.0;
        for t in &self.triangles {
            let a = self.vertices[t[0] as usize];
            let b = self.vertices[t[1] as usize];
            let c = self.vertices[t[2] as usize];
            v += a.dot(&b.cross(&c)) / 6.0;
        }
        v
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_box_extent(&self) -> Vec3 {
        let (lo, hi) = self.bounding_box();
        hi - lo
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Euler characteristic V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }

    /// Checks that every directed edge appears exactly once and its
    /// reverse exactly once (closed, consistently oriented 2-manifold).
    pub fn check_watertight(&self) -> Result<()> {
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            if t[0] == t[1] || t[1] == t[2] || t[2] == t[0] {
                return Err(GeomError::NotWatertight {
                    detail: format!("degenerate face {:?}", t),
                });
            }
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(GeomError::NotWatertight {
                    detail: format!("directed edge ({},{}) used {} times", a, b, count),
                });
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Err(GeomError::NotWatertight {
                    detail: format!("edge ({},{}) has no opposite-winding twin", a, b),
                });
            }
        }
        Ok(())
    }

    pub fn is_watertight(&self) -> bool {
        self.check_watertight().is_ok()
    }

    /// Splits faces into connected components (shared-edge adjacency) and
    /// keeps the one with the largest surface area.
    pub fn largest_component(&self) -> TriangleMesh {
        if self.triangles.is_empty() {
            return self.clone();
        }
        // Union-find over faces joined by shared undirected edges.
        let mut parent: Vec<usize> = (0..self.triangles.len()).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut edge_to_face: HashMap<(u32, u32), usize> = HashMap::new();
        for (f, t) in self.triangles.iter().enumerate() {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                if let Some(&g) = edge_to_face.get(&key) {
                    let (ra, rb) = (find(&mut parent, f), find(&mut parent, g));
                    if ra != rb {
                        parent[ra] = rb;
                    }
                } else {
                    edge_to_face.insert(key, f);
                }
            }
        }
        let mut area_by_root: HashMap<usize, f64> = HashMap::new();
        for f in 0..self.triangles.len() {
            let r = find(&mut parent, f);
            *area_by_root.entry(r).or_insert(0.0) += self.face_area(f);
        }
        let best = area_by_root
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(r, _)| r)
            .unwrap();

        let mut keep: Vec<[u32; 3]> = Vec::new();
        for f in 0..self.triangles.len() {
            if find(&mut parent, f) == best {
                keep.push(self.triangles[f]);
            }
        }
        // Compact vertices.
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(keep.len());
        for t in keep {
            let mut nt = [0u32; 3];
            for (i, &vi) in t.iter().enumerate() {
                let ni = *remap.entry(vi).or_insert_with(|| {
                    vertices.push(self.vertices[vi as usize]);
                    (vertices.len() - 1) as u32
                });
                nt[i] = ni;
            }
            triangles.push(nt);
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Applies `f` to every vertex, recomputing normals.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh::new(
            self.vertices.iter().map(|&v| f(v)).collect(),
            self.triangles.clone(),
        )
    }
}

fn compute_face_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Vec<Vec3> {
    triangles
        .iter()
        .map(|t| {
            let a = vertices[t[0] as usize];
            let b = vertices[t[1] as usize];
            let c = vertices[t[2] as usize];
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit tetrahedron with outward winding.
    pub fn tetra() -> TriangleMesh {
        let v = vec![
            Vec3::new(0., 0., 0.),
            Vec3::new(1., 0., 0.),
            Vec3::new(0., 1., 0.),
            Vec3::new(0., 0., 1.),
        ];
        let t = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriangleMesh::new(v, t)
    }

    #[test]
    fn tetra_is_watertight_with_euler_two() {
        let m = tetra();
        m.check_watertight().unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn missing_face_is_not_watertight() {
        let mut m = tetra();
        m.triangles.pop();
        assert!(!m.is_watertight());
    }

    #[test]
    fn largest_component_keeps_the_big_piece() {
        let mut m = tetra();
        let offset = Vec3::new(10.0, 0.0, 0.0);
        let scale = 0.1;
        let base = m.vertices.len() as u32;
        let small = tetra();
        for v in &small.vertices {
            m.vertices.push(offset + scale * v);
        }
        for t in &small.triangles {
            m.triangles.push([t[0] + base, t[1] + base, t[2] + base]);
        }
        let m = TriangleMesh::new(m.vertices, m.triangles);
        let kept = m.largest_component();
        assert_eq!(kept.triangles.len(), 4);
        assert!(kept.vertices.iter().all(|v| v.x < 5.0));
        kept.check_watertight().unwrap();
    }
}
