//! Query-set sampling for signed-distance supervision.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::mesh::TriangleMesh;
use crate::sdf::signed_distance_unchecked;
use crate::Vec3;

/// Which sampling band a query point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    On,
    Near,
    Off,
}

/// One supervised query point in the canonical frame.
#[derive(Debug, Clone)]
pub struct QuerySample {
    pub q: Vec3,
    /// Ground-truth signed distance (exactly zero for surface samples).
    pub s_star: f64,
    /// Unit surface normal; surface samples only.
    pub n_star: Option<Vec3>,
    /// Contact label; contact-scene samples only.
    pub c_star: Option<bool>,
    pub band: Band,
}

/// Per-band sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryCounts {
    pub off: usize,
    pub on: usize,
    pub near: usize,
}

impl Default for QueryCounts {
    fn default() -> Self {
        Self {
            off: 5000,
            on: 15000,
            near: 20000,
        }
    }
}

/// Default standard deviation of the near-surface normal offset, in
/// canonical units.
pub const NEAR_SIGMA: f64 = 0.025;

/// Area-weighted cumulative table for uniform surface sampling.
struct AreaTable {
    cumulative: Vec<f64>,
    total: f64,
}

impl AreaTable {
    fn new(mesh: &TriangleMesh) -> Self {
        let mut cumulative = Vec::with_capacity(mesh.triangles.len());
        let mut total = 0.0;
        for f in 0..mesh.triangles.len() {
            total += mesh.face_area(f);
            cumulative.push(total);
        }
        Self { cumulative, total }
    }

    fn pick(&self, u: f64) -> usize {
        let target = u * self.total;
        match self
            .cumulative
            .binary_search_by(|probe| probe.partial_cmp(&target).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.min(self.cumulative.len() - 1),
        }
    }
}

/// Draws one uniform point on the surface; returns `(point, face index)`.
fn sample_on_surface(mesh: &TriangleMesh, table: &AreaTable, rng: &mut ChaCha12Rng) -> (Vec3, usize) {
    let f = table.pick(rng.random::<f64>());
    let [a, b, c] = mesh.triangle_vertices(f);
    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
    let su = r1.sqrt();
    let (u, v) = (1.0 - su, r2 * su);
    (a + (b - a) * u + (c - a) * v, f)
}

/// Uniform area-weighted surface samples (points only).
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, rng: &mut ChaCha12Rng) -> Vec<Vec3> {
    let table = AreaTable::new(mesh);
    (0..n)
        .map(|_| sample_on_surface(mesh, &table, rng).0)
        .collect()
}

/// Uniform area-weighted surface samples with their face normals.
pub fn sample_surface_points_with_normals(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<(Vec3, Vec3)> {
    let table = AreaTable::new(mesh);
    (0..n)
        .map(|_| {
            let (p, f) = sample_on_surface(mesh, &table, rng);
            (p, mesh.face_normals[f])
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Samples the three-band query set on a canonical-frame mesh.
///
/// On-surface samples carry face normals and exact zero distance;
/// near-surface samples are surface points offset along the normal by a
/// Gaussian perturbation; off-surface samples are uniform in the unit
/// sphere. Near and off labels come from the exhaustive oracle.
pub fn sample_query_set(
    mesh: &TriangleMesh,
    counts: QueryCounts,
    near_sigma: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<QuerySample>> {
    mesh.check_watertight()?;
    let table = AreaTable::new(mesh);
    let mut samples = Vec::with_capacity(counts.on + counts.near + counts.off);

    for _ in 0..counts.on {
        let (p, f) = sample_on_surface(mesh, &table, rng);
        samples.push(QuerySample {
            q: p,
            s_star: 0.0,
            n_star: Some(mesh.face_normals[f]),
            c_star: None,
            band: Band::On,
        });
    }

    // Draw positions first, label via the oracle in parallel after.
    let mut near_pts = Vec::with_capacity(counts.near);
    for _ in 0..counts.near {
        let (p, f) = sample_on_surface(mesh, &table, rng);
        let offset = gaussian(rng) * near_sigma;
        near_pts.push(p + mesh.face_normals[f] * offset);
    }
    let mut off_pts = Vec::with_capacity(counts.off);
    while off_pts.len() < counts.off {
        let p = Vec3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        );
        if p.norm() <= 1.0 {
            off_pts.push(p);
        }
    }

    let label = |pts: Vec<Vec3>, band: Band| -> Vec<QuerySample> {
        pts.into_par_iter()
            .map(|q| QuerySample {
                q,
                s_star: signed_distance_unchecked(mesh, q),
                n_star: None,
                c_star: None,
                band,
            })
            .collect()
    };
    samples.extend(label(near_pts, Band::Near));
    samples.extend(label(off_pts, Band::Off));
    Ok(samples)
}
