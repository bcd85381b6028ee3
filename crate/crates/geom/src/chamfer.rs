//! Point clouds and the symmetric squared Chamfer distance.

use rayon::prelude::*;

use crate::error::{GeomError, Result};
use crate::Vec3;

/// Coordinate frame a cloud lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    World,
    Canonical,
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Self {
        Self { points, frame }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn mean_min_sq(from: &[Vec3], to: &[Vec3]) -> f64 {
    // Per-point minima in parallel; the final sum runs sequentially in
    // index order so the result does not depend on the thread split.
    let mins: Vec<f64> = from
        .par_iter()
        .map(|a| {
            let mut best = f64::INFINITY;
            for b in to {
                let d = (a - b).norm_squared();
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect();
    let mut acc = 0.0f64;
    for m in mins {
        acc += m;
    }
    acc / from.len() as f64
}

/// Symmetric squared Chamfer distance:
/// `mean_a min_b ‖a−b‖² + mean_b min_a ‖a−b‖²`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptyPointCloud);
    }
    Ok(mean_min_sq(&a.points, &b.points) + mean_min_sq(&b.points, &a.points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            Frame::Canonical,
        )
    }

    #[test]
    fn identical_clouds_have_zero_distance() {
        let a = cloud(&[[0., 0., 0.], [1., 2., 3.], [-1., 0.5, 0.25]]);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_point_pair_is_twice_squared_distance() {
        let a = cloud(&[[0., 0., 0.]]);
        let d = 0.37;
        let b = cloud(&[[0., 0., d]]);
        let cd = chamfer_distance(&a, &b).unwrap();
        assert!((cd - 2.0 * d * d).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_matches_double_loop() {
        let mut rng = 0xfeedu64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        let a = PointCloud::new(
            (0..50).map(|_| Vec3::new(next(), next(), next())).collect(),
            Frame::World,
        );
        let b = PointCloud::new(
            (0..50).map(|_| Vec3::new(next(), next(), next())).collect(),
            Frame::World,
        );
        let ab = chamfer_distance(&a, &b).unwrap();
        let ba = chamfer_distance(&b, &a).unwrap();
        assert_eq!(ab, ba);

        // Exhaustive double-loop oracle.
        let mut term1 = 0.0;
        for p in &a.points {
            let mut best = f64::INFINITY;
            for q in &b.points {
                best = best.min((p - q).norm_squared());
            }
            term1 += best;
        }
        let mut term2 = 0.0;
        for q in &b.points {
            let mut best = f64::INFINITY;
            for p in &a.points {
                best = best.min((q - p).norm_squared());
            }
            term2 += best;
        }
        let oracle = term1 / 50.0 + term2 / 50.0;
        assert_eq!(ab, oracle);
    }

    #[test]
    fn empty_cloud_is_a_contract_error() {
        let a = cloud(&[[0., 0., 0.]]);
        let e = PointCloud::new(vec![], Frame::World);
        assert!(chamfer_distance(&a, &e).is_err());
    }
}
