//! The distributed tactile sensor pair: grid geometry and shear fields.

use geom::Vec3;
use ndiff::{DenseArray, Real};

use crate::pose::RigidTransform;

/// Which of the two gripper pads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorId {
    Left,
    Right,
}

impl SensorId {
    pub const BOTH: [SensorId; 2] = [SensorId::Left, SensorId::Right];

    pub fn name(self) -> &'static str {
        match self {
            SensorId::Left => "left",
            SensorId::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        match self {
            SensorId::Left => 0,
            SensorId::Right => 1,
        }
    }
}

/// The fixed 30×20 tactile query grid on a sensing pad.
///
/// Rows sweep the long axis `s_y ∈ [−0.01215, 0.01215]` m, columns the
/// short axis `s_x ∈ [−0.008, 0.008]` m. Each axis is independently
/// normalized to `[−0.5, 0.5]` for the field models.
#[derive(Debug, Clone, Copy)]
pub struct SensorGrid;

impl SensorGrid {
    pub const ROWS: usize = 30;
    pub const COLS: usize = 20;
    pub const POINTS: usize = Self::ROWS * Self::COLS;
    pub const SX_MAX: f64 = 0.008;
    pub const SY_MAX: f64 = 0.01215;

    /// Metric grid coordinates `(s_x, s_y)` in row-major order.
    pub fn metric_points() -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(Self::POINTS);
        for i in 0..Self::ROWS {
            let sy = -Self::SY_MAX + 2.0 * Self::SY_MAX * i as f64 / (Self::ROWS - 1) as f64;
            for j in 0..Self::COLS {
                let sx = -Self::SX_MAX + 2.0 * Self::SX_MAX * j as f64 / (Self::COLS - 1) as f64;
                pts.push((sx, sy));
            }
        }
        pts
    }

    pub fn normalize(sx: f64, sy: f64) -> (f64, f64) {
        (sx / (2.0 * Self::SX_MAX), sy / (2.0 * Self::SY_MAX))
    }

    /// The normalized 600×2 query matrix fed to the tactile module.
    pub fn normalized_queries<T: Real>() -> DenseArray<T> {
        let mut data = Vec::with_capacity(Self::POINTS * 2);
        for (sx, sy) in Self::metric_points() {
            let (nx, ny) = Self::normalize(sx, sy);
            data.push(T::from_f64(nx));
            data.push(T::from_f64(ny));
        }
        DenseArray::new(vec![Self::POINTS, 2], data).expect("grid shape")
    }
}

/// The in-EE-frame geometry of one sensor pad for a particular grasp:
/// pad center, in-plane axes, and outward (toward-object) normal.
#[derive(Debug, Clone, Copy)]
pub struct SensorFrame {
    pub center: Vec3,
    pub axis_x: Vec3,
    pub axis_y: Vec3,
    pub normal: Vec3,
}

impl SensorFrame {
    /// Pad frame in EE coordinates. `pad_offset` is the distance from the
    /// EE origin to the membrane plane along ±y.
    pub fn in_ee(sensor: SensorId, pad_offset: f64) -> Self {
        let side = match sensor {
            SensorId::Left => -1.0,
            SensorId::Right => 1.0,
        };
        SensorFrame {
            center: Vec3::new(0.0, side * pad_offset, 0.0),
            axis_x: Vec3::new(1.0, 0.0, 0.0),
            axis_y: Vec3::new(0.0, 0.0, 1.0),
            normal: Vec3::new(0.0, -side, 0.0),
        }
    }

    /// Transforms the frame into world coordinates.
    pub fn to_world(&self, ee: &RigidTransform) -> Self {
        SensorFrame {
            center: crate::pose::apply(ee, self.center),
            axis_x: ee.rotation * self.axis_x,
            axis_y: ee.rotation * self.axis_y,
            normal: ee.rotation * self.normal,
        }
    }

    /// World position of a metric grid point on the membrane.
    pub fn grid_point(&self, sx: f64, sy: f64) -> Vec3 {
        self.center + self.axis_x * sx + self.axis_y * sy
    }
}

/// A measured or synthesized shear field on the 600-point grid; vectors
/// are unit length or exactly zero.
#[derive(Debug, Clone)]
pub struct ShearField {
    pub sensor: SensorId,
    /// Row-major `[u, v]` pairs, aligned with [`SensorGrid::metric_points`].
    pub vectors: Vec<[f64; 2]>,
}

/// Below this raw magnitude a shear vector is zeroed instead of
/// normalized.
pub const SHEAR_NORM_THRESHOLD: f64 = 1e-8;

impl ShearField {
    pub fn zero(sensor: SensorId) -> Self {
        Self {
            sensor,
            vectors: vec![[0.0, 0.0]; SensorGrid::POINTS],
        }
    }

    /// Applies the unit-or-zero normalization rule to raw vectors.
    pub fn from_raw(sensor: SensorId, raw: Vec<[f64; 2]>) -> Self {
        assert_eq!(raw.len(), SensorGrid::POINTS, "shear field must cover the grid");
        let vectors = raw
            .into_iter()
            .map(|[u, v]| {
                let mag = (u * u + v * v).sqrt();
                if mag > SHEAR_NORM_THRESHOLD {
                    [u / mag, v / mag]
                } else {
                    [0.0, 0.0]
                }
            })
            .collect();
        Self { sensor, vectors }
    }

    pub fn is_unit_or_zero(&self) -> bool {
        self.vectors.iter().all(|[u, v]| {
            let m = (u * u + v * v).sqrt();
            m == 0.0 || (m - 1.0).abs() < 1e-6
        })
    }

    /// As a 600×2 array for loss evaluation.
    pub fn as_array<T: Real>(&self) -> DenseArray<T> {
        let mut data = Vec::with_capacity(SensorGrid::POINTS * 2);
        for [u, v] in &self.vectors {
            data.push(T::from_f64(*u));
            data.push(T::from_f64(*v));
        }
        DenseArray::new(vec![SensorGrid::POINTS, 2], data).expect("shear shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_600_points_with_exact_bounds() {
        let pts = SensorGrid::metric_points();
        assert_eq!(pts.len(), 600);
        let sx_max = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max);
        let sy_max = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        assert_eq!(sx_max, 0.008);
        assert_eq!(sy_max, 0.01215);
    }

    #[test]
    fn normalized_grid_spans_unit_square() {
        let q: DenseArray<f64> = SensorGrid::normalized_queries();
        assert_eq!(q.shape(), &[600, 2]);
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for i in 0..600 {
            for d in 0..2 {
                lo[d] = lo[d].min(q.at(i, d));
                hi[d] = hi[d].max(q.at(i, d));
            }
        }
        for d in 0..2 {
            assert_eq!(lo[d], -0.5);
            assert_eq!(hi[d], 0.5);
        }
    }

    #[test]
    fn raw_normalization_is_unit_or_zero() {
        let mut raw = vec![[0.0, 0.0]; SensorGrid::POINTS];
        raw[0] = [3.0, 4.0];
        raw[1] = [1e-12, -1e-12];
        let f = ShearField::from_raw(SensorId::Left, raw);
        assert!(f.is_unit_or_zero());
        assert!((f.vectors[0][0] - 0.6).abs() < 1e-12);
        assert!((f.vectors[0][1] - 0.8).abs() < 1e-12);
        assert_eq!(f.vectors[1], [0.0, 0.0]);
    }

    #[test]
    fn sensor_frames_face_each_other() {
        let left = SensorFrame::in_ee(SensorId::Left, 0.02);
        let right = SensorFrame::in_ee(SensorId::Right, 0.02);
        assert!((left.normal + right.normal).norm() < 1e-12);
        assert!((left.center + right.center).norm() < 1e-12);
        // Left pad sits at −y and points toward +y (the object).
        assert!(left.center.y < 0.0 && left.normal.y > 0.0);
    }
}
