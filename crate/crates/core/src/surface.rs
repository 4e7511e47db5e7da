//! Mold surfaces and the tape tracks laid on them.
//!
//! Tracks are polylines in surface coordinates `(u, v)`. For a plane these are
//! the in-plane x/y coordinates; for a cylinder `u` is arc length around the
//! circumference and `v` the axial position. Both maps are isometries, so the
//! polyline's own length is the 3D arc length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

/// Widest tape the storage spool accepts, m.
pub const MAX_TAPE_WIDTH: f64 = 0.051;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MoldSurface {
    /// Plane z = 0 of `frame`, |x| ≤ extent_x/2, |y| ≤ extent_y/2, normal +z.
    Plane {
        #[serde(default)]
        frame: Pose,
        extent_x: f64,
        extent_y: f64,
    },
    /// Cylinder about the z axis of `frame`, |z| ≤ length/2, normal radially outward.
    Cylinder {
        #[serde(default)]
        frame: Pose,
        radius: f64,
        length: f64,
    },
}

/// Position, unit tangent and outward unit normal, all in the mold frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub tangent: Vec3,
    pub normal: Vec3,
}

impl MoldSurface {
    pub fn frame(&self) -> &Pose {
        match self {
            MoldSurface::Plane { frame, .. } | MoldSurface::Cylinder { frame, .. } => frame,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            MoldSurface::Plane {
                extent_x, extent_y, ..
            } => {
                if !(extent_x > 0.0) || !(extent_y > 0.0) {
                    return Err("plane extents must be strictly positive".into());
                }
            }
            MoldSurface::Cylinder { radius, length, .. } => {
                if !(radius > 0.0) || !(length > 0.0) {
                    return Err("cylinder radius and length must be strictly positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        const SLACK: f64 = 1e-12;
        match *self {
            MoldSurface::Plane {
                extent_x, extent_y, ..
            } => u.abs() <= extent_x / 2.0 + SLACK && v.abs() <= extent_y / 2.0 + SLACK,
            MoldSurface::Cylinder { length, .. } => v.abs() <= length / 2.0 + SLACK,
        }
    }

    /// Point and frame at surface coordinates `(u, v)` heading along `(du, dv)`,
    /// which must be a unit vector.
    pub fn sample(&self, u: f64, v: f64, du: f64, dv: f64) -> SurfaceSample {
        let (local_p, local_t, local_n) = match *self {
            MoldSurface::Plane { .. } => (
                Vec3::new(u, v, 0.0),
                Vec3::new(du, dv, 0.0),
                Vec3::z(),
            ),
            MoldSurface::Cylinder { radius, .. } => {
                let phi = u / radius;
                let (s, c) = phi.sin_cos();
                (
                    Vec3::new(radius * c, radius * s, v),
                    Vec3::new(-s * du, c * du, dv),
                    Vec3::new(c, s, 0.0),
                )
            }
        };
        let f = self.frame();
        SurfaceSample {
            point: f.transform_point(&local_p),
            tangent: f.transform_vector(&local_t),
            normal: f.transform_vector(&local_n),
        }
    }

    /// Unsigned distance of a mold-frame point from the (unbounded) surface.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        let local = self.frame().inverse().transform_point(p);
        match *self {
            MoldSurface::Plane { .. } => local.z.abs(),
            MoldSurface::Cylinder { radius, .. } => (local.xy().norm() - radius).abs(),
        }
    }

    /// Signed distance along `dir` (unit) from `origin` to the first crossing
    /// of the surface, both in the mold frame. `None` if the ray line misses.
    pub fn ray_distance(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let inv = self.frame().inverse();
        let o = inv.transform_point(origin);
        let d = inv.transform_vector(dir);
        match *self {
            MoldSurface::Plane { .. } => {
                if d.z.abs() < 1e-12 {
                    None
                } else {
                    Some(-o.z / d.z)
                }
            }
            MoldSurface::Cylinder { radius, .. } => {
                let a = d.x * d.x + d.y * d.y;
                if a < 1e-12 {
                    return None;
                }
                let b = 2.0 * (o.x * d.x + o.y * d.y);
                let c = o.x * o.x + o.y * o.y - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                Some((-b - disc.sqrt()) / (2.0 * a))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("track {index}: width {width} m outside (0, {MAX_TAPE_WIDTH}] m accepted by the tape spool")]
    WidthOutOfRange { index: usize, width: f64 },
    #[error("track {index}: point ({u}, {v}) lies off the mold surface")]
    TrackOffSurface { index: usize, u: f64, v: f64 },
    #[error("track {index}: {reason}")]
    Degenerate { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapeTrack {
    #[serde(default)]
    pub index: usize,
    pub width: f64,
    /// Polyline vertices in surface coordinates `(u, v)`, m.
    pub points: Vec<[f64; 2]>,
}

/// Position on a track in surface coordinates with the unit heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
}

impl TapeTrack {
    pub fn straight(index: usize, width: f64, from: [f64; 2], to: [f64; 2]) -> Self {
        Self {
            index,
            width,
            points: vec![from, to],
        }
    }

    fn segment_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.points
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths().sum()
    }

    pub fn validate_width(&self) -> Result<(), TrackError> {
        if !(self.width > 0.0 && self.width <= MAX_TAPE_WIDTH) {
            return Err(TrackError::WidthOutOfRange {
                index: self.index,
                width: self.width,
            });
        }
        Ok(())
    }

    pub fn validate(&self, surface: &MoldSurface) -> Result<(), TrackError> {
        self.validate_width()?;
        if self.points.len() < 2 {
            return Err(TrackError::Degenerate {
                index: self.index,
                reason: "needs at least two points".into(),
            });
        }
        if self.segment_lengths().any(|l| !(l > 1e-12)) {
            return Err(TrackError::Degenerate {
                index: self.index,
                reason: "zero-length segment".into(),
            });
        }
        if let Some(p) = self.points.iter().find(|p| !surface.contains(p[0], p[1])) {
            return Err(TrackError::TrackOffSurface {
                index: self.index,
                u: p[0],
                v: p[1],
            });
        }
        Ok(())
    }

    /// Arc-length lookup; `s` beyond the ends extrapolates along the end segments.
    pub fn at(&self, s: f64) -> TrackPoint {
        let n = self.points.len();
        debug_assert!(n >= 2);
        let mut start = 0.0;
        for (i, w) in self.points.windows(2).enumerate() {
            let (du, dv) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            let len = du.hypot(dv);
            let last = i == n - 2;
            if s <= start + len || last {
                let local = s - start;
                let (du, dv) = (du / len, dv / len);
                return TrackPoint {
                    u: w[0][0] + du * local,
                    v: w[0][1] + dv * local,
                    du,
                    dv,
                };
            }
            start += len;
        }
        unreachable!()
    }

    pub fn sample(&self, surface: &MoldSurface, s: f64) -> SurfaceSample {
        let p = self.at(s);
        surface.sample(p.u, p.v, p.du, p.dv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plate() -> MoldSurface {
        MoldSurface::Plane {
            frame: Pose::identity(),
            extent_x: 0.3,
            extent_y: 1.2,
        }
    }

    fn drum() -> MoldSurface {
        MoldSurface::Cylinder {
            frame: Pose::from_translation(Vec3::new(0.1, 0.0, 0.2)),
            radius: 0.2,
            length: 0.5,
        }
    }

    #[test]
    fn width_bound_is_inclusive_at_51mm() {
        let ok = TapeTrack::straight(0, 0.051, [0.0, -0.5], [0.0, 0.5]);
        assert!(ok.validate(&plate()).is_ok());
        let wide = TapeTrack::straight(0, 0.060, [0.0, -0.5], [0.0, 0.5]);
        assert!(matches!(
            wide.validate(&plate()),
            Err(TrackError::WidthOutOfRange { .. })
        ));
        let zero = TapeTrack::straight(0, 0.0, [0.0, -0.5], [0.0, 0.5]);
        assert!(zero.validate_width().is_err());
    }

    #[test]
    fn off_surface_points_are_rejected() {
        let t = TapeTrack::straight(2, 0.02, [0.0, -0.7], [0.0, 0.5]);
        assert!(matches!(
            t.validate(&plate()),
            Err(TrackError::TrackOffSurface { index: 2, .. })
        ));
    }

    #[test]
    fn arc_length_and_on_surface_at_samples() {
        let track = TapeTrack {
            index: 0,
            width: 0.02,
            points: vec![[0.0, -0.2], [0.3, 0.0], [0.35, 0.2]],
        };
        for surface in [plate(), drum()] {
            let l = track.length();
            let h = 1e-6;
            for i in 1..50 {
                let s = l * i as f64 / 50.0;
                let a = track.sample(&surface, s - h).point;
                let b = track.sample(&surface, s + h).point;
                // Central difference straddles a vertex on some samples; the
                // speed is still one on either side.
                let speed = (b - a).norm() / (2.0 * h);
                assert!((speed - 1.0).abs() < 1e-6 || track_vertex_near(&track, s, h), "speed {speed}");
                let p = track.sample(&surface, s);
                assert!(surface.distance_to(&p.point) < 1e-9);
                assert_relative_eq!(p.tangent.norm(), 1.0, epsilon = 1e-12);
                assert!(p.tangent.dot(&p.normal).abs() < 1e-12);
            }
        }
    }

    fn track_vertex_near(t: &TapeTrack, s: f64, h: f64) -> bool {
        let mut acc = 0.0;
        t.segment_lengths().any(|l| {
            acc += l;
            (acc - s).abs() <= h
        })
    }

    #[test]
    fn cylinder_normal_points_outward() {
        let s = drum().sample(0.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(s.normal, Vec3::x(), epsilon = 1e-15);
        assert_relative_eq!(s.point, Vec3::new(0.3, 0.0, 0.2), epsilon = 1e-15);
    }

    #[test]
    fn ray_distances() {
        let d = plate().ray_distance(&Vec3::new(0.0, 0.0, 0.01), &-Vec3::z()).unwrap();
        assert_relative_eq!(d, 0.01, epsilon = 1e-15);
        let d = drum()
            .ray_distance(&Vec3::new(0.5, 0.0, 0.2), &-Vec3::x())
            .unwrap();
        assert_relative_eq!(d, 0.2, epsilon = 1e-12);
        assert!(plate().ray_distance(&Vec3::zeros(), &Vec3::x()).is_none());
    }

    #[test]
    fn extrapolates_past_the_end() {
        let t = TapeTrack::straight(0, 0.02, [0.0, 0.0], [0.0, 1.0]);
        let p = t.at(1.001);
        assert_relative_eq!(p.v, 1.001, epsilon = 1e-15);
    }
}
