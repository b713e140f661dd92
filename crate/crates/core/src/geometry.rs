//! Planar geometry shared by the simulator, planner and abstraction layers.
//!
//! World frame: `x` east, `y` north, headings counter-clockwise from `+x`.
//! Ego frame: `x` lateral (positive to the right of the vehicle), `y`
//! longitudinal (positive ahead).

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Right-hand perpendicular (clockwise rotation by 90 degrees).
    pub fn right_perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

/// Position plus heading; converts between world and ego frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self { position, heading }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_heading(self.heading)
    }

    pub fn right(&self) -> Vec2 {
        self.forward().right_perp()
    }

    /// World point to ego frame (lateral right, longitudinal ahead).
    pub fn to_ego(&self, world: Vec2) -> Vec2 {
        let d = world - self.position;
        Vec2::new(d.dot(self.right()), d.dot(self.forward()))
    }

    pub fn to_world(&self, ego: Vec2) -> Vec2 {
        self.position + self.right() * ego.x + self.forward() * ego.y
    }

    /// World vector (no translation) to ego frame.
    pub fn vector_to_ego(&self, v: Vec2) -> Vec2 {
        Vec2::new(v.dot(self.right()), v.dot(self.forward()))
    }
}

/// Oriented bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    /// (half length along heading, half width across it)
    pub half_extents: Vec2,
}

impl Obb {
    pub fn new(center: Vec2, heading: f64, half_extents: Vec2) -> Self {
        Self {
            center,
            heading,
            half_extents,
        }
    }

    fn axes(&self) -> [Vec2; 2] {
        let f = Vec2::from_heading(self.heading);
        [f, f.right_perp()]
    }

    /// Projection radius of the box onto a unit axis.
    pub fn radius_on(&self, axis: Vec2) -> f64 {
        let [f, r] = self.axes();
        self.half_extents.x * f.dot(axis).abs() + self.half_extents.y * r.dot(axis).abs()
    }

    /// Separating-axis test. Returns the minimum overlap depth over the four
    /// candidate axes when the boxes strictly overlap; touching boxes do not.
    pub fn penetration(&self, other: &Obb) -> Option<f64> {
        let delta = other.center - self.center;
        let mut depth = f64::INFINITY;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let overlap = self.radius_on(axis) + other.radius_on(axis) - delta.dot(axis).abs();
            if overlap <= 1e-12 {
                return None;
            }
            depth = depth.min(overlap);
        }
        Some(depth)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let [f, r] = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.half_extents.x && d.dot(r).abs() <= self.half_extents.y
    }

    pub fn inflated(&self, margin: f64) -> Obb {
        Obb {
            half_extents: Vec2::new(self.half_extents.x + margin, self.half_extents.y + margin),
            ..*self
        }
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point from the polyline start.
    pub station: f64,
    /// Signed distance, positive to the right of the direction of travel.
    pub lateral: f64,
    pub point: Vec2,
    pub tangent: Vec2,
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Closest-point projection onto a polyline with at least one point.
pub fn project_onto_polyline(points: &[Vec2], p: Vec2) -> Projection {
    assert!(!points.is_empty(), "empty polyline");
    if points.len() == 1 {
        return Projection {
            station: 0.0,
            lateral: 0.0,
            point: points[0],
            tangent: Vec2::new(0.0, 1.0),
        };
    }
    let mut best: Option<(f64, Projection)> = None;
    let mut station = 0.0;
    let last = points.len() - 2;
    for (i, w) in points.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let seg = b - a;
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let tangent = seg * (1.0 / len);
        let mut t = (p - a).dot(tangent);
        // the first and last segments extend to infinity so stations outside
        // the polyline stay meaningful
        if i > 0 {
            t = t.max(0.0);
        }
        if i < last {
            t = t.min(len);
        }
        let foot = a + tangent * t;
        let dist_sq = (p - foot).norm_sq();
        if best.as_ref().is_none_or(|(d, _)| dist_sq < *d) {
            best = Some((
                dist_sq,
                Projection {
                    station: station + t,
                    lateral: (p - foot).dot(tangent.right_perp()),
                    point: foot,
                    tangent,
                },
            ));
        }
        station += len;
    }
    best.map(|(_, proj)| proj).unwrap_or(Projection {
        station: 0.0,
        lateral: 0.0,
        point: points[0],
        tangent: Vec2::new(0.0, 1.0),
    })
}

/// Point at arc length `s` along the polyline (extrapolates past both ends).
pub fn point_at_station(points: &[Vec2], s: f64) -> Vec2 {
    assert!(!points.is_empty(), "empty polyline");
    if points.len() == 1 {
        return points[0];
    }
    if s <= 0.0 {
        let dir = (points[1] - points[0]).normalized();
        return points[0] + dir * s;
    }
    let mut acc = 0.0;
    for w in points.windows(2) {
        let len = w[0].distance(w[1]);
        if acc + len >= s && len > 0.0 {
            return w[0].lerp(w[1], (s - acc) / len);
        }
        acc += len;
    }
    let n = points.len();
    let dir = (points[n - 1] - points[n - 2]).normalized();
    points[n - 1] + dir * (s - acc)
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn ego_frame_right_is_positive_x() {
        let pose = Pose::new(Vec2::new(10.0, 5.0), FRAC_PI_2);
        let ego = pose.to_ego(Vec2::new(11.0, 7.0));
        assert!((ego.x - 1.0).abs() < 1e-12);
        assert!((ego.y - 2.0).abs() < 1e-12);
        let back = pose.to_world(ego);
        assert!(back.distance(Vec2::new(11.0, 7.0)) < 1e-12);
    }

    #[test]
    fn coincident_boxes_penetrate_by_smallest_extent_sum() {
        let a = Obb::new(Vec2::ZERO, 0.0, Vec2::new(2.0, 1.0));
        let depth = a.penetration(&a).unwrap();
        assert!((depth - 2.0).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_collide() {
        let a = Obb::new(Vec2::ZERO, 0.0, Vec2::new(1.0, 1.0));
        let b = Obb::new(Vec2::new(2.0, 2.0), 0.0, Vec2::new(1.0, 1.0));
        assert!(a.penetration(&b).is_none());
        let c = Obb::new(Vec2::new(2.0, 0.0), 0.0, Vec2::new(1.0, 1.0));
        assert!(a.penetration(&c).is_none());
    }

    #[test]
    fn rotated_boxes_separate_on_diagonal_axis() {
        let a = Obb::new(Vec2::ZERO, std::f64::consts::FRAC_PI_4, Vec2::new(1.0, 1.0));
        let b = Obb::new(Vec2::new(2.2, 0.0), 0.0, Vec2::new(0.5, 0.5));
        // diamond tip reaches x = sqrt(2) ~ 1.414 < 1.7
        assert!(a.penetration(&b).is_none());
        let c = Obb::new(Vec2::new(1.8, 0.0), 0.0, Vec2::new(0.5, 0.5));
        assert!(a.penetration(&c).is_some());
    }

    #[test]
    fn projection_is_signed_right_positive() {
        let line = [Vec2::new(0.0, 0.0), Vec2::new(0.0, 10.0)];
        let p = project_onto_polyline(&line, Vec2::new(1.5, 4.0));
        assert!((p.lateral - 1.5).abs() < 1e-12);
        assert!((p.station - 4.0).abs() < 1e-12);
        let q = project_onto_polyline(&line, Vec2::new(-2.0, 12.0));
        assert!((q.lateral + 2.0).abs() < 1e-12);
        assert!((q.station - 12.0).abs() < 1e-12);
    }

    #[test]
    fn station_lookup_interpolates() {
        let line = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 4.0)];
        assert!(point_at_station(&line, 5.0).distance(Vec2::new(3.0, 2.0)) < 1e-12);
        assert!(point_at_station(&line, 9.0).distance(Vec2::new(3.0, 6.0)) < 1e-12);
    }
}
