//! Planar geometry: points, oriented rectangles, segment and polygon
//! predicates used by the visibility and scene modules.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::fmath;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product; > 0 when `o` is CCW of `self`.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        fmath::hypot(self.x, self.y)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point { x: self.x / n, y: self.y / n }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point { x: self.x + o.x, y: self.y + o.y }
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point { x: self.x - o.x, y: self.y - o.y }
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point { x: self.x * s, y: self.y * s }
    }
}

/// Oriented vehicle rectangle in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub id: u64,
    pub center: Point,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeomError {
    DegenerateFootprint,
}

impl core::fmt::Display for GeomError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GeomError::DegenerateFootprint => write!(f, "footprint has non-positive extent"),
        }
    }
}

impl Footprint {
    pub fn new(id: u64, center: Point, heading: f64, length: f64, width: f64) -> Result<Self, GeomError> {
        if !(length > 0.0) || !(width > 0.0) {
            return Err(GeomError::DegenerateFootprint);
        }
        Ok(Footprint { id, center, heading, length, width })
    }

    /// Forward unit axis.
    pub fn axis_fwd(&self) -> Point {
        Point { x: fmath::cos(self.heading), y: fmath::sin(self.heading) }
    }

    /// Left unit axis (forward rotated +90 degrees).
    pub fn axis_left(&self) -> Point {
        Point { x: -fmath::sin(self.heading), y: fmath::cos(self.heading) }
    }

    /// Corners in CCW order: front-right, front-left, rear-left, rear-right.
    pub fn corners(&self) -> [Point; 4] {
        let u = self.axis_fwd() * (self.length * 0.5);
        let v = self.axis_left() * (self.width * 0.5);
        [
            self.center + u - v,
            self.center + u + v,
            self.center - u + v,
            self.center - u - v,
        ]
    }

    /// Point strictly inside the rectangle (boundary excluded).
    pub fn contains_strict(&self, p: Point) -> bool {
        let d = p - self.center;
        let du = d.dot(self.axis_fwd());
        let dv = d.dot(self.axis_left());
        fmath::abs(du) < self.length * 0.5 && fmath::abs(dv) < self.width * 0.5
    }

    /// Point inside or on the rectangle boundary.
    pub fn contains(&self, p: Point) -> bool {
        let d = p - self.center;
        let du = d.dot(self.axis_fwd());
        let dv = d.dot(self.axis_left());
        fmath::abs(du) <= self.length * 0.5 && fmath::abs(dv) <= self.width * 0.5
    }

    /// True when the open segment (a,b) meets the rectangle's open
    /// interior. Grazing along an edge or through a corner does not count.
    pub fn blocks_segment(&self, a: Point, b: Point) -> bool {
        let u = self.axis_fwd();
        let v = self.axis_left();
        let ra = a - self.center;
        let d = b - a;
        // Segment in the rectangle's local frame.
        let o = Point { x: ra.dot(u), y: ra.dot(v) };
        let dir = Point { x: d.dot(u), y: d.dot(v) };
        let hx = self.length * 0.5;
        let hy = self.width * 0.5;

        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for (oo, dd, half) in [(o.x, dir.x, hx), (o.y, dir.y, hy)] {
            if dd == 0.0 {
                if fmath::abs(oo) >= half {
                    return false;
                }
            } else {
                let t1 = (-half - oo) / dd;
                let t2 = (half - oo) / dd;
                let (a, b) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                if a > lo {
                    lo = a;
                }
                if b < hi {
                    hi = b;
                }
            }
        }
        // Open-interval overlap: tangency collapses to lo == hi.
        lo < hi
    }
}

/// Signed polygon area (shoelace); positive for CCW winding.
pub fn polygon_area(pts: &[Point]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        s += a.cross(b);
    }
    s * 0.5
}

/// Point-in-polygon by ray crossing; boundary points may go either way.
pub fn point_in_polygon(p: Point, pts: &[Point]) -> bool {
    let mut inside = false;
    let n = pts.len();
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Sutherland-Hodgman clip of an arbitrary polygon against a convex CCW
/// clip polygon. Result vertices keep subject winding; may be empty.
pub fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let ca = clip[i];
        let cb = clip[(i + 1) % n];
        let edge = cb - ca;
        let input = out;
        out = Vec::with_capacity(input.len() + 4);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let nxt = input[(j + 1) % m];
            let cur_in = edge.cross(cur - ca) >= 0.0;
            let nxt_in = edge.cross(nxt - ca) >= 0.0;
            if cur_in {
                out.push(cur);
                if !nxt_in {
                    out.push(line_intersection(ca, cb, cur, nxt));
                }
            } else if nxt_in {
                out.push(line_intersection(ca, cb, cur, nxt));
            }
        }
    }
    out
}

/// Intersection of infinite line (a1,a2) with infinite line (b1,b2).
/// Caller guarantees non-parallel lines (clipper only crosses edges).
fn line_intersection(a1: Point, a2: Point, b1: Point, b2: Point) -> Point {
    let da = a2 - a1;
    let db = b2 - b1;
    let denom = da.cross(db);
    let t = (b1 - a1).cross(db) / denom;
    a1 + da * t
}

/// Clips segment (a,b) to the axis-aligned rectangle
/// `[x_min,x_max] x [y_min,y_max]`. Returns the surviving sub-segment.
pub fn clip_segment_aabb(
    a: Point,
    b: Point,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
) -> Option<(Point, Point)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for (p, q) in [
        (-d.x, a.x - x_min),
        (d.x, x_max - a.x),
        (-d.y, a.y - y_min),
        (d.y, y_max - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return None;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    // Untrimmed ends keep their exact input coordinates.
    let start = if t0 == 0.0 { a } else { a + d * t0 };
    let end = if t1 == 1.0 { b } else { a + d * t1 };
    Some((start, end))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_at(cx: f64, cy: f64, side: f64) -> Footprint {
        Footprint::new(0, Point::new(cx, cy), 0.0, side, side).unwrap()
    }

    #[test]
    fn corners_are_ccw() {
        let fp = Footprint::new(1, Point::new(2.0, 3.0), 0.7, 4.0, 2.0).unwrap();
        let area = polygon_area(&fp.corners());
        assert!((area - 8.0).abs() < 1e-12);
    }

    #[test]
    fn contains_matches_local_frame() {
        let fp = Footprint::new(1, Point::new(0.0, 0.0), core::f64::consts::FRAC_PI_2, 4.0, 2.0).unwrap();
        // Heading +y: length along y, width along x.
        assert!(fp.contains_strict(Point::new(0.0, 1.9)));
        assert!(!fp.contains_strict(Point::new(0.0, 2.1)));
        assert!(fp.contains_strict(Point::new(0.9, 0.0)));
        assert!(!fp.contains_strict(Point::new(1.1, 0.0)));
    }

    #[test]
    fn segment_through_interior_blocks() {
        let fp = square_at(0.0, 10.0, 2.0);
        assert!(fp.blocks_segment(Point::new(0.0, 0.0), Point::new(0.0, 20.0)));
    }

    #[test]
    fn segment_missing_rect_passes() {
        let fp = square_at(0.0, 10.0, 2.0);
        assert!(!fp.blocks_segment(Point::new(0.0, 0.0), Point::new(10.0, 0.0)));
    }

    #[test]
    fn segment_grazing_edge_passes() {
        let fp = square_at(0.0, 10.0, 2.0);
        // Runs exactly along the x = -1 edge line.
        assert!(!fp.blocks_segment(Point::new(-1.0, 0.0), Point::new(-1.0, 20.0)));
        // Touches only the corner (1, 9).
        assert!(!fp.blocks_segment(Point::new(0.0, 8.0), Point::new(2.0, 10.0)));
    }

    #[test]
    fn segment_ending_on_boundary_passes() {
        let fp = square_at(0.0, 10.0, 2.0);
        // Open segment: endpoint exactly on the near edge does not enter.
        assert!(!fp.blocks_segment(Point::new(0.0, 0.0), Point::new(0.0, 9.0)));
        assert!(fp.blocks_segment(Point::new(0.0, 0.0), Point::new(0.0, 9.0 + 1e-9)));
    }

    #[test]
    fn clip_keeps_inner_square() {
        let clip = [
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ];
        let subject = [
            Point::new(2.0, 2.0),
            Point::new(4.0, 2.0),
            Point::new(4.0, 4.0),
            Point::new(2.0, 4.0),
        ];
        let out = clip_polygon(&subject, &clip);
        assert_eq!(out.len(), 4);
        assert!((polygon_area(&out) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn clip_cuts_protruding_triangle() {
        let clip = [
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ];
        let subject = [Point::new(5.0, 5.0), Point::new(15.0, 5.0), Point::new(5.0, 15.0)];
        let out = clip_polygon(&subject, &clip);
        // Original area 50; two corner triangles of 12.5 cut away.
        assert!((polygon_area(&out) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn clip_fully_outside_is_empty() {
        let clip = [
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ];
        let subject = [Point::new(20.0, 20.0), Point::new(30.0, 20.0), Point::new(25.0, 30.0)];
        assert!(clip_polygon(&subject, &clip).is_empty());
    }

    #[test]
    fn segment_clip_inside_unchanged() {
        let (a, b) = clip_segment_aabb(
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            0.0,
            0.0,
            10.0,
            10.0,
        )
        .unwrap();
        assert_eq!(a, Point::new(1.0, 1.0));
        assert_eq!(b, Point::new(2.0, 2.0));
    }

    #[test]
    fn segment_clip_crossing() {
        let (a, b) = clip_segment_aabb(
            Point::new(-5.0, 5.0),
            Point::new(15.0, 5.0),
            0.0,
            0.0,
            10.0,
            10.0,
        )
        .unwrap();
        assert_eq!(a, Point::new(0.0, 5.0));
        assert_eq!(b, Point::new(10.0, 5.0));
    }

    #[test]
    fn segment_clip_outside_none() {
        assert!(clip_segment_aabb(
            Point::new(-5.0, 20.0),
            Point::new(15.0, 20.0),
            0.0,
            0.0,
            10.0,
            10.0
        )
        .is_none());
    }

    #[test]
    fn point_in_polygon_square() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 4.0),
            Point::new(0.0, 4.0),
        ];
        assert!(point_in_polygon(Point::new(2.0, 2.0), &sq));
        assert!(!point_in_polygon(Point::new(5.0, 2.0), &sq));
        assert!(!point_in_polygon(Point::new(-1.0, -1.0), &sq));
    }
}
