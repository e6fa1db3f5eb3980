//! Angular-sweep visibility: an independent cross-check for the
//! segment-test implementation in [`crate::visibility`].
//!
//! Instead of clipping sight segments against rectangle slabs, this
//! formulation works in polar coordinates around the sensor: a cell is
//! hidden by an occluder exactly when its bearing lies strictly inside
//! the occluder's angular wedge and the occluder's near silhouette is
//! crossed strictly before the cell. The two implementations share no
//! geometric predicates, which is the point: tests require them to agree.

use alloc::vec::Vec;

use crate::fmath;
use crate::geom::{point_in_polygon, Footprint, Point};
use crate::grid::{EgoFrame, GridSpec, MaskOgm};
use crate::visibility::ShadowPolygon;

/// Wraps an angle to `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let tau = 2.0 * core::f64::consts::PI;
    let mut x = a % tau;
    if x > core::f64::consts::PI {
        x -= tau;
    } else if x <= -core::f64::consts::PI {
        x += tau;
    }
    x
}

/// Smallest positive ray parameter `t` (ray `s + t·v`) at which an edge of
/// the footprint is crossed, or `None` when the ray misses every edge.
fn entry_parameter(s: Point, v: Point, fp: &Footprint) -> Option<f64> {
    let corners = fp.corners();
    let mut best: Option<f64> = None;
    for i in 0..4 {
        let a = corners[i];
        let e = corners[(i + 1) % 4] - a;
        let denom = v.cross(e);
        if fmath::abs(denom) < 1e-15 {
            continue;
        }
        let rel = a - s;
        let t = rel.cross(e) / denom;
        let u = rel.cross(v) / denom;
        if t > 0.0 && (0.0..=1.0).contains(&u) {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

/// Whether `fp` hides `target` from `sensor`: the bearing must fall
/// strictly inside the corner wedge and the rectangle must be entered
/// strictly before the target. Grazing a corner or an edge, or sitting on
/// the near face, does not hide.
pub fn wedge_occluded(sensor: Point, fp: &Footprint, target: Point) -> bool {
    let v = target - sensor;
    if v.norm() == 0.0 {
        return false;
    }
    let center_bearing = fmath::atan2(fp.center.y - sensor.y, fp.center.x - sensor.x);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in fp.corners() {
        let d = wrap_angle(fmath::atan2(c.y - sensor.y, c.x - sensor.x) - center_bearing);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let bearing = wrap_angle(fmath::atan2(v.y, v.x) - center_bearing);
    if !(bearing > lo && bearing < hi) {
        return false;
    }
    match entry_parameter(sensor, v, fp) {
        Some(t) => t < 1.0,
        None => false,
    }
}

/// Sweep-formulation visibility of one point.
pub fn sweep_visible(sensor: Point, target: Point, occluders: &[Footprint]) -> bool {
    !occluders.iter().any(|fp| wedge_occluded(sensor, fp, target))
}

/// Occlusion mask via the sweep formulation, with the same convention as
/// the production mask: cells whose centers sit inside a listed footprint
/// are marked visible (0) because the occluder itself is observed there.
pub fn sweep_mask(frame: &EgoFrame, occluders: &[Footprint], grid: GridSpec) -> MaskOgm {
    let sensor = Point::new(frame.x, frame.y);
    let mut mask = MaskOgm::zeros(grid);
    for r in 0..grid.height {
        for c in 0..grid.width {
            let center = frame.cell_center_world(r, c, grid);
            if occluders.iter().any(|fp| fp.contains(center)) {
                continue;
            }
            if !sweep_visible(sensor, center, occluders) {
                mask.set(r, c, 1);
            }
        }
    }
    mask
}

/// Rasterizes the union of shadow polygons to a mask, applying the same
/// footprint-cells-are-visible rule as `compute_mask` so the two are
/// comparable.
pub fn rasterize_shadows(
    shadows: &[ShadowPolygon],
    occluders: &[Footprint],
    frame: &EgoFrame,
    grid: GridSpec,
) -> MaskOgm {
    let polys: Vec<&ShadowPolygon> = shadows.iter().filter(|s| s.vertices.len() >= 3).collect();
    let mut mask = MaskOgm::zeros(grid);
    for r in 0..grid.height {
        for c in 0..grid.width {
            let center = frame.cell_center_world(r, c, grid);
            if occluders.iter().any(|fp| fp.contains(center)) {
                continue;
            }
            if polys.iter().any(|s| point_in_polygon(center, &s.vertices)) {
                mask.set(r, c, 1);
            }
        }
    }
    mask
}

/// Intersection-over-union of the 1-cells; 1.0 when both masks are empty.
pub fn mask_iou(a: &MaskOgm, b: &MaskOgm) -> f64 {
    assert_eq!(a.cells.len(), b.cells.len(), "mask dims differ");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.cells.iter().zip(b.cells.iter()) {
        if x == 1 && y == 1 {
            inter += 1;
        }
        if x == 1 || y == 1 {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Fraction of cells on which two masks agree.
pub fn mask_agreement(a: &MaskOgm, b: &MaskOgm) -> f64 {
    assert_eq!(a.cells.len(), b.cells.len(), "mask dims differ");
    let same = a.cells.iter().zip(b.cells.iter()).filter(|(x, y)| x == y).count();
    same as f64 / a.cells.len() as f64
}
