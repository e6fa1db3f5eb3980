//! Exact 2-D visibility from the ego sensor: per-cell sight-line tests,
//! the occlusion mask, per-occluder shadow polygons, and their resampled
//! boundary polylines.

use alloc::vec::Vec;
use core::fmt;

use crate::fmath;
use crate::geom::{self, Footprint, Point};
use crate::grid::{EgoFrame, GridSpec, MaskOgm};
use crate::scene::{Polyline, SourceTag, Vector, VectorClass};

#[derive(Clone, Debug, PartialEq)]
pub enum VisibilityError {
    /// The sensor sits strictly inside an occluder rectangle.
    DegenerateViewpoint { occluder: u64 },
    DegenerateOccluder { occluder: u64 },
}

impl fmt::Display for VisibilityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VisibilityError::DegenerateViewpoint { occluder } => {
                write!(f, "sensor lies inside occluder {occluder}")
            }
            VisibilityError::DegenerateOccluder { occluder } => {
                write!(f, "occluder {occluder} has zero area")
            }
        }
    }
}

/// Region hidden behind one occluder, clipped to the grid rectangle.
/// Vertices are world coordinates in CCW order; empty when the shadow
/// misses the grid entirely.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowPolygon {
    pub occluder: u64,
    pub vertices: Vec<Point>,
}

fn check_viewpoint(sensor: Point, occluders: &[Footprint]) -> Result<(), VisibilityError> {
    for fp in occluders {
        if fp.contains_strict(sensor) {
            return Err(VisibilityError::DegenerateViewpoint { occluder: fp.id });
        }
    }
    Ok(())
}

fn segment_clear(sensor: Point, target: Point, occluders: &[Footprint]) -> bool {
    occluders.iter().all(|fp| !fp.blocks_segment(sensor, target))
}

/// True when the open sight segment from `sensor` to `cell_center` meets
/// no occluder interior. Boundary grazing counts as visible.
pub fn cell_visible(
    sensor: Point,
    cell_center: Point,
    occluders: &[Footprint],
) -> Result<bool, VisibilityError> {
    check_viewpoint(sensor, occluders)?;
    Ok(segment_clear(sensor, cell_center, occluders))
}

/// Occlusion mask over the grid: 1 where the cell center is invisible
/// from the ego position. Cells whose centers lie inside an occluder
/// rectangle are 0 (the occluder itself is observed).
pub fn compute_mask(
    frame: &EgoFrame,
    occluders: &[Footprint],
    grid: GridSpec,
) -> Result<MaskOgm, VisibilityError> {
    let sensor = Point::new(frame.x, frame.y);
    check_viewpoint(sensor, occluders)?;
    let mut mask = MaskOgm::zeros(grid);
    for r in 0..grid.height {
        for c in 0..grid.width {
            let center = frame.cell_center_world(r, c, grid);
            if occluders.iter().any(|fp| fp.contains(center)) {
                continue;
            }
            if !segment_clear(sensor, center, occluders) {
                mask.set(r, c, 1);
            }
        }
    }
    Ok(mask)
}

/// Grid rectangle corners in world coordinates, CCW.
pub fn grid_corners_world(frame: &EgoFrame, grid: GridSpec) -> [Point; 4] {
    let (s0, f0, s1, f1) = frame.grid_bounds_ego(grid);
    [
        frame.to_world(Point::new(s0, f0)),
        frame.to_world(Point::new(s1, f0)),
        frame.to_world(Point::new(s1, f1)),
        frame.to_world(Point::new(s0, f1)),
    ]
}

/// Shadow cast by one occluder: the wedge between the two tangent rays,
/// bounded near the occluder by its far (back-facing) silhouette chain,
/// clipped to the grid. Result may be empty.
pub fn shadow_polygon(
    sensor: Point,
    occluder: &Footprint,
    frame: &EgoFrame,
    grid: GridSpec,
) -> Result<ShadowPolygon, VisibilityError> {
    if !(occluder.length > 0.0) || !(occluder.width > 0.0) {
        return Err(VisibilityError::DegenerateOccluder { occluder: occluder.id });
    }
    if occluder.contains_strict(sensor) {
        return Err(VisibilityError::DegenerateViewpoint { occluder: occluder.id });
    }
    let corners = occluder.corners();

    // Back-facing edges: outward normal points away from the sensor.
    let mut back = [false; 4];
    for i in 0..4 {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        let e = b - a;
        let outward = Point::new(e.y, -e.x);
        back[i] = (sensor - a).dot(outward) <= 0.0;
    }
    // The back chain is one contiguous cyclic run; find where it starts.
    let Some(start) = (0..4).find(|&i| back[i] && !back[(i + 3) % 4]) else {
        // Sensor on an edge line with every edge classified back: no
        // usable silhouette, treat as empty shadow.
        return Ok(ShadowPolygon { occluder: occluder.id, vertices: Vec::new() });
    };
    let mut chain: Vec<Point> = Vec::with_capacity(5);
    chain.push(corners[start]);
    let mut i = start;
    while back[i] {
        chain.push(corners[(i + 1) % 4]);
        i = (i + 1) % 4;
    }
    let t_a = chain[0];
    let t_b = *chain.last().unwrap();

    // Far extent: beyond every grid corner with margin, so the two chords
    // standing in for the far arc stay outside the grid.
    let gc = grid_corners_world(frame, grid);
    let mut reach = 0.0_f64;
    for p in gc {
        let d = (p - sensor).norm();
        if d > reach {
            reach = d;
        }
    }
    let big_r = 4.0 * reach + 100.0;

    let u_a = (t_a - sensor).normalized();
    let u_b = (t_b - sensor).normalized();
    let mut bis = u_a + u_b;
    if bis.norm() < 1e-12 {
        // Tangent rays are opposite (sensor on the silhouette line).
        bis = Point::new(-u_a.y, u_a.x);
    }
    let bis = bis.normalized();

    // CCW: tangent A, out along its ray, across the far arc, back in
    // along ray B, then the reversed silhouette chain.
    let mut poly: Vec<Point> = Vec::with_capacity(chain.len() + 3);
    poly.push(t_a);
    poly.push(t_a + u_a * big_r);
    poly.push(sensor + bis * big_r);
    poly.push(t_b + u_b * big_r);
    for p in chain.iter().rev() {
        poly.push(*p);
    }
    // chain starts at t_a, which is already the polygon's first vertex.
    poly.pop();

    let clipped = geom::clip_polygon(&poly, &gc);
    let clipped = if fmath::abs(geom::polygon_area(&clipped)) < 1e-9 {
        Vec::new()
    } else {
        clipped
    };
    Ok(ShadowPolygon { occluder: occluder.id, vertices: clipped })
}

/// Resamples each shadow boundary into chained ego-frame vectors with
/// class = occlusion; every loop closes (last end == first start).
pub fn occlusion_polylines(
    shadows: &[ShadowPolygon],
    step: f64,
    frame: &EgoFrame,
    first_id: u64,
) -> Vec<Polyline> {
    let mut out = Vec::new();
    let mut next_id = first_id;
    for sh in shadows {
        if sh.vertices.len() < 3 {
            continue;
        }
        let ego: Vec<Point> = sh.vertices.iter().map(|&p| frame.to_ego(p)).collect();
        let n = ego.len();
        let mut vectors = Vec::new();
        for i in 0..n {
            let a = ego[i];
            let b = ego[(i + 1) % n];
            let len = (b - a).norm();
            let pieces = if len > 0.0 {
                fmath::ceil(len / step).max(1.0) as usize
            } else {
                1
            };
            let mut prev = a;
            for k in 0..pieces {
                // Reusing the exact endpoint keeps the loop closed bitwise.
                let end = if k + 1 == pieces {
                    b
                } else {
                    a + (b - a) * ((k + 1) as f64 / pieces as f64)
                };
                vectors.push(Vector {
                    start: prev,
                    end,
                    class: VectorClass::Occlusion,
                    attrs: [0.0, 0.0, 0.0],
                });
                prev = end;
            }
        }
        if vectors.is_empty() {
            continue;
        }
        out.push(Polyline {
            id: next_id,
            class: VectorClass::Occlusion,
            source: SourceTag::Occluder(sh.occluder),
            vectors,
        });
        next_id += 1;
    }
    out
}
