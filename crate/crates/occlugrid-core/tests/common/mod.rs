#![allow(dead_code)]

use occlugrid_core::geom::{Footprint, Point};
use occlugrid_core::rng::{scene_rng, uniform, uniform_index};
use occlugrid_core::scene::{Track, TrackState, TrackTable};
use occlugrid_core::{EgoFrame, GridSpec};

/// Frame whose axes coincide with world axes: with heading pi/2 the ego
/// frame's lateral s equals world x and forward f equals world y, with the
/// sensor at the world origin.
pub fn axis_frame(grid: GridSpec) -> EgoFrame {
    EgoFrame::standard(0.0, 0.0, core::f64::consts::FRAC_PI_2, grid).unwrap()
}

/// Heading-zero frame at the origin: ego (s, f) maps to world (f, -s) with
/// exact arithmetic (sin 0 and cos 0 are exact), so integer cell centers
/// land on integer world coordinates with no rotation residue.
pub fn fwd_frame(grid: GridSpec) -> EgoFrame {
    EgoFrame::standard(0.0, 0.0, 0.0, grid).unwrap()
}

/// Axis-aligned 2x2 square footprint, the workhorse of hand examples.
pub fn unit_square_at(id: u64, x: f64, y: f64) -> Footprint {
    Footprint::new(id, Point::new(x, y), 0.0, 2.0, 2.0).unwrap()
}

/// Vehicle-sized occluders strewn over the forward half of the default
/// grid (under `axis_frame`), never touching the sensor at the origin.
pub fn random_occluders(seed: u64, n_lo: usize, n_hi: usize) -> Vec<Footprint> {
    let mut rng = scene_rng(seed ^ 0x5eed_0cc1);
    let n = n_lo + uniform_index(&mut rng, n_hi - n_lo + 1);
    let mut out: Vec<Footprint> = Vec::new();
    while out.len() < n {
        let x = uniform(&mut rng, -25.0, 25.0);
        let y = uniform(&mut rng, 4.0, 56.0);
        let heading = uniform(&mut rng, 0.0, core::f64::consts::TAU);
        let length = uniform(&mut rng, 3.5, 11.0);
        let width = uniform(&mut rng, 1.6, 2.6);
        let id = 1000 + out.len() as u64;
        let fp = Footprint::new(id, Point::new(x, y), heading, length, width).unwrap();
        if fp.contains(Point::new(0.0, 0.0)) {
            continue;
        }
        out.push(fp);
    }
    out
}

/// Brute-force sight test: sample many interior points of the open segment
/// and ask whether any falls strictly inside an occluder. Independent of
/// the production segment-rectangle predicate.
pub fn dense_ray_visible(
    sensor: Point,
    target: Point,
    occluders: &[Footprint],
    samples: usize,
) -> bool {
    for i in 0..samples {
        let t = (i as f64 + 0.5) / samples as f64;
        let p = sensor + (target - sensor) * t;
        if occluders.iter().any(|fp| fp.contains_strict(p)) {
            return false;
        }
    }
    true
}

/// Interval-clipping reimplementation of the open-segment versus open
/// rectangle test, phrased with world-frame edge half-planes instead of a
/// change into the rectangle's local frame. Exact up to rounding, so it
/// resolves thin tangent chords a point sampler would miss.
pub fn oracle_segment_blocked(a: Point, b: Point, fp: &Footprint) -> bool {
    let corners = fp.corners();
    let d = b - a;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for i in 0..4 {
        let p = corners[i];
        let q = corners[(i + 1) % 4];
        let edge = q - p;
        // Inward normal of a CCW edge; inside means every dot is positive.
        let n = Point::new(-edge.y, edge.x);
        let at_start = n.dot(a - p);
        let slope = n.dot(d);
        if slope == 0.0 {
            if at_start <= 0.0 {
                return false;
            }
        } else {
            let t = -at_start / slope;
            if slope > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
    }
    lo < hi
}

pub fn oracle_cell_visible(sensor: Point, target: Point, occluders: &[Footprint]) -> bool {
    occluders.iter().all(|fp| !oracle_segment_blocked(sensor, target, fp))
}

/// Straight constant-speed track sampled at 10 Hz starting at `t0_ms`.
pub fn make_track(
    id: u64,
    t0_ms: i64,
    n_states: usize,
    start: Point,
    heading: f64,
    speed: f64,
    length: f64,
    width: f64,
    agent_type: u32,
) -> Track {
    let dir = Point::new(heading.cos(), heading.sin());
    let states = (0..n_states)
        .map(|i| {
            let t = t0_ms + 100 * i as i64;
            TrackState {
                frame: t / 100,
                timestamp_ms: t,
                pos: start + dir * (speed * 0.1 * i as f64),
                heading,
                length,
                width,
                agent_type,
            }
        })
        .collect();
    Track { id, states }
}

pub fn table(tracks: Vec<Track>) -> TrackTable {
    TrackTable { tracks }
}

/// Occupied cells split cleanly by their owner's visibility: a
/// ground-truth cell is masked exactly when the vehicle standing on it is
/// hidden from the ego.
pub fn assert_occupancy_split(sample: &occlugrid_core::SceneSample) {
    let grid = sample.mask.spec();
    for r in 0..grid.height {
        for c in 0..grid.width {
            if sample.ground_truth.at(r, c) != 1.0 {
                continue;
            }
            let center = sample.frame.cell_center_world(r, c, grid);
            let owner = sample
                .vehicles
                .iter()
                .find(|v| v.footprint_at(0).is_some_and(|fp| fp.contains(center)))
                .expect("ground-truth cell outside every footprint");
            assert_eq!(
                sample.mask.at(r, c) == 1,
                !owner.visible,
                "cell ({r},{c}): occupied cells are masked exactly when their owner is hidden"
            );
        }
    }
}
