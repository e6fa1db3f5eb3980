//! Synthetic 4-arm intersection scenes: lane-boundary map, constant-speed
//! vehicles on straight or turning paths, and deterministic per-seed
//! sample construction.

use alloc::string::String;
use alloc::vec::Vec;

use crate::fmath;
use crate::geom::{Footprint, Point};
use crate::grid::EgoFrame;
use crate::rng::{scene_rng, uniform, uniform_index, SceneRng};
use crate::scene::{
    build_sample, BuildConfig, MapElement, RoadType, SceneError, SceneMap, SceneSample, Track,
    TrackState, TrackTable,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub build: BuildConfig,
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub truck_prob: f64,
    pub arm_length: f64,
    pub road_half_width: f64,
    pub lane_offset: f64,
    /// Simulated frames beyond the first (11 => 1.1 s of history).
    pub sim_steps: usize,
    pub max_retries: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            build: BuildConfig::default(),
            min_vehicles: 2,
            max_vehicles: 8,
            speed_min: 3.0,
            speed_max: 12.0,
            truck_prob: 0.3,
            arm_length: 80.0,
            road_half_width: 4.0,
            lane_offset: 2.0,
            sim_steps: 11,
            max_retries: 100,
        }
    }
}

/// Lane boundaries and centerlines of the crossing roads.
pub fn intersection_map(cfg: &SynthConfig) -> SceneMap {
    let l = cfg.arm_length;
    let h = cfg.road_half_width;
    let mut elements = Vec::new();
    let mut lane = |id: String, pts: [(f64, f64); 2]| {
        elements.push(MapElement {
            id,
            road_type: RoadType::LaneBoundary,
            points: pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        });
    };
    // East-west road edges, split at the intersection.
    lane("ew_n_w".into(), [(-l, h), (-h, h)]);
    lane("ew_n_e".into(), [(h, h), (l, h)]);
    lane("ew_s_w".into(), [(-l, -h), (-h, -h)]);
    lane("ew_s_e".into(), [(h, -h), (l, -h)]);
    // North-south road edges.
    lane("ns_w_n".into(), [(-h, l), (-h, h)]);
    lane("ns_w_s".into(), [(-h, -h), (-h, -l)]);
    lane("ns_e_n".into(), [(h, l), (h, h)]);
    lane("ns_e_s".into(), [(h, -h), (h, -l)]);
    for (id, pts) in [
        ("cl_ns", [(0.0, -l), (0.0, l)]),
        ("cl_ew", [(-l, 0.0), (l, 0.0)]),
    ] {
        elements.push(MapElement {
            id: id.into(),
            road_type: RoadType::Centerline,
            points: pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        });
    }
    SceneMap { elements }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Route {
    Straight,
    Left,
    Right,
}

enum PathSeg {
    Line { start: Point, dir: Point, len: f64 },
    Arc { center: Point, radius: f64, start_angle: f64, sweep: f64 },
}

impl PathSeg {
    fn len(&self) -> f64 {
        match self {
            PathSeg::Line { len, .. } => *len,
            PathSeg::Arc { radius, sweep, .. } => radius * fmath::abs(*sweep),
        }
    }

    fn pose_at(&self, s: f64) -> (Point, f64) {
        match self {
            PathSeg::Line { start, dir, .. } => {
                (*start + *dir * s, fmath::atan2(dir.y, dir.x))
            }
            PathSeg::Arc { center, radius, start_angle, sweep } => {
                let ang = start_angle + sweep * (s / self.len());
                let pos = *center + Point::new(fmath::cos(ang), fmath::sin(ang)) * *radius;
                let heading = ang + if *sweep >= 0.0 { core::f64::consts::FRAC_PI_2 } else { -core::f64::consts::FRAC_PI_2 };
                (pos, heading)
            }
        }
    }
}

struct VehiclePath {
    segs: Vec<PathSeg>,
    total_len: f64,
}

impl VehiclePath {
    fn pose_at(&self, s: f64) -> (Point, f64) {
        let mut rem = s.max(0.0).min(self.total_len);
        for seg in &self.segs {
            let l = seg.len();
            if rem <= l {
                return seg.pose_at(rem);
            }
            rem -= l;
        }
        let last = self.segs.last().unwrap();
        last.pose_at(last.len())
    }
}

fn rot(p: Point, ang: f64) -> Point {
    let (s, c) = (fmath::sin(ang), fmath::cos(ang));
    Point::new(p.x * c - p.y * s, p.x * s + p.y * c)
}

/// Route geometry in arm-local coordinates (travel along +x), rotated by
/// the arm angle. Right-hand traffic: the approach lane sits right of the
/// centerline; turns connect to the matching exit lanes.
fn build_path(arm: usize, route: Route, cfg: &SynthConfig) -> VehiclePath {
    let ang = arm as f64 * core::f64::consts::FRAC_PI_2;
    let l = cfg.arm_length;
    let h = cfg.road_half_width;
    let off = cfg.lane_offset;
    let approach_len = l - h;

    let mut segs: Vec<PathSeg> = Vec::new();
    let line = |a: (f64, f64), d: (f64, f64), len: f64| PathSeg::Line {
        start: rot(Point::new(a.0, a.1), ang),
        dir: rot(Point::new(d.0, d.1), ang),
        len,
    };
    let arc = |c: (f64, f64), r: f64, a0: f64, sweep: f64| PathSeg::Arc {
        center: rot(Point::new(c.0, c.1), ang),
        radius: r,
        start_angle: a0 + ang,
        sweep,
    };

    segs.push(line((-l, -off), (1.0, 0.0), approach_len));
    match route {
        Route::Straight => {
            segs.push(line((-h, -off), (1.0, 0.0), l + h));
        }
        Route::Right => {
            let r = h - off;
            segs.push(arc((-h, -h), r, core::f64::consts::FRAC_PI_2, -core::f64::consts::FRAC_PI_2));
            segs.push(line((-off, -h), (0.0, -1.0), approach_len));
        }
        Route::Left => {
            let r = h + off;
            segs.push(arc((-h, h), r, -core::f64::consts::FRAC_PI_2, core::f64::consts::FRAC_PI_2));
            segs.push(line((off, h), (0.0, 1.0), approach_len));
        }
    }
    let total_len = segs.iter().map(|s| s.len()).sum();
    VehiclePath { segs, total_len }
}

struct SimVehicle {
    arm: usize,
    route: Route,
    path: VehiclePath,
    s0: f64,
    speed: f64,
    length: f64,
    width: f64,
    agent_type: u32,
}

impl SimVehicle {
    fn footprint_at_frame(&self, id: u64, frame: usize) -> Footprint {
        let s = self.s0 + self.speed * 0.1 * frame as f64;
        let (pos, heading) = self.path.pose_at(s);
        Footprint::new(id, pos, heading, self.length, self.width).unwrap()
    }
}

/// Oriented-rectangle overlap via separating axes, with a safety margin.
fn footprints_collide(a: &Footprint, b: &Footprint, margin: f64) -> bool {
    let axes = [a.axis_fwd(), a.axis_left(), b.axis_fwd(), b.axis_left()];
    let d = b.center - a.center;
    for ax in axes {
        let ra = fmath::abs(a.axis_fwd().dot(ax)) * a.length * 0.5
            + fmath::abs(a.axis_left().dot(ax)) * a.width * 0.5;
        let rb = fmath::abs(b.axis_fwd().dot(ax)) * b.length * 0.5
            + fmath::abs(b.axis_left().dot(ax)) * b.width * 0.5;
        if fmath::abs(d.dot(ax)) > ra + rb + margin {
            return false;
        }
    }
    true
}

fn sample_dims(rng: &mut SceneRng, cfg: &SynthConfig) -> (f64, f64, u32) {
    let truck = uniform(rng, 0.0, 1.0) < cfg.truck_prob;
    if truck {
        (uniform(rng, 8.0, 12.0), uniform(rng, 2.4, 2.6), 2)
    } else {
        (uniform(rng, 4.0, 5.2), uniform(rng, 1.7, 2.1), 1)
    }
}

fn sample_vehicle(rng: &mut SceneRng, cfg: &SynthConfig) -> SimVehicle {
    let arm = uniform_index(rng, 4);
    let route = match uniform_index(rng, 4) {
        0 | 1 => Route::Straight,
        2 => Route::Left,
        _ => Route::Right,
    };
    let path = build_path(arm, route, cfg);
    let speed = uniform(rng, cfg.speed_min, cfg.speed_max);
    let (length, width, agent_type) = sample_dims(rng, cfg);
    // Place the end-of-history position near the intersection so scenes
    // actually interact.
    let horizon = speed * 0.1 * cfg.sim_steps as f64;
    let mid = path.total_len * 0.5;
    let s_end = uniform(rng, mid - 45.0, mid + 25.0);
    let s0 = (s_end - horizon).max(0.0).min(path.total_len - horizon);
    SimVehicle { arm, route, path, s0, speed, length, width, agent_type }
}

/// Queue member: same lane as the leader, a car-following gap behind it,
/// never faster than it (the gap cannot close during the simulation).
fn follower_vehicle(rng: &mut SceneRng, leader: &SimVehicle, cfg: &SynthConfig) -> SimVehicle {
    let path = build_path(leader.arm, leader.route, cfg);
    let speed = uniform(rng, cfg.speed_min, leader.speed.max(cfg.speed_min));
    let (length, width, agent_type) = sample_dims(rng, cfg);
    let gap = uniform(rng, 5.0, 10.0) + 0.5 * (length + leader.length);
    let s0 = (leader.s0 - gap).max(0.0);
    SimVehicle { arm: leader.arm, route: leader.route, path, s0, speed, length, width, agent_type }
}

fn try_scene(rng: &mut SceneRng, cfg: &SynthConfig) -> Option<(TrackTable, u64, i64)> {
    // Max of two draws biases toward busy scenes without leaving the range.
    let span = cfg.max_vehicles - cfg.min_vehicles + 1;
    let n = cfg.min_vehicles + uniform_index(rng, span).max(uniform_index(rng, span));
    let mut vehicles: Vec<SimVehicle> = Vec::with_capacity(n);
    'place: for k in 0..n {
        for _attempt in 0..50 {
            // Most traffic queues up behind somebody; queues are what
            // make one vehicle hide another from the ego's viewpoint.
            let cand = if k > 0 && uniform(rng, 0.0, 1.0) < 0.75 {
                let target = uniform_index(rng, vehicles.len());
                follower_vehicle(rng, &vehicles[target], cfg)
            } else {
                sample_vehicle(rng, cfg)
            };
            let clear = (0..=cfg.sim_steps).all(|f| {
                let cf = cand.footprint_at_frame(u64::MAX, f);
                vehicles
                    .iter()
                    .enumerate()
                    .all(|(j, v)| !footprints_collide(&cf, &v.footprint_at_frame(j as u64, f), 0.3))
            });
            if clear {
                vehicles.push(cand);
                continue 'place;
            }
        }
        return None;
    }

    let t_ms = (cfg.sim_steps as i64) * 100;
    let tracks = TrackTable {
        tracks: vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| Track {
                id: i as u64,
                states: (0..=cfg.sim_steps)
                    .map(|f| {
                        let s = v.s0 + v.speed * 0.1 * f as f64;
                        let (pos, heading) = v.path.pose_at(s);
                        TrackState {
                            frame: f as i64,
                            timestamp_ms: f as i64 * 100,
                            pos,
                            heading,
                            length: v.length,
                            width: v.width,
                            agent_type: v.agent_type,
                        }
                    })
                    .collect(),
            })
            .collect(),
    };

    // Ego candidates: vehicles that have at least one other vehicle
    // inside their grid at sample time.
    let grid = cfg.build.grid;
    let mut candidates: Vec<u64> = Vec::new();
    for (i, v) in vehicles.iter().enumerate() {
        let (pos, heading) = {
            let s = v.s0 + v.speed * 0.1 * cfg.sim_steps as f64;
            v.path.pose_at(s)
        };
        let Ok(frame) = EgoFrame::standard(pos.x, pos.y, heading, grid) else {
            continue;
        };
        let any_other = vehicles.iter().enumerate().any(|(j, o)| {
            if i == j {
                return false;
            }
            let fp = o.footprint_at_frame(j as u64, cfg.sim_steps);
            crate::grid::world_to_cell(fp.center, &frame, grid).is_some()
                || fp
                    .corners()
                    .iter()
                    .any(|&c| crate::grid::world_to_cell(c, &frame, grid).is_some())
        });
        if any_other {
            candidates.push(i as u64);
        }
    }
    if candidates.is_empty() {
        return None;
    }
    let ego = candidates[uniform_index(rng, candidates.len())];
    Some((tracks, ego, t_ms))
}

/// Deterministic per-seed scene sample. Resamples internally until an ego
/// with company exists; errors after `max_retries` attempts.
pub fn synth_scene(seed: u64, cfg: &SynthConfig) -> Result<SceneSample, SceneError> {
    let mut rng = scene_rng(seed);
    for _ in 0..cfg.max_retries {
        if let Some((tracks, ego, t_ms)) = try_scene(&mut rng, cfg) {
            let map = intersection_map(cfg);
            return build_sample(&tracks, &map, ego, t_ms, &cfg.build, seed);
        }
    }
    Err(SceneError::RetriesExhausted { attempts: cfg.max_retries })
}

/// Convenience used by data generation and tests.
pub fn synth_scenes(
    seeds: impl Iterator<Item = u64>,
    cfg: &SynthConfig,
) -> Result<Vec<SceneSample>, SceneError> {
    seeds.map(|s| synth_scene(s, cfg)).collect()
}
