//! Scene representation: vectors, polylines, track tables, maps, and the
//! sample builder that turns a scene at one timestamp into a training
//! example (polyline set + mask + ground-truth occupancy).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geom::{Footprint, Point};
use crate::grid::{EgoFrame, GridSpec, MaskOgm, Ogm};
use crate::visibility::{self, VisibilityError};

/// Vector class codes per the input encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VectorClass {
    Trajectory,
    SceneContext,
    Occlusion,
}

impl VectorClass {
    pub fn code(self) -> u8 {
        match self {
            VectorClass::Trajectory => 0,
            VectorClass::SceneContext => 1,
            VectorClass::Occlusion => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(VectorClass::Trajectory),
            1 => Some(VectorClass::SceneContext),
            2 => Some(VectorClass::Occlusion),
            _ => None,
        }
    }
}

/// One directed segment in ego-frame meters.
///
/// Attribute slots: `[0]` timestamp index (trajectory only, -10..0),
/// `[1]` agent-type or road-type code, `[2]` reserved (0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector {
    pub start: Point,
    pub end: Point,
    pub class: VectorClass,
    pub attrs: [f64; 3],
}

/// Identity of the scene element a polyline came from.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceTag {
    Track(u64),
    MapElement(String),
    Occluder(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub id: u64,
    pub class: VectorClass,
    pub source: SourceTag,
    pub vectors: Vec<Vector>,
}

/// One recorded pose of a vehicle, indexed by history offset
/// (0 = sample time, -1 = 100 ms earlier, ...).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehiclePose {
    pub offset: i32,
    pub pos: Point,
    pub heading: f64,
}

/// Per-vehicle provenance carried by a sample: geometry and history for
/// every vehicle present at sample time (the baseline's raster input and
/// the ground truth are both derived from these).
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleRecord {
    pub id: u64,
    pub agent_type: u32,
    pub length: f64,
    pub width: f64,
    pub is_ego: bool,
    pub visible: bool,
    /// Sorted by offset, last entry has offset 0.
    pub poses: Vec<VehiclePose>,
}

impl VehicleRecord {
    pub fn pose_at(&self, offset: i32) -> Option<&VehiclePose> {
        self.poses.iter().find(|p| p.offset == offset)
    }

    pub fn footprint_at(&self, offset: i32) -> Option<Footprint> {
        let p = self.pose_at(offset)?;
        Footprint::new(self.id, p.pos, p.heading, self.length, self.width).ok()
    }
}

/// One training / evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub id: u64,
    pub timestamp_ms: i64,
    pub frame: EgoFrame,
    pub polylines: Vec<Polyline>,
    pub mask: MaskOgm,
    pub ground_truth: Ogm,
    pub vehicles: Vec<VehicleRecord>,
}

/// One tracked vehicle state at one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackState {
    pub frame: i64,
    pub timestamp_ms: i64,
    pub pos: Point,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub agent_type: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: u64,
    pub states: Vec<TrackState>,
}

/// All tracks of one recording, sorted by id, states sorted by frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackTable {
    pub tracks: Vec<Track>,
}

/// Nominal frame spacing of the 10 Hz track data.
pub const STEP_MS: i64 = 100;
/// Allowed timestamp jitter around the nominal spacing.
pub const STEP_JITTER_MS: i64 = 1;

impl TrackTable {
    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    /// Checks per-track monotone timestamps at 10 Hz spacing.
    pub fn validate(&self) -> Result<(), SceneError> {
        for t in &self.tracks {
            for w in t.states.windows(2) {
                let dt = w[1].timestamp_ms - w[0].timestamp_ms;
                if dt <= 0 {
                    return Err(SceneError::NonMonotoneTimestamps { track: t.id });
                }
                if (dt - STEP_MS).abs() > STEP_JITTER_MS {
                    return Err(SceneError::IrregularSampling { track: t.id, dt_ms: dt });
                }
            }
        }
        Ok(())
    }
}

/// Road element categories accepted in map data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoadType {
    LaneBoundary,
    Curb,
    Centerline,
    Crosswalk,
}

impl RoadType {
    pub fn code(self) -> u8 {
        match self {
            RoadType::LaneBoundary => 1,
            RoadType::Curb => 2,
            RoadType::Centerline => 3,
            RoadType::Crosswalk => 4,
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "lane_boundary" => Some(RoadType::LaneBoundary),
            "curb" => Some(RoadType::Curb),
            "centerline" => Some(RoadType::Centerline),
            "crosswalk" => Some(RoadType::Crosswalk),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RoadType::LaneBoundary => "lane_boundary",
            RoadType::Curb => "curb",
            RoadType::Centerline => "centerline",
            RoadType::Crosswalk => "crosswalk",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapElement {
    pub id: String,
    pub road_type: RoadType,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneMap {
    pub elements: Vec<MapElement>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneError {
    NonMonotoneTimestamps { track: u64 },
    IrregularSampling { track: u64, dt_ms: i64 },
    EgoMissing { ego: u64, t_ms: i64 },
    Visibility(VisibilityError),
    RetriesExhausted { attempts: u32 },
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::NonMonotoneTimestamps { track } => {
                write!(f, "track {track} has non-increasing timestamps")
            }
            SceneError::IrregularSampling { track, dt_ms } => {
                write!(f, "track {track} has a {dt_ms} ms step, expected 100 ms")
            }
            SceneError::EgoMissing { ego, t_ms } => {
                write!(f, "ego track {ego} has no state at {t_ms} ms")
            }
            SceneError::Visibility(e) => write!(f, "{e}"),
            SceneError::RetriesExhausted { attempts } => {
                write!(f, "no valid scene found after {attempts} attempts")
            }
        }
    }
}

impl From<VisibilityError> for SceneError {
    fn from(e: VisibilityError) -> Self {
        SceneError::Visibility(e)
    }
}

/// Knobs for sample construction.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildConfig {
    pub grid: GridSpec,
    /// History vectors per trajectory (10 => 11 poses over 1 s).
    pub history_steps: usize,
    /// Resampling step for map polylines, meters.
    pub map_segment_len: f64,
    /// Resampling step for occlusion boundaries, meters.
    pub occlusion_step: f64,
    /// Whether the ego's own trajectory is an input polyline.
    pub include_ego_trajectory: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            grid: GridSpec::default_scene(),
            history_steps: 10,
            map_segment_len: 5.0,
            occlusion_step: 5.0,
            include_ego_trajectory: true,
        }
    }
}

/// All `(track id, timestamp)` pairs where the track has been continuously
/// present for `min_presence_s` seconds, enumerated at 10 Hz.
pub fn select_egos(tracks: &TrackTable, min_presence_s: f64) -> Vec<(u64, i64)> {
    let need = (min_presence_s * 10.0 + 0.5) as usize + 1;
    let mut out = Vec::new();
    for t in &tracks.tracks {
        for i in 0..t.states.len() {
            if i + 1 < need {
                continue;
            }
            let window = &t.states[i + 1 - need..=i];
            let contiguous = window.windows(2).all(|w| {
                let dt = w[1].timestamp_ms - w[0].timestamp_ms;
                (dt - STEP_MS).abs() <= STEP_JITTER_MS
            });
            if contiguous {
                out.push((t.id, t.states[i].timestamp_ms));
            }
        }
    }
    out
}

fn state_at(track: &Track, t_ms: i64) -> Option<&TrackState> {
    track
        .states
        .iter()
        .find(|s| (s.timestamp_ms - t_ms).abs() <= STEP_JITTER_MS)
}

fn footprint_of(state: &TrackState, id: u64) -> Option<Footprint> {
    Footprint::new(id, state.pos, state.heading, state.length, state.width).ok()
}

/// A footprint overlaps the grid when its center or any corner maps to a
/// cell.
fn footprint_in_grid(fp: &Footprint, frame: &EgoFrame, grid: GridSpec) -> bool {
    if crate::grid::world_to_cell(fp.center, frame, grid).is_some() {
        return true;
    }
    fp.corners()
        .iter()
        .any(|&c| crate::grid::world_to_cell(c, frame, grid).is_some())
}

/// Stamps `apply` on every cell whose center lies inside the footprint.
pub fn for_footprint_cells(
    fp: &Footprint,
    frame: &EgoFrame,
    grid: GridSpec,
    mut apply: impl FnMut(usize, usize),
) {
    // Cell range from the corner bounding box, then exact center tests.
    let mut r_min = grid.height;
    let mut r_max = 0usize;
    let mut c_min = grid.width;
    let mut c_max = 0usize;
    let mut any = false;
    for corner in fp.corners() {
        let e = frame.to_ego(corner);
        // Clamp to the grid so partially-outside footprints still stamp.
        let fr = frame.anchor_row as f64 - crate::fmath::floor(e.y / grid.resolution + 0.5);
        let fc = frame.anchor_col as f64 + crate::fmath::floor(e.x / grid.resolution + 0.5);
        let r = fr.max(0.0).min((grid.height - 1) as f64) as usize;
        let c = fc.max(0.0).min((grid.width - 1) as f64) as usize;
        any = true;
        r_min = r_min.min(r);
        r_max = r_max.max(r);
        c_min = c_min.min(c);
        c_max = c_max.max(c);
    }
    if !any {
        return;
    }
    for r in r_min..=r_max {
        for c in c_min..=c_max {
            let center = frame.cell_center_world(r, c, grid);
            if fp.contains(center) {
                apply(r, c);
            }
        }
    }
}

/// The vehicle-level visibility rule: visible when any footprint corner or
/// the center is reachable by an unblocked sight line. The vehicle's own
/// rectangle never blocks its own probes.
pub fn vehicle_visible(
    sensor: Point,
    fp: &Footprint,
    others: &[Footprint],
) -> Result<bool, VisibilityError> {
    let blockers: Vec<Footprint> =
        others.iter().filter(|o| o.id != fp.id).copied().collect();
    let mut probes = Vec::with_capacity(5);
    probes.push(fp.center);
    probes.extend_from_slice(&fp.corners());
    for p in probes {
        if visibility::cell_visible(sensor, p, &blockers)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Splits map polylines into ego-frame scene-context vectors, clipped to
/// the grid and resampled at `segment_len`.
pub fn vectorize_map(
    map: &SceneMap,
    frame: &EgoFrame,
    grid: GridSpec,
    segment_len: f64,
    first_id: u64,
) -> Vec<Polyline> {
    let (sx0, sy0, sx1, sy1) = frame.grid_bounds_ego(grid);
    let mut out = Vec::new();
    let mut next_id = first_id;
    for el in &map.elements {
        let mut vectors = Vec::new();
        for w in el.points.windows(2) {
            let a = frame.to_ego(w[0]);
            let b = frame.to_ego(w[1]);
            let Some((ca, cb)) = crate::geom::clip_segment_aabb(a, b, sx0, sy0, sx1, sy1) else {
                continue;
            };
            let len = (cb - ca).norm();
            if len == 0.0 {
                continue;
            }
            let pieces = crate::fmath::ceil(len / segment_len).max(1.0) as usize;
            for k in 0..pieces {
                let t0 = k as f64 / pieces as f64;
                let t1 = (k + 1) as f64 / pieces as f64;
                let s = if k == 0 { ca } else { ca + (cb - ca) * t0 };
                let e = if k + 1 == pieces { cb } else { ca + (cb - ca) * t1 };
                vectors.push(Vector {
                    start: s,
                    end: e,
                    class: VectorClass::SceneContext,
                    attrs: [0.0, el.road_type.code() as f64, 0.0],
                });
            }
        }
        if !vectors.is_empty() {
            out.push(Polyline {
                id: next_id,
                class: VectorClass::SceneContext,
                source: SourceTag::MapElement(el.id.clone()),
                vectors,
            });
            next_id += 1;
        }
    }
    out
}

/// Builds the complete sample for `(ego_id, t_ms)`.
pub fn build_sample(
    tracks: &TrackTable,
    map: &SceneMap,
    ego_id: u64,
    t_ms: i64,
    cfg: &BuildConfig,
    sample_id: u64,
) -> Result<SceneSample, SceneError> {
    let grid = cfg.grid;
    let ego_track = tracks
        .track(ego_id)
        .ok_or(SceneError::EgoMissing { ego: ego_id, t_ms })?;
    let ego_state =
        state_at(ego_track, t_ms).ok_or(SceneError::EgoMissing { ego: ego_id, t_ms })?;
    let frame = EgoFrame::standard(ego_state.pos.x, ego_state.pos.y, ego_state.heading, grid)
        .expect("standard anchor is always inside the grid");
    let sensor = ego_state.pos;

    // Vehicles present at t, with their footprints.
    struct Present<'a> {
        track: &'a Track,
        state: &'a TrackState,
        fp: Footprint,
        in_grid: bool,
    }
    let mut present: Vec<Present> = Vec::new();
    for tr in &tracks.tracks {
        if tr.id == ego_id {
            continue;
        }
        if let Some(st) = state_at(tr, t_ms) {
            if let Some(fp) = footprint_of(st, tr.id) {
                let in_grid = footprint_in_grid(&fp, &frame, grid);
                present.push(Present { track: tr, state: st, fp, in_grid });
            }
        }
    }

    let occluders: Vec<Footprint> =
        present.iter().filter(|p| p.in_grid).map(|p| p.fp).collect();

    let mut mask = visibility::compute_mask(&frame, &occluders, grid)?;

    // Vehicle visibility, evaluated against the in-grid occluders. Vehicles
    // outside the grid can still be seen and still supply their history.
    let mut visible: Vec<bool> = Vec::with_capacity(present.len());
    for p in &present {
        visible.push(vehicle_visible(sensor, &p.fp, &occluders)?);
    }

    // Hidden vehicles are unobserved: their footprint cells stay occluded
    // even though compute_mask clears every occluder's own rectangle.
    for (p, &vis) in present.iter().zip(&visible) {
        if !vis {
            for_footprint_cells(&p.fp, &frame, grid, |r, c| mask.set(r, c, 1));
        }
    }

    // Ground truth: every vehicle footprint at t, ego included, seen or not.
    let mut gt = Ogm::zeros(grid);
    let ego_fp = footprint_of(ego_state, ego_id);
    if let Some(fp) = &ego_fp {
        for_footprint_cells(fp, &frame, grid, |r, c| gt.set(r, c, 1.0));
    }
    for p in &present {
        for_footprint_cells(&p.fp, &frame, grid, |r, c| gt.set(r, c, 1.0));
    }

    // Trajectory polylines for the ego and every visible vehicle.
    let mut polylines: Vec<Polyline> = Vec::new();
    let mut next_id: u64 = 0;
    let mut vehicles: Vec<VehicleRecord> = Vec::new();

    let push_trajectory = |track: &Track,
                               state: &TrackState,
                               polylines: &mut Vec<Polyline>,
                               next_id: &mut u64| {
        let poses = history_poses(track, t_ms, cfg.history_steps);
        let vecs = trajectory_vectors(&poses, &frame, state.agent_type);
        polylines.push(Polyline {
            id: *next_id,
            class: VectorClass::Trajectory,
            source: SourceTag::Track(track.id),
            vectors: vecs,
        });
        *next_id += 1;
    };

    if cfg.include_ego_trajectory {
        push_trajectory(ego_track, ego_state, &mut polylines, &mut next_id);
    }
    vehicles.push(vehicle_record(ego_track, ego_state, t_ms, cfg, true, true));

    for (p, &vis) in present.iter().zip(&visible) {
        if vis {
            push_trajectory(p.track, p.state, &mut polylines, &mut next_id);
        }
        vehicles.push(vehicle_record(p.track, p.state, t_ms, cfg, false, vis));
    }

    // Scene context from the map.
    let ctx = vectorize_map(map, &frame, grid, cfg.map_segment_len, next_id);
    next_id += ctx.len() as u64;
    polylines.extend(ctx);

    // Occlusion boundaries from the occluders the ego can actually see.
    let mut shadows = Vec::new();
    for (p, &vis) in present.iter().zip(&visible) {
        if p.in_grid && vis {
            shadows.push(visibility::shadow_polygon(sensor, &p.fp, &frame, grid)?);
        }
    }
    let occ = visibility::occlusion_polylines(&shadows, cfg.occlusion_step, &frame, next_id);
    polylines.extend(occ);

    Ok(SceneSample {
        id: sample_id,
        timestamp_ms: t_ms,
        frame,
        polylines,
        mask,
        ground_truth: gt,
        vehicles,
    })
}

/// Poses at `t - k*100ms` for `k = history_steps..0`. Lookup is by state
/// index (timestamp jitter may accumulate past the per-step tolerance);
/// table validation guarantees consecutive states are one step apart.
fn history_poses(track: &Track, t_ms: i64, history_steps: usize) -> Vec<VehiclePose> {
    let Some(idx) = track
        .states
        .iter()
        .position(|s| (s.timestamp_ms - t_ms).abs() <= STEP_JITTER_MS)
    else {
        return Vec::new();
    };
    let start = idx.saturating_sub(history_steps);
    track.states[start..=idx]
        .iter()
        .enumerate()
        .map(|(j, s)| VehiclePose {
            offset: (start + j) as i32 - idx as i32,
            pos: s.pos,
            heading: s.heading,
        })
        .collect()
}

/// Chained trajectory vectors in the ego frame; a single pose degenerates
/// to one zero-length vector with timestamp index 0.
fn trajectory_vectors(poses: &[VehiclePose], frame: &EgoFrame, agent_type: u32) -> Vec<Vector> {
    let ty = agent_type as f64;
    if poses.len() == 1 {
        let p = frame.to_ego(poses[0].pos);
        return alloc::vec![Vector {
            start: p,
            end: p,
            class: VectorClass::Trajectory,
            attrs: [0.0, ty, 0.0],
        }];
    }
    let ego_pts: Vec<Point> = poses.iter().map(|p| frame.to_ego(p.pos)).collect();
    let mut out = Vec::with_capacity(poses.len() - 1);
    for i in 0..poses.len() - 1 {
        out.push(Vector {
            start: ego_pts[i],
            end: ego_pts[i + 1],
            class: VectorClass::Trajectory,
            // Timestamp index of the vector's end pose.
            attrs: [poses[i + 1].offset as f64, ty, 0.0],
        });
    }
    out
}

fn vehicle_record(
    track: &Track,
    state: &TrackState,
    t_ms: i64,
    cfg: &BuildConfig,
    is_ego: bool,
    visible: bool,
) -> VehicleRecord {
    VehicleRecord {
        id: track.id,
        agent_type: state.agent_type,
        length: state.length,
        width: state.width,
        is_ego,
        visible: is_ego || visible,
        poses: history_poses(track, t_ms, cfg.history_steps),
    }
}

/// Structural checks every well-formed sample satisfies; used by tests
/// and the data generator.
pub fn validate_sample(s: &SceneSample) -> Result<(), String> {
    use alloc::format;
    if s.ground_truth.height != s.mask.height || s.ground_truth.width != s.mask.width {
        return Err("mask and ground truth dims differ".into());
    }
    if !s.ground_truth.is_binary() {
        return Err("ground truth is not binary".into());
    }
    if !s.polylines.iter().any(|p| p.class == VectorClass::Trajectory) {
        return Err("sample has no trajectory polyline".into());
    }
    for pl in &s.polylines {
        if pl.vectors.is_empty() {
            return Err(format!("polyline {} is empty", pl.id));
        }
        for v in &pl.vectors {
            if v.class != pl.class {
                return Err(format!("polyline {} mixes vector classes", pl.id));
            }
            if !v.start.is_finite() || !v.end.is_finite() {
                return Err(format!("polyline {} has non-finite coordinates", pl.id));
            }
        }
        if pl.class == VectorClass::Trajectory {
            if pl.vectors.len() > 10 {
                return Err(format!("trajectory {} has more than 10 vectors", pl.id));
            }
            for w in pl.vectors.windows(2) {
                if w[0].end != w[1].start {
                    return Err(format!("trajectory {} does not chain", pl.id));
                }
                if w[1].attrs[0] - w[0].attrs[0] != 1.0 {
                    return Err(format!("trajectory {} timestamp indices not consecutive", pl.id));
                }
            }
        }
    }
    Ok(())
}
