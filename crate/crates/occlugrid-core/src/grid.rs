//! Occupancy grids, the ego-centric frame convention, and patch reshaping.
//!
//! Grids are `H` rows by `W` columns, row-major, with row 0 farthest ahead
//! of the ego and the ego anchored near the bottom, heading "up"
//! (decreasing row). The default receptive field is 70x60 cells of 1 m.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fmath;
use crate::geom::Point;

pub const DEFAULT_HEIGHT: usize = 70;
pub const DEFAULT_WIDTH: usize = 60;
pub const DEFAULT_RESOLUTION: f64 = 1.0;

/// Grid dimensions without cell payload.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    pub resolution: f64,
}

impl GridSpec {
    pub fn new(height: usize, width: usize, resolution: f64) -> Self {
        GridSpec { height, width, resolution }
    }

    pub fn default_scene() -> Self {
        GridSpec::new(DEFAULT_HEIGHT, DEFAULT_WIDTH, DEFAULT_RESOLUTION)
    }

    pub fn cell_count(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridError {
    ValueOutOfRange { row: usize, col: usize, value: f64 },
    LengthMismatch { expected: usize, got: usize },
    NonBinaryMask { row: usize, col: usize, value: f64 },
    PatchSideDoesNotDivide { height: usize, width: usize, patch: usize },
    AnchorOutsideGrid { row: usize, col: usize, height: usize, width: usize },
    NonFiniteHeading,
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::ValueOutOfRange { row, col, value } => {
                write!(f, "cell ({row},{col}) value {value} outside [0,1]")
            }
            GridError::LengthMismatch { expected, got } => {
                write!(f, "cell array length {got}, expected {expected}")
            }
            GridError::NonBinaryMask { row, col, value } => {
                write!(f, "mask cell ({row},{col}) value {value} not in {{0,1}}")
            }
            GridError::PatchSideDoesNotDivide { height, width, patch } => {
                write!(f, "patch side {patch} does not divide grid {height}x{width}")
            }
            GridError::AnchorOutsideGrid { row, col, height, width } => {
                write!(f, "anchor ({row},{col}) outside {height}x{width} grid")
            }
            GridError::NonFiniteHeading => write!(f, "ego heading is not finite"),
        }
    }
}

/// Occupancy grid map: per-cell occupancy probability in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ogm {
    pub height: usize,
    pub width: usize,
    pub resolution: f64,
    pub cells: Vec<f64>,
}

impl Ogm {
    pub fn zeros(spec: GridSpec) -> Self {
        Ogm {
            height: spec.height,
            width: spec.width,
            resolution: spec.resolution,
            cells: vec![0.0; spec.cell_count()],
        }
    }

    pub fn new(spec: GridSpec, cells: Vec<f64>) -> Result<Self, GridError> {
        if cells.len() != spec.cell_count() {
            return Err(GridError::LengthMismatch { expected: spec.cell_count(), got: cells.len() });
        }
        for (i, &v) in cells.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::ValueOutOfRange {
                    row: i / spec.width,
                    col: i % spec.width,
                    value: v,
                });
            }
        }
        Ok(Ogm { height: spec.height, width: spec.width, resolution: spec.resolution, cells })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.height, self.width, self.resolution)
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.cells[row * self.width + col] = v;
    }

    /// True when every cell is exactly 0 or 1 (ground-truth grids).
    pub fn is_binary(&self) -> bool {
        self.cells.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Binary map from thresholding at 0.5; exactly 0.5 counts occupied.
    pub fn threshold(&self) -> Ogm {
        Ogm {
            height: self.height,
            width: self.width,
            resolution: self.resolution,
            cells: self.cells.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Binary occlusion indicator: 1 = occluded, 0 = visible.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskOgm {
    pub height: usize,
    pub width: usize,
    pub resolution: f64,
    pub cells: Vec<u8>,
}

impl MaskOgm {
    pub fn zeros(spec: GridSpec) -> Self {
        MaskOgm {
            height: spec.height,
            width: spec.width,
            resolution: spec.resolution,
            cells: vec![0; spec.cell_count()],
        }
    }

    pub fn new(spec: GridSpec, cells: Vec<u8>) -> Result<Self, GridError> {
        if cells.len() != spec.cell_count() {
            return Err(GridError::LengthMismatch { expected: spec.cell_count(), got: cells.len() });
        }
        for (i, &v) in cells.iter().enumerate() {
            if v > 1 {
                return Err(GridError::NonBinaryMask {
                    row: i / spec.width,
                    col: i % spec.width,
                    value: v as f64,
                });
            }
        }
        Ok(MaskOgm { height: spec.height, width: spec.width, resolution: spec.resolution, cells })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.height, self.width, self.resolution)
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.cells[row * self.width + col] = v;
    }

    pub fn occluded_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 1).count()
    }
}

/// Ego pose in world coordinates plus the grid cell the ego occupies.
///
/// The ego heading maps to the grid's "up" direction (decreasing row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoFrame {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub anchor_row: usize,
    pub anchor_col: usize,
}

impl EgoFrame {
    pub fn new(
        x: f64,
        y: f64,
        heading: f64,
        anchor_row: usize,
        anchor_col: usize,
        spec: GridSpec,
    ) -> Result<Self, GridError> {
        if !heading.is_finite() {
            return Err(GridError::NonFiniteHeading);
        }
        if anchor_row >= spec.height || anchor_col >= spec.width {
            return Err(GridError::AnchorOutsideGrid {
                row: anchor_row,
                col: anchor_col,
                height: spec.height,
                width: spec.width,
            });
        }
        Ok(EgoFrame { x, y, heading, anchor_row, anchor_col })
    }

    /// Standard anchor: 10 m of behind-margin, laterally centered.
    /// For the 70x60 default this is cell (60, 30).
    pub fn standard_anchor(spec: GridSpec) -> (usize, usize) {
        let row = if spec.height >= 10 { spec.height - 10 } else { spec.height - 1 };
        (row, spec.width / 2)
    }

    pub fn standard(x: f64, y: f64, heading: f64, spec: GridSpec) -> Result<Self, GridError> {
        let (r, c) = Self::standard_anchor(spec);
        EgoFrame::new(x, y, heading, r, c, spec)
    }

    /// World point -> ego frame `(s, f)`: `s` lateral (right positive),
    /// `f` forward along the heading.
    pub fn to_ego(&self, p: Point) -> Point {
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        let (sin_h, cos_h) = (fmath::sin(self.heading), fmath::cos(self.heading));
        Point { x: dx * sin_h - dy * cos_h, y: dx * cos_h + dy * sin_h }
    }

    /// Ego-frame `(s, f)` -> world point.
    pub fn to_world(&self, p: Point) -> Point {
        let (sin_h, cos_h) = (fmath::sin(self.heading), fmath::cos(self.heading));
        Point {
            x: self.x + p.x * sin_h + p.y * cos_h,
            y: self.y - p.x * cos_h + p.y * sin_h,
        }
    }

    /// Heading transformed into the ego frame (0 = ego's own heading).
    pub fn heading_to_ego(&self, world_heading: f64) -> f64 {
        world_heading - self.heading
    }

    /// Cell containing an ego-frame point, by cell-center square
    /// membership. `None` when outside the grid.
    pub fn ego_to_cell(&self, p: Point, spec: GridSpec) -> Option<(usize, usize)> {
        let res = spec.resolution;
        let fwd_cells = fmath::floor(p.y / res + 0.5);
        let lat_cells = fmath::floor(p.x / res + 0.5);
        let row = self.anchor_row as f64 - fwd_cells;
        let col = self.anchor_col as f64 + lat_cells;
        if row < 0.0 || col < 0.0 || row >= spec.height as f64 || col >= spec.width as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Center of a cell, in ego-frame coordinates.
    pub fn cell_center_ego(&self, row: usize, col: usize, spec: GridSpec) -> Point {
        Point {
            x: (col as f64 - self.anchor_col as f64) * spec.resolution,
            y: (self.anchor_row as f64 - row as f64) * spec.resolution,
        }
    }

    /// Center of a cell, in world coordinates.
    pub fn cell_center_world(&self, row: usize, col: usize, spec: GridSpec) -> Point {
        self.to_world(self.cell_center_ego(row, col, spec))
    }

    /// Grid rectangle in ego-frame coordinates:
    /// `(s_min, f_min, s_max, f_max)` covering every cell square.
    pub fn grid_bounds_ego(&self, spec: GridSpec) -> (f64, f64, f64, f64) {
        let res = spec.resolution;
        let s_min = (-(self.anchor_col as f64) - 0.5) * res;
        let s_max = ((spec.width - 1 - self.anchor_col) as f64 + 0.5) * res;
        let f_min = ((self.anchor_row as f64) - (spec.height - 1) as f64 - 0.5) * res;
        let f_max = (self.anchor_row as f64 + 0.5) * res;
        (s_min, f_min, s_max, f_max)
    }
}

/// Cell containing a world point; `None` when outside the grid.
pub fn world_to_cell(point: Point, frame: &EgoFrame, spec: GridSpec) -> Option<(usize, usize)> {
    frame.ego_to_cell(frame.to_ego(point), spec)
}

/// A grid reshaped into a sequence of flattened square patches.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patch_side: usize,
    pub patch_count: usize,
    /// `patch_count` rows of `patch_side^2` values, patch-row-major over
    /// the grid, row-major within each patch.
    pub patches: Vec<f64>,
}

impl PatchGrid {
    pub fn patch(&self, i: usize) -> &[f64] {
        let p2 = self.patch_side * self.patch_side;
        &self.patches[i * p2..(i + 1) * p2]
    }
}

/// Splits a grid into `(H*W)/p^2` flattened `p x p` patches.
pub fn patchify(m: &Ogm, patch_side: usize) -> Result<PatchGrid, GridError> {
    let (h, w) = (m.height, m.width);
    if patch_side == 0 || h % patch_side != 0 || w % patch_side != 0 {
        return Err(GridError::PatchSideDoesNotDivide { height: h, width: w, patch: patch_side });
    }
    let p = patch_side;
    let (ph, pw) = (h / p, w / p);
    let mut patches = Vec::with_capacity(h * w);
    for pr in 0..ph {
        for pc in 0..pw {
            for r in 0..p {
                for c in 0..p {
                    patches.push(m.at(pr * p + r, pc * p + c));
                }
            }
        }
    }
    Ok(PatchGrid { patch_side: p, patch_count: ph * pw, patches })
}

/// Inverse of [`patchify`]; bit-exact round trip.
pub fn unpatchify(pg: &PatchGrid, spec: GridSpec) -> Result<Ogm, GridError> {
    let p = pg.patch_side;
    let (h, w) = (spec.height, spec.width);
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(GridError::PatchSideDoesNotDivide { height: h, width: w, patch: p });
    }
    if pg.patches.len() != h * w {
        return Err(GridError::LengthMismatch { expected: h * w, got: pg.patches.len() });
    }
    let pw = w / p;
    let mut out = Ogm::zeros(spec);
    for (i, &v) in pg.patches.iter().enumerate() {
        let patch = i / (p * p);
        let inner = i % (p * p);
        let (pr, pc) = (patch / pw, patch % pw);
        let (r, c) = (inner / p, inner % p);
        out.set(pr * p + r, pc * p + c, v);
    }
    Ok(out)
}
