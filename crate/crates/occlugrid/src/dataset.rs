//! Line-oriented JSON dataset files: one scene sample per line.
//!
//! The wire layout spells out every vector and embeds both grids as flat
//! arrays, so a file is self-contained and diffable. Writing is
//! deterministic (fixed field order, shortest round-trip floats), which
//! is what makes byte-identical regeneration possible.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use occlugrid_core::geom::Point;
use occlugrid_core::grid::{EgoFrame, GridSpec, MaskOgm, Ogm};
use occlugrid_core::scene::{
    validate_sample, Polyline, SceneSample, SourceTag, Vector, VectorClass, VehiclePose,
    VehicleRecord,
};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Serialize, Deserialize)]
struct FrameDto {
    x: f64,
    y: f64,
    heading: f64,
    anchor_row: usize,
    anchor_col: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridDto {
    height: usize,
    width: usize,
    resolution: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorDto {
    start: [f64; 2],
    end: [f64; 2],
    class: u8,
    attrs: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SourceDto {
    Track(u64),
    MapElement(String),
    Occluder(u64),
}

#[derive(Debug, Serialize, Deserialize)]
struct PolylineDto {
    id: u64,
    class: u8,
    source: SourceDto,
    vectors: Vec<VectorDto>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseDto {
    offset: i32,
    x: f64,
    y: f64,
    heading: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct VehicleDto {
    id: u64,
    agent_type: u32,
    length: f64,
    width: f64,
    is_ego: bool,
    visible: bool,
    poses: Vec<PoseDto>,
}

/// One dataset line. Field order is the wire order.
#[derive(Debug, Serialize, Deserialize)]
struct SampleDto {
    id: u64,
    timestamp_ms: i64,
    frame: FrameDto,
    grid: GridDto,
    polylines: Vec<PolylineDto>,
    mask: Vec<u8>,
    ground_truth: Vec<f64>,
    vehicles: Vec<VehicleDto>,
}

fn class_code(v: VectorClass) -> u8 {
    v.code()
}

fn class_from(code: u8) -> Result<VectorClass, String> {
    VectorClass::from_code(code).ok_or_else(|| format!("unknown vector class code {code}"))
}

fn to_dto(s: &SceneSample) -> SampleDto {
    SampleDto {
        id: s.id,
        timestamp_ms: s.timestamp_ms,
        frame: FrameDto {
            x: s.frame.x,
            y: s.frame.y,
            heading: s.frame.heading,
            anchor_row: s.frame.anchor_row,
            anchor_col: s.frame.anchor_col,
        },
        grid: GridDto {
            height: s.ground_truth.height,
            width: s.ground_truth.width,
            resolution: s.ground_truth.resolution,
        },
        polylines: s
            .polylines
            .iter()
            .map(|p| PolylineDto {
                id: p.id,
                class: class_code(p.class),
                source: match &p.source {
                    SourceTag::Track(id) => SourceDto::Track(*id),
                    SourceTag::MapElement(name) => SourceDto::MapElement(name.clone()),
                    SourceTag::Occluder(id) => SourceDto::Occluder(*id),
                },
                vectors: p
                    .vectors
                    .iter()
                    .map(|v| VectorDto {
                        start: [v.start.x, v.start.y],
                        end: [v.end.x, v.end.y],
                        class: class_code(v.class),
                        attrs: v.attrs,
                    })
                    .collect(),
            })
            .collect(),
        mask: s.mask.cells.clone(),
        ground_truth: s.ground_truth.cells.clone(),
        vehicles: s
            .vehicles
            .iter()
            .map(|v| VehicleDto {
                id: v.id,
                agent_type: v.agent_type,
                length: v.length,
                width: v.width,
                is_ego: v.is_ego,
                visible: v.visible,
                poses: v
                    .poses
                    .iter()
                    .map(|p| PoseDto { offset: p.offset, x: p.pos.x, y: p.pos.y, heading: p.heading })
                    .collect(),
            })
            .collect(),
    }
}

fn from_dto(d: SampleDto) -> Result<SceneSample, String> {
    let spec = GridSpec::new(d.grid.height, d.grid.width, d.grid.resolution);
    let frame = EgoFrame::new(
        d.frame.x,
        d.frame.y,
        d.frame.heading,
        d.frame.anchor_row,
        d.frame.anchor_col,
        spec,
    )
    .map_err(|e| e.to_string())?;
    let mask = MaskOgm::new(spec, d.mask).map_err(|e| e.to_string())?;
    let ground_truth = Ogm::new(spec, d.ground_truth).map_err(|e| e.to_string())?;
    let polylines = d
        .polylines
        .into_iter()
        .map(|p| {
            Ok(Polyline {
                id: p.id,
                class: class_from(p.class)?,
                source: match p.source {
                    SourceDto::Track(id) => SourceTag::Track(id),
                    SourceDto::MapElement(name) => SourceTag::MapElement(name),
                    SourceDto::Occluder(id) => SourceTag::Occluder(id),
                },
                vectors: p
                    .vectors
                    .into_iter()
                    .map(|v| {
                        Ok(Vector {
                            start: Point::new(v.start[0], v.start[1]),
                            end: Point::new(v.end[0], v.end[1]),
                            class: class_from(v.class)?,
                            attrs: v.attrs,
                        })
                    })
                    .collect::<Result<_, String>>()?,
            })
        })
        .collect::<Result<_, String>>()?;
    let vehicles = d
        .vehicles
        .into_iter()
        .map(|v| VehicleRecord {
            id: v.id,
            agent_type: v.agent_type,
            length: v.length,
            width: v.width,
            is_ego: v.is_ego,
            visible: v.visible,
            poses: v
                .poses
                .into_iter()
                .map(|p| VehiclePose { offset: p.offset, pos: Point::new(p.x, p.y), heading: p.heading })
                .collect(),
        })
        .collect();
    let sample = SceneSample {
        id: d.id,
        timestamp_ms: d.timestamp_ms,
        frame,
        polylines,
        mask,
        ground_truth,
        vehicles,
    };
    validate_sample(&sample)?;
    Ok(sample)
}

/// Serializes one sample to its dataset line (no trailing newline).
pub fn sample_line(s: &SceneSample) -> String {
    serde_json::to_string(&to_dto(s)).expect("sample serialization cannot fail")
}

pub fn write_dataset(path: &Path, samples: &[SceneSample]) -> CliResult<()> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&sample_line(s));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::io(path))
}

pub fn read_dataset(path: &Path) -> CliResult<Vec<SceneSample>> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dto: SampleDto = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let sample = from_dto(dto)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(CliError::Data(format!("{} holds no samples", path.display())));
    }
    Ok(samples)
}
