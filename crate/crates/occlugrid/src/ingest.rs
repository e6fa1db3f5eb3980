//! Readers for recorded-track CSV files and road-map JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use occlugrid_core::geom::Point;
use occlugrid_core::scene::{MapElement, RoadType, SceneMap, Track, TrackState, TrackTable};

use crate::errors::{CliError, CliResult};

/// Required columns; matched by header name, any order, extras ignored.
pub const TRACK_COLUMNS: [&str; 9] = [
    "track_id",
    "frame_id",
    "timestamp_ms",
    "agent_type",
    "x",
    "y",
    "psi_rad",
    "length",
    "width",
];

fn parse_agent_type(s: &str) -> Option<u32> {
    if let Ok(n) = s.parse::<u32>() {
        return Some(n);
    }
    match s {
        "car" => Some(1),
        "truck" | "truck_bus" | "bus" => Some(2),
        _ => None,
    }
}

/// Loads a tracks file, groups rows into per-track state sequences, and
/// checks the 10 Hz sampling contract. Rows may arrive in any order;
/// tracks come back sorted by id, states by frame.
pub fn read_tracks_csv(path: &Path) -> CliResult<TrackTable> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let mut cols = [0usize; TRACK_COLUMNS.len()];
    for (slot, name) in TRACK_COLUMNS.iter().enumerate() {
        match headers.iter().position(|h| h == *name) {
            Some(i) => cols[slot] = i,
            None => {
                return Err(CliError::Data(format!(
                    "{} is missing column {name}",
                    path.display()
                )))
            }
        }
    }

    let mut grouped: BTreeMap<u64, Vec<TrackState>> = BTreeMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 2; // 1-based, after the header line
        let record = record.map_err(|e| CliError::Data(format!("{} row {row}: {e}", path.display())))?;
        let field = |slot: usize| record.get(cols[slot]).unwrap_or("");
        let num = |slot: usize| -> CliResult<f64> {
            field(slot).parse::<f64>().map_err(|_| {
                CliError::Data(format!(
                    "{} row {row}: column {} has non-numeric value {:?}",
                    path.display(),
                    TRACK_COLUMNS[slot],
                    field(slot)
                ))
            })
        };
        let int = |slot: usize| -> CliResult<i64> {
            field(slot).parse::<i64>().map_err(|_| {
                CliError::Data(format!(
                    "{} row {row}: column {} has non-integer value {:?}",
                    path.display(),
                    TRACK_COLUMNS[slot],
                    field(slot)
                ))
            })
        };
        let track_id = int(0)? as u64;
        let agent_type = parse_agent_type(field(3)).ok_or_else(|| {
            CliError::Data(format!(
                "{} row {row}: unknown agent_type {:?}",
                path.display(),
                field(3)
            ))
        })?;
        grouped.entry(track_id).or_default().push(TrackState {
            frame: int(1)?,
            timestamp_ms: int(2)?,
            pos: Point::new(num(4)?, num(5)?),
            heading: num(6)?,
            length: num(7)?,
            width: num(8)?,
            agent_type,
        });
    }

    let tracks = grouped
        .into_iter()
        .map(|(id, mut states)| {
            states.sort_by_key(|s| s.frame);
            Track { id, states }
        })
        .collect();
    let table = TrackTable { tracks };
    table
        .validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(table)
}

#[derive(Deserialize)]
struct MapFileDto {
    polylines: Vec<MapPolyDto>,
}

#[derive(Deserialize)]
struct MapPolyDto {
    id: String,
    road_type: String,
    points: Vec<[f64; 2]>,
}

pub fn read_map_json(path: &Path) -> CliResult<SceneMap> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let dto: MapFileDto = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut elements = Vec::with_capacity(dto.polylines.len());
    for p in dto.polylines {
        let road_type = RoadType::from_name(&p.road_type).ok_or_else(|| {
            CliError::Data(format!(
                "{}: map element {} has unknown road type {:?}",
                path.display(),
                p.id,
                p.road_type
            ))
        })?;
        elements.push(MapElement {
            id: p.id,
            road_type,
            points: p.points.iter().map(|q| Point::new(q[0], q[1])).collect(),
        });
    }
    Ok(SceneMap { elements })
}
