//! Grayscale rendering of occupancy grids as plain-text PGM (P2).
//!
//! One pixel per cell. Probability 0 maps to white (255) and 1 to black
//! (0); visibility masks draw their hidden cells mid-gray. The text
//! format keeps rendered bytes reproducible without an image codec.

use std::path::{Path, PathBuf};

use occlugrid_core::grid::{MaskOgm, Ogm};
use occlugrid_core::metrics::threshold_occupied;

use crate::errors::{CliError, CliResult};

pub const MASK_GRAY: u8 = 128;

/// Occupancy probability to pixel value.
pub fn shade(p: f64) -> u8 {
    (255.0 * (1.0 - p)).round() as u8
}

/// Serializes one pixel grid; row-major, one image row per text line.
pub fn pgm_bytes(height: usize, width: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), height * width, "pixel count");
    let mut out = String::with_capacity(pixels.len() * 4 + 16);
    out.push_str(&format!("P2\n{width} {height}\n255\n"));
    for row in pixels.chunks(width) {
        let mut first = true;
        for px in row {
            if !first {
                out.push(' ');
            }
            out.push_str(&px.to_string());
            first = false;
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Continuous shading of a probability grid.
pub fn probability_panel(ogm: &Ogm) -> Vec<u8> {
    pgm_bytes(ogm.height, ogm.width, &ogm.cells.iter().map(|&p| shade(p)).collect::<Vec<_>>())
}

/// Thresholded occupancy: occupied cells black, free cells white.
pub fn occupancy_panel(ogm: &Ogm) -> Vec<u8> {
    let px: Vec<u8> = ogm
        .cells
        .iter()
        .map(|&p| if threshold_occupied(p) { 0 } else { 255 })
        .collect();
    pgm_bytes(ogm.height, ogm.width, &px)
}

/// Hidden cells mid-gray, visible cells white.
pub fn mask_panel(mask: &MaskOgm) -> Vec<u8> {
    let px: Vec<u8> = mask.cells.iter().map(|&m| if m == 1 { MASK_GRAY } else { 255 }).collect();
    pgm_bytes(mask.height, mask.width, &px)
}

/// Writes the four standard panels for one sample and returns the paths:
/// visibility mask, predicted probabilities, thresholded prediction, and
/// ground truth.
pub fn write_panels(
    dir: &Path,
    stem: &str,
    mask: &MaskOgm,
    prob: &Ogm,
    ground_truth: &Ogm,
) -> CliResult<[PathBuf; 4]> {
    let files = [
        (format!("{stem}-mask.pgm"), mask_panel(mask)),
        (format!("{stem}-prob.pgm"), probability_panel(prob)),
        (format!("{stem}-pred.pgm"), occupancy_panel(prob)),
        (format!("{stem}-gt.pgm"), occupancy_panel(ground_truth)),
    ];
    let mut paths = Vec::with_capacity(4);
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(CliError::io(&path))?;
        paths.push(path);
    }
    Ok(paths.try_into().expect("exactly four panels"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use occlugrid_core::grid::GridSpec;

    #[test]
    fn endpoints_of_the_shade_scale() {
        assert_eq!(shade(0.0), 255);
        assert_eq!(shade(1.0), 0);
        assert_eq!(shade(0.5), 128);
    }

    #[test]
    fn an_all_zero_grid_renders_all_white() {
        let ogm = Ogm::zeros(GridSpec::new(2, 3, 1.0));
        let bytes = probability_panel(&ogm);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text, "P2\n3 2\n255\n255 255 255\n255 255 255\n");
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = GridSpec::new(3, 3, 1.0);
        let cells: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let ogm = Ogm::new(spec, cells).unwrap();
        assert_eq!(probability_panel(&ogm), probability_panel(&ogm));
    }

    #[test]
    fn mask_cells_come_out_mid_gray() {
        let spec = GridSpec::new(1, 3, 1.0);
        let mask = MaskOgm::new(spec, vec![0, 1, 0]).unwrap();
        let text = String::from_utf8(mask_panel(&mask)).unwrap();
        assert_eq!(text, "P2\n3 1\n255\n255 128 255\n");
    }

    #[test]
    fn threshold_panel_puts_half_probability_in_black() {
        let spec = GridSpec::new(1, 2, 1.0);
        let ogm = Ogm::new(spec, vec![0.5, 0.49]).unwrap();
        let text = String::from_utf8(occupancy_panel(&ogm)).unwrap();
        assert_eq!(text, "P2\n2 1\n255\n0 255\n");
    }
}
