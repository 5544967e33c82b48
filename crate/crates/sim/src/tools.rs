//! Offline helpers behind the `map-dump` and `calibrate-range` commands.

use std::path::Path;

use anyhow::{Context, Result};
use deskcar_core::grid::{CellIndex, CellState, GridMap, GridSnapshot};
use deskcar_core::range::{fit_correction, RangeCorrection};
use serde::Deserialize;

pub const UNKNOWN_GREY: u8 = 128;
pub const FREE_GREY: u8 = 255;
pub const OCCUPIED_GREY: u8 = 0;

/// Binary PGM of the map with the top row at the largest y.
pub fn grid_pgm(map: &GridMap) -> Vec<u8> {
    let g = map.geometry();
    let mut out = format!("P5\n{} {}\n255\n", g.width_cells, g.height_cells).into_bytes();
    for iy in (0..g.height_cells as i64).rev() {
        for ix in 0..g.width_cells as i64 {
            out.push(match map.state(CellIndex::new(ix, iy)) {
                CellState::Unknown => UNKNOWN_GREY,
                CellState::Free => FREE_GREY,
                CellState::Occupied => OCCUPIED_GREY,
            });
        }
    }
    out
}

/// Sidecar describing how pixels map to the world.
pub fn grid_header(map: &GridMap) -> String {
    let g = map.geometry();
    let spec = map.spec();
    format!(
        "origin_x_m {}\norigin_y_m {}\ncell_size_m {}\nwidth_cells {}\nheight_cells {}\nmargin {}\ncounter_cap {}\nrow_0 top (largest y)\n",
        g.origin_x_m, g.origin_y_m, g.cell_size_m, g.width_cells, g.height_cells, spec.margin, spec.counter_cap
    )
}

/// Write `map.pgm` and `map.txt` next to the run's grid snapshot.
pub fn map_dump(run_dir: &Path) -> Result<()> {
    let snapshot: GridSnapshot = crate::log::read_grid(run_dir)?;
    let map = GridMap::from_snapshot(&snapshot).context("grid snapshot is inconsistent")?;
    std::fs::write(run_dir.join("map.pgm"), grid_pgm(&map)).context("writing map.pgm")?;
    std::fs::write(run_dir.join("map.txt"), grid_header(&map)).context("writing map.txt")?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Sample {
    estimated_mm: f64,
    true_mm: f64,
}

/// Read `(estimated_mm, true_mm)` pairs from CSV with a header row.
pub fn read_samples(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    r.deserialize::<Sample>()
        .enumerate()
        .map(|(i, s)| {
            let s = s.with_context(|| format!("sample row {}", i + 1))?;
            Ok((s.estimated_mm, s.true_mm))
        })
        .collect()
}

pub fn calibrate(samples_csv: &str) -> Result<RangeCorrection> {
    let samples = read_samples(samples_csv)?;
    Ok(fit_correction(&samples)?)
}
