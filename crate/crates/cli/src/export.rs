//! Archive renderings: the fitness heatmap and one image per elite.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use oidd_core::map_elites::Archive;

use crate::oidd::Checkpoint;
use crate::pgm;

pub const HEATMAP: &str = "heatmap.csv";
pub const ELITES: &str = "elites";

/// Entropy bins as rows, dispersion bins as columns; empty cells are blank.
pub fn write_heatmap(path: &Path, archive: &Archive) -> Result<()> {
    let space = archive.space;
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["entropy_bin".to_string()];
    header.extend((0..space.dispersion.bins).map(|j| format!("dispersion_{j}")));
    writer.write_record(&header)?;
    for i in 0..space.entropy.bins {
        let mut record = vec![i.to_string()];
        for j in 0..space.dispersion.bins {
            let cell = i * space.dispersion.bins + j;
            record.push(archive.get(cell).map(|e| format!("{:e}", e.fitness)).unwrap_or_default());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes `{i}_{j}.pgm` for every occupied cell.
pub fn write_elites(dir: &Path, archive: &Archive, nx: usize, ny: usize) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (cell, entry) in archive.occupied() {
        let (i, j) = archive.space.coords_of(cell);
        pgm::write_density(&dir.join(format!("{i}_{j}.pgm")), &entry.density, nx, ny)?;
    }
    Ok(())
}

/// Re-renders the heatmap and elite images of a checkpoint into `out`.
pub fn export_checkpoint(checkpoint: &Path, out: &Path) -> Result<()> {
    let cp = Checkpoint::load(checkpoint)?;
    let archive = cp.archive()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_heatmap(&out.join(HEATMAP), &archive)?;
    write_elites(&out.join(ELITES), &archive, cp.nx, cp.ny)
}
