//! Plain SIMP on the full design domain, the reference every OIDD run is
//! compared against.

use std::fs;

use anyhow::{Context, Result};
use log::info;
use oidd_core::simp::{random_initial_density, run_simp, InitialDensity, PassiveMask};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::pgm;
use crate::rng;

pub const BASELINE: &str = "baseline.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub run: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub volume: f64,
}

/// `repeats` runs; with `random_init` each run starts from its own random
/// density field, otherwise all start uniform and agree.
pub fn run_baseline(settings: &Settings, repeats: usize, random_init: bool) -> Result<Vec<BaselineRow>> {
    let problem = &settings.problem;
    let out = &settings.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mask = PassiveMask::empty(problem.mesh.n_elements());
    let full = mask.union(&problem.fixed_mask());
    let mut rows = Vec::with_capacity(repeats);
    for run in 0..repeats {
        let init = if random_init {
            let mut r = rng::stream(settings.seed, 0, run as u32);
            InitialDensity::Custom(random_initial_density(&mut r, &full, problem.volfrac))
        } else {
            InitialDensity::Uniform
        };
        let result = run_simp(problem, &mask, &init)?;
        info!("baseline run {run}: objective {:e}", result.objective);
        if run == 0 {
            pgm::write_density(
                &out.join("baseline.pgm"),
                &result.density.rho,
                problem.mesh.nx(),
                problem.mesh.ny(),
            )?;
        }
        rows.push(BaselineRow {
            run,
            objective: result.objective,
            iterations: result.history.len(),
            converged: result.converged,
            volume: result.density.mean(),
        });
    }
    let path = out.join(BASELINE);
    let mut writer = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(rows)
}
