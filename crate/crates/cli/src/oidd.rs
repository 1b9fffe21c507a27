//! The outer MAP-Elites loop over void-region genomes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{debug, info, warn};
use oidd_core::genome::{crossover, decode, mutate, random_genome};
use oidd_core::map_elites::{Archive, ArchiveEntry, DescriptorSpace, InsertOutcome, Provenance};
use oidd_core::simp::{run_simp, InitialDensity, SimpError};
use oidd_core::{Descriptor, Genome};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Settings;
use crate::export;
use crate::rng::{self, SELECTION};

pub const CHECKPOINT: &str = "archive.json";
pub const METRICS: &str = "metrics.csv";

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub evaluated: usize,
    pub valid: usize,
    pub inserted: usize,
    pub replaced: usize,
    pub coverage: f64,
    #[serde(rename = "best_F")]
    pub best: Option<f64>,
    #[serde(rename = "archive_mean_F")]
    pub archive_mean: Option<f64>,
    #[serde(rename = "batch_mean_F")]
    pub batch_mean: Option<f64>,
    #[serde(rename = "batch_best_F")]
    pub batch_best: Option<f64>,
    pub qd_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCell {
    pub cell: usize,
    pub i: usize,
    pub j: usize,
    #[serde(flatten)]
    pub entry: ArchiveEntry,
}

/// Everything needed to continue a run, written after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Settings that influence results. Worker count and output path do not,
    /// and the iteration budget may grow between resumes.
    pub settings: Value,
    pub nx: usize,
    pub ny: usize,
    pub completed_iterations: usize,
    pub space: DescriptorSpace,
    pub qd_offset: Option<f64>,
    pub cells: Vec<StoredCell>,
    pub history: Vec<IterationMetrics>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn archive(&self) -> Result<Archive> {
        Ok(Archive::from_parts(
            self.space,
            self.cells.iter().map(|c| c.entry.clone()),
            self.qd_offset,
        )?)
    }
}

pub fn fingerprint(settings: &Settings) -> Result<Value> {
    let mut value = serde_json::to_value(settings)?;
    if let Value::Object(map) = &mut value {
        map.remove("workers");
        map.remove("out");
        map.remove("iterations");
    }
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub genome: Genome,
    pub fitness: f64,
    pub descriptor: Descriptor,
    pub density: Vec<f64>,
}

/// Decodes `genome`, runs SIMP on the reduced domain and computes the
/// descriptors.
pub fn evaluate(settings: &Settings, genome: &Genome) -> Result<Evaluation, SimpError> {
    let problem = &settings.problem;
    let mask = decode(genome, &problem.mesh);
    let result = run_simp(problem, &mask, &InitialDensity::Uniform)?;
    Ok(Evaluation {
        genome: genome.clone(),
        fitness: result.objective,
        descriptor: Descriptor::of(genome, problem.mesh.nx(), problem.mesh.ny(), settings.dispersion_stat),
        density: result.density.rho,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub archive: Archive,
    pub history: Vec<IterationMetrics>,
    pub out: PathBuf,
}

/// Genomes evaluated in `iteration` (1-based), drawn from that iteration's
/// streams. The first iteration samples the initial population.
pub fn offspring(settings: &Settings, archive: &Archive, iteration: usize) -> Vec<Genome> {
    let seed = settings.seed;
    if iteration == 1 || archive.is_empty() {
        let count = if iteration == 1 { settings.init_population } else { settings.batch_size };
        return (0..count)
            .map(|k| random_genome(&mut rng::stream(seed, iteration, k as u32), &settings.bounds))
            .collect();
    }
    let mut selection = rng::stream(seed, iteration, SELECTION);
    let parents = archive
        .select_parents(&mut selection, settings.batch_size)
        .expect("archive is not empty");
    parents
        .into_iter()
        .enumerate()
        .map(|(k, parent)| {
            let mut r = rng::stream(seed, iteration, k as u32);
            let child = if r.gen_bool(settings.crossover_prob) {
                let mate = archive.select_parents(&mut r, 1).expect("archive is not empty");
                crossover(&parent, &mate[0], &mut r)
            } else {
                parent
            };
            mutate(&child, &mut r, &settings.bounds, &settings.mutation)
        })
        .collect()
}

/// Runs (or, with `resume`, continues) an experiment and writes its
/// artefacts under `settings.out`.
pub fn run_oidd(settings: &Settings, resume: bool) -> Result<RunOutcome> {
    let out = settings.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let fp = fingerprint(settings)?;
    let checkpoint_path = out.join(CHECKPOINT);

    let (mut archive, mut history, start) = if resume && checkpoint_path.exists() {
        let cp = Checkpoint::load(&checkpoint_path)?;
        ensure!(
            cp.settings == fp,
            "checkpoint {} was written with different settings",
            checkpoint_path.display()
        );
        info!("resuming after iteration {}", cp.completed_iterations);
        (cp.archive()?, cp.history.clone(), cp.completed_iterations + 1)
    } else {
        (Archive::new(settings.space), Vec::new(), 1)
    };
    fs::write(out.join("settings.json"), serde_json::to_string_pretty(settings)?)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .context("building worker pool")?;

    for iteration in start..=settings.iterations {
        let batch = offspring(settings, &archive, iteration);
        let results: Vec<Result<Evaluation, SimpError>> =
            pool.install(|| batch.par_iter().map(|g| evaluate(settings, g)).collect());

        let mut row = IterationMetrics {
            iteration,
            evaluated: batch.len(),
            valid: 0,
            inserted: 0,
            replaced: 0,
            coverage: 0.0,
            best: None,
            archive_mean: None,
            batch_mean: None,
            batch_best: None,
            qd_score: 0.0,
        };
        let mut batch_fitness = Vec::new();
        for (k, result) in results.into_iter().enumerate() {
            let eval = match result {
                Ok(e) => e,
                Err(e) if e.is_design_failure() => {
                    debug!("iteration {iteration} offspring {k} discarded: {e}");
                    continue;
                }
                Err(e) => bail!("iteration {iteration} offspring {k}: {e}"),
            };
            if !eval.fitness.is_finite() {
                warn!("iteration {iteration} offspring {k} has non-finite fitness, discarded");
                continue;
            }
            row.valid += 1;
            batch_fitness.push(eval.fitness);
            let entry = ArchiveEntry {
                genome: eval.genome,
                fitness: eval.fitness,
                descriptor: eval.descriptor,
                provenance: Provenance { iteration, offspring: k },
                density: eval.density,
            };
            match archive.try_insert(entry)? {
                InsertOutcome::Inserted => row.inserted += 1,
                InsertOutcome::Replaced => row.replaced += 1,
                InsertOutcome::Discarded => {}
            }
        }
        if row.valid == 0 {
            warn!("iteration {iteration}: no valid offspring");
        }
        let m = archive.metrics();
        row.coverage = m.coverage;
        row.best = m.best;
        row.archive_mean = m.mean;
        row.qd_score = m.qd_score;
        row.batch_mean = (!batch_fitness.is_empty()).then(|| batch_fitness.iter().sum::<f64>() / batch_fitness.len() as f64);
        row.batch_best = batch_fitness.iter().copied().reduce(f64::min);
        info!(
            "iteration {iteration}/{}: valid {}/{}, coverage {:.3}, best {:?}",
            settings.iterations, row.valid, row.evaluated, row.coverage, row.best
        );
        history.push(row);

        let cp = Checkpoint {
            settings: fp.clone(),
            nx: settings.problem.mesh.nx(),
            ny: settings.problem.mesh.ny(),
            completed_iterations: iteration,
            space: settings.space,
            qd_offset: archive.worst_admitted(),
            cells: stored_cells(&archive),
            history: history.clone(),
        };
        write_atomic(&checkpoint_path, serde_json::to_string_pretty(&cp)?.as_bytes())?;
        write_metrics(&out.join(METRICS), &history)?;
    }

    if history.is_empty() {
        write_metrics(&out.join(METRICS), &history)?;
    }
    export::write_heatmap(&out.join(export::HEATMAP), &archive)?;
    export::write_elites(&out.join(export::ELITES), &archive, settings.problem.mesh.nx(), settings.problem.mesh.ny())?;
    Ok(RunOutcome { archive, history, out })
}

pub fn stored_cells(archive: &Archive) -> Vec<StoredCell> {
    archive
        .occupied()
        .map(|(cell, entry)| {
            let (i, j) = archive.space.coords_of(cell);
            StoredCell {
                cell,
                i,
                j,
                entry: entry.clone(),
            }
        })
        .collect()
}

pub fn write_metrics(path: &Path, history: &[IterationMetrics]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if history.is_empty() {
        writer.write_record([
            "iteration",
            "evaluated",
            "valid",
            "inserted",
            "replaced",
            "coverage",
            "best_F",
            "archive_mean_F",
            "batch_mean_F",
            "batch_best_F",
            "qd_score",
        ])?;
    }
    for row in history {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}
