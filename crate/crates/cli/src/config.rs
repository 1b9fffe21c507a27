//! TOML run configuration. Every key is optional; missing keys fall back to
//! the per-problem defaults below.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use oidd_core::fem2d::{Material, SolverKind};
use oidd_core::genome::{DispersionStat, GenomeBounds, MutationParams};
use oidd_core::map_elites::{Axis, DescriptorSpace};
use oidd_core::problems::{problem_by_name, ProblemSpec};
use oidd_core::simp::{SimpParams, VoidMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub problem: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub problem_params: ProblemParams,
    pub oidd: OiddParams,
    pub archive: ArchiveParams,
    pub baseline: BaselineParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemParams {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub volfrac: Option<f64>,
    pub penal: Option<f64>,
    pub rmin: Option<f64>,
    pub move_limit: Option<f64>,
    pub inner_iters: Option<usize>,
    pub change_tol: Option<f64>,
    pub void_mode: Option<VoidMode>,
    pub solver: Option<SolverKind>,
    pub e0: Option<f64>,
    pub e_min: Option<f64>,
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OiddParams {
    pub n_max: Option<usize>,
    pub iterations: Option<usize>,
    pub init_population: Option<usize>,
    pub batch_size: Option<usize>,
    pub crossover_prob: Option<f64>,
    pub l_max: Option<usize>,
    pub w_max: Option<usize>,
    pub p_mut: Option<f64>,
    pub p_flip: Option<f64>,
    pub sigma_frac: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchiveParams {
    pub entropy_bins: Option<usize>,
    pub dispersion_bins: Option<usize>,
    pub entropy_max: Option<f64>,
    pub dispersion_max: Option<f64>,
    pub dispersion_stat: Option<DispersionStat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub repeats: Option<usize>,
    pub random_init: Option<bool>,
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub name: String,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub problem: ProblemSpec,
    pub bounds: GenomeBounds,
    pub space: DescriptorSpace,
    pub dispersion_stat: DispersionStat,
    pub mutation: MutationParams,
    pub iterations: usize,
    pub init_population: usize,
    pub batch_size: usize,
    pub crossover_prob: f64,
    pub baseline_repeats: usize,
    pub baseline_random_init: bool,
}

struct Defaults {
    nx: usize,
    ny: usize,
    volfrac: f64,
    iterations: usize,
    init_population: usize,
    batch_size: usize,
}

fn defaults_for(problem: &str) -> Result<Defaults> {
    Ok(match problem {
        "mbb" => Defaults {
            nx: 200,
            ny: 100,
            volfrac: 0.5,
            iterations: 50,
            init_population: 20,
            batch_size: 10,
        },
        "gripper" => Defaults {
            nx: 150,
            ny: 70,
            volfrac: 0.3,
            iterations: 100,
            init_population: 10,
            batch_size: 10,
        },
        other => bail!("unknown problem '{other}' (expected 'mbb' or 'gripper')"),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn resolve(&self) -> Result<Settings> {
        let d = defaults_for(&self.problem)?;
        let pp = &self.problem_params;
        let nx = pp.nx.unwrap_or(d.nx);
        let ny = pp.ny.unwrap_or(d.ny);
        let volfrac = pp.volfrac.unwrap_or(d.volfrac);
        let mut problem = problem_by_name(&self.problem, nx, ny, volfrac)?;
        let base_simp = problem.simp;
        problem.simp = SimpParams {
            penal: pp.penal.unwrap_or(base_simp.penal),
            rmin: pp.rmin.unwrap_or(base_simp.rmin),
            move_limit: pp.move_limit.unwrap_or(base_simp.move_limit),
            inner_iters: pp.inner_iters.unwrap_or(base_simp.inner_iters),
            change_tol: pp.change_tol.unwrap_or(base_simp.change_tol),
            void_mode: pp.void_mode.unwrap_or(base_simp.void_mode),
            solver: oidd_core::SolverOptions {
                kind: pp.solver.unwrap_or(base_simp.solver.kind),
                ..base_simp.solver
            },
        };
        let base_mat = Material::default();
        problem.material = Material {
            e0: pp.e0.unwrap_or(base_mat.e0),
            e_min: pp.e_min.unwrap_or(pp.e0.unwrap_or(base_mat.e0) * 1e-9),
            nu: pp.nu.unwrap_or(base_mat.nu),
        };
        problem.validate()?;
        problem.simp.validate()?;

        let o = &self.oidd;
        let mut bounds = GenomeBounds::for_mesh(&problem.mesh, o.n_max.unwrap_or(10));
        bounds.l_max = o.l_max.unwrap_or(bounds.l_max);
        bounds.w_max = o.w_max.unwrap_or(bounds.w_max);
        ensure!(bounds.n_max >= 1, "n_max must be >= 1");
        ensure!(bounds.l_max >= 1 && bounds.w_max >= 1, "void size bounds must be >= 1");

        let a = &self.archive;
        let default_space = DescriptorSpace::default_for(&bounds, 8)?;
        let space = DescriptorSpace {
            entropy: Axis::new(
                0.0,
                a.entropy_max.unwrap_or(default_space.entropy.upper),
                a.entropy_bins.unwrap_or(8),
            )?,
            dispersion: Axis::new(
                0.0,
                a.dispersion_max.unwrap_or(default_space.dispersion.upper),
                a.dispersion_bins.unwrap_or(8),
            )?,
        };

        let base_mut = MutationParams::default();
        let mutation = MutationParams {
            p_mut: o.p_mut.unwrap_or(base_mut.p_mut),
            p_flip: o.p_flip.unwrap_or(base_mut.p_flip),
            sigma_frac: o.sigma_frac.unwrap_or(base_mut.sigma_frac),
            guarantee_change: true,
        };
        for (name, p) in [("p_mut", mutation.p_mut), ("p_flip", mutation.p_flip)] {
            ensure!((0.0..=1.0).contains(&p), "{name} must lie in [0, 1], got {p}");
        }
        let crossover_prob = o.crossover_prob.unwrap_or(0.5);
        ensure!((0.0..=1.0).contains(&crossover_prob), "crossover_prob must lie in [0, 1]");

        let iterations = o.iterations.unwrap_or(d.iterations);
        let init_population = o.init_population.unwrap_or(d.init_population);
        let batch_size = o.batch_size.unwrap_or(d.batch_size);
        ensure!(iterations >= 1, "iterations must be >= 1");
        ensure!(init_population >= 1, "init_population must be >= 1");
        ensure!(batch_size >= 1, "batch_size must be >= 1");
        let workers = self.workers.unwrap_or(1);
        ensure!(workers >= 1, "workers must be >= 1");
        let baseline_repeats = self.baseline.repeats.unwrap_or(30);
        ensure!(baseline_repeats >= 1, "baseline repeats must be >= 1");

        let name = self.name.clone().unwrap_or_else(|| self.problem.clone());
        Ok(Settings {
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")).join(&name),
            name,
            seed: self.seed,
            workers,
            problem,
            bounds,
            space,
            dispersion_stat: a.dispersion_stat.unwrap_or_default(),
            mutation,
            iterations,
            init_population,
            batch_size,
            crossover_prob,
            baseline_repeats,
            baseline_random_init: self.baseline.random_init.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mbb_defaults() {
        let cfg: RunConfig = toml::from_str("problem = \"mbb\"").unwrap();
        let s = cfg.resolve().unwrap();
        assert_eq!((s.problem.mesh.nx(), s.problem.mesh.ny()), (200, 100));
        assert_eq!((s.iterations, s.init_population, s.batch_size), (50, 20, 10));
        assert_eq!(s.bounds.n_max, 10);
        assert_eq!(s.space.n_cells(), 64);
        assert_eq!(s.problem.simp.inner_iters, 50);
        assert_eq!(s.problem.simp.rmin, 4.0);
        assert_eq!(s.out, PathBuf::from("out/mbb"));
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
            name = "desk"
            problem = "mbb"
            seed = 4
            [problem_params]
            nx = 60
            ny = 20
            rmin = 1.5
            solver = "pcg"
            void_mode = "initial_only"
            [oidd]
            iterations = 3
            l_max = 7
            [archive]
            entropy_bins = 4
            dispersion_stat = "mean"
        "#;
        let s: Settings = toml::from_str::<RunConfig>(text).unwrap().resolve().unwrap();
        assert_eq!(s.problem.mesh.nx(), 60);
        assert_eq!(s.problem.simp.rmin, 1.5);
        assert_eq!(s.problem.simp.solver.kind, SolverKind::Pcg);
        assert_eq!(s.problem.simp.void_mode, VoidMode::InitialOnly);
        assert_eq!(s.iterations, 3);
        assert_eq!(s.bounds.l_max, 7);
        assert_eq!(s.space.n_cells(), 32);
        assert_eq!(s.dispersion_stat, DispersionStat::Mean);
        assert_eq!(s.seed, 4);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(toml::from_str::<RunConfig>("problem = \"mbb\"\nbogus = 1").is_err());
        let unknown: RunConfig = toml::from_str("problem = \"bridge\"").unwrap();
        assert!(unknown.resolve().is_err());
        let zero: RunConfig = toml::from_str("problem = \"mbb\"\n[oidd]\nbatch_size = 0").unwrap();
        assert!(zero.resolve().is_err());
        let nu: RunConfig = toml::from_str("problem = \"mbb\"\n[problem_params]\nnu = 0.5").unwrap();
        assert!(nu.resolve().is_err());
    }
}
