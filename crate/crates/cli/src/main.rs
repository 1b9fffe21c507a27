use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use oidd_cli::baseline::run_baseline;
use oidd_cli::config::RunConfig;
use oidd_cli::export::export_checkpoint;
use oidd_cli::oidd::run_oidd;
use oidd_cli::stats::{bonferroni, kruskal_wallis};

#[derive(Parser)]
#[command(name = "oidd", version, about = "Optimized initial design domains for SIMP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output root; results go to `<out>/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MAP-Elites search.
    Run {
        #[command(flatten)]
        common: Common,
        /// Continue from `archive.json` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Plain SIMP on the full domain.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        random_init: bool,
    },
    /// Kruskal-Wallis over groups of CSV columns, with Bonferroni-corrected
    /// pairwise tests.
    Stats {
        /// `LABEL=COLUMN:FILE[,FILE...]`; append `@last` to the column to
        /// use only the last row of each file.
        #[arg(long = "group", required = true)]
        groups: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Re-render heatmap and elite images from a checkpoint.
    Export {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn settings(common: &Common) -> Result<oidd_cli::Settings> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    cfg.resolve()
}

struct Group {
    label: String,
    values: Vec<f64>,
}

fn parse_group(spec: &str) -> Result<Group> {
    let (label, rest) = spec.split_once('=').context("group must be LABEL=COLUMN:FILES")?;
    let (column, files) = rest.split_once(':').context("group must be LABEL=COLUMN:FILES")?;
    let (column, last_only) = match column.strip_suffix("@last") {
        Some(c) => (c, true),
        None => (column, false),
    };
    let mut values = Vec::new();
    for file in files.split(',').filter(|f| !f.is_empty()) {
        let mut reader = csv::Reader::from_path(file).with_context(|| format!("opening {file}"))?;
        let index = reader
            .headers()?
            .iter()
            .position(|h| h == column)
            .with_context(|| format!("{file} has no column '{column}'"))?;
        let mut column_values = Vec::new();
        for record in reader.records() {
            let record = record.with_context(|| format!("reading {file}"))?;
            let field = record.get(index).unwrap_or("");
            if field.is_empty() {
                continue;
            }
            column_values.push(field.parse::<f64>().with_context(|| format!("{file}: bad number '{field}'"))?);
        }
        if last_only {
            values.extend(column_values.last());
        } else {
            values.extend(column_values);
        }
    }
    ensure!(!values.is_empty(), "group '{label}' has no values");
    Ok(Group {
        label: label.to_string(),
        values,
    })
}

fn stats(specs: &[String], alpha: f64) -> Result<()> {
    let groups = specs.iter().map(|s| parse_group(s)).collect::<Result<Vec<_>>>()?;
    if groups.len() < 2 {
        bail!("need at least two groups");
    }
    let data: Vec<Vec<f64>> = groups.iter().map(|g| g.values.clone()).collect();
    let kw = kruskal_wallis(&data)?;
    println!("kruskal-wallis: H = {:.6}, df = {}, p = {:.6e}", kw.h, kw.df, kw.p_value);
    let mut pairs = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let r = kruskal_wallis(&[data[a].clone(), data[b].clone()])?;
            pairs.push((a, b, r));
        }
    }
    let p: Vec<f64> = pairs.iter().map(|(_, _, r)| r.p_value).collect();
    let corrected = bonferroni(&p, alpha)?;
    println!("pair,H,p,p_adjusted,significant");
    for (k, (a, b, r)) in pairs.iter().enumerate() {
        println!(
            "{} vs {},{:.6},{:.6e},{:.6e},{}",
            groups[*a].label, groups[*b].label, r.h, r.p_value, corrected.adjusted[k], corrected.significant[k]
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, resume } => {
            let s = settings(&common)?;
            let outcome = run_oidd(&s, resume)?;
            let m = outcome.archive.metrics();
            println!(
                "{}: coverage {:.3}, best {}, results in {}",
                s.name,
                m.coverage,
                m.best.map_or("none".into(), |b| format!("{b:e}")),
                outcome.out.display()
            );
        }
        Command::Baseline {
            common,
            repeats,
            random_init,
        } => {
            let s = settings(&common)?;
            let rows = run_baseline(&s, repeats.unwrap_or(s.baseline_repeats), random_init || s.baseline_random_init)?;
            let best = rows.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
            println!("{}: {} runs, best {best:e}, results in {}", s.name, rows.len(), s.out.display());
        }
        Command::Stats { groups, alpha } => stats(&groups, alpha)?,
        Command::Export { archive, out } => export_checkpoint(&archive, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
