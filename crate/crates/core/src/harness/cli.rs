//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::bench::{batch_scaling, forward_speedup, BenchSettings};
use super::config::{DataSource, RunConfig};
use super::metrics::{emit_metrics, write_csv, MetricsRecord, Summary};
use crate::checks::equivalence::{batched_suite, oracle_suite};
use crate::checks::gradient::{clamp_saturation_exact, pipeline_check, primitive_suite};
use crate::error::{Error, Result};
use crate::learn::train;
use crate::provenance::ProvenanceKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "neurosym", version, about = "Train and check batched neurosymbolic programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train and write metrics.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Runs with consecutive seeds; the summary reports the mean best accuracy.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Finite-difference gradient suite.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Trains under add-mult and under top-k proofs for several k.
    CompareProvenances {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
        ks: Vec<usize>,
    },
    /// Programs against exhaustive enumeration, batched against per-sample runs.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
    },
    /// Times batched against per-sample execution.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Fails unless the batched forward pass is at least this many times faster.
        #[arg(long)]
        assert_speedup: Option<f64>,
    },
}

/// Runs the command line and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::Io { .. }
                | Error::IdxBadMagic { .. }
                | Error::IdxTruncated { .. }
                | Error::IdxCountMismatch { .. } => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { common, repeats } => run(&load(&common)?, repeats),
        Command::Gradcheck { common, points } => gradcheck(&load(&common)?, points),
        Command::CompareProvenances { common, repeats, ks } => compare(&load(&common)?, repeats, &ks),
        Command::Oracle { common, cases, batch } => oracle(&load(&common)?, cases, batch),
        Command::Bench {
            common,
            repeats,
            assert_speedup,
        } => bench(&load(&common)?, repeats, assert_speedup),
    }
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        return Err(Error::Config("--repeats must be at least 1".into()));
    }
    Ok(())
}

/// Trains once per seed and returns every epoch record.
fn train_repeats(cfg: &RunConfig, provenance: ProvenanceKind, repeats: usize) -> Result<Vec<MetricsRecord>> {
    let mut records = vec![];
    for r in 0..repeats {
        let seed = cfg.train.seed.wrapping_add(r as u64);
        let (tr, te) = cfg.load_data(seed)?;
        let tc = crate::learn::TrainConfig {
            seed,
            provenance,
            ..cfg.train.clone()
        };
        let trained = train(cfg.task, &tc, &tr, &te)?;
        for s in &trained.history {
            eprintln!(
                "{} {} seed {seed} epoch {}: loss {:.4} accuracy {:.4} ({:.2}s)",
                cfg.task, provenance, s.epoch, s.loss, s.accuracy, s.epoch_seconds
            );
            records.push(MetricsRecord::from_stats(s, provenance, seed));
        }
    }
    Ok(records)
}

fn run(cfg: &RunConfig, repeats: usize) -> Result<i32> {
    check_repeats(repeats)?;
    let records = train_repeats(cfg, cfg.train.provenance, repeats)?;
    let (csv_path, _) = emit_metrics(&records, &cfg.output_dir)?;
    let summary = Summary::of(&records);
    println!(
        "{}: mean best accuracy {:.4} over {} run(s); metrics in {}",
        cfg.task,
        summary.best_accuracy,
        summary.runs.len(),
        csv_path.display()
    );
    Ok(EXIT_OK)
}

fn gradcheck(cfg: &RunConfig, points: usize) -> Result<i32> {
    if points == 0 {
        return Err(Error::Config("--points must be at least 1".into()));
    }
    let mut outcomes = primitive_suite(points, cfg.train.seed)?;
    outcomes.push(pipeline_check(cfg.task, cfg.train.provenance, points, cfg.train.seed)?);
    let mut ok = true;
    for c in &outcomes {
        ok &= c.passed();
        println!(
            "{} {:<40} worst relative error {:.3e} over {} point(s), {} redrawn",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.worst_rel_error,
            c.points,
            c.redrawn
        );
    }
    let clamp = clamp_saturation_exact()?;
    println!("{} clamp gradient at saturation", if clamp { "PASS" } else { "FAIL" });
    Ok(if ok && clamp { EXIT_OK } else { EXIT_CHECK })
}

#[derive(Serialize)]
struct Cell {
    provenance: String,
    k: usize,
    repeats: usize,
    mean_best_accuracy: f64,
    mean_epoch_seconds: f64,
}

fn compare(cfg: &RunConfig, repeats: usize, ks: &[usize]) -> Result<i32> {
    check_repeats(repeats)?;
    let mut grid = vec![ProvenanceKind::Damp];
    for &k in ks {
        grid.push(ProvenanceKind::dtkp(k).map_err(|e| Error::Config(e.to_string()))?);
    }
    let mut cells = vec![];
    for prov in grid {
        let records = train_repeats(cfg, prov, repeats)?;
        let dir = cfg.output_dir.join(match prov {
            ProvenanceKind::Damp => "damp".to_string(),
            ProvenanceKind::DtkpAm { k } => format!("dtkp-am-k{k}"),
        });
        emit_metrics(&records, &dir)?;
        let summary = Summary::of(&records);
        cells.push(Cell {
            provenance: prov.name().to_string(),
            k: prov.k(),
            repeats,
            mean_best_accuracy: summary.best_accuracy,
            mean_epoch_seconds: summary.total_seconds / records.len().max(1) as f64,
        });
    }
    let path = cfg.output_dir.join("comparison.csv");
    write_csv(
        &path,
        &["provenance", "k", "repeats", "mean_best_accuracy", "mean_epoch_seconds"],
        &cells,
    )?;
    println!("{:<10} {:>3} {:>10} {:>12}", "provenance", "k", "accuracy", "epoch (s)");
    for c in &cells {
        println!(
            "{:<10} {:>3} {:>10.4} {:>12.3}",
            c.provenance, c.k, c.mean_best_accuracy, c.mean_epoch_seconds
        );
    }
    println!("grid written to {}", path.display());
    Ok(EXIT_OK)
}

fn oracle(cfg: &RunConfig, cases: usize, batch: usize) -> Result<i32> {
    if cases == 0 || batch == 0 {
        return Err(Error::Config("--cases and --batch must be positive".into()));
    }
    let seed = cfg.train.seed;
    let mut ok = true;
    for c in oracle_suite(cases, seed)?.into_iter().chain(batched_suite(batch, seed)?) {
        ok &= c.passed();
        println!(
            "{} {:<44} worst abs error {:.3e} (tol {:.0e}) over {} case(s){}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.worst_abs_error,
            c.tolerance,
            c.cases,
            if c.symbols_match { "" } else { ", symbol sets differ" }
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_CHECK })
}

fn bench(cfg: &RunConfig, repeats: usize, assert_speedup: Option<f64>) -> Result<i32> {
    check_repeats(repeats)?;
    let separation = match &cfg.data {
        DataSource::Synthetic(s) => s.separation,
        DataSource::Idx(_) => crate::data::synth::DEFAULT_SEPARATION,
    };
    let settings = BenchSettings {
        provenance: cfg.train.provenance,
        hidden: cfg.train.hidden,
        separation,
        repeats,
        seed: cfg.train.seed,
    };
    let speed = forward_speedup(5, 64, &settings)?;
    println!(
        "{} forward, batch {}: batched {:.4}s, per-sample {:.4}s, speedup {:.2}x",
        speed.task, speed.batch, speed.batched_seconds, speed.sequential_seconds, speed.speedup
    );
    let scale = batch_scaling(4, 1024, 64, 128, &settings)?;
    println!(
        "{} epoch over {} samples: batch {} {:.3}s, batch {} {:.3}s, ratio {:.2}",
        scale.task,
        scale.samples,
        scale.small_batch,
        scale.small_epoch_seconds,
        scale.large_batch,
        scale.large_epoch_seconds,
        scale.ratio
    );
    write_bench(&cfg.output_dir, &speed, &scale)?;
    if let Some(min) = assert_speedup {
        if speed.speedup < min {
            println!("FAIL speedup {:.2}x below {min}x", speed.speedup);
            return Ok(EXIT_CHECK);
        }
        println!("PASS speedup {:.2}x at least {min}x", speed.speedup);
    }
    Ok(EXIT_OK)
}

fn write_bench(dir: &Path, speed: &impl Serialize, scale: &impl Serialize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join("bench.json");
    let mut json = serde_json::to_string_pretty(&serde_json::json!({ "speedup": speed, "batch_scaling": scale }))?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|source| Error::Io { path, source })
}
