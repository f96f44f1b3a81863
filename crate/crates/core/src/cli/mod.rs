//! The `fairpol` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error, 3 infeasible linear program.

pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use sha2::{Digest, Sha256};

pub use config::RunConfig;

use crate::dataio::{read_ground_truth, save_dataset, write_ground_truth, Dataset, GroundTruth};
use crate::lagrangian::write_metrics;
use crate::lpsolve::{bundled_example, read_problem, solve_problem, write_solution, LpStatus};
use crate::pipeline::{
    load_phase1, phase1_train, read_frontier, run_baselines, save_phase1, slack_sweep, summarize,
    write_baselines, write_failures, write_frontier, write_histogram, ConstraintKind, DataSource,
    Phase1Output, TRUTH_COUPLING,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fairpol", version, about = "Disparity-constrained policy learning")]
pub struct Cli {
    /// Base seed; overrides the config's `seed` key.
    #[arg(long, global = true, env = "FAIRPOL_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for independent sweep runs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset CSV plus a ground-truth sidecar (`<out>.truth`).
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the phase-I models and store them in a directory.
    Phase1 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the full published training settings.
        #[arg(long)]
        faithful: bool,
    },
    /// Run the slack sweep and write frontier, metrics and histograms.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        faithful: bool,
    },
    /// Solve a discrete policy problem as a linear program.
    Lp {
        /// Problem file; the bundled two-action example when omitted.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Constraint slack; infinite when omitted.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the baselines and write them as CSV.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        faithful: bool,
    },
    /// Render a frontier CSV as an SVG chart.
    Plot {
        #[arg(long)]
        frontier: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Maps an error to the documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Contract(_) | Error::Parse { .. } | Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: &Path, cli: &Cli, faithful: bool) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text, &path.display().to_string())?;
    if let Some(s) = cli.seed {
        cfg.set("seed", s.to_string());
    }
    if faithful {
        cfg.set("faithful", "true");
    }
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<GroundTruth>)> {
    let (ds, mut gt) = cfg.source()?.load()?;
    if gt.is_none() {
        if let Some(p) = cfg.truth_path() {
            gt = Some(read_ground_truth(&fs::read_to_string(p)?)?);
        }
    }
    Ok((ds, gt))
}

fn phase1_for(cfg: &RunConfig, ds: &Dataset) -> Result<Phase1Output> {
    let kind = cfg.kind()?;
    if let Some(dir) = cfg.phase1_dir() {
        let p1 = load_phase1(&dir)?;
        if p1.kind != kind {
            return Err(Error::Config(format!(
                "{} holds {} models, config asks for {}",
                dir.display(),
                p1.kind.name(),
                kind.name()
            )));
        }
        return Ok(p1);
    }
    phase1_train(ds, kind, &cfg.phase1(kind, cfg.faithful()?)?)
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn truth_sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".truth");
    PathBuf::from(name)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(config, cli, false)?;
            let (ds, gt) = cfg.source()?.load()?;
            save_dataset(&ds, out)?;
            if let Some(gt) = gt {
                fs::write(truth_sidecar(out), write_ground_truth(&gt))?;
            }
            println!("wrote {} rows to {}", ds.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Phase1 { config, out, faithful } => {
            let cfg = load_config(config, cli, *faithful)?;
            let (ds, _) = load_data(&cfg)?;
            let kind = cfg.kind()?;
            let p1 = phase1_train(&ds, kind, &cfg.phase1(kind, cfg.faithful()?)?)?;
            save_phase1(&p1, out)?;
            println!("holdout R2 {:.4}", p1.holdout_r2);
            if let Some(v) = p1.variances {
                println!("vA {} vY {}", v.va, v.vy);
            }
            Ok(EXIT_OK)
        }
        Command::Sweep { config, out, faithful } => {
            let cfg = load_config(config, cli, *faithful)?;
            cmd_sweep(&cfg, out, cli.jobs)
        }
        Command::Lp { problem, epsilon, out } => {
            let pb = match problem {
                Some(p) => read_problem(&fs::read_to_string(p)?, p)?,
                None => bundled_example()?,
            };
            let pb = pb.with_epsilon(epsilon.unwrap_or(f64::INFINITY));
            let (inst, sol) = solve_problem(&pb)?;
            match sol.status {
                LpStatus::Optimal => {
                    write_solution(&pb, &inst, &sol, fs::File::create(out)?)?;
                    println!("status: optimal");
                    println!("objective: {}", sol.expected_outcome);
                    Ok(EXIT_OK)
                }
                LpStatus::Infeasible => {
                    println!("status: infeasible");
                    Ok(EXIT_INFEASIBLE)
                }
                LpStatus::Unbounded => {
                    println!("status: unbounded");
                    Ok(EXIT_RUNTIME)
                }
            }
        }
        Command::Eval { config, out, faithful } => {
            let cfg = load_config(config, cli, *faithful)?;
            let exp = cfg.experiment(cli.jobs)?;
            let (ds, gt) = load_data(&cfg)?;
            let p1 = phase1_for(&cfg, &ds)?;
            let rows = run_baselines(
                exp.kind,
                &ds,
                &p1,
                &exp.phase2,
                &exp.const_levels,
                exp.seeds[0],
                gt.as_ref(),
            )?;
            write_baselines(&rows, fs::File::create(out)?)?;
            for r in &rows {
                println!("{:<18} utility {:.4} constraint {:.6}", r.name, r.utility, r.constraint);
            }
            Ok(EXIT_OK)
        }
        Command::Plot { frontier, out } => {
            let text = fs::read(frontier)?;
            let rows = read_frontier(text.as_slice(), &frontier.display().to_string())?;
            if rows.is_empty() {
                return Err(Error::Config(format!("{} has no rows", frontier.display())));
            }
            fs::write(out, svg::frontier_svg(&summarize(&rows)))?;
            Ok(EXIT_OK)
        }
    }
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<i32> {
    let exp = cfg.experiment(jobs)?;
    let (ds, gt) = load_data(cfg)?;
    let p1 = phase1_for(cfg, &ds)?;
    if cfg.phase1_dir().is_none() {
        save_phase1(&p1, &out.join("phase1"))?;
    }
    let res = slack_sweep(&exp, &ds, &p1, gt.as_ref())?;
    fs::create_dir_all(out.join("metrics"))?;
    fs::create_dir_all(out.join("histograms"))?;
    write_frontier(&res.rows(), fs::File::create(out.join("frontier.csv"))?)?;
    write_failures(&res.failures, fs::File::create(out.join("failures.csv"))?)?;
    for run in &res.runs {
        let stem = format!("eps{}_seed{}", run.row.epsilon, run.row.seed);
        write_metrics(&run.metrics, fs::File::create(out.join("metrics").join(format!("{stem}.csv")))?)?;
        write_histogram(
            &run.histogram,
            fs::File::create(out.join("histograms").join(format!("{stem}.csv")))?,
        )?;
    }
    let generator_seed = match cfg.source()? {
        DataSource::Nyc(spec) | DataSource::Ihdp { spec, .. } => spec.seed.to_string(),
        DataSource::File(_) => "none".into(),
    };
    let join = |v: &[String]| v.join(",");
    let meta = format!(
        "config_sha256={}\nconstraint={}\ngenerator_seed={}\ntruth_coupling={}\nepsilons={}\nseeds={}\nruns_ok={}\nruns_failed={}\nphase1_holdout_r2={}\n",
        sha256_hex(&cfg.canonical()),
        exp.kind.name(),
        generator_seed,
        match (&gt, exp.kind) {
            (None, _) => "none",
            (Some(_), ConstraintKind::EqB) => TRUTH_COUPLING,
            (Some(_), ConstraintKind::ModBrk) => "deterministic",
        },
        join(&res.epsilons.iter().map(f64::to_string).collect::<Vec<_>>()),
        join(&exp.seeds.iter().map(u64::to_string).collect::<Vec<_>>()),
        res.runs.len(),
        res.failures.len(),
        p1.holdout_r2,
    );
    fs::write(out.join("run_meta.txt"), meta)?;
    info!("sweep wrote {} rows to {}", res.runs.len(), out.display());
    if res.runs.is_empty() {
        warn!("every run failed; see failures.csv");
        eprintln!("error: all {} runs failed", res.failures.len());
        return Ok(EXIT_RUNTIME);
    }
    for s in summarize(&res.rows()) {
        println!(
            "epsilon {:<10} utility {:.4} constraint {:.6}",
            s.epsilon, s.utility_median, s.constraint_median
        );
    }
    Ok(EXIT_OK)
}
