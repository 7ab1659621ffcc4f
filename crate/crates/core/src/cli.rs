//! Command-line front end. JSON goes to stdout; human-readable notes go to
//! stderr unless `--quiet` is given.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{GkbmError, Result};
use crate::harness::{emit, run_sweep, run_sweep_with_workers, write_csv, ExperimentConfig, Metric, OutputFormat};
use crate::info::derived_constants;
use crate::kernel::Kernel;
use crate::model::{GkbmInstance, GkbmParams, Labeling};
use crate::oracle::{component_map, likelihood_breakdown, map_estimate};
use crate::quad::DEFAULT_TOL;
use crate::recovery::{full_pipeline_with, Phase1Mode, RuntimeStats};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const KERNEL_HINT: &str = r#"kernel JSON: {"shape":"indicator","kappa":K} | {"shape":"triangular","kappa":K} | {"shape":"texp","rate":R,"kappa":K} | {"shape":"pwc","pieces":[[a,b,level],...]}, optionally with "epsilon""#;
const CONFIG_HINT: &str = r#"sweep config JSON: {"grid":{"lambda":[..],"p":[..],"q":[..],"kernel":[..],"n":[..]} and/or "cells":[{"lambda","p","q","kernel","n"}], "seeds_per_cell":N, "seed":S, "metrics":[..], "tol":T, "phase1":"sliding"|"block", "outputs":{"csv":path,"svg":path}}; see README"#;

#[derive(Debug, Parser)]
#[command(name = "gkbm", version, about = "Sample geometric kernel block models, recover communities, and map the recovery threshold")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Quadrature tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Print only machine-readable JSON.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Intensity multiplier; the node count is Poisson(lambda * n).
    #[arg(long)]
    pub lambda: f64,
    /// Within-community connection probability.
    #[arg(long)]
    pub p: f64,
    /// Across-community connection probability.
    #[arg(long)]
    pub q: f64,
    /// Kernel as JSON, e.g. '{"shape":"indicator","kappa":1}'.
    #[arg(long)]
    pub kernel: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleMode {
    Map,
    Component,
    Likelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phase1Arg {
    Sliding,
    Block,
}

impl From<Phase1Arg> for Phase1Mode {
    fn from(a: Phase1Arg) -> Self {
        match a {
            Phase1Arg::Sliding => Phase1Mode::Sliding,
            Phase1Arg::Block => Phase1Mode::Block,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an instance and write it as JSON.
    Generate {
        /// Scale parameter.
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        model: ModelArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-phase recovery on an instance file.
    Recover {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the recovered labels to this file.
        #[arg(long)]
        emit_labels: Option<PathBuf>,
        /// Include operation counts and timings.
        #[arg(long)]
        stats: bool,
        #[arg(long, value_enum, default_value = "sliding")]
        phase1: Phase1Arg,
    },
    /// Report the threshold quantities for a parameter set.
    Threshold {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Brute-force references on a small instance.
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: OracleMode,
    },
    /// Run a Monte Carlo sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// CSV output; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// SVG phase diagram; overrides the config.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Worker threads; all cores when absent.
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Labels as written by `recover --emit-labels`: the sign is chosen so that
/// node 0 gets `+1`, and `flip_canonical` records whether that flipped them.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct LabelFile {
    pub flip_canonical: bool,
    pub labels: Labeling,
}

#[derive(Debug, Serialize)]
struct RecoverReport {
    node_count: usize,
    edge_count: usize,
    exact_recovery: bool,
    agreement_fraction: f64,
    errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<RuntimeStats>,
}

#[derive(Debug, Serialize)]
struct ComponentReport {
    decisions: Vec<crate::oracle::ComponentDecision>,
    disagreements: usize,
    ties: usize,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return EXIT_OK;
            }
            let _ = write!(stderr, "{}", e.render());
            return EXIT_VALIDATION;
        }
    };
    let hint = match &cli.command {
        Command::Generate { .. } | Command::Threshold { .. } => Some(KERNEL_HINT),
        Command::Sweep { .. } => Some(CONFIG_HINT),
        _ => None,
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_validation() {
                if let Some(h) = hint {
                    let _ = writeln!(stderr, "hint: {h}");
                }
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_instance(path: &PathBuf) -> Result<GkbmInstance> {
    let text = std::fs::read_to_string(path)?;
    GkbmInstance::from_json(&text)
}

fn model_params(m: &ModelArgs, n: u64, seed: u64) -> Result<GkbmParams> {
    let kernel = Kernel::from_json(&m.kernel)?;
    GkbmParams::new(m.lambda, n, m.p, m.q, kernel, seed)
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(GkbmError::invalid("--tol must be positive"));
    }
    let note = |stderr: &mut dyn Write, msg: String| {
        if !cli.quiet {
            let _ = writeln!(stderr, "{msg}");
        }
    };
    match &cli.command {
        Command::Generate { n, model, out } => {
            let params = model_params(model, *n, cli.seed)?;
            let inst = GkbmInstance::sample(&params)?;
            let text = inst.to_json();
            match out {
                Some(path) => {
                    std::fs::write(path, text)?;
                    note(
                        stderr,
                        format!(
                            "wrote {} nodes and {} edges to {}",
                            inst.node_count(),
                            inst.edge_count(),
                            path.display()
                        ),
                    );
                }
                None => writeln!(stdout, "{text}")?,
            }
        }
        Command::Recover { input, emit_labels, stats, phase1 } => {
            let inst = load_instance(input)?;
            let out = full_pipeline_with(&inst, cli.tol, (*phase1).into())?;
            let truth = inst.truth();
            let report = RecoverReport {
                node_count: inst.node_count(),
                edge_count: inst.edge_count(),
                exact_recovery: out.labels.recovers_exactly(&truth),
                agreement_fraction: out.labels.agreement(&truth)?.fraction(),
                errors: out.labels.errors_against(&truth),
                stats: stats.then(|| out.stats.clone()),
            };
            if let Some(path) = emit_labels {
                let (labels, flip_canonical) = out.labels.canonical();
                std::fs::write(path, serde_json::to_string(&LabelFile { flip_canonical, labels })?)?;
            }
            note(
                stderr,
                format!(
                    "recovered {} nodes, {} errors against the stored communities",
                    report.node_count, report.errors
                ),
            );
            write_json(stdout, &report)?;
        }
        Command::Threshold { model } => {
            let kernel = Kernel::from_json(&model.kernel)?;
            let report = derived_constants(model.lambda, &kernel, model.p, model.q, cli.tol)?;
            note(stderr, format!("verdict: {:?}", report.verdict));
            write_json(stdout, &report)?;
        }
        Command::Oracle { input, mode } => {
            let inst = load_instance(input)?;
            let truth = inst.truth();
            match mode {
                OracleMode::Map => write_json(stdout, &map_estimate(&inst)?)?,
                OracleMode::Likelihood => write_json(stdout, &likelihood_breakdown(&inst, &truth)?)?,
                OracleMode::Component => {
                    let decisions = (0..inst.node_count())
                        .map(|u| component_map(&inst, u, &truth))
                        .collect::<Result<Vec<_>>>()?;
                    let disagreements = decisions.iter().zip(truth.values()).filter(|(d, &t)| d.label != t).count();
                    let ties = decisions.iter().filter(|d| d.tie).count();
                    write_json(stdout, &ComponentReport { decisions, disagreements, ties })?;
                }
            }
        }
        Command::Sweep { config, out, svg, workers } => {
            let text = std::fs::read_to_string(config)?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let results = match workers {
                Some(w) => run_sweep_with_workers(&cfg, *w)?,
                None => run_sweep(&cfg)?,
            };
            let metrics = cfg.metric_columns();
            let csv_path = out.clone().or_else(|| cfg.outputs.csv.clone());
            let svg_path = svg.clone().or_else(|| cfg.outputs.svg.clone());
            match &csv_path {
                Some(path) => emit(&results, &metrics, OutputFormat::Csv, path)?,
                None => write_csv(&results, &metrics, &mut *stdout)?,
            }
            if let Some(path) = &svg_path {
                emit(&results, &metrics, OutputFormat::Svg, path)?;
            }
            let failures: usize = results.iter().map(|r| r.failures).sum();
            note(
                stderr,
                format!("{} cells x {} seeds, {failures} failed runs", results.len(), cfg.seeds_per_cell),
            );
            if csv_path.is_some() {
                for r in &results {
                    if let Some(m) = r.metric(Metric::ExactRate) {
                        note(stderr, format!("cell {}: exact_rate {}", r.index, m.mean));
                    }
                }
                write_json(stdout, &results)?;
            }
        }
    }
    Ok(())
}
