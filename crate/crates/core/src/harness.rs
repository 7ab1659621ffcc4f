//! Monte Carlo experiments: phase-diagram sweeps over parameter grids,
//! disconnection frequencies, and CSV/SVG output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GkbmError, Result};
use crate::geometry::BlockPartition;
use crate::info::info_metric;
use crate::kernel::Kernel;
use crate::model::{sample_nodes, GkbmInstance, GkbmParams};
use crate::quad::DEFAULT_TOL;
use crate::recovery::{full_pipeline_with, Phase1Mode};

/// Quantities that a sweep can record per run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExactRate,
    AgreementFraction,
    Phase1ErrorCount,
    DisconnectRate,
    Runtime,
    EdgeCount,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::ExactRate,
        Metric::AgreementFraction,
        Metric::Phase1ErrorCount,
        Metric::DisconnectRate,
        Metric::Runtime,
        Metric::EdgeCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ExactRate => "exact_rate",
            Metric::AgreementFraction => "agreement_fraction",
            Metric::Phase1ErrorCount => "phase1_error_count",
            Metric::DisconnectRate => "disconnect_rate",
            Metric::Runtime => "runtime",
            Metric::EdgeCount => "edge_count",
        }
    }

    /// Metrics bounded in `[0, 1]`.
    pub fn is_rate(self) -> bool {
        matches!(self, Metric::ExactRate | Metric::AgreementFraction | Metric::DisconnectRate)
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub kernel: Kernel,
    pub n: u64,
}

/// Cartesian product of parameter lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub kernel: Vec<Kernel>,
    pub n: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub svg: Option<PathBuf>,
}

fn default_seeds() -> usize {
    1
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::ExactRate, Metric::AgreementFraction]
}

/// A sweep description, usually read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default = "default_seeds")]
    pub seeds_per_cell: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub phase1: Phase1Mode,
    #[serde(default)]
    pub outputs: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds_per_cell == 0 {
            return Err(GkbmError::invalid("seeds_per_cell must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(GkbmError::invalid("tol must be positive"));
        }
        if self.metrics.is_empty() {
            return Err(GkbmError::invalid("metrics must list at least one metric"));
        }
        if let Some(g) = &self.grid {
            if g.lambda.is_empty() || g.p.is_empty() || g.q.is_empty() || g.kernel.is_empty() || g.n.is_empty() {
                return Err(GkbmError::invalid("every grid axis needs at least one value"));
            }
        }
        let cells = self.expand();
        if cells.is_empty() {
            return Err(GkbmError::invalid("config defines no cells; give a grid or a cells list"));
        }
        for c in &cells {
            GkbmParams::new(c.lambda, c.n, c.p, c.q, c.kernel.clone(), 0)?;
        }
        Ok(())
    }

    /// Grid cells in nesting order kernel, n, lambda, p, q, followed by the
    /// explicit cells.
    pub fn expand(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        if let Some(g) = &self.grid {
            for kernel in &g.kernel {
                for &n in &g.n {
                    for &lambda in &g.lambda {
                        for &p in &g.p {
                            for &q in &g.q {
                                out.push(CellSpec { lambda, p, q, kernel: kernel.clone(), n });
                            }
                        }
                    }
                }
            }
        }
        out.extend(self.cells.iter().cloned());
        out
    }

    /// Requested metrics, deduplicated, in canonical column order.
    pub fn metric_columns(&self) -> Vec<Metric> {
        let mut m = self.metrics.clone();
        m.sort();
        m.dedup();
        m
    }
}

/// Seed for replicate `index` of `cell`: the first eight bytes of
/// `SHA-256(cell JSON || base seed)` XOR the replicate index.
pub fn cell_seed(cell: &CellSpec, base_seed: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(cell).expect("cell serializes").as_bytes());
    h.update(base_seed.to_le_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head) ^ index
}

/// True when two empty blocks sit at cyclic gap at least 2, which cuts the
/// torus into two pieces with no possible edges between them.
pub fn has_separating_empty_blocks(partition: &BlockPartition, empty: &[usize]) -> bool {
    empty
        .iter()
        .enumerate()
        .any(|(k, &i)| empty[k + 1..].iter().any(|&j| partition.cyclic_gap(i, j) >= 2))
}

#[derive(Debug, Clone, PartialEq)]
struct RunOutcome {
    exact: bool,
    agreement: f64,
    phase1_errors: usize,
    disconnected: bool,
    runtime: f64,
    edges: usize,
}

impl RunOutcome {
    fn value(&self, m: Metric) -> f64 {
        match m {
            Metric::ExactRate => f64::from(u8::from(self.exact)),
            Metric::AgreementFraction => self.agreement,
            Metric::Phase1ErrorCount => self.phase1_errors as f64,
            Metric::DisconnectRate => f64::from(u8::from(self.disconnected)),
            Metric::Runtime => self.runtime,
            Metric::EdgeCount => self.edges as f64,
        }
    }
}

fn run_one(cell: &CellSpec, seed: u64, tol: f64, mode: Phase1Mode) -> Result<RunOutcome> {
    let started = Instant::now();
    let params = GkbmParams::new(cell.lambda, cell.n, cell.p, cell.q, cell.kernel.clone(), seed)?;
    let inst = GkbmInstance::sample(&params)?;
    let out = full_pipeline_with(&inst, tol, mode)?;
    let truth = inst.truth();
    let disconnected = has_separating_empty_blocks(inst.partition(), &inst.empty_blocks());
    Ok(RunOutcome {
        exact: out.labels.recovers_exactly(&truth),
        agreement: out.labels.agreement(&truth)?.fraction(),
        phase1_errors: out.phase1.errors_against(&truth),
        disconnected,
        runtime: started.elapsed().as_secs_f64(),
        edges: inst.edge_count(),
    })
}

/// Mean and standard error of one metric over the successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    /// Population standard deviation over `sqrt(replicates)`.
    pub standard_error: f64,
}

/// Aggregated outcome of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub index: usize,
    pub cell: CellSpec,
    pub lambda_kappa: f64,
    pub lambda_info: Option<f64>,
    /// Replicate indices `0..seeds` were run.
    pub seeds: usize,
    pub first_seed: u64,
    pub failures: usize,
    pub errors: Vec<String>,
    pub metrics: Vec<MetricSummary>,
}

impl CellResult {
    pub fn metric(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|s| s.metric == m)
    }
}

/// Mean and population-SD standard error; `NaN` for an empty sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    (mean, (var / k).sqrt())
}

/// Runs the sweep on the global thread pool.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let cells = cfg.expand();
    let metrics = cfg.metric_columns();
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.seeds_per_cell as u64).map(move |k| (c, k)))
        .collect();
    let outcomes: Vec<Result<RunOutcome>> = tasks
        .par_iter()
        .map(|&(c, k)| run_one(&cells[c], cell_seed(&cells[c], cfg.seed, k), cfg.tol, cfg.phase1))
        .collect();

    let mut results = Vec::with_capacity(cells.len());
    for (index, (cell, chunk)) in cells.iter().zip(outcomes.chunks(cfg.seeds_per_cell)).enumerate() {
        let lambda_info = info_metric(&cell.kernel, cell.p, cell.q, cfg.tol).ok().map(|i| cell.lambda * i);
        let ok: Vec<&RunOutcome> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
        let errors: Vec<String> = chunk
            .iter()
            .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .collect();
        let summaries = metrics
            .iter()
            .map(|&m| {
                let values: Vec<f64> = ok.iter().map(|o| o.value(m)).collect();
                let (mean, standard_error) = mean_and_se(&values);
                MetricSummary { metric: m, mean, standard_error }
            })
            .collect();
        results.push(CellResult {
            index,
            cell: cell.clone(),
            lambda_kappa: cell.lambda * cell.kernel.kappa(),
            lambda_info,
            seeds: cfg.seeds_per_cell,
            first_seed: cell_seed(cell, cfg.seed, 0),
            failures: errors.len(),
            errors,
            metrics: summaries,
        });
    }
    Ok(results)
}

/// Runs the sweep on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<CellResult>> {
    if workers == 0 {
        return Err(GkbmError::invalid("workers must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| GkbmError::invalid(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_sweep(cfg))
}

/// Frequency of separating empty blocks over sampled location processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisconnectResult {
    pub rate: f64,
    pub standard_error: f64,
    /// `1 - exp(-gamma b) (1 + 2 b gamma)` with `gamma = n^(-lambda kappa)`,
    /// clamped at 0.
    pub lower_bound: f64,
    pub trials: usize,
    pub block_count: usize,
}

pub fn disconnect_lower_bound(lambda_kappa: f64, n: u64, blocks: usize) -> f64 {
    let gamma = (n as f64).powf(-lambda_kappa);
    let gb = gamma * blocks as f64;
    (1.0 - (-gb).exp() * (1.0 + 2.0 * gb)).max(0.0)
}

/// Samples `trials` node processes and reports how often two empty blocks at
/// cyclic gap at least 2 occur. Trial `t` uses the instance seed `seed + t`.
pub fn disconnect_experiment(lambda: f64, kernel: &Kernel, n: u64, trials: usize, seed: u64) -> Result<DisconnectResult> {
    if trials == 0 {
        return Err(GkbmError::invalid("trials must be at least 1"));
    }
    let base = GkbmParams::new(lambda, n, 0.0, 0.0, kernel.clone(), seed)?;
    let partition = base.partition()?;
    let hits: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (locations, _) = sample_nodes(&base.with_seed(seed.wrapping_add(t)));
            let mut occupied = vec![false; partition.block_count()];
            for x in &locations {
                occupied[partition.block_of(*x)] = true;
            }
            let empty: Vec<usize> = (0..occupied.len()).filter(|&i| !occupied[i]).collect();
            f64::from(u8::from(has_separating_empty_blocks(&partition, &empty)))
        })
        .collect();
    let (rate, standard_error) = mean_and_se(&hits);
    Ok(DisconnectResult {
        rate,
        standard_error,
        lower_bound: disconnect_lower_bound(base.lambda_kappa(), n, partition.block_count()),
        trials,
        block_count: partition.block_count(),
    })
}

/// Output format for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Svg,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Header of the CSV produced for `metrics`.
pub fn csv_header(metrics: &[Metric]) -> Vec<String> {
    let mut cols: Vec<String> = [
        "cell", "kernel", "n", "lambda", "p", "q", "lambda_kappa", "lambda_info", "seeds", "first_seed", "failures",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in metrics {
        cols.push(format!("{}_mean", m.name()));
        cols.push(format!("{}_se", m.name()));
    }
    cols
}

/// Writes the CSV table to `out`.
pub fn write_csv<W: Write>(results: &[CellResult], metrics: &[Metric], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(metrics))?;
    for r in results {
        let mut row = vec![
            r.index.to_string(),
            r.cell.kernel.to_json(),
            r.cell.n.to_string(),
            fmt_f64(r.cell.lambda),
            fmt_f64(r.cell.p),
            fmt_f64(r.cell.q),
            fmt_f64(r.lambda_kappa),
            r.lambda_info.map(fmt_f64).unwrap_or_default(),
            r.seeds.to_string(),
            r.first_seed.to_string(),
            r.failures.to_string(),
        ];
        for &m in metrics {
            let s = r.metric(m);
            row.push(s.map(|s| fmt_f64(s.mean)).unwrap_or_default());
            row.push(s.map(|s| fmt_f64(s.standard_error)).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#66477a", "#444444"];

/// Phase diagram: exact-recovery rate against `lambda * I`, one series per
/// `n`, with the threshold line at 1.
pub fn render_svg(results: &[CellResult]) -> Result<String> {
    let points: Vec<(u64, f64, f64)> = results
        .iter()
        .filter_map(|r| {
            let x = r.lambda_info?;
            let y = r.metric(Metric::ExactRate)?.mean;
            (x.is_finite() && y.is_finite()).then_some((r.cell.n, x, y))
        })
        .collect();
    if results.iter().all(|r| r.metric(Metric::ExactRate).is_none()) {
        return Err(GkbmError::invalid("the phase diagram needs the exact_rate metric"));
    }
    let (w, h, m) = (640.0, 420.0, 60.0);
    let x_max = points.iter().map(|p| p.1).fold(2.0f64, f64::max) * 1.05;
    let sx = |x: f64| m + x / x_max * (w - 2.0 * m);
    let sy = |y: f64| h - m - y * (h - 2.0 * m);
    let mut ns: Vec<u64> = points.iter().map(|p| p.0).collect();
    ns.sort_unstable();
    ns.dedup();

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    for k in 0..=4 {
        let y = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y}</text>"#,
            m - 6.0,
            sy(y) + 4.0
        );
    }
    let ticks = (x_max.floor() as usize).max(1);
    for k in 0..=ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{k}</text>"#,
            sx(k as f64),
            h - m + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{x:.1}" y1="{m}" x2="{x:.1}" y2="{}" stroke="gray" stroke-dasharray="6 4"/>"#,
        h - m,
        x = sx(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">lambda * I</text>"#,
        w / 2.0,
        h - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">exact recovery rate</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (k, n) in ns.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut series: Vec<(f64, f64)> = points.iter().filter(|p| p.0 == *n).map(|p| (p.1, p.2)).collect();
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = series.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for (x, y) in &series {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(*x),
                sy(*y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">n = {n}</text>"#,
            w - m - 80.0,
            m + 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `results` to `path` in the given format.
pub fn emit(results: &[CellResult], metrics: &[Metric], format: OutputFormat, path: &Path) -> Result<()> {
    if metrics.is_empty() {
        return Err(GkbmError::invalid("no metrics to emit"));
    }
    if results.is_empty() {
        return Err(GkbmError::invalid("no results to emit"));
    }
    match format {
        OutputFormat::Csv => {
            let file = std::fs::File::create(path)?;
            write_csv(results, metrics, std::io::BufWriter::new(file))
        }
        OutputFormat::Svg => {
            std::fs::write(path, render_svg(results)?)?;
            Ok(())
        }
    }
}
