//! Two-phase exact recovery: block-by-block almost exact recovery followed by
//! a per-node likelihood refinement.
//!
//! Phase I labels the first block from common-neighbour counts against an
//! anchor node, then propagates labels to each next block with a weighted
//! vote over the previous block. Phase II relabels every node by the sign of
//! its log-likelihood ratio given the Phase I labels of its visible nodes.
//! Ties (`f = 0`, `g = 0`, or a common-neighbour count equal to the
//! threshold) always resolve to `-1`.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GkbmError, Result};
use crate::geometry::TorusPoint;
use crate::model::{GkbmInstance, Labeling};
use crate::quad;

/// Log-likelihood weights of one pair: `edge_weight` is added when the pair
/// is linked and `nonedge_weight` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairWeight {
    /// `ln(p (1 - q psi) / (q (1 - p psi)))`.
    pub edge_weight: f64,
    /// `ln((1 - p psi) / (1 - q psi))`.
    pub nonedge_weight: f64,
}

/// Weight calculator for fixed `p` and `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    p: f64,
    q: f64,
    log_ratio: f64,
}

impl Weights {
    /// Requires `p, q` in `(0, 1)`, or `p == q` (no signal, all weights zero).
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if p == q && (0.0..=1.0).contains(&p) {
            return Ok(Weights { p, q, log_ratio: 0.0 });
        }
        if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
            return Err(GkbmError::invalid(format!(
                "recovery needs p and q in (0, 1) (or p = q), got p = {p}, q = {q}"
            )));
        }
        Ok(Weights { p, q, log_ratio: p.ln() - q.ln() })
    }

    pub fn for_instance(inst: &GkbmInstance) -> Result<Self> {
        Weights::new(inst.params().p, inst.params().q)
    }

    pub fn pair(&self, psi: f64) -> PairWeight {
        if self.p == self.q {
            return PairWeight { edge_weight: 0.0, nonedge_weight: 0.0 };
        }
        let nonedge_weight = (-self.p * psi).ln_1p() - (-self.q * psi).ln_1p();
        PairWeight {
            edge_weight: self.log_ratio - nonedge_weight,
            nonedge_weight,
        }
    }
}

/// Expected common-neighbour counts of two nodes inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommonNeighborThreshold {
    /// `int_B psi_n(x, z) psi_n(y, z) dz`.
    pub i_val: f64,
    /// Expected count when both nodes share a community: `lambda n (p^2 + q^2) / 2 * i_val`.
    pub m_in: f64,
    /// Expected count across communities: `lambda n p q * i_val`.
    pub m_out: f64,
    /// `(m_in + m_out) / 2`.
    pub m: f64,
}

/// Threshold for the common-neighbour test between `u` and `v` in `block`.
pub fn common_neighbor_threshold(
    inst: &GkbmInstance,
    u: usize,
    v: usize,
    block: usize,
    tol: f64,
) -> Result<CommonNeighborThreshold> {
    let (a, b) = inst.partition().bounds(block);
    threshold_on_interval(inst, u, v, a, b, tol)
}

/// Threshold for common neighbours in the shifted interval `[a, b]`, which may
/// extend past 1 and then wraps around the torus.
fn threshold_on_interval(
    inst: &GkbmInstance,
    u: usize,
    v: usize,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<CommonNeighborThreshold> {
    let params = inst.params();
    let kernel = inst.kernel();
    let n = params.n;
    let (xu, xv) = (inst.location(u), inst.location(v));
    let scale = (n as f64).ln() / n as f64;
    let mut breaks = Vec::new();
    for centre in [xu.shifted(), xv.shifted()] {
        for t in kernel.breakpoints() {
            for sign in [-1.0, 1.0] {
                for wrap in [-1.0, 0.0, 1.0] {
                    breaks.push(centre + sign * t * scale + wrap);
                }
            }
        }
    }
    let i_val = quad::integrate(
        |z| {
            let pz = TorusPoint::from_shifted(z);
            kernel.psi(n, xu, pz) * kernel.psi(n, xv, pz)
        },
        a,
        b,
        &breaks,
        tol,
    )?;
    let intensity = params.lambda * n as f64;
    let (p, q) = (params.p, params.q);
    let m_in = intensity * (p * p + q * q) / 2.0 * i_val;
    let m_out = intensity * p * q * i_val;
    Ok(CommonNeighborThreshold {
        i_val,
        m_in,
        m_out,
        m: 0.5 * (m_in + m_out),
    })
}

/// Number of common neighbours of `u` and `v` that lie in `block`.
pub fn common_neighbors_in_block(inst: &GkbmInstance, u: usize, v: usize, block: usize) -> usize {
    let (a, b) = (inst.neighbors(u), inst.neighbors(v));
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if inst.block_of_node(a[i] as usize) == block {
                    count += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// Labels the nodes of `block` relative to its lowest-index node, which gets
/// `+1`. Other nodes get `+1` iff their common-neighbour count with the anchor
/// inside the block strictly exceeds the threshold `m`. Returns a full-length
/// labeling that is zero outside the block, and the operation count.
pub fn initial_block_recovery(inst: &GkbmInstance, block: usize, tol: f64) -> Result<(Labeling, u64)> {
    let mut labels = Labeling::zeros(inst.node_count());
    let nodes = inst.block_nodes(block);
    let Some(&anchor) = nodes.first() else {
        return Ok((labels, 0));
    };
    let anchor = anchor as usize;
    labels.set(anchor, 1);
    let mut ops = 0u64;
    for &u in &nodes[1..] {
        let u = u as usize;
        let count = common_neighbors_in_block(inst, anchor, u, block);
        ops += (inst.degree(anchor) + inst.degree(u)) as u64;
        let threshold = common_neighbor_threshold(inst, u, anchor, block, tol)?;
        labels.set(u, if count as f64 > threshold.m { 1 } else { -1 });
    }
    Ok((labels, ops))
}

/// `sum_{v in sources, v != u} sigma(v) [A_uv edge_weight + nonedge_weight]`.
/// `sources` must be sorted. Returns the statistic and the work done.
pub fn f_statistic(inst: &GkbmInstance, weights: &Weights, labels: &Labeling, sources: &[u32], u: usize) -> (f64, u64) {
    let xu = inst.location(u);
    let kernel = inst.kernel();
    let n = inst.params().n;
    let mut f = 0.0;
    let mut ops = 0u64;
    for &v in sources {
        let v = v as usize;
        ops += 1;
        let s = labels.get(v);
        if v == u || s == 0 {
            continue;
        }
        let psi = kernel.psi(n, xu, inst.location(v));
        if psi > 0.0 {
            f += s as f64 * weights.pair(psi).nonedge_weight;
        }
    }
    for &v in inst.neighbors(u) {
        ops += 1;
        let v = v as usize;
        let s = labels.get(v);
        if s == 0 || sources.binary_search(&(v as u32)).is_err() {
            continue;
        }
        f += s as f64 * weights.pair(inst.psi(u, v)).edge_weight;
    }
    (f, ops)
}

/// Labels `targets` by the sign of `f` over the labelled `sources` (sorted).
/// Returns labels aligned with `targets` and the work done.
pub fn propagate(inst: &GkbmInstance, labels: &Labeling, sources: &[u32], targets: &[u32]) -> Result<(Vec<i8>, u64)> {
    let weights = Weights::for_instance(inst)?;
    let out: Vec<(i8, u64)> = targets
        .par_iter()
        .map(|&u| {
            let (f, ops) = f_statistic(inst, &weights, labels, sources, u as usize);
            (if f > 0.0 { 1 } else { -1 }, ops)
        })
        .collect();
    let ops = out.iter().map(|x| x.1).sum();
    Ok((out.into_iter().map(|x| x.0).collect(), ops))
}

/// How Phase I carries labels from the initial block across the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase1Mode {
    /// Each node, in order of position, is labelled by the sign of `f` over
    /// all already-labelled nodes it can see.
    #[default]
    Sliding,
    /// Block `i + 1` is labelled by the sign of `f` over block `i` only.
    Block,
}

impl std::str::FromStr for Phase1Mode {
    type Err = GkbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sliding" => Ok(Phase1Mode::Sliding),
            "block" => Ok(Phase1Mode::Block),
            other => Err(GkbmError::invalid(format!("unknown phase1 mode {other:?} (use sliding or block)"))),
        }
    }
}

/// Output of Phase I.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Output {
    pub labels: Labeling,
    /// Block on which the initial recovery ran, if any node exists.
    pub start_block: Option<usize>,
    /// Times the sweep found nothing labelled to propagate from and had to
    /// restart the initial recovery.
    pub propagation_breaks: usize,
    pub ops: u64,
}

/// Block whose sweep never crosses an empty block when there is at most one
/// run of empty blocks: the first non-empty block after the last empty one.
fn start_block(inst: &GkbmInstance) -> Option<usize> {
    let b = inst.partition().block_count();
    let empty = inst.empty_blocks();
    if empty.len() == b {
        return None;
    }
    let first = empty.last().map_or(0, |&e| (e + 1) % b);
    (0..b).map(|k| (first + k) % b).find(|&i| !inst.block_nodes(i).is_empty())
}

/// Almost exact recovery with the default [`Phase1Mode`].
pub fn phase1(inst: &GkbmInstance, tol: f64) -> Result<Phase1Output> {
    phase1_with(inst, tol, Phase1Mode::default())
}

/// Almost exact recovery: initial recovery on one block, then propagation
/// around the torus in cyclic block order, visiting every block once.
pub fn phase1_with(inst: &GkbmInstance, tol: f64, mode: Phase1Mode) -> Result<Phase1Output> {
    let weights = Weights::for_instance(inst)?;
    let Some(start) = start_block(inst) else {
        return Ok(Phase1Output {
            labels: Labeling::zeros(inst.node_count()),
            start_block: None,
            propagation_breaks: 0,
            ops: 0,
        });
    };
    let b = inst.partition().block_count();
    let (mut labels, mut ops) = initial_block_recovery(inst, start, tol)?;
    let mut breaks = 0;
    for step in 1..b {
        let i = (start + step) % b;
        let prev = (i + b - 1) % b;
        let targets = inst.block_nodes(i);
        if targets.is_empty() {
            continue;
        }
        match mode {
            Phase1Mode::Block => {
                if inst.block_nodes(prev).is_empty() {
                    breaks += 1;
                    let (fresh, extra) = initial_block_recovery(inst, i, tol)?;
                    ops += extra;
                    for &u in targets {
                        labels.set(u as usize, fresh.get(u as usize));
                    }
                    continue;
                }
                let (out, extra) = propagate(inst, &labels, inst.block_nodes(prev), targets)?;
                ops += extra;
                for (&u, s) in targets.iter().zip(out) {
                    labels.set(u as usize, s);
                }
            }
            Phase1Mode::Sliding => {
                let mut order = targets.to_vec();
                order.sort_by(|&u, &v| {
                    inst.location(u as usize)
                        .shifted()
                        .total_cmp(&inst.location(v as usize).shifted())
                        .then(u.cmp(&v))
                });
                for (k, &u) in order.iter().enumerate() {
                    let u = u as usize;
                    let (f, seen, extra) = labelled_vote(inst, &weights, &labels, u);
                    ops += extra;
                    if seen == 0 {
                        breaks += 1;
                        let (fresh, extra) = interval_recovery(inst, &order[k..], inst.location(u).shifted(), tol)?;
                        ops += extra;
                        for &v in &order[k..] {
                            if fresh.get(v as usize) != 0 {
                                labels.set(v as usize, fresh.get(v as usize));
                            }
                        }
                        continue;
                    }
                    labels.set(u, if f > 0.0 { 1 } else { -1 });
                }
            }
        }
    }
    Ok(Phase1Output {
        labels,
        start_block: Some(start),
        propagation_breaks: breaks,
        ops,
    })
}

/// `f` of `u` over every labelled node it can see, with the number of such
/// nodes and the work done.
fn labelled_vote(inst: &GkbmInstance, weights: &Weights, labels: &Labeling, u: usize) -> (f64, usize, u64) {
    let xu = inst.location(u);
    let kernel = inst.kernel();
    let n = inst.params().n;
    let (mut f, mut seen, mut ops) = (0.0, 0usize, 0u64);
    for v in inst.candidates(u) {
        ops += 1;
        let s = labels.get(v);
        if s == 0 {
            continue;
        }
        let psi = kernel.psi(n, xu, inst.location(v));
        if psi > 0.0 {
            seen += 1;
            f += s as f64 * weights.pair(psi).nonedge_weight;
        }
    }
    for &v in inst.neighbors(u) {
        ops += 1;
        let s = labels.get(v as usize);
        if s != 0 {
            f += s as f64 * weights.pair(inst.psi(u, v as usize)).edge_weight;
        }
    }
    (f, seen, ops)
}

/// Initial recovery on the nodes of `pool` lying in `[from, from + width)`
/// (shifted coordinates, cyclic), anchored at the first node of `pool`.
fn interval_recovery(inst: &GkbmInstance, pool: &[u32], from: f64, tol: f64) -> Result<(Labeling, u64)> {
    let width = inst.partition().block_width();
    let mut labels = Labeling::zeros(inst.node_count());
    let inside: Vec<usize> = pool
        .iter()
        .map(|&v| v as usize)
        .filter(|&v| (inst.location(v).shifted() - from).rem_euclid(1.0) < width)
        .collect();
    let Some(&anchor) = inside.first() else {
        return Ok((labels, 0));
    };
    labels.set(anchor, 1);
    let mut ops = 0u64;
    let (a, b) = (from, from + width);
    for &u in &inside[1..] {
        let count = inst
            .neighbors(anchor)
            .iter()
            .filter(|&&w| (inst.location(w as usize).shifted() - from).rem_euclid(1.0) < width && inst.has_edge(u, w as usize))
            .count();
        ops += (inst.degree(anchor) + inst.degree(u)) as u64;
        let threshold = threshold_on_interval(inst, u, anchor, a, b, tol)?;
        labels.set(u, if count as f64 > threshold.m { 1 } else { -1 });
    }
    Ok((labels, ops))
}

/// `g(u) = sum_{v visible from u} sigma(v) [A_uv edge_weight + nonedge_weight]`,
/// with the work done.
pub fn g_statistic(inst: &GkbmInstance, weights: &Weights, labels: &Labeling, u: usize) -> (f64, u64) {
    let xu = inst.location(u);
    let kernel = inst.kernel();
    let n = inst.params().n;
    let mut g = 0.0;
    let mut ops = 0u64;
    for v in inst.candidates(u) {
        ops += 1;
        let s = labels.get(v);
        if s == 0 {
            continue;
        }
        let psi = kernel.psi(n, xu, inst.location(v));
        if psi > 0.0 {
            g += s as f64 * weights.pair(psi).nonedge_weight;
        }
    }
    for &v in inst.neighbors(u) {
        ops += 1;
        let s = labels.get(v as usize);
        if s != 0 {
            g += s as f64 * weights.pair(inst.psi(u, v as usize)).edge_weight;
        }
    }
    (g, ops)
}

/// Phase II: relabels every node by the sign of `g` computed from `initial`.
pub fn refine(inst: &GkbmInstance, initial: &Labeling) -> Result<(Labeling, u64)> {
    if initial.len() != inst.node_count() {
        return Err(GkbmError::invalid(format!(
            "labeling has {} entries for {} nodes",
            initial.len(),
            inst.node_count()
        )));
    }
    let weights = Weights::for_instance(inst)?;
    let out: Vec<(i8, u64)> = (0..inst.node_count())
        .into_par_iter()
        .map(|u| {
            let (g, ops) = g_statistic(inst, &weights, initial, u);
            (if g > 0.0 { 1 } else { -1 }, ops)
        })
        .collect();
    let ops = out.iter().map(|x| x.1).sum();
    Ok((Labeling::new(out.into_iter().map(|x| x.0).collect()), ops))
}

/// Cost accounting for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeStats {
    pub wall_seconds: f64,
    pub node_count: usize,
    pub edge_count: usize,
    pub candidate_pairs: usize,
    pub phase1_ops: u64,
    pub refine_ops: u64,
    pub total_ops: u64,
    pub propagation_breaks: usize,
    pub start_block: Option<usize>,
}

/// Result of [`full_pipeline`], including the intermediate Phase I labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub labels: Labeling,
    pub phase1: Labeling,
    pub stats: RuntimeStats,
}

/// Phase I followed by Phase II, with the default [`Phase1Mode`].
pub fn full_pipeline(inst: &GkbmInstance, tol: f64) -> Result<PipelineOutput> {
    full_pipeline_with(inst, tol, Phase1Mode::default())
}

pub fn full_pipeline_with(inst: &GkbmInstance, tol: f64, mode: Phase1Mode) -> Result<PipelineOutput> {
    Weights::for_instance(inst)?;
    let started = Instant::now();
    let p1 = phase1_with(inst, tol, mode)?;
    let (labels, refine_ops) = refine(inst, &p1.labels)?;
    let stats = RuntimeStats {
        wall_seconds: started.elapsed().as_secs_f64(),
        node_count: inst.node_count(),
        edge_count: inst.edge_count(),
        candidate_pairs: inst.candidate_pair_count(),
        phase1_ops: p1.ops,
        refine_ops,
        total_ops: p1.ops + refine_ops,
        propagation_breaks: p1.propagation_breaks,
        start_block: p1.start_block,
    };
    Ok(PipelineOutput { labels, phase1: p1.labels, stats })
}
