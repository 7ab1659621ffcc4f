//! Brute-force references: exact likelihood, exhaustive MAP, per-node MAP,
//! and a simulator for the Poisson hypothesis test behind the CH divergence.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GkbmError, Result};
use crate::info::{ch_divergence, PoissonProfile};
use crate::model::{stream_rng, GkbmInstance, Labeling};

/// Largest instance accepted by [`map_estimate`].
pub const MAP_MAX_NODES: usize = 22;

/// Relative gap under which two log-likelihoods count as tied.
const TIE_TOL: f64 = 1e-12;

/// A pair of nodes within kernel support and its two possible log-likelihood
/// contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SupportPair {
    u: u32,
    v: u32,
    same: f64,
    diff: f64,
}

fn bernoulli_log(prob: f64, hit: bool) -> f64 {
    if hit {
        prob.ln()
    } else {
        (-prob).ln_1p()
    }
}

fn support_pairs(inst: &GkbmInstance) -> Result<Vec<SupportPair>> {
    let (p, q) = (inst.params().p, inst.params().q);
    for (u, v) in inst.edges() {
        if inst.psi(u as usize, v as usize) <= 0.0 {
            return Err(GkbmError::corrupt(format!("edge [{u}, {v}] joins nodes with psi = 0")));
        }
    }
    let mut pairs = Vec::new();
    for u in 0..inst.node_count() {
        let mut row: Vec<(usize, f64)> = inst.visible(u).filter(|&(v, _)| v > u).collect();
        row.sort_by_key(|&(v, _)| v);
        for (v, psi) in row {
            let edge = inst.has_edge(u, v);
            pairs.push(SupportPair {
                u: u as u32,
                v: v as u32,
                same: bernoulli_log(p * psi, edge),
                diff: bernoulli_log(q * psi, edge),
            });
        }
    }
    Ok(pairs)
}

fn check_full(inst: &GkbmInstance, labels: &Labeling) -> Result<()> {
    if labels.len() != inst.node_count() {
        return Err(GkbmError::invalid(format!(
            "labeling has {} entries for {} nodes",
            labels.len(),
            inst.node_count()
        )));
    }
    if labels.values().contains(&0) {
        return Err(GkbmError::invalid("log-likelihood needs a complete +-1 labeling"));
    }
    Ok(())
}

fn sum_terms(pairs: &[SupportPair], labels: &[i8]) -> f64 {
    pairs
        .iter()
        .map(|pr| if labels[pr.u as usize] == labels[pr.v as usize] { pr.same } else { pr.diff })
        .sum()
}

/// Log-likelihood with every pair's contribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodBreakdown {
    pub log_likelihood: f64,
    pub per_pair_terms: Vec<(u32, u32, f64)>,
}

/// `log P(A | sigma, X)`, summed over pairs within kernel support.
pub fn log_likelihood(inst: &GkbmInstance, labels: &Labeling) -> Result<f64> {
    check_full(inst, labels)?;
    Ok(sum_terms(&support_pairs(inst)?, labels.values()))
}

pub fn likelihood_breakdown(inst: &GkbmInstance, labels: &Labeling) -> Result<LikelihoodBreakdown> {
    check_full(inst, labels)?;
    let pairs = support_pairs(inst)?;
    let l = labels.values();
    let per_pair_terms: Vec<(u32, u32, f64)> = pairs
        .iter()
        .map(|pr| (pr.u, pr.v, if l[pr.u as usize] == l[pr.v as usize] { pr.same } else { pr.diff }))
        .collect();
    Ok(LikelihoodBreakdown {
        log_likelihood: sum_terms(&pairs, l),
        per_pair_terms,
    })
}

/// Exhaustive maximum-likelihood labeling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapEstimate {
    pub labels: Labeling,
    pub log_likelihood: f64,
    /// Another labeling (up to global sign) reaches the same value.
    pub tie: bool,
}

fn labels_from_mask(nodes: usize, mask: u64, out: &mut [i8]) {
    out[0] = 1;
    for (k, slot) in out.iter_mut().enumerate().take(nodes).skip(1) {
        *slot = if mask >> (nodes - 1 - k) & 1 == 1 { 1 } else { -1 };
    }
}

/// Maximizes the likelihood over all labelings with node 0 set to `+1`.
/// Among equal maxima the lexicographically smallest labeling wins, with
/// `-1 < +1`.
pub fn map_estimate(inst: &GkbmInstance) -> Result<MapEstimate> {
    let nodes = inst.node_count();
    if nodes > MAP_MAX_NODES {
        return Err(GkbmError::TooLarge(format!(
            "exhaustive MAP enumerates 2^(N-1) labelings; N = {nodes} exceeds the limit of {MAP_MAX_NODES}"
        )));
    }
    if nodes == 0 {
        return Ok(MapEstimate { labels: Labeling::zeros(0), log_likelihood: 0.0, tie: false });
    }
    let pairs = support_pairs(inst)?;
    let total: u64 = 1 << (nodes - 1);
    let chunk: u64 = 1 << 12;
    let chunks = total.div_ceil(chunk);
    let evaluate = |mask: u64, buf: &mut Vec<i8>| {
        labels_from_mask(nodes, mask, buf);
        sum_terms(&pairs, buf)
    };
    let (best_mask, best) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![0i8; nodes];
            let mut best = (u64::MAX, f64::NEG_INFINITY);
            for mask in c * chunk..((c + 1) * chunk).min(total) {
                let v = evaluate(mask, &mut buf);
                if best.0 == u64::MAX || v > best.1 {
                    best = (mask, v);
                }
            }
            best
        })
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                if a.0 == u64::MAX {
                    b
                } else if b.0 == u64::MAX {
                    a
                } else if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let margin = TIE_TOL * best.abs().max(1.0);
    let tie = (0..chunks).into_par_iter().any(|c| {
        let mut buf = vec![0i8; nodes];
        (c * chunk..((c + 1) * chunk).min(total))
            .filter(|&mask| mask != best_mask)
            .any(|mask| {
                let v = evaluate(mask, &mut buf);
                v == best || (v - best).abs() <= margin
            })
    });
    let mut labels = vec![0i8; nodes];
    labels_from_mask(nodes, best_mask, &mut labels);
    Ok(MapEstimate { labels: Labeling::new(labels), log_likelihood: best, tie })
}

/// Decision for one node given every other node's label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentDecision {
    pub label: i8,
    /// `log P(A | sigma(u) = +1, rest) - log P(A | sigma(u) = -1, rest)`.
    pub log_ratio: f64,
    pub tie: bool,
}

/// Per-node MAP: the sign of the log-likelihood ratio for `u`, ties to `-1`.
/// The label of `u` itself in `labels` is ignored.
pub fn component_map(inst: &GkbmInstance, u: usize, labels: &Labeling) -> Result<ComponentDecision> {
    if labels.len() != inst.node_count() || u >= inst.node_count() {
        return Err(GkbmError::invalid("labeling length or node index does not match the instance"));
    }
    let (p, q) = (inst.params().p, inst.params().q);
    let mut ratio = 0.0;
    for (v, psi) in inst.visible(u) {
        let s = labels.get(v);
        if s == 0 {
            return Err(GkbmError::invalid(format!("node {v} is unlabelled")));
        }
        let edge = inst.has_edge(u, v);
        let d = bernoulli_log(p * psi, edge) - bernoulli_log(q * psi, edge);
        ratio += s as f64 * d;
    }
    Ok(ComponentDecision {
        label: if ratio > 0.0 { 1 } else { -1 },
        log_ratio: ratio,
        tie: ratio == 0.0,
    })
}

/// How [`poisson_test_experiment`] estimates the error probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PoissonTestMethod {
    /// Plain Monte Carlo under the null.
    Direct,
    /// Draws from the geometric mixture `alpha^t beta^(1-t)` at the CH
    /// maximizer and reweights by the likelihood ratio. Unbiased, and usable
    /// when the error is far below `1 / trials`.
    Tilted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonTestResult {
    pub error_rate: f64,
    pub standard_error: f64,
    /// `D+` from the CH divergence of the two profiles.
    pub predicted_exponent: f64,
    /// `-ln(error_rate) / ln(n)`.
    pub empirical_exponent: f64,
    pub t_star: f64,
}

/// Likelihood-ratio statistic `ln P_null(x) - ln P_alt(x)`; `None` when both
/// hypotheses are excluded.
fn llr(x: &[u64], alpha: &[f64], beta: &[f64], log_n: f64) -> Option<f64> {
    let mut s = 0.0;
    let (mut plus_inf, mut minus_inf) = (false, false);
    for ((&k, &a), &b) in x.iter().zip(alpha).zip(beta) {
        if k > 0 {
            match (a > 0.0, b > 0.0) {
                (true, true) => s += k as f64 * (a.ln() - b.ln()),
                (true, false) => plus_inf = true,
                (false, true) => minus_inf = true,
                (false, false) => return None,
            }
        }
        s -= (a - b) * log_n;
    }
    match (plus_inf, minus_inf) {
        (true, true) => None,
        (true, false) => Some(f64::INFINITY),
        (false, true) => Some(f64::NEG_INFINITY),
        (false, false) => Some(s),
    }
}

fn draw(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    }
}

/// Error probability of the likelihood-ratio test between Poisson vectors
/// with means `null * ln(n)` and `alt * ln(n)`, when the null is true. Ties
/// count as half an error.
pub fn poisson_test_experiment(
    null: &PoissonProfile,
    alt: &PoissonProfile,
    n: u64,
    trials: usize,
    seed: u64,
    method: PoissonTestMethod,
) -> Result<PoissonTestResult> {
    if trials == 0 {
        return Err(GkbmError::invalid("trials must be at least 1"));
    }
    if n < 2 {
        return Err(GkbmError::invalid("n must be at least 2"));
    }
    let ch = ch_divergence(null, alt)?;
    let (a, b) = (&null.entries[..], &alt.entries[..]);
    let log_n = (n as f64).ln();
    let t = ch.t_star;
    let sampling: Vec<f64> = match method {
        PoissonTestMethod::Direct => a.to_vec(),
        PoissonTestMethod::Tilted => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| if x == 0.0 || y == 0.0 { 0.0 } else { x.powf(t) * y.powf(1.0 - t) })
            .collect(),
    };
    let mut rng = stream_rng(seed, 0);
    let mut x = vec![0u64; a.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        for (xi, &m) in x.iter_mut().zip(&sampling) {
            *xi = draw(&mut rng, m * log_n);
        }
        let loss = match llr(&x, a, b, log_n) {
            None => 0.5,
            Some(l) if l > 0.0 => 0.0,
            Some(l) if l < 0.0 => 1.0,
            Some(_) => 0.5,
        };
        let weight = match method {
            PoissonTestMethod::Direct => 1.0,
            PoissonTestMethod::Tilted if loss == 0.0 => 0.0,
            PoissonTestMethod::Tilted => {
                let mut lw = 0.0;
                for ((&k, &ai), &mi) in x.iter().zip(a).zip(&sampling) {
                    if k > 0 {
                        lw += k as f64 * (ai.ln() - mi.ln());
                    }
                    lw -= (ai - mi) * log_n;
                }
                lw.exp()
            }
        };
        let v = loss * weight;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / trials as f64;
    let var = (sum_sq / trials as f64 - mean * mean).max(0.0);
    Ok(PoissonTestResult {
        error_rate: mean,
        standard_error: (var / trials as f64).sqrt(),
        predicted_exponent: ch.d,
        empirical_exponent: -mean.ln() / log_n,
        t_star: t,
    })
}
