//! Recovery thresholds, divergences, derived constants and tail bounds.

use serde::Serialize;

use crate::error::{GkbmError, Result};
use crate::kernel::{Kernel, SimpleApproximation};
use crate::quad;

/// Distance from 1 under which a threshold quantity counts as "at the boundary".
pub const BOUNDARY_TOL: f64 = 1e-9;

const SEARCH_TOL: f64 = 1e-13;
const BISECTION_TOL: f64 = 1e-10;

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(GkbmError::invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Integrand of the information metric at kernel value `phi`.
fn info_density(phi: f64, p: f64, q: f64) -> f64 {
    let a = (1.0 - p * phi).max(0.0);
    let b = (1.0 - q * phi).max(0.0);
    1.0 - (p * q).sqrt() * phi - (a * b).sqrt()
}

/// `I_phi(p, q) = 2 * int_0^kappa (1 - sqrt(pq) phi - sqrt((1 - p phi)(1 - q phi))) dx`.
pub fn info_metric(kernel: &Kernel, p: f64, q: f64, tol: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    let integral = quad::integrate(
        |x| info_density(kernel.eval(x), p, q),
        0.0,
        kernel.kappa(),
        &kernel.breakpoints(),
        0.5 * tol,
    )?;
    Ok(2.0 * integral)
}

/// The same metric for a simple approximation, as an exact finite sum.
pub fn info_from_approximation(approx: &SimpleApproximation, p: f64, q: f64) -> f64 {
    2.0 * approx
        .pieces
        .iter()
        .map(|&[l, r, c]| (r - l) * info_density(c, p, q))
        .sum::<f64>()
}

/// Coefficients `alpha_i` of a vector of independent Poisson variables with
/// means `alpha_i * ln(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonProfile {
    pub entries: Vec<f64>,
    /// What each entry counts, e.g. `P+[0]` for same-community neighbours in region 0.
    pub description: Vec<String>,
}

impl PoissonProfile {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(GkbmError::invalid(format!("profile coefficients must be non-negative, got {e}")));
        }
        let description = (0..entries.len()).map(|i| format!("entry[{i}]")).collect();
        Ok(PoissonProfile { entries, description })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Null and alternative profiles for deciding the community of a node from
/// its neighbours and non-neighbours in each region of a simple kernel.
///
/// Per piece `s` with level `c` and length `v`, the null (node in `+1`)
/// entries are `lambda * v * (p c, 1 - p c, q c, 1 - q c)`: same-community
/// neighbours, same-community non-neighbours, other-community neighbours,
/// other-community non-neighbours. The alternative swaps `p` and `q`.
pub fn profiles_for_test(
    approx: &SimpleApproximation,
    lambda: f64,
    p: f64,
    q: f64,
) -> Result<(PoissonProfile, PoissonProfile)> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(GkbmError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let mut null = Vec::with_capacity(4 * approx.pieces.len());
    let mut alt = Vec::with_capacity(4 * approx.pieces.len());
    let mut description = Vec::with_capacity(4 * approx.pieces.len());
    for (s, &[l, r, c]) in approx.pieces.iter().enumerate() {
        let v = lambda * (r - l);
        null.extend([v * p * c, v * (1.0 - p * c), v * q * c, v * (1.0 - q * c)]);
        alt.extend([v * q * c, v * (1.0 - q * c), v * p * c, v * (1.0 - p * c)]);
        description.extend([format!("P+[{s}]"), format!("P-[{s}]"), format!("Q+[{s}]"), format!("Q-[{s}]")]);
    }
    Ok((
        PoissonProfile { entries: null, description: description.clone() },
        PoissonProfile { entries: alt, description },
    ))
}

/// `sum_i (t a_i + (1 - t) b_i - a_i^t b_i^(1 - t))`.
pub fn ch_objective(alpha: &[f64], beta: &[f64], t: f64) -> f64 {
    alpha
        .iter()
        .zip(beta)
        .map(|(&a, &b)| {
            let mixed = if a == 0.0 || b == 0.0 {
                if t == 0.0 {
                    b
                } else if t == 1.0 {
                    a
                } else {
                    0.0
                }
            } else {
                (t * a.ln() + (1.0 - t) * b.ln()).exp()
            };
            t * a + (1.0 - t) * b - mixed
        })
        .sum()
}

/// Chernoff-Hellinger divergence and its maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChDivergence {
    pub d: f64,
    pub t_star: f64,
}

/// `d/dt ch_objective(alpha, beta, t)` for `t` in `(0, 1)`.
pub fn ch_slope(alpha: &[f64], beta: &[f64], t: f64) -> f64 {
    alpha
        .iter()
        .zip(beta)
        .map(|(&a, &b)| {
            if a == 0.0 || b == 0.0 {
                a - b
            } else {
                let (la, lb) = (a.ln(), b.ln());
                a - b - (t * la + (1.0 - t) * lb).exp() * (la - lb)
            }
        })
        .sum()
}

/// `sup_{t in [0, 1]} ch_objective(alpha, beta, t)`.
///
/// The objective is concave, so its slope is non-increasing and the
/// maximizer is found by bisection on the sign of the slope. Comparing
/// objective values directly (golden section) cannot locate `t` finer than
/// about the square root of machine precision when the objective is flat.
pub fn ch_divergence(alpha: &PoissonProfile, beta: &PoissonProfile) -> Result<ChDivergence> {
    if alpha.len() != beta.len() {
        return Err(GkbmError::invalid(format!(
            "profiles have different lengths ({} and {})",
            alpha.len(),
            beta.len()
        )));
    }
    let (a, b) = (&alpha.entries[..], &beta.entries[..]);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        if ch_slope(a, b, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let mut best = ChDivergence { d: ch_objective(a, b, t), t_star: t };
    // zero coefficients make the objective jump at the ends
    for t in [0.0, 1.0] {
        let v = ch_objective(a, b, t);
        if v > best.d {
            best = ChDivergence { d: v, t_star: t };
        }
    }
    best.d = best.d.max(0.0);
    Ok(best)
}

/// The initialization exponent
/// `min{ (p+q)^2/4 ln((p+q)^2/(pq)) + 2(p-q)^2, (p-q)^2 - (p+q)^2 ln(2(p^2+q^2)/(p+q)^2) }`.
pub fn init_exponent(p: f64, q: f64) -> Result<f64> {
    check_open_pair(p, q)?;
    let s2 = (p + q).powi(2);
    let d2 = (p - q).powi(2);
    let first = s2 / 4.0 * (s2 / (p * q)).ln() + 2.0 * d2;
    let second = d2 - s2 * (2.0 * (p * p + q * q) / s2).ln();
    Ok(first.min(second))
}

/// Variant of the initialization exponent with the constants that appear in
/// the common-neighbour concentration argument:
/// `min{ (p+q)^2/4 ln((p+q)^2/(4pq)) + (p-q)^2/2, ((p-q)^2 - (p+q)^2 ln(2(p^2+q^2)/(p+q)^2)) / 4 }`.
pub fn init_exponent_alt(p: f64, q: f64) -> Result<f64> {
    check_open_pair(p, q)?;
    let s2 = (p + q).powi(2);
    let d2 = (p - q).powi(2);
    let first = s2 / 4.0 * (s2 / (4.0 * p * q)).ln() + d2 / 2.0;
    let second = (d2 - s2 * (2.0 * (p * p + q * q) / s2).ln()) / 4.0;
    Ok(first.min(second))
}

fn check_open_pair(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
        return Err(GkbmError::invalid(format!("p and q must lie in (0, 1), got p = {p}, q = {q}")));
    }
    Ok(())
}

/// `h(x) = x (ln x - ln(lambda kappa)) + lambda kappa - x`.
pub fn delta_h(x: f64, lambda_kappa: f64) -> f64 {
    x * (x.ln() - lambda_kappa.ln()) + lambda_kappa - x
}

/// Solves `h(gamma) = (1 + lambda kappa) / 2` on `(0, lambda kappa)` and
/// returns `(gamma, delta = lambda kappa - gamma)`; `None` unless `lambda kappa > 1`.
pub fn solve_delta(lambda_kappa: f64) -> Option<(f64, f64)> {
    if !(lambda_kappa > 1.0 && lambda_kappa.is_finite()) {
        return None;
    }
    let target = 0.5 * (1.0 + lambda_kappa);
    let (mut lo, mut hi) = (1e-12f64, lambda_kappa);
    // h decreases from lambda kappa to 0 on the bracket
    while hi - lo > BISECTION_TOL * lambda_kappa.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if delta_h(mid, lambda_kappa) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    Some((gamma, lambda_kappa - gamma))
}

/// `Delta = lambda kappa + 1 + sqrt(2 lambda kappa + 1)`.
pub fn delta_cap(lambda_kappa: f64) -> f64 {
    lambda_kappa + 1.0 + (2.0 * lambda_kappa + 1.0).sqrt()
}

/// Upper bounds on Renyi divergences between the edge laws, with `xi3 >= xi4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenyiBounds {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub xi4: f64,
}

impl RenyiBounds {
    pub fn max_upper(&self) -> f64 {
        self.xi1.max(self.xi2).max(self.xi3)
    }
}

pub fn renyi_bounds(p: f64, q: f64, epsilon: f64) -> Result<RenyiBounds> {
    check_open_pair(p, q)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(GkbmError::invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let xi1 = 2.0 * (p.powf(1.5) / q.sqrt() + (1.0 - p * epsilon).powf(1.5) / (1.0 - q).sqrt()).ln();
    let xi2 = 2.0 * (q.powf(1.5) / p.sqrt() + (1.0 - q * epsilon).powf(1.5) / (1.0 - p).sqrt()).ln();
    let xi3 = -2.0 * ((p * q).sqrt() * epsilon + ((1.0 - p) * (1.0 - q)).sqrt()).ln();
    let xi4 = epsilon * (p.sqrt() - q.sqrt()).powi(2);
    Ok(RenyiBounds { xi1, xi2, xi3, xi4 })
}

/// `n^(-lambda kappa)`: probability that a full-width block holds no node.
pub fn empty_block_probability(lambda: f64, kappa: f64, n: u64) -> f64 {
    (n as f64).powf(-lambda * kappa)
}

/// Chernoff bounds for `X ~ Poisson(mu)`: `upper` bounds `P(X >= t)` for
/// `t >= mu` and `lower` bounds `P(X <= t)` for `t < mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonTailBounds {
    pub upper: f64,
    pub lower: f64,
}

pub fn poisson_tail_bounds(mu: f64, t: f64) -> Result<PoissonTailBounds> {
    if !(mu > 0.0 && t > 0.0 && mu.is_finite() && t.is_finite()) {
        return Err(GkbmError::invalid(format!("Poisson bounds need mu > 0 and t > 0, got mu = {mu}, t = {t}")));
    }
    Ok(PoissonTailBounds {
        upper: (-(t - mu).powi(2) / (2.0 * t)).exp(),
        lower: (-(t * (t / mu).ln() + mu - t)).exp(),
    })
}

/// `(e^t / (1 + t)^(1 + t))^mu`, bounding `P(X >= (1 + t) mu)` for a binomial
/// with mean `mu`.
pub fn binomial_tail_bound(mu: f64, t: f64) -> Result<f64> {
    if !(mu >= 0.0 && t > -1.0 && mu.is_finite() && t.is_finite()) {
        return Err(GkbmError::invalid(format!("binomial bound needs mu >= 0 and t > -1, got mu = {mu}, t = {t}")));
    }
    Ok((mu * (t - (1.0 + t) * t.ln_1p())).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ImpossibleDisconnect,
    ImpossibleInformation,
    Recoverable,
    Boundary,
}

/// Classifies `(lambda kappa, lambda I)` against the recovery threshold.
pub fn verdict(lambda_kappa: f64, lambda_info: f64) -> Verdict {
    if (lambda_kappa - 1.0).abs() <= BOUNDARY_TOL || (lambda_info - 1.0).abs() <= BOUNDARY_TOL {
        Verdict::Boundary
    } else if lambda_kappa < 1.0 {
        Verdict::ImpossibleDisconnect
    } else if lambda_info < 1.0 {
        Verdict::ImpossibleInformation
    } else {
        Verdict::Recoverable
    }
}

/// Threshold quantities and the constants used by the recovery analysis.
/// Constants that are undefined for the parameters are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
    pub kappa: f64,
    pub lambda_kappa: f64,
    pub info: f64,
    pub lambda_info: f64,
    pub init_exponent: f64,
    pub init_exponent_alt: f64,
    pub epsilon: f64,
    pub delta_cap: f64,
    pub gamma: Option<f64>,
    pub delta_low: Option<f64>,
    pub prop_budget: Option<f64>,
    pub c1: f64,
    pub c2: Option<f64>,
    pub renyi: Option<RenyiBounds>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

pub fn derived_constants(lambda: f64, kernel: &Kernel, p: f64, q: f64, tol: f64) -> Result<ThresholdReport> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(GkbmError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    check_open_pair(p, q)?;
    if p == q {
        return Err(GkbmError::invalid(
            "p = q carries no community signal; the propagation budget M = 10 / (4 delta eps (sqrt p - sqrt q)^2) is undefined",
        ));
    }
    let kappa = kernel.kappa();
    let lambda_kappa = lambda * kappa;
    let info = info_metric(kernel, p, q, tol)?;
    let lambda_info = lambda * info;
    let epsilon = kernel.epsilon();
    let gap = (p.sqrt() - q.sqrt()).powi(2);
    let init = init_exponent(p, q)?;
    let mut warnings = Vec::new();
    let solved = solve_delta(lambda_kappa);
    if solved.is_none() {
        warnings.push(format!("lambda * kappa = {lambda_kappa} <= 1: delta, M and c2 are undefined"));
    }
    if epsilon <= 0.0 {
        warnings.push("kernel infimum epsilon is 0 on its support: the block-recovery guarantees do not apply".into());
    }
    let delta_low = solved.map(|(_, d)| d);
    let prop_budget = delta_low.filter(|_| epsilon > 0.0).map(|d| 10.0 / (4.0 * d * epsilon * gap));
    let c2 = delta_low.map(|d| d * epsilon * gap / 2.0);
    Ok(ThresholdReport {
        lambda,
        p,
        q,
        kappa,
        lambda_kappa,
        info,
        lambda_info,
        init_exponent: init,
        init_exponent_alt: init_exponent_alt(p, q)?,
        epsilon,
        delta_cap: delta_cap(lambda_kappa),
        gamma: solved.map(|(g, _)| g),
        delta_low,
        prop_budget,
        c1: lambda * epsilon * epsilon * kappa * init / 4.0,
        c2,
        renyi: if epsilon > 0.0 { Some(renyi_bounds(p, q, epsilon)?) } else { None },
        verdict: verdict(lambda_kappa, lambda_info),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn closed_indicator(kappa: f64, p: f64, q: f64) -> f64 {
        2.0 * kappa * (1.0 - (p * q).sqrt() - ((1.0 - p) * (1.0 - q)).sqrt())
    }

    fn riemann(kernel: &Kernel, p: f64, q: f64, points: usize) -> f64 {
        let h = kernel.kappa() / points as f64;
        2.0 * (0..points)
            .map(|i| info_density(kernel.eval((i as f64 + 0.5) * h), p, q) * h)
            .sum::<f64>()
    }

    #[test]
    fn info_examples() {
        let ind = Kernel::indicator(1.0).unwrap();
        assert!(info_metric(&ind, 0.3, 0.3, 1e-9).unwrap().abs() < 1e-12);
        let v = info_metric(&ind, 0.8, 0.2, 1e-9).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
        assert!((riemann(&ind, 0.8, 0.2, 1_000_000) - 0.4).abs() < 1e-9);
        let ind = Kernel::indicator(2.5).unwrap();
        let v = info_metric(&ind, 0.7, 0.05, 1e-9).unwrap();
        assert!((v - closed_indicator(2.5, 0.7, 0.05)).abs() < 1e-9);
        assert!(info_metric(&ind, 1.2, 0.1, 1e-9).is_err());
    }

    #[test]
    fn info_matches_riemann_for_smooth_kernels() {
        for k in [Kernel::triangular(1.5).unwrap(), Kernel::texp(2.0, 1.0).unwrap()] {
            let v = info_metric(&k, 0.9, 0.2, 1e-10).unwrap();
            assert!((v - riemann(&k, 0.9, 0.2, 1_000_000)).abs() < 1e-8);
        }
    }

    #[test]
    fn ch_examples() {
        let a = PoissonProfile::new(vec![0.3, 1.2, 0.0, 4.0]).unwrap();
        let r = ch_divergence(&a, &a).unwrap();
        assert!(r.d.abs() < 1e-15);

        let ind = Kernel::indicator(1.0).unwrap().approximate(1).unwrap();
        let (null, alt) = profiles_for_test(&ind, 1.0, 0.8, 0.2).unwrap();
        assert_eq!(null.entries, vec![0.8, 1.0 - 0.8, 0.2, 1.0 - 0.2]);
        let r = ch_divergence(&null, &alt).unwrap();
        assert!((r.d - 0.4).abs() < 1e-12);
        assert!((r.t_star - 0.5).abs() < 1e-6);
        assert!(PoissonProfile::new(vec![-1.0]).is_err());
        assert!(ch_divergence(&null, &a).is_ok());
        assert!(ch_divergence(&null, &PoissonProfile::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn ch_handles_zero_coefficients() {
        let a = PoissonProfile::new(vec![2.0, 0.0]).unwrap();
        let b = PoissonProfile::new(vec![0.0, 3.0]).unwrap();
        let r = ch_divergence(&a, &b).unwrap();
        // objective t*2 + (1-t)*3 on (0,1): supremum 3 approached at t -> 0
        assert!((r.d - 3.0).abs() < 1e-9);
    }

    #[test]
    fn profiles_examples() {
        let ind = Kernel::indicator(1.0).unwrap().approximate(1).unwrap();
        let (null, alt) = profiles_for_test(&ind, 2.0, 0.9, 0.1).unwrap();
        assert_eq!(null.len(), 4);
        for (a, b) in alt.entries.iter().zip([0.2, 1.8, 1.8, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let (n2, a2) = profiles_for_test(&ind, 2.0, 0.4, 0.4).unwrap();
        assert_eq!(n2, a2);

        let tri = Kernel::triangular(1.0).unwrap().approximate(2).unwrap();
        let (null, _) = profiles_for_test(&tri, 1.0, 0.8, 0.2).unwrap();
        let expect = [0.5 * 0.8 * 0.5, 0.5 * (1.0 - 0.4), 0.5 * 0.2 * 0.5, 0.5 * (1.0 - 0.1), 0.0, 0.5, 0.0, 0.5];
        assert_eq!(null.len(), 8);
        for (a, b) in null.entries.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ch_of_table_profiles_is_lambda_times_info() {
        let k = Kernel::pwc(vec![[0.0, 0.4, 1.0], [0.4, 1.3, 0.35]]).unwrap();
        let approx = k.approximate(4).unwrap();
        let (null, alt) = profiles_for_test(&approx, 1.7, 0.75, 0.15).unwrap();
        let r = ch_divergence(&null, &alt).unwrap();
        let info = info_metric(&k, 0.75, 0.15, 1e-10).unwrap();
        assert!((r.d - 1.7 * info).abs() < 1e-10);
        assert!((info_from_approximation(&approx, 0.75, 0.15) - info).abs() < 1e-12);
    }

    #[test]
    fn init_exponent_examples() {
        let v = init_exponent(0.8, 0.2).unwrap();
        let first = 0.25 * (1.0f64 / 0.16).ln() + 2.0 * 0.36;
        let second = 0.36 - (1.36f64).ln();
        assert!((first - 1.178_145_365_9).abs() < 1e-9);
        assert!((v - second).abs() < 1e-15);
        assert!((v - 0.052_515_300_3).abs() < 1e-9);
        assert!(init_exponent(0.5 + 1e-7, 0.5).unwrap().abs() < 1e-12);
        assert!(init_exponent(0.0, 0.5).is_err());
    }

    #[test]
    fn init_exponent_grows_with_separation() {
        for s in [0.2f64, 0.5, 0.8, 1.0, 1.4] {
            let mut prev = 0.0;
            for k in 1..=40 {
                let d = (s.min(2.0 - s) - 1e-3) * k as f64 / 40.0;
                let (p, q) = ((s + d) / 2.0, (s - d) / 2.0);
                let v = init_exponent(p, q).unwrap();
                assert!(v > 0.0);
                assert!(v >= prev - 1e-15, "s = {s}, d = {d}");
                prev = v;
            }
        }
    }

    #[test]
    fn derived_constants_examples() {
        let ind = Kernel::indicator(1.0).unwrap();
        let r = derived_constants(2.0, &ind, 0.9, 0.1, 1e-9).unwrap();
        assert!((r.delta_cap - (3.0 + 5f64.sqrt())).abs() < 1e-12);
        let gamma = r.gamma.unwrap();
        assert!((delta_h(gamma, 2.0) - 1.5).abs() < 1e-9);
        assert!((r.delta_low.unwrap() - (2.0 - gamma)).abs() < 1e-15);
        let gap = (0.9f64.sqrt() - 0.1f64.sqrt()).powi(2);
        assert!((r.prop_budget.unwrap() - 10.0 / (4.0 * r.delta_low.unwrap() * gap)).abs() < 1e-12);
        assert!((r.lambda_info - 1.6).abs() < 1e-9);
        assert_eq!(r.verdict, Verdict::Recoverable);
        assert!(derived_constants(2.0, &ind, 0.4, 0.4, 1e-9).is_err());

        let sub = derived_constants(0.8, &ind, 0.9, 0.1, 1e-9).unwrap();
        assert_eq!(sub.verdict, Verdict::ImpossibleDisconnect);
        assert!(sub.delta_low.is_none() && sub.prop_budget.is_none());
        let tri = derived_constants(3.0, &Kernel::triangular(1.0).unwrap(), 0.9, 0.1, 1e-9).unwrap();
        assert!(tri.prop_budget.is_none());
        assert!(!tri.warnings.is_empty());
    }

    #[test]
    fn verdict_cases() {
        assert_eq!(verdict(0.5, 3.0), Verdict::ImpossibleDisconnect);
        assert_eq!(verdict(1.5, 0.7), Verdict::ImpossibleInformation);
        assert_eq!(verdict(1.5, 1.7), Verdict::Recoverable);
        assert_eq!(verdict(1.0 + 1e-10, 1.7), Verdict::Boundary);
        assert_eq!(verdict(1.5, 1.0), Verdict::Boundary);
    }

    #[test]
    fn empty_block_examples() {
        assert!((empty_block_probability(1.0, 1.0, 100) - 0.01).abs() < 1e-15);
        assert!((empty_block_probability(0.5, 1.0, 10_000) - 0.01).abs() < 1e-15);
        assert_eq!(empty_block_probability(1e4, 1.0, 100), 0.0);
    }

    #[test]
    fn tail_bound_examples() {
        let b = poisson_tail_bounds(10.0, 10.0).unwrap();
        assert_eq!(b.upper, 1.0);
        let b = poisson_tail_bounds(10.0, 20.0).unwrap();
        assert!((b.upper - (-2.5f64).exp()).abs() < 1e-15);
        assert!(poisson_tail_bounds(0.0, 1.0).is_err());
        assert!(binomial_tail_bound(3.0, 0.0).unwrap() == 1.0);
        assert!(binomial_tail_bound(3.0, 1.0).unwrap() < 1.0);
    }

    #[test]
    fn renyi_examples() {
        let r = renyi_bounds(0.5, 0.5, 1.0).unwrap();
        assert_eq!(r.xi4, 0.0);
        let r = renyi_bounds(0.8, 0.2, 1.0).unwrap();
        assert!((r.xi4 - 0.2).abs() < 1e-12);
        for i in 1..20 {
            for j in 1..20 {
                for e in [0.05, 0.3, 0.7, 1.0] {
                    let (p, q) = (i as f64 / 20.0, j as f64 / 20.0);
                    let r = renyi_bounds(p, q, e).unwrap();
                    assert!(r.xi3 >= r.xi4 - 1e-15, "p={p} q={q} e={e}");
                    assert!(r.xi3 >= 0.0 && r.xi4 >= 0.0);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn ch_optimum_is_local_max(
            a in prop::collection::vec(0.0f64..5.0, 1..12),
            seed in prop::collection::vec(0.0f64..5.0, 12),
        ) {
            let b: Vec<f64> = seed[..a.len()].to_vec();
            let pa = PoissonProfile::new(a.clone()).unwrap();
            let pb = PoissonProfile::new(b.clone()).unwrap();
            let r = ch_divergence(&pa, &pb).unwrap();
            for dt in [-0.01, 0.01] {
                let t = (r.t_star + dt).clamp(0.0, 1.0);
                prop_assert!(r.d >= ch_objective(&a, &b, t) - 1e-12);
            }
        }

        #[test]
        fn swapped_profiles_peak_at_half(p in 0.01f64..0.99, q in 0.01f64..0.99, lambda in 0.1f64..5.0) {
            prop_assume!((p - q).abs() > 1e-3);
            let approx = Kernel::triangular(1.0).unwrap().approximate(5).unwrap();
            let (null, alt) = profiles_for_test(&approx, lambda, p, q).unwrap();
            let r = ch_divergence(&null, &alt).unwrap();
            prop_assert!((r.t_star - 0.5).abs() <= 1e-6);
        }
    }
}
