//! Compactly supported connection functions and their simple-function ladders.

use serde::{Deserialize, Serialize};

use crate::error::{GkbmError, Result};
use crate::geometry::{torus_distance, TorusPoint};

/// Grid size used to estimate the infimum of smooth shapes.
const EPSILON_GRID: usize = 10_000;

/// Shape of a kernel as written in JSON configs.
///
/// `{"shape":"indicator","kappa":1.0}`, `{"shape":"triangular","kappa":2.0}`,
/// `{"shape":"texp","rate":1.5,"kappa":1.0}` or
/// `{"shape":"pwc","pieces":[[0.0,0.5,1.0],[0.5,1.0,0.4]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelShape {
    /// `1{x <= kappa}`.
    Indicator { kappa: f64 },
    /// `max(0, 1 - x / kappa)`.
    Triangular { kappa: f64 },
    /// `exp(-rate * x)` truncated to zero beyond `kappa`.
    Texp { rate: f64, kappa: f64 },
    /// Level `c` on `[l, r)`; the piece ending at the support bound also contains it.
    Pwc { pieces: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelSpec {
    #[serde(flatten)]
    shape: KernelShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

/// A connection function `phi: [0, inf) -> [0, 1]` with finite support bound `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct Kernel {
    shape: KernelShape,
    kappa: f64,
    epsilon: f64,
    epsilon_override: bool,
}

impl TryFrom<KernelSpec> for Kernel {
    type Error = GkbmError;

    fn try_from(spec: KernelSpec) -> Result<Self> {
        let kernel = Kernel::new(spec.shape)?;
        match spec.epsilon {
            Some(e) => kernel.with_epsilon(e),
            None => Ok(kernel),
        }
    }
}

impl From<Kernel> for KernelSpec {
    fn from(k: Kernel) -> Self {
        KernelSpec {
            epsilon: k.epsilon_override.then_some(k.epsilon),
            shape: k.shape,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(GkbmError::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Kernel {
    pub fn new(shape: KernelShape) -> Result<Self> {
        let kappa = match &shape {
            KernelShape::Indicator { kappa } | KernelShape::Triangular { kappa } => {
                positive("kappa", *kappa)?;
                *kappa
            }
            KernelShape::Texp { rate, kappa } => {
                positive("kappa", *kappa)?;
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(GkbmError::invalid(format!("rate must be finite and non-negative, got {rate}")));
                }
                *kappa
            }
            KernelShape::Pwc { pieces } => validate_pieces(pieces)?,
        };
        let mut kernel = Kernel {
            shape,
            kappa,
            epsilon: 0.0,
            epsilon_override: false,
        };
        kernel.epsilon = kernel.compute_epsilon();
        Ok(kernel)
    }

    pub fn indicator(kappa: f64) -> Result<Self> {
        Kernel::new(KernelShape::Indicator { kappa })
    }

    pub fn triangular(kappa: f64) -> Result<Self> {
        Kernel::new(KernelShape::Triangular { kappa })
    }

    pub fn texp(rate: f64, kappa: f64) -> Result<Self> {
        Kernel::new(KernelShape::Texp { rate, kappa })
    }

    pub fn pwc(pieces: Vec<[f64; 3]>) -> Result<Self> {
        Kernel::new(KernelShape::Pwc { pieces })
    }

    /// Replaces the computed infimum with a user-supplied value.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(GkbmError::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        self.epsilon = epsilon;
        self.epsilon_override = true;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel serializes")
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    /// `sup { x : phi(x) != 0 }`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `inf { phi(x) : x in [0, kappa] }`, computed or overridden.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// True when `phi` stays positive on the whole support, as the recovery
    /// guarantees require.
    pub fn has_positive_floor(&self) -> bool {
        self.epsilon > 0.0
    }

    /// `phi(x)`; exactly zero beyond `kappa`.
    pub fn eval(&self, x: f64) -> f64 {
        if x.is_nan() || x < 0.0 || x > self.kappa {
            return 0.0;
        }
        match &self.shape {
            KernelShape::Indicator { .. } => 1.0,
            KernelShape::Triangular { kappa } => (1.0 - x / kappa).max(0.0),
            KernelShape::Texp { rate, .. } => (-rate * x).exp(),
            KernelShape::Pwc { pieces } => pieces
                .iter()
                .find(|&&[l, r, _]| x >= l && (x < r || (r == self.kappa && x <= r)))
                .map_or(0.0, |p| p[2]),
        }
    }

    /// `psi_n(x, y) = phi(n / ln(n) * d(x, y))`.
    pub fn psi(&self, n: u64, x: TorusPoint, y: TorusPoint) -> f64 {
        self.psi_of_distance(n, torus_distance(x, y))
    }

    /// `psi_n` as a function of the torus distance.
    pub fn psi_of_distance(&self, n: u64, d: f64) -> f64 {
        let nf = n as f64;
        self.eval(self.snap(d * (nf / nf.ln())))
    }

    /// Rescaled distances a few ulps past the support bound are rounding
    /// artefacts of `d = kappa * ln(n) / n`; map them back onto the bound.
    fn snap(&self, scaled: f64) -> f64 {
        if scaled > self.kappa && scaled <= self.kappa * (1.0 + 8.0 * f64::EPSILON) {
            self.kappa
        } else {
            scaled
        }
    }

    /// Abscissae in `[0, kappa]` where `phi` has a kink or a jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0, self.kappa];
        if let KernelShape::Pwc { pieces } = &self.shape {
            for &[l, r, _] in pieces {
                out.push(l);
                out.push(r);
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out.retain(|&x| x <= self.kappa);
        out
    }

    /// `(inf, sup)` of `phi` over the closed interval `[a, b]`, `0 <= a <= b`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        match &self.shape {
            KernelShape::Indicator { .. } | KernelShape::Triangular { .. } | KernelShape::Texp { .. } => {
                // non-increasing shapes
                (self.eval(b), self.eval(a))
            }
            KernelShape::Pwc { .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut points = vec![a, b];
                for x in self.breakpoints() {
                    if x > a && x < b {
                        points.push(x);
                    }
                }
                points.sort_by(f64::total_cmp);
                // phi is constant between consecutive breakpoints: sample the
                // breakpoints themselves and the midpoints between them
                let mut samples = points.clone();
                for w in points.windows(2) {
                    samples.push(0.5 * (w[0] + w[1]));
                }
                for x in samples {
                    let v = self.eval(x);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    fn compute_epsilon(&self) -> f64 {
        match &self.shape {
            KernelShape::Indicator { .. } => 1.0,
            KernelShape::Pwc { .. } => self.range_on(0.0, self.kappa).0,
            KernelShape::Triangular { .. } | KernelShape::Texp { .. } => (0..=EPSILON_GRID)
                .map(|i| self.eval(self.kappa * i as f64 / EPSILON_GRID as f64))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Lower simple-function approximation with `ell` equal pieces on `[0, kappa]`.
    pub fn approximate(&self, ell: usize) -> Result<SimpleApproximation> {
        if ell == 0 {
            return Err(GkbmError::invalid("approximation needs ell >= 1"));
        }
        let native = match &self.shape {
            KernelShape::Indicator { kappa } => Some(vec![[0.0, *kappa, 1.0]]),
            KernelShape::Pwc { pieces } if pieces.len() <= ell => {
                let mut p = pieces.clone();
                p.sort_by(|x, y| x[0].total_cmp(&y[0]));
                Some(p)
            }
            _ => None,
        };
        if let Some(pieces) = native {
            return Ok(SimpleApproximation {
                ell,
                kappa: self.kappa,
                pieces,
                sup_error: 0.0,
            });
        }
        let h = self.kappa / ell as f64;
        let mut pieces = Vec::with_capacity(ell);
        let mut sup_error: f64 = 0.0;
        for s in 0..ell {
            let a = s as f64 * h;
            let b = if s + 1 == ell { self.kappa } else { (s + 1) as f64 * h };
            let (lo, hi) = self.range_on(a, b);
            sup_error = sup_error.max(hi - lo);
            pieces.push([a, b, lo]);
        }
        Ok(SimpleApproximation {
            ell,
            kappa: self.kappa,
            pieces,
            sup_error,
        })
    }
}

fn validate_pieces(pieces: &[[f64; 3]]) -> Result<f64> {
    if pieces.is_empty() {
        return Err(GkbmError::invalid("pwc kernel needs at least one piece"));
    }
    let mut sorted = pieces.to_vec();
    sorted.sort_by(|x, y| x[0].total_cmp(&y[0]));
    for &[l, r, c] in &sorted {
        if !(l.is_finite() && r.is_finite() && 0.0 <= l && l < r) {
            return Err(GkbmError::invalid(format!("pwc piece [{l}, {r}) must satisfy 0 <= l < r")));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(GkbmError::invalid(format!("pwc level {c} must lie in [0, 1]")));
        }
    }
    for w in sorted.windows(2) {
        if w[1][0] < w[0][1] {
            return Err(GkbmError::invalid("pwc pieces must be disjoint"));
        }
    }
    let mut levels: Vec<f64> = sorted.iter().map(|p| p[2]).collect();
    levels.sort_by(f64::total_cmp);
    if levels.windows(2).any(|w| w[0] == w[1]) {
        return Err(GkbmError::invalid("pwc levels must be distinct"));
    }
    let kappa = sorted
        .iter()
        .filter(|p| p[2] > 0.0)
        .map(|p| p[1])
        .fold(0.0, f64::max);
    if kappa <= 0.0 {
        return Err(GkbmError::invalid("pwc kernel must have a positive level"));
    }
    Ok(kappa)
}

/// `phi_ell = sum_s c_s 1{x in [l_s, r_s)}`, a pointwise lower bound of `phi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleApproximation {
    pub ell: usize,
    pub kappa: f64,
    /// `[l, r, level]`, sorted by `l`.
    pub pieces: Vec<[f64; 3]>,
    /// `sup_x phi(x) - phi_ell(x)`.
    pub sup_error: f64,
}

impl SimpleApproximation {
    pub fn eval(&self, x: f64) -> f64 {
        if x.is_nan() || x < 0.0 || x > self.kappa {
            return 0.0;
        }
        self.pieces
            .iter()
            .find(|&&[l, r, _]| x >= l && (x < r || (r == self.kappa && x <= r)))
            .map_or(0.0, |p| p[2])
    }
}
