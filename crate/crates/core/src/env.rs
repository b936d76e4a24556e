//! Offspring laws, i.i.d. environment models and the associated random walk
//! S_n = X_1 + ... + X_n with X_k = log m(Q_k).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Tolerance on |E[X e^{-X}]| below which a model is called intermediate.
pub const REGIME_TOL: f64 = 1e-12;

/// Terminal bracket width for the minimiser of E[e^{-lambda X}].
pub const RATE_TOL: f64 = 1e-10;

/// An offspring distribution.
///
/// The linear-fractional law with mean `m` and second factorial moment `b`
/// has generating function f(s) = 1 - (1 - s) / (a + eta (1 - s)) with
/// a = 1/m and eta = b / (2 m^2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum OffspringLaw {
    #[serde(rename = "finite")]
    Finite { probs: Vec<f64> },
    #[serde(rename = "lf")]
    LinearFractional { m: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// E[xi (xi - 1)].
    pub second_factorial: f64,
    /// b / m^2, used by the general survival bounds.
    pub eta_general: f64,
    /// b / (2 m^2), the parameter of the linear-fractional form.
    pub eta_lf: f64,
}

/// q(0) = atom and q(k) = (1 - atom)(1 - ratio) ratio^(k-1) for k >= 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfShape {
    pub atom: f64,
    pub ratio: f64,
}

impl OffspringLaw {
    pub fn finite(probs: Vec<f64>) -> Result<Self> {
        let law = OffspringLaw::Finite { probs };
        law.validate()?;
        Ok(law)
    }

    pub fn linear_fractional(m: f64, b: f64) -> Result<Self> {
        let law = OffspringLaw::LinearFractional { m, b };
        law.validate()?;
        Ok(law)
    }

    /// Geometric law on {0, 1, ...} with the given mean.
    pub fn geometric(mean: f64) -> Result<Self> {
        Self::linear_fractional(mean, 2.0 * mean * mean)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OffspringLaw::Finite { probs } => {
                if probs.is_empty() {
                    return Err(Error::InvalidLaw("empty probability vector".into()));
                }
                if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(Error::InvalidLaw(format!("probability {p} is not in [0, 1]")));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > SUM_TOL {
                    return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
                }
                if self.mean() == 0.0 {
                    return Err(Error::DegenerateLaw);
                }
                Ok(())
            }
            OffspringLaw::LinearFractional { m, b } => {
                if !(m.is_finite() && *m > 0.0) {
                    return Err(Error::InvalidLaw(format!("mean {m} must be positive")));
                }
                if !(b.is_finite() && *b >= 0.0) {
                    return Err(Error::InvalidLaw(format!("second factorial moment {b} must be >= 0")));
                }
                let total = 1.0 / m + b / (2.0 * m * m);
                if total < 1.0 - SUM_TOL {
                    return Err(Error::InvalidLaw(format!(
                        "b = {b} < 2m(m-1) = {}: no linear-fractional law has these moments",
                        2.0 * m * (m - 1.0)
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_lf(&self) -> bool {
        matches!(self, OffspringLaw::LinearFractional { .. })
    }

    pub fn lf_shape(&self) -> Option<LfShape> {
        match *self {
            OffspringLaw::LinearFractional { m, b } => {
                let a = 1.0 / m;
                let eta = b / (2.0 * m * m);
                let total = a + eta;
                Some(LfShape {
                    atom: (1.0 - 1.0 / total).max(0.0),
                    ratio: eta / total,
                })
            }
            OffspringLaw::Finite { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::Finite { probs } => {
                probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
            }
            OffspringLaw::LinearFractional { m, .. } => *m,
        }
    }

    pub fn log_mean(&self) -> f64 {
        self.mean().ln()
    }

    pub fn moments(&self) -> Result<Moments> {
        let mean = self.mean();
        if mean == 0.0 {
            return Err(Error::DegenerateLaw);
        }
        let second_factorial = match self {
            OffspringLaw::Finite { probs } => probs
                .iter()
                .enumerate()
                .map(|(k, p)| (k * k.saturating_sub(1)) as f64 * p)
                .sum(),
            OffspringLaw::LinearFractional { b, .. } => *b,
        };
        let m2 = mean * mean;
        Ok(Moments {
            mean,
            second_factorial,
            eta_general: second_factorial / m2,
            eta_lf: second_factorial / (2.0 * m2),
        })
    }

    pub fn prob(&self, k: usize) -> f64 {
        match self {
            OffspringLaw::Finite { probs } => probs.get(k).copied().unwrap_or(0.0),
            OffspringLaw::LinearFractional { .. } => {
                let LfShape { atom, ratio } = self.lf_shape().unwrap();
                if k == 0 {
                    atom
                } else {
                    (1.0 - atom) * (1.0 - ratio) * ratio.powi(k as i32 - 1)
                }
            }
        }
    }

    pub fn zero_prob(&self) -> f64 {
        self.prob(0)
    }

    /// Largest k with q(k) > 0, or `None` for unbounded support.
    pub fn max_support(&self) -> Option<usize> {
        match self {
            OffspringLaw::Finite { probs } => probs.iter().rposition(|p| *p > 0.0),
            OffspringLaw::LinearFractional { .. } => {
                let shape = self.lf_shape().unwrap();
                if shape.ratio > 0.0 {
                    None
                } else if shape.atom < 1.0 {
                    Some(1)
                } else {
                    Some(0)
                }
            }
        }
    }

    pub fn pgf(&self, s: f64) -> f64 {
        match self {
            OffspringLaw::Finite { probs } => probs.iter().rev().fold(0.0, |acc, p| acc * s + p),
            OffspringLaw::LinearFractional { .. } => {
                let LfShape { atom, ratio } = self.lf_shape().unwrap();
                atom + (1.0 - atom) * (1.0 - ratio) * s / (1.0 - ratio * s)
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            OffspringLaw::Finite { probs } => probs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, p)| acc * s + k as f64 * p),
            OffspringLaw::LinearFractional { .. } => {
                let LfShape { atom, ratio } = self.lf_shape().unwrap();
                let d = 1.0 - ratio * s;
                (1.0 - atom) * (1.0 - ratio) / (d * d)
            }
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        match self {
            OffspringLaw::Finite { probs } => probs
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, p)| acc * s + (k * (k - 1)) as f64 * p),
            OffspringLaw::LinearFractional { .. } => {
                let LfShape { atom, ratio } = self.lf_shape().unwrap();
                let d = 1.0 - ratio * s;
                2.0 * ratio * (1.0 - atom) * (1.0 - ratio) / (d * d * d)
            }
        }
    }

    /// (1 - f(s)) / (1 - s) = sum_{t >= 0} s^t P(xi > t), evaluated without
    /// cancellation so that survival probabilities stay accurate near 1.
    pub fn survival_factor(&self, s: f64) -> f64 {
        match self {
            OffspringLaw::Finite { probs } => {
                let mut tail = 0.0;
                let mut acc = 0.0;
                for p in probs.iter().skip(1).rev() {
                    tail += p;
                    acc = acc * s + tail;
                }
                acc
            }
            OffspringLaw::LinearFractional { .. } => {
                let LfShape { atom, ratio } = self.lf_shape().unwrap();
                (1.0 - atom) / (1.0 - ratio * s)
            }
        }
    }

    /// E[xi^2 1{xi >= a}] / m^2 for a >= 1.
    pub fn truncated_second_moment(&self, a: usize) -> Result<f64> {
        if a == 0 {
            return Err(Error::Precondition("truncation level must be >= 1".into()));
        }
        let m = self.mean();
        let raw = match self {
            OffspringLaw::Finite { probs } => probs
                .iter()
                .enumerate()
                .skip(a)
                .map(|(k, p)| (k * k) as f64 * p)
                .sum(),
            OffspringLaw::LinearFractional { .. } => {
                let LfShape { atom, ratio: r } = self.lf_shape().unwrap();
                let af = a as f64;
                let q = 1.0 - r;
                // sum_{y >= a} y^2 r^(y-1)
                let tail = r.powi(a as i32 - 1)
                    * (af * af / q + 2.0 * af * r / (q * q) + r * (1.0 + r) / (q * q * q));
                (1.0 - atom) * q * tail
            }
        };
        Ok(raw / (m * m))
    }
}

/// Sign class of E[X e^{-X}] for a supercritical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Strongly,
    Intermediate,
    Weakly,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Strongly => "strongly",
            Regime::Intermediate => "intermediate",
            Regime::Weakly => "weakly",
        };
        f.write_str(s)
    }
}

/// Distribution of a single increment X = log m(Q).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkIncrementSummary {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub drift: f64,
    /// E[X e^{-X}].
    pub cross_moment: f64,
}

impl WalkIncrementSummary {
    pub fn tilted_moment(&self, lambda: f64) -> f64 {
        self.support().map(|(x, w)| w * (-lambda * x).exp()).sum()
    }

    pub fn log_tilted_moment(&self, lambda: f64) -> f64 {
        log_sum_exp(self.support().map(|(x, w)| w.ln() - lambda * x))
    }

    /// E[X e^{-nu X}].
    pub fn tilted_cross(&self, nu: f64) -> f64 {
        self.support().map(|(x, w)| w * x * (-nu * x).exp()).sum()
    }

    fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(x, w)| (*x, *w))
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// An i.i.d. environment: a finite list of offspring laws with selection
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct EnvironmentModel {
    laws: Vec<OffspringLaw>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    states: Vec<OffspringLaw>,
    weights: Vec<f64>,
}

impl TryFrom<RawModel> for EnvironmentModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        EnvironmentModel::new(raw.states, raw.weights)
    }
}

impl From<EnvironmentModel> for RawModel {
    fn from(m: EnvironmentModel) -> Self {
        RawModel { states: m.laws, weights: m.weights }
    }
}

impl EnvironmentModel {
    pub fn new(laws: Vec<OffspringLaw>, weights: Vec<f64>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidModel("at least one state is required".into()));
        }
        if laws.len() != weights.len() {
            return Err(Error::InvalidModel(format!(
                "{} states but {} weights",
                laws.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidModel(format!("weight {w} is negative")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidModel(format!("weights sum to {total}")));
        }
        for law in &laws {
            law.validate()?;
        }
        Ok(EnvironmentModel { laws, weights })
    }

    /// Deterministic environment (Galton-Watson process).
    pub fn single(law: OffspringLaw) -> Result<Self> {
        Self::new(vec![law], vec![1.0])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    /// Short stable identifier derived from the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn laws(&self) -> &[OffspringLaw] {
        &self.laws
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    /// States with positive weight, as (index, law, weight).
    pub fn support(&self) -> impl Iterator<Item = (usize, &OffspringLaw, f64)> + '_ {
        self.laws
            .iter()
            .zip(&self.weights)
            .enumerate()
            .filter(|(_, (_, w))| **w > 0.0)
            .map(|(i, (law, w))| (i, law, *w))
    }

    pub fn increments(&self) -> Vec<f64> {
        self.laws.iter().map(OffspringLaw::log_mean).collect()
    }

    pub fn walk_summary(&self) -> WalkIncrementSummary {
        let values = self.increments();
        let mut drift = 0.0;
        let mut cross_moment = 0.0;
        for (x, w) in values.iter().zip(&self.weights) {
            if *w > 0.0 {
                drift += w * x;
                cross_moment += w * x * (-x).exp();
            }
        }
        WalkIncrementSummary { values, weights: self.weights.clone(), drift, cross_moment }
    }

    pub fn drift(&self) -> f64 {
        self.walk_summary().drift
    }

    pub fn is_supercritical(&self) -> bool {
        self.drift() > 0.0
    }

    pub fn all_lf(&self) -> bool {
        self.support().all(|(_, law, _)| law.is_lf())
    }

    /// P(Z_1 = 0 | Z_0 = 1) = E[Q(0)].
    pub fn one_step_extinction(&self) -> f64 {
        self.support().map(|(_, law, w)| w * law.zero_prob()).sum()
    }

    /// E[Q(k)].
    pub fn mean_prob(&self, k: usize) -> f64 {
        self.support().map(|(_, law, w)| w * law.prob(k)).sum()
    }

    /// Largest gamma with P(Q(0) <= 1 - gamma) = 1, i.e. 1 - max q(0).
    pub fn extinction_gap(&self) -> f64 {
        1.0 - self.support().map(|(_, law, _)| law.zero_prob()).fold(0.0, f64::max)
    }

    /// Whether the support of X lies in a lattice d Z with d > 0.
    ///
    /// Spans of the form x_min / k for k = 1..64 are tried, where x_min is
    /// the smallest nonzero |x|; the check uses relative tolerance 1e-9.
    pub fn is_lattice(&self) -> bool {
        let xs: Vec<f64> = self
            .support()
            .map(|(_, law, _)| law.log_mean())
            .filter(|x| x.abs() > 1e-14)
            .collect();
        let Some(x_min) = xs.iter().map(|x| x.abs()).reduce(f64::min) else {
            return true;
        };
        (1..=64).any(|k| {
            let d = x_min / k as f64;
            xs.iter().all(|x| {
                let r = x / d;
                (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// Minimiser of E[e^{-lambda X}] is finite.
    Interior,
    /// X >= 0 almost surely and P(X = 0) > 0; the infimum is approached as
    /// lambda -> infinity.
    Boundary,
    /// X > 0 almost surely: no environment keeps the walk from growing.
    NoSmallValueEnvironment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateAtZero {
    pub lambda_star: Option<f64>,
    /// -log inf_lambda E[e^{-lambda X}]; +infinity for
    /// [`RateKind::NoSmallValueEnvironment`].
    pub lambda0: f64,
    pub kind: RateKind,
}

/// Lambda(0) = -log inf_{lambda >= 0} E[e^{-lambda X}].
pub fn rate_function_at_zero(model: &EnvironmentModel) -> Result<RateAtZero> {
    let summary = model.walk_summary();
    if summary.drift <= 0.0 {
        return Err(Error::NotSupercritical(summary.drift));
    }
    let has_negative = summary.support().any(|(x, _)| x < 0.0);
    if !has_negative {
        let p_zero: f64 = summary.support().filter(|(x, _)| *x == 0.0).map(|(_, w)| w).sum();
        return Ok(if p_zero > 0.0 {
            RateAtZero { lambda_star: None, lambda0: -p_zero.ln(), kind: RateKind::Boundary }
        } else {
            RateAtZero {
                lambda_star: None,
                lambda0: f64::INFINITY,
                kind: RateKind::NoSmallValueEnvironment,
            }
        });
    }
    let g = |l: f64| summary.log_tilted_moment(l);
    let mut hi = 1.0;
    while g(2.0 * hi) < g(hi) {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Bracket("minimiser of E[e^{-lambda X}] not bracketed".into()));
        }
    }
    let lambda = golden_section(g, 0.0, 2.0 * hi, RATE_TOL);
    Ok(RateAtZero { lambda_star: Some(lambda), lambda0: -g(lambda), kind: RateKind::Interior })
}

/// Minimiser of a unimodal function on [lo, hi].
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Exponentially tilted model: weights w_a e^{-nu x_a} / mu.
///
/// Returns the tilted model together with mu = E[e^{-nu X}].
pub fn tilt(model: &EnvironmentModel, nu: f64) -> Result<(EnvironmentModel, f64)> {
    let xs = model.increments();
    let log_terms: Vec<f64> = xs
        .iter()
        .zip(model.weights())
        .map(|(x, w)| if *w > 0.0 { w.ln() - nu * x } else { f64::NEG_INFINITY })
        .collect();
    let log_mu = log_sum_exp(log_terms.iter().copied());
    if !log_mu.is_finite() {
        return Err(Error::Precondition(format!("E[e^(-nu X)] is not finite at nu = {nu}")));
    }
    let mut weights: Vec<f64> = log_terms.iter().map(|t| (t - log_mu).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let tilted = EnvironmentModel::new(model.laws().to_vec(), weights)?;
    Ok((tilted, log_mu.exp()))
}

/// Root of E[X e^{-nu X}] = 0 on nu > 0.
pub fn solve_critical_tilt(model: &EnvironmentModel) -> Result<f64> {
    let summary = model.walk_summary();
    if summary.drift <= 0.0 {
        return Err(Error::NotSupercritical(summary.drift));
    }
    if !summary.support().any(|(x, _)| x < 0.0) {
        return Err(Error::NoNegativeIncrements);
    }
    let h = |nu: f64| summary.tilted_cross(nu);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while h(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Bracket("critical tilt not bracketed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Regime classification by the sign of E[X e^{-X}].
pub fn classify_lf_regime(model: &EnvironmentModel) -> Result<Regime> {
    let summary = model.walk_summary();
    if summary.drift <= 0.0 {
        return Err(Error::NotSupercritical(summary.drift));
    }
    Ok(regime_of(summary.cross_moment))
}

pub(crate) fn regime_of(cross_moment: f64) -> Regime {
    if cross_moment > REGIME_TOL {
        Regime::Strongly
    } else if cross_moment < -REGIME_TOL {
        Regime::Weakly
    } else {
        Regime::Intermediate
    }
}
