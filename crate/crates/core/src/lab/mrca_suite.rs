use serde::Serialize;

use crate::annealed::annealed_mrca_pair_law;
use crate::env::{classify_lf_regime, EnvironmentModel, Regime};
use crate::error::{Error, Result};
use crate::spine::{conditioned_mrca_sample, MrcaDistribution, MrcaMethod};

/// Default fraction of the horizon used for the interior MRCA bins.
pub const DEFAULT_DELTA: f64 = 0.5;

/// Exact conditional MRCA laws are attached when |A|^n is at most this.
const EXACT_MRCA_BUDGET: f64 = (1u64 << 20) as f64;

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrcaPoint {
    pub n: usize,
    pub distribution: MrcaDistribution,
    /// Fewer accepted samples than requested.
    pub insufficient: bool,
    /// P(MRCA_n = 1 | Z_n = 2).
    pub first_bin: Estimate,
    /// P(MRCA_n = n | Z_n = 2).
    pub last_bin: Estimate,
    /// P(MRCA_n > delta n | Z_n = 2).
    pub tail: Estimate,
    /// n P(MRCA_n = n | Z_n = 2).
    pub scaled_last: Estimate,
    /// n^{3/2} P(MRCA_n = ceil(delta n) | Z_n = 2).
    pub scaled_interior: Estimate,
    /// Exact P(MRCA_n = k | Z_n = 2), k = 1..=n, when enumeration is affordable.
    pub exact: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum RegimeSummary {
    Weakly {
        min_first_bin: f64,
        min_last_bin: f64,
    },
    Intermediate {
        /// Ratio of n P(MRCA_n = n) between the last and first horizon.
        scaled_last_ratio: f64,
    },
    Strongly {
        /// Weighted least-squares slope of log P(MRCA_n > delta n) in n.
        decay_rate: f64,
        decay_se: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrcaRegimeReport {
    pub model_id: String,
    pub regime: Regime,
    pub delta: f64,
    pub replicates: u64,
    pub seed: u64,
    pub points: Vec<MrcaPoint>,
    pub summary: RegimeSummary,
}

/// Root seed used for horizon n, so that different horizons use disjoint
/// streams.
pub fn horizon_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_add((n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn estimate(p: f64, se: f64, scale: f64) -> Estimate {
    Estimate { value: scale * p, se: scale * se }
}

/// Runs the conditioned MRCA sampler (spine method, target Z_n = 2) over
/// `n_list` and summarises the statistics relevant to the model's regime.
pub fn mrca_regime_suite(
    model: &EnvironmentModel,
    n_list: &[usize],
    replicates: u64,
    seed: u64,
    delta: f64,
) -> Result<MrcaRegimeReport> {
    if !model.all_lf() {
        return Err(Error::NotLinearFractional);
    }
    if n_list.is_empty() {
        return Err(Error::Precondition("at least one horizon is required".into()));
    }
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::Precondition("delta must lie in (0, 1)".into()));
    }
    let regime = classify_lf_regime(model)?;
    let states = model.support().count() as f64;
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let d = conditioned_mrca_sample(model, n, 2, MrcaMethod::Geiger, replicates, horizon_seed(seed, n))?;
        let nf = n as f64;
        let interior = (delta * nf).ceil() as usize;
        let (tp, tse) = d.tail(delta * nf);
        let exact = if states.powi(n as i32) <= EXACT_MRCA_BUDGET {
            let law = annealed_mrca_pair_law(model, n)?;
            let total: f64 = law.iter().sum();
            Some(law.iter().map(|p| p / total).collect())
        } else {
            None
        };
        points.push(MrcaPoint {
            n,
            insufficient: d.accepted < replicates,
            first_bin: estimate(d.prob(1), d.std_error(1), 1.0),
            last_bin: estimate(d.prob(n), d.std_error(n), 1.0),
            tail: estimate(tp, tse, 1.0),
            scaled_last: estimate(d.prob(n), d.std_error(n), nf),
            scaled_interior: estimate(d.prob(interior), d.std_error(interior), nf.powf(1.5)),
            exact,
            distribution: d,
        });
    }
    let summary = match regime {
        Regime::Weakly => RegimeSummary::Weakly {
            min_first_bin: points.iter().map(|p| p.first_bin.value).fold(1.0, f64::min),
            min_last_bin: points.iter().map(|p| p.last_bin.value).fold(1.0, f64::min),
        },
        Regime::Intermediate => {
            let first = points.first().unwrap().scaled_last.value;
            let last = points.last().unwrap().scaled_last.value;
            RegimeSummary::Intermediate { scaled_last_ratio: last / first }
        }
        Regime::Strongly => {
            let (decay_rate, decay_se) = log_slope(&points);
            RegimeSummary::Strongly { decay_rate, decay_se }
        }
    };
    Ok(MrcaRegimeReport {
        model_id: model.fingerprint(),
        regime,
        delta,
        replicates,
        seed,
        points,
        summary,
    })
}

/// Weighted least squares of log(tail) on n, weights p^2 / se^2.
fn log_slope(points: &[MrcaPoint]) -> (f64, f64) {
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.tail.value > 0.0 && p.tail.se > 0.0)
        .map(|p| {
            let w = (p.tail.value / p.tail.se).powi(2);
            (p.n as f64, p.tail.value.ln(), w)
        })
        .collect();
    if data.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let mx = data.iter().map(|d| d.2 * d.0).sum::<f64>() / sw;
    let my = data.iter().map(|d| d.2 * d.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|d| d.2 * (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| d.2 * (d.0 - mx) * (d.1 - my)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}
