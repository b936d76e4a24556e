//! Two small models showing that the rate of P_k(Z_n = j) can depend on the
//! initial size k.

use serde::Serialize;

use crate::annealed::{annealed_table, check_budget};
use crate::env::{EnvironmentModel, OffspringLaw};
use crate::error::{Error, Result};
use crate::quenched::{quenched_pmf, EnvSequence};

/// Horizons up to this length are enumerated exactly.
pub const EXAMPLE_ENUMERATION_LIMIT: usize = 22;

/// q1(1) = 1 with weight r, q2(0) = p, q2(2) = 1 - p.
pub fn example1_model(r: f64, p: f64) -> Result<EnvironmentModel> {
    if !(0.0 < r && r < 1.0 && 0.0 < p && p < 1.0) {
        return Err(Error::Precondition("r and p must lie in (0, 1)".into()));
    }
    EnvironmentModel::new(
        vec![OffspringLaw::finite(vec![0.0, 1.0])?, OffspringLaw::finite(vec![p, 0.0, 1.0 - p])?],
        vec![r, 1.0 - r],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Enumeration,
    /// Only the all-q1 sequence keeps the population odd, so
    /// P_1(Z_n = 1) = r^n P_1(Z_n = 1 | q1, ..., q1).
    Parity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Row {
    pub n: usize,
    pub p1_one: f64,
    pub r_pow_n: f64,
    /// |log P_1(Z_n = 1) - n log r|.
    pub log_error: f64,
    pub p1_two: Option<f64>,
    /// (1/n) log P_1(Z_n = 2) - log r.
    pub gap: Option<f64>,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Report {
    pub r: f64,
    pub p: f64,
    /// 2(1 - p)p / (1 + 2(1 - p)p).
    pub threshold: f64,
    pub separation_expected: bool,
    pub rows: Vec<Example1Row>,
    pub max_log_error: f64,
    /// Gap at the largest enumerated horizon.
    pub final_gap: Option<f64>,
    pub note: String,
}

pub fn example1_suite(r: f64, p: f64, n_max: usize) -> Result<Example1Report> {
    let model = example1_model(r, p)?;
    let n_enum = n_max.min(EXAMPLE_ENUMERATION_LIMIT);
    let table = annealed_table(&model, 1, &[1, 2], n_enum)?;
    let q1 = model.laws()[0].clone();
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let r_pow_n = r.powi(n as i32);
        let (p1_one, p1_two, method) = if n <= n_enum {
            (table.probs[n][0], Some(table.probs[n][1]), Method::Enumeration)
        } else {
            let env = EnvSequence::new(vec![q1.clone(); n])?;
            (r_pow_n * quenched_pmf(&env, 1, 1)?, None, Method::Parity)
        };
        let log_error = (p1_one.ln() - n as f64 * r.ln()).abs();
        let gap = p1_two.map(|q| q.ln() / n as f64 - r.ln());
        rows.push(Example1Row { n, p1_one, r_pow_n, log_error, p1_two, gap, method });
    }
    let c = 2.0 * (1.0 - p) * p;
    let threshold = c / (1.0 + c);
    let separation_expected = r < threshold;
    let max_log_error = rows.iter().map(|r| r.log_error).fold(0.0, f64::max);
    let final_gap = rows.iter().rev().find_map(|r| r.gap);
    let note = if separation_expected {
        format!("r = {r} is below the threshold {threshold:.6}: separation expected")
    } else {
        format!("r = {r} is not below the threshold {threshold:.6}: no separation expected")
    };
    Ok(Example1Report {
        r,
        p,
        threshold,
        separation_expected,
        rows,
        max_log_error,
        final_gap,
        note,
    })
}

/// q1(1) = p, q1(a) = 1 - p with weight r; q2(0) = q2(2) = p, q2(a) = 1 - 2p.
pub fn example2_model(r: f64, p: f64, a: usize) -> Result<EnvironmentModel> {
    if !(0.0 < r && r < 1.0 && 0.0 < p && p < 0.5) || a <= 2 {
        return Err(Error::Precondition("need r in (0, 1), p in (0, 1/2) and a > 2".into()));
    }
    let mut q1 = vec![0.0; a + 1];
    q1[1] = p;
    q1[a] = 1.0 - p;
    let mut q2 = vec![0.0; a + 1];
    q2[0] = p;
    q2[2] = p;
    q2[a] = 1.0 - 2.0 * p;
    EnvironmentModel::new(
        vec![OffspringLaw::finite(q1)?, OffspringLaw::finite(q2)?],
        vec![r, 1.0 - r],
    )
}

/// Smallest fixed point of f in [0, 1), by bisection to 1e-12 on a bracket
/// found by scanning for the first sign change of f(s) - s.
pub fn smallest_fixed_point(f: impl Fn(f64) -> f64) -> Result<f64> {
    let g = |s: f64| f(s) - s;
    if g(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let steps = 10_000;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..steps {
        let s = i as f64 / steps as f64;
        if g(s) < 0.0 {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let mut hi = hi.ok_or_else(|| Error::Bracket("no fixed point below 1".into()))?;
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Row {
    pub n: usize,
    pub p2_two: f64,
    pub p1_two: f64,
    /// (1/n) log P_2(Z_n = 2) - (1/n) log P_1(Z_n = 2).
    pub log_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Report {
    pub r: f64,
    pub p: f64,
    pub a: usize,
    pub fixed_point: f64,
    pub fixed_point_residual: f64,
    /// 2p > f_2(2p).
    pub sufficiency_holds: bool,
    pub fixed_point_below_2p: bool,
    /// Asymptotic upper bound log(3 p^2) on the rate from two individuals.
    pub upper_bound_two: f64,
    /// Asymptotic lower bound log(r p) on the rate from one individual.
    pub lower_bound_one: f64,
    pub bounds_separate: bool,
    pub rows: Vec<Example2Row>,
    pub note: String,
}

pub fn example2_suite(r: f64, p: f64, a: usize, n_max: usize) -> Result<Example2Report> {
    let model = example2_model(r, p, a)?;
    check_budget(2, n_max)?;
    let f2 = model.laws()[1].clone();
    let fixed_point = smallest_fixed_point(|s| f2.pgf(s))?;
    let fixed_point_residual = (fixed_point - f2.pgf(fixed_point)).abs();
    let sufficiency_holds = 2.0 * p > f2.pgf(2.0 * p);
    let two = annealed_table(&model, 2, &[2], n_max)?;
    let one = annealed_table(&model, 1, &[2], n_max)?;
    let rows = (1..=n_max)
        .map(|n| {
            let p2_two = two.probs[n][0];
            let p1_two = one.probs[n][0];
            Example2Row { n, p2_two, p1_two, log_gap: (p2_two.ln() - p1_two.ln()) / n as f64 }
        })
        .collect();
    let upper_bound_two = (3.0 * p * p).ln();
    let lower_bound_one = (r * p).ln();
    let note = if sufficiency_holds {
        format!("2p > f2(2p): the fixed point is at most 2p = {}", 2.0 * p)
    } else {
        format!("inconclusive at this (p, a) = ({p}, {a}): 2p <= f2(2p)")
    };
    Ok(Example2Report {
        r,
        p,
        a,
        fixed_point,
        fixed_point_residual,
        sufficiency_holds,
        fixed_point_below_2p: fixed_point <= 2.0 * p,
        upper_bound_two,
        lower_bound_one,
        bounds_separate: upper_bound_two < lower_bound_one,
        rows,
        note,
    })
}
