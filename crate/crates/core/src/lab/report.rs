use serde::Serialize;

use crate::annealed::{fekete_bounds, smallest_reachable, FeketeTable, CLOSURE_CAP};
use crate::env::{classify_lf_regime, rate_function_at_zero, EnvironmentModel, RateAtZero, Regime};
use crate::error::{Error, Result};
use crate::lf::{lf_rho, LfRho};

/// Slack allowed in the orderings between certified quantities.
pub const ORDERING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityDiagnostics {
    pub supercritical: bool,
    pub drift: f64,
    /// P(Z_1 = 0).
    pub one_step_extinction: f64,
    /// gamma with Q(0) <= 1 - gamma almost surely.
    pub gamma: f64,
    /// E|X| is finite; always true for finitely many states.
    pub abs_mean_finite: bool,
    /// Whether the sufficient condition for a positive rate holds.
    pub positive_rate_applies: bool,
    pub lattice: bool,
    pub lf_pure: bool,
    pub regime: Option<Regime>,
}

pub fn positivity_diagnostics(model: &EnvironmentModel) -> PositivityDiagnostics {
    let summary = model.walk_summary();
    let gamma = model.extinction_gap();
    let lf_pure = model.all_lf();
    PositivityDiagnostics {
        supercritical: summary.drift > 0.0,
        drift: summary.drift,
        one_step_extinction: model.one_step_extinction(),
        gamma,
        abs_mean_finite: true,
        positive_rate_applies: gamma > 0.0,
        lattice: model.is_lattice(),
        lf_pure,
        regime: if lf_pure { classify_lf_regime(model).ok() } else { None },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl OrderingCheck {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        OrderingCheck { name: name.into(), lhs, rhs, holds: lhs <= rhs + ORDERING_TOL }
    }
}

/// Exact and closed-form quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifiedRho {
    pub fekete: FeketeTable,
    /// min_n a_n / n, an upper bound on the rate.
    pub fekete_upper: f64,
    pub lambda0: RateAtZero,
    pub lf_closed_form: Option<LfRho>,
    pub orderings: Vec<OrderingCheck>,
}

/// Non-certified proxies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatedRho {
    /// (a_{2m} - a_m) / m at the largest m with 2m <= n_max.
    pub slope_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoReport {
    pub model_id: String,
    pub z0: usize,
    pub n_max: usize,
    pub certified: CertifiedRho,
    pub estimated: EstimatedRho,
    pub diagnostics: PositivityDiagnostics,
}

impl RhoReport {
    pub fn orderings_hold(&self) -> bool {
        self.certified.orderings.iter().all(|o| o.holds)
    }
}

/// Certified upper bounds, Lambda(0), the LF closed form when available and
/// the positivity diagnostics for one model.
pub fn rho_report(model: &EnvironmentModel, n_max: usize) -> Result<RhoReport> {
    let drift = model.drift();
    if drift <= 0.0 {
        return Err(Error::NotSupercritical(drift));
    }
    if model.one_step_extinction() <= 0.0 {
        return Err(Error::NoExtinction);
    }
    let z0 = smallest_reachable(model, CLOSURE_CAP)?.z0;
    let fekete = fekete_bounds(model, z0, n_max)?;
    let fekete_upper = fekete.upper_bound();
    let lambda0 = rate_function_at_zero(model)?;
    let lf = if model.all_lf() { Some(lf_rho(model)?) } else { None };
    let mut orderings = Vec::new();
    if let Some(lf) = &lf {
        orderings.push(OrderingCheck::le("lf_rho <= fekete_upper", lf.rho, fekete_upper));
        orderings.push(OrderingCheck::le("lf_rho <= lambda0", lf.rho, lambda0.lambda0));
    }
    let slope_estimate = fekete.slope_estimate();
    Ok(RhoReport {
        model_id: model.fingerprint(),
        z0,
        n_max,
        certified: CertifiedRho { fekete, fekete_upper, lambda0, lf_closed_form: lf, orderings },
        estimated: EstimatedRho { slope_estimate },
        diagnostics: positivity_diagnostics(model),
    })
}

/// Rate when no state can go extinct: P_k(Z_n = k) = E[Q(1)]^{kn}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotoneRho {
    /// -log E[Q(1)]; +infinity when E[Q(1)] = 0.
    pub rho: f64,
    pub single_child_prob: f64,
    pub infinite: bool,
}

impl MonotoneRho {
    /// Rate of P_k(Z_n = k), k * rho.
    pub fn rate(&self, k: usize) -> f64 {
        if self.infinite {
            f64::INFINITY
        } else {
            k as f64 * self.rho
        }
    }
}

pub fn monotone_rho(model: &EnvironmentModel) -> Result<MonotoneRho> {
    if model.support().any(|(_, law, _)| law.zero_prob() > 0.0) {
        return Err(Error::Precondition(
            "monotone case needs q(0) = 0 in every state".into(),
        ));
    }
    let p1 = model.mean_prob(1);
    if p1 <= 0.0 {
        return Ok(MonotoneRho { rho: f64::INFINITY, single_child_prob: 0.0, infinite: true });
    }
    let rho = if p1 >= 1.0 { 0.0 } else { -p1.ln() };
    Ok(MonotoneRho { rho, single_child_prob: p1, infinite: false })
}
