//! Closed forms for environments made of linear-fractional laws.
//!
//! A linear-fractional pgf is determined by the pair (a, eta) through
//! f(s) = 1 - (1 - s) / (a + eta (1 - s)), and the class is closed under
//! composition: f_{0,n} has a = e^{-S_n} and eta = sum_{k<n} eta_{k+1} e^{-S_k}.

use serde::Serialize;

use crate::env::{
    classify_lf_regime, rate_function_at_zero, EnvironmentModel, OffspringLaw, RateAtZero,
    Regime,
};
use crate::error::{Error, Result};
use crate::pgf::TruncatedPgf;
use crate::quenched::EnvSequence;

/// Parameters (a, eta) of f_{0,n}, accumulated generation by generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LfQuenchedState {
    /// e^{-S_n}.
    pub s_exp: f64,
    /// sum_{k<n} eta_{k+1} e^{-S_k} with eta = b / (2 m^2).
    pub eta_sum: f64,
}

impl Default for LfQuenchedState {
    fn default() -> Self {
        Self::identity()
    }
}

impl LfQuenchedState {
    pub fn identity() -> Self {
        LfQuenchedState { s_exp: 1.0, eta_sum: 0.0 }
    }

    /// Appends one generation with the given law.
    pub fn push(&mut self, law: &OffspringLaw) -> Result<()> {
        let OffspringLaw::LinearFractional { m, b } = *law else {
            return Err(Error::NotLinearFractional);
        };
        self.eta_sum += b / (2.0 * m * m) * self.s_exp;
        self.s_exp /= m;
        Ok(())
    }

    pub fn from_env(env: &EnvSequence) -> Result<Self> {
        let mut state = Self::identity();
        for law in env.laws() {
            state.push(law)?;
        }
        Ok(state)
    }

    /// State of the concatenated environment (self first, then `later`).
    pub fn then(&self, later: &Self) -> Self {
        LfQuenchedState {
            s_exp: self.s_exp * later.s_exp,
            eta_sum: self.eta_sum + self.s_exp * later.eta_sum,
        }
    }

    pub fn pgf(&self, s: f64) -> f64 {
        1.0 - (1.0 - s) / (self.s_exp + self.eta_sum * (1.0 - s))
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let d = self.s_exp + self.eta_sum * (1.0 - s);
        self.s_exp / (d * d)
    }

    /// P(Z_n > 0 | Z_0 = 1, env) = 1 / (a + eta).
    pub fn survival(&self) -> f64 {
        1.0 / (self.s_exp + self.eta_sum)
    }

    /// The composed law as an offspring law.
    pub fn as_law(&self) -> OffspringLaw {
        let m = 1.0 / self.s_exp;
        OffspringLaw::LinearFractional { m, b: 2.0 * self.eta_sum * m * m }
    }

    /// P(Z_n = j | Z_0 = 1, env).
    pub fn pmf(&self, j: usize) -> f64 {
        let total = self.s_exp + self.eta_sum;
        if j == 0 {
            1.0 - 1.0 / total
        } else {
            let r = self.eta_sum / total;
            self.s_exp / (total * total) * r.powi(j as i32 - 1)
        }
    }
}

/// f_{0,n}(s).
pub fn lf_fgen(state: &LfQuenchedState, s: f64) -> f64 {
    state.pgf(s)
}

/// f'_{0,n}(s).
pub fn lf_derivative(state: &LfQuenchedState, s: f64) -> f64 {
    state.derivative(s)
}

/// P(Z_n = j | Z_0 = z0, env); closed form for z0 = 1, otherwise the z0-th
/// power of the composed law through the pgf engine.
pub fn lf_quenched_pmf(state: &LfQuenchedState, z0: usize, j: usize) -> Result<f64> {
    if z0 == 0 {
        return Err(Error::Precondition("initial population must be >= 1".into()));
    }
    if z0 == 1 {
        return Ok(state.pmf(j));
    }
    let series = TruncatedPgf::from_law(&state.as_law(), j)?;
    series.power(z0).coeff(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LfRho {
    pub rho: f64,
    pub regime: Regime,
    /// -log E[e^{-X}].
    pub strongly_value: f64,
    pub lambda0: f64,
    pub rate: RateAtZero,
}

/// Rate of P(Z_n = 1) for an all-LF model: -log E[e^{-X}] in the strongly
/// and intermediate regimes and Lambda(0) in the weakly regime.
pub fn lf_rho(model: &EnvironmentModel) -> Result<LfRho> {
    if !model.all_lf() {
        return Err(Error::NotLinearFractional);
    }
    let regime = classify_lf_regime(model)?;
    if model.one_step_extinction() <= 0.0 {
        return Err(Error::NoExtinction);
    }
    let summary = model.walk_summary();
    let strongly_value = -summary.log_tilted_moment(1.0);
    let rate = rate_function_at_zero(model)?;
    if regime == Regime::Intermediate {
        // At the boundary the tilt optimum sits at lambda = 1 and the two
        // branches describe the same number.
        debug_assert!((strongly_value - rate.lambda0).abs() < 1e-6);
    }
    let rho = match regime {
        Regime::Strongly | Regime::Intermediate => strongly_value,
        Regime::Weakly => rate.lambda0,
    };
    Ok(LfRho { rho, regime, strongly_value, lambda0: rate.lambda0, rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalBounds {
    /// 1 / (e^{-S_n} + sum_{k<n} eta_{k+1} e^{-S_k}) with eta = b / m^2.
    pub lower: f64,
    /// exp(min(0, L_n)) with L_n the running minimum of the walk.
    pub upper: f64,
    /// Exact survival probability with eta = b / (2 m^2), for all-LF
    /// environments.
    pub lf_exact: Option<f64>,
}

/// Two-sided bounds on P(Z_n > 0 | env).
pub fn agresti_survival_bounds(env: &EnvSequence) -> SurvivalBounds {
    let n = env.len();
    let a = (-env.walk()[n]).exp();
    let lower = 1.0 / (a + env.eta_prefix()[n]);
    let upper = env.running_min().min(0.0).exp();
    let lf_exact = LfQuenchedState::from_env(env).ok().map(|s| s.survival());
    SurvivalBounds { lower, upper, lf_exact }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quenched::{quenched_law, quenched_pmf};

    fn lf(m: f64, b: f64) -> OffspringLaw {
        OffspringLaw::linear_fractional(m, b).unwrap()
    }

    #[test]
    fn single_generation_closed_form() {
        let env = EnvSequence::new(vec![lf(2.0, 8.0)]).unwrap();
        let st = LfQuenchedState::from_env(&env).unwrap();
        assert!((st.pmf(1) - 0.5 / 2.25).abs() < 1e-15);
        assert!((st.pmf(1) - 2.0 / 9.0).abs() < 1e-15);
        assert!((st.pmf(0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_pgf_engine() {
        let env = EnvSequence::new(vec![lf(2.0, 8.0), lf(0.5, 1.0), lf(1.5, 3.0), lf(3.0, 20.0)])
            .unwrap();
        let st = LfQuenchedState::from_env(&env).unwrap();
        for z0 in 1..4 {
            let law = quenched_law(&env, z0, 10).unwrap();
            for j in 0..=10 {
                let closed = lf_quenched_pmf(&st, z0, j).unwrap();
                assert!((closed - law.prob(j).unwrap()).abs() < 1e-14, "z0={z0} j={j}");
            }
        }
    }

    #[test]
    fn semigroup() {
        let a = EnvSequence::new(vec![lf(2.0, 8.0), lf(0.5, 1.0)]).unwrap();
        let b = EnvSequence::new(vec![lf(1.5, 3.0)]).unwrap();
        let ab = EnvSequence::new(vec![lf(2.0, 8.0), lf(0.5, 1.0), lf(1.5, 3.0)]).unwrap();
        let sa = LfQuenchedState::from_env(&a).unwrap();
        let sb = LfQuenchedState::from_env(&b).unwrap();
        let sab = LfQuenchedState::from_env(&ab).unwrap();
        let c = sa.then(&sb);
        assert!((c.s_exp - sab.s_exp).abs() < 1e-15);
        assert!((c.eta_sum - sab.eta_sum).abs() < 1e-15);
        for &s in &[0.0, 0.4, 0.9] {
            let nested = a.laws()[0].pgf(a.laws()[1].pgf(b.laws()[0].pgf(s)));
            assert!((c.pgf(s) - nested).abs() < 1e-14);
        }
    }

    #[test]
    fn rho_values() {
        let e = std::f64::consts::E;
        let up = lf(e, 2.0 * e * e);
        let down = lf(1.0 / e, 2.0 / (e * e));
        // X = +-1 with weights 0.9, 0.1: strongly, rho = -log(0.9/e + 0.1 e).
        let strongly = EnvironmentModel::new(vec![up.clone(), down.clone()], vec![0.9, 0.1]).unwrap();
        let r = lf_rho(&strongly).unwrap();
        assert_eq!(r.regime, Regime::Strongly);
        let expected = -(0.9 / e + 0.1 * e).ln();
        assert!((r.rho - expected).abs() < 1e-12);
        assert!(r.rho <= r.lambda0 + 1e-12);
        // X = +-log 2 with weights 2/3, 1/3: weakly, rho = Lambda(0).
        let two = lf(2.0, 8.0);
        let half = lf(0.5, 0.5);
        let weakly = EnvironmentModel::new(vec![two, half], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let r = lf_rho(&weakly).unwrap();
        assert_eq!(r.regime, Regime::Weakly);
        assert!((r.rho + (2.0 * 2f64.sqrt() / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn rho_preconditions() {
        let fin = OffspringLaw::finite(vec![0.25, 0.0, 0.75]).unwrap();
        let m = EnvironmentModel::single(fin).unwrap();
        assert!(matches!(lf_rho(&m), Err(Error::NotLinearFractional)));
    }

    #[test]
    fn bounds_bracket_survival() {
        let env = EnvSequence::new(vec![lf(2.0, 8.0), lf(0.5, 1.0), lf(1.5, 3.0)]).unwrap();
        let b = agresti_survival_bounds(&env);
        let exact = 1.0 - quenched_pmf(&env, 1, 0).unwrap();
        assert!(b.lower <= exact + 1e-15 && exact <= b.upper + 1e-15);
        assert!((b.lf_exact.unwrap() - exact).abs() < 1e-14);
    }
}
