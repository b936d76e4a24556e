//! Quenched quantities for a fixed environment sequence (q_1, ..., q_n).
//!
//! Notation: f_{k,n} = f_{k+1} ∘ ... ∘ f_n (identity for k = n) and
//! p_{k,n} = 1 - f_{k,n}(0), the survival probability up to generation n of
//! one individual living at generation k.

use serde::Serialize;

use crate::env::{EnvironmentModel, OffspringLaw};
use crate::error::{Error, Result};
use crate::pgf::{apply_law, check_degree, TruncatedPgf, DEFAULT_DEGREE, MAX_DEGREE, TAIL_TARGET};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvSequence {
    laws: Vec<OffspringLaw>,
    walk: Vec<f64>,
    /// eta_prefix[j] = sum_{k < j} eta_{k+1} e^{-S_k} with eta = b / m^2.
    eta_prefix: Vec<f64>,
}

impl EnvSequence {
    pub fn new(laws: Vec<OffspringLaw>) -> Result<Self> {
        let mut walk = Vec::with_capacity(laws.len() + 1);
        let mut eta_prefix = Vec::with_capacity(laws.len() + 1);
        walk.push(0.0);
        eta_prefix.push(0.0);
        for law in &laws {
            let mo = law.moments()?;
            let s: f64 = *walk.last().unwrap();
            let e: f64 = *eta_prefix.last().unwrap();
            eta_prefix.push(e + mo.eta_general * (-s).exp());
            walk.push(s + mo.mean.ln());
        }
        Ok(EnvSequence { laws, walk, eta_prefix })
    }

    pub fn from_indices(model: &EnvironmentModel, indices: &[usize]) -> Result<Self> {
        let laws = indices
            .iter()
            .map(|&i| {
                model
                    .laws()
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Precondition(format!("state index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(laws)
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    pub fn laws(&self) -> &[OffspringLaw] {
        &self.laws
    }

    /// Law of generation k, 1 <= k <= n.
    pub fn law(&self, k: usize) -> &OffspringLaw {
        &self.laws[k - 1]
    }

    /// S_0, ..., S_n.
    pub fn walk(&self) -> &[f64] {
        &self.walk
    }

    pub fn eta_prefix(&self) -> &[f64] {
        &self.eta_prefix
    }

    /// L_n = min(S_0, ..., S_n).
    pub fn running_min(&self) -> f64 {
        self.walk.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Last generation k <= n with q_k(0) > 0, or 0 if there is none.
    pub fn kappa(&self) -> usize {
        (1..=self.len()).rev().find(|&k| self.law(k).zero_prob() > 0.0).unwrap_or(0)
    }
}

/// Extinction probabilities f_{k,n}(0), survival probabilities p_{k,n} and
/// log f'_k(f_{k,n}(0)) for one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionLadder {
    ext: Vec<f64>,
    surv: Vec<f64>,
    log_deriv: Vec<f64>,
}

impl ExtinctionLadder {
    pub fn new(env: &EnvSequence) -> Self {
        let n = env.len();
        let mut ext = vec![0.0; n + 1];
        let mut surv = vec![1.0; n + 1];
        let mut log_deriv = vec![0.0; n + 1];
        for k in (1..=n).rev() {
            let law = env.law(k);
            let s = ext[k];
            ext[k - 1] = law.pgf(s);
            // 1 - f(s) = (1 - s) g(s) keeps p_{k-1,n} accurate when it is tiny.
            surv[k - 1] = surv[k] * law.survival_factor(s);
            log_deriv[k] = law.derivative(s).ln();
        }
        ExtinctionLadder { ext, surv, log_deriv }
    }

    pub fn len(&self) -> usize {
        self.ext.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// f_{k,n}(0).
    pub fn extinction(&self, k: usize) -> f64 {
        self.ext[k]
    }

    /// p_{k,n}.
    pub fn survival(&self, k: usize) -> f64 {
        self.surv[k]
    }

    /// log f'_k(f_{k,n}(0)) for 1 <= k <= n.
    pub fn log_derivative(&self, k: usize) -> f64 {
        self.log_deriv[k]
    }

    /// p_{-1,n} = 1 - f_{0,n}(0)^z.
    pub fn survival_from(&self, z: usize) -> f64 {
        -(z as f64 * (-self.surv[0]).ln_1p()).exp_m1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuenchedLaw {
    pub pmf: TruncatedPgf,
    pub survival: f64,
}

impl QuenchedLaw {
    pub fn prob(&self, j: usize) -> Result<f64> {
        self.pmf.coeff(j)
    }
}

/// Series of f_{k,n} truncated at `degree`, for k = n, n-1, ..., 0.
///
/// Entry `i` holds f_{n-i,n}.
pub fn suffix_series(env: &EnvSequence, degree: usize) -> Result<Vec<TruncatedPgf>> {
    let mut out = Vec::with_capacity(env.len() + 1);
    let mut g = TruncatedPgf::identity(degree.max(1))?.truncate(degree);
    out.push(g.clone());
    for k in (1..=env.len()).rev() {
        g = apply_law(env.law(k), &g);
        out.push(g.clone());
    }
    Ok(out)
}

/// Law of Z_n given Z_0 = z0, with coefficients exact up to `degree`.
pub fn quenched_law(env: &EnvSequence, z0: usize, degree: usize) -> Result<QuenchedLaw> {
    if z0 == 0 {
        return Err(Error::Precondition("initial population must be >= 1".into()));
    }
    check_degree(degree)?;
    let f0n = suffix_series(env, degree)?.pop().unwrap();
    let pmf = f0n.power(z0);
    let survival = ExtinctionLadder::new(env).survival_from(z0);
    Ok(QuenchedLaw { pmf, survival })
}

/// [`quenched_law`] with the degree doubled from the default until the tail
/// mass drops below 1e-10 or the hard cap is reached.
pub fn quenched_law_auto(env: &EnvSequence, z0: usize) -> Result<QuenchedLaw> {
    let mut degree = DEFAULT_DEGREE;
    loop {
        let law = quenched_law(env, z0, degree)?;
        if law.pmf.tail_mass() < TAIL_TARGET || degree >= MAX_DEGREE {
            return Ok(law);
        }
        degree = (2 * degree).min(MAX_DEGREE);
    }
}

/// P(Z_n = j | Z_0 = z0, env).
pub fn quenched_pmf(env: &EnvSequence, z0: usize, j: usize) -> Result<f64> {
    quenched_law(env, z0, j)?.prob(j)
}

/// log of [`phi_n`].
pub fn log_phi_n(env: &EnvSequence, z0: usize) -> Result<f64> {
    let n = env.len();
    if n == 0 || z0 == 0 {
        return Err(Error::Precondition("phi_n needs n >= 1 and z0 >= 1".into()));
    }
    let ladder = ExtinctionLadder::new(env);
    let mut acc = env.law(n).prob(z0).ln() + (z0 as f64).ln();
    if z0 > 1 {
        acc += (z0 - 1) as f64 * ladder.extinction(0).ln();
    }
    for i in 1..n {
        acc += ladder.log_derivative(i);
    }
    Ok(acc)
}

/// Quenched probability of the spine event: Z_n = z0 with every side subtree
/// extinct,
/// q_n(z0) z0 f_{0,n}(0)^{z0-1} prod_{i=1}^{n-1} f'_i(f_{i,n}(0)).
pub fn phi_n(env: &EnvSequence, z0: usize) -> Result<f64> {
    Ok(log_phi_n(env, z0)?.exp())
}

/// Law of the number Ŷ_k of individuals to the right of the spine at
/// generation k (born from the spine parent), conditionally on survival.
#[derive(Debug, Clone, PartialEq)]
pub enum SiblingLaw {
    /// Generation 0: P(Ŷ_0 = i) = (1 - s) s^{z-i-1} / (1 - s^z), 0 <= i < z.
    Root { z: usize, s: f64, surv_one: f64, surv_all: f64 },
    /// Generation k >= 1: P(Ŷ_k = i) = (p_k / p_{k-1}) sum_{j > i} q_k(j) s^{j-i-1}
    /// with s = f_{k,n}(0).
    Inner { law: OffspringLaw, s: f64, ratio: f64 },
}

impl SiblingLaw {
    pub fn root(ladder: &ExtinctionLadder, z: usize) -> Self {
        SiblingLaw::Root {
            z,
            s: ladder.extinction(0),
            surv_one: ladder.survival(0),
            surv_all: ladder.survival_from(z),
        }
    }

    pub fn inner(env: &EnvSequence, ladder: &ExtinctionLadder, k: usize) -> Self {
        SiblingLaw::Inner {
            law: env.law(k).clone(),
            s: ladder.extinction(k),
            ratio: ladder.survival(k) / ladder.survival(k - 1),
        }
    }

    pub fn pmf(&self, i: usize) -> f64 {
        match self {
            SiblingLaw::Root { z, s, surv_one, surv_all } => {
                if i >= *z {
                    0.0
                } else {
                    surv_one * s.powi((z - i - 1) as i32) / surv_all
                }
            }
            SiblingLaw::Inner { law, s, ratio } => match law {
                OffspringLaw::Finite { probs } => {
                    let tail: f64 = probs
                        .iter()
                        .skip(i + 1)
                        .rev()
                        .fold(0.0, |acc, p| acc * s + p);
                    ratio * tail
                }
                OffspringLaw::LinearFractional { .. } => {
                    let sh = law.lf_shape().unwrap();
                    ratio * (1.0 - sh.atom) * (1.0 - sh.ratio) * sh.ratio.powi(i as i32)
                        / (1.0 - sh.ratio * s)
                }
            },
        }
    }

    /// E[t^Ŷ], summed term by term.
    pub fn generating(&self, t: f64) -> f64 {
        match self {
            SiblingLaw::Root { z, .. } => (0..*z).map(|i| self.pmf(i) * t.powi(i as i32)).sum(),
            SiblingLaw::Inner { law, s, ratio } => match law.max_support() {
                Some(max) => (0..max).map(|i| self.pmf(i) * t.powi(i as i32)).sum(),
                None => {
                    // Geometric series in i summed in closed form.
                    let sh = law.lf_shape().unwrap();
                    ratio * (1.0 - sh.atom) * (1.0 - sh.ratio)
                        / ((1.0 - sh.ratio * s) * (1.0 - sh.ratio * t))
                }
            },
        }
    }
}

/// Both sides of the identity
/// prod_k P(Ẑ^{(k)}_n = 0 | env) = (p_{n-1,n} / p_{-1,n}) prod_{k=0}^{n-1} f'_k(f_{k,n}(0))
/// with f_0(s) = s^z.
///
/// The left side is built from the laws of the sibling counts Ŷ_k; the right
/// side from derivatives along the extinction ladder.
pub fn subtree_extinction_identity(env: &EnvSequence, z: usize) -> Result<(f64, f64)> {
    let n = env.len();
    if n == 0 || z == 0 {
        return Err(Error::Precondition("identity needs n >= 1 and z >= 1".into()));
    }
    let ladder = ExtinctionLadder::new(env);
    let surv = ladder.survival_from(z);
    if surv <= 0.0 {
        return Err(Error::NullEvent("environment is extinct with certainty".into()));
    }
    let mut lhs = SiblingLaw::root(&ladder, z).generating(ladder.extinction(0));
    for k in 1..n {
        lhs *= SiblingLaw::inner(env, &ladder, k).generating(ladder.extinction(k));
    }
    let s0 = ladder.extinction(0);
    let f0_prime = if z == 1 { 1.0 } else { z as f64 * s0.powi(z as i32 - 1) };
    let mut rhs = ladder.survival(n - 1) / surv * f0_prime;
    for k in 1..n {
        rhs *= ladder.log_derivative(k).exp();
    }
    Ok((lhs, rhs))
}

/// P(Z_n = 2, MRCA = k | Z_0 = 1, env) for k = 1, ..., n (index k - 1).
///
/// With g = n - k the generation of the branching ancestor's parent,
/// the probability is
/// f'_{0,g}(f_{g,n}(0)) * f''_{g+1}(f_{g+1,n}(0)) / 2 * f'_{g+1,n}(0)^2.
pub fn quenched_mrca_pair_law(env: &EnvSequence) -> Vec<f64> {
    let n = env.len();
    let ladder = ExtinctionLadder::new(env);
    // prefix[g] = sum_{i <= g} and suffix[g] = sum_{i >= g} of the log
    // derivatives; both are accumulated without subtraction since terms may
    // be -infinity.
    let mut prefix = vec![0.0; n + 1];
    for i in 1..=n {
        prefix[i] = prefix[i - 1] + ladder.log_derivative(i);
    }
    let mut suffix = vec![0.0; n + 2];
    for i in (1..=n).rev() {
        suffix[i] = suffix[i + 1] + ladder.log_derivative(i);
    }
    (1..=n)
        .map(|k| {
            let g = n - k;
            let branch = 0.5 * env.law(g + 1).second_derivative(ladder.extinction(g + 1));
            branch * (prefix[g] + 2.0 * suffix[g + 2]).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(p: &[f64]) -> OffspringLaw {
        OffspringLaw::finite(p.to_vec()).unwrap()
    }

    #[test]
    fn deterministic_copy_law() {
        let env = EnvSequence::new(vec![fin(&[0.0, 1.0]); 5]).unwrap();
        assert_eq!(quenched_pmf(&env, 1, 1).unwrap(), 1.0);
        let (lhs, rhs) = subtree_extinction_identity(&env, 1).unwrap();
        assert!((lhs - 1.0).abs() < 1e-15 && (rhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_individuals_one_binary_generation() {
        let env = EnvSequence::new(vec![fin(&[0.5, 0.0, 0.5])]).unwrap();
        assert!((quenched_pmf(&env, 2, 2).unwrap() - 0.5).abs() < 1e-15);
        let law = quenched_law(&env, 2, 4).unwrap();
        assert!((law.prob(0).unwrap() - 0.25).abs() < 1e-15);
        assert!((law.prob(4).unwrap() - 0.25).abs() < 1e-15);
        assert!((law.survival - 0.75).abs() < 1e-15);
    }

    #[test]
    fn walk_and_kappa() {
        let env = EnvSequence::new(vec![fin(&[0.5, 0.0, 0.5]), fin(&[0.0, 0.0, 1.0])]).unwrap();
        assert_eq!(env.walk()[0], 0.0);
        assert!((env.walk()[2] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(env.kappa(), 1);
        assert_eq!(env.running_min(), 0.0);
    }

    #[test]
    fn phi_one_step() {
        let env = EnvSequence::new(vec![fin(&[0.2, 0.3, 0.5])]).unwrap();
        assert!((phi_n(&env, 1).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn phi_two_steps_brute_force() {
        // Trees of height two from one root: spine event means exactly one
        // individual at generation 2 and it is the only surviving line.
        let q1 = fin(&[0.5, 0.0, 0.5]);
        let q2 = fin(&[0.5, 0.5]);
        let env = EnvSequence::new(vec![q1.clone(), q2.clone()]).unwrap();
        // Root has 2 children (prob 1/2): one child has 1 offspring, the other 0.
        let brute = 0.5 * (2.0 * 0.5 * 0.5);
        assert!((phi_n(&env, 1).unwrap() - brute).abs() < 1e-15);
        assert!((quenched_pmf(&env, 1, 1).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn mrca_pair_law_sums_to_pair_probability() {
        let env = EnvSequence::new(vec![
            fin(&[0.3, 0.2, 0.5]),
            OffspringLaw::linear_fractional(1.5, 4.0).unwrap(),
            fin(&[0.1, 0.4, 0.3, 0.2]),
            fin(&[0.4, 0.1, 0.5]),
        ])
        .unwrap();
        let law = quenched_mrca_pair_law(&env);
        let total: f64 = law.iter().sum();
        assert!((total - quenched_pmf(&env, 1, 2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn ladder_survival_matches_pgf() {
        let env = EnvSequence::new(vec![
            fin(&[0.3, 0.2, 0.5]),
            OffspringLaw::linear_fractional(2.0, 8.0).unwrap(),
        ])
        .unwrap();
        let ladder = ExtinctionLadder::new(&env);
        let ext0 = env.law(1).pgf(env.law(2).pgf(0.0));
        assert!((ladder.extinction(0) - ext0).abs() < 1e-15);
        assert!((ladder.survival(0) - (1.0 - ext0)).abs() < 1e-15);
        assert!((ladder.survival_from(3) - (1.0 - ext0.powi(3))).abs() < 1e-15);
    }
}
