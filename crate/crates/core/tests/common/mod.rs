#![allow(dead_code)]

use bpre::{EnvironmentModel, OffspringLaw};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Two LF states with log-means +c and -c. The first state has
/// b = 2m(m - 1) + db, the minimum plus `db`.
pub fn symmetric_lf(c: f64, weight: f64, db: f64, b_low: f64) -> EnvironmentModel {
    let m = c.exp();
    EnvironmentModel::new(
        vec![
            OffspringLaw::linear_fractional(m, 2.0 * m * (m - 1.0) + db).unwrap(),
            OffspringLaw::linear_fractional(1.0 / m, b_low).unwrap(),
        ],
        vec![weight, 1.0 - weight],
    )
    .unwrap()
}

/// Weight at which E[X e^{-X}] = 0 for X = +-c.
pub fn intermediate_weight(c: f64) -> f64 {
    let t = (2.0 * c).exp();
    t / (1.0 + t)
}

pub fn gw_quarter() -> EnvironmentModel {
    EnvironmentModel::single(OffspringLaw::finite(vec![0.25, 0.0, 0.75]).unwrap()).unwrap()
}

/// Strongly supercritical LF model used for the rate comparisons.
pub fn strongly_rate_model() -> EnvironmentModel {
    let e = std::f64::consts::E;
    EnvironmentModel::new(
        vec![
            OffspringLaw::linear_fractional(e, 2.0 * e * (e - 1.0) + 2.0).unwrap(),
            OffspringLaw::linear_fractional(1.0 / e, 0.5).unwrap(),
        ],
        vec![0.9, 0.1],
    )
    .unwrap()
}

/// Weakly supercritical LF model close to the intermediate boundary.
pub fn weakly_rate_model() -> EnvironmentModel {
    let e = std::f64::consts::E;
    EnvironmentModel::new(
        vec![
            OffspringLaw::linear_fractional(e, 2.0 * e * (e - 1.0) + 0.1).unwrap(),
            OffspringLaw::linear_fractional(1.0 / e, 0.05).unwrap(),
        ],
        vec![0.86, 0.14],
    )
    .unwrap()
}

pub fn strongly_mrca_model() -> EnvironmentModel {
    symmetric_lf(0.3, 0.82, 0.3, 0.1)
}

pub fn weakly_mrca_model() -> EnvironmentModel {
    symmetric_lf(1.0, 0.56, 0.1, 0.05)
}

pub fn intermediate_mrca_model() -> EnvironmentModel {
    symmetric_lf(0.3, intermediate_weight(0.3), 0.3, 0.1)
}

/// Finite law on {0, ..., max} with random weights and q(0) > 0.
pub fn random_finite_law(rng: &mut ChaCha8Rng, max: usize) -> OffspringLaw {
    let raw: Vec<f64> = (0..=max).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let head: f64 = probs[..max].iter().sum();
    probs[max] = 1.0 - head;
    OffspringLaw::finite(probs).unwrap()
}

/// Random supercritical two-state LF model with one growing and one
/// shrinking state.
pub fn random_lf_model(rng: &mut ChaCha8Rng) -> EnvironmentModel {
    loop {
        let m_hi = rng.random_range(1.1..4.0);
        let m_lo = rng.random_range(0.2..0.95);
        let b_hi = 2.0 * m_hi * (m_hi - 1.0) + rng.random_range(0.05..3.0);
        let b_lo = rng.random_range(0.0..1.5);
        let w = rng.random_range(0.3..0.95);
        let model = EnvironmentModel::new(
            vec![
                OffspringLaw::linear_fractional(m_hi, b_hi).unwrap(),
                OffspringLaw::linear_fractional(m_lo, b_lo).unwrap(),
            ],
            vec![w, 1.0 - w],
        )
        .unwrap();
        if model.drift() > 0.05 {
            return model;
        }
    }
}

/// Finite two-state model with one subcritical state.
pub fn two_state_is_model() -> EnvironmentModel {
    EnvironmentModel::new(
        vec![
            OffspringLaw::finite(vec![0.5, 0.3, 0.2]).unwrap(),
            OffspringLaw::finite(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        ],
        vec![0.5, 0.5],
    )
    .unwrap()
}
