use rayon::prelude::*;
use serde::Serialize;

use super::{ModelSampler, Stream};
use crate::env::{tilt, EnvironmentModel};
use crate::error::{Error, Result};
use crate::quenched::{quenched_law, EnvSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: u64,
    pub nu: f64,
    /// E[e^{-nu X}] under the original model.
    pub mu: f64,
}

impl IsEstimate {
    /// Normal-approximation interval estimate +- z * std_error.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.estimate - z * self.std_error, self.estimate + z * self.std_error)
    }
}

/// Estimates P_{z0}(1 <= Z_n <= j_max) by drawing environments from the
/// model tilted by e^{-nu X} / mu and averaging
/// mu^n e^{nu S_n} P_{z0}(1 <= Z_n <= j_max | env).
///
/// The quenched probability is exact, so the only randomness is the
/// environment; the estimator is unbiased for every nu with mu finite.
pub fn is_estimate_small_value(
    model: &EnvironmentModel,
    z0: usize,
    n: usize,
    j_max: usize,
    nu: f64,
    replicates: u64,
    seed: u64,
) -> Result<IsEstimate> {
    if replicates == 0 {
        return Err(Error::Precondition("at least one replicate is required".into()));
    }
    if j_max == 0 {
        return Err(Error::Precondition("j_max must be >= 1".into()));
    }
    let (tilted, mu) = tilt(model, nu)?;
    let sampler = ModelSampler::new(&tilted);
    let log_mu = mu.ln();
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut stream = Stream::new(seed, i);
            let states = sampler.environment(n, &mut stream);
            let env = EnvSequence::from_indices(model, &states)?;
            let law = quenched_law(&env, z0, j_max)?;
            let p: f64 = law.pmf.coeffs()[1..=j_max].iter().sum();
            Ok(p * (n as f64 * log_mu + nu * env.walk()[n]).exp())
        })
        .collect::<Result<_>>()?;
    let r = replicates as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = if replicates > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    Ok(IsEstimate { estimate: mean, std_error: (var / r).sqrt(), replicates, nu, mu })
}
