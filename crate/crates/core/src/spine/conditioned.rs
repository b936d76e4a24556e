use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mrca, simulate_forward_with, simulate_tree_with, GeigerSampler, ModelSampler, Stream};
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::quenched::{EnvSequence, ExtinctionLadder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MrcaMethod {
    /// Forward simulation of whole trees, kept when Z_n = target.
    Rejection,
    /// Environment accepted with probability P(Z_n > 0 | env), then the
    /// conditioned tree is drawn along the spine and kept when Z_n = target.
    Geiger,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrcaOptions {
    pub proposal_cap: u64,
    /// Proposals evaluated per parallel batch.
    pub batch: u64,
    pub population_cap: u64,
}

impl Default for MrcaOptions {
    fn default() -> Self {
        MrcaOptions { proposal_cap: 100_000_000, batch: 1 << 14, population_cap: super::POPULATION_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcaBin {
    pub k: usize,
    pub count: u64,
}

/// Empirical law of MRCA_n given Z_n = target_size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcaDistribution {
    pub n: usize,
    pub target_size: usize,
    pub bins: Vec<MrcaBin>,
    pub accepted: u64,
    pub proposed: u64,
}

impl MrcaDistribution {
    pub fn count(&self, k: usize) -> u64 {
        self.bins.iter().find(|b| b.k == k).map_or(0, |b| b.count)
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.count(k) as f64 / self.accepted as f64
    }

    /// Binomial standard error of [`MrcaDistribution::prob`].
    pub fn std_error(&self, k: usize) -> f64 {
        let p = self.prob(k);
        (p * (1.0 - p) / self.accepted as f64).sqrt()
    }

    /// Empirical P(MRCA_n > x) with its binomial standard error.
    pub fn tail(&self, x: f64) -> (f64, f64) {
        let c: u64 = self.bins.iter().filter(|b| b.k as f64 > x).map(|b| b.count).sum();
        let p = c as f64 / self.accepted as f64;
        (p, (p * (1.0 - p) / self.accepted as f64).sqrt())
    }

    pub fn pmf(&self) -> Vec<f64> {
        (1..=self.n).map(|k| self.prob(k)).collect()
    }
}

/// Samples MRCA_n conditionally on Z_n = target_size, starting from one
/// individual.
///
/// Proposal i uses stream (seed, i). Proposals are evaluated in parallel
/// batches and accepted in index order until `replicates` acceptances, so
/// the result does not depend on the number of threads.
pub fn conditioned_mrca_sample(
    model: &EnvironmentModel,
    n: usize,
    target_size: usize,
    method: MrcaMethod,
    replicates: u64,
    seed: u64,
) -> Result<MrcaDistribution> {
    conditioned_mrca_sample_with(model, n, target_size, method, replicates, seed, MrcaOptions::default())
}

pub fn conditioned_mrca_sample_with(
    model: &EnvironmentModel,
    n: usize,
    target_size: usize,
    method: MrcaMethod,
    replicates: u64,
    seed: u64,
    opts: MrcaOptions,
) -> Result<MrcaDistribution> {
    if target_size < 2 {
        return Err(Error::Precondition("target size must be >= 2".into()));
    }
    if n == 0 {
        return Err(Error::Precondition("horizon must be >= 1".into()));
    }
    let sampler = ModelSampler::new(model);
    let propose = |i: u64| -> Result<Option<usize>> {
        let mut stream = Stream::new(seed, i);
        match method {
            MrcaMethod::Rejection => {
                let cap = opts.population_cap;
                let traj = simulate_forward_with(model, 1, n, &mut stream, cap)?;
                if traj.sizes[n] != target_size as u64 {
                    return Ok(None);
                }
                let tree = simulate_tree_with(model, 1, n, &mut Stream::new(seed, i), cap)?;
                Ok(Some(mrca(&tree)?))
            }
            MrcaMethod::Geiger => {
                let states = sampler.environment(n, &mut stream);
                let env = EnvSequence::from_indices(model, &states)?;
                let survival = ExtinctionLadder::new(&env).survival(0);
                if stream.uniform() >= survival {
                    return Ok(None);
                }
                let g = GeigerSampler::new(&env, 1)?;
                let draw = g.endpoint_sampler(target_size)?.sample(&mut stream);
                Ok((draw.z_n == Some(target_size)).then_some(draw.mrca).flatten())
            }
        }
    };

    let mut counts = vec![0u64; n + 1];
    let mut accepted = 0u64;
    let mut proposed = 0u64;
    'outer: while accepted < replicates && proposed < opts.proposal_cap {
        let end = (proposed + opts.batch).min(opts.proposal_cap);
        let results: Vec<Option<usize>> =
            (proposed..end).into_par_iter().map(propose).collect::<Result<_>>()?;
        for r in results {
            proposed += 1;
            if let Some(k) = r {
                counts[k] += 1;
                accepted += 1;
                if accepted == replicates {
                    break 'outer;
                }
            }
        }
    }
    if accepted == 0 {
        return Err(Error::NoAccepted { proposed });
    }
    let bins = (1..=n).map(|k| MrcaBin { k, count: counts[k] }).collect();
    Ok(MrcaDistribution { n, target_size, bins, accepted, proposed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annealed::annealed_mrca_pair_law;
    use crate::env::OffspringLaw;

    fn model() -> EnvironmentModel {
        EnvironmentModel::new(
            vec![
                OffspringLaw::finite(vec![0.3, 0.3, 0.4]).unwrap(),
                OffspringLaw::finite(vec![0.1, 0.3, 0.3, 0.3]).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let a = conditioned_mrca_sample(&model(), 5, 2, MrcaMethod::Geiger, 500, 3).unwrap();
        let b = conditioned_mrca_sample(&model(), 5, 2, MrcaMethod::Geiger, 500, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.accepted, 500);
    }

    #[test]
    fn geiger_matches_exact_law() {
        let n = 5;
        let exact = annealed_mrca_pair_law(&model(), n).unwrap();
        let total: f64 = exact.iter().sum();
        let d = conditioned_mrca_sample(&model(), n, 2, MrcaMethod::Geiger, 20_000, 8).unwrap();
        for k in 1..=n {
            let p = exact[k - 1] / total;
            let se = (p * (1.0 - p) / d.accepted as f64).sqrt().max(1e-4);
            assert!((d.prob(k) - p).abs() < 4.0 * se, "k={k} {} vs {p}", d.prob(k));
        }
    }

    #[test]
    fn json_shape() {
        let d = conditioned_mrca_sample(&model(), 3, 2, MrcaMethod::Rejection, 50, 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        for key in ["n", "target_size", "bins", "accepted", "proposed"] {
            assert!(v.get(key).is_some());
        }
        assert!(v["bins"][0].get("k").is_some() && v["bins"][0].get("count").is_some());
    }
}
