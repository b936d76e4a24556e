//! Simulation: forward trajectories and genealogies, the spine sampler for
//! trees conditioned on survival, importance sampling over tilted
//! environments and conditioned MRCA experiments.

mod conditioned;
mod geiger;
mod importance;
mod tree;

pub use conditioned::{
    conditioned_mrca_sample, conditioned_mrca_sample_with, MrcaBin, MrcaDistribution, MrcaMethod,
    MrcaOptions,
};
pub use geiger::{EndpointSample, GeigerEndpointSampler, GeigerSampler, SpineSample};
pub use importance::{is_estimate_small_value, IsEstimate};
pub use tree::{mrca, simulate_tree, simulate_tree_with, GenealogyTree};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{EnvironmentModel, OffspringLaw};
use crate::error::{Error, Result};
use crate::quenched::EnvSequence;

/// Default bound on the population of any single generation.
pub const POPULATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub root_seed: u64,
    pub replicate: u64,
}

/// Random stream of one replicate: ChaCha8 keyed by the root seed, with the
/// replicate index selecting the stream. Output depends only on the pair.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
    provenance: Provenance,
}

impl Stream {
    pub fn new(root_seed: u64, replicate: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
        rng.set_stream(replicate);
        Stream { rng, provenance: Provenance { root_seed, replicate } }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Inverse-transform sampler for one offspring law.
#[derive(Debug, Clone, PartialEq)]
pub enum OffspringSampler {
    Table { cdf: Vec<f64>, last: usize },
    Lf { atom: f64, ln_ratio: Option<f64> },
}

impl OffspringSampler {
    pub fn new(law: &OffspringLaw) -> Self {
        match law {
            OffspringLaw::Finite { probs } => {
                let mut acc = 0.0;
                let cdf = probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                OffspringSampler::Table { cdf, last }
            }
            OffspringLaw::LinearFractional { .. } => {
                let shape = law.lf_shape().unwrap();
                let ln_ratio = (shape.ratio > 0.0).then(|| shape.ratio.ln());
                OffspringSampler::Lf { atom: shape.atom, ln_ratio }
            }
        }
    }

    /// Offspring count for a uniform draw `u` in [0, 1).
    pub fn from_uniform(&self, u: f64) -> u64 {
        match self {
            OffspringSampler::Table { cdf, last } => {
                let k = cdf.partition_point(|c| *c <= u);
                k.min(*last) as u64
            }
            OffspringSampler::Lf { atom, ln_ratio } => {
                if u < *atom {
                    return 0;
                }
                match ln_ratio {
                    None => 1,
                    Some(lr) => {
                        // P(G >= k) = r^k for the geometric part.
                        let v = (u - atom) / (1.0 - atom);
                        1 + ((-v).ln_1p() / lr).floor() as u64
                    }
                }
            }
        }
    }

    pub fn sample(&self, stream: &mut Stream) -> u64 {
        self.from_uniform(stream.uniform())
    }
}

/// Draws environment states and offspring numbers for a model.
#[derive(Debug, Clone)]
pub struct ModelSampler {
    states: Vec<usize>,
    cdf: Vec<f64>,
    offspring: Vec<OffspringSampler>,
}

impl ModelSampler {
    pub fn new(model: &EnvironmentModel) -> Self {
        let mut states = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for (i, _, w) in model.support() {
            acc += w;
            states.push(i);
            cdf.push(acc);
        }
        let offspring = model.laws().iter().map(OffspringSampler::new).collect();
        ModelSampler { states, cdf, offspring }
    }

    pub fn state(&self, stream: &mut Stream) -> usize {
        let u = stream.uniform();
        let k = self.cdf.partition_point(|c| *c <= u).min(self.states.len() - 1);
        self.states[k]
    }

    pub fn offspring(&self, state: usize) -> &OffspringSampler {
        &self.offspring[state]
    }

    pub fn environment(&self, n: usize, stream: &mut Stream) -> Vec<usize> {
        (0..n).map(|_| self.state(stream)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Z_0, ..., Z_n.
    pub sizes: Vec<u64>,
    pub states: Vec<usize>,
    pub env: EnvSequence,
    pub provenance: Provenance,
}

/// Forward simulation of Z_0, ..., Z_n with an i.i.d. environment.
///
/// Randomness is consumed generation by generation: one draw for the
/// environment state, then one per parent in order. [`simulate_tree`] uses
/// the same order, so both produce the same sizes on the same stream.
pub fn simulate_forward(
    model: &EnvironmentModel,
    z0: u64,
    n: usize,
    stream: &mut Stream,
) -> Result<Trajectory> {
    simulate_forward_with(model, z0, n, stream, POPULATION_CAP)
}

pub fn simulate_forward_with(
    model: &EnvironmentModel,
    z0: u64,
    n: usize,
    stream: &mut Stream,
    cap: u64,
) -> Result<Trajectory> {
    let sampler = ModelSampler::new(model);
    let mut sizes = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n);
    sizes.push(z0);
    let mut z = z0;
    for generation in 1..=n {
        let state = sampler.state(stream);
        states.push(state);
        let off = sampler.offspring(state);
        let mut next = 0u64;
        for _ in 0..z {
            next += off.sample(stream);
            if next > cap {
                return Err(Error::Explosive { population: next, cap, generation });
            }
        }
        z = next;
        sizes.push(z);
    }
    let env = EnvSequence::from_indices(model, &states)?;
    Ok(Trajectory { sizes, states, env, provenance: stream.provenance() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| Stream::new(7, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(Stream::new(7, 3).next_u64(), Stream::new(7, 4).next_u64());
        assert_ne!(Stream::new(7, 3).next_u64(), Stream::new(8, 3).next_u64());
    }

    #[test]
    fn offspring_sampler_frequencies() {
        let law = OffspringLaw::linear_fractional(2.0, 8.0).unwrap();
        let s = OffspringSampler::new(&law);
        let n = 200_000;
        let mut counts = [0usize; 6];
        let mut stream = Stream::new(1, 0);
        for _ in 0..n {
            let k = s.sample(&mut stream) as usize;
            if k < 6 {
                counts[k] += 1;
            }
        }
        for (k, c) in counts.iter().enumerate() {
            let p = law.prob(k);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 5.0 * se, "k={k}");
        }
    }

    #[test]
    fn table_sampler_edges() {
        let law = OffspringLaw::finite(vec![0.25, 0.0, 0.75]).unwrap();
        let s = OffspringSampler::new(&law);
        assert_eq!(s.from_uniform(0.0), 0);
        assert_eq!(s.from_uniform(0.2499), 0);
        assert_eq!(s.from_uniform(0.25), 2);
        assert_eq!(s.from_uniform(0.999_999_999), 2);
    }

    #[test]
    fn zero_start_and_copy_law() {
        let model = EnvironmentModel::single(OffspringLaw::finite(vec![0.0, 1.0]).unwrap()).unwrap();
        let t = simulate_forward(&model, 0, 5, &mut Stream::new(1, 0)).unwrap();
        assert!(t.sizes.iter().all(|z| *z == 0));
        let t = simulate_forward(&model, 3, 5, &mut Stream::new(1, 0)).unwrap();
        assert!(t.sizes.iter().all(|z| *z == 3));
    }

    #[test]
    fn explosive_guard() {
        let model = EnvironmentModel::single(OffspringLaw::finite(vec![0.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        let err = simulate_forward_with(&model, 1, 30, &mut Stream::new(1, 0), 1000).unwrap_err();
        assert!(matches!(err, Error::Explosive { .. }));
    }
}
