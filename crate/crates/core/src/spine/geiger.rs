//! Spine decomposition of a tree conditioned on survival to generation n.
//!
//! The spine is the leftmost line with descendants at generation n. Given
//! the environment, the spine individual of generation k - 1 has j children
//! of which the spine child is the l-th with probability proportional to
//! q_k(j) s^{l-1}, s = f_{k,n}(0): the l - 1 siblings to its left all die
//! out. The j - l siblings to its right, Ŷ_k, start unconditioned subtrees.
//! At generation 0 the same holds with the z0 roots in place of the
//! children.

use serde::Serialize;

use super::{OffspringSampler, Stream, POPULATION_CAP};
use crate::env::OffspringLaw;
use crate::error::{Error, Result};
use crate::pgf::TruncatedPgf;
use crate::quenched::{suffix_series, EnvSequence, ExtinctionLadder};

/// Survivor-relevant part of a conditioned tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpineSample {
    pub z0: usize,
    /// Rank l_k of the spine individual among the z0 roots (k = 0) or among
    /// the children of the previous spine individual (k >= 1), counted from
    /// the left starting at 1.
    pub ranks: Vec<usize>,
    /// Ŷ_0, ..., Ŷ_n.
    pub right_counts: Vec<usize>,
    /// subtree_sizes[k][t] is the number of descendants at generation k + t
    /// of the Ŷ_k individuals born at generation k.
    pub subtree_sizes: Vec<Vec<u64>>,
}

impl SpineSample {
    pub fn n(&self) -> usize {
        self.right_counts.len() - 1
    }

    /// Ẑ^{(k)}_n.
    pub fn subtree_at_horizon(&self, k: usize) -> u64 {
        *self.subtree_sizes[k].last().unwrap()
    }

    /// Z_n = Ẑ^{(0)}_n + ... + Ẑ^{(n-1)}_n + Ŷ_n + 1.
    pub fn z_n(&self) -> u64 {
        1 + (0..=self.n()).map(|k| self.subtree_at_horizon(k)).sum::<u64>()
    }

    /// Whether every side subtree is extinct at generation n.
    pub fn spine_only(&self) -> bool {
        self.z_n() == 1
    }

    /// MRCA_n when the tree is not a forest at generation n.
    pub fn mrca(&self) -> Option<usize> {
        let n = self.n();
        if self.subtree_at_horizon(0) > 0 {
            return None;
        }
        let first = (1..=n).find(|&k| self.subtree_at_horizon(k) > 0);
        Some(first.map_or(1, |k| n - k + 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Row {
    Table { js: Vec<usize>, cdf: Vec<f64>, s: f64 },
    Lf { atom: f64, r: f64, s: f64, ratio: f64 },
}

/// Truncated geometric on {1, ..., j} with P(l) proportional to s^{l-1}.
fn sample_rank(j: usize, s: f64, u: f64) -> usize {
    if s <= 0.0 || j == 1 {
        return 1;
    }
    let sj = s.powi(j as i32);
    let l = 1.0 + ((1.0 - u * (1.0 - sj)).ln() / s.ln()).floor();
    (l as usize).clamp(1, j)
}

impl Row {
    fn new(law: &OffspringLaw, s: f64, ratio: f64) -> Self {
        match law.max_support() {
            Some(max) => {
                let mut js = Vec::new();
                let mut weights = Vec::new();
                for j in 1..=max {
                    let q = law.prob(j);
                    if q > 0.0 {
                        // (1 - s^j) / (1 - s) as a sum, exact at s = 0.
                        let geo: f64 = (0..j).fold(0.0, |acc, _| acc * s + 1.0);
                        js.push(j);
                        weights.push(ratio * q * geo);
                    }
                }
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                let cdf = weights
                    .iter()
                    .map(|w| {
                        acc += w / total;
                        acc
                    })
                    .collect();
                Row::Table { js, cdf, s }
            }
            None => {
                let shape = law.lf_shape().unwrap();
                Row::Lf { atom: shape.atom, r: shape.ratio, s, ratio }
            }
        }
    }

    /// Number of children j of the spine parent and the spine rank l.
    fn sample(&self, stream: &mut Stream) -> (usize, usize) {
        let u = stream.uniform();
        let (j, s) = match self {
            Row::Table { js, cdf, s } => {
                let k = cdf.partition_point(|c| *c <= u).min(js.len() - 1);
                (js[k], *s)
            }
            Row::Lf { atom, r, s, ratio } => {
                // P(j) = ratio (1 - atom)(1 - r) r^{j-1} (1 - s^j) / (1 - s).
                let base = ratio * (1.0 - atom) * (1.0 - r);
                let mut acc = 0.0;
                let mut j = 0;
                let mut rj = 1.0;
                let mut geo = 0.0;
                loop {
                    j += 1;
                    geo = geo * s + 1.0;
                    let p = base * rj * geo;
                    acc += p;
                    rj *= r;
                    if u < acc || p < 1e-300 || j > 100_000_000 {
                        break;
                    }
                }
                (j, *s)
            }
        };
        (j, sample_rank(j, s, stream.uniform()))
    }
}

/// Spine sampler for one environment and initial size.
#[derive(Debug, Clone)]
pub struct GeigerSampler {
    env: EnvSequence,
    z0: usize,
    ladder: ExtinctionLadder,
    rows: Vec<Row>,
    offspring: Vec<OffspringSampler>,
    population_cap: u64,
}

impl GeigerSampler {
    pub fn new(env: &EnvSequence, z0: usize) -> Result<Self> {
        if z0 == 0 {
            return Err(Error::Precondition("initial population must be >= 1".into()));
        }
        let ladder = ExtinctionLadder::new(env);
        if ladder.survival_from(z0) <= 0.0 {
            return Err(Error::NullEvent("survival probability is zero".into()));
        }
        let n = env.len();
        let rows = (1..=n)
            .map(|k| {
                let ratio = ladder.survival(k) / ladder.survival(k - 1);
                Row::new(env.law(k), ladder.extinction(k), ratio)
            })
            .collect();
        let offspring = env.laws().iter().map(OffspringSampler::new).collect();
        Ok(GeigerSampler {
            env: env.clone(),
            z0,
            ladder,
            rows,
            offspring,
            population_cap: POPULATION_CAP,
        })
    }

    pub fn with_population_cap(mut self, cap: u64) -> Self {
        self.population_cap = cap;
        self
    }

    pub fn env(&self) -> &EnvSequence {
        &self.env
    }

    pub fn ladder(&self) -> &ExtinctionLadder {
        &self.ladder
    }

    /// P(Z_n > 0 | Z_0 = z0, env).
    pub fn survival(&self) -> f64 {
        self.ladder.survival_from(self.z0)
    }

    fn root_rank(&self, stream: &mut Stream) -> usize {
        sample_rank(self.z0, self.ladder.extinction(0), stream.uniform())
    }

    /// Ŷ_k and the spine rank at generation k >= 1.
    fn row(&self, k: usize, stream: &mut Stream) -> (usize, usize) {
        let (j, l) = self.rows[k - 1].sample(stream);
        (j - l, l)
    }

    /// Samples the spine and all side subtrees.
    pub fn sample(&self, stream: &mut Stream) -> Result<SpineSample> {
        Ok(self.sample_inner(stream, false)?.0)
    }

    /// As [`GeigerSampler::sample`], also returning the genealogy of the
    /// spine and the side subtrees. The spine is label 0 in every
    /// generation; individuals left of the spine are not represented.
    pub fn sample_tree(&self, stream: &mut Stream) -> Result<(SpineSample, super::GenealogyTree)> {
        let (sample, parents) = self.sample_inner(stream, true)?;
        let tree = super::GenealogyTree::from_parents(1 + sample.right_counts[0], parents)?;
        Ok((sample, tree))
    }

    fn sample_inner(
        &self,
        stream: &mut Stream,
        record: bool,
    ) -> Result<(SpineSample, Vec<Vec<u32>>)> {
        let n = self.env.len();
        let l0 = self.root_rank(stream);
        let y0 = self.z0 - l0;
        let mut ranks = vec![l0];
        let mut right_counts = vec![y0];
        let mut subtree_sizes: Vec<Vec<u64>> = vec![vec![y0 as u64]];
        // Subtree id of each non-spine individual of the current generation.
        let mut side: Vec<u32> = vec![0; y0];
        let mut parents = Vec::new();
        for k in 1..=n {
            let (y, l) = self.row(k, stream);
            ranks.push(l);
            right_counts.push(y);
            let off = &self.offspring[k - 1];
            let mut next: Vec<u32> = vec![k as u32; y];
            let mut gen_parents: Vec<u32> = if record { vec![0; 1 + y] } else { Vec::new() };
            let mut counts = vec![0u64; k];
            for (i, &id) in side.iter().enumerate() {
                let c = off.sample(stream) as usize;
                next.extend(std::iter::repeat(id).take(c));
                counts[id as usize] += c as u64;
                if record {
                    gen_parents.extend(std::iter::repeat(i as u32 + 1).take(c));
                }
                if next.len() as u64 > self.population_cap {
                    return Err(Error::Explosive {
                        population: next.len() as u64,
                        cap: self.population_cap,
                        generation: k,
                    });
                }
            }
            for (id, c) in counts.into_iter().enumerate() {
                subtree_sizes[id].push(c);
            }
            subtree_sizes.push(vec![y as u64]);
            side = next;
            if record {
                parents.push(gen_parents);
            }
        }
        Ok((SpineSample { z0: self.z0, ranks, right_counts, subtree_sizes }, parents))
    }

    /// Sampler of (Z_n, MRCA_n) that draws each Ẑ^{(k)}_n directly from the
    /// law of f_{k,n}(s)^{Ŷ_k} truncated at `max_size`.
    pub fn endpoint_sampler(&self, max_size: usize) -> Result<GeigerEndpointSampler<'_>> {
        let mut series = suffix_series(&self.env, max_size)?;
        series.reverse();
        Ok(GeigerEndpointSampler { base: self, series, max_size })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EndpointSample {
    /// Z_n, or `None` when it exceeds the sampler's maximal size.
    pub z_n: Option<usize>,
    /// MRCA_n, when Z_n is known and the tree is not a forest.
    pub mrca: Option<usize>,
}

pub struct GeigerEndpointSampler<'a> {
    base: &'a GeigerSampler,
    /// series[k] = f_{k,n} truncated at `max_size`.
    series: Vec<TruncatedPgf>,
    max_size: usize,
}

impl GeigerEndpointSampler<'_> {
    fn horizon_size(&self, k: usize, y: usize, stream: &mut Stream) -> Option<usize> {
        let law = self.series[k].power(y);
        let u = stream.uniform();
        let mut acc = 0.0;
        for (x, p) in law.coeffs().iter().enumerate() {
            acc += p;
            if u < acc {
                return Some(x);
            }
        }
        None
    }

    /// Draws Z_n and MRCA_n under the conditioned law, stopping as soon as
    /// Z_n is known to exceed the maximal size.
    pub fn sample(&self, stream: &mut Stream) -> EndpointSample {
        let over = EndpointSample { z_n: None, mrca: None };
        let n = self.base.env.len();
        let y0 = self.base.z0 - self.base.root_rank(stream);
        let mut total = 1usize;
        let mut forest = false;
        if y0 > 0 {
            match self.horizon_size(0, y0, stream) {
                None => return over,
                Some(x) => {
                    total += x;
                    forest = x > 0;
                }
            }
        }
        let mut first = None;
        for k in 1..=n {
            let (y, _) = self.base.row(k, stream);
            let x = if k == n || y == 0 {
                y
            } else {
                match self.horizon_size(k, y, stream) {
                    None => return over,
                    Some(x) => x,
                }
            };
            if x > 0 && first.is_none() {
                first = Some(k);
            }
            total += x;
            if total > self.max_size {
                return over;
            }
        }
        let mrca = (!forest).then(|| first.map_or(1, |k| n - k + 1));
        EndpointSample { z_n: Some(total), mrca }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quenched::{phi_n, quenched_law};
    use crate::spine::mrca;

    fn fin(p: &[f64]) -> OffspringLaw {
        OffspringLaw::finite(p.to_vec()).unwrap()
    }

    #[test]
    fn one_step_uniform() {
        let env = EnvSequence::new(vec![fin(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])]).unwrap();
        let g = GeigerSampler::new(&env, 1).unwrap();
        let n = 100_000;
        let mut twos = 0;
        for i in 0..n {
            let s = g.sample(&mut Stream::new(5, i)).unwrap();
            match s.z_n() {
                1 => {}
                2 => twos += 1,
                other => panic!("impossible size {other}"),
            }
        }
        let f = twos as f64 / n as f64;
        assert!((f - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn zero_roots_rejected() {
        let env = EnvSequence::new(vec![fin(&[0.5, 0.5])]).unwrap();
        assert!(matches!(GeigerSampler::new(&env, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn spine_event_frequency_matches_phi() {
        // Spine event: every side subtree dead at n and the spine parent has
        // exactly z0 children at the last step.
        let env = EnvSequence::new(vec![
            fin(&[0.2, 0.3, 0.5]),
            fin(&[0.3, 0.3, 0.4]),
            fin(&[0.25, 0.25, 0.25, 0.25]),
        ])
        .unwrap();
        for z0 in 1..=2 {
            let g = GeigerSampler::new(&env, z0).unwrap();
            let target = phi_n(&env, z0).unwrap() / g.survival();
            let n = 100_000;
            let hits = (0..n)
                .filter(|&i| {
                    let s = g.sample(&mut Stream::new(9, i)).unwrap();
                    (0..3).all(|k| s.subtree_at_horizon(k) == 0) && s.right_counts[3] == z0 - 1
                })
                .count();
            let f = hits as f64 / n as f64;
            let se = (target * (1.0 - target) / n as f64).sqrt();
            assert!((f - target).abs() < 3.0 * se, "z0={z0} f={f} target={target}");
        }
    }

    #[test]
    fn tree_agrees_with_sample() {
        let env = EnvSequence::new(vec![
            fin(&[0.2, 0.3, 0.5]),
            OffspringLaw::linear_fractional(1.5, 3.0).unwrap(),
            fin(&[0.1, 0.4, 0.5]),
            fin(&[0.3, 0.2, 0.5]),
        ])
        .unwrap();
        let g = GeigerSampler::new(&env, 1).unwrap();
        for i in 0..2000 {
            let (s, t) = g.sample_tree(&mut Stream::new(2, i)).unwrap();
            assert_eq!(t.size(4) as u64, s.z_n());
            assert_eq!(mrca(&t).unwrap(), s.mrca().unwrap());
        }
    }

    #[test]
    fn endpoint_law_matches_exact() {
        let env = EnvSequence::new(vec![
            fin(&[0.2, 0.3, 0.5]),
            fin(&[0.3, 0.3, 0.4]),
            OffspringLaw::linear_fractional(1.2, 2.0).unwrap(),
        ])
        .unwrap();
        let g = GeigerSampler::new(&env, 1).unwrap();
        let e = g.endpoint_sampler(3).unwrap();
        let exact = quenched_law(&env, 1, 3).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        for i in 0..n {
            if let Some(z) = e.sample(&mut Stream::new(4, i)).z_n {
                counts[z] += 1;
            }
        }
        for z in 1..=3 {
            let p = exact.prob(z).unwrap() / exact.survival;
            let f = counts[z] as f64 / n as f64;
            assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt(), "z={z}");
        }
    }
}
