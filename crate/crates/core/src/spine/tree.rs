use serde::Serialize;

use super::{ModelSampler, Provenance, Stream, POPULATION_CAP};
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};

/// Genealogy stored as parent arrays per generation.
///
/// Individuals of a generation are labelled 0, 1, ... from left to right in
/// breadth-first order; `parents[k - 1][i]` is the label in generation k - 1
/// of the parent of individual i of generation k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenealogyTree {
    root_count: usize,
    parents: Vec<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl GenealogyTree {
    /// Builds a tree from explicit parent arrays, checking that labels are in
    /// range and that siblings are contiguous (breadth-first labelling).
    pub fn from_parents(root_count: usize, parents: Vec<Vec<u32>>) -> Result<Self> {
        let mut prev = root_count;
        for (k, gen) in parents.iter().enumerate() {
            if gen.iter().any(|&p| p as usize >= prev) {
                return Err(Error::Precondition(format!(
                    "generation {} has a parent label outside [0, {prev})",
                    k + 1
                )));
            }
            if gen.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Precondition(format!(
                    "generation {} is not in breadth-first order",
                    k + 1
                )));
            }
            prev = gen.len();
        }
        Ok(GenealogyTree { root_count, parents, provenance: None })
    }

    /// Number of generations after the roots.
    pub fn depth(&self) -> usize {
        self.parents.len()
    }

    pub fn size(&self, k: usize) -> usize {
        if k == 0 {
            self.root_count
        } else {
            self.parents[k - 1].len()
        }
    }

    pub fn sizes(&self) -> Vec<u64> {
        (0..=self.depth()).map(|k| self.size(k) as u64).collect()
    }

    /// Parent labels of generation k >= 1.
    pub fn parents(&self, k: usize) -> &[u32] {
        &self.parents[k - 1]
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }
}

/// Forward simulation with parent bookkeeping.
pub fn simulate_tree(
    model: &EnvironmentModel,
    z0: u64,
    n: usize,
    stream: &mut Stream,
) -> Result<GenealogyTree> {
    simulate_tree_with(model, z0, n, stream, POPULATION_CAP)
}

pub fn simulate_tree_with(
    model: &EnvironmentModel,
    z0: u64,
    n: usize,
    stream: &mut Stream,
    cap: u64,
) -> Result<GenealogyTree> {
    let sampler = ModelSampler::new(model);
    let mut parents = Vec::with_capacity(n);
    let mut z = z0 as usize;
    for generation in 1..=n {
        let state = sampler.state(stream);
        let off = sampler.offspring(state);
        let mut gen = Vec::new();
        for parent in 0..z {
            let c = off.sample(stream);
            if gen.len() as u64 + c > cap {
                return Err(Error::Explosive { population: gen.len() as u64 + c, cap, generation });
            }
            gen.extend(std::iter::repeat(parent as u32).take(c as usize));
        }
        z = gen.len();
        parents.push(gen);
    }
    Ok(GenealogyTree { root_count: z0 as usize, parents, provenance: Some(stream.provenance()) })
}

/// MRCA_n: the least k such that all individuals of generation n descend
/// from one individual of generation n - k.
pub fn mrca(tree: &GenealogyTree) -> Result<usize> {
    let n = tree.depth();
    if n == 0 {
        return Err(Error::Precondition("MRCA needs at least one generation".into()));
    }
    let zn = tree.size(n);
    if zn == 0 {
        return Err(Error::NoSurvivors(n));
    }
    let mut current: Vec<u32> = (0..zn as u32).collect();
    for k in 1..=n {
        // Parents of a sorted label set are sorted, so dedup is enough.
        let parents = tree.parents(n - k + 1);
        let mut next: Vec<u32> = current.iter().map(|&i| parents[i as usize]).collect();
        next.dedup();
        if next.len() == 1 {
            return Ok(k);
        }
        current = next;
    }
    Err(Error::Forest(current.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OffspringLaw;
    use crate::spine::simulate_forward;

    #[test]
    fn cherry_at_root() {
        // Root with two children, each line continuing alone to n = 4.
        let t = GenealogyTree::from_parents(1, vec![vec![0, 0], vec![0, 1], vec![0, 1], vec![0, 1]])
            .unwrap();
        assert_eq!(mrca(&t).unwrap(), 4);
    }

    #[test]
    fn single_survivor() {
        let t = GenealogyTree::from_parents(1, vec![vec![0, 0], vec![1], vec![0]]).unwrap();
        assert_eq!(mrca(&t).unwrap(), 1);
    }

    #[test]
    fn extinct_and_forest() {
        let t = GenealogyTree::from_parents(1, vec![vec![0], vec![]]).unwrap();
        assert!(matches!(mrca(&t), Err(Error::NoSurvivors(2))));
        let f = GenealogyTree::from_parents(2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert!(matches!(mrca(&f), Err(Error::Forest(2))));
    }

    #[test]
    fn tree_sizes_follow_forward_sizes_on_same_stream() {
        let model = EnvironmentModel::new(
            vec![
                OffspringLaw::finite(vec![0.2, 0.3, 0.5]).unwrap(),
                OffspringLaw::linear_fractional(1.5, 3.0).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        for rep in 0..50 {
            let a = simulate_forward(&model, 2, 8, &mut Stream::new(11, rep)).unwrap();
            let b = simulate_tree(&model, 2, 8, &mut Stream::new(11, rep)).unwrap();
            assert_eq!(a.sizes, b.sizes());
        }
    }

    #[test]
    fn path_tree() {
        let model = EnvironmentModel::single(OffspringLaw::finite(vec![0.0, 1.0]).unwrap()).unwrap();
        let t = simulate_tree(&model, 1, 6, &mut Stream::new(3, 0)).unwrap();
        assert!(t.sizes().iter().all(|z| *z == 1));
        assert_eq!(mrca(&t).unwrap(), 1);
    }
}
