//! Exact annealed probabilities by enumeration of environment sequences.
//!
//! The sequences of length <= n_max form a tree whose node at depth d is a
//! sequence (q_{n-d+1}, ..., q_n) read from the end. Since the environment is
//! i.i.d., every such suffix is equally a full sequence of length d, so a
//! single depth-first sweep that carries f_{n-d,n} down the tree yields the
//! annealed law at every horizon d <= n_max, with one law application per
//! node.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::pgf::{apply_law, TruncatedPgf};
use crate::quenched::{quenched_mrca_pair_law, EnvSequence};

/// Largest number of sequences of the maximal length that enumeration visits.
pub const ENUMERATION_BUDGET: u64 = 1 << 26;

/// Default cap for the closure computation.
pub const CLOSURE_CAP: usize = 64;

/// Minimum number of subtrees handed to the thread pool.
const SPLIT_WIDTH: usize = 64;

pub(crate) fn check_budget(states: usize, depth: usize) -> Result<()> {
    let sequences = (states as f64).powi(depth as i32);
    if sequences > ENUMERATION_BUDGET as f64 {
        return Err(Error::BudgetExceeded { sequences, budget: ENUMERATION_BUDGET });
    }
    Ok(())
}

/// Depth-first enumeration of all sequences of length 1..=depth_max over the
/// positive-weight states of `model`.
///
/// `extend(node, state)` builds a child node, `visit(depth, node, weight,
/// acc)` is called on every node at depth >= 1. The first levels are expanded
/// sequentially and the remaining subtrees are processed in parallel; partial
/// accumulators are merged in a fixed order so the result does not depend on
/// the number of threads.
pub(crate) fn enumerate<S, A>(
    model: &EnvironmentModel,
    depth_max: usize,
    root: S,
    extend: &(dyn Fn(&S, usize) -> S + Sync),
    visit: &(dyn Fn(usize, &S, f64, &mut A) + Sync),
    new_acc: &(dyn Fn() -> A + Sync),
    merge: &dyn Fn(&mut A, A),
) -> A
where
    S: Send + Sync,
    A: Send,
{
    let states: Vec<(usize, f64)> = model.support().map(|(i, _, w)| (i, w)).collect();
    let mut split = 0;
    let mut width = 1usize;
    while split < depth_max && width < SPLIT_WIDTH {
        split += 1;
        width = width.saturating_mul(states.len());
        if states.len() == 1 {
            split = depth_max;
            break;
        }
    }

    fn dfs<S, A>(
        states: &[(usize, f64)],
        node: &S,
        depth: usize,
        stop: usize,
        weight: f64,
        extend: &(dyn Fn(&S, usize) -> S + Sync),
        visit: &(dyn Fn(usize, &S, f64, &mut A) + Sync),
        acc: &mut A,
        frontier: &mut Option<&mut Vec<(S, usize, f64)>>,
    ) {
        for &(state, w) in states {
            let child = extend(node, state);
            let cw = weight * w;
            visit(depth + 1, &child, cw, acc);
            if depth + 1 < stop {
                dfs(states, &child, depth + 1, stop, cw, extend, visit, acc, frontier);
            } else if let Some(f) = frontier.as_deref_mut() {
                f.push((child, depth + 1, cw));
            }
        }
    }

    let mut acc = new_acc();
    if depth_max == 0 {
        return acc;
    }
    let mut frontier = Vec::new();
    dfs(&states, &root, 0, split, 1.0, extend, visit, &mut acc, &mut Some(&mut frontier));
    if split < depth_max {
        let parts: Vec<A> = frontier
            .par_iter()
            .map(|(node, depth, w)| {
                let mut local = new_acc();
                dfs(&states, node, *depth, depth_max, *w, extend, visit, &mut local, &mut None);
                local
            })
            .collect();
        for part in parts {
            merge(&mut acc, part);
        }
    }
    acc
}

/// Annealed P_{z0}(Z_n = j) for n = 0..=n_max and each requested j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealedTable {
    pub z0: usize,
    pub targets: Vec<usize>,
    /// probs[n][t] = P_{z0}(Z_n = targets[t]).
    pub probs: Vec<Vec<f64>>,
}

impl AnnealedTable {
    pub fn get(&self, n: usize, j: usize) -> Option<f64> {
        let t = self.targets.iter().position(|&x| x == j)?;
        self.probs.get(n).map(|row| row[t])
    }
}

pub fn annealed_table(
    model: &EnvironmentModel,
    z0: usize,
    targets: &[usize],
    n_max: usize,
) -> Result<AnnealedTable> {
    if z0 == 0 {
        return Err(Error::Precondition("initial population must be >= 1".into()));
    }
    check_budget(model.support().count(), n_max)?;
    let degree = targets.iter().copied().max().unwrap_or(0).max(1);
    let laws = model.laws();
    let root = TruncatedPgf::identity(degree)?;
    let width = targets.len();
    let extend = |g: &TruncatedPgf, state: usize| apply_law(&laws[state], g);
    let visit = |depth: usize, g: &TruncatedPgf, w: f64, acc: &mut Vec<Vec<f64>>| {
        let p = if z0 == 1 { g.clone() } else { g.power(z0) };
        for (t, &j) in targets.iter().enumerate() {
            acc[depth][t] += w * p.coeffs()[j];
        }
    };
    let new_acc = || vec![vec![0.0; width]; n_max + 1];
    let merge = |a: &mut Vec<Vec<f64>>, b: Vec<Vec<f64>>| {
        for (ra, rb) in a.iter_mut().zip(b) {
            for (x, y) in ra.iter_mut().zip(rb) {
                *x += y;
            }
        }
    };
    let mut probs = enumerate(model, n_max, root, &extend, &visit, &new_acc, &merge);
    for (t, &j) in targets.iter().enumerate() {
        probs[0][t] = if j == z0 { 1.0 } else { 0.0 };
    }
    Ok(AnnealedTable { z0, targets: targets.to_vec(), probs })
}

/// Annealed P_{z0}(Z_n = j).
pub fn annealed_pmf(model: &EnvironmentModel, z0: usize, n: usize, j: usize) -> Result<f64> {
    Ok(annealed_table(model, z0, &[j], n)?.probs[n][0])
}

/// Annealed P(Z_n = 2, MRCA = k | Z_0 = 1) for k = 1..=n (index k - 1).
pub fn annealed_mrca_pair_law(model: &EnvironmentModel, n: usize) -> Result<Vec<f64>> {
    check_budget(model.support().count(), n)?;
    let laws = model.laws();
    let extend = |path: &Vec<usize>, state: usize| {
        let mut p = path.clone();
        p.push(state);
        p
    };
    let visit = |depth: usize, path: &Vec<usize>, w: f64, acc: &mut Vec<f64>| {
        if depth == n {
            let env = EnvSequence::new(path.iter().map(|&i| laws[i].clone()).collect())
                .expect("model laws are valid");
            for (a, p) in acc.iter_mut().zip(quenched_mrca_pair_law(&env)) {
                *a += w * p;
            }
        }
    };
    let new_acc = || vec![0.0; n];
    let merge = |a: &mut Vec<f64>, b: Vec<f64>| {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    };
    Ok(enumerate(model, n, Vec::new(), &extend, &visit, &new_acc, &merge))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeketeRow {
    pub n: usize,
    /// -log P_{z0}(Z_n = z0); +infinity when the probability is zero.
    pub a_n: f64,
    pub a_n_over_n: f64,
    /// (a_n - a_{n/2}) / (n/2) for even n, a non-certified proxy for the rate.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeketeTable {
    pub z0: usize,
    pub rows: Vec<FeketeRow>,
}

impl FeketeTable {
    /// min_n a_n / n, a certified upper bound on the rate.
    pub fn upper_bound(&self) -> f64 {
        self.rows.iter().map(|r| r.a_n_over_n).fold(f64::INFINITY, f64::min)
    }

    /// Slope at the largest even n in the table.
    pub fn slope_estimate(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.slope)
    }

    pub fn a(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.a_n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,a_n,a_n_over_n,slope\n");
        for r in &self.rows {
            let slope = r.slope.map(|s| format!("{s:.15e}")).unwrap_or_default();
            out.push_str(&format!("{},{:.15e},{:.15e},{}\n", r.n, r.a_n, r.a_n_over_n, slope));
        }
        out
    }
}

/// a_n = -log P_{z0}(Z_n = z0) for n = 1..=n_max.
pub fn fekete_bounds(model: &EnvironmentModel, z0: usize, n_max: usize) -> Result<FeketeTable> {
    let table = annealed_table(model, z0, &[z0], n_max)?;
    let a: Vec<f64> = table.probs.iter().map(|row| -row[0].ln()).collect();
    let rows = (1..=n_max)
        .map(|n| FeketeRow {
            n,
            a_n: a[n],
            a_n_over_n: a[n] / n as f64,
            slope: (n % 2 == 0).then(|| (a[n] - a[n / 2]) / (n / 2) as f64),
        })
        .collect();
    Ok(FeketeTable { z0, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reachability {
    pub z0: usize,
    /// Elements of the closure in [1, cap].
    pub closure: BTreeSet<usize>,
    pub cap: usize,
    /// True when sizes above the cap were reachable and not explored.
    pub capped: bool,
}

/// z0 = min{j >= 1 : P(Q(j) > 0, Q(0) > 0) > 0} and the set of population
/// sizes reachable from it.
pub fn smallest_reachable(model: &EnvironmentModel, cap: usize) -> Result<Reachability> {
    let cap = cap.max(1);
    // Candidate starting sizes: j with some state giving both 0 and j.
    let mut starts = BTreeSet::new();
    let mut z0 = None;
    for (_, law, _) in model.support() {
        if law.zero_prob() <= 0.0 {
            continue;
        }
        let limit = law.max_support().unwrap_or(usize::MAX).min(cap);
        let first = (1..=law.max_support().unwrap_or(usize::MAX)).find(|&j| law.prob(j) > 0.0);
        if let Some(j) = first {
            z0 = Some(z0.map_or(j, |z: usize| z.min(j)));
        }
        for j in 1..=limit {
            if law.prob(j) > 0.0 {
                starts.insert(j);
            }
        }
    }
    let z0 = z0.ok_or(Error::NoExtinction)?;

    let supports: Vec<Vec<usize>> = model
        .support()
        .map(|(_, law, _)| (0..=cap).filter(|&j| law.prob(j) > 0.0).collect())
        .collect();
    let unbounded = model.support().any(|(_, law, _)| law.max_support().is_none());

    let mut closure = BTreeSet::new();
    let mut queue: Vec<usize> = starts.iter().copied().collect();
    let mut capped = unbounded && !queue.is_empty();
    closure.extend(queue.iter().copied());
    while let Some(k) = queue.pop() {
        for supp in &supports {
            // k-fold sumset of the support, restricted to [0, cap].
            let mut reach = vec![false; cap + 1];
            reach[0] = true;
            for _ in 0..k {
                let mut next = vec![false; cap + 1];
                for (x, _) in reach.iter().enumerate().filter(|(_, r)| **r) {
                    for &y in supp {
                        if x + y <= cap {
                            next[x + y] = true;
                        } else {
                            capped = true;
                        }
                    }
                }
                reach = next;
            }
            for (x, r) in reach.iter().enumerate().skip(1) {
                if *r && closure.insert(x) {
                    queue.push(x);
                }
            }
        }
    }
    Ok(Reachability { z0, closure, cap, capped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OffspringLaw;

    fn fin(p: &[f64]) -> OffspringLaw {
        OffspringLaw::finite(p.to_vec()).unwrap()
    }

    fn example1(r: f64, p: f64) -> EnvironmentModel {
        EnvironmentModel::new(vec![fin(&[0.0, 1.0]), fin(&[p, 0.0, 1.0 - p])], vec![r, 1.0 - r])
            .unwrap()
    }

    #[test]
    fn empty_environment_is_indicator() {
        let m = example1(0.3, 0.5);
        assert_eq!(annealed_pmf(&m, 2, 0, 2).unwrap(), 1.0);
        assert_eq!(annealed_pmf(&m, 2, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn gw_one_step() {
        let gw = EnvironmentModel::single(fin(&[0.25, 0.0, 0.75])).unwrap();
        assert_eq!(annealed_pmf(&gw, 1, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn example1_single_survivor() {
        let m = example1(0.3, 0.5);
        let t = annealed_table(&m, 1, &[1], 10).unwrap();
        for n in 0..=10 {
            assert!((t.probs[n][0] - 0.3f64.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn brute_force_agreement() {
        // Enumeration against a direct loop over all sequences.
        let m = EnvironmentModel::new(
            vec![fin(&[0.2, 0.3, 0.5]), OffspringLaw::linear_fractional(1.5, 3.0).unwrap()],
            vec![0.4, 0.6],
        )
        .unwrap();
        let n = 5;
        let mut direct = 0.0;
        for mask in 0..(1 << n) {
            let idx: Vec<usize> = (0..n).map(|i| (mask >> i) & 1).collect();
            let w: f64 = idx.iter().map(|&i| m.weights()[i]).product();
            let env = EnvSequence::from_indices(&m, &idx).unwrap();
            direct += w * crate::quenched::quenched_pmf(&env, 2, 3).unwrap();
        }
        let got = annealed_pmf(&m, 2, n, 3).unwrap();
        assert!((got - direct).abs() < 1e-15);
    }

    #[test]
    fn budget_guard() {
        let m = example1(0.3, 0.5);
        assert!(matches!(annealed_pmf(&m, 1, 27, 1), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn reachability_examples() {
        let r = smallest_reachable(&example1(0.3, 0.5), CLOSURE_CAP).unwrap();
        assert_eq!(r.z0, 2);
        let gw = EnvironmentModel::single(fin(&[0.25, 0.0, 0.75])).unwrap();
        let r = smallest_reachable(&gw, CLOSURE_CAP).unwrap();
        assert_eq!(r.z0, 2);
        assert!(!r.closure.contains(&1));
        assert!(r.closure.iter().all(|k| k % 2 == 0));
        assert!(r.closure.contains(&64));
        let full = EnvironmentModel::single(fin(&[0.2, 0.3, 0.5])).unwrap();
        let r = smallest_reachable(&full, CLOSURE_CAP).unwrap();
        assert_eq!(r.z0, 1);
        assert_eq!(r.closure, (1..=64).collect());
        let mono = EnvironmentModel::single(fin(&[0.0, 0.5, 0.5])).unwrap();
        assert!(matches!(smallest_reachable(&mono, CLOSURE_CAP), Err(Error::NoExtinction)));
    }

    #[test]
    fn lf_state_gives_z0_one() {
        let m = EnvironmentModel::single(OffspringLaw::linear_fractional(2.0, 8.0).unwrap()).unwrap();
        let r = smallest_reachable(&m, 16).unwrap();
        assert_eq!(r.z0, 1);
        assert!(r.capped);
    }

    #[test]
    fn mrca_pair_law_total() {
        let m = EnvironmentModel::new(
            vec![fin(&[0.3, 0.2, 0.5]), fin(&[0.1, 0.3, 0.6])],
            vec![0.5, 0.5],
        )
        .unwrap();
        let law = annealed_mrca_pair_law(&m, 6).unwrap();
        let total: f64 = law.iter().sum();
        assert!((total - annealed_pmf(&m, 1, 6, 2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn fekete_csv_header() {
        let gw = EnvironmentModel::single(fin(&[0.25, 0.0, 0.75])).unwrap();
        let t = fekete_bounds(&gw, 2, 4).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("n,a_n,a_n_over_n,slope\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
