use proptest::prelude::*;

use bpre::annealed::annealed_pmf;
use bpre::lf::{lf_quenched_pmf, LfQuenchedState};
use bpre::pgf::TruncatedPgf;
use bpre::quenched::{phi_n, quenched_law, quenched_pmf, subtree_extinction_identity};
use bpre::{EnvSequence, EnvironmentModel, OffspringLaw};

fn normalised(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let last = p.len() - 1;
    p[last] = 1.0 - p[..last].iter().sum::<f64>();
    p
}

fn finite_law(max_len: usize) -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec(0.01f64..1.0, 2..=max_len)
        .prop_map(|raw| OffspringLaw::finite(normalised(raw)).unwrap())
}

fn lf_law() -> impl Strategy<Value = OffspringLaw> {
    (0.3f64..3.0, 0.0f64..2.0).prop_map(|(m, extra)| {
        let min_b = (2.0 * m * (m - 1.0)).max(0.0);
        OffspringLaw::linear_fractional(m, min_b + extra).unwrap()
    })
}

fn any_law() -> impl Strategy<Value = OffspringLaw> {
    prop_oneof![finite_law(4), lf_law()]
}

fn env(max_len: usize) -> impl Strategy<Value = EnvSequence> {
    prop::collection::vec(any_law(), 1..=max_len).prop_map(|laws| EnvSequence::new(laws).unwrap())
}

/// Truncated series whose coefficients sum to at most one.
fn sub_pgf(degree: usize) -> impl Strategy<Value = TruncatedPgf> {
    (prop::collection::vec(0.0f64..1.0, degree + 1), 0.0f64..0.2).prop_map(|(raw, missing)| {
        let total: f64 = raw.iter().sum::<f64>().max(1e-9);
        TruncatedPgf::from_coeffs(raw.iter().map(|c| c / total * (1.0 - missing)).collect()).unwrap()
    })
}

fn two_state_model() -> impl Strategy<Value = EnvironmentModel> {
    (finite_law(4), finite_law(4), 0.1f64..0.9)
        .prop_map(|(a, b, w)| EnvironmentModel::new(vec![a, b], vec![w, 1.0 - w]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compose_is_associative(f in sub_pgf(12), g in sub_pgf(12), h in sub_pgf(12)) {
        let left = f.compose(&g).compose(&h);
        let right = f.compose(&g.compose(&h));
        let tol = 2.0 * left.tail_mass().max(right.tail_mass()) + 1e-12;
        for (a, b) in left.coeffs().iter().zip(right.coeffs()) {
            prop_assert!((a - b).abs() <= tol, "{a} vs {b}, tol {tol}");
        }
    }

    #[test]
    fn quenched_law_mass_is_accounted(env in env(6), z0 in 1usize..4, degree in 1usize..40) {
        let law = quenched_law(&env, z0, degree).unwrap();
        prop_assert!(law.pmf.coeffs().iter().all(|c| *c >= 0.0));
        let total: f64 = law.pmf.coeffs().iter().sum();
        prop_assert!(total >= 1.0 - law.pmf.tail_mass() - 1e-12);
        prop_assert!(law.pmf.tail_mass() >= -1e-12);
    }

    #[test]
    fn annealed_pmf_is_supermultiplicative(model in two_state_model(), n in 1usize..6, m in 1usize..6) {
        let z0 = 1;
        let joint = annealed_pmf(&model, z0, n + m, z0).unwrap();
        let split = annealed_pmf(&model, z0, n, z0).unwrap() * annealed_pmf(&model, z0, m, z0).unwrap();
        prop_assert!(joint >= split * (1.0 - 1e-12), "{joint} < {split}");
    }

    #[test]
    fn spine_event_is_a_sub_event(env in env(7), z0 in 1usize..4) {
        let phi = phi_n(&env, z0).unwrap();
        let p = quenched_pmf(&env, z0, z0).unwrap();
        prop_assert!(phi <= p * (1.0 + 1e-12) + 1e-300, "phi {phi} > P {p}");
    }

    #[test]
    fn subtree_extinction_identity_holds(env in env(8), z in 1usize..4) {
        prop_assume!(env.laws().iter().all(|l| l.zero_prob() < 1.0));
        let (lhs, rhs) = subtree_extinction_identity(&env, z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn engine_matches_lf_closed_form(
        laws in prop::collection::vec(lf_law(), 1..8),
        z0 in 1usize..4,
        degree in 2usize..30,
    ) {
        let env = EnvSequence::new(laws).unwrap();
        let state = LfQuenchedState::from_env(&env).unwrap();
        let law = quenched_law(&env, z0, degree).unwrap();
        let tol = law.pmf.tail_mass().abs() + 1e-12;
        for j in 0..=degree {
            let closed = lf_quenched_pmf(&state, z0, j).unwrap();
            let engine = law.prob(j).unwrap();
            prop_assert!((closed - engine).abs() <= tol, "j={j}: {closed} vs {engine}");
        }
    }
}
