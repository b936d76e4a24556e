mod common;

use proptest::prelude::*;

use bpre::annealed::fekete_bounds;
use bpre::lf::{agresti_survival_bounds, lf_derivative, lf_fgen, lf_quenched_pmf, lf_rho, LfQuenchedState};
use bpre::quenched::ExtinctionLadder;
use bpre::{EnvSequence, OffspringLaw};

fn lf_law() -> impl Strategy<Value = OffspringLaw> {
    (0.3f64..3.0, 0.0f64..2.0).prop_map(|(m, extra)| {
        let min_b = (2.0 * m * (m - 1.0)).max(0.0);
        OffspringLaw::linear_fractional(m, min_b + extra).unwrap()
    })
}

fn lf_env(max_len: usize) -> impl Strategy<Value = EnvSequence> {
    prop::collection::vec(lf_law(), 1..=max_len).prop_map(|laws| EnvSequence::new(laws).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn composition_is_a_semigroup(first in lf_env(10), second in lf_env(10)) {
        let a = LfQuenchedState::from_env(&first).unwrap();
        let b = LfQuenchedState::from_env(&second).unwrap();
        let mut laws = first.laws().to_vec();
        laws.extend_from_slice(second.laws());
        let whole = LfQuenchedState::from_env(&EnvSequence::new(laws).unwrap()).unwrap();
        let joined = a.then(&b);
        prop_assert!((joined.s_exp - whole.s_exp).abs() <= 1e-12 * whole.s_exp.max(1.0));
        prop_assert!((joined.eta_sum - whole.eta_sum).abs() <= 1e-12 * whole.eta_sum.max(1.0));
    }

    #[test]
    fn single_root_law_is_geometric(env in lf_env(12)) {
        let state = LfQuenchedState::from_env(&env).unwrap();
        let p1 = lf_quenched_pmf(&state, 1, 1).unwrap();
        prop_assume!(p1 > 1e-200);
        let ratio = lf_quenched_pmf(&state, 1, 2).unwrap() / p1;
        for j in 2..10 {
            let pj = lf_quenched_pmf(&state, 1, j).unwrap();
            prop_assume!(pj > 1e-250);
            let r = lf_quenched_pmf(&state, 1, j + 1).unwrap() / pj;
            prop_assert!((r - ratio).abs() <= 1e-10, "j={j}: {r} vs {ratio}");
        }
    }

    #[test]
    fn derivative_bound(env in lf_env(12)) {
        let state = LfQuenchedState::from_env(&env).unwrap();
        let s_n = *env.walk().last().unwrap();
        let survival = 1.0 - lf_fgen(&state, 0.0);
        let rhs = (-s_n).exp() * survival * survival;
        for s in [0.0, 0.3, 0.9] {
            let lhs = lf_derivative(&state, s) * (1.0 - s) * (1.0 - s);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12), "s={s}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn survival_bounds_bracket_exact_value(env in lf_env(12)) {
        let bounds = agresti_survival_bounds(&env);
        let exact = ExtinctionLadder::new(&env).survival(0);
        let lf = bounds.lf_exact.unwrap();
        prop_assert!((lf - exact).abs() <= 1e-12);
        prop_assert!(bounds.lower <= exact * (1.0 + 1e-12));
        prop_assert!(exact <= bounds.upper * (1.0 + 1e-12));
    }
}

#[test]
fn closed_form_rate_is_below_fekete_bounds() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let model = common::random_lf_model(&mut rng);
        let rho = lf_rho(&model).unwrap().rho;
        let table = fekete_bounds(&model, 1, 14).unwrap();
        for row in &table.rows {
            assert!(rho <= row.a_n_over_n + 1e-9, "n={}: {rho} > {}", row.n, row.a_n_over_n);
        }
    }
}
