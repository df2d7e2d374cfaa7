mod common;

use approx::assert_abs_diff_eq;
use common::{min_eigenvalue, random_model, random_pmf, random_point, rng, Oracle};
use proptest::prelude::*;
use steering_core::kernels::*;

fn shifted(model: &ConditionalModel, x: StateAction, row: CategoricalPmf) -> ConditionalModel {
    let mut m = model.clone();
    m.set_row(x, row).unwrap();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kernel_matches_coefficient_oracle(seed in any::<u64>(), s in 2usize..7, a in 1usize..4,
                                          xs in 0.2f64..3.0, ys in 0.2f64..3.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r, s, a);
        let scales = KernelScales { x: xs, y: ys };
        let ctx = SteinContext::new(&model, scales).unwrap();
        let oracle = Oracle::new(&model, xs, ys);
        let p = random_point(&mut r, s, a);
        let q = random_point(&mut r, s, a);
        let got = stein_kernel(&ctx, p, q).unwrap();
        let want = oracle.kernel(p, q);
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
        prop_assert_eq!(got, stein_kernel(&ctx, q, p).unwrap());
    }

    #[test]
    fn vstat_matches_naive_double_sum(seed in any::<u64>(), n in 1usize..12) {
        let mut r = rng(seed);
        let model = random_model(&mut r, 4, 2);
        let ctx = SteinContext::new(&model, KernelScales::default()).unwrap();
        let samples: Vec<_> = (0..n).map(|_| random_point(&mut r, 4, 2)).collect();
        let got = dsd_vstat(&ctx, &samples).unwrap();
        let want = Oracle::new(&model, 1.0, 1.0).vstat(&samples);
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()));
        prop_assert!(got >= -1e-9);
    }

    #[test]
    fn cyclic_shift_is_a_bijection(s in 2usize..=64) {
        let mut seen = vec![false; s];
        for y in 0..s {
            let n = cyclic_next(y, s).unwrap();
            prop_assert!(!seen[n]);
            seen[n] = true;
            prop_assert_eq!(cyclic_prev(n, s).unwrap(), y);
        }
    }
}

#[test]
fn stein_feature_averages_to_zero_under_the_model() {
    let mut r = rng(11);
    for s in [2, 3, 5, 8] {
        let model = random_model(&mut r, s, 2);
        let ctx = SteinContext::new(&model, KernelScales { x: 1.0, y: 0.7 }).unwrap();
        for state in 0..s {
            for action in 0..2 {
                let x = StateAction::new(state, action);
                for probe in 0..s {
                    let mut total = 0.0;
                    for (y, p) in model.row(x).probs().iter().enumerate() {
                        total += p * stein_feature(&ctx, x, y, probe).unwrap();
                    }
                    assert_abs_diff_eq!(total, 0.0, epsilon = 1e-10);
                }
            }
        }
    }
}

#[test]
fn population_matches_oracle_and_vanishes_at_truth() {
    let mut r = rng(12);
    for s in [2, 3, 5] {
        let model = random_model(&mut r, s, 1);
        let ctx = SteinContext::new(&model, KernelScales::default()).unwrap();
        let oracle = Oracle::new(&model, 1.0, 1.0);
        let x = StateAction::new(0, 0);
        let own = model.row(x).clone();
        assert_abs_diff_eq!(
            dsd_population_at_x(&ctx, &own, x).unwrap(),
            0.0,
            epsilon = 1e-10
        );
        let truth = random_pmf(&mut r, s, 1e-3);
        let got = dsd_population_at_x(&ctx, &truth, x).unwrap();
        assert_abs_diff_eq!(got, oracle.population(0, 0, truth.probs()), epsilon = 1e-10);
    }
}

#[test]
fn two_state_population_is_positive_and_shrinks_toward_truth() {
    let truth = CategoricalPmf::new(vec![0.5, 0.5]).unwrap();
    let x = StateAction::new(0, 0);
    let at = |w: f64| {
        let row = CategoricalPmf::new(vec![0.8 * (1.0 - w) + 0.5 * w, 0.2 * (1.0 - w) + 0.5 * w])
            .unwrap();
        let model = ConditionalModel::new(2, 1, vec![row.clone(), row]).unwrap();
        let ctx = SteinContext::new(&model, KernelScales::default()).unwrap();
        let v = dsd_population_at_x(&ctx, &truth, x).unwrap();
        assert_abs_diff_eq!(
            v,
            Oracle::new(&model, 1.0, 1.0).population(0, 0, truth.probs()),
            epsilon = 1e-12
        );
        v
    };
    let (v0, v_half, v1) = (at(0.0), at(0.5), at(1.0));
    assert!(v0 > 1e-3);
    assert!(v_half <= v0);
    assert!(v1 <= v_half);
    assert_abs_diff_eq!(v1, 0.0, epsilon = 1e-12);
}

#[test]
fn uniform_self_kernel_is_two_minus_two_over_e() {
    for s in 3..8 {
        let model = ConditionalModel::uniform(s, 2);
        let ctx = SteinContext::new(&model, KernelScales::default()).unwrap();
        let p = SamplePoint::new(1, 1, 2);
        assert_abs_diff_eq!(
            stein_kernel(&ctx, p, p).unwrap(),
            2.0 - 2.0 * (-1.0f64).exp(),
            epsilon = 1e-14
        );
    }
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut r = rng(13);
    for case in 0..60 {
        let (s, a) = (2 + case % 5, 1 + case % 3);
        let model = random_model(&mut r, s, a);
        let ctx = SteinContext::new(
            &model,
            KernelScales {
                x: 0.5 + (case % 4) as f64,
                y: 1.0,
            },
        )
        .unwrap();
        let n = 1 + case % 20;
        let pts: Vec<_> = (0..n).map(|_| random_point(&mut r, s, a)).collect();
        let gram = gram_matrix(&ctx, &pts).unwrap();
        assert!(min_eigenvalue(&gram, n) >= -1e-8, "case {case}");
    }
}

#[test]
fn discrepancy_separates_distant_rows() {
    let mut r = rng(14);
    let mut checked = 0;
    while checked < 100 {
        let s = [2, 3, 5][checked % 3];
        let model = random_model(&mut r, s, 1);
        let truth = random_pmf(&mut r, s, 1e-3);
        let x = StateAction::new(0, 0);
        if model.row(x).total_variation(&truth) <= 0.05 {
            continue;
        }
        let ctx = SteinContext::new(&model, KernelScales::default()).unwrap();
        assert!(dsd_population_at_x(&ctx, &truth, x).unwrap() > 1e-6);
        checked += 1;
    }
}

#[test]
fn ustat_drops_the_diagonal() {
    let mut r = rng(15);
    let model = random_model(&mut r, 3, 2);
    let ctx = SteinContext::new(&model, KernelScales::default()).unwrap();
    let oracle = Oracle::new(&model, 1.0, 1.0);
    let pts: Vec<_> = (0..9).map(|_| random_point(&mut r, 3, 2)).collect();
    let mut off = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for (j, q) in pts.iter().enumerate() {
            if i != j {
                off += oracle.kernel(*p, *q);
            }
        }
    }
    let got = dsd_estimate(&ctx, &pts, Statistic::U).unwrap();
    assert_abs_diff_eq!(got, off / 72.0, epsilon = 1e-10);
    assert!(matches!(
        dsd_vstat(&ctx, &[]),
        Err(steering_core::Error::EmptyDictionary)
    ));
}

#[test]
fn shifting_one_row_moves_only_its_pair() {
    let mut r = rng(16);
    let model = random_model(&mut r, 4, 2);
    let x = StateAction::new(2, 1);
    let other = shifted(&model, x, CategoricalPmf::uniform(4));
    let truth = model.row(StateAction::new(0, 0)).clone();
    let a = dsd_population_at_x(
        &SteinContext::new(&model, KernelScales::default()).unwrap(),
        &truth,
        StateAction::new(0, 0),
    );
    let b = dsd_population_at_x(
        &SteinContext::new(&other, KernelScales::default()).unwrap(),
        &truth,
        StateAction::new(0, 0),
    );
    assert_eq!(a.unwrap(), b.unwrap());
}
