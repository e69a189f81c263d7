use active_lasso::datagen::{standardize, Dataset};
use active_lasso::kkt::eligibility;
use active_lasso::model::{embed, gather, norm_inf};
use active_lasso::{
    kkt_residual, solve, ActiveSet, DesignMatrix, LossKind, ProblemInstance, SolverConfig, SolverKind,
};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn instance_strategy() -> impl Strategy<Value = ProblemInstance> {
    (1usize..8, 1usize..10, any::<bool>(), 0.01f64..2.0).prop_flat_map(|(n, d, logistic, eta)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d),
            prop::collection::vec(-2.0f64..2.0, n),
        )
            .prop_map(move |(values, target)| {
                let a = DesignMatrix::from_row_slice(n, d, &values).unwrap();
                if logistic {
                    let y = target.iter().map(|&t| f64::from(t > 0.0)).collect();
                    ProblemInstance::new(a, y, LossKind::LogisticNLL, eta).unwrap()
                } else {
                    ProblemInstance::new(a, target, LossKind::LeastSquaresHalf, eta).unwrap()
                }
            })
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn objective_dominates_smooth_part(
        (inst, x) in instance_strategy().prop_flat_map(|i| { let d = i.dim(); (Just(i), point(d)) })
    ) {
        let f = inst.smooth_value(&x).unwrap();
        let full = inst.full_objective(&x).unwrap();
        prop_assert!(full >= f);
        if x.iter().any(|&v| v != 0.0) {
            prop_assert!(full > f);
        }
        let zero = vec![0.0; inst.dim()];
        prop_assert_eq!(inst.full_objective(&zero).unwrap(), inst.smooth_value(&zero).unwrap());
    }

    #[test]
    fn objective_is_convex(
        (inst, x, z, lambda) in instance_strategy()
            .prop_flat_map(|i| { let d = i.dim(); (Just(i), point(d), point(d), 0.0f64..=1.0) })
    ) {
        let mix: Vec<f64> = x.iter().zip(&z).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let lhs = inst.full_objective(&mix).unwrap();
        let rhs = lambda * inst.full_objective(&x).unwrap()
            + (1.0 - lambda) * inst.full_objective(&z).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn restrict_and_embed_commute(
        (inst, mask, x) in instance_strategy().prop_flat_map(|i| {
            let d = i.dim();
            (Just(i), prop::collection::vec(any::<bool>(), d), point(d))
        })
    ) {
        let free: Vec<usize> = (0..inst.dim()).filter(|&j| mask[j]).collect();
        prop_assume!(!free.is_empty());
        let x_free = gather(&x, &free);
        let full = inst.full_objective(&embed(&x_free, &free, inst.dim()).unwrap()).unwrap();
        let sub = inst.restrict(&free).unwrap().full_objective(&x_free).unwrap();
        prop_assert!((full - sub).abs() <= 1e-12 * (1.0 + full.abs()));
    }

    #[test]
    fn eligibility_is_sorted(
        (inst, x) in instance_strategy().prop_flat_map(|i| { let d = i.dim(); (Just(i), point(d)) })
    ) {
        let pinned: Vec<usize> = (0..inst.dim()).filter(|&j| j % 2 == 0).collect();
        let mut x = x;
        for &j in &pinned {
            x[j] = 0.0;
        }
        let active = ActiveSet::new(pinned, inst.dim()).unwrap();
        let report = eligibility(&inst, &x, &active, 1e-8).unwrap();
        for w in report.entries.windows(2) {
            prop_assert!(
                w[0].magnitude > w[1].magnitude
                    || (w[0].magnitude == w[1].magnitude && w[0].index < w[1].index)
            );
        }
        for e in &report.entries {
            prop_assert!(active.contains(e.index));
            prop_assert!(e.magnitude > inst.eta());
        }
    }

    #[test]
    fn kkt_at_zero_is_gradient_excess(inst in instance_strategy()) {
        let zero = vec![0.0; inst.dim()];
        let g = norm_inf(&inst.smooth_gradient(&zero).unwrap());
        let r = kkt_residual(&inst, &zero).unwrap();
        prop_assert!((r - (g - inst.eta()).max(0.0)).abs() <= 1e-12 * (1.0 + g));
    }

    #[test]
    fn tight_solves_satisfy_kkt(inst in instance_strategy(), which in 0usize..3) {
        let kind = match SolverKind::ALL[which] {
            k if k.supports(inst.kind()) => k,
            _ => SolverKind::CoordinateDescent,
        };
        let x = solve(&inst, &ActiveSet::empty(), &vec![0.0; inst.dim()], &SolverConfig::tight(kind))
            .unwrap()
            .x;
        prop_assert!(kkt_residual(&inst, &x).unwrap() <= 1e-4 * inst.eta());
    }
}

#[test]
fn standardize_is_idempotent() {
    let a = DesignMatrix::from_row_slice(
        4,
        2,
        &[1.0, 10.0, 2.0, 20.0, 3.0, 5.0, 6.0, 1.0],
    )
    .unwrap();
    let ds = Dataset::new(a, vec![1.0, 2.0, 0.5, -1.0], LossKind::LeastSquaresHalf).unwrap();
    let (once, _) = standardize(&ds, &[]).unwrap();
    let (_, again) = standardize(&once[0], &[]).unwrap();
    for (&m, &s) in again.column_means.iter().zip(&again.column_sds) {
        assert!(m.abs() < 1e-12);
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
    }
    assert!(again.response_mean.abs() < 1e-12);
}
