use proptest::prelude::*;
use ratact_core::network::{ActivationKind, Mlp, MlpSpec, ParamKind};
use ratact_core::{Matrix, RationalParams};

fn constrained() -> impl Strategy<Value = RationalParams> {
    (1usize..6, 0usize..4, 0.5f64..4.0).prop_flat_map(|(n, m, c)| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, m),
        )
            .prop_map(move |(a, b)| RationalParams::constrained(a, b, c, n as u32 + 1).unwrap())
    })
}

fn any_variant() -> impl Strategy<Value = RationalParams> {
    prop_oneof![
        constrained(),
        (prop::collection::vec(-10.0f64..10.0, 4), prop::collection::vec(-10.0f64..10.0, 2))
            .prop_map(|(a, b)| RationalParams::original(a, b).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn constrained_zero_at_origin(p in constrained()) {
        prop_assert_eq!(p.value(0.0), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn decays_beyond_bound(p in constrained(), t in 0.0f64..1.0, negative in any::<bool>()) {
        let level = 1e-3;
        let x0 = p.asymptotic_bound(level).unwrap();
        // Log-uniform over [x0, 1e6 x0].
        let x = x0 * 10f64.powf(6.0 * t) * 1.000_001;
        let x = if negative { -x } else { x };
        prop_assert!(p.value(x).abs() < level, "f({x}) = {} past bound {x0} for {p}", p.value(x));
    }

    #[test]
    fn denominator_at_least_one(p in any_variant(), x in -1e3f64..1e3) {
        prop_assert!(p.denominator_value(x) >= 1.0);
    }

    #[test]
    fn denominator_is_even(p in any_variant(), x in -50.0f64..50.0) {
        prop_assert_eq!(p.denominator_value(x), p.denominator_value(-x));
    }
}

/// Supremum of `|f|` over a log-spaced grid out to the asymptotic bound, with margin.
fn sup_abs(p: &RationalParams) -> f64 {
    let x0 = p.asymptotic_bound(1e-3).unwrap().max(1.0);
    let n = 200_000;
    let (lo, hi) = (1e-6f64.ln(), x0.ln());
    let best = (0..=n)
        .map(|i| (lo + (hi - lo) * i as f64 / n as f64).exp())
        .flat_map(|x| [p.value(x).abs(), p.value(-x).abs()])
        .fold(1e-3, f64::max);
    best * 1.01
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn constrained_network_output_is_bounded(
        p in constrained(),
        seed in 0u64..1000,
        scale in 0.0f64..8.0,
        raw in prop::collection::vec(-1.0f64..1.0, 8 * 3),
    ) {
        let net = Mlp::build(MlpSpec::uniform(vec![3, 6, 6, 2], ActivationKind::Rational { init: p.clone() }, seed)).unwrap();
        let x = Matrix::from_vec(8, 3, raw.iter().map(|v| v * 10f64.powf(scale)).collect()).unwrap();
        let y = net.predict(&x).unwrap();
        let w = net.params().iter().filter(|q| q.kind == ParamKind::Weight).last().unwrap();
        let b = net.params().iter().filter(|q| q.kind == ParamKind::Bias).last().unwrap();
        let sup = sup_abs(&p);
        for j in 0..2 {
            let col: f64 = (0..w.value.rows()).map(|i| w.value[(i, j)].abs()).sum();
            let bound = b.value[(0, j)].abs() + col * sup;
            for r in 0..8 {
                prop_assert!(y[(r, j)].is_finite());
                prop_assert!(y[(r, j)].abs() <= bound, "{} > {bound}", y[(r, j)]);
            }
        }
    }
}
