use proptest::prelude::*;
use ratact_core::gradcore::Tape;
use ratact_core::{Matrix, RationalParams};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const KINK: f64 = 1e-3;

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(1.0)
}

fn central(f: impl Fn(f64) -> f64, at: f64) -> f64 {
    (f(at + H) - f(at - H)) / (2.0 * H)
}

fn coeff() -> impl Strategy<Value = f64> {
    -2.0f64..2.0
}

fn away_from_kink(v: &f64) -> bool {
    v.abs() > KINK
}

fn original() -> impl Strategy<Value = (RationalParams, f64)> {
    (
        prop::collection::vec(coeff(), 4),
        prop::collection::vec(coeff().prop_filter("kink", away_from_kink), 2),
        (-5.0f64..5.0).prop_filter("kink", away_from_kink),
    )
        .prop_map(|(a, b, x)| (RationalParams::original(a, b).unwrap(), x))
}

fn constrained() -> impl Strategy<Value = (RationalParams, f64)> {
    (
        prop::collection::vec(coeff(), 3),
        prop::collection::vec(coeff().prop_filter("kink", away_from_kink), 2),
        (-5.0f64..5.0).prop_filter("kink", away_from_kink),
    )
        .prop_map(|(a, b, x)| (RationalParams::constrained(a, b, 2.0, 4).unwrap(), x))
}

fn check_all_partials(p: &RationalParams, x: f64) -> std::result::Result<(), TestCaseError> {
    let k = p.trainable_len();
    let mut g = vec![0.0; k];
    let (_, dx) = p.eval_with_grad(x, Some(&mut g));

    let fd = central(|t| p.value(t), x);
    prop_assert!(rel_err(dx, fd) < TOL, "d/dx {dx} vs {fd} at {x} for {p}");

    let theta = p.trainable();
    for i in 0..k {
        let fd = central(
            |v| {
                let mut t = theta.clone();
                t[i] = v;
                p.with_trainable(&t).unwrap().value(x)
            },
            theta[i],
        );
        prop_assert!(rel_err(g[i], fd) < TOL, "coefficient {i}: {} vs {fd} at {x} for {p}", g[i]);
    }
    Ok(())
}

/// Backward through the tape for `sum(f(x_i))` over a small batch.
fn check_tape(p: &RationalParams, xs: &[f64]) -> std::result::Result<(), TestCaseError> {
    let eval = |theta: &[f64], xs: &[f64]| {
        let q = p.with_trainable(theta).unwrap();
        xs.iter().map(|&x| q.value(x)).sum::<f64>()
    };
    let mut tape = Tape::new();
    let x = tape.param(Matrix::column_vector(xs));
    let c = tape.param(Matrix::row_vector(&p.trainable()));
    let y = tape.rational(x, c, p).unwrap();
    let s = tape.row_sum(y).unwrap();
    let grads = tape.backward_seeded(s, Matrix::filled(xs.len(), 1, 1.0)).unwrap();

    let theta = p.trainable();
    for (i, &a) in grads.of(c).data().iter().enumerate() {
        let fd = central(
            |v| {
                let mut t = theta.clone();
                t[i] = v;
                eval(&t, xs)
            },
            theta[i],
        );
        prop_assert!(rel_err(a, fd) < TOL, "tape coefficient {i}: {a} vs {fd}");
    }
    for (i, &a) in grads.of(x).data().iter().enumerate() {
        let fd = central(
            |v| {
                let mut t = xs.to_vec();
                t[i] = v;
                eval(&theta, &t)
            },
            xs[i],
        );
        prop_assert!(rel_err(a, fd) < TOL, "tape input {i}: {a} vs {fd}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn original_partials((p, x) in original()) {
        check_all_partials(&p, x)?;
    }

    #[test]
    fn constrained_partials((p, x) in constrained()) {
        check_all_partials(&p, x)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tape_matches_finite_differences(
        (p, _) in prop_oneof![original(), constrained()],
        xs in prop::collection::vec((-4.0f64..4.0).prop_filter("kink", away_from_kink), 1..6),
    ) {
        check_tape(&p, &xs)?;
    }
}
