use flowplan::transform::{
    harmonic, harmonic_convex, harmonic_inverse, harmonic_shift, kruzkov, kruzkov_inverse,
    TransformKind, TransformedValue,
};
use proptest::prelude::*;

fn h(v: f64) -> TransformedValue {
    harmonic(v).unwrap()
}

proptest! {
    #[test]
    fn shift_matches_the_sum(a in 0.0..1e3f64, b in 0.0..1e3f64) {
        let direct = h(a + b).get();
        let shifted = harmonic_shift(h(a), b).unwrap().get();
        prop_assert!((direct - shifted).abs() <= 1e-12, "{direct} vs {shifted}");
    }

    #[test]
    fn convex_matches_the_weighted_sum(a in 0.0..1e3f64, b in 0.0..1e3f64, alpha in 0.0..=1.0f64) {
        let direct = h(alpha * a + (1.0 - alpha) * b).get();
        let mixed = harmonic_convex(h(a), h(b), alpha).unwrap().get();
        prop_assert!((direct - mixed).abs() <= 1e-12, "{direct} vs {mixed}");
    }

    #[test]
    fn round_trip_is_accurate_for_bounded_costs(v in 0.0..1e4f64) {
        // dv/dh = (1 + v)^2, so half an ulp of h becomes this much in v.
        let back = harmonic_inverse(h(v));
        prop_assert!((back - v).abs() <= 4e-16 * (1.0 + v).powi(2), "{v} -> {back}");
    }

    #[test]
    fn harmonic_is_monotone_and_bounded(a in 0.0..1e6f64, b in 0.0..1e6f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (hl, hh) = (h(lo).get(), h(hi).get());
        prop_assert!(hl <= hh);
        prop_assert!((0.0..1.0).contains(&hl));
        prop_assert!(hh < 1.0 || hi.is_infinite());
    }

    #[test]
    fn convex_stays_between_its_endpoints(t in 0.0..=1.0f64, e in 0.0..=1.0f64, alpha in 0.0..=1.0f64) {
        let c = harmonic_convex(TransformedValue::new(t).unwrap(), TransformedValue::new(e).unwrap(), alpha)
            .unwrap()
            .get();
        prop_assert!(c >= t.min(e) - 1e-15 && c <= t.max(e) + 1e-15, "{t} {e} {alpha} -> {c}");
    }

    #[test]
    fn shift_never_decreases(h1 in 0.0..=1.0f64, x in 0.0..1e3f64) {
        let s = harmonic_shift(TransformedValue::new(h1).unwrap(), x).unwrap().get();
        prop_assert!(s >= h1 - 1e-15);
    }

    #[test]
    fn kruzkov_round_trip_for_moderate_costs(v in 0.0..20.0f64) {
        // dv/dh = e^v, so half an ulp of h becomes this much in v.
        let back = kruzkov_inverse(kruzkov(v).unwrap());
        prop_assert!((back - v).abs() <= 4e-16 * (1.0 + v.exp()), "{v} -> {back}");
    }
}

#[test]
fn obstacle_value_is_absorbing() {
    let one = h(f64::INFINITY);
    assert_eq!(one.get(), 1.0);
    assert_eq!(harmonic_inverse(one), f64::INFINITY);
    assert_eq!(harmonic_shift(one, 3.0).unwrap().get(), 1.0);
    for alpha in [0.0, 0.3, 1.0] {
        assert_eq!(harmonic_convex(one, one, alpha).unwrap().get(), 1.0);
    }
}

#[test]
fn worked_examples() {
    assert_eq!(h(0.0).get(), 0.0);
    assert_eq!(h(1.0).get(), 0.5);
    assert!((h(3.0).get() - 0.75).abs() < 1e-15);
    assert!((harmonic_shift(h(1.0), 1.0).unwrap().get() - 2.0 / 3.0).abs() < 1e-15);
    assert!((harmonic_convex(h(1.0), h(3.0), 0.5).unwrap().get() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn kruzkov_saturates_where_harmonic_does_not() {
    let v = 40.0;
    assert_eq!(kruzkov(v).unwrap().get(), 1.0);
    assert_eq!(kruzkov(v + 10.0).unwrap().get(), 1.0);
    assert!(h(v).get() < h(v + 10.0).get());
    let back = harmonic_inverse(h(v));
    assert!((back - v).abs() < 1e-12);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(harmonic(-1.0).is_err());
    assert!(harmonic(f64::NAN).is_err());
    assert!(TransformedValue::new(1.5).is_err());
    assert!(harmonic_convex(h(1.0), h(1.0), 1.5).is_err());
    assert!(TransformKind::Harmonic.forward(-0.5).is_err());
}
