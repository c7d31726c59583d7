mod common;

use common::{integer_state, random_state};
use parareal_core::state::{state_add, state_diff, FieldName, Grid, ModelState};
use proptest::prelude::*;

fn grid8() -> Grid {
    Grid::new(8, 8, 5e4, 5e4).unwrap()
}

/// Flattened elementwise reference loop.
fn scalar_loop(a: &ModelState, b: &ModelState, op: fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for f in FieldName::ALL {
        let (fa, fb) = (a.field(f), b.field(f));
        for i in 0..fa.len() {
            out.push(op(fa[i], fb[i]));
        }
    }
    out
}

fn flatten(s: &ModelState) -> Vec<f64> {
    FieldName::ALL.iter().flat_map(|&f| s.field(f).to_vec()).collect()
}

#[test]
fn diff_and_add_match_scalar_loop() {
    let a = random_state(grid8(), 1, 0);
    let b = random_state(grid8(), 2, 0);
    let d = state_diff(&a, &b).unwrap();
    let s = state_add(&a, &b).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(flatten(&d)), bits(scalar_loop(&a, &b, |x, y| x - y)));
    assert_eq!(bits(flatten(&s)), bits(scalar_loop(&a, &b, |x, y| x + y)));
}

#[test]
fn operations_are_pure() {
    let a = random_state(grid8(), 3, 0);
    let b = random_state(grid8(), 4, 0);
    let (a0, b0) = (a.clone(), b.clone());
    let _ = state_diff(&a, &b).unwrap();
    let _ = state_add(&a, &b).unwrap();
    assert!(a.bit_eq(&a0) && b.bit_eq(&b0));
}

proptest! {
    #[test]
    fn add_commutes_and_diff_antisymmetric(sa in any::<u64>(), sb in any::<u64>()) {
        let a = random_state(grid8(), sa, 0);
        let b = random_state(grid8(), sb, 0);
        prop_assert!(state_add(&a, &b).unwrap().fields().bit_eq(state_add(&b, &a).unwrap().fields()));
        let ab = state_diff(&a, &b).unwrap();
        let ba = state_diff(&b, &a).unwrap();
        for f in FieldName::ALL {
            for (x, y) in ab.field(f).iter().zip(ba.field(f)) {
                prop_assert_eq!(x.to_bits(), (-y).to_bits());
            }
        }
    }

    #[test]
    fn integer_fields_round_trip_exactly(sa in any::<u64>(), sb in any::<u64>()) {
        let f = integer_state(grid8(), sa);
        let g = integer_state(grid8(), sb);
        let back = state_add(&state_diff(&f, &g).unwrap(), &g).unwrap();
        prop_assert!(back.bit_eq(&f));
    }
}
