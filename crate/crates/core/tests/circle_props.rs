use bohr_core::circle::{self, chord, dist_to_z, reduce, DistZ, Precision, UAngle};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use proptest::prelude::*;
use std::cmp::Ordering;

fn angle(p: i64, q: u64) -> UAngle {
    UAngle::new(BigInt::from(p), BigInt::from(q)).unwrap()
}

proptest! {
    #[test]
    fn symmetric_under_negation(p in -500i64..500, q in 1u64..300) {
        let t = angle(p, q);
        prop_assert_eq!(dist_to_z(&t), dist_to_z(&t.neg()));
        let d = dist_to_z(&t);
        prop_assert_eq!(chord(&d, 128), chord(&dist_to_z(&t.neg()), 128));
    }

    #[test]
    fn periodic_in_whole_turns(p in -500i64..500, q in 1u64..300, k in -5i64..5) {
        prop_assert_eq!(angle(p, q), angle(p + k * q as i64, q));
    }

    #[test]
    fn reduce_composes(p in 0i64..200, q in 1u64..200, a in 0u64..50, b in 0u64..50) {
        let t = angle(p, q);
        let ab = reduce(&t, &BigUint::from(a * b));
        prop_assert_eq!(ab, reduce(&reduce(&t, &BigUint::from(a)), &BigUint::from(b)));
    }

    #[test]
    fn enclosures_nest(p in 1i64..1000, q in 2u64..2000) {
        let d = dist_to_z(&angle(p, q));
        let coarse = chord(&d, 64);
        let fine = chord(&d, 256);
        prop_assert!(coarse.lo <= fine.lo && fine.hi <= coarse.hi);
        prop_assert!(fine.lo <= fine.hi);
    }

    #[test]
    fn comparison_agrees_with_enclosure(p in 1i64..1000, q in 2u64..2000, bn in 0u64..200, bd in 1u64..100) {
        let d = dist_to_z(&angle(p, q));
        let bound = BigRational::new(BigInt::from(bn), BigInt::from(bd));
        let e = chord(&d, 512);
        match circle::cmp_chord(&d, &bound, Precision::default()).unwrap() {
            Ordering::Less => prop_assert!(e.lo < bound),
            Ordering::Greater => prop_assert!(e.hi > bound),
            Ordering::Equal => prop_assert!(e.is_exact() && e.lo == bound),
        }
    }

    #[test]
    fn chord_between_linear_bounds(p in 1i64..10_000, q in 2u64..10_000) {
        let d = dist_to_z(&angle(p, q));
        prop_assume!(!d.is_zero());
        prop_assert!(circle::linear_bounds(&d, Precision::default()).unwrap().is_some());
    }
}

#[test]
fn linear_bounds_hold_with_equality_at_half_turn() {
    // chord = 2 = 4·(1/2) exactly
    let half = DistZ::from_ratio(BigRational::new(BigInt::from(1), BigInt::from(2))).unwrap();
    assert!(circle::linear_bounds(&half, Precision::default())
        .unwrap()
        .is_some());
}
