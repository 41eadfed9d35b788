use bohr_core::circle::{self, reduce, Precision, UAngle};
use bohr_core::dirichlet::{self, Branch};
use bohr_core::serial::ratio_from_u;
use num_bigint::BigUint;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paper_constants_always_give_a_branch(
        q in 1u64..40,
        p in 0u64..40,
        h in 1u64..4,
        l in 1u64..3,
        shift_h in any::<bool>(),
        half in any::<bool>(),
    ) {
        let lambda = UAngle::from_u64(p % q, q).unwrap();
        let eps = if half { ratio_from_u(1, 2) } else { ratio_from_u(1, 1) };
        let params = dirichlet::dichotomy_params(&eps).unwrap();
        let (h, l) = (BigUint::from(h), BigUint::from(l));
        let s = if shift_h { h.clone() } else { BigUint::from(1u32) };
        let prec = Precision::default();
        let out = dirichlet::dichotomy_with(&lambda, &h, &l, &s, &params, prec).unwrap();
        let n = out.branch.n().clone();
        prop_assert!(circle::chord_lt(&reduce(&lambda, &n), &eps, prec).unwrap());
        prop_assert!(out.certificate.hi < eps);
        match out.branch {
            Branch::PowerCollapse { n } => prop_assert_eq!(n, &h * &params.sigma * &l),
            Branch::NetHit { j, n } => {
                prop_assert!(j >= BigUint::from(1u32) && j <= params.theta);
                prop_assert_eq!(n, &h * &l * &j + &s);
            }
        }
    }
}

#[test]
fn minimal_constants_verify_on_their_grid() {
    let eps = ratio_from_u(1, 4);
    let ls = [BigUint::from(1u32)];
    let shifts = [dirichlet::Shift::One];
    let prec = Precision::default();
    let m = dirichlet::minimal_constants(
        &eps,
        16,
        &dirichlet::HRange::AllResidues,
        &ls,
        &shifts,
        prec,
    )
    .unwrap();
    for q in 1..=16u64 {
        for p in 0..q {
            let lambda = UAngle::from_u64(p, q).unwrap();
            for h in 1..=q {
                let h = BigUint::from(h);
                let out = dirichlet::dichotomy(
                    &lambda,
                    &h,
                    &ls[0],
                    &BigUint::from(1u32),
                    &m.sigma,
                    &m.theta,
                    &eps,
                    prec,
                );
                assert!(out.is_ok(), "λ = {lambda}, H = {h}");
            }
        }
    }
}
