use bohr_core::family::{
    self, build_family, BlockKind, FamilyConfig, ScheduleHints, SetFamily, Subset,
};
use bohr_core::witness;
use num_bigint::BigUint;
use num_traits::One;
use proptest::prelude::*;
use std::sync::OnceLock;

fn fam(r: u32, stages: u32) -> SetFamily {
    build_family(
        r,
        stages,
        &ScheduleHints::default(),
        &FamilyConfig::default(),
    )
    .unwrap()
}

#[test]
fn enumerated_elements_are_members() {
    for f in [fam(1, 4), fam(2, 2)] {
        assert!(family::schedule_check(&f).passed());
        for st in &f.stages {
            for b in &st.blocks {
                let Ok(elems) = b.enumerate(20_000) else {
                    continue;
                };
                for (i, n) in elems.iter().enumerate() {
                    let m = family::memberships(&f, n);
                    assert!(
                        m.iter().any(|m| m.stage == st.n && m.kind == b.kind),
                        "n = {n}"
                    );
                    assert_eq!(b.index_of(n), Some(b.first_index() + i));
                }
            }
        }
    }
}

#[test]
fn manifest_round_trip() {
    let f = fam(2, 2);
    let back = SetFamily::from_json(&f.to_json()).unwrap();
    assert_eq!(back, f);
}

#[test]
fn deeper_families_keep_their_invariants() {
    for (r, stages) in [(2, 2), (3, 2)] {
        let f = fam(r, stages);
        assert!(family::schedule_check(&f).passed(), "r = {r}");
        for st in &f.stages {
            assert_eq!(st.delta.len(), 1 << (r - 1));
            assert!(
                family::divisibility_chain(&st.delta),
                "r = {r}, N = {}",
                st.n
            );
            for a in Subset::all(r - 1).filter(|a| !a.is_empty()) {
                assert!(st.block(BlockKind::Subset(a)).is_some());
            }
        }
        assert_eq!(
            witness::all_witnesses(&f).unwrap().len(),
            (1 << (r - 1)) + 1
        );
    }
}

fn shared() -> &'static SetFamily {
    static F: OnceLock<SetFamily> = OnceLock::new();
    F.get_or_init(|| fam(1, 3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn membership_is_decided_arithmetically(n in 1u64..2_000_000) {
        let f = shared();
        let n = BigUint::from(n);
        let found = family::contains(f, &n);
        let direct = f.blocks().any(|b| {
            b.enumerate(1_000_000).map(|v| v.contains(&n)).unwrap_or(false)
        });
        prop_assert_eq!(found.is_some(), direct);
        if let Some(m) = found {
            let b = f.stages[(m.stage - 1) as usize].block(m.kind).unwrap();
            prop_assert_eq!(b.element(&m.index), n);
        }
        prop_assert!(f.stages[0].h >= BigUint::one());
    }
}
