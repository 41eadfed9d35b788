use bohr_core::audit::{self, SamplingPolicy};
use bohr_core::circle::Precision;
use bohr_core::family::{self, build_family, FamilyConfig, ScheduleHints, SetFamily};
use bohr_core::serial::ratio_from_u;
use num_bigint::BigUint;

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
fn r2_grid_hits_everywhere() {
    let f = fam(2, 2);
    let rep = audit::grid_audit(&f, 2, 8, None, Precision::default()).unwrap();
    assert!(rep.passed());
    let hits: Vec<_> = rep
        .instances
        .iter()
        .filter_map(|i| i.witness.as_ref())
        .collect();
    for n in hits {
        let n: BigUint = n.parse().unwrap();
        assert!(family::contains(&f, &n).is_some());
    }
}

#[test]
fn r3_nonrecurrence_at_depth_two() {
    let f = fam(3, 2);
    let rep = audit::nonrecurrence_audit_family(
        &f,
        &ratio_from_u(1, 2),
        2,
        &SamplingPolicy::default(),
        Precision::default(),
    )
    .unwrap();
    assert!(rep.passed(), "{:?}", rep.failures().next());
    assert!(rep.pass_count > 0);
}

#[test]
fn corrupted_l_is_caught() {
    let mut f = fam(2, 2);
    f.stages[0].l -= 1u32;
    f.stages[0].rebuild_blocks();
    let rep = audit::nonrecurrence_audit_family(
        &f,
        &ratio_from_u(1, 2),
        2,
        &SamplingPolicy::default(),
        Precision::default(),
    )
    .unwrap();
    assert!(rep.fail_count > 0);
}

#[test]
fn audits_are_deterministic() {
    let f = fam(1, 2);
    let a = audit::grid_audit(&f, 1, 20, None, Precision::default()).unwrap();
    let b = audit::grid_audit(&f, 1, 20, None, Precision::default()).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}
