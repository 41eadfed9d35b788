use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bohr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bohr"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn build_then_audit_recurrence() {
    let dir = tempfile::tempdir().unwrap();
    let fam = dir.path().join("fam.json");
    let rep = dir.path().join("rec.jsonl");
    let out = bohr(&[
        "build",
        "--r",
        "1",
        "--stages",
        "4",
        "--track",
        "empirical",
        "--out",
        s(&fam),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = bohr(&[
        "audit-recurrence",
        "--family",
        s(&fam),
        "--denom-max",
        "64",
        "--out",
        s(&rep),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let sum = summary(&rep);
    assert_eq!(sum["fail_count"], 0);
    assert_eq!(sum["pass_count"], 4 * 1260);
    // the report names the manifest it audited
    let text = std::fs::read_to_string(&fam).unwrap();
    let fam_json = bohr_core::family::SetFamily::from_json(&text).unwrap();
    assert_eq!(
        sum["family_digest"],
        bohr_core::audit::family_digest(&fam_json)
    );
}

#[test]
fn witnesses_and_delta_two() {
    let dir = tempfile::tempdir().unwrap();
    let fam = dir.path().join("fam.json");
    let w = dir.path().join("w.json");
    let rep = dir.path().join("nr.jsonl");
    assert!(
        bohr(&["build", "--r", "2", "--stages", "2", "--out", s(&fam)])
            .status
            .success()
    );
    assert_eq!(
        bohr(&["witness", "--family", s(&fam), "--out", s(&w)])
            .status
            .code(),
        Some(0)
    );
    let args = [
        "audit-nonrecurrence",
        "--family",
        s(&fam),
        "--witnesses",
        s(&w),
        "--out",
        s(&rep),
    ];
    assert_eq!(bohr(&args).status.code(), Some(0));
    let mut bad = args.to_vec();
    bad.extend(["--delta", "2/1"]);
    assert_eq!(bohr(&bad).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(
        bohr(&["build", "--r", "1", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(
        bohr(&["params", "--r", "1", "--epsilon", "0.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bohr(&["audit-recurrence", "--family", "/nonexistent/fam.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bohr(&["build", "--r", "1", "--track", "sideways"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn params_paper_track_r1() {
    let out = bohr(&["params", "--r", "1", "--epsilon", "1/2", "--track", "paper"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["detail"]["kappa"], "248");
}

#[test]
fn calibrate_is_deterministic() {
    let a = bohr(&["calibrate", "--r", "1", "--trials", "20", "--seed", "3"]);
    let b = bohr(&["calibrate", "--r", "1", "--trials", "20", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn kl_and_trichotomy_controls() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.jsonl");
    assert_eq!(
        bohr(&["audit-kl", "--trials", "10", "--out", s(&rep)])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        bohr(&["audit-trichotomy", "--out", s(&rep)]).status.code(),
        Some(0)
    );
    let out = bohr(&[
        "audit-trichotomy",
        "--delta2-factor",
        "1000000/1",
        "--out",
        s(&rep),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn union_and_katznelson() {
    let dir = tempfile::tempdir().unwrap();
    let f1 = dir.path().join("f1.json");
    let f2 = dir.path().join("f2.json");
    let rep = dir.path().join("u.jsonl");
    assert!(
        bohr(&["build", "--r", "1", "--stages", "2", "--out", s(&f1)])
            .status
            .success()
    );
    assert!(
        bohr(&["build", "--r", "2", "--stages", "2", "--out", s(&f2)])
            .status
            .success()
    );
    let base = ["union", "--family", s(&f1), "--family", s(&f2)];
    let mut ok = base.to_vec();
    ok.extend([
        "--pick",
        "1:1",
        "--pick",
        "2:2",
        "--denom-max",
        "10",
        "--out",
        s(&rep),
    ]);
    assert_eq!(bohr(&ok).status.code(), Some(0));
    let mut overlap = base.to_vec();
    overlap.extend(["--pick", "2:2", "--pick", "1:1"]);
    assert_eq!(bohr(&overlap).status.code(), Some(2));

    // |λ^n + 1| is 1 for thirds and 2·sin(π/10) ≈ 0.618 for n ≡ 2, 3 mod 5
    let out = bohr(&[
        "katznelson",
        "--theta",
        "1/3,1/5",
        "--delta",
        "7/10",
        "--n-max",
        "30",
    ]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let elems: Vec<u64> = v["elements"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap())
        .collect();
    let expected: Vec<u64> = (0..=30).filter(|n| n % 5 == 2 || n % 5 == 3).collect();
    assert_eq!(elems, expected);
}
