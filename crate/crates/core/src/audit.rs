//! Independent checks: recurrence hits on a family's stages, non-recurrence
//! of the witness angles, the two-dimensional trichotomy and the soundness
//! of the independence condition.
//!
//! Rational angles make every search finite: `λ^n` depends only on `n`
//! modulo the denominator, so an arithmetic progression of block elements
//! repeats after at most `lcm` of the denominators steps. This periodicity
//! shortcut is exact and is the only way scans over astronomically long
//! blocks terminate.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::circle::{
    self, chord, dist_to_z, mod_u64, reduce, small_parts, CutoffTable, Precision, UAngle,
};
use crate::error::{Error, Result};
use crate::family::{
    self, BlockKind, BlockSpec, BohrUnion, FamilyConfig, SetFamily, Stage, Subset,
};
use crate::klapprox::{self, CalibrationConfig};
use crate::serial::{self, ratio_to_string};
use crate::witness::{self, TargetKind, WitnessAngle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditKind {
    Recurrence,
    NonRecurrence,
    Dichotomy,
    Trichotomy,
    KLSoundness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Pass,
    Fail,
    /// Not applicable, e.g. the condition under test did not hold.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditInstance {
    /// SHA-256 of `input`.
    pub id: String,
    pub input: String,
    pub outcome: Outcome,
    /// The hit `n` or `q`, when there is one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<String>,
    pub certificate: Value,
}

impl AuditInstance {
    pub fn new(
        input: impl Into<String>,
        outcome: Outcome,
        witness: Option<String>,
        certificate: Value,
    ) -> Self {
        let input = input.into();
        AuditInstance {
            id: digest(&input),
            input,
            outcome,
            witness,
            certificate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub kind: AuditKind,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub family_digest: Option<String>,
    pub instances: Vec<AuditInstance>,
    pub pass_count: u64,
    pub fail_count: u64,
    pub skip_count: u64,
}

impl AuditReport {
    pub fn new(kind: AuditKind, config: Value) -> Self {
        AuditReport {
            kind,
            config,
            family_digest: None,
            instances: Vec::new(),
            pass_count: 0,
            fail_count: 0,
            skip_count: 0,
        }
    }

    pub fn push(&mut self, inst: AuditInstance) {
        match inst.outcome {
            Outcome::Pass => self.pass_count += 1,
            Outcome::Fail => self.fail_count += 1,
            Outcome::Skip => self.skip_count += 1,
        }
        self.instances.push(inst);
    }

    pub fn passed(&self) -> bool {
        self.fail_count == 0
    }

    /// Appends the instances of `other`; the counts add up.
    pub fn merge(&mut self, other: AuditReport) {
        for i in other.instances {
            self.push(i);
        }
    }

    pub fn summary(&self) -> Value {
        json!({
            "kind": self.kind,
            "config": self.config,
            "family_digest": self.family_digest,
            "pass_count": self.pass_count,
            "fail_count": self.fail_count,
            "skip_count": self.skip_count,
            "passed": self.passed(),
        })
    }

    /// One instance per line, then the summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for i in &self.instances {
            out.push_str(&serde_json::to_string(i).expect("instances serialize"));
            out.push('\n');
        }
        out.push_str(&self.summary().to_string());
        out.push('\n');
        out
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditInstance> {
        self.instances.iter().filter(|i| i.outcome == Outcome::Fail)
    }
}

pub fn digest(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

pub fn family_digest(family: &SetFamily) -> String {
    digest(&family.to_json())
}

fn fmt_tuple(angles: &[UAngle]) -> String {
    let parts: Vec<String> = angles.iter().map(|a| a.to_string()).collect();
    format!("({})", parts.join(","))
}

fn chords_json(angles: &[UAngle], n: &BigUint, bits: u32) -> Value {
    Value::Array(
        angles
            .iter()
            .map(|a| {
                let e = family::chord_at(a, n, bits);
                json!([ratio_to_string(&e.lo), ratio_to_string(&e.hi)])
            })
            .collect(),
    )
}

/// A recurrence hit: `n` with `|λ_i^n − 1| < ε` for every `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub stage: u32,
    pub kind: BlockKind,
    #[serde(with = "serial::uint")]
    pub index: BigUint,
    #[serde(with = "serial::uint")]
    pub n: BigUint,
}

/// Element step of a block as a function of its index.
fn block_step(b: &BlockSpec) -> BigUint {
    match b.kind {
        BlockKind::Zero => b.h.clone(),
        BlockKind::Empty => BigUint::zero(),
        BlockKind::Subset(_) => &b.h * b.delta.as_ref().expect("subset block has Δ") * &b.l,
    }
}

/// Word-sized view of the angles when a cutoff table covers them.
fn small_angles(angles: &[UAngle], table: Option<&CutoffTable>) -> Option<(Vec<(u64, u64)>, u64)> {
    let table = table?;
    let mut out = Vec::with_capacity(angles.len());
    let mut m = 1u64;
    for a in angles {
        let (p, d) = small_parts(a)?;
        if d > table.max_denom() {
            return None;
        }
        m = m.lcm(&d);
        if m > u64::MAX >> 2 {
            return None;
        }
        out.push((p, d));
    }
    Some((out, m))
}

/// First index of `b` whose element is a hit, scanning one period.
pub fn block_hit(
    b: &BlockSpec,
    angles: &[UAngle],
    epsilon: &BigRational,
    table: Option<&CutoffTable>,
    prec: Precision,
) -> Result<Option<BigUint>> {
    let count = b.count();
    if count.is_zero() {
        return Ok(None);
    }
    let first = b.first_index();
    if let Some((small, m)) = small_angles(angles, table) {
        let table = table.expect("checked");
        let limit = count.min(BigUint::from(m)).to_u64().expect("≤ m");
        let n0 = mod_u64(&b.element(&first), m) as u128;
        let step = mod_u64(&block_step(b), m) as u128;
        for k in 0..limit as u128 {
            let n = ((n0 + k * step) % m as u128) as u64;
            let all = small.iter().all(|&(p, d)| {
                table.passes_residue(((n % d) as u128 * p as u128 % d as u128) as u64, d)
            });
            if all {
                return Ok(Some(&first + BigUint::from(k as u64)));
            }
        }
        return Ok(None);
    }
    let period = angles
        .iter()
        .fold(BigUint::one(), |acc, a| acc.lcm(a.denom()));
    let limit = count.min(period);
    let mut k = BigUint::zero();
    while k < limit {
        let idx = &first + &k;
        let n = b.element(&idx);
        let mut all = true;
        for a in angles {
            if !circle::chord_lt(&reduce(a, &n), epsilon, prec)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(Some(idx));
        }
        k += 1u32;
    }
    Ok(None)
}

/// First hit in a stage, trying blocks in stage order.
pub fn stage_hit(
    stage: &Stage,
    angles: &[UAngle],
    epsilon: &BigRational,
    table: Option<&CutoffTable>,
    prec: Precision,
) -> Result<Option<Hit>> {
    for b in &stage.blocks {
        if let Some(index) = block_hit(b, angles, epsilon, table, prec)? {
            let n = b.element(&index);
            return Ok(Some(Hit {
                stage: stage.n,
                kind: b.kind,
                index,
                n,
            }));
        }
    }
    Ok(None)
}

/// A hit in the first stage with `ε_N ≤ ε`.
pub fn recurrence_hit(
    family: &SetFamily,
    lambdas: &[UAngle],
    epsilon: &BigRational,
    prec: Precision,
) -> Result<Hit> {
    if lambdas.len() > family.r as usize {
        return Err(Error::Precondition(format!(
            "{} angles for r = {}",
            lambdas.len(),
            family.r
        )));
    }
    let stage = family
        .stages
        .iter()
        .find(|s| &s.epsilon <= epsilon)
        .ok_or_else(|| Error::NotFound(format!("no stage with ε_N ≤ {epsilon}")))?;
    stage_hit(stage, lambdas, epsilon, None, prec)?.ok_or_else(|| {
        Error::NotFound(format!(
            "no n in stage {} within {epsilon} for {}",
            stage.n,
            fmt_tuple(lambdas)
        ))
    })
}

/// Reduced rationals in `[0, 1)` with denominator at most `denom_max`.
pub fn reduced_angles(denom_max: u64) -> Vec<UAngle> {
    let mut out = vec![UAngle::zero()];
    for d in 2..=denom_max {
        for p in 1..d {
            if p.gcd(&d) == 1 {
                out.push(UAngle::from_u64(p, d).expect("positive denominator"));
            }
        }
    }
    out
}

fn tuples(angles: &[UAngle], r: usize) -> Vec<Vec<UAngle>> {
    let mut out: Vec<Vec<UAngle>> = vec![Vec::new()];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|t| {
                angles.iter().map(move |a| {
                    let mut t = t.clone();
                    t.push(a.clone());
                    t
                })
            })
            .collect();
    }
    out
}

/// Exhaustive recurrence check over all `r`-tuples of reduced rationals with
/// denominator `≤ denom_max`, at every stage. `epsilons` overrides the
/// stage values.
pub fn grid_audit(
    family: &SetFamily,
    r: usize,
    denom_max: u64,
    epsilons: Option<&[BigRational]>,
    prec: Precision,
) -> Result<AuditReport> {
    let denom_max = denom_max.max(1);
    let angle_list = reduced_angles(denom_max);
    let all = tuples(&angle_list, r);
    let mut report = AuditReport::new(
        AuditKind::Recurrence,
        json!({ "r": r, "denom_max": denom_max, "tuples": all.len(), "stages": family.stages.len() }),
    );
    report.family_digest = Some(family_digest(family));
    for (i, st) in family.stages.iter().enumerate() {
        let eps = epsilons
            .and_then(|e| e.get(i))
            .unwrap_or(&st.epsilon)
            .clone();
        let table = CutoffTable::new(&eps, true, denom_max, prec)?;
        let results: Vec<Result<AuditInstance>> = all
            .par_iter()
            .map(|t| {
                let input = format!(
                    "N={} eps={} lambda={}",
                    st.n,
                    ratio_to_string(&eps),
                    fmt_tuple(t)
                );
                Ok(match stage_hit(st, t, &eps, Some(&table), prec)? {
                    Some(hit) => {
                        let cert = json!({
                            "kind": hit.kind,
                            "index": hit.index.to_string(),
                            "chords": chords_json(t, &hit.n, prec.start_bits),
                        });
                        AuditInstance::new(input, Outcome::Pass, Some(hit.n.to_string()), cert)
                    }
                    None => AuditInstance::new(
                        input,
                        Outcome::Fail,
                        None,
                        json!({ "error": "NotFound" }),
                    ),
                })
            })
            .collect();
        for r in results {
            report.push(r?);
        }
    }
    Ok(report)
}

/// Which block elements a non-recurrence audit visits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    /// Blocks with at most this many elements are enumerated in full.
    pub full_limit: u64,
    /// Otherwise the first `head` indices, the last two, and `random`
    /// seeded-uniform indices.
    pub head: u64,
    pub random: u64,
    pub seed: u64,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy {
            full_limit: 200_000,
            head: 1000,
            random: 1000,
            seed: 0,
        }
    }
}

impl SamplingPolicy {
    /// Indices to visit and whether they are a sample.
    pub fn indices(&self, b: &BlockSpec) -> (Vec<BigUint>, bool) {
        let count = b.count();
        if count.is_zero() {
            return (Vec::new(), false);
        }
        let (first, last) = (b.first_index(), b.last_index());
        if count <= BigUint::from(self.full_limit) {
            let n = count.to_u64().expect("≤ full_limit");
            return ((0..n).map(|k| &first + k).collect(), false);
        }
        let mut set = BTreeSet::new();
        for k in 0..self.head {
            set.insert(&first + k);
        }
        set.insert(&last - 1u32);
        set.insert(last.clone());
        // seed mixes in the stage and kind so blocks get distinct samples
        let mix = digest(&format!("{}/{}/{}", self.seed, b.stage, b.kind));
        let seed = u64::from_str_radix(&mix[..16], 16).expect("hex digest");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let end = &last + 1u32;
        for _ in 0..self.random {
            set.insert(rng.gen_biguint_range(&first, &end));
        }
        (set.into_iter().collect(), true)
    }
}

fn target_for(kind: BlockKind) -> TargetKind {
    match kind {
        BlockKind::Zero => TargetKind::Mu0,
        BlockKind::Empty => TargetKind::MuEmpty,
        BlockKind::Subset(a) => TargetKind::MuSubset(a),
    }
}

/// Certifies `|μ^n − 1| > δ` on the blocks of the first `depth` stages, with
/// μ the witness matching each block, plus the combined statement that some
/// witness separates every visited `n`. Schedule violations and witness
/// obligations within the depth are reported as well.
pub fn nonrecurrence_audit(
    family: &SetFamily,
    witnesses: &[WitnessAngle],
    delta: &BigRational,
    depth: u32,
    policy: &SamplingPolicy,
    prec: Precision,
) -> Result<AuditReport> {
    let mut report = AuditReport::new(
        AuditKind::NonRecurrence,
        json!({
            "r": family.r,
            "delta": ratio_to_string(delta),
            "depth": depth,
            "policy": policy,
            "witnesses": witnesses.iter().map(|w| json!({"target": w.target, "theta": w.theta.to_string()})).collect::<Vec<_>>(),
        }),
    );
    report.family_digest = Some(family_digest(family));
    if depth == 0 {
        return Ok(report);
    }
    for v in family::schedule_check(family).violations {
        if v.stage <= depth {
            report.push(AuditInstance::new(
                format!("schedule N={} rule={}", v.stage, v.rule),
                Outcome::Fail,
                None,
                json!({ "detail": v.detail }),
            ));
        }
    }
    for w in witnesses {
        let v = witness::verify_witness(w, family, delta, prec)?;
        let base = if v.base_ok && v.bounds_hold {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        report.push(AuditInstance::new(
            format!("witness {:?} theta={} base", w.target, w.theta),
            base,
            None,
            json!({
                "chord": [ratio_to_string(&v.base_chord.lo), ratio_to_string(&v.base_chord.hi)],
                "bounds_hold": v.bounds_hold,
                "near_minus_one": v.near_minus_one,
            }),
        ));
        for o in v.obligations.iter().filter(|o| o.stage <= depth) {
            report.push(AuditInstance::new(
                format!("witness {:?} obligation N={}", w.target, o.stage),
                if o.ok { Outcome::Pass } else { Outcome::Fail },
                None,
                json!({ "drift": ratio_to_string(&o.drift), "allowed": ratio_to_string(&o.allowed) }),
            ));
        }
    }
    for st in family.stages.iter().filter(|s| s.n <= depth) {
        let mut combined_fail: Option<BigUint> = None;
        let mut visited = 0u64;
        for b in &st.blocks {
            let input = format!(
                "N={} block={} delta={}",
                st.n,
                b.kind,
                ratio_to_string(delta)
            );
            let Some(w) = witnesses.iter().find(|w| w.target == target_for(b.kind)) else {
                report.push(AuditInstance::new(
                    input,
                    Outcome::Fail,
                    None,
                    json!({ "error": "no witness for block" }),
                ));
                continue;
            };
            let (idx, sampled) = policy.indices(b);
            let checks: Vec<Result<(BigUint, bool, bool)>> = idx
                .par_iter()
                .map(|i| {
                    let n = b.element(i);
                    let own = witness::certify_far(&w.theta, &n, delta, prec)?;
                    let mut any = own;
                    for other in witnesses {
                        if any {
                            break;
                        }
                        any = witness::certify_far(&other.theta, &n, delta, prec)?;
                    }
                    Ok((n, own, any))
                })
                .collect();
            let mut failures = 0u64;
            let mut first_fail = None;
            let mut closest: Option<(BigRational, BigUint)> = None;
            for c in checks {
                let (n, own, any) = c?;
                visited += 1;
                if !own {
                    failures += 1;
                    first_fail.get_or_insert_with(|| n.clone());
                }
                if !any {
                    combined_fail.get_or_insert_with(|| n.clone());
                }
                // the chord grows with the distance to Z, so the nearest n is the weakest
                let d = dist_to_z(&reduce(&w.theta, &n)).value().clone();
                if closest.as_ref().is_none_or(|(c, _)| &d < c) {
                    closest = Some((d, n));
                }
            }
            let weakest = closest.map(|(d, n)| {
                let e = chord(&circle::DistZ::from_ratio(d).expect("in range"), prec.start_bits);
                json!({ "n": n.to_string(), "chord": [ratio_to_string(&e.lo), ratio_to_string(&e.hi)] })
            });
            report.push(AuditInstance::new(
                input,
                if failures == 0 {
                    Outcome::Pass
                } else {
                    Outcome::Fail
                },
                first_fail.as_ref().map(|n| n.to_string()),
                json!({
                    "theta": w.theta.to_string(),
                    "checked": idx.len(),
                    "sampled": sampled,
                    "failures": failures,
                    "weakest": weakest,
                }),
            ));
        }
        report.push(AuditInstance::new(
            format!("N={} combined delta={}", st.n, ratio_to_string(delta)),
            if combined_fail.is_none() {
                Outcome::Pass
            } else {
                Outcome::Fail
            },
            combined_fail.map(|n| n.to_string()),
            json!({ "visited": visited, "witnesses": witnesses.len() }),
        ));
    }
    Ok(report)
}

/// Builds the `2^{r−1} + 1` witnesses and audits them; a witness that
/// cannot be built is reported as a failure instead of aborting.
pub fn nonrecurrence_audit_family(
    family: &SetFamily,
    delta: &BigRational,
    depth: u32,
    policy: &SamplingPolicy,
    prec: Precision,
) -> Result<AuditReport> {
    match witness::all_witnesses(family) {
        Ok(ws) => nonrecurrence_audit(family, &ws, delta, depth, policy, prec),
        Err(e) => {
            let mut report = AuditReport::new(
                AuditKind::NonRecurrence,
                json!({ "r": family.r, "delta": ratio_to_string(delta), "depth": depth }),
            );
            report.family_digest = Some(family_digest(family));
            report.push(AuditInstance::new(
                "witness construction",
                Outcome::Fail,
                None,
                json!({ "error": e.to_string() }),
            ));
            for v in family::schedule_check(family).violations {
                report.push(AuditInstance::new(
                    format!("schedule N={} rule={}", v.stage, v.rule),
                    Outcome::Fail,
                    None,
                    json!({ "detail": v.detail }),
                ));
            }
            Ok(report)
        }
    }
}

fn ratio_int(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

/// Two-dimensional trichotomy sweep: for every pair of reduced rationals with
/// denominator `≤ denom_max` and every `H`, some `n` in
/// `{Hq + 1 : q ≤ Q₂} ∪ {H·Σ₂·L} ∪ {H·Γ(Lj + 1) : j ≤ Θ₂}` must bring both
/// angles within `ε₂` of 1. The closed-form `δ₂` is also checked against the
/// case inequalities it must satisfy. `delta2_factor` scales `δ₂` (and hence
/// `Q₂`) for negative controls.
pub fn trichotomy_audit(
    epsilon2: &BigRational,
    l: &BigUint,
    c2: &BigRational,
    denom_max: u64,
    hs: &[BigUint],
    delta2_factor: Option<&BigRational>,
    cfg: &FamilyConfig,
) -> Result<AuditReport> {
    let prec = cfg.prec();
    let p = family::stage_params_2(epsilon2, l, c2, &BigUint::one(), cfg)?;
    let delta2 = match delta2_factor {
        Some(f) => &p.delta2 * f,
        None => p.delta2.clone(),
    };
    let q2 = (c2 / &delta2)
        .floor()
        .to_integer()
        .to_biguint()
        .unwrap_or_default()
        + 1u32;
    let mut report = AuditReport::new(
        AuditKind::Trichotomy,
        json!({
            "epsilon2": ratio_to_string(epsilon2),
            "L": l.to_string(),
            "c2": ratio_to_string(c2),
            "denom_max": denom_max,
            "H": hs.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
            "delta2_factor": delta2_factor.map(ratio_to_string),
            "Gamma2": p.gamma2.to_string(),
            "Sigma1": p.sigma1.to_string(),
            "Theta1": p.theta1.to_string(),
            "delta2": ratio_to_string(&delta2),
            "Q2": q2.to_string(),
        }),
    );
    let gamma = ratio_int(&p.gamma2);
    let lr = ratio_int(l);
    let sig_l = ratio_int(&p.sigma1) * &lr;
    let theta_l = &lr * ratio_int(&p.theta1) + BigRational::one();
    let cases = [
        ("1a", (&p.epsilon1 + &delta2 * &gamma * &sig_l) * &gamma),
        ("1b", (&p.epsilon1 + &delta2 * &gamma * &theta_l) * &gamma),
        ("2a", &delta2 * &gamma * &sig_l),
        ("2b", &delta2 * &gamma * &theta_l),
        ("eps1", &p.epsilon1 * &gamma),
    ];
    for (name, lhs) in cases {
        report.push(AuditInstance::new(
            format!("case {name}"),
            if &lhs <= epsilon2 {
                Outcome::Pass
            } else {
                Outcome::Fail
            },
            None,
            json!({ "lhs": ratio_to_string(&lhs), "bound": ratio_to_string(epsilon2) }),
        ));
    }
    let angles = reduced_angles(denom_max.max(1));
    let pairs = tuples(&angles, 2);
    let table = CutoffTable::new(epsilon2, true, denom_max.max(1), prec)?;
    for h in hs {
        let mk = |kind, delta: Option<BigUint>, last: BigUint| BlockSpec {
            stage: 0,
            kind,
            h: h.clone(),
            l: l.clone(),
            delta,
            last,
            j_min: BigUint::one(),
            epsilon: epsilon2.clone(),
        };
        let blocks = [
            mk(BlockKind::Zero, None, q2.clone()),
            mk(BlockKind::Empty, Some(&p.sigma2 * l), BigUint::zero()),
            mk(
                BlockKind::Subset(Subset::from_elems(&[1])),
                Some(p.gamma2.clone()),
                p.theta2.clone(),
            ),
        ];
        let results: Vec<Result<AuditInstance>> = pairs
            .par_iter()
            .map(|t| {
                let input = format!("H={h} lambda={}", fmt_tuple(t));
                for b in &blocks {
                    if let Some(idx) = block_hit(b, t, epsilon2, Some(&table), prec)? {
                        let n = b.element(&idx);
                        let cert = json!({ "kind": b.kind, "index": idx.to_string(), "chords": chords_json(t, &n, prec.start_bits) });
                        return Ok(AuditInstance::new(input, Outcome::Pass, Some(n.to_string()), cert));
                    }
                }
                Ok(AuditInstance::new(input, Outcome::Fail, None, json!({ "error": "NotFound" })))
            })
            .collect();
        for r in results {
            report.push(r?);
        }
    }
    Ok(report)
}

/// Over seeded random tuples, targets and `(ε, Q)` pairs drawn as in
/// calibration: whenever the independence condition holds for `c`, a hit
/// `q ≤ Q` must exist. Instances where the condition fails are skipped.
pub fn kl_soundness_audit(
    r: usize,
    trials: u64,
    denom_max: u64,
    seed: u64,
    c: &BigRational,
    cal: &CalibrationConfig,
    prec: Precision,
) -> Result<AuditReport> {
    if trials == 0 || r == 0 {
        return Err(Error::Precondition("need r ≥ 1 and trials ≥ 1".into()));
    }
    let mut report = AuditReport::new(
        AuditKind::KLSoundness,
        json!({ "r": r, "trials": trials, "denom_max": denom_max, "seed": seed, "c": ratio_to_string(c) }),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = BigUint::one();
    for trial in 0..trials {
        let lambdas = klapprox::random_tuple(&mut rng, r, denom_max);
        let mut targets: Vec<Vec<UAngle>> = (0..cal.random_targets)
            .map(|_| klapprox::random_tuple(&mut rng, r, 4 * denom_max))
            .collect();
        targets.push(lambdas.iter().map(UAngle::neg).collect());
        for &(en, ed) in &cal.epsilons {
            let eps = serial::ratio_from_u(en, ed);
            for &qv in &cal.q_ladder {
                let q = BigUint::from(qv);
                let cond = klapprox::check_condition(&lambdas, &eps, &q, c, &one, prec)?;
                for mu in &targets {
                    let input = format!(
                        "trial={trial} lambda={} mu={} eps={} Q={qv}",
                        fmt_tuple(&lambdas),
                        fmt_tuple(mu),
                        ratio_to_string(&eps)
                    );
                    if !cond.passed {
                        report.push(AuditInstance::new(
                            input,
                            Outcome::Skip,
                            None,
                            json!({ "condition": false }),
                        ));
                        continue;
                    }
                    let hit = klapprox::simultaneous_hit(&lambdas, mu, &eps, &q, &one, prec)?;
                    let outcome = if hit.is_some() {
                        Outcome::Pass
                    } else {
                        Outcome::Fail
                    };
                    report.push(AuditInstance::new(
                        input,
                        outcome,
                        hit.map(|q| q.to_string()),
                        json!({ "condition": true, "vectors_checked": cond.vectors_checked }),
                    ));
                }
            }
        }
    }
    Ok(report)
}

/// Checks a union: enumeration and membership agree part by part, and every
/// tuple of reduced rationals (denominator `≤ denom_max`, length `r` of the
/// part) has a hit inside that part at the part's `ε`.
pub fn union_audit(
    u: &BohrUnion,
    denom_max: u64,
    enum_limit: u64,
    prec: Precision,
) -> Result<AuditReport> {
    let denom_max = denom_max.max(1);
    let mut report = AuditReport::new(
        AuditKind::Recurrence,
        json!({ "union_parts": u.parts.len(), "denom_max": denom_max, "enum_limit": enum_limit }),
    );
    let angles = reduced_angles(denom_max);
    for (i, part) in u.parts.iter().enumerate() {
        let input = format!("part={i} r={} N={} consistency", part.r, part.stage);
        match u.enumerate_part(i, enum_limit) {
            Ok(elems) => {
                let bad = elems.iter().find(|n| {
                    u.contains(n)
                        .is_none_or(|m| m.r != part.r || m.stage != part.stage)
                });
                report.push(AuditInstance::new(
                    input,
                    if bad.is_none() {
                        Outcome::Pass
                    } else {
                        Outcome::Fail
                    },
                    bad.map(|n| n.to_string()),
                    json!({ "elements": elems.len() }),
                ));
            }
            Err(Error::SizeLimit { count, .. }) => {
                report.push(AuditInstance::new(
                    input,
                    Outcome::Skip,
                    None,
                    json!({ "elements": count.to_string() }),
                ));
            }
            Err(e) => return Err(e),
        }
        let Some(eps) = part.blocks.first().map(|b| b.epsilon.clone()) else {
            continue;
        };
        let table = CutoffTable::new(&eps, true, denom_max, prec)?;
        let results: Vec<Result<AuditInstance>> = tuples(&angles, part.r as usize)
            .par_iter()
            .map(|t| {
                let input = format!("part={i} r={} N={} lambda={}", part.r, part.stage, fmt_tuple(t));
                for b in &part.blocks {
                    if let Some(idx) = block_hit(b, t, &eps, Some(&table), prec)? {
                        let n = b.element(&idx);
                        let ok = u.contains(&n).is_some_and(|m| m.r == part.r && m.stage == part.stage);
                        let cert = json!({ "kind": b.kind, "chords": chords_json(t, &n, prec.start_bits) });
                        let outcome = if ok { Outcome::Pass } else { Outcome::Fail };
                        return Ok(AuditInstance::new(input, outcome, Some(n.to_string()), cert));
                    }
                }
                Ok(AuditInstance::new(input, Outcome::Fail, None, json!({ "error": "NotFound" })))
            })
            .collect();
        for r in results {
            report.push(r?);
        }
    }
    Ok(report)
}
