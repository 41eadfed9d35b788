//! Simultaneous inhomogeneous approximation on the torus.
//!
//! A tuple `λ = (λ_1, …, λ_r)` is "quantitatively independent" at scale
//! `(ε, Q, c)` when every nonzero integer vector `a` satisfies
//! `Q·|λ^a − 1| + ε·Σ|a_i| ≥ c`. Only vectors with `Σ|a_i| < c/ε` can fail,
//! so the check is a finite enumeration. When it passes, every target `μ`
//! is expected to be hit: some `q ≤ Q` has `|λ_i^q − μ_i| < ε` for all `i`.
//! The constant `c` is unknown in closed form and is calibrated empirically.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circle::{self, chord, chord_lt, dist_to_z, reduce, Precision, UAngle};
use crate::dirichlet::RatInterval;
use crate::error::{Error, Result};
use crate::serial;

pub const DEFAULT_E_SET_CAP: u64 = 10_000_000;

/// Calibrated `c_r` defaults: `calibrate_c(r, 1000, 30, 0)` with the default
/// configuration. Tuples of length above 3 reuse the `r = 3` value.
pub fn default_c(r: usize) -> BigRational {
    match r {
        0 | 1 => serial::ratio_from_u(DEFAULT_C1.0, DEFAULT_C1.1),
        2 => serial::ratio_from_u(DEFAULT_C2.0, DEFAULT_C2.1),
        _ => serial::ratio_from_u(DEFAULT_C3.0, DEFAULT_C3.1),
    }
}

const DEFAULT_C1: (u64, u64) = (55, 8);
const DEFAULT_C2: (u64, u64) = (53, 8);
const DEFAULT_C3: (u64, u64) = (37, 8);

/// Integer vector `(a_1, …, a_r)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntVec(pub Vec<i64>);

impl IntVec {
    pub fn l1(&self) -> u64 {
        self.0.iter().map(|a| a.unsigned_abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }
}

fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    (0..k).fold(BigUint::one(), |acc, i| acc * (n - i) / (i + 1))
}

/// Number of integer points of `Z^r` with `Σ|a_i| ≤ k`, zero included.
pub fn l1_ball_count(r: u64, k: u64) -> BigUint {
    (0..=r.min(k))
        .map(|i| (BigUint::one() << i as usize) * binom(r, i) * binom(k, i))
        .sum()
}

/// Largest integer norm strictly below `c/ε`.
pub fn norm_bound(epsilon: &BigRational, c: &BigRational) -> Result<u64> {
    if !epsilon.is_positive() || !c.is_positive() {
        return Err(Error::Precondition(format!(
            "need c > 0 and ε > 0, got c = {c}, ε = {epsilon}"
        )));
    }
    let k = (c / epsilon).ceil().to_integer() - BigInt::one();
    k.to_u64()
        .ok_or_else(|| Error::TooLarge(format!("c/ε = {} is too large", c / epsilon)))
}

/// Calls `f` on every nonzero vector of `Z^r` with `Σ|a_i| ≤ k`, in
/// lexicographic order.
pub fn for_each_ball_vec(r: usize, k: u64, mut f: impl FnMut(&[i64])) {
    fn rec(buf: &mut Vec<i64>, r: usize, left: i64, f: &mut impl FnMut(&[i64])) {
        if buf.len() == r {
            if buf.iter().any(|&a| a != 0) {
                f(buf);
            }
            return;
        }
        for a in -left..=left {
            buf.push(a);
            rec(buf, r, left - a.abs(), f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(r);
    rec(&mut buf, r, k as i64, &mut f);
}

fn check_size(r: usize, k: u64, cap: u64) -> Result<()> {
    let count = l1_ball_count(r as u64, k) - 1u32;
    if count > BigUint::from(cap) {
        return Err(Error::SizeLimit {
            count: count.to_u128().unwrap_or(u128::MAX),
            limit: cap as u128,
        });
    }
    Ok(())
}

/// Nonzero vectors with `Σ|a_i| < c/ε`, in lexicographic order.
pub fn e_set(epsilon: &BigRational, r: usize, c: &BigRational) -> Result<Vec<IntVec>> {
    e_set_capped(epsilon, r, c, DEFAULT_E_SET_CAP)
}

pub fn e_set_capped(
    epsilon: &BigRational,
    r: usize,
    c: &BigRational,
    cap: u64,
) -> Result<Vec<IntVec>> {
    let k = norm_bound(epsilon, c)?;
    check_size(r, k, cap)?;
    let mut out = Vec::new();
    for_each_ball_vec(r, k, |a| out.push(IntVec(a.to_vec())));
    Ok(out)
}

/// The angle `Σ a_i·φ_i mod 1`.
pub fn combination(phis: &[UAngle], a: &[i64]) -> UAngle {
    let mut acc = BigRational::zero();
    for (phi, &ai) in phis.iter().zip(a) {
        acc += phi.to_ratio() * BigInt::from(ai);
    }
    UAngle::from_ratio(&acc)
}

/// Common denominator of a tuple, when small enough for word arithmetic.
fn common_denom(phis: &[UAngle]) -> Option<(u64, Vec<u64>)> {
    let mut d = BigUint::one();
    for p in phis {
        d = d.lcm(p.denom());
    }
    let dw = d.to_u64().filter(|&x| x < 1 << 62)?;
    let nums = phis
        .iter()
        .map(|p| {
            (p.numer() * (&d / p.denom()))
                .to_u64()
                .expect("below denominator")
        })
        .collect();
    Some((dw, nums))
}

/// For each norm `1..=k`, the smallest distance to `Z` of `Σ a_i φ_i` over
/// vectors of that norm, with the first minimizing vector.
pub fn min_dist_by_norm(phis: &[UAngle], k: u64) -> Vec<(BigRational, IntVec)> {
    let r = phis.len();
    let mut best: Vec<Option<(BigRational, IntVec)>> = vec![None; k as usize + 1];
    if let Some((d, nums)) = common_denom(phis) {
        let mut raw: Vec<Option<(u64, Vec<i64>)>> = vec![None; k as usize + 1];
        for_each_ball_vec(r, k, |a| {
            let mut s: i128 = 0;
            for (n, &ai) in nums.iter().zip(a) {
                s += *n as i128 * ai as i128;
            }
            let m = s.rem_euclid(d as i128) as u64;
            let dist = m.min(d - m);
            let norm: u64 = a.iter().map(|x| x.unsigned_abs()).sum();
            let slot = &mut raw[norm as usize];
            if slot.as_ref().is_none_or(|(b, _)| dist < *b) {
                *slot = Some((dist, a.to_vec()));
            }
        });
        for (norm, slot) in raw.into_iter().enumerate() {
            best[norm] = slot.map(|(dist, a)| (serial::ratio_from_u(dist, d), IntVec(a)));
        }
    } else {
        for_each_ball_vec(r, k, |a| {
            let dist = dist_to_z(&combination(phis, a)).value().clone();
            let norm: u64 = a.iter().map(|x| x.unsigned_abs()).sum();
            let slot = &mut best[norm as usize];
            if slot.as_ref().is_none_or(|(b, _)| dist < *b) {
                *slot = Some((dist, IntVec(a.to_vec())));
            }
        });
    }
    best.into_iter()
        .skip(1)
        .map(|s| s.expect("every norm has vectors"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstVec {
    pub vec: IntVec,
    /// Enclosure of `Q·|λ^{Ha} − 1| + ε·Σ|a_i| − c`.
    pub margin: RatInterval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndepReport {
    pub passed: bool,
    pub worst: Option<WorstVec>,
    #[serde(with = "serial::ratio")]
    pub epsilon: BigRational,
    #[serde(rename = "Q", with = "serial::uint")]
    pub q: BigUint,
    #[serde(with = "serial::ratio")]
    pub c: BigRational,
    pub vectors_checked: u64,
}

/// Checks `Q·|λ_1^{Ha_1}⋯λ_r^{Ha_r} − 1| + ε·Σ|a_i| ≥ c` over the E-set.
pub fn check_condition(
    lambdas: &[UAngle],
    epsilon: &BigRational,
    q: &BigUint,
    c: &BigRational,
    h: &BigUint,
    prec: Precision,
) -> Result<IndepReport> {
    if q.is_zero() {
        return Err(Error::Precondition("Q must be at least 1".into()));
    }
    let k = norm_bound(epsilon, c)?;
    check_size(lambdas.len(), k, DEFAULT_E_SET_CAP)?;
    let phis: Vec<UAngle> = lambdas.iter().map(|t| reduce(t, h)).collect();
    let qr = BigRational::from_integer(BigInt::from(q.clone()));
    let mut passed = true;
    let mut worst: Option<WorstVec> = None;
    for (i, (dist, vec)) in min_dist_by_norm(&phis, k).into_iter().enumerate() {
        let norm = BigRational::from_integer(BigInt::from(i as u64 + 1));
        let slack = epsilon * &norm - c;
        // Q·chord ≥ c − ε·|a|  ⟺  chord ≥ (c − ε·|a|)/Q
        let need = -&slack / &qr;
        let d = circle::DistZ::from_ratio(dist)?;
        let ok = circle::cmp_chord(&d, &need, prec)? != std::cmp::Ordering::Less;
        passed &= ok;
        let e = chord(&d, prec.start_bits);
        let margin = RatInterval {
            lo: &qr * &e.lo + &slack,
            hi: &qr * &e.hi + &slack,
        };
        if worst.as_ref().is_none_or(|w| margin.lo < w.margin.lo) {
            worst = Some(WorstVec { vec, margin });
        }
    }
    let checked = (l1_ball_count(lambdas.len() as u64, k) - 1u32)
        .to_u64()
        .unwrap_or(u64::MAX);
    Ok(IndepReport {
        passed,
        worst,
        epsilon: epsilon.clone(),
        q: q.clone(),
        c: c.clone(),
        vectors_checked: checked,
    })
}

/// Smallest `q ∈ [1, Q]` with `|λ_i^{Hq} − μ_i| < ε` for every `i`.
/// The scan stops after one common period of the folded angles.
pub fn simultaneous_hit(
    lambdas: &[UAngle],
    mus: &[UAngle],
    epsilon: &BigRational,
    q_max: &BigUint,
    h: &BigUint,
    prec: Precision,
) -> Result<Option<BigUint>> {
    if lambdas.len() != mus.len() || lambdas.is_empty() {
        return Err(Error::Precondition(format!(
            "need equal nonzero lengths, got {} angles and {} targets",
            lambdas.len(),
            mus.len()
        )));
    }
    let phis: Vec<UAngle> = lambdas.iter().map(|t| reduce(t, h)).collect();
    let period = phis
        .iter()
        .fold(BigUint::one(), |acc, p| acc.lcm(p.denom()));
    let last = q_max.min(&period).clone();
    let mut q = BigUint::one();
    while q <= last {
        let mut all = true;
        for (phi, mu) in phis.iter().zip(mus) {
            if !chord_lt(&reduce(phi, &q).sub(mu), epsilon, prec)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(Some(q));
        }
        q += 1u32;
    }
    Ok(None)
}

/// Uniform reduced rational with denominator in `[1, denom_max]`.
pub fn random_angle(rng: &mut impl Rng, denom_max: u64) -> UAngle {
    let d = rng.gen_range(1..=denom_max.max(1));
    let n = rng.gen_range(0..d);
    UAngle::from_u64(n, d).expect("positive denominator")
}

pub fn random_tuple(rng: &mut impl Rng, r: usize, denom_max: u64) -> Vec<UAngle> {
    (0..r).map(|_| random_angle(rng, denom_max)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub epsilons: Vec<(u64, u64)>,
    pub q_ladder: Vec<u64>,
    /// Random targets per tuple; the conjugate tuple is always added.
    pub random_targets: usize,
    /// Candidate values of `c` are `k/ladder_denom`.
    pub ladder_denom: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            epsilons: vec![(1, 2), (1, 4)],
            q_ladder: vec![1, 2, 4, 8, 16, 32, 64],
            random_targets: 4,
            ladder_denom: 8,
        }
    }
}

impl CalibrationConfig {
    /// The calibration ladder extended to `Q = 2^16`. With a calibrated `c`
    /// the condition almost never holds for `Q ≤ 64`, so soundness audits
    /// need the longer ladder to test anything.
    pub fn soundness() -> Self {
        CalibrationConfig {
            q_ladder: (0..=16).map(|k| 1u64 << k).collect(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub r: usize,
    pub trials: u64,
    pub denom_max: u64,
    pub seed: u64,
    #[serde(with = "serial::ratio")]
    pub c_estimate: BigRational,
    /// Upper bound on the condition's left side, minimized over `a`, across
    /// instances with no hit; `c` must exceed it.
    #[serde(with = "serial::opt_ratio")]
    pub max_failing_threshold: Option<BigRational>,
    pub instances: u64,
    pub failing_instances: u64,
}

/// Calibrates `c_r`: over seeded random tuples, targets and `(ε, Q)` pairs,
/// an instance without a hit must fail the condition, i.e. `c` must exceed
/// `min_a Q·|λ^a − 1| + ε·Σ|a_i|` there. The estimate is the smallest value
/// on the ladder `k/8` above every such minimum, the tightest `c` under which
/// passing implied a hit on every tested instance.
pub fn calibrate_c(
    r: usize,
    trials: u64,
    denom_max: u64,
    seed: u64,
    cfg: &CalibrationConfig,
    prec: Precision,
) -> Result<CalibrationReport> {
    if trials == 0 || r == 0 {
        return Err(Error::Precondition(
            "calibration needs r ≥ 1 and trials ≥ 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = BigUint::one();
    let mut max_fail: Option<BigRational> = None;
    let mut instances = 0u64;
    let mut failing = 0u64;
    for _ in 0..trials {
        let lambdas = random_tuple(&mut rng, r, denom_max);
        let mut targets: Vec<Vec<UAngle>> = (0..cfg.random_targets)
            .map(|_| random_tuple(&mut rng, r, 4 * denom_max))
            .collect();
        targets.push(lambdas.iter().map(UAngle::neg).collect());
        // a = d_i·e_i already gives a zero chord
        let k = lambdas
            .iter()
            .map(|t| t.denom().to_u64().unwrap_or(u64::MAX))
            .min()
            .unwrap_or(1);
        let mins = min_dist_by_norm(&lambdas, k);
        let chords: Vec<_> = mins
            .iter()
            .map(|(dist, _)| {
                chord(
                    &circle::DistZ::from_ratio(dist.clone()).expect("in range"),
                    prec.start_bits,
                )
            })
            .collect();
        for &(en, ed) in &cfg.epsilons {
            let eps = serial::ratio_from_u(en, ed);
            for &qv in &cfg.q_ladder {
                let qr = BigRational::from_integer(BigInt::from(qv));
                let threshold = chords
                    .iter()
                    .enumerate()
                    .map(|(i, e)| &qr * &e.hi + &eps * BigInt::from(i as u64 + 1))
                    .min()
                    .unwrap_or_else(|| eps.clone());
                for mu in &targets {
                    instances += 1;
                    let hit = simultaneous_hit(&lambdas, mu, &eps, &BigUint::from(qv), &one, prec)?;
                    if hit.is_none() {
                        failing += 1;
                        if max_fail.as_ref().is_none_or(|m| &threshold > m) {
                            max_fail = Some(threshold.clone());
                        }
                    }
                }
            }
        }
    }
    let step = BigRational::new(BigInt::one(), BigInt::from(cfg.ladder_denom.max(1)));
    let c_estimate = match &max_fail {
        None => step.clone(),
        Some(m) => (m / &step).floor() * &step + &step,
    };
    Ok(CalibrationReport {
        r,
        trials,
        denom_max,
        seed,
        c_estimate,
        max_failing_threshold: max_fail,
        instances,
        failing_instances: failing,
    })
}
