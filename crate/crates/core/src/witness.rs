//! Witness angles that make a block family non-recurrent.
//!
//! Given `m_1 < m_2 < …` with `m_{k+1} > 2m_k`, nested intervals pick out an
//! angle θ with `{m_k·θ} ≤ 2m_k/m_{k+1}` for every `k`, so that
//! `|e^{2iπ m_k θ} − 1| ≤ M·m_k/m_{k+1}` with `M = 4π`. Choosing the `m_k`
//! from a family's schedule keeps `μ = e^{2iπθ}` near −1 while the powers of
//! μ along a block stay within `2^−N` of μ itself.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::circle::{self, dist_to_z, reduce, ChordEnclosure, Precision, UAngle};
use crate::error::{Error, Result};
use crate::family::{BlockKind, SetFamily, Subset};
use crate::serial;

/// `88/7 > 4π`.
pub fn m_proxy() -> BigRational {
    serial::ratio_from_u(88, 7)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    Cantor,
    Mu0,
    MuEmpty,
    MuSubset(Subset),
}

impl TargetKind {
    /// The block kind this witness keeps away from 1.
    pub fn block_kind(self) -> Option<BlockKind> {
        match self {
            TargetKind::Cantor => None,
            TargetKind::Mu0 => Some(BlockKind::Zero),
            TargetKind::MuEmpty => Some(BlockKind::Empty),
            TargetKind::MuSubset(a) => Some(BlockKind::Subset(a)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundCert {
    pub k: usize,
    /// Exact `{m_k·θ}`.
    #[serde(with = "serial::ratio")]
    pub dist: BigRational,
    /// `2·m_k/m_{k+1}`, or 0 at the last level where θ is a center.
    #[serde(with = "serial::ratio")]
    pub bound: BigRational,
}

impl BoundCert {
    pub fn holds(&self) -> bool {
        self.dist <= self.bound
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessAngle {
    pub theta: UAngle,
    pub target: TargetKind,
    #[serde(with = "serial::ratio")]
    pub seed_lo: BigRational,
    #[serde(with = "serial::ratio")]
    pub seed_hi: BigRational,
    #[serde(with = "serial::uint_vec")]
    pub m: Vec<BigUint>,
    pub bound_certs: Vec<BoundCert>,
}

fn ratio_of(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

/// Nearest integer to `x`, ties to the smaller one.
fn nearest(x: &BigRational) -> BigInt {
    let f = x.floor();
    let frac = x - &f;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    if frac > half {
        f.to_integer() + 1
    } else {
        f.to_integer()
    }
}

/// Nested-interval angle for the sequence `m` refined through `depth`
/// levels, aiming at the seed midpoint.
pub fn cantor_angle(
    m: &[BigUint],
    seed: (&BigRational, &BigRational),
    depth: usize,
) -> Result<WitnessAngle> {
    let (lo0, hi0) = seed;
    if depth == 0 || depth > m.len() {
        return Err(Error::Precondition(format!(
            "depth {depth} must lie in 1..={}",
            m.len()
        )));
    }
    if m[0].is_zero() {
        return Err(Error::Precondition("m_1 must be positive".into()));
    }
    for k in 0..m.len() - 1 {
        if m[k + 1] <= &m[k] * 2u32 {
            return Err(Error::RatioViolation(k + 1));
        }
    }
    // 6π/m_1 radians of arc is 3/m_1 turns
    let min_len = BigRational::new(BigInt::from(3), BigInt::from(m[0].clone()));
    if hi0 - lo0 < min_len {
        return Err(Error::Precondition(format!(
            "seed interval shorter than 3/m_1 = {min_len}"
        )));
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let target = (lo0 + hi0) / &two;
    let (mut lo, mut hi) = (lo0.clone(), hi0.clone());
    let mut center = target.clone();
    for k in 0..depth {
        let mk = ratio_of(&m[k]);
        let rho = match m.get(k + 1) {
            Some(next) => &two / ratio_of(next),
            None => BigRational::zero(),
        };
        let j_lo = ((&lo + &rho) * &mk).ceil().to_integer();
        let j_hi = ((&hi - &rho) * &mk).floor().to_integer();
        if j_lo > j_hi {
            return Err(Error::EmptyIntersection(k + 1));
        }
        let j = nearest(&(&target * &mk)).clamp(j_lo, j_hi);
        center = BigRational::from_integer(j) / &mk;
        lo = &center - &rho;
        hi = &center + &rho;
    }
    let theta = UAngle::from_ratio(&center);
    let bound_certs = (0..depth)
        .map(|k| {
            let dist = dist_to_z(&reduce(&theta, &m[k])).value().clone();
            let bound = match m.get(k + 1) {
                Some(next) => &two * ratio_of(&m[k]) / ratio_of(next),
                None => BigRational::zero(),
            };
            BoundCert {
                k: k + 1,
                dist,
                bound,
            }
        })
        .collect::<Vec<_>>();
    if let Some(bad) = bound_certs.iter().find(|c| !c.holds()) {
        return Err(Error::EmptyIntersection(bad.k));
    }
    Ok(WitnessAngle {
        theta,
        target: TargetKind::Cantor,
        seed_lo: lo0.clone(),
        seed_hi: hi0.clone(),
        m: m.to_vec(),
        bound_certs,
    })
}

/// `[1/2 − 3/(2m_1), 1/2 + 3/(2m_1)]`, the shortest admissible seed around −1.
pub fn seed_near_half(m1: &BigUint) -> (BigRational, BigRational) {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let w = BigRational::new(BigInt::from(3), BigInt::from(m1.clone()) * 2);
    (&half - &w, &half + &w)
}

fn witness_for(m: Vec<BigUint>, target: TargetKind) -> Result<WitnessAngle> {
    let (lo, hi) = seed_near_half(&m[0]);
    let mut w = cantor_angle(&m, (&lo, &hi), m.len())?;
    w.target = target;
    Ok(w)
}

fn delta_of(family: &SetFamily, n: usize, a: Subset) -> Result<&BigUint> {
    family.stages[n].delta.get(&a).ok_or_else(|| {
        Error::Precondition(format!("stage {} has no Δ for {a}", family.stages[n].n))
    })
}

/// `m_N = H_N`.
pub fn witness_mu0(family: &SetFamily) -> Result<WitnessAngle> {
    let m = family.stages.iter().map(|s| s.h.clone()).collect();
    witness_for(m, TargetKind::Mu0)
}

/// `m_N = H_N·Δ_∅ − 1`.
pub fn witness_mu_empty(family: &SetFamily) -> Result<WitnessAngle> {
    let mut m = Vec::new();
    for (i, s) in family.stages.iter().enumerate() {
        let v = &s.h * delta_of(family, i, Subset::EMPTY)?;
        if v <= BigUint::one() {
            return Err(Error::Precondition("H·Δ_∅ must exceed 1".into()));
        }
        m.push(v - 1u32);
    }
    witness_for(m, TargetKind::MuEmpty)
}

/// Interleaved `m_{2N−1} = H_N·Δ_A − 1`, `m_{2N} = H_N·Δ_A·L_N`.
pub fn witness_mu_subset(family: &SetFamily, a: Subset) -> Result<WitnessAngle> {
    if a.is_empty() {
        return Err(Error::Precondition(
            "subset witness needs a nonempty subset".into(),
        ));
    }
    let mut m = Vec::new();
    for (i, s) in family.stages.iter().enumerate() {
        let hd = &s.h * delta_of(family, i, a)?;
        m.push(&hd - 1u32);
        m.push(hd * &s.l);
    }
    witness_for(m, TargetKind::MuSubset(a))
}

/// The `2^{r−1} + 1` witnesses of a family: zero, empty, then every
/// nonempty subset.
pub fn all_witnesses(family: &SetFamily) -> Result<Vec<WitnessAngle>> {
    let mut out = vec![witness_mu0(family)?, witness_mu_empty(family)?];
    for a in Subset::all(family.r - 1).filter(|a| !a.is_empty()) {
        out.push(witness_mu_subset(family, a)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub stage: u32,
    /// Bound on `|μ^n − μ|` over the stage's block, from the Cantor bounds.
    #[serde(with = "serial::ratio")]
    pub drift: BigRational,
    /// `2^−N`.
    #[serde(with = "serial::ratio")]
    pub allowed: BigRational,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessVerification {
    pub target: TargetKind,
    pub theta: UAngle,
    pub bounds_hold: bool,
    /// Enclosure of `|μ − 1|`.
    pub base_chord: ChordEnclosure,
    /// Certified `|μ − 1| > δ + 2^−N` at every stage.
    pub base_ok: bool,
    /// Certified `|μ + 1| < 18/m_1`, which is below `6π/m_1`.
    pub near_minus_one: bool,
    pub obligations: Vec<Obligation>,
    pub passed: bool,
}

/// Checks the chain `|μ^n − 1| ≥ |μ − 1| − 2^−N > δ` on every stage.
pub fn verify_witness(
    w: &WitnessAngle,
    family: &SetFamily,
    delta: &BigRational,
    prec: Precision,
) -> Result<WitnessVerification> {
    let m_const = m_proxy();
    let ratio = |k: usize| -> BigRational {
        match w.m.get(k + 1) {
            Some(next) => &m_const * ratio_of(&w.m[k]) / ratio_of(next),
            None => BigRational::zero(),
        }
    };
    let mut obligations = Vec::new();
    for (i, st) in family.stages.iter().enumerate() {
        let drift = match w.target {
            TargetKind::Mu0 => ratio_of(&st.q) * ratio(i),
            TargetKind::MuEmpty => ratio(i),
            TargetKind::MuSubset(_) => ratio(2 * i) + ratio_of(&st.theta) * ratio(2 * i + 1),
            TargetKind::Cantor => {
                return Err(Error::Precondition(
                    "plain Cantor angles have no block obligations".into(),
                ))
            }
        };
        let allowed = serial::two_pow_neg(st.n);
        let ok = drift <= allowed;
        obligations.push(Obligation {
            stage: st.n,
            drift,
            allowed,
            ok,
        });
    }
    let d = dist_to_z(&w.theta);
    let worst = family
        .stages
        .iter()
        .map(|s| delta + serial::two_pow_neg(s.n))
        .max()
        .unwrap_or_else(|| delta.clone());
    let base_ok = circle::cmp_chord(&d, &worst, prec)? == std::cmp::Ordering::Greater;
    let base_chord = circle::certificate(&d, &worst, prec)?;
    let seed_bound = match w.m.first() {
        Some(m1) => BigRational::from_integer(18.into()) / ratio_of(m1),
        None => BigRational::one(),
    };
    let near_minus_one = circle::chord_lt(&w.theta.sub(&UAngle::half()), &seed_bound, prec)?;
    let bounds_hold = w.bound_certs.iter().all(BoundCert::holds);
    let passed = bounds_hold && base_ok && obligations.iter().all(|o| o.ok);
    Ok(WitnessVerification {
        target: w.target,
        theta: w.theta.clone(),
        bounds_hold,
        base_chord,
        base_ok,
        near_minus_one,
        obligations,
        passed,
    })
}

/// Certified `|μ^n − 1| > δ`.
pub fn certify_far(
    theta: &UAngle,
    n: &BigUint,
    delta: &BigRational,
    prec: Precision,
) -> Result<bool> {
    circle::chord_gt(&reduce(theta, n), delta, prec)
}

/// `m_1, m_1², m_1⁴, …` of length `len`.
pub fn squares_from(m1: u64, len: usize) -> Vec<BigUint> {
    let mut v = vec![BigUint::from(m1)];
    while v.len() < len {
        let last = v.last().expect("nonempty").clone();
        v.push(&last * &last);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serial::ratio_from_u;
    use num_traits::Signed;

    #[test]
    fn even_sequence_gives_half() {
        let m: Vec<BigUint> = [10u64, 40, 200, 1000]
            .iter()
            .map(|&x| BigUint::from(x))
            .collect();
        let (lo, hi) = seed_near_half(&m[0]);
        let w = cantor_angle(&m, (&lo, &hi), 4).unwrap();
        assert_eq!(w.theta, UAngle::half());
        assert!(w.bound_certs.iter().all(|c| c.dist.is_zero()));
    }

    #[test]
    fn ratio_two_is_rejected() {
        let m: Vec<BigUint> = [10u64, 20].iter().map(|&x| BigUint::from(x)).collect();
        let (lo, hi) = seed_near_half(&m[0]);
        assert_eq!(
            cantor_angle(&m, (&lo, &hi), 2),
            Err(Error::RatioViolation(1))
        );
    }

    #[test]
    fn short_seed_is_rejected() {
        let m = squares_from(100, 3);
        let lo = ratio_from_u(49, 100);
        let hi = ratio_from_u(50, 100);
        assert!(matches!(
            cantor_angle(&m, (&lo, &hi), 3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn squares_sequence_bounds() {
        let m = squares_from(100, 11);
        let (lo, hi) = seed_near_half(&m[0]);
        let w = cantor_angle(&m, (&lo, &hi), 10).unwrap();
        assert_eq!(w.bound_certs.len(), 10);
        for (k, c) in w.bound_certs.iter().enumerate() {
            let d = dist_to_z(&reduce(&w.theta, &m[k])).value().clone();
            let bound = BigRational::new(BigInt::from(2), BigInt::from(m[k].clone()));
            assert!(d <= bound, "level {}", k + 1);
            assert_eq!(c.dist, d);
        }
        assert!(w.theta.to_ratio() >= lo && w.theta.to_ratio() <= hi);
        assert!(circle::chord_lt(
            &w.theta.sub(&UAngle::half()),
            &BigRational::one(),
            Precision::default()
        )
        .unwrap());
    }

    #[test]
    fn deterministic() {
        let m = squares_from(30, 4);
        let (lo, hi) = seed_near_half(&m[0]);
        assert_eq!(
            cantor_angle(&m, (&lo, &hi), 4).unwrap(),
            cantor_angle(&m, (&lo, &hi), 4).unwrap()
        );
    }

    #[test]
    fn negative_seed_is_fine() {
        let m = squares_from(30, 3);
        let lo = ratio_from_u(0, 1) - ratio_from_u(1, 10);
        let hi = ratio_from_u(1, 10);
        let w = cantor_angle(&m, (&lo, &hi), 3).unwrap();
        assert!(w.bound_certs.iter().all(BoundCert::holds));
        assert!(!w.theta.to_ratio().is_negative());
    }

    fn family(r: u32, stages: u32) -> SetFamily {
        use crate::family::{build_family, FamilyConfig, ScheduleHints};
        build_family(
            r,
            stages,
            &ScheduleHints::default(),
            &FamilyConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn r1_witnesses_verify() {
        let fam = family(1, 4);
        let ws = all_witnesses(&fam).unwrap();
        assert_eq!(ws.len(), 2);
        let half = ratio_from_u(1, 2);
        for w in &ws {
            let v = verify_witness(w, &fam, &half, Precision::default()).unwrap();
            assert!(v.passed, "{:?}", v.obligations);
            assert!(v.near_minus_one);
        }
        assert_eq!(ws[0].bound_certs.len(), 4);
    }

    #[test]
    fn r2_witnesses_verify() {
        let fam = family(2, 2);
        let ws = all_witnesses(&fam).unwrap();
        assert_eq!(ws.len(), 3);
        assert_eq!(ws[2].target, TargetKind::MuSubset(Subset::from_elems(&[1])));
        assert_eq!(ws[2].m.len(), 4);
        for w in &ws {
            assert!(
                verify_witness(w, &fam, &ratio_from_u(1, 2), Precision::default())
                    .unwrap()
                    .passed
            );
        }
    }

    #[test]
    fn small_h2_breaks_obligation() {
        let mut fam = family(1, 2);
        fam.stages[1].h = &fam.stages[0].h * 3u32;
        fam.stages[1].rebuild_blocks();
        let w = witness_mu0(&fam).unwrap();
        assert!(
            !verify_witness(&w, &fam, &ratio_from_u(1, 2), Precision::default())
                .unwrap()
                .passed
        );
    }

    #[test]
    fn delta_two_fails() {
        let fam = family(1, 1);
        let w = witness_mu0(&fam).unwrap();
        assert!(
            !verify_witness(&w, &fam, &ratio_from_u(2, 1), Precision::default())
                .unwrap()
                .passed
        );
    }
}
