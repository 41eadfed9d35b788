//! Exact circle arithmetic.
//!
//! Angles are rationals in turns (`θ ∈ [0,1)`, `λ = e^{2iπθ}`), so `λ^n` is
//! `n·θ mod 1` and every chord `|λ^n − 1| = 2·sin(π·{nθ})` reduces to a sine
//! of a rational multiple of π. Sines are enclosed in dyadic intervals using
//! fixed-point interval arithmetic on big integers; π comes from Machin's
//! formula with an explicit error bound.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Mutex;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::serial;

/// Rational angle in turns, canonical: `0 ≤ numer < denom`, `gcd = 1`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UAngle {
    numer: BigUint,
    denom: BigUint,
}

impl UAngle {
    /// Builds the canonical angle of `numer/denom mod 1`. Negative numerators
    /// wrap around.
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Result<Self> {
        let numer = numer.into();
        let denom = denom.into();
        if !denom.is_positive() {
            return Err(Error::InvalidAngle(format!(
                "denominator {denom} must be positive"
            )));
        }
        let r = numer.mod_floor(&denom);
        let g = r.gcd(&denom);
        let (n, d) = if r.is_zero() {
            (BigInt::zero(), BigInt::one())
        } else {
            (r / &g, denom / &g)
        };
        Ok(UAngle {
            numer: n.to_biguint().expect("nonnegative"),
            denom: d.to_biguint().expect("positive"),
        })
    }

    pub fn from_u64(numer: u64, denom: u64) -> Result<Self> {
        Self::new(BigInt::from(numer), BigInt::from(denom))
    }

    pub fn from_ratio(q: &BigRational) -> Self {
        Self::new(q.numer().clone(), q.denom().clone()).expect("rational denominators are nonzero")
    }

    pub fn zero() -> Self {
        UAngle {
            numer: BigUint::zero(),
            denom: BigUint::one(),
        }
    }

    pub fn half() -> Self {
        UAngle {
            numer: BigUint::one(),
            denom: BigUint::from(2u32),
        }
    }

    pub fn numer(&self) -> &BigUint {
        &self.numer
    }

    pub fn denom(&self) -> &BigUint {
        &self.denom
    }

    pub fn is_zero(&self) -> bool {
        self.numer.is_zero()
    }

    pub fn to_ratio(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.numer.clone()),
            BigInt::from(self.denom.clone()),
        )
    }

    /// `self + other mod 1`.
    pub fn add(&self, other: &UAngle) -> UAngle {
        UAngle::from_ratio(&(self.to_ratio() + other.to_ratio()))
    }

    /// `self − other mod 1`.
    pub fn sub(&self, other: &UAngle) -> UAngle {
        UAngle::from_ratio(&(self.to_ratio() - other.to_ratio()))
    }

    /// `−self mod 1`, the angle of the complex conjugate.
    pub fn neg(&self) -> UAngle {
        if self.is_zero() {
            return self.clone();
        }
        UAngle {
            numer: &self.denom - &self.numer,
            denom: self.denom.clone(),
        }
    }

    /// Multiplies by a signed integer mod 1.
    pub fn times(&self, k: &BigInt) -> UAngle {
        let n = BigInt::from(self.numer.clone()) * k;
        UAngle::new(n, BigInt::from(self.denom.clone())).expect("positive denominator")
    }
}

impl fmt::Debug for UAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl fmt::Display for UAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl Serialize for UAngle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for UAngle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let q = serial::parse_ratio(&s).map_err(serde::de::Error::custom)?;
        Ok(UAngle::from_ratio(&q))
    }
}

/// Canonical angle of `n·θ mod 1`.
pub fn reduce(theta: &UAngle, n: &BigUint) -> UAngle {
    let m = (n * &theta.numer) % &theta.denom;
    UAngle::new(BigInt::from(m), BigInt::from(theta.denom.clone())).expect("positive denominator")
}

/// Distance of an angle to the nearest integer, in `[0, 1/2]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DistZ(BigRational);

impl DistZ {
    pub fn value(&self) -> &BigRational {
        &self.0
    }

    /// Wraps a rational already known to lie in `[0, 1/2]`.
    pub fn from_ratio(q: BigRational) -> Result<Self> {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        if q.is_negative() || q > half {
            return Err(Error::InvalidAngle(format!(
                "distance {q} outside [0, 1/2]"
            )));
        }
        Ok(DistZ(q))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

pub fn dist_to_z(theta: &UAngle) -> DistZ {
    let comp = &theta.denom - &theta.numer;
    let n = if comp < theta.numer {
        comp
    } else {
        theta.numer.clone()
    };
    DistZ(BigRational::new(
        BigInt::from(n),
        BigInt::from(theta.denom.clone()),
    ))
}

/// Certified enclosure `lo ≤ 2·sin(π·d) ≤ hi` with dyadic endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordEnclosure {
    #[serde(with = "serial::ratio")]
    pub lo: BigRational,
    #[serde(with = "serial::ratio")]
    pub hi: BigRational,
    pub precision_bits: u32,
}

impl ChordEnclosure {
    fn exact(v: i64, precision_bits: u32) -> Self {
        let v = BigRational::from_integer(BigInt::from(v));
        ChordEnclosure {
            lo: v.clone(),
            hi: v,
            precision_bits,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChordCmp {
    Below,
    Above,
    Inconclusive,
}

/// `Below` iff `hi < bound`, `Above` iff `lo > bound`.
pub fn compare_chord(e: &ChordEnclosure, bound: &BigRational) -> ChordCmp {
    if &e.hi < bound {
        ChordCmp::Below
    } else if &e.lo > bound {
        ChordCmp::Above
    } else {
        ChordCmp::Inconclusive
    }
}

/// Working precision: start at `start_bits`, double on an inconclusive
/// comparison, give up past `cap_bits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    pub start_bits: u32,
    pub cap_bits: u32,
}

impl Default for Precision {
    fn default() -> Self {
        Precision {
            start_bits: 128,
            cap_bits: 4096,
        }
    }
}

impl Precision {
    pub fn with_start(start_bits: u32) -> Self {
        Precision {
            start_bits,
            ..Default::default()
        }
    }

    fn ladder(self) -> impl Iterator<Item = u32> {
        let cap = self.cap_bits.max(self.start_bits);
        std::iter::successors(Some(self.start_bits.max(8)), move |&b| {
            (b < cap).then(|| (b * 2).min(cap))
        })
    }
}

// ---------------------------------------------------------------------------
// π and sine in fixed point

struct PiCache {
    bits: u32,
    lo: BigInt,
    hi: BigInt,
}

static PI_CACHE: Mutex<Option<PiCache>> = Mutex::new(None);

fn pow2(bits: u32) -> BigInt {
    BigInt::one() << bits as usize
}

/// `2^w·atan(1/m)` truncated, and the number of series terms used.
fn atan_inv_scaled(m: u32, w: u32) -> (BigInt, u64) {
    let m2 = BigInt::from(m as u64 * m as u64);
    let mut t = pow2(w) / BigInt::from(m);
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    while !t.is_zero() {
        let term = &t / BigInt::from(2 * k + 1);
        if k.is_multiple_of(2) {
            sum += term;
        } else {
            sum -= term;
        }
        t /= &m2;
        k += 1;
    }
    (sum, k)
}

fn compute_pi(bits: u32) -> PiCache {
    let guard = 32;
    let w = bits + guard;
    let (a5, n5) = atan_inv_scaled(5, w);
    let (a239, n239) = atan_inv_scaled(239, w);
    let approx = a5 * 16 - a239 * 4;
    // each series term carries < 3 ulps of truncation error, plus 1 for the tail
    let err = BigInt::from(16 * (3 * n5 + 4) + 4 * (3 * n239 + 4));
    let lo = (&approx - &err) >> guard as usize;
    let hi_num = &approx + &err;
    let hi = ceil_shift(&hi_num, guard);
    PiCache { bits, lo, hi }
}

fn ceil_shift(x: &BigInt, s: u32) -> BigInt {
    let d = pow2(s);
    x.div_ceil(&d)
}

/// Integers `(lo, hi)` with `lo ≤ 2^bits·π ≤ hi`.
pub fn pi_scaled(bits: u32) -> (BigInt, BigInt) {
    let mut guard = PI_CACHE.lock().expect("pi cache poisoned");
    let need = match guard.as_ref() {
        Some(c) => c.bits < bits,
        None => true,
    };
    if need {
        let target = bits
            .max(4096 + 64)
            .max(guard.as_ref().map_or(0, |c| c.bits * 2));
        *guard = Some(compute_pi(target));
    }
    let c = guard.as_ref().expect("filled above");
    let shift = c.bits - bits;
    (&c.lo >> shift as usize, ceil_shift(&c.hi, shift))
}

/// Rational enclosure of π with width below `2^(2-bits)`.
pub fn pi_enclosure(bits: u32) -> (BigRational, BigRational) {
    let (lo, hi) = pi_scaled(bits);
    let d = pow2(bits);
    (BigRational::new(lo, d.clone()), BigRational::new(hi, d))
}

/// Lower and upper bounds on `2^w·sin(X/2^w)` for an exact `X ≥ 0` with
/// `X/2^w ≤ 2`.
fn sin_bounds_scaled(x: &BigInt, w: u32) -> (BigInt, BigInt) {
    if x.is_zero() {
        return (BigInt::zero(), BigInt::zero());
    }
    let x2 = x * x;
    let scale2 = pow2(2 * w);
    let mut tl = x.clone();
    let mut th = x.clone();
    let mut lower = BigInt::zero();
    let mut upper = BigInt::zero();
    let mut k: u64 = 1;
    loop {
        let positive = k % 4 == 1;
        if positive {
            lower += &tl;
            upper += &th;
        } else {
            lower -= &th;
            upper -= &tl;
        }
        let div = &scale2 * BigInt::from((k + 1) * (k + 2));
        tl = (&tl * &x2).div_floor(&div);
        th = (&th * &x2).div_ceil(&div);
        k += 2;
        if th <= BigInt::one() {
            break;
        }
    }
    // alternating series with decreasing terms: tail bounded by next term
    lower -= &th;
    upper += &th;
    (lower, upper)
}

fn exact_chord(d: &BigRational) -> Option<i64> {
    let n = d.numer();
    let q = d.denom();
    if n.is_zero() {
        Some(0)
    } else if n.is_one() && *q == BigInt::from(2) {
        Some(2)
    } else if n.is_one() && *q == BigInt::from(6) {
        Some(1)
    } else {
        None
    }
}

/// Certified enclosure of `2·sin(π·d)` with `hi − lo ≤ 2^(1−precision_bits)`.
pub fn chord(d: &DistZ, precision_bits: u32) -> ChordEnclosure {
    let p = precision_bits.max(8);
    if let Some(v) = exact_chord(&d.0) {
        return ChordEnclosure::exact(v, p);
    }
    let guard = 24 + (64 - (p as u64).leading_zeros());
    let w = p + guard;
    let (pi_lo, pi_hi) = pi_scaled(w);
    let num = d.0.numer();
    let den = d.0.denom();
    let x_lo = (&pi_lo * num).div_floor(den);
    let x_hi = (&pi_hi * num).div_ceil(den);
    let (s_lo, _) = sin_bounds_scaled(&x_lo, w);
    let one = pow2(w);
    let half_pi_lo = &pi_lo >> 1usize;
    let s_hi = if x_hi <= half_pi_lo {
        sin_bounds_scaled(&x_hi, w).1.min(one.clone())
    } else {
        one.clone()
    };
    // The pad dominates the accumulated truncation error at any working
    // precision and halves with each extra bit, which keeps enclosures at
    // increasing precision nested after grid rounding.
    let pad = pow2(16);
    let s_lo = s_lo - &pad;
    let s_hi = s_hi + &pad;
    // 2·sin, rounded outward onto the 2^-(p+1) grid
    let drop = w - (p + 1);
    let lo_g: BigInt = (s_lo * BigInt::from(2)) >> drop as usize;
    let lo_g = lo_g.max(BigInt::zero());
    let hi_g = ceil_shift(&(s_hi * BigInt::from(2)), drop).min(pow2(p + 2));
    let grid = pow2(p + 1);
    ChordEnclosure {
        lo: BigRational::new(lo_g, grid.clone()),
        hi: BigRational::new(hi_g, grid),
        precision_bits: p,
    }
}

/// `chord(dist_to_z(reduce(theta, n)))`.
pub fn pow_chord(theta: &UAngle, n: &BigUint, precision_bits: u32) -> ChordEnclosure {
    chord(&dist_to_z(&reduce(theta, n)), precision_bits)
}

/// `710/113 > 2π`, the rational used for cheap upper screening.
fn two_pi_upper() -> BigRational {
    BigRational::new(BigInt::from(710), BigInt::from(113))
}

/// Certified comparison of `2·sin(π·d)` against a rational bound; `Equal`
/// only when the chord is exactly representable and equals the bound.
pub fn cmp_chord(d: &DistZ, bound: &BigRational, prec: Precision) -> Result<Ordering> {
    if let Some(v) = exact_chord(&d.0) {
        return Ok(BigRational::from_integer(BigInt::from(v)).cmp(bound));
    }
    // 4d < chord < 2π·d for 0 < d < 1/2
    let four_d = &d.0 * BigInt::from(4);
    if &four_d >= bound {
        return Ok(Ordering::Greater);
    }
    if &(&d.0 * two_pi_upper()) <= bound {
        return Ok(Ordering::Less);
    }
    let mut last = 0;
    for bits in prec.ladder() {
        last = bits;
        match compare_chord(&chord(d, bits), bound) {
            ChordCmp::Below => return Ok(Ordering::Less),
            ChordCmp::Above => return Ok(Ordering::Greater),
            ChordCmp::Inconclusive => {}
        }
    }
    Err(Error::Inconclusive {
        bits: last,
        what: format!("chord({}) vs {}", d.0, bound),
    })
}

/// Certified `|e^{2iπθ} − 1| < bound`.
pub fn chord_lt(theta: &UAngle, bound: &BigRational, prec: Precision) -> Result<bool> {
    Ok(cmp_chord(&dist_to_z(theta), bound, prec)? == Ordering::Less)
}

/// Certified `|e^{2iπθ} − 1| ≤ bound`.
pub fn chord_le(theta: &UAngle, bound: &BigRational, prec: Precision) -> Result<bool> {
    Ok(cmp_chord(&dist_to_z(theta), bound, prec)? != Ordering::Greater)
}

/// Certified `|e^{2iπθ} − 1| > bound`.
pub fn chord_gt(theta: &UAngle, bound: &BigRational, prec: Precision) -> Result<bool> {
    Ok(cmp_chord(&dist_to_z(theta), bound, prec)? == Ordering::Greater)
}

/// An enclosure tight enough to certify a decided comparison: doubles the
/// precision until the enclosure lies strictly on one side of `bound`, or
/// the chord is exact.
pub fn certificate(d: &DistZ, bound: &BigRational, prec: Precision) -> Result<ChordEnclosure> {
    let mut last = 0;
    for bits in prec.ladder() {
        last = bits;
        let e = chord(d, bits);
        if e.is_exact() || compare_chord(&e, bound) != ChordCmp::Inconclusive {
            return Ok(e);
        }
    }
    Err(Error::Inconclusive {
        bits: last,
        what: format!("certificate for chord({}) vs {}", d.0, bound),
    })
}

/// Certifies `4·d ≤ 2·sin(π·d) ≤ 2π·d`, returning the precision that
/// settled both sides. `Ok(None)` means a side is certified false.
pub fn linear_bounds(d: &DistZ, prec: Precision) -> Result<Option<u32>> {
    let four_d = &d.0 * BigInt::from(4);
    let mut last = 0;
    for bits in prec.ladder() {
        last = bits;
        let e = chord(d, bits);
        let (pi_lo, pi_hi) = pi_enclosure(bits);
        let two_d = &d.0 * BigInt::from(2);
        if e.hi < four_d || e.lo > &pi_hi * &two_d {
            return Ok(None);
        }
        if e.lo >= four_d && e.hi <= &pi_lo * &two_d {
            return Ok(Some(bits));
        }
    }
    Err(Error::Inconclusive {
        bits: last,
        what: format!("linear bounds at d = {}", d.0),
    })
}

/// Per-denominator thresholds for comparing chords of angles `k/d` against
/// one fixed bound. Since `2·sin(πx)` increases on `[0, 1/2]`, the
/// distances passing the test form a prefix `{0, …, cut(d) − 1}`.
#[derive(Clone, Debug)]
pub struct CutoffTable {
    bound: BigRational,
    strict: bool,
    cuts: Vec<u64>,
}

impl CutoffTable {
    /// Thresholds for every denominator `1 ≤ d ≤ max_denom`; `strict`
    /// selects `<` over `≤`.
    pub fn new(bound: &BigRational, strict: bool, max_denom: u64, prec: Precision) -> Result<Self> {
        let mut cuts = vec![0u64; max_denom as usize + 1];
        for d in 1..=max_denom {
            cuts[d as usize] = Self::compute_cut(bound, strict, d, prec)?;
        }
        Ok(CutoffTable {
            bound: bound.clone(),
            strict,
            cuts,
        })
    }

    fn passes(bound: &BigRational, strict: bool, k: u64, d: u64, prec: Precision) -> Result<bool> {
        let dist = DistZ(serial::ratio_from_u(k, d));
        let ord = cmp_chord(&dist, bound, prec)?;
        Ok(ord == Ordering::Less || (!strict && ord == Ordering::Equal))
    }

    fn compute_cut(bound: &BigRational, strict: bool, d: u64, prec: Precision) -> Result<u64> {
        // largest passing k in [0, d/2], by bisection
        let top = d / 2;
        if !Self::passes(bound, strict, 0, d, prec)? {
            return Ok(0);
        }
        let (mut lo, mut hi) = (0u64, top + 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if Self::passes(bound, strict, mid, d, prec)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo + 1)
    }

    pub fn bound(&self) -> &BigRational {
        &self.bound
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn max_denom(&self) -> u64 {
        self.cuts.len() as u64 - 1
    }

    /// Whether the angle `residue/d` passes.
    #[inline]
    pub fn passes_residue(&self, residue: u64, d: u64) -> bool {
        let r = residue % d;
        let k = r.min(d - r);
        k < self.cuts[d as usize]
    }
}

/// Small-denominator view of an angle, for table-driven scans.
pub fn small_parts(theta: &UAngle) -> Option<(u64, u64)> {
    Some((theta.numer.to_u64()?, theta.denom.to_u64()?))
}

/// Residue of a big integer modulo a machine word.
pub fn mod_u64(n: &BigUint, m: u64) -> u64 {
    (n % m).to_u64().expect("residue fits")
}

pub fn is_negative_int(n: &BigInt) -> bool {
    n.sign() == Sign::Minus
}
