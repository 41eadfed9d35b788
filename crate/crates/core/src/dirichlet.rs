//! One-dimensional engine: powers of a rotation forming an ε-net, and the
//! collapse-or-hit dichotomy with its factorial constants.
//!
//! The dichotomy says that for every angle λ either `|λ^{HΣL} − 1| < ε`, or
//! some `j ≤ Θ` has `|λ^{HLj+S} − 1| < ε`, where `κ = ⌊4π³/ε⌋`, `Σ = κ!` and
//! `Θ = κ·⌊(4π³/ε)·κ!⌋`. The empirical counterpart searches the smallest
//! constants that make the statement true on a finite grid of rationals.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::circle::{
    self, certificate, chord_lt, dist_to_z, reduce, ChordEnclosure, CutoffTable, Precision, UAngle,
};
use crate::error::{Error, Result};
use crate::serial;

/// Largest κ for which `κ!` is materialized.
pub const DEFAULT_MAX_FACTORIAL_ARG: u64 = 100_000;

/// Closed rational interval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatInterval {
    #[serde(with = "serial::ratio")]
    pub lo: BigRational,
    #[serde(with = "serial::ratio")]
    pub hi: BigRational,
}

impl RatInterval {
    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }
}

/// Enclosures of `C = M₂/M₁ = π/2` and `C′ = M₂ = 2π`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConstants {
    pub c: RatInterval,
    pub cprime: RatInterval,
}

pub fn net_constants() -> NetConstants {
    net_constants_at(256)
}

pub fn net_constants_at(bits: u32) -> NetConstants {
    let (lo, hi) = circle::pi_enclosure(bits);
    let two = BigInt::from(2);
    NetConstants {
        c: RatInterval {
            lo: &lo / &two,
            hi: &hi / &two,
        },
        cprime: RatInterval {
            lo: lo * &two,
            hi: hi * &two,
        },
    }
}

/// Enclosure of `4π³`.
pub fn four_pi_cubed(bits: u32) -> RatInterval {
    let (lo, hi) = circle::pi_enclosure(bits);
    let four = BigInt::from(4);
    RatInterval {
        lo: &lo * &lo * &lo * &four,
        hi: &hi * &hi * &hi * &four,
    }
}

/// Floor of a real known through enclosures that tighten with precision.
pub(crate) fn certified_floor(
    start_bits: u32,
    cap_bits: u32,
    what: &str,
    enclose: impl Fn(u32) -> RatInterval,
) -> Result<BigInt> {
    let mut bits = start_bits;
    loop {
        let iv = enclose(bits);
        let lo = iv.lo.floor().to_integer();
        let hi = iv.hi.floor().to_integer();
        if lo == hi {
            return Ok(lo);
        }
        if bits >= cap_bits {
            return Err(Error::Inconclusive {
                bits,
                what: what.to_string(),
            });
        }
        bits = (bits * 2).min(cap_bits);
    }
}

fn bit_len(n: &BigUint) -> u32 {
    n.bits() as u32
}

pub fn factorial(k: u64) -> BigUint {
    (2..=k).fold(BigUint::one(), |acc, i| acc * i)
}

/// `(κ, Σ, Θ)` for one ε.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyParams {
    #[serde(with = "serial::ratio")]
    pub epsilon: BigRational,
    #[serde(with = "serial::uint")]
    pub kappa: BigUint,
    #[serde(rename = "Sigma", with = "serial::uint")]
    pub sigma: BigUint,
    #[serde(rename = "Theta", with = "serial::uint")]
    pub theta: BigUint,
}

pub fn dichotomy_params(epsilon: &BigRational) -> Result<DichotomyParams> {
    dichotomy_params_limited(epsilon, DEFAULT_MAX_FACTORIAL_ARG)
}

pub fn dichotomy_params_limited(epsilon: &BigRational, max_kappa: u64) -> Result<DichotomyParams> {
    if !epsilon.is_positive() {
        return Err(Error::Precondition(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    const CAP: u32 = 1 << 22;
    let ratio = |bits: u32| {
        let iv = four_pi_cubed(bits);
        RatInterval {
            lo: iv.lo / epsilon,
            hi: iv.hi / epsilon,
        }
    };
    let kappa = certified_floor(128, CAP, "floor(4π³/ε)", ratio)?;
    if kappa.is_zero() {
        return Err(Error::EpsilonTooLarge(format!(
            "epsilon {epsilon} exceeds 4π³, so ⌊4π³/ε⌋ = 0"
        )));
    }
    let k = kappa.to_u64().filter(|&k| k <= max_kappa).ok_or_else(|| {
        Error::TooLarge(format!(
            "κ = {kappa} exceeds the factorial limit {max_kappa}"
        ))
    })?;
    let sigma = factorial(k);
    let sigma_q = BigRational::from_integer(BigInt::from(sigma.clone()));
    let start = (bit_len(&sigma) + 64).max(128);
    let scaled = certified_floor(start, CAP.max(start * 4), "floor(4π³Σ/ε)", |bits| {
        let iv = ratio(bits);
        RatInterval {
            lo: iv.lo * &sigma_q,
            hi: iv.hi * &sigma_q,
        }
    })?;
    let theta = BigUint::from(k) * scaled.to_biguint().expect("positive");
    Ok(DichotomyParams {
        epsilon: epsilon.clone(),
        kappa: BigUint::from(k),
        sigma,
        theta,
    })
}

/// An ε with `A | Σ(ε)`: `124/A < 4π³/A` forces `κ ≥ A`.
pub fn epsilon_dividing(a: u64) -> BigRational {
    serial::ratio_from_u(124, a.max(1))
}

/// Compares a certified chord enclosure against `c·ε` for an irrational `c`
/// given by enclosures; returns whether chord ≤ c·ε.
fn chord_le_scaled(
    d: &circle::DistZ,
    eps: &BigRational,
    c_at: impl Fn(u32) -> RatInterval,
    prec: Precision,
) -> Result<bool> {
    let mut bits = prec.start_bits.max(8);
    loop {
        let e = circle::chord(d, bits);
        let c = c_at(bits + 8);
        if e.hi <= &c.lo * eps {
            return Ok(true);
        }
        if e.lo > &c.hi * eps {
            return Ok(false);
        }
        if bits >= prec.cap_bits {
            return Err(Error::Inconclusive {
                bits,
                what: format!("chord({}) vs C·{eps}", d.value()),
            });
        }
        bits = (bits * 2).min(prec.cap_bits);
    }
}

/// Smallest `p ≥ 1` with `|μ^p − ν| ≤ C·ε`, searched up to `⌊C′/γ⌋`.
/// Requires `γ < |μ − 1| < ε`.
pub fn approx_power(
    mu: &UAngle,
    gamma: &BigRational,
    epsilon: &BigRational,
    nu: &UAngle,
    prec: Precision,
) -> Result<BigUint> {
    if !gamma.is_positive() {
        return Err(Error::Precondition(format!(
            "gamma {gamma} must be positive"
        )));
    }
    let d = dist_to_z(mu);
    let above_gamma = circle::cmp_chord(&d, gamma, prec)? == Ordering::Greater;
    let below_eps = circle::cmp_chord(&d, epsilon, prec)? == Ordering::Less;
    if !(above_gamma && below_eps) {
        return Err(Error::Precondition(format!(
            "need {gamma} < |μ − 1| < {epsilon} for μ = {mu}"
        )));
    }
    let p_max = max_power(gamma)?;
    let c_at = |bits: u32| net_constants_at(bits).c;
    // μ^p only depends on p mod denom(μ)
    let period = mu.denom().clone();
    let mut p = BigUint::one();
    while p <= p_max && p <= period {
        let target = reduce(mu, &p).sub(nu);
        if chord_le_scaled(&dist_to_z(&target), epsilon, c_at, prec)? {
            return Ok(p);
        }
        p += 1u32;
    }
    Err(Error::NotFound(format!(
        "no p ≤ {p_max} with |μ^p − ν| ≤ C·{epsilon} for μ = {mu}, ν = {nu}"
    )))
}

/// `⌊C′/γ⌋ = ⌊2π/γ⌋`.
pub fn max_power(gamma: &BigRational) -> Result<BigUint> {
    let f = certified_floor(128, 1 << 16, "floor(2π/γ)", |bits| {
        let c = net_constants_at(bits).cprime;
        RatInterval {
            lo: c.lo / gamma,
            hi: c.hi / gamma,
        }
    })?;
    Ok(f.to_biguint().unwrap_or_default())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Branch {
    PowerCollapse {
        #[serde(with = "serial::uint")]
        n: BigUint,
    },
    NetHit {
        #[serde(with = "serial::uint")]
        j: BigUint,
        #[serde(with = "serial::uint")]
        n: BigUint,
    },
}

impl Branch {
    pub fn n(&self) -> &BigUint {
        match self {
            Branch::PowerCollapse { n } | Branch::NetHit { n, .. } => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyOutcome {
    pub branch: Branch,
    pub certificate: ChordEnclosure,
}

fn certify_hit(
    lambda: &UAngle,
    n: &BigUint,
    eps: &BigRational,
    prec: Precision,
) -> Result<Option<ChordEnclosure>> {
    let x = reduce(lambda, n);
    if !chord_lt(&x, eps, prec)? {
        return Ok(None);
    }
    Ok(Some(certificate(&dist_to_z(&x), eps, prec)?))
}

/// Returns the collapse branch if it holds, else the first `j` of the
/// progression `HLj + S`, `1 ≤ j ≤ Θ`, whose power is ε-close to 1.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy(
    lambda: &UAngle,
    h: &BigUint,
    l: &BigUint,
    s: &BigUint,
    sigma: &BigUint,
    theta: &BigUint,
    epsilon: &BigRational,
    prec: Precision,
) -> Result<DichotomyOutcome> {
    let n = h * sigma * l;
    if let Some(cert) = certify_hit(lambda, &n, epsilon, prec)? {
        return Ok(DichotomyOutcome {
            branch: Branch::PowerCollapse { n },
            certificate: cert,
        });
    }
    let step = h * l;
    // j and j + denom(λ) give the same power, so one period suffices
    let last = theta.min(lambda.denom()).clone();
    let mut j = BigUint::one();
    while j <= last {
        let n = &step * &j + s;
        if let Some(cert) = certify_hit(lambda, &n, epsilon, prec)? {
            return Ok(DichotomyOutcome {
                branch: Branch::NetHit { j, n },
                certificate: cert,
            });
        }
        j += 1u32;
    }
    Err(Error::NoBranch(format!(
        "λ = {lambda}, H = {h}, L = {l}, S = {s}, ε = {epsilon}: neither branch holds"
    )))
}

/// Same as [`dichotomy`] with the factorial constants.
pub fn dichotomy_with(
    lambda: &UAngle,
    h: &BigUint,
    l: &BigUint,
    s: &BigUint,
    params: &DichotomyParams,
    prec: Precision,
) -> Result<DichotomyOutcome> {
    dichotomy(
        lambda,
        h,
        l,
        s,
        &params.sigma,
        &params.theta,
        &params.epsilon,
        prec,
    )
}

/// Which multipliers `H` the empirical constants must cover.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HRange {
    Values(Vec<u64>),
    /// Every integer: on denominator `d` this is every residue mod `d`.
    AllResidues,
}

/// Which shifts `S` are used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shift {
    One,
    H,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalConstants {
    #[serde(rename = "Sigma", with = "serial::uint")]
    pub sigma: BigUint,
    #[serde(rename = "Theta", with = "serial::uint")]
    pub theta: BigUint,
}

/// One grid instance reduced mod its denominator.
struct Instance {
    d: u64,
    /// Residues `σ mod d` for which `HσL·a/d` passes.
    collapse_ok: Vec<bool>,
    /// First `j ≥ 1` whose progression term passes.
    first_hit: Option<u64>,
}

fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

fn grid_instances(
    table: &CutoffTable,
    grid: u64,
    hs: &HRange,
    ls: &[BigUint],
    shifts: &[Shift],
) -> Vec<Instance> {
    let mut out = Vec::new();
    for d in 1..=grid {
        let h_res: Vec<u64> = match hs {
            HRange::Values(v) => {
                let mut r: Vec<u64> = v.iter().map(|h| h % d).collect();
                r.sort_unstable();
                r.dedup();
                r
            }
            HRange::AllResidues => (0..d).collect(),
        };
        let l_res: Vec<u64> = {
            let mut r: Vec<u64> = ls.iter().map(|l| circle::mod_u64(l, d)).collect();
            r.sort_unstable();
            r.dedup();
            r
        };
        for a in 0..d {
            if gcd(a, d) != 1 {
                continue;
            }
            for &h in &h_res {
                for &l in &l_res {
                    for &shift in shifts {
                        let s = match shift {
                            Shift::One => 1 % d,
                            Shift::H => h,
                        };
                        let hla = (h * l % d) * a % d;
                        let collapse_ok = (0..d)
                            .map(|sig| table.passes_residue(hla * sig % d, d))
                            .collect();
                        let step = h * l % d;
                        let first_hit =
                            (1..=d).find(|&j| table.passes_residue((step * j + s) % d * a % d, d));
                        out.push(Instance {
                            d,
                            collapse_ok,
                            first_hit,
                        });
                    }
                }
            }
        }
    }
    out
}

fn primes_upto(n: u64) -> Vec<u64> {
    (2..=n)
        .filter(|&p| (2..p).take_while(|q| q * q <= p).all(|q| p % q != 0))
        .collect()
}

/// Smallest `Σ` dividing `lcm(1..grid)` that satisfies every per-denominator
/// collapse constraint, found by depth-first search over prime exponents with
/// pruning against the best product so far.
fn smallest_sigma(grid: u64, feasible: &[Vec<bool>]) -> BigUint {
    // Σ must be divisible by gcd(d, allowed residues) for every d
    let mut forced: Vec<u64> = vec![1; grid as usize + 1];
    for d in 1..=grid {
        let allowed = &feasible[d as usize];
        let g = (0..d).filter(|&r| allowed[r as usize]).fold(d, gcd);
        forced[d as usize] = g;
    }
    let primes = primes_upto(grid);
    let max_exp: Vec<u32> = primes
        .iter()
        .map(|&p| {
            let mut e = 0;
            let mut q = p;
            while q <= grid {
                e += 1;
                q *= p;
            }
            e
        })
        .collect();
    let min_exp: Vec<u32> = primes
        .iter()
        .map(|&p| {
            (1..=grid)
                .map(|d| {
                    let mut g = forced[d as usize];
                    let mut e = 0;
                    while g.is_multiple_of(p) {
                        g /= p;
                        e += 1;
                    }
                    e
                })
                .max()
                .unwrap_or(0)
        })
        .collect();

    struct Search<'a> {
        grid: u64,
        primes: Vec<u64>,
        min_exp: Vec<u32>,
        max_exp: Vec<u32>,
        feasible: &'a [Vec<bool>],
        best_log: f64,
        best: Option<BigUint>,
    }

    impl Search<'_> {
        fn ok(&self, res: &[u64]) -> bool {
            (1..=self.grid).all(|d| self.feasible[d as usize][res[d as usize] as usize])
        }

        fn go(&mut self, idx: usize, log: f64, value: &BigUint, res: &[u64]) {
            if log > self.best_log + 1e-9 {
                return;
            }
            if idx == self.primes.len() {
                if self.ok(res) && self.best.as_ref().is_none_or(|b| value < b) {
                    self.best_log = log;
                    self.best = Some(value.clone());
                }
                return;
            }
            let p = self.primes[idx];
            let mut e = self.min_exp[idx];
            let mut val = value * BigUint::from(p).pow(e);
            let mut lg = log + e as f64 * (p as f64).ln();
            let mut r: Vec<u64> = (0..=self.grid)
                .map(|d| {
                    if d == 0 {
                        0
                    } else {
                        res[d as usize] * pow_mod(p, e, d) % d
                    }
                })
                .collect();
            loop {
                self.go(idx + 1, lg, &val, &r);
                if e == self.max_exp[idx] {
                    break;
                }
                e += 1;
                val *= p;
                lg += (p as f64).ln();
                for d in 1..=self.grid {
                    r[d as usize] = r[d as usize] * p % d;
                }
            }
        }
    }

    let mut s = Search {
        grid,
        primes,
        min_exp,
        max_exp,
        feasible,
        best_log: f64::INFINITY,
        best: None,
    };
    let res: Vec<u64> = (0..=grid).map(|d| if d <= 1 { 0 } else { 1 }).collect();
    s.go(0, 0.0, &BigUint::one(), &res);
    s.best.expect("lcm(1..grid) collapses every instance")
}

fn pow_mod(p: u64, e: u32, m: u64) -> u64 {
    let mut r = 1 % m;
    for _ in 0..e {
        r = r * p % m;
    }
    r
}

/// Smallest `(Σ*, Θ*)`, lexicographically, for which the dichotomy holds on
/// every reduced rational with denominator `≤ grid` and every `(H, L, S)` in
/// range. `Σ*` is searched among divisors of `lcm(1..grid)`; `Θ*` is then
/// the largest first-hit index among instances that do not collapse.
pub fn minimal_constants(
    epsilon: &BigRational,
    grid: u64,
    hs: &HRange,
    ls: &[BigUint],
    shifts: &[Shift],
    prec: Precision,
) -> Result<MinimalConstants> {
    if grid == 0 {
        return Err(Error::Precondition("grid must be at least 1".into()));
    }
    let table = CutoffTable::new(epsilon, true, grid, prec)?;
    let instances = grid_instances(&table, grid, hs, ls, shifts);
    let mut feasible: Vec<Vec<bool>> = (0..=grid).map(|d| vec![true; d as usize]).collect();
    for inst in &instances {
        if inst.first_hit.is_none() {
            for (r, ok) in inst.collapse_ok.iter().enumerate() {
                if !ok {
                    feasible[inst.d as usize][r] = false;
                }
            }
        }
    }
    let sigma = smallest_sigma(grid, &feasible);
    let theta = min_theta(&instances, &sigma).expect("sigma chosen feasible");
    Ok(MinimalConstants {
        sigma,
        theta: BigUint::from(theta),
    })
}

fn min_theta(instances: &[Instance], sigma: &BigUint) -> Option<u64> {
    let mut theta = 1;
    for inst in instances {
        let r = circle::mod_u64(sigma, inst.d) as usize;
        if inst.collapse_ok[r] {
            continue;
        }
        theta = theta.max(inst.first_hit?);
    }
    Some(theta)
}

/// Smallest `Θ` that works together with a given `Σ` on the grid, or `None`
/// when some instance neither collapses nor hits.
pub fn min_theta_for_sigma(
    epsilon: &BigRational,
    grid: u64,
    hs: &HRange,
    ls: &[BigUint],
    shifts: &[Shift],
    sigma: &BigUint,
    prec: Precision,
) -> Result<Option<BigUint>> {
    let table = CutoffTable::new(epsilon, true, grid, prec)?;
    let instances = grid_instances(&table, grid, hs, ls, shifts);
    Ok(min_theta(&instances, sigma).map(BigUint::from))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serial::ratio_from_u;

    fn q(n: u64, d: u64) -> BigRational {
        ratio_from_u(n, d)
    }

    fn u(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn constants_enclose_known_values() {
        let nc = net_constants();
        // π/2 = 1.5707963267948966..., 2π = 6.283185307179586...
        assert!(
            nc.c.lo > q(15_707_963_267, 10_000_000_000)
                && nc.c.hi < q(15_707_963_268, 10_000_000_000)
        );
        assert!(
            nc.cprime.lo > q(62_831_853_071, 10_000_000_000)
                && nc.cprime.hi < q(62_831_853_072, 10_000_000_000)
        );
        // 4π³ = 124.02510672119...
        let f = four_pi_cubed(256);
        assert!(f.lo > q(12_402_510_672, 100_000_000) && f.hi < q(12_402_510_673, 100_000_000));
        // C·C′ = π² = 9.8696044010893...
        let cc = RatInterval {
            lo: &nc.c.lo * &nc.cprime.lo,
            hi: &nc.c.hi * &nc.cprime.hi,
        };
        assert!(
            cc.lo > q(98_696_044_010, 10_000_000_000) && cc.hi < q(98_696_044_011, 10_000_000_000)
        );
    }

    #[test]
    fn params_examples() {
        // just below 4π³, 2π³, π³
        let p = dichotomy_params(&q(12_402, 100)).unwrap();
        assert_eq!(
            (p.kappa.clone(), p.sigma.clone(), p.theta.clone()),
            (u(1), u(1), u(1))
        );
        let p = dichotomy_params(&q(6_201, 100)).unwrap();
        assert_eq!(
            (p.kappa.clone(), p.sigma.clone(), p.theta.clone()),
            (u(2), u(2), u(8))
        );
        let p = dichotomy_params(&q(3_100, 100)).unwrap();
        assert_eq!(
            (p.kappa.clone(), p.sigma.clone(), p.theta.clone()),
            (u(4), u(24), u(384))
        );
    }

    #[test]
    fn params_reject_large_epsilon() {
        assert!(matches!(
            dichotomy_params(&q(125, 1)),
            Err(Error::EpsilonTooLarge(_))
        ));
        assert!(matches!(
            dichotomy_params(&q(0, 1)),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            dichotomy_params_limited(&q(1, 1000), 100),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn params_for_unit_and_half_epsilon() {
        let p1 = dichotomy_params(&q(1, 1)).unwrap();
        assert_eq!(p1.kappa, u(124));
        assert_eq!(p1.sigma, factorial(124));
        let p2 = dichotomy_params(&q(1, 2)).unwrap();
        assert_eq!(p2.kappa, u(248));
        assert!(p2.theta >= p2.sigma);
        assert!((&p2.sigma % &p1.sigma).is_zero());
    }

    #[test]
    fn approx_power_follows_first_hit_contract() {
        let prec = Precision::default();
        let half = UAngle::half();
        let eighth = UAngle::from_u64(1, 8).unwrap();
        // |μ − 1| = 2 ≤ C·21/10 already at p = 1
        assert_eq!(
            approx_power(&half, &q(1, 1), &q(21, 10), &UAngle::zero(), prec).unwrap(),
            u(1)
        );
        // p = 1, 2 leave distances 3/8, 1/4 to −1 (chords 1.85, 1.41 > 1.257)
        assert_eq!(
            approx_power(&eighth, &q(1, 2), &q(4, 5), &half, prec).unwrap(),
            u(3)
        );
        assert_eq!(
            approx_power(&eighth, &q(1, 2), &q(4, 5), &UAngle::zero(), prec).unwrap(),
            u(1)
        );
    }

    #[test]
    fn approx_power_checks_preconditions() {
        let prec = Precision::default();
        let eighth = UAngle::from_u64(1, 8).unwrap();
        assert!(matches!(
            approx_power(&eighth, &q(1, 2), &q(1, 2), &UAngle::zero(), prec),
            Err(Error::Precondition(_))
        ));
        assert_eq!(max_power(&q(1, 2)).unwrap(), u(12));
    }

    #[test]
    fn dichotomy_examples() {
        let prec = Precision::default();
        let p = dichotomy_params(&q(1, 2)).unwrap();
        let out = dichotomy_with(&UAngle::zero(), &u(1), &u(1), &u(1), &p, prec).unwrap();
        assert!(matches!(out.branch, Branch::PowerCollapse { .. }));
        assert!(out.certificate.hi.is_zero());
        let fifth = UAngle::from_u64(1, 5).unwrap();
        let out = dichotomy_with(&fifth, &u(1), &u(1), &u(1), &p, prec).unwrap();
        assert_eq!(out.branch, Branch::PowerCollapse { n: p.sigma.clone() });
        let third = UAngle::from_u64(1, 3).unwrap();
        let p4 = dichotomy_params(&q(1, 4)).unwrap();
        let out = dichotomy_with(&third, &u(2), &u(1), &u(1), &p4, prec).unwrap();
        assert!(out.certificate.hi < q(1, 4));
    }

    #[test]
    fn dichotomy_net_hit_when_sigma_is_small() {
        let prec = Precision::default();
        let third = UAngle::from_u64(1, 3).unwrap();
        // Σ = 1: λ^2 is not close to 1, but 2·j + 1 = 3 at j = 1
        let out = dichotomy(&third, &u(2), &u(1), &u(1), &u(1), &u(3), &q(1, 2), prec).unwrap();
        assert_eq!(out.branch, Branch::NetHit { j: u(1), n: u(3) });
        // H = 3 collapses λ = 1/3 whatever Σ is
        let out = dichotomy(&third, &u(3), &u(1), &u(1), &u(2), &u(5), &q(1, 2), prec).unwrap();
        assert!(matches!(out.branch, Branch::PowerCollapse { .. }));
        // λ = 1/4, H = 2, S = 1: progression stays odd, Σ = 1 gives λ^2 = −1
        let quarter = UAngle::from_u64(1, 4).unwrap();
        let err = dichotomy(&quarter, &u(2), &u(1), &u(1), &u(1), &u(4), &q(1, 2), prec);
        assert!(matches!(err, Err(Error::NoBranch(_))));
    }

    #[test]
    fn minimal_constants_trivial_grid() {
        let m = minimal_constants(
            &q(1, 2),
            1,
            &HRange::AllResidues,
            &[u(1)],
            &[Shift::One, Shift::H],
            Precision::default(),
        )
        .unwrap();
        assert_eq!((m.sigma, m.theta), (u(1), u(1)));
    }

    #[test]
    fn minimal_constants_small_grids() {
        let prec = Precision::default();
        let all = [Shift::One, Shift::H];
        let m = minimal_constants(&q(1, 2), 3, &HRange::AllResidues, &[u(1)], &all, prec).unwrap();
        assert!((u(6) % &m.sigma).is_zero());
        let just_below_two = q(199, 100);
        let m = minimal_constants(
            &just_below_two,
            2,
            &HRange::AllResidues,
            &[u(1)],
            &all,
            prec,
        )
        .unwrap();
        assert_eq!(m.sigma, u(1));
        let t = min_theta_for_sigma(
            &just_below_two,
            2,
            &HRange::AllResidues,
            &[u(1)],
            &all,
            &u(2),
            prec,
        )
        .unwrap();
        assert!(t.is_some());
    }

    #[test]
    fn minimal_sigma_for_exact_collapse() {
        // At ε = 1/16 only the residue 0 passes on denominators ≤ 64, and
        // H sharing a factor g with d (S = 1) can only collapse when d/g | Σ.
        let m = minimal_constants(
            &q(1, 16),
            64,
            &HRange::AllResidues,
            &[u(1)],
            &[Shift::One, Shift::H],
            Precision::default(),
        )
        .unwrap();
        let lcm32 = (1..=32u64).fold(u(1), |acc, k| acc.lcm(&u(k)));
        assert_eq!(m.sigma, lcm32);
    }
}
