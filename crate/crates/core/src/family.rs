//! Stage parameters and the block families built from them.
//!
//! A stage `N` of an `r`-dimensional family is fixed by `(ε_N, L_N, H_N)`
//! together with the constants derived from `ε_N`: a map `Δ` from subsets
//! `A ⊆ {1, …, r−1}` to integers, a bound `Θ` on the progression index and a
//! bound `Q` for the zero block. Its blocks are
//!
//! * zero: `{H·q + 1 : 1 ≤ q ≤ Q}`
//! * empty: `{H·Δ_∅}`
//! * subset `A ≠ ∅`: `{H·Δ_A·(L·j + 1) : j_min ≤ j ≤ Θ}`
//!
//! Two tracks compute the constants. The paper track uses the factorial
//! formulas and is only feasible for `r = 1` (and `r = 2` with a small
//! `c_2`). The empirical track replaces the one-dimensional constants by the
//! smallest ones valid on a finite grid of rationals, which keeps every
//! progression block short.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::circle::{chord, dist_to_z, reduce, Precision, UAngle};
use crate::dirichlet::{self, factorial, HRange, Shift};
use crate::error::{Error, Result};
use crate::klapprox;
use crate::serial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Track {
    Paper,
    Empirical,
}

impl std::str::FromStr for Track {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Track::Paper),
            "empirical" => Ok(Track::Empirical),
            _ => Err(Error::Parse(format!(
                "unknown track {s:?} (expected paper or empirical)"
            ))),
        }
    }
}

/// A subset of `{1, …, 31}`, bit `i − 1` for element `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(pub u32);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn from_elems(elems: &[u32]) -> Subset {
        Subset(elems.iter().fold(0, |acc, &e| acc | 1 << (e - 1)))
    }

    pub fn elems(self) -> Vec<u32> {
        (1..=32).filter(|&e| self.0 & (1 << (e - 1)) != 0).collect()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, e: u32) -> bool {
        self.0 & (1 << (e - 1)) != 0
    }

    pub fn with(self, e: u32) -> Subset {
        Subset(self.0 | 1 << (e - 1))
    }

    /// All subsets of `{1, …, n}` in increasing bitmask order.
    pub fn all(n: u32) -> impl Iterator<Item = Subset> {
        (0..1u32 << n).map(Subset)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e: Vec<String> = self.elems().iter().map(u32::to_string).collect();
        write!(f, "{{{}}}", e.join(","))
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| Error::Parse(format!("bad subset {s:?}")))?;
        let mut bits = 0u32;
        for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let e: u32 = part
                .parse()
                .map_err(|_| Error::Parse(format!("bad subset element in {s:?}")))?;
            if !(1..=31).contains(&e) {
                return Err(Error::Parse(format!("subset element {e} out of range")));
            }
            bits |= 1 << (e - 1);
        }
        Ok(Subset(bits))
    }
}

impl Serialize for Subset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type DeltaMap = BTreeMap<Subset, BigUint>;

mod delta_map {
    use super::*;
    use serde::ser::SerializeMap;

    pub fn serialize<S: Serializer>(m: &DeltaMap, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            map.serialize_entry(&k.to_string(), &v.to_str_radix(10))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DeltaMap, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let k: Subset = k.parse().map_err(serde::de::Error::custom)?;
                let v = serial::parse_uint(&v).map_err(serde::de::Error::custom)?;
                Ok((k, v))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub track: Track,
    /// `c_r` for `r ≥ 2`; missing entries fall back to the calibrated defaults.
    #[serde(with = "serial::ratio_map")]
    pub c: BTreeMap<u32, BigRational>,
    pub seed: u64,
    pub precision_bits: u32,
    pub precision_cap: u32,
    /// Largest denominator the empirical constants are valid for.
    pub grid_denom_max: u64,
    pub max_factorial_arg: u64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            track: Track::Empirical,
            c: BTreeMap::new(),
            seed: 0,
            precision_bits: 128,
            precision_cap: 4096,
            grid_denom_max: 64,
            max_factorial_arg: dirichlet::DEFAULT_MAX_FACTORIAL_ARG,
        }
    }
}

impl FamilyConfig {
    pub fn c_for(&self, r: u32) -> BigRational {
        self.c
            .get(&r)
            .cloned()
            .unwrap_or_else(|| klapprox::default_c(r as usize))
    }

    pub fn prec(&self) -> Precision {
        Precision {
            start_bits: self.precision_bits,
            cap_bits: self.precision_cap,
        }
    }
}

/// Constants of the two-dimensional stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageParams2 {
    #[serde(with = "serial::ratio")]
    pub epsilon2: BigRational,
    #[serde(with = "serial::ratio")]
    pub epsilon1: BigRational,
    #[serde(rename = "L", with = "serial::uint")]
    pub l: BigUint,
    #[serde(with = "serial::ratio")]
    pub c2: BigRational,
    #[serde(rename = "Gamma2", with = "serial::uint")]
    pub gamma2: BigUint,
    #[serde(rename = "kappa1", with = "serial::opt_uint")]
    pub kappa1: Option<BigUint>,
    #[serde(rename = "Sigma1", with = "serial::uint")]
    pub sigma1: BigUint,
    #[serde(rename = "Theta1", with = "serial::uint")]
    pub theta1: BigUint,
    #[serde(rename = "Sigma2", with = "serial::uint")]
    pub sigma2: BigUint,
    #[serde(rename = "Theta2", with = "serial::uint")]
    pub theta2: BigUint,
    #[serde(with = "serial::ratio")]
    pub delta2: BigRational,
    #[serde(rename = "Q2", with = "serial::uint")]
    pub q2: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum StageDetail {
    OneDim {
        #[serde(with = "serial::opt_uint")]
        kappa: Option<BigUint>,
        #[serde(rename = "Sigma", with = "serial::uint")]
        sigma: BigUint,
    },
    TwoDim {
        base: StageParams2,
    },
    Recursive {
        /// `ε^(r−1) = ε^(r)/2`.
        #[serde(with = "serial::ratio")]
        epsilon_prev: BigRational,
        /// `max_A′ Δ′_A′·(L·Θ′ + 1)` of the inner stage.
        #[serde(rename = "P", with = "serial::uint")]
        p: BigUint,
        /// Halvings of `ε^(2)` needed for divisibility.
        shrinks: u32,
        base: StageParams2,
        inner: Box<StageParams>,
    },
}

/// Constants of one stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageParams {
    pub r: u32,
    pub track: Track,
    #[serde(with = "serial::ratio")]
    pub epsilon: BigRational,
    #[serde(rename = "L", with = "serial::uint")]
    pub l: BigUint,
    #[serde(rename = "Delta", with = "delta_map")]
    pub delta: DeltaMap,
    #[serde(rename = "Theta", with = "serial::uint")]
    pub theta: BigUint,
    #[serde(rename = "Q", with = "serial::uint")]
    pub q: BigUint,
    #[serde(rename = "deltaR", with = "serial::opt_ratio")]
    pub delta_r: Option<BigRational>,
    pub detail: StageDetail,
}

fn ratio_int(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

fn floor_u(q: &BigRational) -> BigUint {
    q.floor().to_integer().to_biguint().unwrap_or_default()
}

fn lcm_upto(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc.lcm(&BigUint::from(k)))
}

/// One-dimensional constants `(κ, Σ, Θ)` for the configured track. The
/// empirical constants cover every `H`, the given `L` and `S ∈ shifts`.
fn one_dim_constants(
    epsilon: &BigRational,
    l: &BigUint,
    shifts: &[Shift],
    divisor: &BigUint,
    cfg: &FamilyConfig,
) -> Result<(Option<BigUint>, BigUint, BigUint)> {
    match cfg.track {
        Track::Paper => {
            let p = dirichlet::dichotomy_params_limited(epsilon, cfg.max_factorial_arg)?;
            if !(&p.sigma % divisor).is_zero() {
                return Err(Error::Precondition(format!(
                    "{divisor} does not divide κ! for κ = {}",
                    p.kappa
                )));
            }
            Ok((Some(p.kappa), p.sigma, p.theta))
        }
        Track::Empirical => {
            let grid = cfg.grid_denom_max;
            let hs = HRange::AllResidues;
            let ls = [l.clone()];
            let m = dirichlet::minimal_constants(epsilon, grid, &hs, &ls, shifts, cfg.prec())?;
            if divisor.is_one() {
                return Ok((None, m.sigma, m.theta));
            }
            let sigma = m.sigma.lcm(divisor);
            match dirichlet::min_theta_for_sigma(
                epsilon,
                grid,
                &hs,
                &ls,
                shifts,
                &sigma,
                cfg.prec(),
            )? {
                Some(theta) => Ok((None, sigma, theta)),
                // a multiple of lcm(1..grid) collapses every grid instance
                None => Ok((None, sigma.lcm(&lcm_upto(grid)), BigUint::one())),
            }
        }
    }
}

/// Two-dimensional constants: `Γ = ((⌊c₂/ε⌋ + 1)!)²`, `ε₁ = ε/(2Γ)`,
/// `Σ₂ = Γ·Σ₁`, `Θ₂ = Θ₁`, `δ₂ = ε/(2Γ²(L(Σ₁ + Θ₁) + 1))`,
/// `Q₂ = ⌊c₂/δ₂⌋ + 1`. `Σ₁` is made divisible by `divisor`.
pub fn stage_params_2(
    epsilon2: &BigRational,
    l: &BigUint,
    c2: &BigRational,
    divisor: &BigUint,
    cfg: &FamilyConfig,
) -> Result<StageParams2> {
    let two = BigRational::from_integer(BigInt::from(2));
    if !epsilon2.is_positive() || epsilon2 >= &two {
        return Err(Error::Precondition(format!(
            "ε^(2) = {epsilon2} must lie in (0, 2)"
        )));
    }
    if l.is_zero() || !c2.is_positive() {
        return Err(Error::Precondition("need L ≥ 1 and c₂ > 0".into()));
    }
    let g = floor_u(&(c2 / epsilon2));
    let g = match cfg.track {
        Track::Paper => g,
        Track::Empirical => g.min(BigUint::from(cfg.grid_denom_max)),
    };
    let g = g
        .to_u64()
        .filter(|&g| g < cfg.max_factorial_arg)
        .ok_or_else(|| Error::TooLarge(format!("⌊c₂/ε⌋ = {g} exceeds the factorial limit")))?;
    let f = factorial(g + 1);
    let gamma2 = &f * &f;
    let epsilon1 = epsilon2 / (&two * ratio_int(&gamma2));
    let (kappa1, sigma1, theta1) =
        one_dim_constants(&epsilon1, l, &[Shift::One, Shift::H], divisor, cfg)?;
    let sigma2 = &gamma2 * &sigma1;
    let theta2 = theta1.clone();
    let denom = BigUint::from(2u32) * &gamma2 * &gamma2 * (l * (&sigma1 + &theta1) + 1u32);
    let delta2 = epsilon2 / ratio_int(&denom);
    let q2 = floor_u(&(c2 / &delta2)) + 1u32;
    Ok(StageParams2 {
        epsilon2: epsilon2.clone(),
        epsilon1,
        l: l.clone(),
        c2: c2.clone(),
        gamma2,
        kappa1,
        sigma1,
        theta1,
        sigma2,
        theta2,
        delta2,
        q2,
    })
}

/// Stage constants for any `r ≥ 1`.
pub fn stage_params(
    r: u32,
    epsilon: &BigRational,
    l: &BigUint,
    cfg: &FamilyConfig,
) -> Result<StageParams> {
    if r == 0 {
        return Err(Error::Precondition("r must be at least 1".into()));
    }
    if !epsilon.is_positive() {
        return Err(Error::Precondition(format!(
            "ε = {epsilon} must be positive"
        )));
    }
    match r {
        1 => {
            let (kappa, sigma, theta) =
                one_dim_constants(epsilon, l, &[Shift::One], &BigUint::one(), cfg)?;
            let mut delta = DeltaMap::new();
            delta.insert(Subset::EMPTY, &sigma * l);
            Ok(StageParams {
                r,
                track: cfg.track,
                epsilon: epsilon.clone(),
                l: l.clone(),
                delta,
                q: theta.clone(),
                theta,
                delta_r: None,
                detail: StageDetail::OneDim { kappa, sigma },
            })
        }
        2 => {
            let base = stage_params_2(epsilon, l, &cfg.c_for(2), &BigUint::one(), cfg)?;
            let mut delta = DeltaMap::new();
            delta.insert(Subset::EMPTY, &base.sigma2 * l);
            delta.insert(Subset::from_elems(&[1]), base.gamma2.clone());
            Ok(StageParams {
                r,
                track: cfg.track,
                epsilon: epsilon.clone(),
                l: l.clone(),
                delta,
                theta: base.theta2.clone(),
                q: base.q2.clone(),
                delta_r: Some(base.delta2.clone()),
                detail: StageDetail::TwoDim { base },
            })
        }
        _ => stage_params_general(r, epsilon, l, cfg),
    }
}

/// `r ≥ 3`: the inner stage at `ε/2`, then `ε^(2)` from the ordered rule
/// `min(ε^(r−1)/(2P), δ^(r−1)/2, c₂ε/(4c_r))`, halved further until the
/// inner `Δ′` values divide `Σ₁`.
pub fn stage_params_general(
    r: u32,
    epsilon: &BigRational,
    l: &BigUint,
    cfg: &FamilyConfig,
) -> Result<StageParams> {
    if r < 3 {
        return stage_params(r, epsilon, l, cfg);
    }
    let two = BigRational::from_integer(BigInt::from(2));
    let epsilon_prev = epsilon / &two;
    let inner = stage_params(r - 1, &epsilon_prev, l, cfg)?;
    let p = inner
        .delta
        .values()
        .map(|d| d * (l * &inner.theta + 1u32))
        .max()
        .expect("nonempty Δ map");
    let c2 = cfg.c_for(2);
    let cr = cfg.c_for(r);
    let delta_prev = inner.delta_r.clone().expect("r ≥ 2 has δ");
    let candidates = [
        &epsilon_prev / (&two * ratio_int(&p)),
        &delta_prev / &two,
        &c2 * epsilon / (BigRational::from_integer(BigInt::from(4)) * &cr),
    ];
    let mut epsilon2 = candidates.iter().min().expect("three candidates").clone();
    let divisor = inner
        .delta
        .values()
        .fold(BigUint::one(), |acc, d| acc.lcm(d));
    let mut shrinks = 0u32;
    let base = loop {
        match stage_params_2(&epsilon2, l, &c2, &divisor, cfg) {
            Ok(b) => break b,
            Err(Error::Precondition(_)) if cfg.track == Track::Paper && shrinks < 64 => {
                epsilon2 /= &two;
                shrinks += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let top = r - 1;
    let mut delta = DeltaMap::new();
    for (a, d) in &inner.delta {
        delta.insert(*a, &base.sigma2 * l * d);
        delta.insert(a.with(top), &base.gamma2 * d);
    }
    let theta = base.theta2.clone().max(inner.theta.clone());
    let delta_r = &base.delta2 / &two;
    let q = floor_u(&(&cr / &delta_r)) + 1u32;
    Ok(StageParams {
        r,
        track: cfg.track,
        epsilon: epsilon.clone(),
        l: l.clone(),
        delta,
        theta,
        q,
        delta_r: Some(delta_r),
        detail: StageDetail::Recursive {
            epsilon_prev,
            p,
            shrinks,
            base,
            inner: Box::new(inner),
        },
    })
}

/// Whether the `Δ` values, sorted, form a chain under divisibility.
pub fn divisibility_chain(delta: &DeltaMap) -> bool {
    let mut v: Vec<&BigUint> = delta.values().collect();
    v.sort();
    v.windows(2).all(|w| (w[1] % w[0]).is_zero())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Zero,
    Empty,
    Subset(Subset),
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockKind::Zero => write!(f, "zero"),
            BlockKind::Empty => write!(f, "empty"),
            BlockKind::Subset(a) => write!(f, "subset{a}"),
        }
    }
}

/// One block of one stage, described by its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub stage: u32,
    pub kind: BlockKind,
    #[serde(rename = "H", with = "serial::uint")]
    pub h: BigUint,
    #[serde(rename = "L", with = "serial::uint")]
    pub l: BigUint,
    /// `Δ_A` for subset and empty blocks.
    #[serde(rename = "Delta", with = "serial::opt_uint", default)]
    pub delta: Option<BigUint>,
    /// Upper index bound: `Q` for the zero block, `Θ` for subset blocks.
    #[serde(with = "serial::uint")]
    pub last: BigUint,
    #[serde(with = "serial::uint")]
    pub j_min: BigUint,
    #[serde(with = "serial::ratio")]
    pub epsilon: BigRational,
}

impl BlockSpec {
    pub fn first_index(&self) -> BigUint {
        match self.kind {
            BlockKind::Zero => BigUint::one(),
            BlockKind::Empty => BigUint::zero(),
            BlockKind::Subset(_) => self.j_min.clone(),
        }
    }

    pub fn last_index(&self) -> BigUint {
        match self.kind {
            BlockKind::Empty => BigUint::zero(),
            _ => self.last.clone(),
        }
    }

    pub fn count(&self) -> BigUint {
        let (a, b) = (self.first_index(), self.last_index());
        if b < a {
            BigUint::zero()
        } else {
            b - a + 1u32
        }
    }

    /// `H·q + 1`, `H·Δ_∅`, or `H·Δ_A·(L·j + 1)`.
    pub fn element(&self, index: &BigUint) -> BigUint {
        match self.kind {
            BlockKind::Zero => &self.h * index + 1u32,
            BlockKind::Empty => &self.h * self.delta.as_ref().expect("empty block has Δ"),
            BlockKind::Subset(_) => {
                &self.h
                    * self.delta.as_ref().expect("subset block has Δ")
                    * (&self.l * index + 1u32)
            }
        }
    }

    pub fn min_element(&self) -> Option<BigUint> {
        (!self.count().is_zero()).then(|| self.element(&self.first_index()))
    }

    pub fn max_element(&self) -> Option<BigUint> {
        (!self.count().is_zero()).then(|| self.element(&self.last_index()))
    }

    /// Index of `n` in this block, decided arithmetically.
    pub fn index_of(&self, n: &BigUint) -> Option<BigUint> {
        let idx = match self.kind {
            BlockKind::Zero => {
                if n.is_zero() {
                    return None;
                }
                let (q, rem) = (n - 1u32).div_rem(&self.h);
                if !rem.is_zero() {
                    return None;
                }
                q
            }
            BlockKind::Empty => {
                return (self.element(&BigUint::zero()) == *n).then(BigUint::zero);
            }
            BlockKind::Subset(_) => {
                let step = &self.h * self.delta.as_ref()?;
                let (m, rem) = n.div_rem(&step);
                if !rem.is_zero() || m.is_zero() {
                    return None;
                }
                let (j, rem) = (m - 1u32).div_rem(&self.l);
                if !rem.is_zero() {
                    return None;
                }
                j
            }
        };
        (idx >= self.first_index() && idx <= self.last_index()).then_some(idx)
    }

    pub fn enumerate(&self, limit: u64) -> Result<Vec<BigUint>> {
        let count = self.count();
        if count > BigUint::from(limit) {
            return Err(Error::SizeLimit {
                count: count.to_u128().unwrap_or(u128::MAX),
                limit: limit as u128,
            });
        }
        let mut out = Vec::new();
        let mut i = self.first_index();
        let last = self.last_index();
        while i <= last && !count.is_zero() {
            out.push(self.element(&i));
            i += 1u32;
        }
        Ok(out)
    }
}

/// One stage as recorded in a manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(with = "serial::ratio")]
    pub epsilon: BigRational,
    #[serde(rename = "L", with = "serial::uint")]
    pub l: BigUint,
    #[serde(rename = "H", with = "serial::uint")]
    pub h: BigUint,
    #[serde(rename = "Q", with = "serial::uint")]
    pub q: BigUint,
    #[serde(rename = "Theta", with = "serial::uint")]
    pub theta: BigUint,
    #[serde(rename = "Delta", with = "delta_map")]
    pub delta: DeltaMap,
    #[serde(with = "serial::uint")]
    pub j_min: BigUint,
    pub blocks: Vec<BlockSpec>,
    pub params: StageParams,
}

impl Stage {
    /// Recomputes the block list from the stage fields.
    pub fn rebuild_blocks(&mut self) {
        let mut blocks = vec![BlockSpec {
            stage: self.n,
            kind: BlockKind::Zero,
            h: self.h.clone(),
            l: self.l.clone(),
            delta: None,
            last: self.q.clone(),
            j_min: BigUint::one(),
            epsilon: self.epsilon.clone(),
        }];
        for (a, d) in &self.delta {
            let kind = if a.is_empty() {
                BlockKind::Empty
            } else {
                BlockKind::Subset(*a)
            };
            blocks.push(BlockSpec {
                stage: self.n,
                kind,
                h: self.h.clone(),
                l: self.l.clone(),
                delta: Some(d.clone()),
                last: self.theta.clone(),
                j_min: self.j_min.clone(),
                epsilon: self.epsilon.clone(),
            });
        }
        self.blocks = blocks;
    }

    pub fn min_element(&self) -> Option<BigUint> {
        self.blocks.iter().filter_map(BlockSpec::min_element).min()
    }

    pub fn max_element(&self) -> Option<BigUint> {
        self.blocks.iter().filter_map(BlockSpec::max_element).max()
    }

    pub fn block(&self, kind: BlockKind) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.kind == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetFamily {
    pub r: u32,
    pub track: Track,
    pub config: FamilyConfig,
    pub stages: Vec<Stage>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScheduleHints {
    /// `ε_N` per stage; missing entries default to `2^−N`.
    pub epsilons: Vec<BigRational>,
    /// Lower bounds on `L_N` per stage (for `r ≥ 2`).
    pub l_min: Vec<BigUint>,
    pub h1_min: Option<BigUint>,
}

/// `44/7 > 2π`, used wherever a schedule bound involves `2π`.
pub fn two_pi_proxy() -> BigRational {
    serial::ratio_from_u(44, 7)
}

fn ceil_u(q: &BigRational) -> BigUint {
    q.ceil().to_integer().to_biguint().unwrap_or_default()
}

/// `⌈(44/7)·2^(N+2)⌉`, the smallest admissible `L_N` for `r ≥ 2`.
pub fn l_lower_bound(n: u32) -> BigUint {
    ceil_u(&(two_pi_proxy() * BigInt::from(BigUint::one() << (n as usize + 2))))
}

/// `⌈(44/7)·2^(N+2)·H_N·max(Q_N, max_A Δ_A·(L_N·Θ_N + 1))⌉`, the smallest
/// admissible `H_{N+1}`.
pub fn h_lower_bound(stage: &Stage) -> BigUint {
    let spread = stage
        .delta
        .values()
        .map(|d| d * (&stage.l * &stage.theta + 1u32))
        .fold(stage.q.clone(), |acc, x| acc.max(x));
    let factor = two_pi_proxy() * BigInt::from(BigUint::one() << (stage.n as usize + 2));
    ceil_u(&(factor * ratio_int(&(&stage.h * spread))))
}

pub const H1_MIN: u64 = 20;

/// Builds `num_stages` stages with the smallest schedule meeting every bound
/// checked by [`schedule_check`], raised to the hints where given.
pub fn build_family(
    r: u32,
    num_stages: u32,
    hints: &ScheduleHints,
    cfg: &FamilyConfig,
) -> Result<SetFamily> {
    if num_stages == 0 {
        return Err(Error::Precondition("need at least one stage".into()));
    }
    if r == 0 || r > 31 {
        return Err(Error::Precondition(format!("r = {r} out of range")));
    }
    let mut cfg = cfg.clone();
    for k in 2..=r {
        let c = cfg.c_for(k);
        cfg.c.insert(k, c);
    }
    let mut stages: Vec<Stage> = Vec::new();
    let mut h = hints
        .h1_min
        .clone()
        .unwrap_or_default()
        .max(BigUint::from(H1_MIN));
    for n in 1..=num_stages {
        let epsilon = hints
            .epsilons
            .get(n as usize - 1)
            .cloned()
            .unwrap_or_else(|| serial::two_pow_neg(n));
        let l = if r == 1 {
            BigUint::one()
        } else {
            let hint = hints.l_min.get(n as usize - 1).cloned().unwrap_or_default();
            l_lower_bound(n).max(hint)
        };
        let params = stage_params(r, &epsilon, &l, &cfg)?;
        if let Some(prev) = stages.last() {
            h = h.max(h_lower_bound(prev));
        }
        // r = 1 keeps H even so the zero block stays odd and disjoint from the rest
        if r == 1 && h.is_odd() {
            h += 1u32;
        }
        let mut stage = Stage {
            n,
            epsilon,
            l,
            h: h.clone(),
            q: params.q.clone(),
            theta: params.theta.clone(),
            delta: params.delta.clone(),
            j_min: BigUint::one(),
            blocks: Vec::new(),
            params,
        };
        stage.rebuild_blocks();
        stages.push(stage);
    }
    Ok(SetFamily {
        r,
        track: cfg.track,
        config: cfg,
        stages,
    })
}

impl SetFamily {
    /// Reads a manifest and recomputes the block lists from stage fields.
    pub fn from_json(s: &str) -> Result<SetFamily> {
        let mut fam: SetFamily =
            serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        for st in &mut fam.stages {
            st.rebuild_blocks();
        }
        Ok(fam)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn stage(&self, n: u32) -> Option<&Stage> {
        self.stages.iter().find(|s| s.n == n)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockSpec> {
        self.stages.iter().flat_map(|s| s.blocks.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub stage: u32,
    pub kind: BlockKind,
    #[serde(with = "serial::uint")]
    pub index: BigUint,
}

/// Every block containing `n`.
pub fn memberships(family: &SetFamily, n: &BigUint) -> Vec<Membership> {
    family
        .blocks()
        .filter_map(|b| {
            b.index_of(n).map(|index| Membership {
                stage: b.stage,
                kind: b.kind,
                index,
            })
        })
        .collect()
}

/// First block (in stage and block order) containing `n`.
pub fn contains(family: &SetFamily, n: &BigUint) -> Option<Membership> {
    memberships(family, n).into_iter().next()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: u32,
    pub rule: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub violations: Vec<Violation>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the growth conditions between stages with exact arithmetic.
pub fn schedule_check(family: &SetFamily) -> ScheduleReport {
    let mut v = Vec::new();
    let mut push = |stage: u32, rule: &str, detail: String| {
        v.push(Violation {
            stage,
            rule: rule.to_string(),
            detail,
        });
    };
    if let Some(first) = family.stages.first() {
        if first.h < BigUint::from(H1_MIN) {
            push(first.n, "H_1 >= 20", format!("H_1 = {}", first.h));
        }
    }
    for (i, st) in family.stages.iter().enumerate() {
        if !st.epsilon.is_positive() {
            push(st.n, "epsilon_N > 0", format!("ε = {}", st.epsilon));
        }
        if family.r >= 2 {
            let lb = l_lower_bound(st.n);
            if st.l < lb {
                push(
                    st.n,
                    "L_N >= (44/7)*2^(N+2)",
                    format!("L_{} = {} < {}", st.n, st.l, lb),
                );
            }
        }
        if st
            .blocks
            .iter()
            .any(|b| b.min_element().is_some_and(|m| m.is_zero()))
        {
            push(st.n, "elements positive", "a block contains 0".into());
        }
        if let Some(next) = family.stages.get(i + 1) {
            if next.epsilon >= st.epsilon {
                push(
                    next.n,
                    "epsilon decreasing",
                    format!(
                        "ε_{} = {} ≥ ε_{} = {}",
                        next.n, next.epsilon, st.n, st.epsilon
                    ),
                );
            }
            let hb = h_lower_bound(st);
            if next.h < hb {
                push(
                    next.n,
                    "H_{N+1} >= (44/7)*2^(N+2)*H_N*max(Q_N, Delta_A*(L_N*Theta_N+1))",
                    format!("H_{} = {} < {}", next.n, next.h, hb),
                );
            }
            if let (Some(hi), Some(lo)) = (st.max_element(), next.min_element()) {
                if hi >= lo {
                    push(
                        next.n,
                        "stage separation",
                        format!(
                            "max of stage {} = {hi} ≥ min of stage {} = {lo}",
                            st.n, next.n
                        ),
                    );
                }
            }
        }
    }
    ScheduleReport { violations: v }
}

/// Blocks of one stage of one family, kept together in a union.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionPart {
    pub r: u32,
    pub stage: u32,
    pub blocks: Vec<BlockSpec>,
}

impl UnionPart {
    pub fn min_element(&self) -> Option<BigUint> {
        self.blocks.iter().filter_map(BlockSpec::min_element).min()
    }

    pub fn max_element(&self) -> Option<BigUint> {
        self.blocks.iter().filter_map(BlockSpec::max_element).max()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionPick {
    pub r: u32,
    pub stage: u32,
    /// Truncation of the progression index in subset blocks.
    #[serde(with = "serial::uint")]
    pub j_min: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BohrUnion {
    pub parts: Vec<UnionPart>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnionMembership {
    pub r: u32,
    pub stage: u32,
    pub kind: BlockKind,
    #[serde(with = "serial::uint")]
    pub index: BigUint,
}

/// Union of one stage from each family, in the order given. Consecutive
/// parts must not interleave.
pub fn bohr_union(families: &[&SetFamily], picks: &[UnionPick]) -> Result<BohrUnion> {
    let mut parts = Vec::new();
    for pick in picks {
        let fam = families
            .iter()
            .find(|f| f.r == pick.r)
            .ok_or_else(|| Error::Precondition(format!("no family with r = {}", pick.r)))?;
        let st = fam.stage(pick.stage).ok_or_else(|| {
            Error::Precondition(format!("family r = {} has no stage {}", pick.r, pick.stage))
        })?;
        let mut st = st.clone();
        st.j_min = pick.j_min.clone().max(BigUint::one());
        st.rebuild_blocks();
        parts.push(UnionPart {
            r: pick.r,
            stage: pick.stage,
            blocks: st.blocks,
        });
    }
    for w in parts.windows(2) {
        if let (Some(hi), Some(lo)) = (w[0].max_element(), w[1].min_element()) {
            if hi >= lo {
                return Err(Error::Overlap(format!(
                    "part (r = {}, N = {}) reaches {hi}, part (r = {}, N = {}) starts at {lo}",
                    w[0].r, w[0].stage, w[1].r, w[1].stage
                )));
            }
        }
    }
    Ok(BohrUnion { parts })
}

impl BohrUnion {
    pub fn contains(&self, n: &BigUint) -> Option<UnionMembership> {
        self.parts.iter().find_map(|p| {
            p.blocks.iter().find_map(|b| {
                b.index_of(n).map(|index| UnionMembership {
                    r: p.r,
                    stage: p.stage,
                    kind: b.kind,
                    index,
                })
            })
        })
    }

    pub fn enumerate_part(&self, i: usize, limit: u64) -> Result<Vec<BigUint>> {
        let mut out = Vec::new();
        for b in &self.parts[i].blocks {
            out.extend(b.enumerate(limit)?);
        }
        Ok(out)
    }
}

pub const KATZNELSON_CAVEAT: &str =
    "angles are rational stand-ins; rational independence is not certified";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KatznelsonSet {
    pub thetas: Vec<UAngle>,
    #[serde(with = "serial::ratio")]
    pub delta: BigRational,
    pub n_max: u64,
    pub elements: Vec<u64>,
    pub caveat: String,
}

/// All `n ≤ n_max` with `min_j |λ_j^n + 1| < δ`, certified.
pub fn katznelson_set(
    thetas: &[UAngle],
    delta: &BigRational,
    n_max: u64,
    prec: Precision,
) -> Result<KatznelsonSet> {
    if thetas.is_empty() {
        return Err(Error::Precondition("need at least one angle".into()));
    }
    if !delta.is_positive() || delta >= &BigRational::one() {
        return Err(Error::Precondition(format!(
            "δ = {delta} must lie in (0, 1)"
        )));
    }
    let half = UAngle::half();
    let mut elements = Vec::new();
    for n in 0..=n_max {
        let nb = BigUint::from(n);
        let mut hit = false;
        for t in thetas {
            // |λ^n + 1| is the chord of nθ − 1/2
            if crate::circle::chord_lt(&reduce(t, &nb).sub(&half), delta, prec)? {
                hit = true;
                break;
            }
        }
        if hit {
            elements.push(n);
        }
    }
    Ok(KatznelsonSet {
        thetas: thetas.to_vec(),
        delta: delta.clone(),
        n_max,
        elements,
        caveat: KATZNELSON_CAVEAT.to_string(),
    })
}

/// `|λ^n − 1|` enclosure at the family's starting precision, for reports.
pub fn chord_at(theta: &UAngle, n: &BigUint, bits: u32) -> crate::circle::ChordEnclosure {
    chord(&dist_to_z(&reduce(theta, n)), bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serial::ratio_from_u;

    fn u(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn subset_keys_round_trip() {
        for s in ["{}", "{1}", "{1,2}", "{2,3}"] {
            assert_eq!(s.parse::<Subset>().unwrap().to_string(), s);
        }
        assert_eq!(Subset::all(2).count(), 4);
        assert!("{0}".parse::<Subset>().is_err());
    }

    #[test]
    fn gamma_examples() {
        let cfg = FamilyConfig {
            track: Track::Paper,
            ..Default::default()
        };
        let p =
            stage_params_2(&ratio_from_u(3, 5), &u(1), &ratio_from_u(1, 1), &u(1), &cfg).unwrap();
        assert_eq!(p.gamma2, u(4));
        assert_eq!(p.epsilon1, ratio_from_u(3, 40));
        let s1 = dirichlet::dichotomy_params(&ratio_from_u(3, 40))
            .unwrap()
            .sigma;
        assert_eq!(p.sigma2, &s1 * 4u32);
        let p =
            stage_params_2(&ratio_from_u(1, 2), &u(1), &ratio_from_u(1, 4), &u(1), &cfg).unwrap();
        assert_eq!(p.gamma2, u(1));
        assert!(ratio_from_u(1, 4) / &p.delta2 < ratio_int(&p.q2));
    }

    #[test]
    fn r2_and_r3_delta_maps() {
        let cfg = FamilyConfig::default();
        let p = stage_params(2, &ratio_from_u(1, 2), &u(51), &cfg).unwrap();
        let StageDetail::TwoDim { base } = &p.detail else {
            panic!("two-dimensional detail")
        };
        assert_eq!(p.delta[&Subset::EMPTY], &base.sigma2 * 51u32);
        assert_eq!(p.delta[&Subset::from_elems(&[1])], base.gamma2);
        assert!(divisibility_chain(&p.delta));
        let p3 = stage_params(3, &ratio_from_u(1, 2), &u(51), &cfg).unwrap();
        let keys: Vec<String> = p3.delta.keys().map(Subset::to_string).collect();
        assert_eq!(keys, vec!["{}", "{1}", "{2}", "{1,2}"]);
        assert!(divisibility_chain(&p3.delta));
    }

    #[test]
    fn paper_track_r1_contains_factorial_element() {
        let cfg = FamilyConfig {
            track: Track::Paper,
            ..Default::default()
        };
        let fam = build_family(1, 1, &ScheduleHints::default(), &cfg).unwrap();
        let st = &fam.stages[0];
        assert_eq!(st.epsilon, ratio_from_u(1, 2));
        let n = &st.h * factorial(248);
        let m = contains(&fam, &n).unwrap();
        assert_eq!(m.kind, BlockKind::Empty);
        assert!(schedule_check(&fam).passed());
    }

    #[test]
    fn block_count_for_single_stage() {
        let fam = build_family(2, 1, &ScheduleHints::default(), &FamilyConfig::default()).unwrap();
        let kinds: Vec<BlockKind> = fam.stages[0].blocks.iter().map(|b| b.kind).collect();
        assert_eq!(
            kinds,
            vec![
                BlockKind::Zero,
                BlockKind::Empty,
                BlockKind::Subset(Subset::from_elems(&[1]))
            ]
        );
    }

    #[test]
    fn membership_examples() {
        let fam = build_family(2, 1, &ScheduleHints::default(), &FamilyConfig::default()).unwrap();
        let st = &fam.stages[0];
        let e = &st.h * &st.delta[&Subset::EMPTY];
        assert_eq!(contains(&fam, &e).unwrap().kind, BlockKind::Empty);
        let z = &st.h * &st.q + 1u32;
        let m = contains(&fam, &z).unwrap();
        assert_eq!((m.kind, m.index), (BlockKind::Zero, st.q.clone()));
        let a = Subset::from_elems(&[1]);
        let out = &st.h * &st.delta[&a] * (&st.l * &st.theta + 2u32);
        assert!(memberships(&fam, &out)
            .iter()
            .all(|m| m.kind != BlockKind::Subset(a)));
    }

    #[test]
    fn schedule_violations_are_named() {
        let mut fam =
            build_family(1, 2, &ScheduleHints::default(), &FamilyConfig::default()).unwrap();
        assert!(schedule_check(&fam).passed());
        fam.stages[1].h = fam.stages[0].h.clone();
        fam.stages[1].rebuild_blocks();
        let rep = schedule_check(&fam);
        assert!(rep.violations.iter().any(|v| v.rule.starts_with("H_{N+1}")));
        let mut fam2 =
            build_family(2, 1, &ScheduleHints::default(), &FamilyConfig::default()).unwrap();
        fam2.stages[0].l = u(50);
        assert!(schedule_check(&fam2)
            .violations
            .iter()
            .any(|v| v.rule.starts_with("L_N")));
    }

    #[test]
    fn katznelson_examples() {
        let prec = Precision::default();
        let k = katznelson_set(&[UAngle::half()], &ratio_from_u(1, 2), 20, prec).unwrap();
        assert_eq!(
            k.elements,
            (0..=20).filter(|n| n % 2 == 1).collect::<Vec<_>>()
        );
        let third = UAngle::from_u64(1, 3).unwrap();
        let small =
            katznelson_set(std::slice::from_ref(&third), &ratio_from_u(1, 2), 30, prec).unwrap();
        let big = katznelson_set(&[third], &ratio_from_u(9, 10), 30, prec).unwrap();
        assert!(small.elements.iter().all(|n| big.elements.contains(n)));
        assert!(katznelson_set(&[UAngle::half()], &ratio_from_u(1, 1), 5, prec).is_err());
    }
}
