//! String encodings shared by every file format: unbounded integers as
//! decimal strings, rationals as `"p/q"`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::One;
use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

use crate::error::{Error, Result};

pub fn ratio_to_string(q: &BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Parses `"p/q"` (or a bare integer `"p"`). Decimal notation is rejected.
pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let p: BigInt = p
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational numerator in {s:?}")))?;
    let q: BigInt = q
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational denominator in {s:?}")))?;
    if q == BigInt::from(0) {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(BigRational::new(p, q))
}

pub fn parse_uint(s: &str) -> Result<BigUint> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad unsigned integer {s:?}")))
}

pub fn ratio_from_u(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn two_pow_neg(n: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << n as usize)
}

pub mod ratio {
    use super::*;

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&ratio_to_string(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(D::Error::custom)
    }
}

pub mod opt_ratio {
    use super::*;

    pub fn serialize<S: Serializer>(
        q: &Option<BigRational>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.serialize_some(&ratio_to_string(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<BigRational>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| parse_ratio(&s).map_err(D::Error::custom))
            .transpose()
    }
}

pub mod uint {
    use super::*;

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        parse_uint(&s).map_err(D::Error::custom)
    }
}

pub mod opt_uint {
    use super::*;

    pub fn serialize<S: Serializer>(
        n: &Option<BigUint>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match n {
            Some(n) => s.serialize_some(&n.to_str_radix(10)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<BigUint>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| parse_uint(&s).map_err(D::Error::custom))
            .transpose()
    }
}

pub mod uint_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for n in v {
            seq.serialize_element(&n.to_str_radix(10))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<BigUint>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_uint(s).map_err(D::Error::custom))
            .collect()
    }
}

pub mod ratio_map {
    use super::*;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<u32, BigRational>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            map.serialize_entry(&k.to_string(), &ratio_to_string(v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<u32, BigRational>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let k: u32 = k.parse().map_err(D::Error::custom)?;
                Ok((k, parse_ratio(&v).map_err(D::Error::custom)?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_and_integer_forms() {
        assert_eq!(parse_ratio("6/4").unwrap(), ratio_from_u(3, 2));
        assert_eq!(parse_ratio("2").unwrap(), ratio_from_u(2, 1));
        assert_eq!(ratio_to_string(&parse_ratio("-2/4").unwrap()), "-1/2");
    }

    #[test]
    fn rejects_decimals_and_zero_denominators() {
        assert!(parse_ratio("0.5").is_err());
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_uint("-3").is_err());
    }
}
