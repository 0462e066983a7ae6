//! Integer nanosecond time arithmetic and exact bit rates.
//!
//! Every schedule quantity is an `i64` count of nanoseconds. Divisions that
//! produce upper bounds round toward +inf, lower bounds toward -inf, so a
//! computed window never undershoots the exact rational value.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::Error;

/// Point in time, nanoseconds since the start of the first hypercycle.
pub type Instant = i64;
/// Span of time in nanoseconds.
pub type Dur = i64;
/// Exact rate in bits per second.
pub type BitRate = Ratio<i128>;

pub const NS_PER_SEC: i128 = 1_000_000_000;
pub const US: Dur = 1_000;
pub const MS: Dur = 1_000_000;
pub const SEC: Dur = 1_000_000_000;

pub fn floor_div(a: i128, b: i128) -> i128 {
    assert!(b > 0, "divisor must be positive");
    a.div_euclid(b)
}

pub fn ceil_div(a: i128, b: i128) -> i128 {
    assert!(b > 0, "divisor must be positive");
    -((-a).div_euclid(b))
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: i64, b: i64) -> Option<i64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

/// Time to put `bits` on a wire of `rate` bits/s, rounded up.
pub fn serialization(bits: u64, rate: u64) -> Dur {
    ceil_div(bits as i128 * NS_PER_SEC, rate as i128) as Dur
}

/// `bits / (link - r)` in ns, rounded up. The caller guarantees `r < link`.
pub fn drain_time(bits: u64, link: u64, r: &BitRate) -> Dur {
    let headroom = BitRate::from_integer(link as i128) - r;
    assert!(headroom > BitRate::zero(), "token rate saturates link");
    // bits * 1e9 / (num/den) = bits * 1e9 * den / num
    ceil_div(
        bits as i128 * NS_PER_SEC * headroom.denom(),
        *headroom.numer(),
    ) as Dur
}

/// Tokens accumulated during `span`, drained at `link - r`:
/// `span * r / (link - r)` in ns, rounded up.
pub fn accumulation_time(span: Dur, link: u64, r: &BitRate) -> Dur {
    if r.is_zero() {
        return 0;
    }
    let headroom = BitRate::from_integer(link as i128) - r;
    assert!(headroom > BitRate::zero(), "token rate saturates link");
    let q = BitRate::from_integer(span as i128) * r / headroom;
    ceil_div(*q.numer(), *q.denom()) as Dur
}

pub fn rate_to_f64(r: &BitRate) -> f64 {
    r.to_f64().unwrap_or(f64::INFINITY)
}

/// Parses `"200us"`, `"9.98ms"`, `"5 s"`, `"1500"` (ns) into nanoseconds.
///
/// Fractional values must land on a whole nanosecond.
pub fn parse_duration(text: &str) -> Result<Dur, Error> {
    let s = text.trim();
    let split = s
        .find(|c: char| c.is_ascii_alphabetic())
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let scale: i128 = match unit.trim() {
        "" | "ns" => 1,
        "us" | "µs" => 1_000,
        "ms" => 1_000_000,
        "s" => 1_000_000_000,
        other => {
            return Err(Error::Config(format!(
                "unknown duration unit `{other}` in `{text}`"
            )))
        }
    };
    let num = num.trim();
    let bad = || Error::Config(format!("malformed duration `{text}`"));
    let (int_part, frac_part) = match num.split_once('.') {
        Some((i, f)) => (i, f),
        None => (num, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let neg = int_part.starts_with('-');
    let int_digits = int_part.trim_start_matches('-');
    let int_val: i128 = if int_digits.is_empty() {
        0
    } else {
        int_digits.parse().map_err(|_| bad())?
    };
    let mut frac_val: i128 = 0;
    let mut frac_scale: i128 = 1;
    for c in frac_part.chars() {
        let d = c.to_digit(10).ok_or_else(bad)? as i128;
        frac_val = frac_val * 10 + d;
        frac_scale *= 10;
    }
    let total = int_val * scale * frac_scale + frac_val * scale;
    if total % frac_scale != 0 {
        return Err(Error::Config(format!(
            "duration `{text}` is not a whole number of nanoseconds"
        )));
    }
    let v = total / frac_scale;
    let v = if neg { -v } else { v };
    i64::try_from(v).map_err(|_| bad())
}

/// Shortest exact rendering using the largest unit that divides the value.
pub fn format_duration(d: Dur) -> String {
    for (scale, unit) in [(SEC, "s"), (MS, "ms"), (US, "us")] {
        if d != 0 && d % scale == 0 {
            return format!("{}{}", d / scale, unit);
        }
    }
    format!("{d}ns")
}

/// Serde adapter so config files can write durations as `"200us"` or plain ns.
pub mod serde_dur {
    use super::{format_duration, parse_duration, Dur};
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(d: &Dur, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_duration(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Dur, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(v),
            Raw::Text(t) => parse_duration(&t).map_err(de::Error::custom),
        }
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[Dur], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for d in v {
                seq.serialize_element(&format_duration(*d))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Dur>, D::Error> {
            Vec::<Raw>::deserialize(d)?
                .into_iter()
                .map(|r| match r {
                    Raw::Int(v) => Ok(v),
                    Raw::Text(t) => parse_duration(&t).map_err(de::Error::custom),
                })
                .collect()
        }
    }
}
