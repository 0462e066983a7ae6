//! Per-link token buckets bounding elevated (PCP 7) arrivals.
//!
//! `N_F([t1, t2])` counts eligible frames `i` with `release_i <= t2` and
//! `release_i + L >= t1`; streams repeat forever in both directions, so the
//! arrival pattern is periodic in the mu-hypercycle `lcm(k_F * T_F)`.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinkId, Network, Stream};
use crate::time::{self, BitRate, Dur, Instant};
use crate::weakly_hard::eligible;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBucket {
    pub link: LinkId,
    /// bits
    pub b: u64,
    /// bits per second
    #[serde(with = "ratio_serde")]
    pub r: BitRate,
}

impl TokenBucket {
    pub fn zero(link: LinkId) -> Self {
        TokenBucket {
            link,
            b: 0,
            r: BitRate::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.b == 0 && self.r.is_zero()
    }
}

/// Sporadic PCP-7 source with a minimum inter-event time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SporadicSpec {
    pub name: String,
    pub links: Vec<LinkId>,
    /// bits
    pub size: u64,
    #[serde(with = "time::serde_dur")]
    pub min_inter_event: Dur,
}

/// Period of the elevation pattern: `lcm` over streams of `k * T`.
pub fn mu_hypercycle<'a>(streams: impl IntoIterator<Item = &'a Stream>) -> Result<Dur> {
    let mut h: Dur = 1;
    for s in streams {
        let span = (s.mu.k() as i64)
            .checked_mul(s.period)
            .ok_or(Error::HypercycleOverflow)?;
        h = time::lcm(h, span).ok_or(Error::HypercycleOverflow)?;
    }
    Ok(h)
}

struct Profile {
    /// (release, size) sorted by release, with prefix sums
    rel: Vec<Instant>,
    rel_acc: Vec<u128>,
    /// (release + L, size) sorted, with prefix sums
    end: Vec<Instant>,
    end_acc: Vec<u128>,
    horizon: Dur,
    /// elevatable bits per horizon
    work: u128,
}

impl Profile {
    fn build(streams: &[&Stream]) -> Result<Option<Profile>> {
        let active: Vec<&Stream> = streams.iter().copied().filter(|s| !s.mu.is_never()).collect();
        if active.is_empty() {
            return Ok(None);
        }
        let horizon = mu_hypercycle(active.iter().copied())?;
        let mut rel = Vec::new();
        let mut end = Vec::new();
        let mut work = 0u128;
        for s in &active {
            work += s.size as u128 * s.mu.m() as u128 * (horizon / (s.period * s.mu.k() as i64)) as u128;
            // every frame whose closed interval [rel, rel + L] reaches [0, 2H)
            let first = -time::floor_div((s.phase + s.latency) as i128, s.period as i128) as i64;
            let mut i = first;
            loop {
                let r = s.release(i);
                if r >= 2 * horizon {
                    break;
                }
                if eligible(&s.mu, i) && r + s.latency >= 0 {
                    rel.push((r, s.size));
                    end.push((r + s.latency, s.size));
                }
                i += 1;
            }
        }
        rel.sort_unstable();
        end.sort_unstable();
        let acc = |v: &[(Instant, u64)]| {
            let mut a = Vec::with_capacity(v.len() + 1);
            a.push(0u128);
            for (_, s) in v {
                a.push(a.last().unwrap() + *s as u128);
            }
            a
        };
        Ok(Some(Profile {
            rel_acc: acc(&rel),
            end_acc: acc(&end),
            rel: rel.into_iter().map(|x| x.0).collect(),
            end: end.into_iter().map(|x| x.0).collect(),
            horizon,
            work,
        }))
    }

    /// Bits of frames released at or before `t`.
    fn released(&self, t: Instant) -> u128 {
        self.rel_acc[self.rel.partition_point(|&x| x <= t)]
    }

    /// Bits of frames whose interval closed strictly before `t`.
    fn expired(&self, t: Instant) -> u128 {
        self.end_acc[self.end.partition_point(|&x| x < t)]
    }

    fn demand(&self, t1: Instant, t2: Instant) -> u128 {
        self.released(t2) - self.expired(t1)
    }

    fn bucket_size(&self) -> u64 {
        std::iter::once(0)
            .chain(self.rel.iter().copied().filter(|&t| t < self.horizon))
            .map(|t| self.demand(t, t))
            .max()
            .unwrap_or(0) as u64
    }

    fn token_rate(&self, b: u64) -> BitRate {
        let h = self.horizon;
        let per_ns = |num: u128, den: i64| {
            BitRate::new(num as i128 * time::NS_PER_SEC, den as i128)
        };
        let mut best = per_ns(self.work, h);
        let starts = std::iter::once(0).chain(
            self.end.iter().copied().filter(|&t| (0..h).contains(&t)),
        );
        for t1 in starts {
            let from = self.rel.partition_point(|&x| x <= t1);
            for &t2 in &self.rel[from..] {
                let d = self.demand(t1, t2);
                if d <= b as u128 {
                    continue;
                }
                let cand = per_ns(d - b as u128, t2 - t1);
                if cand > best {
                    best = cand;
                }
            }
        }
        best
    }
}

/// `max_t sum_F size_F * N_F([t, t])`.
pub fn bucket_size(streams: &[&Stream]) -> Result<u64> {
    Ok(Profile::build(streams)?.map_or(0, |p| p.bucket_size()))
}

/// Smallest `r >= 0` such that `sum_F size_F * N_F([t1, t2]) <= b + r (t2 - t1)`
/// for every interval, including the long-run average.
pub fn token_rate(streams: &[&Stream], b: u64) -> Result<BitRate> {
    Ok(Profile::build(streams)?.map_or(BitRate::zero(), |p| p.token_rate(b)))
}

/// Arrival curve of sporadic sources: all may fire at once, each at most
/// once per `min_inter_event`.
pub fn sporadic_bucket(link: LinkId, sporadics: &[&SporadicSpec]) -> TokenBucket {
    let mut tb = TokenBucket::zero(link);
    for s in sporadics {
        assert!(s.min_inter_event > 0, "min_inter_event must be positive");
        tb.b += s.size;
        tb.r += BitRate::new(s.size as i128 * time::NS_PER_SEC, s.min_inter_event as i128);
    }
    tb
}

fn check_rate(network: &Network, tb: TokenBucket) -> Result<TokenBucket> {
    let rate = network.links[tb.link].rate;
    if tb.r >= BitRate::from_integer(rate as i128) {
        return Err(Error::Saturated {
            link: network.link_name(tb.link),
            rate_bps: time::rate_to_f64(&tb.r),
            link_rate: rate,
        });
    }
    Ok(tb)
}

/// Bucket for one link: elevated traffic of the streams routed over it plus
/// the summed sporadic arrival curve.
pub fn link_bucket(
    network: &Network,
    link: LinkId,
    streams: &[Stream],
    sporadics: &[SporadicSpec],
) -> Result<TokenBucket> {
    let on: Vec<&Stream> = streams.iter().filter(|s| s.links.contains(&link)).collect();
    let b = bucket_size(&on)?;
    let r = token_rate(&on, b)?;
    let sp: Vec<&SporadicSpec> = sporadics.iter().filter(|s| s.links.contains(&link)).collect();
    let spo = sporadic_bucket(link, &sp);
    check_rate(
        network,
        TokenBucket {
            link,
            b: b + spo.b,
            r: r + spo.r,
        },
    )
}

/// Buckets for every link of the network.
pub fn compute_buckets(
    network: &Network,
    streams: &[Stream],
    sporadics: &[SporadicSpec],
) -> Result<BTreeMap<LinkId, TokenBucket>> {
    (0..network.links.len())
        .map(|l| Ok((l, link_bucket(network, l, streams, sporadics)?)))
        .collect()
}

/// Serializes a rational as `"num/den"`.
pub mod ratio_serde {
    use super::BitRate;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BitRate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BitRate, D::Error> {
        let text = String::deserialize(d)?;
        let (n, m) = text.split_once('/').unwrap_or((&text, "1"));
        let n: i128 = n.trim().parse().map_err(de::Error::custom)?;
        let m: i128 = m.trim().parse().map_err(de::Error::custom)?;
        if m <= 0 {
            return Err(de::Error::custom("denominator must be positive"));
        }
        Ok(BitRate::new(n, m))
    }
}
