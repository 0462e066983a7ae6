//! mu-pattern semantics and (m,k)-firm verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MuPattern, Stream};
use crate::time::{floor_div, Instant};

/// At least `m` out of any `k` consecutive frames must meet their deadline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MkRequirement {
    pub m: usize,
    pub k: usize,
}

impl MkRequirement {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if m == 0 || m > k {
            return Err(Error::Config(format!("need 1 <= m <= k, got ({m},{k})")));
        }
        Ok(MkRequirement { m, k })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Met,
    Missed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryTrace {
    pub stream: usize,
    /// Indexed by frame index, starting at 0.
    pub outcomes: Vec<Outcome>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verdict", content = "window")]
pub enum Verdict {
    Pass,
    /// Index of the first frame of the first violating window.
    Fail(usize),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// `mu[i mod k]`; negative indices wrap as well.
pub fn eligible(mu: &MuPattern, i: i64) -> bool {
    mu.bit(i.rem_euclid(mu.k() as i64) as usize)
}

/// Number of eligible frames whose elevation interval `[release, release + L]`
/// touches the closed window `[t1, t2]`. Frames before index 0 do not exist.
pub fn count_elevatable(stream: &Stream, t1: Instant, t2: Instant) -> usize {
    count_in(stream, t1, t2, false)
}

/// As [`count_elevatable`], but the stream is extended periodically to
/// negative frame indices. Used for steady-state bounds.
pub fn count_elevatable_periodic(stream: &Stream, t1: Instant, t2: Instant) -> usize {
    count_in(stream, t1, t2, true)
}

fn count_in(stream: &Stream, t1: Instant, t2: Instant, periodic: bool) -> usize {
    assert!(t1 <= t2, "empty interval");
    if stream.mu.is_never() {
        return 0;
    }
    let (phi, period, lat) = (
        stream.phase as i128,
        stream.period as i128,
        stream.latency as i128,
    );
    // smallest i with phi + i*T + L >= t1
    let mut lo = -floor_div(phi + lat - t1 as i128, period);
    // largest i with phi + i*T <= t2
    let hi = floor_div(t2 as i128 - phi, period);
    if !periodic {
        lo = lo.max(0);
    }
    if hi < lo {
        return 0;
    }
    count_ones(&stream.mu, lo as i64, hi as i64)
}

/// Ones of `mu` over indices `lo..=hi`.
fn count_ones(mu: &MuPattern, lo: i64, hi: i64) -> usize {
    let k = mu.k() as i64;
    let n = hi - lo + 1;
    let full = (n / k) as usize * mu.m();
    let rest: usize = (0..n % k).filter(|j| eligible(mu, lo + j)).count();
    full + rest
}

/// Every full window of `k` consecutive outcomes must contain at least `m` met.
pub fn check_mk(trace: &DeliveryTrace, req: MkRequirement) -> Verdict {
    let o = &trace.outcomes;
    if o.len() < req.k {
        return Verdict::Pass;
    }
    let missed = |x: &Outcome| *x == Outcome::Missed;
    let limit = req.k - req.m;
    let mut misses = o[..req.k].iter().filter(|x| missed(x)).count();
    if misses > limit {
        return Verdict::Fail(0);
    }
    for start in 1..=o.len() - req.k {
        misses -= missed(&o[start - 1]) as usize;
        misses += missed(&o[start + req.k - 1]) as usize;
        if misses > limit {
            return Verdict::Fail(start);
        }
    }
    Verdict::Pass
}

/// Every cyclic window of `k` pattern positions holds at least `m` ones.
///
/// With `len(mu) == k` every cyclic window is the whole pattern, so the
/// condition reduces to the popcount test; the cyclic form matters for
/// callers that check a shorter requirement against a longer pattern via
/// [`mu_satisfies_windows`].
pub fn mu_satisfies(mu: &MuPattern, req: MkRequirement) -> Result<bool> {
    if mu.k() != req.k {
        return Err(Error::PatternLength {
            len: mu.k(),
            k: req.k,
        });
    }
    Ok(mu_satisfies_windows(mu, req))
}

/// Checks every window of `req.k` consecutive positions of the infinite
/// periodic sequence `mu, mu, ...`.
pub fn mu_satisfies_windows(mu: &MuPattern, req: MkRequirement) -> bool {
    (0..mu.k() as i64).all(|s| count_ones(mu, s, s + req.k as i64 - 1) >= req.m)
}

/// `popcount(mu) >= m`, the weaker per-pattern condition.
pub fn mu_popcount_satisfies(mu: &MuPattern, req: MkRequirement) -> bool {
    mu.m() >= req.m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Network, VertexKind};
    use crate::time::MS;
    use Outcome::*;

    fn mu(s: &str) -> MuPattern {
        MuPattern::parse(s).unwrap()
    }

    fn stream(m: &str, period: i64, phase: i64, lat: i64) -> Stream {
        let mut n = Network::new();
        let a = n.add_vertex("a", VertexKind::EndDevice);
        let b = n.add_vertex("b", VertexKind::EndDevice);
        n.add_duplex(a, b, 100_000_000);
        Stream::new(&n, "s", vec![a, b], 0, period, phase, 800, lat, mu(m)).unwrap()
    }

    #[test]
    fn eligibility_examples() {
        assert!(eligible(&mu("01"), 3));
        assert!(!(0..50).any(|i| eligible(&mu("0"), i)));
        assert!(eligible(&mu("001"), 5));
        assert!(!eligible(&mu("001"), 4));
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_elevatable(&stream("0", 20 * MS, 0, 20 * MS), 0, 100 * MS), 0);
        let s = stream("001", 20 * MS, 0, 20 * MS);
        assert_eq!(count_elevatable(&s, 40 * MS, 40 * MS), 1);
        assert_eq!(count_elevatable(&s, 0, 39 * MS), 0);
        // periodic extension sees frame -1 (index 2 mod 3) near t = 0
        assert_eq!(count_elevatable_periodic(&s, 0, 0), 1);
        assert_eq!(count_elevatable(&s, 0, 0), 0);
    }

    #[test]
    fn check_mk_examples() {
        let t = |o: Vec<Outcome>| DeliveryTrace { stream: 0, outcomes: o };
        let r12 = MkRequirement::new(1, 2).unwrap();
        assert_eq!(check_mk(&t(vec![Met, Missed, Met, Missed]), r12), Verdict::Pass);
        assert_eq!(check_mk(&t(vec![Missed, Missed]), r12), Verdict::Fail(0));
        assert_eq!(check_mk(&t(vec![Met, Missed, Missed]), r12), Verdict::Fail(1));
        assert_eq!(check_mk(&t(vec![Missed]), r12), Verdict::Pass);
        for (m, k) in [(1, 1), (3, 7), (5, 5)] {
            let r = MkRequirement::new(m, k).unwrap();
            assert_eq!(check_mk(&t(vec![Met; 100]), r), Verdict::Pass);
        }
    }

    #[test]
    fn mu_satisfies_examples() {
        let r = |m, k| MkRequirement::new(m, k).unwrap();
        assert!(mu_satisfies(&mu("001"), r(1, 3)).unwrap());
        assert!(!mu_satisfies(&mu("0"), r(1, 1)).unwrap());
        assert!(mu_satisfies(&mu("01"), r(1, 3)).is_err());
        assert!(mu_satisfies(&mu("110"), r(2, 3)).unwrap());
        assert!(mu_popcount_satisfies(&mu("110"), r(2, 3)));
        // shorter windows over a longer pattern: 1100 fails (1,2) at position 2
        assert!(!mu_satisfies_windows(&mu("1100"), r(1, 2)));
        assert!(mu_satisfies_windows(&mu("1010"), r(1, 2)));
    }

    #[test]
    fn requirement_bounds() {
        assert!(MkRequirement::new(0, 3).is_err());
        assert!(MkRequirement::new(4, 3).is_err());
    }
}
