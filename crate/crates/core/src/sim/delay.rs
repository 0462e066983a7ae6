//! Link delay models: fixed, histogram-driven and epochal (stable/unstable).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{serde_dur, Dur, Instant};

/// Piecewise-uniform distribution. Bin `i` spans `[lower[i], lower[i+1])`,
/// the last bin ends at `upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    #[serde(with = "serde_dur::vec")]
    pub lower: Vec<Dur>,
    pub prob: Vec<f64>,
    #[serde(with = "serde_dur")]
    pub upper: Dur,
}

impl Histogram {
    pub fn new(bins: Vec<(Dur, f64)>, upper: Dur) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        for w in bins.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config("histogram bins must be strictly increasing".into()));
            }
        }
        if upper <= bins.last().unwrap().0 {
            return Err(Error::Config("histogram upper edge must exceed the last bin".into()));
        }
        if bins.iter().any(|b| !(b.1 >= 0.0) || b.0 < 0) {
            return Err(Error::Config("histogram needs non-negative edges and probabilities".into()));
        }
        let total: f64 = bins.iter().map(|b| b.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("histogram probabilities sum to {total}, not 1")));
        }
        Ok(Histogram {
            lower: bins.iter().map(|b| b.0).collect(),
            prob: bins.iter().map(|b| b.1 / total).collect(),
            upper,
        })
    }

    /// Parses `bin_lower_ns,probability` rows; the last bin gets the width
    /// of its predecessor (or `default_width` for a single bin).
    pub fn from_csv(text: &str, default_width: Dur) -> Result<Self> {
        let mut bins = vec![];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let (a, b) = (parts.next(), parts.next());
            let bad = || Error::Config(format!("histogram line {}: `{line}`", n + 1));
            let lower = a.ok_or_else(bad)?.trim();
            if n == 0 && lower.parse::<i64>().is_err() {
                continue; // header
            }
            let lower: Dur = lower.parse().map_err(|_| bad())?;
            let p: f64 = b.ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            bins.push((lower, p));
        }
        let width = match bins.len() {
            0 => return Err(Error::Config("empty histogram".into())),
            1 => default_width,
            n => bins[n - 1].0 - bins[n - 2].0,
        };
        let upper = bins.last().unwrap().0 + width;
        Histogram::new(bins, upper)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lower_ns,probability\n");
        for (l, p) in self.lower.iter().zip(&self.prob) {
            s.push_str(&format!("{l},{p}\n"));
        }
        s
    }

    fn bin_upper(&self, i: usize) -> Dur {
        self.lower.get(i + 1).copied().unwrap_or(self.upper)
    }

    /// `P(X <= t)`, linear inside bins.
    pub fn cdf(&self, t: Dur) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.lower.len() {
            let (lo, hi) = (self.lower[i], self.bin_upper(i));
            if t >= hi {
                acc += self.prob[i];
            } else if t > lo {
                acc += self.prob[i] * (t - lo) as f64 / (hi - lo) as f64;
            }
        }
        acc.min(1.0)
    }

    /// Smallest `t` with `cdf(t) >= q`, rounded up to a whole nanosecond.
    pub fn quantile(&self, q: f64) -> Dur {
        let mut acc = 0.0;
        for i in 0..self.lower.len() {
            let p = self.prob[i];
            if p > 0.0 && acc + p >= q {
                let (lo, hi) = (self.lower[i], self.bin_upper(i));
                let frac = ((q - acc) / p).clamp(0.0, 1.0);
                return lo + ((hi - lo) as f64 * frac).ceil() as Dur;
            }
            acc += p;
        }
        self.upper
    }

    /// Inverse-CDF sample with `u` in `[0, 1)`; uniform inside the chosen bin.
    fn invert(&self, u: f64, rng: &mut impl Rng) -> Dur {
        let mut acc = 0.0;
        let last = self.lower.len() - 1;
        for i in 0..=last {
            acc += self.prob[i];
            if (u < acc || i == last) && self.prob[i] > 0.0 {
                let (lo, hi) = (self.lower[i], self.bin_upper(i));
                return rng.gen_range(lo..hi);
            }
        }
        // only reachable if trailing bins have zero mass
        let i = self.prob.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        rng.gen_range(self.lower[i]..self.bin_upper(i))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Dur {
        let u: f64 = rng.gen();
        self.invert(u, rng)
    }

    /// Sample conditioned on `X <= bound`.
    pub fn sample_below(&self, bound: Dur, rng: &mut impl Rng) -> Dur {
        let mass = self.cdf(bound);
        if mass <= 0.0 {
            return self.lower[0].min(bound);
        }
        loop {
            let u: f64 = rng.gen::<f64>() * mass;
            let x = self.invert(u, rng);
            if x <= bound {
                return x;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    /// Stable samples never exceed this.
    #[serde(with = "serde_dur")]
    pub stable_bound: Dur,
    /// An unstable epoch starts this often (per link and stream).
    #[serde(with = "serde_dur")]
    pub unstable_interval: Dur,
    /// Consecutive frames affected by one unstable epoch.
    pub burst_len: u32,
    #[serde(with = "serde_dur")]
    pub unstable_lo: Dur,
    #[serde(with = "serde_dur")]
    pub unstable_hi: Dur,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayModel {
    Deterministic {
        #[serde(with = "serde_dur")]
        delay: Dur,
    },
    Histogram(Histogram),
    Epochal {
        stable: Histogram,
        epochs: EpochSchedule,
    },
}

impl DelayModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DelayModel::Deterministic { delay } if *delay < 0 => {
                Err(Error::Config("negative deterministic delay".into()))
            }
            DelayModel::Epochal { epochs: e, .. } => {
                if e.unstable_lo < e.stable_bound || e.unstable_hi < e.unstable_lo {
                    return Err(Error::Config(
                        "epochal delays need stable_bound <= lo <= hi".into(),
                    ));
                }
                if e.unstable_interval <= 0 {
                    return Err(Error::Config("unstable_interval must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Per (link, stream) epoch bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct EpochState {
    next_epoch: Option<Instant>,
    remaining: u32,
}

impl EpochState {
    pub fn in_burst(&self) -> bool {
        self.remaining > 0
    }
}

/// Draws one delay for a transmission starting at `now`.
pub fn sample_delay(model: &DelayModel, rng: &mut impl Rng, state: &mut EpochState, now: Instant) -> Dur {
    match model {
        DelayModel::Deterministic { delay } => *delay,
        DelayModel::Histogram(h) => h.sample(rng),
        DelayModel::Epochal { stable, epochs } => {
            let next = *state
                .next_epoch
                .get_or_insert_with(|| now + rng.gen_range(0..epochs.unstable_interval));
            if now >= next {
                state.remaining = epochs.burst_len;
                let missed = (now - next) / epochs.unstable_interval + 1;
                state.next_epoch = Some(next + missed * epochs.unstable_interval);
            }
            if state.remaining > 0 {
                state.remaining -= 1;
                rng.gen_range(epochs.unstable_lo..=epochs.unstable_hi)
            } else {
                stable.sample_below(epochs.stable_bound, rng)
            }
        }
    }
}
