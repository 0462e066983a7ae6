//! Randomized elevated-traffic sources that conform exactly to a token bucket.

use rand::Rng;

use crate::time::{BitRate, Dur, Instant, NS_PER_SEC};

/// Greedy-random `(b, r)` source. Tokens are kept as integers scaled by
/// `1e9 * denom(r)` so conformance is exact.
#[derive(Clone, Debug)]
pub struct TokenBucketSource {
    tokens: i128,
    cap: i128,
    /// scaled tokens per nanosecond
    gain: i128,
    scale: i128,
    last: Instant,
    min_size: u64,
    max_size: u64,
    max_pause: Dur,
}

impl TokenBucketSource {
    /// `max_pause` bounds the random idle gaps between emissions.
    pub fn new(b: u64, r: &BitRate, start: Instant, max_pause: Dur) -> Self {
        let scale = NS_PER_SEC * *r.denom();
        let max_size = b.min(12_000);
        TokenBucketSource {
            tokens: b as i128 * scale,
            cap: b as i128 * scale,
            gain: *r.numer(),
            scale,
            last: start,
            min_size: max_size.min(512),
            max_size,
            max_pause,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.max_size == 0
    }

    fn refill(&mut self, now: Instant) {
        let dt = (now - self.last) as i128;
        self.tokens = (self.tokens + dt * self.gain).min(self.cap);
        self.last = now;
    }

    /// Next emission `(time, size)` at or after `now`.
    pub fn next(&mut self, now: Instant, rng: &mut impl Rng) -> Option<(Instant, u64)> {
        if self.is_silent() {
            return None;
        }
        let size = rng.gen_range(self.min_size..=self.max_size);
        let mut t = now;
        if rng.gen_bool(0.5) && self.max_pause > 0 {
            t += rng.gen_range(0..=self.max_pause);
        }
        self.refill(t);
        let need = size as i128 * self.scale;
        if self.tokens < need {
            if self.gain == 0 {
                return None;
            }
            let wait = (need - self.tokens + self.gain - 1) / self.gain;
            t += wait as Instant;
            self.refill(t);
        }
        self.tokens -= need;
        Some((t, size))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn emissions_conform() {
        let r = BitRate::new(7_000_000, 3);
        let b = 3000;
        let mut src = TokenBucketSource::new(b, &r, 0, 50_000);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut out = vec![];
        let mut t = 0;
        while let Some((at, size)) = src.next(t, &mut rng) {
            out.push((at, size));
            t = at;
            if at > 200_000_000 {
                break;
            }
        }
        assert!(out.len() > 100);
        for i in 0..out.len() {
            let mut bits = 0u128;
            for j in i..out.len() {
                bits += out[j].1 as u128;
                let span = (out[j].0 - out[i].0) as i128;
                let bound = BitRate::from_integer(b as i128)
                    + r * BitRate::new(span, NS_PER_SEC);
                assert!(BitRate::from_integer(bits as i128) <= bound);
            }
        }
    }

    #[test]
    fn zero_bucket_is_silent() {
        let mut src = TokenBucketSource::new(0, &BitRate::from_integer(0), 0, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(src.next(0, &mut rng).is_none());
    }
}
