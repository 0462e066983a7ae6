use proptest::prelude::*;
use tsn_elevate::model::{MuPattern, Network, Stream, VertexKind};
use tsn_elevate::time::US;
use tsn_elevate::weakly_hard::{
    check_mk, count_elevatable, count_elevatable_periodic, eligible, mu_popcount_satisfies, mu_satisfies,
    mu_satisfies_windows, DeliveryTrace, MkRequirement, Outcome, Verdict,
};

fn requirement() -> impl Strategy<Value = MkRequirement> {
    (1usize..=8).prop_flat_map(|k| (1..=k, Just(k))).prop_map(|(m, k)| MkRequirement::new(m, k).unwrap())
}

fn pattern(max_len: usize) -> impl Strategy<Value = MuPattern> {
    prop::collection::vec(any::<bool>(), 1..=max_len).prop_map(|bits| {
        let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        MuPattern::parse(&s).unwrap()
    })
}

fn stream(period_us: i64, phase_us: i64, latency_us: i64, mu: MuPattern) -> Stream {
    let mut n = Network::new();
    let a = n.add_vertex("a", VertexKind::EndDevice);
    let b = n.add_vertex("b", VertexKind::Bridge);
    n.add_duplex(a, b, 100_000_000);
    Stream::new(&n, "s", vec![a, b], 5, period_us * US, phase_us * US, 800, latency_us * US, mu).unwrap()
}

proptest! {
    #[test]
    fn check_mk_matches_every_window(
        req in requirement(),
        met in prop::collection::vec(any::<bool>(), 0..40),
    ) {
        let outcomes: Vec<Outcome> = met.iter().map(|&m| if m { Outcome::Met } else { Outcome::Missed }).collect();
        let first_bad = (0..outcomes.len().saturating_sub(req.k - 1))
            .find(|&s| outcomes[s..s + req.k].iter().filter(|&&o| o == Outcome::Met).count() < req.m);
        let expected = first_bad.map_or(Verdict::Pass, Verdict::Fail);
        prop_assert_eq!(check_mk(&DeliveryTrace { stream: 0, outcomes }, req), expected);
    }

    #[test]
    fn eligibility_repeats_with_the_pattern(mu in pattern(8), i in -100i64..100, q in -5i64..5) {
        prop_assert_eq!(eligible(&mu, i), eligible(&mu, i + q * mu.k() as i64));
    }

    #[test]
    fn pattern_conditions_agree_at_full_length(mu in pattern(8), m in 1usize..=8) {
        let k = mu.k();
        prop_assume!(m <= k);
        let req = MkRequirement::new(m, k).unwrap();
        prop_assert_eq!(mu_satisfies(&mu, req).unwrap(), mu_popcount_satisfies(&mu, req));
    }

    #[test]
    fn window_check_matches_unrolled_sequence(mu in pattern(6), req in requirement()) {
        let k = mu.k();
        let seq: Vec<bool> = (0..k + req.k).map(|i| mu.bit(i % k)).collect();
        let brute = (0..k).all(|s| seq[s..s + req.k].iter().filter(|&&b| b).count() >= req.m);
        prop_assert_eq!(mu_satisfies_windows(&mu, req), brute);
    }

    #[test]
    fn elevatable_counts_match_enumeration(
        mu in pattern(5),
        period in 1i64..=50,
        phase_frac in 0.0f64..1.0,
        lat_frac in 0.0f64..1.0,
        t1 in -200i64..400,
        len in 0i64..300,
    ) {
        let phase = (phase_frac * period as f64) as i64;
        let latency = 1 + (lat_frac * period as f64) as i64;
        let s = stream(period, phase, latency.min(period), mu.clone());
        let (t1, t2) = (t1 * US, (t1 + len) * US);
        let touching = |i: i64| {
            let release = s.phase + i * s.period;
            release <= t2 && release + s.latency >= t1 && eligible(&mu, i)
        };
        let all = (-1000..1000).filter(|&i| touching(i)).count();
        let causal = (0..1000).filter(|&i| touching(i)).count();
        prop_assert_eq!(count_elevatable_periodic(&s, t1, t2), all);
        prop_assert_eq!(count_elevatable(&s, t1, t2), causal);
    }
}

#[test]
fn short_traces_pass() {
    let req = MkRequirement::new(1, 3).unwrap();
    let t = DeliveryTrace { stream: 0, outcomes: vec![Outcome::Missed; 2] };
    assert_eq!(check_mk(&t, req), Verdict::Pass);
}

#[test]
fn pattern_length_must_match() {
    let mu = MuPattern::parse("01").unwrap();
    assert!(mu_satisfies(&mu, MkRequirement::new(1, 3).unwrap()).is_err());
}
