mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsn_elevate::model::Stream;
use tsn_elevate::time::BitRate;
use tsn_elevate::token_bucket::{bucket_size, token_rate};
use tsn_elevate::weakly_hard::count_elevatable_periodic;

fn breakpoints(streams: &[Stream]) -> (u64, BitRate) {
    let refs: Vec<&Stream> = streams.iter().collect();
    let b = bucket_size(&refs).unwrap();
    (b, token_rate(&refs, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn breakpoints_match_the_dense_grid(seed in any::<u64>()) {
        let (_, streams) = common::random_bucket_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(breakpoints(&streams), common::dense_bucket(&streams));
    }

    #[test]
    fn bucket_bounds_every_interval(seed in any::<u64>(), t1 in 0i64..4_000_000, len in 0i64..8_000_000) {
        let (_, streams) = common::random_bucket_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let (b, r) = breakpoints(&streams);
        let demand: u64 = streams
            .iter()
            .map(|s| s.size * count_elevatable_periodic(s, t1, t1 + len) as u64)
            .sum();
        let allowed = BitRate::from_integer(b as i128) + r * BitRate::new(len as i128, 1_000_000_000);
        prop_assert!(BitRate::from_integer(demand as i128) <= allowed, "demand {} > {}", demand, allowed);
    }
}

#[test]
fn single_stream_closed_forms() {
    // one eligible frame per k periods: b = size, r = size / (k T - L)
    let (_, mut streams) = common::random_bucket_instance(&mut ChaCha8Rng::seed_from_u64(1));
    streams.truncate(1);
    let s = &mut streams[0];
    s.mu = tsn_elevate::model::MuPattern::parse("010").unwrap();
    let (b, r) = breakpoints(&streams);
    let s = &streams[0];
    assert_eq!(b, s.size);
    assert_eq!(r, BitRate::new(s.size as i128 * 1_000_000_000, (3 * s.period - s.latency) as i128));
    assert_eq!((b, r), common::dense_bucket(&streams));
}
