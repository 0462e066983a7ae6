//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use tsn_elevate::augment::augment_multihop;
use tsn_elevate::augment_port::{augment_port, ScheduledTx};
use tsn_elevate::harness::{schedule_primary, Scenario};
use tsn_elevate::model::{MuPattern, Network, Stream, VertexKind, Window};
use tsn_elevate::tgraph::build_graph;
use tsn_elevate::token_bucket::link_bucket;
use tsn_elevate::time::{BitRate, US};

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Ones of the pattern over frame indices `[0, n)`, any integer `n`.
fn ones_before(mu: &MuPattern, n: i64) -> i64 {
    let k = mu.k() as i64;
    let full = n.div_euclid(k);
    let rest = n.rem_euclid(k);
    full * mu.m() as i64 + (0..rest).filter(|&j| mu.bit(j as usize)).count() as i64
}

/// Brute-force bucket `(b, r)` on a 1 us grid.
///
/// Per stream, the frames touching `[t1, t2]` are the indices from
/// `ceil((t1 - L - phase) / T)` to `floor((t2 - phase) / T)`; the count
/// splits into a term of `t2` minus a term of `t1`, tabulated over the grid.
pub fn dense_bucket(streams: &[Stream]) -> (u64, BitRate) {
    let active: Vec<&Stream> = streams.iter().filter(|s| s.mu.m() > 0).collect();
    if active.is_empty() {
        return (0, BitRate::from_integer(0));
    }
    let mut hmu: i64 = 1;
    for s in &active {
        let span = s.period * s.mu.k() as i64;
        hmu = hmu / gcd(hmu, span) * span;
    }
    assert_eq!(hmu % US, 0);
    let g = hmu / US;
    // upto[x]: bits of frames released at or before x us
    // from[x]: bits of frames whose interval ended before x us
    let upto: Vec<i64> = (0..=2 * g)
        .map(|x| {
            active
                .iter()
                .map(|s| s.size as i64 * ones_before(&s.mu, (x * US - s.phase).div_euclid(s.period) + 1))
                .sum()
        })
        .collect();
    let gone: Vec<i64> = (0..g)
        .map(|x| {
            active
                .iter()
                .map(|s| {
                    let first = -(s.phase + s.latency - x * US).div_euclid(s.period);
                    s.size as i64 * ones_before(&s.mu, first)
                })
                .sum()
        })
        .collect();
    let b = (0..g).map(|x| upto[x as usize] - gone[x as usize]).max().unwrap();
    let work: i64 = active
        .iter()
        .map(|s| s.size as i64 * s.mu.m() as i64 * (hmu / (s.period * s.mu.k() as i64)))
        .sum();
    // best excess / duration in bits per us, compared as fractions
    let (mut num, mut den) = (work, g);
    for x1 in 0..g {
        let base = gone[x1 as usize];
        for x2 in x1 + 1..=x1 + g {
            let excess = upto[x2 as usize] - base - b;
            if excess > 0 && (excess as i128) * (den as i128) > (num as i128) * ((x2 - x1) as i128) {
                num = excess;
                den = x2 - x1;
            }
        }
    }
    (b as u64, BitRate::new(num as i128 * 1_000_000, den as i128))
}

pub fn pattern_pool() -> Vec<MuPattern> {
    ["0", "1", "01", "10", "11", "001", "010", "100", "011", "101", "110", "0110"]
        .iter()
        .map(|p| MuPattern::parse(p).unwrap())
        .collect()
}

/// Up to four streams over one link, periods dividing 2 ms, all times on
/// the microsecond grid.
pub fn random_bucket_instance(rng: &mut impl Rng) -> (Network, Vec<Stream>) {
    let mut n = Network::new();
    let a = n.add_vertex("a", VertexKind::EndDevice);
    let b = n.add_vertex("b", VertexKind::Bridge);
    n.add_duplex(a, b, 100_000_000);
    let pool = pattern_pool();
    let count = rng.gen_range(1..=4);
    let streams = (0..count)
        .map(|i| {
            let period = *[250 * US, 500 * US, US * 1000, 2000 * US].choose(rng).unwrap();
            let phase = rng.gen_range(0..period / US) * US;
            let latency = rng.gen_range(1..=period / US) * US;
            let size = 8 * rng.gen_range(64..=1500);
            let mu = pool.choose(rng).unwrap().clone();
            Stream::new(&n, format!("s{i}"), vec![a, b], 5, period, phase, size, latency, mu).unwrap()
        })
        .collect();
    (n, streams)
}

/// Windows of the contended port `b -> x` from both procedures, with the
/// bucket applied there only.
pub fn both_procedures(sc: &Scenario) -> Option<(Vec<Window>, Vec<Window>, Vec<Window>, Vec<Window>)> {
    let n = &sc.network;
    let port = sc.streams[0].links[1];
    let primary = schedule_primary(n, &sc.streams).ok()?;
    let tb = link_bucket(n, port, &sc.streams, &[]).ok()?;
    let g = build_graph(n, &sc.streams, &primary).ok()?;
    let buckets: BTreeMap<_, _> = [(port, tb.clone())].into();
    let multi = augment_multihop(n, &g, &buckets, &sc.streams, primary.hypercycle).ok()?;
    let txs: Vec<ScheduledTx> = g.port_seq[&port]
        .iter()
        .map(|&id| {
            let o = g.op(id).unwrap();
            ScheduledTx {
                frame: o.frame,
                open: o.start,
                close: o.start + n.links[port].occupancy(sc.streams[o.frame.stream].size),
                pcp: o.pcp,
            }
        })
        .collect();
    let single = augment_port(n, port, &txs, &tb, &sc.streams).ok()?;
    let dst = n.links[port].dst;
    let sorted = |mut v: Vec<Window>| {
        v.sort();
        v
    };
    Some((
        sorted(multi.gcl.iter().filter(|e| e.port == port).map(|e| e.window).collect()),
        sorted(single.gcl.iter().map(|e| e.window).collect()),
        sorted(multi.psfp.iter().filter(|e| e.bridge == dst).map(|e| e.window).collect()),
        sorted(single.psfp.iter().map(|e| e.window).collect()),
    ))
}
