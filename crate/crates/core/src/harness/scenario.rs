//! Topologies and stream sets, generated deterministically from a seed.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Placement, ScenarioConfig, StreamClass, TopologySpec};
use super::mu::choose_mu_patterns;
use crate::error::{Error, Result};
use crate::model::{Link, LinkId, MuPattern, Network, Stream, VertexId, VertexKind};
use crate::time::{Dur, US};
use crate::token_bucket::SporadicSpec;

/// A network with its end-device partitions, streams and sporadic sources.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub network: Network,
    /// End devices per wired partition (one partition for a grid).
    pub partitions: Vec<Vec<VertexId>>,
    pub streams: Vec<Stream>,
    #[serde(default)]
    pub sporadics: Vec<SporadicSpec>,
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Parses and re-validates routes against the network.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut sc: Scenario = serde_json::from_str(text)?;
        sc.network.validate()?;
        sc.streams = sc
            .streams
            .iter()
            .map(|s| s.revalidate(&sc.network))
            .collect::<Result<_>>()?;
        Ok(sc)
    }

    /// Wireless links of the network.
    pub fn wireless_links(&self) -> Vec<LinkId> {
        (0..self.network.links.len())
            .filter(|&l| self.network.links[l].kind == crate::model::LinkKind::Wireless)
            .collect()
    }
}

fn duplex(n: &mut Network, a: VertexId, b: VertexId, rate: u64, prop: Dur, proc: Dur, jitter: Dur) {
    for (s, d) in [(a, b), (b, a)] {
        let mut l = Link::wired(s, d, rate);
        l.prop_delay = prop;
        l.proc_delay = proc;
        l.proc_jitter = jitter;
        n.add_link(l);
    }
}

/// Builds the topology; returns the network and end-device partitions.
pub fn build_topology(spec: &TopologySpec) -> (Network, Vec<Vec<VertexId>>) {
    let mut n = Network::new();
    match *spec {
        TopologySpec::Grid {
            rows,
            cols,
            link_rate,
            prop_delay,
            proc_delay,
            proc_jitter,
        } => {
            let mut br = vec![];
            let mut eds = vec![];
            for r in 0..rows {
                for c in 0..cols {
                    br.push(n.add_vertex(format!("B{r}_{c}"), VertexKind::Bridge));
                }
            }
            for r in 0..rows {
                for c in 0..cols {
                    let e = n.add_vertex(format!("E{r}_{c}"), VertexKind::EndDevice);
                    duplex(&mut n, e, br[r * cols + c], link_rate, prop_delay, proc_delay, proc_jitter);
                    eds.push(e);
                }
            }
            for r in 0..rows {
                for c in 0..cols {
                    let b = br[r * cols + c];
                    if c + 1 < cols {
                        duplex(&mut n, b, br[r * cols + c + 1], link_rate, prop_delay, proc_delay, proc_jitter);
                    }
                    if r + 1 < rows {
                        duplex(&mut n, b, br[(r + 1) * cols + c], link_rate, prop_delay, proc_delay, proc_jitter);
                    }
                }
            }
            (n, vec![eds])
        }
        TopologySpec::FiveG {
            agv_bridges,
            backbone_bridges,
            devices_per_bridge,
            link_rate,
            prop_delay,
            proc_delay,
            wireless_d_min,
            uplink_d_max,
            downlink_d_max,
        } => {
            let side = |n: &mut Network, tag: &str, count: usize| {
                let bridges: Vec<VertexId> = (0..count)
                    .map(|i| n.add_vertex(format!("{tag}{i}"), VertexKind::Bridge))
                    .collect();
                for w in bridges.windows(2) {
                    duplex(n, w[0], w[1], link_rate, prop_delay, proc_delay, 0);
                }
                let mut eds = vec![];
                for (i, &b) in bridges.iter().enumerate() {
                    for j in 0..devices_per_bridge {
                        let e = n.add_vertex(format!("{tag}{i}_E{j}"), VertexKind::EndDevice);
                        duplex(n, e, b, link_rate, prop_delay, proc_delay, 0);
                        eds.push(e);
                    }
                }
                (bridges, eds)
            };
            let (agv, agv_eds) = side(&mut n, "A", agv_bridges);
            let (bb, bb_eds) = side(&mut n, "K", backbone_bridges);
            let ds = n.add_vertex("DS-TT", VertexKind::DsTt);
            let nw = n.add_vertex("NW-TT", VertexKind::NwTt);
            duplex(&mut n, *agv.last().unwrap(), ds, link_rate, prop_delay, proc_delay, 0);
            duplex(&mut n, nw, bb[0], link_rate, prop_delay, proc_delay, 0);
            // the translators hold every frame for the delay budget
            for (a, b, d_max) in [(ds, nw, uplink_d_max), (nw, ds, downlink_d_max)] {
                let l = n.add_link(Link::wireless(a, b, link_rate, wireless_d_min.min(d_max), d_max));
                n.links[l].hold_and_forward = true;
            }
            (n, vec![agv_eds, bb_eds])
        }
    }
}

/// Shortest path; ties go to the neighbour with the smallest name.
pub fn shortest_route(n: &Network, from: VertexId, to: VertexId) -> Option<Vec<VertexId>> {
    let mut dist = vec![usize::MAX; n.vertices.len()];
    dist[to] = 0;
    let mut q = VecDeque::from([to]);
    while let Some(v) = q.pop_front() {
        for l in &n.links {
            // reverse BFS over links entering v
            if l.dst == v && dist[l.src] == usize::MAX {
                let through_device = n.vertices[l.src].kind == VertexKind::EndDevice && l.src != from;
                if !through_device {
                    dist[l.src] = dist[v] + 1;
                    q.push_back(l.src);
                }
            }
        }
    }
    if dist[from] == usize::MAX {
        return None;
    }
    let mut route = vec![from];
    let mut v = from;
    while v != to {
        v = n
            .out_links(v)
            .map(|l| n.links[l].dst)
            .filter(|&w| dist[w] != usize::MAX && dist[w] + 1 == dist[v])
            .min_by(|&a, &b| n.vertices[a].name.cmp(&n.vertices[b].name))?;
        route.push(v);
    }
    Some(route)
}

fn pick_pair(
    rng: &mut ChaCha8Rng,
    partitions: &[Vec<VertexId>],
    placement: Placement,
) -> Result<(VertexId, VertexId)> {
    let all: Vec<VertexId> = partitions.iter().flatten().copied().collect();
    let two = |rng: &mut ChaCha8Rng, from: &[VertexId], to: &[VertexId]| -> Result<(VertexId, VertexId)> {
        for _ in 0..64 {
            let a = *from.choose(rng).ok_or_else(|| Error::Config("no end devices".into()))?;
            let b = *to.choose(rng).ok_or_else(|| Error::Config("no end devices".into()))?;
            if a != b {
                return Ok((a, b));
            }
        }
        Err(Error::Config("cannot find two distinct end devices".into()))
    };
    match placement {
        Placement::Any => two(rng, &all, &all),
        Placement::IntraPartition => {
            let p = partitions
                .iter()
                .filter(|p| p.len() >= 2)
                .collect::<Vec<_>>();
            let p = p
                .choose(rng)
                .ok_or_else(|| Error::Config("no partition with two end devices".into()))?;
            two(rng, p, p)
        }
        Placement::CrossPartition => {
            if partitions.len() < 2 {
                return Err(Error::Config("cross-partition streams need two partitions".into()));
            }
            let (a, b) = if rng.gen_bool(0.5) { (0, 1) } else { (1, 0) };
            two(rng, &partitions[a], &partitions[b])
        }
    }
}

fn route_pair(
    rng: &mut ChaCha8Rng,
    n: &Network,
    partitions: &[Vec<VertexId>],
    placement: Placement,
) -> Result<Vec<VertexId>> {
    for _ in 0..32 {
        let (a, b) = pick_pair(rng, partitions, placement)?;
        if let Some(r) = shortest_route(n, a, b) {
            return Ok(r);
        }
    }
    Err(Error::Config("no routable talker/listener pair".into()))
}

fn class_streams(
    rng: &mut ChaCha8Rng,
    n: &Network,
    partitions: &[Vec<VertexId>],
    class: &StreamClass,
) -> Result<Vec<Stream>> {
    let mut drafts = vec![];
    for i in 0..class.count {
        let route = route_pair(rng, n, partitions, class.placement)?;
        let period = *class.periods.choose(rng).expect("validated non-empty");
        let latency = match class.latency {
            Some(l) => l,
            None => {
                let f = *class.latency_factors.choose(rng).expect("validated non-empty");
                ((period as f64 * f).round() as Dur).clamp(1, period)
            }
        };
        let phase = match class.max_phase {
            Some(m) if m.min(period) >= class.phase_step => {
                rng.gen_range(0..m.min(period) / class.phase_step) * class.phase_step
            }
            _ => 0,
        };
        drafts.push((format!("{}{i}", class.prefix), route, period, phase, latency));
    }
    let periods: Vec<Dur> = drafts.iter().map(|d| d.2).collect();
    let pools = vec![class.mu_pool.clone(); drafts.len()];
    let mus = choose_mu_patterns(&periods, &pools);
    drafts
        .into_iter()
        .zip(mus)
        .map(|((name, route, period, phase, latency), mu)| {
            Stream::new(n, name, route, class.pcp, period, phase, class.size_bytes * 8, latency, mu)
        })
        .collect()
}

/// Deterministic scenario for `seed` (the config's own seed is ignored).
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let (network, partitions) = build_topology(&config.topology);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut streams = vec![];
    for class in &config.streams {
        streams.extend(class_streams(&mut rng, &network, &partitions, class)?);
    }
    let mut sporadics = vec![];
    for class in &config.sporadic {
        for i in 0..class.count {
            let route = route_pair(&mut rng, &network, &partitions, Placement::Any)?;
            let links = route
                .windows(2)
                .map(|w| network.find_link(w[0], w[1]).expect("route follows links"))
                .collect();
            sporadics.push(SporadicSpec {
                name: format!("{}{i}", class.prefix),
                links,
                size: class.size_bytes * 8,
                min_inter_event: *class.min_inter_events.choose(&mut rng).expect("validated"),
            });
        }
    }
    Ok(Scenario {
        network,
        partitions,
        streams,
        sporadics,
    })
}

/// One contended port `b -> x`: each stream has its own talker `t_i -> b`
/// and its own listener `x -> y_i`.
pub fn random_single_port(seed: u64, max_streams: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = 100_000_000;
    let mut n = Network::new();
    let b = n.add_vertex("b", VertexKind::Bridge);
    let x = n.add_vertex("x", VertexKind::Bridge);
    duplex(&mut n, b, x, rate, 0, US, 0);
    let count = rng.gen_range(1..=max_streams.max(1));
    let periods = [200 * US, 400 * US, 800 * US];
    let mut streams = vec![];
    let mut eds = vec![];
    for i in 0..count {
        let t = n.add_vertex(format!("t{i}"), VertexKind::EndDevice);
        let y = n.add_vertex(format!("y{i}"), VertexKind::EndDevice);
        duplex(&mut n, t, b, rate, 0, US, 0);
        duplex(&mut n, x, y, rate, 0, US, 0);
        eds.extend([t, y]);
        let period = *periods.choose(&mut rng).unwrap();
        let latency = period * rng.gen_range(2..=4) / 4;
        let pcp = rng.gen_range(4..=6);
        let size = 8 * rng.gen_range(64..=400u64);
        let mu = random_mu(&mut rng);
        let phase = rng.gen_range(0..period / US) * US;
        streams.push(
            Stream::new(&n, format!("s{i}"), vec![t, b, x, y], pcp, period, phase, size, latency, mu)
                .expect("generated stream is valid"),
        );
    }
    Scenario {
        network: n,
        partitions: vec![eds],
        streams,
        sporadics: vec![],
    }
}

/// Small grids with a handful of streams on random routes.
pub fn random_multi_hop(seed: u64, max_streams: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.gen_range(1..=2);
    let cols = rng.gen_range(2..=3);
    let (network, partitions) = build_topology(&TopologySpec::Grid {
        rows,
        cols,
        link_rate: 100_000_000,
        prop_delay: rng.gen_range(0..=2) * 100,
        proc_delay: US,
        proc_jitter: if rng.gen_bool(0.3) { 500 } else { 0 },
    });
    let count = rng.gen_range(2..=max_streams.max(2));
    let periods = [200 * US, 400 * US];
    let mut streams = vec![];
    for i in 0..count {
        let route = route_pair(&mut rng, &network, &partitions, Placement::Any).expect("grid is connected");
        let period = *periods.choose(&mut rng).unwrap();
        let latency = period * rng.gen_range(2..=4) / 4;
        let pcp = rng.gen_range(4..=6);
        let mu = random_mu(&mut rng);
        streams.push(
            Stream::new(&network, format!("s{i}"), route, pcp, period, 0, 800, latency, mu)
                .expect("generated stream is valid"),
        );
    }
    Scenario {
        network,
        partitions,
        streams,
        sporadics: vec![],
    }
}

fn random_mu(rng: &mut ChaCha8Rng) -> MuPattern {
    let pool = ["0", "1", "001", "010", "100", "01", "10", "011"];
    MuPattern::parse(pool.choose(rng).unwrap()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{five_g_default, grid_default};
    use crate::time::MS;

    #[test]
    fn grid_default_shape() {
        let sc = generate_scenario(&grid_default(), 3).unwrap();
        assert_eq!(sc.network.vertices.len(), 24);
        // 12 access duplex links + 17 grid duplex links
        assert_eq!(sc.network.links.len(), 2 * (12 + 17));
        assert_eq!(sc.streams.len(), 24);
        assert_eq!(sc.sporadics.len(), 24);
        for s in &sc.streams {
            assert!(s.period == 200 * US || s.period == 400 * US);
            assert_eq!(s.size, 800);
            assert!([s.period / 2, s.period * 3 / 4, s.period].contains(&s.latency));
        }
    }

    #[test]
    fn five_g_default_shape() {
        let sc = generate_scenario(&five_g_default(), 1).unwrap();
        assert_eq!(sc.streams.len(), 100);
        let wired: Vec<_> = sc.streams.iter().filter(|s| s.name.starts_with("wired")).collect();
        assert_eq!(wired.len(), 20);
        for s in &wired {
            assert_eq!((s.period, s.latency, s.pcp), (5 * MS, 500 * US, 6));
            assert_eq!(s.mu, MuPattern::always());
            assert!(s.links.iter().all(|&l| sc.network.links[l].kind == crate::model::LinkKind::Wired));
        }
        let wireless: Vec<_> = sc.streams.iter().filter(|s| s.name.starts_with("wl")).collect();
        assert_eq!(wireless.len(), 80);
        for s in &wireless {
            assert_eq!((s.period, s.latency, s.pcp), (20 * MS, 20 * MS, 5));
            assert!(s.links.iter().any(|&l| sc.network.links[l].kind == crate::model::LinkKind::Wireless));
        }
        let mk = wireless.iter().filter(|s| !s.mu.is_never()).count();
        assert_eq!(mk, 40);
    }

    #[test]
    fn same_seed_same_scenario() {
        let a = generate_scenario(&grid_default(), 11).unwrap();
        let b = generate_scenario(&grid_default(), 11).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_scenario(&grid_default(), 12).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn routes_are_shortest_with_name_ties() {
        let (n, _) = build_topology(&TopologySpec::Grid {
            rows: 2,
            cols: 2,
            link_rate: 100_000_000,
            prop_delay: 0,
            proc_delay: 0,
            proc_jitter: 0,
        });
        let e00 = n.vertex_id("E0_0").unwrap();
        let e11 = n.vertex_id("E1_1").unwrap();
        let r = shortest_route(&n, e00, e11).unwrap();
        let names: Vec<_> = r.iter().map(|&v| n.vertices[v].name.as_str()).collect();
        assert_eq!(names, ["E0_0", "B0_0", "B0_1", "B1_1", "E1_1"]);
    }

    #[test]
    fn json_roundtrip() {
        let sc = random_multi_hop(5, 4);
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back.streams, sc.streams);
    }
}
