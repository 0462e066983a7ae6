//! Augmentation of a single egress port.
//!
//! Each scheduled transmission gets a worst-case start `theta`: the latest
//! instant at which it can begin when elevated traffic conforming to the
//! port's token bucket competes for the link. Gate windows are prolonged to
//! cover `theta`, higher-priority successors are deferred past the prolonged
//! window, and downstream PSFP entries admit the frame on time (forward) or
//! late (elevate).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    FrameRef, GclEntry, LinkId, Network, PsfpAction, PsfpEntry, Schedule, Stream, Window,
};
use crate::time::{self, Dur, Instant};
use crate::token_bucket::TokenBucket;
use crate::weakly_hard::eligible;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledTx {
    pub frame: FrameRef,
    pub open: Instant,
    pub close: Instant,
    pub pcp: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedTx {
    pub frame: FrameRef,
    pub open: Instant,
    pub close: Instant,
    pub theta: Instant,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortAugmentation {
    pub txs: Vec<AugmentedTx>,
    pub gcl: Vec<GclEntry>,
    pub psfp: Vec<PsfpEntry>,
}

impl PortAugmentation {
    /// Normalizes the emitted windows into a schedule with hypercycle `h`.
    pub fn into_schedule(&self, h: Dur) -> Schedule {
        let mut s = Schedule::new(h);
        for g in &self.gcl {
            s.add_gcl(g.port, g.queue, g.window, g.frame);
        }
        for p in &self.psfp {
            s.add_psfp(p.bridge, p.stream, p.window, p.action, p.slot);
        }
        s
    }
}

/// Time to drain a full bucket: `b / (R - r)`.
pub fn burst_time(tb: &TokenBucket, rate: u64) -> Dur {
    time::drain_time(tb.b, rate, &tb.r)
}

/// Port hold-off charged after a transmission of length `occ`: the slot
/// itself plus the tokens that accumulate meanwhile.
pub fn carry_over(occ: Dur, tb: &TokenBucket, rate: u64) -> Dur {
    occ + time::accumulation_time(occ, rate, &tb.r)
}

/// Elevation window `[theta + d_max + 1, release + L)`; `None` when empty.
///
/// A frame that starts exactly at `theta` may arrive exactly at
/// `theta + d_max`, which the forward window still covers.
pub fn elevate_window(release: Instant, latency: Dur, theta: Instant, d_max: Dur) -> Option<Window> {
    let w = Window::new(theta + d_max + 1, release + latency);
    (!w.is_empty()).then_some(w)
}

/// Forward window `[open + d_min, theta + d_max + 1)`.
pub fn forward_window(open: Instant, theta: Instant, d_min: Dur, d_max: Dur) -> Window {
    Window::new(open + d_min, theta + d_max + 1)
}

pub(crate) fn tx_order_key(tx: &ScheduledTx) -> (Instant, std::cmp::Reverse<u8>, usize, i64) {
    (
        tx.open,
        std::cmp::Reverse(tx.pcp),
        tx.frame.stream,
        tx.frame.index,
    )
}

pub fn augment_port(
    network: &Network,
    port: LinkId,
    txs: &[ScheduledTx],
    tb: &TokenBucket,
    streams: &[Stream],
) -> Result<PortAugmentation> {
    let link = &network.links[port];
    if tb.r >= time::BitRate::from_integer(link.rate as i128) {
        return Err(Error::Saturated {
            link: network.link_name(port),
            rate_bps: time::rate_to_f64(&tb.r),
            link_rate: link.rate,
        });
    }
    let mut order: Vec<ScheduledTx> = txs.to_vec();
    order.sort_by_key(tx_order_key);

    let burst = burst_time(tb, link.rate);
    let downstream = &network.vertices[link.dst];
    let mut out = PortAugmentation::default();
    let mut prev_hold: Option<Instant> = None;

    for (i, tx) in order.iter().enumerate() {
        let s = &streams[tx.frame.stream];
        let occ = link.occupancy(s.size);

        // deferment against every earlier slot
        let mut open = tx.open;
        for (j, earlier) in order[..i].iter().enumerate() {
            let a = &out.txs[j];
            let bound = if tx.pcp > earlier.pcp {
                a.close
            } else {
                a.open + link.occupancy(streams[earlier.frame.stream].size)
            };
            open = open.max(bound);
        }

        // prolongation
        let mut theta = open + burst;
        if let Some(h) = prev_hold {
            theta = theta.max(h);
        }
        let close = theta + occ;
        prev_hold = Some(theta + carry_over(occ, tb, link.rate));

        out.txs.push(AugmentedTx {
            frame: tx.frame,
            open,
            close,
            theta,
        });
        out.gcl.push(GclEntry {
            port,
            queue: tx.pcp,
            window: Window::new(open, close),
            frame: Some(tx.frame),
            origin: open,
        });
        if downstream.filters() {
            let (d_min, d_max) = (link.d_min(s.size), link.d_max(s.size));
            let release = s.release(tx.frame.index);
            let mut push = |window: Window, action| {
                out.psfp.push(PsfpEntry {
                    bridge: link.dst,
                    stream: tx.frame.stream,
                    window,
                    action,
                    slot: tx.frame.index,
                    origin: window.start,
                })
            };
            push(forward_window(open, theta, d_min, d_max), PsfpAction::Forward);
            if eligible(&s.mu, tx.frame.index) {
                if let Some(w) = elevate_window(release, s.latency, theta, d_max) {
                    push(w, PsfpAction::Elevate);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MuPattern, VertexKind};
    use crate::time::{BitRate, MS, US};

    const R: u64 = 100_000_000;

    /// talker -> bridge -> listener; port under test is bridge -> listener
    fn setup(n_streams: usize, pcps: &[u8], mu: &str) -> (Network, Vec<Stream>, LinkId) {
        let mut n = Network::new();
        let b = n.add_vertex("b", VertexKind::Bridge);
        let x = n.add_vertex("x", VertexKind::Bridge);
        let mut streams = vec![];
        for i in 0..n_streams {
            let t = n.add_vertex(format!("t{i}"), VertexKind::EndDevice);
            n.add_duplex(t, b, R);
            streams.push((t, pcps[i]));
        }
        n.add_duplex(b, x, R);
        let port = n.find_link(b, x).unwrap();
        let streams = streams
            .into_iter()
            .enumerate()
            .map(|(i, (t, pcp))| {
                Stream::new(&n, format!("s{i}"), vec![t, b, x], pcp, MS, 0, 800, MS, MuPattern::parse(mu).unwrap())
                    .unwrap()
            })
            .collect();
        (n, streams, port)
    }

    fn tx(stream: usize, open: Instant, pcp: u8) -> ScheduledTx {
        ScheduledTx {
            frame: FrameRef { stream, index: 0 },
            open,
            close: open + 8 * US,
            pcp,
        }
    }

    #[test]
    fn zero_bucket_is_identity() {
        let (n, s, p) = setup(3, &[5, 4, 6], "0");
        let txs = [tx(0, 10 * US, 5), tx(1, 30 * US, 4), tx(2, 50 * US, 6)];
        let a = augment_port(&n, p, &txs, &TokenBucket::zero(p), &s).unwrap();
        for (t, o) in txs.iter().zip(&a.txs) {
            assert_eq!((o.open, o.theta, o.close), (t.open, t.open, t.open + 8 * US));
        }
        assert!(a.psfp.iter().all(|e| e.action == PsfpAction::Forward));
    }

    #[test]
    fn single_burst_prolongs_by_serialization() {
        let (n, s, p) = setup(1, &[5], "0");
        let tb = TokenBucket {
            link: p,
            b: 800,
            r: BitRate::from_integer(1),
        };
        let a = augment_port(&n, p, &[tx(0, 100 * US, 5)], &tb, &s).unwrap();
        let t = a.txs[0];
        assert_eq!(t.open, 100 * US);
        // 800 bit over (R - 1) bit/s, rounded up
        assert_eq!(t.theta, 100 * US + 8 * US + 1);
        assert_eq!(t.close, t.theta + 8 * US);
    }

    #[test]
    fn back_to_back_mixed_priorities() {
        // F3 (pcp 5), F2 (pcp 4), F4 (pcp 6) back to back
        let (n, s, p) = setup(3, &[5, 4, 6], "0");
        let tb = TokenBucket {
            link: p,
            b: 800,
            r: BitRate::from_integer(10_000_000),
        };
        let txs = [tx(0, 0, 5), tx(1, 8 * US, 4), tx(2, 16 * US, 6)];
        let a = augment_port(&n, p, &txs, &tb, &s).unwrap();
        let burst = time::drain_time(800, R, &tb.r);
        assert_eq!(burst, 8889);
        let acc = time::accumulation_time(8 * US, R, &tb.r);
        assert_eq!(acc, 889);
        let [f3, f2, f4] = [a.txs[0], a.txs[1], a.txs[2]];
        assert_eq!((f3.open, f3.theta), (0, burst));
        // lower priority: may overlap, starts after F3's carry-over
        assert_eq!(f2.open, 8 * US);
        assert_eq!(f2.theta, (8 * US + burst).max(burst + 8 * US + acc));
        // higher priority: deferred past F2's prolonged close
        assert_eq!(f4.open, f2.close);
        assert!(f4.open > 16 * US);
        assert!(f3.open <= f2.open && f2.open <= f4.open);
    }

    #[test]
    fn elevate_window_examples() {
        assert_eq!(
            elevate_window(0, 20 * MS, 10 * MS - 1, 0),
            Some(Window::new(10 * MS, 20 * MS))
        );
        assert_eq!(elevate_window(0, 20 * MS, 20 * MS - 1, 0), None);
        let (n, s, p) = setup(1, &[5], "0");
        let a = augment_port(&n, p, &[tx(0, 0, 5)], &TokenBucket::zero(p), &s).unwrap();
        assert!(a.psfp.iter().all(|e| e.action != PsfpAction::Elevate));
    }

    #[test]
    fn forward_and_elevate_abut() {
        let (n, s, p) = setup(1, &[5], "1");
        let a = augment_port(&n, p, &[tx(0, 0, 5)], &TokenBucket::zero(p), &s).unwrap();
        assert_eq!(a.psfp.len(), 2);
        assert_eq!(a.psfp[0].window.end, a.psfp[1].window.start);
        assert_eq!(a.psfp[1].window.end, MS);
    }

    #[test]
    fn saturated_bucket_rejected() {
        let (n, s, p) = setup(1, &[5], "0");
        let tb = TokenBucket {
            link: p,
            b: 0,
            r: BitRate::from_integer(R as i128),
        };
        assert!(augment_port(&n, p, &[tx(0, 0, 5)], &tb, &s).is_err());
    }
}
