use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use super::node::NodeState;
use super::packet::{partner, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinkKind {
    SourceDestination,
    SourceRelay,
    RelayDestination,
}

impl LinkKind {
    pub fn tag(self) -> &'static str {
        match self {
            LinkKind::SourceDestination => "sd",
            LinkKind::SourceRelay => "sr",
            LinkKind::RelayDestination => "rd",
        }
    }
}

/// What one active cell does in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellOutcome {
    /// No usable node pair in the cell and its coverage.
    Idle,
    /// A packet moves from `tx` to `rx`.
    Transmit {
        kind: LinkKind,
        tx: NodeId,
        rx: NodeId,
    },
    /// s-r selected but the handshake found the receiver's relay queue full.
    Refused { tx: NodeId, rx: NodeId },
    /// A link was selected but the transmitter had nothing to send on it.
    NothingToSend {
        kind: LinkKind,
        tx: NodeId,
        rx: NodeId,
    },
}

impl CellOutcome {
    /// Nodes committed to this cell for the rest of the slot.
    pub fn engaged(&self) -> Option<(NodeId, NodeId)> {
        match *self {
            CellOutcome::Idle => None,
            CellOutcome::Transmit { tx, rx, .. }
            | CellOutcome::Refused { tx, rx }
            | CellOutcome::NothingToSend { tx, rx, .. } => Some((tx, rx)),
        }
    }
}

/// Decides the transmission of one active cell under handshake-based
/// two-hop relay.
///
/// `occupants` are the free nodes inside the cell and `coverage` the free
/// nodes anywhere in its coverage region, which includes the cell itself.
/// Nothing is mutated; the caller applies a [`CellOutcome::Transmit`].
///
/// 1. If some pair has one end in the cell and the other in coverage, one
///    such pair is picked uniformly and the in-cell end (either end, at
///    random, if both are inside) sends its head-of-line packet.
/// 2. Otherwise, with an occupant and a second node in coverage, a uniform
///    transmitter in the cell and a uniform receiver in coverage are drawn
///    and a fair coin picks s-r (after the buffer handshake) or r-d.
/// 3. Otherwise the cell idles.
pub fn cell_action<R: Rng + ?Sized>(
    occupants: &[NodeId],
    coverage: &[NodeId],
    nodes: &[NodeState],
    buffer: usize,
    now: u64,
    rng: &mut R,
) -> CellOutcome {
    if occupants.is_empty() {
        return CellOutcome::Idle;
    }

    // Unordered pairs, keyed by their even member so each counts once.
    let mut pairs: Vec<(NodeId, bool, bool)> = Vec::new();
    for &u in occupants {
        let v = partner(u);
        if coverage.contains(&v) {
            let key = u & !1;
            if !pairs.iter().any(|&(k, _, _)| k == key) {
                let in_cell = |x: NodeId| occupants.contains(&x);
                pairs.push((key, in_cell(key), in_cell(key | 1)));
            }
        }
    }
    if let Some(&(key, even_in, odd_in)) = pairs.choose(rng) {
        let tx = match (even_in, odd_in) {
            (true, true) => key | usize::from(rng.random_bool(0.5)),
            (true, false) => key,
            _ => key | 1,
        };
        let rx = partner(tx);
        let kind = LinkKind::SourceDestination;
        return if nodes[tx].sendable_local(now).is_some() {
            CellOutcome::Transmit { kind, tx, rx }
        } else {
            CellOutcome::NothingToSend { kind, tx, rx }
        };
    }

    let tx = occupants[rng.random_range(0..occupants.len())];
    let others = coverage.len() - usize::from(coverage.contains(&tx));
    if others == 0 {
        return CellOutcome::Idle;
    }
    let pick = rng.random_range(0..others);
    let rx = coverage
        .iter()
        .copied()
        .filter(|&c| c != tx)
        .nth(pick)
        .expect("receiver index within range");

    if rng.random_bool(0.5) {
        let kind = LinkKind::SourceRelay;
        if nodes[tx].sendable_local(now).is_none() {
            CellOutcome::NothingToSend { kind, tx, rx }
        } else if nodes[rx].relay_full(buffer) {
            CellOutcome::Refused { tx, rx }
        } else {
            CellOutcome::Transmit { kind, tx, rx }
        }
    } else {
        let kind = LinkKind::RelayDestination;
        if nodes[tx].relay_position(rx).is_some() {
            CellOutcome::Transmit { kind, tx, rx }
        } else {
            CellOutcome::NothingToSend { kind, tx, rx }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::packet::Packet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nodes(n: usize) -> Vec<NodeState> {
        vec![NodeState::default(); n]
    }

    fn with_local(nodes: &mut [NodeState], u: NodeId) {
        let mut p = Packet::new(0, u, 0);
        p.t_hol = Some(0);
        nodes[u].local_queue.push_back(p);
    }

    #[test]
    fn empty_cell_idles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ns = nodes(4);
        assert_eq!(
            cell_action(&[], &[0, 1], &ns, 2, 5, &mut rng),
            CellOutcome::Idle
        );
        assert_eq!(
            cell_action(&[2], &[2], &ns, 2, 5, &mut rng),
            CellOutcome::Idle
        );
    }

    #[test]
    fn pair_takes_priority() {
        let mut ns = nodes(6);
        with_local(&mut ns, 0);
        with_local(&mut ns, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            // 0 and 1 form a pair; 2 and 4 are bystanders.
            let out = cell_action(&[0, 2, 4], &[0, 1, 2, 4], &ns, 2, 5, &mut rng);
            assert_eq!(
                out,
                CellOutcome::Transmit {
                    kind: LinkKind::SourceDestination,
                    tx: 0,
                    rx: 1
                }
            );
        }
    }

    #[test]
    fn colocated_pair_picks_either_end() {
        let mut ns = nodes(2);
        with_local(&mut ns, 0);
        with_local(&mut ns, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut from_zero = 0;
        for _ in 0..4000 {
            match cell_action(&[0, 1], &[0, 1], &ns, 1, 5, &mut rng) {
                CellOutcome::Transmit { tx: 0, rx: 1, .. } => from_zero += 1,
                CellOutcome::Transmit { tx: 1, rx: 0, .. } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!((1800..2200).contains(&from_zero), "{from_zero}");
    }

    #[test]
    fn pair_with_empty_queue_wastes_slot() {
        let ns = nodes(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = cell_action(&[0], &[0, 1], &ns, 1, 5, &mut rng);
        assert!(matches!(
            out,
            CellOutcome::NothingToSend {
                kind: LinkKind::SourceDestination,
                tx: 0,
                rx: 1
            }
        ));
    }

    #[test]
    fn fresh_packet_not_sendable_in_arrival_slot() {
        let mut ns = nodes(2);
        let mut p = Packet::new(0, 0, 5);
        p.t_hol = Some(5);
        ns[0].local_queue.push_back(p);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = cell_action(&[0], &[0, 1], &ns, 1, 5, &mut rng);
        assert!(matches!(out, CellOutcome::NothingToSend { .. }));
        let out = cell_action(&[0], &[0, 1], &ns, 1, 6, &mut rng);
        assert!(matches!(out, CellOutcome::Transmit { .. }));
    }

    #[test]
    fn full_relay_refuses_handshake() {
        let mut ns = nodes(4);
        with_local(&mut ns, 0);
        // Node 2's relay holds B = 1 packet (flow 1 -> 0).
        ns[2].relay_queue.push_back(Packet::new(9, 1, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut refused = 0;
        for _ in 0..400 {
            match cell_action(&[0], &[0, 2], &ns, 1, 5, &mut rng) {
                CellOutcome::Refused { tx: 0, rx: 2 } => refused += 1,
                CellOutcome::NothingToSend {
                    kind: LinkKind::RelayDestination,
                    ..
                } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!((150..250).contains(&refused));
    }

    #[test]
    fn relay_without_matching_packet_is_wasted() {
        let mut ns = nodes(6);
        // Node 0 relays a packet for node 5 but the receiver drawn is 2.
        ns[0].relay_queue.push_back(Packet::new(3, 4, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut delivered = 0;
        let mut wasted = 0;
        for _ in 0..2000 {
            match cell_action(&[0], &[0, 2, 5], &ns, 4, 5, &mut rng) {
                CellOutcome::Transmit {
                    kind: LinkKind::RelayDestination,
                    tx: 0,
                    rx: 5,
                } => delivered += 1,
                CellOutcome::NothingToSend {
                    kind: LinkKind::RelayDestination,
                    rx: 2,
                    ..
                } => wasted += 1,
                CellOutcome::NothingToSend {
                    kind: LinkKind::SourceRelay,
                    ..
                } => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        // Each r-d outcome has probability 1/4.
        assert!((400..600).contains(&delivered), "{delivered}");
        assert!((400..600).contains(&wasted), "{wasted}");
    }

    #[test]
    fn receiver_is_uniform_over_coverage() {
        let ns = nodes(10);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = [0usize; 10];
        for _ in 0..9000 {
            if let Some((tx, rx)) = cell_action(&[0], &[0, 2, 4, 6], &ns, 2, 5, &mut rng).engaged()
            {
                assert_eq!(tx, 0);
                hits[rx] += 1;
            }
        }
        for rx in [2, 4, 6] {
            assert!((2700..3300).contains(&hits[rx]), "{hits:?}");
        }
    }
}
