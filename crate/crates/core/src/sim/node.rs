use std::collections::VecDeque;

use super::packet::{NodeId, Packet};

#[derive(Debug, Clone, Default)]
pub struct NodeState {
    /// Cell for the current slot when the node sits inside the active
    /// group's coverage region; `None` when it is elsewhere and its exact
    /// cell cannot influence the slot.
    pub cell: Option<usize>,
    /// Own packets, all addressed to this node's partner. Unbounded.
    pub local_queue: VecDeque<Packet>,
    /// Packets of other flows held for forwarding. At most `B` long.
    pub relay_queue: VecDeque<Packet>,
}

impl NodeState {
    /// The head-of-line local packet, if it may be sent in slot `now`. A
    /// packet becomes sendable the slot after it reaches the head.
    pub fn sendable_local(&self, now: u64) -> Option<&Packet> {
        self.local_queue
            .front()
            .filter(|p| p.t_hol.is_some_and(|t| t < now))
    }

    /// Position of the oldest relayed packet addressed to `destination`.
    pub fn relay_position(&self, destination: NodeId) -> Option<usize> {
        self.relay_queue
            .iter()
            .position(|p| p.destination == destination)
    }

    pub fn relay_full(&self, buffer: usize) -> bool {
        self.relay_queue.len() >= buffer
    }
}
