use serde::Serialize;

pub type NodeId = usize;

/// The traffic partner of `node`: pairs are `(0, 1), (2, 3), ...` and each
/// node sends to its partner.
#[inline]
pub fn partner(node: NodeId) -> NodeId {
    node ^ 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Packet {
    pub id: u64,
    pub source: NodeId,
    pub destination: NodeId,
    /// Slot of the exogenous arrival.
    pub t_arrival: u64,
    /// Slot at whose end the packet reached the head of its local queue.
    pub t_hol: Option<u64>,
    pub t_delivered: Option<u64>,
}

impl Packet {
    pub fn new(id: u64, source: NodeId, t_arrival: u64) -> Self {
        Self {
            id,
            source,
            destination: partner(source),
            t_arrival,
            t_hol: None,
            t_delivered: None,
        }
    }

    pub fn queuing_delay(&self) -> Option<u64> {
        Some(self.t_hol? - self.t_arrival)
    }

    pub fn delivery_delay(&self) -> Option<u64> {
        Some(self.t_delivered? - self.t_hol?)
    }

    pub fn end_to_end_delay(&self) -> Option<u64> {
        Some(self.t_delivered? - self.t_arrival)
    }
}
