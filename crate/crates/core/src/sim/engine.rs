use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::Serialize;

use super::action::{cell_action, CellOutcome, LinkKind};
use super::geometry::Layout;
use super::node::NodeState;
use super::packet::{partner, NodeId, Packet};
use crate::{Error, NetworkParams, Result};

/// RNG stream reserved for scheduling decisions. Node `u` draws its
/// movement from stream `2u + 1` and its arrivals from stream `2u + 2`.
const SCHEDULER_STREAM: u64 = 0;

const WHEEL_SLOTS: usize = 4096;

/// Timing wheel of future per-node events, with a heap for events beyond
/// the wheel's horizon.
struct Calendar {
    wheel: Vec<Vec<u32>>,
    far: BinaryHeap<Reverse<(u64, u32)>>,
    /// Slot whose bucket is next to be drained.
    cursor: u64,
}

impl Calendar {
    fn new() -> Self {
        Self {
            wheel: vec![Vec::new(); WHEEL_SLOTS],
            far: BinaryHeap::new(),
            cursor: 0,
        }
    }

    fn push(&mut self, slot: u64, node: NodeId) {
        debug_assert!(slot >= self.cursor);
        if slot - self.cursor < WHEEL_SLOTS as u64 {
            self.wheel[slot as usize % WHEEL_SLOTS].push(node as u32);
        } else {
            self.far.push(Reverse((slot, node as u32)));
        }
    }

    /// Moves the nodes due in `slot` into `out`, in id order.
    fn drain(&mut self, slot: u64, out: &mut Vec<NodeId>) {
        debug_assert_eq!(slot, self.cursor);
        let horizon = slot + WHEEL_SLOTS as u64;
        while let Some(&Reverse((t, u))) = self.far.peek() {
            if t >= horizon {
                break;
            }
            self.far.pop();
            self.wheel[t as usize % WHEEL_SLOTS].push(u);
        }
        let bucket = &mut self.wheel[slot as usize % WHEEL_SLOTS];
        bucket.sort_unstable();
        out.extend(bucket.drain(..).map(|u| u as usize));
        self.cursor = slot + 1;
    }
}

/// Per-node Bernoulli process, sampled by geometric gaps between successes.
struct Renewal {
    gap: Option<Geometric>,
    rngs: Vec<ChaCha8Rng>,
    due: Calendar,
    scratch: Vec<NodeId>,
}

impl Renewal {
    fn new(prob: f64, seed: u64, n: usize, stream_offset: u64) -> Result<Self> {
        let gap = if prob > 0.0 {
            Some(Geometric::new(prob).map_err(|e| Error::InvalidParams(e.to_string()))?)
        } else {
            None
        };
        let rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|u| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(2 * u as u64 + stream_offset);
                rng
            })
            .collect();
        let mut renewal = Self {
            gap,
            rngs,
            due: Calendar::new(),
            scratch: Vec::new(),
        };
        for u in 0..n {
            renewal.schedule(u, 0);
        }
        Ok(renewal)
    }

    /// Queues the next success of `node` at or after slot `from`.
    fn schedule(&mut self, node: NodeId, from: u64) {
        if let Some(gap) = &self.gap {
            let skip = gap.sample(&mut self.rngs[node]);
            if let Some(slot) = from.checked_add(skip) {
                self.due.push(slot, node);
            }
        }
    }

    /// Nodes with a success in `slot`; each is rescheduled from `slot + 1`.
    fn take_due(&mut self, slot: u64) -> Vec<NodeId> {
        let mut due = std::mem::take(&mut self.scratch);
        due.clear();
        self.due.drain(slot, &mut due);
        for &u in &due {
            self.schedule(u, slot + 1);
        }
        due
    }

    fn recycle(&mut self, buf: Vec<NodeId>) {
        self.scratch = buf;
    }
}

/// Measurements of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationStats {
    pub seed: u64,
    pub measured_slots: u64,
    /// Fraction of (node, slot) samples with a full relay queue.
    pub rbp_hat: f64,
    /// Fraction of (node, slot) samples at each relay length `0..=B`.
    pub occupancy_hist: Vec<f64>,
    /// Time-averaged local-queue length per node.
    pub mean_local_len: f64,
    /// Measured exogenous arrivals per node per slot.
    pub arrival_rate_hat: f64,
    /// Mean time in the local queue, over measured packets that left it.
    pub mean_local_sojourn: Option<f64>,
    pub mean_w: Option<f64>,
    pub mean_t: Option<f64>,
    pub mean_d: Option<f64>,
    /// Delivered packets that arrived inside the measurement window.
    pub delay_samples: u64,
    pub generated_count: u64,
    pub delivered_count: u64,
    pub in_flight_count: u64,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    measured_slots: u64,
    occupancy: Vec<u64>,
    local_len_sum: u64,
    arrivals: u64,
    sojourn_sum: u64,
    sojourn_count: u64,
    w_sum: u64,
    t_sum: u64,
    delay_samples: u64,
    generated: u64,
    delivered: u64,
}

/// Slot-by-slot simulation of the cell-partitioned network.
///
/// Each slot: every node jumps to a uniform random cell, every node receives
/// a new local packet with probability `lambda`, and each cell of the active
/// group (in random order) runs [`cell_action`]. A packet arriving in slot
/// `t` can first be sent in slot `t + 1`.
pub struct Simulation {
    params: NetworkParams,
    layout: Layout,
    nodes: Vec<NodeState>,
    now: u64,
    warmup: u64,
    next_packet_id: u64,
    movement: Renewal,
    arrivals: Renewal,
    sched_rng: ChaCha8Rng,
    present: Vec<NodeId>,
    relay_len_count: Vec<u64>,
    local_total: u64,
    occupants: Vec<Vec<NodeId>>,
    coverage: Vec<Vec<NodeId>>,
    free_occupants: Vec<NodeId>,
    free_coverage: Vec<NodeId>,
    order: Vec<usize>,
    engaged: Vec<bool>,
    last_outcomes: Vec<CellOutcome>,
    last_deliveries: Vec<Packet>,
    acc: Accumulator,
    seed: u64,
    trace: Option<Box<dyn Write + Send>>,
    trace_error: Option<io::Error>,
}

impl Simulation {
    /// Builds an empty network. Slots before `warmup` are simulated but not
    /// measured.
    pub fn new(params: &NetworkParams, seed: u64, warmup: u64) -> Result<Self> {
        params.validate_geometry()?;
        if params.buffer == 0 {
            return Err(Error::InvalidParams(
                "relay buffer B must be at least 1".into(),
            ));
        }
        let layout = Layout::new(params)?;
        let movement = Renewal::new(layout.region_fraction(), seed, params.n, 1)?;
        let arrivals = Renewal::new(params.lambda, seed, params.n, 2)?;
        let mut relay_len_count = vec![0; params.buffer + 1];
        relay_len_count[0] = params.n as u64;
        let mut sched_rng = ChaCha8Rng::seed_from_u64(seed);
        sched_rng.set_stream(SCHEDULER_STREAM);
        let per_group = layout.group_cells(0).len();
        Ok(Self {
            params: *params,
            nodes: vec![NodeState::default(); params.n],
            now: 0,
            warmup,
            next_packet_id: 0,
            movement,
            arrivals,
            sched_rng,
            present: Vec::with_capacity(params.n),
            relay_len_count,
            local_total: 0,
            occupants: vec![Vec::new(); per_group],
            coverage: vec![Vec::new(); per_group],
            free_occupants: Vec::new(),
            free_coverage: Vec::new(),
            order: Vec::with_capacity(per_group),
            engaged: vec![false; params.n],
            last_outcomes: Vec::with_capacity(per_group),
            last_deliveries: Vec::new(),
            acc: Accumulator {
                occupancy: vec![0; params.buffer + 1],
                ..Accumulator::default()
            },
            seed,
            layout,
            trace: None,
            trace_error: None,
        })
    }

    /// Streams one `slot,kind,tx,rx` line per transmission or refused
    /// handshake.
    pub fn set_trace(&mut self, sink: Box<dyn Write + Send>) {
        self.trace = Some(sink);
    }

    /// Flushes and detaches the trace sink, reporting the first write error.
    pub fn finish_trace(&mut self) -> io::Result<()> {
        if let Some(err) = self.trace_error.take() {
            return Err(err);
        }
        match self.trace.take() {
            Some(mut sink) => sink.flush(),
            None => Ok(()),
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    /// Index of the next slot to be simulated.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn last_outcomes(&self) -> &[CellOutcome] {
        &self.last_outcomes
    }

    /// Packets delivered in the most recent slot, timestamps filled in.
    pub fn last_deliveries(&self) -> &[Packet] {
        &self.last_deliveries
    }

    pub fn generated_count(&self) -> u64 {
        self.acc.generated
    }

    pub fn delivered_count(&self) -> u64 {
        self.acc.delivered
    }

    pub fn in_flight_count(&self) -> u64 {
        self.nodes
            .iter()
            .map(|n| (n.local_queue.len() + n.relay_queue.len()) as u64)
            .sum()
    }

    /// Adds a packet to `node`'s local queue as if it had arrived at the end
    /// of the previous slot.
    pub fn inject_local_packet(&mut self, node: NodeId) {
        let t = self.now.saturating_sub(1);
        self.enqueue_local(node, t);
    }

    /// Places a packet of `source`'s flow in `relay`'s relay queue.
    pub fn inject_relay_packet(&mut self, relay: NodeId, source: NodeId) -> Result<()> {
        if relay == source || relay == partner(source) {
            return Err(Error::Simulation(format!(
                "node {relay} cannot relay the flow of node {source}"
            )));
        }
        if self.nodes[relay].relay_full(self.params.buffer) {
            return Err(Error::Simulation(format!(
                "relay queue of node {relay} is full"
            )));
        }
        let t = self.now.saturating_sub(1);
        let mut p = Packet::new(self.next_packet_id, source, t);
        p.t_hol = Some(t);
        self.next_packet_id += 1;
        self.acc.generated += 1;
        self.push_relay(relay, p);
        Ok(())
    }

    fn enqueue_local(&mut self, node: NodeId, t: u64) {
        let mut p = Packet::new(self.next_packet_id, node, t);
        self.next_packet_id += 1;
        self.acc.generated += 1;
        if t >= self.warmup {
            self.acc.arrivals += 1;
        }
        let queue = &mut self.nodes[node].local_queue;
        if queue.is_empty() {
            p.t_hol = Some(t);
        }
        queue.push_back(p);
        self.local_total += 1;
    }

    fn push_relay(&mut self, relay: NodeId, p: Packet) {
        let queue = &mut self.nodes[relay].relay_queue;
        debug_assert!(queue.len() < self.params.buffer);
        self.relay_len_count[queue.len()] -= 1;
        queue.push_back(p);
        self.relay_len_count[queue.len()] += 1;
    }

    /// Simulates one slot with freshly drawn node positions.
    ///
    /// Only nodes landing in the active group's coverage region can take
    /// part in the slot, and under i.i.d. uniform mobility each node does so
    /// independently with probability `region / m^2`. The engine therefore
    /// samples, per node, the gap to its next such slot and then a uniform
    /// cell inside the region; nodes elsewhere keep `cell = None`.
    pub fn advance_slot(&mut self) {
        let now = self.now;
        self.clear_positions();
        let group = self.layout.active_group(now);
        let region = self.layout.region(group);
        let due = self.movement.take_due(now);
        for &u in &due {
            let cell = region[self.movement.rngs[u].random_range(0..region.len())];
            self.nodes[u].cell = Some(cell);
            self.present.push(u);
        }
        self.movement.recycle(due);
        self.finish_slot();
    }

    /// Simulates one slot with node `u` placed in `cells[u]` instead of a
    /// random cell.
    pub fn advance_slot_with_cells(&mut self, cells: &[usize]) -> Result<()> {
        if cells.len() != self.nodes.len() || cells.iter().any(|&c| c >= self.layout.cell_count()) {
            return Err(Error::Simulation("one valid cell per node required".into()));
        }
        let now = self.now;
        self.clear_positions();
        let due = self.movement.take_due(now);
        self.movement.recycle(due);
        for (u, &cell) in cells.iter().enumerate() {
            self.nodes[u].cell = Some(cell);
            self.present.push(u);
        }
        self.finish_slot();
        Ok(())
    }

    fn clear_positions(&mut self) {
        for &u in &self.present {
            self.nodes[u].cell = None;
        }
        self.present.clear();
    }

    pub fn run_until(&mut self, end: u64) {
        while self.now < end {
            self.advance_slot();
        }
    }

    fn finish_slot(&mut self) {
        let now = self.now;
        self.last_outcomes.clear();
        self.last_deliveries.clear();

        let due = self.arrivals.take_due(now);
        for &u in &due {
            self.enqueue_local(u, now);
        }
        self.arrivals.recycle(due);

        let group = self.layout.active_group(now);
        for list in self.occupants.iter_mut().chain(self.coverage.iter_mut()) {
            list.clear();
        }
        for &u in &self.present {
            let Some(cell) = self.nodes[u].cell else {
                continue;
            };
            if let Some(idx) = self.layout.active_index(group, cell) {
                self.occupants[idx].push(u);
            }
            for &idx in self.layout.covered_by(group, cell) {
                self.coverage[idx as usize].push(u);
            }
        }

        self.order.clear();
        self.order.extend(0..self.occupants.len());
        self.order.shuffle(&mut self.sched_rng);
        let mut engaged_any = false;

        for i in 0..self.order.len() {
            let idx = self.order[i];
            if self.occupants[idx].is_empty() {
                continue;
            }
            self.free_occupants.clear();
            self.free_coverage.clear();
            let engaged = &self.engaged;
            self.free_occupants
                .extend(self.occupants[idx].iter().filter(|&&u| !engaged[u]));
            self.free_coverage
                .extend(self.coverage[idx].iter().filter(|&&u| !engaged[u]));
            let outcome = cell_action(
                &self.free_occupants,
                &self.free_coverage,
                &self.nodes,
                self.params.buffer,
                now,
                &mut self.sched_rng,
            );
            if let Some((tx, rx)) = outcome.engaged() {
                self.engaged[tx] = true;
                self.engaged[rx] = true;
                engaged_any = true;
            }
            self.apply(outcome);
            self.last_outcomes.push(outcome);
        }
        if engaged_any {
            for &u in &self.present {
                self.engaged[u] = false;
            }
        }

        if now >= self.warmup {
            self.acc.measured_slots += 1;
            for (total, count) in self.acc.occupancy.iter_mut().zip(&self.relay_len_count) {
                *total += count;
            }
            self.acc.local_len_sum += self.local_total;
        }
        self.now += 1;
    }

    fn apply(&mut self, outcome: CellOutcome) {
        let now = self.now;
        match outcome {
            CellOutcome::Transmit { kind, tx, rx } => {
                match kind {
                    LinkKind::SourceDestination => {
                        let p = self.pop_local(tx);
                        self.deliver(p);
                    }
                    LinkKind::SourceRelay => {
                        let p = self.pop_local(tx);
                        self.push_relay(rx, p);
                    }
                    LinkKind::RelayDestination => {
                        let pos = self.nodes[tx]
                            .relay_position(rx)
                            .expect("r-d outcome implies a queued packet");
                        let queue = &mut self.nodes[tx].relay_queue;
                        self.relay_len_count[queue.len()] -= 1;
                        let p = queue.remove(pos).expect("position within relay queue");
                        self.relay_len_count[queue.len()] += 1;
                        self.deliver(p);
                    }
                }
                self.write_trace(format_args!("{now},{},{tx},{rx}", kind.tag()));
            }
            CellOutcome::Refused { tx, rx } => {
                self.write_trace(format_args!("{now},idle-handshake,{tx},{rx}"));
            }
            CellOutcome::Idle | CellOutcome::NothingToSend { .. } => {}
        }
    }

    fn pop_local(&mut self, node: NodeId) -> Packet {
        let now = self.now;
        let queue = &mut self.nodes[node].local_queue;
        let p = queue
            .pop_front()
            .expect("transmit outcome implies a local packet");
        if let Some(next) = queue.front_mut() {
            next.t_hol = Some(now);
        }
        self.local_total -= 1;
        if p.t_arrival >= self.warmup {
            self.acc.sojourn_sum += now - p.t_arrival;
            self.acc.sojourn_count += 1;
        }
        p
    }

    fn deliver(&mut self, mut p: Packet) {
        p.t_delivered = Some(self.now);
        self.acc.delivered += 1;
        if p.t_arrival >= self.warmup {
            if let (Some(w), Some(t)) = (p.queuing_delay(), p.delivery_delay()) {
                self.acc.w_sum += w;
                self.acc.t_sum += t;
                self.acc.delay_samples += 1;
            }
        }
        self.last_deliveries.push(p);
    }

    fn write_trace(&mut self, line: std::fmt::Arguments<'_>) {
        if let Some(sink) = self.trace.as_mut() {
            if let Err(err) = writeln!(sink, "{line}") {
                self.trace = None;
                self.trace_error = Some(err);
            }
        }
    }

    /// Statistics gathered so far.
    pub fn stats(&self) -> ReplicationStats {
        let a = &self.acc;
        let samples = (a.measured_slots * self.params.n as u64) as f64;
        let hist: Vec<f64> = if samples > 0.0 {
            a.occupancy.iter().map(|&c| c as f64 / samples).collect()
        } else {
            vec![0.0; a.occupancy.len()]
        };
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let per_sample = |x: u64| {
            if samples > 0.0 {
                x as f64 / samples
            } else {
                0.0
            }
        };
        ReplicationStats {
            seed: self.seed,
            measured_slots: a.measured_slots,
            rbp_hat: hist[self.params.buffer],
            mean_local_len: per_sample(a.local_len_sum),
            arrival_rate_hat: per_sample(a.arrivals),
            occupancy_hist: hist,
            mean_local_sojourn: ratio(a.sojourn_sum, a.sojourn_count),
            mean_w: ratio(a.w_sum, a.delay_samples),
            mean_t: ratio(a.t_sum, a.delay_samples),
            mean_d: ratio(a.w_sum + a.t_sum, a.delay_samples),
            delay_samples: a.delay_samples,
            generated_count: a.generated,
            delivered_count: a.delivered,
            in_flight_count: self.in_flight_count(),
        }
    }
}
