use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use relay_manet::model::contact_probabilities;
use relay_manet::sim::{self, CellOutcome, LinkKind, SimConfig, Simulation};
use relay_manet::NetworkParams;

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl SharedBuf {
    fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

fn desk(lambda: f64) -> NetworkParams {
    NetworkParams::new(20, 4, 1, 1.0, 5, lambda)
}

/// A cell of the group active in the next slot, and one outside it.
fn active_and_idle_cells(sim: &Simulation) -> (usize, usize) {
    let layout = sim.layout();
    let group = layout.active_group(sim.now());
    let active = layout.group_cells(group)[0];
    let idle = (0..layout.cell_count())
        .find(|&c| layout.active_index(group, c).is_none() && layout.distance(c, active) > 0)
        .unwrap();
    (active, idle)
}

#[test]
fn zero_load_generates_nothing() {
    let config = SimConfig::new(desk(0.0), 5, 50_000).with_warmup(1_000);
    let report = sim::run(&config).unwrap();
    assert_eq!(report.generated_count, 0);
    assert_eq!(report.delivered_count, 0);
    assert_eq!(report.rbp_hat, 0.0);
    assert_eq!(report.mean_local_len, 0.0);
    assert_eq!(report.mean_d, None);
    assert_eq!(report.occupancy_hist[0], 1.0);
}

#[test]
fn colocated_pair_delivers_directly() {
    let params = NetworkParams::new(2, 2, 1, 1.0, 1, 0.0);
    let mut sim = Simulation::new(&params, 1, 0).unwrap();
    let (_, idle) = active_and_idle_cells(&sim);
    sim.advance_slot_with_cells(&[idle, idle]).unwrap();

    sim.inject_local_packet(0);
    let (active, _) = active_and_idle_cells(&sim);
    let now = sim.now();
    sim.advance_slot_with_cells(&[active, active]).unwrap();

    assert_eq!(
        sim.last_outcomes(),
        &[CellOutcome::Transmit {
            kind: LinkKind::SourceDestination,
            tx: 0,
            rx: 1
        }]
    );
    let delivered = sim.last_deliveries();
    assert_eq!(delivered.len(), 1);
    assert_eq!(delivered[0].destination, 1);
    assert_eq!(delivered[0].t_delivered, Some(now));
    assert_eq!(sim.in_flight_count(), 0);
    assert_eq!(sim.delivered_count(), 1);
}

#[test]
fn fresh_arrival_waits_one_slot() {
    let params = NetworkParams::new(2, 2, 1, 1.0, 1, 0.0);
    let mut sim = Simulation::new(&params, 1, 0).unwrap();
    // At slot 0 the injected packet is stamped with slot 0 and cannot leave
    // in the same slot.
    sim.inject_local_packet(0);
    let (active, _) = active_and_idle_cells(&sim);
    sim.advance_slot_with_cells(&[active, active]).unwrap();
    assert!(sim.last_deliveries().is_empty());
    assert_eq!(sim.in_flight_count(), 1);
}

#[test]
fn refused_handshake_changes_nothing() {
    let params = NetworkParams::new(4, 2, 1, 1.0, 1, 0.0);
    let mut refusals = 0;
    for seed in 0..200 {
        let mut sim = Simulation::new(&params, seed, 0).unwrap();
        let trace = SharedBuf::default();
        sim.set_trace(Box::new(trace.clone()));
        let (_, idle) = active_and_idle_cells(&sim);
        sim.advance_slot_with_cells(&[idle; 4]).unwrap();

        sim.inject_local_packet(2);
        sim.inject_relay_packet(0, 2).unwrap();
        let before: Vec<(usize, usize)> = sim
            .nodes()
            .iter()
            .map(|n| (n.local_queue.len(), n.relay_queue.len()))
            .collect();
        let (active, idle) = active_and_idle_cells(&sim);
        let slot = sim.now();
        sim.advance_slot_with_cells(&[active, idle, active, idle])
            .unwrap();
        sim.finish_trace().unwrap();

        let after: Vec<(usize, usize)> = sim
            .nodes()
            .iter()
            .map(|n| (n.local_queue.len(), n.relay_queue.len()))
            .collect();
        assert_eq!(before, after, "no transfer is possible in this layout");
        if sim.last_outcomes() == [CellOutcome::Refused { tx: 2, rx: 0 }] {
            refusals += 1;
            assert_eq!(trace.text(), format!("{slot},idle-handshake,2,0\n"));
        }
    }
    // The refusal needs node 2 as transmitter and the s-r coin: 1/4.
    assert!((25..=75).contains(&refusals), "{refusals} refusals");
}

#[test]
fn relay_packets_only_for_foreign_flows() {
    let params = NetworkParams::new(4, 2, 1, 1.0, 1, 0.0);
    let mut sim = Simulation::new(&params, 0, 0).unwrap();
    assert!(sim.inject_relay_packet(0, 0).is_err());
    assert!(sim.inject_relay_packet(0, 1).is_err());
    sim.inject_relay_packet(0, 2).unwrap();
    assert!(
        sim.inject_relay_packet(0, 3).is_err(),
        "buffer of one is full"
    );
}

#[test]
fn same_seed_same_run() {
    let params = desk(0.003);
    let run = |seed| {
        let mut sim = Simulation::new(&params, seed, 1_000).unwrap();
        sim.run_until(60_000);
        sim.stats()
    };
    assert_eq!(run(42), run(42));
    assert_ne!(run(42), run(43));
}

#[test]
fn replications_are_reproducible() {
    let config = SimConfig::new(desk(0.002), 9, 30_000)
        .with_warmup(1_000)
        .with_replications(3);
    let a = sim::run(&config).unwrap();
    let b = sim::run(&config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.replications[1], sim::run_replication(&config, 1).unwrap());
}

#[test]
fn oversized_buffer_never_blocks() {
    let params = NetworkParams::new(10, 4, 1, 1.0, 10_000, 0.02);
    let mut sim = Simulation::new(&params, 3, 0).unwrap();
    sim.run_until(50_000);
    let stats = sim.stats();
    assert!(stats.generated_count > 1_000);
    assert_eq!(stats.rbp_hat, 0.0);
}

#[test]
fn delivered_packets_have_ordered_timestamps() {
    let mut sim = Simulation::new(&desk(0.004), 8, 0).unwrap();
    let mut seen = 0;
    while sim.now() < 100_000 {
        sim.advance_slot();
        for p in sim.last_deliveries() {
            let hol = p.t_hol.unwrap();
            let done = p.t_delivered.unwrap();
            assert!(p.t_arrival <= hol && hol < done, "{p:?}");
            assert_eq!(done, sim.now() - 1);
            seen += 1;
        }
    }
    assert!(seen > 100);
}

#[test]
fn mobility_reproduces_contact_probabilities() {
    // With one cell per group, each slot has one active cell and the
    // outcome kinds reveal whether it had a contact and whether that
    // contact was a source-destination pair.
    let params = desk(0.0);
    let exact = contact_probabilities(&params).unwrap();
    let mut sim = Simulation::new(&params, 21, 0).unwrap();
    assert_eq!(sim.layout().group_cells(0).len(), 1);
    let slots = 400_000;
    let (mut contacts, mut pairs) = (0u64, 0u64);
    for _ in 0..slots {
        sim.advance_slot();
        for outcome in sim.last_outcomes() {
            match outcome {
                CellOutcome::Idle => {}
                CellOutcome::NothingToSend { kind, .. } => {
                    contacts += 1;
                    if *kind == LinkKind::SourceDestination {
                        pairs += 1;
                    }
                }
                other => panic!("no packets, yet {other:?}"),
            }
        }
    }
    let within = |hits: u64, prob: f64| {
        let sigma = (prob * (1.0 - prob) / slots as f64).sqrt();
        (hits as f64 / slots as f64 - prob).abs() < 5.0 * sigma
    };
    assert!(within(contacts, exact.p), "p: {contacts} vs {}", exact.p);
    assert!(within(pairs, exact.q), "q: {pairs} vs {}", exact.q);
}

#[test]
fn trace_lines_match_transmissions() {
    let params = desk(0.004);
    let mut sim = Simulation::new(&params, 2, 0).unwrap();
    let trace = SharedBuf::default();
    sim.set_trace(Box::new(trace.clone()));
    sim.run_until(50_000);
    sim.finish_trace().unwrap();

    let text = trace.text();
    let mut last_slot = 0;
    let mut deliveries = 0;
    let mut relayed = 0;
    for line in text.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "{line}");
        let slot: u64 = fields[0].parse().unwrap();
        let tx: usize = fields[2].parse().unwrap();
        let rx: usize = fields[3].parse().unwrap();
        assert!(slot >= last_slot && slot < 50_000);
        assert!(tx != rx && tx < params.n && rx < params.n);
        match fields[1] {
            "sd" | "rd" => deliveries += 1,
            "sr" => relayed += 1,
            "idle-handshake" => {}
            other => panic!("unknown kind {other}"),
        }
        last_slot = slot;
    }
    assert_eq!(deliveries, sim.delivered_count());
    assert!(relayed > 0);
}

#[test]
fn tracing_does_not_change_results() {
    let config = SimConfig::new(desk(0.003), 12, 40_000)
        .with_warmup(1_000)
        .with_replications(2);
    let trace = SharedBuf::default();
    let traced = sim::run_with_trace(&config, Box::new(trace.clone())).unwrap();
    assert_eq!(traced, sim::run(&config).unwrap());
    assert!(!trace.text().is_empty());
}

#[test]
fn trace_write_failure_is_reported() {
    struct Broken;
    impl Write for Broken {
        fn write(&mut self, _: &[u8]) -> io::Result<usize> {
            Err(io::Error::other("disk full"))
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }
    let mut sim = Simulation::new(&desk(0.01), 2, 0).unwrap();
    sim.set_trace(Box::new(Broken));
    sim.run_until(20_000);
    assert!(sim.finish_trace().is_err());
    assert!(sim.finish_trace().is_ok(), "error reported once");
}

#[test]
fn rejects_grids_without_lattice_groups() {
    let params = NetworkParams::new(20, 6, 1, 1.0, 5, 0.001);
    assert!(Simulation::new(&params, 0, 0).is_err());
    assert!(SimConfig::new(desk(0.001), 0, 10)
        .with_replications(0)
        .validate()
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slots_respect_invariants(
        pairs in 2usize..12,
        m in prop::sample::select(vec![2usize, 3, 4, 8]),
        buffer in 1usize..5,
        lambda in 0.0f64..0.08,
        seed in any::<u64>(),
    ) {
        let params = NetworkParams::new(2 * pairs, m, 1, 1.0, buffer, lambda);
        let mut sim = Simulation::new(&params, seed, 0).unwrap();
        let mut busy = vec![false; params.n];
        for _ in 0..3_000 {
            let slot = sim.now();
            sim.advance_slot();
            let group = sim.layout().active_group(slot);
            busy.iter_mut().for_each(|b| *b = false);
            for outcome in sim.last_outcomes() {
                let Some((tx, rx)) = outcome.engaged() else { continue };
                for u in [tx, rx] {
                    prop_assert!(!busy[u], "node {} used twice in slot {}", u, slot);
                    busy[u] = true;
                }
                let cell = sim.nodes()[tx].cell.unwrap();
                prop_assert!(sim.layout().active_index(group, cell).is_some());
            }
            for node in sim.nodes() {
                prop_assert!(node.relay_queue.len() <= buffer);
            }
            prop_assert_eq!(
                sim.generated_count(),
                sim.delivered_count() + sim.in_flight_count()
            );
        }
    }
}
