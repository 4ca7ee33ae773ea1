//! Monte Carlo simulation of the relay network, one slot at a time.

mod action;
mod engine;
mod geometry;
mod node;
mod packet;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use action::{cell_action, CellOutcome, LinkKind};
pub use engine::{ReplicationStats, Simulation};
pub use geometry::Layout;
pub use node::NodeState;
pub use packet::{partner, NodeId, Packet};

use crate::{Error, NetworkParams, Result};

pub const DEFAULT_WARMUP_SLOTS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: NetworkParams,
    /// Replication `i` runs with seed `seed + i`.
    pub seed: u64,
    pub warmup_slots: u64,
    pub measure_slots: u64,
    pub replications: usize,
}

impl SimConfig {
    pub fn new(params: NetworkParams, seed: u64, measure_slots: u64) -> Self {
        Self {
            params,
            seed,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
            measure_slots,
            replications: 1,
        }
    }

    pub fn with_replications(self, replications: usize) -> Self {
        Self {
            replications,
            ..self
        }
    }

    pub fn with_warmup(self, warmup_slots: u64) -> Self {
        Self {
            warmup_slots,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measure_slots == 0 {
            return Err(Error::InvalidParams(
                "measure_slots must be at least 1".into(),
            ));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParams(
                "replications must be at least 1".into(),
            ));
        }
        Layout::new(&self.params)?;
        Ok(())
    }
}

/// Aggregate over all replications of a [`SimConfig`]. Means are taken over
/// the per-replication values; packet counts are summed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub rbp_hat: f64,
    pub occupancy_hist: Vec<f64>,
    pub mean_local_len: f64,
    pub arrival_rate_hat: f64,
    pub mean_local_sojourn: Option<f64>,
    pub mean_w: Option<f64>,
    pub mean_t: Option<f64>,
    pub mean_d: Option<f64>,
    pub generated_count: u64,
    pub delivered_count: u64,
    pub in_flight_count: u64,
    pub replications: Vec<ReplicationStats>,
}

/// Runs a single replication to completion.
pub fn run_replication(config: &SimConfig, index: usize) -> Result<ReplicationStats> {
    replicate(config, index, None)
}

fn replicate(
    config: &SimConfig,
    index: usize,
    trace: Option<Box<dyn Write + Send>>,
) -> Result<ReplicationStats> {
    let seed = config.seed.wrapping_add(index as u64);
    let mut sim = Simulation::new(&config.params, seed, config.warmup_slots)?;
    let traced = trace.is_some();
    if let Some(sink) = trace {
        sim.set_trace(sink);
    }
    sim.run_until(config.warmup_slots + config.measure_slots);
    if traced {
        sim.finish_trace()
            .map_err(|e| Error::Simulation(format!("writing trace: {e}")))?;
    }
    let stats = sim.stats();
    if stats.generated_count != stats.delivered_count + stats.in_flight_count {
        return Err(Error::Simulation(format!(
            "packet accounting broken in replication {index}: generated {} != delivered {} + in flight {}",
            stats.generated_count, stats.delivered_count, stats.in_flight_count
        )));
    }
    Ok(stats)
}

/// Runs every replication (in parallel on the current rayon pool) and
/// aggregates them in replication order.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let reps = (0..config.replications)
        .into_par_iter()
        .map(|i| run_replication(config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, reps))
}

/// Like [`run`], but streams the transmission trace of replication 0 into
/// `trace`. Results are identical to an untraced run.
pub fn run_with_trace(config: &SimConfig, trace: Box<dyn Write + Send>) -> Result<SimReport> {
    config.validate()?;
    let first = replicate(config, 0, Some(trace))?;
    let rest = (1..config.replications)
        .into_par_iter()
        .map(|i| run_replication(config, i))
        .collect::<Result<Vec<_>>>()?;
    let reps = std::iter::once(first).chain(rest).collect();
    Ok(aggregate(config, reps))
}

fn aggregate(config: &SimConfig, reps: Vec<ReplicationStats>) -> SimReport {
    let count = reps.len() as f64;
    let mean = |f: &dyn Fn(&ReplicationStats) -> f64| reps.iter().map(f).sum::<f64>() / count;
    let mean_opt = |f: &dyn Fn(&ReplicationStats) -> Option<f64>| {
        let vals: Vec<f64> = reps.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let bins = config.params.buffer + 1;
    let occupancy_hist = (0..bins).map(|k| mean(&|r| r.occupancy_hist[k])).collect();
    SimReport {
        config: *config,
        rbp_hat: mean(&|r| r.rbp_hat),
        occupancy_hist,
        mean_local_len: mean(&|r| r.mean_local_len),
        arrival_rate_hat: mean(&|r| r.arrival_rate_hat),
        mean_local_sojourn: mean_opt(&|r| r.mean_local_sojourn),
        mean_w: mean_opt(&|r| r.mean_w),
        mean_t: mean_opt(&|r| r.mean_t),
        mean_d: mean_opt(&|r| r.mean_d),
        generated_count: reps.iter().map(|r| r.generated_count).sum(),
        delivered_count: reps.iter().map(|r| r.delivered_count).sum(),
        in_flight_count: reps.iter().map(|r| r.in_flight_count).sum(),
        replications: reps,
    }
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
