use rayon::prelude::*;
use serde::Serialize;

use super::stats::{confidence_interval, Interval};
use crate::model::{end_to_end_delay, solve_rbp, throughput_capacity, SolverOptions};
use crate::sim::{self, SimConfig, DEFAULT_WARMUP_SLOTS};
use crate::{Error, NetworkParams, Result};

/// Seed offset between consecutive sweep rows: replication `j` of row `i`
/// runs with seed `seed + i * SEED_STRIDE + j`.
pub const SEED_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    /// Scenario; its `lambda` is ignored.
    pub params: NetworkParams,
    /// System loads `rho = lambda / lambda_0`, strictly increasing.
    pub rho_grid: Vec<f64>,
    pub seed: u64,
    pub warmup_slots: u64,
    pub measure_slots: u64,
    /// Simulation replications per row. Zero skips the simulation.
    pub replications: usize,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn new(params: NetworkParams, rho_grid: Vec<f64>) -> Self {
        Self {
            params,
            rho_grid,
            seed: 1,
            warmup_slots: DEFAULT_WARMUP_SLOTS,
            measure_slots: 10_000_000,
            replications: 10,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.with_lambda(0.0).validate()?;
        if self.rho_grid.is_empty() {
            return Err(Error::InvalidParams("rho grid is empty".into()));
        }
        if self.rho_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidParams(
                "every rho must be finite and positive".into(),
            ));
        }
        if self.rho_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "rho grid must be strictly increasing".into(),
            ));
        }
        if self.replications > 0 && self.measure_slots == 0 {
            return Err(Error::InvalidParams(
                "measure_slots must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn sim_config(&self, row: usize, lambda: f64) -> SimConfig {
        SimConfig {
            params: self.params.with_lambda(lambda),
            seed: self.seed.wrapping_add(row as u64 * SEED_STRIDE),
            warmup_slots: self.warmup_slots,
            measure_slots: self.measure_slots,
            replications: self.replications,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryColumns {
    pub p_b: f64,
    /// Delays are `None` when the row is unstable.
    pub w: Option<f64>,
    pub t: Option<f64>,
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimColumns {
    pub p_b: Interval,
    pub w: Option<Interval>,
    pub t: Option<Interval>,
    pub d: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub rho: f64,
    pub lambda: f64,
    pub stable: bool,
    pub theory: TheoryColumns,
    pub sim: Option<SimColumns>,
}

impl ComparisonRow {
    /// `|sim - theory|` for the blocking probability.
    pub fn pb_abs_err(&self) -> Option<f64> {
        Some((self.sim.as_ref()?.p_b.mean - self.theory.p_b).abs())
    }

    pub fn d_rel_err(&self) -> Option<f64> {
        let theory = self.theory.d?;
        Some((self.sim.as_ref()?.d?.mean - theory).abs() / theory)
    }

    pub fn w_rel_err(&self) -> Option<f64> {
        let theory = self.theory.w?;
        Some((self.sim.as_ref()?.w?.mean - theory).abs() / theory)
    }

    pub fn t_rel_err(&self) -> Option<f64> {
        let theory = self.theory.t?;
        Some((self.sim.as_ref()?.t?.mean - theory).abs() / theory)
    }
}

/// Evaluates the model and (optionally) the simulator at every load in the
/// grid. Rows come back in grid order whatever the worker count.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<ComparisonRow>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Simulation(format!("cannot start worker pool: {e}")))?;
    let capacity = throughput_capacity(&spec.params, &SolverOptions::default())?;
    pool.install(|| {
        spec.rho_grid
            .par_iter()
            .enumerate()
            .map(|(i, &rho)| evaluate_row(spec, i, rho, capacity.lambda0))
            .collect()
    })
}

fn evaluate_row(spec: &SweepSpec, index: usize, rho: f64, lambda0: f64) -> Result<ComparisonRow> {
    let lambda = rho * lambda0;
    let params = spec.params.with_lambda(lambda);
    let sol = solve_rbp(&params)?;
    let (stable, theory) = match end_to_end_delay(&sol) {
        Ok(d) if rho < 1.0 => (
            true,
            TheoryColumns {
                p_b: sol.p_b,
                w: Some(d.w),
                t: Some(d.t),
                d: Some(d.d),
            },
        ),
        Ok(_) | Err(Error::Unstable { .. }) => (
            false,
            TheoryColumns {
                p_b: sol.p_b,
                w: None,
                t: None,
                d: None,
            },
        ),
        Err(e) => return Err(e),
    };

    let sim = if spec.replications == 0 {
        None
    } else {
        let report = sim::run(&spec.sim_config(index, lambda))
            .map_err(|e| Error::Simulation(format!("row {index} (rho = {rho}): {e}")))?;
        let reps = &report.replications;
        let collect = |f: fn(&sim::ReplicationStats) -> Option<f64>| {
            let vals: Option<Vec<f64>> = reps.iter().map(f).collect();
            vals.and_then(|v| confidence_interval(&v))
        };
        Some(SimColumns {
            p_b: collect(|r| Some(r.rbp_hat)).expect("at least one replication"),
            w: collect(|r| r.mean_w),
            t: collect(|r| r.mean_t),
            d: collect(|r| r.mean_d),
        })
    };

    Ok(ComparisonRow {
        rho,
        lambda,
        stable,
        theory,
        sim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> NetworkParams {
        NetworkParams::new(20, 4, 1, 1.0, 5, 0.0)
    }

    #[test]
    fn rejects_bad_grids() {
        let mut spec = SweepSpec::new(desk(), vec![0.5, 0.4]);
        assert!(spec.validate().is_err());
        spec.rho_grid = vec![];
        assert!(spec.validate().is_err());
        spec.rho_grid = vec![0.0, 0.5];
        assert!(spec.validate().is_err());
        spec.rho_grid = vec![0.5, 0.5];
        assert!(spec.validate().is_err());
        spec.rho_grid = vec![0.5, 1.2];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn theory_only_rows() {
        let mut spec = SweepSpec::new(desk(), vec![0.3, 0.9, 1.0, 1.5]);
        spec.replications = 0;
        let rows = sweep(&spec).unwrap();
        let cap = throughput_capacity(&desk(), &SolverOptions::default()).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!((row.lambda - row.rho * cap.lambda0).abs() < 1e-18);
            assert!(row.sim.is_none());
        }
        assert!(rows[0].stable && rows[1].stable);
        assert!(!rows[2].stable && !rows[3].stable);
        assert!(rows[3].theory.w.is_none());
        let r = &rows[1].theory;
        assert_eq!(r.d.unwrap(), r.w.unwrap() + r.t.unwrap());
    }

    #[test]
    fn row_seeds_follow_stride() {
        let mut spec = SweepSpec::new(desk(), vec![0.5, 0.6]);
        spec.seed = 40;
        let c = spec.sim_config(3, 0.001);
        assert_eq!(c.seed, 40 + 3 * SEED_STRIDE);
        assert_eq!(c.params.lambda, 0.001);
    }
}
