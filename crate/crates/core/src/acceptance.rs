//! Self-validation suite: every acceptance criterion as a named check with a
//! pinned tolerance.
//!
//! The oracles here (placement Monte Carlo, exact binomial sums, the damped
//! solvers) are deliberately independent of the code paths they check.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::{sweep, write_csv, SweepSpec};
use crate::model::{
    contact_probabilities, end_to_end_delay, queuing_delay, relay_service_rate, solve_rbp,
    solve_rbp_damped, solve_rbp_with, throughput_capacity, transmission_probabilities,
    SolverOptions,
};
use crate::sim::{self, total_variation, SimConfig, SimReport};
use crate::{NetworkParams, Result};

pub const LARGE_RBP_TOL: f64 = 0.02;
pub const LARGE_SLOTS: u64 = 20_000_000;
pub const DESK_RBP_TOL: f64 = 0.01;
pub const DESK_SLOTS: u64 = 10_000_000;
pub const DESK_TIME_LIMIT: Duration = Duration::from_secs(60);
pub const DESK_TV_TOL: f64 = 0.02;
pub const DESK_REPLICATIONS: usize = 10;
pub const DELAY_REL_TOL: f64 = 0.15;
pub const DIVERGENCE_FACTOR: f64 = 50.0;
pub const SERVICE_RATE_REL_TOL: f64 = 1e-12;
pub const SERVICE_RATE_TIME_LIMIT: Duration = Duration::from_secs(1);
pub const PLACEMENT_SAMPLES: usize = 1_000_000;
pub const PLACEMENT_SIGMAS: f64 = 4.0;
pub const EXACT_CONTACT_TOL: f64 = 1e-12;
pub const RANDOM_PARAM_SETS: usize = 100;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const SOLVER_AGREEMENT_TOL: f64 = 1e-9;
pub const LITTLE_REL_TOL: f64 = 0.03;

const SEED: u64 = 20_140_901;

/// Large scenario: 100 nodes on an 8x8 grid.
pub fn large_case() -> NetworkParams {
    NetworkParams::new(100, 8, 1, 1.0, 8, 0.0)
}

/// Scenario used for the delay curves: 50 nodes on a 5x5 grid.
pub fn delay_case() -> NetworkParams {
    NetworkParams::new(50, 5, 1, 1.0, 8, 0.0)
}

/// Small scenario that simulates in seconds.
pub fn desk_case() -> NetworkParams {
    NetworkParams::new(20, 4, 1, 1.0, 5, 0.0)
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<34} {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

/// All criteria in order: (id, name, check).
pub fn criteria() -> Vec<(u32, &'static str, Check)> {
    vec![
        (1, "rbp-vs-sim-large", rbp_large as Check),
        (2, "rbp-vs-sim-desk", rbp_desk),
        (3, "occupancy-fidelity-desk", occupancy_desk),
        (4, "delivery-delay-shape", delivery_shape),
        (5, "queuing-delay-divergence", queuing_divergence),
        (6, "end-to-end-delay-fidelity", delay_fidelity),
        (7, "relay-service-rate-sum-form", service_rate_sum_form),
        (8, "contact-probability-oracle", contact_oracle),
        (9, "fixed-point-correctness", fixed_point),
        (10, "conservation-and-determinism", conservation_determinism),
        (11, "littles-law-in-simulation", littles_law),
    ]
}

/// Runs the criteria whose id passes `select`, in order, calling `report`
/// after each one.
pub fn run_selected(
    select: impl Fn(u32) -> bool,
    mut report: impl FnMut(&CriterionResult),
) -> Vec<CriterionResult> {
    let mut results = Vec::new();
    for (id, name, check) in criteria() {
        if !select(id) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match check() {
            Ok(outcome) => outcome,
            Err(e) => (false, format!("error: {e}")),
        };
        let result = CriterionResult {
            id,
            name,
            passed,
            detail,
            elapsed: start.elapsed(),
        };
        report(&result);
        results.push(result);
    }
    results
}

pub fn run_all(report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    run_selected(|_| true, report)
}

fn lambda_at(params: &NetworkParams, rho: f64) -> Result<f64> {
    Ok(rho * throughput_capacity(params, &SolverOptions::default())?.lambda0)
}

/// One desk-scale replication at rho = 0.6, shared by several criteria.
fn desk_run() -> Result<(NetworkParams, SimReport, Duration)> {
    let params = desk_case().with_lambda(lambda_at(&desk_case(), 0.6)?);
    let start = Instant::now();
    let report = sim::run(&SimConfig::new(params, SEED, DESK_SLOTS))?;
    Ok((params, report, start.elapsed()))
}

fn rbp_large() -> Result<(bool, String)> {
    let mut spec = SweepSpec::new(large_case(), vec![0.4, 0.6, 0.8, 1.0]);
    spec.seed = SEED;
    spec.measure_slots = LARGE_SLOTS;
    spec.replications = 1;
    let rows = sweep(&spec)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for row in &rows {
        let err = row.pb_abs_err().unwrap_or(f64::INFINITY);
        ok &= err <= LARGE_RBP_TOL;
        parts.push(format!(
            "rho={}: sim {:.4} theory {:.4}",
            row.rho,
            row.sim.as_ref().map_or(f64::NAN, |s| s.p_b.mean),
            row.theory.p_b
        ));
    }
    Ok((ok, format!("{} (tol {LARGE_RBP_TOL})", parts.join("; "))))
}

fn rbp_desk() -> Result<(bool, String)> {
    let (params, report, elapsed) = desk_run()?;
    let theory = solve_rbp(&params)?.p_b;
    let err = (report.rbp_hat - theory).abs();
    Ok((
        err <= DESK_RBP_TOL && elapsed <= DESK_TIME_LIMIT,
        format!(
            "sim {:.4} theory {:.4} |err| {:.4} (tol {DESK_RBP_TOL}), run {:.1} s (limit {} s)",
            report.rbp_hat,
            theory,
            err,
            elapsed.as_secs_f64(),
            DESK_TIME_LIMIT.as_secs()
        ),
    ))
}

fn occupancy_desk() -> Result<(bool, String)> {
    let (params, report, _) = desk_run()?;
    let pi = solve_rbp(&params)?.pi;
    let tv = total_variation(&report.occupancy_hist, &pi);
    Ok((
        tv <= DESK_TV_TOL,
        format!("TV distance {tv:.4} (tol {DESK_TV_TOL})"),
    ))
}

fn delivery_shape() -> Result<(bool, String)> {
    let params = delay_case();
    let lambda0 = lambda_at(&params, 1.0)?;
    let grid: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    let t = grid
        .iter()
        .map(|rho| {
            let sol = solve_rbp(&params.with_lambda(rho * lambda0))?;
            Ok(end_to_end_delay(&sol)?.t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let peak = t
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let last = t.len() - 1;
    let interior = peak > 0 && peak < last;
    let rising = t[0] < t[1] && t[1] < t[2];
    let falling = t[last - 2] > t[last - 1] && t[last - 1] > t[last];
    Ok((
        interior && rising && falling,
        format!(
            "T peaks at rho={:.2} ({:.1} slots); T(0.05)={:.1}, T(0.95)={:.1}",
            grid[peak], t[peak], t[0], t[last]
        ),
    ))
}

fn queuing_divergence() -> Result<(bool, String)> {
    let params = delay_case();
    let lambda0 = lambda_at(&params, 1.0)?;
    let w = |rho: f64| -> Result<f64> {
        Ok(queuing_delay(&solve_rbp(&params.with_lambda(rho * lambda0))?)?.waiting)
    };
    let (near, half) = (w(0.99)?, w(0.5)?);
    Ok((
        near > DIVERGENCE_FACTOR * half,
        format!(
            "W(0.99) = {near:.1}, W(0.5) = {half:.3}, ratio {:.0} (need > {DIVERGENCE_FACTOR})",
            near / half
        ),
    ))
}

fn delay_fidelity() -> Result<(bool, String)> {
    let params = desk_case().with_lambda(lambda_at(&desk_case(), 0.6)?);
    let theory = end_to_end_delay(&solve_rbp(&params)?)?.d;
    let config =
        SimConfig::new(params, SEED + 1000, DESK_SLOTS).with_replications(DESK_REPLICATIONS);
    let report = sim::run(&config)?;
    let sim_d = report.mean_d.unwrap_or(f64::NAN);
    let rel = (sim_d - theory).abs() / theory;
    Ok((
        rel <= DELAY_REL_TOL,
        format!("sim D {sim_d:.1} theory D {theory:.1}, rel err {rel:.4} (tol {DELAY_REL_TOL})"),
    ))
}

fn binom_exact(a: u128, b: u128) -> u128 {
    if b > a {
        return 0;
    }
    let b = b.min(a - b);
    (0..b).fold(1u128, |acc, i| acc * (a - i) / (i + 1))
}

fn service_rate_sum_form() -> Result<(bool, String)> {
    let start = Instant::now();
    let p_rd = 0.01;
    let mut worst = 0.0_f64;
    for n in (4..=60u128).step_by(2) {
        for k in 1..=20u128 {
            let denom = binom_exact(n - 3 + k, k) as f64;
            let summed: f64 = (1..=k)
                .map(|i| {
                    let ways = binom_exact(n - 2, i) * binom_exact(k - 1, i - 1);
                    ways as f64 / denom * i as f64 * p_rd / (n - 2) as f64
                })
                .sum();
            let closed = relay_service_rate(n as usize, k as usize, p_rd);
            worst = worst.max(((closed - summed) / summed).abs());
        }
    }
    let elapsed = start.elapsed();
    Ok((
        worst <= SERVICE_RATE_REL_TOL && elapsed < SERVICE_RATE_TIME_LIMIT,
        format!("max rel diff {worst:.2e} (tol {SERVICE_RATE_REL_TOL:e})"),
    ))
}

/// Places `n` nodes uniformly on the torus and estimates, for cell 0, the
/// chance of a contact and of a pair contact.
pub fn placement_oracle(n: usize, m: usize, nu: usize, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = nu - 1;
    let covers = |cell: usize| {
        let (x, y) = (cell / m, cell % m);
        let d = |u: usize| u.min(m - u);
        d(x) <= reach && d(y) <= reach
    };
    let mut cells = vec![0usize; n];
    let (mut contact, mut pair) = (0usize, 0usize);
    for _ in 0..samples {
        for c in cells.iter_mut() {
            *c = rng.random_range(0..m * m);
        }
        let inside = cells.iter().filter(|&&c| c == 0).count();
        let covered = cells.iter().filter(|&&c| covers(c)).count();
        if inside >= 1 && covered >= 2 {
            contact += 1;
        }
        let any_pair = (0..n / 2).any(|j| {
            let (a, b) = (cells[2 * j], cells[2 * j + 1]);
            (a == 0 && covers(b)) || (b == 0 && covers(a))
        });
        if any_pair {
            pair += 1;
        }
    }
    (
        contact as f64 / samples as f64,
        pair as f64 / samples as f64,
    )
}

fn contact_oracle() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(n, m, nu)) in [(2, 2, 1), (4, 2, 1), (10, 4, 2)].iter().enumerate() {
        let exact = contact_probabilities(&NetworkParams::new(n, m, nu, 1.0, 1, 0.0))?;
        let (p_hat, q_hat) = placement_oracle(n, m, nu, PLACEMENT_SAMPLES, SEED + i as u64);
        let z = |est: f64, truth: f64| {
            let sigma = (truth * (1.0 - truth) / PLACEMENT_SAMPLES as f64).sqrt();
            (est - truth).abs() / sigma
        };
        let (zp, zq) = (z(p_hat, exact.p), z(q_hat, exact.q));
        ok &= zp <= PLACEMENT_SIGMAS && zq <= PLACEMENT_SIGMAS;
        parts.push(format!("({n},{m},{nu}) z_p={zp:.2} z_q={zq:.2}"));
    }
    let exact_cases = [(2, 1.0 / 16.0, 1.0 / 16.0), (4, 67.0 / 256.0, 31.0 / 256.0)];
    for (n, p, q) in exact_cases {
        let c = contact_probabilities(&NetworkParams::new(n, 2, 1, 1.0, 1, 0.0))?;
        ok &= (c.p - p).abs() <= EXACT_CONTACT_TOL && (c.q - q).abs() <= EXACT_CONTACT_TOL;
    }
    Ok((ok, format!("{}; exact values checked", parts.join(", "))))
}

/// A random valid scenario with a load anywhere from idle to 1.5x the
/// unblocked service rate.
pub fn random_params<R: Rng>(rng: &mut R) -> Result<NetworkParams> {
    let m = rng.random_range(2..=16);
    let nu = if m >= 3 && rng.random_bool(0.3) { 2 } else { 1 };
    let base = NetworkParams::new(
        2 * rng.random_range(2..=100),
        m,
        nu,
        rng.random_range(0.0..2.0),
        rng.random_range(1..=20),
        0.0,
    );
    let c = transmission_probabilities(&base)?;
    let lambda = (rng.random_range(0.0..1.5) * (c.p_sd + c.p_sr)).min(0.999);
    Ok(base.with_lambda(lambda))
}

fn fixed_point() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let opts = SolverOptions {
        tol: RESIDUAL_TOL,
        ..SolverOptions::default()
    };
    let (mut worst_res, mut worst_gap) = (0.0_f64, 0.0_f64);
    for _ in 0..RANDOM_PARAM_SETS {
        let params = random_params(&mut rng)?;
        let bis = solve_rbp_with(&params, &opts)?;
        let dmp = solve_rbp_damped(&params, 0.5, &opts)?;
        worst_res = worst_res.max(bis.residual);
        worst_gap = worst_gap.max((bis.p_b - dmp.p_b).abs());
    }
    Ok((
        worst_res <= RESIDUAL_TOL && worst_gap <= SOLVER_AGREEMENT_TOL,
        format!(
            "{RANDOM_PARAM_SETS} sets: max residual {worst_res:.1e} (tol {RESIDUAL_TOL:e}), \
             max solver gap {worst_gap:.1e} (tol {SOLVER_AGREEMENT_TOL:e})"
        ),
    ))
}

fn conservation_determinism() -> Result<(bool, String)> {
    let mut ok = true;
    let mut runs = 0;
    for (params, rho) in [
        (desk_case(), 0.6),
        (desk_case(), 1.3),
        (large_case(), 0.8),
        (delay_case(), 0.3),
    ] {
        let config = SimConfig::new(params.with_lambda(lambda_at(&params, rho)?), SEED, 200_000)
            .with_warmup(10_000)
            .with_replications(2);
        let report = sim::run(&config)?;
        for r in &report.replications {
            ok &= r.generated_count == r.delivered_count + r.in_flight_count;
            runs += 1;
        }
    }

    let mut spec = SweepSpec::new(desk_case(), vec![0.5, 0.9, 1.1]);
    spec.seed = SEED;
    spec.measure_slots = 200_000;
    spec.warmup_slots = 10_000;
    spec.replications = 3;
    let render = || -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_csv(&mut buf, &sweep(&spec)?).expect("writing to memory");
        Ok(buf)
    };
    let identical = render()? == render()?;
    ok &= identical;
    Ok((
        ok,
        format!(
            "accounting exact over {runs} replications; repeated sweep CSV identical: {identical}"
        ),
    ))
}

fn littles_law() -> Result<(bool, String)> {
    let (params, report, _) = desk_run()?;
    let sojourn = report.mean_local_sojourn.unwrap_or(f64::NAN);
    let predicted = params.lambda * sojourn;
    let rel = (report.mean_local_len - predicted).abs() / predicted;
    Ok((
        rel <= LITTLE_REL_TOL,
        format!(
            "mean local length {:.4} vs lambda * D_s {predicted:.4}, rel err {rel:.4} (tol {LITTLE_REL_TOL})",
            report.mean_local_len
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_oracle_small_exact_case() {
        // n = 2, m = 2: both nodes in cell 0 w.p. 1/16.
        let (p, q) = placement_oracle(2, 2, 1, 200_000, 3);
        let sigma = (1.0f64 / 16.0 * 15.0 / 16.0 / 200_000.0).sqrt();
        assert!((p - 1.0 / 16.0).abs() < 4.0 * sigma);
        assert_eq!(p, q);
    }

    #[test]
    fn random_params_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            random_params(&mut rng).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn fast_criteria_pass() {
        let results = run_selected(|id| matches!(id, 4 | 5 | 7 | 9), |_| {});
        assert_eq!(results.len(), 4);
        for r in results {
            assert!(r.passed, "{r}");
        }
    }
}
