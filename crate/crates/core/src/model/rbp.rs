use serde::Serialize;

use super::occupancy::occupancy_distribution;
use super::scheduling::{transmission_probabilities, SchedulingConstants};
use crate::{Error, NetworkParams, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Required bound on the fixed-point residual `|f(x) - x|`.
    pub tol: f64,
    /// Bracket width at which bisection stops.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            x_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Converged relay-buffer blocking fixed point for one arrival rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RbpSolution {
    pub params: NetworkParams,
    pub constants: SchedulingConstants,
    /// Relay-buffer blocking probability; always equal to the last entry of `pi`.
    pub p_b: f64,
    /// Local-queue service rate `p_sd + p_sr (1 - p_b)`.
    pub mu_s: f64,
    /// `lambda / mu_s`.
    pub rho_s: f64,
    /// Arrival rate into a non-full relay queue.
    pub lambda_r: f64,
    /// Relay occupancy distribution `pi_0..pi_B`.
    pub pi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// The blocking map `f(x) = pi_B(rho_s(x))`, with
/// `rho_s(x) = lambda / (p_sd + p_sr (1 - x))`.
pub fn blocking_map(params: &NetworkParams, constants: &SchedulingConstants, x: f64) -> f64 {
    let pi = occupancy_distribution(params.n, params.buffer, rho_at(params, constants, x));
    pi[params.buffer]
}

fn rho_at(params: &NetworkParams, constants: &SchedulingConstants, x: f64) -> f64 {
    if params.lambda == 0.0 {
        return 0.0;
    }
    let mu = constants.p_sd + constants.p_sr * (1.0 - x);
    if mu <= 0.0 {
        f64::INFINITY
    } else {
        params.lambda / mu
    }
}

pub fn solve_rbp(params: &NetworkParams) -> Result<RbpSolution> {
    solve_rbp_with(params, &SolverOptions::default())
}

/// Bisection on `g(x) = f(x) - x` over `[0, 1]`. `f` is non-decreasing, so
/// `g(0) >= 0 >= g(1)` brackets the root.
pub fn solve_rbp_with(params: &NetworkParams, opts: &SolverOptions) -> Result<RbpSolution> {
    params.validate()?;
    let constants = transmission_probabilities(params)?;
    let g = |x: f64| blocking_map(params, &constants, x) - x;

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    let mut iterations = 0;
    if g_lo > 0.0 && g_hi < 0.0 {
        while iterations < opts.max_iter {
            if hi - lo <= opts.x_tol && g_lo.abs().min(g_hi.abs()) <= opts.tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            iterations += 1;
            let g_mid = g(mid);
            if g_mid > 0.0 {
                lo = mid;
                g_lo = g_mid;
            } else {
                hi = mid;
                g_hi = g_mid;
            }
        }
    }
    let x = if g_lo.abs() <= g_hi.abs() { lo } else { hi };
    let residual = g_lo.abs().min(g_hi.abs());
    if residual > opts.tol {
        return Err(Error::SolverFailure {
            iterations,
            residual,
        });
    }
    Ok(assemble(params, constants, x, iterations))
}

/// Damped fixed-point iteration `x <- (1 - alpha) x + alpha f(x)` from `x = 0`.
/// Kept as an independent cross-check of the bisection solver.
pub fn solve_rbp_damped(
    params: &NetworkParams,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<RbpSolution> {
    params.validate()?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "damping must be in (0, 1], got {alpha}"
        )));
    }
    let constants = transmission_probabilities(params)?;
    let max_iter = opts.max_iter.max(1_000_000);
    let mut x = 0.0_f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let fx = blocking_map(params, &constants, x);
        residual = (fx - x).abs();
        // Stop well inside the tolerance so the iterate, not just the
        // residual, is accurate.
        if residual <= opts.tol * 1e-3 {
            break;
        }
        let next = (1.0 - alpha) * x + alpha * fx;
        iterations += 1;
        if next == x {
            break;
        }
        x = next;
    }
    if residual > opts.tol {
        return Err(Error::SolverFailure {
            iterations,
            residual,
        });
    }
    Ok(assemble(params, constants, x, iterations))
}

fn assemble(
    params: &NetworkParams,
    constants: SchedulingConstants,
    x: f64,
    iterations: usize,
) -> RbpSolution {
    let rho_s = rho_at(params, &constants, x);
    let pi = occupancy_distribution(params.n, params.buffer, rho_s);
    let p_b = pi[params.buffer];
    let mu_s = constants.p_sd + constants.p_sr * (1.0 - p_b);
    let lambda_r = if params.lambda == 0.0 {
        0.0
    } else {
        params.lambda * constants.p_sr / mu_s
    };
    RbpSolution {
        params: *params,
        constants,
        p_b,
        mu_s,
        rho_s,
        lambda_r,
        residual: (p_b - x).abs(),
        pi,
        iterations,
    }
}

/// Throughput capacity `lambda_0`, the arrival rate at which the local
/// queue's service rate equals its arrival rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Capacity {
    pub lambda0: f64,
    /// `|mu_s(lambda_0) - lambda_0|`.
    pub residual: f64,
    /// Blocking probability at `lambda_0`.
    pub p_b: f64,
    pub iterations: usize,
}

/// Bisection on `h(lambda) = mu_s(lambda) - lambda` over `[p_sd, p_sd + p_sr]`.
/// `mu_s` is non-increasing in `lambda`, so `h` is strictly decreasing.
pub fn throughput_capacity(params: &NetworkParams, opts: &SolverOptions) -> Result<Capacity> {
    let params = params.with_lambda(0.0);
    params.validate()?;
    let constants = transmission_probabilities(&params)?;
    let service = |lambda: f64| -> Result<f64> {
        Ok(solve_rbp_with(&params.with_lambda(lambda), opts)?.mu_s)
    };

    let (mut lo, mut hi) = (constants.p_sd, constants.p_sd + constants.p_sr);
    let mut iterations = 0;
    if hi > lo {
        let cap = opts.max_iter;
        while iterations < cap {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            iterations += 1;
            if service(mid)? > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (h_lo, h_hi) = (service(lo)? - lo, service(hi)? - hi);
    let (lambda0, residual) = if h_lo.abs() <= h_hi.abs() {
        (lo, h_lo.abs())
    } else {
        (hi, h_hi.abs())
    };
    if residual > opts.tol {
        return Err(Error::SolverFailure {
            iterations,
            residual,
        });
    }
    let p_b = solve_rbp_with(&params.with_lambda(lambda0), opts)?.p_b;
    Ok(Capacity {
        lambda0,
        residual,
        p_b,
        iterations,
    })
}

/// Damped iteration `lambda <- (1 - alpha) lambda + alpha mu_s(lambda)`, the
/// independent route to [`throughput_capacity`].
///
/// `mu_s` falls with `lambda`, steeply for some scenarios, so a fixed `alpha`
/// can settle into a two-cycle. `alpha` is halved whenever the residual
/// fails to shrink.
pub fn throughput_capacity_damped(
    params: &NetworkParams,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<Capacity> {
    let params = params.with_lambda(0.0);
    params.validate()?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "damping must be in (0, 1], got {alpha}"
        )));
    }
    let constants = transmission_probabilities(&params)?;
    let mut lambda = constants.p_sd;
    let mut residual = f64::INFINITY;
    let mut p_b = 0.0;
    let mut iterations = 0;
    let mut alpha = alpha;
    while iterations < 100_000 {
        let sol = solve_rbp_with(&params.with_lambda(lambda), opts)?;
        let previous = residual;
        residual = (sol.mu_s - lambda).abs();
        p_b = sol.p_b;
        if residual <= opts.tol * 1e-3 {
            break;
        }
        if residual >= previous {
            alpha *= 0.5;
        }
        let next = (1.0 - alpha) * lambda + alpha * sol.mu_s;
        iterations += 1;
        if next == lambda {
            break;
        }
        lambda = next;
    }
    if residual > opts.tol {
        return Err(Error::SolverFailure {
            iterations,
            residual,
        });
    }
    Ok(Capacity {
        lambda0: lambda,
        residual,
        p_b,
        iterations,
    })
}
