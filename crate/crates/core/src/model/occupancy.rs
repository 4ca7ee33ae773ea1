use serde::Serialize;

use super::RbpSolution;
use crate::{Error, Result};

/// Rescale threshold for the unnormalised occupancy weights.
const RESCALE_ABOVE: f64 = 1e250;

/// Service rate of a relay queue holding `k` packets: the chance that the
/// randomly chosen receiver is the destination of at least one of them,
/// times the r-d opportunity `p_rd`.
pub fn relay_service_rate(n: usize, k: usize, p_rd: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    k / (n as f64 - 3.0 + k) * p_rd
}

/// Stationary relay-queue occupancy `(pi_0, ..., pi_B)` for local occupancy
/// ratio `rho`. Weights are `C_i rho^i` with `C_i = binom(n - 3 + i, i)`,
/// built by the recurrence `w_i = w_{i-1} * rho * (n - 3 + i) / i`.
pub fn occupancy_distribution(n: usize, buffer: usize, rho: f64) -> Vec<f64> {
    let mut weights = Vec::with_capacity(buffer + 1);
    if rho.is_infinite() {
        weights.resize(buffer + 1, 0.0);
        weights[buffer] = 1.0;
        return weights;
    }
    weights.push(1.0);
    let mut w = 1.0_f64;
    let base = n as f64 - 3.0;
    for i in 1..=buffer {
        w *= rho * (base + i as f64) / i as f64;
        if w > RESCALE_ABOVE {
            let scale = 1.0 / w;
            weights.iter_mut().for_each(|x| *x *= scale);
            w = 1.0;
        }
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|x| *x /= total);
    weights
}

/// Relay occupancy conditioned on the buffer not being full.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalOccupancy {
    /// `pi'_k` for `k = 0..B-1`.
    pub pi: Vec<f64>,
    /// Expected relay-queue length given not full.
    pub mean_len: f64,
    /// Expected number of queued packets sharing one destination, given not full.
    pub mean_len_per_flow: f64,
}

pub fn conditional_occupancy(solution: &RbpSolution) -> Result<ConditionalOccupancy> {
    conditional_occupancy_from(&solution.pi, solution.params.n)
}

/// Conditions a full occupancy vector `(pi_0..pi_B)` on "not full".
pub fn conditional_occupancy_from(pi: &[f64], n: usize) -> Result<ConditionalOccupancy> {
    let (&_full, rest) = pi
        .split_last()
        .ok_or_else(|| Error::InvalidParams("empty occupancy vector".into()))?;
    let mass: f64 = rest.iter().sum();
    if rest.is_empty() || mass <= 0.0 {
        return Err(Error::DegenerateConditioning);
    }
    let cond: Vec<f64> = rest.iter().map(|x| x / mass).collect();
    let mean_len = cond
        .iter()
        .enumerate()
        .map(|(k, x)| k as f64 * x)
        .sum::<f64>();
    Ok(ConditionalOccupancy {
        pi: cond,
        mean_len,
        mean_len_per_flow: mean_len / (n as f64 - 2.0),
    })
}
