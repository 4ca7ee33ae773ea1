use serde::Serialize;

use super::occupancy::{conditional_occupancy, ConditionalOccupancy};
use super::RbpSolution;
use crate::{Error, Result};

/// Minimum gap `mu_s - lambda` for the local queue to count as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueuingDelay {
    /// Mean local-queue length `L_s`.
    pub local_len: f64,
    /// Mean time in the local queue, service included (`D_s`).
    pub local_sojourn: f64,
    /// Mean time to reach the head of the local queue (`W`).
    pub waiting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryDelay {
    /// Mean time from entering a relay queue to delivery (`X_R`).
    pub relay_time: f64,
    /// Mean time from head of local queue to delivery (`T`).
    pub delivery: f64,
    pub relay: ConditionalOccupancy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayBreakdown {
    pub w: f64,
    pub t: f64,
    pub d: f64,
    pub x_r: f64,
    pub l_s: f64,
    pub l_r_nf: f64,
}

fn check_stable(sol: &RbpSolution) -> Result<()> {
    if sol.params.lambda < sol.mu_s - STABILITY_MARGIN {
        Ok(())
    } else {
        Err(Error::Unstable {
            lambda: sol.params.lambda,
            mu_s: sol.mu_s,
        })
    }
}

/// Bernoulli/Bernoulli local queue: length, sojourn (via Little's law) and
/// waiting time before reaching the head of the line.
pub fn queuing_delay(sol: &RbpSolution) -> Result<QueuingDelay> {
    check_stable(sol)?;
    let lambda = sol.params.lambda;
    let mu = sol.mu_s;
    Ok(QueuingDelay {
        local_len: (lambda - lambda * lambda) / (mu - lambda),
        local_sojourn: (1.0 - lambda) / (mu - lambda),
        waiting: lambda * (1.0 - mu) / (mu * (mu - lambda)),
    })
}

/// Expected absorption time of a head-of-line packet.
///
/// From the local queue the packet reaches its destination w.p. `p_sd`, a
/// relay w.p. `p_sr (1 - p_b)`, and otherwise stays. In the relay, one
/// destination gets a `p_rd / (n - 2)` share of r-d opportunities and the
/// packet waits behind the same-destination packets already queued.
///
/// Only needs the fixed point, so it is defined above capacity too.
pub fn delivery_delay(sol: &RbpSolution) -> Result<DeliveryDelay> {
    let relay = conditional_occupancy(sol)?;
    let c = &sol.constants;
    let flows = sol.params.n as f64 - 2.0;
    let relay_time = flows / c.p_rd * (1.0 + relay.mean_len_per_flow);
    let delivery = (1.0 + relay_time * c.p_sr * (1.0 - sol.p_b)) / sol.mu_s;
    Ok(DeliveryDelay {
        relay_time,
        delivery,
        relay,
    })
}

pub fn end_to_end_delay(sol: &RbpSolution) -> Result<DelayBreakdown> {
    let queuing = queuing_delay(sol)?;
    let delivery = delivery_delay(sol)?;
    Ok(DelayBreakdown {
        w: queuing.waiting,
        t: delivery.delivery,
        d: queuing.waiting + delivery.delivery,
        x_r: delivery.relay_time,
        l_s: queuing.local_len,
        l_r_nf: delivery.relay.mean_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solve_rbp, throughput_capacity, SolverOptions};
    use crate::NetworkParams;

    fn delay_case() -> NetworkParams {
        NetworkParams::new(50, 5, 1, 1.0, 8, 0.0)
    }

    /// A solution with chosen `lambda` and `mu_s`, for exercising the
    /// formulas away from any fixed point.
    fn forced(lambda: f64, mu_s: f64) -> RbpSolution {
        let mut sol = solve_rbp(&delay_case()).unwrap();
        sol.params.lambda = lambda;
        sol.mu_s = mu_s;
        sol
    }

    #[test]
    fn queuing_worked_example() {
        let q = queuing_delay(&forced(0.02, 0.05)).unwrap();
        assert!((q.local_len - 0.0196 / 0.03).abs() < 1e-12);
        assert!((q.local_sojourn - 0.98 / 0.03).abs() < 1e-12);
        assert!((q.waiting - (0.98 / 0.03 - 20.0)).abs() < 1e-12);
    }

    #[test]
    fn waiting_is_sojourn_minus_service() {
        for (lambda, mu) in [(0.001, 0.002), (0.3, 0.31), (0.05, 0.5), (0.0, 0.2)] {
            let q = queuing_delay(&forced(lambda, mu)).unwrap();
            let gap = q.local_sojourn - 1.0 / mu - q.waiting;
            assert!(gap.abs() <= 1e-12 * q.local_sojourn, "{lambda} {mu}: {gap}");
        }
    }

    #[test]
    fn zero_load_delays() {
        let sol = solve_rbp(&delay_case()).unwrap();
        let d = end_to_end_delay(&sol).unwrap();
        assert_eq!(d.w, 0.0);
        assert_eq!(d.l_s, 0.0);
        assert_eq!(d.d, d.t);
    }

    #[test]
    fn unit_buffer_delivery_closed_form() {
        let base = delay_case().with_buffer(1);
        let cap = throughput_capacity(&base, &SolverOptions::default()).unwrap();
        for frac in [0.0, 0.3, 0.8] {
            let sol = solve_rbp(&base.with_lambda(frac * cap.lambda0)).unwrap();
            let t = delivery_delay(&sol).unwrap().delivery;
            let want = (1.0 + 48.0 * (1.0 - sol.p_b)) / sol.mu_s;
            assert!((t - want).abs() <= 1e-12 * want);
        }
        let sol = solve_rbp(&base).unwrap();
        let c = sol.constants;
        let t = delivery_delay(&sol).unwrap().delivery;
        assert!((t - 49.0 / (c.p_sd + c.p_sr)).abs() <= 1e-12 * t);
    }

    #[test]
    fn unstable_is_reported() {
        let base = delay_case();
        let cap = throughput_capacity(&base, &SolverOptions::default()).unwrap();
        let sol = solve_rbp(&base.with_lambda(cap.lambda0)).unwrap();
        assert!(matches!(queuing_delay(&sol), Err(Error::Unstable { .. })));
        assert!(matches!(
            end_to_end_delay(&sol),
            Err(Error::Unstable { .. })
        ));
        assert!(delivery_delay(&sol).is_ok());
    }

    #[test]
    fn breakdown_identity_and_bounds() {
        let base = delay_case();
        let cap = throughput_capacity(&base, &SolverOptions::default()).unwrap();
        let mut prev_w = -1.0;
        for i in 1..20 {
            let sol = solve_rbp(&base.with_lambda(cap.lambda0 * i as f64 / 20.0)).unwrap();
            let d = end_to_end_delay(&sol).unwrap();
            assert_eq!(d.d - d.w - d.t, 0.0);
            assert!(d.w >= 0.0);
            assert!(d.t >= 1.0 / sol.mu_s);
            assert!(d.w >= prev_w);
            prev_w = d.w;
        }
    }
}
