use serde::Serialize;

use crate::{NetworkParams, Result};

/// Group layout of the cell grid under group-based scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupGeometry {
    /// Spacing between concurrently active cells, in cells.
    pub epsilon: usize,
    /// Cells per group, `floor(m^2 / epsilon^2)`.
    pub cells_per_group: usize,
    /// Number of cells covered by one transmitter, `(2nu - 1)^2`.
    pub coverage_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactProbabilities {
    /// An active cell holds a node and another node lies in its coverage.
    pub p: f64,
    /// Some source-destination pair has one end in the active cell and the
    /// other end in its coverage.
    pub q: f64,
}

/// Per-node, per-slot transmission opportunities and the constants they
/// derive from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchedulingConstants {
    pub geometry: GroupGeometry,
    pub contact: ContactProbabilities,
    pub p_sd: f64,
    pub p_sr: f64,
    pub p_rd: f64,
}

/// Smallest group spacing that keeps concurrent transmissions clear of each
/// other's guard zone, clamped to the grid side.
pub fn compute_epsilon(params: &NetworkParams) -> Result<GroupGeometry> {
    params.validate_geometry()?;
    let nu = params.nu as f64;
    let spacing = ((1.0 + params.delta) * std::f64::consts::SQRT_2 * nu + nu).ceil();
    let epsilon = if spacing >= params.m as f64 {
        params.m
    } else {
        spacing as usize
    };
    let side = 2 * params.nu - 1;
    Ok(GroupGeometry {
        epsilon,
        cells_per_group: (params.m * params.m) / (epsilon * epsilon),
        coverage_cells: side * side,
    })
}

/// Contact probabilities for one active cell under i.i.d. uniform mobility.
///
/// Evaluated as `1 - (1 - 1/m^2)^n - (n/m^2)(1 - l/m^2)^(n-1)` and
/// `1 - (1 - (2l - 1)/m^4)^(n/2)` with the powers taken through `ln_1p` and
/// `exp_m1`, so large grids and node counts neither overflow nor cancel.
pub fn contact_probabilities(params: &NetworkParams) -> Result<ContactProbabilities> {
    let geometry = compute_epsilon(params)?;
    let n = params.n as f64;
    let cells = (params.m * params.m) as f64;
    let l = geometry.coverage_cells as f64;

    let a = 1.0 / cells;
    // p = P(>= 2 in cell) + P(exactly 1 in cell, >= 1 other elsewhere in the
    // coverage region); both parts are free of cancellation.
    let crowded = at_least_two(params.n, a);
    let spill = if l >= cells {
        n * a * ((n - 1.0) * (-a).ln_1p()).exp()
    } else {
        let log_outside = (n - 1.0) * (-l * a).ln_1p();
        n * a * log_outside.exp() * ((n - 1.0) * ((-a).ln_1p() - (-l * a).ln_1p())).exp_m1()
    };
    let p = (crowded + spill).clamp(0.0, 1.0);

    // One pair misses the cell/coverage configuration w.p. 1 - (2l - 1)/m^4.
    let pair_hit = (2.0 * l - 1.0) / (cells * cells);
    let q = (-((n / 2.0) * (-pair_hit).ln_1p()).exp_m1()).clamp(0.0, p);

    Ok(ContactProbabilities { p, q })
}

/// P(Binomial(n, a) >= 2).
fn at_least_two(n: usize, a: f64) -> f64 {
    let nf = n as f64;
    let log_none = nf * (-a).ln_1p();
    if nf * a > 0.1 || a >= 1.0 {
        let one = nf * a * ((nf - 1.0) * (-a).ln_1p()).exp();
        return (-log_none.exp_m1() - one).max(0.0);
    }
    // Light occupancy: the direct form cancels, so sum the upper tail.
    let ratio = a / (1.0 - a);
    let mut term = nf * ratio * log_none.exp();
    let mut total = 0.0;
    for j in 2..=n {
        term *= (nf - j as f64 + 1.0) / j as f64 * ratio;
        total += term;
        if term < total * 1e-18 {
            break;
        }
    }
    total
}

pub fn transmission_probabilities(params: &NetworkParams) -> Result<SchedulingConstants> {
    let geometry = compute_epsilon(params)?;
    let contact = contact_probabilities(params)?;
    let k = geometry.cells_per_group as f64;
    let n = params.n as f64;
    let p_sd = k / n * contact.q;
    let p_sr = k / (2.0 * n) * (contact.p - contact.q);
    Ok(SchedulingConstants {
        geometry,
        contact,
        p_sd,
        p_sr,
        p_rd: p_sr,
    })
}
