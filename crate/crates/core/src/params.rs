use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complete network scenario. Both the analytical model and the simulator
/// take their inputs from this one struct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Number of nodes. Even; node `2i` and `2i + 1` form a traffic pair.
    pub n: usize,
    /// The network is an `m x m` grid of cells.
    pub m: usize,
    /// Transmission range: cells at Chebyshev distance `<= nu - 1` are covered.
    pub nu: usize,
    /// Guard factor of the protocol interference model.
    pub delta: f64,
    /// Relay-buffer capacity in packets.
    pub buffer: usize,
    /// Exogenous Bernoulli arrival rate per node, packets/slot.
    pub lambda: f64,
}

impl NetworkParams {
    pub fn new(n: usize, m: usize, nu: usize, delta: f64, buffer: usize, lambda: f64) -> Self {
        Self {
            n,
            m,
            nu,
            delta,
            buffer,
            lambda,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn with_buffer(self, buffer: usize) -> Self {
        Self { buffer, ..self }
    }

    /// Checks the rules that every query needs: grid, range, guard factor
    /// and arrival rate. `n = 2` passes here.
    pub fn validate_geometry(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "n must be even and at least 2, got {}",
                self.n
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidParams("m must be at least 1".into()));
        }
        if self.nu == 0 || self.nu > self.m {
            return Err(Error::InvalidParams(format!(
                "nu must satisfy 1 <= nu <= m, got nu = {} with m = {}",
                self.nu, self.m
            )));
        }
        // The coverage square must fit inside the torus, otherwise it wraps
        // onto itself and no longer holds (2nu - 1)^2 distinct cells.
        if 2 * self.nu - 1 > self.m {
            return Err(Error::InvalidParams(format!(
                "coverage side 2nu - 1 = {} exceeds grid side m = {}",
                2 * self.nu - 1,
                self.m
            )));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::InvalidParams(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParams(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Full validation for anything that touches the relay queue: on top of
    /// the geometry rules, `n >= 4` and `B >= 1`.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if self.n < 4 {
            return Err(Error::InvalidParams(format!(
                "relay analysis needs n >= 4, got {}",
                self.n
            )));
        }
        if self.buffer == 0 {
            return Err(Error::InvalidParams(
                "relay buffer B must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
