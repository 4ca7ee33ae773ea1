//! Theory-versus-simulation experiments over a grid of system loads.

mod csv;
mod stats;
mod sweep;

pub use csv::{format_sig, write_csv, CSV_HEADER};
pub use stats::{confidence_interval, Interval};
pub use sweep::{sweep, ComparisonRow, SimColumns, SweepSpec, TheoryColumns, SEED_STRIDE};
