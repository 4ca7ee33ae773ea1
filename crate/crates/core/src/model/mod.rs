//! Closed-form analysis: scheduling constants, the blocking-probability fixed
//! point, and the delay decomposition built on top of it.

mod delay;
mod occupancy;
mod rbp;
mod scheduling;

pub use delay::{
    delivery_delay, end_to_end_delay, queuing_delay, DelayBreakdown, DeliveryDelay, QueuingDelay,
    STABILITY_MARGIN,
};
pub use occupancy::{
    conditional_occupancy, conditional_occupancy_from, occupancy_distribution, relay_service_rate,
    ConditionalOccupancy,
};
pub use rbp::{
    blocking_map, solve_rbp, solve_rbp_damped, solve_rbp_with, throughput_capacity,
    throughput_capacity_damped, Capacity, RbpSolution, SolverOptions,
};
pub use scheduling::{
    compute_epsilon, contact_probabilities, transmission_probabilities, ContactProbabilities,
    GroupGeometry, SchedulingConstants,
};
