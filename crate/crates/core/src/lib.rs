//! Solver library for the latency location routing problem (LLRP).
//!
//! An LLRP instance asks for at most `N_d` open depots and `N_v` capacitated
//! vehicle routes that visit every customer once while minimizing the sum of
//! customer arrival times (the return leg to the depot is free).
//!
//! The solver is a memetic algorithm:
//!
//! * [`crossover`] recombines three parents with a directed, multi-parent
//!   edge assembly crossover;
//! * [`variation`] repairs depot-count and capacity violations and mutates
//!   offspring;
//! * [`sovnd`] improves offspring with a variable neighborhood descent whose
//!   neighborhood order is learned by [`qlearn`] and whose acceptance
//!   oscillates between feasible and infeasible space;
//! * [`population`] keeps a quality-and-diversity managed pool of local optima;
//! * [`engine`] ties the pieces together and [`harness`] runs batches of
//!   seeded runs (in parallel with the `parallel` feature).

pub mod crossover;
pub mod engine;
pub mod error;
pub mod harness;
pub mod instance;
pub mod neighborhoods;
pub mod population;
pub mod qlearn;
pub mod rng;
pub mod solution;
pub mod sovnd;
pub mod variation;

pub use engine::{run, AblationPreset, RunResult, SearchConfig};
pub use error::{Error, Result};
pub use instance::{Instance, InstanceFormat};
pub use solution::Solution;

/// Absolute tolerance used when comparing objective values.
pub const OBJ_EPS: f64 = 1e-6;

/// Strict improvement threshold for accepting a move.
pub const IMPROVE_EPS: f64 = 1e-9;
