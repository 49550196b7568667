//! Simulation and numerical verification toolkit for speed-aware
//! join-the-shortest-queue load balancing across heterogeneous server pools
//! in the Halfin-Whitt regime.
//!
//! The crate is organised by capability:
//!
//! - [`model`]: configuration, occupancy counts and diffusion scaling.
//! - [`policy`]: SA-JSQ and the JSQ, power-of-d and JIQ comparators.
//! - [`ctmc`]: exact event-driven simulation, transient paths and
//!   stationary estimation; [`exact`] solves small truncated chains.
//! - [`coupling`]: the free-server blocking system and its pathwise coupling
//!   with the original system.
//! - [`diffusion`]: the one-sided reflection map and the reflected
//!   Ornstein-Uhlenbeck limit.
//! - [`lyapunov`]: the fluid-based Lyapunov function, its derivatives and the
//!   PDE residual.
//! - [`analysis`]: policy comparison and state-space-collapse sweeps.
//!
//! Runnable walkthroughs live in `examples/`; the `hetlb` binary exposes the
//! same experiments as CLI verbs writing CSV.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod coupling;
pub mod ctmc;
pub mod diffusion;
pub mod error;
pub mod exact;
pub mod io;
pub mod lyapunov;
pub mod model;
pub mod policy;
pub mod rng;
pub mod roots;
pub mod stats;

pub use error::{Error, Result};
pub use model::{OccupancyState, ScaledState, SystemConfig};
pub use policy::PolicyKind;
