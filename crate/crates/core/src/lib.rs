//! Numerical core for two-layer non-autonomous systems whose velocity field
//! evolves under a stimulus-driven plasticity rule.
//!
//! The observable state obeys `dx/dt = a(x, t)` while the field itself obeys
//! `da(z, t)/dt = c(a(z, t), z, eta(t), t)` at every spatial node `z`. The
//! field equation is decoupled from `x`, so it is integrated first and the
//! resulting snapshots drive the trajectory integrator.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, scenario
//! handling and the command line front end live in the `plastica` crate.
//!
//! Modules:
//! - [`stimulus`]: deterministic and Euler-Maruyama stimulus paths
//! - [`field`]: plastic field grids, plasticity rules, closed-form and
//!   pullback-limit gradients of the potential rule
//! - [`trajectory`]: RK4 integration of the observable dynamics
//! - [`attractor`]: pullback attractors, forward limit sets, Hausdorff distance
//! - [`checks`]: sampled verifiers for the well-posedness hypotheses

#![no_std]
// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;

pub mod attractor;
pub mod checks;
pub mod error;
pub mod exec;
pub mod field;
pub mod quadrature;
pub mod sampling;
pub mod stimulus;
pub mod trajectory;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
