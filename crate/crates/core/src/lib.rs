//! Zermelo navigation for quantum systems sharing a bosonic bath.
//!
//! The crate verifies that the joint system–bath propagator refactorizes at
//! the bath's refactorization times, computes the bath-induced pairwise
//! couplings, synthesizes gates from concatenated navigation segments and runs
//! measurement-only fidelity ascent against an unknown environment.

pub mod closedloop;
pub mod error;
pub mod magnus;
pub mod model;
pub mod operator;
mod optim;
pub mod propagate;
pub mod rng;
pub mod scenarios;
pub mod specfile;
pub mod synthesize;

pub use error::{Error, Result};
pub use model::{BathSpec, Environment, LocalSystem, RandomEnvironmentSpec, SystemSpec};
pub use operator::{embed_local, hs_norm, matrix_exp, tensor, Operator, C64};
pub use rng::Rng;
