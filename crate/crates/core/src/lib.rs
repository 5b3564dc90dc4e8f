//! Coalgebraic belief construction for finite partially observable
//! transition systems.
//!
//! The crate covers three branching effects (nondeterminism, probability,
//! weights) and offers
//!
//! * exact effect values with their distributive laws and belief
//!   decompositions ([`effects`]),
//! * a JSON model format for pointed partially observable systems
//!   ([`model`]),
//! * the belief construction restricted to reachable beliefs ([`belief`]),
//! * scheduler-based semantics, brute-force scheduler enumeration and
//!   fully observable solvers ([`semantics`]),
//! * seeded property campaigns tying everything together ([`harness`]).

pub mod belief;
pub mod cli;
pub mod effects;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod semantics;

pub use effects::{EffectKind, EffectValue, Fibre, Step};
pub use model::{ActionId, ObsId, PoModel, StateId};
pub use numeric::{Domain, ExtValue, Rational};
