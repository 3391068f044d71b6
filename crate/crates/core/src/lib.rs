//! Harmonic (T-periodic) solutions of delay-perturbed autonomous equations
//!
//! ```text
//! ẋ(t) = g(x(t)) + λ f(t, x(t), x(t − r)),   λ ≥ 0,
//! ```
//!
//! on manifolds M ⊆ ℝᵏ, together with the topological invariants that
//! certify their existence: the degree of the tangent field g, the fixed
//! point indices of the time-T map P and of the history translation
//! operator Q, and branches of T-periodic pairs (λ, x) emanating from the
//! zeros of g.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod builtin;
pub mod config;
pub mod degree;
pub mod error;
pub mod expr;
pub mod fields;
pub mod index;
pub mod integrate;
pub mod manifold;
pub mod poincare;
pub mod records;
pub mod region;
pub mod settings;
pub mod system;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{PerturbationField, TangentField};
pub use integrate::{Delay, History, Trajectory};
pub use manifold::EmbeddedManifold;
pub use settings::Settings;
pub use system::System;
