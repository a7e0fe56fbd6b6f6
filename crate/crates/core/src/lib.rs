//! Discrete-velocity solver and verification laboratory for the BGK kinetic
//! equation in a bounded domain with diffuse-reflection walls.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] – slab / disk / ball domains and backward exit queries,
//! * [`velocity`] – truncated velocity lattice, the global Maxwellian, the
//!   velocity weight and the moment basis,
//! * [`state`] – gridded distributions in absolute or perturbation form,
//! * [`collision`] – local Maxwellian, collision frequency, projection and
//!   the exact relaxation substep,
//! * [`linearization`] – Taylor expansion of the BGK operator around the
//!   global Maxwellian and the probes built on it,
//! * [`boundary`] – the diffuse-reflection operator,
//! * [`solver`] – operator-split time stepping and the two iteration schemes,
//! * [`cycles`] – Monte Carlo sampling of backward stochastic cycles,
//! * [`diagnostics`] – norms, decay fits and conservation residuals,
//! * [`config`] / [`experiment`] – configuration grammar and experiment
//!   orchestration used by the `bgk-lab` binary.

// `!(x > y)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod collision;
pub mod config;
pub mod cycles;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linearization;
pub mod solver;
pub mod state;
pub mod velocity;

pub use error::{BgkError, Result};

/// Three-component vector used for positions, velocities and normals.
pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}
