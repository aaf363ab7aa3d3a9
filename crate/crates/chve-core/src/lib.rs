//! Core finite element kernels for a 2D coupled Cahn–Hilliard /
//! finite-viscoelasticity phase-field model.
//!
//! The crate provides meshes, mixed finite element spaces (P1 scalar, P1
//! 2x2-tensor, lowest-order Taylor–Hood), sparse linear algebra, the
//! constitutive energy models, and two unconditionally energy-stable time
//! steppers: a convex-splitting scheme solved by a decoupled fixed-point
//! iteration, and a fully decoupled scalar auxiliary variable (SAV) scheme.
//!
//! The crate is `no_std` (with `alloc`) so the kernels can be embedded; all
//! file I/O and orchestration live in the companion CLI crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod field;
pub mod math;
pub mod mesh;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod scheme_cs;
pub mod scheme_dsav;
pub mod solve;
pub mod sparse;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
