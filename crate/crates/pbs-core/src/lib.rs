//! Core library for constructing and verifying primary branch solutions (PBS)
//! of first-order autonomous scalar PDEs via Lie symmetry machinery.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats and the CLI live
//! in the companion `pbs-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod expr;
pub mod branch;
pub mod invariant;
pub mod recursion;
pub mod numeric;
pub mod pbs;
