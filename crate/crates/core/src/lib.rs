//! A small probabilistic Lisp with traced evaluation, strict regeneration of
//! execution suffixes, and particle-based inference: sequential Monte Carlo,
//! iterated conditional SMC and particle Gibbs with ancestor sampling.
//!
//! The crate is `no_std` and needs only `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod inference;
pub mod regen;
pub mod syntax;
pub mod trace;
pub mod values;

pub use error::{Error, Result};
