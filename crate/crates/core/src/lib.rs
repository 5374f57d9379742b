//! Synthetic GAN benchmark core.
//!
//! Everything in this crate is a pure function of its parameters and seeds:
//! the point and polygon-scene generators, a small tape-based autodiff engine
//! with higher-order gradients, the four GAN model families, the training
//! loop and the geometric evaluators. File formats, plotting and the CLI live
//! in the `ganbench` companion crate.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod evaluator;
pub mod gancore;
pub mod pointgen;
pub mod rng;
pub mod scenegen;
pub mod trainer;

pub use error::{Error, Result};
