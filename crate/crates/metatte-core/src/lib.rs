//! Core algorithms for multi-city trajectory-based travel-time estimation.
//!
//! This crate is `no_std` (with `alloc`) and contains everything that does
//! not touch the filesystem: GPS trajectory preprocessing, a small dense
//! tensor engine with tape-based reverse-mode differentiation, the recurrent
//! encoder-decoder estimator, the first-order meta-training loop, evaluation
//! metrics, and a synthetic multi-city trip generator used by the test
//! harness. File formats and the CLI live in the companion `metatte` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod evaluate;
pub mod geo;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scaler;
pub mod synth;
pub mod tape;
pub mod tasks;
pub mod tensor;
pub mod time;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
pub use tensor::Tensor;
