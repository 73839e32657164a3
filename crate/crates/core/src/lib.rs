//! Robust classification from noisy labels with two co-trained
//! student/teacher networks.
//!
//! Each network is a small dense encoder with a classifier head and a
//! projection head. After a warm-up, every epoch runs the noisy label
//! filter on each network's teacher (per-sample losses, a two-component
//! 1-D Gaussian mixture fitted by EM, posterior thresholding), swaps the
//! resulting clean/noisy divisions between the two networks and trains
//! each student on
//!
//! ```text
//! L = L_ce(clean) + lambda * (L_global(all) + L_local(noisy) + L_con(all))
//! ```
//!
//! while the teachers follow their students by exponential moving average.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! command-line front end live in the `cotrain` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cotrain;
pub mod data;
pub mod error;
pub mod filter;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
