//! Peer-effects estimation for training courses: synthetic data, employability
//! scoring, leave-one-out peer statistics, high-dimensional fixed-effects
//! regression and validity checks.

pub mod acceptance;
pub mod config;
pub mod employability;
pub mod error;
pub mod fe;
pub mod io;
pub mod logit;
pub mod model;
pub mod peer;
pub mod pipeline;
pub mod suite;
pub mod synth;
pub mod validity;

pub use error::{Error, Result};
