//! Failure-aware tracking laboratory.
//!
//! A quality prediction network (three conv layers, one FC layer, two stacked
//! LSTMs and a two-logit head) classifies the last `K` tracker response maps as
//! `success` or `lost`. The [`afat`] loop uses that verdict to swap in a
//! correction tracker's result. Training data and evaluation scenarios come
//! from the synthetic tracking simulator in [`simworld`].
//!
//! Every random stream derives from one user seed (see [`seeding`]), and all
//! numeric code is single-threaded, so every run is reproducible bit for bit.

pub mod afat;
pub mod cli;
pub mod error;
pub mod gradgate;
pub mod labeling;
pub mod metrics;
pub mod nn;
pub mod qpn;
pub mod response;
pub mod seeding;
pub mod simworld;
pub mod trainer;

pub use error::{Error, Result};
