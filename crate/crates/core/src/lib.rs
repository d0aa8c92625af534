//! Self-quality evaluation of multi-object tracking output from appearance
//! features alone, plus the supervised metrics, a reference tracker and a
//! synthetic data generator used to check it.

mod error;

pub mod distance;
pub mod exec;
pub mod gmm;
pub mod harness;
pub mod quality;
pub mod refmetrics;
pub mod seed;
pub mod synth;
pub mod trackmodel;
pub mod tracker;

pub use error::{Error, Result};
