//! File formats, configuration and the training harness around
//! [`bitrip_core`].

pub mod checkpoint;
pub mod config;
mod error;
pub mod harness;
pub mod idx;

pub use bitrip_core as core;
pub use error::{Error, Result};
