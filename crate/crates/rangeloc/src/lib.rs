//! File formats, the Monte-Carlo trial harness, SVG plots and the
//! `rangeloc` command line on top of [`rangeloc_core`].

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod svg;

pub use error::{Error, Result};
pub use rangeloc_core as core;
