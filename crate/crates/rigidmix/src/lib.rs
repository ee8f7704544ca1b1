//! Operational surface for `rigidmix-core`: newline-delimited JSON formats for
//! observations, ground truth and state dumps, JSON configuration, SVG
//! diagnostics, random-dot trials and the `rigidmix` command-line tool.

pub mod cli;
pub mod config;
pub mod dto;
pub mod dump;
pub mod error;
pub mod format;
pub mod rdk;
pub mod svg;

pub use error::{Error, Result};
