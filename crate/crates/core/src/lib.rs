#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod format;
pub mod numerics;
pub mod quality;
pub mod render;
pub mod track;
pub mod zoo;

pub use error::{Error, FormatError, Result};
