//! Fractional Helmholtz exterior-value problems on truncated grids: forward
//! solves, exterior DtN data, low-frequency asymptotics and reconstruction
//! of sources and potentials.

pub mod asymptotics;
pub mod commands;
pub mod config;
pub mod error;
pub mod forward;
pub mod fracop;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod scenarios;
pub mod selftest;

pub use error::{Error, Result};
