//! Multiscale scan statistics with size-dependent critical values.
//!
//! The crate covers the Gaussian sequence model and the uniform density
//! model in one dimension, Gaussian grids in two dimensions, five ways of
//! calibrating the scan, a sparse window collection that makes the scan
//! near-linear, and a small lab for power studies.

pub mod calibrate;
pub mod densmodel;
pub mod error;
pub mod io;
pub mod powerlab;
pub mod rng;
pub mod scanner;
pub mod seqmodel;
pub mod sparsegrid;

pub use error::{Error, Result};
