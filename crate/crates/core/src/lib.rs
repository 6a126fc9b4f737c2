//! Computable permanental processes: exact α-permanents, existence and
//! infinite-divisibility tests for kernels, finite Markov chain local times,
//! and Laplace functionals of permanental (Bosonian) point processes.

pub mod error;
pub mod existence;
pub mod fieldsampling;
pub mod harness;
pub mod idcheck;
pub mod markovchain;
pub mod matrix;
pub mod montecarlo;
pub mod permanents;
pub mod pointprocess;

pub use error::{Error, Result};
pub use matrix::{Kernel, Matrix};
