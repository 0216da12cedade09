//! Numerical toolkit for branching programs with hybrid classical-quantum
//! memory learning a hidden `x` from samples `(a, M(a, x))`.

pub mod badness;
pub mod cq;
pub mod error;
pub mod extractor;
pub mod lab;
pub mod linalg;
pub mod program;
pub mod rng;
pub mod truncation;

pub use error::{Error, Result};
