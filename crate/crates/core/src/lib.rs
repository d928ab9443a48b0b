//! Spectral analysis of one-dimensional discrete Schrödinger operators
//!
//! ```text
//! (Hψ)(n) = ψ(n+1) + ψ(n-1) + λ·R_{α,ω}(n)·ψ(n)
//! ```
//!
//! whose potential is a Sturmian rotation sequence with an eventually
//! periodic continued-fraction angle α.
//!
//! The crate is organised bottom-up:
//!
//! - [`numberth`]: eventually periodic continued fractions and their convergents.
//! - [`words`]: binary words, substitutions, rotation and cutting sequences.
//! - [`tracemap`]: the trace-map dynamics on half-trace triples.
//! - [`spectrum`]: periodic-approximant band sets, gaps and fractal estimators.
//! - [`ids`]: the integrated density of states via Sturm counting.

pub mod error;
pub mod ids;
pub mod numberth;
pub mod spectrum;
pub mod tracemap;
pub mod words;

mod dd;
mod ext;

pub use error::{Error, Result};
pub use numberth::{Approximant, ContinuedFraction};
pub use tracemap::{ModelParams, TracePoint};
