//! Log-derivatives of Gaussian measures, their transport under
//! one-parameter families, discretized path-integral actions, and
//! numerical propagators for the Schrödinger equation.

pub mod action;
pub mod error;
pub mod feynman;
pub mod flows;
pub mod lattice;
pub mod measures;
mod numdiff;
pub mod poly;
pub mod quadrature;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
