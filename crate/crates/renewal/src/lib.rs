//! Numerical laboratory for a bistable age-structured population model.
//!
//! The population density u(t,a) evolves by aging and age-dependent death,
//! fed by a nonlinear birth law u(t,0) = f(∫ beta(a) u(t,a) da) with a
//! bistable f. Everything here runs through the equivalent renewal equation
//! for the birth flux b(t): solving it ([`volterra`]), rebuilding densities
//! from it ([`characteristics`]), classifying equilibria ([`stability`]),
//! locating the sharp extinction/persistence threshold ([`threshold`]), the
//! old-age reduction for fertility that never vanishes ([`noncompact`]), and
//! an independent delay-equation oracle ([`delaycheck`]).

pub mod error;
pub mod model;
pub mod quad;
pub mod kernel;
pub mod volterra;
pub mod characteristics;
pub mod stability;
pub mod threshold;
pub mod noncompact;
pub mod delaycheck;
pub mod config;
pub mod manifest;
pub mod cli;

pub use error::{Error, Result};
