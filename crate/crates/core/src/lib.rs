//! Monte Carlo laboratory for random walks in random environments on Z^d.
//!
//! The crate is organized bottom-up: lattice [`geometry`], lazily realized
//! [`environment`]s, the quenched and forced-step [`walk`] engine,
//! approximate [`regeneration`] times, exact [`oracles`], Monte Carlo
//! [`estimators`], and the config-driven [`runner`].

pub mod config;
pub mod environment;
pub mod estimators;
pub mod error;
pub mod geometry;
pub mod oracles;
pub mod regeneration;
pub mod report;
pub mod rng;
pub mod runner;
pub mod walk;

pub use error::{Error, Result};
