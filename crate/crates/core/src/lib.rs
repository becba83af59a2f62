//! Equilibrium theory and econometric validation for the language use game.
//!
//! Bilinguals in a population with bilingual share `alpha` choose between
//! revealing (`R`) or hiding (`H`) their type before learning whether their
//! partner speaks the minority language. The crate covers
//!
//! * the game itself and its evolutionarily stable convention ([`game`]),
//! * replicator dynamics ([`replicator`]) and an agent-based realization of
//!   the population game ([`population`]),
//! * the behavioral equilibrium function `x*(alpha)` and the three
//!   language-use prediction models ([`behavioral`]),
//! * constrained nonlinear least squares ([`nls`]), local linear kernel
//!   regression ([`kernel`]) and wild-bootstrap inference ([`bootstrap`]),
//! * dataset ingestion and report export ([`dataset`], [`report`]).

pub mod behavioral;
pub mod bootstrap;
pub mod dataset;
pub mod error;
pub mod game;
pub mod kernel;
pub mod nls;
pub mod population;
pub mod replicator;
pub mod report;
pub mod rng;
pub mod simplex;
pub mod stats;

pub use error::{Error, Result};

/// Crate version embedded in every exported artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
