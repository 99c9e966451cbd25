//! Wreath-product graphs and the random walks that live on them.
//!
//! The crate builds lamplighter-style graphs (ordinary wreath products over
//! cyclic fibers and generalized wreath products driven by a dyadic class
//! partition of the integers), computes exact and Monte Carlo return
//! probabilities for lazy walks on them, and evaluates local-time
//! functionals of lazy walks on Bernoulli bond percolation clusters.
//!
//! Graphs are never materialized: everything goes through [`graph::Graph`],
//! a lazy neighbor enumerator. Exact computations run over
//! [`num_rational::BigRational`] through the [`prob::Prob`] abstraction so
//! oracle tests can compare bit-for-bit.

pub mod config;
pub mod error;
pub mod fibers;
pub mod graph;
pub mod isoperimetry;
pub mod partition;
pub mod percolation;
pub mod prob;
pub mod rng;
pub mod verify;
pub mod walk;
pub mod wreath;

pub use error::{Error, Result};
pub use prob::{Exact, Prob};
