//! Pricing of security products sold to consumers whose investments exert
//! externalities on each other.
//!
//! A vendor sets prices, consumers then play a simultaneous investment game on
//! the externality network. The crate computes the investment equilibrium,
//! the vendor's optimal differentiated, uniform and two-price strategies, and
//! price competition between several vendors that each serve part of the
//! network.

pub mod binary;
pub mod equilibrium;
pub mod harness;
pub mod error;
pub mod linalg;
pub mod monopoly;
pub mod network;
pub mod oligopoly;
pub mod stats;

pub use error::{Error, Result};
