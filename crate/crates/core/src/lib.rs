//! One-bit event-triggered decentralized estimation of a drift parameter.

pub mod cli;
pub mod config;
pub mod first_passage;
pub mod fusion;
pub mod harness;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod timefn;
pub mod trigger;
