//! Fock-space simulation of SPDC dual-rail entanglement sources, the
//! cascaded (BSM-heralded) source built from two of them, idealized memory
//! loading, and the multiplexed-source trade-off sweeps.

pub mod cascade;
pub mod channels;
pub mod detection;
pub mod error;
pub mod fock;
pub mod memory;
pub mod mux;
pub mod registry;
pub mod spdc;
pub mod table;

pub use error::{Error, Result};
