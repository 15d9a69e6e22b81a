//! Simulator for Stone Age networked state machines under dynamic topology
//! changes, with a dynamic maximal independent set protocol, confinement
//! metrics and a trace verifier.

pub mod engine;
pub mod mis;
pub mod topology;
pub mod metrics;
pub mod verifier;
pub mod io;
pub mod experiment;
