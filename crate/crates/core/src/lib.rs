//! Superconducting optoelectronic loop-neuron simulation.
//!
//! Two backends share one notion of applied flux: [`circuit`] integrates
//! the Josephson-junction equations of a dendrite, while [`network`] steps a
//! single leaky-integrator equation per dendrite whose drive is looked up in
//! a [`rate_array::RateArray`] tabulated from the circuit model.

pub mod circuit;
pub mod drive;
pub mod emitter;
pub mod error;
pub mod io_util;
pub mod network;
pub mod ode;
pub mod rate_array;
pub mod validate;

pub use error::{Error, Result};
