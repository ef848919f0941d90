//! Relax-and-round unit commitment with future demand points, hydro
//! balancing and a rolling simulation.

pub mod analysis;
pub mod dispatch;
pub mod error;
pub mod fleet;
pub mod forecast;
pub mod heap;
pub mod hydro;
pub mod io;
pub mod qp;
pub mod relaxed;
pub mod rounding;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
