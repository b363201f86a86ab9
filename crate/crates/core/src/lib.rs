//! Post-field-ionization charge-state modelling and atom-probe peak-overlap
//! resolution.

pub mod assets;
pub mod cli;
pub mod curves;
pub mod error;
pub mod interp;
pub mod physics;
pub mod pipeline;
pub mod quadrature;
pub mod roots;
pub mod species;
pub mod spectrum;
pub mod tunneling;
pub mod units;

pub use error::{PfiError, Result};
pub use species::{Environment, SpeciesParams};
pub use tunneling::{ChargeFractions, PfiModel, PfiStepResult, ZModel};
