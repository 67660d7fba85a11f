//! Simulation and verification toolkit for supercritical branching Markov
//! processes: marked Galton–Watson genealogies, spine decompositions under the
//! size-biased measure, and exact spectral oracles on finite-state chains and
//! on Brownian motion killed outside an interval.

pub mod error;
pub mod genealogy;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ModelSpec, OffspringLaw};
pub use spectral::{Criterion, Eigentriple};
