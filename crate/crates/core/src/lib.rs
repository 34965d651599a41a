//! Simulation and fitting of single-port cavity–spin reflection spectra:
//! closed-form and eigenvalue routes to S11, polariton decomposition,
//! perfect-absorption point finding, and least-squares parameter
//! extraction from reflection maps.

pub mod config;
pub mod constants;
pub mod eigen;
pub mod error;
pub mod fit;
pub mod model;
pub mod pascan;
pub mod polariton;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{ResonatorParams, SpectrumVariant, SpinEnsembleParams, SystemModel, ZeemanLaw};
