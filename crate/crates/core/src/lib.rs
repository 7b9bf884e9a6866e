//! Steady state, stability, noise spectra and cooling of a dissipatively
//! coupled optomechanical cavity containing a Kerr medium.

pub mod constants;
pub mod error;
pub mod figures;
pub mod params;
pub mod quadrature;
pub mod response;
pub mod spectra;
pub mod stability;
pub mod steady_state;
pub mod sweep;

pub use error::{Error, Result};
pub use params::{Config, OperatingPoint, SystemParams};
pub use steady_state::{BranchLabel, SteadyBranch, SteadyState};
