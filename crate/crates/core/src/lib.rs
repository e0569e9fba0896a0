//! Two-level high-order multiscale preconditioning for linear elasticity on
//! voxel images.
//!
//! The pipeline is: [`image_io`] → [`fem`] → [`decomposition`] → [`mortar`]
//! → [`coarse`] + [`smoothers`] → [`krylov`], with [`analysis`] and
//! [`export`] for error metrics and artifacts.

pub mod analysis;
pub mod coarse;
pub mod decomposition;
pub mod error;
pub mod export;
pub mod fem;
pub mod image_io;
pub mod krylov;
pub mod mortar;
pub mod smoothers;
pub mod sparse;

pub use error::{Error, Result};
