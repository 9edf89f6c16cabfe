//! Orbit models for a planet around a resting Sun: the relativistic causal
//! Newton law in closed form, the retarded field machinery behind it, the
//! general-relativity track, and the Earth-based observation pipeline.

pub mod ephemeris;
pub mod error;
pub mod gr_orbit;
pub mod integrator;
pub mod io;
pub mod observation;
pub mod quadrature;
pub mod rcn_orbit;
pub mod retarded_field;
pub mod roots;
pub mod validation;

pub use error::{Error, Result};
