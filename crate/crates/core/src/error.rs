use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ephemeris(#[from] crate::ephemeris::EphemerisError),
    #[error(transparent)]
    Orbit(#[from] crate::rcn_orbit::OrbitError),
    #[error(transparent)]
    Gr(#[from] crate::gr_orbit::GrError),
    #[error(transparent)]
    Field(#[from] crate::retarded_field::FieldError),
    #[error(transparent)]
    Integration(#[from] crate::integrator::IntegrationError),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
    #[error(transparent)]
    Root(#[from] crate::roots::RootError),
    #[error(transparent)]
    Observation(#[from] crate::observation::ObservationError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
