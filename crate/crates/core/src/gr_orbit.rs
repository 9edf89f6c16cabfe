//! The general-relativity track around a resting Sun.
//!
//! Two metrics are kept apart. The Schwarzschild form drives the u(φ) orbit
//! equation and its precession coefficient γ = sqrt(1 − 6μ/(a(1−e²)c²)).
//! The isotropic expanded form
//!
//! ```text
//! ds² = A c²dt² − B |dx|²,   A = 1 − 2ψ + 2ψ²,   B = 1 + 2ψ,   ψ = μ/(rc²)
//! ```
//!
//! drives Cartesian geodesics. Dropping every O(ψ, v²/c²) term from those
//! leaves the Newtonian Kepler problem in proper time τ, which is solved in
//! closed form and then mapped back to coordinate time.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::PlanetElements;
use crate::integrator::{self, IntegrationError, Solution, StepControl};
use crate::quadrature::{self, QuadratureError, QuadratureSettings};
use crate::rcn_orbit::{self, KeplerVariant, OrbitError, PrecessionSummary, RcnOrbit, WorldlineSample};
use crate::roots::{self, NewtonSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrError {
    #[error("precession branch requires 6μ/(a(1−e²)c²) < 1, got {value}")]
    BranchViolation { value: f64 },
    #[error("constants violate 0 < −2E|M|² ≤ μ² (−2E|M|²/μ² = {ratio})")]
    Inadmissible { ratio: f64 },
    #[error("position is at the origin")]
    ZeroRadius,
    #[error("coordinate speed {speed} m/s exceeds the local light cone")]
    Superluminal { speed: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricVariant {
    Schwarzschild,
    Mtw,
}

/// Metric coefficients at radius r. For `Mtw`, `g_space` is the isotropic
/// factor B multiplying all three spatial squares. For `Schwarzschild` it is
/// the radial factor (1 − 2ψ)⁻¹; the angular part is the flat r².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricCoefficients {
    pub variant: MetricVariant,
    pub g00: f64,
    pub g_space: f64,
}

impl MetricCoefficients {
    pub fn at(r: f64, mu: f64, c: f64, variant: MetricVariant) -> Self {
        let psi = mu / (r * c * c);
        match variant {
            MetricVariant::Schwarzschild => {
                MetricCoefficients { variant, g00: 1.0 - 2.0 * psi, g_space: 1.0 / (1.0 - 2.0 * psi) }
            }
            MetricVariant::Mtw => {
                MetricCoefficients { variant, g00: 1.0 - 2.0 * psi + 2.0 * psi * psi, g_space: 1.0 + 2.0 * psi }
            }
        }
    }
}

/// γ and advance per century from the Schwarzschild orbit equation.
pub fn gr_precession(p: &PlanetElements, c: f64, variant: KeplerVariant, n_periods: f64) -> Result<PrecessionSummary, GrError> {
    let mu = rcn_orbit::third_kepler(p, c, variant)?;
    let value = 6.0 * mu / (p.a * (1.0 - p.e * p.e) * c * c);
    if value >= 1.0 {
        return Err(GrError::BranchViolation { value });
    }
    let gamma = (1.0 - value).sqrt();
    Ok(PrecessionSummary::from_deficit(value / (1.0 + gamma), n_periods))
}

/// Trial orbit u = (1 + e cos γ(φ−φ₀))/(a(1−e²)) for the Schwarzschild
/// orbit equation u'' + u − μ/(c²h²) − 3μu²/c² = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitEquationParams {
    /// r²dφ/ds, m.
    pub h: f64,
    pub mu: f64,
    pub c: f64,
    pub a: f64,
    pub e: f64,
    pub gamma: f64,
    pub phi0: f64,
}

impl OrbitEquationParams {
    /// h and γ from the first-order closure that zeroes both the constant and
    /// the cos γ(φ−φ₀) coefficient.
    pub fn with_closure(p: &PlanetElements, c: f64) -> Result<Self, GrError> {
        let mu = rcn_orbit::third_kepler(p, c, KeplerVariant::Classical)?;
        let semi = p.a * (1.0 - p.e * p.e);
        let q = mu / (semi * c * c);
        let denom = 1.0 - 1.5 * q * (2.0 + p.e * p.e);
        let value = 6.0 * q;
        if value >= 1.0 || denom <= 0.0 {
            return Err(GrError::BranchViolation { value });
        }
        Ok(OrbitEquationParams {
            h: (semi * mu / (c * c * denom)).sqrt(),
            mu,
            c,
            a: p.a,
            e: p.e,
            gamma: (1.0 - value).sqrt(),
            phi0: p.perihelion_angle,
        })
    }

    /// Newtonian closure: γ = 1 and μa(1−e²)/(h²c²) = 1.
    pub fn newtonian(p: &PlanetElements, c: f64) -> Result<Self, GrError> {
        let mu = rcn_orbit::third_kepler(p, c, KeplerVariant::Classical)?;
        let semi = p.a * (1.0 - p.e * p.e);
        Ok(OrbitEquationParams { h: (semi * mu).sqrt() / c, mu, c, a: p.a, e: p.e, gamma: 1.0, phi0: p.perihelion_angle })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EddingtonReport {
    /// 1 − μa(1−e²)/(h²c²) − 3μ(2+e²)/(2a(1−e²)c²).
    pub constant: f64,
    /// e(1 − 6μ/(a(1−e²)c²) − γ²).
    pub cos_coefficient: f64,
    /// −3μe²/(2a(1−e²)c²).
    pub cos2_coefficient: f64,
    /// Largest |residual| of the equation (times a(1−e²)) on the grid.
    pub max_residual: f64,
    /// Same with the 3μu²/c² term dropped.
    pub max_residual_without_cubic: f64,
    /// Largest size of the dropped term itself.
    pub max_cubic_term: f64,
}

/// Substitute the trial orbit into the orbit equation on `phis`.
pub fn eddington_residual(params: &OrbitEquationParams, phis: &[f64]) -> EddingtonReport {
    let OrbitEquationParams { h, mu, c, a, e, gamma, phi0 } = *params;
    let semi = a * (1.0 - e * e);
    let q = mu / (semi * c * c);
    let closure = semi * mu / (h * h * c * c);
    let mut max_residual: f64 = 0.0;
    let mut max_without: f64 = 0.0;
    let mut max_cubic: f64 = 0.0;
    for &phi in phis {
        let cs = (gamma * (phi - phi0)).cos();
        // a(1−e²)·(u'' + u − μ/(c²h²)) and a(1−e²)·3μu²/c²
        let linear = 1.0 + (1.0 - gamma * gamma) * e * cs - closure;
        let cubic = 3.0 * q * (1.0 + e * cs).powi(2);
        max_residual = max_residual.max((linear - cubic).abs());
        max_without = max_without.max(linear.abs());
        max_cubic = max_cubic.max(cubic);
    }
    EddingtonReport {
        constant: 1.0 - closure - 1.5 * q * (2.0 + e * e),
        cos_coefficient: e * (1.0 - 6.0 * q - gamma * gamma),
        cos2_coefficient: -1.5 * q * e * e,
        max_residual,
        max_residual_without_cubic: max_without,
        max_cubic_term: max_cubic,
    }
}

/// Closed-form solution of d²x/dτ² = −μx/r³ (Newtonian form, proper time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProperKeplerOrbit {
    pub a: f64,
    pub e: f64,
    pub phi0: f64,
    /// ½|dx/dτ|² − μ/r, m²/s².
    pub energy: f64,
    /// r²dφ/dτ, m²/s.
    pub m: f64,
    pub mu: f64,
    /// Proper time of the perihelion at φ₀.
    pub tau0: f64,
}

pub fn proper_kepler_solve(energy: f64, m: f64, mu: f64, phi0: f64) -> Result<ProperKeplerOrbit, GrError> {
    let ratio = -2.0 * energy * m * m / (mu * mu);
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(GrError::Inadmissible { ratio });
    }
    let e2 = (1.0 - ratio).max(0.0);
    Ok(ProperKeplerOrbit { a: -mu / (2.0 * energy), e: e2.sqrt(), phi0, energy, m, mu, tau0: 0.0 })
}

impl ProperKeplerOrbit {
    /// Orbit with the planet's a and e under μ from the chosen third law.
    pub fn from_elements(p: &PlanetElements, c: f64, variant: KeplerVariant) -> Result<Self, GrError> {
        let mu = rcn_orbit::third_kepler(p, c, variant)?;
        let m = (mu * p.a * (1.0 - p.e * p.e)).sqrt();
        let mut o = proper_kepler_solve(-mu / (2.0 * p.a), m, mu, p.perihelion_angle)?;
        // keep the table eccentricity exactly
        o.e = p.e;
        Ok(o)
    }

    pub fn semi_latus_rectum(&self) -> f64 {
        self.a * (1.0 - self.e * self.e)
    }

    /// Mean motion in proper time.
    pub fn mean_motion(&self) -> f64 {
        (self.mu / self.a.powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }

    pub fn radius_at_angle(&self, phi: f64) -> f64 {
        self.semi_latus_rectum() / (1.0 + self.e * (phi - self.phi0).cos())
    }

    /// (d(1/r)/dφ)² − (2E/M² + 2μ/(M²r) − 1/r²), scaled by a²(1−e²)².
    pub fn orbit_equation_residual(&self, phi: f64) -> f64 {
        let p = self.semi_latus_rectum();
        let (s, co) = (phi - self.phi0).sin_cos();
        let u = (1.0 + self.e * co) / p;
        let du = -self.e * s / p;
        let m2 = self.m * self.m;
        let rhs = 2.0 * self.energy / m2 + 2.0 * self.mu * u / m2 - u * u;
        (du * du - rhs) * p * p
    }

    /// τ(φ) by adaptive quadrature of a²(1−e²)²/(M(1 + e cos(ψ−φ₀))²).
    pub fn tau_of_phi(&self, phi: f64) -> Result<f64, GrError> {
        let p = self.semi_latus_rectum();
        let scale = p * p / self.m;
        let span = phi - self.phi0;
        let settings = QuadratureSettings {
            abs_tol: 1e-12 * span.abs() * scale,
            rel_tol: 1e-13,
            max_subdivisions: 20_000,
        };
        let e = self.e;
        let phi0 = self.phi0;
        let est = quadrature::integrate(|psi| scale / (1.0 + e * (psi - phi0).cos()).powi(2), phi0, phi, settings)?;
        Ok(self.tau0 + est.value)
    }

    /// Eccentric anomaly at proper time τ.
    pub fn eccentric_anomaly(&self, tau: f64) -> f64 {
        let mean = self.mean_motion() * (tau - self.tau0);
        if self.e == 0.0 {
            return mean;
        }
        let e = self.e;
        let settings = NewtonSettings { x_tol: 1e-14_f64.max(4.0 * f64::EPSILON * mean.abs()), ..Default::default() };
        roots::newton_bracketed(|ea| (ea - e * ea.sin() - mean, 1.0 - e * ea.cos()), mean - e, mean + e, mean, settings)
            .expect("Kepler equation is monotone and bracketed")
            .x
    }

    /// φ(τ), continuous in τ.
    pub fn phi_of_tau(&self, tau: f64) -> f64 {
        self.phi0 + rcn_orbit::true_anomaly(self.eccentric_anomaly(tau), self.e)
    }

    pub fn radius_of_tau(&self, tau: f64) -> f64 {
        self.a * (1.0 - self.e * self.eccentric_anomaly(tau).cos())
    }

    /// Position and dx/dτ in the orbit plane.
    pub fn state_at_tau(&self, tau: f64) -> (Vector3<f64>, Vector3<f64>) {
        let ea = self.eccentric_anomaly(tau);
        let r = self.a * (1.0 - self.e * ea.cos());
        let phi = self.phi0 + rcn_orbit::true_anomaly(ea, self.e);
        let rdot = self.a * self.e * ea.sin() * self.mean_motion() / (1.0 - self.e * ea.cos());
        let phidot = self.m / (r * r);
        let (s, co) = phi.sin_cos();
        (
            Vector3::new(r * co, r * s, 0.0),
            Vector3::new(rdot * co - r * phidot * s, rdot * s + r * phidot * co, 0.0),
        )
    }

    /// dt/dτ on the MTW metric, from |dx/dτ|² = μ(2/r − 1/a).
    pub fn dt_dtau(&self, r: f64, c: f64) -> f64 {
        let g = MetricCoefficients::at(r, self.mu, c, MetricVariant::Mtw);
        let w2 = self.mu * (2.0 / r - 1.0 / self.a);
        (1.0 + g.g_space * w2 / (c * c)).sqrt() / g.g00.sqrt()
    }

    /// Coordinate time t(τ) − t(τ₀) by adaptive quadrature of dt/dτ.
    pub fn t_of_tau(&self, tau: f64, c: f64) -> Result<f64, GrError> {
        let span = tau - self.tau0;
        // integrate dt/dτ − 1, which is O(ψ), and add the span back
        let settings = QuadratureSettings { abs_tol: 1e-12 * span.abs(), rel_tol: 1e-12, max_subdivisions: 20_000 };
        let est = quadrature::integrate(|s| self.dt_dtau(self.radius_of_tau(s), c) - 1.0, self.tau0, tau, settings)?;
        Ok(span + est.value)
    }

    /// Terms dropped from the geodesic equations, along the orbit at φ, next
    /// to their mean-motion estimates.
    pub fn term_estimates(&self, phi: f64, c: f64, omega: f64) -> TermEstimates {
        let c2 = c * c;
        let (s, co) = (phi - self.phi0).sin_cos();
        let r = self.radius_at_angle(phi);
        // dx/dτ from the conic, then dx/dt = (dx/dτ)/(dt/dτ)
        let phidot_tau = self.m / (r * r);
        let rdot_tau = self.mu * self.e * s / self.m;
        let dtdtau = self.dt_dtau(r, c);
        let v2 = (rdot_tau * rdot_tau + r * r * phidot_tau * phidot_tau) / (dtdtau * dtdtau);
        let rdot = rdot_tau / dtdtau;
        let psi = self.mu / (r * c2);
        let x = (omega * self.a / c).powi(2);
        let one_e2 = 1.0 - self.e * self.e;
        let q = 1.0 + self.e * co;
        let shape = (self.e * s / q).powi(2) + 1.0;
        TermEstimates {
            phi,
            potential: 2.0 * psi,
            potential_estimate: 2.0 * x * q / one_e2,
            potential_squared: 2.0 * psi * psi,
            potential_squared_estimate: 2.0 * (x * q / one_e2).powi(2),
            speed_squared: v2 / c2,
            speed_squared_estimate: x * one_e2 * one_e2 / (q * q) * shape,
            radial_coupling: 4.0 * v2.sqrt() * rdot.abs() / c2,
            radial_coupling_estimate: 4.0 * x * self.e * one_e2 * one_e2 * s.abs() / q.powi(3) * shape.sqrt(),
        }
    }
}

/// Size of each dropped term (normalized against the Newtonian term) at one
/// orbit angle, and its estimate with ω²a²/c² in place of μ/(ac²) and |dφ/dt|
/// replaced by ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermEstimates {
    pub phi: f64,
    /// 2μ/(rc²).
    pub potential: f64,
    pub potential_estimate: f64,
    /// 2μ²/(r²c⁴).
    pub potential_squared: f64,
    pub potential_squared_estimate: f64,
    /// |dx/dt|²/c².
    pub speed_squared: f64,
    pub speed_squared_estimate: f64,
    /// 4|dx/dt||dr/dt|/c².
    pub radial_coupling: f64,
    pub radial_coupling_estimate: f64,
}

impl TermEstimates {
    pub fn actual(&self) -> [f64; 4] {
        [self.potential, self.potential_squared, self.speed_squared, self.radial_coupling]
    }

    pub fn estimates(&self) -> [f64; 4] {
        [self.potential_estimate, self.potential_squared_estimate, self.speed_squared_estimate, self.radial_coupling_estimate]
    }
}

pub const TERM_NAMES: [&str; 4] = ["2mu/(rc^2)", "2mu^2/(r^2c^4)", "|v|^2/c^2", "4|v||dr/dt|/c^2"];

/// d²x/dτ² on the MTW metric and its pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicAcceleration {
    /// Full d²x/dτ².
    pub total: Vector3<f64>,
    /// −μx/r³, what remains when all correction terms are dropped.
    pub newtonian: Vector3<f64>,
    /// dt/dτ at the state.
    pub dt_dtau: f64,
    /// Normalized correction sizes: 2ψ, 2ψ², |v|²/c², 2|v||dr/dt|/c².
    pub corrections: [f64; 4],
}

/// Geodesic acceleration for a state with coordinate velocity v = dx/dt.
///
/// B(dτ/dt)²·d²x/dτ² = −(μ/r²)[(x/r)(1 − 2ψ + |v|²/c²) − 2v(dr/dt)/c²]
pub fn geodesic_rhs(s: &WorldlineSample, mu: f64, c: f64) -> Result<GeodesicAcceleration, GrError> {
    let r = s.x.norm();
    if r == 0.0 {
        return Err(GrError::ZeroRadius);
    }
    let c2 = c * c;
    let g = MetricCoefficients::at(r, mu, c, MetricVariant::Mtw);
    let v2 = s.v.norm_squared();
    let norm = g.g00 - g.g_space * v2 / c2;
    if norm <= 0.0 {
        return Err(GrError::Superluminal { speed: v2.sqrt() });
    }
    let psi = mu / (r * c2);
    let rdot = s.x.dot(&s.v) / r;
    let bracket = s.x / r * (1.0 - 2.0 * psi + v2 / c2) - s.v * (2.0 * rdot / c2);
    let total = -mu / (r * r) * bracket / (g.g_space * norm);
    Ok(GeodesicAcceleration {
        total,
        newtonian: -mu * s.x / r.powi(3),
        dt_dtau: 1.0 / norm.sqrt(),
        corrections: [2.0 * psi, 2.0 * psi * psi, v2 / c2, 2.0 * v2.sqrt() * rdot.abs() / c2],
    })
}

/// Residuals of all four geodesic equations
/// Σ_ν g_σν ẍ^ν + ½Σ(∂_μg_σν + ∂_νg_σμ − ∂_σg_μν)ẋ^μẋ^ν
/// for an event x = (ct, x), its τ-derivative and second derivative.
/// Generic Christoffel form, used to cross-check [`geodesic_rhs`].
pub fn geodesic_residuals(x: &[f64; 4], xdot: &[f64; 4], xddot: &[f64; 4], mu: f64, c: f64) -> [f64; 4] {
    let (g, dg) = metric_with_gradient(x, mu, c);
    let mut res = [0.0; 4];
    for s in 0..4 {
        let mut acc = g[s] * xddot[s];
        for m in 0..4 {
            acc += dg[m][s] * xdot[m] * xdot[s];
            acc -= 0.5 * dg[s][m] * xdot[m] * xdot[m];
        }
        res[s] = acc;
    }
    res
}

/// ½ d/dτ of g_μν ẋ^μ ẋ^ν. The identity Σ_σ ẋ^σ·residual_σ equals this for
/// any ẍ.
pub fn norm_rate(x: &[f64; 4], xdot: &[f64; 4], xddot: &[f64; 4], mu: f64, c: f64) -> f64 {
    let (g, dg) = metric_with_gradient(x, mu, c);
    let mut acc = 0.0;
    for s in 0..4 {
        acc += g[s] * xdot[s] * xddot[s];
        for m in 0..4 {
            acc += 0.5 * dg[m][s] * xdot[m] * xdot[s] * xdot[s];
        }
    }
    acc
}

/// Diagonal metric and dg[μ][σ] = ∂_μ g_σσ.
fn metric_with_gradient(x: &[f64; 4], mu: f64, c: f64) -> ([f64; 4], [[f64; 4]; 4]) {
    let r = (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
    let psi = mu / (r * c * c);
    let a = 1.0 - 2.0 * psi + 2.0 * psi * psi;
    let b = 1.0 + 2.0 * psi;
    // dA/dr = 2ψ(1−2ψ)/r, dB/dr = −2ψ/r
    let da = 2.0 * psi * (1.0 - 2.0 * psi) / r;
    let db = -2.0 * psi / r;
    let g = [a, -b, -b, -b];
    let mut dg = [[0.0; 4]; 4];
    for m in 1..4 {
        let dr = x[m] / r;
        dg[m][0] = da * dr;
        for s in 1..4 {
            dg[m][s] = -db * dr;
        }
    }
    (g, dg)
}

/// Cartesian geodesic integration in proper time, in units of (a, 1/ω).
/// The state is (ωt, dt/dτ, x/a, (dx/dτ)/(aω)); dt/dτ is evolved by the
/// time equation d(A·dt/dτ)/dτ = 0, so the norm identity is a real check.
#[derive(Debug, Clone)]
pub struct GeodesicPropagation {
    pub length: f64,
    pub time: f64,
    pub mu: f64,
    pub c: f64,
    pub solution: Solution,
}

impl GeodesicPropagation {
    /// Coordinate sample at the i-th accepted step, with proper time.
    pub fn sample(&self, i: usize) -> (f64, WorldlineSample) {
        let y = &self.solution.y[i];
        let tau = self.solution.t[i] * self.time;
        let x = Vector3::new(y[2], y[3], y[4]) * self.length;
        let xdot = Vector3::new(y[5], y[6], y[7]) * (self.length / self.time);
        (tau, WorldlineSample { t: y[0] * self.time, x, v: xdot / y[1] })
    }

    pub fn len(&self) -> usize {
        self.solution.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solution.t.is_empty()
    }

    /// g_μν ẋ^μ ẋ^ν / c² − 1 at step i.
    pub fn norm_defect(&self, i: usize) -> f64 {
        let y = &self.solution.y[i];
        let beta2 = (self.length / self.time / self.c).powi(2);
        let r = (y[2] * y[2] + y[3] * y[3] + y[4] * y[4]).sqrt() * self.length;
        let g = MetricCoefficients::at(r, self.mu, self.c, MetricVariant::Mtw);
        let w2 = y[5] * y[5] + y[6] * y[6] + y[7] * y[7];
        g.g00 * y[1] * y[1] - g.g_space * beta2 * w2 - 1.0
    }
}

pub fn propagate_geodesic(
    start: &WorldlineSample,
    mu: f64,
    c: f64,
    length: f64,
    time: f64,
    tau_span: f64,
    ctrl: &StepControl,
) -> Result<GeodesicPropagation, GrError> {
    let acc = geodesic_rhs(start, mu, c)?;
    let tdot = acc.dt_dtau;
    let speed = length / time;
    let x = start.x / length;
    let w = start.v * tdot / speed;
    let y0 = [start.t / time, tdot, x.x, x.y, x.z, w.x, w.y, w.z];
    let k = mu * time * time / length.powi(3);
    let eps = mu / (length * c * c);
    let beta2 = (speed / c).powi(2);
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let r = (y[2] * y[2] + y[3] * y[3] + y[4] * y[4]).sqrt();
        let psi = eps / r;
        let a = 1.0 - 2.0 * psi + 2.0 * psi * psi;
        let b = 1.0 + 2.0 * psi;
        let rdot = (y[2] * y[5] + y[3] * y[6] + y[4] * y[7]) / r;
        let w2 = y[5] * y[5] + y[6] * y[6] + y[7] * y[7];
        dy[0] = y[1];
        dy[1] = -y[1] * 2.0 * psi * (1.0 - 2.0 * psi) * rdot / (r * a);
        let bracket = (1.0 - 2.0 * psi) * y[1] * y[1] + beta2 * w2;
        for i in 0..3 {
            dy[2 + i] = y[5 + i];
            dy[5 + i] = -k / (r * r * b) * (bracket * y[2 + i] / r - 2.0 * beta2 * rdot * y[5 + i]);
        }
    };
    let solution = integrator::integrate(rhs, 0.0, &y0, tau_span / time, ctrl, &[])?;
    Ok(GeodesicPropagation { length, time, mu, c, solution })
}

/// Integrate d²x/dτ² = −μx/r³ in units of (a, 1/n) and return
/// (τ, x, dx/dτ) at every accepted step.
pub fn propagate_proper_kepler(
    orbit: &ProperKeplerOrbit,
    tau_span: f64,
    ctrl: &StepControl,
) -> Result<Vec<(f64, Vector3<f64>, Vector3<f64>)>, GrError> {
    let length = orbit.a;
    let time = 1.0 / orbit.mean_motion();
    let (x, w) = orbit.state_at_tau(orbit.tau0);
    let x = x / length;
    let w = w * time / length;
    let y0 = [x.x, x.y, x.z, w.x, w.y, w.z];
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        let r3 = r2 * r2.sqrt();
        for i in 0..3 {
            dy[i] = y[3 + i];
            dy[3 + i] = -y[i] / r3;
        }
    };
    let sol = integrator::integrate(rhs, 0.0, &y0, tau_span / time, ctrl, &[])?;
    Ok(sol
        .t
        .iter()
        .zip(&sol.y)
        .map(|(t, y)| {
            (
                orbit.tau0 + t * time,
                Vector3::new(y[0], y[1], y[2]) * length,
                Vector3::new(y[3], y[4], y[5]) * (length / time),
            )
        })
        .collect())
}

/// E = ½|dx/dτ|² − μ/r and M = x × dx/dτ.
pub fn proper_constants(x: &Vector3<f64>, w: &Vector3<f64>, mu: f64) -> (f64, Vector3<f64>) {
    (0.5 * w.norm_squared() - mu / x.norm(), x.cross(w))
}

/// Relative discrepancies between the proper-time momentum rate, the
/// coordinate-time relativistic momentum rate and the force, sampled along
/// the closed-form relativistic Newton orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumComparison {
    /// max |(dt/dτ)d/dt((dt/dτ)v) − d(Γv)/dt| / |F|.
    pub proper_vs_coordinate: f64,
    /// max |d(Γv)/dt − F| / |F|, the derivative taken numerically.
    pub coordinate_vs_force: f64,
    /// max |(dt/dτ)d/dt((dt/dτ)v) − F| / |F|.
    pub proper_vs_force: f64,
    pub samples: usize,
}

pub fn rcn_vs_geodesic_residual(p: &PlanetElements, c: f64, samples: usize) -> Result<MomentumComparison, GrError> {
    let orbit = RcnOrbit::from_elements(p, c, KeplerVariant::Elliptic)?;
    let mu = orbit.mu;
    let c2 = c * c;
    let period = orbit.period();
    let mut out = MomentumComparison { proper_vs_coordinate: 0.0, coordinate_vs_force: 0.0, proper_vs_force: 0.0, samples };
    let momentum = |t: f64| {
        let s = orbit.state_at_time(t);
        s.v * s.lorentz_factor(c)
    };
    for k in 0..samples {
        let t = period * k as f64 / samples as f64;
        let s = orbit.state_at_time(t);
        let d = rcn_orbit::rcn_rhs(&s, mu, c)?;
        let force = d.momentum_rate;
        let a = d.acceleration;
        let r = s.x.norm();
        let rdot = s.x.dot(&s.v) / r;
        let g = MetricCoefficients::at(r, mu, c, MetricVariant::Mtw);
        let psi = mu / (r * c2);
        let v2 = s.v.norm_squared();
        let norm = g.g00 - g.g_space * v2 / c2;
        let big_d = 1.0 / norm.sqrt();
        let da = 2.0 * psi * (1.0 - 2.0 * psi) / r * rdot;
        let db = -2.0 * psi / r * rdot;
        let dnorm = da - db * v2 / c2 - 2.0 * g.g_space * s.v.dot(&a) / c2;
        let big_d_dot = -0.5 * big_d.powi(3) * dnorm;
        let proper = big_d * (big_d_dot * s.v + big_d * a);
        // fourth-order central difference of Γv
        let h = 1e-4 * period;
        let coord = (8.0 * (momentum(t + h) - momentum(t - h)) - (momentum(t + 2.0 * h) - momentum(t - 2.0 * h))) / (12.0 * h);
        let f = force.norm();
        out.proper_vs_coordinate = out.proper_vs_coordinate.max((proper - coord).norm() / f);
        out.coordinate_vs_force = out.coordinate_vs_force.max((coord - force).norm() / f);
        out.proper_vs_force = out.proper_vs_force.max((proper - force).norm() / f);
    }
    Ok(out)
}

/// One angle of the precession comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub delta_phi: f64,
    /// 1 + e cos((1 − 3x')Δφ).
    pub lhs: f64,
    /// 1 + e cos((1 − x'/2)Δφ).
    pub rhs_first: f64,
    /// e x' Δφ ∫_{1/2}^{3} sin((1 − s x')Δφ) ds.
    pub remainder: f64,
    /// |lhs − rhs_first − remainder|.
    pub defect: f64,
    /// e x' Δφ · 5/2.
    pub remainder_bound: f64,
}

/// Write the GR-precessing cosine as the relativistic Newton one plus an
/// integral remainder, x' = ω²a²/((1−e²)c²).
pub fn precession_comparison(p: &PlanetElements, delta_phis: &[f64]) -> Result<Vec<ComparisonPoint>, GrError> {
    let e = p.e;
    let xp = p.velocity_parameter() / (1.0 - e * e);
    delta_phis
        .iter()
        .map(|&dphi| {
            // the argument carries an absolute rounding of ulp(Δφ), so the
            // integrand cannot be resolved below that
            let floor = 64.0 * f64::EPSILON * dphi.abs().max(1.0);
            let settings = QuadratureSettings { abs_tol: floor, rel_tol: 1e-13, max_subdivisions: 2000 };
            let shift = xp * dphi;
            let integral = quadrature::integrate(|s| (dphi - s * shift).sin(), 0.5, 3.0, settings)?.value;
            let lhs = 1.0 + e * ((1.0 - 3.0 * xp) * dphi).cos();
            let rhs_first = 1.0 + e * ((1.0 - 0.5 * xp) * dphi).cos();
            let remainder = e * xp * dphi * integral;
            Ok(ComparisonPoint {
                delta_phi: dphi,
                lhs,
                rhs_first,
                remainder,
                defect: (lhs - rhs_first - remainder).abs(),
                remainder_bound: 2.5 * e * xp * dphi.abs(),
            })
        })
        .collect()
}
