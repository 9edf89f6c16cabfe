//! Closed-form orbits of the relativistic law d(Γv)/dt = −μx/r³ around a
//! resting Sun, where Γ = (1 − v²/c²)^(−1/2) and μ is the Sun's
//! gravitational parameter.
//!
//! With energy E = c²Γ − μ/r and angular momentum M = Γ·(x × v) the orbit is
//!
//! ```text
//! r = a(1 − e²) / (1 + e·cos γ(φ − φ₀))
//! r = a(1 + e·sin ξ)
//! ωt = ξ − ξ₀ − e(E²/c⁴)·cos ξ
//! ```
//!
//! with κ = c⁴ − E², a = μE/κ, ω = κ^(3/2)/(μc³) and
//! γ² = 1 − μ²/(c²M²). Perihelion passages sit at ξ = −π/2 + 2πl.
//!
//! Energies near c² lose about eight digits when squared, so the energy is
//! carried as the excess E − c².
//!
//! M is a single cross product scaled by Γ. Writing the antisymmetric sum
//! over both index orders would double it; only μ²/(c²M²) enters γ, and the
//! single-product form is the one that reproduces 1 − γ ≈ 1.334e-8 for
//! Mercury.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::{EphemerisTable, PlanetElements, EARTH};
use crate::integrator::{self, Direction, EventSpec, IntegrationError, Solution, StepControl};
use crate::roots::{self, NewtonSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("speed {speed} m/s is not below c = {c} m/s")]
    Superluminal { speed: f64, c: f64 },
    #[error("position is at the origin")]
    ZeroRadius,
    #[error("orbit is not bound: E² < c⁴ fails (E − c² = {energy_excess} m²/s²)")]
    Unbound { energy_excess: f64 },
    #[error("energy E = {energy} must be positive")]
    NegativeEnergy { energy: f64 },
    #[error("angular momentum too small: c²|M|² > μ² fails (|M| = {m}, μ/c = {limit})")]
    AngularMomentumTooSmall { m: f64, limit: f64 },
    #[error("eccentricity condition c²|M|²(E² − c⁴) + μ²c⁴ > 0 fails (e² = {e2})")]
    Eccentricity { e2: f64 },
    #[error("third Kepler law branch requires 4ω²a²/c² < 1, got {value}")]
    BranchViolation { value: f64 },
    #[error("body `{0}` has no orbit (a = 0)")]
    NoOrbit(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Event with position and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldlineSample {
    pub t: f64,
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl WorldlineSample {
    pub fn new(t: f64, x: Vector3<f64>, v: Vector3<f64>) -> Self {
        WorldlineSample { t, x, v }
    }

    pub fn radius(&self) -> f64 {
        self.x.norm()
    }

    /// Polar angle in the x¹x² plane, (−π, π].
    pub fn angle(&self) -> f64 {
        self.x.y.atan2(self.x.x)
    }

    pub fn lorentz_factor(&self, c: f64) -> f64 {
        1.0 / (1.0 - self.v.norm_squared() / (c * c)).sqrt()
    }
}

/// Energy and angular momentum per unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedQuantities {
    /// E − c², m²/s².
    pub energy_excess: f64,
    /// Speed of light the energy refers to.
    pub c: f64,
    /// Γ·(x × v), m²/s.
    pub m: Vector3<f64>,
}

impl ConservedQuantities {
    pub fn energy(&self) -> f64 {
        self.c * self.c + self.energy_excess
    }

    pub fn m_norm(&self) -> f64 {
        self.m.norm()
    }

    /// κ = c⁴ − E² computed without cancellation.
    pub fn kappa(&self) -> f64 {
        -self.energy_excess * (2.0 * self.c * self.c + self.energy_excess)
    }

    /// Relative difference of energy (measured against the binding scale κ/c²)
    /// and of |M|.
    pub fn relative_drift(&self, other: &ConservedQuantities) -> (f64, f64) {
        let scale = self.kappa().abs() / (self.c * self.c);
        let de = (self.energy_excess - other.energy_excess).abs() / scale;
        let dm = (self.m - other.m).norm() / self.m_norm();
        (de, dm)
    }
}

/// Energy and angular momentum of a state moving around a resting mass with
/// gravitational parameter `mu`.
pub fn conserved_from_state(s: &WorldlineSample, mu: f64, c: f64) -> Result<ConservedQuantities, OrbitError> {
    let r = s.x.norm();
    if r == 0.0 {
        return Err(OrbitError::ZeroRadius);
    }
    let v2 = s.v.norm_squared();
    if v2 >= c * c {
        return Err(OrbitError::Superluminal { speed: v2.sqrt(), c });
    }
    let gamma = 1.0 / (1.0 - v2 / (c * c)).sqrt();
    // c²(Γ − 1) = Γ²v²/(Γ + 1)
    let kinetic = gamma * gamma * v2 / (gamma + 1.0);
    Ok(ConservedQuantities { energy_excess: kinetic - mu / r, c, m: gamma * s.x.cross(&s.v) })
}

/// Time equation flavour: `Exact` uses E²/c⁴ in front of the cosine, `Approx`
/// replaces it with 1 − ω²a²/c².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Exact,
    Approx,
}

/// Closed-form orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcnOrbit {
    pub a: f64,
    pub e: f64,
    pub gamma: f64,
    /// 1 − γ kept separately to full precision.
    pub one_minus_gamma: f64,
    pub phi0: f64,
    pub xi0: f64,
    pub omega: f64,
    pub mu: f64,
    pub c: f64,
    pub conserved: ConservedQuantities,
}

/// Gravitational parameter of the Sun inferred from one planet's elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeplerVariant {
    Elliptic,
    Circular,
    Classical,
}

/// μ from a planet's a and ω²a³/c² under the chosen third-law variant.
pub fn third_kepler(p: &PlanetElements, c: f64, variant: KeplerVariant) -> Result<f64, OrbitError> {
    if p.a <= 0.0 {
        return Err(OrbitError::NoOrbit(p.name.clone()));
    }
    let w2a3 = c * c * p.gm_over_c2;
    let beta2 = p.velocity_parameter();
    if 4.0 * beta2 >= 1.0 {
        return Err(OrbitError::BranchViolation { value: 4.0 * beta2 });
    }
    Ok(match variant {
        KeplerVariant::Elliptic => {
            let x = 0.5 * (1.0 + (1.0 - 4.0 * beta2).sqrt());
            w2a3 * x.powf(-1.5)
        }
        KeplerVariant::Circular => w2a3 / (1.0 - beta2).sqrt(),
        KeplerVariant::Classical => w2a3,
    })
}

fn admissible(q: &ConservedQuantities, mu: f64) -> Result<(), OrbitError> {
    let c = q.c;
    if q.energy() <= 0.0 {
        return Err(OrbitError::NegativeEnergy { energy: q.energy() });
    }
    if q.kappa() <= 0.0 {
        return Err(OrbitError::Unbound { energy_excess: q.energy_excess });
    }
    let m = q.m_norm();
    if c * m <= mu {
        return Err(OrbitError::AngularMomentumTooSmall { m, limit: mu / c });
    }
    Ok(())
}

impl RcnOrbit {
    /// Orbit generated by the constants `q`. `xi0 = None` picks the phase
    /// with t(ξ = 0) = 0.
    pub fn from_conserved(q: ConservedQuantities, mu: f64, phi0: f64, xi0: Option<f64>) -> Result<RcnOrbit, OrbitError> {
        admissible(&q, mu)?;
        let c = q.c;
        let c2 = c * c;
        let kappa = q.kappa();
        let energy = q.energy();
        let m = q.m_norm();
        // s = μ²/(c²M²) = 1 − γ²
        let s = (mu / (c * m)).powi(2);
        let e2 = c2 * m * m * (c2 * c2 * s - kappa) / (mu * energy).powi(2);
        if e2 < -1e-12 || e2 >= 1.0 {
            return Err(OrbitError::Eccentricity { e2 });
        }
        Self::assemble(q, mu, e2.max(0.0).sqrt(), phi0, xi0)
    }

    fn assemble(q: ConservedQuantities, mu: f64, e: f64, phi0: f64, xi0: Option<f64>) -> Result<RcnOrbit, OrbitError> {
        let c = q.c;
        let kappa = q.kappa();
        let energy = q.energy();
        let s = (mu / (c * q.m_norm())).powi(2);
        let gamma = (1.0 - s).sqrt();
        let one_minus_gamma = s / (1.0 + gamma);
        let omega = kappa.powf(1.5) / (mu * c.powi(3));
        let e2c4 = (energy / (c * c)).powi(2);
        Ok(RcnOrbit {
            a: mu * energy / kappa,
            e,
            gamma,
            one_minus_gamma,
            phi0,
            xi0: xi0.unwrap_or(-e * e2c4),
            omega,
            mu,
            c,
            conserved: q,
        })
    }

    /// Orbit through a given state: constants from the state, eccentricity and
    /// orientation from its radial and angular motion. The state fixes the
    /// phase, so ξ₀ is chosen to place it at time `s.t`.
    pub fn from_state(s: &WorldlineSample, mu: f64, c: f64) -> Result<RcnOrbit, OrbitError> {
        let q = conserved_from_state(s, mu, c)?;
        let base = Self::from_conserved(q, mu, 0.0, None)?;
        // Work in the plane of M so the angle increases with time.
        let normal = q.m / q.m_norm();
        let ex = s.x / s.x.norm();
        let ey = normal.cross(&ex);
        let r = s.x.norm();
        let rdot = s.x.dot(&s.v) / r;
        let phidot = s.v.dot(&ey) / r;
        let p = base.semi_latus_rectum();
        let e_cos = p / r - 1.0;
        let e_sin = p * rdot / (base.gamma * r * r * phidot);
        let e = e_cos.hypot(e_sin);
        let psi = e_sin.atan2(e_cos);
        // angle measured in the plane of M from the reference axis ex₀
        let phi_state = planar_angle(&s.x, &normal);
        let phi0 = phi_state - psi / base.gamma;
        let mut orbit = Self::assemble(q, mu, e, phi0, None)?;
        // choose ξ₀ so that time_of_xi(ξ(state)) = s.t
        let ea = if e > 0.0 {
            let beta = e / (1.0 + (1.0 - e * e).sqrt());
            psi - 2.0 * (beta * psi.sin() / (1.0 + beta * psi.cos())).atan()
        } else {
            psi
        };
        let xi = ea - PI / 2.0;
        let k = orbit.cos_coefficient(TimeMode::Exact);
        orbit.xi0 = xi - orbit.e * k * xi.cos() - orbit.omega * s.t;
        Ok(orbit)
    }

    /// Orbit of a planet from its table entry, with μ from the given third-law
    /// variant. a and e are taken from the table; E and |M| follow.
    pub fn from_elements(p: &PlanetElements, c: f64, variant: KeplerVariant) -> Result<RcnOrbit, OrbitError> {
        let mu = third_kepler(p, c, variant)?;
        let omega = p.angular_frequency(c);
        let c2 = c * c;
        let kappa = c2 * (omega * mu).powf(2.0 / 3.0);
        // ε² + 2c²ε + κ = 0, bound root
        let excess = -kappa / (c2 + (c2 * c2 - kappa).sqrt());
        let energy = c2 + excess;
        let a = mu * energy / kappa;
        let m2 = (mu * mu + a * (1.0 - p.e * p.e) * mu * energy) / c2;
        let q = ConservedQuantities { energy_excess: excess, c, m: Vector3::new(0.0, 0.0, m2.sqrt()) };
        admissible(&q, mu)?;
        Self::assemble(q, mu, p.e, p.perihelion_angle, None)
    }

    /// Convenience: orbit of body `index` with the elliptic third law.
    pub fn for_body(table: &EphemerisTable, index: u32) -> crate::Result<RcnOrbit> {
        Ok(Self::from_elements(table.get(index)?, table.c(), KeplerVariant::Elliptic)?)
    }

    pub fn energy(&self) -> f64 {
        self.conserved.energy()
    }

    pub fn m_norm(&self) -> f64 {
        self.conserved.m_norm()
    }

    pub fn semi_latus_rectum(&self) -> f64 {
        self.a * (1.0 - self.e * self.e)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// ω²a²/c².
    pub fn velocity_parameter(&self) -> f64 {
        (self.omega * self.a / self.c).powi(2)
    }

    /// Coefficient k in ωt = ξ − ξ₀ − e·k·cos ξ.
    pub fn cos_coefficient(&self, mode: TimeMode) -> f64 {
        match mode {
            TimeMode::Exact => (self.energy() / (self.c * self.c)).powi(2),
            TimeMode::Approx => 1.0 - self.velocity_parameter(),
        }
    }

    pub fn radius_at_angle(&self, phi: f64) -> f64 {
        self.semi_latus_rectum() / (1.0 + self.e * (self.gamma * (phi - self.phi0)).cos())
    }

    pub fn radius_of_xi(&self, xi: f64) -> f64 {
        self.a * (1.0 + self.e * xi.sin())
    }

    pub fn time_of_xi(&self, xi: f64, mode: TimeMode) -> f64 {
        (xi - self.xi0 - self.e * self.cos_coefficient(mode) * xi.cos()) / self.omega
    }

    /// dt/dξ, strictly positive for e < 1.
    pub fn dt_dxi(&self, xi: f64, mode: TimeMode) -> f64 {
        (1.0 + self.e * self.cos_coefficient(mode) * xi.sin()) / self.omega
    }

    /// Inverse of [`time_of_xi`](Self::time_of_xi).
    pub fn xi_of_time(&self, t: f64, mode: TimeMode) -> f64 {
        let k = self.e * self.cos_coefficient(mode);
        let target = self.omega * t + self.xi0;
        if k == 0.0 {
            return target;
        }
        let f = |xi: f64| (xi - k * xi.cos() - target, 1.0 + k * xi.sin());
        let ulp = 4.0 * f64::EPSILON * target.abs();
        let settings = NewtonSettings { x_tol: 1e-13_f64.max(ulp), max_newton: 50, max_bisection: 200 };
        let root = roots::newton_bracketed(f, target - 2.0 * self.e, target + 2.0 * self.e, target, settings)
            .expect("time equation is monotone and bracketed");
        root.x
    }

    /// Continuous polar angle at phase ξ. The true anomaly is built from the
    /// eccentric anomaly ξ + π/2 without any arccos, so the winding is kept.
    pub fn angle_of_xi(&self, xi: f64) -> f64 {
        self.phi0 + true_anomaly(xi + PI / 2.0, self.e) / self.gamma
    }

    /// Perihelion phase ξ = π(2l + 3/2).
    pub fn perihelion_xi(l: i64) -> f64 {
        PI * (2.0 * l as f64 + 1.5)
    }

    /// Planar state (third axis along M) at coordinate time t.
    pub fn state_at_time(&self, t: f64) -> WorldlineSample {
        let xi = self.xi_of_time(t, TimeMode::Exact);
        self.state_at_xi(xi, t)
    }

    fn state_at_xi(&self, xi: f64, t: f64) -> WorldlineSample {
        let r = self.radius_of_xi(xi);
        let phi = self.angle_of_xi(xi);
        let rdot = self.a * self.e * xi.cos() / self.dt_dxi(xi, TimeMode::Exact);
        let c2 = self.c * self.c;
        let phidot = c2 * self.m_norm() / (r * (r * self.energy() + self.mu));
        let (s, co) = phi.sin_cos();
        let x = Vector3::new(r * co, r * s, 0.0);
        let v = Vector3::new(rdot * co - r * phidot * s, rdot * s + r * phidot * co, 0.0);
        WorldlineSample { t, x, v }
    }

    /// Angle of the l-th perihelion after the one at φ₀.
    pub fn perihelion_angle(&self, l: i64) -> f64 {
        self.phi0 + 2.0 * PI * l as f64 / self.gamma
    }
}

/// Continuous true anomaly for eccentric anomaly `ea`.
pub fn true_anomaly(ea: f64, e: f64) -> f64 {
    if e == 0.0 {
        return ea;
    }
    let beta = e / (1.0 + (1.0 - e * e).sqrt());
    ea + 2.0 * (beta * ea.sin() / (1.0 - beta * ea.cos())).atan()
}

fn planar_angle(x: &Vector3<f64>, normal: &Vector3<f64>) -> f64 {
    // reference axis: projection of the global x¹ axis (or x² if degenerate)
    let mut ref_axis = Vector3::x() - normal * normal.x;
    if ref_axis.norm() < 1e-8 {
        ref_axis = Vector3::y() - normal * normal.y;
    }
    let e1 = ref_axis.normalize();
    let e2 = normal.cross(&e1);
    x.dot(&e2).atan2(x.dot(&e1))
}

/// Right side of the equation of motion in the state (x, u), u = Γv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcnDerivative {
    /// du/dt = −μx/r³.
    pub momentum_rate: Vector3<f64>,
    /// dv/dt recovered from du/dt.
    pub acceleration: Vector3<f64>,
}

pub fn rcn_rhs(s: &WorldlineSample, mu: f64, c: f64) -> Result<RcnDerivative, OrbitError> {
    let r = s.x.norm();
    if r == 0.0 {
        return Err(OrbitError::ZeroRadius);
    }
    let v2 = s.v.norm_squared();
    if v2 >= c * c {
        return Err(OrbitError::Superluminal { speed: v2.sqrt(), c });
    }
    let f = -mu * s.x / r.powi(3);
    let gamma = 1.0 / (1.0 - v2 / (c * c)).sqrt();
    // d(Γv)/dt = Γa + Γ³(v·a)v/c²  ⇒  a = (F − (v·F)v/c²)/Γ
    let acceleration = (f - s.v * (s.v.dot(&f) / (c * c))) / gamma;
    Ok(RcnDerivative { momentum_rate: f, acceleration })
}

/// How many orbits make up "a century".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenturyConvention {
    /// Whole periods completed within 100 Earth periods.
    WholePeriods,
    /// 100 Earth periods divided by the body's period, fractional.
    EarthYears,
}

pub fn periods_per_century(table: &EphemerisTable, p: &PlanetElements, convention: CenturyConvention) -> crate::Result<f64> {
    let c = table.c();
    let ratio = 100.0 * table.get(EARTH)?.period(c) / p.period(c);
    Ok(match convention {
        // guard against 100.0000000001 for Earth itself
        CenturyConvention::WholePeriods => (ratio * (1.0 + 1e-12)).floor(),
        CenturyConvention::EarthYears => ratio,
    })
}

/// Perihelion advance seen from the Sun.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecessionSummary {
    pub gamma: f64,
    pub one_minus_gamma: f64,
    pub arcsec_per_period: f64,
    pub n_periods: f64,
    pub arcsec_per_century: f64,
}

impl PrecessionSummary {
    pub fn from_deficit(one_minus_gamma: f64, n_periods: f64) -> Self {
        let gamma = 1.0 - one_minus_gamma;
        let arcsec_per_period = one_minus_gamma / gamma * 360.0 * 3600.0;
        PrecessionSummary {
            gamma,
            one_minus_gamma,
            arcsec_per_period,
            n_periods,
            arcsec_per_century: arcsec_per_period * n_periods,
        }
    }
}

/// (γ⁻¹ − 1)·360·3600·N arcseconds.
pub fn advance_per_century_sun(orbit: &RcnOrbit, n_periods: f64) -> PrecessionSummary {
    PrecessionSummary::from_deficit(orbit.one_minus_gamma, n_periods)
}

/// Integration of the equation of motion in units of (a, 1/ω).
///
/// The state is (x/a, u/(aω)) with u = Γv, so the force term needs no
/// derivative of Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub length: f64,
    pub time: f64,
    pub mu: f64,
    pub c: f64,
}

impl Scaling {
    pub fn for_orbit(o: &RcnOrbit) -> Self {
        Scaling { length: o.a, time: 1.0 / o.omega, mu: o.mu, c: o.c }
    }

    fn speed(&self) -> f64 {
        self.length / self.time
    }

    pub fn to_scaled(&self, s: &WorldlineSample) -> (f64, [f64; 6]) {
        let g = s.lorentz_factor(self.c);
        let x = s.x / self.length;
        let u = g * s.v / self.speed();
        (s.t / self.time, [x.x, x.y, x.z, u.x, u.y, u.z])
    }

    pub fn from_scaled(&self, tau: f64, y: &[f64]) -> WorldlineSample {
        let x = Vector3::new(y[0], y[1], y[2]) * self.length;
        let u = Vector3::new(y[3], y[4], y[5]) * self.speed();
        let g = (1.0 + u.norm_squared() / (self.c * self.c)).sqrt();
        WorldlineSample { t: tau * self.time, x, v: u / g }
    }

    /// Scaled right side: dX/dτ = U/Γ, dU/dτ = −k X/|X|³ with k = μτ²/L³.
    pub fn rhs(&self) -> impl Fn(f64, &[f64], &mut [f64]) + Copy {
        let k = self.mu * self.time * self.time / self.length.powi(3);
        let beta2 = (self.speed() / self.c).powi(2);
        move |_t, y, dy| {
            let u2 = y[3] * y[3] + y[4] * y[4] + y[5] * y[5];
            let g = (1.0 + beta2 * u2).sqrt();
            let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
            let r3 = r2 * r2.sqrt();
            for i in 0..3 {
                dy[i] = y[3 + i] / g;
                dy[3 + i] = -k * y[i] / r3;
            }
        }
    }
}

/// Integrated trajectory plus its perihelion passages.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub scaling: Scaling,
    pub solution: Solution,
}

impl Propagation {
    pub fn sample(&self, t: f64) -> Option<WorldlineSample> {
        self.solution.eval(t / self.scaling.time).map(|y| self.scaling.from_scaled(t / self.scaling.time, &y))
    }

    pub fn samples(&self) -> Vec<WorldlineSample> {
        self.solution.t.iter().zip(&self.solution.y).map(|(t, y)| self.scaling.from_scaled(*t, y)).collect()
    }

    /// Times of the radius minima, s.
    pub fn perihelion_times(&self) -> Vec<f64> {
        self.solution.events.iter().map(|e| e.t * self.scaling.time).collect()
    }

    pub fn perihelion_states(&self) -> Vec<WorldlineSample> {
        self.solution.events.iter().map(|e| self.scaling.from_scaled(e.t, &e.state)).collect()
    }
}

/// Integrate from `start` over `span` seconds, logging perihelia
/// (x·u crossing zero upward).
pub fn propagate(start: &WorldlineSample, scaling: Scaling, span: f64, ctrl: &StepControl) -> Result<Propagation, OrbitError> {
    let (tau0, y0) = scaling.to_scaled(start);
    let perihelion = EventSpec::new(
        |_t, y: &[f64]| y[0] * y[3] + y[1] * y[4] + y[2] * y[5],
        Direction::Rising,
        false,
    );
    let solution = integrator::integrate(scaling.rhs(), tau0, &y0, tau0 + span / scaling.time, ctrl, &[perihelion])?;
    Ok(Propagation { scaling, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ephemeris::{EphemerisTable, MERCURY, VENUS};

    fn mercury() -> RcnOrbit {
        RcnOrbit::for_body(&EphemerisTable::load_default(), MERCURY).unwrap()
    }

    #[test]
    fn rest_at_infinity() {
        let s = WorldlineSample::new(0.0, Vector3::new(1e300, 0.0, 0.0), Vector3::zeros());
        let q = conserved_from_state(&s, 1.327e20, 3e8).unwrap();
        assert!(q.energy_excess.abs() < 1e-270);
        assert_eq!(q.m_norm(), 0.0);
    }

    #[test]
    fn bad_states_rejected() {
        let c = 3e8;
        let s = WorldlineSample::new(0.0, Vector3::new(1.0, 0.0, 0.0), Vector3::new(c, 0.0, 0.0));
        assert!(matches!(conserved_from_state(&s, 1.0, c), Err(OrbitError::Superluminal { .. })));
        let s = WorldlineSample::new(0.0, Vector3::zeros(), Vector3::zeros());
        assert!(matches!(conserved_from_state(&s, 1.0, c), Err(OrbitError::ZeroRadius)));
        assert!(matches!(rcn_rhs(&s, 1.0, c), Err(OrbitError::ZeroRadius)));
    }

    #[test]
    fn inadmissible_constants_named() {
        let c = 3e8;
        let q = ConservedQuantities { energy_excess: 10.0, c, m: Vector3::new(0.0, 0.0, 1e15) };
        assert!(matches!(RcnOrbit::from_conserved(q, 1.3e20, 0.0, None), Err(OrbitError::Unbound { .. })));
        let q = ConservedQuantities { energy_excess: -1e8, c, m: Vector3::new(0.0, 0.0, 1e11) };
        assert!(matches!(
            RcnOrbit::from_conserved(q, 1.3e20, 0.0, None),
            Err(OrbitError::AngularMomentumTooSmall { .. })
        ));
    }

    #[test]
    fn circular_state_energy() {
        let table = EphemerisTable::load_default();
        let p = table.get(MERCURY).unwrap();
        let c = table.c();
        let w = p.angular_frequency(c);
        let s = WorldlineSample::new(0.0, Vector3::new(p.a, 0.0, 0.0), Vector3::new(0.0, w * p.a, 0.0));
        let mu = third_kepler(p, c, KeplerVariant::Circular).unwrap();
        let q = conserved_from_state(&s, mu, c).unwrap();
        // E²/c⁴ ≈ 1 − ω²a²/c², i.e. κ/c⁴ ≈ ω²a²/c²
        let x = p.velocity_parameter();
        assert!((q.kappa() / c.powi(4) / x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mercury_gamma_deficit() {
        let o = mercury();
        assert!((o.one_minus_gamma / 1.3341e-8 - 1.0).abs() < 5e-4, "{}", o.one_minus_gamma);
        assert!((1.0 - o.gamma - o.one_minus_gamma).abs() < 1e-15);
    }

    #[test]
    fn elements_round_trip_through_constants() {
        let table = EphemerisTable::load_default();
        for p in table.planets() {
            let o = RcnOrbit::from_elements(p, table.c(), KeplerVariant::Elliptic).unwrap();
            assert!((o.a / p.a - 1.0).abs() < 1e-13, "{}", p.name);
            let back = RcnOrbit::from_conserved(o.conserved, o.mu, 0.0, None).unwrap();
            assert!((back.a / o.a - 1.0).abs() < 1e-13);
            assert!((back.e - o.e).abs() < 1e-6, "{}: {} vs {}", p.name, back.e, o.e);
            assert!((back.omega / p.angular_frequency(table.c()) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn venus_deficit_matches_series() {
        let table = EphemerisTable::load_default();
        let p = table.get(VENUS).unwrap();
        let o = RcnOrbit::from_elements(p, table.c(), KeplerVariant::Elliptic).unwrap();
        let x = p.velocity_parameter();
        let series = x / (2.0 * (1.0 - p.e * p.e));
        assert!((o.one_minus_gamma - series).abs() < 10.0 * x * x, "{} vs {series}", o.one_minus_gamma);
    }

    #[test]
    fn extremal_radii_and_angles() {
        let o = mercury();
        assert!((o.radius_of_xi(PI / 2.0) / (o.a * (1.0 + o.e)) - 1.0).abs() < 1e-15);
        assert!((o.radius_of_xi(-PI / 2.0) / (o.a * (1.0 - o.e)) - 1.0).abs() < 1e-15);
        assert!((o.radius_at_angle(o.phi0) / (o.a * (1.0 - o.e)) - 1.0).abs() < 1e-15);
        let aph = o.phi0 + PI / o.gamma;
        assert!((o.radius_at_angle(aph) / (o.a * (1.0 + o.e)) - 1.0).abs() < 1e-14);
        // one full turn in φ lands slightly before the next perihelion
        let r = o.radius_at_angle(o.phi0 + 2.0 * PI);
        assert!(r > o.a * (1.0 - o.e));
        let shift = 2.0 * PI * (1.0 / o.gamma - 1.0);
        let expected = o.a * (1.0 - o.e * o.e) / (1.0 + o.e * (o.gamma * 2.0 * PI).cos());
        assert!((r / expected - 1.0).abs() < 1e-15);
        assert!(shift > 0.0);
    }

    #[test]
    fn period_from_time_map() {
        let o = mercury();
        let half = o.time_of_xi(PI / 2.0, TimeMode::Exact) - o.time_of_xi(-PI / 2.0, TimeMode::Exact);
        let closed = 2.0 * PI * o.mu * o.c.powi(3) / o.conserved.kappa().powf(1.5);
        assert!((2.0 * half / closed - 1.0).abs() < 1e-14);
        assert!((closed / o.period() - 1.0).abs() < 1e-14);
        assert_eq!(o.time_of_xi(0.0, TimeMode::Exact), 0.0);
        assert!(o.time_of_xi(0.0, TimeMode::Approx).abs() < 1e-9 * o.period());
    }

    #[test]
    fn xi_round_trip_with_bisection_oracle() {
        let o = mercury();
        for k in 0..=50 {
            let xi = 10.0 * PI * k as f64 / 50.0;
            for mode in [TimeMode::Exact, TimeMode::Approx] {
                let t = o.time_of_xi(xi, mode);
                let back = o.xi_of_time(t, mode);
                assert!((back - xi).abs() < 1e-12, "xi={xi}");
                let oracle = roots::bisection(|z| o.time_of_xi(z, mode) - t, xi - 1.0, xi + 1.0, 1e-14, 200).unwrap();
                assert!((oracle.x - back).abs() < 1e-12);
            }
        }
        assert!(o.xi_of_time(0.0, TimeMode::Exact).abs() < 1e-15);
    }

    #[test]
    fn closed_form_state_conserves_constants() {
        let o = mercury();
        for k in 0..40 {
            let t = o.period() * k as f64 / 40.0;
            let s = o.state_at_time(t);
            let q = conserved_from_state(&s, o.mu, o.c).unwrap();
            let (de, dm) = o.conserved.relative_drift(&q);
            assert!(de < 1e-10 && dm < 1e-10, "t={t}: {de} {dm}");
        }
        let s0 = o.state_at_time(0.0);
        assert!((s0.radius() / o.a - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perihelion_advance_per_period() {
        let o = mercury();
        let t_peri = |l: i64| o.time_of_xi(RcnOrbit::perihelion_xi(l), TimeMode::Exact);
        let a0 = o.state_at_time(t_peri(-1)).angle();
        let s1 = o.state_at_time(t_peri(0));
        assert!((s1.radius() / (o.a * (1.0 - o.e)) - 1.0).abs() < 1e-12);
        let x = o.velocity_parameter();
        let advance = (s1.angle() - a0).rem_euclid(2.0 * PI);
        let expected = 2.0 * PI * 0.5 * x / (1.0 - o.e * o.e);
        assert!((advance - expected).abs() < 1e-3 * expected, "{advance} vs {expected}");
    }

    #[test]
    fn from_state_recovers_orbit() {
        let o = mercury();
        for t in [0.0, 0.3 * o.period(), 0.77 * o.period()] {
            let s = o.state_at_time(t);
            let o2 = RcnOrbit::from_state(&s, o.mu, o.c).unwrap();
            assert!((o2.e - o.e).abs() < 1e-9, "{} vs {}", o2.e, o.e);
            assert!(((o2.phi0 - o.phi0 + PI).rem_euclid(2.0 * PI) - PI).abs() < 1e-7);
            let s2 = o2.state_at_time(t + 0.1 * o.period());
            let s1 = o.state_at_time(t + 0.1 * o.period());
            assert!((s2.x - s1.x).norm() / o.a < 1e-7);
        }
    }

    #[test]
    fn third_law_variants() {
        let table = EphemerisTable::load_default();
        let c = table.c();
        let p = table.get(MERCURY).unwrap();
        let ell = third_kepler(p, c, KeplerVariant::Elliptic).unwrap();
        let cir = third_kepler(p, c, KeplerVariant::Circular).unwrap();
        let cla = third_kepler(p, c, KeplerVariant::Classical).unwrap();
        assert!((ell / (c * c) / 1477.0 - 1.0) < 4e-8 && ell > cla);
        let x = p.velocity_parameter();
        assert!(((ell - cir) / cla / x - 1.0).abs() < 1e-6);
        let mut far = p.clone();
        far.gm_over_c2 = 1e-9;
        let v: Vec<f64> = [KeplerVariant::Elliptic, KeplerVariant::Circular, KeplerVariant::Classical]
            .iter()
            .map(|&k| third_kepler(&far, c, k).unwrap())
            .collect();
        assert!((v[0] / v[2] - 1.0).abs() < 1e-15 && (v[1] / v[2] - 1.0).abs() < 1e-15);
        far.gm_over_c2 = far.a;
        assert!(matches!(third_kepler(&far, c, KeplerVariant::Elliptic), Err(OrbitError::BranchViolation { .. })));
    }

    #[test]
    fn rhs_newtonian_at_rest_and_inverse_map() {
        let s = WorldlineSample::new(0.0, Vector3::new(2.0, 0.0, 0.0), Vector3::zeros());
        let d = rcn_rhs(&s, 8.0, 3e8).unwrap();
        assert_eq!(d.acceleration, Vector3::new(-2.0, 0.0, 0.0));
        // a → d(Γv)/dt reproduces F
        let c = 10.0;
        let s = WorldlineSample::new(0.0, Vector3::new(1.0, 0.5, -0.2), Vector3::new(3.0, -4.0, 6.0));
        let d = rcn_rhs(&s, 5.0, c).unwrap();
        let g = s.lorentz_factor(c);
        let a = d.acceleration;
        let f = g * a + g.powi(3) * s.v.dot(&a) * s.v / (c * c);
        assert!((f - d.momentum_rate).norm() < 1e-12);
    }

    #[test]
    fn advance_conversion() {
        let s = PrecessionSummary::from_deficit(0.0, 415.0);
        assert_eq!(s.arcsec_per_century, 0.0);
        let o = mercury();
        let s = advance_per_century_sun(&o, 415.0);
        assert!((s.arcsec_per_century - 7.175).abs() < 0.01, "{}", s.arcsec_per_century);
        let table = EphemerisTable::load_default();
        let n = periods_per_century(&table, table.get(MERCURY).unwrap(), CenturyConvention::WholePeriods).unwrap();
        assert_eq!(n, 415.0);
        let n = periods_per_century(&table, table.get(EARTH).unwrap(), CenturyConvention::WholePeriods).unwrap();
        assert_eq!(n, 100.0);
    }

    #[test]
    fn scaled_round_trip() {
        let o = mercury();
        let sc = Scaling::for_orbit(&o);
        let s = o.state_at_time(1234.5);
        let (tau, y) = sc.to_scaled(&s);
        let back = sc.from_scaled(tau, &y);
        assert!((back.x - s.x).norm() / o.a < 1e-15);
        assert!((back.v - s.v).norm() / s.v.norm() < 1e-14);
        assert!((back.t - s.t).abs() < 1e-9);
    }
}
