//! Causal (retarded) potentials and field strengths of a moving source.
//!
//! Coordinates are x⁰ = ct and x, with η = diag(+1, −1, −1, −1). For a source
//! worldline x_s(t) and an observer event (t, x), the retarded time t′ solves
//! c(t − t′) = |x − x_s(t′)| and the potential is
//!
//! ```text
//! A_μ = η_μμ κ U^μ(t′) / (c|R| − R·v(t′)),   U = (c, v),   R = x − x_s(t′)
//! ```
//!
//! with κ = −qK the source coupling (κ = Gm for gravity). The field is
//! F_μν = ∂_μ A_ν − ∂_ν A_μ, and a test body with charge-to-mass ratio q/m
//! obeys d(Γv)/dt = (q/m)(F_i0 + Σ_l (v_l/c) F_il).

use std::cell::RefCell;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{self, DelayHistory, IntegrationError, Stats, StepControl};
use crate::rcn_orbit::WorldlineSample;
use crate::roots::{self, NewtonSettings, RootError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("source history starts at {start} s, retarded time needed before that (observer at t={t})")]
    HistoryTooShort { t: f64, start: f64 },
    #[error("source history ends at {end} s, too early for an observer at t={t}")]
    HistoryNotReached { t: f64, end: f64 },
    #[error("observer lies on the source worldline")]
    OnWorldline,
    #[error("source speed {speed} m/s is not below c = {c} m/s")]
    Superluminal { speed: f64, c: f64 },
    #[error("invalid worldline: {0}")]
    InvalidWorldline(String),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Source position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
}

pub trait Worldline {
    fn kinematics(&self, t: f64) -> Result<Kinematics, FieldError>;
    /// Interval of coordinate time on which the worldline is defined.
    fn time_range(&self) -> (f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticWorldline {
    pub x: Vector3<f64>,
}

impl Worldline for StaticWorldline {
    fn kinematics(&self, _t: f64) -> Result<Kinematics, FieldError> {
        Ok(Kinematics { x: self.x, v: Vector3::zeros(), a: Vector3::zeros() })
    }

    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// x(t) = x0 + u(t − t0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformWorldline {
    pub x0: Vector3<f64>,
    pub u: Vector3<f64>,
    pub t0: f64,
}

impl Worldline for UniformWorldline {
    fn kinematics(&self, t: f64) -> Result<Kinematics, FieldError> {
        Ok(Kinematics { x: self.x0 + self.u * (t - self.t0), v: self.u, a: Vector3::zeros() })
    }

    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Uniform circular motion in the plane z = center.z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularWorldline {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Worldline for CircularWorldline {
    fn kinematics(&self, t: f64) -> Result<Kinematics, FieldError> {
        let (s, c) = (self.omega * t + self.phase).sin_cos();
        let r = self.radius;
        let w = self.omega;
        Ok(Kinematics {
            x: self.center + Vector3::new(r * c, r * s, 0.0),
            v: Vector3::new(-r * w * s, r * w * c, 0.0),
            a: Vector3::new(-r * w * w * c, -r * w * w * s, 0.0),
        })
    }

    fn time_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Tabulated positions and velocities with local Lagrange interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWorldline {
    t: Vec<f64>,
    x: Vec<Vector3<f64>>,
    v: Vec<Vector3<f64>>,
    order: usize,
}

impl SampledWorldline {
    pub const DEFAULT_ORDER: usize = 3;

    pub fn new(samples: &[WorldlineSample], order: usize, c: f64) -> Result<Self, FieldError> {
        if !(1..=7).contains(&order) {
            return Err(FieldError::InvalidWorldline(format!("interpolation order {order} outside 1..=7")));
        }
        if samples.len() < order + 1 {
            return Err(FieldError::InvalidWorldline(format!("{} samples, need at least {}", samples.len(), order + 1)));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(FieldError::InvalidWorldline(format!("sample times not increasing at t={}", w[1].t)));
            }
        }
        if let Some(s) = samples.iter().find(|s| s.v.norm() >= c) {
            return Err(FieldError::Superluminal { speed: s.v.norm(), c });
        }
        Ok(SampledWorldline {
            t: samples.iter().map(|s| s.t).collect(),
            x: samples.iter().map(|s| s.x).collect(),
            v: samples.iter().map(|s| s.v).collect(),
            order,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn stencil(&self, t: f64) -> std::ops::Range<usize> {
        let n = self.order + 1;
        let i = self.t.partition_point(|&s| s < t);
        let lo = i.saturating_sub(n / 2).min(self.t.len() - n);
        lo..lo + n
    }
}

/// Lagrange value and derivative at t through the nodes `ts`.
fn lagrange(ts: &[f64], ys: &[Vector3<f64>], t: f64) -> (Vector3<f64>, Vector3<f64>) {
    let n = ts.len();
    let mut val = Vector3::zeros();
    let mut der = Vector3::zeros();
    for j in 0..n {
        let mut l = 1.0;
        let mut dl = 0.0;
        for m in 0..n {
            if m == j {
                continue;
            }
            let w = 1.0 / (ts[j] - ts[m]);
            dl = dl * (t - ts[m]) * w + l * w;
            l *= (t - ts[m]) * w;
        }
        val += ys[j] * l;
        der += ys[j] * dl;
    }
    (val, der)
}

impl Worldline for SampledWorldline {
    fn kinematics(&self, t: f64) -> Result<Kinematics, FieldError> {
        let (lo, hi) = self.time_range();
        if t < lo || t > hi {
            return Err(FieldError::HistoryTooShort { t, start: lo });
        }
        let r = self.stencil(t);
        let ts = &self.t[r.clone()];
        let (x, _) = lagrange(ts, &self.x[r.clone()], t);
        let (v, a) = lagrange(ts, &self.v[r], t);
        Ok(Kinematics { x, v, a })
    }

    fn time_range(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().unwrap())
    }
}

/// An observer event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeEvent {
    pub t: f64,
    pub x: Vector3<f64>,
}

impl SpacetimeEvent {
    pub fn new(t: f64, x: Vector3<f64>) -> Self {
        SpacetimeEvent { t, x }
    }
}

/// Source coupling κ = −qK. Gravity uses K = −G with positive masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub k: f64,
    pub q: f64,
}

impl Coupling {
    pub fn gravity(mass: f64, g: f64) -> Self {
        Coupling { k: -g, q: mass }
    }

    /// Gravity with Gm given directly.
    pub fn from_gm(gm: f64) -> Self {
        Coupling { k: -1.0, q: gm }
    }

    pub fn strength(&self) -> f64 {
        -self.q * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetardedSolution {
    pub t_ret: f64,
    pub delay: f64,
    /// c·delay − |x − x_s(t′)|, m.
    pub residual: f64,
    pub iterations: usize,
    pub source: Kinematics,
}

/// Solve c(t − t′) = |x − x_s(t′)| for t′ < t.
///
/// The unknown is the delay δ = t − t′, which keeps full relative precision
/// for large t. g(δ) = cδ − |x − x_s(t − δ)| has g′ = c − R·v/|R| > 0 for a
/// subluminal source, so one sign change on the bracket means one root.
pub fn retarded_time(obs: &SpacetimeEvent, source: &dyn Worldline, c: f64) -> Result<RetardedSolution, FieldError> {
    let (start, end) = source.time_range();
    let now = source.kinematics(obs.t.min(end))?;
    let r0 = (obs.x - now.x).norm();
    if r0 == 0.0 && obs.t <= end {
        return Err(FieldError::OnWorldline);
    }
    let failure: RefCell<Option<FieldError>> = RefCell::new(None);
    let g = |delay: f64| -> (f64, f64) {
        match source.kinematics(obs.t - delay) {
            Ok(k) => {
                let rv = obs.x - k.x;
                let r = rv.norm();
                let slope = if r > 0.0 { c - rv.dot(&k.v) / r } else { c };
                (c * delay - r, slope)
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                (f64::NAN, f64::NAN)
            }
        }
    };
    // smallest delay at which the source is known
    let lo = (obs.t - end).max(0.0);
    let (g_lo, _) = g(lo);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    if g_lo > 0.0 {
        return Err(FieldError::HistoryNotReached { t: obs.t, end });
    }
    let max_delay = obs.t - start;
    let mut hi = (r0 / c).max(lo).max(f64::MIN_POSITIVE);
    loop {
        if hi > max_delay {
            hi = max_delay;
        }
        let (val, _) = g(hi);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if val >= 0.0 {
            break;
        }
        if hi >= max_delay {
            return Err(FieldError::HistoryTooShort { t: obs.t, start });
        }
        hi *= 2.0;
    }
    let settings = NewtonSettings { x_tol: 4.0 * f64::EPSILON * hi, max_newton: 40, max_bisection: 200 };
    let root = roots::newton_bracketed(g, lo, hi, (r0 / c).clamp(lo, hi), settings);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let root = root?;
    let delay = root.x;
    let source_k = source.kinematics(obs.t - delay)?;
    let speed = source_k.v.norm();
    if speed >= c {
        return Err(FieldError::Superluminal { speed, c });
    }
    let residual = c * delay - (obs.x - source_k.x).norm();
    Ok(RetardedSolution { t_ret: obs.t - delay, delay, residual, iterations: root.iterations, source: source_k })
}

/// Bound used for the retarded-time residual: 1e-9 m or a few ulp of the
/// separation, whichever is larger.
pub fn residual_tolerance(separation: f64) -> f64 {
    1e-9_f64.max(16.0 * f64::EPSILON * separation)
}

/// Covariant components A_μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourPotential {
    pub a: [f64; 4],
}

const ETA: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

fn potential_from(obs: &SpacetimeEvent, sol: &RetardedSolution, kappa: f64, c: f64) -> FourPotential {
    let k = &sol.source;
    let rv = obs.x - k.x;
    let d = c * rv.norm() - rv.dot(&k.v);
    assert!(d > 0.0, "denominator must be positive for a subluminal source");
    let u = [c, k.v.x, k.v.y, k.v.z];
    let mut a = [0.0; 4];
    for m in 0..4 {
        a[m] = ETA[m] * kappa * u[m] / d;
    }
    FourPotential { a }
}

pub fn lw_potential(obs: &SpacetimeEvent, source: &dyn Worldline, coupling: Coupling, c: f64) -> Result<FourPotential, FieldError> {
    let sol = retarded_time(obs, source, c)?;
    Ok(potential_from(obs, &sol, coupling.strength(), c))
}

/// Antisymmetric F_μν stored as (01, 02, 03, 12, 13, 23).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStrength {
    pub upper: [f64; 6],
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

impl FieldStrength {
    pub fn from_gradient(da: &[[f64; 4]; 4]) -> Self {
        // da[μ][ν] = ∂_μ A_ν
        let mut upper = [0.0; 6];
        for (k, &(m, n)) in PAIRS.iter().enumerate() {
            upper[k] = da[m][n] - da[n][m];
        }
        FieldStrength { upper }
    }

    pub fn get(&self, mu: usize, nu: usize) -> f64 {
        if mu == nu {
            return 0.0;
        }
        let (a, b, sign) = if mu < nu { (mu, nu, 1.0) } else { (nu, mu, -1.0) };
        let k = PAIRS.iter().position(|&p| p == (a, b)).unwrap();
        sign * self.upper[k]
    }

    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (mu, row) in m.iter_mut().enumerate() {
            for (nu, v) in row.iter_mut().enumerate() {
                *v = self.get(mu, nu);
            }
        }
        m
    }

    /// Largest component size.
    pub fn norm(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Force per unit mass on a test body with charge-to-mass ratio `q_over_m`
    /// moving with velocity v: d(Γv)/dt.
    pub fn force(&self, v: &Vector3<f64>, c: f64, q_over_m: f64) -> Vector3<f64> {
        let mut f = Vector3::zeros();
        for i in 1..4 {
            let mut acc = self.get(i, 0);
            for l in 1..4 {
                acc += v[l - 1] / c * self.get(i, l);
            }
            f[i - 1] = q_over_m * acc;
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldMode {
    /// Implicit-function derivatives of t′.
    Analytic,
    /// Central differences with step h (length units; x⁰ is stepped by h too).
    Central { h: f64 },
    /// Central differences at h and h/2 combined to cancel the h² term.
    Richardson { h: f64 },
}

pub fn field_strength(
    obs: &SpacetimeEvent,
    source: &dyn Worldline,
    coupling: Coupling,
    c: f64,
    mode: FieldMode,
) -> Result<FieldStrength, FieldError> {
    match mode {
        FieldMode::Analytic => {
            let sol = retarded_time(obs, source, c)?;
            Ok(analytic_field(obs, &sol, coupling.strength(), c))
        }
        FieldMode::Central { h } => Ok(FieldStrength::from_gradient(&potential_gradient(obs, source, coupling, c, h)?)),
        FieldMode::Richardson { h } => {
            let coarse = potential_gradient(obs, source, coupling, c, h)?;
            let fine = potential_gradient(obs, source, coupling, c, 0.5 * h)?;
            let mut da = [[0.0; 4]; 4];
            for m in 0..4 {
                for n in 0..4 {
                    da[m][n] = (4.0 * fine[m][n] - coarse[m][n]) / 3.0;
                }
            }
            Ok(FieldStrength::from_gradient(&da))
        }
    }
}

/// Default finite-difference step: 1e-3 of the retarded distance.
pub fn default_step(obs: &SpacetimeEvent, source: &dyn Worldline, c: f64) -> Result<f64, FieldError> {
    Ok(1e-3 * c * retarded_time(obs, source, c)?.delay)
}

fn analytic_field(obs: &SpacetimeEvent, sol: &RetardedSolution, kappa: f64, c: f64) -> FieldStrength {
    let k = &sol.source;
    let rv = obs.x - k.x;
    let r = rv.norm();
    let d = c * r - rv.dot(&k.v);
    // ∂t′/∂x^μ from the implicit relation
    let g = [r / d, -rv.x / d, -rv.y / d, -rv.z / d];
    let dd_dt = -c * rv.dot(&k.v) / r + k.v.norm_squared() - rv.dot(&k.a);
    let mut dd = [dd_dt * g[0]; 4];
    for i in 1..4 {
        dd[i] = c * rv[i - 1] / r - k.v[i - 1] + dd_dt * g[i];
    }
    let u = [c, k.v.x, k.v.y, k.v.z];
    let du = [0.0, k.a.x, k.a.y, k.a.z];
    let mut da = [[0.0; 4]; 4];
    for m in 0..4 {
        for n in 0..4 {
            da[m][n] = ETA[n] * kappa * (du[n] * g[m] / d - u[n] * dd[m] / (d * d));
        }
    }
    FieldStrength::from_gradient(&da)
}

fn shifted(obs: &SpacetimeEvent, mu: usize, step: f64, c: f64) -> SpacetimeEvent {
    let mut e = *obs;
    if mu == 0 {
        e.t += step / c;
    } else {
        e.x[mu - 1] += step;
    }
    e
}

/// da[μ][ν] = ∂_μ A_ν by central differences.
fn potential_gradient(obs: &SpacetimeEvent, source: &dyn Worldline, coupling: Coupling, c: f64, h: f64) -> Result<[[f64; 4]; 4], FieldError> {
    let mut da = [[0.0; 4]; 4];
    for m in 0..4 {
        let plus = lw_potential(&shifted(obs, m, h, c), source, coupling, c)?;
        let minus = lw_potential(&shifted(obs, m, -h, c), source, coupling, c)?;
        for n in 0..4 {
            da[m][n] = (plus.a[n] - minus.a[n]) / (2.0 * h);
        }
    }
    Ok(da)
}

/// u^μ = (dt/ds)(dx^μ/dt) = Γ(1, v/c).
pub fn four_velocity(v: &Vector3<f64>, c: f64) -> [f64; 4] {
    let g = 1.0 / (1.0 - v.norm_squared() / (c * c)).sqrt();
    [g, g * v.x / c, g * v.y / c, g * v.z / c]
}

/// Σ η_αα (u^α)², equal to 1 for a proper four-velocity.
pub fn minkowski_norm(u: &[f64; 4]) -> f64 {
    (0..4).map(|a| ETA[a] * u[a] * u[a]).sum()
}

/// Σ F_μν u^μ u^ν over all 16 terms.
pub fn contraction_identity(f: &FieldStrength, u: &[f64; 4]) -> f64 {
    let m = f.matrix();
    let mut acc = 0.0;
    for (mu, row) in m.iter().enumerate() {
        for (nu, v) in row.iter().enumerate() {
            acc += v * u[mu] * u[nu];
        }
    }
    acc
}

/// Finite-difference residual measured at a sequence of halved steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    pub max_residuals: Vec<f64>,
    /// log2 of successive residual ratios.
    pub orders: Vec<f64>,
    /// Size of the largest derivative term on the grid, for scale.
    pub scale: f64,
}

impl ConvergenceReport {
    fn build(steps: Vec<f64>, max_residuals: Vec<f64>, scale: f64) -> Self {
        let orders = max_residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        ConvergenceReport { steps, max_residuals, orders, scale }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Σ η^μμ ∂_μ A_μ by central differences at `levels` halvings of `h0`.
pub fn gauge_residual(
    source: &dyn Worldline,
    coupling: Coupling,
    c: f64,
    probes: &[SpacetimeEvent],
    h0: f64,
    levels: usize,
) -> Result<ConvergenceReport, FieldError> {
    let mut steps = Vec::with_capacity(levels);
    let mut maxima = Vec::with_capacity(levels);
    let mut scale: f64 = 0.0;
    for level in 0..levels {
        let h = h0 / f64::powi(2.0, level as i32);
        let mut worst: f64 = 0.0;
        for obs in probes {
            let mut div = 0.0;
            for m in 0..4 {
                let plus = lw_potential(&shifted(obs, m, h, c), source, coupling, c)?;
                let minus = lw_potential(&shifted(obs, m, -h, c), source, coupling, c)?;
                let d = ETA[m] * (plus.a[m] - minus.a[m]) / (2.0 * h);
                scale = scale.max(d.abs());
                div += d;
            }
            worst = worst.max(div.abs());
        }
        steps.push(h);
        maxima.push(worst);
    }
    Ok(ConvergenceReport::build(steps, maxima, scale))
}

/// Current J^μ = (U^μ/c)ρ(x − x_s(t)) with the point source smeared into a
/// normalized Gaussian of width `width`.
pub fn smeared_current(obs: &SpacetimeEvent, source: &dyn Worldline, c: f64, width: f64) -> Result<[f64; 4], FieldError> {
    let k = source.kinematics(obs.t)?;
    let d2 = (obs.x - k.x).norm_squared();
    let norm = (2.0 * std::f64::consts::PI * width * width).powf(-1.5);
    let rho = norm * (-0.5 * d2 / (width * width)).exp();
    Ok([rho, rho * k.v.x / c, rho * k.v.y / c, rho * k.v.z / c])
}

/// Σ ∂_μ J^μ for the smeared current by central differences.
pub fn continuity_residual(
    source: &dyn Worldline,
    c: f64,
    width: f64,
    probes: &[SpacetimeEvent],
    h0: f64,
    levels: usize,
) -> Result<ConvergenceReport, FieldError> {
    let mut steps = Vec::with_capacity(levels);
    let mut maxima = Vec::with_capacity(levels);
    let mut scale: f64 = 0.0;
    for level in 0..levels {
        let h = h0 / f64::powi(2.0, level as i32);
        let mut worst: f64 = 0.0;
        for obs in probes {
            let mut div = 0.0;
            for m in 0..4 {
                let plus = smeared_current(&shifted(obs, m, h, c), source, c, width)?;
                let minus = smeared_current(&shifted(obs, m, -h, c), source, c, width)?;
                let d = (plus[m] - minus[m]) / (2.0 * h);
                scale = scale.max(d.abs());
                div += d;
            }
            worst = worst.max(div.abs());
        }
        steps.push(h);
        maxima.push(worst);
    }
    Ok(ConvergenceReport::build(steps, maxima, scale))
}

/// One body of the causal two-body problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    /// G·|m|, m³/s².
    pub gm: f64,
    /// Sign of the gravitational mass.
    pub sign: f64,
    pub x0: Vector3<f64>,
    pub v0: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TwoBodyConfig {
    pub bodies: [Body; 2],
    pub c: f64,
    /// Length of the straight-line history before t = 0, s.
    pub prehistory: f64,
    pub ctrl: StepControl,
}

pub const PREHISTORY_NOTE: &str = "bodies assumed to move on straight lines at their initial velocities before t = 0";

#[derive(Debug, Clone)]
pub struct TwoBodyRun {
    pub t: Vec<f64>,
    pub bodies: [Vec<WorldlineSample>; 2],
    pub stats: Stats,
    pub min_delay: f64,
    /// Relative change of Σ gm_k c²(Γ_k − 1) − gm₁gm₂ s₁s₂/|x₁ − x₂| from
    /// start to end. Reported, not conserved.
    pub energy_drift: f64,
    pub prehistory_note: &'static str,
}

/// Worldline of body `offset/6` read from the delay history.
struct HistoryWorldline<'h, 'a> {
    history: &'h DelayHistory<'a>,
    offset: usize,
    c: f64,
}

impl Worldline for HistoryWorldline<'_, '_> {
    fn kinematics(&self, t: f64) -> Result<Kinematics, FieldError> {
        let y = self.history.eval(t)?;
        let dy = self.history.eval_derivative(t)?;
        let o = self.offset;
        let x = Vector3::new(y[o], y[o + 1], y[o + 2]);
        let u = Vector3::new(y[o + 3], y[o + 4], y[o + 5]);
        let du = Vector3::new(dy[o + 3], dy[o + 4], dy[o + 5]);
        let gamma = (1.0 + u.norm_squared() / (self.c * self.c)).sqrt();
        let v = u / gamma;
        let a = (du - v * (v.dot(&du) / (self.c * self.c))) / gamma;
        Ok(Kinematics { x, v, a })
    }

    fn time_range(&self) -> (f64, f64) {
        (self.history.start(), self.history.end())
    }
}

fn pair_energy(bodies: &[Body; 2], states: &[WorldlineSample; 2], c: f64) -> f64 {
    let mut e = 0.0;
    for k in 0..2 {
        let g = states[k].lorentz_factor(c);
        e += bodies[k].gm * c * c * (g - 1.0);
    }
    e - bodies[0].gm * bodies[1].gm * bodies[0].sign * bodies[1].sign / (states[0].x - states[1].x).norm()
}

/// Integrate the causal two-body system from t = 0 to `t_end`.
pub fn causal_two_body(cfg: &TwoBodyConfig, t_end: f64) -> Result<TwoBodyRun, FieldError> {
    let c = cfg.c;
    let bodies = cfg.bodies;
    let mut y0 = vec![0.0; 12];
    for (k, b) in bodies.iter().enumerate() {
        let speed = b.v0.norm();
        if speed >= c {
            return Err(FieldError::Superluminal { speed, c });
        }
        let gamma = 1.0 / (1.0 - speed * speed / (c * c)).sqrt();
        for i in 0..3 {
            y0[6 * k + i] = b.x0[i];
            y0[6 * k + 3 + i] = gamma * b.v0[i];
        }
    }
    let start = y0.clone();
    let line = move |t: f64| {
        let mut y = start.clone();
        for (k, b) in bodies.iter().enumerate() {
            for i in 0..3 {
                y[6 * k + i] = b.x0[i] + b.v0[i] * t;
            }
        }
        y
    };
    let history = DelayHistory::new(-cfg.prehistory, 0.0, line).with_initial_derivative(move |_t| {
        let mut d = vec![0.0; 12];
        for (k, b) in bodies.iter().enumerate() {
            for i in 0..3 {
                d[6 * k + i] = b.v0[i];
            }
        }
        d
    });
    let field_error: RefCell<Option<FieldError>> = RefCell::new(None);
    let rhs = |t: f64, y: &[f64], hist: &DelayHistory, dy: &mut [f64]| -> Result<f64, IntegrationError> {
        let mut min_delay = f64::INFINITY;
        for k in 0..2 {
            let j = 1 - k;
            let o = 6 * k;
            let x = Vector3::new(y[o], y[o + 1], y[o + 2]);
            let u = Vector3::new(y[o + 3], y[o + 4], y[o + 5]);
            let gamma = (1.0 + u.norm_squared() / (c * c)).sqrt();
            let v = u / gamma;
            let source = HistoryWorldline { history: hist, offset: 6 * j, c };
            let obs = SpacetimeEvent::new(t, x);
            let coupling = Coupling::from_gm(bodies[j].sign * bodies[j].gm);
            let sol = match retarded_time(&obs, &source, c) {
                Ok(s) => s,
                Err(FieldError::Integration(e)) => return Err(e),
                Err(FieldError::HistoryTooShort { t, start }) => {
                    return Err(IntegrationError::HistoryUnderrun { t, start, end: hist.end() })
                }
                Err(FieldError::HistoryNotReached { t, end }) => {
                    return Err(IntegrationError::HistoryUnderrun { t, start: hist.start(), end })
                }
                Err(e) => {
                    field_error.borrow_mut().get_or_insert(e);
                    return Err(IntegrationError::InvalidControl("field evaluation failed"));
                }
            };
            min_delay = min_delay.min(sol.delay);
            let f = analytic_field(&obs, &sol, coupling.strength(), c);
            let force = f.force(&v, c, bodies[k].sign);
            for i in 0..3 {
                dy[o + i] = v[i];
                dy[o + 3 + i] = force[i];
            }
        }
        Ok(min_delay)
    };
    let solution = integrator::integrate_delayed(rhs, history, &y0, t_end, &cfg.ctrl);
    if let Some(e) = field_error.into_inner() {
        return Err(e);
    }
    let solution = solution?;
    let to_sample = |t: f64, y: &[f64], k: usize| {
        let o = 6 * k;
        let u = Vector3::new(y[o + 3], y[o + 4], y[o + 5]);
        let gamma = (1.0 + u.norm_squared() / (c * c)).sqrt();
        WorldlineSample::new(t, Vector3::new(y[o], y[o + 1], y[o + 2]), u / gamma)
    };
    let mut out = [Vec::with_capacity(solution.t.len()), Vec::with_capacity(solution.t.len())];
    for (t, y) in solution.t.iter().zip(&solution.y) {
        for (k, samples) in out.iter_mut().enumerate() {
            samples.push(to_sample(*t, y, k));
        }
    }
    let first = [out[0][0], out[1][0]];
    let last = [*out[0].last().unwrap(), *out[1].last().unwrap()];
    let e0 = pair_energy(&bodies, &first, c);
    let e1 = pair_energy(&bodies, &last, c);
    Ok(TwoBodyRun {
        t: solution.t,
        bodies: out,
        stats: solution.stats,
        min_delay: solution.min_delay,
        energy_drift: if e0 != 0.0 { (e1 - e0) / e0.abs() } else { e1 - e0 },
        prehistory_note: PREHISTORY_NOTE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const C: f64 = 299_792_458.0;

    #[test]
    fn static_source_delay_is_distance_over_c() {
        let src = StaticWorldline { x: Vector3::zeros() };
        let d = 5.8e10;
        let obs = SpacetimeEvent::new(1e7, Vector3::new(d, 0.0, 0.0));
        let sol = retarded_time(&obs, &src, C).unwrap();
        assert_eq!(sol.t_ret, 1e7 - d / C);
        assert!(sol.residual.abs() <= residual_tolerance(d));
    }

    fn uniform_delay(w: Vector3<f64>, u: Vector3<f64>, c: f64) -> f64 {
        // |w + uδ| = cδ, positive root
        let a = c * c - u.norm_squared();
        let b = w.dot(&u);
        (b + (b * b + a * w.norm_squared()).sqrt()) / a
    }

    #[test]
    fn uniform_source_matches_quadratic_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let u = Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.4..0.4)) * C;
            let x0 = Vector3::new(rng.gen_range(-1e9..1e9), rng.gen_range(-1e9..1e9), rng.gen_range(-1e9..1e9));
            let src = UniformWorldline { x0, u, t0: 0.0 };
            let t = rng.gen_range(-100.0..100.0);
            let x = Vector3::new(rng.gen_range(-2e9..2e9), rng.gen_range(-2e9..2e9), rng.gen_range(-2e9..2e9));
            let obs = SpacetimeEvent::new(t, x);
            let sol = retarded_time(&obs, &src, C).unwrap();
            let w = x - x0 - u * t;
            let oracle = t - uniform_delay(w, u, C);
            assert!((sol.t_ret - oracle).abs() <= 1e-12 * t.abs().max(sol.delay), "{} vs {oracle}", sol.t_ret);
            assert!(sol.residual.abs() <= residual_tolerance(sol.delay * C));
        }
    }

    #[test]
    fn short_history_is_reported() {
        let states: Vec<WorldlineSample> =
            (0..10).map(|k| WorldlineSample::new(k as f64, Vector3::new(0.0, 0.0, 0.0), Vector3::zeros())).collect();
        let src = SampledWorldline::new(&states, 3, C).unwrap();
        let obs = SpacetimeEvent::new(9.0, Vector3::new(100.0 * C, 0.0, 0.0));
        assert!(matches!(retarded_time(&obs, &src, C), Err(FieldError::HistoryTooShort { .. })));
    }

    #[test]
    fn static_potential_and_field() {
        let gm = 1.327_124_4e20;
        let src = StaticWorldline { x: Vector3::zeros() };
        let coupling = Coupling::from_gm(gm);
        let x = Vector3::new(4.0e10, -3.0e10, 1.2e10);
        let obs = SpacetimeEvent::new(1234.0, x);
        let a = lw_potential(&obs, &src, coupling, C).unwrap();
        let r = x.norm();
        assert!((a.a[0] - gm / r).abs() <= 2.0 * f64::EPSILON * gm / r);
        assert_eq!(&a.a[1..], &[0.0, 0.0, 0.0]);
        let f = field_strength(&obs, &src, coupling, C, FieldMode::Analytic).unwrap();
        for i in 1..4 {
            let expected = -gm * x[i - 1] / r.powi(3);
            assert!((f.get(i, 0) - expected).abs() <= 4.0 * f64::EPSILON * expected.abs().max(gm / r / r * 1e-3));
        }
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            assert_eq!(f.get(i, j), 0.0);
        }
        let zero = lw_potential(&obs, &src, Coupling::from_gm(0.0), C).unwrap();
        assert_eq!(zero.a.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn gravity_sign_attracts_and_opposite_sign_repels() {
        let gm = 4.0e14;
        let src = StaticWorldline { x: Vector3::zeros() };
        let obs = SpacetimeEvent::new(0.0, Vector3::new(7.0e6, 0.0, 0.0));
        let f = field_strength(&obs, &src, Coupling::from_gm(gm), C, FieldMode::Analytic).unwrap();
        assert!(f.force(&Vector3::zeros(), C, 1.0).x < 0.0);
        assert!(f.force(&Vector3::zeros(), C, -1.0).x > 0.0);
        let g = field_strength(&obs, &src, Coupling::gravity(5.97e24, 6.674e-11), C, FieldMode::Analytic).unwrap();
        assert!(g.force(&Vector3::zeros(), C, 1.0).x < 0.0);
    }

    fn boost(beta: f64) -> [[f64; 4]; 4] {
        let g = 1.0 / (1.0 - beta * beta).sqrt();
        [[g, g * beta, 0.0, 0.0], [g * beta, g, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }

    #[test]
    fn boosted_static_source_matches_lorentz_transform() {
        let kappa = 3.0e10;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let beta = rng.gen_range(-0.8..0.8);
            let src = UniformWorldline { x0: Vector3::zeros(), u: Vector3::new(beta * C, 0.0, 0.0), t0: 0.0 };
            let t = rng.gen_range(-10.0..10.0);
            let x = Vector3::new(rng.gen_range(-3e9..3e9), rng.gen_range(-3e9..3e9), rng.gen_range(-3e9..3e9));
            let lab = lw_potential(&SpacetimeEvent::new(t, x), &src, Coupling::from_gm(kappa), C).unwrap();
            // rest frame of the source: x' = Λ⁻¹x, A'^μ = (κ/|x'|, 0)
            let l = boost(beta);
            let g = l[0][0];
            let xr = Vector3::new(g * (x.x - beta * C * t), x.y, x.z);
            let rest = [kappa / xr.norm(), 0.0, 0.0, 0.0];
            let mut upper = [0.0; 4];
            for m in 0..4 {
                upper[m] = (0..4).map(|n| l[m][n] * rest[n]).sum();
            }
            for m in 0..4 {
                let lower = ETA[m] * upper[m];
                assert!((lab.a[m] - lower).abs() <= 1e-10 * rest[0] * g, "{m}: {} vs {lower}", lab.a[m]);
            }
        }
    }

    #[test]
    fn analytic_field_matches_finite_differences() {
        let src = CircularWorldline { center: Vector3::zeros(), radius: 1.0e9, omega: 0.2, phase: 0.3 };
        let obs = SpacetimeEvent::new(3.0, Vector3::new(2.0e9, 1.0e9, -0.5e9));
        let coupling = Coupling::from_gm(1e20);
        let exact = field_strength(&obs, &src, coupling, C, FieldMode::Analytic).unwrap();
        let h = default_step(&obs, &src, C).unwrap() * 50.0;
        let err = |mode| {
            let f = field_strength(&obs, &src, coupling, C, mode).unwrap();
            (0..6).map(|k| (f.upper[k] - exact.upper[k]).abs()).fold(0.0, f64::max) / exact.norm()
        };
        let e1 = err(FieldMode::Central { h });
        let e2 = err(FieldMode::Central { h: 0.5 * h });
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}, {e1} {e2}");
        assert!(err(FieldMode::Richardson { h }) < 0.1 * e2);
    }

    #[test]
    fn contraction_vanishes_for_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let src = UniformWorldline {
                x0: Vector3::new(rng.gen_range(-1e9..1e9), 0.0, 0.0),
                u: Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)) * C,
                t0: 0.0,
            };
            let obs = SpacetimeEvent::new(0.0, Vector3::new(rng.gen_range(2e9..3e9), rng.gen_range(-1e9..1e9), 0.0));
            let f = field_strength(&obs, &src, Coupling::from_gm(1e20), C, FieldMode::Analytic).unwrap();
            let v = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)) * C;
            let u = four_velocity(&v, C);
            assert!((minkowski_norm(&u) - 1.0).abs() < 1e-14);
            let un = u.iter().map(|x| x * x).sum::<f64>();
            assert!(contraction_identity(&f, &u).abs() < 1e-12 * f.norm() * un);
            for m in 0..4 {
                for n in 0..4 {
                    assert_eq!(f.get(m, n), -f.get(n, m));
                }
            }
        }
    }

    #[test]
    fn static_sun_circular_orbit_contraction_is_zero() {
        let gm: f64 = 1.327e20;
        let r = 1.496e11;
        let x = Vector3::new(r, 0.0, 0.0);
        let v = Vector3::new(0.0, (gm / r).sqrt(), 0.0);
        let f = field_strength(&SpacetimeEvent::new(0.0, x), &StaticWorldline { x: Vector3::zeros() }, Coupling::from_gm(gm), C, FieldMode::Analytic)
            .unwrap();
        assert_eq!(contraction_identity(&f, &four_velocity(&v, C)), 0.0);
    }

    #[test]
    fn gauge_condition_converges() {
        let coupling = Coupling::from_gm(1e20);
        let probes: Vec<SpacetimeEvent> = (0..4)
            .map(|k| SpacetimeEvent::new(k as f64, Vector3::new(3e9 + 1e8 * k as f64, -1e9, 5e8 * k as f64)))
            .collect();
        let stat = gauge_residual(&StaticWorldline { x: Vector3::zeros() }, coupling, C, &probes, 1e8, 3).unwrap();
        assert!(stat.max_residuals.iter().all(|&r| r == 0.0), "{stat:?}");
        let uniform = UniformWorldline { x0: Vector3::zeros(), u: Vector3::new(0.3 * C, 0.1 * C, 0.0), t0: 0.0 };
        let rep = gauge_residual(&uniform, coupling, C, &probes, 4e8, 4).unwrap();
        assert!(rep.min_order() > 1.8, "{rep:?}");
        let circ = CircularWorldline { center: Vector3::zeros(), radius: 1e9, omega: 0.1, phase: 0.0 };
        let rep = gauge_residual(&circ, coupling, C, &probes, 4e8, 4).unwrap();
        assert!(rep.min_order() > 1.8, "{rep:?}");
    }

    #[test]
    fn continuity_converges() {
        let circ = CircularWorldline { center: Vector3::zeros(), radius: 1e9, omega: 0.1, phase: 0.0 };
        let probes: Vec<SpacetimeEvent> =
            (0..5).map(|k| SpacetimeEvent::new(0.0, Vector3::new(1e9 + 2e8 * k as f64, 3e8, 1e8))).collect();
        let rep = continuity_residual(&circ, C, 5e8, &probes, 1e8, 4).unwrap();
        assert!(rep.min_order() > 1.8, "{rep:?}");
    }

    #[test]
    fn light_cone_integral_reduces_to_closed_form() {
        // ∫ dt θ(x⁰ − ct) δ_ε((x⁰ − ct)² − |x − x_s(t)|²) U(t) → U(t′)/(2D)
        let src = CircularWorldline { center: Vector3::zeros(), radius: 2.0, omega: 0.1, phase: 0.0 };
        let c = 1.0;
        let obs = SpacetimeEvent::new(10.0, Vector3::new(6.0, 1.0, 0.5));
        let sol = retarded_time(&obs, &src, c).unwrap();
        let rv = obs.x - sol.source.x;
        let d = c * rv.norm() - rv.dot(&sol.source.v);
        let mut errs = Vec::new();
        for eps in [0.04, 0.02, 0.01] {
            let kernel = |t: f64| {
                let k = src.kinematics(t).unwrap();
                let s = (c * obs.t - c * t).powi(2) - (obs.x - k.x).norm_squared();
                (-0.5 * s * s / (eps * eps)).exp() / (eps * (2.0 * std::f64::consts::PI).sqrt())
            };
            let settings = crate::quadrature::QuadratureSettings { abs_tol: 1e-13, rel_tol: 1e-12, max_subdivisions: 5000 };
            let half = 40.0 * eps / (2.0 * d);
            let (lo, hi) = (sol.t_ret - half, sol.t_ret + half);
            let i0 = crate::quadrature::integrate(kernel, lo, hi, settings).unwrap().value;
            errs.push((i0 - 1.0 / (2.0 * d)).abs() * 2.0 * d);
        }
        assert!(errs[2] < 1e-3, "{errs:?}");
        assert!(errs[1] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn sampled_worldline_reproduces_circle() {
        let circ = CircularWorldline { center: Vector3::zeros(), radius: 1e9, omega: 1e-3, phase: 0.0 };
        let samples: Vec<WorldlineSample> = (0..=400)
            .map(|k| {
                let t = 10.0 * k as f64;
                let kin = circ.kinematics(t).unwrap();
                WorldlineSample::new(t, kin.x, kin.v)
            })
            .collect();
        let s = SampledWorldline::new(&samples, SampledWorldline::DEFAULT_ORDER, C).unwrap();
        for t in [55.5, 1234.5, 3999.0] {
            let a = s.kinematics(t).unwrap();
            let b = circ.kinematics(t).unwrap();
            assert!((a.x - b.x).norm() < 1e-6 * 1e9);
            assert!((a.a - b.a).norm() < 1e-6 * b.a.norm());
        }
        let obs = SpacetimeEvent::new(4000.0, Vector3::new(2e11, 0.0, 0.0));
        let fs = field_strength(&obs, &s, Coupling::from_gm(1e20), C, FieldMode::Analytic).unwrap();
        let fc = field_strength(&obs, &circ, Coupling::from_gm(1e20), C, FieldMode::Analytic).unwrap();
        assert!((0..6).all(|k| (fs.upper[k] - fc.upper[k]).abs() < 1e-8 * fc.norm()));
        assert!(SampledWorldline::new(&samples, 0, C).is_err());
    }

    #[test]
    fn far_bodies_at_rest_start_newtonian() {
        let gm = 1e16;
        let d = 1e9;
        let bodies = [
            Body { gm, sign: 1.0, x0: Vector3::new(-0.5 * d, 0.0, 0.0), v0: Vector3::zeros() },
            Body { gm, sign: 1.0, x0: Vector3::new(0.5 * d, 0.0, 0.0), v0: Vector3::zeros() },
        ];
        let cfg = TwoBodyConfig { bodies, c: C, prehistory: 10.0, ctrl: StepControl::default() };
        let run = causal_two_body(&cfg, 1.0).unwrap();
        let newton = gm / (d * d);
        // the retarded source is still on its resting prehistory, so v = at
        let v = run.bodies[0].last().unwrap().v.x;
        assert!((v / newton - 1.0).abs() < 1e-9, "{v}");
        assert_eq!(run.bodies[1].last().unwrap().v.x, -v);
        assert_eq!(run.prehistory_note, PREHISTORY_NOTE);
    }
}
