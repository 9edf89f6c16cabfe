//! The acceptance suite: ten criteria, each a list of named numeric checks.
//! Shared by the `validate` command and the acceptance test target.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ephemeris::{EphemerisTable, EARTH, MARS, MERCURY, SATURN, VENUS};
use crate::gr_orbit::{
    gr_precession, precession_comparison, propagate_geodesic, propagate_proper_kepler, proper_constants,
    ProperKeplerOrbit, TERM_NAMES,
};
use crate::integrator::StepControl;
use crate::observation::{self, advance_angle, century_window_check, ExpandedInputs, ObservedAdvanceConfig};
use crate::rcn_orbit::{
    advance_per_century_sun, conserved_from_state, periods_per_century, propagate, third_kepler, CenturyConvention,
    KeplerVariant, RcnOrbit, Scaling, WorldlineSample,
};
use crate::retarded_field::{
    contraction_identity, field_strength, four_velocity, gauge_residual, lw_potential, CircularWorldline, Coupling,
    FieldMode, SpacetimeEvent, StaticWorldline, UniformWorldline, Worldline,
};
use crate::Result;

/// Pass rule of one check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// |measured − expected| ≤ tolerance.
    Within { expected: f64, tolerance: f64 },
    /// measured ≤ limit.
    AtMost { limit: f64 },
    /// lower ≤ measured ≤ upper.
    Between { lower: f64, upper: f64 },
}

impl Rule {
    fn accepts(&self, m: f64) -> bool {
        match *self {
            Rule::Within { expected, tolerance } => (m - expected).abs() <= tolerance,
            Rule::AtMost { limit } => m <= limit,
            Rule::Between { lower, upper } => lower <= m && m <= upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    #[serde(flatten)]
    pub rule: Rule,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, rule: Rule) -> Self {
        // NaN never passes
        let passed = measured.is_finite() && rule.accepts(measured);
        Check { name: name.into(), measured, rule, passed }
    }

    pub fn within(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self::new(name, measured, Rule::Within { expected, tolerance })
    }

    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self::new(name, measured, Rule::AtMost { limit })
    }

    pub fn between(name: impl Into<String>, measured: f64, lower: f64, upper: f64) -> Self {
        Self::new(name, measured, Rule::Between { lower, upper })
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{tag} {}: measured {:.6e}", self.name, self.measured)?;
        match self.rule {
            Rule::Within { expected, tolerance } => write!(f, ", expected {expected:.6e} ± {tolerance:.1e}"),
            Rule::AtMost { limit } => write!(f, ", limit {limit:.1e}"),
            Rule::Between { lower, upper } => write!(f, ", range [{lower:.3e}, {upper:.3e}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    /// Informational lines that do not affect the verdict.
    pub notes: Vec<String>,
    /// Set when the computation itself failed.
    pub error: Option<String>,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// `PASS [n] title` or `FAIL [n] title (k/m checks)`.
    pub fn summary_line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        format!("{verdict} [{}] {} ({ok}/{} checks)", self.id, self.title, self.checks.len())
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary_line())?;
        for c in &self.checks {
            writeln!(f, "    {c}")?;
        }
        for n in &self.notes {
            writeln!(f, "    note: {n}")?;
        }
        if let Some(e) = &self.error {
            writeln!(f, "    error: {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Options {
    /// Coarser grids and fewer random draws.
    pub quick: bool,
}

pub const TITLES: [&str; 10] = [
    "relativistic Newton precession of Mercury",
    "general-relativity precession of Mercury",
    "observed advance from Earth",
    "century window",
    "third Kepler law",
    "integrated vs closed-form orbit",
    "proper-time Kepler and geodesic norm",
    "retarded-field reductions",
    "geodesic term estimates",
    "precession comparison identity",
];

type Body = (Vec<Check>, Vec<String>);

pub fn run_criterion(id: u8, table: &EphemerisTable, opts: Options) -> CriterionReport {
    let outcome = match id {
        1 => rcn_precession(table),
        2 => gr_precession_check(table),
        3 => observed_advance(table),
        4 => century_window(table),
        5 => third_law(table),
        6 => oracle_equivalence(table, opts),
        7 => proper_time(table, opts),
        8 => retarded_reductions(opts),
        9 => term_estimates(table, opts),
        10 => comparison_identity(table, opts),
        _ => Ok((Vec::new(), Vec::new())),
    };
    let title = TITLES.get(usize::from(id).wrapping_sub(1)).copied().unwrap_or("unknown criterion").to_string();
    match outcome {
        Ok((checks, notes)) => CriterionReport { id, title, checks, notes, error: None },
        Err(e) => CriterionReport { id, title, checks: Vec::new(), notes: Vec::new(), error: Some(e.to_string()) },
    }
}

pub fn run_all(table: &EphemerisTable, opts: Options) -> Vec<CriterionReport> {
    (1..=10).map(|id| run_criterion(id, table, opts)).collect()
}

fn n_periods(table: &EphemerisTable) -> Result<f64> {
    periods_per_century(table, table.get(MERCURY)?, CenturyConvention::WholePeriods)
}

fn rcn_precession(table: &EphemerisTable) -> Result<Body> {
    let orbit = RcnOrbit::for_body(table, MERCURY)?;
    let n = n_periods(table)?;
    let s = advance_per_century_sun(&orbit, n);
    let checks = vec![
        Check::within("1-gamma", s.one_minus_gamma, 1.3341e-8, 0.005 * 1.3341e-8),
        Check::within("advance_arcsec_per_century", s.arcsec_per_century, 7.175, 0.05),
    ];
    Ok((checks, vec![format!("{n} periods per century")]))
}

fn gr_precession_check(table: &EphemerisTable) -> Result<Body> {
    let p = table.get(MERCURY)?;
    let n = n_periods(table)?;
    let gr = gr_precession(p, table.c(), KeplerVariant::Classical, n)?;
    let rcn = advance_per_century_sun(&RcnOrbit::for_body(table, MERCURY)?, n);
    let checks = vec![
        Check::within("gr_arcsec_per_century", gr.arcsec_per_century, 43.05, 0.3),
        Check::within("gr_over_rcn", gr.arcsec_per_century / rcn.arcsec_per_century, 6.0, 1e-4),
    ];
    Ok((checks, Vec::new()))
}

fn observed_advance(table: &EphemerisTable) -> Result<Body> {
    let cfg = ObservedAdvanceConfig::default();
    let rep = advance_angle(&cfg, table)?;
    let [e0, e1] = rep.epochs;
    let checks = vec![
        Check::within("alpha_deg", rep.alpha_deg, 17.889, 0.02),
        Check::within("earth_xi_l0", e0.earth_xi, 1.1748, 1e-3),
        Check::within("earth_xi_l415", e1.earth_xi, 629.09, 0.01),
        Check::within("earth_r_over_a_l0", e0.earth_radius_ratio, 1.0157, 5e-4),
        Check::within("earth_r_over_a_l415", e1.earth_radius_ratio, 1.0118, 5e-4),
        Check::within("earth_angle_rad_l0", e0.earth_reduced_angle_rad, 2.7521, 2e-3),
        Check::within("earth_angle_rad_l415", e1.earth_reduced_angle_rad, 2.3544, 2e-3),
    ];
    // α from the reference intermediates, to separate the angle formula
    // from the Earth phase it is fed
    let m = table.get(MERCURY)?;
    let e = table.get(EARTH)?;
    let xm = m.velocity_parameter() / (1.0 - m.e * m.e);
    let xe = e.velocity_parameter() / (1.0 - e.e * e.e);
    let ratio = e.a / m.a;
    let reference = ExpandedInputs {
        mercury_radius: [1.0 - m.e; 2],
        mercury_angle: [0.0, cfg.l2 as f64 * PI * xm],
        earth_radius: [1.0157 * ratio, 1.0118 * ratio],
        earth_angle: [2.7521, 2.3544 + 99.0 * PI * xe],
        inclination: m.inclination,
    };
    let notes = vec![
        format!(
            "alpha from reference intermediates {:.4} deg; pipeline expanded formula {:.4} deg",
            reference.alpha().to_degrees(),
            rep.alpha_expanded_rad.to_degrees()
        ),
        format!("earth windings {} and {}", e0.earth_winding, e1.earth_winding),
    ];
    Ok((checks, notes))
}

fn century_window(table: &EphemerisTable) -> Result<Body> {
    let (mercury, earth) = observation::pipeline_orbits(table, 0.0, 0.0)?;
    let hits: Vec<i64> = (1..1000).filter(|&n| century_window_check(0, n, &mercury.planar, &earth.planar)).collect();
    let first = hits.first().copied().map_or(f64::NAN, |n| n as f64);
    let checks = vec![
        Check::within("window_solutions", hits.len() as f64, 1.0, 0.0),
        Check::within("window_l2_minus_l1", first, 415.0, 0.0),
    ];
    Ok((checks, Vec::new()))
}

fn third_law(table: &EphemerisTable) -> Result<Body> {
    let c = table.c();
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for k in [MERCURY, VENUS, EARTH, MARS, SATURN] {
        let p = table.get(k)?;
        let ell = third_kepler(p, c, KeplerVariant::Elliptic)?;
        let circ = third_kepler(p, c, KeplerVariant::Circular)?;
        checks.push(Check::within(format!("gm_over_c2_m_{}", p.name), ell / (c * c), 1477.0, 1.0));
        // (circular − elliptic)/elliptic ≈ −ω²a²/c²
        let slope = (circ - ell) / ell / p.velocity_parameter();
        checks.push(Check::between(format!("circular_slope_{}", p.name), slope, -2.0, -0.5));
        notes.push(format!("{}: circular/elliptic − 1 = {:.3e}", p.name, circ / ell - 1.0));
    }
    Ok((checks, notes))
}

fn tight() -> StepControl {
    StepControl::with_tolerances(1e-12, 1e-14)
}

fn oracle_equivalence(table: &EphemerisTable, opts: Options) -> Result<Body> {
    let orbit = RcnOrbit::for_body(table, MERCURY)?;
    let start = orbit.state_at_time(0.0);
    let run = propagate(&start, Scaling::for_orbit(&orbit), orbit.period(), &tight())?;
    let q0 = conserved_from_state(&start, orbit.mu, orbit.c)?;
    let stride = if opts.quick { 4 } else { 1 };
    let mut radius: f64 = 0.0;
    let (mut de, mut dm): (f64, f64) = (0.0, 0.0);
    for s in run.samples().iter().step_by(stride) {
        let closed = orbit.state_at_time(s.t);
        radius = radius.max((s.radius() / closed.radius() - 1.0).abs());
        let (e, m) = q0.relative_drift(&conserved_from_state(s, orbit.mu, orbit.c)?);
        de = de.max(e);
        dm = dm.max(m);
    }
    let checks = vec![
        Check::at_most("max_relative_radius_error", radius, 1e-6),
        Check::at_most("energy_drift", de, 1e-9),
        Check::at_most("angular_momentum_drift", dm, 1e-9),
    ];
    Ok((checks, vec![format!("{} accepted steps", run.solution.t.len())]))
}

fn proper_time(table: &EphemerisTable, opts: Options) -> Result<Body> {
    let c = table.c();
    let o = ProperKeplerOrbit::from_elements(table.get(MERCURY)?, c, KeplerVariant::Classical)?;
    let n = if opts.quick { 200 } else { 2000 };
    let residual = (0..n)
        .map(|k| o.orbit_equation_residual(o.phi0 + 2.0 * PI * k as f64 / n as f64).abs())
        .fold(0.0, f64::max);

    let path = propagate_proper_kepler(&o, o.period(), &tight())?;
    let (e0, m0) = proper_constants(&path[0].1, &path[0].2, o.mu);
    let (mut de, mut dm): (f64, f64) = (0.0, 0.0);
    for (_, x, w) in &path {
        let (e, m) = proper_constants(x, w, o.mu);
        de = de.max((e / e0 - 1.0).abs());
        dm = dm.max((m - m0).norm() / m0.norm());
    }

    let (x, w) = o.state_at_tau(0.0);
    let start = WorldlineSample::new(0.0, x, w / o.dt_dtau(x.norm(), c));
    let geo = propagate_geodesic(&start, o.mu, c, o.a, 1.0 / o.mean_motion(), o.period(), &tight())?;
    let norm = (0..geo.len()).map(|i| geo.norm_defect(i).abs()).fold(0.0, f64::max);

    let checks = vec![
        Check::at_most("orbit_equation_residual", residual, 1e-12),
        Check::at_most("proper_energy_drift", de, 1e-10),
        Check::at_most("proper_angular_momentum_drift", dm, 1e-10),
        Check::at_most("geodesic_norm_defect", norm, 1e-9),
    ];
    Ok((checks, Vec::new()))
}

fn retarded_reductions(opts: Options) -> Result<Body> {
    let c = crate::ephemeris::SPEED_OF_LIGHT;
    let gm = 1.327_124_4e20;
    let coupling = Coupling::from_gm(gm);
    let sun = StaticWorldline { x: Vector3::zeros() };
    let mut rng = ChaCha8Rng::seed_from_u64(20);

    let (mut pot, mut field): (f64, f64) = (0.0, 0.0);
    for _ in 0..if opts.quick { 10 } else { 100 } {
        let x = Vector3::new(rng.gen_range(-1e11..1e11), rng.gen_range(-1e11..1e11), rng.gen_range(-1e10..1e10));
        let obs = SpacetimeEvent::new(rng.gen_range(0.0..1e7), x);
        let r = x.norm();
        let a = lw_potential(&obs, &sun, coupling, c)?;
        pot = pot.max((a.a[0] / (gm / r) - 1.0).abs() + a.a[1..].iter().map(|v| v.abs()).sum::<f64>() / (gm / r));
        let f = field_strength(&obs, &sun, coupling, c, FieldMode::Analytic)?;
        let g = gm / (r * r);
        for i in 1..4 {
            field = field.max((f.get(i, 0) + gm * x[i - 1] / r.powi(3)).abs() / g);
        }
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            field = field.max(f.get(i, j).abs() / g);
        }
    }

    let probes: Vec<SpacetimeEvent> = (0..4)
        .map(|k| SpacetimeEvent::new(k as f64, Vector3::new(3e9 + 1e8 * k as f64, -1e9, 5e8 * k as f64)))
        .collect();
    let moving: [(&str, Box<dyn Worldline>); 2] = [
        ("uniform", Box::new(UniformWorldline { x0: Vector3::zeros(), u: Vector3::new(0.3 * c, 0.1 * c, 0.0), t0: 0.0 })),
        ("circular", Box::new(CircularWorldline { center: Vector3::zeros(), radius: 1e9, omega: 0.1, phase: 0.0 })),
    ];

    let mut checks = vec![
        Check::at_most("static_potential_relative_error", pot, 4.0 * f64::EPSILON),
        Check::at_most("static_field_relative_error", field, 4.0 * f64::EPSILON),
    ];
    let mut notes = Vec::new();
    for (name, src) in &moving {
        let rep = gauge_residual(src.as_ref(), coupling, c, &probes, 4e8, 4)?;
        checks.push(Check::between(format!("gauge_order_{name}"), rep.min_order(), 1.8, f64::INFINITY));
        notes.push(format!("gauge {name}: residuals {:?}", rep.max_residuals));
    }

    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let u = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)) * c;
        let src: Box<dyn Worldline> = if k % 2 == 0 {
            Box::new(UniformWorldline { x0: Vector3::new(rng.gen_range(-1e9..1e9), 0.0, 0.0), u, t0: 0.0 })
        } else {
            let radius = rng.gen_range(1e8..1e9);
            // keep the source below 0.9c
            let omega = rng.gen_range(0.01..0.9) * c / radius;
            Box::new(CircularWorldline { center: Vector3::zeros(), radius, omega, phase: rng.gen_range(0.0..2.0 * PI) })
        };
        let obs = SpacetimeEvent::new(0.0, Vector3::new(rng.gen_range(2e9..3e9), rng.gen_range(-1e9..1e9), 0.0));
        let f = field_strength(&obs, src.as_ref(), coupling, c, FieldMode::Analytic)?;
        let v = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)) * c;
        let u4 = four_velocity(&v, c);
        let scale = f.norm() * u4.iter().map(|x| x * x).sum::<f64>();
        worst = worst.max(contraction_identity(&f, &u4).abs() / scale);
    }
    checks.push(Check::at_most("contraction_relative", worst, 1e-12));
    Ok((checks, notes))
}

fn term_estimates(table: &EphemerisTable, opts: Options) -> Result<Body> {
    let c = table.c();
    let p = table.get(MERCURY)?;
    let o = ProperKeplerOrbit::from_elements(p, c, KeplerVariant::Classical)?;
    let omega = p.angular_frequency(c);
    let n = if opts.quick { 90 } else { 720 };
    let mut actual = [0.0f64; 4];
    let mut estimate = [0.0f64; 4];
    for k in 0..n {
        let t = o.term_estimates(o.phi0 + 2.0 * PI * k as f64 / n as f64, c, omega);
        for i in 0..4 {
            actual[i] = actual[i].max(t.actual()[i]);
            estimate[i] = estimate[i].max(t.estimates()[i]);
        }
    }
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for i in 0..4 {
        checks.push(Check::at_most(format!("term {}", TERM_NAMES[i]), actual[i], 3e-7));
        checks.push(Check::at_most(format!("estimate {}", TERM_NAMES[i]), estimate[i], 3e-7));
        notes.push(format!("{}: max term / max estimate = {:.4}", TERM_NAMES[i], actual[i] / estimate[i]));
    }
    Ok((checks, notes))
}

fn comparison_identity(table: &EphemerisTable, opts: Options) -> Result<Body> {
    let p = table.get(MERCURY)?;
    let n = if opts.quick { 416 } else { 4151 };
    let end = 415.0 * 2.0 * PI;
    let phis: Vec<f64> = (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect();
    let pts = precession_comparison(p, &phis)?;
    let defect = pts.iter().map(|q| q.defect).fold(0.0, f64::max);
    let bound_excess = pts.iter().map(|q| q.remainder.abs() - q.remainder_bound).fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![Check::at_most("identity_defect", defect, 1e-10)];
    let notes = vec![format!("max(|remainder| − bound) = {bound_excess:.3e}")];
    Ok((checks, notes))
}
