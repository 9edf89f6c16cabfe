//! Dormand–Prince 5(4) with its free fourth-order interpolant, event
//! location on the interpolant, a fixed-step driver for order studies, and a
//! method-of-steps driver for systems with state-dependent delays.
//!
//! States are plain `&[f64]` slices. Callers that integrate physical orbits
//! should rescale to O(1) units first; see `rcn_orbit::propagate`.

use thiserror::Error;

use crate::roots::{self, RootError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({steps}) exceeded at t={t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("right-hand side is not finite at t={t}")]
    NonFiniteDerivative { t: f64 },
    #[error("history lookup at t={t} outside the covered range [{start}, {end}]")]
    HistoryUnderrun { t: f64, start: f64, end: f64 },
    #[error("invalid step control: {0}")]
    InvalidControl(&'static str),
    #[error("event location failed: {0}")]
    EventLocation(#[from] RootError),
}

/// Local error control and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// `None` picks a starting step from the problem's scales.
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-10, atol: 1e-12, initial_step: None, max_step: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl StepControl {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        StepControl { rtol, atol, ..Default::default() }
    }

    fn check(&self) -> Result<(), IntegrationError> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(IntegrationError::InvalidControl("tolerances must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(IntegrationError::InvalidControl("max_step must be positive"));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(IntegrationError::InvalidControl("initial_step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Negative to positive.
    Rising,
    Falling,
    Any,
}

/// A scalar event function g(t, y). A root of g in the requested direction is
/// logged; a terminal event also ends the integration there.
pub struct EventSpec<'a> {
    pub function: Box<dyn Fn(f64, &[f64]) -> f64 + 'a>,
    pub direction: Direction,
    pub terminal: bool,
}

impl<'a> EventSpec<'a> {
    pub fn new(function: impl Fn(f64, &[f64]) -> f64 + 'a, direction: Direction, terminal: bool) -> Self {
        EventSpec { function: Box::new(function), direction, terminal }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Position of the spec in the list passed to [`integrate`].
    pub index: usize,
    pub t: f64,
    pub state: Vec<f64>,
    /// g evaluated on the interpolant at `t`.
    pub residual: f64,
}

/// Interpolation data for one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.r[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    /// Time derivative of the interpolant.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [_, r2, r3, r4, r5] = &self.r;
        (0..r2.len())
            .map(|i| {
                (r2[i] + (1.0 - 2.0 * th) * r3[i] + th * (2.0 - 3.0 * th) * r4[i]
                    + 2.0 * th * th1 * (th1 - th) * r5[i])
                    / self.h
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted steps, their interpolants and the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
    pub events: Vec<Event>,
    pub stats: Stats,
    /// True when a terminal event ended the run before `t_end`.
    pub terminated: bool,
}

impl Solution {
    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("solution has at least the initial point")
    }

    pub fn final_state(&self) -> &[f64] {
        self.y.last().expect("solution has at least the initial point")
    }

    fn segment_for(&self, t: f64) -> Option<&DenseSegment> {
        locate(&self.segments, t)
    }

    /// Dense output at `t` inside the integrated range.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        if self.segments.is_empty() {
            return (t == self.t[0]).then(|| self.y[0].clone());
        }
        self.segment_for(t).map(|s| s.eval(t))
    }

    pub fn eval_derivative(&self, t: f64) -> Option<Vec<f64>> {
        self.segment_for(t).map(|s| s.derivative(t))
    }
}

fn locate(segments: &[DenseSegment], t: f64) -> Option<&DenseSegment> {
    let first = segments.first()?;
    let last = segments.last()?;
    let forward = first.h > 0.0;
    let (lo, hi) = if forward { (first.t0, last.t1()) } else { (last.t1(), first.t0) };
    let slack = 1e-12 * (hi - lo).abs().max(hi.abs());
    if t < lo - slack || t > hi + slack {
        return None;
    }
    // first segment whose end lies at or beyond t (in the integration direction)
    let idx = segments.partition_point(|s| if forward { s.t1() < t } else { s.t1() > t });
    Some(&segments[idx.min(segments.len() - 1)])
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Stage storage for one Dormand–Prince step.
struct Stepper {
    n: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
}

enum StageFailure<E> {
    NonFinite(f64),
    Rhs(E),
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper { n, k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n], y1: vec![0.0; n] }
    }

    /// Stages 2..7 given k[0] = f(t, y). Leaves the 5th-order result in `y1`
    /// and f(t+h, y1) in k[6]; returns the number of evaluations.
    fn step<E, F>(&mut self, rhs: &mut F, t: f64, y: &[f64], h: f64) -> Result<usize, StageFailure<E>>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    {
        let n = self.n;
        let rows: [(f64, &[f64]); 6] = [
            (C2, &[A21]),
            (C3, &[A31, A32]),
            (C4, &[A41, A42, A43]),
            (C5, &[A51, A52, A53, A54]),
            (1.0, &[A61, A62, A63, A64, A65]),
            (1.0, &[A71, 0.0, A73, A74, A75, A76]),
        ];
        for (s, (c, a)) in rows.iter().enumerate() {
            let stage = s + 1;
            for i in 0..n {
                let mut acc = 0.0;
                for (j, aj) in a.iter().enumerate() {
                    acc += aj * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            if stage == 6 {
                self.y1.copy_from_slice(&self.tmp);
            }
            let after = &mut self.k[stage..];
            rhs(t + c * h, &self.tmp, &mut after[0]).map_err(StageFailure::Rhs)?;
            if after[0].iter().any(|v| !v.is_finite()) {
                return Err(StageFailure::NonFinite(t + c * h));
            }
        }
        Ok(6)
    }

    /// Weighted RMS norm of the embedded error estimate.
    fn error_norm(&self, y: &[f64], h: f64, ctrl: &StepControl) -> f64 {
        let k = &self.k;
        let mut sum = 0.0;
        for i in 0..self.n {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sk = ctrl.atol + ctrl.rtol * y[i].abs().max(self.y1[i].abs());
            sum += (e / sk) * (e / sk);
        }
        (sum / self.n as f64).sqrt()
    }

    fn dense(&self, t: f64, y: &[f64], h: f64) -> DenseSegment {
        let k = &self.k;
        let n = self.n;
        let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            let ydiff = self.y1[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            r[0][i] = y[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * k[6][i] - bspl;
            r[4][i] = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        DenseSegment { t0: t, h, r }
    }
}

/// Starting step from the scales of y and f(y).
fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, ctrl: &StepControl) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len() as f64;
    let sk = |i: usize| ctrl.atol + ctrl.rtol * y0[i].abs();
    let d0 = (y0.iter().enumerate().map(|(i, y)| (y / sk(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, f)| (f / sk(i)).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(ctrl.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(t0 + dir * h0, &y1, &mut f1);
    let d2 = (f1.iter().zip(f0).enumerate().map(|(i, (a, b))| ((a - b) / sk(i)).powi(2)).sum::<f64>() / n).sqrt() / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(ctrl.max_step)
}

/// Adaptive integration of y' = f(t, y) from `t0` to `t_end`.
///
/// `t_end < t0` integrates backwards. Every accepted step is recorded with
/// its interpolant; events are checked on each step and located with Brent's
/// method on the interpolant to `1e-12·|t_end − t0|`.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    ctrl: &StepControl,
    events: &[EventSpec<'_>],
) -> Result<Solution, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    ctrl.check()?;
    let n = y0.len();
    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        segments: Vec::new(),
        events: Vec::new(),
        stats: Stats::default(),
        terminated: false,
    };
    if t_end == t0 {
        return Ok(sol);
    }
    let dir = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    let event_tol = 1e-12 * span;

    let mut stepper = Stepper::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    rhs(t, &y, &mut stepper.k[0]);
    sol.stats.evaluations += 1;
    if stepper.k[0].iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteDerivative { t });
    }
    let mut h = match ctrl.initial_step {
        Some(h) => h.min(ctrl.max_step),
        None => {
            let f0 = stepper.k[0].clone();
            sol.stats.evaluations += 1;
            initial_step(&mut rhs, t0, &y, &f0, dir, ctrl)
        }
    };
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.function)(t, &y)).collect();
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    let mut wrapped = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), ()> {
        rhs(t, y, dy);
        Ok(())
    };

    loop {
        if sol.stats.accepted + sol.stats.rejected >= ctrl.max_steps {
            return Err(IntegrationError::MaxStepsExceeded { t, steps: ctrl.max_steps });
        }
        let remaining = (t_end - t).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h <= 10.0 * f64::EPSILON * t.abs().max(span) {
            return Err(IntegrationError::StepUnderflow { t, h });
        }
        let hs = dir * h;
        match stepper.step(&mut wrapped, t, &y, hs) {
            Ok(evals) => sol.stats.evaluations += evals,
            Err(StageFailure::NonFinite(ts)) => return Err(IntegrationError::NonFiniteDerivative { t: ts }),
            Err(StageFailure::Rhs(())) => unreachable!(),
        }
        let err = stepper.error_norm(&y, hs, ctrl);

        // PI step-size controller
        let beta = 0.04;
        let fac11 = err.powf(0.2 - 0.75 * beta);
        let mut fac = fac11 / fac_old.powf(beta) / 0.9;
        fac = fac.clamp(0.1, 5.0);
        if err <= 1.0 {
            fac_old = err.max(1e-4);
            let t_new = if last { t_end } else { t + hs };
            let segment = stepper.dense(t, &y, hs);
            let y_new = stepper.y1.clone();
            sol.stats.accepted += 1;

            // events on (t, t_new]
            let mut stop_at: Option<(f64, Vec<f64>)> = None;
            let mut found: Vec<Event> = Vec::new();
            for (idx, ev) in events.iter().enumerate() {
                let g_new = (ev.function)(t_new, &y_new);
                let g_old = g_prev[idx];
                let crosses = match ev.direction {
                    Direction::Rising => g_old < 0.0 && g_new >= 0.0,
                    Direction::Falling => g_old > 0.0 && g_new <= 0.0,
                    Direction::Any => (g_old < 0.0 && g_new >= 0.0) || (g_old > 0.0 && g_new <= 0.0),
                };
                g_prev[idx] = g_new;
                if !crosses {
                    continue;
                }
                let mut buf = vec![0.0; n];
                let root = roots::brent(
                    |s| {
                        segment.eval_into(s, &mut buf);
                        (ev.function)(s, &buf)
                    },
                    t,
                    t_new,
                    event_tol,
                    200,
                )?;
                let state = segment.eval(root.x);
                let residual = (ev.function)(root.x, &state);
                found.push(Event { index: idx, t: root.x, state: state.clone(), residual });
                if ev.terminal {
                    let earlier = match &stop_at {
                        Some((ts, _)) => (root.x - ts) * dir < 0.0,
                        None => true,
                    };
                    if earlier {
                        stop_at = Some((root.x, state));
                    }
                }
            }
            found.sort_by(|a, b| ((a.t - b.t) * dir).total_cmp(&0.0));
            if let Some((ts, ys)) = stop_at {
                found.retain(|e| (e.t - ts) * dir <= 0.0);
                sol.events.extend(found);
                // the interpolant spans the full step; the recorded range ends at ts
                sol.segments.push(segment);
                sol.t.push(ts);
                sol.y.push(ys);
                sol.terminated = true;
                return Ok(sol);
            }
            sol.events.extend(found);
            sol.segments.push(segment);
            // FSAL: last stage is f(t_new, y_new)
            let (first, rest) = stepper.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            t = t_new;
            y.copy_from_slice(&y_new);
            sol.t.push(t);
            sol.y.push(y.clone());
            if last {
                return Ok(sol);
            }
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            h = h_new.min(ctrl.max_step);
            last_rejected = false;
        } else {
            sol.stats.rejected += 1;
            h /= (fac11 / 0.9).min(10.0);
            last_rejected = true;
        }
    }
}

/// Fixed-step integration with the fifth-order solution. Returns the state at
/// `t_end`. Used for order verification.
pub fn integrate_fixed<F>(mut rhs: F, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Result<Vec<f64>, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if steps == 0 {
        return Err(IntegrationError::InvalidControl("steps must be positive"));
    }
    let h = (t_end - t0) / steps as f64;
    let mut stepper = Stepper::new(y0.len());
    let mut y = y0.to_vec();
    let mut wrapped = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), ()> {
        rhs(t, y, dy);
        Ok(())
    };
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let _ = wrapped(t, &y, &mut stepper.k[0]);
        match stepper.step(&mut wrapped, t, &y, h) {
            Ok(_) => {}
            Err(StageFailure::NonFinite(ts)) => return Err(IntegrationError::NonFiniteDerivative { t: ts }),
            Err(StageFailure::Rhs(())) => unreachable!(),
        }
        y.copy_from_slice(&stepper.y1);
    }
    Ok(y)
}

/// Past states for a delayed system: a prescribed initial function on
/// `[start, t0]` followed by the interpolants of accepted steps.
pub struct DelayHistory<'a> {
    start: f64,
    t0: f64,
    initial: Box<dyn Fn(f64) -> Vec<f64> + 'a>,
    initial_derivative: Option<Box<dyn Fn(f64) -> Vec<f64> + 'a>>,
    segments: Vec<DenseSegment>,
}

impl<'a> DelayHistory<'a> {
    /// `initial(t)` must be defined on `[start, t0]`.
    pub fn new(start: f64, t0: f64, initial: impl Fn(f64) -> Vec<f64> + 'a) -> Self {
        DelayHistory { start, t0, initial: Box::new(initial), initial_derivative: None, segments: Vec::new() }
    }

    /// Derivative of the initial function, used by [`DelayHistory::eval_derivative`]
    /// before `t0`. Without it a central difference is taken.
    pub fn with_initial_derivative(mut self, d: impl Fn(f64) -> Vec<f64> + 'a) -> Self {
        self.initial_derivative = Some(Box::new(d));
        self
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    /// Latest time covered.
    pub fn end(&self) -> f64 {
        self.segments.last().map_or(self.t0, |s| s.t1())
    }

    pub fn segments(&self) -> &[DenseSegment] {
        &self.segments
    }

    /// State at a past time `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrationError> {
        let end = self.end();
        let slack = 1e-12 * (end - self.start).abs().max(end.abs());
        if t < self.start - slack || t > end + slack {
            return Err(IntegrationError::HistoryUnderrun { t, start: self.start, end });
        }
        if t <= self.t0 {
            return Ok((self.initial)(t));
        }
        Ok(locate(&self.segments, t).expect("t inside the recorded range").eval(t))
    }

    /// Time derivative of the state at a past time `t`.
    pub fn eval_derivative(&self, t: f64) -> Result<Vec<f64>, IntegrationError> {
        let end = self.end();
        let span = (end - self.start).abs().max(end.abs());
        let slack = 1e-12 * span;
        if t < self.start - slack || t > end + slack {
            return Err(IntegrationError::HistoryUnderrun { t, start: self.start, end });
        }
        if t <= self.t0 {
            if let Some(d) = &self.initial_derivative {
                return Ok(d(t));
            }
            let h = 1e-6 * (self.t0 - self.start).max(f64::EPSILON * span);
            let (a, b) = ((t - h).max(self.start), (t + h).min(self.t0));
            let ya = (self.initial)(a);
            let yb = (self.initial)(b);
            return Ok(ya.iter().zip(&yb).map(|(p, q)| (q - p) / (b - a)).collect());
        }
        Ok(locate(&self.segments, t).expect("t inside the recorded range").derivative(t))
    }
}

/// Output of [`integrate_delayed`].
pub struct DelaySolution<'a> {
    pub history: DelayHistory<'a>,
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: Stats,
    /// Smallest delay reported by the right-hand side.
    pub min_delay: f64,
}

/// Method of steps for y'(t) = f(t, y(t), history).
///
/// The right-hand side reads past states from the history and returns the
/// smallest delay it used. Steps are capped at half of the smallest delay
/// seen so far, so every lookup falls on an already accepted step. A lookup
/// past the covered range rejects the step and halves it.
pub fn integrate_delayed<'a, F>(
    mut rhs: F,
    mut history: DelayHistory<'a>,
    y0: &[f64],
    t_end: f64,
    ctrl: &StepControl,
) -> Result<DelaySolution<'a>, IntegrationError>
where
    F: FnMut(f64, &[f64], &DelayHistory<'a>, &mut [f64]) -> Result<f64, IntegrationError>,
{
    ctrl.check()?;
    let t0 = history.t0;
    if t_end < t0 {
        return Err(IntegrationError::InvalidControl("delayed integration runs forward only"));
    }
    let n = y0.len();
    let mut stepper = Stepper::new(n);
    let mut stats = Stats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut ts = vec![t0];
    let mut ys = vec![y.clone()];
    let mut min_delay = rhs(t, &y, &history, &mut stepper.k[0])?;
    stats.evaluations += 1;
    if !(min_delay > 0.0) {
        return Err(IntegrationError::InvalidControl("delays must be positive"));
    }
    let mut h = ctrl.initial_step.unwrap_or(0.01 * min_delay).min(ctrl.max_step);
    let mut fac_old: f64 = 1e-4;

    while t < t_end {
        if stats.accepted + stats.rejected >= ctrl.max_steps {
            return Err(IntegrationError::MaxStepsExceeded { t, steps: ctrl.max_steps });
        }
        h = h.min(0.5 * min_delay).min(ctrl.max_step);
        let mut last = false;
        if h >= (t_end - t) * (1.0 - 1e-12) {
            h = t_end - t;
            last = true;
        }
        if h <= 10.0 * f64::EPSILON * t.abs().max(t_end - t0) {
            return Err(IntegrationError::StepUnderflow { t, h });
        }
        let mut seen = min_delay;
        let result = {
            let hist = &history;
            let mut wrapped = |s: f64, ys: &[f64], dy: &mut [f64]| -> Result<(), IntegrationError> {
                let d = rhs(s, ys, hist, dy)?;
                seen = seen.min(d);
                Ok(())
            };
            stepper.step(&mut wrapped, t, &y, h)
        };
        match result {
            Ok(e) => stats.evaluations += e,
            Err(StageFailure::NonFinite(s)) => return Err(IntegrationError::NonFiniteDerivative { t: s }),
            Err(StageFailure::Rhs(IntegrationError::HistoryUnderrun { t: tl, start, end })) => {
                if tl < start {
                    return Err(IntegrationError::HistoryUnderrun { t: tl, start, end });
                }
                stats.rejected += 1;
                min_delay = min_delay.min(seen);
                h *= 0.5;
                continue;
            }
            Err(StageFailure::Rhs(e)) => return Err(e),
        }
        min_delay = min_delay.min(seen);
        let err = stepper.error_norm(&y, h, ctrl);
        let fac11 = err.powf(0.2 - 0.75 * 0.04);
        let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
        if err <= 1.0 {
            fac_old = err.max(1e-4);
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + h };
            history.segments.push(stepper.dense(t, &y, h));
            let (first, rest) = stepper.k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            t = t_new;
            y.copy_from_slice(&stepper.y1);
            ts.push(t);
            ys.push(y.clone());
            h /= fac;
        } else {
            stats.rejected += 1;
            h /= (fac11 / 0.9).min(10.0);
        }
    }
    Ok(DelaySolution { history, t: ts, y: ys, stats, min_delay })
}
