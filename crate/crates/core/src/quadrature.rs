//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate drops below `max(abs_tol, rel_tol·|I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature tolerance not met: estimated error {error:e} > requested {requested:e} after {subdivisions} subdivisions")]
    ToleranceNotMet { value: f64, error: f64, requested: f64, subdivisions: usize },
    #[error("integrand is not finite at x={x}")]
    NonFinite { x: f64 },
}

// Kronrod abscissae on [0, 1]; odd indices are the Gauss points.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadratureSettings {
    /// Absolute tolerance proportional to the integration span.
    pub fn span_scaled(span: f64, per_unit: f64) -> Self {
        QuadratureSettings { abs_tol: per_unit * span.abs(), rel_tol: 0.0, max_subdivisions: 2000 }
    }
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { abs_tol: 1e-12, rel_tol: 1e-12, max_subdivisions: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub subdivisions: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
/// Error scaling follows QUADPACK's `qk15`.
fn kronrod_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite { x: center });
    }
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = kronrod.abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite { x: x1 });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite { x: x2 });
        }
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    let value = kronrod * half;
    resabs *= h;
    resasc *= h;
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((value, err))
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, settings: QuadratureSettings) -> Result<Estimate, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0, subdivisions: 0 });
    }
    let mut evaluations = 15;
    let (v, e) = kronrod_panel(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut subdivisions = 0;

    loop {
        let requested = settings.abs_tol.max(settings.rel_tol * total.abs());
        if total_err <= requested {
            break;
        }
        if subdivisions >= settings.max_subdivisions {
            return Err(QuadratureError::ToleranceNotMet {
                value: total,
                error: total_err,
                requested,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel can no longer be split in floating point
            return Err(QuadratureError::ToleranceNotMet {
                value: total,
                error: total_err,
                requested,
                subdivisions,
            });
        }
        let (v1, e1) = kronrod_panel(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod_panel(&mut f, mid, worst.b)?;
        evaluations += 30;
        subdivisions += 1;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
        // resum to avoid drift from incremental updates
        total = heap.iter().map(|p| p.value).sum();
        total_err = heap.iter().map(|p| p.error).sum();
    }
    Ok(Estimate { value: total, error: total_err, evaluations, subdivisions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_normalized() {
        let k: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        let g: f64 = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_panel_exactness() {
        // Kronrod-15 integrates polynomials up to degree 22 exactly, Gauss-7 up to 13
        for deg in 0..=22 {
            let mut f = |x: f64| x.powi(deg);
            let (v, _) = kronrod_panel(&mut f, 0.0, 1.0).unwrap();
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((v - exact).abs() < 1e-14, "degree {deg}: {v} vs {exact}");
        }
        for deg in 0..=13 {
            let center: f64 = 0.5;
            let half = 0.5;
            let mut g = WG[3] * center.powi(deg);
            for j in 0..3 {
                let dx = half * XGK[2 * j + 1];
                g += WG[j] * ((center - dx).powi(deg) + (center + dx).powi(deg));
            }
            assert!((g * half - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "gauss degree {deg}");
        }
    }

    #[test]
    fn smooth_and_peaked_integrands() {
        let s = QuadratureSettings { abs_tol: 1e-13, rel_tol: 0.0, max_subdivisions: 500 };
        let r = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, s).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
        // narrow Lorentzian forces subdivision
        let w = 1e-3;
        let r = integrate(|x: f64| w / (x * x + w * w), -1.0, 1.0, s).unwrap();
        let exact = 2.0 * (1.0 / w).atan();
        assert!((r.value - exact).abs() < 1e-11, "{} vs {exact}", r.value);
        assert!(r.subdivisions > 5);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let s = QuadratureSettings::default();
        let f = |x: f64| x.exp();
        let a = integrate(f, 0.0, 1.0, s).unwrap().value;
        let b = integrate(f, 1.0, 0.0, s).unwrap().value;
        assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn impossible_tolerance_is_reported() {
        let s = QuadratureSettings { abs_tol: 1e-14, rel_tol: 0.0, max_subdivisions: 3 };
        let err = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, s);
        assert!(matches!(err, Err(QuadratureError::ToleranceNotMet { .. })));
    }
}
