//! Adaptive Gauss–Kronrod (7/15) quadrature, a tanh-sinh rule for endpoint
//! singularities, and the semi-infinite map `x = a + (1 - t)/t`.
//!
//! The adaptive driver is generic over [`QuadValue`] so the same code path
//! integrates real and complex integrands.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
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

#[allow(clippy::excessive_precision)]
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

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Values an integrand may return: a real or complex scalar.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// An integral estimate with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad<T> {
    pub value: T,
    pub error: f64,
    pub evals: usize,
}

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        Self { abs_tol: 1e-14, rel_tol: 1e-11, max_intervals: 2000 }
    }
}

impl QuadOpts {
    pub fn rel(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value)
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        e = resasc * (200.0 * e / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * resabs);
    }
    e
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

/// One 15-point Kronrod panel on `[a, b]`; returns (value, error).
pub fn gk15<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut gauss = fc * WG[3];
    let mut kron = fc * WGK[7];
    let mut resabs = fc.magnitude() * WGK[7];
    let mut fv1 = [T::zero(); 7];
    let mut fv2 = [T::zero(); 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kron = kron + (f1 + f2) * WGK[j];
        resabs += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kron * 0.5;
    let mut resasc = WGK[7] * (fc - mean).magnitude();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude());
    }
    let ah = h.abs();
    let err = rescale_error(((kron - gauss) * h).magnitude(), resabs * ah, resasc * ah);
    (kron * h, err)
}

/// Globally adaptive bisection on `[a, b]` driven by the largest local error.
pub fn integrate<T: QuadValue, F: Fn(f64) -> T>(f: F, a: f64, b: f64, opts: QuadOpts) -> Result<Quad<T>> {
    if a == b {
        return Ok(Quad { value: T::zero(), error: 0.0, evals: 0 });
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut segs = vec![Segment { a, b, value: v0, error: e0 }];
    let mut total = v0;
    let mut total_err = e0;
    let mut evals = 15;
    loop {
        if !total.is_finite_value() {
            return Err(Error::Quadrature { lo: a, hi: b, error: f64::INFINITY });
        }
        if total_err <= opts.target(total.magnitude()) {
            break;
        }
        if segs.len() >= opts.max_intervals {
            return Err(Error::Quadrature { lo: a, hi: b, error: total_err });
        }
        let (idx, _) =
            segs.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.error > acc.1 { (i, s.error) } else { acc });
        let worst = segs.swap_remove(idx);
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a.min(worst.b) || m >= worst.a.max(worst.b) {
            // Interval cannot be split further in floating point.
            segs.push(worst);
            if total_err <= 1e3 * opts.target(total.magnitude()) {
                break;
            }
            return Err(Error::Quadrature { lo: a, hi: b, error: total_err });
        }
        let (vl, el) = gk15(&f, worst.a, m);
        let (vr, er) = gk15(&f, m, worst.b);
        evals += 30;
        total = total - worst.value + vl + vr;
        segs.push(Segment { a: worst.a, b: m, value: vl, error: el });
        segs.push(Segment { a: m, b: worst.b, value: vr, error: er });
        // Re-summing avoids drift from repeated subtraction.
        if segs.len() % 64 == 0 {
            total = segs.iter().fold(T::zero(), |s, g| s + g.value);
        }
        total_err = segs.iter().map(|s| s.error).sum();
    }
    let value = segs.iter().fold(T::zero(), |s, g| s + g.value);
    Ok(Quad { value, error: total_err, evals })
}

/// `∫_a^∞ f(x) dx` via `x = a + (1 - t)/t` on `(0, 1]`.
pub fn integrate_to_inf<T: QuadValue, F: Fn(f64) -> T>(f: F, a: f64, opts: QuadOpts) -> Result<Quad<T>> {
    let g = |t: f64| {
        if t <= 0.0 {
            return T::zero();
        }
        let x = a + (1.0 - t) / t;
        let v = f(x);
        if v.magnitude() == 0.0 {
            T::zero()
        } else {
            v * (1.0 / (t * t))
        }
    };
    integrate(g, 0.0, 1.0, opts).map_err(|e| match e {
        Error::Quadrature { error, .. } => Error::Quadrature { lo: a, hi: f64::INFINITY, error },
        other => other,
    })
}

/// Double-exponential (tanh-sinh) rule on `[a, b]`.
///
/// `f` receives `(x, x - a, b - x)` with the endpoint distances computed
/// without cancellation, so integrands singular at an endpoint keep full
/// relative accuracy there.
pub fn tanh_sinh<F: Fn(f64, f64, f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Quad<f64>> {
    tanh_sinh_tol(f, a, b, rel_tol, 0.0)
}

/// [`tanh_sinh`] that also stops once the level difference is below `abs_tol`.
pub fn tanh_sinh_tol<F: Fn(f64, f64, f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quad<f64>> {
    let half = 0.5 * (b - a);
    let node = |t: f64| -> Option<(f64, f64, f64, f64)> {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        let da = 2.0 * half / (1.0 + (-2.0 * u).exp());
        let db = 2.0 * half / (1.0 + (2.0 * u).exp());
        if da <= 0.0 || db <= 0.0 || !w.is_finite() {
            return None;
        }
        let x = if t <= 0.0 { a + da } else { b - db };
        Some((x, da, db, w * half))
    };
    let eval = |t: f64| -> f64 {
        match node(t) {
            Some((x, da, db, w)) if w > 0.0 => {
                let v = f(x, da, db);
                if v.is_finite() {
                    v * w
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    };
    // Beyond |t| = 6.5 the node distances to the endpoints underflow.
    let tmax = 6.5;
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= tmax {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut evals = 2 * k - 1;
    let mut last_err = f64::INFINITY;
    for _level in 0..12 {
        h *= 0.5;
        let mut add = 0.0;
        let mut j = 1;
        while (j as f64) * h <= tmax {
            let t = j as f64 * h;
            add += eval(t) + eval(-t);
            evals += 2;
            j += 2;
        }
        sum += add;
        let next = sum * h;
        last_err = (next - estimate).abs();
        estimate = next;
        if last_err <= (rel_tol * estimate.abs()).max(abs_tol) || last_err < 1e-300 {
            return Ok(Quad { value: estimate, error: last_err, evals });
        }
    }
    Err(Error::Quadrature { lo: a, hi: b, error: last_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_is_exact_for_degree_22_and_gauss_for_13() {
        for deg in 0..=22 {
            let (v, _) = gk15(&|x: f64| x.powi(deg), 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((v - exact).abs() < 1e-14, "degree {deg}: {v} vs {exact}");
        }
        for deg in 0..=13 {
            let mut g = 0.0;
            for j in 0..4 {
                let x = XGK[2 * j + 1];
                let w = WG[j];
                g += if j == 3 { w * x.powi(deg) } else { w * (x.powi(deg) + (-x).powi(deg)) };
            }
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((g - exact).abs() < 1e-14, "gauss degree {deg}");
        }
        let total: f64 = WGK[..7].iter().sum::<f64>() * 2.0 + WGK[7];
        assert!((total - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_oscillation_and_peaks() {
        let q = integrate(|x: f64| (50.0 * x).sin() * x.exp(), 0.0, 2.0, QuadOpts::rel(1e-12)).unwrap();
        let exact = {
            // ∫ e^x sin(kx) = e^x (sin kx - k cos kx)/(1+k²)
            let k: f64 = 50.0;
            let g = |x: f64| x.exp() * ((k * x).sin() - k * (k * x).cos()) / (1.0 + k * k);
            g(2.0) - g(0.0)
        };
        assert!((q.value - exact).abs() < 1e-12 * exact.abs().max(1.0));
        let q = integrate(|x: f64| 1.0 / (1e-4 + (x - 0.3).powi(2)), 0.0, 1.0, QuadOpts::rel(1e-10)).unwrap();
        let exact = 100.0 * ((0.7f64 / 1e-2).atan() + (0.3f64 / 1e-2).atan());
        assert!((q.value / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite_heavy_tail() {
        let q = integrate_to_inf(|x: f64| x.powf(-2.5), 1.0, QuadOpts::rel(1e-11)).unwrap();
        assert!((q.value - 1.0 / 1.5).abs() < 1e-11);
        let q = integrate_to_inf(|x: f64| (-x).exp(), 0.0, QuadOpts::rel(1e-12)).unwrap();
        assert!((q.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_integrand() {
        let q =
            integrate(|x: f64| Complex64::new(0.0, x).exp(), 0.0, std::f64::consts::PI, QuadOpts::default()).unwrap();
        assert!((q.value - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn tanh_sinh_endpoint_singularities() {
        // ∫_0^1 x^{-1/2} = 2, ∫_0^1 ln x = -1, ∫_0^1 (1-x)^{-0.9} = 10.
        let q = tanh_sinh(|_, da, _| da.powf(-0.5), 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value - 2.0).abs() < 1e-11, "{}", q.value);
        let q = tanh_sinh(|_, da, _| da.ln(), 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value + 1.0).abs() < 1e-11);
        let q = tanh_sinh(|_, _, db| db.powf(-0.9), 0.0, 1.0, 1e-10).unwrap();
        assert!((q.value - 10.0).abs() < 1e-7, "{}", q.value);
    }

    #[test]
    fn divergent_integral_reports_error() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, QuadOpts { max_intervals: 200, ..QuadOpts::default() });
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
