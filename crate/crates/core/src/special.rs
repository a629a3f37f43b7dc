//! Small special-function helpers: compensated exponentials and the
//! generalized exponential integral for complex arguments.

use num_complex::Complex64;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `e^{-x} - 1 + x` without cancellation for small `x`.
pub fn comp2(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        (-x).exp_m1() + x
    }
}

/// `1 - e^{-x}`.
pub fn comp1(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Complex `e^{-z} - 1 + z`.
pub fn comp2_c(z: Complex64) -> Complex64 {
    if z.norm() < 0.1 {
        // Σ_{k≥2} (-z)^k / k!
        let mut term = z * z * 0.5;
        let mut sum = term;
        for k in 3..14 {
            term = -term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        (-z).exp() - 1.0 + z
    }
}

/// Complex `1 - e^{-z}`.
pub fn comp1_c(z: Complex64) -> Complex64 {
    if z.norm() < 0.1 {
        let mut term = z;
        let mut sum = term;
        for k in 2..14 {
            term = -term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        1.0 - (-z).exp()
    }
}

/// `E_p(z) = ∫_1^∞ e^{-zv} v^{-p} dv` for non-integer `p > 0` and `Re z > 0`,
/// by continued fraction (modified Lentz). Intended for `|z| ≥ 1`.
fn expint_cf(p: f64, z: Complex64) -> Complex64 {
    let tiny = 1e-300;
    let mut b = z + p;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..5000 {
        let an = -(i as f64) * (p - 1.0 + i as f64);
        b += 2.0;
        d = 1.0 / (d * an + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// `T_a(z) = ∫_1^∞ (e^{-zv} - 1 + zv) v^{-1-a} dv` for `a ∈ (1, 2)`.
pub fn tail_comp2(a: f64, z: Complex64) -> Complex64 {
    if z.norm() <= 1.0 {
        // Γ(-a) z^a - Σ_{k≥2} (-z)^k / (k! (k - a))
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = z; // (-z)^k / k! built incrementally
        pow = -pow;
        for k in 2..40 {
            pow = -pow * z / k as f64;
            let term = pow / (k as f64 - a);
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        gamma(-a) * z.powf(a) - sum
    } else {
        expint_cf(1.0 + a, z) - 1.0 / a + z / (a - 1.0)
    }
}

/// `T_a(y)/y` for real `y > 0`, without underflow as `y → 0`.
pub fn tail_comp2_over_z(a: f64, y: f64) -> f64 {
    if y <= 1.0 {
        // Γ(-a) y^{a-1} - Σ_{k≥2} (-1)^k y^{k-1} / (k! (k - a))
        let mut sum = 0.0;
        let mut pow = 1.0; // (-1)^k y^{k-1} / k!
        for k in 2..40 {
            pow = if k == 2 { y / 2.0 } else { -pow * y / k as f64 };
            let term = pow / (k as f64 - a);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        gamma(-a) * y.powf(a - 1.0) - sum
    } else {
        tail_comp2(a, Complex64::new(y, 0.0)).re / y
    }
}

/// `T1_a(z) = ∫_1^∞ (1 - e^{-zv}) v^{-a} dv` for `a ∈ (1, 2)`.
pub fn tail_comp1(a: f64, z: Complex64) -> Complex64 {
    if z.norm() <= 1.0 {
        // -Γ(1-a) z^{a-1} + Σ_{k≥1} (-z)^k / (k! (k + 1 - a))
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        for k in 1..40 {
            pow = -pow * z / k as f64;
            let term = pow / (k as f64 + 1.0 - a);
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        -gamma(1.0 - a) * z.powf(a - 1.0) + sum
    } else {
        1.0 / (a - 1.0) - expint_cf(a, z)
    }
}
