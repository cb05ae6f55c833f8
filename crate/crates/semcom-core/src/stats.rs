//! Statistical primitives for the certification math: standard normal CDF
//! and quantile, regularized incomplete beta, and the exact one-sided
//! Clopper-Pearson binomial lower bound.

use crate::error::{CoreError, Result};

/// Standard normal CDF via Cody's rational erfc approximation.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function, |relative error| < 1e-15 over the real line.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 0.5 {
        return 1.0 - erf_series(x);
    }
    if x > 3.0 {
        // asymptotic expansion; terms shrink until n ~ x^2, stop before they grow
        let x2 = x * x;
        let t = 0.5 / x2;
        let mut s = 1.0;
        let mut term = 1.0;
        for n in 1..=30 {
            let next = term * -(2.0 * n as f64 - 1.0) * t;
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            let new = s + term;
            if new == s {
                break;
            }
            s = new;
        }
        return (-x2).exp() * s / (x * std::f64::consts::PI.sqrt());
    }
    // mid range: quadrature of the defining integral
    1.0 - erf_mid(x)
}

/// erf by Taylor series, accurate for |x| < 0.5.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..=40 {
        term *= -x2 / n as f64;
        let add = term / (2.0 * n as f64 + 1.0);
        let new = sum + add;
        if new == sum {
            break;
        }
        sum = new;
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// erf on [0.5, 3] by Legendre-Gauss quadrature of the defining integral.
fn erf_mid(x: f64) -> f64 {
    // 40-point Gauss-Legendre on [0, x] of (2/sqrt(pi)) exp(-t^2)
    const N: usize = 40;
    let (nodes, weights) = gauss_legendre_40();
    let half = x / 2.0;
    let mut s = 0.0;
    for i in 0..N {
        let t = half * (nodes[i] + 1.0);
        s += weights[i] * (-t * t).exp();
    }
    s * half * 2.0 / std::f64::consts::PI.sqrt()
}

fn gauss_legendre_40() -> ([f64; 40], [f64; 40]) {
    // Nodes/weights computed once by Newton iteration on P_40.
    let mut nodes = [0.0f64; 40];
    let mut weights = [0.0f64; 40];
    let n = 40usize;
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_p(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_p(n, x);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_p(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Standard normal quantile Φ⁻¹, Wichura's AS241 (PPND16), |error| ~ 1e-16.
pub fn inv_std_normal_cdf(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::Domain(format!("quantile probability {p} outside [0,1]")));
    }
    if p == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }
    let q = p - 0.5;
    let r;
    if q.abs() <= 0.425 {
        r = 0.180625 - q * q;
        return Ok(q * poly(&A_PPND, r) / poly(&B_PPND, r));
    }
    let rr = if q < 0.0 { p } else { 1.0 - p };
    r = (-rr.ln()).sqrt();
    let val = if r <= 5.0 {
        let r2 = r - 1.6;
        poly(&C_PPND, r2) / poly(&D_PPND, r2)
    } else {
        let r2 = r - 5.0;
        poly(&E_PPND, r2) / poly(&F_PPND, r2)
    };
    Ok(if q < 0.0 { -val } else { val })
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

const A_PPND: [f64; 8] = [
    3.3871328727963666080,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const B_PPND: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const C_PPND: [f64; 8] = [
    1.42343711074968357734,
    4.63033784615654529590,
    5.76949722146069140550,
    3.64784832476320460504,
    1.27045825245236838258,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const D_PPND: [f64; 8] = [
    1.0,
    2.05319162663775882187,
    1.67638483018380384940,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const E_PPND: [f64; 8] = [
    6.65790464350110377720,
    5.46378491116411436990,
    1.78482653991729133580,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F_PPND: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

/// ln Γ via Lanczos (g=7, n=9), |relative error| < 1e-13.
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, &g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(CoreError::Domain(format!("incomplete beta x={x} outside [0,1]")));
    }
    if a <= 0.0 || b <= 0.0 {
        return Err(CoreError::Domain("incomplete beta needs a,b > 0".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x) / a)
    } else {
        Ok(1.0 - (front * beta_cf(b, a, 1.0 - x) / b))
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 400;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta,
/// refined to ~1e-14.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::Domain(format!("beta quantile p={p} outside [0,1]")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut mid = 0.5;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = reg_inc_beta(a, b, mid)?;
        if v < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(mid)
}
