//! Student-t and standard normal distribution functions.
//!
//! The t CDF goes through the regularized incomplete beta function, evaluated
//! with a modified-Lentz continued fraction. Tail probabilities are computed
//! directly (never as `1 - cdf`) so that small P values keep their relative
//! precision.

use core::f64::consts::{PI, SQRT_2};

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` together with its complement,
/// given both `x` and `y = 1 - x` so that neither loses precision.
pub fn inc_beta_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log(y);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        let v = front * beta_cf(a, b, x) / a;
        (v, 1.0 - v)
    } else {
        let w = front * beta_cf(b, a, y) / b;
        (1.0 - w, w)
    }
}

pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    inc_beta_pair(a, b, x, 1.0 - x).0
}

/// `P(T > s)` for `s >= 0`.
fn t_upper_tail(s: f64, dof: f64) -> f64 {
    if s == 0.0 {
        return 0.5;
    }
    if s.is_infinite() {
        return 0.0;
    }
    let s2 = s * s;
    let denom = dof + s2;
    let (ix, _) = inc_beta_pair(0.5 * dof, 0.5, dof / denom, s2 / denom);
    0.5 * ix
}

pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t < 0.0 {
        t_upper_tail(-t, dof)
    } else {
        1.0 - t_upper_tail(t, dof)
    }
}

/// Survival function `P(T > t)`.
pub fn student_t_sf(t: f64, dof: f64) -> f64 {
    student_t_cdf(-t, dof)
}

/// Two-sided P value `P(|T| >= |t|)`.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    (2.0 * t_upper_tail(t.abs(), dof)).min(1.0)
}

pub fn student_t_pdf(t: f64, dof: f64) -> f64 {
    let ln_c = libm::lgamma(0.5 * (dof + 1.0)) - libm::lgamma(0.5 * dof) - 0.5 * libm::log(dof * PI);
    libm::exp(ln_c - 0.5 * (dof + 1.0) * libm::log1p(t * t / dof))
}

/// Solves `P(T > s) = q` for `s >= 0`, `q in (0, 0.5]`.
fn t_upper_inverse(q: f64, dof: f64) -> f64 {
    if q >= 0.5 {
        return 0.0;
    }
    if q <= 0.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_upper_tail(hi, dof) > q {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = t_upper_tail(s, dof) - q;
        if f == 0.0 {
            return s;
        }
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s + f / student_t_pdf(s, dof);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-15 * s.max(1.0) || hi - lo <= 1e-15 * hi.max(1.0) {
            return next;
        }
        s = next;
    }
    s
}

/// Inverse CDF of Student's t.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p < 0.5 {
        -t_upper_inverse(p, dof)
    } else if p > 0.5 {
        t_upper_inverse(1.0 - p, dof)
    } else {
        0.0
    }
}

/// Inverse survival function: `s` with `P(T > s) = q`.
pub fn student_t_isf(q: f64, dof: f64) -> f64 {
    -student_t_quantile(q, dof)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}
