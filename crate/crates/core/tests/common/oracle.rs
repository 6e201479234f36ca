//! Independent scalar reimplementations used as test oracles. Nothing here calls the
//! library's formula code.

#![allow(dead_code)]

pub struct Inputs {
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub a: f64,
    pub sigma: f64,
    pub u: f64,
    pub k: usize,
    pub z: f64,
    pub c_star: f64,
    pub alpha: f64,
    pub r_hat: f64,
}

pub fn xi(alpha: f64, u: f64, n: usize) -> f64 {
    let l = (1.0 / alpha).ln();
    let n = n as f64;
    2.0 * u.powi(2) * l.sqrt() + 4.0 * u.powi(2) * l / (3.0 * n.sqrt())
}

pub fn rate(c: f64, sigma: f64, a: f64, m1: usize, m2: usize, k: usize, n: usize) -> f64 {
    c * (sigma + a).powi(2) * ((m1 + m2) * k) as f64 / n as f64
}

/// `‖M − M̃‖²/(m1 m2) ≤ 128 (r̂ + (a² z d k + z̄)/n + ξ/√n)` with
/// `z̄ = (p/256) ‖M − M̃‖² + z (U C*)² d k`, evaluated as written.
pub fn implicit_member(dist_sq: f64, x: &Inputs) -> bool {
    let (m1, m2, n) = (x.m1 as f64, x.m2 as f64, x.n as f64);
    let d = m1 + m2;
    let k = x.k as f64;
    let p = n / (m1 * m2);
    let z_bar = p / 256.0 * dist_sq + x.z * (x.u * x.c_star).powi(2) * d * k;
    let rhs = 128.0
        * (x.r_hat + (x.a.powi(2) * x.z * d * k + z_bar) / n + xi(x.alpha, x.u, x.n) / n.sqrt());
    dist_sq / (m1 * m2) <= rhs
}

/// Radius obtained by solving the implicit inequality for the normalised distance by
/// hand: `D ≤ 128 B + D/2`, hence `D ≤ 256 B`.
pub fn radius_sq(x: &Inputs) -> f64 {
    let (m1, m2, n) = (x.m1 as f64, x.m2 as f64, x.n as f64);
    let dk = (m1 + m2) * x.k as f64;
    let b = x.r_hat
        + x.a * x.a * x.z * dk / n
        + x.z * x.u * x.u * x.c_star * x.c_star * dk / n
        + xi(x.alpha, x.u, x.n) / n.sqrt();
    if b > 0.0 {
        256.0 * b
    } else {
        0.0
    }
}

/// `(1/n) Σ (Y − B M̃)² − σ²` as a plain double loop over row-major vectors.
pub fn residual_stat(
    values: &[Vec<f64>],
    mask: &[Vec<bool>],
    center: &[Vec<f64>],
    sigma: f64,
    n: usize,
) -> f64 {
    let mut total = 0.0;
    for i in 0..values.len() {
        for j in 0..values[i].len() {
            let b = if mask[i][j] { 1.0 } else { 0.0 };
            let r = values[i][j] - b * center[i][j];
            total += r * r;
        }
    }
    total / n as f64 - sigma * sigma
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
