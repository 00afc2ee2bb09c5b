//! Shared numerical routines: adaptive Simpson quadrature, Gauss-Hermite
//! nodes, golden-section search, and finite-difference steps.

use crate::error::{EngineError, Result};

/// Machine-epsilon powers used as finite-difference steps.
pub fn fd_step(theta_j: f64, order: usize) -> f64 {
    let eps = f64::EPSILON;
    let base = theta_j.abs().max(1.0);
    if order >= 3 {
        base * eps.powf(0.25)
    } else {
        base * eps.powf(1.0 / 3.0)
    }
}

/// Adaptive Simpson integration of `f` over [a, b] to absolute tolerance
/// `tol`. Errors when the recursion depth budget is exhausted.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(EngineError::QuadratureFailure(
            "non-finite integration bounds".into(),
        ));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut budget: u32 = 2_000_000;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50, &mut budget)?;
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut u32,
) -> Result<f64> {
    if *budget == 0 {
        return Err(EngineError::QuadratureFailure(
            "evaluation budget exhausted".into(),
        ));
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 {
        return Err(EngineError::QuadratureFailure(
            "max recursion depth reached".into(),
        ));
    }
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    let lv = simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1, budget)?;
    let rv = simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1, budget)?;
    Ok(lv + rv)
}

/// Gauss-Hermite nodes and weights (physicists' convention, weight e^{-x^2}),
/// by Newton iteration on the normalized Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Golden-section maximization of a unimodal `f` on [a, b].
pub fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// FNV-1a hash over bytes; used for config hashes and derived seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic per-replication seed derived from a master seed and index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut buf = [0u8; 16];
    buf[..8].copy_from_slice(&master.to_le_bytes());
    buf[8..].copy_from_slice(&index.to_le_bytes());
    fnv1a(&buf)
}
