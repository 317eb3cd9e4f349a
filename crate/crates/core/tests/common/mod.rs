//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use multitime_core::opalg::{c, CMatrix, Operator, StateVector, C64};

/// `exp(s·M)` by scaling, a 30-term Taylor series, and repeated squaring.
pub fn taylor_exp(m: &CMatrix, s: C64) -> CMatrix {
    let a = m * s;
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let squarings = (norm.log2().ceil().max(0.0) as u32) + 1;
    let scaled = &a / c(2f64.powi(squarings as i32), 0.0);
    let n = m.nrows();
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled / c(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn taylor_propagate(h: &Operator, t: f64, psi: &StateVector) -> StateVector {
    StateVector::from_vector(taylor_exp(h.matrix(), c(0.0, -t)) * psi.vector())
}

/// Kronecker product written out index by index.
pub fn kron_loops(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (p, q) = (a.nrows(), b.nrows());
    CMatrix::from_fn(p * q, p * q, |r, col| a[(r / q, col / q)] * b[(r % q, col % q)])
}

/// `exp(−i a n·σ)` in closed form for a unit vector `n`.
pub fn su2(a: f64, n: [f64; 3]) -> CMatrix {
    let (co, si) = (a.cos(), a.sin());
    let [x, y, z] = n;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            c(co, -si * z),
            c(-si * y, -si * x),
            c(si * y, -si * x),
            c(co, si * z),
        ],
    )
}

pub fn binary_entropy(p: f64) -> f64 {
    -(p * p.ln()) - (1.0 - p) * (1.0 - p).ln()
}

pub fn fro(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_dist(a: &StateVector, b: &StateVector) -> f64 {
    (a.vector() - b.vector()).norm()
}

/// Central difference of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(f64) -> CMatrix, x: f64, h: f64) -> CMatrix {
    (f(x + h) - f(x - h)) / c(2.0 * h, 0.0)
}
