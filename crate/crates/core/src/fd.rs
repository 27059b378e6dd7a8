//! Central finite differences used whenever a model omits an analytic derivative.
//!
//! The default step is `rel_step * max(1, |x|_inf)` with `rel_step = 1e-6`.
//! The relative step is process-global and can be replaced with
//! [`set_relative_step`] (the CLI wires `ALGEBROMECH_FD_STEP` to it).

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

pub const DEFAULT_RELATIVE_STEP: f64 = 1e-6;

/// Name of the environment variable the CLI reads to override the step.
pub const FD_STEP_ENV: &str = "ALGEBROMECH_FD_STEP";

static RELATIVE_STEP_BITS: AtomicU64 = AtomicU64::new(0);

/// Current global relative step.
pub fn relative_step() -> f64 {
    let bits = RELATIVE_STEP_BITS.load(Ordering::Relaxed);
    if bits == 0 {
        DEFAULT_RELATIVE_STEP
    } else {
        f64::from_bits(bits)
    }
}

/// Replace the global relative step. Non-positive or non-finite values are rejected.
pub fn set_relative_step(step: f64) -> bool {
    if step.is_finite() && step > 0.0 {
        RELATIVE_STEP_BITS.store(step.to_bits(), Ordering::Relaxed);
        true
    } else {
        false
    }
}

/// Absolute step for a point `x`, optionally overriding the relative step.
pub fn step_for(x: &DVector<f64>, rel_override: Option<f64>) -> f64 {
    let rel = rel_override.unwrap_or_else(relative_step);
    rel * x.amax().max(1.0)
}

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector function, `rows x x.len()`.
pub fn jacobian<F>(f: F, x: &DVector<f64>, rows: usize, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let xj = x[j];
        xp[j] = xj + h;
        let fp = f(&xp);
        xp[j] = xj - h;
        let fm = f(&xp);
        xp[j] = xj;
        let col = (fp - fm) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference partials of a matrix-valued function, one matrix per coordinate.
pub fn matrix_partials<F>(f: F, x: &DVector<f64>, h: f64) -> Vec<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let xj = x[j];
        xp[j] = xj + h;
        let fp = f(&xp);
        xp[j] = xj - h;
        let fm = f(&xp);
        xp[j] = xj;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Absolute step for direct second differences of a scalar function:
/// `0.2 * cbrt(rel_step) * max(1, |x|_inf)`, i.e. `2e-3` at the default relative step.
pub fn second_order_step(x: &DVector<f64>, rel_override: Option<f64>) -> f64 {
    let rel = rel_override.unwrap_or_else(relative_step);
    0.2 * rel.cbrt() * x.amax().max(1.0)
}

fn second_difference<F>(f: &F, z: &mut DVector<f64>, f0: f64, a: usize, b: usize, ha: f64, hb: f64) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    let (za, zb) = (z[a], z[b]);
    let d = if a == b {
        z[a] = za + ha;
        let fp = f(z);
        z[a] = za - ha;
        let fm = f(z);
        (fp - 2.0 * f0 + fm) / (ha * ha)
    } else {
        let mut eval = |sa: f64, sb: f64| {
            z[a] = za + sa * ha;
            z[b] = zb + sb * hb;
            f(z)
        };
        let s = eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0);
        s / (4.0 * ha * hb)
    };
    z[a] = za;
    z[b] = zb;
    d
}

/// Second partials `d^2 f / dz_r dz_c` for `r` in `rows`, `c` in `cols`, by central second
/// differences with one Richardson extrapolation (fourth order). `steps[k]` is the step
/// for coordinate `k`.
pub fn second_partials<F>(f: F, z: &DVector<f64>, rows: &[usize], cols: &[usize], steps: &[f64]) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let f0 = f(z);
    let mut work = z.clone();
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (r, &a) in rows.iter().enumerate() {
        for (c, &b) in cols.iter().enumerate() {
            let (ha, hb) = (steps[a], steps[b]);
            let coarse = second_difference(&f, &mut work, f0, a, b, 2.0 * ha, 2.0 * hb);
            let fine = second_difference(&f, &mut work, f0, a, b, ha, hb);
            out[(r, c)] = (4.0 * fine - coarse) / 3.0;
        }
    }
    out
}
