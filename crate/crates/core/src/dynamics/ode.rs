//! Fixed-step one-step methods for `y' = f(t, y)` on flat vectors.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Classical four-stage Runge-Kutta.
    Rk4,
    /// Implicit midpoint rule, solved by simplified Newton iterations.
    ImplicitMidpoint,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::ImplicitMidpoint => "implicit_midpoint",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "implicit_midpoint" => Ok(Method::ImplicitMidpoint),
            other => Err(Error::Input(format!(
                "unknown method '{other}' (expected rk4 or implicit_midpoint)"
            ))),
        }
    }
}

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

pub fn rk4_step<F>(f: &mut F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// One implicit midpoint step `z = y + h f(t + h/2, (y + z)/2)`.
///
/// The Newton matrix `I - h/2 J` is formed once per step from a central-difference
/// Jacobian at the explicit predictor.
pub fn midpoint_step<F>(f: &mut F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let dim = y.len();
    let tm = t + 0.5 * h;
    let mut z = y + f(t, y)? * h;
    let mid = (y + &z) * 0.5;
    let mut jac = DMatrix::zeros(dim, dim);
    let eps = 1e-7 * mid.amax().max(1.0);
    let mut probe = mid.clone();
    for j in 0..dim {
        let orig = probe[j];
        probe[j] = orig + eps;
        let fp = f(tm, &probe)?;
        probe[j] = orig - eps;
        let fm = f(tm, &probe)?;
        probe[j] = orig;
        jac.set_column(j, &((fp - fm) / (2.0 * eps)));
    }
    let newton = DMatrix::identity(dim, dim) - jac * (0.5 * h);
    let lu = newton.lu();
    let scale = y.amax().max(1.0);
    let mut resid_norm = f64::INFINITY;
    for iter in 0..NEWTON_MAX_ITER {
        let mid = (y + &z) * 0.5;
        let g = &z - y - f(tm, &mid)? * h;
        resid_norm = g.amax();
        if resid_norm <= NEWTON_TOL * scale {
            return Ok(z);
        }
        let dz = lu.solve(&g).ok_or_else(|| Error::Solve {
            context: "implicit midpoint Newton matrix is singular".into(),
            iterations: iter,
            residual: resid_norm,
        })?;
        z -= &dz;
        // roundoff floor: the update no longer changes z
        if dz.amax() <= 4.0 * f64::EPSILON * z.amax().max(1.0) {
            return Ok(z);
        }
        if !z.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::Solve {
        context: "implicit midpoint step did not converge".into(),
        iterations: NEWTON_MAX_ITER,
        residual: resid_norm,
    })
}

pub fn step<F>(method: Method, f: &mut F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    match method {
        Method::Rk4 => rk4_step(f, t, y, h),
        Method::ImplicitMidpoint => midpoint_step(f, t, y, h),
    }
}

/// Uniform grid `t0 + k * dt_eff`, `k = 0..=steps`, with `steps = ceil((t_final - t0) / dt)`
/// so that the last node lands on `t_final`.
pub fn uniform_grid(t0: f64, t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Input(format!("dt must be positive, got {dt}")));
    }
    if !(t_final > t0) || !t_final.is_finite() {
        return Err(Error::Input(format!(
            "t_final must exceed the initial time {t0}, got {t_final}"
        )));
    }
    let span = t_final - t0;
    let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, span / steps as f64))
}

/// Solve `g(x) = 0` by Newton's method with a user Jacobian.
pub(crate) fn newton<G, J>(
    mut g: G,
    mut jac: J,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
    context: &str,
) -> Result<(DVector<f64>, usize)>
where
    G: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut x = x0;
    let mut iterations = 0;
    let mut previous = f64::INFINITY;
    let mut stalled = 0;
    loop {
        let r = g(&x)?;
        let rn = r.amax();
        if rn <= tol {
            return Ok((x, iterations));
        }
        // finite-difference derivatives put a noise floor under the residual; once it
        // stops shrinking at a level well below sqrt(tol) the iterate is as good as it gets
        stalled = if rn > 0.5 * previous { stalled + 1 } else { 0 };
        if stalled >= 2 && rn <= tol.sqrt() * 1e-2 {
            return Ok((x, iterations));
        }
        previous = previous.min(rn);
        if iterations >= max_iter || !rn.is_finite() {
            return Err(Error::Solve {
                context: context.to_string(),
                iterations,
                residual: rn,
            });
        }
        let jm = jac(&x)?;
        let dx = linalg::solve(&jm, &r).ok_or_else(|| Error::Regularity {
            context: context.to_string(),
            condition: f64::INFINITY,
        })?;
        x -= dx;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hits_t_final() {
        let (n, dt) = uniform_grid(0.0, std::f64::consts::PI, 1e-3).unwrap();
        assert_eq!(n, 3142);
        assert!((n as f64 * dt - std::f64::consts::PI).abs() < 1e-12);
        let (n, dt) = uniform_grid(0.0, 10.0, 1e-3).unwrap();
        assert_eq!(n, 10_000);
        assert_eq!(dt, 1e-3);
        assert!(uniform_grid(0.0, 1.0, -0.1).is_err());
        assert!(uniform_grid(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn rk4_is_exact_on_cubic() {
        // y' = 3 t^2 has solution t^3
        let mut f = |t: f64, _: &DVector<f64>| Ok(DVector::from_element(1, 3.0 * t * t));
        let mut y = DVector::zeros(1);
        for k in 0..10 {
            y = rk4_step(&mut f, k as f64 * 0.1, &y, 0.1).unwrap();
        }
        assert!((y[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn midpoint_preserves_harmonic_energy() {
        let mut f = |_: f64, y: &DVector<f64>| Ok(DVector::from_vec(vec![y[1], -y[0]]));
        let mut y = DVector::from_vec(vec![1.0, 0.0]);
        for k in 0..1000 {
            y = midpoint_step(&mut f, k as f64 * 0.01, &y, 0.01).unwrap();
        }
        assert!((y.norm_squared() - 1.0).abs() < 1e-12);
        // second order accuracy
        assert!((y[0] - 10f64.cos()).abs() < 1e-3);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("rk4".parse::<Method>().unwrap(), Method::Rk4);
        assert_eq!("implicit_midpoint".parse::<Method>().unwrap(), Method::ImplicitMidpoint);
        assert!("euler".parse::<Method>().is_err());
    }
}
