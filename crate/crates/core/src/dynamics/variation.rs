//! Admissible variations of A-paths and the first variation of the action.
//!
//! In the locally trivial connection a fiber path `b(t)` vanishing at both ends
//! generates the variation
//!
//! ```text
//! dq = rho(q) b,    dxi^K = b_dot^K - C^K_{IJ} xi^J b^I
//! ```
//!
//! and `dS = int <dL/dq, dq> + <dL/dxi, dxi> dt` vanishes along solutions.

use std::sync::Arc;

use nalgebra::DVector;

use super::{State, Trajectory};
use crate::error::{Error, Result};
use crate::lagrangian::LagrangianModel;

type PathFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

pub const ENDPOINT_TOL: f64 = 1e-14;

/// A fiber path `b(t)`, optionally with its time derivative.
#[derive(Clone)]
pub struct VariationField {
    b: PathFn,
    db: Option<PathFn>,
}

impl std::fmt::Debug for VariationField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationField")
            .field("analytic_derivative", &self.db.is_some())
            .finish()
    }
}

impl VariationField {
    pub fn new<F>(b: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        VariationField {
            b: Arc::new(b),
            db: None,
        }
    }

    pub fn with_derivative<F, G>(b: F, db: G) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        VariationField {
            b: Arc::new(b),
            db: Some(Arc::new(db)),
        }
    }

    pub fn zero(m: usize) -> Self {
        VariationField::with_derivative(move |_| DVector::zeros(m), move |_| DVector::zeros(m))
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        (self.b)(t)
    }

    /// `b_dot(t)`, by central differences when no derivative was supplied.
    pub fn derivative(&self, t: f64) -> DVector<f64> {
        match &self.db {
            Some(db) => db(t),
            None => {
                let h = 1e-6 * t.abs().max(1.0);
                ((self.b)(t + h) - (self.b)(t - h)) / (2.0 * h)
            }
        }
    }
}

/// The variation `(dq, dxi)` sampled on the trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleVariation {
    pub times: Vec<f64>,
    pub dq: Vec<DVector<f64>>,
    pub dxi: Vec<DVector<f64>>,
    /// `max |b|_inf + max |b_dot|_inf` over the grid.
    pub b_scale: f64,
}

fn endpoints(traj: &Trajectory<State>) -> Result<(f64, f64)> {
    match (traj.states.first(), traj.states.last()) {
        (Some(a), Some(b)) => Ok((a.t, b.t)),
        _ => Err(Error::Input("variation over an empty trajectory".into())),
    }
}

pub fn admissible_variation(
    lag: &LagrangianModel,
    traj: &Trajectory<State>,
    b: &VariationField,
) -> Result<AdmissibleVariation> {
    let (t0, t1) = endpoints(traj)?;
    let m = lag.fiber_dim();
    for t in [t0, t1] {
        let bt = b.value(t);
        if bt.len() != m {
            return Err(Error::dims("variation field", m, bt.len()));
        }
        let size = if bt.is_empty() { 0.0 } else { bt.amax() };
        if !(size <= ENDPOINT_TOL) {
            return Err(Error::Input(format!(
                "variation field must vanish at the endpoints, |b({t})| = {size:e}"
            )));
        }
    }
    let alg = lag.algebroid();
    let nodes = traj.states.len();
    let mut out = AdmissibleVariation {
        times: Vec::with_capacity(nodes),
        dq: Vec::with_capacity(nodes),
        dxi: Vec::with_capacity(nodes),
        b_scale: 0.0,
    };
    let (mut bmax, mut dbmax) = (0.0f64, 0.0f64);
    for s in &traj.states {
        lag.check_dims(&s.q, &s.xi)?;
        let bt = b.value(s.t);
        let dbt = b.derivative(s.t);
        if m > 0 {
            bmax = bmax.max(bt.amax());
            dbmax = dbmax.max(dbt.amax());
        }
        let rho = alg.anchor_at(&s.q)?;
        let c = alg.structure_at(&s.q)?;
        // C.bracket(xi, b)^K = C^K_{IJ} xi^I b^J = -C^K_{IJ} xi^J b^I
        let dxi = dbt + c.bracket(&s.xi, &bt);
        out.times.push(s.t);
        out.dq.push(rho.as_ref() * &bt);
        out.dxi.push(dxi);
    }
    out.b_scale = bmax + dbmax;
    Ok(out)
}

/// Trapezoid estimate of `dS(X_{b,a})` along `traj`.
pub fn action_stationarity(lag: &LagrangianModel, traj: &Trajectory<State>, b: &VariationField) -> Result<f64> {
    let var = admissible_variation(lag, traj, b)?;
    let mut integrand = Vec::with_capacity(traj.states.len());
    for (k, s) in traj.states.iter().enumerate() {
        let mut val = lag.grad_xi(&s.q, &s.xi)?.dot(&var.dxi[k]);
        if lag.base_dim() > 0 {
            val += lag.grad_q(&s.q, &s.xi)?.dot(&var.dq[k]);
        }
        integrand.push(val);
    }
    let mut total = 0.0;
    for k in 1..integrand.len() {
        total += 0.5 * (var.times[k] - var.times[k - 1]) * (integrand[k] + integrand[k - 1]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{lie_algebra, tangent_bundle, StructureTensor};
    use crate::dynamics::{integrate, Method};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn oscillator() -> LagrangianModel {
        let tq = Arc::new(tangent_bundle(1).unwrap());
        LagrangianModel::builder("osc", tq, |q, xi| 0.5 * xi[0] * xi[0] - 0.5 * q[0] * q[0])
            .grad_q(|q, _| -q.clone())
            .grad_xi(|_, xi| xi.clone())
            .hess_xi_xi(|_, _| DMatrix::identity(1, 1))
            .hess_xi_q(|_, _| DMatrix::zeros(1, 1))
            .build()
    }

    fn bump(t1: f64) -> VariationField {
        VariationField::with_derivative(
            move |t| v(&[(PI * t / t1).sin()]),
            move |t| v(&[PI / t1 * (PI * t / t1).cos()]),
        )
    }

    #[test]
    fn tangent_bundle_variation_is_tangent_lift() {
        let lag = oscillator();
        let traj = integrate(&lag, &State::from_slices(0.0, &[1.0], &[0.0]), 2.0, 0.01, Method::Rk4).unwrap();
        let var = admissible_variation(&lag, &traj, &bump(2.0)).unwrap();
        for (k, t) in var.times.iter().enumerate() {
            assert!((var.dq[k][0] - (PI * t / 2.0).sin()).abs() < 1e-15);
            assert!((var.dxi[k][0] - PI / 2.0 * (PI * t / 2.0).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn lie_algebra_variation_is_lin_constraint() {
        let g = Arc::new(lie_algebra(StructureTensor::so3()).unwrap());
        let lag = LagrangianModel::builder("rb", g, |_, w| 0.5 * w.norm_squared()).build();
        let xi = v(&[0.3, -0.5, 0.8]);
        let traj = Trajectory {
            label: "probe".into(),
            method: Method::Rk4,
            dt: 0.5,
            states: (0..3)
                .map(|k| State::new(k as f64 * 0.5, DVector::zeros(0), xi.clone()))
                .collect(),
        };
        let b = VariationField::new(|t| v(&[t * (1.0 - t), 2.0 * t * (1.0 - t), -t * (1.0 - t)]));
        let var = admissible_variation(&lag, &traj, &b).unwrap();
        // mid node: eta = (0.25, 0.5, -0.25), eta_dot = 0, dxi = xi x eta
        let eta = v(&[0.25, 0.5, -0.25]);
        let cross = xi.cross(&eta);
        assert!((&var.dxi[1] - cross).amax() < 1e-9);
    }

    #[test]
    fn zero_field_gives_zero_action_variation() {
        let lag = oscillator();
        let traj = integrate(&lag, &State::from_slices(0.0, &[1.0], &[0.0]), 1.0, 0.1, Method::Rk4).unwrap();
        let var = admissible_variation(&lag, &traj, &VariationField::zero(1)).unwrap();
        assert!(var.dq.iter().chain(var.dxi.iter()).all(|x| x[0] == 0.0));
        assert_eq!(action_stationarity(&lag, &traj, &VariationField::zero(1)).unwrap(), 0.0);
    }

    #[test]
    fn endpoint_violation_is_input_error() {
        let lag = oscillator();
        let traj = integrate(&lag, &State::from_slices(0.0, &[1.0], &[0.0]), 1.0, 0.1, Method::Rk4).unwrap();
        let b = VariationField::new(|t| v(&[t]));
        assert!(matches!(admissible_variation(&lag, &traj, &b), Err(Error::Input(_))));
    }

    #[test]
    fn solutions_are_stationary_and_perturbations_are_not() {
        let lag = oscillator();
        let t1 = 2.0;
        let dt = 1e-3;
        let traj = integrate(&lag, &State::from_slices(0.0, &[1.0], &[0.0]), t1, dt, Method::Rk4).unwrap();
        let b = bump(t1);
        let ds = action_stationarity(&lag, &traj, &b).unwrap();
        let scale = 1.0 + PI / t1;
        assert!(ds.abs() <= 100.0 * dt * dt * scale, "{ds}");

        // xi + 0.1 s with b = s (1 - s): dS = 0.1 int s (1 - 2 s) ds = -1/60
        let mut bad = traj.clone();
        for s in &mut bad.states {
            s.xi[0] += 0.1 * s.t / t1;
        }
        let ramp = VariationField::new(move |t| {
            let s = t / t1;
            v(&[s * (1.0 - s)])
        });
        let ds = action_stationarity(&lag, &bad, &ramp).unwrap();
        assert!((ds + 1.0 / 60.0).abs() < 1e-5, "{ds}");
    }
}
