//! Euler-Lagrange-Poincare dynamics in the locally trivial connection.
//!
//! For a state `(q, xi)` the equations are
//!
//! ```text
//! q_dot = rho(q) xi
//! M xi_dot = rho^T dL/dq - C(xi, dL/dxi) - H q_dot
//! ```
//!
//! with `M = d^2L/dxi dxi`, `H = d^2L/dxi dq` and `C(xi, p)_I = C^K_{IJ} xi^J p_K`.

mod diagnostics;
mod hp;
pub mod ode;
mod variation;

pub use diagnostics::{
    diagnostics, hp_diagnostics, DiagnosticsReport, InvariantDrift, InvariantHook, IDENTITY_FD_STEP,
};
pub use hp::{constraint_residual, hp_integrate, hp_rhs, recover_velocity, HpRhs, CONSTRAINT_TOL};
pub use ode::Method;
pub use variation::{action_stationarity, admissible_variation, AdmissibleVariation, VariationField, ENDPOINT_TOL};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lagrangian::LagrangianModel;
use crate::linalg;

/// A point `a = xi^I e_I(q)` of the algebroid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub q: DVector<f64>,
    pub xi: DVector<f64>,
}

impl State {
    pub fn new(t: f64, q: DVector<f64>, xi: DVector<f64>) -> Self {
        State { t, q, xi }
    }

    pub fn from_slices(t: f64, q: &[f64], xi: &[f64]) -> Self {
        State::new(t, DVector::from_column_slice(q), DVector::from_column_slice(xi))
    }

    fn flatten(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut y = DVector::zeros(n + self.xi.len());
        y.rows_mut(0, n).copy_from(&self.q);
        y.rows_mut(n, self.xi.len()).copy_from(&self.xi);
        y
    }

    fn unflatten(t: f64, y: &DVector<f64>, n: usize) -> Self {
        let m = y.len() - n;
        State::new(t, y.rows(0, n).into_owned(), y.rows(n, m).into_owned())
    }
}

/// A Hamilton-Pontryagin state `(q, v, p)`; along solutions `a = v` and `p = dL/dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PontryaginState {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub p: DVector<f64>,
}

impl PontryaginState {
    pub fn new(t: f64, q: DVector<f64>, v: DVector<f64>, p: DVector<f64>) -> Self {
        PontryaginState { t, q, v, p }
    }

    /// The underlying algebroid state `(q, xi = v)`.
    pub fn to_state(&self) -> State {
        State::new(self.t, self.q.clone(), self.v.clone())
    }
}

/// Samples of a fixed-step integration on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub label: String,
    pub method: Method,
    pub dt: f64,
    pub states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.states.last()
    }
}

impl Trajectory<State> {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

impl Trajectory<PontryaginState> {
    /// The `(q, xi = v)` trajectory.
    pub fn to_states(&self) -> Trajectory<State> {
        Trajectory {
            label: self.label.clone(),
            method: self.method,
            dt: self.dt,
            states: self.states.iter().map(PontryaginState::to_state).collect(),
        }
    }
}

/// Right-hand side `(q_dot, xi_dot)` of the Euler-Lagrange-Poincare equations.
pub fn elp_rhs(lag: &LagrangianModel, s: &State) -> Result<(DVector<f64>, DVector<f64>)> {
    lag.check_dims(&s.q, &s.xi)?;
    let alg = lag.algebroid();
    let rho = alg.anchor_at(&s.q)?;
    let qdot = rho.as_ref() * &s.xi;
    let c = alg.structure_at(&s.q)?;
    let p = lag.grad_xi(&s.q, &s.xi)?;
    let mut force = c.coadjoint(&s.xi, &p);
    force.neg_mut();
    if alg.base_dim() > 0 {
        let gq = lag.grad_q(&s.q, &s.xi)?;
        force += rho.tr_mul(&gq);
        let h = lag.hess_xi_q(&s.q, &s.xi)?;
        force -= h * &qdot;
    }
    let mass = lag.mass_matrix(&s.q, &s.xi)?;
    let xidot = linalg::solve(&mass.matrix, &force).ok_or_else(|| Error::Regularity {
        context: format!("mass matrix solve of {} at t = {}", lag.label(), s.t),
        condition: mass.condition,
    })?;
    Ok((qdot, xidot))
}

pub(crate) fn check_chart(lag: &LagrangianModel, t: f64, q: &DVector<f64>) -> Result<()> {
    if let Some((coordinate, value, lo, hi)) = lag.algebroid().chart_violation(q) {
        return Err(Error::ChartExit {
            t,
            coordinate,
            value,
            lo,
            hi,
        });
    }
    Ok(())
}

/// Integrate the Euler-Lagrange-Poincare flow from `s0` to `t_final` with step `dt`.
///
/// The grid has `ceil((t_final - t0) / dt)` steps of equal length, so the recorded
/// step can be slightly smaller than `dt` when `dt` does not divide the interval.
pub fn integrate(
    lag: &LagrangianModel,
    s0: &State,
    t_final: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory<State>> {
    lag.check_dims(&s0.q, &s0.xi)?;
    check_chart(lag, s0.t, &s0.q)?;
    let (steps, h) = ode::uniform_grid(s0.t, t_final, dt)?;
    let n = lag.base_dim();
    let mut rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let s = State::unflatten(t, y, n);
        let (qd, xd) = elp_rhs(lag, &s).map_err(|e| e.at_time(t))?;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, n).copy_from(&qd);
        out.rows_mut(n, xd.len()).copy_from(&xd);
        Ok(out)
    };
    let mut states = Vec::with_capacity(steps + 1);
    states.push(s0.clone());
    let mut y = s0.flatten();
    for k in 0..steps {
        let t = s0.t + k as f64 * h;
        y = ode::step(method, &mut rhs, t, &y, h).map_err(|e| e.at_time(t))?;
        let t_next = s0.t + (k + 1) as f64 * h;
        let s = State::unflatten(t_next, &y, n);
        check_chart(lag, t_next, &s.q)?;
        states.push(s);
    }
    Ok(Trajectory {
        label: lag.label().to_string(),
        method,
        dt: h,
        states,
    })
}

/// Residuals of a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ElpResidual {
    /// Times of the interior nodes.
    pub times: Vec<f64>,
    /// `rho^T dL/dq - C(xi, dL/dxi) - d/dt dL/dxi` at interior nodes.
    pub elp: Vec<DVector<f64>>,
    /// `q_dot - rho xi` at interior nodes.
    pub apath: Vec<DVector<f64>>,
}

impl ElpResidual {
    pub fn max_elp(&self) -> f64 {
        self.elp.iter().fold(0.0, |a, r| a.max(r.amax()))
    }

    pub fn max_apath(&self) -> f64 {
        self.apath.iter().fold(0.0, |a, r| a.max(r.amax()))
    }
}

/// Evaluate the equations of motion on a sampled trajectory, time derivatives by
/// second-order central differences (endpoints excluded).
pub fn elp_residual(lag: &LagrangianModel, traj: &Trajectory<State>) -> Result<ElpResidual> {
    let nodes = traj.states.len();
    if nodes < 3 {
        return Err(Error::Input(format!(
            "residual needs at least 3 trajectory nodes, got {nodes}"
        )));
    }
    let alg = lag.algebroid();
    let momenta = traj
        .states
        .iter()
        .map(|s| lag.grad_xi(&s.q, &s.xi))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ElpResidual {
        times: Vec::with_capacity(nodes - 2),
        elp: Vec::with_capacity(nodes - 2),
        apath: Vec::with_capacity(nodes - 2),
    };
    for k in 1..nodes - 1 {
        let s = &traj.states[k];
        let span = traj.states[k + 1].t - traj.states[k - 1].t;
        let rho = alg.anchor_at(&s.q)?;
        let c = alg.structure_at(&s.q)?;
        let gq = lag.grad_q(&s.q, &s.xi)?;
        let pdot = (&momenta[k + 1] - &momenta[k - 1]) / span;
        let r = rho.tr_mul(&gq) - c.coadjoint(&s.xi, &momenta[k]) - pdot;
        let qdot = (&traj.states[k + 1].q - &traj.states[k - 1].q) / span;
        out.times.push(s.t);
        out.elp.push(r);
        out.apath.push(qdot - rho.as_ref() * &s.xi);
    }
    Ok(out)
}

/// Per-node A-path residual `|q_dot - rho xi|_inf`, using one-sided second-order
/// differences at the two endpoints. Trajectories with fewer than 3 nodes give zeros.
pub fn apath_residual_per_node(lag: &LagrangianModel, states: &[State]) -> Result<Vec<f64>> {
    let nodes = states.len();
    if nodes < 3 {
        return Ok(vec![0.0; nodes]);
    }
    let alg = lag.algebroid();
    let mut out = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let qdot = if k == 0 {
            let h = states[1].t - states[0].t;
            (&states[1].q * 4.0 - &states[0].q * 3.0 - &states[2].q) / (2.0 * h)
        } else if k == nodes - 1 {
            let h = states[k].t - states[k - 1].t;
            (&states[k].q * 3.0 - &states[k - 1].q * 4.0 + &states[k - 2].q) / (2.0 * h)
        } else {
            (&states[k + 1].q - &states[k - 1].q) / (states[k + 1].t - states[k - 1].t)
        };
        let rho = alg.anchor_at(&states[k].q)?;
        let r = qdot - rho.as_ref() * &states[k].xi;
        out.push(if r.is_empty() { 0.0 } else { r.amax() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{lie_algebra, tangent_bundle, StructureTensor};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn oscillator() -> LagrangianModel {
        let tq = Arc::new(tangent_bundle(1).unwrap());
        LagrangianModel::builder("osc", tq, |q, xi| 0.5 * xi[0] * xi[0] - 0.5 * q[0] * q[0])
            .grad_q(|q, _| -q.clone())
            .grad_xi(|_, xi| xi.clone())
            .hess_xi_xi(|_, _| nalgebra::DMatrix::identity(1, 1))
            .hess_xi_q(|_, _| nalgebra::DMatrix::zeros(1, 1))
            .build()
    }

    fn rigid_body() -> LagrangianModel {
        let g = Arc::new(lie_algebra(StructureTensor::so3()).unwrap());
        LagrangianModel::builder("rb", g, |_, w| {
            0.5 * (w[0] * w[0] + 2.0 * w[1] * w[1] + 3.0 * w[2] * w[2])
        })
        .build()
    }

    #[test]
    fn oscillator_rhs() {
        let (qd, xd) = elp_rhs(&oscillator(), &State::from_slices(0.0, &[1.0], &[0.0])).unwrap();
        assert_eq!(qd[0], 0.0);
        assert_eq!(xd[0], -1.0);
    }

    #[test]
    fn rigid_body_principal_axis_is_steady() {
        let (_, wd) = elp_rhs(&rigid_body(), &State::from_slices(0.0, &[], &[0.0, 0.0, 0.7])).unwrap();
        assert!(wd.amax() < 1e-9);
    }

    #[test]
    fn rigid_body_rhs_matches_euler_equations() {
        let (qd, wd) = elp_rhs(&rigid_body(), &State::from_slices(0.0, &[], &[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(qd.len(), 0);
        // brute-force expansion of I_K w_dot_K = -eps_{KJL} w_J I_L w_L
        let inertia = [1.0, 2.0, 3.0];
        let w = [1.0, 1.0, 1.0];
        for k in 0..3 {
            let mut s = 0.0;
            for j in 0..3 {
                for l in 0..3 {
                    s -= crate::algebroid::levi_civita(k, j, l) * w[j] * inertia[l] * w[l];
                }
            }
            assert!((wd[k] - s / inertia[k]).abs() < 1e-8, "{k}");
        }
        assert!((wd - v(&[-1.0, 1.0, -1.0 / 3.0])).amax() < 1e-8);
    }

    #[test]
    fn oscillator_half_period() {
        let traj = integrate(
            &oscillator(),
            &State::from_slices(0.0, &[1.0], &[0.0]),
            PI,
            1e-3,
            Method::Rk4,
        )
        .unwrap();
        let last = traj.last().unwrap();
        assert!((last.t - PI).abs() < 1e-12);
        assert!((last.q[0] + 1.0).abs() < 1e-10);
        assert!(last.xi[0].abs() < 1e-10);
    }

    #[test]
    fn free_particle_is_exact() {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        let free = LagrangianModel::builder("free", tq, |_, xi| 0.5 * xi.norm_squared()).build();
        let s0 = State::from_slices(0.0, &[0.5, -1.0], &[0.3, 2.0]);
        let traj = integrate(&free, &s0, 2.0, 0.01, Method::Rk4).unwrap();
        for s in &traj.states {
            let exact = &s0.q + &s0.xi * s.t;
            assert!((&s.q - exact).amax() < 1e-12);
        }
    }

    #[test]
    fn implicit_midpoint_tracks_oscillator() {
        let traj = integrate(
            &oscillator(),
            &State::from_slices(0.0, &[1.0], &[0.0]),
            PI,
            1e-3,
            Method::ImplicitMidpoint,
        )
        .unwrap();
        let last = traj.last().unwrap();
        assert!((last.q[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn residual_of_exact_samples() {
        let dt = 1e-3;
        let mk = |dt: f64| Trajectory {
            label: "exact".into(),
            method: Method::Rk4,
            dt,
            states: (0..=(2.0 / dt) as usize)
                .map(|k| {
                    let t = k as f64 * dt;
                    State::from_slices(t, &[t.cos()], &[-t.sin()])
                })
                .collect(),
        };
        let r1 = elp_residual(&oscillator(), &mk(dt)).unwrap();
        assert!(r1.max_elp() <= 5e-6);
        let r2 = elp_residual(&oscillator(), &mk(dt / 2.0)).unwrap();
        let ratio = r1.max_elp() / r2.max_elp();
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn residual_of_constant_state() {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        let free = LagrangianModel::builder("free", tq, |_, xi| 0.5 * xi.norm_squared()).build();
        let traj = Trajectory {
            label: "rest".into(),
            method: Method::Rk4,
            dt: 0.1,
            states: (0..5)
                .map(|k| State::from_slices(k as f64 * 0.1, &[1.0, 2.0], &[0.0, 0.0]))
                .collect(),
        };
        let r = elp_residual(&free, &traj).unwrap();
        assert!(r.max_elp() < 1e-15 && r.max_apath() < 1e-15);
        assert!(elp_residual(
            &free,
            &Trajectory {
                states: traj.states[..2].to_vec(),
                ..traj
            }
        )
        .is_err());
    }

    #[test]
    fn rigid_body_rk4_residual() {
        let traj = integrate(
            &rigid_body(),
            &State::from_slices(0.0, &[], &[1.0, 1.0, 1.0]),
            2.0,
            1e-3,
            Method::Rk4,
        )
        .unwrap();
        assert!(elp_residual(&rigid_body(), &traj).unwrap().max_elp() <= 1e-5);
    }

    #[test]
    fn irregular_lagrangian_fails_fast() {
        let tq = Arc::new(tangent_bundle(1).unwrap());
        let lin = LagrangianModel::builder("linear", tq, |q, xi| q[0] * xi[0])
            .grad_xi(|q, _| q.clone())
            .build();
        let err = integrate(&lin, &State::from_slices(0.0, &[1.0], &[1.0]), 1.0, 0.1, Method::Rk4).unwrap_err();
        match err {
            Error::Regularity { context, .. } => assert!(context.contains("t = 0")),
            other => panic!("{other:?}"),
        }
    }
}
