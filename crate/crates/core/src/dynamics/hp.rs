//! Implicit (Hamilton-Pontryagin) Euler-Lagrange-Poincare equations
//!
//! ```text
//! p_dot_I = rho^i_I dL/dq^i - C^K_{IJ} v^J p_K,   dL/dv = p,   xi = v,
//! ```
//!
//! integrated as a half-explicit system in `(q, p)`: each right-hand side evaluation
//! first recovers `v` from the Legendre constraint by Newton's method.

use std::cell::RefCell;

use nalgebra::DVector;

use super::ode::{self, Method};
use super::{check_chart, PontryaginState, Trajectory};
use crate::error::Result;
use crate::lagrangian::LagrangianModel;

pub const CONSTRAINT_TOL: f64 = 1e-12;

/// Solve `dL/dv(q, v) = p` for `v`, starting from `guess`. Returns `v` and the iteration count.
pub fn recover_velocity(
    lag: &LagrangianModel,
    q: &DVector<f64>,
    p: &DVector<f64>,
    guess: &DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    lag.check_dims(q, guess)?;
    lag.check_dims(q, p)?;
    let tol = CONSTRAINT_TOL * p.amax().max(1.0);
    ode::newton(
        |v| Ok(lag.grad_xi(q, v)? - p),
        |v| Ok(lag.mass_matrix(q, v)?.matrix),
        guess.clone(),
        tol,
        ode::NEWTON_MAX_ITER,
        "Legendre constraint dL/dv = p",
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpRhs {
    pub qdot: DVector<f64>,
    pub pdot: DVector<f64>,
    /// The velocity recovered from the Legendre constraint.
    pub v: DVector<f64>,
}

/// Right-hand side of the implicit equations at `(q, p)`, using `v_guess` as Newton start.
pub fn hp_rhs(lag: &LagrangianModel, q: &DVector<f64>, p: &DVector<f64>, v_guess: &DVector<f64>) -> Result<HpRhs> {
    let (v, _) = recover_velocity(lag, q, p, v_guess)?;
    let alg = lag.algebroid();
    let rho = alg.anchor_at(q)?;
    let c = alg.structure_at(q)?;
    let qdot = rho.as_ref() * &v;
    let mut pdot = c.coadjoint(&v, p);
    pdot.neg_mut();
    if alg.base_dim() > 0 {
        pdot += rho.tr_mul(&lag.grad_q(q, &v)?);
    }
    Ok(HpRhs { qdot, pdot, v })
}

/// Integrate the implicit equations from `s0`. `s0.v` seeds the first Newton solve;
/// `s0.p` is the initial momentum. The stored `v` at every node solves the constraint.
pub fn hp_integrate(
    lag: &LagrangianModel,
    s0: &PontryaginState,
    t_final: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory<PontryaginState>> {
    lag.check_dims(&s0.q, &s0.v)?;
    lag.check_dims(&s0.q, &s0.p)?;
    check_chart(lag, s0.t, &s0.q)?;
    let (steps, h) = ode::uniform_grid(s0.t, t_final, dt)?;
    let n = lag.base_dim();
    let m = lag.fiber_dim();
    let warm = RefCell::new(s0.v.clone());
    let mut rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let q = y.rows(0, n).into_owned();
        let p = y.rows(n, m).into_owned();
        let guess = warm.borrow().clone();
        let r = hp_rhs(lag, &q, &p, &guess).map_err(|e| e.at_time(t))?;
        *warm.borrow_mut() = r.v;
        let mut out = DVector::zeros(n + m);
        out.rows_mut(0, n).copy_from(&r.qdot);
        out.rows_mut(n, m).copy_from(&r.pdot);
        Ok(out)
    };
    let node = |t: f64, q: DVector<f64>, p: DVector<f64>, guess: &DVector<f64>| -> Result<PontryaginState> {
        let (v, _) = recover_velocity(lag, &q, &p, guess).map_err(|e| e.at_time(t))?;
        Ok(PontryaginState::new(t, q, v, p))
    };
    let mut states = Vec::with_capacity(steps + 1);
    let first = node(s0.t, s0.q.clone(), s0.p.clone(), &s0.v)?;
    *warm.borrow_mut() = first.v.clone();
    states.push(first);
    let mut y = DVector::zeros(n + m);
    y.rows_mut(0, n).copy_from(&s0.q);
    y.rows_mut(n, m).copy_from(&s0.p);
    for k in 0..steps {
        let t = s0.t + k as f64 * h;
        let prev_v = states[k].v.clone();
        *warm.borrow_mut() = prev_v.clone();
        y = ode::step(method, &mut rhs, t, &y, h).map_err(|e| e.at_time(t))?;
        let t_next = s0.t + (k + 1) as f64 * h;
        let q = y.rows(0, n).into_owned();
        check_chart(lag, t_next, &q)?;
        let s = node(t_next, q, y.rows(n, m).into_owned(), &prev_v)?;
        states.push(s);
    }
    Ok(Trajectory {
        label: format!("{} (hp)", lag.label()),
        method,
        dt: h,
        states,
    })
}

/// `|p - dL/dv(q, v)|_inf` at one node.
pub fn constraint_residual(lag: &LagrangianModel, s: &PontryaginState) -> Result<f64> {
    let r = lag.grad_xi(&s.q, &s.v)? - &s.p;
    Ok(if r.is_empty() { 0.0 } else { r.amax() })
}
