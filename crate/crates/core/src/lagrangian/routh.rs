//! The classical Routhian of a Lagrangian with cyclic coordinates.
//!
//! The full Lagrangian lives on `T(R^k x R^m)` with coordinates `(theta, y)` and is
//! independent of `theta`. For fixed momenta `x = dL/dtheta_dot` the Routhian
//! `R(x, y, y_dot) = L(theta_dot, y, y_dot) - x . theta_dot` is a Lagrangian on the vertical
//! bundle of `R^k x R^m -> R^k`, whose base coordinates are `(x, y)`.
//!
//! `theta_dot` is recovered per evaluation by Newton's method, warm-started from the
//! last solution so that a continuous branch is followed.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LagrangianModel;
use crate::algebroid::vertical_bundle;
use crate::error::{Error, Result};
use crate::linalg;

/// How the Routhian's derivatives are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouthianDerivatives {
    /// Implicit differentiation through the momentum constraint using the full
    /// Lagrangian's first and second derivatives.
    #[default]
    Envelope,
    /// Central differences of the constrained evaluation.
    FiniteDifference,
}

#[derive(Clone)]
pub struct RouthianInput {
    /// Lagrangian on `tangent_bundle(n_cyclic + m)`, coordinates `(theta, y)`.
    pub full_lagrangian: Arc<LagrangianModel>,
    pub n_cyclic: usize,
    /// Conserved momenta `x_sigma`.
    pub momentum: DVector<f64>,
    pub theta_dot_guess: DVector<f64>,
    pub derivatives: RouthianDerivatives,
    pub max_iter: usize,
    pub tol: f64,
}

impl RouthianInput {
    pub fn new(
        full_lagrangian: Arc<LagrangianModel>,
        n_cyclic: usize,
        momentum: DVector<f64>,
        theta_dot_guess: DVector<f64>,
    ) -> Self {
        RouthianInput {
            full_lagrangian,
            n_cyclic,
            momentum,
            theta_dot_guess,
            derivatives: RouthianDerivatives::Envelope,
            max_iter: 50,
            tol: 1e-12,
        }
    }
}

/// Result of the momentum-constraint solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicSolve {
    pub theta_dot: DVector<f64>,
    pub iterations: usize,
    /// Condition estimate of `d^2 L / dtheta_dot^2` at the solution.
    pub condition: f64,
}

/// Condition estimate above which the constraint Hessian is flagged as near-singular.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e8;

fn full_point(k: usize, y: &DVector<f64>) -> DVector<f64> {
    let mut q = DVector::zeros(k + y.len());
    q.rows_mut(k, y.len()).copy_from(y);
    q
}

fn full_velocity(theta_dot: &DVector<f64>, y_dot: &DVector<f64>) -> DVector<f64> {
    let k = theta_dot.len();
    let mut v = DVector::zeros(k + y_dot.len());
    v.rows_mut(0, k).copy_from(theta_dot);
    v.rows_mut(k, y_dot.len()).copy_from(y_dot);
    v
}

/// Solve `x = dL/dtheta_dot(theta_dot, y, y_dot)` for `theta_dot` by Newton's method.
#[allow(clippy::too_many_arguments)]
pub fn solve_cyclic_velocity(
    full: &LagrangianModel,
    k: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
    y_dot: &DVector<f64>,
    guess: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<CyclicSolve> {
    let q = full_point(k, y);
    let mut theta_dot = guess.clone();
    let scale = x.amax().max(1.0);
    let mut iterations = 0;
    loop {
        let v = full_velocity(&theta_dot, y_dot);
        let g = full.grad_xi(&q, &v)?;
        let resid = g.rows(0, k) - x;
        let rnorm = resid.amax();
        let hess = full.hess_xi_xi(&q, &v)?;
        let a = hess.view((0, 0), (k, k)).into_owned();
        let condition = linalg::condition_estimate(&a);
        if rnorm <= tol * scale {
            return Ok(CyclicSolve {
                theta_dot,
                iterations,
                condition,
            });
        }
        if iterations >= max_iter || !rnorm.is_finite() {
            return Err(Error::Solve {
                context: format!(
                    "Routhian momentum constraint at y = {:?}, y_dot = {:?}",
                    y.as_slice(),
                    y_dot.as_slice()
                ),
                iterations,
                residual: rnorm,
            });
        }
        if !(condition <= full.regularity_threshold()) {
            return Err(Error::Regularity {
                context: "d^2 L / d theta_dot^2 in the Routhian constraint".into(),
                condition,
            });
        }
        let step = linalg::solve(&a, &resid).ok_or_else(|| Error::Regularity {
            context: "d^2 L / d theta_dot^2 in the Routhian constraint".into(),
            condition: f64::INFINITY,
        })?;
        theta_dot -= step;
        iterations += 1;
    }
}

struct CyclicSolver {
    full: Arc<LagrangianModel>,
    k: usize,
    m: usize,
    max_iter: usize,
    tol: f64,
    warm_start: Mutex<DVector<f64>>,
    near_singular: AtomicBool,
}

impl CyclicSolver {
    fn split(&self, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (q.rows(0, self.k).into_owned(), q.rows(self.k, self.m).into_owned())
    }

    fn solve(&self, x: &DVector<f64>, y: &DVector<f64>, y_dot: &DVector<f64>) -> Result<CyclicSolve> {
        let mut guard = self.warm_start.lock().unwrap_or_else(|e| e.into_inner());
        let sol = solve_cyclic_velocity(&self.full, self.k, x, y, y_dot, &guard, self.max_iter, self.tol)?;
        if sol.condition > NEAR_SINGULAR_CONDITION {
            self.near_singular.store(true, Ordering::Relaxed);
        }
        guard.copy_from(&sol.theta_dot);
        Ok(sol)
    }

    fn eval(&self, q: &DVector<f64>, y_dot: &DVector<f64>) -> Result<f64> {
        let (x, y) = self.split(q);
        let sol = self.solve(&x, &y, y_dot)?;
        let l = self
            .full
            .value(&full_point(self.k, &y), &full_velocity(&sol.theta_dot, y_dot))?;
        Ok(l - x.dot(&sol.theta_dot))
    }

    /// Everything the envelope derivatives need at one point.
    fn blocks(&self, q: &DVector<f64>, y_dot: &DVector<f64>) -> Result<Blocks> {
        let (x, y) = self.split(q);
        let sol = self.solve(&x, &y, y_dot)?;
        let fq = full_point(self.k, &y);
        let fv = full_velocity(&sol.theta_dot, y_dot);
        Ok(Blocks {
            theta_dot: sol.theta_dot,
            grad_q: self.full.grad_q(&fq, &fv)?,
            grad_xi: self.full.grad_xi(&fq, &fv)?,
            hess_vv: self.full.hess_xi_xi(&fq, &fv)?,
            hess_vq: self.full.hess_xi_q(&fq, &fv)?,
        })
    }
}

struct Blocks {
    theta_dot: DVector<f64>,
    grad_q: DVector<f64>,
    grad_xi: DVector<f64>,
    hess_vv: DMatrix<f64>,
    hess_vq: DMatrix<f64>,
}

impl Blocks {
    /// `A^-1 B` where `A = d^2L/dtheta_dot^2`.
    fn solve_a(&self, k: usize, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let a = self.hess_vv.view((0, 0), (k, k)).into_owned();
        a.lu().solve(rhs).ok_or_else(|| Error::Regularity {
            context: "d^2 L / d theta_dot^2 in the Routhian derivatives".into(),
            condition: f64::INFINITY,
        })
    }
}

/// A Routhian together with its constraint solver state.
#[derive(Clone)]
pub struct RouthianModel {
    lagrangian: Arc<LagrangianModel>,
    solver: Arc<CyclicSolver>,
}

impl RouthianModel {
    pub fn lagrangian(&self) -> &Arc<LagrangianModel> {
        &self.lagrangian
    }

    /// The cyclic velocities solving the constraint at `q = (x, y)` and `y_dot`.
    pub fn theta_dot(&self, q: &DVector<f64>, y_dot: &DVector<f64>) -> Result<DVector<f64>> {
        self.lagrangian.check_dims(q, y_dot)?;
        let (x, y) = self.solver.split(q);
        Ok(self.solver.solve(&x, &y, y_dot)?.theta_dot)
    }

    /// Reset the warm start used by the constraint solver.
    pub fn reset_warm_start(&self, guess: &DVector<f64>) {
        let mut guard = self.solver.warm_start.lock().unwrap_or_else(|e| e.into_inner());
        guard.copy_from(guess);
    }

    /// Set once any constraint solve met a near-singular `d^2L/dtheta_dot^2`.
    pub fn constraint_near_singular(&self) -> bool {
        self.solver.near_singular.load(Ordering::Relaxed)
    }
}

/// Cyclicity tolerance on `|dL/dtheta|`.
pub const CYCLIC_TOLERANCE: f64 = 1e-10;

/// Build the Routhian of `input.full_lagrangian` as a Lagrangian on `vertical_bundle(k, m)`.
pub fn make_routhian(input: RouthianInput) -> Result<RouthianModel> {
    let full = Arc::clone(&input.full_lagrangian);
    let k = input.n_cyclic;
    let nf = full.base_dim();
    if k == 0 || k >= nf || full.fiber_dim() != nf {
        return Err(Error::Input(format!(
            "Routhian needs a tangent-bundle Lagrangian with 0 < n_cyclic < {nf}, got n_cyclic = {k}"
        )));
    }
    let m = nf - k;
    if input.momentum.len() != k {
        return Err(Error::dims("momentum", k, input.momentum.len()));
    }
    if input.theta_dot_guess.len() != k {
        return Err(Error::dims("theta_dot_guess", k, input.theta_dot_guess.len()));
    }

    // cyclicity: dL/dtheta = 0
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let q = full.algebroid().sample_point(&mut rng);
        let v = DVector::from_fn(nf, |_, _| rng.random_range(-1.0..1.0));
        let g = full.grad_q(&q, &v)?;
        worst = worst.max(g.rows(0, k).amax());
    }
    if worst > CYCLIC_TOLERANCE {
        return Err(Error::Input(format!(
            "Lagrangian is not cyclic in its first {k} coordinates (|dL/dtheta| = {worst:.3e})"
        )));
    }

    let solver = Arc::new(CyclicSolver {
        full: Arc::clone(&full),
        k,
        m,
        max_iter: input.max_iter,
        tol: input.tol,
        warm_start: Mutex::new(input.theta_dot_guess.clone()),
        near_singular: AtomicBool::new(false),
    });

    // the constraint must be solvable from the guess at a representative point
    {
        let q = full.algebroid().sample_point(&mut rng);
        let y = q.rows(k, m).into_owned();
        solve_cyclic_velocity(
            &full,
            k,
            &input.momentum,
            &y,
            &DVector::zeros(m),
            &input.theta_dot_guess,
            input.max_iter,
            input.tol,
        )?;
    }

    let mut vb = vertical_bundle(k, m)?;
    let mut sample_box = vec![(0.0, 0.0); k];
    for (s, x) in sample_box.iter_mut().zip(input.momentum.iter()) {
        *s = (*x, *x);
    }
    sample_box.extend_from_slice(&full.algebroid().sample_box()[k..]);
    vb = rebox(vb, sample_box)?;
    let vb = Arc::new(vb);

    let eval = {
        let s = Arc::clone(&solver);
        Arc::new(move |q: &DVector<f64>, yd: &DVector<f64>| s.eval(q, yd))
    };
    let mut builder = LagrangianModel::try_builder(format!("routhian({})", full.label()), vb, eval);
    if input.derivatives == RouthianDerivatives::Envelope {
        let s = Arc::clone(&solver);
        builder = builder.try_grad_q(Arc::new(move |q, yd| {
            let b = s.blocks(q, yd)?;
            let mut g = DVector::zeros(k + m);
            g.rows_mut(0, k).copy_from(&(-&b.theta_dot));
            g.rows_mut(k, m).copy_from(&b.grad_q.rows(k, m));
            Ok(g)
        }));
        let s = Arc::clone(&solver);
        builder = builder.try_grad_xi(Arc::new(move |q, yd| {
            let b = s.blocks(q, yd)?;
            Ok(b.grad_xi.rows(k, m).into_owned())
        }));
        let s = Arc::clone(&solver);
        builder = builder.try_hess_xi_xi(Arc::new(move |q, yd| {
            let b = s.blocks(q, yd)?;
            let cross = b.hess_vv.view((0, k), (k, m)).into_owned();
            let d = b.hess_vv.view((k, k), (m, m)).into_owned();
            let a_inv_cross = b.solve_a(k, &cross)?;
            let mut h = d - cross.transpose() * a_inv_cross;
            linalg::symmetrize(&mut h);
            Ok(h)
        }));
        let s = Arc::clone(&solver);
        builder = builder.try_hess_xi_q(Arc::new(move |q, yd| {
            let b = s.blocks(q, yd)?;
            let cross = b.hess_vv.view((0, k), (k, m)).into_owned();
            let p_theta = b.hess_vq.view((0, k), (k, m)).into_owned();
            let p_y = b.hess_vq.view((k, k), (m, m)).into_owned();
            let a_inv = b.solve_a(k, &DMatrix::identity(k, k))?;
            let mut h = DMatrix::zeros(m, k + m);
            h.view_mut((0, 0), (m, k)).copy_from(&(cross.transpose() * &a_inv));
            h.view_mut((0, k), (m, m))
                .copy_from(&(p_y - cross.transpose() * a_inv * p_theta));
            Ok(h)
        }));
    }
    Ok(RouthianModel {
        lagrangian: Arc::new(builder.build()),
        solver,
    })
}

fn rebox(
    model: crate::algebroid::AlgebroidModel,
    sample_box: Vec<(f64, f64)>,
) -> Result<crate::algebroid::AlgebroidModel> {
    let n = model.base_dim();
    let m = model.fiber_dim();
    let anchor = model.anchor_eval(&DVector::zeros(n))?;
    crate::algebroid::AlgebroidModel::builder(model.label().to_string(), n, m)
        .constant_anchor(anchor)
        .sample_box(sample_box)
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{tangent_bundle, AlgebroidModel};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    /// L = 1/2 (r_dot^2 + r^2 theta_dot^2) - 1/2 r^2 in coordinates (theta, r).
    fn central_force(analytic: bool) -> Arc<LagrangianModel> {
        let tq = AlgebroidModel::builder("T(theta, r)", 2, 2)
            .constant_anchor(DMatrix::identity(2, 2))
            .sample_box(vec![(-3.0, 3.0), (0.5, 2.0)])
            .build()
            .unwrap();
        let b = LagrangianModel::builder("central", Arc::new(tq), |q, v| {
            0.5 * (v[1] * v[1] + q[1] * q[1] * v[0] * v[0]) - 0.5 * q[1] * q[1]
        });
        let b = if analytic {
            b.grad_q(|q, v| v_of(&[0.0, q[1] * v[0] * v[0] - q[1]]))
                .grad_xi(|q, v| v_of(&[q[1] * q[1] * v[0], v[1]]))
                .hess_xi_xi(|q, _| DMatrix::from_row_slice(2, 2, &[q[1] * q[1], 0.0, 0.0, 1.0]))
                .hess_xi_q(|q, v| DMatrix::from_row_slice(2, 2, &[0.0, 2.0 * q[1] * v[0], 0.0, 0.0]))
        } else {
            b
        };
        Arc::new(b.build())
    }

    fn v_of(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    #[test]
    fn central_force_routhian_value() {
        let r = make_routhian(RouthianInput::new(central_force(true), 1, v(&[1.0]), v(&[1.0]))).unwrap();
        let l = r.lagrangian();
        for &(rr, rd) in &[(1.0, 0.0), (1.3, 0.4), (0.8, -0.2)] {
            let expected = 0.5 * rd * rd - 1.0 / (2.0 * rr * rr) - 0.5 * rr * rr;
            let got = l.value(&v(&[1.0, rr]), &v(&[rd])).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn zero_momentum_gives_restricted_lagrangian() {
        let full = central_force(true);
        let r = make_routhian(RouthianInput::new(Arc::clone(&full), 1, v(&[0.0]), v(&[0.3]))).unwrap();
        let got = r.lagrangian().value(&v(&[0.0, 1.4]), &v(&[0.25])).unwrap();
        let expected = full.value(&v(&[0.0, 1.4]), &v(&[0.0, 0.25])).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn free_cyclic_particle() {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        let full = Arc::new(LagrangianModel::builder("free", tq, |_, v| 0.5 * (v[0] * v[0] + v[1] * v[1])).build());
        let r = make_routhian(RouthianInput::new(full, 1, v(&[2.0]), v(&[0.0]))).unwrap();
        for &yd in &[0.0, 1.0, -0.5] {
            let got = r.lagrangian().value(&v(&[2.0, 0.3]), &v(&[yd])).unwrap();
            assert!((got - (0.5 * yd * yd - 2.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_constraint_solves_in_one_iteration() {
        let full = central_force(true);
        let sol = solve_cyclic_velocity(&full, 1, &v(&[1.0]), &v(&[1.5]), &v(&[0.2]), &v(&[7.0]), 50, 1e-12).unwrap();
        assert!(sol.iterations <= 1);
        assert!((sol.theta_dot[0] - 1.0 / 2.25).abs() < 1e-14);
    }

    #[test]
    fn envelope_and_fd_derivatives_agree() {
        let env = make_routhian(RouthianInput::new(central_force(true), 1, v(&[1.0]), v(&[1.0]))).unwrap();
        let mut input = RouthianInput::new(central_force(true), 1, v(&[1.0]), v(&[1.0]));
        input.derivatives = RouthianDerivatives::FiniteDifference;
        let fd = make_routhian(input).unwrap();
        for &(x, rr, rd) in &[(1.0, 1.2, 0.3), (0.7, 0.9, -0.4)] {
            let q = v(&[x, rr]);
            let yd = v(&[rd]);
            let (a, b) = (env.lagrangian(), fd.lagrangian());
            assert!((a.grad_q(&q, &yd).unwrap() - b.grad_q(&q, &yd).unwrap()).amax() < 1e-8);
            assert!((a.grad_xi(&q, &yd).unwrap() - b.grad_xi(&q, &yd).unwrap()).amax() < 1e-8);
            assert!((a.hess_xi_xi(&q, &yd).unwrap() - b.hess_xi_xi(&q, &yd).unwrap()).amax() < 1e-5);
            assert!((a.hess_xi_q(&q, &yd).unwrap() - b.hess_xi_q(&q, &yd).unwrap()).amax() < 1e-5);
            // closed form: dR/dr = x^2 / r^3 - r, dR/dx = -x / r^2
            let g = a.grad_q(&q, &yd).unwrap();
            assert!((g[0] + x / (rr * rr)).abs() < 1e-12);
            assert!((g[1] - (x * x / rr.powi(3) - rr)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_cyclic_lagrangian_is_rejected() {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        let full = Arc::new(
            LagrangianModel::builder("pendulum", tq, |q, v| 0.5 * (v[0] * v[0] + v[1] * v[1]) + q[0].cos()).build(),
        );
        let err = make_routhian(RouthianInput::new(full, 1, v(&[1.0]), v(&[0.0])))
            .err()
            .unwrap();
        assert!(err.to_string().contains("not cyclic"));
    }

    #[test]
    fn singular_constraint_is_a_regularity_error() {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        // linear in theta_dot: dL/dtheta_dot is constant, so x = 2 is unreachable
        let full = Arc::new(
            LagrangianModel::builder("degenerate", tq, |_, v| v[0] + 0.5 * v[1] * v[1])
                .grad_xi(|_, v| v_of(&[1.0, v[1]]))
                .build(),
        );
        let err = make_routhian(RouthianInput::new(full, 1, v(&[2.0]), v(&[0.0])))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Regularity { .. }), "{err:?}");
    }

    #[test]
    fn newton_failure_is_a_solve_error() {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        // dL/dtheta_dot = atan(theta_dot) never reaches 2
        let full = Arc::new(
            LagrangianModel::builder("bounded", tq, |_, v| {
                v[0] * v[0].atan() - 0.5 * (1.0 + v[0] * v[0]).ln() + 0.5 * v[1] * v[1]
            })
            .grad_xi(|_, v| v_of(&[v[0].atan(), v[1]]))
            .hess_xi_xi(|_, v| DMatrix::from_row_slice(2, 2, &[1.0 / (1.0 + v[0] * v[0]), 0.0, 0.0, 1.0]))
            .regularity_threshold(f64::INFINITY)
            .build(),
        );
        let err = make_routhian(RouthianInput::new(full, 1, v(&[2.0]), v(&[0.0])))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Solve { .. } | Error::Regularity { .. }), "{err:?}");
    }
}
