//! Lagrangians `L(q, xi)` on the fibers of an algebroid model.
//!
//! Every derivative is optional; missing ones fall back to central differences with
//! step `rel * max(1, |.|_inf)` where `rel` is the model override or the global step.

mod routh;

pub use routh::{make_routhian, solve_cyclic_velocity, CyclicSolve, RouthianDerivatives, RouthianInput, RouthianModel};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::algebroid::AlgebroidModel;
use crate::error::{Error, Result};
use crate::fd;
use crate::linalg::{self, REGULARITY_THRESHOLD};

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;

/// A Lagrangian on the algebroid `algebroid`, with optional analytic derivatives.
#[derive(Clone)]
pub struct LagrangianModel {
    label: String,
    algebroid: Arc<AlgebroidModel>,
    eval: ScalarFn,
    grad_q: Option<VectorFn>,
    grad_xi: Option<VectorFn>,
    hess_xi_xi: Option<MatrixFn>,
    hess_xi_q: Option<MatrixFn>,
    fd_step: Option<f64>,
    regularity_threshold: f64,
}

impl fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianModel")
            .field("label", &self.label)
            .field("algebroid", &self.algebroid.label())
            .field("analytic_grad_q", &self.grad_q.is_some())
            .field("analytic_grad_xi", &self.grad_xi.is_some())
            .field("analytic_hess_xi_xi", &self.hess_xi_xi.is_some())
            .field("analytic_hess_xi_q", &self.hess_xi_q.is_some())
            .finish()
    }
}

pub struct LagrangianBuilder {
    model: LagrangianModel,
}

macro_rules! infallible {
    ($f:expr) => {
        Arc::new(move |q: &DVector<f64>, xi: &DVector<f64>| Ok($f(q, xi)))
    };
}

impl LagrangianBuilder {
    pub fn grad_q(mut self, f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.model.grad_q = Some(infallible!(f));
        self
    }

    pub fn grad_xi(mut self, f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.model.grad_xi = Some(infallible!(f));
        self
    }

    pub fn hess_xi_xi(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.model.hess_xi_xi = Some(infallible!(f));
        self
    }

    pub fn hess_xi_q(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.model.hess_xi_q = Some(infallible!(f));
        self
    }

    pub(crate) fn try_grad_q(mut self, f: VectorFn) -> Self {
        self.model.grad_q = Some(f);
        self
    }

    pub(crate) fn try_grad_xi(mut self, f: VectorFn) -> Self {
        self.model.grad_xi = Some(f);
        self
    }

    pub(crate) fn try_hess_xi_xi(mut self, f: MatrixFn) -> Self {
        self.model.hess_xi_xi = Some(f);
        self
    }

    pub(crate) fn try_hess_xi_q(mut self, f: MatrixFn) -> Self {
        self.model.hess_xi_q = Some(f);
        self
    }

    /// Relative finite-difference step used for missing derivatives of this model.
    pub fn fd_step(mut self, rel: f64) -> Self {
        self.model.fd_step = Some(rel);
        self
    }

    pub fn regularity_threshold(mut self, threshold: f64) -> Self {
        self.model.regularity_threshold = threshold;
        self
    }

    pub fn build(self) -> LagrangianModel {
        self.model
    }
}

/// Mass matrix `d^2 L / d xi d xi` with its 1-norm condition estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
}

/// Worst-case relative disagreement between supplied and finite-difference derivatives.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradientConsistency {
    pub grad_q: f64,
    pub grad_xi: f64,
    pub hessian_asymmetry: f64,
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a - b).amax() / a.amax().max(1.0)
}

impl LagrangianModel {
    pub fn builder(
        label: impl Into<String>,
        algebroid: Arc<AlgebroidModel>,
        eval: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> LagrangianBuilder {
        Self::try_builder(label, algebroid, infallible!(eval))
    }

    pub(crate) fn try_builder(
        label: impl Into<String>,
        algebroid: Arc<AlgebroidModel>,
        eval: ScalarFn,
    ) -> LagrangianBuilder {
        LagrangianBuilder {
            model: LagrangianModel {
                label: label.into(),
                algebroid,
                eval,
                grad_q: None,
                grad_xi: None,
                hess_xi_xi: None,
                hess_xi_q: None,
                fd_step: None,
                regularity_threshold: REGULARITY_THRESHOLD,
            },
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn algebroid(&self) -> &Arc<AlgebroidModel> {
        &self.algebroid
    }

    pub fn base_dim(&self) -> usize {
        self.algebroid.base_dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.algebroid.fiber_dim()
    }

    pub fn has_analytic_gradients(&self) -> bool {
        self.grad_q.is_some() && self.grad_xi.is_some()
    }

    pub fn has_analytic_hessians(&self) -> bool {
        self.hess_xi_xi.is_some() && self.hess_xi_q.is_some()
    }

    pub fn regularity_threshold(&self) -> f64 {
        self.regularity_threshold
    }

    pub(crate) fn check_dims(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<()> {
        self.algebroid.check_point(q)?;
        if xi.len() != self.fiber_dim() {
            return Err(Error::dims(
                &format!("fiber vector for {}", self.label),
                self.fiber_dim(),
                xi.len(),
            ));
        }
        Ok(())
    }

    fn step(&self, x: &DVector<f64>) -> f64 {
        fd::step_for(x, self.fd_step)
    }

    pub fn value(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
        self.check_dims(q, xi)?;
        (self.eval)(q, xi)
    }

    /// `dL/dq^i`.
    pub fn grad_q(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(q, xi)?;
        match &self.grad_q {
            Some(g) => g(q, xi),
            None => self.fd_grad_q(q, xi),
        }
    }

    /// `dL/dxi^I`.
    pub fn grad_xi(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(q, xi)?;
        match &self.grad_xi {
            Some(g) => g(q, xi),
            None => self.fd_grad_xi(q, xi),
        }
    }

    fn fd_grad_q(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.step(q);
        let failure = std::cell::RefCell::new(None);
        let g = fd::gradient(
            |y| match (self.eval)(y, xi) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            q,
            h,
        );
        failure.into_inner().map_or(Ok(g), Err)
    }

    fn fd_grad_xi(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.step(xi);
        let failure = std::cell::RefCell::new(None);
        let g = fd::gradient(
            |v| match (self.eval)(q, v) {
                Ok(val) => val,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            xi,
            h,
        );
        failure.into_inner().map_or(Ok(g), Err)
    }

    /// `d^2 L / dxi^I dxi^J`, symmetrized when computed by finite differences.
    ///
    /// Without an analytic Hessian this differentiates an analytic `grad_xi`; when `grad_xi`
    /// is missing too, it takes fourth-order second differences of `L` directly.
    pub fn hess_xi_xi(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dims(q, xi)?;
        if let Some(h) = &self.hess_xi_xi {
            return h(q, xi);
        }
        let n = self.base_dim();
        let m = self.fiber_dim();
        let mut hess = if self.grad_xi.is_some() {
            let h = self.step(xi);
            let failure = std::cell::RefCell::new(None);
            let hess = fd::jacobian(
                |v| match self.grad_xi(q, v) {
                    Ok(g) => g,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        DVector::from_element(m, f64::NAN)
                    }
                },
                xi,
                m,
                h,
            );
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            hess
        } else {
            let fiber: Vec<usize> = (n..n + m).collect();
            self.second_partials_of_value(q, xi, &fiber, &fiber)?
        };
        linalg::symmetrize(&mut hess);
        Ok(hess)
    }

    /// `d^2 L / dxi^I dq^j`, shape `m x n`.
    pub fn hess_xi_q(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dims(q, xi)?;
        if let Some(h) = &self.hess_xi_q {
            return h(q, xi);
        }
        let n = self.base_dim();
        let m = self.fiber_dim();
        if self.grad_xi.is_none() {
            let fiber: Vec<usize> = (n..n + m).collect();
            let base: Vec<usize> = (0..n).collect();
            return self.second_partials_of_value(q, xi, &fiber, &base);
        }
        let h = self.step(q);
        let failure = std::cell::RefCell::new(None);
        let hess = fd::jacobian(
            |y| match self.grad_xi(y, xi) {
                Ok(g) => g,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    DVector::from_element(m, f64::NAN)
                }
            },
            q,
            m,
            h,
        );
        failure.into_inner().map_or(Ok(hess), Err)
    }

    /// Second partials of `L` in the stacked coordinates `z = (q, xi)`.
    fn second_partials_of_value(
        &self,
        q: &DVector<f64>,
        xi: &DVector<f64>,
        rows: &[usize],
        cols: &[usize],
    ) -> Result<DMatrix<f64>> {
        let n = q.len();
        let m = xi.len();
        let mut z = DVector::zeros(n + m);
        z.rows_mut(0, n).copy_from(q);
        z.rows_mut(n, m).copy_from(xi);
        let hq = fd::second_order_step(q, self.fd_step);
        let hx = fd::second_order_step(xi, self.fd_step);
        let steps: Vec<f64> = (0..n + m).map(|k| if k < n { hq } else { hx }).collect();
        let failure = std::cell::RefCell::new(None);
        let out = fd::second_partials(
            |z| {
                let q = z.rows(0, n).into_owned();
                let xi = z.rows(n, m).into_owned();
                match (self.eval)(&q, &xi) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &z,
            rows,
            cols,
            &steps,
        );
        failure.into_inner().map_or(Ok(out), Err)
    }

    /// Fiber derivative `p = dL/dxi`.
    pub fn legendre(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
        self.grad_xi(q, xi)
    }

    /// `E = <dL/dxi, xi> - L`.
    pub fn energy(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
        let p = self.legendre(q, xi)?;
        Ok(p.dot(xi) - self.value(q, xi)?)
    }

    /// Mass matrix and condition estimate; fails with a regularity error above the threshold.
    pub fn mass_matrix(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<MassMatrix> {
        let matrix = self.hess_xi_xi(q, xi)?;
        let condition = linalg::condition_estimate(&matrix);
        if !(condition <= self.regularity_threshold) {
            return Err(Error::Regularity {
                context: format!(
                    "mass matrix of {} at q = {:?}, xi = {:?}",
                    self.label,
                    q.as_slice(),
                    xi.as_slice()
                ),
                condition,
            });
        }
        Ok(MassMatrix { matrix, condition })
    }

    /// Compare supplied gradients with central differences of `L` at one point.
    pub fn gradient_consistency_at(&self, q: &DVector<f64>, xi: &DVector<f64>) -> Result<GradientConsistency> {
        let gq = self.grad_q(q, xi)?;
        let gx = self.grad_xi(q, xi)?;
        let fq = self.fd_grad_q(q, xi)?;
        let fx = self.fd_grad_xi(q, xi)?;
        let asym = match &self.hess_xi_xi {
            Some(h) => {
                let m = h(q, xi)?;
                (&m - m.transpose()).amax()
            }
            None => 0.0,
        };
        Ok(GradientConsistency {
            grad_q: rel_err(&gq, &fq),
            grad_xi: rel_err(&gx, &fx),
            hessian_asymmetry: asym,
        })
    }

    /// Gradient consistency at random points: `q` from the algebroid's sample box,
    /// `xi` uniform in `[-1, 1]^m`.
    pub fn sample_gradient_consistency<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        samples: usize,
    ) -> Result<GradientConsistency> {
        let mut acc = GradientConsistency::default();
        for _ in 0..samples.max(1) {
            let q = self.algebroid.sample_point(rng);
            let xi = DVector::from_fn(self.fiber_dim(), |_, _| rng.random_range(-1.0..1.0));
            let g = self.gradient_consistency_at(&q, &xi)?;
            acc.grad_q = acc.grad_q.max(g.grad_q);
            acc.grad_xi = acc.grad_xi.max(g.grad_xi);
            acc.hessian_asymmetry = acc.hessian_asymmetry.max(g.hessian_asymmetry);
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::{lie_algebra, tangent_bundle, StructureTensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn free_particle() -> LagrangianModel {
        let tq = Arc::new(tangent_bundle(2).unwrap());
        LagrangianModel::builder("free", tq, |_, xi| 0.5 * xi.norm_squared()).build()
    }

    fn polar() -> LagrangianModel {
        // coordinates (r, theta)
        let tq = Arc::new(tangent_bundle(2).unwrap());
        LagrangianModel::builder("polar", tq, |q, xi| 0.5 * (xi[0] * xi[0] + q[0] * q[0] * xi[1] * xi[1])).build()
    }

    fn rigid_body() -> LagrangianModel {
        let g = Arc::new(lie_algebra(StructureTensor::so3()).unwrap());
        LagrangianModel::builder("rb", g, |_, w| {
            0.5 * (w[0] * w[0] + 2.0 * w[1] * w[1] + 3.0 * w[2] * w[2])
        })
        .build()
    }

    #[test]
    fn legendre_examples() {
        let p = free_particle().legendre(&v(&[0.0, 0.0]), &v(&[3.0, -1.0])).unwrap();
        assert!((p - v(&[3.0, -1.0])).amax() < 1e-9);
        let p = rigid_body().legendre(&v(&[]), &v(&[1.0, 1.0, 1.0])).unwrap();
        assert!((p - v(&[1.0, 2.0, 3.0])).amax() < 1e-9);
        let p = polar().legendre(&v(&[2.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert!((p - v(&[0.0, 4.0])).amax() < 1e-9);
    }

    #[test]
    fn energy_examples() {
        let tq = Arc::new(tangent_bundle(1).unwrap());
        let osc = LagrangianModel::builder("osc", tq, |q, xi| 0.5 * xi[0] * xi[0] - 0.5 * q[0] * q[0]).build();
        assert!((osc.energy(&v(&[1.0]), &v(&[0.0])).unwrap() - 0.5).abs() < 1e-12);
        // xi = 0 gives -L(q, 0)
        let q = v(&[0.7]);
        let e = osc.energy(&q, &v(&[0.0])).unwrap();
        assert_eq!(e, -osc.value(&q, &v(&[0.0])).unwrap());
        let e = rigid_body().energy(&v(&[]), &v(&[1.0, 1.0, 1.0])).unwrap();
        assert!((e - 3.0).abs() < 1e-9);
    }

    #[test]
    fn mass_matrix_examples() {
        let mm = free_particle().mass_matrix(&v(&[0.0, 0.0]), &v(&[0.3, 0.1])).unwrap();
        assert!((mm.matrix.clone() - DMatrix::identity(2, 2)).amax() < 1e-6);
        assert!((mm.condition - 1.0).abs() < 1e-5);
        let mm = polar().mass_matrix(&v(&[2.0, 0.0]), &v(&[0.5, 0.5])).unwrap();
        assert!((mm.matrix[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((mm.matrix[(1, 1)] - 4.0).abs() < 1e-6);
        assert!(mm.matrix[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn linear_lagrangian_is_irregular() {
        let tq = Arc::new(tangent_bundle(1).unwrap());
        let lin = LagrangianModel::builder("linear", tq, |_, xi| xi[0])
            .grad_xi(|_, _| DVector::from_element(1, 1.0))
            .build();
        let err = lin.mass_matrix(&v(&[0.2]), &v(&[1.0])).unwrap_err();
        match err {
            Error::Regularity { context, condition } => {
                assert!(condition.is_infinite());
                assert!(context.contains("0.2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fd_gradients_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = polar().sample_gradient_consistency(&mut rng, 20).unwrap();
        assert!(g.grad_q <= 1e-9 && g.grad_xi <= 1e-9, "{g:?}");
    }

    #[test]
    fn wrong_analytic_gradient_is_detected() {
        let tq = Arc::new(tangent_bundle(1).unwrap());
        let bad = LagrangianModel::builder("bad", tq, |q, xi| 0.5 * xi[0] * xi[0] - q[0].sin())
            .grad_q(|q, _| DVector::from_element(1, q[0].cos()))
            .build();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = bad.sample_gradient_consistency(&mut rng, 10).unwrap();
        assert!(g.grad_q > 1e-2);
    }

    #[test]
    fn dimension_errors() {
        let l = free_particle();
        assert!(matches!(l.value(&v(&[0.0]), &v(&[0.0, 0.0])), Err(Error::Input(_))));
        assert!(matches!(l.grad_xi(&v(&[0.0, 0.0]), &v(&[0.0])), Err(Error::Input(_))));
    }
}
