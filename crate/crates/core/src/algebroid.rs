//! Lie algebroids in a single coordinate chart.
//!
//! A model is described by its anchor `rho^i_I(q)` (an `n x m` matrix mapping fiber
//! coordinates `xi^I` to base velocities) and its structure functions `C^K_{IJ}(q)`
//! defined by `[e_I, e_J] = C^K_{IJ} e_K`. Structure tensors are stored output index
//! first, `(K, I, J)`, so that `C^K_{IJ} xi^J` is a contiguous contraction.
//!
//! The defining identities checked numerically are
//!
//! * antisymmetry: `C^K_{IJ} = -C^K_{JI}`,
//! * anchor compatibility: `rho^j_I d_j rho^i_J - rho^j_J d_j rho^i_I - rho^i_K C^K_{IJ} = 0`,
//!   the coordinate form of `rho([e_I, e_J]) = [rho(e_I), rho(e_J)]`,
//! * Jacobi: `sum_cyc(I,J,K) [ rho^i_I d_i C^N_{JK} + C^N_{IM} C^M_{JK} ] = 0`, obtained by
//!   expanding `[e_I, [e_J, e_K]]` with the Leibniz rule
//!   `[e_I, f e_M] = f [e_I, e_M] + rho(e_I)(f) e_M` and summing cyclically.
//!
//! A Lie algebra is the case `n = 0`: zero-length base points flow through the same code.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fd;

/// A rank-3 tensor `C^K_{IJ}` over an `m`-dimensional fiber, index order `(K, I, J)`.
#[derive(Clone, PartialEq)]
pub struct StructureTensor {
    dim: usize,
    data: Vec<f64>,
}

impl StructureTensor {
    pub fn zeros(dim: usize) -> Self {
        StructureTensor {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    /// Build from a closure `(k, i, j) -> C^k_{ij}`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    t.set(k, i, j, f(k, i, j));
                }
            }
        }
        t
    }

    /// The so(3) structure constants `C^K_{IJ} = epsilon_{IJK}`.
    pub fn so3() -> Self {
        Self::from_fn(3, |k, i, j| levi_civita(i, j, k))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.dim + i) * self.dim + j
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(k, i, j)]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let idx = self.idx(k, i, j);
        self.data[idx] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `out_I = C^K_{IJ} xi^J p_K`, the bracket term of the Euler-Lagrange-Poincare equations.
    pub fn coadjoint(&self, xi: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let m = self.dim;
        let mut out = DVector::zeros(m);
        for k in 0..m {
            let pk = p[k];
            if pk == 0.0 {
                continue;
            }
            for i in 0..m {
                let row = &self.data[(k * m + i) * m..(k * m + i + 1) * m];
                let s: f64 = row.iter().zip(xi.iter()).map(|(c, x)| c * x).sum();
                out[i] += s * pk;
            }
        }
        out
    }

    /// `out^K = C^K_{IJ} a^I b^J`, the bracket of two constant sections.
    pub fn bracket(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let m = self.dim;
        DVector::from_fn(m, |k, _| {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += self.get(k, i, j) * a[i] * b[j];
                }
            }
            s
        })
    }

    fn axpy(&mut self, alpha: f64, other: &StructureTensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }
}

impl fmt::Debug for StructureTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructureTensor")
            .field("dim", &self.dim)
            .field("data", &self.data)
            .finish()
    }
}

pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Max antisymmetry and Jacobi violations of constant structure constants.
pub fn algebra_residuals(c: &StructureTensor) -> (f64, f64) {
    let m = c.dim();
    let mut anti: f64 = 0.0;
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                anti = anti.max((c.get(k, i, j) + c.get(k, j, i)).abs());
            }
        }
    }
    let mut jac: f64 = 0.0;
    for n in 0..m {
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let mut s = 0.0;
                    for mm in 0..m {
                        s += c.get(n, i, mm) * c.get(mm, j, k)
                            + c.get(n, j, mm) * c.get(mm, k, i)
                            + c.get(n, k, mm) * c.get(mm, i, j);
                    }
                    jac = jac.max(s.abs());
                }
            }
        }
    }
    (anti, jac)
}

pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type MatrixPartialsFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(&DVector<f64>) -> StructureTensor + Send + Sync>;
pub type TensorPartialsFn = Arc<dyn Fn(&DVector<f64>) -> Vec<StructureTensor> + Send + Sync>;

/// A chart-dependent quantity that is either constant or a function of the base point.
#[derive(Clone)]
pub enum Field<T, F> {
    Constant(T),
    Function(F),
}

/// Axis-aligned box `[lo_i, hi_i]` in base coordinates.
pub type CoordBox = Vec<(f64, f64)>;

/// A Lie algebroid presented in one chart of `R^n` with a local frame of `m` sections.
#[derive(Clone)]
pub struct AlgebroidModel {
    label: String,
    base_dim: usize,
    fiber_dim: usize,
    anchor: Field<DMatrix<f64>, MatrixFn>,
    structure: Field<StructureTensor, TensorFn>,
    anchor_jacobian: Option<MatrixPartialsFn>,
    structure_jacobian: Option<TensorPartialsFn>,
    fd_step: Option<f64>,
    sample_box: CoordBox,
    chart: Option<CoordBox>,
}

impl fmt::Debug for AlgebroidModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlgebroidModel")
            .field("label", &self.label)
            .field("base_dim", &self.base_dim)
            .field("fiber_dim", &self.fiber_dim)
            .field("constant_anchor", &matches!(self.anchor, Field::Constant(_)))
            .field("constant_structure", &matches!(self.structure, Field::Constant(_)))
            .finish()
    }
}

/// Max-norm residuals of the three algebroid identities at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureResiduals {
    pub antisymmetry: f64,
    pub anchor_compat: f64,
    pub jacobi: f64,
}

impl StructureResiduals {
    pub fn max(&self) -> f64 {
        self.antisymmetry.max(self.anchor_compat).max(self.jacobi)
    }

    pub fn merge(&self, other: &StructureResiduals) -> StructureResiduals {
        StructureResiduals {
            antisymmetry: self.antisymmetry.max(other.antisymmetry),
            anchor_compat: self.anchor_compat.max(other.anchor_compat),
            jacobi: self.jacobi.max(other.jacobi),
        }
    }
}

/// Builder for models with chart-dependent anchors or structure functions.
pub struct AlgebroidBuilder {
    model: AlgebroidModel,
}

impl AlgebroidBuilder {
    pub fn constant_anchor(mut self, anchor: DMatrix<f64>) -> Self {
        self.model.anchor = Field::Constant(anchor);
        self
    }

    pub fn anchor_fn(mut self, f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.model.anchor = Field::Function(Arc::new(f));
        self
    }

    pub fn constant_structure(mut self, c: StructureTensor) -> Self {
        self.model.structure = Field::Constant(c);
        self
    }

    pub fn structure_fn(mut self, f: impl Fn(&DVector<f64>) -> StructureTensor + Send + Sync + 'static) -> Self {
        self.model.structure = Field::Function(Arc::new(f));
        self
    }

    /// Analytic `d rho / d q^j`, one `n x m` matrix per base coordinate `j`.
    pub fn anchor_jacobian(mut self, f: impl Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.model.anchor_jacobian = Some(Arc::new(f));
        self
    }

    /// Analytic `d C / d q^j`, one tensor per base coordinate `j`.
    pub fn structure_jacobian(
        mut self,
        f: impl Fn(&DVector<f64>) -> Vec<StructureTensor> + Send + Sync + 'static,
    ) -> Self {
        self.model.structure_jacobian = Some(Arc::new(f));
        self
    }

    /// Relative finite-difference step for this model (overrides the global default).
    pub fn fd_step(mut self, rel: f64) -> Self {
        self.model.fd_step = Some(rel);
        self
    }

    pub fn sample_box(mut self, b: CoordBox) -> Self {
        self.model.sample_box = b;
        self
    }

    /// Declare the region in which the chart is valid; integration aborts on exit.
    pub fn chart(mut self, b: CoordBox) -> Self {
        self.model.chart = Some(b);
        self
    }

    pub fn build(self) -> Result<AlgebroidModel> {
        let m = &self.model;
        if m.fiber_dim == 0 {
            return Err(Error::Input("fiber dimension must be at least 1".into()));
        }
        if let Field::Constant(a) = &m.anchor {
            if a.shape() != (m.base_dim, m.fiber_dim) {
                return Err(Error::Input(format!(
                    "anchor has shape {:?}, expected ({}, {})",
                    a.shape(),
                    m.base_dim,
                    m.fiber_dim
                )));
            }
        }
        if let Field::Constant(c) = &m.structure {
            if c.dim() != m.fiber_dim {
                return Err(Error::Input(format!(
                    "structure tensor has dimension {}, expected {}",
                    c.dim(),
                    m.fiber_dim
                )));
            }
        }
        if m.sample_box.len() != m.base_dim {
            return Err(Error::Input(format!(
                "sample box has {} intervals, expected {}",
                m.sample_box.len(),
                m.base_dim
            )));
        }
        if let Some(chart) = &m.chart {
            if chart.len() != m.base_dim {
                return Err(Error::Input("chart box has wrong dimension".into()));
            }
        }
        Ok(self.model)
    }
}

impl AlgebroidModel {
    /// Start a model with zero anchor and zero structure; configure with the builder methods.
    pub fn builder(label: impl Into<String>, base_dim: usize, fiber_dim: usize) -> AlgebroidBuilder {
        AlgebroidBuilder {
            model: AlgebroidModel {
                label: label.into(),
                base_dim,
                fiber_dim,
                anchor: Field::Constant(DMatrix::zeros(base_dim, fiber_dim)),
                structure: Field::Constant(StructureTensor::zeros(fiber_dim)),
                anchor_jacobian: None,
                structure_jacobian: None,
                fd_step: None,
                sample_box: vec![(-1.0, 1.0); base_dim],
                chart: None,
            },
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn sample_box(&self) -> &CoordBox {
        &self.sample_box
    }

    pub fn chart(&self) -> Option<&CoordBox> {
        self.chart.as_ref()
    }

    pub fn relative_fd_step(&self) -> Option<f64> {
        self.fd_step
    }

    /// True when anchor and structure are constant and their derivatives vanish identically.
    pub fn has_constant_coefficients(&self) -> bool {
        matches!(self.anchor, Field::Constant(_)) && matches!(self.structure, Field::Constant(_))
    }

    /// True when every derivative used by the identity checks is analytic (or trivially zero).
    pub fn has_analytic_derivatives(&self) -> bool {
        let anchor_ok = matches!(self.anchor, Field::Constant(_)) || self.anchor_jacobian.is_some();
        let structure_ok = matches!(self.structure, Field::Constant(_)) || self.structure_jacobian.is_some();
        anchor_ok && structure_ok
    }

    pub(crate) fn check_point(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.base_dim {
            return Err(Error::dims(
                &format!("base point for {}", self.label),
                self.base_dim,
                q.len(),
            ));
        }
        Ok(())
    }

    /// Anchor matrix `rho(q)`, shape `n x m`.
    pub fn anchor_eval(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.anchor_at(q)?.into_owned())
    }

    /// Borrowing variant of [`anchor_eval`](Self::anchor_eval) that avoids copying constant anchors.
    pub fn anchor_at(&self, q: &DVector<f64>) -> Result<Cow<'_, DMatrix<f64>>> {
        self.check_point(q)?;
        Ok(match &self.anchor {
            Field::Constant(a) => Cow::Borrowed(a),
            Field::Function(f) => Cow::Owned(f(q)),
        })
    }

    /// Structure functions `C^K_{IJ}(q)`, index order `(K, I, J)`.
    pub fn structure_eval(&self, q: &DVector<f64>) -> Result<StructureTensor> {
        Ok(self.structure_at(q)?.into_owned())
    }

    pub fn structure_at(&self, q: &DVector<f64>) -> Result<Cow<'_, StructureTensor>> {
        self.check_point(q)?;
        Ok(match &self.structure {
            Field::Constant(c) => Cow::Borrowed(c),
            Field::Function(f) => Cow::Owned(f(q)),
        })
    }

    /// `d rho / d q^j` for each `j`; analytic when available, otherwise central differences
    /// with absolute step `h`.
    pub fn anchor_partials(&self, q: &DVector<f64>, h: f64) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(q)?;
        Ok(match (&self.anchor, &self.anchor_jacobian) {
            (Field::Constant(_), _) => {
                vec![DMatrix::zeros(self.base_dim, self.fiber_dim); self.base_dim]
            }
            (_, Some(jac)) => jac(q),
            (Field::Function(f), None) => fd::matrix_partials(|x| f(x), q, h),
        })
    }

    /// `d C / d q^j` for each `j`; analytic when available, otherwise central differences.
    pub fn structure_partials(&self, q: &DVector<f64>, h: f64) -> Result<Vec<StructureTensor>> {
        self.check_point(q)?;
        Ok(match (&self.structure, &self.structure_jacobian) {
            (Field::Constant(_), _) => vec![StructureTensor::zeros(self.fiber_dim); self.base_dim],
            (_, Some(jac)) => jac(q),
            (Field::Function(f), None) => {
                let mut out = Vec::with_capacity(self.base_dim);
                let mut qp = q.clone();
                for j in 0..self.base_dim {
                    let qj = q[j];
                    qp[j] = qj + h;
                    let mut d = f(&qp);
                    qp[j] = qj - h;
                    let minus = f(&qp);
                    qp[j] = qj;
                    d.axpy(-1.0, &minus);
                    for v in d.data.iter_mut() {
                        *v /= 2.0 * h;
                    }
                    out.push(d);
                }
                out
            }
        })
    }

    /// Residuals of antisymmetry, anchor compatibility and Jacobi at `q`.
    ///
    /// `fd_step` is the absolute central-difference step used for any derivative the
    /// model does not supply analytically.
    pub fn check_structure_identities(&self, q: &DVector<f64>, fd_step: f64) -> Result<StructureResiduals> {
        if !(fd_step > 0.0) {
            return Err(Error::Input(format!("fd_step must be positive, got {fd_step}")));
        }
        let n = self.base_dim;
        let m = self.fiber_dim;
        let rho = self.anchor_at(q)?;
        let c = self.structure_at(q)?;
        let drho = self.anchor_partials(q, fd_step)?;
        let dc = self.structure_partials(q, fd_step)?;

        let mut anti: f64 = 0.0;
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    anti = anti.max((c.get(k, i, j) + c.get(k, j, i)).abs());
                }
            }
        }

        let mut compat: f64 = 0.0;
        for i in 0..n {
            for a in 0..m {
                for b in 0..m {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += rho[(j, a)] * drho[j][(i, b)] - rho[(j, b)] * drho[j][(i, a)];
                    }
                    for k in 0..m {
                        s -= rho[(i, k)] * c.get(k, a, b);
                    }
                    compat = compat.max(s.abs());
                }
            }
        }

        // term(N, I, J, K) = rho^i_I d_i C^N_{JK} + C^N_{IM} C^M_{JK}
        let term = |nn: usize, a: usize, b: usize, k: usize| {
            let mut s = 0.0;
            for i in 0..n {
                let r = rho[(i, a)];
                if r != 0.0 {
                    s += r * dc[i].get(nn, b, k);
                }
            }
            for mm in 0..m {
                s += c.get(nn, a, mm) * c.get(mm, b, k);
            }
            s
        };
        let mut jacobi: f64 = 0.0;
        for nn in 0..m {
            for a in 0..m {
                for b in 0..m {
                    for k in 0..m {
                        let s = term(nn, a, b, k) + term(nn, b, k, a) + term(nn, k, a, b);
                        jacobi = jacobi.max(s.abs());
                    }
                }
            }
        }

        Ok(StructureResiduals {
            antisymmetry: anti,
            anchor_compat: compat,
            jacobi,
        })
    }

    /// Uniform random point in the sample box.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.base_dim,
            self.sample_box
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo }),
        )
    }

    /// Maximum residuals over `samples` random points of the sample box.
    pub fn sample_structure_identities<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        samples: usize,
        fd_step: f64,
    ) -> Result<StructureResiduals> {
        let mut acc = StructureResiduals::default();
        for _ in 0..samples.max(1) {
            let q = self.sample_point(rng);
            acc = acc.merge(&self.check_structure_identities(&q, fd_step)?);
        }
        Ok(acc)
    }

    /// Returns the first chart violation of `q`, if any: `(coordinate, value, lo, hi)`.
    pub fn chart_violation(&self, q: &DVector<f64>) -> Option<(usize, f64, f64, f64)> {
        let chart = self.chart.as_ref()?;
        chart
            .iter()
            .zip(q.iter())
            .enumerate()
            .find(|(_, (&(lo, hi), &v))| !(v >= lo && v <= hi))
            .map(|(i, (&(lo, hi), &v))| (i, v, lo, hi))
    }
}

/// The tangent bundle `TR^n`: identity anchor and commuting coordinate frame.
pub fn tangent_bundle(n: usize) -> Result<AlgebroidModel> {
    if n < 1 {
        return Err(Error::Input("tangent bundle needs n >= 1".into()));
    }
    AlgebroidModel::builder(format!("tangent_bundle({n})"), n, n)
        .constant_anchor(DMatrix::identity(n, n))
        .build()
}

/// Tolerance for validating user-supplied Lie algebra structure constants.
pub const ALGEBRA_TOLERANCE: f64 = 1e-12;

fn validate_algebra(c: &StructureTensor, what: &str) -> Result<()> {
    let (anti, jac) = algebra_residuals(c);
    let scale = c.max_abs().max(1.0);
    if anti > ALGEBRA_TOLERANCE * scale {
        return Err(Error::Construction(format!(
            "{what}: structure constants not antisymmetric (residual {anti:.3e})"
        )));
    }
    if jac > ALGEBRA_TOLERANCE * scale * scale {
        return Err(Error::Construction(format!(
            "{what}: structure constants violate the Jacobi identity (residual {jac:.3e})"
        )));
    }
    Ok(())
}

/// A Lie algebra as an algebroid over a point.
pub fn lie_algebra(c: StructureTensor) -> Result<AlgebroidModel> {
    if c.dim() == 0 {
        return Err(Error::Input("Lie algebra must have dimension >= 1".into()));
    }
    validate_algebra(&c, "lie_algebra")?;
    AlgebroidModel::builder(format!("lie_algebra(dim {})", c.dim()), 0, c.dim())
        .constant_structure(c)
        .build()
}

/// The vertical bundle of `R^k x R^m -> R^k`: base coordinates `(x, y)`, fiber frame `d/dy`.
pub fn vertical_bundle(k: usize, m: usize) -> Result<AlgebroidModel> {
    if m < 1 {
        return Err(Error::Input("vertical bundle needs fiber dimension m >= 1".into()));
    }
    let mut anchor = DMatrix::zeros(k + m, m);
    for i in 0..m {
        anchor[(k + i, i)] = 1.0;
    }
    AlgebroidModel::builder(format!("vertical_bundle({k},{m})"), k + m, m)
        .constant_anchor(anchor)
        .build()
}

/// A principal connection on the trivial bundle `R^n x G`, given by its form `omega^A_i(x)`.
#[derive(Clone)]
pub struct ConnectionForm {
    /// `x -> d x n` matrix with entries `omega^A_i(x)`.
    pub form: MatrixFn,
    /// Optional analytic `d omega / d x^k`, one `d x n` matrix per base coordinate.
    pub jacobian: Option<MatrixPartialsFn>,
}

impl ConnectionForm {
    pub fn new(form: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        ConnectionForm {
            form: Arc::new(form),
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// The flat connection `omega = 0`.
    pub fn flat(base_dim: usize, algebra_dim: usize) -> Self {
        ConnectionForm::new(move |_| DMatrix::zeros(algebra_dim, base_dim))
            .with_jacobian(move |_| vec![DMatrix::zeros(algebra_dim, base_dim); base_dim])
    }
}

/// Curvature `R^A_{ij} = d_i omega^A_j - d_j omega^A_i - c^A_{BC} omega^B_i omega^C_j`,
/// returned as one `n x n` matrix per algebra index `A`.
pub fn curvature(c: &StructureTensor, omega: &DMatrix<f64>, domega: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let d = c.dim();
    let n = omega.ncols();
    (0..d)
        .map(|a| {
            DMatrix::from_fn(n, n, |i, j| {
                let mut r = domega[i][(a, j)] - domega[j][(a, i)];
                for b in 0..d {
                    for cc in 0..d {
                        r -= c.get(a, b, cc) * omega[(b, i)] * omega[(cc, j)];
                    }
                }
                r
            })
        })
        .collect()
}

/// Atiyah algebroid of the trivial principal bundle `R^n x G -> R^n`, split by a connection.
///
/// Frame: `e_i = (d/dx^i, 0)` for `i < n` followed by `e_A = (0, eps_A)`. The brackets are
/// `[e_i, e_j] = -R^A_{ij} e_A`, `[e_i, e_A] = c^B_{AC} omega^C_i e_B` and
/// `[e_A, e_B] = c^C_{AB} e_C`. They follow from the split bracket
/// `[(X, a), (Y, b)] = ([X, Y], D_X b - D_Y a + [a, b] - R(X, Y))` with the adjoint-bundle
/// covariant derivative `D_i b = d_i b - [omega_i, b]`, whose curvature
/// `[D_i, D_j] b = [-R_{ij}, b]` makes the Jacobi identity hold for nonabelian `c`.
pub fn atiyah_trivial(
    base_dim: usize,
    fiber_algebra: StructureTensor,
    connection: ConnectionForm,
) -> Result<AlgebroidModel> {
    atiyah_trivial_with_step(base_dim, fiber_algebra, connection, None)
}

/// [`atiyah_trivial`] with an explicit relative FD step for the connection Jacobian.
pub fn atiyah_trivial_with_step(
    base_dim: usize,
    fiber_algebra: StructureTensor,
    connection: ConnectionForm,
    fd_step: Option<f64>,
) -> Result<AlgebroidModel> {
    let d = fiber_algebra.dim();
    if base_dim < 1 || d < 1 {
        return Err(Error::Input(
            "atiyah_trivial needs base_dim >= 1 and algebra dim >= 1".into(),
        ));
    }
    validate_algebra(&fiber_algebra, "atiyah_trivial fiber algebra")?;
    let n = base_dim;
    let m = n + d;
    let mut anchor = DMatrix::zeros(n, m);
    for i in 0..n {
        anchor[(i, i)] = 1.0;
    }
    let c = Arc::new(fiber_algebra);
    let structure = {
        let c = Arc::clone(&c);
        let connection = connection.clone();
        move |x: &DVector<f64>| {
            let omega = (connection.form)(x);
            let domega = match &connection.jacobian {
                Some(jac) => jac(x),
                None => {
                    let h = fd::step_for(x, fd_step);
                    fd::matrix_partials(|y| (connection.form)(y), x, h)
                }
            };
            let r = curvature(&c, &omega, &domega);
            let mut t = StructureTensor::zeros(m);
            for a in 0..d {
                for i in 0..n {
                    for j in 0..n {
                        t.set(n + a, i, j, -r[a][(i, j)]);
                    }
                }
            }
            for i in 0..n {
                for a in 0..d {
                    for b in 0..d {
                        let mut s = 0.0;
                        for cc in 0..d {
                            s += c.get(b, a, cc) * omega[(cc, i)];
                        }
                        t.set(n + b, i, n + a, s);
                        t.set(n + b, n + a, i, -s);
                    }
                }
            }
            for a in 0..d {
                for b in 0..d {
                    for cc in 0..d {
                        t.set(n + cc, n + a, n + b, c.get(cc, a, b));
                    }
                }
            }
            t
        }
    };
    let mut builder = AlgebroidModel::builder(format!("atiyah_trivial({n}, dim g = {d})"), n, m)
        .constant_anchor(anchor)
        .structure_fn(structure);
    if let Some(step) = fd_step {
        builder = builder.fd_step(step);
    }
    builder.build()
}
