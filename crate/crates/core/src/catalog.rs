//! Worked systems and the morphisms between them.
//!
//! Every system is built from numeric parameters and self-tested at construction: the
//! algebroid identities and the agreement of supplied gradients with finite differences
//! are sampled at seeded random points before the bundle is returned.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebroid::{atiyah_trivial, lie_algebra, tangent_bundle, AlgebroidModel, ConnectionForm, StructureTensor};
use crate::dynamics::{InvariantHook, State, IDENTITY_FD_STEP};
use crate::error::{Error, Result};
use crate::lagrangian::{LagrangianModel, RouthianInput};
use crate::reduction::AlgebroidMorphism;

pub type Params = BTreeMap<String, f64>;

/// One parameter of a catalog entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub key: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub doc: &'static str,
    pub params: &'static [ParamSpec],
    /// `(base_dim, fiber_dim)` of the algebroid.
    pub dims: (usize, usize),
    /// Whether the bundle ships a Routhian set-up.
    pub routhian: bool,
}

const fn p(key: &'static str, default: f64, doc: &'static str) -> ParamSpec {
    ParamSpec { key, default, doc }
}

const INERTIA: [ParamSpec; 3] = [
    p("I1", 1.0, "principal moment of inertia about e_1"),
    p("I2", 2.0, "principal moment of inertia about e_2"),
    p("I3", 3.0, "principal moment of inertia about e_3"),
];

const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "harmonic_oscillator",
        doc: "Tangent bundle TR with L = xi^2/2 - k q^2/2; the equations are the ordinary \
              Euler-Lagrange equations. Default state (q, xi) = (1, 0).",
        params: &[p("k", 1.0, "spring constant")],
        dims: (1, 1),
        routhian: false,
    },
    CatalogEntry {
        name: "rigid_body",
        doc: "Free rigid body on the Lie algebra so(3) with [e_I, e_J] = eps_IJK e_K and \
              l = w^T diag(I1, I2, I3) w / 2; the equations are Euler's equations \
              (Euler-Poincare). Invariants: energy, |I w|^2. Default w = (1, 1, 1).",
        params: &INERTIA,
        dims: (0, 3),
        routhian: false,
    },
    CatalogEntry {
        name: "rigid_body_chart",
        doc: "Free rigid body on the tangent bundle of SO(3) in z-y-z Euler angles \
              (phi, theta, psi), chart theta in [0.05, pi - 0.05]. L = (K q_dot)^T I (K q_dot) / 2 \
              with body angular velocity w = K(q) q_dot. Paired with rigid_body through the \
              morphism rigid_body_quotient. Default q = (0, pi/2, 0), q_dot = (-1, 1, 1) \
              (w = (1, 1, 1)).",
        params: &INERTIA,
        dims: (3, 3),
        routhian: false,
    },
    CatalogEntry {
        name: "cyclic_oscillator",
        doc: "Tangent bundle of the cylinder in (theta, y) with L = (theta_dot^2 + y_dot^2)/2 - y^2/2, \
              cyclic in theta. Paired with the flat abelian Atiyah model through the morphism \
              cyclic_quotient (Lagrange-Poincare reduction by rotations). Default \
              (theta, y, theta_dot, y_dot) = (0, 1, 2, 0).",
        params: &[],
        dims: (2, 2),
        routhian: false,
    },
    CatalogEntry {
        name: "wong_abelian",
        doc: "Charged particle in the plane: Atiyah algebroid of R^2 x U(1) with connection \
              omega = (-B x2/2, B x1/2) and L = |x_dot|^2/2 + v^2/2. The equations are \
              Wong's equations, here the Lorentz force x_ddot = B v J x_dot with conserved charge v. \
              Default x = (0, 0), x_dot = (1, 0), v = 1. Invariants: charge, energy.",
        params: &[p("B", 1.0, "magnetic field strength")],
        dims: (2, 3),
        routhian: false,
    },
    CatalogEntry {
        name: "wong_so3",
        doc: "Wong's equations for an so(3) charge in the plane: Atiyah algebroid of R^2 x SO(3) \
              with a curved nonabelian connection and L = |x_dot|^2/2 + |v|^2/2. Property-tested \
              only (no closed form). Invariants: energy, |v|^2.",
        params: &[p("B", 1.0, "connection strength")],
        dims: (2, 5),
        routhian: false,
    },
    CatalogEntry {
        name: "central_force_routh",
        doc: "Planar central force in polar coordinates (theta, r), L = (r_dot^2 + r^2 theta_dot^2)/2 \
              - omega_r^2 r^2 / 2, cyclic in theta. Ships a Routhian factory at angular momentum x; \
              the Routhian lives on the vertical bundle over (x, r). Default r = r0, \
              theta_dot = x / r0^2.",
        params: &[
            p("omega_r", 1.0, "radial frequency of the harmonic potential"),
            p("x", 1.0, "angular momentum of the Routh reduction"),
            p("r0", 1.2, "initial radius"),
        ],
        dims: (2, 2),
        routhian: true,
    },
];

/// Catalog entries in a stable order.
pub fn list() -> &'static [CatalogEntry] {
    ENTRIES
}

pub fn entry(name: &str) -> Result<&'static CatalogEntry> {
    ENTRIES.iter().find(|e| e.name == name).ok_or_else(|| {
        let names: Vec<_> = ENTRIES.iter().map(|e| e.name).collect();
        Error::Input(format!("unknown system '{name}' (known: {})", names.join(", ")))
    })
}

/// Defaults overlaid with `params`; unknown keys and non-finite values are rejected.
pub fn resolve_params(entry: &CatalogEntry, params: &Params) -> Result<Params> {
    for (k, v) in params {
        if !entry.params.iter().any(|s| s.key == k) {
            let keys: Vec<_> = entry.params.iter().map(|s| s.key).collect();
            return Err(Error::Input(format!(
                "system '{}' has no parameter '{k}' (parameters: {})",
                entry.name,
                if keys.is_empty() {
                    "none".to_string()
                } else {
                    keys.join(", ")
                }
            )));
        }
        if !v.is_finite() {
            return Err(Error::Input(format!("parameter '{k}' must be finite, got {v}")));
        }
    }
    Ok(entry
        .params
        .iter()
        .map(|s| (s.key.to_string(), params.get(s.key).copied().unwrap_or(s.default)))
        .collect())
}

/// A constructed system.
#[derive(Clone)]
pub struct SystemBundle {
    pub name: String,
    pub params: Params,
    pub algebroid: Arc<AlgebroidModel>,
    pub lagrangian: Arc<LagrangianModel>,
    pub initial: State,
    pub invariants: Vec<InvariantHook>,
    /// Routhian set-up for systems with cyclic coordinates.
    pub routhian: Option<RouthianInput>,
}

impl std::fmt::Debug for SystemBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemBundle")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("algebroid", &self.algebroid)
            .field("initial", &self.initial)
            .field("invariants", &self.invariants)
            .finish()
    }
}

/// Thresholds of the construction self-test and of `check`.
pub const ANALYTIC_IDENTITY_TOL: f64 = 1e-12;
pub const GRADIENT_TOL: f64 = 1e-6;

/// Identity threshold for a model: exact for analytic coefficients, `10 h^2` otherwise.
pub fn identity_tolerance(alg: &AlgebroidModel, fd_step: f64) -> f64 {
    if alg.has_constant_coefficients() || alg.has_analytic_derivatives() {
        ANALYTIC_IDENTITY_TOL
    } else {
        10.0 * fd_step * fd_step
    }
}

const SELF_TEST_SAMPLES: usize = 10;

fn self_test(bundle: &SystemBundle) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1_6E_B0);
    let alg = &bundle.algebroid;
    let r = alg.sample_structure_identities(&mut rng, SELF_TEST_SAMPLES, IDENTITY_FD_STEP)?;
    let tol = identity_tolerance(alg, IDENTITY_FD_STEP);
    if r.max() > tol {
        return Err(Error::Construction(format!(
            "{}: structure identities fail the self-test ({r:?}, tolerance {tol:e})",
            bundle.name
        )));
    }
    let g = bundle
        .lagrangian
        .sample_gradient_consistency(&mut rng, SELF_TEST_SAMPLES)?;
    if g.grad_q.max(g.grad_xi) > GRADIENT_TOL || g.hessian_asymmetry > ANALYTIC_IDENTITY_TOL {
        return Err(Error::Construction(format!(
            "{}: supplied derivatives disagree with finite differences ({g:?})",
            bundle.name
        )));
    }
    Ok(())
}

pub fn build(name: &str, params: &Params) -> Result<SystemBundle> {
    let entry = entry(name)?;
    let params = resolve_params(entry, params)?;
    let get = |k: &str| params[k];
    let bundle = match name {
        "harmonic_oscillator" => harmonic_oscillator(get("k"))?,
        "rigid_body" => rigid_body(inertia(&params)?)?,
        "rigid_body_chart" => rigid_body_chart(inertia(&params)?)?,
        "cyclic_oscillator" => cyclic_oscillator()?,
        "wong_abelian" => wong_abelian(get("B"))?,
        "wong_so3" => wong_so3(get("B"))?,
        "central_force_routh" => central_force(get("omega_r"), get("x"), get("r0"))?,
        _ => unreachable!("entry() accepted an unlisted name"),
    };
    let bundle = SystemBundle { params, ..bundle };
    self_test(&bundle)?;
    Ok(bundle)
}

fn bundle(
    name: &str,
    algebroid: Arc<AlgebroidModel>,
    lagrangian: LagrangianModel,
    initial: State,
    invariants: Vec<InvariantHook>,
) -> SystemBundle {
    SystemBundle {
        name: name.to_string(),
        params: Params::new(),
        algebroid,
        lagrangian: Arc::new(lagrangian),
        initial,
        invariants,
        routhian: None,
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn energy_hook(lag: &Arc<LagrangianModel>) -> InvariantHook {
    let lag = Arc::clone(lag);
    InvariantHook::new("energy", move |q, xi| lag.energy(q, xi).unwrap_or(f64::NAN))
}

fn harmonic_oscillator(k: f64) -> Result<SystemBundle> {
    let tq = Arc::new(tangent_bundle(1)?);
    let lag = LagrangianModel::builder("harmonic_oscillator", Arc::clone(&tq), move |q, xi| {
        0.5 * xi[0] * xi[0] - 0.5 * k * q[0] * q[0]
    })
    .grad_q(move |q, _| -q * k)
    .grad_xi(|_, xi| xi.clone())
    .hess_xi_xi(|_, _| DMatrix::identity(1, 1))
    .hess_xi_q(|_, _| DMatrix::zeros(1, 1))
    .build();
    let mut b = bundle(
        "harmonic_oscillator",
        tq,
        lag,
        State::from_slices(0.0, &[1.0], &[0.0]),
        vec![],
    );
    b.invariants = vec![energy_hook(&b.lagrangian)];
    Ok(b)
}

fn inertia(params: &Params) -> Result<Vector3<f64>> {
    let i = Vector3::new(params["I1"], params["I2"], params["I3"]);
    if i.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Input(format!(
            "moments of inertia must be positive, got ({}, {}, {})",
            i[0], i[1], i[2]
        )));
    }
    Ok(i)
}

fn rigid_body_lagrangian(alg: Arc<AlgebroidModel>, i: Vector3<f64>) -> LagrangianModel {
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(i.as_slice()));
    let d2 = diag.clone();
    LagrangianModel::builder("rigid_body", alg, move |_, w| {
        0.5 * (i[0] * w[0] * w[0] + i[1] * w[1] * w[1] + i[2] * w[2] * w[2])
    })
    .grad_q(|_, _| DVector::zeros(0))
    .grad_xi(move |_, w| &diag * w)
    .hess_xi_xi(move |_, _| d2.clone())
    .hess_xi_q(|_, _| DMatrix::zeros(3, 0))
    .build()
}

fn rigid_body(i: Vector3<f64>) -> Result<SystemBundle> {
    let g = Arc::new(lie_algebra(StructureTensor::so3())?);
    let lag = rigid_body_lagrangian(Arc::clone(&g), i);
    let mut b = bundle(
        "rigid_body",
        g,
        lag,
        State::from_slices(0.0, &[], &[1.0, 1.0, 1.0]),
        vec![],
    );
    let casimir = InvariantHook::new("casimir", move |_, w| {
        (i[0] * w[0]).powi(2) + (i[1] * w[1]).powi(2) + (i[2] * w[2]).powi(2)
    });
    b.invariants = vec![energy_hook(&b.lagrangian), casimir];
    Ok(b)
}

/// Chart box of the Euler-angle model: `theta` stays away from the gimbal-lock poles.
pub const EULER_THETA_MARGIN: f64 = 0.05;

/// Body angular velocity matrix `K(q)` of z-y-z Euler angles, `w = K(q) q_dot`.
pub fn euler_kinematic_matrix(q: &DVector<f64>) -> Matrix3<f64> {
    let (st, ct) = q[1].sin_cos();
    let (sp, cp) = q[2].sin_cos();
    Matrix3::new(-st * cp, sp, 0.0, st * sp, cp, 0.0, ct, 0.0, 1.0)
}

/// Partials `dK/dq^j`, `j = 0, 1, 2` (`K` does not depend on `phi`).
pub fn euler_kinematic_partials(q: &DVector<f64>) -> [Matrix3<f64>; 3] {
    let (st, ct) = q[1].sin_cos();
    let (sp, cp) = q[2].sin_cos();
    [
        Matrix3::zeros(),
        Matrix3::new(-ct * cp, 0.0, 0.0, ct * sp, 0.0, 0.0, -st, 0.0, 0.0),
        Matrix3::new(st * sp, cp, 0.0, st * cp, -sp, 0.0, 0.0, 0.0, 0.0),
    ]
}

/// `R(q) = Rz(phi) Ry(theta) Rz(psi)`.
pub fn euler_rotation(q: &DVector<f64>) -> Matrix3<f64> {
    let rz = |a: f64| {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    };
    let (s, c) = q[1].sin_cos();
    let ry = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
    rz(q[0]) * ry * rz(q[2])
}

/// Check `K(q) q_dot` against `R^T dR/dt` from central differences of the rotation matrix,
/// and `dK` against differences of `K`, at seeded points of the chart.
fn validate_euler_chart() -> Result<()> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(323);
    let h = 1e-5;
    for _ in 0..8 {
        let q = v(&[
            rng.random_range(-PI..PI),
            rng.random_range(EULER_THETA_MARGIN..PI - EULER_THETA_MARGIN),
            rng.random_range(-PI..PI),
        ]);
        let qd = v(&[
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]);
        let rdot = (euler_rotation(&(&q + &qd * h)) - euler_rotation(&(&q - &qd * h))) / (2.0 * h);
        let omega_hat = euler_rotation(&q).transpose() * rdot;
        let w_fd = Vector3::new(omega_hat[(2, 1)], omega_hat[(0, 2)], omega_hat[(1, 0)]);
        let w = euler_kinematic_matrix(&q) * Vector3::new(qd[0], qd[1], qd[2]);
        let partials = euler_kinematic_partials(&q);
        let mut worst = (w - w_fd).amax();
        for j in 0..3 {
            let mut e = DVector::zeros(3);
            e[j] = h;
            let dk = (euler_kinematic_matrix(&(&q + &e)) - euler_kinematic_matrix(&(&q - &e))) / (2.0 * h);
            worst = worst.max((dk - partials[j]).amax());
        }
        if worst > 1e-8 {
            return Err(Error::Construction(format!(
                "Euler-angle kinematics disagree with the rotation-matrix map by {worst:.3e}"
            )));
        }
    }
    Ok(())
}

fn euler_chart_model() -> Result<AlgebroidModel> {
    let margin = EULER_THETA_MARGIN;
    let chart = vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (margin, PI - margin),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];
    AlgebroidModel::builder("tangent_bundle(SO(3), z-y-z angles)", 3, 3)
        .constant_anchor(DMatrix::identity(3, 3))
        .sample_box(vec![(-PI, PI), (margin, PI - margin), (-PI, PI)])
        .chart(chart)
        .build()
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn rigid_body_chart(i: Vector3<f64>) -> Result<SystemBundle> {
    validate_euler_chart()?;
    let alg = Arc::new(euler_chart_model()?);
    let inertia = Matrix3::from_diagonal(&i);
    let omega =
        move |q: &DVector<f64>, qd: &DVector<f64>| euler_kinematic_matrix(q) * Vector3::new(qd[0], qd[1], qd[2]);
    let lag = LagrangianModel::builder("rigid_body_chart", Arc::clone(&alg), move |q, qd| {
        let w = omega(q, qd);
        0.5 * w.dot(&(inertia * w))
    })
    .grad_q(move |q, qd| {
        let w = omega(q, qd);
        let qd3 = Vector3::new(qd[0], qd[1], qd[2]);
        let iw = inertia * w;
        let dk = euler_kinematic_partials(q);
        DVector::from_fn(3, |j, _| iw.dot(&(dk[j] * qd3)))
    })
    .grad_xi(move |q, qd| {
        let k = euler_kinematic_matrix(q);
        let g = k.transpose() * inertia * omega(q, qd);
        v(g.as_slice())
    })
    .hess_xi_xi(move |q, _| {
        let k = euler_kinematic_matrix(q);
        to_dmatrix(&(k.transpose() * inertia * k))
    })
    .hess_xi_q(move |q, qd| {
        let k = euler_kinematic_matrix(q);
        let dk = euler_kinematic_partials(q);
        let qd3 = Vector3::new(qd[0], qd[1], qd[2]);
        let w = k * qd3;
        let mut h = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let col = dk[j].transpose() * inertia * w + k.transpose() * inertia * (dk[j] * qd3);
            h.set_column(j, &v(col.as_slice()));
        }
        h
    })
    .build();
    let q0 = [0.0, PI / 2.0, 0.0];
    let k0 = euler_kinematic_matrix(&v(&q0));
    let qd0 = k0
        .try_inverse()
        .ok_or_else(|| Error::Construction("kinematic matrix singular at the default state".into()))?
        * Vector3::new(1.0, 1.0, 1.0);
    let mut b = bundle(
        "rigid_body_chart",
        alg,
        lag,
        State::from_slices(0.0, &q0, qd0.as_slice()),
        vec![],
    );
    let casimir = InvariantHook::new("casimir", move |q, qd| (inertia * omega(q, qd)).norm_squared());
    b.invariants = vec![energy_hook(&b.lagrangian), casimir];
    Ok(b)
}

fn cyclic_oscillator() -> Result<SystemBundle> {
    let tq = Arc::new(tangent_bundle(2)?);
    let lag = LagrangianModel::builder("cyclic_oscillator", Arc::clone(&tq), |q, xi| {
        0.5 * xi.norm_squared() - 0.5 * q[1] * q[1]
    })
    .grad_q(|q, _| v(&[0.0, -q[1]]))
    .grad_xi(|_, xi| xi.clone())
    .hess_xi_xi(|_, _| DMatrix::identity(2, 2))
    .hess_xi_q(|_, _| DMatrix::zeros(2, 2))
    .build();
    let mut b = bundle(
        "cyclic_oscillator",
        tq,
        lag,
        State::from_slices(0.0, &[0.0, 1.0], &[2.0, 0.0]),
        vec![InvariantHook::new("cyclic_momentum", |_, xi| xi[0])],
    );
    b.invariants.insert(0, energy_hook(&b.lagrangian));
    Ok(b)
}

fn wong_abelian(field: f64) -> Result<SystemBundle> {
    let half = 0.5 * field;
    let connection = ConnectionForm::new(move |x| DMatrix::from_row_slice(1, 2, &[-half * x[1], half * x[0]]))
        .with_jacobian(move |_| {
            vec![
                DMatrix::from_row_slice(1, 2, &[0.0, half]),
                DMatrix::from_row_slice(1, 2, &[-half, 0.0]),
            ]
        });
    let alg = Arc::new(atiyah_trivial(2, StructureTensor::zeros(1), connection)?);
    let lag = LagrangianModel::builder("wong_abelian", Arc::clone(&alg), |_, xi| 0.5 * xi.norm_squared())
        .grad_q(|_, _| DVector::zeros(2))
        .grad_xi(|_, xi| xi.clone())
        .hess_xi_xi(|_, _| DMatrix::identity(3, 3))
        .hess_xi_q(|_, _| DMatrix::zeros(3, 2))
        .build();
    let mut b = bundle(
        "wong_abelian",
        alg,
        lag,
        State::from_slices(0.0, &[0.0, 0.0], &[1.0, 0.0, 1.0]),
        vec![InvariantHook::new("charge", |_, xi| xi[2])],
    );
    b.invariants.push(energy_hook(&b.lagrangian));
    Ok(b)
}

fn wong_so3(strength: f64) -> Result<SystemBundle> {
    let b = strength;
    // omega^1 = B (-x2, x1) / 2, omega^2 = B (0.3, x1 x2 / 4), omega^3 = B (x1^2 / 4, 0.3)
    let connection = ConnectionForm::new(move |x| {
        DMatrix::from_row_slice(
            3,
            2,
            &[
                -0.5 * b * x[1],
                0.5 * b * x[0],
                0.3 * b,
                0.25 * b * x[0] * x[1],
                0.25 * b * x[0] * x[0],
                0.3 * b,
            ],
        )
    })
    .with_jacobian(move |x| {
        vec![
            DMatrix::from_row_slice(3, 2, &[0.0, 0.5 * b, 0.0, 0.25 * b * x[1], 0.5 * b * x[0], 0.0]),
            DMatrix::from_row_slice(3, 2, &[-0.5 * b, 0.0, 0.0, 0.25 * b * x[0], 0.0, 0.0]),
        ]
    });
    let alg = Arc::new(atiyah_trivial(2, StructureTensor::so3(), connection)?);
    let lag = LagrangianModel::builder("wong_so3", Arc::clone(&alg), |_, xi| 0.5 * xi.norm_squared())
        .grad_q(|_, _| DVector::zeros(2))
        .grad_xi(|_, xi| xi.clone())
        .hess_xi_xi(|_, _| DMatrix::identity(5, 5))
        .hess_xi_q(|_, _| DMatrix::zeros(5, 2))
        .build();
    let mut bundle = bundle(
        "wong_so3",
        alg,
        lag,
        State::from_slices(0.0, &[0.2, -0.1], &[1.0, 0.0, 0.6, -0.3, 0.8]),
        vec![InvariantHook::new("charge_norm_squared", |_, xi| {
            xi.rows(2, 3).norm_squared()
        })],
    );
    bundle.invariants.insert(0, energy_hook(&bundle.lagrangian));
    Ok(bundle)
}

fn central_force(omega_r: f64, x: f64, r0: f64) -> Result<SystemBundle> {
    if !(r0 > 0.0) {
        return Err(Error::Input(format!("r0 must be positive, got {r0}")));
    }
    let w2 = omega_r * omega_r;
    let alg = AlgebroidModel::builder("tangent_bundle(2)", 2, 2)
        .constant_anchor(DMatrix::identity(2, 2))
        .sample_box(vec![(-PI, PI), (0.5, 2.0)])
        .chart(vec![(f64::NEG_INFINITY, f64::INFINITY), (1e-3, f64::INFINITY)])
        .build()?;
    let alg = Arc::new(alg);
    // coordinates (theta, r)
    let lag = LagrangianModel::builder("central_force", Arc::clone(&alg), move |q, qd| {
        let r = q[1];
        0.5 * (qd[1] * qd[1] + r * r * qd[0] * qd[0]) - 0.5 * w2 * r * r
    })
    .grad_q(move |q, qd| v(&[0.0, q[1] * qd[0] * qd[0] - w2 * q[1]]))
    .grad_xi(|q, qd| v(&[q[1] * q[1] * qd[0], qd[1]]))
    .hess_xi_xi(|q, _| DMatrix::from_row_slice(2, 2, &[q[1] * q[1], 0.0, 0.0, 1.0]))
    .hess_xi_q(|q, qd| DMatrix::from_row_slice(2, 2, &[0.0, 2.0 * q[1] * qd[0], 0.0, 0.0]))
    .build();
    let mut b = bundle(
        "central_force_routh",
        alg,
        lag,
        State::from_slices(0.0, &[0.0, r0], &[x / (r0 * r0), 0.0]),
        vec![InvariantHook::new("angular_momentum", |q, qd| q[1] * q[1] * qd[0])],
    );
    b.invariants.insert(0, energy_hook(&b.lagrangian));
    b.routhian = Some(RouthianInput::new(
        Arc::clone(&b.lagrangian),
        1,
        v(&[x]),
        v(&[x / (r0 * r0)]),
    ));
    Ok(b)
}

/// A morphism between two catalog systems, with the state to compare from.
#[derive(Clone)]
pub struct MorphismBundle {
    pub name: String,
    pub source: SystemBundle,
    pub target: SystemBundle,
    pub morphism: AlgebroidMorphism,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphismEntry {
    pub name: &'static str,
    pub source: &'static str,
    pub doc: &'static str,
}

const MORPHISMS: &[MorphismEntry] = &[
    MorphismEntry {
        name: "cyclic_quotient",
        source: "cyclic_oscillator",
        doc: "Quotient of T(S^1 x R) by rotations: (theta, y; theta_dot, y_dot) -> (y; y_dot, v = theta_dot) \
              onto the flat abelian Atiyah model with l = (v^2 + y_dot^2)/2 - y^2/2.",
    },
    MorphismEntry {
        name: "rigid_body_quotient",
        source: "rigid_body_chart",
        doc: "Left-trivialization of T SO(3) in Euler angles: q -> (), q_dot -> w = K(q) q_dot onto so(3). \
              Fiberwise invertible inside the chart box.",
    },
    MorphismEntry {
        name: "identity",
        source: "any",
        doc: "Identity morphism of the configured system.",
    },
];

pub fn list_morphisms() -> &'static [MorphismEntry] {
    MORPHISMS
}

/// Build a morphism bundle. `system` names the source system for `identity` and must
/// match the fixed source otherwise; `params` are the source system's parameters.
pub fn build_morphism(name: &str, system: &str, params: &Params) -> Result<MorphismBundle> {
    let entry = MORPHISMS.iter().find(|m| m.name == name).ok_or_else(|| {
        let names: Vec<_> = MORPHISMS.iter().map(|m| m.name).collect();
        Error::Input(format!("unknown morphism '{name}' (known: {})", names.join(", ")))
    })?;
    if entry.source != "any" && entry.source != system {
        return Err(Error::Input(format!(
            "morphism '{name}' starts from system '{}', not '{system}'",
            entry.source
        )));
    }
    let source = build(system, params)?;
    match name {
        "identity" => {
            let morphism = AlgebroidMorphism::identity(Arc::clone(&source.algebroid));
            Ok(MorphismBundle {
                name: name.to_string(),
                target: source.clone(),
                source,
                morphism,
            })
        }
        "cyclic_quotient" => {
            let alg = Arc::new(atiyah_trivial(
                1,
                StructureTensor::zeros(1),
                ConnectionForm::flat(1, 1),
            )?);
            let lag = LagrangianModel::builder("cyclic_oscillator_reduced", Arc::clone(&alg), |y, xi| {
                0.5 * xi.norm_squared() - 0.5 * y[0] * y[0]
            })
            .grad_q(|y, _| -y.clone())
            .grad_xi(|_, xi| xi.clone())
            .hess_xi_xi(|_, _| DMatrix::identity(2, 2))
            .hess_xi_q(|_, _| DMatrix::zeros(2, 1))
            .build();
            let target_state = State::from_slices(
                0.0,
                &[source.initial.q[1]],
                &[source.initial.xi[1], source.initial.xi[0]],
            );
            let mut target = bundle(
                "cyclic_oscillator_reduced",
                Arc::clone(&alg),
                lag,
                target_state,
                vec![InvariantHook::new("charge", |_, xi| xi[1])],
            );
            target.invariants.insert(0, energy_hook(&target.lagrangian));
            self_test(&target)?;
            let morphism = AlgebroidMorphism::new(
                "cyclic_quotient",
                Arc::clone(&source.algebroid),
                alg,
                |q| v(&[q[1]]),
                |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            )
            .with_base_jacobian(|_| DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))
            .fiberwise_invertible(true);
            Ok(MorphismBundle {
                name: name.to_string(),
                source,
                target,
                morphism,
            })
        }
        "rigid_body_quotient" => {
            let target = build("rigid_body", &source.params)?;
            let morphism = AlgebroidMorphism::new(
                "rigid_body_quotient",
                Arc::clone(&source.algebroid),
                Arc::clone(&target.algebroid),
                |_| DVector::zeros(0),
                |q| to_dmatrix(&euler_kinematic_matrix(q)),
            )
            .with_base_jacobian(|_| DMatrix::zeros(0, 3))
            .fiberwise_invertible(true);
            Ok(MorphismBundle {
                name: name.to_string(),
                source,
                target,
                morphism,
            })
        }
        _ => unreachable!("listed morphism without a builder"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{elp_rhs, integrate, Method};
    use crate::reduction::{check_invariance, check_morphism};

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn list_is_stable_and_complete() {
        let names: Vec<_> = list().iter().map(|e| e.name).collect();
        assert!(names.contains(&"rigid_body"));
        assert!(names.len() >= 6);
        assert_eq!(names, list().iter().map(|e| e.name).collect::<Vec<_>>());
        for e in list() {
            assert!(!e.doc.is_empty());
            let b = build(e.name, &Params::new()).unwrap();
            assert_eq!(e.dims, (b.algebroid.base_dim(), b.algebroid.fiber_dim()), "{}", e.name);
            assert_eq!(e.routhian, b.routhian.is_some(), "{}", e.name);
        }
    }

    #[test]
    fn rigid_body_value() {
        let b = build("rigid_body", &params(&[("I1", 1.0), ("I2", 2.0), ("I3", 3.0)])).unwrap();
        assert_eq!(b.lagrangian.value(&v(&[]), &v(&[1.0, 1.0, 1.0])).unwrap(), 3.0);
    }

    #[test]
    fn bad_params() {
        assert!(matches!(
            build("rigid_body", &params(&[("I1", -1.0)])),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            build("rigid_body", &params(&[("I4", 1.0)])),
            Err(Error::Input(_))
        ));
        assert!(matches!(build("pendulum", &Params::new()), Err(Error::Input(_))));
        assert!(matches!(
            build("harmonic_oscillator", &params(&[("k", f64::NAN)])),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn oscillator_default_state() {
        let b = build("harmonic_oscillator", &params(&[("k", 1.0)])).unwrap();
        assert_eq!(b.initial, State::from_slices(0.0, &[1.0], &[0.0]));
    }

    #[test]
    fn wong_structure_and_force() {
        let b = build("wong_abelian", &params(&[("B", 1.0)])).unwrap();
        let c = b.algebroid.structure_eval(&v(&[0.4, -0.3])).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let expected = match (k, i, j) {
                        (2, 0, 1) => -1.0,
                        (2, 1, 0) => 1.0,
                        _ => 0.0,
                    };
                    assert!((c.get(k, i, j) - expected).abs() < 1e-9, "{k}{i}{j}");
                }
            }
        }
        // Lorentz force x_ddot = B v (x2_dot, -x1_dot)
        let (_, acc) = elp_rhs(&b.lagrangian, &State::from_slices(0.0, &[0.4, -0.3], &[0.5, 2.0, 1.5])).unwrap();
        assert!((acc - v(&[1.5 * 2.0, -1.5 * 0.5, 0.0])).amax() < 1e-9);
    }

    #[test]
    fn euler_chart_initial_velocity() {
        let b = build("rigid_body_chart", &Params::new()).unwrap();
        assert!((&b.initial.xi - v(&[-1.0, 1.0, 1.0])).amax() < 1e-15);
        let w = euler_kinematic_matrix(&b.initial.q) * Vector3::new(-1.0, 1.0, 1.0);
        assert!((w - Vector3::new(1.0, 1.0, 1.0)).amax() < 1e-15);
    }

    #[test]
    fn chart_rigid_body_stays_in_chart_for_two_seconds() {
        let b = build("rigid_body_chart", &Params::new()).unwrap();
        let traj = integrate(&b.lagrangian, &b.initial, 2.0, 1e-3, Method::Rk4).unwrap();
        let theta_min = traj.states.iter().map(|s| s.q[1]).fold(f64::INFINITY, f64::min);
        let theta_max = traj.states.iter().map(|s| s.q[1]).fold(f64::NEG_INFINITY, f64::max);
        assert!(theta_min > EULER_THETA_MARGIN && theta_max < PI - EULER_THETA_MARGIN);
    }

    #[test]
    fn morphisms_are_anchor_compatible_and_invariant() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (name, system) in [
            ("cyclic_quotient", "cyclic_oscillator"),
            ("rigid_body_quotient", "rigid_body_chart"),
            ("identity", "wong_abelian"),
        ] {
            let mb = build_morphism(name, system, &Params::new()).unwrap();
            let pts: Vec<_> = (0..100).map(|_| mb.source.algebroid.sample_point(&mut rng)).collect();
            let check = check_morphism(&mb.morphism, &pts).unwrap();
            assert!(check.anchor_compat <= 1e-12, "{name}");
            assert!(check.invertible(), "{name}");
            let samples: Vec<_> = pts
                .iter()
                .map(|q| {
                    let m = mb.source.algebroid.fiber_dim();
                    (q.clone(), DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
                })
                .collect();
            let d = check_invariance(&mb.source.lagrangian, &mb.target.lagrangian, &mb.morphism, &samples).unwrap();
            assert!(d <= 1e-10, "{name}: {d}");
        }
        assert!(build_morphism("cyclic_quotient", "rigid_body", &Params::new()).is_err());
        assert!(build_morphism("nope", "rigid_body", &Params::new()).is_err());
    }
}
