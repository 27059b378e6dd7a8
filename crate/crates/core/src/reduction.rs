//! Algebroid morphisms and numerical checks of the reduction theorems.
//!
//! A morphism `(phi, Phi)` maps `(q, xi)` on the source to `(phi(q), Phi(q) xi)` on the
//! target. If `L = l o Phi`, pushing a source solution forward gives a target solution;
//! [`reduce_compare`] measures how far the two computed flows are apart.
//!
//! Full bracket compatibility of a morphism has no finite coordinate test here. The
//! anchor condition `rho'(phi) Phi = D phi rho` is checked as a necessary condition, and
//! a morphism that passes it while the flows disagree is reported as suspect.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::algebroid::AlgebroidModel;
use crate::dynamics::{
    diagnostics, hp_diagnostics, hp_integrate, integrate, DiagnosticsReport, InvariantHook, Method, PontryaginState,
    State, Trajectory,
};
use crate::error::{Error, Result};
use crate::fd;
use crate::lagrangian::{make_routhian, LagrangianModel, RouthianInput};
use crate::linalg;

type VecMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Invariance discrepancy above which a comparison carries a warning.
pub const INVARIANCE_TOLERANCE: f64 = 1e-8;
/// Anchor residual below which a morphism counts as anchor-compatible.
pub const ANCHOR_TOLERANCE: f64 = 1e-10;
/// Required accuracy of the initial cyclic momentum in [`routh_compare`].
pub const MOMENTUM_TOLERANCE: f64 = 1e-10;

#[derive(Clone)]
pub struct AlgebroidMorphism {
    label: String,
    source: Arc<AlgebroidModel>,
    target: Arc<AlgebroidModel>,
    base_map: VecMap,
    base_jacobian: Option<MatMap>,
    fiber_map: MatMap,
    fiberwise_invertible: bool,
}

impl std::fmt::Debug for AlgebroidMorphism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlgebroidMorphism")
            .field("label", &self.label)
            .field("source", &self.source.label())
            .field("target", &self.target.label())
            .field("fiberwise_invertible", &self.fiberwise_invertible)
            .finish()
    }
}

impl AlgebroidMorphism {
    pub fn new<P, F>(
        label: impl Into<String>,
        source: Arc<AlgebroidModel>,
        target: Arc<AlgebroidModel>,
        base_map: P,
        fiber_map: F,
    ) -> Self
    where
        P: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        AlgebroidMorphism {
            label: label.into(),
            source,
            target,
            base_map: Arc::new(base_map),
            base_jacobian: None,
            fiber_map: Arc::new(fiber_map),
            fiberwise_invertible: false,
        }
    }

    /// The identity morphism of `alg`.
    pub fn identity(alg: Arc<AlgebroidModel>) -> Self {
        let n = alg.base_dim();
        let m = alg.fiber_dim();
        AlgebroidMorphism::new(
            format!("identity({})", alg.label()),
            Arc::clone(&alg),
            alg,
            |q| q.clone(),
            move |_| DMatrix::identity(m, m),
        )
        .with_base_jacobian(move |_| DMatrix::identity(n, n))
        .fiberwise_invertible(true)
    }

    pub fn with_base_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.base_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn fiberwise_invertible(mut self, flag: bool) -> Self {
        self.fiberwise_invertible = flag;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source(&self) -> &Arc<AlgebroidModel> {
        &self.source
    }

    pub fn target(&self) -> &Arc<AlgebroidModel> {
        &self.target
    }

    pub fn is_fiberwise_invertible(&self) -> bool {
        self.fiberwise_invertible
    }

    /// `phi(q)`.
    pub fn base_point(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.source.check_point(q)?;
        let out = (self.base_map)(q);
        if out.len() != self.target.base_dim() {
            return Err(Error::Morphism(format!(
                "{}: base map returned {} coordinates, target base has {}",
                self.label,
                out.len(),
                self.target.base_dim()
            )));
        }
        Ok(out)
    }

    /// `D phi(q)`, `n' x n`; central differences when no analytic Jacobian is set.
    pub fn base_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.source.check_point(q)?;
        let (rows, cols) = (self.target.base_dim(), self.source.base_dim());
        let jac = match &self.base_jacobian {
            Some(j) => j(q),
            None => fd::jacobian(|y| (self.base_map)(y), q, rows, fd::step_for(q, None)),
        };
        if jac.shape() != (rows, cols) {
            return Err(Error::Morphism(format!(
                "{}: base Jacobian has shape {:?}, expected ({rows}, {cols})",
                self.label,
                jac.shape()
            )));
        }
        Ok(jac)
    }

    /// `Phi(q)`, `m' x m`.
    pub fn fiber_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.source.check_point(q)?;
        let (rows, cols) = (self.target.fiber_dim(), self.source.fiber_dim());
        let f = (self.fiber_map)(q);
        if f.shape() != (rows, cols) {
            return Err(Error::Morphism(format!(
                "{}: fiber map has shape {:?}, expected ({rows}, {cols})",
                self.label,
                f.shape()
            )));
        }
        Ok(f)
    }

    /// `(phi(q), Phi(q) xi)`.
    pub fn push_state(&self, s: &State) -> Result<State> {
        let q = self.base_point(&s.q)?;
        let phi = self.fiber_matrix(&s.q)?;
        if s.xi.len() != phi.ncols() {
            return Err(Error::dims("fiber vector", phi.ncols(), s.xi.len()));
        }
        Ok(State::new(s.t, q, phi * &s.xi))
    }

    /// `(phi(q), Phi v, Phi^{-T} p)`; a singular `Phi(q)` is a morphism error.
    pub fn push_pontryagin(&self, s: &PontryaginState) -> Result<PontryaginState> {
        let q = self.base_point(&s.q)?;
        let phi = self.fiber_matrix(&s.q)?;
        if !phi.is_square() {
            return Err(Error::Morphism(format!(
                "{}: momentum push-forward needs a square fiber map, got {:?}",
                self.label,
                phi.shape()
            )));
        }
        let cond = linalg::condition_estimate(&phi);
        let p = if cond < linalg::REGULARITY_THRESHOLD {
            linalg::solve(&phi.transpose(), &s.p)
        } else {
            None
        };
        let p = p.ok_or_else(|| {
            Error::Morphism(format!(
                "{}: fiber map singular at t = {}, q = {:?} (condition {cond:.3e})",
                self.label,
                s.t,
                s.q.as_slice()
            ))
        })?;
        Ok(PontryaginState::new(s.t, q, &phi * &s.v, p))
    }
}

/// Residuals reported by [`check_morphism`].
#[derive(Debug, Clone, PartialEq)]
pub struct MorphismCheck {
    pub samples: usize,
    /// Max of `|rho'(phi(q)) Phi(q) - D phi(q) rho(q)|_inf` over samples.
    pub anchor_compat: f64,
    /// Max condition estimate of `Phi(q)` when the morphism is flagged invertible
    /// (infinite when the fiber dimensions differ).
    pub max_condition: Option<f64>,
}

impl MorphismCheck {
    pub fn anchor_compatible(&self) -> bool {
        self.anchor_compat <= ANCHOR_TOLERANCE
    }

    pub fn invertible(&self) -> bool {
        self.max_condition.is_none_or(|c| c < linalg::REGULARITY_THRESHOLD)
    }
}

pub fn check_morphism(mor: &AlgebroidMorphism, samples: &[DVector<f64>]) -> Result<MorphismCheck> {
    let mut anchor_compat: f64 = 0.0;
    let square = mor.source.fiber_dim() == mor.target.fiber_dim();
    let mut max_condition = if mor.fiberwise_invertible {
        Some(if square { 1.0f64 } else { f64::INFINITY })
    } else {
        None
    };
    for q in samples {
        let qt = mor.base_point(q)?;
        let phi = mor.fiber_matrix(q)?;
        let rho_t = mor.target.anchor_at(&qt)?;
        let rho_s = mor.source.anchor_at(q)?;
        let dphi = mor.base_jacobian(q)?;
        let r = rho_t.as_ref() * &phi - dphi * rho_s.as_ref();
        if !r.is_empty() {
            anchor_compat = anchor_compat.max(r.amax());
        }
        if let (Some(c), true) = (max_condition.as_mut(), square) {
            *c = c.max(linalg::condition_estimate(&phi));
        }
    }
    Ok(MorphismCheck {
        samples: samples.len(),
        anchor_compat,
        max_condition,
    })
}

/// `max |L(q, xi) - l(phi(q), Phi(q) xi)|` over samples.
pub fn check_invariance(
    source: &LagrangianModel,
    target: &LagrangianModel,
    mor: &AlgebroidMorphism,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (q, xi) in samples {
        let pushed = mor.push_state(&State::new(0.0, q.clone(), xi.clone()))?;
        let d = source.value(q, xi)? - target.value(&pushed.q, &pushed.xi)?;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

pub fn push_trajectory(mor: &AlgebroidMorphism, traj: &Trajectory<State>) -> Result<Trajectory<State>> {
    Ok(Trajectory {
        label: format!("{} pushed by {}", traj.label, mor.label),
        method: traj.method,
        dt: traj.dt,
        states: traj.states.iter().map(|s| mor.push_state(s)).collect::<Result<_>>()?,
    })
}

pub fn push_hp_trajectory(
    mor: &AlgebroidMorphism,
    traj: &Trajectory<PontryaginState>,
) -> Result<Trajectory<PontryaginState>> {
    Ok(Trajectory {
        label: format!("{} pushed by {}", traj.label, mor.label),
        method: traj.method,
        dt: traj.dt,
        states: traj
            .states
            .iter()
            .map(|s| mor.push_pontryagin(s))
            .collect::<Result<_>>()?,
    })
}

/// Integrator and invariant hooks shared by the comparisons.
#[derive(Debug, Clone)]
pub struct CompareSettings {
    pub method: Method,
    pub source_hooks: Vec<InvariantHook>,
    pub target_hooks: Vec<InvariantHook>,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            method: Method::Rk4,
            source_hooks: Vec::new(),
            target_hooks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The flows agree within tolerance.
    Agree,
    /// Anchor-compatible and invariant, but the flows disagree: the bracket part of the
    /// morphism condition may fail.
    BracketSuspect,
    /// The flows disagree and the morphism already fails a checkable condition.
    Disagree,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Agree => "agree",
            Verdict::BracketSuspect => "bracket_compatibility_suspect",
            Verdict::Disagree => "disagree",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    /// Per-node Euclidean distance in target coordinates.
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
    /// `max |L - l o Phi|` along the source run.
    pub invariance: f64,
    pub invariance_warning: bool,
    /// Anchor residual of the morphism along the source run.
    pub anchor_compat: f64,
    pub source: DiagnosticsReport,
    pub target: DiagnosticsReport,
}

impl CompareReport {
    pub fn verdict(&self, tolerance: f64) -> Verdict {
        if self.max_deviation <= tolerance {
            Verdict::Agree
        } else if self.anchor_compat <= ANCHOR_TOLERANCE && !self.invariance_warning {
            Verdict::BracketSuspect
        } else {
            Verdict::Disagree
        }
    }
}

fn check_sides(source: &LagrangianModel, target: &LagrangianModel, mor: &AlgebroidMorphism) -> Result<()> {
    let dims = |a: &AlgebroidModel| (a.base_dim(), a.fiber_dim());
    if dims(source.algebroid()) != dims(&mor.source) || dims(target.algebroid()) != dims(&mor.target) {
        return Err(Error::Morphism(format!(
            "{}: maps {:?} -> {:?} but the Lagrangians live on {:?} -> {:?}",
            mor.label,
            dims(&mor.source),
            dims(&mor.target),
            dims(source.algebroid()),
            dims(target.algebroid())
        )));
    }
    Ok(())
}

/// Evenly spaced indices, at most `count` of them, always including both ends.
fn spread(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..count).map(|k| k * (len - 1) / (count - 1)).collect();
    idx.dedup();
    idx
}

fn distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

fn stacked(s: &State) -> DVector<f64> {
    let mut v = DVector::zeros(s.q.len() + s.xi.len());
    v.rows_mut(0, s.q.len()).copy_from(&s.q);
    v.rows_mut(s.q.len(), s.xi.len()).copy_from(&s.xi);
    v
}

fn source_checks(
    source: &LagrangianModel,
    target: &LagrangianModel,
    mor: &AlgebroidMorphism,
    states: &[State],
) -> Result<(f64, f64)> {
    let picks = spread(states.len(), 101);
    let samples: Vec<_> = picks
        .iter()
        .map(|&k| (states[k].q.clone(), states[k].xi.clone()))
        .collect();
    let invariance = check_invariance(source, target, mor, &samples)?;
    let points: Vec<_> = samples.into_iter().map(|(q, _)| q).collect();
    let anchor = check_morphism(mor, &points)?.anchor_compat;
    Ok((invariance, anchor))
}

/// Run `a` on a scoped thread alongside `b` (sequentially where threads are unavailable).
#[cfg(not(target_arch = "wasm32"))]
fn both<A: Send, B>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B) -> (A, B) {
    std::thread::scope(|scope| {
        let h = scope.spawn(a);
        let rb = b();
        (h.join().expect("integration thread panicked"), rb)
    })
}

#[cfg(target_arch = "wasm32")]
fn both<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
    (a(), b())
}

/// Integrate on the source from `s0` and on the target from its push-forward, and
/// compare the pushed source run with the target run node by node.
pub fn reduce_compare(
    source: &LagrangianModel,
    target: &LagrangianModel,
    mor: &AlgebroidMorphism,
    s0: &State,
    t_final: f64,
    dt: f64,
    settings: &CompareSettings,
) -> Result<CompareReport> {
    check_sides(source, target, mor)?;
    let t0 = mor.push_state(s0)?;
    let (full, reduced) = both(
        || integrate(source, s0, t_final, dt, settings.method),
        || integrate(target, &t0, t_final, dt, settings.method),
    );
    let (full, reduced) = (full?, reduced?);
    let pushed = push_trajectory(mor, &full)?;
    let deviation: Vec<f64> = pushed
        .states
        .iter()
        .zip(&reduced.states)
        .map(|(a, b)| distance(&stacked(a), &stacked(b)))
        .collect();
    let (invariance, anchor_compat) = source_checks(source, target, mor, &full.states)?;
    Ok(CompareReport {
        max_deviation: deviation.iter().fold(0.0, |a, &d| a.max(d)),
        deviation,
        invariance,
        invariance_warning: invariance > INVARIANCE_TOLERANCE,
        anchor_compat,
        source: diagnostics(source, &full, &settings.source_hooks)?,
        target: diagnostics(target, &reduced, &settings.target_hooks)?,
    })
}

/// Hamilton-Pontryagin version of [`reduce_compare`]: `p` is pushed by `Phi^{-T}` and the
/// deviation is measured in `(q, v, p)`.
pub fn hp_reduce_compare(
    source: &LagrangianModel,
    target: &LagrangianModel,
    mor: &AlgebroidMorphism,
    s0: &PontryaginState,
    t_final: f64,
    dt: f64,
    settings: &CompareSettings,
) -> Result<CompareReport> {
    check_sides(source, target, mor)?;
    if !mor.fiberwise_invertible {
        return Err(Error::Morphism(format!(
            "{}: HP reduction needs a fiberwise invertible morphism",
            mor.label
        )));
    }
    let t0 = mor.push_pontryagin(s0)?;
    let (full, reduced) = both(
        || hp_integrate(source, s0, t_final, dt, settings.method),
        || hp_integrate(target, &t0, t_final, dt, settings.method),
    );
    let (full, reduced) = (full?, reduced?);
    let pushed = push_hp_trajectory(mor, &full)?;
    let deviation: Vec<f64> = pushed
        .states
        .iter()
        .zip(&reduced.states)
        .map(|(a, b)| {
            (distance(&a.q, &b.q).powi(2) + distance(&a.v, &b.v).powi(2) + distance(&a.p, &b.p).powi(2)).sqrt()
        })
        .collect();
    let (invariance, anchor_compat) = source_checks(source, target, mor, &full.to_states().states)?;
    Ok(CompareReport {
        max_deviation: deviation.iter().fold(0.0, |a, &d| a.max(d)),
        deviation,
        invariance,
        invariance_warning: invariance > INVARIANCE_TOLERANCE,
        anchor_compat,
        source: hp_diagnostics(source, &full, &settings.source_hooks)?,
        target: hp_diagnostics(target, &reduced, &settings.target_hooks)?,
    })
}

#[derive(Debug, Clone)]
pub struct RouthReport {
    /// Per-node `|y_full - y_routh|`.
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
    /// Max of `|dL/dtheta_dot - x|_inf` along the full flow.
    pub momentum_drift: f64,
    /// Max of `|x(t) - x(0)|_inf` along the Routhian flow (zero in exact arithmetic).
    pub routh_x_drift: f64,
    /// A constraint solve met a near-singular `d^2L/dtheta_dot^2`.
    pub near_singular: bool,
    pub full: DiagnosticsReport,
    pub reduced: DiagnosticsReport,
}

/// Integrate the full flow from `s0_full = ((theta, y), (theta_dot, y_dot))` and the
/// Routhian flow from `((x, y0), y_dot0)`, and compare the `y` trajectories.
pub fn routh_compare(
    input: &RouthianInput,
    s0_full: &State,
    t_final: f64,
    dt: f64,
    settings: &CompareSettings,
) -> Result<RouthReport> {
    let full = &input.full_lagrangian;
    let k = input.n_cyclic;
    full.check_dims(&s0_full.q, &s0_full.xi)?;
    let n = full.base_dim();
    if k == 0 || k >= n {
        return Err(Error::Input(format!("n_cyclic must be in 1..{n}, got {k}")));
    }
    let m = n - k;
    if input.momentum.len() != k {
        return Err(Error::dims("momentum", k, input.momentum.len()));
    }
    let p0 = full.grad_xi(&s0_full.q, &s0_full.xi)?;
    let mismatch = (p0.rows(0, k) - &input.momentum).amax();
    if !(mismatch <= MOMENTUM_TOLERANCE) {
        return Err(Error::Input(format!(
            "initial state has dL/dtheta_dot = {:?}, expected momentum {:?} (mismatch {mismatch:.3e})",
            p0.rows(0, k).as_slice(),
            input.momentum.as_slice()
        )));
    }
    let mut input = input.clone();
    input.theta_dot_guess = s0_full.xi.rows(0, k).into_owned();
    let routh = make_routhian(input.clone())?;
    routh.reset_warm_start(&input.theta_dot_guess);
    let reduced_lag = Arc::clone(routh.lagrangian());

    let mut q0 = DVector::zeros(n);
    q0.rows_mut(0, k).copy_from(&input.momentum);
    q0.rows_mut(k, m).copy_from(&s0_full.q.rows(k, m));
    let r0 = State::new(s0_full.t, q0, s0_full.xi.rows(k, m).into_owned());

    let (full_run, reduced_run) = both(
        || integrate(full, s0_full, t_final, dt, settings.method),
        || integrate(&reduced_lag, &r0, t_final, dt, settings.method),
    );
    let (full_run, reduced_run) = (full_run?, reduced_run?);
    let deviation: Vec<f64> = full_run
        .states
        .iter()
        .zip(&reduced_run.states)
        .map(|(a, b)| (a.q.rows(k, m) - b.q.rows(k, m)).norm())
        .collect();
    let mut momentum_drift: f64 = 0.0;
    for s in &full_run.states {
        let p = full.grad_xi(&s.q, &s.xi)?;
        momentum_drift = momentum_drift.max((p.rows(0, k) - &input.momentum).amax());
    }
    let routh_x_drift = reduced_run
        .states
        .iter()
        .fold(0.0f64, |a, s| a.max((s.q.rows(0, k) - &input.momentum).amax()));
    Ok(RouthReport {
        max_deviation: deviation.iter().fold(0.0, |a, &d| a.max(d)),
        deviation,
        momentum_drift,
        routh_x_drift,
        near_singular: routh.constraint_near_singular(),
        full: diagnostics(full, &full_run, &settings.source_hooks)?,
        reduced: diagnostics(&reduced_lag, &reduced_run, &settings.target_hooks)?,
    })
}
