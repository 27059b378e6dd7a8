//! Per-run diagnostics: energy drift, A-path and ELP residuals, structure identities
//! along the path, and user invariants.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::hp::constraint_residual;
use super::{apath_residual_per_node, elp_residual, PontryaginState, State, Trajectory};
use crate::algebroid::StructureResiduals;
use crate::error::Result;
use crate::lagrangian::LagrangianModel;

/// Step used for finite-difference structure identity checks along a trajectory.
pub const IDENTITY_FD_STEP: f64 = 1e-3;

type InvariantFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;

/// A named scalar `I(q, xi)` expected to be conserved.
#[derive(Clone)]
pub struct InvariantHook {
    pub name: String,
    f: InvariantFn,
}

impl InvariantHook {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        InvariantHook {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, q: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        (self.f)(q, xi)
    }
}

impl fmt::Debug for InvariantHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvariantHook").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDrift {
    pub name: String,
    pub initial: f64,
    pub max_abs_drift: f64,
    /// `max_abs_drift / |initial|`, or the absolute drift when the initial value is 0.
    pub max_rel_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub label: String,
    pub nodes: usize,
    pub energy_initial: f64,
    pub energy_max_abs_drift: f64,
    pub energy_mean_abs_drift: f64,
    pub energy_max_rel_drift: f64,
    /// Per-node `|E(t) - E(t0)|`.
    pub energy_drift: Vec<f64>,
    /// Per-node `|q_dot - rho xi|_inf`.
    pub apath: Vec<f64>,
    pub apath_max: f64,
    /// `None` for trajectories with fewer than 3 nodes.
    pub elp_max: Option<f64>,
    /// Identity residuals at the first, middle and last node.
    pub structure: StructureResiduals,
    pub invariants: Vec<InvariantDrift>,
    /// HP runs only: max `|p - dL/dv|_inf` over nodes, and per node.
    pub constraint_max: Option<f64>,
    pub constraint: Vec<f64>,
}

impl DiagnosticsReport {
    pub fn invariant(&self, name: &str) -> Option<&InvariantDrift> {
        self.invariants.iter().find(|d| d.name == name)
    }
}

fn relative(drift: f64, initial: f64) -> f64 {
    if initial == 0.0 {
        drift
    } else {
        drift / initial.abs()
    }
}

fn drift_of(name: &str, values: &[f64]) -> InvariantDrift {
    let initial = values.first().copied().unwrap_or(0.0);
    let max_abs_drift = values.iter().fold(0.0f64, |a, v| a.max((v - initial).abs()));
    InvariantDrift {
        name: name.to_string(),
        initial,
        max_abs_drift,
        max_rel_drift: relative(max_abs_drift, initial),
    }
}

pub fn diagnostics(
    lag: &LagrangianModel,
    traj: &Trajectory<State>,
    hooks: &[InvariantHook],
) -> Result<DiagnosticsReport> {
    let states = &traj.states;
    let energies = states
        .iter()
        .map(|s| lag.energy(&s.q, &s.xi))
        .collect::<Result<Vec<_>>>()?;
    let energy = drift_of("energy", &energies);
    let energy_drift: Vec<f64> = energies.iter().map(|e| (e - energy.initial).abs()).collect();
    let mean = if energy_drift.is_empty() {
        0.0
    } else {
        energy_drift.iter().sum::<f64>() / energy_drift.len() as f64
    };
    let apath = apath_residual_per_node(lag, states)?;
    let apath_max = apath.iter().fold(0.0f64, |a, &v| a.max(v));
    let elp_max = if states.len() >= 3 {
        Some(elp_residual(lag, traj)?.max_elp())
    } else {
        None
    };
    let alg = lag.algebroid();
    let mut structure = StructureResiduals::default();
    if !states.is_empty() {
        for k in [0, states.len() / 2, states.len() - 1] {
            structure = structure.merge(&alg.check_structure_identities(&states[k].q, IDENTITY_FD_STEP)?);
        }
    }
    let invariants = hooks
        .iter()
        .map(|h| {
            let vals: Vec<f64> = states.iter().map(|s| h.eval(&s.q, &s.xi)).collect();
            drift_of(&h.name, &vals)
        })
        .collect();
    Ok(DiagnosticsReport {
        label: traj.label.clone(),
        nodes: states.len(),
        energy_initial: energy.initial,
        energy_max_abs_drift: energy.max_abs_drift,
        energy_mean_abs_drift: mean,
        energy_max_rel_drift: energy.max_rel_drift,
        energy_drift,
        apath,
        apath_max,
        elp_max,
        structure,
        invariants,
        constraint_max: None,
        constraint: Vec::new(),
    })
}

/// Diagnostics of the `(q, v)` part plus the Legendre constraint residual.
pub fn hp_diagnostics(
    lag: &LagrangianModel,
    traj: &Trajectory<PontryaginState>,
    hooks: &[InvariantHook],
) -> Result<DiagnosticsReport> {
    let mut report = diagnostics(lag, &traj.to_states(), hooks)?;
    report.constraint = traj
        .states
        .iter()
        .map(|s| constraint_residual(lag, s))
        .collect::<Result<Vec<_>>>()?;
    report.constraint_max = Some(report.constraint.iter().fold(0.0f64, |a, &v| a.max(v)));
    Ok(report)
}
