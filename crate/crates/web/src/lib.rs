//! Browser bindings for three demo operations. Each returns a flat row-major
//! `Float64Array`; the column layout is given on the function.

use algebromech::catalog::{self, Params};
use algebromech::dynamics::{integrate, Method, State};
use algebromech::reduction::{routh_compare, CompareSettings};
use wasm_bindgen::prelude::*;

const MAX_NODES: f64 = 200_000.0;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check_grid(t_final: f64, dt: f64) -> Result<(), String> {
    if !(t_final > 0.0 && dt > 0.0) || (t_final / dt).ceil() > MAX_NODES {
        return Err(format!("need t_final > 0, dt > 0 and at most {MAX_NODES} steps"));
    }
    Ok(())
}

/// Rows of `(t, xi_0.., energy, hook_0..)` for a catalog system.
fn trajectory_rows(system: &str, p: &Params, s0: Option<State>, t_final: f64, dt: f64) -> Result<Vec<f64>, String> {
    check_grid(t_final, dt)?;
    let b = catalog::build(system, p).map_err(|e| e.to_string())?;
    let s0 = s0.unwrap_or_else(|| b.initial.clone());
    let traj = integrate(&b.lagrangian, &s0, t_final, dt, Method::Rk4).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for s in &traj.states {
        out.push(s.t);
        out.extend(s.q.iter());
        out.extend(s.xi.iter());
        out.push(b.lagrangian.energy(&s.q, &s.xi).map_err(|e| e.to_string())?);
        out.extend(b.invariants.iter().map(|h| h.eval(&s.q, &s.xi)));
    }
    Ok(out)
}

/// Free rigid body. Columns `t, w1, w2, w3, energy, energy_hook, casimir`.
pub fn rigid_body(inertia: [f64; 3], w0: [f64; 3], t_final: f64, dt: f64) -> Result<Vec<f64>, String> {
    let p = params(&[("I1", inertia[0]), ("I2", inertia[1]), ("I3", inertia[2])]);
    trajectory_rows("rigid_body", &p, Some(State::from_slices(0.0, &[], &w0)), t_final, dt)
}

/// Charged particle in a nonabelian field. Columns
/// `t, x, y, vx, vy, v1, v2, v3, energy, energy_hook, charge_norm_squared`.
pub fn wong_orbit(field: f64, x0: [f64; 2], v0: [f64; 5], t_final: f64, dt: f64) -> Result<Vec<f64>, String> {
    trajectory_rows(
        "wong_so3",
        &params(&[("B", field)]),
        Some(State::from_slices(0.0, &x0, &v0)),
        t_final,
        dt,
    )
}

/// Full central force flow against its Routhian flow at momentum `x`.
/// Columns `t, r_full, deviation`; the last element is the max deviation.
pub fn routh(x: f64, r0: f64, rdot0: f64, t_final: f64, dt: f64) -> Result<Vec<f64>, String> {
    check_grid(t_final, dt)?;
    let b = catalog::build("central_force_routh", &params(&[("x", x), ("r0", r0)])).map_err(|e| e.to_string())?;
    let input = b.routhian.clone().ok_or("no Routhian set-up")?;
    let s0 = State::from_slices(0.0, &[0.0, r0], &[x / (r0 * r0), rdot0]);
    let full = integrate(&b.lagrangian, &s0, t_final, dt, Method::Rk4).map_err(|e| e.to_string())?;
    let r = routh_compare(&input, &s0, t_final, dt, &CompareSettings::default()).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * full.states.len() + 1);
    for (s, d) in full.states.iter().zip(&r.deviation) {
        out.extend([s.t, s.q[1], *d]);
    }
    out.push(r.max_deviation);
    Ok(out)
}

#[wasm_bindgen(js_name = rigidBody)]
pub fn rigid_body_js(inertia: Vec<f64>, w0: Vec<f64>, t_final: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    let (i, w): (&[f64; 3], &[f64; 3]) = match (inertia.as_slice().try_into(), w0.as_slice().try_into()) {
        (Ok(i), Ok(w)) => (i, w),
        _ => return Err(JsError::new("inertia and w0 need three entries each")),
    };
    rigid_body(*i, *w, t_final, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = wongOrbit)]
pub fn wong_orbit_js(field: f64, state: Vec<f64>, t_final: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    if state.len() != 7 {
        return Err(JsError::new("state is x, y, vx, vy, v1, v2, v3"));
    }
    let v0 = [state[2], state[3], state[4], state[5], state[6]];
    wong_orbit(field, [state[0], state[1]], v0, t_final, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = routh)]
pub fn routh_js(x: f64, r0: f64, rdot0: f64, t_final: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    routh(x, r0, rdot0, t_final, dt).map_err(|e| JsError::new(&e))
}
