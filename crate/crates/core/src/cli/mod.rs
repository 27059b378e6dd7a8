//! Command-line front end: `run`, `check`, `compare` and `list`.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    parse_config, render_config, CompareConfig, CompareKind, Formulation, InitialConfig, RunConfig, DEFAULT_DT,
    DEFAULT_TOLERANCE, DEFAULT_T_FINAL,
};

use crate::catalog::{self, identity_tolerance, Params, SystemBundle, GRADIENT_TOL};
use crate::dynamics::{
    diagnostics, hp_diagnostics, hp_integrate, integrate, recover_velocity, DiagnosticsReport, PontryaginState, State,
    Trajectory, IDENTITY_FD_STEP,
};
use crate::error::{Error, Result};
use crate::fd;
use crate::reduction::{hp_reduce_compare, reduce_compare, routh_compare, CompareSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;
pub const EXIT_CHART: i32 = 4;

/// Exit code for an error raised while running a command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Input(_) | Error::Construction(_) => EXIT_CONFIG,
        Error::Regularity { .. } | Error::Solve { .. } | Error::Morphism(_) => EXIT_SOLVER,
        Error::ChartExit { .. } => EXIT_CHART,
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn nums(x: &DVector<f64>) -> String {
    x.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ")
}

/// Replace `path` by `contents` through a temporary file in the same directory,
/// creating missing parent directories.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |e: std::io::Error| Error::Input(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn build_system(cfg: &RunConfig) -> Result<SystemBundle> {
    catalog::build(&cfg.system, &cfg.params)
}

fn vec_or(x: &Option<Vec<f64>>, default: &DVector<f64>) -> DVector<f64> {
    x.as_ref()
        .map_or_else(|| default.clone(), |v| DVector::from_column_slice(v))
}

/// Initial `(q, xi)`: config values over catalog defaults; `p` alone is converted by the
/// inverse Legendre map.
pub fn elp_initial(bundle: &SystemBundle, init: &InitialConfig) -> Result<State> {
    let d = &bundle.initial;
    let q = vec_or(&init.q, &d.q);
    let xi = match (&init.xi, &init.v, &init.p) {
        (Some(x), _, _) | (None, Some(x), _) => DVector::from_column_slice(x),
        (None, None, Some(p)) => recover_velocity(&bundle.lagrangian, &q, &DVector::from_column_slice(p), &d.xi)?.0,
        (None, None, None) => d.xi.clone(),
    };
    Ok(State::new(d.t, q, xi))
}

/// Initial `(q, v, p)`; a missing `p` is `dL/dv(q, v)`.
pub fn hp_initial(bundle: &SystemBundle, init: &InitialConfig) -> Result<PontryaginState> {
    let d = &bundle.initial;
    let lag = &bundle.lagrangian;
    let q = vec_or(&init.q, &d.q);
    let (v, p) = match (&init.v, &init.xi, &init.p) {
        (Some(v), _, Some(p)) | (None, Some(v), Some(p)) => {
            (DVector::from_column_slice(v), DVector::from_column_slice(p))
        }
        (None, None, Some(p)) => {
            let p = DVector::from_column_slice(p);
            (recover_velocity(lag, &q, &p, &d.xi)?.0, p)
        }
        (v, xi, None) => {
            let v = vec_or(if v.is_some() { v } else { xi }, &d.xi);
            let p = lag.grad_xi(&q, &v)?;
            (v, p)
        }
    };
    Ok(PontryaginState::new(d.t, q, v, p))
}

fn csv_header(out: &mut String, n: usize, m: usize, hp: bool) {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..n).map(|i| format!("q_{i}")));
    cols.extend((0..m).map(|i| format!("xi_{i}")));
    cols.push("energy".into());
    cols.push("apath_residual".into());
    if hp {
        cols.extend((0..m).map(|i| format!("v_{i}")));
        cols.extend((0..m).map(|i| format!("p_{i}")));
        cols.push("constraint_residual".into());
    }
    out.push_str(&cols.join(","));
    out.push('\n');
}

fn csv_rows(
    bundle: &SystemBundle,
    states: &[State],
    report: &DiagnosticsReport,
    hp: Option<&[PontryaginState]>,
) -> Result<String> {
    let (n, m) = (bundle.lagrangian.base_dim(), bundle.lagrangian.fiber_dim());
    let mut out = String::new();
    csv_header(&mut out, n, m, hp.is_some());
    for (k, s) in states.iter().enumerate() {
        let mut row: Vec<String> = vec![num(s.t)];
        row.extend(s.q.iter().chain(s.xi.iter()).map(|&x| num(x)));
        row.push(num(bundle.lagrangian.energy(&s.q, &s.xi)?));
        row.push(num(report.apath[k]));
        if let Some(hp) = hp {
            row.extend(hp[k].v.iter().chain(hp[k].p.iter()).map(|&x| num(x)));
            row.push(num(report.constraint[k]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn report_diagnostics(out: &mut String, prefix: &str, r: &DiagnosticsReport) {
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{prefix}{k} = {v}");
    };
    kv("nodes", r.nodes.to_string());
    kv("energy.initial", num(r.energy_initial));
    kv("energy.max_abs_drift", num(r.energy_max_abs_drift));
    kv("energy.max_rel_drift", num(r.energy_max_rel_drift));
    kv("energy.mean_abs_drift", num(r.energy_mean_abs_drift));
    kv("apath_residual.max", num(r.apath_max));
    if let Some(e) = r.elp_max {
        kv("elp_residual.max", num(e));
    }
    kv("structure.antisymmetry", num(r.structure.antisymmetry));
    kv("structure.anchor_compat", num(r.structure.anchor_compat));
    kv("structure.jacobi", num(r.structure.jacobi));
    for inv in &r.invariants {
        kv(&format!("invariant.{}.initial", inv.name), num(inv.initial));
        kv(&format!("invariant.{}.max_abs_drift", inv.name), num(inv.max_abs_drift));
        kv(&format!("invariant.{}.max_rel_drift", inv.name), num(inv.max_rel_drift));
    }
    if let Some(c) = r.constraint_max {
        kv("constraint_residual.max", num(c));
    }
}

fn report_header(out: &mut String, cfg: &RunConfig, bundle: &SystemBundle) {
    let _ = writeln!(out, "system = {}", bundle.name);
    for (k, v) in &bundle.params {
        let _ = writeln!(out, "param.{k} = {}", num(*v));
    }
    let _ = writeln!(out, "formulation = {}", cfg.formulation.as_str());
    let _ = writeln!(out, "method = {}", cfg.method);
    let _ = writeln!(out, "t_final = {}", num(cfg.t_final));
    let _ = writeln!(out, "dt.requested = {}", num(cfg.dt));
}

/// Seeded identity and gradient check of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    /// One line per residual: `name  value  threshold  pass|FAIL`.
    pub table: String,
}

/// Structure identities and gradient consistency at `samples` seeded points.
pub fn check_bundle(bundle: &SystemBundle, seed: u64, samples: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alg = &bundle.algebroid;
    let r = alg.sample_structure_identities(&mut rng, samples, IDENTITY_FD_STEP)?;
    let g = bundle.lagrangian.sample_gradient_consistency(&mut rng, samples)?;
    let tol = identity_tolerance(alg, IDENTITY_FD_STEP);
    let rows = [
        ("antisymmetry", r.antisymmetry, tol),
        ("anchor_compat", r.anchor_compat, tol),
        ("jacobi", r.jacobi, tol),
        ("grad_q", g.grad_q, GRADIENT_TOL),
        ("grad_xi", g.grad_xi, GRADIENT_TOL),
        ("hessian_asymmetry", g.hessian_asymmetry, catalog::ANALYTIC_IDENTITY_TOL),
    ];
    let mut table = format!(
        "system {} (seed {seed}, {} samples)\n{:<20} {:>24} {:>24} result\n",
        bundle.name,
        samples.max(1),
        "residual",
        "value",
        "threshold"
    );
    let mut passed = true;
    for (name, value, threshold) in rows {
        let ok = value <= threshold;
        passed &= ok;
        let _ = writeln!(
            table,
            "{name:<20} {:>24} {:>24} {}",
            num(value),
            num(threshold),
            if ok { "pass" } else { "FAIL" }
        );
    }
    Ok(CheckOutcome { passed, table })
}

/// `check <system>`: exit code and the residual table.
pub fn cmd_check(system: &str, params: &Params, seed: u64, samples: usize) -> (i32, String) {
    let outcome = catalog::build(system, params).and_then(|b| check_bundle(&b, seed, samples));
    match outcome {
        Ok(o) => (if o.passed { EXIT_OK } else { EXIT_TOLERANCE }, o.table),
        Err(e) => (exit_code(&e), format!("error: {e}\n")),
    }
}

/// CSV and report text of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub report: String,
}

pub fn run_outputs(cfg: &RunConfig) -> Result<RunOutput> {
    let bundle = build_system(cfg)?;
    let lag = &bundle.lagrangian;
    let (csv, diag, dt, last) = match cfg.formulation {
        Formulation::Elp => {
            let s0 = elp_initial(&bundle, &cfg.initial)?;
            let traj = integrate(lag, &s0, cfg.t_final, cfg.dt, cfg.method)?;
            let diag = diagnostics(lag, &traj, &bundle.invariants)?;
            let csv = csv_rows(&bundle, &traj.states, &diag, None)?;
            let last = traj.states.last().cloned().expect("trajectory has nodes");
            (csv, diag, traj.dt, last)
        }
        Formulation::Hp => {
            let s0 = hp_initial(&bundle, &cfg.initial)?;
            let traj: Trajectory<PontryaginState> = hp_integrate(lag, &s0, cfg.t_final, cfg.dt, cfg.method)?;
            let diag = hp_diagnostics(lag, &traj, &bundle.invariants)?;
            let states = traj.to_states();
            let csv = csv_rows(&bundle, &states.states, &diag, Some(&traj.states))?;
            let last = states.states.last().cloned().expect("trajectory has nodes");
            (csv, diag, traj.dt, last)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let check = bundle
        .algebroid
        .sample_structure_identities(&mut rng, 10, IDENTITY_FD_STEP)?;

    let mut report = String::new();
    report_header(&mut report, cfg, &bundle);
    let _ = writeln!(report, "dt.effective = {}", num(dt));
    report_diagnostics(&mut report, "", &diag);
    let _ = writeln!(report, "final.t = {}", num(last.t));
    let _ = writeln!(report, "final.q = {}", nums(&last.q));
    let _ = writeln!(report, "final.xi = {}", nums(&last.xi));
    let _ = writeln!(report, "check.seed = {}", cfg.seed);
    let _ = writeln!(report, "check.structure_max = {}", num(check.max()));
    Ok(RunOutput { csv, report })
}

fn write_outputs(cfg: &RunConfig, csv: &str, report: &str) -> Result<()> {
    if let Some(p) = &cfg.csv {
        write_atomic(p, csv)?;
    }
    if let Some(p) = &cfg.report {
        write_atomic(p, report)?;
    }
    Ok(())
}

/// `run <config>`: integrate, write the CSV and report, return the exit code.
pub fn cmd_run(cfg: &RunConfig) -> i32 {
    match run_outputs(cfg).and_then(|o| write_outputs(cfg, &o.csv, &o.report).map(|_| o)) {
        Ok(o) => {
            if cfg.report.is_none() {
                print!("{}", o.report);
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Deviation CSV, report and verdict of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutput {
    pub csv: String,
    pub report: String,
    pub max_deviation: f64,
    pub passed: bool,
}

fn deviation_csv(times: &[f64], deviation: &[f64]) -> String {
    let mut out = String::from("t,deviation\n");
    for (t, d) in times.iter().zip(deviation) {
        let _ = writeln!(out, "{},{}", num(*t), num(*d));
    }
    out
}

pub fn compare_outputs(cfg: &RunConfig) -> Result<CompareOutput> {
    let cc = cfg
        .compare
        .as_ref()
        .ok_or_else(|| Error::Input("compare needs a [compare] section".into()))?;
    let mut report = String::new();
    let _ = writeln!(report, "compare.kind = {}", cc.kind.as_str());
    let (times, deviation, max_deviation) = match cc.kind {
        CompareKind::Reduce | CompareKind::HpReduce => {
            let name = cc.morphism.as_deref().expect("validated by parse_config");
            let mb = catalog::build_morphism(name, &cfg.system, &cfg.params)?;
            let settings = CompareSettings {
                method: cfg.method,
                source_hooks: mb.source.invariants.clone(),
                target_hooks: mb.target.invariants.clone(),
            };
            let r = if cc.kind == CompareKind::Reduce {
                let s0 = elp_initial(&mb.source, &cfg.initial)?;
                reduce_compare(
                    &mb.source.lagrangian,
                    &mb.target.lagrangian,
                    &mb.morphism,
                    &s0,
                    cfg.t_final,
                    cfg.dt,
                    &settings,
                )?
            } else {
                let s0 = hp_initial(&mb.source, &cfg.initial)?;
                hp_reduce_compare(
                    &mb.source.lagrangian,
                    &mb.target.lagrangian,
                    &mb.morphism,
                    &s0,
                    cfg.t_final,
                    cfg.dt,
                    &settings,
                )?
            };
            let _ = writeln!(report, "compare.morphism = {name}");
            report_header(&mut report, cfg, &mb.source);
            let _ = writeln!(report, "target = {}", mb.target.name);
            let _ = writeln!(report, "tolerance = {}", num(cc.tolerance));
            let _ = writeln!(report, "max_deviation = {}", num(r.max_deviation));
            let _ = writeln!(report, "verdict = {}", r.verdict(cc.tolerance).as_str());
            let _ = writeln!(report, "invariance = {}", num(r.invariance));
            let _ = writeln!(report, "invariance_warning = {}", r.invariance_warning);
            let _ = writeln!(report, "anchor_compat = {}", num(r.anchor_compat));
            report_diagnostics(&mut report, "source.", &r.source);
            report_diagnostics(&mut report, "target.", &r.target);
            let n = r.deviation.len();
            let t0 = mb.source.initial.t;
            let h = (cfg.t_final - t0) / (n.max(2) - 1) as f64;
            let times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * h).collect();
            (times, r.deviation, r.max_deviation)
        }
        CompareKind::Routh => {
            let bundle = build_system(cfg)?;
            let input = bundle.routhian.clone().expect("validated by parse_config");
            let s0 = elp_initial(&bundle, &cfg.initial)?;
            let settings = CompareSettings {
                method: cfg.method,
                source_hooks: bundle.invariants.clone(),
                target_hooks: Vec::new(),
            };
            let r = routh_compare(&input, &s0, cfg.t_final, cfg.dt, &settings)?;
            report_header(&mut report, cfg, &bundle);
            let _ = writeln!(report, "momentum = {}", nums(&input.momentum));
            let _ = writeln!(report, "tolerance = {}", num(cc.tolerance));
            let _ = writeln!(report, "max_deviation = {}", num(r.max_deviation));
            let _ = writeln!(report, "momentum_drift = {}", num(r.momentum_drift));
            let _ = writeln!(report, "routh_x_drift = {}", num(r.routh_x_drift));
            let _ = writeln!(report, "near_singular = {}", r.near_singular);
            report_diagnostics(&mut report, "full.", &r.full);
            report_diagnostics(&mut report, "reduced.", &r.reduced);
            let n = r.deviation.len();
            let h = (cfg.t_final - s0.t) / (n.max(2) - 1) as f64;
            let times: Vec<f64> = (0..n).map(|k| s0.t + k as f64 * h).collect();
            (times, r.deviation, r.max_deviation)
        }
    };
    let passed = max_deviation <= cc.tolerance;
    let _ = writeln!(report, "passed = {passed}");
    Ok(CompareOutput {
        csv: deviation_csv(&times, &deviation),
        report,
        max_deviation,
        passed,
    })
}

/// `compare <config>`: exit 0 iff the deviation is within the configured tolerance.
pub fn cmd_compare(cfg: &RunConfig) -> i32 {
    match compare_outputs(cfg).and_then(|o| write_outputs(cfg, &o.csv, &o.report).map(|_| o)) {
        Ok(o) => {
            if cfg.report.is_none() {
                print!("{}", o.report);
            }
            if o.passed {
                EXIT_OK
            } else {
                eprintln!(
                    "deviation {} exceeds tolerance {}",
                    num(o.max_deviation),
                    num(cfg.compare.as_ref().map_or(0.0, |c| c.tolerance))
                );
                EXIT_TOLERANCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Text of `list`.
pub fn list_text() -> String {
    let mut out = String::from("systems:\n");
    for e in catalog::list() {
        let _ = writeln!(out, "  {}  (n = {}, m = {})", e.name, e.dims.0, e.dims.1);
        for p in e.params {
            let _ = writeln!(out, "      {} = {}  {}", p.key, p.default, p.doc);
        }
        let _ = writeln!(out, "      {}", e.doc);
    }
    out.push_str("morphisms:\n");
    for m in catalog::list_morphisms() {
        let _ = writeln!(out, "  {}  (source: {})\n      {}", m.name, m.source, m.doc);
    }
    out
}

#[derive(Parser, Debug)]
#[command(name = "algebromech", version, about = "Lagrangian mechanics on Lie algebroids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a configured system and write its trajectory and report.
    Run { config: PathBuf },
    /// Check structure identities and gradient consistency of a catalog system.
    Check {
        system: String,
        /// Parameters as key=value.
        #[arg(long, num_args = 1..)]
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Compare a system with its reduction.
    Compare { config: PathBuf },
    /// List catalog systems and morphisms.
    List,
}

fn parse_params(raw: &[String]) -> Result<Params> {
    let mut params = Params::new();
    for kv in raw {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("--params expects key=value, got '{kv}'")))?;
        let x: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("parameter '{k}': '{v}' is not a number")))?;
        params.insert(k.trim().to_string(), x);
    }
    Ok(params)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Apply `ALGEBROMECH_FD_STEP` if set.
pub fn apply_fd_step_env() -> Result<()> {
    if let Ok(raw) = std::env::var(fd::FD_STEP_ENV) {
        let step: f64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("{}: '{raw}' is not a number", fd::FD_STEP_ENV)))?;
        if !fd::set_relative_step(step) {
            return Err(Error::Input(format!(
                "{}: step must be positive, got {raw}",
                fd::FD_STEP_ENV
            )));
        }
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = apply_fd_step_env() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    match cli.command {
        Command::Run { config } => match load_config(&config) {
            Ok(cfg) => cmd_run(&cfg),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Compare { config } => match load_config(&config) {
            Ok(cfg) => cmd_compare(&cfg),
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Check {
            system,
            params,
            seed,
            samples,
        } => {
            let params = match parse_params(&params) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let (code, table) = cmd_check(&system, &params, seed, samples);
            if code == EXIT_OK || code == EXIT_TOLERANCE {
                print!("{table}");
            } else {
                eprint!("{table}");
            }
            code
        }
        Command::List => {
            print!("{}", list_text());
            EXIT_OK
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_run_reaches_minus_one_at_pi() {
        let mut cfg = RunConfig::new("harmonic_oscillator");
        cfg.t_final = std::f64::consts::PI;
        let out = run_outputs(&cfg).unwrap();
        let lines: Vec<_> = out.csv.lines().collect();
        assert_eq!(lines[0], "t,q_0,xi_0,energy,apath_residual");
        assert_eq!(lines.len(), 1 + 3142 + 1);
        let last: Vec<f64> = lines.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last[0], std::f64::consts::PI);
        assert!((last[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn hp_run_adds_columns() {
        let mut cfg = RunConfig::new("harmonic_oscillator");
        cfg.formulation = Formulation::Hp;
        cfg.t_final = 0.01;
        let out = run_outputs(&cfg).unwrap();
        assert_eq!(
            out.csv.lines().next().unwrap(),
            "t,q_0,xi_0,energy,apath_residual,v_0,p_0,constraint_residual"
        );
        assert!(out.report.contains("constraint_residual.max = "));
    }

    #[test]
    fn rigid_body_report_names_hooks() {
        let mut cfg = RunConfig::new("rigid_body");
        cfg.t_final = 0.1;
        let out = run_outputs(&cfg).unwrap();
        assert!(out.report.contains("invariant.energy.max_rel_drift = "));
        assert!(out.report.contains("invariant.casimir.max_rel_drift = "));
        assert!(!out.csv.contains('\r'));
    }

    #[test]
    fn check_passes_on_catalog() {
        for name in ["rigid_body", "wong_abelian"] {
            let (code, table) = cmd_check(name, &Params::new(), 1, 20);
            assert_eq!(code, EXIT_OK, "{table}");
            assert!(table.contains("jacobi"));
        }
        assert_eq!(cmd_check("nope", &Params::new(), 0, 1).0, EXIT_CONFIG);
    }

    #[test]
    fn compare_exit_codes_follow_tolerance() {
        let mut cfg = RunConfig::new("cyclic_oscillator");
        cfg.t_final = 0.5;
        cfg.compare = Some(CompareConfig {
            kind: CompareKind::Reduce,
            morphism: Some("cyclic_quotient".into()),
            tolerance: 1e-6,
        });
        assert!(compare_outputs(&cfg).unwrap().max_deviation <= 1e-12);
        assert_eq!(cmd_compare(&cfg), EXIT_OK);

        let mut cfg = RunConfig::new("rigid_body_chart");
        cfg.t_final = 0.05;
        cfg.compare = Some(CompareConfig {
            kind: CompareKind::Reduce,
            morphism: Some("rigid_body_quotient".into()),
            tolerance: 0.0,
        });
        let out = compare_outputs(&cfg).unwrap();
        assert!(
            out.max_deviation > 0.0 && out.max_deviation < 1e-8,
            "{}",
            out.max_deviation
        );
        assert!(out.report.contains("verdict = bracket_compatibility_suspect"));
        assert_eq!(cmd_compare(&cfg), EXIT_TOLERANCE);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Input("x".into())), 1);
        assert_eq!(
            exit_code(&Error::Solve {
                context: "x".into(),
                iterations: 1,
                residual: 1.0
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::ChartExit {
                t: 0.0,
                coordinate: 1,
                value: 0.0,
                lo: 0.05,
                hi: 3.0
            }),
            4
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "a\n").unwrap();
        write_atomic(&p, "b\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
