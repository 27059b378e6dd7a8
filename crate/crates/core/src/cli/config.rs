//! Line-oriented run configuration.
//!
//! ```text
//! [system]
//! name = rigid_body
//! I1 = 1
//! [initial]
//! xi = 1 1 1
//! [integrate]
//! t_final = 10
//! dt = 1e-3
//! method = rk4          # or implicit_midpoint
//! formulation = elp     # or hp
//! [output]
//! csv = run.csv
//! report = run.report
//! [run]
//! seed = 0
//! [compare]
//! kind = reduce         # reduce | hp_reduce | routh
//! morphism = rigid_body_quotient
//! tolerance = 1e-5
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::catalog::{self, Params};
use crate::dynamics::Method;
use crate::error::{Error, Result};

pub const DEFAULT_T_FINAL: f64 = 10.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Elp,
    Hp,
}

impl Formulation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Formulation::Elp => "elp",
            Formulation::Hp => "hp",
        }
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elp" => Ok(Formulation::Elp),
            "hp" => Ok(Formulation::Hp),
            _ => Err(Error::Input(format!("unknown formulation '{s}' (expected elp or hp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareKind {
    Reduce,
    HpReduce,
    Routh,
}

impl CompareKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompareKind::Reduce => "reduce",
            CompareKind::HpReduce => "hp_reduce",
            CompareKind::Routh => "routh",
        }
    }
}

impl FromStr for CompareKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduce" => Ok(CompareKind::Reduce),
            "hp_reduce" => Ok(CompareKind::HpReduce),
            "routh" => Ok(CompareKind::Routh),
            _ => Err(Error::Input(format!(
                "unknown compare kind '{s}' (expected reduce, hp_reduce or routh)"
            ))),
        }
    }
}

/// Initial state overrides; missing parts come from the catalog default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialConfig {
    pub q: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub kind: CompareKind,
    pub morphism: Option<String>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: String,
    pub params: Params,
    pub initial: InitialConfig,
    pub t_final: f64,
    pub dt: f64,
    pub method: Method,
    pub formulation: Formulation,
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed: u64,
    pub compare: Option<CompareConfig>,
}

impl RunConfig {
    /// A config for `system` with every default filled in.
    pub fn new(system: impl Into<String>) -> Self {
        RunConfig {
            system: system.into(),
            params: Params::new(),
            initial: InitialConfig::default(),
            t_final: DEFAULT_T_FINAL,
            dt: DEFAULT_DT,
            method: Method::Rk4,
            formulation: Formulation::Elp,
            csv: None,
            report: None,
            seed: 0,
            compare: None,
        }
    }
}

const SECTIONS: &[&str] = &["system", "initial", "integrate", "output", "run", "compare"];

struct Entry {
    line: usize,
    value: String,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

fn at(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("line {line}: {msg}"))
}

fn tokenize(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, format!("malformed section header '{body}'")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(at(
                    line,
                    format!("unknown section [{name}] (expected one of {})", SECTIONS.join(", ")),
                ));
            }
            if sections.contains_key(name) {
                return Err(at(line, format!("section [{name}] appears twice")));
            }
            sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected 'key = value', got '{body}'")))?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(at(line, format!("invalid key '{key}'")));
        }
        let section = current
            .as_ref()
            .ok_or_else(|| at(line, format!("key '{key}' appears before any [section]")))?;
        let keys = sections.get_mut(section).expect("section registered on header");
        if keys.contains_key(key) {
            return Err(at(line, format!("duplicate key '{key}' in [{section}]")));
        }
        keys.insert(
            key.to_string(),
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    Ok(sections)
}

fn number(section: &str, key: &str, e: &Entry) -> Result<f64> {
    let x: f64 = e
        .value
        .parse()
        .map_err(|_| at(e.line, format!("[{section}] {key}: '{}' is not a number", e.value)))?;
    if !x.is_finite() {
        return Err(at(
            e.line,
            format!("[{section}] {key}: must be finite, got {}", e.value),
        ));
    }
    Ok(x)
}

fn list(section: &str, key: &str, e: &Entry) -> Result<Vec<f64>> {
    e.value
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| at(e.line, format!("[{section}] {key}: '{tok}' is not a finite number")))
        })
        .collect()
}

fn word<'a>(section: &str, key: &str, e: &'a Entry) -> Result<&'a str> {
    if e.value.is_empty() || e.value.contains(char::is_whitespace) {
        return Err(at(
            e.line,
            format!("[{section}] {key}: expected a single word, got '{}'", e.value),
        ));
    }
    Ok(&e.value)
}

fn reject_unknown(section: &str, keys: &BTreeMap<String, Entry>, known: &[&str]) -> Result<()> {
    for (k, e) in keys {
        if !known.contains(&k.as_str()) {
            return Err(at(
                e.line,
                format!(
                    "unknown key '{k}' in [{section}] (expected one of {})",
                    known.join(", ")
                ),
            ));
        }
    }
    Ok(())
}

/// Parse and validate a config. Errors name the offending line and key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let sections = tokenize(text)?;
    let empty = BTreeMap::new();
    let section = |name: &str| sections.get(name).unwrap_or(&empty);

    let system = sections
        .get("system")
        .ok_or_else(|| Error::Input("missing [system] section".into()))?;
    let name_entry = system
        .get("name")
        .ok_or_else(|| Error::Input("[system] is missing the key 'name'".into()))?;
    let name = word("system", "name", name_entry)?;
    let entry = catalog::entry(name).map_err(|e| at(name_entry.line, e))?;
    let mut params = Params::new();
    for (k, e) in system.iter().filter(|(k, _)| k.as_str() != "name") {
        if !entry.params.iter().any(|s| s.key == k) {
            let keys: Vec<_> = entry.params.iter().map(|s| s.key).collect();
            return Err(at(
                e.line,
                format!(
                    "system '{name}' has no parameter '{k}' (parameters: {})",
                    if keys.is_empty() {
                        "none".to_string()
                    } else {
                        keys.join(", ")
                    }
                ),
            ));
        }
        params.insert(k.clone(), number("system", k, e)?);
    }

    let mut cfg = RunConfig::new(name);
    cfg.params = params;

    let integrate = section("integrate");
    reject_unknown("integrate", integrate, &["t_final", "dt", "method", "formulation"])?;
    if let Some(e) = integrate.get("t_final") {
        cfg.t_final = number("integrate", "t_final", e)?;
        if cfg.t_final <= 0.0 {
            return Err(at(e.line, format!("[integrate] t_final: must be > 0, got {}", e.value)));
        }
    }
    if let Some(e) = integrate.get("dt") {
        cfg.dt = number("integrate", "dt", e)?;
        if cfg.dt <= 0.0 {
            return Err(at(e.line, format!("[integrate] dt: must be > 0, got {}", e.value)));
        }
    }
    if let Some(e) = integrate.get("method") {
        cfg.method = Method::from_str(word("integrate", "method", e)?).map_err(|err| at(e.line, err))?;
    }
    if let Some(e) = integrate.get("formulation") {
        cfg.formulation = Formulation::from_str(word("integrate", "formulation", e)?).map_err(|err| at(e.line, err))?;
    }

    let (n, m) = entry.dims;
    let initial = section("initial");
    reject_unknown("initial", initial, &["q", "xi", "v", "p"])?;
    let read = |key: &str, expected: usize, what: &str| -> Result<Option<Vec<f64>>> {
        let Some(e) = initial.get(key) else { return Ok(None) };
        let x = list("initial", key, e)?;
        if x.len() != expected {
            return Err(at(
                e.line,
                format!(
                    "[initial] {key}: system '{name}' has {what} = {expected}, got {} values",
                    x.len()
                ),
            ));
        }
        Ok(Some(x))
    };
    cfg.initial.q = read("q", n, "n")?;
    cfg.initial.xi = read("xi", m, "m")?;
    cfg.initial.v = read("v", m, "m")?;
    cfg.initial.p = read("p", m, "m")?;

    let output = section("output");
    reject_unknown("output", output, &["csv", "report"])?;
    let path = |key: &str| -> Result<Option<PathBuf>> {
        match output.get(key) {
            None => Ok(None),
            Some(e) if e.value.is_empty() => Err(at(e.line, format!("[output] {key}: empty path"))),
            Some(e) => Ok(Some(PathBuf::from(&e.value))),
        }
    };
    cfg.csv = path("csv")?;
    cfg.report = path("report")?;

    let run = section("run");
    reject_unknown("run", run, &["seed"])?;
    if let Some(e) = run.get("seed") {
        cfg.seed = e.value.parse().map_err(|_| {
            at(
                e.line,
                format!("[run] seed: '{}' is not a non-negative integer", e.value),
            )
        })?;
    }

    if let Some(compare) = sections.get("compare") {
        reject_unknown("compare", compare, &["kind", "morphism", "tolerance"])?;
        let kind_entry = compare
            .get("kind")
            .ok_or_else(|| Error::Input("[compare] is missing the key 'kind'".into()))?;
        let kind = CompareKind::from_str(word("compare", "kind", kind_entry)?).map_err(|e| at(kind_entry.line, e))?;
        let morphism = match compare.get("morphism") {
            Some(e) => {
                let w = word("compare", "morphism", e)?;
                let known = catalog::list_morphisms().iter().find(|mm| mm.name == w);
                match known {
                    None => return Err(at(e.line, format!("[compare] morphism: unknown morphism '{w}'"))),
                    Some(mm) if mm.source != "any" && mm.source != name => {
                        return Err(at(
                            e.line,
                            format!(
                                "[compare] morphism: '{w}' starts from system '{}', not '{name}'",
                                mm.source
                            ),
                        ))
                    }
                    Some(_) => Some(w.to_string()),
                }
            }
            None => None,
        };
        match kind {
            CompareKind::Reduce | CompareKind::HpReduce if morphism.is_none() => {
                return Err(at(
                    kind_entry.line,
                    format!("[compare] kind = {} needs a 'morphism' key", kind.as_str()),
                ));
            }
            CompareKind::Routh if !entry.routhian => {
                return Err(at(
                    kind_entry.line,
                    format!("[compare] kind = routh: system '{name}' has no Routhian set-up"),
                ));
            }
            _ => {}
        }
        let tolerance = match compare.get("tolerance") {
            Some(e) => {
                let t = number("compare", "tolerance", e)?;
                if t < 0.0 {
                    return Err(at(
                        e.line,
                        format!("[compare] tolerance: must be >= 0, got {}", e.value),
                    ));
                }
                t
            }
            None => DEFAULT_TOLERANCE,
        };
        cfg.compare = Some(CompareConfig {
            kind,
            morphism,
            tolerance,
        });
    }
    Ok(cfg)
}

fn render_list(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

/// Text that [`parse_config`] maps back to `cfg`.
pub fn render_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[system]\nname = {}", cfg.system);
    for (k, v) in &cfg.params {
        let _ = writeln!(out, "{k} = {v:?}");
    }
    let init = &cfg.initial;
    let fields = [("q", &init.q), ("xi", &init.xi), ("v", &init.v), ("p", &init.p)];
    if fields.iter().any(|(_, x)| x.is_some()) {
        out.push_str("\n[initial]\n");
        for (k, x) in fields {
            if let Some(x) = x {
                let _ = writeln!(out, "{k} = {}", render_list(x));
            }
        }
    }
    let _ = writeln!(
        out,
        "\n[integrate]\nt_final = {:?}\ndt = {:?}\nmethod = {}\nformulation = {}",
        cfg.t_final,
        cfg.dt,
        cfg.method,
        cfg.formulation.as_str()
    );
    if cfg.csv.is_some() || cfg.report.is_some() {
        out.push_str("\n[output]\n");
        if let Some(p) = &cfg.csv {
            let _ = writeln!(out, "csv = {}", p.display());
        }
        if let Some(p) = &cfg.report {
            let _ = writeln!(out, "report = {}", p.display());
        }
    }
    let _ = writeln!(out, "\n[run]\nseed = {}", cfg.seed);
    if let Some(c) = &cfg.compare {
        let _ = writeln!(out, "\n[compare]\nkind = {}", c.kind.as_str());
        if let Some(m) = &c.morphism {
            let _ = writeln!(out, "morphism = {m}");
        }
        let _ = writeln!(out, "tolerance = {:?}", c.tolerance);
    }
    out
}
