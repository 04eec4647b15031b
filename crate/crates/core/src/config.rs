//! Sectioned key-value configuration: parsing with full-file error
//! collection (every problem reported with its line), canonical emission
//! for round-tripping, and construction of the runtime objects.
//!
//! Format: `[section]` headers, `key = value` entries, `#` comments.
//! Sections and keys are documented in the README; unknown ones are
//! errors.

use crate::error::{ConfigIssue, Error, Result};
use crate::fields::{FlowField, TemperatureField};
use crate::mesh::Mesh;
use crate::params::Params;
use crate::state::InitialFamily;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub dx: usize,
    pub dq: usize,
    pub n_x: usize,
    pub n_q: usize,
    pub quad_order: usize,
    pub homogeneous_x: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    FeneEquilibriumUniform,
    FeneEquilibriumBump,
    CustomNodal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub family: InitialKind,
    pub theta0: f64,
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: String,
    /// Snapshot cadence in steps; 0 keeps only initial and final states.
    pub snapshot_every: usize,
    /// Also write raw little-endian f64 dumps next to the CSV snapshots.
    pub raw: bool,
    /// Dump the assembled operator matrices as triplet text in `check`.
    pub dump_operators: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsSpec {
    pub levels: Vec<usize>,
    pub temporal_dt0: f64,
    pub temporal_halvings: usize,
    pub temporal_level: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSpec {
    pub schedule: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdSpec {
    pub particles: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: Params,
    pub theta: TemperatureField,
    pub flow: FlowField,
    pub mesh: MeshSpec,
    pub initial: InitialSpec,
    pub output: OutputSpec,
    pub mms: MmsSpec,
    pub continuation: ContinuationSpec,
    pub bd: BdSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            params: Params::default(),
            theta: TemperatureField::Constant { theta0: 1.0 },
            flow: FlowField::Quiescent,
            mesh: MeshSpec {
                dx: 1,
                dq: 1,
                n_x: 8,
                n_q: 32,
                quad_order: 3,
                homogeneous_x: false,
            },
            initial: InitialSpec {
                family: InitialKind::FeneEquilibriumUniform,
                theta0: 1.0,
                file: None,
            },
            output: OutputSpec {
                dir: "out".into(),
                snapshot_every: 1,
                raw: false,
                dump_operators: false,
            },
            mms: MmsSpec {
                levels: vec![8, 16, 32],
                temporal_dt0: 0.2,
                temporal_halvings: 2,
                temporal_level: 16,
            },
            continuation: ContinuationSpec {
                schedule: vec![0.1, 0.05, 0.025, 0.0125],
            },
            bd: BdSpec {
                particles: 100_000,
                steps: 1500,
                dt: 0.005,
                seed: 1,
            },
        }
    }
}

impl SimulationConfig {
    pub fn build_mesh(&self) -> Result<Mesh> {
        if self.mesh.homogeneous_x {
            Mesh::build_homogeneous_x(self.mesh.dx, self.mesh.dq, self.mesh.n_q, self.mesh.quad_order)
        } else {
            Mesh::build(
                self.mesh.dx,
                self.mesh.dq,
                self.mesh.n_x,
                self.mesh.n_q,
                self.mesh.quad_order,
            )
        }
    }

    /// Resolve the initial family, loading nodal values when requested.
    pub fn initial_family(&self) -> Result<InitialFamily> {
        Ok(match self.initial.family {
            InitialKind::FeneEquilibriumUniform => InitialFamily::FeneEquilibriumUniform {
                theta0: self.initial.theta0,
            },
            InitialKind::FeneEquilibriumBump => InitialFamily::FeneEquilibriumBump {
                theta0: self.initial.theta0,
            },
            InitialKind::CustomNodal => {
                let path = self.initial.file.as_ref().ok_or_else(|| {
                    Error::InvalidParameter {
                        name: "initial.file",
                        reason: "custom-nodal initial condition requires a file".into(),
                    }
                })?;
                let text = std::fs::read_to_string(path)?;
                let mut values = Vec::new();
                for (i, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    values.push(line.parse::<f64>().map_err(|e| Error::InvalidParameter {
                        name: "initial.file",
                        reason: format!("line {}: {e}", i + 1),
                    })?);
                }
                InitialFamily::CustomNodal { values }
            }
        })
    }

    /// Canonical text form; `parse_config(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        let p = &self.params;
        writeln!(s, "[params]").unwrap();
        writeln!(s, "de = {:?}", p.de).unwrap();
        writeln!(s, "q0 = {:?}", p.q0).unwrap();
        writeln!(s, "eps = {:?}", p.eps).unwrap();
        writeln!(s, "dt = {:?}", p.dt).unwrap();
        writeln!(s, "t_end = {:?}", p.t_end).unwrap();
        writeln!(s, "tol_fp = {:?}", p.tol_fp).unwrap();
        writeln!(s, "tol_lin = {:?}", p.tol_lin).unwrap();
        writeln!(s, "max_picard = {}", p.max_picard).unwrap();
        writeln!(s, "halved_xdiff = {}", p.strong_form_halved_xdiff).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[temperature]").unwrap();
        match &self.theta {
            TemperatureField::Constant { theta0 } => {
                writeln!(s, "family = constant").unwrap();
                writeln!(s, "theta0 = {theta0:?}").unwrap();
            }
            TemperatureField::Affine { base, slope } => {
                writeln!(s, "family = affine").unwrap();
                writeln!(s, "base = {base:?}").unwrap();
                let list: Vec<String> = slope.iter().map(|v| format!("{v:?}")).collect();
                writeln!(s, "slope = {}", list.join(",")).unwrap();
            }
            TemperatureField::Sinusoidal {
                base,
                amp,
                wave,
                omega,
            } => {
                writeln!(s, "family = sinusoidal").unwrap();
                writeln!(s, "base = {base:?}").unwrap();
                writeln!(s, "amplitude = {amp:?}").unwrap();
                let list: Vec<String> = wave.iter().map(|v| v.to_string()).collect();
                writeln!(s, "wave = {}", list.join(",")).unwrap();
                writeln!(s, "omega = {omega:?}").unwrap();
            }
        }
        writeln!(s).unwrap();
        writeln!(s, "[flow]").unwrap();
        match &self.flow {
            FlowField::Quiescent => writeln!(s, "family = quiescent").unwrap(),
            FlowField::Cellular { amplitude } => {
                writeln!(s, "family = cellular").unwrap();
                writeln!(s, "amplitude = {amplitude:?}").unwrap();
            }
            FlowField::ShearKappa { rate } => {
                writeln!(s, "family = shear").unwrap();
                writeln!(s, "rate = {rate:?}").unwrap();
            }
            FlowField::ExtensionalKappa { rate } => {
                writeln!(s, "family = extensional").unwrap();
                writeln!(s, "rate = {rate:?}").unwrap();
            }
        }
        writeln!(s).unwrap();
        writeln!(s, "[mesh]").unwrap();
        writeln!(s, "dx = {}", self.mesh.dx).unwrap();
        writeln!(s, "dq = {}", self.mesh.dq).unwrap();
        writeln!(s, "nx = {}", self.mesh.n_x).unwrap();
        writeln!(s, "nq = {}", self.mesh.n_q).unwrap();
        writeln!(s, "quad_order = {}", self.mesh.quad_order).unwrap();
        writeln!(s, "homogeneous_x = {}", self.mesh.homogeneous_x).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[initial]").unwrap();
        let fam = match self.initial.family {
            InitialKind::FeneEquilibriumUniform => "fene-equilibrium-uniform",
            InitialKind::FeneEquilibriumBump => "fene-equilibrium-bump",
            InitialKind::CustomNodal => "custom-nodal",
        };
        writeln!(s, "family = {fam}").unwrap();
        writeln!(s, "theta0 = {:?}", self.initial.theta0).unwrap();
        if let Some(f) = &self.initial.file {
            writeln!(s, "file = {f}").unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "[output]").unwrap();
        writeln!(s, "dir = {}", self.output.dir).unwrap();
        writeln!(s, "snapshot_every = {}", self.output.snapshot_every).unwrap();
        writeln!(s, "raw = {}", self.output.raw).unwrap();
        writeln!(s, "dump_operators = {}", self.output.dump_operators).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[mms]").unwrap();
        let lv: Vec<String> = self.mms.levels.iter().map(|v| v.to_string()).collect();
        writeln!(s, "levels = {}", lv.join(",")).unwrap();
        writeln!(s, "temporal_dt0 = {:?}", self.mms.temporal_dt0).unwrap();
        writeln!(s, "temporal_halvings = {}", self.mms.temporal_halvings).unwrap();
        writeln!(s, "temporal_level = {}", self.mms.temporal_level).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[continuation]").unwrap();
        let sch: Vec<String> = self
            .continuation
            .schedule
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        writeln!(s, "schedule = {}", sch.join(",")).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[bd]").unwrap();
        writeln!(s, "particles = {}", self.bd.particles).unwrap();
        writeln!(s, "steps = {}", self.bd.steps).unwrap();
        writeln!(s, "dt = {:?}", self.bd.dt).unwrap();
        writeln!(s, "seed = {}", self.bd.seed).unwrap();
        s
    }
}

struct RawConfig {
    /// (section, key) -> (value, line)
    entries: BTreeMap<(String, String), (String, usize)>,
    issues: Vec<ConfigIssue>,
}

const SECTIONS: &[&str] = &[
    "params",
    "temperature",
    "flow",
    "mesh",
    "initial",
    "output",
    "mms",
    "continuation",
    "bd",
];

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "params" => &[
            "de",
            "q0",
            "eps",
            "dt",
            "t_end",
            "tol_fp",
            "tol_lin",
            "max_picard",
            "halved_xdiff",
        ],
        "temperature" => &["family", "theta0", "base", "slope", "amplitude", "wave", "omega"],
        "flow" => &["family", "amplitude", "rate"],
        "mesh" => &["dx", "dq", "nx", "nq", "quad_order", "homogeneous_x"],
        "initial" => &["family", "theta0", "file"],
        "output" => &["dir", "snapshot_every", "raw", "dump_operators"],
        "mms" => &["levels", "temporal_dt0", "temporal_halvings", "temporal_level"],
        "continuation" => &["schedule"],
        "bd" => &["particles", "steps", "dt", "seed"],
        _ => &[],
    }
}

fn scan(text: &str) -> RawConfig {
    let mut raw = RawConfig {
        entries: BTreeMap::new(),
        issues: Vec::new(),
    };
    let mut section = String::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) if SECTIONS.contains(&name) => section = name.to_string(),
                Some(name) => {
                    raw.issues.push(ConfigIssue {
                        line: lineno,
                        message: format!(
                            "unknown section `[{name}]` (expected one of {})",
                            SECTIONS.join(", ")
                        ),
                    });
                    section = name.to_string();
                }
                None => raw.issues.push(ConfigIssue {
                    line: lineno,
                    message: "malformed section header".into(),
                }),
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            raw.issues.push(ConfigIssue {
                line: lineno,
                message: "expected `key = value`".into(),
            });
            continue;
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if section.is_empty() {
            raw.issues.push(ConfigIssue {
                line: lineno,
                message: format!("key `{key}` outside any section"),
            });
            continue;
        }
        if SECTIONS.contains(&section.as_str()) && !known_keys(&section).contains(&key.as_str()) {
            raw.issues.push(ConfigIssue {
                line: lineno,
                message: format!("unknown key `{key}` in section `[{section}]`"),
            });
            continue;
        }
        if raw
            .entries
            .insert((section.clone(), key.clone()), (value, lineno))
            .is_some()
        {
            raw.issues.push(ConfigIssue {
                line: lineno,
                message: format!("duplicate key `{key}` in section `[{section}]`"),
            });
        }
    }
    raw
}

struct Extractor {
    entries: BTreeMap<(String, String), (String, usize)>,
    issues: Vec<ConfigIssue>,
}

impl Extractor {
    fn get(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .cloned()
    }

    fn issue(&mut self, line: usize, message: String) {
        self.issues.push(ConfigIssue { line, message });
    }

    fn f64_or(&mut self, section: &str, key: &str, default: f64) -> (f64, usize) {
        match self.get(section, key) {
            None => (default, 0),
            Some((v, line)) => match v.parse::<f64>() {
                Ok(x) => (x, line),
                Err(e) => {
                    self.issue(line, format!("`{section}.{key}`: not a number ({e})"));
                    (default, line)
                }
            },
        }
    }

    fn usize_or(&mut self, section: &str, key: &str, default: usize) -> (usize, usize) {
        match self.get(section, key) {
            None => (default, 0),
            Some((v, line)) => match v.parse::<usize>() {
                Ok(x) => (x, line),
                Err(e) => {
                    self.issue(line, format!("`{section}.{key}`: not a nonnegative integer ({e})"));
                    (default, line)
                }
            },
        }
    }

    fn u64_or(&mut self, section: &str, key: &str, default: u64) -> (u64, usize) {
        match self.get(section, key) {
            None => (default, 0),
            Some((v, line)) => match v.parse::<u64>() {
                Ok(x) => (x, line),
                Err(e) => {
                    self.issue(line, format!("`{section}.{key}`: not an integer ({e})"));
                    (default, line)
                }
            },
        }
    }

    fn bool_or(&mut self, section: &str, key: &str, default: bool) -> (bool, usize) {
        match self.get(section, key) {
            None => (default, 0),
            Some((v, line)) => match v.as_str() {
                "true" | "1" | "yes" => (true, line),
                "false" | "0" | "no" => (false, line),
                other => {
                    self.issue(line, format!("`{section}.{key}`: expected true/false, got `{other}`"));
                    (default, line)
                }
            },
        }
    }

    fn f64_list(&mut self, section: &str, key: &str, default: &[f64]) -> (Vec<f64>, usize) {
        match self.get(section, key) {
            None => (default.to_vec(), 0),
            Some((v, line)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    match part.trim().parse::<f64>() {
                        Ok(x) => out.push(x),
                        Err(e) => {
                            self.issue(line, format!("`{section}.{key}`: bad entry `{part}` ({e})"));
                        }
                    }
                }
                (out, line)
            }
        }
    }

    fn usize_list(&mut self, section: &str, key: &str, default: &[usize]) -> (Vec<usize>, usize) {
        match self.get(section, key) {
            None => (default.to_vec(), 0),
            Some((v, line)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    match part.trim().parse::<usize>() {
                        Ok(x) => out.push(x),
                        Err(e) => {
                            self.issue(line, format!("`{section}.{key}`: bad entry `{part}` ({e})"));
                        }
                    }
                }
                (out, line)
            }
        }
    }
}

/// Parse with optional `section.key=value` overrides applied before
/// validation. All problems in the file are collected and reported
/// together.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<SimulationConfig> {
    let mut raw = scan(text);
    for ov in overrides {
        let Some(eq) = ov.find('=') else {
            raw.issues.push(ConfigIssue {
                line: 0,
                message: format!("override `{ov}`: expected section.key=value"),
            });
            continue;
        };
        let path = ov[..eq].trim();
        let value = ov[eq + 1..].trim().to_string();
        let Some(dot) = path.find('.') else {
            raw.issues.push(ConfigIssue {
                line: 0,
                message: format!("override `{ov}`: expected section.key=value"),
            });
            continue;
        };
        let section = path[..dot].trim().to_string();
        let key = path[dot + 1..].trim().to_string();
        if !SECTIONS.contains(&section.as_str()) || !known_keys(&section).contains(&key.as_str()) {
            raw.issues.push(ConfigIssue {
                line: 0,
                message: format!("override `{ov}`: unknown `{section}.{key}`"),
            });
            continue;
        }
        raw.entries.insert((section, key), (value, 0));
    }
    build(raw)
}

pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    parse_config_with_overrides(text, &[])
}

fn build(raw: RawConfig) -> Result<SimulationConfig> {
    let mut ex = Extractor {
        entries: raw.entries,
        issues: raw.issues,
    };
    let d = SimulationConfig::default();

    // --- params
    let (de, de_l) = ex.f64_or("params", "de", d.params.de);
    if de <= 0.0 {
        ex.issue(de_l, format!("`params.de`: Deborah number must be positive, got {de}"));
    }
    let (q0, q0_l) = ex.f64_or("params", "q0", d.params.q0);
    if q0 <= 0.0 {
        ex.issue(q0_l, format!("`params.q0`: maximum stretch must be positive, got {q0}"));
    }
    let (eps, eps_l) = ex.f64_or("params", "eps", d.params.eps);
    if !(eps > 0.0 && eps < 1.0) {
        ex.issue(
            eps_l,
            format!("`params.eps`: regularization parameter must lie strictly inside (0, 1), got {eps}"),
        );
    }
    let (dt, dt_l) = ex.f64_or("params", "dt", d.params.dt);
    if dt <= 0.0 {
        ex.issue(dt_l, format!("`params.dt`: time step must be positive, got {dt}"));
    }
    let (t_end, te_l) = ex.f64_or("params", "t_end", d.params.t_end);
    if t_end < 0.0 || (t_end > 0.0 && t_end + 1e-14 < dt) {
        ex.issue(te_l, format!("`params.t_end`: must be 0 or >= dt, got {t_end}"));
    }
    let (tol_fp, tf_l) = ex.f64_or("params", "tol_fp", d.params.tol_fp);
    if tol_fp <= 0.0 {
        ex.issue(tf_l, "`params.tol_fp`: tolerance must be positive".into());
    }
    let (tol_lin, tl_l) = ex.f64_or("params", "tol_lin", d.params.tol_lin);
    if tol_lin <= 0.0 {
        ex.issue(tl_l, "`params.tol_lin`: tolerance must be positive".into());
    }
    let (max_picard, mp_l) = ex.usize_or("params", "max_picard", d.params.max_picard);
    if max_picard == 0 {
        ex.issue(mp_l, "`params.max_picard`: must be at least 1".into());
    }
    let (halved, _) = ex.bool_or("params", "halved_xdiff", d.params.strong_form_halved_xdiff);

    // --- mesh
    let (dx, dx_l) = ex.usize_or("mesh", "dx", d.mesh.dx);
    if !(1..=2).contains(&dx) {
        ex.issue(dx_l, format!("`mesh.dx`: spatial dimension must be 1 or 2, got {dx}"));
    }
    let (dq, dq_l) = ex.usize_or("mesh", "dq", d.mesh.dq);
    if !(1..=2).contains(&dq) {
        ex.issue(dq_l, format!("`mesh.dq`: configurational dimension must be 1 or 2, got {dq}"));
    }
    let (n_x, nx_l) = ex.usize_or("mesh", "nx", d.mesh.n_x);
    let (n_q, nq_l) = ex.usize_or("mesh", "nq", d.mesh.n_q);
    let (homog, _) = ex.bool_or("mesh", "homogeneous_x", d.mesh.homogeneous_x);
    if !homog && !(4..=2048).contains(&n_x) {
        ex.issue(nx_l, format!("`mesh.nx`: cells per axis must lie in 4..=2048, got {n_x}"));
    }
    if !(4..=2048).contains(&n_q) {
        ex.issue(nq_l, format!("`mesh.nq`: cells per axis must lie in 4..=2048, got {n_q}"));
    }
    let (quad, quad_l) = ex.usize_or("mesh", "quad_order", d.mesh.quad_order);
    if !(2..=6).contains(&quad) {
        ex.issue(quad_l, format!("`mesh.quad_order`: must lie in 2..=6, got {quad}"));
    }

    // --- temperature
    let theta = {
        let fam = ex.get("temperature", "family");
        let (fam_name, fam_line) = match &fam {
            Some((v, l)) => (v.as_str(), *l),
            None => ("constant", 0),
        };
        match fam_name {
            "constant" => {
                let (t0, t0_l) = ex.f64_or("temperature", "theta0", 1.0);
                if t0 <= 0.0 {
                    ex.issue(t0_l, format!("`temperature.theta0`: must be positive, got {t0}"));
                    d.theta.clone()
                } else {
                    TemperatureField::Constant { theta0: t0 }
                }
            }
            "affine" => {
                let (base, _) = ex.f64_or("temperature", "base", 1.0);
                let (slope, sl_l) = ex.f64_list("temperature", "slope", &[0.1]);
                if slope.len() != dx {
                    ex.issue(
                        sl_l,
                        format!(
                            "`temperature.slope`: need {dx} entries for dx = {dx}, got {}",
                            slope.len()
                        ),
                    );
                }
                let f = TemperatureField::Affine { base, slope };
                if f.theta_min() <= 0.0 {
                    ex.issue(sl_l, "`temperature`: field not positive over the box".into());
                }
                f
            }
            "sinusoidal" => {
                let (base, _) = ex.f64_or("temperature", "base", 1.0);
                let (amp, a_l) = ex.f64_or("temperature", "amplitude", 0.1);
                let (wave, w_l) = ex.usize_list("temperature", "wave", &[1]);
                let (omega, _) = ex.f64_or("temperature", "omega", 0.0);
                if wave.len() != dx {
                    ex.issue(
                        w_l,
                        format!("`temperature.wave`: need {dx} entries for dx = {dx}, got {}", wave.len()),
                    );
                }
                if base - amp.abs() <= 0.0 {
                    ex.issue(a_l, "`temperature`: base - |amplitude| must stay positive".into());
                }
                TemperatureField::Sinusoidal {
                    base,
                    amp,
                    wave,
                    omega,
                }
            }
            other => {
                ex.issue(
                    fam_line,
                    format!("`temperature.family`: unknown family `{other}` (constant, affine, sinusoidal)"),
                );
                d.theta.clone()
            }
        }
    };

    // --- flow
    let flow = {
        let fam = ex.get("flow", "family");
        let (fam_name, fam_line) = match &fam {
            Some((v, l)) => (v.as_str(), *l),
            None => ("quiescent", 0),
        };
        match fam_name {
            "quiescent" => FlowField::Quiescent,
            "cellular" => {
                let (amplitude, a_l) = ex.f64_or("flow", "amplitude", 1.0);
                if dx != 2 {
                    ex.issue(a_l.max(fam_line), "`flow.family`: cellular flow requires dx = 2".into());
                }
                FlowField::Cellular { amplitude }
            }
            "shear" => {
                let (rate, _) = ex.f64_or("flow", "rate", 0.5);
                FlowField::ShearKappa { rate }
            }
            "extensional" => {
                let (rate, _) = ex.f64_or("flow", "rate", 0.5);
                FlowField::ExtensionalKappa { rate }
            }
            other => {
                ex.issue(
                    fam_line,
                    format!("`flow.family`: unknown family `{other}` (quiescent, cellular, shear, extensional)"),
                );
                FlowField::Quiescent
            }
        }
    };

    if homog {
        if !matches!(theta, TemperatureField::Constant { .. }) {
            ex.issue(
                0,
                "`mesh.homogeneous_x`: requires the constant temperature family".into(),
            );
        }
        if matches!(flow, FlowField::Cellular { .. }) {
            ex.issue(0, "`mesh.homogeneous_x`: incompatible with cellular flow".into());
        }
    }

    // --- initial
    let (init_family, init_file) = {
        let fam = ex.get("initial", "family");
        let (fam_name, fam_line) = match &fam {
            Some((v, l)) => (v.as_str(), *l),
            None => ("fene-equilibrium-uniform", 0),
        };
        let file = ex.get("initial", "file").map(|(v, _)| v);
        let kind = match fam_name {
            "fene-equilibrium-uniform" => InitialKind::FeneEquilibriumUniform,
            "fene-equilibrium-bump" => InitialKind::FeneEquilibriumBump,
            "custom-nodal" => {
                if file.is_none() {
                    ex.issue(fam_line, "`initial.family`: custom-nodal requires `initial.file`".into());
                }
                InitialKind::CustomNodal
            }
            other => {
                ex.issue(
                    fam_line,
                    format!("`initial.family`: unknown family `{other}` (fene-equilibrium-uniform, fene-equilibrium-bump, custom-nodal)"),
                );
                InitialKind::FeneEquilibriumUniform
            }
        };
        (kind, file)
    };
    let (init_theta0, it_l) = ex.f64_or("initial", "theta0", 1.0);
    if init_theta0 <= 0.0 {
        ex.issue(it_l, format!("`initial.theta0`: must be positive, got {init_theta0}"));
    }

    // --- output
    let dir = ex.get("output", "dir").map(|(v, _)| v).unwrap_or_else(|| d.output.dir.clone());
    let (snapshot_every, _) = ex.usize_or("output", "snapshot_every", d.output.snapshot_every);
    let (rawdump, _) = ex.bool_or("output", "raw", d.output.raw);
    let (dump_operators, _) = ex.bool_or("output", "dump_operators", d.output.dump_operators);

    // --- mms
    let (levels, lv_l) = ex.usize_list("mms", "levels", &d.mms.levels);
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        ex.issue(lv_l, "`mms.levels`: need a strictly increasing nonempty list".into());
    }
    let (temporal_dt0, _) = ex.f64_or("mms", "temporal_dt0", d.mms.temporal_dt0);
    let (temporal_halvings, _) = ex.usize_or("mms", "temporal_halvings", d.mms.temporal_halvings);
    let (temporal_level, _) = ex.usize_or("mms", "temporal_level", d.mms.temporal_level);

    // --- continuation
    let (schedule, sch_l) = ex.f64_list("continuation", "schedule", &d.continuation.schedule);
    if schedule.len() < 2 || schedule.windows(2).any(|w| !(w[1] > 0.0 && w[1] < w[0])) {
        ex.issue(
            sch_l,
            "`continuation.schedule`: need a strictly decreasing positive list of at least two values".into(),
        );
    }

    // --- bd
    let (particles, pa_l) = ex.usize_or("bd", "particles", d.bd.particles);
    if particles == 0 {
        ex.issue(pa_l, "`bd.particles`: must be at least 1".into());
    }
    let (steps, st_l) = ex.usize_or("bd", "steps", d.bd.steps);
    if steps == 0 {
        ex.issue(st_l, "`bd.steps`: must be at least 1".into());
    }
    let (bd_dt, bdt_l) = ex.f64_or("bd", "dt", d.bd.dt);
    if bd_dt <= 0.0 {
        ex.issue(bdt_l, "`bd.dt`: must be positive".into());
    }
    let (seed, _) = ex.u64_or("bd", "seed", d.bd.seed);

    if !ex.issues.is_empty() {
        return Err(Error::Config(ex.issues));
    }

    Ok(SimulationConfig {
        params: Params {
            de,
            q0,
            eps,
            dt,
            t_end,
            tol_fp,
            tol_lin,
            max_picard,
            strong_form_halved_xdiff: halved,
        },
        theta,
        flow,
        mesh: MeshSpec {
            dx,
            dq,
            n_x: if homog { 0 } else { n_x },
            n_q,
            quad_order: quad,
            homogeneous_x: homog,
        },
        initial: InitialSpec {
            family: init_family,
            theta0: init_theta0,
            file: init_file,
        },
        output: OutputSpec {
            dir,
            snapshot_every,
            raw: rawdump,
            dump_operators,
        },
        mms: MmsSpec {
            levels,
            temporal_dt0,
            temporal_halvings,
            temporal_level,
        },
        continuation: ContinuationSpec { schedule },
        bd: BdSpec {
            particles,
            steps,
            dt: bd_dt,
            seed,
        },
    })
}
