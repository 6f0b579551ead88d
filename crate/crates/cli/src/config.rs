//! Experiment configuration: a JSON file with the blocks `experiment`,
//! `environment`, `hamiltonian`, `diffusion`, `numerics`, `sweep`, `checks`,
//! `oscillatory` and `output`.
//!
//! Every block is optional and strict: unknown keys are errors. Values are
//! resolved as defaults < file < `--set key=value`, and the winning source of
//! every leaf is kept alongside the resolved config.

use hjhomog_core::environment::EnvironmentSpec;
use hjhomog_core::homog::ModelSpec;
use hjhomog_core::models::{DiffusionKind, HamiltonianKind};
use hjhomog_core::scheme::SchemeConfig;
use hjhomog_core::{GridSpec, Vector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    EnvSample,
    Solve,
    #[default]
    Homog,
    Corrector,
    Geometry,
    VerifyRadial,
    VerifyConvex,
    Oscillatory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonianBlock {
    pub kind: HamiltonianKind,
}

impl Default for HamiltonianBlock {
    fn default() -> Self {
        HamiltonianBlock {
            kind: HamiltonianKind::Eikonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionBlock {
    pub kind: DiffusionKind,
    /// Viscosity floor; also the constant coefficient when `environment` is null.
    pub nu_min: f64,
    pub environment: Option<EnvironmentSpec>,
}

impl Default for DiffusionBlock {
    fn default() -> Self {
        DiffusionBlock {
            kind: DiffusionKind::Zero,
            nu_min: 0.0,
            environment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub dim: usize,
    /// Box side; 8 in 1D and 4 in 2D when null.
    pub extent: Option<f64>,
    /// Lattice spacing; 1/256 in 1D and 1/64 in 2D when null.
    pub spacing: Option<f64>,
    pub scheme: SchemeConfig,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            dim: 1,
            extent: None,
            spacing: None,
            scheme: SchemeConfig::default(),
        }
    }
}

impl Numerics {
    pub fn grid(&self) -> Result<GridSpec, CliError> {
        let (l, h) = default_box(self.dim);
        GridSpec::new(
            self.dim,
            self.extent.unwrap_or(l),
            self.spacing.unwrap_or(h),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }
}

fn default_box(dim: usize) -> (f64, f64) {
    if dim == 2 {
        (4.0, 1.0 / 64.0)
    } else {
        (8.0, 1.0 / 256.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    /// Momentum for single-point experiments and the geometry level.
    pub p: Vec<f64>,
    /// Momenta for tables; `[p]` when empty (and rays for `verify-radial`).
    pub p_grid: Vec<Vec<f64>>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Rays `s·(cos 2πk/n, sin 2πk/n)` used by `verify-radial` when `p_grid` is empty.
    pub directions: usize,
    pub radii: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            p: vec![1.0],
            p_grid: Vec::new(),
            deltas: vec![0.2, 0.1, 0.05, 0.025],
            seeds: (1..=8).collect(),
            directions: 8,
            radii: vec![0.5, 1.0, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    /// `C_R` in `δ‖v‖∞ + Lip(v) ≤ C_R`.
    pub assumption_bound: f64,
    /// Largest final seed dispersion accepted by `verify-convex`.
    pub variance_threshold: f64,
    /// Relative directional spread of `H̄` per radius.
    pub spread_tol: f64,
    /// Relative residual of the fit `H̄(s) = c̄ s`.
    pub fit_tol: f64,
    /// Probe points for the mean-zero test; `x = L/4` on each axis when empty.
    pub probes: Vec<Vec<f64>>,
    /// Relative tolerance against closed-form effective Hamiltonians.
    pub oracle_tol: f64,
    /// Largest relative spread across discounts of `max δ‖v‖∞ + Lip(v)`.
    pub bound_spread_tol: f64,
    /// Random ordered pairs tried by the comparison suite.
    pub comparison_pairs: usize,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            assumption_bound: 10.0,
            variance_threshold: 0.05,
            spread_tol: 0.03,
            fit_tol: 0.03,
            probes: Vec::new(),
            oracle_tol: 0.02,
            bound_spread_tol: 0.1,
            comparison_pairs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Oscillatory {
    pub epsilons: Vec<f64>,
    pub horizon: f64,
    /// Macroscopic box side; `extent/ε` must be a multiple of `numerics.extent`.
    pub extent: f64,
    pub spacing: f64,
    /// Apex of the cone `u0(x) = |x − c|`.
    pub cone_center: f64,
    /// Momentum nodes at which `H̄` is tabulated for the effective solve.
    pub table_nodes: Vec<f64>,
}

impl Default for Oscillatory {
    fn default() -> Self {
        Oscillatory {
            epsilons: vec![0.25, 0.125],
            horizon: 0.25,
            extent: 2.0,
            spacing: 1.0 / 128.0,
            cone_center: 1.0,
            table_nodes: vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub directory: String,
    pub svg: bool,
}

impl Default for Output {
    fn default() -> Self {
        Output {
            directory: "hjhomog-out".into(),
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub environment: EnvironmentSpec,
    pub hamiltonian: HamiltonianBlock,
    pub diffusion: DiffusionBlock,
    pub numerics: Numerics,
    pub sweep: Sweep,
    pub checks: Checks,
    pub oscillatory: Oscillatory,
    pub output: Output,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::default(),
            environment: EnvironmentSpec::constant(2.0),
            hamiltonian: HamiltonianBlock::default(),
            diffusion: DiffusionBlock::default(),
            numerics: Numerics::default(),
            sweep: Sweep::default(),
            checks: Checks::default(),
            oscillatory: Oscillatory::default(),
            output: Output::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            hamiltonian: self.hamiltonian.kind,
            environment: self.environment.clone(),
            diffusion: self.diffusion.kind,
            diffusion_environment: self.diffusion.environment.clone(),
            nu_min: self.diffusion.nu_min,
        }
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        self.numerics.grid()
    }

    pub fn p(&self) -> Result<Vector, CliError> {
        momentum(&self.sweep.p, self.numerics.dim, "sweep.p")
    }

    pub fn p_grid(&self) -> Result<Vec<Vector>, CliError> {
        if self.sweep.p_grid.is_empty() {
            return Ok(vec![self.p()?]);
        }
        self.sweep
            .p_grid
            .iter()
            .map(|q| momentum(q, self.numerics.dim, "sweep.p_grid"))
            .collect()
    }

    /// Fill the dimension-dependent defaults so the persisted config is complete.
    fn materialize(&mut self) {
        let (l, h) = default_box(self.numerics.dim);
        self.numerics.extent.get_or_insert(l);
        self.numerics.spacing.get_or_insert(h);
    }
}

fn momentum(v: &[f64], dim: usize, key: &str) -> Result<Vector, CliError> {
    match (dim, v) {
        (1, [a]) => Ok([*a, 0.0]),
        (2, [a, b]) => Ok([*a, *b]),
        _ => Err(CliError::Config(format!(
            "{key}: expected {dim} component(s), got {}",
            v.len()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Cli,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Cli => "cli",
        })
    }
}

/// A config with every default filled in, and where each leaf came from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub sources: BTreeMap<String, Source>,
}

impl Resolved {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n"
    }

    /// `key,source,value` rows.
    pub fn sources_csv(&self) -> String {
        let value = serde_json::to_value(&self.config).expect("config serializes");
        let mut leaves = BTreeMap::new();
        flatten("", &value, &mut leaves);
        let mut out = String::from("key,source,value\n");
        for (k, v) in leaves {
            let src = self.sources.get(&k).copied().unwrap_or(Source::Default);
            let v = v.to_string().replace('"', "");
            let v = if v.contains(',') { format!("\"{v}\"") } else { v };
            out.push_str(&format!("{k},{src},{v}\n"));
        }
        out
    }
}

/// Split `key=value`; the value is JSON when it parses, a string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{s}` is not key=value")))?;
    let k = k.trim();
    if k.is_empty() || k.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override `{s}` has an empty key")));
    }
    let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), v))
}

/// Resolve `text` (the config file contents, `name` for messages) with overrides.
pub fn resolve(name: &str, text: &str, overrides: &[String]) -> Result<Resolved, CliError> {
    // strict typed parse first: serde_json reports the line and the key
    serde_json::from_str::<ExperimentConfig>(text)
        .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
    let file: Value =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{name}: {e}")))?;

    let mut merged = serde_json::to_value(ExperimentConfig::default()).expect("serializes");
    merge(&mut merged, &file);
    let mut cli_keys = Vec::new();
    for o in overrides {
        let (k, v) = parse_override(o)?;
        set_path(&mut merged, &k, v)?;
        cli_keys.push(k);
    }
    let mut config: ExperimentConfig = serde_json::from_value(merged)
        .map_err(|e| CliError::Config(format!("{name} with overrides: {e}")))?;
    config.materialize();

    let mut leaves = BTreeMap::new();
    flatten("", &serde_json::to_value(&config).expect("serializes"), &mut leaves);
    let mut file_leaves = BTreeMap::new();
    flatten("", &file, &mut file_leaves);
    let under = |leaf: &str, key: &str| leaf == key || leaf.starts_with(&format!("{key}."));
    let sources = leaves
        .into_keys()
        .map(|leaf| {
            let src = if cli_keys.iter().any(|k| under(&leaf, k)) {
                Source::Cli
            } else if file_leaves.keys().any(|f| under(&leaf, f) || under(f, &leaf)) {
                Source::File
            } else {
                Source::Default
            };
            (leaf, src)
        })
        .collect();
    Ok(Resolved { config, sources })
}

// Externally tagged enums (one key naming the variant) are replaced, not merged.
const REPLACED: &[&str] = &["family"];

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if !REPLACED.contains(&k.as_str()) => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (n, part) in parts.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override `{key}`: `{}` is not a block",
                parts[..n].join(".")
            ))
        })?;
        if n + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("keys have at least one part")
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, x) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = resolve("c.json", r#"{"environment": {"speeed": 1}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("speeed"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn precedence_and_sources() {
        let text = r#"{"numerics": {"dim": 2, "scheme": {"stop_tol": 1e-8}}, "sweep": {"p": [1, 0]}}"#;
        let r = resolve("c.json", text, &["numerics.scheme.stop_tol=1e-7".into()]).unwrap();
        assert_eq!(r.config.numerics.scheme.stop_tol, 1e-7);
        assert_eq!(r.sources["numerics.scheme.stop_tol"], Source::Cli);
        assert_eq!(r.sources["numerics.dim"], Source::File);
        assert_eq!(r.sources["numerics.scheme.cfl"], Source::Default);
        assert_eq!(r.config.numerics.extent, Some(4.0));
        assert_eq!(r.sources["numerics.extent"], Source::Default);
    }

    #[test]
    fn family_blocks_are_replaced() {
        let text = r#"{"environment": {"family": {"random_checkerboard": {"low": 1, "high": 2}}}}"#;
        let r = resolve("c.json", text, &[]).unwrap();
        assert!(r.to_json().contains("random_checkerboard"));
        assert!(!r.to_json().contains("random_phase_trig"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let r = resolve("c.json", "{}", &["sweep.seeds=[3,4]".into()]).unwrap();
        let again = resolve("resolved.json", &r.to_json(), &[]).unwrap();
        assert_eq!(r.config, again.config);
    }

    #[test]
    fn bad_overrides() {
        assert!(parse_override("novalue").is_err());
        assert!(resolve("c.json", "{}", &["numerics.nope=1".into()]).is_err());
        let (_, v) = parse_override("output.directory=out/a").unwrap();
        assert_eq!(v, Value::String("out/a".into()));
    }
}
