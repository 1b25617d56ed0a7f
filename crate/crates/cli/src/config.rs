//! Run configuration: one TOML file, overridden key by key from the command
//! line.

use std::path::{Path, PathBuf};

use fsde_core::conjugate::{default_gamma_axis, default_hurst_axis, fou_gamma_bound, linear_axis, log_axis};
use fsde_core::samplers::ChainConfig;
use fsde_core::{FcirParams, FouParams, PriorSpec, SdeModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Hmc,
    Gibbs,
    Grid,
    K0Rejection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassPolicy {
    /// Inverse pilot variance estimated during warm-up.
    Adapt,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Infer,
    Rolling,
    DemoFailure,
    Diagnostics,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Infer => "infer",
            CommandKind::Rolling => "rolling",
            CommandKind::DemoFailure => "demo-failure",
            CommandKind::Diagnostics => "diagnostics",
        }
    }

    fn needs_input(&self) -> bool {
        matches!(self, CommandKind::Infer | CommandKind::Rolling | CommandKind::Diagnostics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeapfrogConfig {
    pub eps: f64,
    pub steps: usize,
    pub mass: MassPolicy,
    pub adapt_step: bool,
    pub warmup: usize,
    pub target_accept: f64,
    pub thin: usize,
}

impl Default for LeapfrogConfig {
    fn default() -> Self {
        Self { eps: 0.05, steps: 10, mass: MassPolicy::Adapt, adapt_step: true, warmup: 1000, target_accept: 0.7, thin: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl AxisSpec {
    pub fn values(&self, what: &str) -> CliResult<Vec<f64>> {
        if !(self.lo < self.hi) || self.points < 2 || (self.log && !(self.lo > 0.0)) {
            return Err(CliError::Config(format!(
                "{what} axis needs lo < hi, at least two points and lo > 0 on a log scale"
            )));
        }
        Ok(if self.log { log_axis(self.lo, self.hi, self.points) } else { linear_axis(self.lo, self.hi, self.points) })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub gamma: Option<AxisSpec>,
    pub hurst: Option<AxisSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub hurst: f64,
    /// Number of intervals; the path has `n + 1` points.
    pub n: usize,
    /// fCIR start value, `mu` when absent. The fOU path starts stationary.
    pub x0: Option<f64>,
    /// Euler substeps per observation interval for fCIR.
    pub refine: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { gamma: 1.0, mu: 0.0, sigma: 1.0, hurst: 0.75, n: 300, x0: None, refine: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingConfig {
    /// Points per window.
    pub window: usize,
    /// Number of evenly spaced windows; ignored when `stride` is set.
    pub windows: usize,
    pub stride: Option<usize>,
    pub draws: usize,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self { window: 1260, windows: 1000, stride: None, draws: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub hurst: Vec<f64>,
    pub n_steps: Vec<usize>,
    pub runs: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { hurst: vec![0.3, 0.7], n_steps: vec![1 << 16], runs: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub max_lag: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { max_lag: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: SdeModel,
    pub level: u32,
    pub sampler: SamplerKind,
    /// Recorded iterations (HMC, Gibbs) or draws (k0-rejection).
    pub iterations: usize,
    pub seed: u64,
    /// Prior name; the model's noninformative prior when absent.
    pub prior: Option<String>,
    /// Upper end of the `γ` support. fOU defaults to `2 / dt`.
    pub gamma_max: Option<f64>,
    /// Observation spacing.
    pub dt: f64,
    pub input: Option<PathBuf>,
    /// Output directory, or the CSV path for `simulate`.
    pub output: Option<PathBuf>,
    pub leapfrog: LeapfrogConfig,
    pub grid: GridConfig,
    pub simulate: SimulateConfig,
    pub rolling: RollingConfig,
    pub demo: DemoConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: SdeModel::Fou,
            level: 0,
            sampler: SamplerKind::Hmc,
            iterations: 1000,
            seed: 0,
            prior: None,
            gamma_max: None,
            dt: 1.0,
            input: None,
            output: None,
            leapfrog: LeapfrogConfig::default(),
            grid: GridConfig::default(),
            simulate: SimulateConfig::default(),
            rolling: RollingConfig::default(),
            demo: DemoConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

/// Splits `key.path=value`; the value is read as a TOML literal and falls
/// back to a bare string.
pub fn parse_override(raw: &str) -> CliResult<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{raw}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override '{raw}' has an empty key")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap_or(key);
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{p}' in override '{key}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Reads `path` (if any), applies `overrides` in order and deserializes.
pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> CliResult<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("cannot parse config {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in overrides {
        set_path(&mut table, k, v.clone())?;
    }
    toml::Value::Table(table).try_into().map_err(|e| CliError::Config(format!("{e}")))
}

impl RunConfig {
    /// Checks everything that does not depend on the input data.
    pub fn validate(&self, cmd: CommandKind) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if self.level > 12 {
            return bad(format!("level {} is beyond the supported range 0..=12", self.level));
        }
        if cmd.needs_input() {
            match &self.input {
                None => return bad(format!("'{}' needs an input file", cmd.name())),
                Some(p) if !p.is_file() => return bad(format!("input file {} does not exist", p.display())),
                _ => {}
            }
        }
        if let Some(g) = self.gamma_max {
            if !(g > 0.0) {
                return bad(format!("gamma_max = {g} must be positive"));
            }
        }
        match cmd {
            CommandKind::Simulate => {
                if self.simulate.n == 0 {
                    return bad("simulate.n must be at least 1".into());
                }
                match self.model {
                    SdeModel::Fou => self.fou_params().validate(),
                    SdeModel::Fcir => self.fcir_params().validate(),
                }
                .map_err(|e| CliError::Config(e.to_string()))?;
                if self.model == SdeModel::Fcir {
                    if self.simulate.refine == 0 {
                        return bad("simulate.refine must be at least 1".into());
                    }
                    if !(self.fcir_x0() > 0.0) {
                        return bad(format!("fCIR start value {} must be positive", self.fcir_x0()));
                    }
                }
            }
            CommandKind::Infer => {
                self.prior_spec()?;
                self.chain_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
                if self.sampler == SamplerKind::Grid {
                    if self.model != SdeModel::Fou {
                        return bad("the grid sampler is only available for fou".into());
                    }
                    self.gamma_axis()?;
                    self.hurst_axis()?;
                }
                if self.sampler == SamplerKind::K0Rejection && self.level != 0 {
                    return bad("k0-rejection runs at level 0 only".into());
                }
            }
            CommandKind::Rolling => {
                if self.rolling.window < 4 {
                    return bad("rolling.window must be at least 4".into());
                }
                if self.rolling.stride == Some(0) || self.rolling.windows == 0 {
                    return bad("rolling stride and window count must be positive".into());
                }
                if self.rolling.draws == 0 {
                    return bad("rolling.draws must be positive".into());
                }
            }
            CommandKind::DemoFailure => {
                if let Some(h) = self.demo.hurst.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
                    return bad(format!("demo Hurst value {h} outside (0, 1)"));
                }
                if self.demo.n_steps.contains(&0) {
                    return bad("demo step counts must be positive".into());
                }
            }
            CommandKind::Diagnostics => {}
        }
        Ok(())
    }

    pub fn fou_params(&self) -> FouParams {
        let s = &self.simulate;
        FouParams { gamma: s.gamma, mu: s.mu, sigma: s.sigma, hurst: s.hurst }
    }

    pub fn fcir_params(&self) -> FcirParams {
        let s = &self.simulate;
        FcirParams { gamma: s.gamma, mu: s.mu, sigma: s.sigma, hurst: s.hurst }
    }

    pub fn fcir_x0(&self) -> f64 {
        self.simulate.x0.unwrap_or(self.simulate.mu)
    }

    pub fn prior_spec(&self) -> CliResult<PriorSpec> {
        let spec = match &self.prior {
            Some(name) => PriorSpec::from_name(name)?,
            None => PriorSpec::default_for(self.model),
        };
        Ok(match (self.gamma_max, self.model) {
            (Some(g), _) => spec.with_gamma_max(g),
            (None, SdeModel::Fou) => spec.with_gamma_max(fou_gamma_bound(self.dt)),
            (None, SdeModel::Fcir) => spec,
        })
    }

    pub fn chain_config(&self) -> ChainConfig {
        let l = &self.leapfrog;
        ChainConfig {
            step_eps: l.eps,
            n_leapfrog: l.steps,
            warmup: l.warmup,
            adapt_step: l.adapt_step,
            adapt_mass: l.mass == MassPolicy::Adapt,
            target_accept: l.target_accept,
            thin: l.thin,
            ..ChainConfig::default()
        }
    }

    pub fn gamma_axis(&self) -> CliResult<Vec<f64>> {
        match &self.grid.gamma {
            Some(a) => a.values("gamma"),
            None => Ok(default_gamma_axis(self.dt)),
        }
    }

    pub fn hurst_axis(&self) -> CliResult<Vec<f64>> {
        let axis = match &self.grid.hurst {
            Some(a) => a.values("hurst")?,
            None => default_hurst_axis(),
        };
        if axis.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return Err(CliError::Config("hurst axis must lie inside (0, 1)".into()));
        }
        Ok(axis)
    }
}
