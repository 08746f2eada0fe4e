//! Model parameters, therapy schedules and run settings.
//!
//! The on-disk format is TOML with three sections, `[params]`, `[therapy]`
//! and `[run]`, plus an optional `[sweep]` axis used by the `sweep`
//! subcommand:
//!
//! ```toml
//! [params]
//! lambda = 1.0
//! eta = 1.0
//! D = 1.0
//! gamma_h = 1.0
//! gamma_c = 2.0
//! gamma_p = 1.0
//! alpha_h = 0.3
//! alpha_c = 0.4
//! S_h = 0.5
//! S_c = 0.5
//! M = 0.1
//! m_ref = 1.0
//! rho = 0.0
//! A = 0.0
//!
//! [therapy]
//! u = [{ start = 0.0, value = 0.0 }]
//! s = [{ start = 0.0, value = 0.0 }]
//!
//! [run]
//! dim = 1
//! n = [63]
//! length = [1.0]
//! t_end = 20.0
//! initial = { kind = "bump", phi = 0.5, sigma = 0.2, p = 0.0 }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, BcKind, Grid};

/// Coefficients of the three-field model.
///
/// All diffusivities, uptake/decay rates, production rates and supply rates
/// are strictly positive; `mobility` may be zero (no phase-field reaction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Diffusivity of the phase field.
    pub lambda: f64,
    /// Diffusivity of the nutrient.
    pub eta: f64,
    /// Diffusivity of PSA.
    #[serde(rename = "D")]
    pub psa_diffusivity: f64,
    pub gamma_h: f64,
    pub gamma_c: f64,
    pub gamma_p: f64,
    pub alpha_h: f64,
    pub alpha_c: f64,
    #[serde(rename = "S_h")]
    pub supply_h: f64,
    #[serde(rename = "S_c")]
    pub supply_c: f64,
    /// Tumor mobility.
    #[serde(rename = "M")]
    pub mobility: f64,
    pub m_ref: f64,
    #[serde(rename = "rho")]
    pub proliferation: f64,
    #[serde(rename = "A")]
    pub apoptosis: f64,
    #[serde(default)]
    pub sigma_l: f64,
    #[serde(default = "one")]
    pub sigma_r: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelParams {
    pub fn gamma_ch(&self) -> f64 {
        self.gamma_c - self.gamma_h
    }

    pub fn supply_ch(&self) -> f64 {
        self.supply_c - self.supply_h
    }

    pub fn alpha_ch(&self) -> f64 {
        self.alpha_c - self.alpha_h
    }

    /// Spatially constant steady nutrient level `S_h / gamma_h`.
    pub fn sigma_inf(&self) -> f64 {
        self.supply_h / self.gamma_h
    }

    /// Spatially constant steady PSA level `alpha_h / gamma_p`.
    pub fn p_inf(&self) -> f64 {
        self.alpha_h / self.gamma_p
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("eta", self.eta),
            ("D", self.psa_diffusivity),
            ("gamma_h", self.gamma_h),
            ("gamma_c", self.gamma_c),
            ("gamma_p", self.gamma_p),
            ("alpha_h", self.alpha_h),
            ("alpha_c", self.alpha_c),
            ("S_h", self.supply_h),
            ("S_c", self.supply_c),
            ("m_ref", self.m_ref),
            ("sigma_r", self.sigma_r),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveCoefficient(name.to_string()));
            }
        }
        if !(self.mobility >= 0.0) || !self.mobility.is_finite() {
            return Err(Error::NonPositiveCoefficient("M".to_string()));
        }
        for (name, value) in [
            ("rho", self.proliferation),
            ("A", self.apoptosis),
            ("sigma_l", self.sigma_l),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidConfig(format!("`{name}` is not finite")));
            }
        }
        Ok(())
    }
}

/// One piece of a piecewise-constant-in-time control, active from `start`
/// until the next segment begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub enum Profile<'a> {
    Uniform(f64),
    Cells(&'a [f64]),
}

impl Profile<'_> {
    #[inline]
    pub fn at(&self, node: usize) -> f64 {
        match self {
            Profile::Uniform(v) => *v,
            Profile::Cells(values) => values[node],
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Profile::Uniform(v) => Box::new(std::iter::once(*v)),
            Profile::Cells(values) => Box::new(values.iter().copied()),
        }
    }
}

impl Segment {
    pub fn uniform(start: f64, value: f64) -> Self {
        Segment { start, value: Some(value), cells: None }
    }

    pub fn cells(start: f64, cells: Vec<f64>) -> Self {
        Segment { start, value: None, cells: Some(cells) }
    }

    fn profile(&self) -> Profile<'_> {
        match (&self.value, &self.cells) {
            (_, Some(cells)) => Profile::Cells(cells),
            (Some(v), None) => Profile::Uniform(*v),
            (None, None) => Profile::Uniform(0.0),
        }
    }
}

/// Chemotherapy effect `u` and antiangiogenic supply reduction `s`.
///
/// Per-cell `u` arrays follow the phase-field (interior node) layout; per-cell
/// `s` arrays follow the nutrient (all-node) layout. An empty list means the
/// control is identically zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TherapySchedule {
    #[serde(default)]
    pub u: Vec<Segment>,
    #[serde(default)]
    pub s: Vec<Segment>,
}

fn active(segments: &[Segment], t: f64) -> Profile<'_> {
    segments
        .iter()
        .rev()
        .find(|seg| seg.start <= t)
        .map(Segment::profile)
        .unwrap_or(Profile::Uniform(0.0))
}

fn sup_abs(segments: &[Segment]) -> f64 {
    segments
        .iter()
        .flat_map(|seg| seg.profile().values().collect::<Vec<_>>())
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

impl TherapySchedule {
    pub fn constant(u: f64, s: f64) -> Self {
        TherapySchedule { u: vec![Segment::uniform(0.0, u)], s: vec![Segment::uniform(0.0, s)] }
    }

    pub fn u_at(&self, t: f64) -> Profile<'_> {
        active(&self.u, t)
    }

    pub fn s_at(&self, t: f64) -> Profile<'_> {
        active(&self.s, t)
    }

    /// Exact sup-norm of `u` over all segments.
    pub fn u_sup(&self) -> f64 {
        sup_abs(&self.u)
    }

    /// Exact sup-norm of `s` over all segments.
    pub fn s_sup(&self) -> f64 {
        sup_abs(&self.s)
    }

    /// Start of the last segment of either control; both are constant after it.
    pub fn last_switch(&self) -> f64 {
        self.u.iter().chain(&self.s).map(|seg| seg.start).fold(0.0, f64::max)
    }

    /// Whether `s <= S_c` everywhere, the hypothesis of the nonnegativity and
    /// nutrient comparison results.
    pub fn s_le_sc(&self, params: &ModelParams) -> bool {
        self.s_sup() <= params.supply_c
    }

    pub fn validate(&self, grid: Option<&Grid>) -> Result<()> {
        for (name, segments, bc) in [("u", &self.u, BcKind::Dirichlet0), ("s", &self.s, BcKind::Neumann0)] {
            let mut last = f64::NEG_INFINITY;
            for seg in segments.iter() {
                if !seg.start.is_finite() || seg.start < last {
                    return Err(Error::InvalidConfig(format!(
                        "therapy `{name}` segments must have finite, nondecreasing start times"
                    )));
                }
                last = seg.start;
                if seg.value.is_some() && seg.cells.is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "therapy `{name}` segment at t={} sets both `value` and `cells`",
                        seg.start
                    )));
                }
                for v in seg.profile().values() {
                    if !v.is_finite() {
                        return Err(Error::InvalidConfig(format!("therapy `{name}` has a non-finite value")));
                    }
                    if name == "s" && v < 0.0 {
                        return Err(Error::NegativeSchedule { start: seg.start, value: v });
                    }
                }
                if let (Some(cells), Some(grid)) = (&seg.cells, grid) {
                    let expected = grid.layout_len(bc);
                    if cells.len() != expected {
                        return Err(Error::ShapeMismatch { expected, got: cells.len() });
                    }
                }
            }
            if let Some(first) = segments.first() {
                if first.start > 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "therapy `{name}` must start at t=0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Initial data selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialCondition {
    /// Spatially constant fields (phi on interior nodes).
    Constant { phi: f64, sigma: f64, p: f64 },
    /// `phi = amplitude * prod sin(pi x / L)`, constant sigma and p.
    Bump { phi: f64, sigma: f64, p: f64 },
    /// Independent uniform draws in `[0, phi]`, `[0, sigma]`, `[0, p]`.
    Random { seed: u64, phi: f64, sigma: f64, p: f64 },
    /// The steady state `(0, S_h/gamma_h, alpha_h/gamma_p)`.
    Steady,
}

fn default_output_every() -> usize {
    1
}
fn default_tau_bound() -> f64 {
    1e-8
}
fn default_eps_conv() -> f64 {
    1e-6
}
fn default_solver_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    /// Interior nodes per axis.
    pub n: Vec<usize>,
    /// Physical extent per axis.
    pub length: Vec<f64>,
    /// Time step; when absent the largest admissible step is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Output cadence in steps.
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub clamp: bool,
    #[serde(default = "default_tau_bound")]
    pub tau_bound: f64,
    #[serde(default = "default_eps_conv")]
    pub eps_conv: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    pub initial: InitialCondition,
}

/// Resolved time discretisation of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePlan {
    pub dt: f64,
    pub steps: usize,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidConfig(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.n.len() != self.dim || self.length.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "`n` and `length` need {} entries",
                self.dim
            )));
        }
        let axes = self
            .n
            .iter()
            .zip(&self.length)
            .map(|(&n, &len)| Axis::new(n, len))
            .collect::<Result<Vec<_>>>()?;
        Grid::new(axes)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::InvalidConfig("dt must be positive".into()));
            }
            if self.t_end > 0.0 && self.t_end < dt {
                return Err(Error::InvalidConfig("t_end must be at least dt".into()));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig("t_end must be nonnegative".into()));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidConfig("output_every must be at least 1".into()));
        }
        for (name, v) in [
            ("tau_bound", self.tau_bound),
            ("eps_conv", self.eps_conv),
            ("solver_tol", self.solver_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("`{name}` must be positive")));
            }
        }
        if self.dt.is_some() {
            self.time_plan(f64::INFINITY)?;
        }
        match &self.initial {
            InitialCondition::Constant { phi, sigma, p }
            | InitialCondition::Bump { phi, sigma, p }
            | InitialCondition::Random { phi, sigma, p, .. } => {
                if !(0.0..=1.0).contains(phi) {
                    return Err(Error::InvalidInitial(format!("phi amplitude {phi} outside [0, 1]")));
                }
                if !sigma.is_finite() || !p.is_finite() {
                    return Err(Error::InvalidInitial("non-finite sigma or p".into()));
                }
                if matches!(self.initial, InitialCondition::Random { .. }) && (*sigma < 0.0 || *p < 0.0) {
                    return Err(Error::InvalidInitial("random ranges must be nonnegative".into()));
                }
            }
            InitialCondition::Steady => {}
        }
        Ok(())
    }

    /// Resolve the step size and count. With an explicit `dt`, `t_end` must
    /// be an integer multiple of it; otherwise the step count is the smallest
    /// multiple of the output cadence keeping `dt <= dt_max`.
    pub fn time_plan(&self, dt_max: f64) -> Result<TimePlan> {
        if self.t_end == 0.0 {
            return Ok(TimePlan { dt: self.dt.unwrap_or(dt_max.min(1.0)), steps: 0 });
        }
        match self.dt {
            Some(dt) => {
                let steps = (self.t_end / dt).round();
                if steps < 1.0 || (steps * dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "t_end = {} is not a multiple of dt = {dt}",
                        self.t_end
                    )));
                }
                let steps = steps as usize;
                if !steps.is_multiple_of(self.output_every) {
                    return Err(Error::InvalidConfig(format!(
                        "output_every = {} does not divide the step count {steps}",
                        self.output_every
                    )));
                }
                Ok(TimePlan { dt, steps })
            }
            None => {
                let blocks = (self.t_end / (dt_max * self.output_every as f64)).ceil().max(1.0) as usize;
                let steps = blocks * self.output_every;
                Ok(TimePlan { dt: self.t_end / steps as f64, steps })
            }
        }
    }
}

/// A one-parameter sweep: `axis` names a key such as `M` (a `[params]`
/// entry) or a dotted path like `run.t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub axis: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn path(&self) -> String {
        if self.axis.contains('.') {
            self.axis.clone()
        } else {
            format!("params.{}", self.axis)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub params: ModelParams,
    #[serde(default)]
    pub therapy: TherapySchedule,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
}

const REQUIRED_PARAMS: [&str; 14] = [
    "lambda", "eta", "D", "gamma_h", "gamma_c", "gamma_p", "alpha_h", "alpha_c", "S_h", "S_c", "M",
    "m_ref", "rho", "A",
];
const REQUIRED_RUN: [&str; 5] = ["dim", "n", "length", "t_end", "initial"];

fn check_required(doc: &toml::Table) -> Result<()> {
    for (section, keys) in [("params", &REQUIRED_PARAMS[..]), ("run", &REQUIRED_RUN[..])] {
        let table = match doc.get(section) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(Error::Parse(format!("`{section}` must be a table"))),
            None => return Err(Error::MissingKey(section.to_string())),
        };
        for key in keys {
            if !table.contains_key(*key) {
                return Err(Error::MissingKey(format!("{section}.{key}")));
            }
        }
    }
    Ok(())
}

/// Parse a `key=value` override value as a TOML scalar/array, falling back to
/// a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set a dotted `section.key[.subkey]` path in a TOML document, creating
/// intermediate tables. Bare keys address `[params]`.
pub fn set_path(doc: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let full = if path.contains('.') { path.to_string() } else { format!("params.{path}") };
    let parts: Vec<&str> = full.split('.').collect();
    let (last, head) = parts.split_last().expect("nonempty path");
    let mut table = doc;
    for part in head {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::InvalidConfig(format!("`{part}` in `{path}` is not a table"))),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn from_table(doc: toml::Table) -> Result<Config> {
    check_required(&doc)?;
    let config: Config = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.run.validate()?;
        let grid = self.run.grid()?;
        self.therapy.validate(Some(&grid))?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }
}

/// Parse and validate a config document.
pub fn load_config(text: &str) -> Result<Config> {
    load_config_with_overrides(text, &[])
}

/// Parse a config document, apply `key=value` overrides, then validate.
pub fn load_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Config> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    for (key, raw) in overrides {
        set_path(&mut doc, key, parse_override_value(raw))?;
    }
    from_table(doc)
}

/// Split a `key=value` command-line override.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::InvalidConfig(format!("override `{arg}` is not key=value"))),
    }
}

/// Outcome of checking the parameter condition for exponential convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCondition {
    pub holds: bool,
    /// `lambda * lambda1` minus the subtracted coupling terms.
    pub margin: f64,
    /// `min{margin, gamma_p/2, gamma_h/2}`; only meaningful when `holds`.
    pub beta: f64,
    /// True when the coupling terms the estimate drops vanish identically:
    /// `S_c = S_h`, `s = 0` and `gamma_c >= gamma_h`.
    pub neglected_terms_vanish: bool,
}

/// Check `lambda*lambda1 >= |gamma_ch|^2 sigma_inf^2 / gamma_h +
/// |alpha_ch|^2 / (2 gamma_p) + 2 f_sup` with `sigma_inf = S_h / gamma_h`.
pub fn validate_decay_condition(
    params: &ModelParams,
    schedule: &TherapySchedule,
    lambda1: f64,
    f_sup: f64,
) -> DecayCondition {
    let sigma_inf = params.sigma_inf();
    let subtracted = params.gamma_ch().powi(2) * sigma_inf.powi(2) / params.gamma_h
        + params.alpha_ch().powi(2) / (2.0 * params.gamma_p)
        + 2.0 * f_sup;
    let margin = params.lambda * lambda1 - subtracted;
    let beta = margin.min(params.gamma_p / 2.0).min(params.gamma_h / 2.0);
    DecayCondition {
        holds: margin >= 0.0,
        margin,
        beta,
        neglected_terms_vanish: params.supply_ch() == 0.0
            && schedule.s_sup() == 0.0
            && params.gamma_ch() >= 0.0,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Parameters with `f_sup = 0.1`, `gamma_ch = 1`, `sigma_inf = 0.5`,
    /// `alpha_ch = 0.1`.
    pub fn decay_params() -> ModelParams {
        ModelParams {
            lambda: 1.0,
            eta: 1.0,
            psa_diffusivity: 1.0,
            gamma_h: 1.0,
            gamma_c: 2.0,
            gamma_p: 1.0,
            alpha_h: 0.3,
            alpha_c: 0.4,
            supply_h: 0.5,
            supply_c: 0.5,
            mobility: 0.1,
            m_ref: 1.0,
            proliferation: 0.0,
            apoptosis: 0.0,
            sigma_l: 0.0,
            sigma_r: 1.0,
        }
    }

    pub const VALID: &str = r#"
[params]
lambda = 1.0
eta = 1.0
D = 1.0
gamma_h = 1.0
gamma_c = 2.0
gamma_p = 1.0
alpha_h = 0.3
alpha_c = 0.4
S_h = 0.5
S_c = 0.5
M = 0.1
m_ref = 1.0
rho = 0.0
A = 0.0

[therapy]
u = [{ start = 0.0, value = 0.0 }]
s = [{ start = 0.0, value = 0.0 }]

[run]
dim = 1
n = [3]
length = [1.0]
dt = 0.1
t_end = 1.0
initial = { kind = "bump", phi = 0.5, sigma = 0.2, p = 0.0 }
"#;
}
