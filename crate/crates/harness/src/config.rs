//! TOML experiment descriptions.
//!
//! A configuration names a model, a grid, a stepping plan, an initial-data
//! family, an output directory, and a list of named checks to evaluate after
//! the run. Parsing is strict (`deny_unknown_fields`), so typos fail loudly
//! instead of being silently ignored.
//!
//! Two things are worth calling out:
//!
//! * the content hash is computed from the *parsed* configuration, re-encoded
//!   canonically, so it does not depend on field order, whitespace, or
//!   comments in the input file;
//! * dotted-path overrides (`plan.dt=1e-3`) round-trip through the typed
//!   struct, so a misspelled path or an ill-typed value is rejected with the
//!   same strictness as the file itself.

use std::path::Path;

use dnls_core::{
    C64, Equation, Grid, IndexSet, ModelParams, StepPlan, validate_indices,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};
use crate::runner::CHECK_NAMES;

fn default_k_bound() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_adapt_c() -> f64 {
    0.05
}
fn default_stride() -> usize {
    1
}
fn default_one() -> f64 {
    1.0
}
fn default_weight_power() -> u32 {
    2
}
fn default_epsilon() -> f64 {
    0.5
}
fn default_modes() -> usize {
    8
}

/// Which equation the stepper integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    Rescaled,
    Autonomous,
}

impl EquationKind {
    pub fn to_core(self) -> Equation {
        match self {
            EquationKind::Rescaled => Equation::Rescaled,
            EquationKind::Autonomous => Equation::Autonomous,
        }
    }
}

/// Initial-data family selector; the knobs live in [`InitialSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `c <x>^{-n}` — smooth, algebraically decaying, bounded below in the
    /// weighted sense.
    PowerDecay,
    /// `c <x>^{-n} + phi` with a seeded band-limited perturbation scaled so
    /// that `sup |phi| <x>^n = |c| - epsilon`, preserving the weighted lower
    /// bound `epsilon`.
    PerturbedPowerDecay,
    /// `amplitude exp(-|x|^2 / (2 sigma^2))` — decays too fast to satisfy
    /// the weighted lower bound, so it is rejected when `theorem_mode` is
    /// set.
    Gaussian,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FamilyKind::PowerDecay => "power-decay",
            FamilyKind::PerturbedPowerDecay => "perturbed-power-decay",
            FamilyKind::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda_re: f64,
    #[serde(default)]
    pub lambda_im: f64,
    pub alpha: f64,
    pub dim: usize,
    #[serde(default)]
    pub b: f64,
    /// A-priori data bound `K`; enters the thresholds, defaults to 1.
    #[serde(default = "default_k_bound")]
    pub k_bound: f64,
}

/// Explicit seminorm indices; omitted, the per-dimension defaults apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicesSection {
    pub k: usize,
    pub n: usize,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub equation: EquationKind,
    pub dt: f64,
    /// Final time. Exactly one of `t_end` and `stop_one_minus_bt` must be
    /// given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Stop when `1 - b t` reaches this value (rescaled runs with `b > 0`
    /// only); resolved to `t_end = (1 - value)/b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_one_minus_bt: Option<f64>,
    #[serde(default = "default_true")]
    pub adapt: bool,
    #[serde(default = "default_adapt_c")]
    pub adapt_c: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub mandatory_times: Vec<f64>,
    /// Force the pointwise amplitude quadrature on or off; omitted, the
    /// stepper's own default applies (on exactly for dissipative rescaled
    /// runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_f: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub family: FamilyKind,
    /// Complex prefactor `c` of the power-decay families.
    #[serde(default = "default_one")]
    pub c_re: f64,
    #[serde(default)]
    pub c_im: f64,
    /// Decay power of the envelope `<x>^{-n}`.
    #[serde(default = "default_weight_power")]
    pub n: u32,
    /// Weighted lower bound retained by the perturbed family.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Number of seeded Fourier modes in the perturbation.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Gaussian width.
    #[serde(default = "default_one")]
    pub sigma: f64,
    /// Gaussian amplitude.
    #[serde(default = "default_one")]
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory under which each run creates its own fresh subdirectory.
    pub dir: String,
}

/// A complete experiment description. Scalar fields come first so the
/// canonical re-encoding used by [`ExperimentConfig::hash`] is valid TOML
/// (values before tables).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for the randomized initial-data families.
    #[serde(default)]
    pub seed: u64,
    /// Enforce the strict parameter regime of the decay statements.
    #[serde(default)]
    pub theorem_mode: bool,
    /// Named post-run checks to evaluate; every name must be known.
    #[serde(default)]
    pub checks: Vec<String>,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<IndicesSection>,
    pub grid: GridSection,
    pub plan: PlanSection,
    pub initial: InitialSpec,
    pub output: OutputSection,
}

/// The validated, core-typed form of a configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub params: ModelParams,
    pub idx: IndexSet,
    pub grid: Grid,
    pub plan: StepPlan,
    /// Full content hash (64 hex chars).
    pub hash: String,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Canonical re-encoding with the output directory blanked: two configs
    /// that resolve to the same experiment hash identically even if they are
    /// written to different places or with fields in a different order.
    fn canonical_text(&self) -> Result<String> {
        let mut clone = self.clone();
        clone.output.dir = String::new();
        toml::to_string(&clone).map_err(|e| {
            HarnessError::Config(format!("cannot canonicalize config: {e}"))
        })
    }

    /// SHA-256 of the canonical encoding, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let text = self.canonical_text()?;
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut hex = String::with_capacity(2 * digest.len());
        for byte in digest {
            use std::fmt::Write as _;
            let _ = write!(hex, "{byte:02x}");
        }
        Ok(hex)
    }

    /// Apply one `dotted.path=value` override. The value is parsed as a TOML
    /// literal when possible and falls back to a bare string; the result
    /// round-trips through the typed struct, so unknown paths and ill-typed
    /// values are rejected.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, raw) = spec.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("override '{spec}' is not of the form path=value"))
        })?;
        let path = path.trim();
        let raw = raw.trim();
        if path.is_empty() {
            return Err(HarnessError::Config(format!("override '{spec}' has an empty path")));
        }
        let leaf = parse_toml_literal(raw);
        let mut root = toml::Table::try_from(self.clone()).map_err(|e| {
            HarnessError::Config(format!("cannot encode config for override: {e}"))
        })?;
        let segments: Vec<&str> = path.split('.').collect();
        let mut cursor = &mut root;
        for seg in &segments[..segments.len() - 1] {
            cursor = cursor
                .entry(seg.to_string())
                .or_insert(toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| {
                    HarnessError::Config(format!("'{seg}' in '{path}' is not a table"))
                })?;
        }
        cursor.insert(segments[segments.len() - 1].to_string(), leaf);
        *self = root
            .try_into()
            .map_err(|e| HarnessError::Config(format!("override '{spec}': {e}")))?;
        Ok(())
    }

    /// Validate everything and produce the core-typed experiment.
    pub fn resolve(&self) -> Result<Resolved> {
        let m = &self.model;
        let lambda = C64::new(m.lambda_re, m.lambda_im);
        let params = ModelParams::new(lambda, m.alpha, m.dim, m.b, m.k_bound)?;
        params.validate(self.theorem_mode)?;

        let idx = match &self.indices {
            Some(s) => IndexSet::new(s.k, s.n, s.m),
            None => IndexSet::defaults(m.dim)?,
        };
        validate_indices(&idx, &params, self.theorem_mode)?;

        let grid = Grid::new(m.dim, self.grid.half_width, self.grid.points)?;

        let t_end = match (self.plan.t_end, self.plan.stop_one_minus_bt) {
            (Some(t), None) => t,
            (None, Some(s)) => {
                if self.plan.equation != EquationKind::Rescaled || m.b <= 0.0 {
                    return Err(HarnessError::Config(
                        "stop_one_minus_bt requires the rescaled equation with b > 0".into(),
                    ));
                }
                if !(s > 0.0 && s < 1.0) {
                    return Err(HarnessError::Config(format!(
                        "stop_one_minus_bt must lie in (0, 1) (got {s})"
                    )));
                }
                (1.0 - s) / m.b
            }
            (Some(_), Some(_)) => {
                return Err(HarnessError::Config(
                    "give exactly one of plan.t_end and plan.stop_one_minus_bt, not both".into(),
                ))
            }
            (None, None) => {
                return Err(HarnessError::Config(
                    "give exactly one of plan.t_end and plan.stop_one_minus_bt".into(),
                ))
            }
        };

        let mut plan = StepPlan::new(self.plan.equation.to_core(), self.plan.dt, t_end);
        plan.adapt = self.plan.adapt;
        plan.adapt_c = self.plan.adapt_c;
        plan.snapshot_stride = self.plan.snapshot_stride;
        plan.mandatory_times = self.plan.mandatory_times.clone();
        plan.track_f = self.plan.track_f;
        plan.validate(&params)?;

        for name in &self.checks {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(HarnessError::Config(format!(
                    "unknown check '{name}'; known checks: {}",
                    CHECK_NAMES.join(", ")
                )));
            }
        }

        let hash = self.hash()?;
        Ok(Resolved { params, idx, grid, plan, hash })
    }
}

/// Parse a raw override value as a TOML literal, falling back to a plain
/// string so `initial.family=gaussian` works without inner quotes.
fn parse_toml_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("literal table always has the key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
