//! TOML run configuration.
//!
//! A config resolves to an [`ExperimentPlan`] with every default filled in.
//! [`emit_config`] writes the resolved form back out, and parsing that text
//! reproduces the same plan.
//!
//! ```toml
//! grid_size = 200
//! steps = "auto"
//! noise_kind = "spatial"
//! noise_ratio = 0.333333
//! snapshots = ["j1", "j2", 150]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentPlan, Horizon, HorizonRule, SnapshotAt};
use crate::lattice::LatticeConfig;
use crate::oracle::{NoiseKind, NoiseSpec};
use crate::peaks::PeakParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StepsField {
    Fixed(usize),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SnapshotField {
    Step(usize),
    Label(String),
}

/// TOML integers stop at `i64::MAX`; larger seeds are written as strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SeedField {
    Int(i64),
    Text(String),
}

impl SeedField {
    fn from_u64(seed: u64) -> Self {
        i64::try_from(seed).map_or_else(|_| SeedField::Text(seed.to_string()), SeedField::Int)
    }
}

impl Default for SeedField {
    fn default() -> Self {
        SeedField::Int(0)
    }
}

/// External representation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    grid_size: usize,
    #[serde(default = "default_steps")]
    steps: StepsField,
    #[serde(default = "default_q")]
    charge_q: f64,
    #[serde(default = "default_e")]
    charge_e: f64,
    #[serde(default)]
    mass_mu: f64,
    #[serde(default)]
    noise_kind: NoiseKind,
    #[serde(default)]
    noise_ratio: f64,
    realizations: Option<usize>,
    #[serde(default)]
    seed: SeedField,
    #[serde(default = "default_output_dir")]
    output_dir: String,
    #[serde(default)]
    snapshots: Vec<SnapshotField>,
    #[serde(default = "default_slope")]
    horizon_slope: f64,
    #[serde(default = "default_intercept")]
    horizon_intercept: f64,
    #[serde(default = "default_window")]
    peak_window: usize,
    #[serde(default = "default_prominence")]
    peak_prominence: f64,
}

fn default_steps() -> StepsField {
    StepsField::Word("auto".into())
}
fn default_q() -> f64 {
    LatticeConfig::<f64>::DEFAULT_SOURCE_CHARGE
}
fn default_e() -> f64 {
    LatticeConfig::<f64>::DEFAULT_WALKER_CHARGE
}
fn default_output_dir() -> String {
    "out".into()
}
fn default_slope() -> f64 {
    HorizonRule::DEFAULT.slope
}
fn default_intercept() -> f64 {
    HorizonRule::DEFAULT.intercept
}
fn default_window() -> usize {
    PeakParams::<f64>::default().window
}
fn default_prominence() -> f64 {
    PeakParams::<f64>::default().prominence_frac
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        line.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn key_error(text: &str, key: &str, message: String) -> Error {
    match line_of(text, key) {
        Some(line) => Error::Config(format!("line {line}, key `{key}`: {message}")),
        None => Error::Config(format!("key `{key}`: {message}")),
    }
}

/// Parses TOML config text into a fully resolved plan.
pub fn parse_config(text: &str) -> Result<ExperimentPlan<f64>> {
    let raw: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_owned()))?;
    let err = |key: &str, message: String| key_error(text, key, message);

    if raw.grid_size < 2 || raw.grid_size % 2 != 0 {
        return Err(err("grid_size", format!("grid_size must be even and at least 2 (got {})", raw.grid_size)));
    }
    let horizon = match &raw.steps {
        StepsField::Fixed(0) => return Err(err("steps", "steps must be at least 1".into())),
        StepsField::Fixed(j) => Horizon::Fixed(*j),
        StepsField::Word(w) if w == "auto" => Horizon::Auto,
        StepsField::Word(w) => return Err(err("steps", format!("expected an integer or \"auto\" (got \"{w}\")"))),
    };
    for (key, value) in [
        ("charge_q", raw.charge_q),
        ("charge_e", raw.charge_e),
        ("mass_mu", raw.mass_mu),
        ("horizon_slope", raw.horizon_slope),
        ("horizon_intercept", raw.horizon_intercept),
    ] {
        if !value.is_finite() {
            return Err(err(key, format!("must be finite (got {value})")));
        }
    }
    if !(raw.noise_ratio.is_finite() && raw.noise_ratio >= 0.0) {
        return Err(err("noise_ratio", format!("noise_ratio must be non-negative (got {})", raw.noise_ratio)));
    }
    let realizations = raw
        .realizations
        .unwrap_or_else(|| raw.noise_kind.default_realizations());
    if realizations == 0 {
        return Err(err("realizations", "realizations must be at least 1".into()));
    }
    if raw.peak_window == 0 {
        return Err(err("peak_window", "peak_window must be at least 1".into()));
    }
    if !(raw.peak_prominence.is_finite() && raw.peak_prominence >= 0.0) {
        return Err(err("peak_prominence", format!("must be non-negative (got {})", raw.peak_prominence)));
    }
    let seed = match &raw.seed {
        SeedField::Int(s) => u64::try_from(*s).ok(),
        SeedField::Text(s) => s.parse().ok(),
    }
    .ok_or_else(|| err("seed", format!("expected an unsigned 64-bit integer (got {:?})", raw.seed)))?;
    let snapshots = raw
        .snapshots
        .iter()
        .map(|s| match s {
            SnapshotField::Step(j) => match horizon {
                Horizon::Fixed(h) if *j > h => {
                    Err(err("snapshots", format!("step {j} lies beyond steps = {h}")))
                }
                _ => Ok(SnapshotAt::Step(*j)),
            },
            SnapshotField::Label(l) if l == "j1" => Ok(SnapshotAt::FirstPeak),
            SnapshotField::Label(l) if l == "j2" => Ok(SnapshotAt::SecondPeak),
            SnapshotField::Label(l) => Err(err("snapshots", format!("expected \"j1\", \"j2\" or a step (got \"{l}\")"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let template = LatticeConfig::new(raw.grid_size)?
        .with_source_charge(raw.charge_q)
        .with_walker_charge(raw.charge_e)
        .with_mass(raw.mass_mu);
    let noise = NoiseSpec {
        kind: raw.noise_kind,
        ratio: raw.noise_ratio,
        master_seed: seed,
        realizations,
    };
    Ok(ExperimentPlan {
        grid_sizes: vec![raw.grid_size],
        template,
        horizon,
        horizon_rule: HorizonRule {
            slope: raw.horizon_slope,
            intercept: raw.horizon_intercept,
        },
        noise,
        snapshots,
        peak_params: PeakParams {
            window: raw.peak_window,
            prominence_frac: raw.peak_prominence,
        },
        output_dir: raw.output_dir,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: impl AsRef<std::path::Path>) -> Result<ExperimentPlan<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Resolved TOML for `plan`, every default written out. Describes the
/// plan's template grid; extra scan sizes are not part of the format.
pub fn emit_config(plan: &ExperimentPlan<f64>) -> String {
    let raw = RunConfig {
        grid_size: plan.template.size(),
        steps: match plan.horizon {
            Horizon::Auto => default_steps(),
            Horizon::Fixed(j) => StepsField::Fixed(j),
        },
        charge_q: plan.template.source_charge,
        charge_e: plan.template.walker_charge,
        mass_mu: plan.template.mass,
        noise_kind: plan.noise.kind,
        noise_ratio: plan.noise.ratio,
        realizations: Some(plan.noise.realizations),
        seed: SeedField::from_u64(plan.noise.master_seed),
        output_dir: plan.output_dir.clone(),
        snapshots: plan
            .snapshots
            .iter()
            .map(|s| match s {
                SnapshotAt::Step(j) => SnapshotField::Step(*j),
                other => SnapshotField::Label(other.to_string()),
            })
            .collect(),
        horizon_slope: plan.horizon_rule.slope,
        horizon_intercept: plan.horizon_rule.intercept,
        peak_window: plan.peak_params.window,
        peak_prominence: plan.peak_params.prominence_frac,
    };
    toml::to_string(&raw).expect("run config always serializes")
}
