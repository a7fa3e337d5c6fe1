//! Run configuration: JSON input with defaults, validation and a normalized echo.

use std::path::{Path, PathBuf};

use chernflow_core::bundle::{ScenarioKind, ScenarioSpec};
use chernflow_core::flow::{Scheme, StepperConfig};
use chernflow_core::grid::{FiberMode, GridSpec};
use chernflow_core::report::Thresholds;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    kind: String,
    amplitude: Option<f64>,
    bump_center: Option<[f64; 2]>,
    bump_radius: Option<f64>,
    tau_im: Option<f64>,
    fiber_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    mode: Option<String>,
    base_n: Option<usize>,
    base_half_width: Option<f64>,
    fiber_n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepper {
    scheme: Option<String>,
    cfl_safety: Option<f64>,
    dt_max: Option<f64>,
    newton_tol: Option<f64>,
    newton_max_iter: Option<usize>,
    admissibility_floor: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phidot_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pinch_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_lower_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_growth_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calabi_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diam_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diam_slope_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fiber_c1_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gh_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_trace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_calabi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_floor: Option<f64>,
}

impl ThresholdOverrides {
    pub fn apply(&self, mut th: Thresholds) -> Thresholds {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { th.$f = v; } )* };
        }
        set!(
            phi_slope,
            phi_r2,
            phidot_slope,
            trace_slope,
            pinch_from,
            r_lower_factor,
            r_growth_slope,
            calabi_slope,
            diam_slope,
            diam_slope_tol,
            fiber_c1_slope,
            gh_slope,
            product_phi,
            product_trace,
            product_calabi,
            drift_factor,
            drift_floor
        );
        th
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    stepper: RawStepper,
    t_end: f64,
    cadence: Option<f64>,
    output_dir: Option<PathBuf>,
    checkpoint_every: Option<f64>,
    fit_window: Option<[f64; 2]>,
    #[serde(default)]
    thresholds: ThresholdOverrides,
}

/// Fully resolved configuration; its JSON form is the config echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub stepper: StepperSection,
    pub t_end: f64,
    pub cadence: f64,
    pub output_dir: PathBuf,
    pub checkpoint_every: f64,
    pub fit_window: Option<[f64; 2]>,
    pub thresholds: ThresholdOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub kind: String,
    pub amplitude: f64,
    pub bump_center: [f64; 2],
    pub bump_radius: f64,
    pub tau_im: f64,
    pub fiber_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub mode: String,
    pub base_n: usize,
    pub base_half_width: f64,
    pub fiber_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepperSection {
    pub scheme: String,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub admissibility_floor: f64,
}

/// Command-line overrides applied before defaults are resolved.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<FiberMode>,
    pub t_end: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

fn mode_name(m: FiberMode) -> &'static str {
    match m {
        FiberMode::Reduced => "reduced",
        FiberMode::Full => "full",
    }
}

pub fn parse_mode(s: &str) -> Result<FiberMode, CliError> {
    match s {
        "reduced" => Ok(FiberMode::Reduced),
        "full" => Ok(FiberMode::Full),
        _ => Err(CliError::Config(format!("grid.mode: expected 'reduced' or 'full', got '{s}'"))),
    }
}

fn config_err(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

pub fn parse_config_file(path: &Path, ov: &Overrides) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, ov)
}

pub fn parse_config_str(text: &str, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    // `"scenario": "kind"` is shorthand for `{"kind": "kind"}`
    if let Some(obj) = value.as_object_mut() {
        if let Some(Value::String(k)) = obj.get("scenario") {
            let k = k.clone();
            obj.insert("scenario".into(), serde_json::json!({ "kind": k }));
        }
    }
    let raw: RawConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    resolve(raw, ov)
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<RunConfig, CliError> {
    let kind: ScenarioKind = raw.scenario.kind.parse().map_err(|e| config_err("scenario.kind", e))?;
    let mode = match (ov.mode, &raw.grid.mode) {
        (Some(m), _) => m,
        (None, Some(s)) => parse_mode(s)?,
        (None, None) if kind == ScenarioKind::FiberInhomogeneous => FiberMode::Full,
        (None, None) => FiberMode::Reduced,
    };
    if kind == ScenarioKind::FiberInhomogeneous && mode != FiberMode::Full {
        return Err(config_err("grid.mode", "fiber_inhomogeneous requires mode 'full'"));
    }
    let (default_n, default_fn) = match mode {
        FiberMode::Reduced => (65, 1),
        FiberMode::Full => (33, 16),
    };
    let defaults = StepperConfig::default();
    let scheme = raw.stepper.scheme.unwrap_or_else(|| defaults.scheme.name().to_string());
    scheme.parse::<Scheme>().map_err(|e| config_err("stepper.scheme", e))?;

    let cfg = RunConfig {
        scenario: ScenarioConfig {
            kind: kind.name().to_string(),
            amplitude: raw.scenario.amplitude.unwrap_or(kind.default_amplitude()),
            bump_center: raw.scenario.bump_center.unwrap_or([0.05, 0.03]),
            bump_radius: raw.scenario.bump_radius.unwrap_or(0.9),
            tau_im: raw.scenario.tau_im.unwrap_or(1.0),
            fiber_scale: raw.scenario.fiber_scale.unwrap_or(1.0),
        },
        grid: GridConfig {
            mode: mode_name(mode).to_string(),
            base_n: raw.grid.base_n.unwrap_or(default_n),
            base_half_width: raw.grid.base_half_width.unwrap_or(0.85),
            fiber_n: match mode {
                FiberMode::Reduced => 1,
                FiberMode::Full => raw.grid.fiber_n.unwrap_or(default_fn),
            },
        },
        stepper: StepperSection {
            scheme,
            cfl_safety: raw.stepper.cfl_safety.unwrap_or(defaults.cfl_safety),
            dt_max: raw.stepper.dt_max.unwrap_or(defaults.dt_max),
            newton_tol: raw.stepper.newton_tol.unwrap_or(defaults.newton_tol),
            newton_max_iter: raw.stepper.newton_max_iter.unwrap_or(defaults.newton_max_iter),
            admissibility_floor: raw.stepper.admissibility_floor.unwrap_or(defaults.admissibility_floor),
        },
        t_end: ov.t_end.unwrap_or(raw.t_end),
        cadence: raw.cadence.unwrap_or(0.05),
        output_dir: ov.output_dir.clone().or(raw.output_dir).unwrap_or_else(|| PathBuf::from("chernflow-out")),
        checkpoint_every: raw.checkpoint_every.unwrap_or(1.0),
        fit_window: raw.fit_window,
        thresholds: raw.thresholds,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(config_err("t_end", "must be positive and finite"));
        }
        if !(self.cadence > 0.0 && self.cadence <= self.t_end) {
            return Err(config_err("cadence", "must lie in (0, t_end]"));
        }
        if !(self.checkpoint_every > 0.0) {
            return Err(config_err("checkpoint_every", "must be positive"));
        }
        if let Some([a, b]) = self.fit_window {
            if !(a < b) {
                return Err(config_err("fit_window", "start must precede end"));
            }
        }
        if !self.scenario.amplitude.is_finite() {
            return Err(config_err("scenario.amplitude", "must be finite"));
        }
        self.scenario_spec()?.validate().map_err(|e| config_err("scenario", e))?;
        self.grid_spec().validate().map_err(|e| config_err("grid", e))?;
        self.stepper_config().validate().map_err(|e| config_err("stepper", e))?;
        Ok(())
    }

    pub fn kind(&self) -> ScenarioKind {
        self.scenario.kind.parse().expect("validated scenario kind")
    }

    pub fn mode(&self) -> FiberMode {
        parse_mode(&self.grid.mode).expect("validated mode")
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec, CliError> {
        let s = &self.scenario;
        let mut spec = ScenarioSpec::new(self.kind());
        spec.amplitude = s.amplitude;
        spec.bump_center = Complex64::new(s.bump_center[0], s.bump_center[1]);
        spec.bump_radius = s.bump_radius;
        spec.tau_im = s.tau_im;
        spec.fiber_scale = s.fiber_scale;
        spec.mode = self.mode();
        Ok(spec)
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        let mut spec = match self.mode() {
            FiberMode::Reduced => GridSpec::reduced(g.base_n, g.base_half_width),
            FiberMode::Full => GridSpec::full(g.base_n, g.base_half_width, g.fiber_n),
        };
        spec.fiber_period_y = self.scenario.tau_im;
        spec
    }

    pub fn stepper_config(&self) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            scheme: s.scheme.parse().expect("validated scheme"),
            cfl_safety: s.cfl_safety,
            dt_max: s.dt_max,
            newton_tol: s.newton_tol,
            newton_max_iter: s.newton_max_iter,
            admissibility_floor: s.admissibility_floor,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds.apply(Thresholds::default())
    }

    pub fn echo_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Hash of everything that determines the trajectory; `t_end` and the
    /// output location are excluded so a resumed run may extend the horizon.
    pub fn trajectory_hash(&self) -> u64 {
        let key = serde_json::json!({
            "scenario": self.scenario,
            "grid": self.grid,
            "stepper": self.stepper,
            "cadence": self.cadence,
        });
        chernflow_core::checkpoint::config_hash(key.to_string().as_bytes())
    }
}
