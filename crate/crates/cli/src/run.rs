//! Scenario orchestration and output files.

use std::fs;
use std::path::{Path, PathBuf};

use chernflow_core::bolza::BaseGrid;
use chernflow_core::bundle::{build_scenario, reference_csv};
use chernflow_core::checkpoint::Checkpoint;
use chernflow_core::diagnostics::{Diagnostics, DiagnosticsRecord};
use chernflow_core::field::RealScalarField;
use chernflow_core::flow::{Flow, FlowState};
use chernflow_core::report::{default_window, theorem_checks_in, TheoremReport};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: Option<PathBuf>,
    pub dump_geometry: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub series: Vec<DiagnosticsRecord>,
    pub t_i: f64,
    /// `Err` carries the reason the checks could not be evaluated.
    pub report: Result<TheoremReport, String>,
    pub final_t: f64,
    pub steps: u64,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        matches!(&self.report, Ok(r) if r.all_pass())
    }
}

pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> Self {
        OutputLayout { root: root.to_path_buf() }
    }
    pub fn config_echo(&self) -> PathBuf {
        self.root.join("config.echo.json")
    }
    pub fn series(&self) -> PathBuf {
        self.root.join("series.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn checkpoint(&self, t: f64) -> PathBuf {
        self.checkpoints().join(format!("t{t:09.4}.crfl"))
    }
    pub fn dumps(&self) -> PathBuf {
        self.root.join("dumps")
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn series_csv(series: &[DiagnosticsRecord]) -> String {
    let mut out = DiagnosticsRecord::COLUMNS.join(",");
    out.push('\n');
    for r in series {
        let row: Vec<String> = r.values().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_series_csv(text: &str) -> Result<Vec<DiagnosticsRecord>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != DiagnosticsRecord::COLUMNS.join(",") {
        return Err(CliError::Config("series.csv header does not match this version".into()));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("series.csv row {}: {e}", k + 1)))?;
            DiagnosticsRecord::from_values(&vals)
                .map_err(|e| CliError::Config(format!("series.csv row {}: {e}", k + 1)))
        })
        .collect()
}

/// Rounds to 12 significant digits; non-finite values become `null`.
fn num(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{v:.11e}").parse().unwrap();
    json!(r)
}

pub fn report_json(cfg: &RunConfig, outcome: &RunOutcome) -> String {
    let mut root = Map::new();
    root.insert("scenario".into(), json!(cfg.scenario.kind));
    root.insert("mode".into(), json!(cfg.grid.mode));
    root.insert("t_i".into(), num(outcome.t_i));
    root.insert("t_end".into(), num(outcome.final_t));
    root.insert("records".into(), json!(outcome.series.len()));
    match &outcome.report {
        Ok(rep) => {
            root.insert("status".into(), json!("evaluated"));
            root.insert("window".into(), json!([num(rep.window.0), num(rep.window.1)]));
            root.insert("all_pass".into(), json!(rep.all_pass()));
            let mut checks = Map::new();
            for c in &rep.checks {
                checks.insert(
                    c.name.clone(),
                    json!({
                        "bound": c.bound,
                        "observed": num(c.observed),
                        "margin": num(c.margin),
                        "pass": c.pass,
                        "asserted": c.asserted,
                    }),
                );
            }
            root.insert("checks".into(), Value::Object(checks));
        }
        Err(msg) => {
            root.insert("status".into(), json!("insufficient_data"));
            root.insert("message".into(), json!(msg));
            root.insert("all_pass".into(), json!(false));
            root.insert("checks".into(), json!({}));
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(root)).unwrap();
    s.push('\n');
    s
}

fn on_multiple(t: f64, every: f64) -> bool {
    let m = (t / every).round();
    m >= 1.0 && (m * every - t).abs() <= 1e-9 * every.max(1.0)
}

/// Builds the geometry, runs the flow with diagnostics and writes the output layout.
pub fn run_scenario(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let out = OutputLayout::new(&cfg.output_dir);
    fs::create_dir_all(out.checkpoints()).map_err(|e| io_err(&out.checkpoints(), e))?;
    write(&out.config_echo(), &cfg.echo_json())?;

    let grid = cfg.grid_spec();
    let base = BaseGrid::build(&grid)?;
    let kernel = base.kernel()?;
    let scenario = build_scenario(&cfg.scenario_spec()?, &base, &kernel)?;
    let fam = &scenario.reference;
    let flow = Flow::new(&kernel, &base, fam, cfg.stepper_config())?;
    let diag = Diagnostics::new(&kernel, &base, &scenario)?;

    if opts.dump_geometry {
        fs::create_dir_all(out.dumps()).map_err(|e| io_err(&out.dumps(), e))?;
        write(&out.dumps().join("base_geometry.csv"), &base.geometry_csv())?;
        write(&out.dumps().join("reference.csv"), &reference_csv(&kernel, &scenario.initial.metric, fam))?;
    }

    let hash = cfg.trajectory_hash();
    let mut series = Vec::new();
    let start: FlowState = match &opts.resume {
        Some(path) => {
            let ck = Checkpoint::read(path)?;
            ck.check_compatible(hash, kernel.len())?;
            if out.series().exists() {
                let text = fs::read_to_string(out.series()).map_err(|e| io_err(&out.series(), e))?;
                series = parse_series_csv(&text)?.into_iter().filter(|r| r.t < ck.t - 1e-9).collect();
            }
            flow.state_at(ck.t, RealScalarField { values: ck.phi }, 0, 0.0)?
        }
        None => flow.initial_state()?,
    };

    let mut ckpt_err = None;
    let run = flow.run(start, cfg.t_end, cfg.cadence, |s| {
        series.push(diag.record(s)?);
        if on_multiple(s.t, cfg.checkpoint_every) || (s.t - cfg.t_end).abs() <= 1e-9 {
            let ck = Checkpoint { hash, t: s.t, phi: s.phi.values.clone() };
            if let Err(e) = ck.write(&out.checkpoint(s.t)) {
                ckpt_err.get_or_insert(e);
            }
        }
        Ok(())
    });
    write(&out.series(), &series_csv(&series))?;
    let last = run?;
    if let Some(e) = ckpt_err {
        return Err(e.into());
    }

    let window = match cfg.fit_window {
        Some([a, b]) => (a, b),
        None => default_window(fam.t_i, cfg.t_end),
    };
    let report = theorem_checks_in(cfg.kind(), &series, window, fam.t_i, &cfg.thresholds()).map_err(|e| e.to_string());
    let outcome = RunOutcome { series, t_i: fam.t_i, report, final_t: last.t, steps: last.step_count };
    write(&out.report(), &report_json(cfg, &outcome))?;
    Ok(outcome)
}
