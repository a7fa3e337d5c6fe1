//! Exponential-rate fits and per-scenario checks over a diagnostics series.

use crate::bundle::ScenarioKind;
use crate::diagnostics::{record_pinched, DiagnosticsRecord};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of `log max(y, 1e-14)` against `t` over samples inside `window`.
pub fn fit_rate(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if t.len() != y.len() {
        return Err(Error::InsufficientData("time and value series differ in length".into()));
    }
    let tol = 1e-9;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&s, _)| s >= window.0 - tol && s <= window.1 + tol)
        .map(|(&s, &v)| (s, v.max(LOG_FLOOR).ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples in fit window [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt <= 0.0 {
        return Err(Error::InsufficientData("fit window spans a single time".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy <= 1e-300 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RateFit { window, slope, intercept, r_squared })
}

/// Pass thresholds; defaults are the acceptance values.
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds {
    pub phi_slope: f64,
    pub phi_r2: f64,
    pub phidot_slope: f64,
    pub trace_slope: f64,
    pub pinch_from: f64,
    pub r_lower_factor: f64,
    pub r_growth_slope: f64,
    pub calabi_slope: f64,
    pub diam_slope: f64,
    pub diam_slope_tol: f64,
    pub fiber_c1_slope: f64,
    pub gh_slope: f64,
    pub product_phi: f64,
    pub product_trace: f64,
    pub product_calabi: f64,
    pub drift_factor: f64,
    pub drift_floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            phi_slope: -0.85,
            phi_r2: 0.98,
            phidot_slope: -0.20,
            trace_slope: -0.10,
            pinch_from: 4.0,
            r_lower_factor: 10.0,
            r_growth_slope: 0.6,
            calabi_slope: 2.0 / 3.0 + 0.1,
            diam_slope: -0.5,
            diam_slope_tol: 0.05,
            fiber_c1_slope: -0.10,
            gh_slope: -0.40,
            product_phi: 5e-4,
            product_trace: 1e-3,
            product_calabi: 1e-6,
            drift_factor: 10.0,
            drift_floor: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub bound: String,
    pub observed: f64,
    /// Signed distance to the bound; non-negative on pass.
    pub margin: f64,
    pub pass: bool,
    /// Reported only; does not affect the overall verdict.
    pub asserted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremReport {
    pub scenario: ScenarioKind,
    pub window: (f64, f64),
    pub checks: Vec<Check>,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass || !c.asserted)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn default_window(t_i: f64, t_end: f64) -> (f64, f64) {
    (t_i.max(2.0) + 1.0, t_end)
}

struct Builder {
    checks: Vec<Check>,
}

impl Builder {
    fn at_most(&mut self, name: &str, bound: String, observed: f64, limit: f64) {
        let margin = limit - observed;
        self.checks.push(Check { name: name.into(), bound, observed, margin, pass: margin >= 0.0, asserted: true });
    }

    fn at_least(&mut self, name: &str, bound: String, observed: f64, limit: f64) {
        let margin = observed - limit;
        self.checks.push(Check { name: name.into(), bound, observed, margin, pass: margin >= 0.0, asserted: true });
    }

    fn info(&mut self, name: &str, bound: String, observed: f64) {
        self.checks.push(Check { name: name.into(), bound, observed, margin: 0.0, pass: true, asserted: false });
    }
}

fn column(series: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<f64> {
    series.iter().map(f).collect()
}

/// Evaluates the scenario's acceptance checks on a recorded series, fitting
/// rates on the default window.
pub fn theorem_checks(
    kind: ScenarioKind,
    series: &[DiagnosticsRecord],
    t_i: f64,
    th: &Thresholds,
) -> Result<TheoremReport> {
    let last = series.last().ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    theorem_checks_in(kind, series, default_window(t_i, last.t), t_i, th)
}

pub fn theorem_checks_in(
    kind: ScenarioKind,
    series: &[DiagnosticsRecord],
    window: (f64, f64),
    t_i: f64,
    th: &Thresholds,
) -> Result<TheoremReport> {
    let first = series.first().ok_or_else(|| Error::InsufficientData("empty series".into()))?;
    let last = series.last().unwrap();
    if window.1 <= window.0 || last.t < window.1 - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "series ends at t = {} but the fit window is [{}, {}]",
            last.t, window.0, window.1
        )));
    }
    let ts = column(series, |r| r.t);
    let fit = |f: &dyn Fn(&DiagnosticsRecord) -> f64| fit_rate(&ts, &column(series, f), window);
    let mut b = Builder { checks: Vec::new() };

    let perturbed = matches!(kind, ScenarioKind::KahlerPerturbed | ScenarioKind::GauduchonTorsion);

    if kind == ScenarioKind::KahlerProduct {
        let sup = |f: &dyn Fn(&DiagnosticsRecord) -> f64| series.iter().map(f).fold(0.0, f64::max);
        b.at_most("product_sup_phi", format!("sup|phi| <= {:e}", th.product_phi), sup(&|r| r.sup_phi), th.product_phi);
        b.at_most(
            "product_trace",
            format!("sup|tr - 2| <= {:e}", th.product_trace),
            sup(&|r| r.tr_dev_abs_max),
            th.product_trace,
        );
        b.at_most(
            "product_calabi",
            format!("S_max <= {:e}", th.product_calabi),
            sup(&|r| r.calabi_s_max),
            th.product_calabi,
        );
    }

    if perturbed {
        let f = fit(&|r| r.sup_phi)?;
        b.at_most("phi_decay", format!("slope log sup|phi| <= {}", th.phi_slope), f.slope, th.phi_slope);
        b.at_least("phi_decay_r2", format!("r^2 >= {}", th.phi_r2), f.r_squared, th.phi_r2);
        let f = fit(&|r| r.sup_phidot)?;
        b.at_most("phidot_decay", format!("slope log sup|phidot| <= {}", th.phidot_slope), f.slope, th.phidot_slope);
        let f = fit(&|r| r.tr_ref_omega_minus2_max)?;
        b.at_most(
            "trace_ref_decay",
            format!("slope log sup(tr_ref omega - 2) <= {}", th.trace_slope),
            f.slope,
            th.trace_slope,
        );
        let f = fit(&|r| r.tr_omega_ref_minus2_max)?;
        b.at_most(
            "trace_metric_decay",
            format!("slope log sup(tr_omega ref - 2) <= {}", th.trace_slope),
            f.slope,
            th.trace_slope,
        );
        let late: Vec<&DiagnosticsRecord> = series.iter().filter(|r| r.t >= th.pinch_from - 1e-9).collect();
        if late.is_empty() {
            return Err(Error::InsufficientData(format!("no records after t = {}", th.pinch_from)));
        }
        let failed = late.iter().filter(|r| !record_pinched(r)).count();
        b.at_most("metric_pinching", format!("pinched at every t >= {}", th.pinch_from), failed as f64, 0.0);
    }

    // scalar curvature window
    let anchor = series.iter().min_by(|a, c| (a.t - (t_i + 1.0)).abs().total_cmp(&(c.t - (t_i + 1.0)).abs())).unwrap();
    let scale = anchor.r_min.abs().max(anchor.r_max.abs());
    let r_lo = series.iter().map(|r| r.r_min).fold(f64::INFINITY, f64::min);
    let lim = -th.r_lower_factor * (1.0 + scale);
    b.at_least("scalar_curvature_lower", format!("min R >= {lim}"), r_lo, lim);
    let r_late = series.iter().filter(|r| r.t >= t_i + 1.0 - 1e-9).map(|r| r.r_min).fold(f64::INFINITY, f64::min);
    b.info("scalar_curvature_lower_late", format!("min R for t >= {} (reported)", t_i + 1.0), r_late);
    let f = fit(&|r| r.r_max.max(0.01))?;
    b.at_most(
        "scalar_curvature_growth",
        format!("slope log max(R_max, 0.01) <= {}", th.r_growth_slope),
        f.slope,
        th.r_growth_slope,
    );

    // Calabi quantity
    let f = fit(&|r| r.calabi_s_max)?;
    if kind == ScenarioKind::GauduchonTorsion {
        b.at_most("calabi_growth", format!("slope log S_max <= {:.6}", th.calabi_slope), f.slope, th.calabi_slope);
    } else {
        b.info("calabi_growth", "slope log S_max (reported)".into(), f.slope);
    }
    let scaled = series
        .iter()
        .filter(|r| r.t >= window.0 - 1e-9)
        .map(|r| (-2.0 * r.t / 3.0).exp() * r.calabi_s_max)
        .fold(0.0, f64::max);
    b.info("calabi_scaled_max", "max e^(-2t/3) S_max on the window (reported)".into(), scaled);

    // collapse
    let f = fit(&|r| r.fiber_diam_max)?;
    let dev = (f.slope - th.diam_slope).abs();
    b.at_most(
        "fiber_diameter_rate",
        format!("|slope log diam - ({})| <= {}", th.diam_slope, th.diam_slope_tol),
        dev,
        th.diam_slope_tol,
    );
    let f = fit(&|r| r.gh_proxy)?;
    b.at_most("gh_proxy_decay", format!("slope log gh_proxy <= {}", th.gh_slope), f.slope, th.gh_slope);
    let f = fit(&|r| r.fiber_c1_max)?;
    if kind == ScenarioKind::FiberInhomogeneous {
        b.at_most("fiber_c1_decay", format!("slope log fiber_c1 <= {}", th.fiber_c1_slope), f.slope, th.fiber_c1_slope);
    } else {
        b.info("fiber_c1_decay", "slope log fiber_c1 (reported)".into(), f.slope);
    }

    // Gauduchon preservation
    let base = first.gauduchon_drift.max(th.drift_floor);
    let drift = series.iter().map(|r| r.gauduchon_drift).fold(0.0, f64::max);
    b.at_most(
        "gauduchon_drift",
        format!("sup ddbar omega <= {} x max(initial, {:e})", th.drift_factor, th.drift_floor),
        drift,
        th.drift_factor * base,
    );

    Ok(TheoremReport { scenario: kind, window, checks: b.checks })
}
