//! Time integration of the parabolic complex Monge-Ampere equation
//! `dphi/dt = log(e^t (omega_tilde + i d dbar phi)^2 / Omega) - phi`,
//! plus a direct metric-flow cross-check.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;

use crate::algebra;
use crate::bolza::BaseGrid;
use crate::bundle::ReferenceFamily;
use crate::error::{Error, Result};
use crate::field::{Form11Field, HermitianMetricField, RealScalarField};
use crate::kernel::{At, Kernel};

const MAX_CONSECUTIVE_FAILURES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    ExplicitRk2,
    ImexFiberSpectral,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitRk2 => "explicit_rk2",
            Scheme::ImexFiberSpectral => "imex_fiber_spectral",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit_rk2" => Ok(Scheme::ExplicitRk2),
            "imex_fiber_spectral" => Ok(Scheme::ImexFiberSpectral),
            _ => Err(Error::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub admissibility_floor: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            scheme: Scheme::ImexFiberSpectral,
            cfl_safety: 0.2,
            dt_max: 1e-2,
            newton_tol: 1e-10,
            newton_max_iter: 20,
            admissibility_floor: 1e-6,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 0.5) {
            return Err(Error::Config("stepper.cfl_safety must lie in (0, 0.5]".into()));
        }
        if !(self.dt_max > 0.0) || !(self.newton_tol > 0.0) || !(self.admissibility_floor > 0.0) {
            return Err(Error::Config("stepper tolerances and dt_max must be positive".into()));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::Config("stepper.newton_max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub phi: RealScalarField,
    /// `dphi/dt` at `(t, phi)` from the equation itself.
    pub phidot: RealScalarField,
    pub step_count: u64,
    pub dt_last: f64,
    /// Smallest eigenvalue of `omega` relative to `omega_tilde` over the interior.
    pub admissibility_min: f64,
    /// `omega_tilde(t) + i d dbar phi` on the stencil points.
    pub metric: HermitianMetricField,
}

/// Right-hand side evaluation at one state.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub metric: HermitianMetricField,
    pub rhs: RealScalarField,
    pub admissibility_min: f64,
}

pub struct Flow<'a> {
    pub kernel: &'a Kernel,
    pub base: &'a BaseGrid,
    pub fam: &'a ReferenceFamily,
    pub cfg: StepperConfig,
}

impl<'a> Flow<'a> {
    pub fn new(kernel: &'a Kernel, base: &'a BaseGrid, fam: &'a ReferenceFamily, cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Flow { kernel, base, fam, cfg })
    }

    fn nf(&self) -> usize {
        self.kernel.nf()
    }

    /// Copies interior values of `phi` and refreshes its ghost ring.
    pub fn fill(&self, phi: &mut RealScalarField) {
        self.base.ghost_fill(&mut phi.values, self.nf());
    }

    /// `phi(0) = -rho`.
    pub fn initial_state(&self) -> Result<FlowState> {
        let phi = RealScalarField { values: self.fam.rho.values.iter().map(|v| -v).collect() };
        self.state_at(0.0, phi, 0, 0.0)
    }

    /// Builds a state from a potential (ghosts are refilled from the interior).
    pub fn state_at(&self, t: f64, mut phi: RealScalarField, step_count: u64, dt_last: f64) -> Result<FlowState> {
        if t > 0.0 {
            self.fill(&mut phi);
        }
        let ev = self.ma_rhs(&phi, t)?;
        Ok(FlowState {
            t,
            phi,
            phidot: ev.rhs,
            step_count,
            dt_last,
            admissibility_min: ev.admissibility_min,
            metric: ev.metric,
        })
    }

    /// `omega_tilde(t) + i d dbar phi` on the stencil points, with the
    /// admissibility margin relative to `omega_tilde` over the interior.
    pub fn metric_from_potential(&self, phi: &RealScalarField, t: f64) -> Result<(HermitianMetricField, f64)> {
        let mut g = self.kernel.ddbar_scalar(phi, At::Stencil);
        let tilde = self.fam.tilde(t);
        let mask = self.kernel.mask(At::Stencil);
        let nf = self.nf();
        for (b, &m) in mask.iter().enumerate() {
            if m {
                for fi in 0..nf {
                    let p = b * nf + fi;
                    g.set(p, g.get(p).add(&tilde.get(p)));
                }
            }
        }
        let mut min_eig = f64::INFINITY;
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let (h, r) = (g.get(p), tilde.get(p));
                let e = if r.is_positive() {
                    algebra::relative_eigenvalues(&h, &r).0
                } else if h.is_positive() {
                    continue;
                } else {
                    f64::NEG_INFINITY
                };
                min_eig = min_eig.min(e);
            }
        }
        if !(min_eig >= self.cfg.admissibility_floor) {
            return Err(Error::AdmissibilityLost { t, min_eig });
        }
        let mut metric = HermitianMetricField::unchecked(g);
        metric.admissible = true;
        Ok((metric, min_eig))
    }

    /// `log(e^t 2 det g / Omega) - phi` on the interior.
    pub fn ma_rhs(&self, phi: &RealScalarField, t: f64) -> Result<Evaluation> {
        let (metric, admissibility_min) = self.metric_from_potential(phi, t)?;
        let nf = self.nf();
        let mut rhs = vec![0.0; self.kernel.len()];
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                rhs[p] = ma_pointwise(metric.get(p).det(), self.fam.omega.coeff[p], phi.values[p], t);
            }
        }
        Ok(Evaluation { metric, rhs: RealScalarField { values: rhs }, admissibility_min })
    }

    /// Step size from the spectral radius of the explicitly treated part.
    pub fn stable_dt(&self, metric: &HermitianMetricField) -> f64 {
        let g = &self.kernel.grid;
        let nf = self.nf();
        let base_sym = 1.0 / g.h_bx().powi(2) + 1.0 / g.h_by().powi(2);
        let mu_b = 1.0 / g.h_bx().min(g.h_by());
        let (sigma_f, mu_f) = match self.kernel.spectral() {
            Some(s) => (s.lap_radius(), s.d1_radius()),
            None => (0.0, 0.0),
        };
        let explicit_fiber = self.cfg.scheme == Scheme::ExplicitRk2;
        let mut rho = 0.0f64;
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let u = metric.get(b * nf + fi).inverse();
                let mut r = u.u22 * base_sym + 2.0 * u.u12.norm() * mu_f * mu_b + 1.0;
                if explicit_fiber {
                    r += u.u11 * sigma_f;
                }
                rho = rho.max(r);
            }
        }
        self.cfg.dt_max.min(self.cfg.cfl_safety * 2.0 / rho)
    }

    /// One step of size `dt` from `s`.
    pub fn step(&self, s: &FlowState, dt: f64) -> Result<FlowState> {
        self.step_to(s, dt, s.t + dt)
    }

    /// Step of size `dt` whose end time is stamped as `t_new`, so record
    /// times do not carry the rounding of `s.t + dt`.
    fn step_to(&self, s: &FlowState, dt: f64, t_new: f64) -> Result<FlowState> {
        let nf = self.nf();
        let interior = self.kernel.points(At::Interior);
        let mut phi = s.phi.clone();
        match self.cfg.scheme {
            Scheme::ExplicitRk2 => {
                for &b in interior {
                    for fi in 0..nf {
                        let p = b * nf + fi;
                        phi.values[p] += dt * s.phidot.values[p];
                    }
                }
                self.fill(&mut phi);
                let k2 = self.ma_rhs(&phi, t_new)?.rhs;
                for &b in interior {
                    for fi in 0..nf {
                        let p = b * nf + fi;
                        phi.values[p] = s.phi.values[p] + 0.5 * dt * (s.phidot.values[p] + k2.values[p]);
                    }
                }
            }
            Scheme::ImexFiberSpectral => {
                let delta = self.implicit_increment(s, dt)?;
                for (v, d) in phi.values.iter_mut().zip(delta) {
                    *v += d;
                }
            }
        }
        self.state_at(t_new, phi, s.step_count + 1, dt)
    }

    /// Solves `delta - dt a(x) d1 d1bar delta = dt F` on every interior fiber,
    /// `a = g^{1 1bar}` frozen at the current state, by fixed-point iteration
    /// preconditioned with the fiber-mean coefficient (diagonal in Fourier space).
    fn implicit_increment(&self, s: &FlowState, dt: f64) -> Result<Vec<f64>> {
        let nf = self.nf();
        let mut out = vec![0.0; self.kernel.len()];
        let Some(spec) = self.kernel.spectral() else {
            for &b in self.kernel.points(At::Interior) {
                out[b] = dt * s.phidot.values[b];
            }
            return Ok(out);
        };
        let tol = self.cfg.newton_tol;
        let max_iter = self.cfg.newton_max_iter;
        use rayon::prelude::*;
        let mask = self.kernel.mask(At::Interior);
        let failures: Vec<usize> = out
            .par_chunks_mut(nf)
            .enumerate()
            .filter_map(|(b, chunk)| {
                if !mask[b] {
                    return None;
                }
                let a: Vec<f64> = (0..nf).map(|fi| s.metric.get(b * nf + fi).inverse().u11).collect();
                let abar = a.iter().sum::<f64>() / nf as f64;
                let f = &s.phidot.values[b * nf..(b + 1) * nf];
                let mut tmp = Vec::with_capacity(nf);
                let mut delta: Vec<f64> = f.iter().map(|v| dt * v).collect();
                let mut buf = vec![C64::new(0.0, 0.0); nf];
                let precond = |buf: &mut [C64], tmp: &mut Vec<C64>| {
                    spec.apply(buf, tmp, |k| C64::new(1.0 / (1.0 - dt * abar * spec.lap[k]), 0.0))
                };
                for _ in 0..max_iter {
                    for (z, &d) in buf.iter_mut().zip(&delta) {
                        *z = C64::new(d, 0.0);
                    }
                    spec.apply(&mut buf, &mut tmp, |k| C64::new(spec.lap[k], 0.0));
                    for fi in 0..nf {
                        buf[fi] = C64::new(dt * f[fi] + dt * (a[fi] - abar) * buf[fi].re, 0.0);
                    }
                    precond(&mut buf, &mut tmp);
                    let mut change = 0.0f64;
                    let mut size = 0.0f64;
                    for fi in 0..nf {
                        change = change.max((buf[fi].re - delta[fi]).abs());
                        size = size.max(buf[fi].re.abs());
                        delta[fi] = buf[fi].re;
                    }
                    if change <= tol * (1.0 + size) {
                        chunk.copy_from_slice(&delta);
                        return None;
                    }
                }
                Some(b)
            })
            .collect();
        if let Some(b) = failures.first() {
            return Err(Error::StepFailure(format!(
                "fiber solve at base point {b} did not converge in {max_iter} iterations (t = {}, dt = {dt})",
                s.t
            )));
        }
        Ok(out)
    }

    /// Steps from `s` to exactly `t_target`, halving `dt` on step failures.
    pub fn advance(&self, s: FlowState, t_target: f64) -> Result<FlowState> {
        let mut s = s;
        let mut failures = 0usize;
        let mut shrink = 1.0f64;
        while s.t < t_target {
            let mut dt = self.stable_dt(&s.metric) * shrink;
            let last = s.t + dt >= t_target - 1e-12 * t_target.max(1.0);
            if last {
                dt = t_target - s.t;
            }
            let t_new = if last { t_target } else { s.t + dt };
            match self.step_to(&s, dt, t_new) {
                Ok(next) => {
                    s = next;
                    failures = 0;
                    shrink = 1.0;
                }
                Err(Error::StepFailure(msg)) => {
                    failures += 1;
                    if failures >= MAX_CONSECUTIVE_FAILURES {
                        return Err(Error::StepFailure(format!("{failures} consecutive step failures: {msg}")));
                    }
                    shrink *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(s)
    }

    /// Integrates to `t_end`, calling `observe` at every multiple of `cadence`
    /// (including the starting time when it is one).
    pub fn run(
        &self,
        start: FlowState,
        t_end: f64,
        cadence: f64,
        mut observe: impl FnMut(&FlowState) -> Result<()>,
    ) -> Result<FlowState> {
        if !(cadence > 0.0) {
            return Err(Error::Config("diagnostics cadence must be positive".into()));
        }
        let mut k = (start.t / cadence).round() as u64;
        let mut s = start;
        if ((k as f64) * cadence - s.t).abs() <= 1e-12 {
            observe(&s)?;
            k += 1;
        } else {
            k = (s.t / cadence).ceil() as u64;
        }
        loop {
            let target = k as f64 * cadence;
            if target > t_end + 1e-12 {
                break;
            }
            s = self.advance(s, target)?;
            observe(&s)?;
            k += 1;
        }
        Ok(s)
    }
}

/// `log(e^t 2 det / Omega) - phi`.
pub fn ma_pointwise(det: f64, omega: f64, phi: f64, t: f64) -> f64 {
    t + (2.0 * det / omega).ln() - phi
}

/// Discrete `(d/dt - Delta) phidot - [tr_omega(omega_S - omega_tilde) + 1 - phidot]`
/// on the interior, from two consecutive states.
pub fn residual_dotphi(flow: &Flow, prev: &FlowState, cur: &FlowState) -> Result<RealScalarField> {
    let dt = cur.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::InsufficientData("residual_dotphi needs two states at distinct times".into()));
    }
    let nf = flow.nf();
    let mut pd = cur.phidot.clone();
    flow.fill(&mut pd);
    let lap = flow.kernel.laplacian(&cur.metric, &pd, At::Interior)?;
    let mut src = flow.fam.omega_s.clone();
    src.add_scaled(-1.0, &flow.fam.tilde(cur.t));
    let tr = flow.kernel.trace_form(&cur.metric, &src, At::Interior)?;
    let mut out = vec![0.0; flow.kernel.len()];
    for &b in flow.kernel.points(At::Interior) {
        for fi in 0..nf {
            let p = b * nf + fi;
            let dtd = (cur.phidot.values[p] - prev.phidot.values[p]) / dt;
            out[p] = dtd - lap.values[p] - (tr.values[p] + 1.0 - cur.phidot.values[p]);
        }
    }
    Ok(RealScalarField { values: out })
}

/// Direct integration of `d omega/dt = -Ric(omega) - omega` on the metric
/// components. The Ricci form is split as `-i d dbar log(Omega / 2)` plus the
/// Hessian of the invariant scalar `log(2 det g / Omega)`, whose ghost values
/// come from the scalar ghost table.
pub struct TensorFlow<'a> {
    pub kernel: &'a Kernel,
    pub base: &'a BaseGrid,
    pub fam: &'a ReferenceFamily,
    ric_omega: Form11Field,
}

impl<'a> TensorFlow<'a> {
    pub fn new(kernel: &'a Kernel, base: &'a BaseGrid, fam: &'a ReferenceFamily) -> Self {
        let lo = RealScalarField {
            values: fam.omega.coeff.iter().map(|&v| if v > 0.0 { (0.5 * v).ln() } else { 0.0 }).collect(),
        };
        let mut ric_omega = kernel.ddbar_scalar(&lo, At::Interior);
        crate::kernel::negate(&mut ric_omega);
        TensorFlow { kernel, base, fam, ric_omega }
    }

    /// `-Ric(g) - g` on the interior.
    pub fn rhs(&self, g: &Form11Field) -> Result<Form11Field> {
        let nf = self.kernel.nf();
        let mut ratio = vec![0.0; self.kernel.len()];
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let det = g.get(p).det();
                if !(det > 0.0) {
                    return Err(Error::SingularMetric { index: p, det });
                }
                ratio[p] = (2.0 * det / self.fam.omega.coeff[p]).ln();
            }
        }
        self.base.ghost_fill(&mut ratio, nf);
        let h = self.kernel.ddbar_scalar(&RealScalarField { values: ratio }, At::Interior);
        let mut out = Form11Field::zeros(self.kernel.len());
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                // -Ric = -ric_omega + h
                let v = h.get(p).sub(&self.ric_omega.get(p)).sub(&g.get(p));
                out.set(p, v);
            }
        }
        Ok(out)
    }

    /// One Heun step on the interior components.
    pub fn step(&self, g: &Form11Field, dt: f64) -> Result<Form11Field> {
        let k1 = self.rhs(g)?;
        let mut mid = g.clone();
        self.axpy_interior(&mut mid, dt, &k1);
        let k2 = self.rhs(&mid)?;
        let mut out = g.clone();
        self.axpy_interior(&mut out, 0.5 * dt, &k1);
        self.axpy_interior(&mut out, 0.5 * dt, &k2);
        let nf = self.kernel.nf();
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                if !out.get(p).is_positive() {
                    return Err(Error::AdmissibilityLost { t: f64::NAN, min_eig: out.get(p).det() });
                }
            }
        }
        Ok(out)
    }

    fn axpy_interior(&self, y: &mut Form11Field, a: f64, x: &Form11Field) {
        let nf = self.kernel.nf();
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                y.set(p, y.get(p).add(&x.get(p).scale(a)));
            }
        }
    }

    /// Integrates from `g0` at `t = 0` to `t_end` with steps of at most `dt`.
    pub fn run(&self, g0: &Form11Field, t_end: f64, dt: f64) -> Result<Form11Field> {
        let n = (t_end / dt).ceil().max(1.0) as usize;
        let h = t_end / n as f64;
        let mut g = g0.clone();
        for _ in 0..n {
            g = self.step(&g, h)?;
        }
        Ok(g)
    }
}

/// Sup over the interior of the `reference`-operator norm of `a - b`.
pub fn relative_sup_difference(kernel: &Kernel, a: &Form11Field, b: &Form11Field, reference: &Form11Field) -> f64 {
    let nf = kernel.nf();
    let mut m = 0.0f64;
    for &bb in kernel.points(At::Interior) {
        for fi in 0..nf {
            let p = bb * nf + fi;
            m = m.max(algebra::operator_norm(&a.get(p).sub(&b.get(p)), &reference.get(p)));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Herm;
    use crate::bundle::{build_scenario, ScenarioKind, ScenarioSpec};
    use crate::grid::GridSpec;

    struct Setup {
        base: BaseGrid,
        kernel: Kernel,
        sc: crate::bundle::Scenario,
    }

    fn setup(kind: ScenarioKind, grid: GridSpec) -> Setup {
        let base = BaseGrid::build(&grid).unwrap();
        let kernel = base.kernel().unwrap();
        let mut spec = ScenarioSpec::new(kind);
        spec.mode = grid.mode;
        let sc = build_scenario(&spec, &base, &kernel).unwrap();
        Setup { base, kernel, sc }
    }

    #[test]
    fn pointwise_rhs_example() {
        let g = Herm::IDENTITY.add(&Herm::diag(0.1, 0.2));
        assert!((ma_pointwise(g.det(), 2.64, 0.5, 0.0) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn product_metric_from_zero_potential() {
        let s = setup(ScenarioKind::KahlerProduct, GridSpec::reduced(33, 0.85));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let phi = RealScalarField::zeros(s.kernel.len());
        let (g, _) = flow.metric_from_potential(&phi, 1.0).unwrap();
        let ev = flow.ma_rhs(&phi, 1.0).unwrap();
        for &b in s.kernel.points(At::Interior) {
            let w = s.base.coord(b);
            let h = g.get(b);
            assert!((h.c11 - (-1f64).exp()).abs() < 1e-15);
            assert_eq!(h.c12, C64::new(0.0, 0.0));
            assert!((h.c22 - crate::bolza::ke_factor(w)).abs() < 1e-12);
            assert!(ev.rhs.values[b].abs() < 1e-13);
        }
    }

    #[test]
    fn spike_loses_admissibility() {
        let s = setup(ScenarioKind::KahlerProduct, GridSpec::reduced(33, 0.85));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let mut phi = RealScalarField::zeros(s.kernel.len());
        phi.values[s.kernel.grid.base_index(16, 16)] = 1.0;
        assert!(matches!(flow.metric_from_potential(&phi, 0.0), Err(Error::AdmissibilityLost { .. })));
    }

    #[test]
    fn gauduchon_rhs_decays_like_exp() {
        let s = setup(ScenarioKind::GauduchonTorsion, GridSpec::reduced(33, 0.85));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let phi = RealScalarField::zeros(s.kernel.len());
        let r: Vec<f64> = [2.0, 4.0, 6.0]
            .iter()
            .map(|&t| s.kernel.sup_abs(&flow.ma_rhs(&phi, t).unwrap().rhs.values, At::Interior) * f64::exp(t))
            .collect();
        assert!(r.iter().all(|&v| v < 10.0) && (r[2] - r[1]).abs() < 0.1 * r[1], "{r:?}");
    }

    #[test]
    fn initial_state_reproduces_initial_metric() {
        let s = setup(ScenarioKind::FiberInhomogeneous, GridSpec::full(33, 0.85, 9));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let st = flow.initial_state().unwrap();
        let d =
            relative_sup_difference(&s.kernel, &st.metric.form, &s.sc.initial.metric.form, &s.sc.initial.metric.form);
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn product_is_preserved_and_dt_is_time_independent() {
        let s = setup(ScenarioKind::KahlerProduct, GridSpec::reduced(33, 0.85));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let s0 = flow.initial_state().unwrap();
        let dt0 = flow.stable_dt(&s0.metric);
        let s1 = flow.advance(s0, 2.0).unwrap();
        assert_eq!(s1.t, 2.0);
        assert!(s.kernel.sup_abs(&s1.phi.values, At::Interior) < 1e-12);
        let dt1 = flow.stable_dt(&s1.metric);
        assert!(dt0 / dt1 < 2.0 && dt1 / dt0 < 2.0);
    }

    #[test]
    fn record_times_are_exact() {
        let s = setup(ScenarioKind::GauduchonTorsion, GridSpec::reduced(33, 0.85));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let mut times = Vec::new();
        flow.run(flow.initial_state().unwrap(), 0.3, 0.1, |st| {
            times.push(st.t);
            Ok(())
        })
        .unwrap();
        assert_eq!(times, vec![0.0, 0.1, 0.2, 0.30000000000000004]);
    }

    #[test]
    fn imex_handles_stiff_fiber_late() {
        let s = setup(ScenarioKind::FiberInhomogeneous, GridSpec::full(33, 0.85, 12));
        let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, StepperConfig::default()).unwrap();
        let s0 = flow.initial_state().unwrap();
        // omega_tilde - e^{-t} i d dbar rho keeps the fiber inhomogeneity of omega_0
        let mut phi = s0.phi.clone();
        phi.values.iter_mut().for_each(|v| *v *= (-8f64).exp());
        let late = flow.state_at(8.0, phi, 0, 0.0).unwrap();
        let dt = flow.stable_dt(&late.metric);
        let rk = Flow::new(
            &s.kernel,
            &s.base,
            &s.sc.reference,
            StepperConfig { scheme: Scheme::ExplicitRk2, ..StepperConfig::default() },
        )
        .unwrap();
        assert!(dt > 100.0 * rk.stable_dt(&late.metric));
        flow.step(&late, dt).unwrap();
    }

    #[test]
    fn time_order_of_schemes() {
        let s = setup(ScenarioKind::GauduchonTorsion, GridSpec::reduced(33, 0.85));
        for (scheme, lo, hi) in [(Scheme::ImexFiberSpectral, 1.6, 2.4), (Scheme::ExplicitRk2, 3.2, 4.8)] {
            let cfg = StepperConfig { scheme, ..StepperConfig::default() };
            let flow = Flow::new(&s.kernel, &s.base, &s.sc.reference, cfg).unwrap();
            let s0 = flow.initial_state().unwrap();
            let dt = flow.stable_dt(&s0.metric);
            let one = flow.step(&s0, dt).unwrap();
            let run = |n: usize| {
                let mut st = s0.clone();
                for _ in 0..n {
                    st = flow.step(&st, dt / n as f64).unwrap();
                }
                st
            };
            let (two, many) = (run(2), run(64));
            let e1 = s.kernel.sup_abs(
                &one.phi.values.iter().zip(&many.phi.values).map(|(a, b)| a - b).collect::<Vec<_>>(),
                At::Interior,
            );
            let e2 = s.kernel.sup_abs(
                &two.phi.values.iter().zip(&many.phi.values).map(|(a, b)| a - b).collect::<Vec<_>>(),
                At::Interior,
            );
            let ratio = e1 / e2;
            assert!(ratio > lo && ratio < hi, "{scheme}: {e1} {e2} {ratio}");
        }
    }

    #[test]
    fn tensor_flow_tracks_product_solution_at_second_order() {
        let err = |n: usize, dt: f64| {
            let s = setup(ScenarioKind::KahlerProduct, GridSpec::reduced(n, 0.85));
            let tf = TensorFlow::new(&s.kernel, &s.base, &s.sc.reference);
            let g = tf.run(&s.sc.initial.metric.form, 1.0, dt).unwrap();
            let exact = s.sc.reference.tilde(1.0);
            relative_sup_difference(&s.kernel, &g, &exact, &exact)
        };
        let (e1, e2) = (err(33, 1e-3), err(65, 2.5e-4));
        assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "{e1} {e2}");
    }
}
