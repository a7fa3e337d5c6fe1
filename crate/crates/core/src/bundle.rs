//! Scenario construction on `S x E`: initial Gauduchon metrics, the
//! semi-flat form, the volume form `Omega` and the reference family.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;

use crate::algebra::{self, Herm};
use crate::bolza::{broadcast, BaseGrid, InvariantBump};
use crate::error::{Error, Result};
use crate::field::{Form11Field, HermitianMetricField, RealScalarField, TopFormField};
use crate::grid::FiberMode;
use crate::kernel::{At, Kernel};

pub const TI_STEP: f64 = 1e-3;
pub const TI_MARGIN: f64 = 1e-6;
const TI_MAX: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    KahlerProduct,
    KahlerPerturbed,
    GauduchonTorsion,
    FiberInhomogeneous,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::KahlerProduct,
        ScenarioKind::KahlerPerturbed,
        ScenarioKind::GauduchonTorsion,
        ScenarioKind::FiberInhomogeneous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::KahlerProduct => "kahler_product",
            ScenarioKind::KahlerPerturbed => "kahler_perturbed",
            ScenarioKind::GauduchonTorsion => "gauduchon_torsion",
            ScenarioKind::FiberInhomogeneous => "fiber_inhomogeneous",
        }
    }

    pub fn default_amplitude(self) -> f64 {
        match self {
            ScenarioKind::KahlerProduct => 0.0,
            ScenarioKind::KahlerPerturbed => 0.2,
            ScenarioKind::GauduchonTorsion => 0.05,
            ScenarioKind::FiberInhomogeneous => 0.3,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown scenario kind '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub amplitude: f64,
    pub bump_center: C64,
    /// Hyperbolic radius of the bump support.
    pub bump_radius: f64,
    /// Lattice parameter `tau = i * tau_im`.
    pub tau_im: f64,
    /// Fiber metric scale `a` in `a * omega_E`.
    pub fiber_scale: f64,
    pub mode: FiberMode,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            kind,
            amplitude: kind.default_amplitude(),
            bump_center: C64::new(0.05, 0.03),
            bump_radius: 0.9,
            tau_im: 1.0,
            fiber_scale: 1.0,
            mode: match kind {
                ScenarioKind::FiberInhomogeneous => FiberMode::Full,
                _ => FiberMode::Reduced,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ScenarioKind::FiberInhomogeneous && self.mode != FiberMode::Full {
            return Err(Error::InvalidScenario("fiber_inhomogeneous requires full fiber mode".into()));
        }
        if !(self.fiber_scale > 0.0 && self.fiber_scale.is_finite()) {
            return Err(Error::InvalidScenario("fiber metric scale must be positive".into()));
        }
        if !(self.tau_im > 0.0 && self.tau_im.is_finite()) {
            return Err(Error::InvalidScenario("Im(tau) must be positive".into()));
        }
        if !(self.bump_radius > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidScenario("bump radius must be positive and amplitude finite".into()));
        }
        Ok(())
    }

    fn bump(&self, amplitude: f64) -> InvariantBump {
        InvariantBump { center: self.bump_center, radius: self.bump_radius, amplitude }
    }
}

/// Initial metric together with its smallest eigenvalue relative to the
/// unperturbed product metric.
#[derive(Clone, Debug)]
pub struct InitialMetric {
    pub metric: HermitianMetricField,
    pub min_relative_eigenvalue: f64,
}

/// `a * omega_E + omega_S` on the known points.
pub fn product_metric(base: &BaseGrid, fiber_scale: f64) -> Form11Field {
    let mut f = base.ke_metric();
    let nf = base.grid.fiber_len();
    for b in 0..base.grid.base_len() {
        if base.class[b] != crate::kernel::PointClass::Exterior {
            for fi in 0..nf {
                f.c11[b * nf + fi] = fiber_scale;
            }
        }
    }
    f
}

/// `gamma = d(conj beta) + dbar(beta)` for `beta = f dz1`: `c11 = -2 Im(d1bar f)`,
/// `c12 = i d2bar f`, `c22 = 0`.
pub fn gamma_form(kernel: &Kernel, f: &[C64]) -> Form11Field {
    let d1b = kernel.d1bar(f, At::Stencil);
    let d2b = kernel.d2bar(f, At::Stencil);
    let n = kernel.len();
    Form11Field {
        c11: (0..n).map(|p| -2.0 * d1b[p].im).collect(),
        c12: (0..n).map(|p| C64::i() * d2b[p]).collect(),
        c22: vec![0.0; n],
    }
}

pub fn build_initial_metric(spec: &ScenarioSpec, base: &BaseGrid, kernel: &Kernel) -> Result<InitialMetric> {
    spec.validate()?;
    if base.grid.mode != spec.mode {
        return Err(Error::InvalidScenario("scenario fiber mode does not match the grid".into()));
    }
    if (base.grid.fiber_period_y - spec.tau_im).abs() > 1e-15 {
        return Err(Error::InvalidScenario("grid fiber period does not match Im(tau)".into()));
    }
    let nf = base.grid.fiber_len();
    let a = spec.fiber_scale;
    let reference = product_metric(base, a);
    let mut form = reference.clone();
    let amp = spec.amplitude;
    if amp != 0.0 {
        match spec.kind {
            ScenarioKind::KahlerProduct => {}
            ScenarioKind::KahlerPerturbed => {
                let psi = broadcast(&spec.bump(amp).sample(base)?, nf);
                form.add_scaled(1.0, &kernel.ddbar_scalar(&RealScalarField { values: psi }, At::Stencil));
            }
            ScenarioKind::GauduchonTorsion => {
                let b = broadcast(&spec.bump(amp).sample(base)?, nf);
                let f: Vec<C64> = b.iter().map(|&v| C64::new(v, 0.0)).collect();
                form.add_scaled(1.0, &gamma_form(kernel, &f));
            }
            ScenarioKind::FiberInhomogeneous => {
                // f = i g with g = -(a A / 2 pi) b(w) sin(2 pi x1) gives
                // c11 = a A b(w) cos(2 pi x1) and keeps the form Gauduchon.
                let b = spec.bump(1.0).sample(base)?;
                let mut f = vec![C64::new(0.0, 0.0); kernel.len()];
                for (bi, &bv) in b.iter().enumerate() {
                    for fi in 0..nf {
                        let (x1, _) = base.grid.fiber_coord(fi);
                        f[bi * nf + fi] = C64::new(0.0, -(a * amp / (2.0 * PI)) * bv * (2.0 * PI * x1).sin());
                    }
                }
                form.add_scaled(1.0, &gamma_form(kernel, &f));
            }
        }
    }
    let mut min_eig = f64::INFINITY;
    for &b in kernel.points(At::Known) {
        for fi in 0..nf {
            let p = b * nf + fi;
            min_eig = min_eig.min(algebra::relative_eigenvalues(&form.get(p), &reference.get(p)).0);
        }
    }
    let mut metric = HermitianMetricField::unchecked(form);
    if !metric.check_admissible(kernel.points(At::Known), nf) || !(min_eig > 0.0) {
        return Err(Error::Config(format!(
            "initial metric is not positive definite (min eigenvalue relative to the product metric {min_eig:.6}); lower the amplitude"
        )));
    }
    Ok(InitialMetric { metric, min_relative_eigenvalue: min_eig })
}

/// Non-Gauduchon example `(1 + A b(w)) a omega_E + omega_S`.
pub fn conformal_fiber_metric(spec: &ScenarioSpec, base: &BaseGrid) -> Result<HermitianMetricField> {
    let nf = base.grid.fiber_len();
    let mut form = product_metric(base, spec.fiber_scale);
    let b = broadcast(&spec.bump(spec.amplitude).sample(base)?, nf);
    for (c, v) in form.c11.iter_mut().zip(b) {
        *c *= 1.0 + v;
    }
    Ok(HermitianMetricField::unchecked(form))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GauduchonCheck {
    /// Sup over the interior of the top coefficient of `i d dbar omega`.
    pub ddbar_norm: f64,
    /// Sup of the coordinate size of `d omega` (the torsion components).
    pub d_norm: f64,
}

pub fn verify_gauduchon(kernel: &Kernel, w0: &HermitianMetricField) -> GauduchonCheck {
    let top = kernel.ddbar_form(&w0.form, At::Interior);
    let t = kernel.torsion(&w0.form, At::Interior);
    let dn: Vec<f64> = (0..kernel.len()).map(|p| (t.t121[p].norm_sqr() + t.t122[p].norm_sqr()).sqrt()).collect();
    GauduchonCheck { ddbar_norm: kernel.sup_abs(&top, At::Interior), d_norm: kernel.max(&dn, At::Interior) }
}

#[derive(Clone, Debug)]
pub struct SemiFlatData {
    /// `rho_y` with `omega_0|E_y + i d dbar rho_y` flat and `int rho_y omega_0 = 0`.
    pub rho: RealScalarField,
    /// Fiber-constant coefficient of the flat metric, one value per base point.
    pub flat_fiber_coeff: Vec<f64>,
}

pub fn solve_semiflat(kernel: &Kernel, w0: &HermitianMetricField) -> Result<SemiFlatData> {
    let nf = kernel.nf();
    let mut rho = vec![0.0; kernel.len()];
    let mut flat = vec![0.0; kernel.grid.base_len()];
    let spectral = kernel.spectral();
    let mut tmp = Vec::new();
    let mut buf = vec![C64::new(0.0, 0.0); nf];
    for &b in kernel.points(At::Known) {
        let h = &w0.form.c11[b * nf..(b + 1) * nf];
        if let Some(p) = h.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidScenario(format!("non-positive fiber coefficient at point {}", b * nf + p)));
        }
        let c = h.iter().sum::<f64>() / nf as f64;
        flat[b] = c;
        let Some(s) = spectral else { continue };
        if h.iter().all(|&v| (v - c).abs() <= 1e-12 * c) {
            continue;
        }
        for (z, &v) in buf.iter_mut().zip(h) {
            *z = C64::new(c - v, 0.0);
        }
        s.apply(&mut buf, &mut tmp, |k| {
            if s.lap[k].abs() > 1e-12 {
                C64::new(1.0 / s.lap[k], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let num: f64 = buf.iter().zip(h).map(|(r, &v)| r.re * v).sum();
        let den: f64 = h.iter().sum();
        let shift = num / den;
        for (fi, z) in buf.iter().enumerate() {
            rho[b * nf + fi] = z.re - shift;
        }
    }
    Ok(SemiFlatData { rho: RealScalarField { values: rho }, flat_fiber_coeff: flat })
}

#[derive(Clone, Debug)]
pub struct ReferenceFamily {
    pub omega_flat: Form11Field,
    pub omega_s: Form11Field,
    pub omega: TopFormField,
    pub t_i: f64,
    /// `phi(0) = -rho`.
    pub rho: RealScalarField,
    /// Sup over the interior of `|Ric(Omega) + omega_S|` measured in `omega_0`.
    pub ricci_residual: f64,
    /// `int Omega / (2 int omega_0 ^ omega_S)`.
    pub integral_ratio: f64,
}

impl ReferenceFamily {
    /// `e^{-t} omega_flat + (1 - e^{-t}) omega_S` at one point.
    pub fn tilde_at(&self, p: usize, t: f64) -> Herm {
        let x = (-t).exp();
        self.omega_flat.get(p).scale(x).add(&self.omega_s.get(p).scale(1.0 - x))
    }

    pub fn tilde(&self, t: f64) -> Form11Field {
        let x = (-t).exp();
        Form11Field::combine(x, &self.omega_flat, 1.0 - x, &self.omega_s)
    }

    /// `d/dt omega_tilde = e^{-t} (omega_S - omega_flat)`.
    pub fn tilde_dot(&self, t: f64) -> Form11Field {
        let x = (-t).exp();
        Form11Field::combine(x, &self.omega_s, -x, &self.omega_flat)
    }

    /// `sup |e^t log(e^t omega_tilde^2 / Omega)|` over the interior.
    pub fn volume_defect(&self, kernel: &Kernel, t: f64) -> f64 {
        let mut m = 0.0f64;
        let nf = kernel.nf();
        for &b in kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let v = t.exp() * 2.0 * self.tilde_at(p, t).det() / self.omega.coeff[p];
                m = m.max((t.exp() * v.ln()).abs());
            }
        }
        m
    }
}

pub fn build_reference(
    kernel: &Kernel,
    base: &BaseGrid,
    w0: &HermitianMetricField,
    semiflat: &SemiFlatData,
) -> Result<ReferenceFamily> {
    let nf = kernel.nf();
    let mut omega_flat = w0.form.clone();
    omega_flat.add_scaled(1.0, &kernel.ddbar_scalar(&semiflat.rho, At::Stencil));
    let omega_s = base.ke_metric();
    let mut omega = kernel.wedge(&omega_flat, &omega_s);
    for v in omega.coeff.iter_mut() {
        *v *= 2.0;
    }
    for &b in kernel.points(At::Known) {
        for fi in 0..nf {
            let p = b * nf + fi;
            if !(omega.coeff[p] > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "volume form coefficient {} is not positive at point {p}",
                    omega.coeff[p]
                )));
            }
        }
    }
    let w0s = kernel.wedge(&w0.form, &omega_s);
    let integral_ratio = kernel.integrate(&omega.coeff) / (2.0 * kernel.integrate(&w0s.coeff));

    let log_omega =
        RealScalarField { values: omega.coeff.iter().map(|&v| if v > 0.0 { v.ln() } else { 0.0 }).collect() };
    let mut res = kernel.ddbar_scalar(&log_omega, At::Interior);
    res.add_scaled(-1.0, &omega_s);
    let mut ricci_residual = 0.0f64;
    for &b in kernel.points(At::Interior) {
        for fi in 0..nf {
            let p = b * nf + fi;
            ricci_residual = ricci_residual.max(algebra::operator_norm(&res.get(p), &w0.form.get(p)));
        }
    }
    let t_i = compute_ti(&omega_flat, &omega_s, kernel.points(At::Interior), nf)?;
    Ok(ReferenceFamily { omega_flat, omega_s, omega, t_i, rho: semiflat.rho.clone(), ricci_residual, integral_ratio })
}

/// Smallest `t` on the `TI_STEP` grid from which `omega_tilde(t')` stays
/// positive for every `t' >= t` at the given base points.
///
/// With `x = e^{-t}`, `det omega_tilde = x D(x)` where `D` is affine in `x`,
/// and the diagonal entries are affine as well, so checking `x = e^{-t}` and
/// `x -> 0` covers all later times.
pub fn compute_ti(flat: &Form11Field, omega_s: &Form11Field, base_points: &[usize], nf: usize) -> Result<f64> {
    let ok_at = |p: usize, x: f64| -> bool {
        let f = flat.get(p);
        let s = omega_s.get(p).c22;
        let d = f.c11 * s + x * (f.c11 * (f.c22 - s) - f.c12.norm_sqr());
        f.c11 > TI_MARGIN && d > TI_MARGIN && x * f.c22 + (1.0 - x) * s > TI_MARGIN
    };
    let pts: Vec<usize> = base_points.iter().flat_map(|&b| (0..nf).map(move |fi| b * nf + fi)).collect();
    if let Some(&p) = pts.iter().find(|&&p| !ok_at(p, 0.0)) {
        return Err(Error::InvalidScenario(format!("reference metric never becomes positive at point {p}")));
    }
    let mut k = 0usize;
    loop {
        let t = k as f64 * TI_STEP;
        if pts.iter().all(|&p| ok_at(p, (-t).exp())) {
            return Ok(t);
        }
        if t > TI_MAX {
            return Err(Error::InvalidScenario(format!("no admissible reference time below {TI_MAX}")));
        }
        k += 1;
    }
}

/// Everything a run needs about its scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub initial: InitialMetric,
    pub gauduchon: GauduchonCheck,
    pub semiflat: SemiFlatData,
    pub reference: ReferenceFamily,
}

pub fn build_scenario(spec: &ScenarioSpec, base: &BaseGrid, kernel: &Kernel) -> Result<Scenario> {
    let initial = build_initial_metric(spec, base, kernel)?;
    let gauduchon = verify_gauduchon(kernel, &initial.metric);
    let semiflat = solve_semiflat(kernel, &initial.metric)?;
    let reference = build_reference(kernel, base, &initial.metric, &semiflat)?;
    Ok(Scenario { spec: spec.clone(), initial, gauduchon, semiflat, reference })
}

/// CSV of `omega_0`, `omega_flat` and `Omega` on known points.
pub fn reference_csv(kernel: &Kernel, w0: &HermitianMetricField, fam: &ReferenceFamily) -> String {
    let nf = kernel.nf();
    let mut out =
        String::from("i,j,fiber,x,y,w0_11,w0_12_re,w0_12_im,w0_22,flat_11,flat_12_re,flat_12_im,flat_22,omega\n");
    for &b in kernel.points(At::Known) {
        let (i, j) = kernel.grid.base_ij(b);
        let (x, y) = kernel.grid.base_coord(b);
        for fi in 0..nf {
            let p = b * nf + fi;
            let g = w0.get(p);
            let f = fam.omega_flat.get(p);
            out.push_str(&format!(
                "{i},{j},{fi},{x},{y},{},{},{},{},{},{},{},{},{}\n",
                g.c11, g.c12.re, g.c12.im, g.c22, f.c11, f.c12.re, f.c12.im, f.c22, fam.omega.coeff[p]
            ));
        }
    }
    out
}
