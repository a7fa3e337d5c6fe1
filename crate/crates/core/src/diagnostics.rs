//! Monitored quantities of a flow snapshot.

use crate::algebra::{self, Herm};
use crate::bolza::BaseGrid;
use crate::bundle::Scenario;
use crate::error::{Error, Result};
use crate::field::{Form11Field, HermitianMetricField, RealScalarField, TorsionField};
use crate::flow::FlowState;
use crate::kernel::{At, Christoffel, Kernel, PointClass};

pub const CHART_HALF_WIDTH: f64 = 0.35;
const CHART_MARGIN: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub sup_phi: f64,
    pub sup_phidot: f64,
    pub sup_u: f64,
    pub sup_grad_u_sq: f64,
    pub tr_ref_omega_minus2_max: f64,
    pub tr_omega_ref_minus2_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub torsion_ref_norm_max: f64,
    pub dbar_torsion_scaled: f64,
    pub calabi_s_max: f64,
    pub fiber_diam_max: f64,
    pub fiber_c1_max: f64,
    pub gh_proxy: f64,
    pub vol_ratio_min: f64,
    pub vol_ratio_max: f64,
    pub admissibility_min: f64,
    pub gauduchon_drift: f64,
    /// `max |tr - 2|` over both trace monitors.
    pub tr_dev_abs_max: f64,
    /// Largest eigenvalue of `omega` relative to `omega_tilde`.
    pub rel_eig_max: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 21] = [
        "t",
        "sup_phi",
        "sup_phidot",
        "sup_u",
        "sup_grad_u_sq",
        "tr_ref_omega_minus2_max",
        "tr_omega_ref_minus2_max",
        "R_min",
        "R_max",
        "torsion_ref_norm_max",
        "dbar_torsion_scaled",
        "calabi_S_max",
        "fiber_diam_max",
        "fiber_c1_max",
        "gh_proxy",
        "vol_ratio_min",
        "vol_ratio_max",
        "admissibility_min",
        "gauduchon_drift",
        "tr_dev_abs_max",
        "rel_eig_max",
    ];

    pub fn values(&self) -> [f64; 21] {
        [
            self.t,
            self.sup_phi,
            self.sup_phidot,
            self.sup_u,
            self.sup_grad_u_sq,
            self.tr_ref_omega_minus2_max,
            self.tr_omega_ref_minus2_max,
            self.r_min,
            self.r_max,
            self.torsion_ref_norm_max,
            self.dbar_torsion_scaled,
            self.calabi_s_max,
            self.fiber_diam_max,
            self.fiber_c1_max,
            self.gh_proxy,
            self.vol_ratio_min,
            self.vol_ratio_max,
            self.admissibility_min,
            self.gauduchon_drift,
            self.tr_dev_abs_max,
            self.rel_eig_max,
        ]
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != 21 {
            return Err(Error::InsufficientData(format!("expected 21 record values, got {}", v.len())));
        }
        Ok(DiagnosticsRecord {
            t: v[0],
            sup_phi: v[1],
            sup_phidot: v[2],
            sup_u: v[3],
            sup_grad_u_sq: v[4],
            tr_ref_omega_minus2_max: v[5],
            tr_omega_ref_minus2_max: v[6],
            r_min: v[7],
            r_max: v[8],
            torsion_ref_norm_max: v[9],
            dbar_torsion_scaled: v[10],
            calabi_s_max: v[11],
            fiber_diam_max: v[12],
            fiber_c1_max: v[13],
            gh_proxy: v[14],
            vol_ratio_min: v[15],
            vol_ratio_max: v[16],
            admissibility_min: v[17],
            gauduchon_drift: v[18],
            tr_dev_abs_max: v[19],
            rel_eig_max: v[20],
        })
    }
}

/// Diameter of the flat torus `[0,1) x [0, b)` with Riemannian metric
/// `2 c |dz|^2`: half its diagonal.
pub fn flat_torus_diameter(c: f64, period_y: f64) -> f64 {
    0.5 * (2.0 * c).sqrt() * (1.0 + period_y * period_y).sqrt()
}

/// Interior sub-rectangle `|x|, |y| <= half_width` used for the Calabi quantity.
/// Every point needs `CHART_MARGIN` interior neighbors along both axes.
pub fn chart_points(base: &BaseGrid, half_width: f64) -> Result<Vec<usize>> {
    let g = &base.grid;
    let (nx, ny) = (g.base_nx as isize, g.base_ny as isize);
    let m = CHART_MARGIN as isize;
    let mut out = Vec::new();
    for b in 0..g.base_len() {
        let (x, y) = g.base_coord(b);
        if x.abs() > half_width + 1e-12 || y.abs() > half_width + 1e-12 {
            continue;
        }
        let (i, j) = g.base_ij(b);
        for d in -m..=m {
            for (di, dj) in [(d, 0), (0, d)] {
                let (a, c) = (i as isize + di, j as isize + dj);
                if a < 0 || c < 0 || a >= nx || c >= ny || base.class[(a * ny + c) as usize] != PointClass::Interior {
                    return Err(Error::Config(format!(
                        "Calabi chart of half width {half_width} needs {CHART_MARGIN} interior cells around it"
                    )));
                }
            }
        }
        out.push(b);
    }
    if out.is_empty() {
        return Err(Error::Config("Calabi chart contains no grid points".into()));
    }
    Ok(out)
}

/// Precomputed, time-independent ingredients for snapshots.
pub struct Diagnostics<'a> {
    pub kernel: &'a Kernel,
    pub base: &'a BaseGrid,
    pub scenario: &'a Scenario,
    chart: Vec<usize>,
    hat_gamma: Christoffel,
    torsion0: TorsionField,
}

impl<'a> Diagnostics<'a> {
    pub fn new(kernel: &'a Kernel, base: &'a BaseGrid, scenario: &'a Scenario) -> Result<Self> {
        let chart = chart_points(base, CHART_HALF_WIDTH)?;
        // semi-flat product Kaehler reference a omega_E + omega_S
        let hat = crate::bundle::product_metric(base, scenario.spec.fiber_scale);
        let hat_gamma = kernel.christoffels(&HermitianMetricField::unchecked(hat), At::Interior)?;
        let torsion0 = kernel.torsion(&scenario.initial.metric.form, At::Interior);
        Ok(Diagnostics { kernel, base, scenario, chart, hat_gamma, torsion0 })
    }

    pub fn chart(&self) -> &[usize] {
        &self.chart
    }

    fn nf(&self) -> usize {
        self.kernel.nf()
    }

    fn interior_points(&self) -> impl Iterator<Item = usize> + '_ {
        let nf = self.nf();
        self.kernel.points(At::Interior).iter().flat_map(move |&b| (0..nf).map(move |fi| b * nf + fi))
    }

    /// `|Gamma(g) - Gamma_hat|^2_g` maximized over the chart.
    pub fn calabi_s(&self, g: &HermitianMetricField) -> Result<f64> {
        let gamma = self.kernel.christoffels(g, At::Interior)?;
        let psi = Christoffel {
            gamma: gamma
                .gamma
                .iter()
                .zip(&self.hat_gamma.gamma)
                .map(|(a, b)| std::array::from_fn(|k| a[k] - b[k]))
                .collect(),
        };
        let s = self.kernel.connection_norm_sq(&psi, &g.form, At::Interior)?;
        let nf = self.nf();
        Ok(self.chart.iter().flat_map(|&b| (0..nf).map(move |fi| b * nf + fi)).map(|p| s.values[p]).fold(0.0, f64::max))
    }

    /// Largest fiber diameter over the interior base points, using the fiber
    /// mean of the fiber coefficient.
    pub fn fiber_diameter_max(&self, g: &Form11Field) -> f64 {
        let nf = self.nf();
        let period = self.kernel.grid.fiber_period_y;
        self.kernel
            .points(At::Interior)
            .iter()
            .map(|&b| {
                let c = g.c11[b * nf..(b + 1) * nf].iter().sum::<f64>() / nf as f64;
                flat_torus_diameter(c, period)
            })
            .fold(0.0, f64::max)
    }

    /// `sup_y ||e^t g|E_y - g_flat,y||` plus the size of the first fiber
    /// derivatives of `e^t g11`, both measured with `g_0` restricted to the fiber.
    pub fn fiber_c1_max(&self, g: &Form11Field, t: f64) -> f64 {
        let nf = self.nf();
        let g0 = &self.scenario.initial.metric.form;
        let flat = &self.scenario.semiflat.flat_fiber_coeff;
        let et = t.exp();
        let scaled: Vec<f64> = g.c11.iter().map(|v| et * v).collect();
        let deriv = self.kernel.spectral().map(|_| self.kernel.d1(&crate::kernel::to_complex(&scaled), At::Interior));
        let mut m = 0.0f64;
        for &b in self.kernel.points(At::Interior) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let h0 = g0.c11[p];
                let mut v = (scaled[p] - flat[b]).abs() / h0;
                if let Some(d) = &deriv {
                    v += d[p].norm() / h0.powf(1.5);
                }
                m = m.max(v);
            }
        }
        m
    }

    /// Fiber diameter plus `sup ||g - pi^* g_S||_{g_0}`.
    pub fn gh_proxy(&self, g: &Form11Field) -> f64 {
        let g0 = &self.scenario.initial.metric.form;
        let s = &self.scenario.reference.omega_s;
        let mut m = 0.0f64;
        for p in self.interior_points() {
            m = m.max(algebra::operator_norm(&g.get(p).sub(&s.get(p)), &g0.get(p)));
        }
        self.fiber_diameter_max(g) + m
    }

    pub fn record(&self, state: &FlowState) -> Result<DiagnosticsRecord> {
        let k = self.kernel;
        let t = state.t;
        let g = &state.metric;
        let fam = &self.scenario.reference;
        let tilde = fam.tilde(t);
        let tilde_metric = HermitianMetricField::unchecked(tilde.clone());

        let mut phidot = state.phidot.clone();
        self.base.ghost_fill(&mut phidot.values, self.nf());
        let u = RealScalarField { values: state.phi.values.iter().zip(&phidot.values).map(|(a, b)| a + b).collect() };
        let grad_u = k.grad_norm_sq(g, &u, At::Interior)?;

        let mut tr_ref = f64::NEG_INFINITY;
        let mut tr_met = f64::NEG_INFINITY;
        let mut tr_dev = 0.0f64;
        let mut vol_min = f64::INFINITY;
        let mut vol_max = f64::NEG_INFINITY;
        let mut eig_max = f64::NEG_INFINITY;
        for p in self.interior_points() {
            let (h, r) = (g.get(p), tilde.get(p));
            let a = algebra::trace(&r, &h) - 2.0;
            let b = algebra::trace(&h, &r) - 2.0;
            tr_ref = tr_ref.max(a);
            tr_met = tr_met.max(b);
            tr_dev = tr_dev.max(a.abs()).max(b.abs());
            let v = h.det() / r.det();
            vol_min = vol_min.min(v);
            vol_max = vol_max.max(v);
            eig_max = eig_max.max(algebra::relative_eigenvalues(&h, &r).1);
        }

        let r = k.chern_scalar(g, At::Interior)?;

        let tt = self.torsion0.scaled((-t).exp());
        let tn = k.torsion_norm_sq(&tt, &tilde, At::Interior)?;
        let dtt = k.dbar_torsion(&tt, At::Interior);
        let dtn = k.dbar_torsion_norm_sq(&dtt, &tilde, At::Interior)?;

        let drift = k.ddbar_form(&g.form, At::Interior);
        let _ = &tilde_metric;

        Ok(DiagnosticsRecord {
            t,
            sup_phi: k.sup_abs(&state.phi.values, At::Interior),
            sup_phidot: k.sup_abs(&state.phidot.values, At::Interior),
            sup_u: k.sup_abs(&u.values, At::Interior),
            sup_grad_u_sq: k.max(&grad_u.values, At::Interior),
            tr_ref_omega_minus2_max: tr_ref,
            tr_omega_ref_minus2_max: tr_met,
            r_min: k.min(&r.values, At::Interior),
            r_max: k.max(&r.values, At::Interior),
            torsion_ref_norm_max: k.max(&tn.values, At::Interior).max(0.0).sqrt(),
            dbar_torsion_scaled: (-0.5 * t).exp() * k.max(&dtn.values, At::Interior).max(0.0).sqrt(),
            calabi_s_max: self.calabi_s(g)?,
            fiber_diam_max: self.fiber_diameter_max(&g.form),
            fiber_c1_max: self.fiber_c1_max(&g.form, t),
            gh_proxy: self.gh_proxy(&g.form),
            vol_ratio_min: vol_min,
            vol_ratio_max: vol_max,
            admissibility_min: state.admissibility_min,
            gauduchon_drift: k.sup_abs(&drift, At::Interior),
            tr_dev_abs_max: tr_dev,
            rel_eig_max: eig_max,
        })
    }
}

/// Pinching at one record: with `eps` the larger trace excess, the relative
/// eigenvalue range must sit inside `[1 - 2 sqrt(eps), 1 + 2 sqrt(eps)]`.
pub fn record_pinched(r: &DiagnosticsRecord) -> bool {
    let eps = r.tr_ref_omega_minus2_max.max(r.tr_omega_ref_minus2_max).max(0.0);
    if eps >= 0.05 {
        return false;
    }
    let w = 2.0 * eps.sqrt();
    let tol = 1e-12;
    r.admissibility_min >= 1.0 - w - tol && r.rel_eig_max <= 1.0 + w + tol
}

/// Pointwise identity `tr_g r = (det r / det g) tr_r g`.
pub fn trace_identity_defect(g: &Herm, r: &Herm) -> f64 {
    (algebra::trace(g, r) - r.det() / g.det() * algebra::trace(r, g)).abs()
}
