//! Discrete complex-differential-geometry kernel on the product grid.
//!
//! Base derivatives are second-order central differences in the disk
//! coordinate, with `d2 = (dx - i dy) / 2`; fiber derivatives are Fourier
//! multipliers. Every operator evaluates on an explicit point set and
//! leaves zeros elsewhere.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::algebra::{self, Herm, Inverse};
use crate::error::{Error, Result};
use crate::field::{Form11Field, HermitianMetricField, RealScalarField, TopFormField, TorsionField};
use crate::grid::{FiberMode, GridSpec};
use crate::spectral::FiberSpectral;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointClass {
    Interior,
    Ghost,
    Exterior,
}

/// Base point sets an operator can be evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum At {
    /// Interior points of the fundamental domain.
    Interior,
    /// Every known point whose cross-shaped stencil is known; contains
    /// `Interior` plus the first ghost layer.
    Stencil,
    /// Every known (interior or ghost) point; pointwise operations only.
    Known,
}

#[derive(Debug)]
pub struct Kernel {
    pub grid: GridSpec,
    pub class: Vec<PointClass>,
    pub interior: Vec<usize>,
    pub stencil: Vec<usize>,
    pub known: Vec<usize>,
    mask_interior: Vec<bool>,
    mask_stencil: Vec<bool>,
    mask_known: Vec<bool>,
    spectral: Option<FiberSpectral>,
}

/// Chern connection coefficients `Gamma^k_{ij}` stored at `k * 4 + i * 2 + j`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    pub gamma: Vec<[C64; 8]>,
}

impl Christoffel {
    pub fn get(&self, p: usize, k: usize, i: usize, j: usize) -> C64 {
        self.gamma[p][k * 4 + i * 2 + j]
    }
}

/// `dbar T`: components `d_{mbar} T_{12 kbar}` stored at `k * 2 + m`.
#[derive(Clone, Debug)]
pub struct DbarTorsion {
    pub comps: Vec<[C64; 4]>,
}

/// Per-point outcome of the pinching lemma.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinchResult {
    pub trace_ref_ok: bool,
    pub trace_metric_ok: bool,
    /// Certified interval `[1 - 2 sqrt(eps), 1 + 2 sqrt(eps)]`.
    pub certified: (f64, f64),
    /// Exact generalized eigenvalues of `g` relative to `g_ref`.
    pub eigenvalues: (f64, f64),
}

impl PinchResult {
    pub fn pass(&self) -> bool {
        self.trace_ref_ok
            && self.trace_metric_ok
            && self.eigenvalues.0 >= self.certified.0
            && self.eigenvalues.1 <= self.certified.1
    }
}

/// Pinching lemma at one point: if `tr_{g_ref} g <= 2 + eps` and
/// `tr_g g_ref <= 2 + eps`, the relative eigenvalues lie in the certified interval.
pub fn pinch_check(g: &Herm, g_ref: &Herm, eps: f64) -> Result<PinchResult> {
    if !(eps >= 0.0) || eps >= 0.05 {
        return Err(Error::OutOfRegime(eps));
    }
    let tol = 1e-12;
    let t_ref = algebra::trace(g_ref, g);
    let t_met = algebra::trace(g, g_ref);
    let r = 2.0 * eps.sqrt();
    Ok(PinchResult {
        trace_ref_ok: t_ref <= 2.0 + eps + tol,
        trace_metric_ok: t_met <= 2.0 + eps + tol,
        certified: (1.0 - r, 1.0 + r),
        eigenvalues: algebra::relative_eigenvalues(g, g_ref),
    })
}

impl Kernel {
    /// Kernel over an explicit classification. Every interior point must have
    /// its radius-2 neighborhood inside the box and made of known points.
    pub fn new(grid: GridSpec, class: Vec<PointClass>) -> Result<Kernel> {
        grid.validate()?;
        if class.len() != grid.base_len() {
            return Err(Error::BoundaryData("classification size does not match grid".into()));
        }
        let (nx, ny) = (grid.base_nx as isize, grid.base_ny as isize);
        let known_at = |i: isize, j: isize| -> bool {
            i >= 0 && j >= 0 && i < nx && j < ny && class[(i * ny + j) as usize] != PointClass::Exterior
        };
        let mut interior = Vec::new();
        let mut stencil = Vec::new();
        let mut known = Vec::new();
        for b in 0..grid.base_len() {
            let (i, j) = grid.base_ij(b);
            let (i, j) = (i as isize, j as isize);
            if class[b] == PointClass::Exterior {
                continue;
            }
            known.push(b);
            if class[b] == PointClass::Interior {
                for di in -2..=2 {
                    for dj in -2..=2 {
                        if !known_at(i + di, j + dj) {
                            return Err(Error::BoundaryData(format!(
                                "interior point ({i}, {j}) lacks a width-2 ghost ring"
                            )));
                        }
                    }
                }
                interior.push(b);
            }
            if known_at(i - 1, j) && known_at(i + 1, j) && known_at(i, j - 1) && known_at(i, j + 1) {
                stencil.push(b);
            }
        }
        let mut mask_interior = vec![false; grid.base_len()];
        let mut mask_stencil = vec![false; grid.base_len()];
        let mut mask_known = vec![false; grid.base_len()];
        for &b in &interior {
            mask_interior[b] = true;
        }
        for &b in &stencil {
            mask_stencil[b] = true;
        }
        for &b in &known {
            mask_known[b] = true;
        }
        let spectral = match grid.mode {
            FiberMode::Reduced => None,
            FiberMode::Full => Some(FiberSpectral::new(grid.fiber_nx, grid.fiber_ny, grid.fiber_period_y)),
        };
        Ok(Kernel { grid, class, interior, stencil, known, mask_interior, mask_stencil, mask_known, spectral })
    }

    /// Plain box: points at least two cells from the edge are interior.
    pub fn boxed(grid: GridSpec) -> Result<Kernel> {
        let mut class = vec![PointClass::Ghost; grid.base_len()];
        for (b, c) in class.iter_mut().enumerate() {
            let (i, j) = grid.base_ij(b);
            if i >= 2 && j >= 2 && i + 2 < grid.base_nx && j + 2 < grid.base_ny {
                *c = PointClass::Interior;
            }
        }
        Kernel::new(grid, class)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nf(&self) -> usize {
        self.grid.fiber_len()
    }

    pub fn spectral(&self) -> Option<&FiberSpectral> {
        self.spectral.as_ref()
    }

    pub fn mask(&self, at: At) -> &[bool] {
        match at {
            At::Interior => &self.mask_interior,
            At::Stencil => &self.mask_stencil,
            At::Known => &self.mask_known,
        }
    }

    pub fn points(&self, at: At) -> &[usize] {
        match at {
            At::Interior => &self.interior,
            At::Stencil => &self.stencil,
            At::Known => &self.known,
        }
    }

    /// Applies `op(base, out_chunk)` to each selected base point in parallel.
    fn per_base<T: Send + Clone>(&self, at: At, init: T, op: impl Fn(usize, &mut [T]) + Sync) -> Vec<T> {
        let nf = self.nf();
        let mask = self.mask(at);
        let mut out = vec![init; self.len()];
        out.par_chunks_mut(nf).enumerate().for_each(|(b, chunk)| {
            if mask[b] {
                op(b, chunk);
            }
        });
        out
    }

    /// Central differences `(f_x, f_y)` in the base at one base point.
    fn base_diff(&self, f: &[C64], b: usize, fi: usize) -> (C64, C64) {
        let nf = self.nf();
        let ny = self.grid.base_ny;
        let fx = (f[(b + ny) * nf + fi] - f[(b - ny) * nf + fi]) / (2.0 * self.grid.h_bx());
        let fy = (f[(b + 1) * nf + fi] - f[(b - 1) * nf + fi]) / (2.0 * self.grid.h_by());
        (fx, fy)
    }

    /// `d/dz2 f`.
    pub fn d2(&self, f: &[C64], at: At) -> Vec<C64> {
        self.per_base(at, ZERO, |b, out| {
            for (fi, o) in out.iter_mut().enumerate() {
                let (fx, fy) = self.base_diff(f, b, fi);
                *o = (fx - C64::i() * fy) * 0.5;
            }
        })
    }

    /// `d/dzbar2 f`.
    pub fn d2bar(&self, f: &[C64], at: At) -> Vec<C64> {
        self.per_base(at, ZERO, |b, out| {
            for (fi, o) in out.iter_mut().enumerate() {
                let (fx, fy) = self.base_diff(f, b, fi);
                *o = (fx + C64::i() * fy) * 0.5;
            }
        })
    }

    fn fiber_multiplier(&self, f: &[C64], at: At, which: Fiber) -> Vec<C64> {
        let nf = self.nf();
        match &self.spectral {
            None => vec![ZERO; self.len()],
            Some(s) => self.per_base(at, ZERO, |b, out| {
                out.copy_from_slice(&f[b * nf..(b + 1) * nf]);
                let mut tmp = Vec::with_capacity(nf);
                s.apply(out, &mut tmp, |k| match which {
                    Fiber::D1 => s.d1[k],
                    Fiber::D1bar => s.d1bar[k],
                    Fiber::Lap => C64::new(s.lap[k], 0.0),
                });
            }),
        }
    }

    /// `d/dz1 f` (spectral; zero in reduced mode).
    pub fn d1(&self, f: &[C64], at: At) -> Vec<C64> {
        self.fiber_multiplier(f, at, Fiber::D1)
    }

    /// `d/dzbar1 f`.
    pub fn d1bar(&self, f: &[C64], at: At) -> Vec<C64> {
        self.fiber_multiplier(f, at, Fiber::D1bar)
    }

    /// `d1 d1bar f` for real `f`.
    pub fn lap1(&self, f: &[f64], at: At) -> Vec<f64> {
        if self.spectral.is_none() {
            return vec![0.0; self.len()];
        }
        let z = to_complex(f);
        self.fiber_multiplier(&z, at, Fiber::Lap).iter().map(|v| v.re).collect()
    }

    /// `d2 d2bar f = (f_xx + f_yy) / 4` with three-point second differences.
    pub fn lap2(&self, f: &[f64], at: At) -> Vec<f64> {
        let nf = self.nf();
        let ny = self.grid.base_ny;
        let (hx2, hy2) = (self.grid.h_bx().powi(2), self.grid.h_by().powi(2));
        self.per_base(at, 0.0, |b, out| {
            for (fi, o) in out.iter_mut().enumerate() {
                let c = f[b * nf + fi];
                let xx = (f[(b + ny) * nf + fi] - 2.0 * c + f[(b - ny) * nf + fi]) / hx2;
                let yy = (f[(b + 1) * nf + fi] - 2.0 * c + f[(b - 1) * nf + fi]) / hy2;
                *o = 0.25 * (xx + yy);
            }
        })
    }

    /// Mixed complex Hessian `i d dbar f`.
    pub fn ddbar_scalar(&self, f: &RealScalarField, at: At) -> Form11Field {
        let c22 = self.lap2(&f.values, at);
        if self.spectral.is_none() {
            let n = self.len();
            return Form11Field { c11: vec![0.0; n], c12: vec![ZERO; n], c22 };
        }
        let c11 = self.lap1(&f.values, at);
        let z = to_complex(&f.values);
        let c12 = self.d1(&self.d2bar(&z, at), at);
        Form11Field { c11, c12, c22 }
    }

    /// Coefficient of the top form `i d dbar alpha` for a real (1,1)-form.
    pub fn ddbar_form(&self, alpha: &Form11Field, at: At) -> Vec<f64> {
        let a11 = self.lap2(&alpha.c11, at);
        let a22 = self.lap1(&alpha.c22, at);
        if self.spectral.is_none() {
            return a11.iter().zip(a22.iter()).map(|(x, y)| x + y).collect();
        }
        let c21: Vec<C64> = alpha.c12.iter().map(|z| z.conj()).collect();
        let mixed = self.d1(&self.d2bar(&c21, at), at);
        (0..self.len()).map(|p| a11[p] + a22[p] - 2.0 * mixed[p].re).collect()
    }

    /// `d_i g_{j qbar}` at `k = i * 4 + j * 2 + q`.
    fn metric_derivatives(&self, g: &Form11Field, at: At) -> Vec<[C64; 8]> {
        let g11 = to_complex(&g.c11);
        let g22 = to_complex(&g.c22);
        let d1_11 = self.d1(&g11, at);
        let d2_11 = self.d2(&g11, at);
        let d1_22 = self.d1(&g22, at);
        let d2_22 = self.d2(&g22, at);
        let d1_12 = self.d1(&g.c12, at);
        let d2_12 = self.d2(&g.c12, at);
        let d1b_12 = self.d1bar(&g.c12, at);
        let d2b_12 = self.d2bar(&g.c12, at);
        (0..self.len())
            .map(|p| [d1_11[p], d1_12[p], d1b_12[p].conj(), d1_22[p], d2_11[p], d2_12[p], d2b_12[p].conj(), d2_22[p]])
            .collect()
    }

    fn inverse_checked(&self, g: &Form11Field, at: At) -> Result<Vec<Inverse>> {
        let nf = self.nf();
        let mut inv = vec![Inverse { u11: 0.0, u12: ZERO, u22: 0.0 }; self.len()];
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let h = g.get(p);
                let det = h.det();
                if !(det > 0.0) || !det.is_finite() {
                    return Err(Error::SingularMetric { index: p, det });
                }
                inv[p] = h.inverse();
            }
        }
        Ok(inv)
    }

    /// `Gamma^k_{ij} = g^{k qbar} d_i g_{j qbar}`.
    pub fn christoffels(&self, g: &HermitianMetricField, at: At) -> Result<Christoffel> {
        let inv = self.inverse_checked(&g.form, at)?;
        let dg = self.metric_derivatives(&g.form, at);
        let gamma = (0..self.len())
            .map(|p| {
                let mut out = [ZERO; 8];
                for k in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut s = ZERO;
                            for q in 0..2 {
                                s += inv[p].at(k, q) * dg[p][i * 4 + j * 2 + q];
                            }
                            out[k * 4 + i * 2 + j] = s;
                        }
                    }
                }
                out
            })
            .collect();
        Ok(Christoffel { gamma })
    }

    /// `T_{12 lbar} = d_1 g_{2 lbar} - d_2 g_{1 lbar}`.
    pub fn torsion(&self, g: &Form11Field, at: At) -> TorsionField {
        let dg = self.metric_derivatives(g, at);
        let mut t = TorsionField::zeros(self.len());
        for p in 0..self.len() {
            t.t121[p] = dg[p][2] - dg[p][4];
            t.t122[p] = dg[p][3] - dg[p][5];
        }
        t
    }

    /// `d_{mbar} T_{12 kbar}`.
    pub fn dbar_torsion(&self, t: &TorsionField, at: At) -> DbarTorsion {
        let a1 = self.d1bar(&t.t121, at);
        let a2 = self.d2bar(&t.t121, at);
        let b1 = self.d1bar(&t.t122, at);
        let b2 = self.d2bar(&t.t122, at);
        DbarTorsion { comps: (0..self.len()).map(|p| [a1[p], a2[p], b1[p], b2[p]]).collect() }
    }

    /// `log det g` on every known point with positive determinant; errors on
    /// non-positive determinant at the points of `check`.
    fn log_det(&self, g: &Form11Field, check: At) -> Result<Vec<f64>> {
        let nf = self.nf();
        let mask = self.mask(check);
        let mut out = vec![0.0; self.len()];
        for &b in &self.known {
            for fi in 0..nf {
                let p = b * nf + fi;
                let det = g.get(p).det();
                if det > 0.0 && det.is_finite() {
                    out[p] = det.ln();
                } else if mask[b] {
                    return Err(Error::SingularMetric { index: p, det });
                } else {
                    out[p] = f64::NAN;
                }
            }
        }
        Ok(out)
    }

    /// `Ric(g) = -i d dbar log det g`.
    pub fn chern_ricci(&self, g: &HermitianMetricField, at: At) -> Result<Form11Field> {
        let check = if at == At::Interior { At::Stencil } else { At::Known };
        let ld = self.log_det(&g.form, check)?;
        let mut r = self.ddbar_scalar(&RealScalarField { values: ld }, at);
        negate(&mut r);
        Ok(r)
    }

    /// `R = g^{k lbar} R_{k lbar}`.
    pub fn chern_scalar(&self, g: &HermitianMetricField, at: At) -> Result<RealScalarField> {
        let ric = self.chern_ricci(g, at)?;
        self.trace_form(g, &ric, at)
    }

    /// `tr_g a` on the points of `at`.
    pub fn trace_form(&self, g: &HermitianMetricField, a: &Form11Field, at: At) -> Result<RealScalarField> {
        let nf = self.nf();
        let mut out = vec![0.0; self.len()];
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let h = g.get(p);
                if !(h.det() > 0.0) {
                    return Err(Error::SingularMetric { index: p, det: h.det() });
                }
                out[p] = algebra::trace(&h, &a.get(p));
            }
        }
        Ok(RealScalarField { values: out })
    }

    /// Pointwise wedge of two (1,1)-forms.
    pub fn wedge(&self, a: &Form11Field, b: &Form11Field) -> TopFormField {
        TopFormField { coeff: (0..a.len()).map(|p| algebra::wedge(&a.get(p), &b.get(p))).collect() }
    }

    /// Complex Laplacian `g^{i jbar} d_i d_jbar f`.
    pub fn laplacian(&self, g: &HermitianMetricField, f: &RealScalarField, at: At) -> Result<RealScalarField> {
        let h = self.ddbar_scalar(f, at);
        self.trace_form(g, &h, at)
    }

    /// `(d_1 f, d_2 f)` for real `f`.
    pub fn gradient(&self, f: &[f64], at: At) -> (Vec<C64>, Vec<C64>) {
        let z = to_complex(f);
        (self.d1(&z, at), self.d2(&z, at))
    }

    /// `|grad f|^2_g = g^{i jbar} d_i f conj(d_j f)`.
    pub fn grad_norm_sq(&self, g: &HermitianMetricField, f: &RealScalarField, at: At) -> Result<RealScalarField> {
        let inv = self.inverse_checked(&g.form, at)?;
        let (a, c) = self.gradient(&f.values, at);
        let nf = self.nf();
        let mut out = vec![0.0; self.len()];
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let d = [a[p], c[p]];
                let mut s = ZERO;
                for i in 0..2 {
                    for j in 0..2 {
                        s += inv[p].at(i, j) * d[i] * d[j].conj();
                    }
                }
                out[p] = s.re;
            }
        }
        Ok(RealScalarField { values: out })
    }

    /// `|T|^2_g = g^{i jbar} g^{k lbar} g^{p qbar} T_{ik qbar} conj(T_{jl pbar})`.
    pub fn torsion_norm_sq(&self, t: &TorsionField, g: &Form11Field, at: At) -> Result<RealScalarField> {
        let inv = self.inverse_checked(g, at)?;
        let nf = self.nf();
        let mut out = vec![0.0; self.len()];
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                out[p] = torsion_contraction(&inv[p], |i, k, q| t.component(p, i, k, q));
            }
        }
        Ok(RealScalarField { values: out })
    }

    /// `|dbar T|^2_g` with one more inverse-metric contraction on the new barred index.
    pub fn dbar_torsion_norm_sq(&self, dt: &DbarTorsion, g: &Form11Field, at: At) -> Result<RealScalarField> {
        let inv = self.inverse_checked(g, at)?;
        let nf = self.nf();
        let mut out = vec![0.0; self.len()];
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let u = &inv[p];
                let comp = |i: usize, k: usize, q: usize, m: usize| -> C64 {
                    let base = dt.comps[p][q * 2 + m];
                    match (i, k) {
                        (0, 1) => base,
                        (1, 0) => -base,
                        _ => ZERO,
                    }
                };
                let mut s = ZERO;
                for (i, j, k, l) in quad() {
                    let ul = u.at(i, j) * u.at(k, l);
                    if ul == ZERO {
                        continue;
                    }
                    for (pp, q, n, m) in quad() {
                        s += ul * u.at(pp, q) * u.at(n, m) * comp(i, k, q, m) * comp(j, l, pp, n).conj();
                    }
                }
                out[p] = s.re;
            }
        }
        Ok(RealScalarField { values: out })
    }

    /// `|Psi|^2_g = g^{i abar} g^{j bbar} g_{k cbar} Psi^k_{ij} conj(Psi^c_{ab})`
    /// for a difference of connections `Psi`.
    pub fn connection_norm_sq(&self, psi: &Christoffel, g: &Form11Field, at: At) -> Result<RealScalarField> {
        let inv = self.inverse_checked(g, at)?;
        let nf = self.nf();
        let mut out = vec![0.0; self.len()];
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let h = g.get(p);
                let u = &inv[p];
                let mut s = ZERO;
                for (i, a, j, bb) in quad() {
                    let w = u.at(i, a) * u.at(j, bb);
                    for k in 0..2 {
                        for c in 0..2 {
                            s += w * h.at(k, c) * psi.get(p, k, i, j) * psi.get(p, c, a, bb).conj();
                        }
                    }
                }
                out[p] = s.re;
            }
        }
        Ok(RealScalarField { values: out })
    }

    /// Pinching lemma over the points of `at`; returns whether every point
    /// passes and the extreme exact eigenvalues.
    pub fn pinch_check_field(
        &self,
        g: &Form11Field,
        g_ref: &Form11Field,
        eps: f64,
        at: At,
    ) -> Result<(bool, PinchResult)> {
        let nf = self.nf();
        let mut all = true;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut last = None;
        for &b in self.points(at) {
            for fi in 0..nf {
                let p = b * nf + fi;
                let r = pinch_check(&g.get(p), &g_ref.get(p), eps)?;
                all &= r.pass();
                lo = lo.min(r.eigenvalues.0);
                hi = hi.max(r.eigenvalues.1);
                last = Some(r);
            }
        }
        let mut r = last.ok_or_else(|| Error::InsufficientData("no points to check".into()))?;
        r.eigenvalues = (lo, hi);
        r.trace_ref_ok = all;
        r.trace_metric_ok = all;
        Ok((all, r))
    }

    /// Maximum over the fiber points of the base points in `at`.
    pub fn max(&self, v: &[f64], at: At) -> f64 {
        self.fold(v, at, f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self, v: &[f64], at: At) -> f64 {
        self.fold(v, at, f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self, v: &[f64], at: At) -> f64 {
        self.fold(v, at, 0.0, |m, x| m.max(x.abs()))
    }

    fn fold(&self, v: &[f64], at: At, init: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let nf = self.nf();
        let mut acc = init;
        for &b in self.points(at) {
            for fi in 0..nf {
                acc = f(acc, v[b * nf + fi]);
            }
        }
        acc
    }

    /// Midpoint quadrature of a top-form coefficient over the interior.
    pub fn integrate(&self, coeff: &[f64]) -> f64 {
        let nf = self.nf();
        let mut s = 0.0;
        for &b in &self.interior {
            for fi in 0..nf {
                s += coeff[b * nf + fi];
            }
        }
        s * self.grid.cell_volume()
    }
}

#[derive(Clone, Copy)]
enum Fiber {
    D1,
    D1bar,
    Lap,
}

fn quad() -> impl Iterator<Item = (usize, usize, usize, usize)> {
    (0..16).map(|n| (n >> 3 & 1, n >> 2 & 1, n >> 1 & 1, n & 1))
}

fn torsion_contraction(u: &Inverse, t: impl Fn(usize, usize, usize) -> C64) -> f64 {
    let mut s = ZERO;
    for (i, j, k, l) in quad() {
        let w = u.at(i, j) * u.at(k, l);
        for pp in 0..2 {
            for q in 0..2 {
                s += w * u.at(pp, q) * t(i, k, q) * t(j, l, pp).conj();
            }
        }
    }
    s.re
}

pub fn to_complex(f: &[f64]) -> Vec<C64> {
    f.iter().map(|&x| C64::new(x, 0.0)).collect()
}

pub fn negate(f: &mut Form11Field) {
    for p in 0..f.len() {
        f.c11[p] = -f.c11[p];
        f.c12[p] = -f.c12[p];
        f.c22[p] = -f.c22[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn fill(k: &Kernel, f: impl Fn(f64, f64, f64, f64) -> f64) -> RealScalarField {
        let nf = k.nf();
        let mut v = vec![0.0; k.len()];
        for b in 0..k.grid.base_len() {
            let (x, y) = k.grid.base_coord(b);
            for fi in 0..nf {
                let (x1, y1) = k.grid.fiber_coord(fi);
                v[b * nf + fi] = f(x1, y1, x, y);
            }
        }
        RealScalarField { values: v }
    }

    fn metric(k: &Kernel, f: impl Fn(f64, f64, f64, f64) -> Herm) -> HermitianMetricField {
        let nf = k.nf();
        let mut m = Form11Field::zeros(k.len());
        for b in 0..k.grid.base_len() {
            let (x, y) = k.grid.base_coord(b);
            for fi in 0..nf {
                let (x1, y1) = k.grid.fiber_coord(fi);
                m.set(b * nf + fi, f(x1, y1, x, y));
            }
        }
        HermitianMetricField { form: m, admissible: true }
    }

    fn max_err(k: &Kernel, a: &[f64], f: impl Fn(usize) -> f64) -> f64 {
        let nf = k.nf();
        let mut e = 0.0f64;
        for &b in &k.interior {
            for fi in 0..nf {
                let p = b * nf + fi;
                e = e.max((a[p] - f(p)).abs());
            }
        }
        e
    }

    /// Max error restricted to the fixed square `|x|, |y| <= 0.3`, so that
    /// refinement studies compare the same region.
    fn max_err_fixed(k: &Kernel, a: &[f64], f: impl Fn(usize) -> f64) -> f64 {
        let nf = k.nf();
        let mut e = 0.0f64;
        for &b in &k.interior {
            let (x, y) = k.grid.base_coord(b);
            if x.abs() > 0.3 + 1e-12 || y.abs() > 0.3 + 1e-12 {
                continue;
            }
            for fi in 0..nf {
                let p = b * nf + fi;
                e = e.max((a[p] - f(p)).abs());
            }
        }
        e
    }

    fn coords(k: &Kernel, p: usize) -> (f64, f64, f64, f64) {
        let nf = k.nf();
        let (x, y) = k.grid.base_coord(p / nf);
        let (x1, y1) = k.grid.fiber_coord(p % nf);
        (x1, y1, x, y)
    }

    #[test]
    fn ddbar_quadratic_examples() {
        let k = Kernel::boxed(GridSpec::full(17, 0.5, 12)).unwrap();
        let h = k.ddbar_scalar(&fill(&k, |_, _, x, y| x * x + y * y), At::Interior);
        assert!(max_err(&k, &h.c22, |_| 1.0) < 1e-12);
        assert!(max_err(&k, &h.c11, |_| 0.0) < 1e-12);
        let h = k.ddbar_scalar(&fill(&k, |_, _, x, y| x * x - y * y), At::Interior);
        assert!(max_err(&k, &h.c22, |_| 0.0) < 1e-12);
        // Periodic stand-in for |z1|^2 on the fiber: d1 d1bar cos(2 pi x1) = -pi^2 cos(2 pi x1).
        let h = k.ddbar_scalar(&fill(&k, |x1, _, _, _| (2.0 * PI * x1).cos()), At::Interior);
        assert!(max_err(&k, &h.c11, |p| -PI * PI * (2.0 * PI * coords(&k, p).0).cos()) < 1e-11);
        assert!(h.c12.iter().all(|z| z.norm() < 1e-12));
    }

    fn gaussian_errors(n: usize) -> (f64, f64) {
        let k = Kernel::boxed(GridSpec::full(n, 0.6, 10)).unwrap();
        let g = |x: f64, y: f64| (-(x * x + y * y) / 0.1).exp();
        let f = fill(&k, |x1, _, x, y| (2.0 * PI * x1).sin() * g(x, y));
        let h = k.ddbar_scalar(&f, At::Interior);
        // d2 dbar2 of sin * G = sin * (G_xx + G_yy) / 4
        let e22 = max_err(&k, &h.c22, |p| {
            let (x1, _, x, y) = coords(&k, p);
            let r2 = x * x + y * y;
            (2.0 * PI * x1).sin() * g(x, y) * (4.0 * r2 / 0.01 - 4.0 / 0.1) / 4.0
        });
        // d1 dbar2 = pi cos(2 pi x1) * (G_x + i G_y) / 2
        let mut e12 = 0.0f64;
        for &b in &k.interior {
            for fi in 0..k.nf() {
                let p = b * k.nf() + fi;
                let (x1, _, x, y) = coords(&k, p);
                let gx = -2.0 * x / 0.1 * g(x, y);
                let gy = -2.0 * y / 0.1 * g(x, y);
                let want = C64::new(gx, gy) * (0.5 * PI * (2.0 * PI * x1).cos());
                e12 = e12.max((h.c12[p] - want).norm());
            }
        }
        (e22, e12)
    }

    #[test]
    fn ddbar_second_order() {
        let (a22, a12) = gaussian_errors(33);
        let (b22, b12) = gaussian_errors(65);
        let o22 = (a22 / b22).log2();
        let o12 = (a12 / b12).log2();
        assert!((1.8..=2.2).contains(&o22), "order {o22}");
        assert!((1.8..=2.2).contains(&o12), "order {o12}");
    }

    fn hyperbolic(k: &Kernel, scale: f64) -> HermitianMetricField {
        metric(k, |_, _, x, y| Herm::diag(scale, scale * 2.0 / (1.0 - x * x - y * y).powi(2)))
    }

    #[test]
    fn christoffel_examples() {
        let k = Kernel::boxed(GridSpec::reduced(33, 0.5)).unwrap();
        let flat = metric(&k, |_, _, _, _| Herm::IDENTITY);
        let c = k.christoffels(&flat, At::Interior).unwrap();
        assert!(c.gamma.iter().all(|g| g.iter().all(|z| z.norm() == 0.0)));
        let err = |n: usize| {
            let k = Kernel::boxed(GridSpec::reduced(n, 0.6)).unwrap();
            let c = k.christoffels(&hyperbolic(&k, 1.0), At::Interior).unwrap();
            let c2 = k.christoffels(&hyperbolic(&k, 3.7), At::Interior).unwrap();
            let mut e = 0.0f64;
            for &b in &k.interior {
                let (x, y) = k.grid.base_coord(b);
                let want = C64::new(x, -y) * (2.0 / (1.0 - x * x - y * y));
                if x.abs() > 0.3 + 1e-12 || y.abs() > 0.3 + 1e-12 {
                    continue;
                }
                e = e.max((c.get(b, 1, 1, 1) - want).norm());
                for m in 0..8 {
                    assert!((c.gamma[b][m] - c2.gamma[b][m]).norm() < 1e-12);
                }
            }
            e
        };
        let (e1, e2) = (err(33), err(65));
        assert!(e2 < 5e-3 && (e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn torsion_examples() {
        let k = Kernel::boxed(GridSpec::full(17, 0.5, 10)).unwrap();
        let g = metric(&k, |_, _, x, _| Herm::diag(1.0 + 0.1 * x, 1.0));
        let t = k.torsion(&g.form, At::Interior);
        for &b in &k.interior {
            for fi in 0..k.nf() {
                let p = b * k.nf() + fi;
                assert!((t.t121[p] - C64::new(-0.05, 0.0)).norm() < 1e-12);
                assert!(t.t122[p].norm() < 1e-12);
                assert_eq!(t.component(p, 0, 0, 1), C64::new(0.0, 0.0));
            }
        }
        // Kaehler data from a base potential.
        let psi = fill(&k, |_, _, x, y| 0.1 * (-(x * x + y * y) / 0.05).exp());
        let mut form = k.ddbar_scalar(&psi, At::Stencil);
        for p in 0..form.len() {
            form.c11[p] += 1.0;
            form.c22[p] += 2.0;
        }
        let t = k.torsion(&form, At::Interior);
        assert!(t.t121.iter().chain(t.t122.iter()).all(|z| z.norm() <= 1e-8));
    }

    #[test]
    fn torsion_norm_examples() {
        let k = Kernel::boxed(GridSpec::reduced(9, 0.5)).unwrap();
        let mut t = TorsionField::zeros(k.len());
        let c = C64::new(0.3, -0.4);
        t.t122.iter_mut().for_each(|z| *z = c);
        let id = metric(&k, |_, _, _, _| Herm::IDENTITY);
        let n = k.torsion_norm_sq(&t, &id.form, At::Interior).unwrap();
        assert!(max_err(&k, &n.values, |_| 2.0 * c.norm_sqr()) < 1e-14);
        let zero = k.torsion_norm_sq(&TorsionField::zeros(k.len()), &id.form, At::Interior).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        // g -> c g maps |T|^2 -> |T|^2 / c.
        let k = Kernel::boxed(GridSpec::reduced(17, 0.5)).unwrap();
        let g = metric(&k, |_, _, x, y| Herm::new(1.0 + 0.2 * y, C64::new(0.1 * x, 0.05), 2.0 + x * x));
        let g3 = metric(&k, |_, _, x, y| Herm::new(1.0 + 0.2 * y, C64::new(0.1 * x, 0.05), 2.0 + x * x).scale(3.0));
        let n1 = k.torsion_norm_sq(&k.torsion(&g.form, At::Interior), &g.form, At::Interior).unwrap();
        let n3 = k.torsion_norm_sq(&k.torsion(&g3.form, At::Interior), &g3.form, At::Interior).unwrap();
        assert!(max_err(&k, &n3.values, |p| n1.values[p] / 3.0) < 1e-12);
    }

    #[test]
    fn ricci_examples() {
        let k = Kernel::boxed(GridSpec::reduced(17, 0.5)).unwrap();
        let flat = metric(&k, |_, _, _, _| Herm::diag(2.0, 3.0));
        let r = k.chern_ricci(&flat, At::Interior).unwrap();
        assert!(max_err(&k, &r.c22, |_| 0.0) < 1e-12);
        let g = metric(&k, |_, _, x, y| Herm::diag(1.0, (x * x + y * y).exp()));
        let r = k.chern_ricci(&g, At::Interior).unwrap();
        assert!(max_err(&k, &r.c22, |_| -1.0) < 1e-10);
        let s = k.chern_scalar(&flat, At::Interior).unwrap();
        assert!(max_err(&k, &s.values, |_| 0.0) < 1e-12);
    }

    #[test]
    fn hyperbolic_einstein_second_order() {
        let err = |n: usize| {
            let k = Kernel::boxed(GridSpec::reduced(n, 0.6)).unwrap();
            let g = hyperbolic(&k, 1.0);
            let r = k.chern_ricci(&g, At::Interior).unwrap();
            let rs = k.chern_scalar(&g, At::Interior).unwrap();
            let e = max_err_fixed(&k, &r.c22, |p| -g.form.c22[p]);
            let es = max_err_fixed(&k, &rs.values, |_| -1.0);
            (e, es)
        };
        let (a, sa) = err(33);
        let (b, sb) = err(65);
        assert!((1.8..=2.2).contains(&(a / b).log2()), "{a} {b} {sa} {sb}");
        assert!((1.8..=2.2).contains(&(sa / sb).log2()));
        // R(c g) = R(g) / c
        let k = Kernel::boxed(GridSpec::reduced(33, 0.6)).unwrap();
        let r1 = k.chern_scalar(&hyperbolic(&k, 1.0), At::Interior).unwrap();
        let r4 = k.chern_scalar(&hyperbolic(&k, 4.0), At::Interior).unwrap();
        assert!(max_err(&k, &r4.values, |p| r1.values[p] / 4.0) < 1e-12);
    }

    #[test]
    fn laplacian_and_gradient_examples() {
        let k = Kernel::boxed(GridSpec::reduced(17, 0.5)).unwrap();
        let id = metric(&k, |_, _, _, _| Herm::IDENTITY);
        let two = metric(&k, |_, _, _, _| Herm::diag(2.0, 2.0));
        let r2 = fill(&k, |_, _, x, y| x * x + y * y);
        let l = k.laplacian(&id, &r2, At::Interior).unwrap();
        assert!(max_err(&k, &l.values, |_| 1.0) < 1e-12);
        let c = fill(&k, |_, _, _, _| 3.0);
        assert!(max_err(&k, &k.laplacian(&id, &c, At::Interior).unwrap().values, |_| 0.0) < 1e-12);
        let f = fill(&k, |_, _, x, y| (x * 3.0).sin() * y);
        let l1 = k.laplacian(&id, &f, At::Interior).unwrap();
        let l2 = k.laplacian(&two, &f, At::Interior).unwrap();
        assert!(max_err(&k, &l2.values, |p| 0.5 * l1.values[p]) < 1e-12);
        let x = fill(&k, |_, _, x, _| x);
        let gn = k.grad_norm_sq(&id, &x, At::Interior).unwrap();
        assert!(max_err(&k, &gn.values, |_| 0.25) < 1e-12);
        assert!(max_err(&k, &k.grad_norm_sq(&id, &c, At::Interior).unwrap().values, |_| 0.0) < 1e-15);
        let g2 = k.grad_norm_sq(&two, &f, At::Interior).unwrap();
        let g1 = k.grad_norm_sq(&id, &f, At::Interior).unwrap();
        assert!(max_err(&k, &g2.values, |p| 0.5 * g1.values[p]) < 1e-12);
    }

    #[test]
    fn trace_examples() {
        let k = Kernel::boxed(GridSpec::reduced(9, 0.5)).unwrap();
        let g = metric(&k, |_, _, x, y| Herm::new(1.0 + x * x, C64::new(0.1 * y, 0.2 * x), 2.0));
        let t = k.trace_form(&g, &g.form, At::Interior).unwrap();
        assert!(max_err(&k, &t.values, |_| 2.0) < 1e-14);
        let d = metric(&k, |_, _, _, _| Herm::diag(2.0, 1.0));
        let id = metric(&k, |_, _, _, _| Herm::IDENTITY);
        let t = k.trace_form(&d, &id.form, At::Interior).unwrap();
        assert!(max_err(&k, &t.values, |_| 1.5) < 1e-15);
        let w = k.wedge(&d.form, &d.form);
        assert!(w.coeff.iter().all(|v| (*v - 4.0).abs() < 1e-15));
    }

    #[test]
    fn ddbar_form_of_closed_forms_vanishes() {
        let k = Kernel::boxed(GridSpec::reduced(17, 0.5)).unwrap();
        let g = metric(&k, |_, _, x, y| Herm::diag(1.0, 2.0 / (1.0 - x * x - y * y).powi(2)));
        let d = k.ddbar_form(&g.form, At::Interior);
        assert!(max_err(&k, &d, |_| 0.0) < 1e-12);
        let g = metric(&k, |_, _, x, y| Herm::diag(1.0 + x * x + y * y, 1.0));
        let d = k.ddbar_form(&g.form, At::Interior);
        assert!(max_err(&k, &d, |_| 1.0) < 1e-12);
    }

    #[test]
    fn pinch_examples() {
        let r = pinch_check(&Herm::IDENTITY, &Herm::IDENTITY, 0.0).unwrap();
        assert!(r.pass() && r.eigenvalues == (1.0, 1.0));
        let r = pinch_check(&Herm::diag(1.05, 0.95), &Herm::IDENTITY, 0.01).unwrap();
        assert!(r.pass());
        assert!((r.certified.0 - 0.8).abs() < 1e-15 && (r.certified.1 - 1.2).abs() < 1e-15);
        let r = pinch_check(&Herm::diag(1.3, 0.8), &Herm::IDENTITY, 0.01).unwrap();
        assert!(!r.trace_ref_ok && !r.pass());
        assert!(matches!(pinch_check(&Herm::IDENTITY, &Herm::IDENTITY, 0.05), Err(Error::OutOfRegime(_))));
    }

    fn herm() -> impl Strategy<Value = Herm> {
        (0.2f64..4.0, -1.0f64..1.0, -1.0f64..1.0, 0.2f64..4.0).prop_map(|(a, x, y, d)| {
            let lim = 0.95 * (a * d).sqrt();
            let b = C64::new(x, y);
            let b = if b.norm() > lim { b * (lim / b.norm()) } else { b };
            Herm::new(a, b, d)
        })
    }

    proptest! {
        #[test]
        fn pinch_certification_is_sound(r in herm(), t in 0.0f64..0.3, m in herm()) {
            // g = r + t * m, a perturbation of r
            let g = r.add(&m.scale(t * 0.1));
            let e1 = algebra::trace(&r, &g) - 2.0;
            let e2 = algebra::trace(&g, &r) - 2.0;
            let eps = e1.max(e2).max(0.0);
            if eps < 0.05 {
                let res = pinch_check(&g, &r, eps).unwrap();
                prop_assert!(res.trace_ref_ok && res.trace_metric_ok);
                prop_assert!(res.eigenvalues.0 >= res.certified.0 - 1e-12);
                prop_assert!(res.eigenvalues.1 <= res.certified.1 + 1e-12);
            }
        }
    }
}
