//! Field containers over the product grid. Values are stored for every grid
//! point of the box (index `base * fiber_len + fiber`); only the points a
//! consumer declares active carry meaningful data.

use num_complex::Complex64 as C64;

use crate::algebra::Herm;

#[derive(Clone, Debug, PartialEq)]
pub struct RealScalarField {
    pub values: Vec<f64>,
}

/// The Monge-Ampere unknown.
pub type PotentialField = RealScalarField;

impl RealScalarField {
    pub fn zeros(n: usize) -> Self {
        RealScalarField { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Form11Field {
    pub c11: Vec<f64>,
    pub c12: Vec<C64>,
    pub c22: Vec<f64>,
}

impl Form11Field {
    pub fn zeros(n: usize) -> Self {
        Form11Field { c11: vec![0.0; n], c12: vec![C64::new(0.0, 0.0); n], c22: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.c11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c11.is_empty()
    }

    pub fn get(&self, i: usize) -> Herm {
        Herm { c11: self.c11[i], c12: self.c12[i], c22: self.c22[i] }
    }

    pub fn set(&mut self, i: usize, h: Herm) {
        self.c11[i] = h.c11;
        self.c12[i] = h.c12;
        self.c22[i] = h.c22;
    }

    /// `self += s * other` pointwise.
    pub fn add_scaled(&mut self, s: f64, other: &Form11Field) {
        for i in 0..self.len() {
            self.c11[i] += s * other.c11[i];
            self.c12[i] += other.c12[i] * s;
            self.c22[i] += s * other.c22[i];
        }
    }

    /// `a * x + b * y` pointwise.
    pub fn combine(a: f64, x: &Form11Field, b: f64, y: &Form11Field) -> Form11Field {
        let mut out = x.clone();
        for i in 0..out.len() {
            out.c11[i] = a * x.c11[i] + b * y.c11[i];
            out.c12[i] = x.c12[i] * a + y.c12[i] * b;
            out.c22[i] = a * x.c22[i] + b * y.c22[i];
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMetricField {
    pub form: Form11Field,
    /// Set once positive-definiteness has been verified on the active points.
    pub admissible: bool,
}

impl HermitianMetricField {
    pub fn unchecked(form: Form11Field) -> Self {
        HermitianMetricField { form, admissible: false }
    }

    pub fn get(&self, i: usize) -> Herm {
        self.form.get(i)
    }

    /// Checks `c11 > 0`, `c22 > 0`, `det > 0` on `points` (expanded over the fiber).
    pub fn check_admissible(&mut self, points: &[usize], fiber_len: usize) -> bool {
        let ok = points.iter().all(|&b| (0..fiber_len).all(|f| self.form.get(b * fiber_len + f).is_positive()));
        self.admissible = ok;
        ok
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopFormField {
    pub coeff: Vec<f64>,
}

/// Lowered torsion `T_{12 kbar}` for `k = 1, 2`; `T_{21 kbar} = -T_{12 kbar}`
/// and `T_{ii kbar} = 0` are implied.
#[derive(Clone, Debug, PartialEq)]
pub struct TorsionField {
    pub t121: Vec<C64>,
    pub t122: Vec<C64>,
}

impl TorsionField {
    pub fn zeros(n: usize) -> Self {
        TorsionField { t121: vec![C64::new(0.0, 0.0); n], t122: vec![C64::new(0.0, 0.0); n] }
    }

    /// `T_{i j kbar}` with 0-based indices.
    pub fn component(&self, p: usize, i: usize, j: usize, k: usize) -> C64 {
        let base = if k == 0 { self.t121[p] } else { self.t122[p] };
        match (i, j) {
            (0, 1) => base,
            (1, 0) => -base,
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn scaled(&self, s: f64) -> TorsionField {
        TorsionField {
            t121: self.t121.iter().map(|z| z * s).collect(),
            t122: self.t122.iter().map(|z| z * s).collect(),
        }
    }
}
