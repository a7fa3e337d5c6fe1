//! Pointwise algebra of 2x2 Hermitian coefficient blocks `c_{i jbar}`.

use num_complex::Complex64 as C64;

/// Coefficients of `i c_{i jbar} dz^i ^ dzbar^j` at one point; `c21 = conj(c12)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Herm {
    pub c11: f64,
    pub c12: C64,
    pub c22: f64,
}

impl Herm {
    pub const ZERO: Herm = Herm { c11: 0.0, c12: C64 { re: 0.0, im: 0.0 }, c22: 0.0 };
    pub const IDENTITY: Herm = Herm { c11: 1.0, c12: C64 { re: 0.0, im: 0.0 }, c22: 1.0 };

    pub fn new(c11: f64, c12: C64, c22: f64) -> Self {
        Herm { c11, c12, c22 }
    }

    pub fn diag(c11: f64, c22: f64) -> Self {
        Herm { c11, c12: C64::new(0.0, 0.0), c22 }
    }

    pub fn det(&self) -> f64 {
        self.c11 * self.c22 - self.c12.norm_sqr()
    }

    /// Lower-index component `g_{i jbar}` with 0-based indices.
    pub fn at(&self, i: usize, j: usize) -> C64 {
        match (i, j) {
            (0, 0) => C64::new(self.c11, 0.0),
            (0, 1) => self.c12,
            (1, 0) => self.c12.conj(),
            _ => C64::new(self.c22, 0.0),
        }
    }

    /// Inverse components `g^{i jbar}`, defined by `g^{i jbar} g_{k jbar} = delta^i_k`.
    pub fn inverse(&self) -> Inverse {
        let det = self.det();
        Inverse { u11: self.c22 / det, u12: -self.c12.conj() / det, u22: self.c11 / det }
    }

    pub fn scale(&self, s: f64) -> Herm {
        Herm { c11: self.c11 * s, c12: self.c12 * s, c22: self.c22 * s }
    }

    pub fn add(&self, o: &Herm) -> Herm {
        Herm { c11: self.c11 + o.c11, c12: self.c12 + o.c12, c22: self.c22 + o.c22 }
    }

    pub fn sub(&self, o: &Herm) -> Herm {
        Herm { c11: self.c11 - o.c11, c12: self.c12 - o.c12, c22: self.c22 - o.c22 }
    }

    pub fn is_positive(&self) -> bool {
        self.c11 > 0.0 && self.c22 > 0.0 && self.det() > 0.0
    }
}

/// Inverse metric `g^{i jbar}`; `u21 = conj(u12)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inverse {
    pub u11: f64,
    pub u12: C64,
    pub u22: f64,
}

impl Inverse {
    pub fn at(&self, i: usize, j: usize) -> C64 {
        match (i, j) {
            (0, 0) => C64::new(self.u11, 0.0),
            (0, 1) => self.u12,
            (1, 0) => self.u12.conj(),
            _ => C64::new(self.u22, 0.0),
        }
    }
}

/// Coefficient of `a ^ b` relative to `(i dz1^dzbar1)^(i dz2^dzbar2)`.
pub fn wedge(a: &Herm, b: &Herm) -> f64 {
    a.c11 * b.c22 + a.c22 * b.c11 - 2.0 * (a.c12 * b.c12.conj()).re
}

/// `tr_g a = g^{i jbar} a_{i jbar}`.
pub fn trace(g: &Herm, a: &Herm) -> f64 {
    wedge(g, a) / g.det()
}

/// Generalized eigenvalues of `g` relative to `r`, ascending.
pub fn relative_eigenvalues(g: &Herm, r: &Herm) -> (f64, f64) {
    let a = r.det();
    let w = wedge(g, r);
    let c = g.det();
    let disc = (w * w - 4.0 * a * c).max(0.0).sqrt();
    // Stable quadratic roots: avoid cancellation in the smaller root.
    let big = (w + disc) / (2.0 * a);
    let small = if big != 0.0 { c / (a * big) } else { (w - disc) / (2.0 * a) };
    (small.min(big), small.max(big))
}

/// Largest absolute generalized eigenvalue of the Hermitian form `a` relative
/// to the positive metric `r`: the `r`-operator norm of `a`.
pub fn operator_norm(a: &Herm, r: &Herm) -> f64 {
    let det_r = r.det();
    let w = wedge(a, r);
    let c = a.det();
    let disc = (w * w - 4.0 * det_r * c).max(0.0).sqrt();
    let l1 = (w + disc) / (2.0 * det_r);
    let l2 = (w - disc) / (2.0 * det_r);
    l1.abs().max(l2.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wedge_examples() {
        assert_eq!(wedge(&Herm::IDENTITY, &Herm::IDENTITY), 2.0);
        let d = Herm::diag(2.0, 3.0);
        assert_eq!(wedge(&d, &d), 12.0);
        let s = Herm::diag(0.0, 2.0);
        assert_eq!(wedge(&s, &s), 0.0);
    }

    #[test]
    fn trace_examples() {
        assert!((trace(&Herm::diag(2.0, 1.0), &Herm::IDENTITY) - 1.5).abs() < 1e-15);
        let g = Herm::new(1.3, C64::new(0.2, -0.1), 0.7);
        assert!((trace(&g, &g) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_contracts_to_identity() {
        let g = Herm::new(1.3, C64::new(0.2, -0.4), 2.1);
        let u = g.inverse();
        for i in 0..2 {
            for k in 0..2 {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..2 {
                    s += u.at(i, j) * g.at(k, j);
                }
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((s - want).norm() < 1e-14);
            }
        }
    }

    fn herm() -> impl Strategy<Value = Herm> {
        (0.1f64..5.0, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..5.0).prop_map(|(a, x, y, d)| {
            let lim = 0.9 * (a * d).sqrt();
            let b = C64::new(x, y);
            let b = if b.norm() > lim { b * (lim / b.norm()) } else { b };
            Herm::new(a, b, d)
        })
    }

    proptest! {
        #[test]
        fn trace_wedge_identity(g in herm(), a11 in -3.0f64..3.0, re in -2.0f64..2.0, im in -2.0f64..2.0, a22 in -3.0f64..3.0) {
            let a = Herm::new(a11, C64::new(re, im), a22);
            let lhs = trace(&g, &a) * 2.0 * g.det();
            let rhs = 2.0 * wedge(&a, &g);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn volume_form_trace_identity(g in herm(), r in herm()) {
            // tr_g r = (r^2 / g^2) tr_r g
            let lhs = trace(&g, &r);
            let rhs = r.det() / g.det() * trace(&r, &g);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn relative_eigenvalues_match_traces(g in herm(), r in herm()) {
            let (l1, l2) = relative_eigenvalues(&g, &r);
            prop_assert!(l1 > 0.0 && l1 <= l2);
            prop_assert!((l1 + l2 - trace(&r, &g)).abs() <= 1e-9 * (1.0 + l2));
            prop_assert!((1.0 / l1 + 1.0 / l2 - trace(&g, &r)).abs() <= 1e-9 * (1.0 + 1.0 / l1));
        }
    }
}
