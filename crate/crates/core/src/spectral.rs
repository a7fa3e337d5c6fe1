//! Fourier multipliers on the periodic fiber grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

/// Signed wave number for FFT index `p` of an `n`-point transform. The
/// Nyquist mode of an even transform maps to 0 so that all derivative
/// multipliers are compositions of the same first-order symbols.
fn wave_number(p: usize, n: usize) -> f64 {
    if 2 * p < n {
        p as f64
    } else if 2 * p == n {
        0.0
    } else {
        p as f64 - n as f64
    }
}

pub struct FiberSpectral {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    /// Symbol of `d/dz1 = (d/dx1 - i d/dy1) / 2`.
    pub d1: Vec<C64>,
    /// Symbol of `d/dzbar1`.
    pub d1bar: Vec<C64>,
    /// Symbol of `d1 d1bar` (real, non-positive).
    pub lap: Vec<f64>,
}

impl std::fmt::Debug for FiberSpectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiberSpectral").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

impl FiberSpectral {
    pub fn new(nx: usize, ny: usize, period_y: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(nx);
        let inv_x = planner.plan_fft_inverse(nx);
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_y = planner.plan_fft_inverse(ny);
        let mut d1 = Vec::with_capacity(nx * ny);
        let mut d1bar = Vec::with_capacity(nx * ny);
        let mut lap = Vec::with_capacity(nx * ny);
        for p in 0..nx {
            let kx = 2.0 * PI * wave_number(p, nx);
            for q in 0..ny {
                let ky = 2.0 * PI * wave_number(q, ny) / period_y;
                let a = C64::new(0.5 * ky, 0.5 * kx);
                let b = C64::new(-0.5 * ky, 0.5 * kx);
                d1.push(a);
                d1bar.push(b);
                lap.push((a * b).re);
            }
        }
        FiberSpectral { nx, ny, fwd_x, inv_x, fwd_y, inv_y, d1, d1bar, lap }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest magnitude of the `d1 d1bar` symbol.
    pub fn lap_radius(&self) -> f64 {
        self.lap.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest magnitude of the `d1` symbol.
    pub fn d1_radius(&self) -> f64 {
        self.d1.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    fn transform(&self, data: &mut [C64], forward: bool, tmp: &mut Vec<C64>) {
        let (fy, fx) = if forward { (&self.fwd_y, &self.fwd_x) } else { (&self.inv_y, &self.inv_x) };
        fy.process(data);
        tmp.clear();
        tmp.resize(data.len(), C64::new(0.0, 0.0));
        for p in 0..self.nx {
            for q in 0..self.ny {
                tmp[q * self.nx + p] = data[p * self.ny + q];
            }
        }
        fx.process(tmp);
        for p in 0..self.nx {
            for q in 0..self.ny {
                data[p * self.ny + q] = tmp[q * self.nx + p];
            }
        }
    }

    pub fn forward(&self, data: &mut [C64], tmp: &mut Vec<C64>) {
        self.transform(data, true, tmp);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [C64], tmp: &mut Vec<C64>) {
        self.transform(data, false, tmp);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    /// Applies the multiplier `m(k)` to one fiber's samples in place.
    pub fn apply<F: Fn(usize) -> C64>(&self, data: &mut [C64], tmp: &mut Vec<C64>, m: F) {
        self.forward(data, tmp);
        for (k, v) in data.iter_mut().enumerate() {
            *v *= m(k);
        }
        self.inverse(data, tmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, f: impl Fn(f64, f64) -> C64) -> Vec<C64> {
        let mut v = Vec::new();
        for p in 0..n {
            for q in 0..n {
                v.push(f(p as f64 / n as f64, q as f64 / n as f64));
            }
        }
        v
    }

    #[test]
    fn d1_of_plane_wave() {
        let n = 16;
        let s = FiberSpectral::new(n, n, 1.0);
        let mut tmp = Vec::new();
        // f = exp(2 pi i (x + 2y)); d1 f = (1/2)(2 pi i + 4 pi) f
        let mut data = sample(n, |x, y| C64::new(0.0, 2.0 * PI * (x + 2.0 * y)).exp());
        let orig = data.clone();
        s.apply(&mut data, &mut tmp, |k| s.d1[k]);
        let factor = C64::new(2.0 * PI, PI);
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a - b * factor).norm() < 1e-11);
        }
    }

    #[test]
    fn lap_is_quarter_laplacian() {
        let n = 12;
        let s = FiberSpectral::new(n, n, 1.0);
        let mut tmp = Vec::new();
        let mut data = sample(n, |x, _| C64::new((2.0 * PI * x).cos(), 0.0));
        s.apply(&mut data, &mut tmp, |k| C64::new(s.lap[k], 0.0));
        for p in 0..n {
            let x = p as f64 / n as f64;
            let want = -PI * PI * (2.0 * PI * x).cos();
            assert!((data[p * n].re - want).abs() < 1e-11);
        }
        assert!(s.lap.iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn multipliers_compose() {
        let s = FiberSpectral::new(10, 14, 1.3);
        for k in 0..s.len() {
            assert!(((s.d1[k] * s.d1bar[k]).re - s.lap[k]).abs() < 1e-12);
        }
    }
}
