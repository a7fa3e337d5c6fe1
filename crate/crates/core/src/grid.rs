//! Structured product grid: a square box in the disk coordinate `w` times the
//! periodic fiber cell `[0,1) x [0,b)`.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FiberMode {
    /// Fields are constant along the fiber; fiber arrays have length 1.
    Reduced,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub base_nx: usize,
    pub base_ny: usize,
    /// Half width `r` of the base box `[-r, r]^2`.
    pub base_half_width: f64,
    pub fiber_nx: usize,
    pub fiber_ny: usize,
    /// Imaginary part `b` of the lattice parameter `tau = i b`.
    pub fiber_period_y: f64,
    pub mode: FiberMode,
}

impl GridSpec {
    pub fn reduced(n: usize, half_width: f64) -> Self {
        GridSpec {
            base_nx: n,
            base_ny: n,
            base_half_width: half_width,
            fiber_nx: 1,
            fiber_ny: 1,
            fiber_period_y: 1.0,
            mode: FiberMode::Reduced,
        }
    }

    pub fn full(n: usize, half_width: f64, nf: usize) -> Self {
        GridSpec {
            base_nx: n,
            base_ny: n,
            base_half_width: half_width,
            fiber_nx: nf,
            fiber_ny: nf,
            fiber_period_y: 1.0,
            mode: FiberMode::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_nx < 9 || self.base_ny < 9 {
            return Err(Error::Config(format!(
                "grid: base point counts must be >= 9, got {}x{}",
                self.base_nx, self.base_ny
            )));
        }
        if !(self.base_half_width > 0.0 && self.base_half_width.is_finite()) {
            return Err(Error::Config("grid.base_half_width must be positive".into()));
        }
        if !(self.fiber_period_y > 0.0 && self.fiber_period_y.is_finite()) {
            return Err(Error::Config("fiber lattice: Im(tau) must be positive".into()));
        }
        if self.mode == FiberMode::Full && (self.fiber_nx < 9 || self.fiber_ny < 9) {
            return Err(Error::Config(format!(
                "grid: fiber point counts must be >= 9 in full mode, got {}x{}",
                self.fiber_nx, self.fiber_ny
            )));
        }
        Ok(())
    }

    pub fn h_bx(&self) -> f64 {
        2.0 * self.base_half_width / (self.base_nx - 1) as f64
    }

    pub fn h_by(&self) -> f64 {
        2.0 * self.base_half_width / (self.base_ny - 1) as f64
    }

    pub fn fiber_dims(&self) -> (usize, usize) {
        match self.mode {
            FiberMode::Reduced => (1, 1),
            FiberMode::Full => (self.fiber_nx, self.fiber_ny),
        }
    }

    pub fn h_fx(&self) -> f64 {
        1.0 / self.fiber_dims().0 as f64
    }

    pub fn h_fy(&self) -> f64 {
        self.fiber_period_y / self.fiber_dims().1 as f64
    }

    pub fn base_len(&self) -> usize {
        self.base_nx * self.base_ny
    }

    pub fn fiber_len(&self) -> usize {
        let (a, b) = self.fiber_dims();
        a * b
    }

    pub fn len(&self) -> usize {
        self.base_len() * self.fiber_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base_index(&self, i: usize, j: usize) -> usize {
        i * self.base_ny + j
    }

    pub fn base_ij(&self, b: usize) -> (usize, usize) {
        (b / self.base_ny, b % self.base_ny)
    }

    /// Disk coordinate `(x2, y2)` of base point `b`.
    pub fn base_coord(&self, b: usize) -> (f64, f64) {
        let (i, j) = self.base_ij(b);
        let r = self.base_half_width;
        (-r + i as f64 * self.h_bx(), -r + j as f64 * self.h_by())
    }

    /// Fiber coordinate `(x1, y1)` of fiber point `f`.
    pub fn fiber_coord(&self, f: usize) -> (f64, f64) {
        let (_, ny) = self.fiber_dims();
        let (p, q) = (f / ny, f % ny);
        (p as f64 * self.h_fx(), q as f64 * self.h_fy())
    }

    /// Real volume of one fiber cell; the analytic fiber factor in reduced mode.
    pub fn fiber_area(&self) -> f64 {
        self.fiber_period_y
    }

    /// Real volume weight of one grid point for a top form coefficient,
    /// including the factor 4 of the fixed top-form convention.
    pub fn cell_volume(&self) -> f64 {
        let fiber = match self.mode {
            FiberMode::Reduced => self.fiber_area(),
            FiberMode::Full => self.h_fx() * self.h_fy(),
        };
        4.0 * self.h_bx() * self.h_by() * fiber
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacings_and_coords() {
        let g = GridSpec::full(65, 0.85, 16);
        assert!((g.h_bx() - 1.7 / 64.0).abs() < 1e-15);
        assert_eq!(g.fiber_len(), 256);
        assert_eq!(g.len(), 65 * 65 * 256);
        let (x, y) = g.base_coord(g.base_index(32, 32));
        assert!(x.abs() < 1e-15 && y.abs() < 1e-15);
        assert_eq!(g.fiber_coord(17), (1.0 / 16.0, 1.0 / 16.0));
    }

    #[test]
    fn reduced_collapses_fiber() {
        let g = GridSpec::reduced(33, 0.85);
        assert_eq!(g.fiber_len(), 1);
        assert_eq!(g.len(), 33 * 33);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(GridSpec::reduced(8, 0.85).validate().is_err());
        assert!(GridSpec::full(17, 0.85, 8).validate().is_err());
        assert!(GridSpec::full(17, 0.85, 9).validate().is_ok());
    }
}
