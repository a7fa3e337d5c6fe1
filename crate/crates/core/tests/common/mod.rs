//! Shared test fixtures.

use chernflow_core::bolza::{bump_profile, hyperbolic_distance, BaseGrid, FuchsianGroup, Mobius};
use chernflow_core::grid::GridSpec;
use chernflow_core::kernel::PointClass;
use num_complex::Complex64 as C64;

/// `F(w) = sum over the orbit of p of a bump in d(w, q)`, invariant by construction.
pub struct OrbitSum {
    points: Vec<C64>,
    radius: f64,
}

impl OrbitSum {
    pub fn new(g: &FuchsianGroup, p: C64, radius: f64, reach: f64) -> Self {
        let mut points = vec![p];
        let mut frontier = vec![(Mobius::identity(), 8usize)];
        for _ in 0..5 {
            let mut next = Vec::new();
            for (m, last) in &frontier {
                for k in 0..8 {
                    if *last < 8 && (k + 4) % 8 == *last {
                        continue;
                    }
                    let e = m.compose(&g.pairings[k]);
                    let q = e.apply(p);
                    if hyperbolic_distance(q, C64::new(0.0, 0.0)) < reach + 3.0 {
                        next.push((e, k));
                    }
                    if hyperbolic_distance(q, C64::new(0.0, 0.0)) < reach
                        && points.iter().all(|o: &C64| (o - q).norm() > 1e-9)
                    {
                        points.push(q);
                    }
                }
            }
            frontier = next;
        }
        OrbitSum { points, radius }
    }

    pub fn eval(&self, w: C64) -> f64 {
        self.points.iter().map(|&q| bump_profile(hyperbolic_distance(w, q) / self.radius)).sum()
    }
}

pub fn ghost_error(n: usize, f: &OrbitSum) -> f64 {
    let base = BaseGrid::build(&GridSpec::reduced(n, 0.85)).unwrap();
    let mut v: Vec<f64> = (0..base.grid.base_len())
        .map(|b| if base.class[b] == PointClass::Interior { f.eval(base.coord(b)) } else { 0.0 })
        .collect();
    base.ghost_fill(&mut v, 1);
    base.ghosts.iter().map(|e| (v[e.point] - f.eval(base.coord(e.point))).abs()).fold(0.0, f64::max)
}

pub fn test_function() -> (FuchsianGroup, OrbitSum) {
    let g = chernflow_core::bolza::build_bolza();
    let f = OrbitSum::new(&g, C64::from_polar(0.62, 0.3), 1.6, 4.4);
    (g, f)
}
