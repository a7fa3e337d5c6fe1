//! Genus-2 base: the Bolza octagon in the Poincare disk, its side pairings,
//! grid classification with a scalar ghost table, and the hyperbolic metric.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{Form11Field, RealScalarField};
use crate::grid::GridSpec;
use crate::kernel::{Kernel, PointClass};

const MAX_REDUCTION_STEPS: usize = 64;
const SIDE_TOL: f64 = 1e-13;

/// Moebius map `w -> (a w + b) / (c w + d)` with determinant 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mobius {
    pub m: [[C64; 2]; 2],
}

impl Mobius {
    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        Mobius { m: [[o, z], [z, o]] }
    }

    pub fn rotation(theta: f64) -> Self {
        let z = C64::new(0.0, 0.0);
        Mobius { m: [[C64::from_polar(1.0, theta / 2.0), z], [z, C64::from_polar(1.0, -theta / 2.0)]] }
    }

    /// Hyperbolic translation along the real axis moving 0 to `tanh(s)`.
    pub fn translation(s: f64) -> Self {
        let (c, h) = (C64::new(s.cosh(), 0.0), C64::new(s.sinh(), 0.0));
        Mobius { m: [[c, h], [h, c]] }
    }

    pub fn apply(&self, w: C64) -> C64 {
        (self.m[0][0] * w + self.m[0][1]) / (self.m[1][0] * w + self.m[1][1])
    }

    /// `w -> dγ/dw`.
    pub fn derivative(&self, w: C64) -> C64 {
        let den = self.m[1][0] * w + self.m[1][1];
        self.det() / (den * den)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * other.m[0][j] + self.m[i][1] * other.m[1][j];
            }
        }
        Mobius { m }
    }

    pub fn inverse(&self) -> Mobius {
        let [[a, b], [c, d]] = self.m;
        let det = self.det();
        Mobius { m: [[d / det, -b / det], [-c / det, a / det]] }
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Entrywise distance to the identity, up to the sign ambiguity of `SL(2)`.
    pub fn distance_to_identity(&self) -> f64 {
        let e = |s: f64| {
            let mut d = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    let id = if i == j { s } else { 0.0 };
                    d = d.max((self.m[i][j] - id).norm());
                }
            }
            d
        };
        e(1.0).min(e(-1.0))
    }
}

/// Monotone proxy `|a - b| / |1 - conj(a) b|` = `tanh(d(a, b) / 2)`.
pub fn pseudo_distance(a: C64, b: C64) -> f64 {
    (a - b).norm() / (C64::new(1.0, 0.0) - a.conj() * b).norm()
}

/// Hyperbolic distance for the curvature -1 metric `4 |dw|^2 / (1 - |w|^2)^2`.
pub fn hyperbolic_distance(a: C64, b: C64) -> f64 {
    2.0 * pseudo_distance(a, b).atanh()
}

/// Interior angle of the regular octagon with vertices at Euclidean radius `r`.
pub fn octagon_angle(r: f64) -> f64 {
    let big_r = 2.0 * r.atanh();
    2.0 * (1.0 / (big_r.cosh() * FRAC_PI_8.tan())).atan()
}

/// Vertex radius at which the interior angle is `pi / 4`.
pub fn vertex_radius() -> f64 {
    let (mut lo, mut hi) = (0.5f64, 0.99f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if octagon_angle(mid) > FRAC_PI_4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A group word: `map` sends the reduced point to the original one.
#[derive(Clone, Debug, PartialEq)]
pub struct Word {
    pub sides: Vec<u8>,
    pub map: Mobius,
}

#[derive(Clone, Debug)]
pub struct FuchsianGroup {
    /// `pairings[k]` maps the side with midpoint angle `(k + 4) pi / 4` onto
    /// the side with midpoint angle `k pi / 4`; `pairings[k + 4]` is its inverse.
    pub pairings: [Mobius; 8],
    /// `a1, b1, a2, b2` with `[a1, b1][a2, b2] = 1`.
    pub generators: [Mobius; 4],
    /// The generators as words in the pairings (letter `k`, inverse `k + 4 mod 8`).
    pub generator_words: [Vec<usize>; 4],
    pub vertex_radius: f64,
    /// Euclidean radius of the side midpoints.
    pub midpoint_radius: f64,
    /// `pairings[k](0)`; side `k` is the bisector of 0 and `centers[k]`.
    pub centers: [C64; 8],
}

pub fn build_bolza() -> FuchsianGroup {
    // cosh = cot(pi / 8) = 1 + sqrt 2
    let ch = 1.0 + 2f64.sqrt();
    let inradius = ch.acosh();
    let (c, h) = (C64::new(ch, 0.0), C64::new((ch * ch - 1.0).sqrt(), 0.0));
    let t = Mobius { m: [[c, h], [h, c]] };
    let pairings: [Mobius; 8] = std::array::from_fn(|k| {
        let th = k as f64 * FRAC_PI_4;
        Mobius::rotation(th).compose(&t).compose(&Mobius::rotation(-th))
    });
    let generator_words = [vec![0], vec![5, 2, 7], vec![5, 2], vec![7, 1]];
    let generators = std::array::from_fn(|i| word_product(&pairings, &generator_words[i]));
    let centers = std::array::from_fn(|k| pairings[k].apply(C64::new(0.0, 0.0)));
    FuchsianGroup {
        pairings,
        generators,
        generator_words,
        vertex_radius: vertex_radius(),
        midpoint_radius: (inradius / 2.0).tanh(),
        centers,
    }
}

fn word_product(pairings: &[Mobius; 8], word: &[usize]) -> Mobius {
    word.iter().fold(Mobius::identity(), |m, &k| m.compose(&pairings[k]))
}

fn inverse_word(word: &[usize]) -> Vec<usize> {
    word.iter().rev().map(|&k| (k + 4) % 8).collect()
}

/// Cancels adjacent letter/inverse pairs.
pub fn free_reduce(word: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(word.len());
    for &k in word {
        if out.last() == Some(&((k + 4) % 8)) {
            out.pop();
        } else {
            out.push(k);
        }
    }
    out
}

impl FuchsianGroup {
    /// The word `[a1, b1][a2, b2]` in the pairings, freely reduced.
    pub fn relation_word(&self) -> Vec<usize> {
        let [a1, b1, a2, b2] = &self.generator_words;
        let mut w = Vec::new();
        for (a, b) in [(a1, b1), (a2, b2)] {
            w.extend_from_slice(a);
            w.extend_from_slice(b);
            w.extend(inverse_word(a));
            w.extend(inverse_word(b));
        }
        free_reduce(&w)
    }

    /// Matrix residual of the surface relation `[a1, b1][a2, b2] = 1`.
    pub fn relation_residual(&self) -> f64 {
        word_product(&self.pairings, &self.relation_word()).distance_to_identity()
    }

    pub fn vertex(&self, j: usize) -> C64 {
        C64::from_polar(self.vertex_radius, FRAC_PI_8 + j as f64 * FRAC_PI_4)
    }

    /// How far `w` lies beyond side `k` (positive outside).
    pub fn side_excess(&self, w: C64, k: usize) -> f64 {
        w.norm() - pseudo_distance(w, self.centers[k])
    }

    /// Closed-octagon membership.
    pub fn contains(&self, w: C64) -> bool {
        w.norm() < 1.0 && (0..8).all(|k| self.side_excess(w, k) <= SIDE_TOL)
    }

    /// Maps `w` into the closed octagon; the returned word sends the reduced
    /// point back to `w`. Each step strictly decreases the distance to 0.
    pub fn domain_reduce(&self, w: C64) -> Result<(C64, Word)> {
        if !(w.norm() < 1.0) {
            return Err(Error::Config(format!("domain_reduce: point {w} is not in the unit disk")));
        }
        let mut z = w;
        let mut word = Word { sides: Vec::new(), map: Mobius::identity() };
        for _ in 0..MAX_REDUCTION_STEPS {
            let (k, ex) =
                (0..8)
                    .map(|k| (k, self.side_excess(z, k)))
                    .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            if ex <= SIDE_TOL {
                return Ok((z, word));
            }
            z = self.pairings[(k + 4) % 8].apply(z);
            word.sides.push(k as u8);
            word.map = word.map.compose(&self.pairings[k]);
        }
        Err(Error::ReductionFailure(MAX_REDUCTION_STEPS))
    }

    /// Elements of the group given by words of length `1..=len` in the side
    /// pairings, without immediate cancellations.
    pub fn short_words(&self, len: usize) -> Vec<Mobius> {
        let mut out = Vec::new();
        let mut frontier: Vec<(Mobius, usize)> = vec![(Mobius::identity(), 8)];
        for _ in 0..len {
            let mut next = Vec::new();
            for (m, last) in &frontier {
                for k in 0..8 {
                    if *last < 8 && (k + 4) % 8 == *last {
                        continue;
                    }
                    let g = m.compose(&self.pairings[k]);
                    out.push(g);
                    next.push((g, k));
                }
            }
            frontier = next;
        }
        out
    }
}

/// Hyperbolic metric factor `s = 2 / (1 - |w|^2)^2` (zero outside the disk).
pub fn ke_factor(w: C64) -> f64 {
    let q = 1.0 - w.norm_sqr();
    if q > 0.0 {
        2.0 / (q * q)
    } else {
        0.0
    }
}

/// One ghost point: its reduced target and the effective interpolation
/// weights on interior points.
#[derive(Clone, Debug)]
pub struct GhostEntry {
    pub point: usize,
    pub target: C64,
    pub word: Word,
    pub weights: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct BaseGrid {
    pub grid: GridSpec,
    pub group: FuchsianGroup,
    pub class: Vec<PointClass>,
    pub ghosts: Vec<GhostEntry>,
    /// Number of ghosts whose stencils were coupled through other ghosts.
    pub coupled: usize,
}

/// 1-D cubic Lagrange weights at fractional index `u` for nodes `i0..i0 + 4`.
fn lagrange4(u: f64, i0: isize) -> [f64; 4] {
    std::array::from_fn(|m| {
        let mut w = 1.0;
        for n in 0..4 {
            if n != m {
                w *= (u - (i0 + n as isize) as f64) / (m as f64 - n as f64);
            }
        }
        w
    })
}

struct Stencil {
    nodes: Vec<(usize, f64)>,
    ghost_nodes: usize,
}

fn stencil_for(grid: &GridSpec, class: &[PointClass], z: C64) -> Option<Stencil> {
    let r = grid.base_half_width;
    let u = (z.re + r) / grid.h_bx();
    let v = (z.im + r) / grid.h_by();
    let (iu, iv) = (u.floor() as isize, v.floor() as isize);
    let (nx, ny) = (grid.base_nx as isize, grid.base_ny as isize);
    let mut best: Option<(usize, isize, Stencil)> = None;
    for i0 in [iu - 1, iu - 2, iu] {
        for j0 in [iv - 1, iv - 2, iv] {
            if i0 < 0 || j0 < 0 || i0 + 3 >= nx || j0 + 3 >= ny {
                continue;
            }
            let wx = lagrange4(u, i0);
            let wy = lagrange4(v, j0);
            let mut nodes = Vec::with_capacity(16);
            let mut ghosts = 0;
            let mut ok = true;
            for a in 0..4 {
                for c in 0..4 {
                    let b = ((i0 + a) * ny + j0 + c) as usize;
                    match class[b] {
                        PointClass::Exterior => ok = false,
                        PointClass::Ghost => ghosts += 1,
                        PointClass::Interior => {}
                    }
                    nodes.push((b, wx[a as usize] * wy[c as usize]));
                }
            }
            if !ok {
                continue;
            }
            let off = (i0 - (iu - 1)).abs() + (j0 - (iv - 1)).abs();
            let better = match &best {
                None => true,
                Some((g, o, _)) => (ghosts, off) < (*g, *o),
            };
            if better {
                best = Some((ghosts, off, Stencil { nodes, ghost_nodes: ghosts }));
            }
        }
    }
    best.map(|b| b.2)
}

pub fn classify_and_table(grid: &GridSpec, group: &FuchsianGroup) -> Result<BaseGrid> {
    grid.validate()?;
    let (nx, ny) = (grid.base_nx, grid.base_ny);
    let mut class = vec![PointClass::Exterior; grid.base_len()];
    for (b, c) in class.iter_mut().enumerate() {
        let (x, y) = grid.base_coord(b);
        if group.contains(C64::new(x, y)) {
            *c = PointClass::Interior;
        }
    }
    for b in 0..grid.base_len() {
        if class[b] != PointClass::Interior {
            continue;
        }
        let (i, j) = grid.base_ij(b);
        if i < 2 || j < 2 || i + 2 >= nx || j + 2 >= ny {
            return Err(Error::Config(format!(
                "base box half width {} is too small: the ghost ring of interior point ({i}, {j}) leaves the box",
                grid.base_half_width
            )));
        }
        for di in 0..5 {
            for dj in 0..5 {
                let q = grid.base_index(i + di - 2, j + dj - 2);
                if class[q] == PointClass::Exterior {
                    class[q] = PointClass::Ghost;
                }
            }
        }
    }

    let shorts = group.short_words(2);
    let mut ghosts = Vec::new();
    let mut stencils = Vec::new();
    for b in 0..grid.base_len() {
        if class[b] != PointClass::Ghost {
            continue;
        }
        let (x, y) = grid.base_coord(b);
        let (target, word) = group.domain_reduce(C64::new(x, y))?;
        let mut st = stencil_for(grid, &class, target);
        if st.is_none() {
            // Near a vertex: use another representative of the same orbit
            // point whose neighborhood is covered by known points.
            st = shorts
                .iter()
                .map(|g| g.apply(target))
                .filter(|z| z.norm() < 1.0)
                .filter_map(|z| stencil_for(grid, &class, z))
                .min_by_key(|s| s.ghost_nodes);
        }
        let st = st.ok_or_else(|| {
            Error::Config(format!("no interpolation stencil for ghost at ({x:.4}, {y:.4}); widen the base box"))
        })?;
        ghosts.push(GhostEntry { point: b, target, word, weights: Vec::new() });
        stencils.push(st);
    }

    let coupled = resolve_weights(&class, &mut ghosts, &stencils)?;
    Ok(BaseGrid { grid: grid.clone(), group: group.clone(), class, ghosts, coupled })
}

/// Eliminates ghost-on-ghost stencil dependencies with one dense solve so
/// that every ghost carries weights on interior points only.
fn resolve_weights(class: &[PointClass], ghosts: &mut [GhostEntry], stencils: &[Stencil]) -> Result<usize> {
    let mut pos = vec![usize::MAX; class.len()];
    for (g, e) in ghosts.iter().enumerate() {
        pos[e.point] = g;
    }
    let mut in_set = vec![false; ghosts.len()];
    let mut stack: Vec<usize> = (0..ghosts.len()).filter(|&g| stencils[g].ghost_nodes > 0).collect();
    for &g in &stack {
        in_set[g] = true;
    }
    while let Some(g) = stack.pop() {
        for &(b, _) in &stencils[g].nodes {
            if class[b] == PointClass::Ghost && !in_set[pos[b]] {
                in_set[pos[b]] = true;
                stack.push(pos[b]);
            }
        }
    }
    for (g, e) in ghosts.iter_mut().enumerate() {
        if !in_set[g] {
            e.weights = stencils[g].nodes.clone();
        }
    }
    let set: Vec<usize> = (0..ghosts.len()).filter(|&g| in_set[g]).collect();
    if set.is_empty() {
        return Ok(0);
    }
    let mut upos = vec![usize::MAX; ghosts.len()];
    for (r, &g) in set.iter().enumerate() {
        upos[g] = r;
    }
    let mut cols: Vec<usize> = Vec::new();
    let mut col_of = std::collections::HashMap::new();
    for &g in &set {
        for &(b, _) in &stencils[g].nodes {
            if class[b] == PointClass::Interior && !col_of.contains_key(&b) {
                col_of.insert(b, cols.len());
                cols.push(b);
            }
        }
    }
    let n = set.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, cols.len());
    for (r, &g) in set.iter().enumerate() {
        for &(b, w) in &stencils[g].nodes {
            if class[b] == PointClass::Interior {
                rhs[(r, col_of[&b])] += w;
            } else {
                a[(r, upos[pos[b]])] -= w;
            }
        }
    }
    let sol = a.lu().solve(&rhs).ok_or_else(|| Error::Config("ghost interpolation system is singular".into()))?;
    for (r, &g) in set.iter().enumerate() {
        ghosts[g].weights = (0..cols.len()).filter(|&c| sol[(r, c)] != 0.0).map(|c| (cols[c], sol[(r, c)])).collect();
    }
    Ok(n)
}

impl BaseGrid {
    pub fn build(grid: &GridSpec) -> Result<BaseGrid> {
        classify_and_table(grid, &build_bolza())
    }

    /// Differential kernel over this classification.
    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::new(self.grid.clone(), self.class.clone())
    }

    pub fn count(&self, c: PointClass) -> usize {
        self.class.iter().filter(|&&k| k == c).count()
    }

    pub fn coord(&self, b: usize) -> C64 {
        let (x, y) = self.grid.base_coord(b);
        C64::new(x, y)
    }

    /// Overwrites ghost values of `f` (fiber length `nf`) by interpolation at
    /// the reduced targets.
    pub fn ghost_fill(&self, f: &mut [f64], nf: usize) {
        for e in &self.ghosts {
            for fi in 0..nf {
                let mut s = 0.0;
                for &(b, w) in &e.weights {
                    s += w * f[b * nf + fi];
                }
                f[e.point * nf + fi] = s;
            }
        }
    }

    pub fn ghost_filled(&self, f: &RealScalarField, nf: usize) -> RealScalarField {
        let mut out = f.clone();
        self.ghost_fill(&mut out.values, nf);
        out
    }

    /// Hyperbolic metric `omega_S` pulled back to the total space: `c22 = s(w)`
    /// on known points.
    pub fn ke_metric(&self) -> Form11Field {
        let nf = self.grid.fiber_len();
        let mut f = Form11Field::zeros(self.grid.len());
        for b in 0..self.grid.base_len() {
            if self.class[b] == PointClass::Exterior {
                continue;
            }
            let s = ke_factor(self.coord(b));
            for fi in 0..nf {
                f.c22[b * nf + fi] = s;
            }
        }
        f
    }

    /// CSV dump of the classification and ghost mapping.
    pub fn geometry_csv(&self) -> String {
        let mut target = vec![None; self.grid.base_len()];
        for e in &self.ghosts {
            target[e.point] = Some(e);
        }
        let mut out = String::from("i,j,x,y,class,target_x,target_y,word_len\n");
        for b in 0..self.grid.base_len() {
            let (i, j) = self.grid.base_ij(b);
            let (x, y) = self.grid.base_coord(b);
            let c = match self.class[b] {
                PointClass::Interior => "interior",
                PointClass::Ghost => "ghost",
                PointClass::Exterior => "exterior",
            };
            let (tx, ty, wl) = match target[b] {
                Some(e) => (e.target.re, e.target.im, e.word.sides.len()),
                None if self.class[b] == PointClass::Interior => (x, y, 0),
                None => (f64::NAN, f64::NAN, 0),
            };
            out.push_str(&format!("{i},{j},{x},{y},{c},{tx},{ty},{wl}\n"));
        }
        out
    }
}

/// Smooth compactly supported bump `A e exp(1 / (s^2 - 1))`, `s = d(w, c) / radius`,
/// evaluated at reduced points; invariant because its support lies inside the octagon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantBump {
    pub center: C64,
    /// Hyperbolic radius (curvature -1 units).
    pub radius: f64,
    pub amplitude: f64,
}

/// Profile `e exp(1 / (s^2 - 1))` for `s < 1`, else 0.
pub fn bump_profile(s: f64) -> f64 {
    if s < 1.0 {
        (1.0 + 1.0 / (s * s - 1.0)).exp()
    } else {
        0.0
    }
}

impl InvariantBump {
    pub fn value_reduced(&self, w: C64) -> f64 {
        self.amplitude * bump_profile(hyperbolic_distance(w, self.center) / self.radius)
    }

    /// Base-only values on known points (ghost points get the values of their
    /// reduced targets). The support inside the octagon must keep a margin
    /// of two interior cells.
    pub fn sample(&self, base: &BaseGrid) -> Result<Vec<f64>> {
        if !base.group.contains(self.center) {
            return Err(Error::Config("bump center must lie inside the octagon".into()));
        }
        let g = &base.grid;
        let mut out = vec![0.0; g.base_len()];
        for b in 0..g.base_len() {
            if base.class[b] == PointClass::Exterior {
                continue;
            }
            let (w, _) = base.group.domain_reduce(base.coord(b))?;
            out[b] = self.value_reduced(w);
        }
        let (nx, ny) = (g.base_nx as isize, g.base_ny as isize);
        for b in 0..g.base_len() {
            if out[b] == 0.0 || base.class[b] != PointClass::Interior {
                continue;
            }
            let (i, j) = g.base_ij(b);
            for di in -2..=2isize {
                for dj in -2..=2isize {
                    let (a, c) = (i as isize + di, j as isize + dj);
                    let inside = a >= 0
                        && c >= 0
                        && a < nx
                        && c < ny
                        && base.class[(a * ny + c) as usize] == PointClass::Interior;
                    if !inside {
                        return Err(Error::Config(format!(
                            "bump (center {}, radius {}) leaves less than a two-cell margin inside the octagon",
                            self.center, self.radius
                        )));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Broadcasts base-only values along the fiber.
pub fn broadcast(base_values: &[f64], nf: usize) -> Vec<f64> {
    base_values.iter().flat_map(|&v| std::iter::repeat_n(v, nf)).collect()
}
