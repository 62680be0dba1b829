//! Cartesian grid on the square `[-r, r]^2` restricted to the disk `|P| <= r`.
//!
//! Nodes outside the disk that touch it (8-neighbourhood) are ghosts; their
//! values are copies of the field at the mirror point across the circle,
//! interpolated biquadratically from an all-inside 3x3 block. The filling is
//! explicit, so a zero normal derivative is imposed to second order without a
//! linear solve.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rows of padding around the square so every ghost has a full neighbourhood.
pub const PAD: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    Inside,
    Ghost,
    Unused,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stencil<T> {
    pub nodes: [usize; 9],
    pub weights: [T; 9],
}

impl<T: Real> Stencil<T> {
    pub fn apply(&self, u: &[T]) -> T {
        self.nodes.iter().zip(&self.weights).fold(T::zero(), |acc, (&k, &w)| acc + w * u[k])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiskLayout<T> {
    /// Nodes across the diameter.
    pub diameter_nodes: usize,
    /// Side of the padded node array (`diameter_nodes + 2 * PAD`).
    pub n: usize,
    pub radius: T,
    pub h: T,
    pub class: Vec<NodeClass>,
    pub inside: Vec<usize>,
    /// Ghost node index with the stencil that fills it.
    pub ghosts: Vec<(usize, Stencil<T>)>,
    /// Quadrature weight per node (zero off the inside set); sums to `pi r^2`.
    pub weights: Vec<T>,
    /// Inside nodes whose eight neighbours are all inside.
    pub core: Vec<bool>,
}

impl<T: Real> DiskLayout<T> {
    pub fn new(diameter_nodes: usize, radius: T) -> Result<Self> {
        if diameter_nodes < 5 {
            return Err(Error::InvalidArgument(format!(
                "disk grid needs at least 5 nodes per axis, got {diameter_nodes}"
            )));
        }
        let h = T::two() * radius / T::of((diameter_nodes - 1) as f64);
        let n = diameter_nodes + 2 * PAD;
        let mut layout = Self {
            diameter_nodes,
            n,
            radius,
            h,
            class: vec![NodeClass::Unused; n * n],
            inside: Vec::new(),
            ghosts: Vec::new(),
            weights: vec![T::zero(); n * n],
            core: vec![false; n * n],
        };
        for k in 0..n * n {
            let p = layout.position(k);
            if (p[0] * p[0] + p[1] * p[1]).sqrt() <= radius * (T::one() + T::of(1e-14)) {
                layout.class[k] = NodeClass::Inside;
                layout.inside.push(k);
            }
        }
        for k in 0..n * n {
            if layout.class[k] != NodeClass::Inside && layout.neighbours(k).any(|m| layout.class[m] == NodeClass::Inside) {
                layout.class[k] = NodeClass::Ghost;
            }
        }
        for &k in &layout.inside {
            let (i, j) = (k % n, k / n);
            let full = i > 0 && j > 0 && i + 1 < n && j + 1 < n;
            layout.core[k] = full && layout.neighbours(k).all(|m| layout.class[m] == NodeClass::Inside);
        }
        for k in 0..n * n {
            if layout.class[k] != NodeClass::Ghost {
                continue;
            }
            let p = layout.position(k);
            let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let scale = (T::two() * radius - norm) / norm;
            let mirror = [p[0] * scale, p[1] * scale];
            let stencil = layout.stencil_at(mirror)?;
            layout.ghosts.push((k, stencil));
        }
        layout.compute_weights();
        Ok(layout)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn position(&self, k: usize) -> [T; 2] {
        let (i, j) = (k % self.n, k / self.n);
        let off = PAD as f64;
        [-self.radius + self.h * T::of(i as f64 - off), -self.radius + self.h * T::of(j as f64 - off)]
    }

    fn neighbours(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.n as isize;
        let (i, j) = ((k % self.n) as isize, (k / self.n) as isize);
        (-1..=1isize)
            .flat_map(move |dj| (-1..=1isize).map(move |di| (i + di, j + dj)))
            .filter(move |&(a, b)| (a, b) != (i, j) && a >= 0 && b >= 0 && a < n && b < n)
            .map(move |(a, b)| (b * n + a) as usize)
    }

    pub fn is_inside(&self, k: usize) -> bool {
        self.class[k] == NodeClass::Inside
    }

    pub fn fill_ghosts(&self, u: &mut [T]) {
        for (k, s) in &self.ghosts {
            u[*k] = s.apply(u);
        }
    }

    /// Centre of the nearest 3x3 block whose nodes all satisfy `accept`.
    fn block_center(&self, p: [T; 2], reach: isize, accept: impl Fn(usize) -> bool) -> Result<(usize, usize)> {
        let fi = ((p[0] + self.radius) / self.h).as_f64() + PAD as f64;
        let fj = ((p[1] + self.radius) / self.h).as_f64() + PAD as f64;
        let (ri, rj) = (fi.round() as isize, fj.round() as isize);
        let n = self.n as isize;
        let mut best: Option<(f64, usize, usize)> = None;
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (ci, cj) = (ri + di, rj + dj);
                if ci < 1 || cj < 1 || ci > n - 2 || cj > n - 2 {
                    continue;
                }
                let ok = (-1..=1).all(|b| (-1..=1).all(|a| accept(((cj + b) * n + ci + a) as usize)));
                if !ok {
                    continue;
                }
                let d = (ci as f64 - fi).powi(2) + (cj as f64 - fj).powi(2);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, ci as usize, cj as usize));
                }
            }
        }
        best.map(|(_, i, j)| (i, j))
            .ok_or_else(|| Error::GridMismatch(format!("no admissible 3x3 block near ({}, {})", p[0], p[1])))
    }

    /// Biquadratic interpolation stencil for the value at `p`.
    pub fn stencil_at(&self, p: [T; 2]) -> Result<Stencil<T>> {
        Ok(self.stencil_with_gradient(p)?.0)
    }

    /// Stencils for the value and the two partial derivatives at `p`, built on
    /// the nearest all-inside block.
    pub fn stencil_with_gradient(&self, p: [T; 2]) -> Result<(Stencil<T>, Stencil<T>, Stencil<T>)> {
        let c = self.block_center(p, 3, |k| self.class[k] == NodeClass::Inside)?;
        Ok(self.block_stencils(p, c))
    }

    /// Like [`Self::stencil_with_gradient`] but using core nodes only, for
    /// fields that are accurate only away from the ghost layer.
    pub fn core_stencil_with_gradient(&self, p: [T; 2]) -> Result<(Stencil<T>, Stencil<T>, Stencil<T>)> {
        let c = self.block_center(p, 5, |k| self.core[k])?;
        Ok(self.block_stencils(p, c))
    }

    fn block_stencils(&self, p: [T; 2], (ci, cj): (usize, usize)) -> (Stencil<T>, Stencil<T>, Stencil<T>) {
        let c = self.position(self.index(ci, cj));
        let xi = (p[0] - c[0]) / self.h;
        let eta = (p[1] - c[1]) / self.h;
        let (lx, dx) = quadratic_basis(xi);
        let (ly, dy) = quadratic_basis(eta);
        let mut nodes = [0usize; 9];
        let (mut w, mut wx, mut wy) = ([T::zero(); 9], [T::zero(); 9], [T::zero(); 9]);
        for b in 0..3 {
            for a in 0..3 {
                let m = b * 3 + a;
                nodes[m] = self.index(ci + a - 1, cj + b - 1);
                w[m] = lx[a] * ly[b];
                wx[m] = dx[a] * ly[b] / self.h;
                wy[m] = lx[a] * dy[b] / self.h;
            }
        }
        (Stencil { nodes, weights: w }, Stencil { nodes, weights: wx }, Stencil { nodes, weights: wy })
    }

    fn compute_weights(&mut self) {
        let r = self.radius.as_f64();
        let h = self.h.as_f64();
        let mut w = vec![0.0f64; self.n * self.n];
        for k in 0..self.n * self.n {
            if self.class[k] == NodeClass::Unused {
                continue;
            }
            let p = self.position(k);
            let (x, y) = (p[0].as_f64(), p[1].as_f64());
            let area = rect_disk_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h, r);
            if area == 0.0 {
                continue;
            }
            let owner = if self.is_inside(k) {
                k
            } else {
                self.neighbours(k)
                    .filter(|&m| self.is_inside(m))
                    .min_by(|&a, &b| {
                        let (pa, pb) = (self.position(a), self.position(b));
                        let da = (pa[0] - p[0]).powi(2) + (pa[1] - p[1]).powi(2);
                        let db = (pb[0] - p[0]).powi(2) + (pb[1] - p[1]).powi(2);
                        da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap_or(k)
            };
            w[owner] += area;
        }
        self.weights = w.into_iter().map(T::of).collect();
    }
}

/// Lagrange basis on nodes `-1, 0, 1` and its derivative at `xi`.
fn quadratic_basis<T: Real>(xi: T) -> ([T; 3], [T; 3]) {
    let half = T::half();
    let one = T::one();
    (
        [half * xi * (xi - one), one - xi * xi, half * xi * (xi + one)],
        [xi - half, -T::two() * xi, xi + half],
    )
}

/// Antiderivative of `sqrt(r^2 - x^2)`.
fn circle_primitive(x: f64, r: f64) -> f64 {
    let x = x.clamp(-r, r);
    0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
}

/// `int_{x0}^{x1} clamp(y, -c(x), c(x)) dx` with `c(x) = sqrt(r^2 - x^2)` over `|x| <= r`.
fn clamped_integral(x0: f64, x1: f64, y: f64, r: f64) -> f64 {
    let (a, b) = (x0.max(-r), x1.min(r));
    if a >= b {
        return 0.0;
    }
    let s = if y.abs() >= r { 0.0 } else { (r * r - y * y).sqrt() };
    // |y| < c(x) exactly on |x| < s
    let mut cuts = vec![a, b];
    for c in [-s, s] {
        if c > a && c < b {
            cuts.push(c);
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let mid = 0.5 * (p + q);
        if mid.abs() < s {
            acc += y * (q - p);
        } else {
            let sign = if y >= 0.0 { 1.0 } else { -1.0 };
            acc += sign * (circle_primitive(q, r) - circle_primitive(p, r));
        }
    }
    acc
}

/// Exact area of `[x0, x1] x [y0, y1]` intersected with the disk of radius `r`.
pub fn rect_disk_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    (clamped_integral(x0, x1, y1, r) - clamped_integral(x0, x1, y0, r)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_sum_to_disk_area() {
        for n in [5, 11, 40, 101] {
            let d = DiskLayout::<f64>::new(n, 1.3).unwrap();
            let total: f64 = d.weights.iter().sum();
            assert!((total - PI * 1.69).abs() < 1e-12, "n = {n}: {total}");
            assert!(d.weights.iter().enumerate().all(|(k, &w)| w == 0.0 || d.is_inside(k)));
        }
    }

    #[test]
    fn rectangle_areas() {
        assert!((rect_disk_area(-1.0, 1.0, -1.0, 1.0, 1.0) - PI).abs() < 1e-14);
        assert!((rect_disk_area(0.0, 1.0, 0.0, 1.0, 1.0) - PI / 4.0).abs() < 1e-14);
        assert!((rect_disk_area(-0.1, 0.1, -0.1, 0.1, 1.0) - 0.04).abs() < 1e-15);
        assert_eq!(rect_disk_area(2.0, 3.0, 0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn stencils_reproduce_quadratics() {
        let d = DiskLayout::<f64>::new(21, 1.0).unwrap();
        let f = |p: [f64; 2]| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[0] + 0.3 * p[0] * p[1] - p[1] * p[1];
        let u: Vec<f64> = (0..d.n * d.n).map(|k| f(d.position(k))).collect();
        for ang in 0..16 {
            let a = ang as f64 * PI / 8.0;
            let p = [a.cos(), a.sin()];
            let (s, sx, sy) = d.stencil_with_gradient(p).unwrap();
            assert!((s.apply(&u) - f(p)).abs() < 1e-12);
            assert!((sx.apply(&u) - (2.0 + p[0] + 0.3 * p[1])).abs() < 1e-11);
            assert!((sy.apply(&u) - (-1.0 + 0.3 * p[0] - 2.0 * p[1])).abs() < 1e-11);
        }
    }

    #[test]
    fn ghosts_mirror_radial_functions() {
        let d = DiskLayout::<f64>::new(41, 1.0).unwrap();
        let f = |p: [f64; 2]| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            (1.0 - r2).powi(2)
        };
        let mut u: Vec<f64> = (0..d.n * d.n).map(|k| if d.is_inside(k) { f(d.position(k)) } else { 0.0 }).collect();
        d.fill_ghosts(&mut u);
        for (k, _) in &d.ghosts {
            let p = d.position(*k);
            let rho = p[0].hypot(p[1]);
            let mirror = (2.0 - rho).powi(2);
            assert!((u[*k] - (1.0 - mirror).powi(2)).abs() < 5e-3);
        }
    }
}
