//! Compatible spacelike foliations of the region inside the boundary manifold.
//!
//! Two charts are built in: the flat chart `F(x, lambda) = (x, lambda)` and,
//! for rotational tubes, the chart whose leaves are the CMC leaves meeting
//! the tube perpendicularly. Chart evaluation is `f64`; internally the leaf
//! chart integrates its orthogonal trajectories with dual numbers so that the
//! `x`-derivatives are exact derivatives of the discrete map.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::lorentz::{unit_spacelike, SpacetimeVector};
use crate::profile::{RotationalProfile, Tube};
use crate::scalar::{dual_deriv, dual_var, Dual, Real};

type Vector = SpacetimeVector<f64>;

/// Lapse values below this are treated as a degenerate foliation.
pub const LAPSE_MIN: f64 = 1e-8;

pub trait FoliationChart: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Dimension `n` of the leaves.
    fn dim(&self) -> usize;

    fn map(&self, x: &[f64], lambda: f64) -> Result<Vector>;

    /// `dF/dlambda`.
    fn d_lambda(&self, x: &[f64], lambda: f64) -> Result<Vector>;

    /// `dF/dx^i`, one vector per coordinate.
    fn d_x(&self, x: &[f64], lambda: f64) -> Result<Vec<Vector>>;

    /// Leaf `lambda` as a graph over physical radius: `(height, radial slope)`.
    fn leaf_graph(&self, lambda: f64, rho: f64) -> (f64, f64);

    /// Leaf parameter of the leaf through `y`.
    fn time_function(&self, y: &Vector) -> Result<f64>;

    /// Chart coordinates `(x, lambda)` of an ambient point.
    fn locate(&self, y: &Vector) -> Result<(Vec<f64>, f64)>;

    fn lambda_range(&self) -> (f64, f64);

    fn leaf_metric(&self, x: &[f64], lambda: f64) -> Result<Vec<Vec<f64>>> {
        let d = self.d_x(x, lambda)?;
        Ok(d.iter().map(|a| d.iter().map(|b| a.dot(b)).collect()).collect())
    }

    fn lapse(&self, x: &[f64], lambda: f64) -> Result<f64> {
        let q = self.d_lambda(x, lambda)?.square();
        Ok((-q).max(0.0).sqrt())
    }

    /// Unit future normal of the leaves, `psi^{-1} dF/dlambda`.
    fn hat_v(&self, x: &[f64], lambda: f64) -> Result<Vector> {
        let psi = self.lapse(x, lambda)?;
        if !(psi >= LAPSE_MIN) {
            return Err(Error::LapseDegenerate { lapse: psi, threshold: LAPSE_MIN });
        }
        let v = self.d_lambda(x, lambda)? * psi.recip();
        Ok(if v.temporal() < 0.0 { -v } else { v })
    }

    /// Leaf normal at an ambient point, read off the leaf through it.
    fn hat_v_at(&self, y: &Vector) -> Result<Vector> {
        let lambda = self.time_function(y)?;
        let rho = radial(y);
        let (_, slope) = self.leaf_graph(lambda, rho);
        if slope.abs() >= 1.0 {
            return Err(Error::LeafNotSpacelike(lambda));
        }
        let n = (1.0 - slope * slope).sqrt().recip();
        Ok(match y.dim() {
            1 => Vector::new1(slope * y.spatial()[0].signum() * n, n),
            _ => {
                let (c, s) = direction(y);
                Vector::new2(slope * c * n, slope * s * n, n)
            }
        })
    }
}

fn radial(y: &Vector) -> f64 {
    y.spatial().iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn direction(y: &Vector) -> (f64, f64) {
    let s = y.spatial();
    let r = s[0].hypot(s[1]);
    if r > 0.0 {
        (s[0] / r, s[1] / r)
    } else {
        (1.0, 0.0)
    }
}

/// `F(x, lambda) = (x, lambda)`; optionally knows the tube to reject points outside it.
#[derive(Clone, Debug)]
pub struct FlatChart {
    pub dim: usize,
    pub tube: Option<Tube>,
}

impl FlatChart {
    pub fn new(dim: usize) -> Self {
        Self { dim, tube: None }
    }

    pub fn inside(tube: &Tube) -> Self {
        Self { dim: tube.dim(), tube: Some(tube.clone()) }
    }
}

impl FoliationChart for FlatChart {
    fn name(&self) -> &'static str {
        "flat"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn map(&self, x: &[f64], lambda: f64) -> Result<Vector> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(x.len(), self.dim));
        }
        Vector::new(x, lambda)
    }

    fn d_lambda(&self, _x: &[f64], _lambda: f64) -> Result<Vector> {
        Ok(Vector::e_t(self.dim))
    }

    fn d_x(&self, _x: &[f64], _lambda: f64) -> Result<Vec<Vector>> {
        Ok((0..self.dim).map(|i| Vector::e_spatial(self.dim, i)).collect())
    }

    fn leaf_graph(&self, lambda: f64, _rho: f64) -> (f64, f64) {
        (lambda, 0.0)
    }

    fn time_function(&self, y: &Vector) -> Result<f64> {
        let t = y.temporal();
        if let Some(tube) = &self.tube {
            let rho = radial(y);
            let limit = match tube {
                Tube::Rotational(p) => p.f(t),
                Tube::Planar(b) => b.branch_x(t)?,
            };
            if rho > limit * (1.0 + 1e-12) {
                return Err(Error::OutsideChart(format!("radius {rho} exceeds boundary radius {limit} at t = {t}")));
            }
        }
        Ok(t)
    }

    fn locate(&self, y: &Vector) -> Result<(Vec<f64>, f64)> {
        let t = self.time_function(y)?;
        Ok((y.spatial().to_vec(), t))
    }

    fn lambda_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Height of the leaf anchored at `lambda` above radius `rho` and its partial
/// derivatives `(H, dH/drho, dH/dlambda)`.
fn leaf_jet<T: Real>(p: &RotationalProfile, lambda: T, rho: T) -> (T, T, T) {
    let (f, df, d2f) = p.jet(lambda);
    let one = T::one();
    let two = T::two();
    let q = (f * f * (one - df * df) + df * df * rho * rho).sqrt();
    let n = rho * rho - f * f;
    let d = q + f;
    let h = lambda + df * n / d;
    let h_rho = df * rho / q;
    let q_l = (f * df * (one - df * df) + df * d2f * n) / q;
    let n_l = -two * f * df;
    let d_l = q_l + df;
    let h_l = one + (d2f * n + df * n_l) / d - df * n * d_l / (d * d);
    (h, h_rho, h_l)
}

/// Chart whose leaves are the CMC leaves of a rotational tube.
///
/// Chart coordinates are the points of the reference leaf `lambda_ref`
/// (parametrised by their projection to the `t = const` plane); a point is
/// moved to other leaves along the orthogonal trajectories
/// `drho/dlambda = H_lambda u_rho / (1 - u_rho^2)`.
#[derive(Clone, Debug)]
pub struct RotationalLeafChart {
    pub profile: RotationalProfile,
    pub lambda_ref: f64,
    pub steps_per_unit: usize,
}

impl RotationalLeafChart {
    pub fn new(profile: RotationalProfile, lambda_ref: f64) -> Self {
        Self { profile, lambda_ref, steps_per_unit: 256 }
    }

    /// Radius of the parameter disk.
    pub fn sigma_max(&self) -> f64 {
        self.profile.f(self.lambda_ref)
    }

    fn rhs<T: Real>(&self, lambda: T, rho: T) -> T {
        let (_, s, hl) = leaf_jet(&self.profile, lambda, rho);
        hl * s / (T::one() - s * s)
    }

    /// Radius reached from reference radius `sigma` on leaf `lambda`.
    fn trajectory<T: Real>(&self, sigma: T, lambda: f64) -> T {
        let span = lambda - self.lambda_ref;
        let steps = ((span.abs() * self.steps_per_unit as f64).ceil() as usize).max(1);
        let h = span / steps as f64;
        let ht = T::of(h);
        let half = T::half();
        let mut rho = sigma;
        for k in 0..steps {
            let l = T::of(self.lambda_ref + k as f64 * h);
            let k1 = self.rhs(l, rho);
            let k2 = self.rhs(l + ht * half, rho + ht * half * k1);
            let k3 = self.rhs(l + ht * half, rho + ht * half * k2);
            let k4 = self.rhs(l + ht, rho + ht * k3);
            rho = rho + ht / T::of(6.0) * (k1 + T::two() * (k2 + k3) + k4);
        }
        rho
    }

    /// `(rho, drho/dsigma)`.
    fn radius_jet(&self, sigma: f64, lambda: f64) -> (f64, f64) {
        let r: Dual = self.trajectory(dual_var(sigma), lambda);
        (r.x, dual_deriv(r))
    }

    fn polar(&self, x: &[f64]) -> Result<(f64, f64, f64)> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch(x.len(), 2));
        }
        let sigma = x[0].hypot(x[1]);
        if sigma > self.sigma_max() * (1.0 + 1e-12) {
            return Err(Error::OutsideChart(format!("parameter radius {sigma} exceeds {}", self.sigma_max())));
        }
        let (c, s) = if sigma > 0.0 { (x[0] / sigma, x[1] / sigma) } else { (1.0, 0.0) };
        Ok((sigma, c, s))
    }
}

impl FoliationChart for RotationalLeafChart {
    fn name(&self) -> &'static str {
        "leaf"
    }

    fn dim(&self) -> usize {
        2
    }

    fn map(&self, x: &[f64], lambda: f64) -> Result<Vector> {
        let (sigma, c, s) = self.polar(x)?;
        let rho = self.trajectory(sigma, lambda);
        let (h, _, _) = leaf_jet(&self.profile, lambda, rho);
        Ok(Vector::new2(rho * c, rho * s, h))
    }

    fn d_lambda(&self, x: &[f64], lambda: f64) -> Result<Vector> {
        let (sigma, c, s) = self.polar(x)?;
        let rho = self.trajectory(sigma, lambda);
        let (_, slope, hl) = leaf_jet(&self.profile, lambda, rho);
        let rho_dot = self.rhs(lambda, rho);
        Ok(Vector::new2(rho_dot * c, rho_dot * s, hl + slope * rho_dot))
    }

    fn d_x(&self, x: &[f64], lambda: f64) -> Result<Vec<Vector>> {
        let (sigma, c, s) = self.polar(x)?;
        let (rho, drho) = self.radius_jet(sigma, lambda);
        let (_, slope, _) = leaf_jet(&self.profile, lambda, rho);
        // tangential stretch rho/sigma, with its limit drho/dsigma at the axis
        let stretch = if sigma > 1e-12 { rho / sigma } else { drho };
        let dir = [c, s];
        Ok((0..2)
            .map(|i| {
                let e = [if i == 0 { 1.0 } else { 0.0 }, if i == 1 { 1.0 } else { 0.0 }];
                let radial_part = dir[i] * drho;
                Vector::new2(
                    radial_part * dir[0] + stretch * (e[0] - dir[i] * dir[0]),
                    radial_part * dir[1] + stretch * (e[1] - dir[i] * dir[1]),
                    slope * radial_part,
                )
            })
            .collect())
    }

    fn leaf_graph(&self, lambda: f64, rho: f64) -> (f64, f64) {
        let (h, s, _) = leaf_jet(&self.profile, lambda, rho);
        (h, s)
    }

    /// Bisection on the leaf height at the point's radius, then secant polish.
    fn time_function(&self, y: &Vector) -> Result<f64> {
        let rho = radial(y);
        let t = y.temporal();
        let g = |l: f64| leaf_jet(&self.profile, l, rho).0 - t;
        let (mut lo, mut hi) = self.lambda_range();
        let (mut glo, ghi) = (g(lo), g(hi));
        if !(glo <= 0.0 && ghi >= 0.0) {
            return Err(Error::RootNotBracketed { lo, hi });
        }
        for _ in 0..200 {
            if hi - lo <= 1e-9 * (1.0 + lo.abs()) {
                break;
            }
            let m = 0.5 * (lo + hi);
            let gm = g(m);
            if gm <= 0.0 {
                lo = m;
                glo = gm;
            } else {
                hi = m;
            }
        }
        let (mut a, mut b) = (lo, hi);
        let (mut ga, mut gb) = (glo, g(hi));
        for _ in 0..20 {
            if gb == ga {
                break;
            }
            let next = b - gb * (b - a) / (gb - ga);
            a = b;
            ga = gb;
            b = next;
            gb = g(b);
            if gb.abs() <= 1e-14 * (1.0 + t.abs()) || (b - a).abs() <= 1e-15 * (1.0 + b.abs()) {
                break;
            }
        }
        let lambda = if gb.abs() <= g(lo).abs().min(g(hi).abs()) { b } else { 0.5 * (lo + hi) };
        if rho > self.profile.f(lambda) * (1.0 + 1e-10) {
            return Err(Error::OutsideChart(format!("radius {rho} outside the tube at leaf {lambda}")));
        }
        Ok(lambda)
    }

    fn locate(&self, y: &Vector) -> Result<(Vec<f64>, f64)> {
        let lambda = self.time_function(y)?;
        let rho = radial(y);
        let (c, s) = direction(y);
        let smax = self.sigma_max();
        // rho(sigma) is increasing: bisect on the reference radius
        let (mut lo, mut hi) = (0.0, smax);
        for _ in 0..80 {
            let m = 0.5 * (lo + hi);
            if self.trajectory(m, lambda) < rho {
                lo = m;
            } else {
                hi = m;
            }
        }
        let sigma = 0.5 * (lo + hi);
        Ok((vec![sigma * c, sigma * s], lambda))
    }

    fn lambda_range(&self) -> (f64, f64) {
        self.profile.z_range
    }
}

/// Sampled witnesses of the compatibility properties of a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartCompatibilityReport {
    pub orthogonality_max: f64,
    pub lapse_min: f64,
    pub boundary_alignment_max: f64,
    /// `(min, max)` of `-<V, V_hat>` along the boundary.
    pub v_hat_pairing: (f64, f64),
    pub max_leaf_volume: f64,
}

/// Samples leaves `lambda` in `[lo, hi]` and checks orthogonality, lapse,
/// boundary alignment, the pairing of `V` with `V_hat` and leaf volumes.
pub fn check_compatibility(
    chart: &dyn FoliationChart,
    tube: &Tube,
    lo: f64,
    hi: f64,
    samples: usize,
) -> Result<ChartCompatibilityReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let dim = chart.dim();
    let mut rep = ChartCompatibilityReport {
        orthogonality_max: 0.0,
        lapse_min: f64::INFINITY,
        boundary_alignment_max: 0.0,
        v_hat_pairing: (f64::INFINITY, f64::NEG_INFINITY),
        max_leaf_volume: 0.0,
    };
    for k in 0..samples {
        let lambda = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
        let y_sigma = match tube {
            Tube::Rotational(p) => Vector::new2(p.f(lambda), 0.0, lambda),
            Tube::Planar(b) => Vector::new1(b.branch_x(lambda)?, lambda),
        };
        let boundary_radius = radial(&y_sigma);
        let (xb, lb) = chart.locate(&y_sigma)?;
        let xb_norm = xb.iter().map(|c| c * c).sum::<f64>().sqrt();
        for frac in [0.0, 0.3, 0.7, 1.0] {
            let x: Vec<f64> = xb.iter().map(|c| c * frac).collect();
            let dl = chart.d_lambda(&x, lb)?;
            for dx in chart.d_x(&x, lb)? {
                rep.orthogonality_max = rep.orthogonality_max.max(dl.dot(&dx).abs());
            }
            rep.lapse_min = rep.lapse_min.min(chart.lapse(&x, lb)?);
            let g = chart.leaf_metric(&x, lb)?;
            let det = if dim == 1 { g[0][0] } else { g[0][0] * g[1][1] - g[0][1] * g[1][0] };
            if !(g[0][0] > 0.0 && det > 0.0) {
                return Err(Error::LeafNotSpacelike(lb));
            }
        }
        // boundary: outward coordinate direction versus the tube normal
        let on = chart.map(&xb, lb)?;
        let curv = tube.curvature_at(&on)?;
        let dx = chart.d_x(&xb, lb)?;
        let mut radial_dir = dx[0] * (xb[0] / xb_norm);
        if dim == 2 {
            radial_dir = radial_dir + dx[1] * (xb[1] / xb_norm);
        }
        let e = unit_spacelike(&radial_dir).ok_or(Error::LeafNotSpacelike(lb))?;
        rep.boundary_alignment_max = rep.boundary_alignment_max.max((e - curv.mu).euclidean_norm());
        let pairing = -curv.v.dot(&chart.hat_v(&xb, lb)?);
        rep.v_hat_pairing.0 = rep.v_hat_pairing.0.min(pairing);
        rep.v_hat_pairing.1 = rep.v_hat_pairing.1.max(pairing);
        rep.max_leaf_volume = rep.max_leaf_volume.max(leaf_volume(chart, lb, boundary_radius)?);
    }
    Ok(rep)
}

/// Volume of leaf `lambda` out to physical radius `rb`, by Simpson's rule.
pub fn leaf_volume(chart: &dyn FoliationChart, lambda: f64, rb: f64) -> Result<f64> {
    let m = 400;
    let h = rb / m as f64;
    let mut acc = 0.0;
    for j in 0..=m {
        let rho = j as f64 * h;
        let (_, s) = chart.leaf_graph(lambda, rho);
        if s.abs() >= 1.0 {
            return Err(Error::LeafNotSpacelike(lambda));
        }
        let w = if j == 0 || j == m {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let measure = if chart.dim() == 2 { 2.0 * std::f64::consts::PI * rho } else { 2.0 };
        acc += w * measure * (1.0 - s * s).sqrt();
    }
    Ok(acc * h / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pseudo_chart() -> RotationalLeafChart {
        RotationalLeafChart::new(RotationalProfile::pseudosphere(1.0, 0.0).with_range(-4.0, 4.0), 0.0)
    }

    #[test]
    fn flat_chart_examples() {
        let c = FlatChart::new(1);
        assert_eq!(c.hat_v(&[0.3], 2.0).unwrap(), Vector::e_t(1));
        assert_eq!(c.time_function(&Vector::new1(0.2, -0.7)).unwrap(), -0.7);
        let cyl = Tube::Rotational(RotationalProfile::cylinder(1.0));
        let inside = FlatChart::inside(&cyl);
        assert!(matches!(inside.time_function(&Vector::new2(1.5, 0.0, 0.0)), Err(Error::OutsideChart(_))));
        let rep = check_compatibility(&inside, &cyl, -1.0, 1.0, 5).unwrap();
        assert_eq!(rep.orthogonality_max, 0.0);
        assert_eq!(rep.lapse_min, 1.0);
        assert_eq!(rep.boundary_alignment_max, 0.0);
        assert!((rep.max_leaf_volume - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn flat_chart_against_trumpet_pairing_grows() {
        let t = Tube::Planar(crate::profile::PlanarBoundary::trumpet());
        let c = FlatChart::inside(&t);
        let short = check_compatibility(&c, &t, -2.0, 0.0, 20).unwrap();
        let long = check_compatibility(&c, &t, -2.0, 4.0, 20).unwrap();
        assert!(long.v_hat_pairing.1 > 3.0 * short.v_hat_pairing.1);
        assert!(long.max_leaf_volume > short.max_leaf_volume);
    }

    #[test]
    fn leaf_chart_axis_normal_is_vertical() {
        let c = pseudo_chart();
        for l in [-1.0, 0.0, 0.7, 2.0] {
            let v = c.hat_v(&[0.0, 0.0], l).unwrap();
            assert!((v - Vector::e_t(2)).euclidean_norm() < 1e-12);
        }
    }

    #[test]
    fn leaf_chart_boundary_stays_on_tube() {
        let c = pseudo_chart();
        for l in [-2.0, -0.5, 0.5, 1.5] {
            let y = c.map(&[c.sigma_max(), 0.0], l).unwrap();
            let p = &c.profile;
            assert!((radial(&y) - p.f(y.temporal())).abs() < 1e-10, "{y:?}");
        }
    }

    #[test]
    fn leaf_chart_compatibility_for_pseudosphere() {
        let c = pseudo_chart();
        let tube = Tube::Rotational(c.profile.clone());
        let rep = check_compatibility(&c, &tube, -1.5, 1.5, 7).unwrap();
        assert!(rep.boundary_alignment_max <= 1e-10, "{rep:?}");
        assert!(rep.orthogonality_max <= 1e-10);
        assert!(rep.lapse_min > 0.0);
        assert!(rep.v_hat_pairing.0 >= 1.0 - 1e-10);
    }

    #[test]
    fn time_function_recovers_anchor() {
        let c = pseudo_chart();
        for z0 in [-1.2, 0.0, 0.9] {
            for rho in [0.0, 0.4, 0.9] {
                let rho = rho * c.profile.f(z0);
                let y = Vector::new2(rho, 0.0, leaf_jet(&c.profile, z0, rho).0);
                assert!((c.time_function(&y).unwrap() - z0).abs() <= 1e-10);
            }
        }
        assert!(c.time_function(&Vector::new2(5.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn leaf_jet_partials_match_differences() {
        let p = RotationalProfile::sine_tube(2.0, 0.5, 1.0);
        for (l, r) in [(0.3f64, 1.0f64), (2.0, 0.5), (4.5, 2.1)] {
            let (_, hr, hl) = leaf_jet(&p, l, r);
            let e = 1e-6;
            let fr = (leaf_jet(&p, l, r + e).0 - leaf_jet(&p, l, r - e).0) / (2.0 * e);
            let fl = (leaf_jet(&p, l + e, r).0 - leaf_jet(&p, l - e, r).0) / (2.0 * e);
            assert!((hr - fr).abs() < 1e-8 && (hl - fl).abs() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn leaf_chart_is_orthogonal(sx in -0.99..0.99f64, sy in -0.99..0.99f64, l in -1.5..1.5f64) {
            let c = pseudo_chart();
            let x = [sx * 0.7, sy * 0.7];
            let dl = c.d_lambda(&x, l).unwrap();
            for dx in c.d_x(&x, l).unwrap() {
                prop_assert!(dl.dot(&dx).abs() <= 1e-10);
            }
            let v = c.hat_v(&x, l).unwrap();
            prop_assert!((v.square() + 1.0).abs() <= 1e-12);
        }

        #[test]
        fn time_function_inverts_map(sx in 0.0..0.99f64, l in -1.5..1.5f64) {
            let c = pseudo_chart();
            let y = c.map(&[sx, 0.0], l).unwrap();
            prop_assert!((c.time_function(&y).unwrap() - l).abs() <= 1e-10);
        }
    }
}
