//! Runtime checks along discrete trajectories: the volume identity, the
//! evolution equations of `H` and `v`, the boundary derivative identities,
//! witness constants for the a-priori estimates, and the stability certificate
//! of maximal limits.
//!
//! Monitors work in `f64` and in ambient flat coordinates.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::chart::FlatChart;
use crate::error::{Error, Result};
use crate::flow::{StepRecord, Trajectory};
use crate::graph::disk::Stencil;
use crate::graph::{self, operators, Domain, FlowState, GeometryFields};
use crate::lorentz::SpacetimeVector;
use crate::profile::Tube;
use crate::scalar::{dual, dual_deriv, Dual};

type Vector = SpacetimeVector<f64>;

/// Rays used to sample the rim of a disk grid.
pub const RIM_RAYS: usize = 64;

/// Slack allowed in the monotonicity of `sup |H|`.
pub const MONOTONE_SLACK: f64 = 1e-8;

fn flat_geometry(state: &FlowState<f64>, tube: &Tube) -> Result<GeometryFields<f64>> {
    graph::geometry(state, tube, &FlatChart::new(state.dim()))
}

// ---------------------------------------------------------------------------
// rim sampling

/// Boundary point of a graph with its future unit normal.
#[derive(Clone, Debug)]
pub struct RimPoint {
    pub y: Vector,
    pub nu: Vector,
    /// Node index (ray index on disks) used in reports.
    pub node: usize,
}

#[derive(Clone, Debug)]
enum RimRule {
    /// Nodes ordered inward from the boundary, spacing `h`, conormal factor `1/w`.
    Line { idx: [usize; 3], h: f64, w: f64 },
    /// Biquadratic value and gradient stencils on core nodes; `dir` is the outward normal.
    Disk { val: Stencil<f64>, gx: Stencil<f64>, gy: Stencil<f64>, dir: [f64; 2] },
}

/// Boundary sampling rules of a state: extrapolated values and outward
/// conormal derivatives of node fields.
#[derive(Clone, Debug)]
pub struct Rim {
    pub points: Vec<RimPoint>,
    rules: Vec<RimRule>,
    /// For disks: padded array size and geometry node indices.
    padding: Option<(usize, Vec<usize>)>,
}

impl Rim {
    pub fn new(state: &FlowState<f64>, geo: &GeometryFields<f64>) -> Result<Self> {
        let n = geo.nodes.len();
        let h = state.spacing();
        let line = |b: usize, idx: [usize; 3]| {
            (
                RimPoint { y: state.point(geo.nodes[b], geo.pos[b]), nu: geo.nu[b], node: geo.nodes[b] },
                RimRule::Line { idx, h, w: geo.w[b] },
            )
        };
        let (pairs, padding): (Vec<_>, _) = match &state.domain {
            Domain::Interval { .. } => (vec![line(0, [1, 2, 3]), line(n - 1, [n - 2, n - 3, n - 4])], None),
            Domain::Radial { .. } => (vec![line(n - 1, [n - 2, n - 3, n - 4])], None),
            Domain::Disk(d) => {
                let mut u = state.u.clone();
                d.fill_ghosts(&mut u);
                let mut out = Vec::with_capacity(RIM_RAYS);
                for ray in 0..RIM_RAYS {
                    let th = 2.0 * std::f64::consts::PI * ray as f64 / RIM_RAYS as f64;
                    let dir = [th.cos(), th.sin()];
                    let p = [d.radius * dir[0], d.radius * dir[1]];
                    let (su, sx, sy) = d.stencil_with_gradient(p)?;
                    let du = [sx.apply(&u), sy.apply(&u)];
                    let vh = (1.0 - du[0] * du[0] - du[1] * du[1]).sqrt().recip();
                    let nu = SpacetimeVector::new2(vh * du[0], vh * du[1], vh);
                    let (val, gx, gy) = d.core_stencil_with_gradient(p)?;
                    out.push((
                        RimPoint { y: SpacetimeVector::new2(p[0], p[1], su.apply(&u)), nu, node: ray },
                        RimRule::Disk { val, gx, gy, dir },
                    ));
                }
                (out, Some((d.n * d.n, geo.nodes.clone())))
            }
        };
        if n < 4 {
            return Err(Error::InvalidArgument("rim sampling needs at least four nodes".into()));
        }
        let (points, rules) = pairs.into_iter().unzip();
        Ok(Self { points, rules, padding })
    }

    /// `(value, outward conormal derivative)` of a field given on the geometry nodes.
    pub fn eval(&self, f: &[f64]) -> Vec<(f64, f64)> {
        let padded = self.padding.as_ref().map(|(size, nodes)| {
            let mut p = vec![0.0; *size];
            for (i, &k) in nodes.iter().enumerate() {
                p[k] = f[i];
            }
            p
        });
        self.rules
            .iter()
            .map(|r| match r {
                RimRule::Line { idx, h, w } => {
                    let (a, b, c) = (f[idx[0]], f[idx[1]], f[idx[2]]);
                    (3.0 * a - 3.0 * b + c, (2.5 * a - 4.0 * b + 1.5 * c) / (h * w))
                }
                RimRule::Disk { val, gx, gy, dir } => {
                    let p = padded.as_ref().expect("disk rim carries padding");
                    (val.apply(p), gx.apply(p) * dir[0] + gy.apply(p) * dir[1])
                }
            })
            .collect()
    }

    /// Outward conormal derivative of the vector field `nu`.
    fn eval_normal(&self, geo: &GeometryFields<f64>) -> Vec<Vector> {
        let dim = geo.nu[0].dim();
        let comps: Vec<Vec<(f64, f64)>> = (0..=dim)
            .map(|a| self.eval(&geo.nu.iter().map(|v| v.component(a)).collect::<Vec<_>>()))
            .collect();
        (0..self.points.len())
            .map(|p| Vector::from_components(dim, &comps.iter().map(|c| c[p].1).collect::<Vec<_>>()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// volume identity

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeIdentity {
    /// `|dVol - int int H^2| / max(1, |dVol|)`.
    pub residual: f64,
    pub volume_change: f64,
    pub h2_integral: f64,
}

/// Compares the volume change with the trapezoid time integral of `int H^2 dV`.
pub fn volume_identity(traj: &Trajectory<f64>) -> Result<VolumeIdentity> {
    volume_identity_records(&traj.records)
}

pub fn volume_identity_records(records: &[StepRecord]) -> Result<VolumeIdentity> {
    if records.len() < 2 {
        return Err(Error::InsufficientStates { need: 2, have: records.len() });
    }
    let integral: f64 = records.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].int_h2 + w[1].int_h2)).sum();
    let change = records[records.len() - 1].volume - records[0].volume;
    Ok(VolumeIdentity {
        residual: (change - integral).abs() / change.abs().max(1.0),
        volume_change: change,
        h2_integral: integral,
    })
}

// ---------------------------------------------------------------------------
// evolution equations

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvolutionResiduals {
    /// `max |(d/dt - Delta) H + H |A|^2|`.
    pub res_h: f64,
    /// `max |(d/dt - Delta) v + v|A|^2 - 2 g^ij A(DV_i, j) - g^ij <D^2_ij V, nu>|`.
    pub res_v: f64,
    pub windows: usize,
}

/// Ambient derivative of the extended field `V` at `y` along `x`.
fn dir_deriv(tube: &Tube, y: &Vector, x: &Vector) -> Vector {
    let dim = y.dim();
    let c: Vec<Dual> = (0..=dim).map(|a| dual(y.component(a), x.component(a))).collect();
    tube.v_field(&SpacetimeVector::from_components(dim, &c)).map(dual_deriv)
}

/// Ambient second derivative `D^2 V(x, z)` by central differences of [`dir_deriv`].
fn dir_deriv2(tube: &Tube, y: &Vector, x: &Vector, z: &Vector) -> Vector {
    let d = 1e-5;
    let (p, m) = (*y + *z * d, *y - *z * d);
    (dir_deriv(tube, &p, x) - dir_deriv(tube, &m, x)) * (0.5 / d)
}

/// Right-hand side of the `v` evolution at one node, beyond `-v|A|^2`.
fn v_source(tube: &Tube, y: &Vector, du: [f64; 2], d2u: [[f64; 2]; 2], nu: &Vector) -> f64 {
    let dim = y.dim();
    let tangents: Vec<Vector> = match dim {
        1 => vec![SpacetimeVector::new1(1.0, du[0])],
        _ => vec![SpacetimeVector::new2(1.0, 0.0, du[0]), SpacetimeVector::new2(0.0, 1.0, du[1])],
    };
    let q = du[0] * du[0] + du[1] * du[1];
    let vh2 = 1.0 / (1.0 - q);
    let vh = vh2.sqrt();
    let gi = graph::inverse_metric(du, vh2);
    let dv: Vec<Vector> = tangents.iter().map(|x| dir_deriv(tube, y, x)).collect();
    // tangential part of DV(F_i) in coordinates: w_i^k = g^{kl} <DV(F_i), F_l>
    let mut two_a = 0.0;
    let mut hess = 0.0;
    for i in 0..dim {
        let proj: Vec<f64> = tangents.iter().map(|f| dv[i].dot(f)).collect();
        for j in 0..dim {
            let mut a_ij = 0.0;
            for k in 0..dim {
                let w_ik: f64 = (0..dim).map(|l| gi[k][l] * proj[l]).sum();
                a_ij += w_ik * vh * d2u[k][j];
            }
            two_a += 2.0 * gi[i][j] * a_ij;
            hess += gi[i][j] * dir_deriv2(tube, y, &tangents[i], &tangents[j]).dot(nu);
        }
    }
    two_a + hess
}

/// Residuals of the heat-operator identities for `H` and `v` on the stored
/// three-state probe windows, with centred time differences taken along the
/// normal motion.
pub fn evolution_residuals(traj: &Trajectory<f64>, tube: &Tube) -> Result<EvolutionResiduals> {
    if traj.probes.is_empty() {
        return Err(Error::InsufficientStates { need: 3, have: traj.states.len().min(2) });
    }
    let mut out = EvolutionResiduals::default();
    for [s0, s1, s2] in &traj.probes {
        let (g0, g1, g2) = (flat_geometry(s0, tube)?, flat_geometry(s1, tube)?, flat_geometry(s2, tube)?);
        let dt = s2.t - s0.t;
        let lap_h = operators::laplace_beltrami(s1, &g1, &g1.mean_curvature)?;
        let grad_h = operators::gradient(s1, &g1, &g1.mean_curvature)?;
        let lap_v = operators::laplace_beltrami(s1, &g1, &g1.v)?;
        let grad_v = operators::gradient(s1, &g1, &g1.v)?;
        for i in 0..g1.nodes.len() {
            let (Some(lh), Some(gh), Some(lv), Some(gv)) = (lap_h[i], grad_h[i], lap_v[i], grad_v[i]) else {
                continue;
            };
            let (du, d2u) = (g1.du[i], g1.d2u[i]);
            let (_, vh, h, a2, tr) = graph::pointwise(du, d2u);
            // node velocity minus the tangential part of the normal motion
            let xdot = [(g2.pos[i][0] - g0.pos[i][0]) / dt, (g2.pos[i][1] - g0.pos[i][1]) / dt];
            let shift = [xdot[0] - tr * vh * vh * du[0], xdot[1] - tr * vh * vh * du[1]];
            let dn = |f0: f64, f2: f64, g: [f64; 2]| (f2 - f0) / dt - shift[0] * g[0] - shift[1] * g[1];
            let dh = dn(g0.mean_curvature[i], g2.mean_curvature[i], gh);
            out.res_h = out.res_h.max((dh - lh + h * a2).abs());
            let v = g1.v[i];
            let dv = dn(g0.v[i], g2.v[i], gv);
            let y = s1.point(g1.nodes[i], g1.pos[i]);
            let rhs = -v * a2 + v_source(tube, &y, du, d2u, &g1.nu[i]);
            out.res_v = out.res_v.max((dv - lv - rhs).abs());
        }
        out.windows += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// boundary identities

/// Boundary data of one state at the rim point with the largest residual.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundarySample {
    pub t: f64,
    pub h_mu: f64,
    /// `-H A(nu, nu)`.
    pub h_rhs: f64,
    pub v_mu: f64,
    /// `-v [A(nu, nu) - A(V, V)]`.
    pub v_rhs: f64,
    /// Largest `grad_mu H^2 + 2 H^2 A(V, V)` over the rim.
    pub h2_combo: f64,
    /// Largest `grad_mu v` over the rim.
    pub v_mu_max: f64,
    /// Smallest `A(nu, nu)` over the rim.
    pub a_nn_min: f64,
    pub res_hmu: f64,
    pub res_vmu: f64,
}

/// Evaluates both boundary identities on one state.
///
/// `grad_mu v` is taken as `-<V, grad_mu nu>` with `V` the boundary eigenfield,
/// i.e. for an extension of `V` that is parallel along `mu`.
pub fn boundary_sample(state: &FlowState<f64>, tube: &Tube) -> Result<BoundarySample> {
    let geo = flat_geometry(state, tube)?;
    let rim = Rim::new(state, &geo)?;
    let hv = rim.eval(&geo.mean_curvature);
    let dnu = rim.eval_normal(&geo);
    let mut out = BoundarySample {
        t: state.t,
        h2_combo: f64::NEG_INFINITY,
        v_mu_max: f64::NEG_INFINITY,
        a_nn_min: f64::INFINITY,
        ..BoundarySample::default()
    };
    let mut worst = f64::NEG_INFINITY;
    for (p, pt) in rim.points.iter().enumerate() {
        let c = tube.curvature_at(&pt.y)?;
        let a_nn = c.form(&pt.nu);
        let (h, h_mu) = hv[p];
        let v = -c.v.dot(&pt.nu);
        // derivatives of a unit normal are tangent; drop the discretisation's normal part
        let dn = dnu[p] + pt.nu * dnu[p].dot(&pt.nu);
        let v_mu = -c.v.dot(&dn);
        let h_rhs = -h * a_nn;
        let v_rhs = -v * (a_nn - c.a_vv);
        let (rh, rv) = ((h_mu - h_rhs).abs(), (v_mu - v_rhs).abs());
        out.res_hmu = out.res_hmu.max(rh);
        out.res_vmu = out.res_vmu.max(rv);
        out.h2_combo = out.h2_combo.max(2.0 * h * h_mu + 2.0 * h * h * c.a_vv);
        out.v_mu_max = out.v_mu_max.max(v_mu);
        out.a_nn_min = out.a_nn_min.min(a_nn);
        if rh.max(rv) > worst {
            worst = rh.max(rv);
            (out.h_mu, out.h_rhs, out.v_mu, out.v_rhs) = (h_mu, h_rhs, v_mu, v_rhs);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryIdentities {
    pub res_hmu: f64,
    pub res_vmu: f64,
    /// Largest `grad_mu v` over all samples.
    pub max_v_mu: f64,
    /// Largest `grad_mu H^2 + 2 H^2 A(V,V)` over all samples.
    pub max_h2_combo: f64,
    pub samples: Vec<BoundarySample>,
}

/// Boundary identities on every stored snapshot.
///
/// The identities follow from differentiating the boundary condition in time,
/// so initial data need not satisfy them; the residual maxima skip the first
/// snapshot unless it is the only one.
pub fn boundary_identities(traj: &Trajectory<f64>, tube: &Tube) -> Result<BoundaryIdentities> {
    let mut out = BoundaryIdentities { max_v_mu: f64::NEG_INFINITY, max_h2_combo: f64::NEG_INFINITY, ..Default::default() };
    let skip = usize::from(traj.states.len() > 1);
    for (k, s) in traj.states.iter().enumerate() {
        let b = boundary_sample(s, tube)?;
        if k >= skip {
            out.res_hmu = out.res_hmu.max(b.res_hmu);
            out.res_vmu = out.res_vmu.max(b.res_vmu);
        }
        out.max_v_mu = out.max_v_mu.max(b.v_mu_max);
        out.max_h2_combo = out.max_h2_combo.max(b.h2_combo);
        out.samples.push(b);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// estimates

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradientFit {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CurvatureFit {
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EstimateReport {
    /// `sup |H|` nonincreasing within [`MONOTONE_SLACK`].
    pub h_sup_monotone: bool,
    /// Whether `A(nu, nu) >= 0` held on every sampled boundary, so that the
    /// monotonicity is expected.
    pub monotone_expected: bool,
    pub max_h_increase: f64,
    /// Witnesses for `sup v <= C1 exp(C2 osc u)`.
    pub gradient: GradientFit,
    /// Witnesses for `sup |H| <= C1 + C2 (sup v)^p` with `p = 1/2`.
    pub curvature: CurvatureFit,
    /// Exponent in `(0, 1)` with the best least-squares fit.
    pub best_p: f64,
}

/// Least-squares slope and intercept of `y` against `x`; `None` if `x` is constant.
fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 1e-300) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn curvature_fit(hr: &[f64], vr: &[f64], p: f64) -> (CurvatureFit, f64) {
    let x: Vec<f64> = vr.iter().map(|v| v.powf(p)).collect();
    let (c2, sse) = match least_squares(&x, hr) {
        Some((s, b)) => (s.max(0.0), x.iter().zip(hr).map(|(xi, yi)| (yi - s * xi - b).powi(2)).sum()),
        None => (0.0, f64::INFINITY),
    };
    let c1 = x.iter().zip(hr).map(|(xi, yi)| yi - c2 * xi).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    (CurvatureFit { c1, c2, p }, sse)
}

/// Witness constants for the estimates along the recorded scalars.
pub fn estimate_monitors(traj: &Trajectory<f64>, tube: &Tube) -> Result<EstimateReport> {
    let r = &traj.records;
    if r.is_empty() {
        return Err(Error::InsufficientStates { need: 1, have: 0 });
    }
    let max_h_increase = r.windows(2).map(|w| w[1].sup_h - w[0].sup_h).fold(0.0, f64::max);
    let mut a_min = f64::INFINITY;
    for s in &traj.states {
        a_min = a_min.min(boundary_sample(s, tube)?.a_nn_min);
    }
    let osc: Vec<f64> = r.iter().map(|x| x.osc_u).collect();
    let logv: Vec<f64> = r.iter().map(|x| x.sup_v.max(1.0).ln()).collect();
    let c2 = least_squares(&osc, &logv).map_or(0.0, |(s, _)| s.max(0.0));
    let c1 = r.iter().map(|x| x.sup_v * (-c2 * x.osc_u).exp()).fold(0.0, f64::max);
    let (mut hr, mut vr) = (Vec::with_capacity(r.len()), Vec::with_capacity(r.len()));
    let (mut hm, mut vm) = (0.0f64, 0.0f64);
    for x in r {
        hm = hm.max(x.sup_h);
        vm = vm.max(x.sup_v);
        hr.push(hm);
        vr.push(vm);
    }
    let (curvature, _) = curvature_fit(&hr, &vr, 0.5);
    let best_p = (1..20)
        .map(|k| k as f64 * 0.05)
        .map(|p| (p, curvature_fit(&hr, &vr, p).1))
        .fold((0.5, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
        .0;
    Ok(EstimateReport {
        h_sup_monotone: max_h_increase <= MONOTONE_SLACK,
        monotone_expected: a_min >= -1e-12,
        max_h_increase,
        gradient: GradientFit { c1, c2 },
        curvature,
        best_p,
    })
}

// ---------------------------------------------------------------------------
// stability certificate

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCertificate {
    /// `R - |x - a|^2` per geometry node.
    pub phi: Vec<f64>,
    pub epsilon: f64,
    pub radius: f64,
    /// `min -(Delta phi - phi |A|^2)` over interior nodes.
    pub interior_margin: f64,
    /// `min (grad_mu phi + phi A(nu, nu))` over the rim.
    pub boundary_margin: f64,
    pub min_phi: f64,
    /// `max |Delta phi + 2n|`, which vanishes on maximal graphs.
    pub identity_residual: f64,
    pub ok: bool,
}

/// Below this `A(nu, nu)` counts as zero when checking the hypothesis.
pub const HYPOTHESIS_TOL: f64 = 1e-10;

/// Builds `phi = R - |x - a|^2` and tests the stability inequalities.
///
/// `R` defaults to the smallest value meeting the boundary inequality and
/// `phi >= epsilon`, plus `epsilon`. Fails with [`Error::HypothesisFailed`] if
/// `A(nu, nu) < 0` somewhere on the rim; where it vanishes no finite `R`
/// works and the certificate comes back with `ok = false`.
pub fn stability_certificate(
    state: &FlowState<f64>,
    tube: &Tube,
    center: &Vector,
    radius: Option<f64>,
    epsilon: f64,
) -> Result<StabilityCertificate> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let geo = flat_geometry(state, tube)?;
    let rim = Rim::new(state, &geo)?;
    let dist2 = |y: &Vector| (*y - *center).square();
    let mut bounds = Vec::with_capacity(rim.points.len());
    let mut degenerate = false;
    for pt in &rim.points {
        let c = tube.curvature_at(&pt.y)?;
        let a = c.form(&pt.nu);
        if a < -HYPOTHESIS_TOL {
            return Err(Error::HypothesisFailed { node: pt.node, value: a });
        }
        // grad_mu |x - a|^2 = 2 <x - a, mu>
        let dq = 2.0 * (pt.y - *center).dot(&c.mu);
        degenerate |= a <= HYPOTHESIS_TOL;
        bounds.push((dist2(&pt.y), dq, a));
    }
    let q: Vec<f64> = geo.nodes.iter().zip(&geo.pos).map(|(&k, p)| dist2(&state.point(k, *p))).collect();
    let sup_q = q.iter().chain(bounds.iter().map(|b| &b.0)).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let r = radius.unwrap_or_else(|| {
        let mut need = sup_q + epsilon;
        if !degenerate {
            for &(qb, dq, a) in &bounds {
                need = need.max(qb + dq / a);
            }
        }
        need + epsilon
    });
    let phi: Vec<f64> = q.iter().map(|x| r - x).collect();
    let lap = operators::laplace_beltrami(state, &geo, &phi)?;
    let n2 = 2.0 * state.dim() as f64;
    let (mut interior, mut ident) = (f64::INFINITY, 0.0f64);
    for (i, l) in lap.iter().enumerate() {
        if let Some(l) = l {
            interior = interior.min(-(l - phi[i] * geo.norm_a2[i]));
            ident = ident.max((l + n2).abs());
        }
    }
    let boundary = bounds.iter().map(|&(qb, dq, a)| -dq + (r - qb) * a).fold(f64::INFINITY, f64::min);
    let min_phi = phi.iter().copied().chain(bounds.iter().map(|b| r - b.0)).fold(f64::INFINITY, f64::min);
    Ok(StabilityCertificate {
        ok: !degenerate && interior >= epsilon && boundary >= 0.0 && min_phi >= epsilon,
        phi,
        epsilon,
        radius: r,
        interior_margin: interior,
        boundary_margin: boundary,
        min_phi,
        identity_residual: ident,
    })
}

// ---------------------------------------------------------------------------
// report

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonitorToggles {
    pub volume: bool,
    pub evolution: bool,
    pub boundary: bool,
    pub estimates: bool,
}

impl Default for MonitorToggles {
    fn default() -> Self {
        Self { volume: true, evolution: true, boundary: true, estimates: true }
    }
}

/// Per-record series plus a key-value summary.
#[derive(Clone, Debug, Default)]
pub struct MonitorReport {
    pub records: Vec<StepRecord>,
    pub boundary: Vec<BoundarySample>,
    pub volume: Option<VolumeIdentity>,
    pub evolution: Option<EvolutionResiduals>,
    pub boundary_identities: Option<BoundaryIdentities>,
    pub estimates: Option<EstimateReport>,
    /// Ordered `key = value` lines for the summary file.
    pub summary: Vec<(String, String)>,
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

impl MonitorReport {
    /// Runs the enabled monitors. Monitors lacking data are skipped and noted.
    pub fn build(traj: &Trajectory<f64>, tube: &Tube, toggles: MonitorToggles) -> Result<Self> {
        let mut rep = MonitorReport { records: traj.records.clone(), ..Default::default() };
        rep.push("event", traj.event.to_string());
        rep.push("steps", traj.steps.to_string());
        let last = traj.records.last().expect("trajectory has records");
        rep.push("final_t", fmt_f(last.t));
        rep.push("final_sup_h", fmt_f(last.sup_h));
        rep.push("final_sup_v", fmt_f(last.sup_v));
        rep.push("final_sup_v_hat", fmt_f(last.sup_v_hat));
        rep.push("final_volume", fmt_f(last.volume));
        rep.push("final_osc_u", fmt_f(last.osc_u));
        if toggles.volume && traj.records.len() >= 2 {
            let v = volume_identity(traj)?;
            rep.push("volume_identity_residual", fmt_f(v.residual));
            rep.push("volume_change", fmt_f(v.volume_change));
            rep.push("h2_time_integral", fmt_f(v.h2_integral));
            rep.volume = Some(v);
        }
        if toggles.evolution {
            if traj.probes.is_empty() {
                rep.push("evolution_residuals", "skipped (no probe windows)".into());
            } else {
                let e = evolution_residuals(traj, tube)?;
                rep.push("res_h", fmt_f(e.res_h));
                rep.push("res_v", fmt_f(e.res_v));
                rep.push("probe_windows", e.windows.to_string());
                rep.evolution = Some(e);
            }
        }
        if toggles.boundary {
            let b = boundary_identities(traj, tube)?;
            rep.push("res_hmu", fmt_f(b.res_hmu));
            rep.push("res_vmu", fmt_f(b.res_vmu));
            rep.push("max_grad_mu_v", fmt_f(b.max_v_mu));
            rep.push("max_grad_mu_h2_plus_2h2_avv", fmt_f(b.max_h2_combo));
            rep.boundary = b.samples.clone();
            rep.boundary_identities = Some(b);
        }
        if toggles.estimates {
            let e = estimate_monitors(traj, tube)?;
            rep.push("h_sup_monotone", e.h_sup_monotone.to_string());
            rep.push("h_sup_monotone_expected", e.monotone_expected.to_string());
            rep.push("max_h_increase", fmt_f(e.max_h_increase));
            rep.push("grad_fit_c1", fmt_f(e.gradient.c1));
            rep.push("grad_fit_c2", fmt_f(e.gradient.c2));
            rep.push("h_fit_c1", fmt_f(e.curvature.c1));
            rep.push("h_fit_c2", fmt_f(e.curvature.c2));
            rep.push("h_fit_p", fmt_f(e.curvature.p));
            rep.push("h_fit_best_p", fmt_f(e.best_p));
            rep.estimates = Some(e);
        }
        Ok(rep)
    }

    pub fn push(&mut self, key: &str, value: String) {
        self.summary.push((key.to_string(), value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// One row per record; boundary columns are filled on snapshot times.
    pub fn write_timeseries(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Io(format!("writing {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let nb = self.records.first().map_or(0, |r| r.boundary.len());
        let mut header: Vec<String> = ["step", "t", "volume", "int_h2", "sup_h", "sup_v", "sup_v_hat", "osc_u", "max_slope2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..nb).map(|i| format!("boundary_{i}")));
        header.extend(["grad_mu_h", "minus_h_a_nn", "grad_mu_v", "minus_v_a_diff"].iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(io)?;
        let mut b = self.boundary.iter().peekable();
        // one reused buffer per field: this file has a row per step
        let mut buf = String::new();
        let mut field = |w: &mut csv::Writer<fs::File>, x: Option<f64>| {
            buf.clear();
            if let Some(x) = x {
                let _ = write!(buf, "{x:.16e}");
            }
            w.write_field(&buf)
        };
        for r in &self.records {
            w.write_field(r.step.to_string()).map_err(io)?;
            for x in [r.t, r.volume, r.int_h2, r.sup_h, r.sup_v, r.sup_v_hat, r.osc_u, r.max_slope2].into_iter().chain(r.boundary.iter().copied()) {
                field(&mut w, Some(x)).map_err(io)?;
            }
            let rim = match b.peek() {
                Some(s) if s.t == r.t => {
                    let vals = [Some(s.h_mu), Some(s.h_rhs), Some(s.v_mu), Some(s.v_rhs)];
                    b.next();
                    vals
                }
                _ => [None; 4],
            };
            for x in rim {
                field(&mut w, x).map_err(io)?;
            }
            w.write_record(None::<&[u8]>).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.summary_text()).map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, StepControl};
    use crate::graph::DiskLayout;
    use crate::profile::{PlanarBoundary, RotationalProfile};
    use std::sync::Arc;

    fn cylinder() -> Tube {
        Tube::Rotational(RotationalProfile::cylinder(1.0))
    }

    fn flat_disk_run() -> Trajectory<f64> {
        let s = FlowState::disk(Arc::new(DiskLayout::new(21, 1.0).unwrap()), 0.0, |_, _| 0.0).unwrap();
        let ctrl = StepControl { max_steps: 20, h_stop: 0.0, stride: 5, probe_every: 5, ..StepControl::default() };
        run(s, &ctrl, &cylinder(), &FlatChart::new(2)).unwrap()
    }

    #[test]
    fn stationary_disk_has_vanishing_residuals() {
        let t = flat_disk_run();
        assert!(volume_identity(&t).unwrap().residual < 1e-12);
        let e = evolution_residuals(&t, &cylinder()).unwrap();
        assert!(e.res_h < 1e-12 && e.res_v < 1e-12, "{e:?}");
        let b = boundary_identities(&t, &cylinder()).unwrap();
        assert!(b.res_hmu < 1e-12 && b.res_vmu < 1e-12, "{b:?}");
        let m = estimate_monitors(&t, &cylinder()).unwrap();
        assert!(m.h_sup_monotone);
        assert_eq!(m.curvature.c1, 0.0);
    }

    #[test]
    fn least_squares_recovers_lines() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = x.map(|v| 2.0 * v - 1.0);
        let (s, b) = least_squares(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14);
        assert!(least_squares(&[1.0, 1.0], &[0.0, 2.0]).is_none());
    }

    #[test]
    fn rim_rule_extrapolates_quadratics() {
        let xb = 0.5f64.atanh();
        let s = FlowState::curve(41, -xb, xb, 0.0, |x: f64| x.cosh().ln()).unwrap();
        let tube = Tube::Planar(PlanarBoundary::trumpet());
        let g = flat_geometry(&s, &tube).unwrap();
        let rim = Rim::new(&s, &g).unwrap();
        let f: Vec<f64> = g.pos.iter().map(|p| 1.0 + p[0] * p[0]).collect();
        let vals = rim.eval(&f);
        let w = g.w[g.nodes.len() - 1];
        assert!((vals[1].0 - (1.0 + xb * xb)).abs() < 1e-12);
        assert!((vals[1].1 - 2.0 * xb / w).abs() < 1e-10);
        // outward at the left end is -x
        assert!((vals[0].1 - 2.0 * xb / w).abs() < 1e-10);
    }

    #[test]
    fn certificate_on_cylinder_disk_is_not_ok() {
        let s = FlowState::disk(Arc::new(DiskLayout::new(21, 1.0).unwrap()), 0.0, |_, _| 0.0).unwrap();
        let c = stability_certificate(&s, &cylinder(), &SpacetimeVector::new2(0.0, 0.0, 0.0), None, 1e-3).unwrap();
        assert!(!c.ok);
        assert!(c.boundary_margin < 0.0);
        assert!(c.identity_residual < 1e-9, "{}", c.identity_residual);
    }
}
