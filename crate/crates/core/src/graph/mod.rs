//! Discrete spacelike graphs `t = u(x)` and their induced geometry.
//!
//! All geometry is evaluated in ambient flat coordinates, where
//! `g = I - Du Du^T`, `v_hat = 1/sqrt(1 - |Du|^2)`, `nu = v_hat (Du, 1)` and
//! `h_ij = v_hat D^2_ij u`. Derivatives are second-order central differences;
//! boundary nodes use ghost values carrying the boundary slope.

pub mod disk;
pub mod operators;

use std::fmt;
use std::sync::Arc;

use crate::chart::FoliationChart;
use crate::error::{Error, Result};
use crate::lorentz::SpacetimeVector;
use crate::profile::Tube;
use crate::scalar::Real;

pub use disk::DiskLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// Interval `[x_L, x_R]` with both ends on a planar boundary curve.
    Curve1D,
    /// Rotationally symmetric graph on `[0, rho_b]`.
    Radial2D,
    /// Cartesian grid on a fixed disk (cylindrical boundary).
    Disk2D,
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridKind::Curve1D => "curve1d",
            GridKind::Radial2D => "radial2d",
            GridKind::Disk2D => "disk2d",
        })
    }
}

impl std::str::FromStr for GridKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "curve1d" => Ok(GridKind::Curve1D),
            "radial2d" => Ok(GridKind::Radial2D),
            "disk2d" => Ok(GridKind::Disk2D),
            other => Err(Error::InvalidArgument(format!("unknown grid kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub kind: GridKind,
    /// Node count (per axis for `Disk2D`).
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(kind: GridKind, nodes: usize) -> Result<Self> {
        if nodes < 5 {
            return Err(Error::InvalidArgument(format!("resolution must be at least 5, got {nodes}")));
        }
        Ok(Self { kind, nodes })
    }
}

/// Physical extent of the grid.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain<T> {
    Interval { left: T, right: T },
    Radial { radius: T },
    Disk(Arc<DiskLayout<T>>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChartKind {
    Flat,
    Leaf,
}

/// Graph height `u` per node at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState<T> {
    pub t: T,
    pub u: Vec<T>,
    pub domain: Domain<T>,
    pub grid: GridSpec,
    pub chart: ChartKind,
}

impl<T: Real> FlowState<T> {
    /// Graph over `[left, right]` sampled from `f`.
    pub fn curve(nodes: usize, left: T, right: T, t: T, f: impl Fn(T) -> T) -> Result<Self> {
        let grid = GridSpec::new(GridKind::Curve1D, nodes)?;
        let domain = Domain::Interval { left, right };
        let mut s = Self { t, u: vec![T::zero(); nodes], domain, grid, chart: ChartKind::Flat };
        s.u = s.positions().iter().map(|p| f(p[0])).collect();
        Ok(s)
    }

    /// Rotationally symmetric graph over `[0, radius]` sampled from `f(rho)`.
    pub fn radial(nodes: usize, radius: T, t: T, f: impl Fn(T) -> T) -> Result<Self> {
        let grid = GridSpec::new(GridKind::Radial2D, nodes)?;
        let domain = Domain::Radial { radius };
        let mut s = Self { t, u: vec![T::zero(); nodes], domain, grid, chart: ChartKind::Flat };
        s.u = s.positions().iter().map(|p| f(p[0])).collect();
        Ok(s)
    }

    /// Graph on the disk grid sampled from `f(x, y)`; ghosts are filled.
    pub fn disk(layout: Arc<DiskLayout<T>>, t: T, f: impl Fn(T, T) -> T) -> Result<Self> {
        let grid = GridSpec::new(GridKind::Disk2D, layout.diameter_nodes)?;
        let u = (0..layout.n * layout.n)
            .map(|k| {
                if layout.is_inside(k) {
                    let p = layout.position(k);
                    f(p[0], p[1])
                } else {
                    T::zero()
                }
            })
            .collect();
        let mut s = Self { t, u, domain: Domain::Disk(layout), grid, chart: ChartKind::Flat };
        s.fill_ghosts();
        Ok(s)
    }

    pub fn with_chart(mut self, chart: ChartKind) -> Self {
        self.chart = chart;
        self
    }

    pub fn fill_ghosts(&mut self) {
        if let Domain::Disk(d) = &self.domain {
            let d = d.clone();
            d.fill_ghosts(&mut self.u);
        }
    }

    pub fn dim(&self) -> usize {
        match self.grid.kind {
            GridKind::Curve1D => 1,
            _ => 2,
        }
    }

    /// Physical node spacing.
    pub fn spacing(&self) -> T {
        let m = T::of((self.grid.nodes - 1) as f64);
        match &self.domain {
            Domain::Interval { left, right } => (*right - *left) / m,
            Domain::Radial { radius } => *radius / m,
            Domain::Disk(d) => d.h,
        }
    }

    /// Reference coordinate per node: `[-1, 1]` on intervals, `[0, 1]` radially,
    /// `rho / r` on the disk.
    pub fn reference(&self) -> Vec<T> {
        let m = T::of((self.grid.nodes - 1) as f64);
        match &self.domain {
            Domain::Interval { .. } => (0..self.grid.nodes).map(|j| -T::one() + T::two() * T::of(j as f64) / m).collect(),
            Domain::Radial { .. } => (0..self.grid.nodes).map(|j| T::of(j as f64) / m).collect(),
            Domain::Disk(d) => (0..d.n * d.n)
                .map(|k| {
                    let p = d.position(k);
                    (p[0] * p[0] + p[1] * p[1]).sqrt() / d.radius
                })
                .collect(),
        }
    }

    /// Physical position of every node (`(rho, 0)` for radial grids).
    pub fn positions(&self) -> Vec<[T; 2]> {
        let h = self.spacing();
        match &self.domain {
            Domain::Interval { left, .. } => {
                (0..self.grid.nodes).map(|j| [*left + h * T::of(j as f64), T::zero()]).collect()
            }
            Domain::Radial { .. } => (0..self.grid.nodes).map(|j| [h * T::of(j as f64), T::zero()]).collect(),
            Domain::Disk(d) => (0..d.n * d.n).map(|k| d.position(k)).collect(),
        }
    }

    /// Nodes carrying unknowns.
    pub fn active(&self) -> Vec<usize> {
        match &self.domain {
            Domain::Disk(d) => d.inside.clone(),
            _ => (0..self.grid.nodes).collect(),
        }
    }

    /// Boundary coordinates: `[x_L, x_R]`, `[rho_b]` or `[r]`.
    pub fn boundary_pos(&self) -> Vec<T> {
        match &self.domain {
            Domain::Interval { left, right } => vec![*left, *right],
            Domain::Radial { radius } => vec![*radius],
            Domain::Disk(d) => vec![d.radius],
        }
    }

    /// Ambient point of node `k`.
    pub fn point(&self, k: usize, pos: [T; 2]) -> SpacetimeVector<T> {
        match self.dim() {
            1 => SpacetimeVector::new1(pos[0], self.u[k]),
            _ => SpacetimeVector::new2(pos[0], pos[1], self.u[k]),
        }
    }

    pub fn to_f64(&self) -> FlowState<f64> {
        let domain = match &self.domain {
            Domain::Interval { left, right } => Domain::Interval { left: left.as_f64(), right: right.as_f64() },
            Domain::Radial { radius } => Domain::Radial { radius: radius.as_f64() },
            Domain::Disk(d) => Domain::Disk(Arc::new(
                DiskLayout::new(d.diameter_nodes, d.radius.as_f64()).expect("layout already validated"),
            )),
        };
        FlowState { t: self.t.as_f64(), u: self.u.iter().map(|x| x.as_f64()).collect(), domain, grid: self.grid, chart: self.chart }
    }
}

/// Boundary slopes imposed through ghost nodes: `(left, right)` graph slopes
/// `u_x` for intervals, `u_rho` at the rim for radial grids.
pub fn boundary_slopes<T: Real>(state: &FlowState<T>, tube: &Tube) -> Result<(T, T)> {
    match (&state.domain, tube) {
        (Domain::Interval { left, right }, Tube::Planar(b)) => {
            Ok((-b.inverse_slope(-*left), b.inverse_slope(*right)))
        }
        (Domain::Radial { .. }, Tube::Rotational(p)) => {
            let ub = *state.u.last().expect("non-empty grid");
            Ok((T::zero(), p.df(ub)))
        }
        (Domain::Disk(_), Tube::Rotational(p)) if p.is_cylinder() => Ok((T::zero(), T::zero())),
        _ => Err(Error::GridMismatch(format!("grid {} does not fit boundary {tube}", state.grid.kind))),
    }
}

/// First and second derivatives of `u` at the active nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives<T> {
    pub nodes: Vec<usize>,
    pub pos: Vec<[T; 2]>,
    pub du: Vec<[T; 2]>,
    /// Cartesian Hessian; radially `diag(u_rr, u_r / rho)` at azimuth zero.
    pub d2u: Vec<[[T; 2]; 2]>,
    /// `|Du|^2` per node.
    pub q: Vec<T>,
    /// `g^{ij} u_ij` per node, the flow speed `u_t` before boundary advection.
    pub tr: Vec<T>,
}

pub fn derivatives<T: Real>(state: &FlowState<T>, tube: &Tube) -> Result<Derivatives<T>> {
    let h = state.spacing();
    let h2 = h * h;
    let two = T::two();
    let zero = T::zero();
    let (pl, pr) = boundary_slopes(state, tube)?;
    let u = &state.u;
    let n = state.grid.nodes;
    let m = match &state.domain {
        Domain::Disk(d) => d.inside.len(),
        _ => n,
    };
    let mut out = Derivatives {
        nodes: Vec::with_capacity(m),
        pos: Vec::with_capacity(m),
        du: Vec::with_capacity(m),
        d2u: Vec::with_capacity(m),
        q: Vec::with_capacity(m),
        tr: Vec::with_capacity(m),
    };
    let x0 = match &state.domain {
        Domain::Interval { left, .. } => *left,
        _ => zero,
    };
    let line_pos = |j: usize| [x0 + h * T::of(j as f64), zero];
    match state.grid.kind {
        GridKind::Curve1D => {
            let ghost_l = u[1] - two * h * pl;
            let ghost_r = u[n - 2] + two * h * pr;
            let inv_2h = (two * h).recip();
            let inv_h2 = h2.recip();
            let nb = |j: usize| {
                let um = if j == 0 { ghost_l } else { u[j - 1] };
                let up = if j == n - 1 { ghost_r } else { u[j + 1] };
                (um, up)
            };
            out.nodes.extend(0..n);
            out.pos.extend((0..n).map(line_pos));
            out.du.extend((0..n).map(|j| {
                let (um, up) = nb(j);
                [(up - um) * inv_2h, zero]
            }));
            out.d2u.extend((0..n).map(|j| {
                let (um, up) = nb(j);
                [[(up - two * u[j] + um) * inv_h2, zero], [zero, zero]]
            }));
        }
        GridKind::Radial2D => {
            let ghost_r = u[n - 2] + two * h * pr;
            for j in 0..n {
                out.nodes.push(j);
                out.pos.push(line_pos(j));
                if j == 0 {
                    let urr = two * (u[1] - u[0]) / h2;
                    out.du.push([zero, zero]);
                    out.d2u.push([[urr, zero], [zero, urr]]);
                } else {
                    let up = if j == n - 1 { ghost_r } else { u[j + 1] };
                    let ur = (up - u[j - 1]) / (two * h);
                    let urr = (up - two * u[j] + u[j - 1]) / h2;
                    out.du.push([ur, zero]);
                    out.d2u.push([[urr, zero], [zero, ur / (h * T::of(j as f64))]]);
                }
            }
        }
        GridKind::Disk2D => {
            let Domain::Disk(d) = &state.domain else { unreachable!() };
            let mut w = u.clone();
            d.fill_ghosts(&mut w);
            let m = d.n;
            let four = two * two;
            for &k in &d.inside {
                let at = |di: isize, dj: isize| w[(k as isize + dj * m as isize + di) as usize];
                let c = w[k];
                let ux = (at(1, 0) - at(-1, 0)) / (two * h);
                let uy = (at(0, 1) - at(0, -1)) / (two * h);
                let uxx = (at(1, 0) - two * c + at(-1, 0)) / h2;
                let uyy = (at(0, 1) - two * c + at(0, -1)) / h2;
                let uxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (four * h2);
                out.nodes.push(k);
                out.pos.push(d.position(k));
                out.du.push([ux, uy]);
                out.d2u.push([[uxx, uxy], [uxy, uyy]]);
            }
        }
    }
    out.q.extend(out.du.iter().map(|g| g[0] * g[0] + g[1] * g[1]));
    out.tr.extend(out.du.iter().zip(&out.d2u).zip(&out.q).map(|((du, d2u), &q)| trace(*du, *d2u, q)));
    Ok(out)
}

/// `g^{ij} u_ij` for a symmetric Hessian, given `q = |Du|^2`.
#[inline]
fn trace<T: Real>(du: [T; 2], d2u: [[T; 2]; 2], q: T) -> T {
    let vh2 = (T::one() - q).recip();
    (T::one() + vh2 * du[0] * du[0]) * d2u[0][0]
        + T::two() * vh2 * du[0] * du[1] * d2u[0][1]
        + (T::one() + vh2 * du[1] * du[1]) * d2u[1][1]
}

/// Pointwise graph geometry from first and second derivatives in flat
/// coordinates: `(|Du|^2, v_hat, H, |A|^2, g^{ij} u_ij)`.
#[inline]
pub fn pointwise<T: Real>(du: [T; 2], d2u: [[T; 2]; 2]) -> (T, T, T, T, T) {
    let q = du[0] * du[0] + du[1] * du[1];
    let vh2 = (T::one() - q).recip();
    let vh = vh2.sqrt();
    // S = ginv D^2u with ginv = I + v_hat^2 Du Du^T
    let gi = inverse_metric(du, vh2);
    let s = [
        [gi[0][0] * d2u[0][0] + gi[0][1] * d2u[1][0], gi[0][0] * d2u[0][1] + gi[0][1] * d2u[1][1]],
        [gi[1][0] * d2u[0][0] + gi[1][1] * d2u[1][0], gi[1][0] * d2u[0][1] + gi[1][1] * d2u[1][1]],
    ];
    let tr = s[0][0] + s[1][1];
    let tr2 = s[0][0] * s[0][0] + s[0][1] * s[1][0] + s[1][0] * s[0][1] + s[1][1] * s[1][1];
    (q, vh, vh * tr, vh2 * tr2, tr)
}

#[inline]
pub fn inverse_metric<T: Real>(du: [T; 2], vh2: T) -> [[T; 2]; 2] {
    [
        [T::one() + vh2 * du[0] * du[0], vh2 * du[0] * du[1]],
        [vh2 * du[1] * du[0], T::one() + vh2 * du[1] * du[1]],
    ]
}

/// Per-node geometry on the active nodes, plus global volume and oscillation.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometryFields<T> {
    pub nodes: Vec<usize>,
    pub pos: Vec<[T; 2]>,
    pub du: Vec<[T; 2]>,
    pub d2u: Vec<[[T; 2]; 2]>,
    pub g: Vec<[[T; 2]; 2]>,
    pub ginv: Vec<[[T; 2]; 2]>,
    /// Gradient function relative to the chart's leaf normal.
    pub v_hat: Vec<T>,
    /// Gradient function relative to the extended boundary field `V`.
    pub v: Vec<T>,
    pub nu: Vec<SpacetimeVector<T>>,
    pub mean_curvature: Vec<T>,
    pub norm_a2: Vec<T>,
    /// Volume carried by the node: quadrature weight times `sqrt(det g)`.
    pub dv: Vec<T>,
    /// `sqrt(1 - |Du|^2)`, the flat-chart `1/v_hat`.
    pub w: Vec<T>,
    pub volume: T,
    pub osc_u: T,
}

/// Quadrature weights on the active nodes (trapezoid; exact cell areas on the disk).
pub fn quadrature_weights<T: Real>(state: &FlowState<T>) -> Vec<T> {
    let h = state.spacing();
    let n = state.grid.nodes;
    let half = T::half();
    match &state.domain {
        Domain::Interval { .. } => (0..n).map(|j| if j == 0 || j == n - 1 { h * half } else { h }).collect(),
        Domain::Radial { .. } => {
            let tau = T::two() * T::PI();
            (0..n)
                .map(|j| {
                    let rho = h * T::of(j as f64);
                    let w = tau * rho * h;
                    if j == n - 1 {
                        w * half
                    } else {
                        w
                    }
                })
                .collect()
        }
        Domain::Disk(d) => d.inside.iter().map(|&k| d.weights[k]).collect(),
    }
}

pub fn geometry<T: Real>(state: &FlowState<T>, tube: &Tube, chart: &dyn FoliationChart) -> Result<GeometryFields<T>> {
    let d = derivatives(state, tube)?;
    let weights = quadrature_weights(state);
    let m = d.nodes.len();
    let mut gf = GeometryFields {
        nodes: d.nodes.clone(),
        pos: d.pos.clone(),
        du: d.du.clone(),
        d2u: d.d2u.clone(),
        g: Vec::with_capacity(m),
        ginv: Vec::with_capacity(m),
        v_hat: Vec::with_capacity(m),
        v: Vec::with_capacity(m),
        nu: Vec::with_capacity(m),
        mean_curvature: Vec::with_capacity(m),
        norm_a2: Vec::with_capacity(m),
        dv: Vec::with_capacity(m),
        w: Vec::with_capacity(m),
        volume: T::zero(),
        osc_u: T::zero(),
    };
    let flat = chart.name() == "flat";
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for i in 0..m {
        let k = d.nodes[i];
        let du = d.du[i];
        let (q, vh, h, a2, _) = pointwise(du, d.d2u[i]);
        if !(q < T::one()) {
            return Err(Error::GuardTripped { t: state.t.as_f64(), node: k, value: q.as_f64() });
        }
        if !(h.is_finite() && a2.is_finite()) {
            return Err(Error::NonFinite("mean curvature"));
        }
        let w = (T::one() - q).sqrt();
        let nu = match state.dim() {
            1 => SpacetimeVector::new1(vh * du[0], vh),
            _ => SpacetimeVector::new2(vh * du[0], vh * du[1], vh),
        };
        let y = state.point(k, d.pos[i]);
        let v = -tube.v_field(&y).dot(&nu);
        let (v_hat, tau) = if flat {
            (vh, state.u[k])
        } else {
            let yf = y.to_f64();
            let vhat_field = chart.hat_v_at(&yf)?;
            (T::of(-vhat_field.dot(&nu.to_f64())), T::of(chart.time_function(&yf)?))
        };
        lo = lo.min(tau);
        hi = hi.max(tau);
        gf.g.push([[T::one() - du[0] * du[0], -du[0] * du[1]], [-du[1] * du[0], T::one() - du[1] * du[1]]]);
        gf.ginv.push(inverse_metric(du, vh * vh));
        gf.v_hat.push(v_hat);
        gf.v.push(v);
        gf.nu.push(nu);
        gf.mean_curvature.push(h);
        gf.norm_a2.push(a2);
        gf.dv.push(weights[i] * w);
        gf.w.push(w);
        gf.volume = gf.volume + weights[i] * w;
    }
    gf.osc_u = hi - lo;
    Ok(gf)
}

/// Global scalars of a graph, as recorded once per time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphSummary<T> {
    pub sup_h: T,
    pub sup_v: T,
    pub sup_v_hat: T,
    pub volume: T,
    /// `int H^2 dV`.
    pub int_h2: T,
    pub osc_u: T,
    /// Largest `|Du|^2` and the node carrying it.
    pub max_slope2: (usize, T),
}

impl<T: Real> GraphSummary<T> {
    pub fn of(geo: &GeometryFields<T>) -> Self {
        let mut out = Self::empty();
        for i in 0..geo.nodes.len() {
            let h = geo.mean_curvature[i];
            out.sup_h = out.sup_h.max(h.abs());
            out.sup_v = out.sup_v.max(geo.v[i]);
            out.sup_v_hat = out.sup_v_hat.max(geo.v_hat[i]);
            out.int_h2 = out.int_h2 + h * h * geo.dv[i];
            let q = geo.du[i][0] * geo.du[i][0] + geo.du[i][1] * geo.du[i][1];
            if !(q <= out.max_slope2.1) {
                out.max_slope2 = (geo.nodes[i], q);
            }
        }
        out.volume = geo.volume;
        out.osc_u = geo.osc_u;
        out
    }

    fn empty() -> Self {
        let z = T::zero();
        Self { sup_h: z, sup_v: z, sup_v_hat: z, volume: z, int_h2: z, osc_u: z, max_slope2: (0, T::neg_infinity()) }
    }
}

/// [`GraphSummary`] from precomputed derivatives, without building the full
/// per-node fields when the chart is flat.
pub fn summary<T: Real>(
    state: &FlowState<T>,
    tube: &Tube,
    chart: &dyn FoliationChart,
    d: &Derivatives<T>,
) -> Result<GraphSummary<T>> {
    if chart.name() != "flat" {
        return Ok(GraphSummary::of(&geometry(state, tube, chart)?));
    }
    let weights = quadrature_weights(state);
    let mut out = GraphSummary::empty();
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    let dim = state.dim();
    let fields = d.nodes.iter().zip(&d.du).zip(&d.pos).zip(d.q.iter().zip(&d.tr)).zip(&weights);
    for ((((&k, &du), &pos), (&q, &tr)), &w) in fields {
        if !(q < T::one()) {
            return Err(Error::GuardTripped { t: state.t.as_f64(), node: k, value: q.as_f64() });
        }
        let lapse = (T::one() - q).sqrt();
        let vh = lapse.recip();
        let h = vh * tr;
        if !h.is_finite() {
            return Err(Error::NonFinite("mean curvature"));
        }
        // plain comparisons: NaN has been ruled out above
        if q > out.max_slope2.1 {
            out.max_slope2 = (k, q);
        }
        let u = state.u[k];
        let (nu, y) = if dim == 1 {
            (SpacetimeVector::new1(vh * du[0], vh), SpacetimeVector::new1(pos[0], u))
        } else {
            (SpacetimeVector::new2(vh * du[0], vh * du[1], vh), SpacetimeVector::new2(pos[0], pos[1], u))
        };
        let v = -tube.v_field(&y).dot(&nu);
        let dv = w * lapse;
        if h.abs() > out.sup_h {
            out.sup_h = h.abs();
        }
        if v > out.sup_v {
            out.sup_v = v;
        }
        if vh > out.sup_v_hat {
            out.sup_v_hat = vh;
        }
        out.volume = out.volume + dv;
        out.int_h2 = out.int_h2 + h * h * dv;
        if u < lo {
            lo = u;
        }
        if u > hi {
            hi = u;
        }
    }
    out.osc_u = hi - lo;
    Ok(out)
}

/// `max - min` of the time function along the graph.
pub fn oscillation<T: Real>(state: &FlowState<T>, chart: &dyn FoliationChart) -> Result<T> {
    let active = state.active();
    let pos = state.positions();
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for k in active {
        let tau = if chart.name() == "flat" {
            state.u[k]
        } else {
            T::of(chart.time_function(&state.point(k, pos[k]).to_f64())?)
        };
        lo = lo.min(tau);
        hi = hi.max(tau);
    }
    Ok(hi - lo)
}

/// Max over nodes of `| |grad u|^2 - psi^{-2}(v_hat^2 - 1) |` with `u` the time
/// function and the intrinsic gradient norm taken as `Delta(u^2)/2 - u Delta u`.
pub fn height_gradient_identity<T: Real>(state: &FlowState<T>, tube: &Tube, chart: &dyn FoliationChart) -> Result<T> {
    let geo = geometry(state, tube, chart)?;
    let flat = chart.name() == "flat";
    let mut tau = Vec::with_capacity(geo.nodes.len());
    let mut psi = Vec::with_capacity(geo.nodes.len());
    for (i, &k) in geo.nodes.iter().enumerate() {
        if flat {
            tau.push(state.u[k]);
            psi.push(T::one());
        } else {
            let y = state.point(k, geo.pos[i]).to_f64();
            let (x, l) = chart.locate(&y)?;
            tau.push(T::of(l));
            psi.push(T::of(chart.lapse(&x, l)?));
        }
    }
    let tau2: Vec<T> = tau.iter().map(|&x| x * x).collect();
    let lap = operators::laplace_beltrami(state, &geo, &tau)?;
    let lap2 = operators::laplace_beltrami(state, &geo, &tau2)?;
    let mut worst = T::zero();
    for i in 0..geo.nodes.len() {
        if let (Some(a), Some(b)) = (lap[i], lap2[i]) {
            let intrinsic = T::half() * b - tau[i] * a;
            let vh = geo.v_hat[i];
            let expected = (vh * vh - T::one()) / (psi[i] * psi[i]);
            worst = worst.max((intrinsic - expected).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::FlatChart;
    use crate::profile::{PlanarBoundary, RotationalProfile};
    use std::f64::consts::PI;

    fn trumpet() -> Tube {
        Tube::Planar(PlanarBoundary::trumpet())
    }

    fn translator(nodes: usize, t: f64) -> FlowState<f64> {
        let xb = t.exp().atanh();
        FlowState::curve(nodes, -xb, xb, t, |x: f64| x.cosh().ln() + t).unwrap()
    }

    #[test]
    fn flat_disk_geometry() {
        let tube = Tube::Rotational(RotationalProfile::cylinder(1.5));
        let layout = Arc::new(DiskLayout::new(31, 1.5).unwrap());
        let s = FlowState::disk(layout, 0.0, |_, _| 0.7).unwrap();
        let g = geometry(&s, &tube, &FlatChart::new(2)).unwrap();
        assert!(g.mean_curvature.iter().all(|&h: &f64| h.abs() < 1e-10));
        assert!(g.v_hat.iter().all(|&v| v == 1.0));
        assert!((g.volume - PI * 2.25).abs() < 1e-12);
        assert_eq!(g.osc_u, 0.0);
    }

    #[test]
    fn translator_geometry() {
        let s = translator(201, -0.5);
        let g = geometry(&s, &trumpet(), &FlatChart::new(1)).unwrap();
        let h = s.spacing();
        let m = g.nodes.len();
        for i in 0..m {
            let x = g.pos[i][0];
            // ghost closure makes u_xx first order at the two ends
            let tol = if i == 0 || i == m - 1 { h } else { 4.0 * h * h };
            assert!((g.v_hat[i] - x.cosh()).abs() < 2.0 * h * h);
            assert!((g.mean_curvature[i] - x.cosh()).abs() < tol, "{x}: {} vs {}", g.mean_curvature[i], x.cosh());
            let (_, _, _, _, rate) = pointwise(g.du[i], g.d2u[i]);
            assert!((rate - 1.0).abs() < tol);
            // nu meets the boundary field only on the boundary
            if i == 0 || i == m - 1 {
                assert!((g.v[i] - 1.0).abs() < 1e-9, "{} {}", x, g.v[i]);
            }
        }
    }

    #[test]
    fn hyperboloid_mean_curvature() {
        let r = 1.7;
        let tube = Tube::Rotational(RotationalProfile::pseudosphere(1.0, 0.0));
        for n in [41, 81] {
            let s = FlowState::radial(n, 1.2, 0.0, |rho: f64| (r * r + rho * rho).sqrt()).unwrap();
            // boundary ghost uses the exact slope of the hyperboloid here
            let mut d = derivatives(&s, &tube).unwrap();
            let last = n - 1;
            let rho = 1.2;
            d.du[last][0] = rho / (r * r + rho * rho).sqrt();
            let h = s.spacing();
            for i in 0..last {
                let (_, _, hm, _, _) = pointwise(d.du[i], d.d2u[i]);
                assert!((hm.abs() * r - 2.0).abs() < 2.0 * h * h, "node {i}: {hm}");
            }
        }
    }

    #[test]
    fn oscillation_examples() {
        let flat = FlatChart::new(1);
        let s = FlowState::curve(11, -1.0, 1.0, 0.0, |_| 3.0).unwrap();
        assert_eq!(oscillation(&s, &flat).unwrap(), 0.0);
        let s = FlowState::curve(11, -1.0, 1.0, 0.0, |x: f64| x.cosh().ln()).unwrap();
        assert!((oscillation(&s, &flat).unwrap() - 1f64.cosh().ln()).abs() < 1e-15);
        let layout = Arc::new(DiskLayout::new(41, 1.0).unwrap());
        let s = FlowState::disk(layout, 0.0, |x: f64, y: f64| 0.1 * (1.0 - x * x - y * y).powi(2)).unwrap();
        assert!((oscillation(&s, &FlatChart::new(2)).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn height_gradient_identity_converges() {
        let chart = FlatChart::new(1);
        let c = FlowState::curve(21, -0.3, 0.3, 0.0, |_| 1.0).unwrap();
        let tube = Tube::Planar(PlanarBoundary::vertical(0.3));
        assert_eq!(height_gradient_identity(&c, &tube, &chart).unwrap(), 0.0);
        let r1 = height_gradient_identity(&translator(51, -0.5), &trumpet(), &chart).unwrap();
        let r2 = height_gradient_identity(&translator(101, -0.5), &trumpet(), &chart).unwrap();
        assert!(r1 < 1e-2);
        let ratio = r1 / r2;
        assert!(ratio > 3.2 && ratio < 4.8, "ratio {ratio}");
    }

    #[test]
    fn metric_determinant_identity() {
        let s = translator(41, -0.7);
        let g = geometry(&s, &trumpet(), &FlatChart::new(1)).unwrap();
        for i in 0..g.nodes.len() {
            let det = g.g[i][0][0];
            assert!((det - g.v_hat[i].powi(-2)).abs() < 1e-12);
        }
    }
}
