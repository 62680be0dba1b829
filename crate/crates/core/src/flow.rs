//! Explicit time stepping of the graph flow with a perpendicular free boundary.
//!
//! In ambient flat coordinates the height obeys `u_t = g^{ij} u_ij` with
//! `g^{ij} = delta^{ij} + v_hat^2 u_i u_j`. Moving boundaries use a fixed
//! reference grid rescaled every step, which adds the advection term
//! `u_x * x_dot` to the nodal rates.

use std::fmt;
use std::str::FromStr;

use crate::chart::FoliationChart;
use crate::error::{Error, Result};
use crate::graph::{self, ChartKind, Derivatives, Domain, FlowState, GraphSummary};
use crate::profile::Tube;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Integrator {
    Euler,
    /// Two-stage Runge-Kutta (explicit trapezoid).
    Heun,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Heun => "heun",
        })
    }
}

impl FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "heun" | "rk2" => Ok(Integrator::Heun),
            other => Err(Error::InvalidArgument(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepControl {
    /// `dt = cfl * h^2 / stiffness`.
    pub cfl: f64,
    /// Spacelike margin: steps require `|Du|^2 <= 1 - eps_guard`.
    pub eps_guard: f64,
    pub max_steps: usize,
    /// Convergence threshold on `sup |H|`.
    pub h_stop: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    /// Snapshot every `stride` steps (initial and final states are always kept).
    pub stride: usize,
    /// Store a window of three consecutive states every `probe_every` steps (0 disables).
    pub probe_every: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            eps_guard: 1e-3,
            max_steps: 1_000_000,
            h_stop: 1e-8,
            t_end: f64::INFINITY,
            integrator: Integrator::Euler,
            stride: 100,
            probe_every: 0,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return bad(format!("cfl must lie in (0, 0.5], got {}", self.cfl));
        }
        if !(self.eps_guard > 0.0 && self.eps_guard < 1.0) {
            return bad(format!("eps_guard must lie in (0, 1), got {}", self.eps_guard));
        }
        if !(self.h_stop >= 0.0) {
            return bad(format!("h_stop must be nonnegative, got {}", self.h_stop));
        }
        if self.t_end.is_nan() {
            return bad("t_end is NaN".into());
        }
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        Ok(())
    }
}

/// Nodal rates of one explicit stage.
#[derive(Clone, Debug)]
struct Rates<T> {
    du: Vec<T>,
}

/// Largest `|Du|^2` over the active nodes and where it occurs.
pub fn max_slope<T: Real>(state: &FlowState<T>, tube: &Tube) -> Result<(usize, T)> {
    let d = graph::derivatives(state, tube)?;
    Ok(worst_q(&d.nodes, &d.du))
}

fn worst_q<T: Real>(nodes: &[usize], du: &[[T; 2]]) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (i, g) in du.iter().enumerate() {
        let q = g[0] * g[0] + g[1] * g[1];
        if !(q <= best.1) {
            best = (nodes[i], q);
        }
    }
    best
}

fn guard<T: Real>(t: T, nodes: &[usize], du: &[[T; 2]], eps: f64) -> Result<()> {
    let (node, q) = worst_q(nodes, du);
    if !(q <= T::of(1.0 - eps)) {
        return Err(Error::GuardTripped { t: t.as_f64(), node, value: q.as_f64() });
    }
    Ok(())
}

/// `(rates, stiffness)` from precomputed derivatives.
fn rates_from<T: Real>(state: &FlowState<T>, tube: &Tube, d: &Derivatives<T>) -> Result<(Rates<T>, T)> {
    let (nodes, du) = (&d.nodes, &d.du);
    let mut ut = vec![T::zero(); state.u.len()];
    let mut vh2_max = T::one();
    for i in 0..nodes.len() {
        let vh2 = (T::one() - d.q[i]).recip();
        let tr = d.tr[i];
        if !(tr.is_finite() && vh2.is_finite()) {
            return Err(Error::NonFinite("graph rate"));
        }
        vh2_max = vh2_max.max(vh2);
        ut[nodes[i]] = tr;
    }
    let n = state.grid.nodes;
    let (rates, stiff) = match (&state.domain, tube) {
        (Domain::Interval { left, right }, Tube::Planar(b)) => {
            let wall = |x: T, utb: T| {
                if b.is_vertical() {
                    T::zero()
                } else {
                    let ds = b.jet(x).1;
                    utb * ds / (ds * ds - T::one())
                }
            };
            let xr = wall(*right, ut[n - 1]);
            let xl = -wall(-*left, ut[0]);
            let m = T::of((n - 1) as f64);
            let mut out = ut;
            for j in 0..n {
                // reference coordinate mapped to [0, 1]
                let r = T::of(j as f64) / m;
                let xdot = xl * (T::one() - r) + xr * r;
                out[j] = out[j] + du[j][0] * xdot;
            }
            (Rates { du: out }, vh2_max)
        }
        (Domain::Radial { .. }, Tube::Rotational(p)) => {
            let fp = p.df(state.u[n - 1]);
            let rdot = fp * ut[n - 1] / (T::one() - fp * fp);
            let m = T::of((n - 1) as f64);
            let mut out = ut;
            for j in 1..n {
                out[j] = out[j] + du[j][0] * T::of(j as f64) / m * rdot;
            }
            (Rates { du: out }, vh2_max + T::one())
        }
        (Domain::Disk(_), _) => (Rates { du: ut }, vh2_max + T::one()),
        _ => return Err(Error::GridMismatch(format!("grid {} does not fit boundary {tube}", state.grid.kind))),
    };
    Ok((rates, stiff))
}

fn rates<T: Real>(state: &FlowState<T>, tube: &Tube) -> Result<(Rates<T>, T)> {
    let d = graph::derivatives(state, tube)?;
    rates_from(state, tube, &d)
}

/// `u + dt * du`, boundary moved then projected back onto the tube.
fn apply<T: Real>(state: &FlowState<T>, tube: &Tube, r: &Rates<T>, dt: T) -> Result<FlowState<T>> {
    let mut next = state.clone();
    next.t = state.t + dt;
    let n = state.grid.nodes;
    let step = |k: usize| state.u[k] + dt * r.du[k];
    match &state.domain {
        Domain::Disk(d) => d.inside.iter().for_each(|&k| next.u[k] = step(k)),
        _ => (0..n).for_each(|k| next.u[k] = step(k)),
    }
    match (&mut next.domain, tube) {
        (Domain::Interval { left, right }, Tube::Planar(b)) => {
            let xr = b.branch_x_generic(next.u[n - 1]);
            let xl = b.branch_x_generic(next.u[0]);
            if !(xr.is_finite() && xl.is_finite() && xr > T::zero() && xl > T::zero()) {
                return Err(Error::NewtonFailure(format!(
                    "no incidence for boundary heights {} and {}",
                    next.u[0],
                    next.u[n - 1]
                )));
            }
            // wall velocities only feed the advection term; incidence fixes the ends
            *left = -xl;
            *right = xr;
        }
        (Domain::Radial { radius }, Tube::Rotational(p)) => {
            let rb = p.f(next.u[n - 1]);
            if !(rb.is_finite() && rb > T::zero()) {
                return Err(Error::NewtonFailure(format!("no incidence for rim height {}", next.u[n - 1])));
            }
            *radius = rb;
        }
        _ => {}
    }
    next.fill_ghosts();
    if next.u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("updated heights"));
    }
    Ok(next)
}

fn check_flat(state: &FlowState<impl Real>) -> Result<()> {
    if state.chart != ChartKind::Flat {
        return Err(Error::InvalidArgument("time stepping runs in ambient flat coordinates only".into()));
    }
    Ok(())
}

/// Stable explicit step size `cfl * h^2 / stiffness`, clipped to reach `t_end`.
pub fn stable_dt<T: Real>(state: &FlowState<T>, ctrl: &StepControl, tube: &Tube) -> Result<T> {
    let (_, stiff) = rates(state, tube)?;
    clip_dt(state, ctrl, stiff)
}

fn clip_dt<T: Real>(state: &FlowState<T>, ctrl: &StepControl, stiff: T) -> Result<T> {
    let h = state.spacing();
    let mut dt = T::of(ctrl.cfl) * h * h / stiff;
    let remaining = T::of(ctrl.t_end) - state.t;
    if remaining < dt {
        dt = remaining;
    }
    let floor = T::epsilon() * state.t.abs().max(T::one()) * T::of(4.0);
    if !(dt > floor) {
        return Err(Error::TimeStepUnderflow { t: state.t.as_f64(), dt: dt.as_f64() });
    }
    Ok(dt)
}

/// One step with a prescribed `dt`.
pub fn step_with_dt<T: Real>(state: &FlowState<T>, ctrl: &StepControl, tube: &Tube, dt: T) -> Result<FlowState<T>> {
    check_flat(state)?;
    let d = graph::derivatives(state, tube)?;
    guard(state.t, &d.nodes, &d.du, ctrl.eps_guard)?;
    let (r1, _) = rates_from(state, tube, &d)?;
    guard_after(advance(state, ctrl, tube, r1, dt)?, ctrl, tube)
}

fn advance<T: Real>(state: &FlowState<T>, ctrl: &StepControl, tube: &Tube, r1: Rates<T>, dt: T) -> Result<FlowState<T>> {
    let next = match ctrl.integrator {
        Integrator::Euler => apply(state, tube, &r1, dt)?,
        Integrator::Heun => {
            let mid = apply(state, tube, &r1, dt)?;
            let (r2, _) = rates(&mid, tube)?;
            let half = T::half();
            let avg = Rates {
                du: r1.du.iter().zip(&r2.du).map(|(&a, &b)| (a + b) * half).collect(),
            };
            apply(state, tube, &avg, dt)?
        }
    };
    Ok(next)
}

/// Guard check on a freshly computed state.
fn guard_after<T: Real>(next: FlowState<T>, ctrl: &StepControl, tube: &Tube) -> Result<FlowState<T>> {
    let (node, q) = max_slope(&next, tube)?;
    if !(q <= T::of(1.0 - ctrl.eps_guard)) {
        return Err(Error::GuardTripped { t: next.t.as_f64(), node, value: q.as_f64() });
    }
    Ok(next)
}

/// One explicit step; returns the new state and the step size used.
pub fn step<T: Real>(state: &FlowState<T>, ctrl: &StepControl, tube: &Tube) -> Result<(FlowState<T>, T)> {
    check_flat(state)?;
    let d = graph::derivatives(state, tube)?;
    guard(state.t, &d.nodes, &d.du, ctrl.eps_guard)?;
    let (r1, stiff) = rates_from(state, tube, &d)?;
    let dt = clip_dt(state, ctrl, stiff)?;
    Ok((guard_after(advance(state, ctrl, tube, r1, dt)?, ctrl, tube)?, dt))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Converged,
    GuardTripped { t: f64, node: usize, value: f64 },
    TimeExhausted,
    StepLimit,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Converged => f.write_str("converged"),
            Event::GuardTripped { t, node, value } => {
                write!(f, "guard_tripped(t={t:.9e}, node={node}, |Du|^2={value:.9e})")
            }
            Event::TimeExhausted => f.write_str("time_exhausted"),
            Event::StepLimit => f.write_str("step_limit"),
        }
    }
}

/// Scalars recorded for every state visited by a run.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub sup_h: f64,
    pub sup_v: f64,
    pub sup_v_hat: f64,
    pub volume: f64,
    /// `int H^2 dV` on the current state.
    pub int_h2: f64,
    pub osc_u: f64,
    pub max_slope2: f64,
    pub boundary: Vec<f64>,
}

impl StepRecord {
    fn new<T: Real>(step: usize, state: &FlowState<T>, g: &GraphSummary<T>) -> Self {
        Self {
            step,
            t: state.t.as_f64(),
            sup_h: g.sup_h.as_f64(),
            sup_v: g.sup_v.as_f64(),
            sup_v_hat: g.sup_v_hat.as_f64(),
            volume: g.volume.as_f64(),
            int_h2: g.int_h2.as_f64(),
            osc_u: g.osc_u.as_f64(),
            max_slope2: g.max_slope2.1.as_f64(),
            boundary: state.boundary_pos().iter().map(|x| x.as_f64()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    /// Snapshots at the configured stride, always including the first and last state.
    pub states: Vec<FlowState<T>>,
    /// One record per visited state, in time order.
    pub records: Vec<StepRecord>,
    /// Windows of three consecutive states for time-centred residuals.
    pub probes: Vec<[FlowState<T>; 3]>,
    pub event: Event,
    pub steps: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> &FlowState<T> {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn initial_state(&self) -> &FlowState<T> {
        &self.states[0]
    }
}

/// Bookkeeping shared by [`run`] and [`comparison_pair_run`].
struct Recorder<T> {
    traj: Trajectory<T>,
    pending: Option<[FlowState<T>; 2]>,
    last_snap: usize,
}

impl<T: Real> Recorder<T> {
    fn new(state0: &FlowState<T>, g: &GraphSummary<T>) -> Self {
        Self {
            traj: Trajectory {
                states: vec![state0.clone()],
                records: vec![StepRecord::new(0, state0, g)],
                probes: Vec::new(),
                event: Event::StepLimit,
                steps: 0,
            },
            pending: None,
            last_snap: 0,
        }
    }

    fn push(&mut self, ctrl: &StepControl, before: &FlowState<T>, state: &FlowState<T>, g: &GraphSummary<T>) {
        self.traj.steps += 1;
        let k = self.traj.steps;
        self.traj.records.push(StepRecord::new(k, state, g));
        if k.is_multiple_of(ctrl.stride) {
            self.traj.states.push(state.clone());
            self.last_snap = k;
        }
        if ctrl.probe_every > 0 {
            if let Some([a, b]) = self.pending.take() {
                self.traj.probes.push([a, b, state.clone()]);
            }
            if k.is_multiple_of(ctrl.probe_every) {
                self.pending = Some([before.clone(), state.clone()]);
            }
        }
    }

    fn finish(mut self, last: &FlowState<T>, event: Event) -> Trajectory<T> {
        if self.last_snap != self.traj.steps {
            self.traj.states.push(last.clone());
        }
        self.traj.event = event;
        self.traj
    }
}

fn stop_reason(rec: &StepRecord, steps: usize, ctrl: &StepControl) -> Option<Event> {
    if rec.sup_h < ctrl.h_stop {
        Some(Event::Converged)
    } else if rec.t >= ctrl.t_end {
        Some(Event::TimeExhausted)
    } else if steps >= ctrl.max_steps {
        Some(Event::StepLimit)
    } else {
        None
    }
}

/// Derivatives and recorded scalars of a state, or the guard violation it carries.
fn observe<T: Real>(
    state: &FlowState<T>,
    ctrl: &StepControl,
    tube: &Tube,
    chart: &dyn FoliationChart,
) -> Result<(Derivatives<T>, GraphSummary<T>)> {
    let d = graph::derivatives(state, tube)?;
    guard(state.t, &d.nodes, &d.du, ctrl.eps_guard)?;
    let g = graph::summary(state, tube, chart, &d)?;
    Ok((d, g))
}

/// Iterates [`step`] until convergence, `t_end`, the step limit or a guard trip.
///
/// A guard trip ends the run as an event; the offending state is not stored.
pub fn run<T: Real>(state0: FlowState<T>, ctrl: &StepControl, tube: &Tube, chart: &dyn FoliationChart) -> Result<Trajectory<T>> {
    ctrl.validate()?;
    check_flat(&state0)?;
    let (mut d, g) = observe(&state0, ctrl, tube, chart)?;
    let mut rec = Recorder::new(&state0, &g);
    let mut state = state0;
    loop {
        if let Some(ev) = stop_reason(rec.traj.records.last().expect("recorded"), rec.traj.steps, ctrl) {
            return Ok(rec.finish(&state, ev));
        }
        let (r1, stiff) = rates_from(&state, tube, &d)?;
        let dt = clip_dt(&state, ctrl, stiff)?;
        let next = advance(&state, ctrl, tube, r1, dt)?;
        let g = match observe(&next, ctrl, tube, chart) {
            Ok((dn, g)) => {
                d = dn;
                g
            }
            Err(Error::GuardTripped { t, node, value }) => {
                return Ok(rec.finish(&state, Event::GuardTripped { t, node, value }));
            }
            Err(e) => return Err(e),
        };
        rec.push(ctrl, &state, &next, &g);
        state = next;
    }
}

/// Evolution law for the upper member of a comparison pair: `(state, dt) -> state`.
pub type MotionLaw<'a, T> = &'a (dyn Fn(&FlowState<T>, T) -> Result<FlowState<T>> + Sync);

#[derive(Clone, Debug)]
pub struct PairTrajectory<T> {
    pub lower: Trajectory<T>,
    pub upper: Trajectory<T>,
    /// `(t, min over the common domain of u_upper - u_lower)` per step.
    pub min_gap: Vec<(f64, f64)>,
}

/// Four-point Lagrange interpolation of a uniformly sampled field.
fn lagrange4<T: Real>(x0: T, h: T, u: &[T], x: T) -> T {
    let n = u.len();
    let s = (x - x0) / h;
    let j = s.floor().to_isize().unwrap_or(0);
    let start = (j - 1).clamp(0, n as isize - 4) as usize;
    let mut acc = T::zero();
    for a in start..start + 4 {
        let mut w = T::one();
        for b in start..start + 4 {
            if a != b {
                w = w * (s - T::of(b as f64)) / T::of(a as f64 - b as f64);
            }
        }
        acc = acc + w * u[a];
    }
    acc
}

/// `min (u_upper - u_lower)` over the nodes of `lower` inside the upper domain.
pub fn min_gap<T: Real>(lower: &FlowState<T>, upper: &FlowState<T>) -> Result<T> {
    if lower.grid != upper.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", lower.grid, upper.grid)));
    }
    let active = lower.active();
    if lower.domain == upper.domain {
        return Ok(active.iter().fold(T::infinity(), |m, &k| m.min(upper.u[k] - lower.u[k])));
    }
    let (pa, hb) = (lower.positions(), upper.spacing());
    let (x0, x1) = match upper.domain {
        Domain::Interval { left, right } => (left, right),
        Domain::Radial { radius } => (T::zero(), radius),
        Domain::Disk(_) => return Err(Error::GridMismatch("disk layouts differ".into())),
    };
    let mut gap = T::infinity();
    for k in active {
        let x = pa[k][0];
        if x < x0 || x > x1 {
            continue;
        }
        gap = gap.min(lagrange4(x0, hb, &upper.u, x) - lower.u[k]);
    }
    Ok(gap)
}

/// Co-evolves two ordered states with a common step size and records the gap.
///
/// The upper state follows the flow unless `motion` is given.
pub fn comparison_pair_run<T: Real>(
    lower0: FlowState<T>,
    upper0: FlowState<T>,
    ctrl: &StepControl,
    tube: &Tube,
    chart: &dyn FoliationChart,
    motion: Option<MotionLaw<'_, T>>,
) -> Result<PairTrajectory<T>> {
    ctrl.validate()?;
    check_flat(&lower0)?;
    let mut gaps = vec![(lower0.t.as_f64(), min_gap(&lower0, &upper0)?.as_f64())];
    let (mut da, ga) = observe(&lower0, ctrl, tube, chart)?;
    let (mut db, gb) = observe(&upper0, ctrl, tube, chart)?;
    let (mut ra, mut rb) = (Recorder::new(&lower0, &ga), Recorder::new(&upper0, &gb));
    let (mut a, mut b) = (lower0, upper0);
    let event = loop {
        let (last_a, last_b) = (ra.traj.records.last().expect("recorded"), rb.traj.records.last().expect("recorded"));
        let ea = stop_reason(last_a, ra.traj.steps, ctrl);
        let eb = if motion.is_some() { Some(Event::Converged) } else { stop_reason(last_b, rb.traj.steps, ctrl) };
        match (ea, eb) {
            (Some(Event::Converged), Some(Event::Converged)) => break Event::Converged,
            (Some(e @ (Event::TimeExhausted | Event::StepLimit)), _) => break e,
            _ => {}
        }
        let (r_a, s_a) = rates_from(&a, tube, &da)?;
        let (r_b, s_b) = rates_from(&b, tube, &db)?;
        let dt = clip_dt(&a, ctrl, s_a)?.min(clip_dt(&b, ctrl, s_b)?);
        let na = advance(&a, ctrl, tube, r_a, dt)?;
        let nb = match motion {
            Some(law) => law(&b, dt)?,
            None => advance(&b, ctrl, tube, r_b, dt)?,
        };
        let (oa, ob) = (observe(&na, ctrl, tube, chart), observe(&nb, ctrl, tube, chart));
        let ((dna, ga), (dnb, gb)) = match (oa, ob) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(Error::GuardTripped { t, node, value }), _) | (_, Err(Error::GuardTripped { t, node, value })) => {
                break Event::GuardTripped { t, node, value }
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        da = dna;
        db = dnb;
        ra.push(ctrl, &a, &na, &ga);
        rb.push(ctrl, &b, &nb, &gb);
        gaps.push((na.t.as_f64(), min_gap(&na, &nb)?.as_f64()));
        a = na;
        b = nb;
    };
    Ok(PairTrajectory { lower: ra.finish(&a, event.clone()), upper: rb.finish(&b, event), min_gap: gaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::FlatChart;
    use crate::graph::DiskLayout;
    use crate::profile::{PlanarBoundary, RotationalProfile};
    use std::sync::Arc;

    fn translator(nodes: usize, t: f64) -> FlowState<f64> {
        let xb = t.exp().atanh();
        FlowState::curve(nodes, -xb, xb, t, |x: f64| x.cosh().ln() + t).unwrap()
    }

    fn trumpet() -> Tube {
        Tube::Planar(PlanarBoundary::trumpet())
    }

    #[test]
    fn flat_disk_is_fixed_point() {
        let tube = Tube::Rotational(RotationalProfile::cylinder(1.0));
        let s = FlowState::disk(Arc::new(DiskLayout::new(21, 1.0).unwrap()), 0.0, |_, _| 0.0).unwrap();
        let (next, dt) = step(&s, &StepControl::default(), &tube).unwrap();
        assert!(dt > 0.0);
        assert_eq!(next.u, s.u);
    }

    #[test]
    fn translator_one_step() {
        for integrator in [Integrator::Euler, Integrator::Heun] {
            let ctrl = StepControl { integrator, ..StepControl::default() };
            let s = translator(201, -1.0);
            let (next, dt) = step(&s, &ctrl, &trumpet()).unwrap();
            let h = s.spacing();
            let pos = next.positions();
            let n = pos.len();
            for j in 0..n {
                let err = (next.u[j] - (pos[j][0].cosh().ln() - 1.0 + dt)).abs();
                // the ghost closure is first order in u_xx at the two end nodes
                let bound = if j == 0 || j == n - 1 { 10.0 * (dt * dt + dt * h) } else { 10.0 * (dt * dt + dt * h * h) };
                assert!(err <= bound, "{integrator} node {j}: {err} vs dt {dt}");
            }
        }
    }

    #[test]
    fn guard_trips_on_steep_input() {
        let ctrl = StepControl::default();
        let slope = (1.0 - ctrl.eps_guard / 2.0f64).sqrt();
        let tube = Tube::Planar(PlanarBoundary::vertical(1.0));
        let s = FlowState::curve(11, -1.0, 1.0, 0.0, |x| slope * x).unwrap();
        assert!(matches!(step(&s, &ctrl, &tube), Err(Error::GuardTripped { .. })));
    }

    #[test]
    fn integrator_names_round_trip() {
        for i in [Integrator::Euler, Integrator::Heun] {
            assert_eq!(i.to_string().parse::<Integrator>().unwrap(), i);
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let u: Vec<f64> = (0..8).map(|j| (j as f64 * 0.1).powi(3) - j as f64 * 0.1).collect();
        for x in [0.05, 0.33, 0.68] {
            assert!((lagrange4(0.0, 0.1, &u, x) - (x * x * x - x)).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_pair_has_zero_gap() {
        let tube = Tube::Rotational(RotationalProfile::cylinder(1.0));
        let layout = Arc::new(DiskLayout::new(15, 1.0).unwrap());
        let s = FlowState::disk(layout, 0.0, |x: f64, y: f64| 0.1 * (1.0 - x * x - y * y).powi(2)).unwrap();
        let ctrl = StepControl { max_steps: 50, ..StepControl::default() };
        let p = comparison_pair_run(s.clone(), s, &ctrl, &tube, &FlatChart::new(2), None).unwrap();
        assert!(p.min_gap.iter().all(|&(_, g)| g == 0.0));
    }

    #[test]
    fn run_records_every_step() {
        let ctrl = StepControl { max_steps: 30, stride: 7, probe_every: 10, ..StepControl::default() };
        let t = run(translator(41, -1.0), &ctrl, &trumpet(), &FlatChart::new(1)).unwrap();
        assert_eq!(t.event, Event::StepLimit);
        assert_eq!(t.records.len(), 31);
        assert_eq!(t.states.len(), 6);
        // the window opened at step 30 is never closed
        assert_eq!(t.probes.len(), 2);
        assert!(t.states.windows(2).all(|w| w[1].t > w[0].t));
        for p in &t.probes {
            assert!(p[0].t < p[1].t && p[1].t < p[2].t);
        }
    }
}
