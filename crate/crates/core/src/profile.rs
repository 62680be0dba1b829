//! Boundary manifolds: rotationally symmetric tubes in `R^3_1` given by a
//! radius function `f(z)`, and symmetric planar boundary curves `y = s(|x|)` in
//! `R^2_1`.
//!
//! Every profile supplies analytic derivatives, so the curvature data and
//! the curvature condition are exact functions of `z` (or `x`).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lorentz::SpacetimeVector;
use crate::scalar::Real;

/// `|f'| < 1e-10` selects the planar branch of [`cmc_leaf_through`].
pub const FLAT_SLOPE_TOL: f64 = 1e-10;

/// Tolerance on the curvature condition `f''/(1-f'^2) - 1/f <= 0`.
pub const CONDITION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileShape {
    /// `f(z) = radius`.
    Cylinder { radius: f64 },
    /// `f(z) = sqrt(a^2 + (z + b)^2)`.
    Pseudosphere { a: f64, b: f64 },
    /// `f(z) = a + b sin(omega z)`.
    SineTube { a: f64, b: f64, omega: f64 },
}

/// Rotational boundary tube `{ (f(z) r, z) }` over a closed `z` interval.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationalProfile {
    pub shape: ProfileShape,
    pub z_range: (f64, f64),
}

const DEFAULT_Z_RANGE: (f64, f64) = (-20.0, 20.0);

impl RotationalProfile {
    pub fn cylinder(radius: f64) -> Self {
        Self { shape: ProfileShape::Cylinder { radius }, z_range: DEFAULT_Z_RANGE }
    }

    pub fn pseudosphere(a: f64, b: f64) -> Self {
        Self { shape: ProfileShape::Pseudosphere { a, b }, z_range: DEFAULT_Z_RANGE }
    }

    pub fn sine_tube(a: f64, b: f64, omega: f64) -> Self {
        Self { shape: ProfileShape::SineTube { a, b, omega }, z_range: DEFAULT_Z_RANGE }
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.z_range = (lo, hi);
        self
    }

    pub fn is_cylinder(&self) -> bool {
        matches!(self.shape, ProfileShape::Cylinder { .. })
    }

    /// Radius `f(z)`.
    pub fn f<T: Real>(&self, z: T) -> T {
        match self.shape {
            ProfileShape::Cylinder { radius } => T::of(radius),
            ProfileShape::Pseudosphere { a, b } => {
                let w = z + T::of(b);
                (T::of(a * a) + w * w).sqrt()
            }
            ProfileShape::SineTube { a, b, omega } => T::of(a) + T::of(b) * (T::of(omega) * z).sin(),
        }
    }

    /// `f'(z)`.
    pub fn df<T: Real>(&self, z: T) -> T {
        match self.shape {
            ProfileShape::Cylinder { .. } => T::zero(),
            ProfileShape::Pseudosphere { b, .. } => (z + T::of(b)) / self.f(z),
            ProfileShape::SineTube { b, omega, .. } => T::of(b * omega) * (T::of(omega) * z).cos(),
        }
    }

    /// `f''(z)`.
    pub fn d2f<T: Real>(&self, z: T) -> T {
        match self.shape {
            ProfileShape::Cylinder { .. } => T::zero(),
            ProfileShape::Pseudosphere { a, .. } => {
                let f = self.f(z);
                T::of(a * a) / (f * f * f)
            }
            ProfileShape::SineTube { b, omega, .. } => -T::of(b * omega * omega) * (T::of(omega) * z).sin(),
        }
    }

    pub fn jet<T: Real>(&self, z: T) -> (T, T, T) {
        (self.f(z), self.df(z), self.d2f(z))
    }

    /// `1 - f'^2` without cancellation where `|f'|` is close to one.
    pub fn lorentz_factor<T: Real>(&self, z: T) -> T {
        match self.shape {
            ProfileShape::Cylinder { .. } => T::one(),
            ProfileShape::Pseudosphere { a, .. } => {
                let r = T::of(a) / self.f(z);
                r * r
            }
            ProfileShape::SineTube { .. } => {
                let df = self.df(z);
                (T::one() - df) * (T::one() + df)
            }
        }
    }

    /// Checks `f > 0` and `|f'| < 1` at `z`.
    pub fn validate_at(&self, z: f64) -> Result<()> {
        let (f, df, d2f) = self.jet(z);
        if !(f.is_finite() && df.is_finite() && d2f.is_finite()) {
            return Err(Error::ProfileInvariant { z, reason: "non-finite jet".into() });
        }
        if f <= 0.0 {
            return Err(Error::ProfileInvariant { z, reason: format!("f = {f} <= 0") });
        }
        if df.abs() >= 1.0 {
            return Err(Error::ProfileInvariant { z, reason: format!("|f'| = {} >= 1 (not timelike)", df.abs()) });
        }
        Ok(())
    }

    /// Timelike unit field extended off the tube: on the tube it is the
    /// eigen-direction `(f' r + e_3)/sqrt(1 - f'^2)`, inside it is scaled by
    /// `rho / f(t)` so that it is smooth across the axis.
    pub fn v_field<T: Real>(&self, y: &SpacetimeVector<T>) -> SpacetimeVector<T> {
        let t = y.temporal();
        let k = self.df(t) / self.f(t);
        let (x1, x2) = (y.spatial()[0], y.spatial().get(1).copied().unwrap_or_else(T::zero));
        let q = k * k * (x1 * x1 + x2 * x2);
        let n = (T::one() - q).sqrt().recip();
        SpacetimeVector::new2(k * x1 * n, k * x2 * n, n)
    }

    /// Height of the CMC leaf anchored at `anchor` above radius `rho`.
    ///
    /// Written as `z + f'(rho^2 - f^2)/(Q + f)` with `Q^2 = f^2(1-f'^2) + f'^2 rho^2`,
    /// which is the hyperbolic leaf for `f' != 0` and reduces smoothly to the
    /// plane `t = z` when `f' = 0`.
    pub fn leaf_height<T: Real>(&self, anchor: T, rho: T) -> T {
        let (f, df, _) = self.jet(anchor);
        let q = (f * f * (T::one() - df * df) + df * df * rho * rho).sqrt();
        anchor + df * (rho * rho - f * f) / (q + f)
    }
}

impl fmt::Display for RotationalProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            ProfileShape::Cylinder { radius } => write!(f, "cylinder({radius})"),
            ProfileShape::Pseudosphere { a, b } => write!(f, "pseudosphere({a},{b})"),
            ProfileShape::SineTube { a, b, omega } => write!(f, "sine_tube({a},{b},{omega})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlanarShape {
    /// `s(x) = log sinh x`.
    Trumpet,
    /// `s(x) = slope x + offset`, `|slope| > 1`.
    Cone { slope: f64, offset: f64 },
    /// The vertical lines `x = +-half_width` (the one-dimensional cylinder).
    Vertical { half_width: f64 },
}

/// Symmetric boundary curve in `R^2_1`: the two branches `y = s(|x|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarBoundary {
    pub shape: PlanarShape,
}

impl PlanarBoundary {
    pub fn trumpet() -> Self {
        Self { shape: PlanarShape::Trumpet }
    }

    pub fn cone(slope: f64, offset: f64) -> Self {
        Self { shape: PlanarShape::Cone { slope, offset } }
    }

    pub fn vertical(half_width: f64) -> Self {
        Self { shape: PlanarShape::Vertical { half_width } }
    }

    pub fn is_vertical(&self) -> bool {
        matches!(self.shape, PlanarShape::Vertical { .. })
    }

    /// `(s, s', s'')` at `x > 0`. Not defined for the vertical boundary.
    pub fn jet<T: Real>(&self, x: T) -> (T, T, T) {
        match self.shape {
            PlanarShape::Trumpet => {
                let coth = x.cosh() / x.sinh();
                let csch = x.sinh().recip();
                (x.sinh().ln(), coth, -csch * csch)
            }
            PlanarShape::Cone { slope, offset } => (T::of(slope) * x + T::of(offset), T::of(slope), T::zero()),
            PlanarShape::Vertical { .. } => (T::nan(), T::infinity(), T::zero()),
        }
    }

    /// `1/s'(x)`, the slope a perpendicular graph must have at the right branch.
    pub fn inverse_slope<T: Real>(&self, x: T) -> T {
        match self.shape {
            PlanarShape::Vertical { .. } => T::zero(),
            PlanarShape::Trumpet => x.tanh(),
            _ => self.jet(x).1.recip(),
        }
    }

    /// Positive `x` with `s(x) = y`.
    pub fn branch_x(&self, y: f64) -> Result<f64> {
        match self.shape {
            PlanarShape::Trumpet => Ok(y.exp().asinh()),
            PlanarShape::Cone { slope, offset } => {
                let x = (y - offset) / slope;
                if x > 0.0 {
                    Ok(x)
                } else {
                    Err(Error::OutsideChart(format!("height {y} below the cone vertex")))
                }
            }
            PlanarShape::Vertical { half_width } => Ok(half_width),
        }
    }

    /// Generic version of [`Self::branch_x`] used inside differentiated code.
    pub fn branch_x_generic<T: Real>(&self, y: T) -> T {
        match self.shape {
            PlanarShape::Trumpet => y.exp().asinh(),
            PlanarShape::Cone { slope, offset } => (y - T::of(offset)) / T::of(slope),
            PlanarShape::Vertical { half_width } => T::of(half_width),
        }
    }

    /// `(x_b, s'(x_b))` on the right branch at height `y`.
    fn branch_and_slope<T: Real>(&self, y: T) -> (T, T) {
        match self.shape {
            PlanarShape::Trumpet => {
                // sinh x_b = e^y, so coth x_b = sqrt(1 + e^{2y}) / e^y
                let e = y.exp();
                let r = (e * e + T::one()).sqrt();
                ((e + r).ln(), r / e)
            }
            _ => {
                let xb = self.branch_x_generic(y);
                (xb, self.jet(xb).1)
            }
        }
    }

    /// Boundary position `x_b > 0` where a graph of height `y` meets the right
    /// branch. Newton on `s(x) - y` with bisection fallback.
    pub fn incidence(&self, y: f64, guess: f64) -> Result<f64> {
        match self.shape {
            PlanarShape::Vertical { half_width } => Ok(half_width),
            PlanarShape::Cone { .. } => self.branch_x(y),
            PlanarShape::Trumpet => {
                let g = |x: f64| self.jet(x).0 - y;
                newton_bisect(g, |x| self.jet(x).1, guess, 1e-300, 1e6, 1e-12)
                    .map_err(|e| Error::NewtonFailure(format!("trumpet incidence at y = {y}: {e}")))
            }
        }
    }

    pub fn validate_at(&self, x: f64) -> Result<()> {
        if self.is_vertical() {
            return Ok(());
        }
        let (_, ds, _) = self.jet(x);
        if !(ds.abs() > 1.0) {
            return Err(Error::BoundaryNotTimelike { at: x, reason: format!("|s'| = {} <= 1", ds.abs()) });
        }
        Ok(())
    }

    /// Timelike unit field extended off the boundary curve: `(xi, s')/sqrt(s'^2 - xi^2)`
    /// with `xi = x / x_b(y)`, equal to the boundary eigen-direction on both branches.
    pub fn v_field<T: Real>(&self, y: &SpacetimeVector<T>) -> SpacetimeVector<T> {
        if self.is_vertical() {
            return SpacetimeVector::e_t(1);
        }
        let (xb, ds) = self.branch_and_slope(y.temporal());
        let sgn = ds.signum();
        let xi = y.spatial()[0] / xb;
        let n = (ds * ds - xi * xi).sqrt().recip();
        SpacetimeVector::new1(sgn * xi * n, sgn * ds * n)
    }
}

impl fmt::Display for PlanarBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            PlanarShape::Trumpet => write!(f, "trumpet"),
            PlanarShape::Cone { slope, offset } => write!(f, "cone({slope},{offset})"),
            PlanarShape::Vertical { half_width } => write!(f, "vertical({half_width})"),
        }
    }
}

/// Either kind of boundary manifold.
#[derive(Clone, Debug, PartialEq)]
pub enum Tube {
    Rotational(RotationalProfile),
    Planar(PlanarBoundary),
}

impl Tube {
    /// Dimension `n` of the flowing hypersurface.
    pub fn dim(&self) -> usize {
        match self {
            Tube::Rotational(_) => 2,
            Tube::Planar(_) => 1,
        }
    }

    pub fn v_field<T: Real>(&self, y: &SpacetimeVector<T>) -> SpacetimeVector<T> {
        match self {
            Tube::Rotational(p) => p.v_field(y),
            Tube::Planar(b) => b.v_field(y),
        }
    }

    pub fn as_rotational(&self) -> Option<&RotationalProfile> {
        match self {
            Tube::Rotational(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_planar(&self) -> Option<&PlanarBoundary> {
        match self {
            Tube::Planar(b) => Some(b),
            _ => None,
        }
    }

    /// Curvature data of the tube at the boundary point `y` (which must lie on it).
    pub fn curvature_at(&self, y: &SpacetimeVector<f64>) -> Result<BoundaryCurvature<f64>> {
        match self {
            Tube::Rotational(p) => {
                let c = profile_curvature(p, y.temporal())?;
                let (x1, x2) = (y.spatial()[0], y.spatial()[1]);
                let r = x1.hypot(x2);
                let (c_th, s_th) = if r > 0.0 { (x1 / r, x2 / r) } else { (1.0, 0.0) };
                Ok(c.rotated(c_th, s_th))
            }
            Tube::Planar(b) => {
                let x = y.spatial()[0];
                let c = planar_curvature(b, x.abs())?;
                Ok(if x < 0.0 { c.mirrored() } else { c })
            }
        }
    }
}

impl fmt::Display for Tube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tube::Rotational(p) => p.fmt(f),
            Tube::Planar(b) => b.fmt(f),
        }
    }
}

/// Parses the profile grammar: `cylinder[(r)]`, `pseudosphere(A,B)`,
/// `sine_tube(a,b,omega)`, `trumpet`, `cone(k,c)`, `vertical(w)`.
impl FromStr for Tube {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::InvalidArgument(format!("unbalanced parentheses in `{s}`")))?;
                let args = inner
                    .split(',')
                    .filter(|a| !a.trim().is_empty())
                    .map(|a| {
                        a.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number `{a}` in `{s}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (s[..i].trim(), args)
            }
            None => (s, Vec::new()),
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("`{name}` takes {n} argument(s), got {}", args.len())))
            }
        };
        let tube = match name {
            "cylinder" if args.is_empty() => Tube::Rotational(RotationalProfile::cylinder(1.0)),
            "cylinder" => {
                arity(1)?;
                Tube::Rotational(RotationalProfile::cylinder(args[0]))
            }
            "pseudosphere" => {
                arity(2)?;
                Tube::Rotational(RotationalProfile::pseudosphere(args[0], args[1]))
            }
            "sine_tube" => {
                arity(3)?;
                Tube::Rotational(RotationalProfile::sine_tube(args[0], args[1], args[2]))
            }
            "trumpet" => {
                arity(0)?;
                Tube::Planar(PlanarBoundary::trumpet())
            }
            "cone" => {
                arity(2)?;
                Tube::Planar(PlanarBoundary::cone(args[0], args[1]))
            }
            "vertical" => {
                arity(1)?;
                Tube::Planar(PlanarBoundary::vertical(args[0]))
            }
            other => return Err(Error::InvalidArgument(format!("unknown profile `{other}`"))),
        };
        tube.validate_parameters()?;
        Ok(tube)
    }
}

impl Tube {
    fn validate_parameters(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match self {
            Tube::Rotational(p) => match p.shape {
                ProfileShape::Cylinder { radius } if !(radius > 0.0) => bad("cylinder radius must be positive"),
                ProfileShape::Pseudosphere { a, .. } if !(a > 0.0) => bad("pseudosphere A must be positive"),
                ProfileShape::SineTube { a, b, omega } if !(a > b.abs() && (b * omega).abs() < 1.0) => {
                    bad("sine_tube needs a > |b| and |b omega| < 1")
                }
                _ => Ok(()),
            },
            Tube::Planar(b) => match b.shape {
                PlanarShape::Cone { slope, .. } if !(slope.abs() > 1.0) => bad("cone slope must exceed 1"),
                PlanarShape::Vertical { half_width } if !(half_width > 0.0) => bad("vertical half width must be positive"),
                _ => Ok(()),
            },
        }
    }
}

/// Normal and second fundamental form eigen-data of the boundary manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCurvature<T> {
    /// Outward spacelike unit normal.
    pub mu: SpacetimeVector<T>,
    /// Future timelike unit eigenvector.
    pub v: SpacetimeVector<T>,
    /// Spacelike unit eigenvectors (empty for planar boundaries).
    pub w: Vec<SpacetimeVector<T>>,
    pub a_vv: T,
    pub a_ww: Vec<T>,
}

impl<T: Real> BoundaryCurvature<T> {
    /// `A(X, X)` for a vector `X`; the normal component of `X` is discarded.
    pub fn form(&self, x: &SpacetimeVector<T>) -> T {
        let xt = *x - self.mu * x.dot(&self.mu);
        let alpha = -xt.dot(&self.v);
        let mut acc = alpha * alpha * self.a_vv;
        for (w, &a) in self.w.iter().zip(&self.a_ww) {
            let c = xt.dot(w);
            acc = acc + c * c * a;
        }
        acc
    }

    fn rotated(self, c: T, s: T) -> Self {
        let rot = |v: SpacetimeVector<T>| {
            let (x, y) = (v.spatial()[0], v.spatial()[1]);
            SpacetimeVector::new2(c * x - s * y, s * x + c * y, v.temporal())
        };
        Self { mu: rot(self.mu), v: rot(self.v), w: self.w.into_iter().map(rot).collect(), a_vv: self.a_vv, a_ww: self.a_ww }
    }

    fn mirrored(self) -> Self {
        let m = |v: SpacetimeVector<T>| SpacetimeVector::new1(-v.spatial()[0], v.temporal());
        Self { mu: m(self.mu), v: m(self.v), w: Vec::new(), a_vv: self.a_vv, a_ww: self.a_ww }
    }
}

/// Curvature of the rotational tube at height `z`, azimuth `0`.
///
/// Computed geometrically: tangent frame and second derivatives of the
/// embedding, outward normal by orthogonality, then the eigen-decomposition
/// of the shape operator. [`condition_value`] evaluates the same curvature
/// condition through the scalar closed form instead.
pub fn profile_curvature<T: Real>(p: &RotationalProfile, z: T) -> Result<BoundaryCurvature<T>> {
    p.validate_at(z.as_f64())?;
    let (f, df, d2f) = p.jet(z);
    let zero = T::zero();
    let one = T::one();
    // embedding E(z, theta) = (f cos theta, f sin theta, z) at theta = 0
    let e_z = SpacetimeVector::new2(df, zero, one);
    let e_th = SpacetimeVector::new2(zero, f, zero);
    let e_zz = SpacetimeVector::new2(d2f, zero, zero);
    let e_thth = SpacetimeVector::new2(-f, zero, zero);
    let e_zth = SpacetimeVector::new2(zero, df, zero);
    // normal: orthogonal to e_z and e_th; the theta direction forces mu = (m, 0, mt)
    // and <mu, e_z> = m df - mt = 0. Lengths go through the stable 1 - f'^2.
    let lf = p.lorentz_factor(z);
    if !(lf > zero) {
        return Err(Error::ProfileInvariant { z: z.as_f64(), reason: "normal not spacelike".into() });
    }
    let root = lf.sqrt();
    let mu = SpacetimeVector::new2(one, zero, df) * root.recip();
    debug_assert!(mu.dot(&e_z).abs() < T::of(1e-9) && mu.dot(&e_th).abs() < T::of(1e-9));

    let g = [[-lf, e_z.dot(&e_th)], [e_th.dot(&e_z), e_th.square()]];
    let h = [[-e_zz.dot(&mu), -e_zth.dot(&mu)], [-e_zth.dot(&mu), -e_thth.dot(&mu)]];
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let gi = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
    // shape operator S = g^{-1} h
    let s = [
        [gi[0][0] * h[0][0] + gi[0][1] * h[1][0], gi[0][0] * h[0][1] + gi[0][1] * h[1][1]],
        [gi[1][0] * h[0][0] + gi[1][1] * h[1][0], gi[1][0] * h[0][1] + gi[1][1] * h[1][1]],
    ];
    // eigen-directions as unit coordinate pairs in (e_z, e_th)
    let norm2 = |(a, b): (T, T)| g[0][0] * a * a + T::two() * g[0][1] * a * b + g[1][1] * b * b;
    let mut v = None;
    let mut w = None;
    for d in eigen_directions(s) {
        let n2 = norm2(d);
        if n2 < zero {
            // e_z is the only direction with a temporal component
            let k = (-n2).sqrt().recip() * d.0.signum();
            v = Some((d.0 * k, d.1 * k));
        } else if n2 > zero {
            let k = n2.sqrt().recip();
            w = Some((d.0 * k, d.1 * k));
        }
    }
    let (v, w) = match (v, w) {
        (Some(v), Some(w)) => (v, w),
        _ => ((root.recip(), zero), (zero, f.recip())),
    };
    let form = |(a, b): (T, T)| h[0][0] * a * a + T::two() * h[0][1] * a * b + h[1][1] * b * b;
    let vec = |(a, b): (T, T)| e_z * a + e_th * b;
    Ok(BoundaryCurvature { mu, v: vec(v), w: vec![vec(w)], a_vv: form(v), a_ww: vec![form(w)] })
}

/// Eigen-directions of a real 2x2 matrix with real spectrum; returns the
/// coordinate axes when the matrix is (numerically) a multiple of the identity.
fn eigen_directions<T: Real>(s: [[T; 2]; 2]) -> [(T, T); 2] {
    let (a, b, c, d) = (s[0][0], s[0][1], s[1][0], s[1][1]);
    let scale = a.abs() + b.abs() + c.abs() + d.abs() + T::of(1e-300);
    let tol = T::of(1e-13) * scale;
    if b.abs() <= tol && c.abs() <= tol {
        return [(T::one(), T::zero()), (T::zero(), T::one())];
    }
    let half_tr = (a + d) * T::half();
    let disc = ((a - d) * T::half()).powi(2) + b * c;
    let root = disc.max(T::zero()).sqrt();
    let pick = |lam: T| if b.abs() > c.abs() { (b, lam - a) } else { (lam - d, c) };
    [pick(half_tr + root), pick(half_tr - root)]
}

/// Closed-form rotational curvature condition `f''/(1 - f'^2) - 1/f`; the
/// condition holds where this is `<= 0`.
pub fn condition_value(p: &RotationalProfile, z: f64) -> f64 {
    let (f, df, d2f) = p.jet(z);
    d2f / (1.0 - df * df) - 1.0 / f
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub ok: bool,
    pub worst_z: f64,
    pub worst_value: f64,
    /// Whether `sign(A_VV + A_WW)` matched `sign(-condition_value)` at every sample.
    pub signs_agree: bool,
    pub disagreements: usize,
}

/// Samples the curvature condition on `[z_lo, z_hi]`.
pub fn check_condition_curvature(p: &RotationalProfile, z_lo: f64, z_hi: f64, samples: usize) -> Result<ConditionReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut worst = (f64::NEG_INFINITY, z_lo);
    let mut disagreements = 0;
    for k in 0..samples {
        let z = z_lo + (z_hi - z_lo) * k as f64 / (samples - 1) as f64;
        let c = profile_curvature(p, z)?;
        let value = condition_value(p, z);
        let min_ww = c.a_ww.iter().copied().fold(f64::INFINITY, f64::min);
        if sign_with_tol(c.a_vv + min_ww) != sign_with_tol(-value) {
            disagreements += 1;
        }
        if value > worst.0 {
            worst = (value, z);
        }
    }
    Ok(ConditionReport {
        ok: worst.0 <= CONDITION_TOL,
        worst_z: worst.1,
        worst_value: worst.0,
        signs_agree: disagreements == 0,
        disagreements,
    })
}

fn sign_with_tol(x: f64) -> i8 {
    if x > CONDITION_TOL {
        1
    } else if x < -CONDITION_TOL {
        -1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafKind {
    HyperbolicPlane,
    Plane,
}

/// Constant mean curvature leaf meeting a rotational tube perpendicularly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmcLeaf {
    pub kind: LeafKind,
    /// Pseudo-radius `R > 0` (hyperbolic leaves only).
    pub radius: Option<f64>,
    /// Vertex offset `J` along the time axis; leaf points satisfy `<P - J e3, P - J e3> = -R^2`.
    pub vertex: f64,
    pub z_anchor: f64,
    /// `true` when the leaf opens towards the future (`f' > 0` at the anchor).
    pub opens_up: bool,
}

impl CmcLeaf {
    /// Point at hyperbolic angle `l` and azimuth `theta`.
    pub fn point(&self, l: f64, theta: f64) -> SpacetimeVector<f64> {
        match self.radius {
            Some(r) => {
                let r = if self.opens_up { r } else { -r };
                SpacetimeVector::new2(r * l.sinh() * theta.cos(), r * l.sinh() * theta.sin(), r * l.cosh() + self.vertex)
            }
            None => SpacetimeVector::new2(l * theta.cos(), l * theta.sin(), self.z_anchor),
        }
    }

    /// Graph height above radius `rho`.
    pub fn height(&self, rho: f64) -> f64 {
        match self.radius {
            Some(r) => {
                let s = if self.opens_up { 1.0 } else { -1.0 };
                self.vertex + s * (r * r + rho * rho).sqrt()
            }
            None => self.z_anchor,
        }
    }

    /// `(u', u'')` of the graph at `rho`.
    pub fn slope_curvature(&self, rho: f64) -> (f64, f64) {
        match self.radius {
            Some(r) => {
                let s = if self.opens_up { 1.0 } else { -1.0 };
                let q = (r * r + rho * rho).sqrt();
                (s * rho / q, s * r * r / (q * q * q))
            }
            None => (0.0, 0.0),
        }
    }
}

/// The CMC leaf through the tube point at height `z`.
pub fn cmc_leaf_through(p: &RotationalProfile, z: f64) -> CmcLeaf {
    let (f, df, _) = p.jet(z);
    if df.abs() < FLAT_SLOPE_TOL {
        return CmcLeaf { kind: LeafKind::Plane, radius: None, vertex: z, z_anchor: z, opens_up: false };
    }
    let r = f / df * (1.0 - df * df).sqrt();
    let j = z - f / df;
    CmcLeaf { kind: LeafKind::HyperbolicPlane, radius: Some(r.abs()), vertex: j, z_anchor: z, opens_up: df > 0.0 }
}

/// `g'(z)` for the axis height `g` of the leaf family; positive values certify
/// that neighbouring leaves do not cross.
pub fn foliation_monotonicity(p: &RotationalProfile, z: f64) -> Result<f64> {
    p.validate_at(z)?;
    let (f, df, d2f) = p.jet(z);
    let w = 1.0 - df * df;
    let root = w.sqrt();
    Ok(root * (1.0 - d2f * f / ((1.0 + root) * w)))
}

/// Outward normal and future eigen-direction of the right branch at `x > 0`.
pub fn planar_boundary_data(b: &PlanarBoundary, x: f64) -> Result<(SpacetimeVector<f64>, SpacetimeVector<f64>)> {
    if b.is_vertical() {
        return Ok((SpacetimeVector::new1(1.0, 0.0), SpacetimeVector::e_t(1)));
    }
    b.validate_at(x)?;
    let (_, ds, _) = b.jet(x);
    let n = ds.signum() / (ds * ds - 1.0).sqrt();
    Ok((SpacetimeVector::new1(ds * n, n), SpacetimeVector::new1(n, ds * n)))
}

/// Curvature of the right branch at `x > 0`: `A(V, V) = sgn(s') s''/(s'^2 - 1)^{3/2}`.
pub fn planar_curvature(b: &PlanarBoundary, x: f64) -> Result<BoundaryCurvature<f64>> {
    let (mu, v) = planar_boundary_data(b, x)?;
    if b.is_vertical() {
        return Ok(BoundaryCurvature { mu, v, w: Vec::new(), a_vv: 0.0, a_ww: Vec::new() });
    }
    let (_, ds, d2s) = b.jet(x);
    // A(X, Y) = -<d^2 E(X, Y), mu> with E(x) = (x, s(x)), V = sgn(s') E'/sqrt(s'^2 - 1)
    let e_xx = SpacetimeVector::new1(0.0, d2s);
    let a_vv = -e_xx.dot(&mu) / (ds * ds - 1.0);
    Ok(BoundaryCurvature { mu, v, w: Vec::new(), a_vv, a_ww: Vec::new() })
}

/// Root of `g` by Newton iteration from `guess`, falling back to bisection on
/// `[lo, hi]` when a step leaves the bracket or stalls.
pub(crate) fn newton_bisect(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    guess: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> std::result::Result<f64, String> {
    let mut x = guess;
    for _ in 0..50 {
        let gx = g(x);
        if !gx.is_finite() {
            break;
        }
        if gx.abs() <= tol * (1.0 + x.abs()) {
            return Ok(x);
        }
        let step = gx / dg(x);
        let next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            break;
        }
        x = next;
        if step.abs() <= tol * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    // bisection: expand a bracket around the guess inside (lo, hi)
    let (mut a, mut b) = (guess.max(lo), guess.max(lo));
    let mut width = 1e-3 * (1.0 + guess.abs());
    let sign = |x: f64| g(x).signum();
    let s0 = sign(guess);
    let mut found = false;
    for _ in 0..200 {
        a = (guess - width).max(lo.max(f64::MIN_POSITIVE));
        b = (guess + width).min(hi);
        if sign(a) != s0 || sign(b) != s0 {
            found = true;
            break;
        }
        width *= 2.0;
    }
    if !found {
        return Err(format!("no sign change around {guess}"));
    }
    if sign(a) == s0 {
        a = guess;
    } else {
        b = guess;
    }
    let sa = sign(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if sign(m) == sa {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() <= tol * (1.0 + m.abs()) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn curvature_examples() {
        let c = profile_curvature(&RotationalProfile::cylinder(1.0), 0.3).unwrap();
        close(c.a_vv, 0.0, 1e-15);
        close(c.a_ww[0], 1.0, 1e-15);
        let c = profile_curvature(&RotationalProfile::pseudosphere(1.0, 0.0), 0.0).unwrap();
        close(c.a_vv, -1.0, 1e-14);
        close(c.a_ww[0], 1.0, 1e-14);
        let c = profile_curvature(&RotationalProfile::sine_tube(2.0, 0.5, 1.0), PI / 2.0).unwrap();
        close(c.a_vv, 0.5, 1e-14);
        close(c.a_ww[0], 1.0 / 2.5, 1e-14);
    }

    #[test]
    fn curvature_matches_closed_forms() {
        let p = RotationalProfile::sine_tube(2.0, 0.5, 1.3);
        for k in 0..50 {
            let z = -3.0 + 0.13 * k as f64;
            let c = profile_curvature(&p, z).unwrap();
            let (f, df, d2f) = p.jet(z);
            let w = 1.0 - df * df;
            close(c.a_vv, -d2f / w.powf(1.5), 1e-12);
            close(c.a_ww[0], 1.0 / (f * w.sqrt()), 1e-12);
            let v = SpacetimeVector::new2(df, 0.0, 1.0) * w.sqrt().recip();
            close((c.v - v).euclidean_norm(), 0.0, 1e-12);
            let mu = SpacetimeVector::new2(1.0, 0.0, df) * w.sqrt().recip();
            close((c.mu - mu).euclidean_norm(), 0.0, 1e-12);
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let p = RotationalProfile::sine_tube(2.0, 0.5, 1.0);
        for k in 0..40 {
            let c = profile_curvature(&p, 0.17 * k as f64).unwrap();
            close(c.mu.dot(&c.v), 0.0, 1e-12);
            close(c.mu.square(), 1.0, 1e-12);
            close(c.v.square(), -1.0, 1e-12);
            close(c.v.dot(&c.w[0]), 0.0, 1e-12);
        }
    }

    #[test]
    fn rejects_lightlike_tube() {
        let p = RotationalProfile::sine_tube(2.0, 1.0, 1.0);
        assert!(matches!(profile_curvature(&p, 0.0), Err(Error::ProfileInvariant { .. })));
    }

    #[test]
    fn condition_examples() {
        let r = check_condition_curvature(&RotationalProfile::pseudosphere(1.0, 0.5), -3.0, 3.0, 101).unwrap();
        assert!(r.ok && r.worst_value.abs() < 1e-14 && r.signs_agree);
        let r = check_condition_curvature(&RotationalProfile::sine_tube(2.0, 0.5, 1.0), 0.0, 2.0 * PI, 4001).unwrap();
        assert!(r.ok && r.signs_agree);
        close(r.worst_z, 1.5 * PI, 2e-3);
        close(r.worst_value, 0.5 - 1.0 / 1.5, 1e-6);
        let r = check_condition_curvature(&RotationalProfile::sine_tube(2.0, 0.4, 2.0), 0.0, PI, 501).unwrap();
        assert!(!r.ok && r.worst_value > 0.0 && r.signs_agree);
    }

    #[test]
    fn leaf_examples() {
        let p = RotationalProfile::pseudosphere(1.0, 0.0);
        let leaf = cmc_leaf_through(&p, 1.0);
        assert_eq!(leaf.kind, LeafKind::HyperbolicPlane);
        close(leaf.radius.unwrap(), 2f64.sqrt(), 1e-14);
        close(leaf.vertex, -1.0, 1e-14);
        assert_eq!(cmc_leaf_through(&p, 0.0).kind, LeafKind::Plane);
        let cyl = RotationalProfile::cylinder(1.0);
        for z in [-1.0, 0.0, 2.5] {
            let l = cmc_leaf_through(&cyl, z);
            assert_eq!(l.kind, LeafKind::Plane);
            assert_eq!(l.height(0.3), z);
        }
    }

    #[test]
    fn leaf_meets_tube_perpendicularly() {
        let p = RotationalProfile::sine_tube(2.0, 0.5, 1.0);
        for z in [0.3, 2.0, 4.0, 5.5] {
            let leaf = cmc_leaf_through(&p, z);
            let (f, df, _) = p.jet(z);
            close(leaf.height(f), z, 1e-12);
            close(leaf.slope_curvature(f).0, df, 1e-12);
            close(p.leaf_height(z, f), z, 1e-12);
            close(p.leaf_height(z, 0.7), leaf.height(0.7), 1e-12);
        }
    }

    #[test]
    fn leaf_points_satisfy_pseudo_radius() {
        let p = RotationalProfile::pseudosphere(1.3, -0.4);
        let leaf = cmc_leaf_through(&p, 0.8);
        let r = leaf.radius.unwrap();
        for k in 0..20 {
            let pt = leaf.point(-2.0 + 0.2 * k as f64, 0.3 * k as f64);
            let d = pt - SpacetimeVector::new2(0.0, 0.0, leaf.vertex);
            close(d.square() + r * r, 0.0, 1e-10);
        }
    }

    #[test]
    fn monotonicity_examples() {
        close(foliation_monotonicity(&RotationalProfile::pseudosphere(1.0, 0.0), 0.0).unwrap(), 0.5, 1e-15);
        close(foliation_monotonicity(&RotationalProfile::cylinder(1.0), 3.0).unwrap(), 1.0, 1e-15);
        let g = foliation_monotonicity(&RotationalProfile::sine_tube(2.0, 0.5, 1.0), PI).unwrap();
        close(g, 0.75f64.sqrt(), 1e-12);
    }

    #[test]
    fn monotonicity_matches_axis_height_derivative() {
        let p = RotationalProfile::sine_tube(2.0, 0.5, 1.0);
        for z in [0.2, 1.0, 2.9, 4.4] {
            let h = 1e-5;
            let fd = (p.leaf_height(z + h, 0.0) - p.leaf_height(z - h, 0.0)) / (2.0 * h);
            close(foliation_monotonicity(&p, z).unwrap(), fd, 1e-8);
        }
    }

    #[test]
    fn planar_examples() {
        let t = PlanarBoundary::trumpet();
        let x = 0.5f64.atanh(); // coth x = 2
        let (_, v) = planar_boundary_data(&t, x).unwrap();
        let s3 = 3f64.sqrt();
        close(v.spatial()[0], 1.0 / s3, 1e-12);
        close(v.temporal(), 2.0 / s3, 1e-12);
        let (mu, v) = planar_boundary_data(&PlanarBoundary::cone(2.0, 0.0), 0.7).unwrap();
        close(mu.spatial()[0], 2.0 / s3, 1e-15);
        close(mu.temporal(), 1.0 / s3, 1e-15);
        close(v.spatial()[0], 1.0 / s3, 1e-15);
        assert!(planar_boundary_data(&PlanarBoundary::cone(1.0, 0.0), 1.0).is_err());
        let c = planar_curvature(&t, 1.2).unwrap();
        close(c.a_vv, -(1.2f64).sinh(), 1e-12);
    }

    #[test]
    fn trumpet_incidence_inverts_height() {
        let t = PlanarBoundary::trumpet();
        for y in [-3.0, -0.5, 0.0, 2.0] {
            let x = t.incidence(y, 1.0).unwrap();
            close(t.jet(x).0, y, 1e-11);
            close(x, t.branch_x(y).unwrap(), 1e-10);
        }
    }

    #[test]
    fn extended_fields_agree_on_boundary() {
        let p = RotationalProfile::sine_tube(2.0, 0.5, 1.0);
        let z = 0.9;
        let c = profile_curvature(&p, z).unwrap();
        let on = p.v_field(&SpacetimeVector::new2(p.f(z), 0.0, z));
        close((on - c.v).euclidean_norm(), 0.0, 1e-12);
        let axis = p.v_field(&SpacetimeVector::new2(0.0, 0.0, z));
        assert_eq!(axis, SpacetimeVector::e_t(2));
        let t = PlanarBoundary::trumpet();
        let x = 0.8;
        let (_, v) = planar_boundary_data(&t, x).unwrap();
        let on = t.v_field(&SpacetimeVector::new1(x, t.jet(x).0));
        close((on - v).euclidean_norm(), 0.0, 1e-12);
        close(t.v_field(&SpacetimeVector::new1(0.3, -0.2)).square(), -1.0, 1e-13);
    }

    #[test]
    fn grammar_round_trips() {
        for s in ["cylinder(1)", "pseudosphere(1,0)", "sine_tube(2,0.5,1)", "trumpet", "cone(2,0.5)", "vertical(1)"] {
            let t: Tube = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert_eq!("cylinder".parse::<Tube>().unwrap(), Tube::Rotational(RotationalProfile::cylinder(1.0)));
        assert!("sine_tube(2,1.5,1)".parse::<Tube>().is_err());
        assert!("torus(1)".parse::<Tube>().is_err());
        assert!("pseudosphere(1)".parse::<Tube>().is_err());
    }
}
