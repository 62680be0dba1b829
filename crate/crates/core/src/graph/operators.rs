//! Intrinsic differential operators on discrete graphs.
//!
//! The Laplace–Beltrami operator is discretized in divergence form
//! `(1/sqrt g) d_i(sqrt g g^{ij} d_j f)`, with fluxes at half nodes where the
//! grid allows it. Values are returned only where the full stencil exists.

use crate::error::{Error, Result};
use crate::graph::{Domain, FlowState, GeometryFields, GridKind};
use crate::scalar::Real;

fn check_len<T>(geo: &GeometryFields<T>, f: &[T]) -> Result<()> {
    if geo.nodes.len() != f.len() {
        return Err(Error::DimensionMismatch(geo.nodes.len(), f.len()));
    }
    Ok(())
}

/// Slope factor `sqrt(1 - ((u_{j+1} - u_j)/h)^2)` between nodes `j` and `j+1`.
fn half_w<T: Real>(u: &[T], j: usize, h: T) -> T {
    let s = (u[j + 1] - u[j]) / h;
    (T::one() - s * s).sqrt()
}

/// Discrete Laplace–Beltrami of a field given on `geo.nodes`.
pub fn laplace_beltrami<T: Real>(state: &FlowState<T>, geo: &GeometryFields<T>, f: &[T]) -> Result<Vec<Option<T>>> {
    check_len(geo, f)?;
    let h = state.spacing();
    let h2 = h * h;
    let u = &state.u;
    let m = geo.nodes.len();
    let mut out = vec![None; m];
    match state.grid.kind {
        GridKind::Curve1D => {
            for j in 1..m - 1 {
                let (wp, wm) = (half_w(u, j, h), half_w(u, j - 1, h));
                let flux = (f[j + 1] - f[j]) / wp - (f[j] - f[j - 1]) / wm;
                out[j] = Some(flux / (h2 * geo.w[j]));
            }
        }
        GridKind::Radial2D => {
            let w0 = half_w(u, 0, h);
            out[0] = Some(T::of(4.0) * (f[1] - f[0]) / (h2 * w0 * geo.w[0]));
            for j in 1..m - 1 {
                let rho = geo.pos[j][0];
                let (rp, rm) = (rho + T::half() * h, rho - T::half() * h);
                let (wp, wm) = (half_w(u, j, h), half_w(u, j - 1, h));
                let flux = rp * (f[j + 1] - f[j]) / wp - rm * (f[j] - f[j - 1]) / wm;
                out[j] = Some(flux / (h2 * rho * geo.w[j]));
            }
        }
        GridKind::Disk2D => {
            let Domain::Disk(d) = &state.domain else { unreachable!() };
            let n = d.n;
            let mut idx = vec![usize::MAX; n * n];
            for (i, &k) in geo.nodes.iter().enumerate() {
                idx[k] = i;
            }
            let two = T::two();
            // sqrt(g) g^{ij} per node
            let a: Vec<[[T; 2]; 2]> = (0..m)
                .map(|i| {
                    let gi = geo.ginv[i];
                    let w = geo.w[i];
                    [[w * gi[0][0], w * gi[0][1]], [w * gi[1][0], w * gi[1][1]]]
                })
                .collect();
            for (i, &k) in geo.nodes.iter().enumerate() {
                if !d.core[k] {
                    continue;
                }
                let at = |di: isize, dj: isize| idx[(k as isize + dj * n as isize + di) as usize];
                let (e, wst, no, so) = (at(1, 0), at(-1, 0), at(0, 1), at(0, -1));
                let axx_p = (a[i][0][0] + a[e][0][0]) * T::half();
                let axx_m = (a[i][0][0] + a[wst][0][0]) * T::half();
                let ayy_p = (a[i][1][1] + a[no][1][1]) * T::half();
                let ayy_m = (a[i][1][1] + a[so][1][1]) * T::half();
                let diag = (axx_p * (f[e] - f[i]) - axx_m * (f[i] - f[wst]) + ayy_p * (f[no] - f[i])
                    - ayy_m * (f[i] - f[so]))
                    / h2;
                let fy_e = (f[at(1, 1)] - f[at(1, -1)]) / (two * h);
                let fy_w = (f[at(-1, 1)] - f[at(-1, -1)]) / (two * h);
                let fx_n = (f[at(1, 1)] - f[at(-1, 1)]) / (two * h);
                let fx_s = (f[at(1, -1)] - f[at(-1, -1)]) / (two * h);
                let cross = (a[e][0][1] * fy_e - a[wst][0][1] * fy_w) / (two * h)
                    + (a[no][1][0] * fx_n - a[so][1][0] * fx_s) / (two * h);
                out[i] = Some((diag + cross) / geo.w[i]);
            }
        }
    }
    Ok(out)
}

/// Coordinate gradient `(f_x, f_y)` of a field on `geo.nodes` (radial: `(f_rho, 0)`).
pub fn gradient<T: Real>(state: &FlowState<T>, geo: &GeometryFields<T>, f: &[T]) -> Result<Vec<Option<[T; 2]>>> {
    check_len(geo, f)?;
    let h = state.spacing();
    let two = T::two();
    let m = geo.nodes.len();
    let mut out = vec![None; m];
    match state.grid.kind {
        GridKind::Curve1D | GridKind::Radial2D => {
            if state.grid.kind == GridKind::Radial2D {
                out[0] = Some([T::zero(), T::zero()]);
            }
            for j in 1..m - 1 {
                out[j] = Some([(f[j + 1] - f[j - 1]) / (two * h), T::zero()]);
            }
        }
        GridKind::Disk2D => {
            let Domain::Disk(d) = &state.domain else { unreachable!() };
            let n = d.n;
            let mut idx = vec![usize::MAX; n * n];
            for (i, &k) in geo.nodes.iter().enumerate() {
                idx[k] = i;
            }
            for (i, &k) in geo.nodes.iter().enumerate() {
                if !d.core[k] {
                    continue;
                }
                let at = |di: isize, dj: isize| f[idx[(k as isize + dj * n as isize + di) as usize]];
                out[i] = Some([(at(1, 0) - at(-1, 0)) / (two * h), (at(0, 1) - at(0, -1)) / (two * h)]);
            }
        }
    }
    Ok(out)
}

/// Second-order one-sided derivative at the last node of a uniform 1D array.
pub fn one_sided_end<T: Real>(f: &[T], h: T) -> T {
    let n = f.len();
    (T::of(3.0) * f[n - 1] - T::of(4.0) * f[n - 2] + f[n - 3]) / (T::two() * h)
}

/// Second-order one-sided derivative at the first node of a uniform 1D array.
pub fn one_sided_start<T: Real>(f: &[T], h: T) -> T {
    (-T::of(3.0) * f[0] + T::of(4.0) * f[1] - f[2]) / (T::two() * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::FlatChart;
    use crate::graph::{geometry, DiskLayout};
    use crate::profile::{RotationalProfile, Tube};
    use std::sync::Arc;

    #[test]
    fn radial_laplacian_of_square_is_exact_on_plane() {
        let tube = Tube::Rotational(RotationalProfile::cylinder(2.0));
        let s = FlowState::radial(17, 2.0, 0.0, |_| 0.3).unwrap();
        let g = geometry(&s, &tube, &FlatChart::new(2)).unwrap();
        let f: Vec<f64> = g.pos.iter().map(|p| 5.0 - p[0] * p[0]).collect();
        let lap = laplace_beltrami(&s, &g, &f).unwrap();
        for l in lap.iter().flatten() {
            assert!((l + 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_laplacian_second_order() {
        let tube = Tube::Rotational(RotationalProfile::cylinder(1.0));
        let mut errs = Vec::new();
        for n in [41, 81] {
            let layout = Arc::new(DiskLayout::new(n, 1.0).unwrap());
            let s = FlowState::disk(layout, 0.0, |x: f64, y: f64| 0.1 * (1.0 - x * x - y * y).powi(2) * (1.0 + 0.5 * x + 0.3 * y)).unwrap();
            let g = geometry(&s, &tube, &FlatChart::new(2)).unwrap();
            // the height function satisfies Delta u = v_hat H
            let lap = laplace_beltrami(&s, &g, &s.active().iter().map(|&k| s.u[k]).collect::<Vec<_>>()).unwrap();
            let mut e: f64 = 0.0;
            for (i, l) in lap.iter().enumerate() {
                if let Some(l) = l {
                    e = e.max((l - g.v_hat[i] * g.mean_curvature[i]).abs());
                }
            }
            errs.push(e);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }
}
