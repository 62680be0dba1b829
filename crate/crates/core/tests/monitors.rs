use minkflow::monitor::{boundary_identities, evolution_residuals, stability_certificate, volume_identity};
use minkflow::scenario::{initial_state, parse_config, simulate};
use minkflow::{Error, Vector};

fn residuals(conf: &str) -> (f64, f64, f64, f64) {
    let cfg = parse_config(conf).unwrap();
    let traj = simulate(&cfg).unwrap();
    let e = evolution_residuals(&traj, &cfg.profile).unwrap();
    let b = boundary_identities(&traj, &cfg.profile).unwrap();
    (e.res_h, e.res_v, b.res_hmu, volume_identity(&traj).unwrap().residual)
}

#[test]
fn translator_evolution_residual_converges() {
    let conf = |n: usize, s: usize| {
        format!("scenario = grim_reaper\nnodes = {n}\nt_end = -0.95\nstride = {s}\nprobe_every = {s}\n")
    };
    let (h1, v1, _, vol1) = residuals(&conf(51, 20));
    let (h2, v2, _, vol2) = residuals(&conf(101, 80));
    assert!((h1 / h2).log2() >= 1.0, "res_h {h1} -> {h2}");
    assert!((v1 / v2).log2() >= 1.0, "res_v {v1} -> {v2}");
    assert!((vol1 / vol2).log2() >= 1.0, "volume {vol1} -> {vol2}");
}

#[test]
fn cylinder_bump_residuals_shrink_under_refinement() {
    let conf = |n: usize, s: usize| {
        format!("scenario = cylinder_disk\nnodes = {n}\ninitial = bump(0,0.1)\nt_end = 0.02\nstride = {s}\nprobe_every = {s}\n")
    };
    let (h1, v1, hmu1, _) = residuals(&conf(21, 10));
    let (h2, v2, hmu2, _) = residuals(&conf(41, 40));
    assert!(h2 < h1 && v2 < v1 && hmu2 < hmu1, "{h1} {h2} / {v1} {v2} / {hmu1} {hmu2}");
}

#[test]
fn maximal_disk_has_no_residual() {
    let (h, v, hmu, vol) =
        residuals("scenario = cylinder_disk\nnodes = 31\ninitial = constant(0.25)\nmax_steps = 40\nh_stop = 0\nstride = 4\nprobe_every = 4\n");
    for r in [h, v, hmu, vol] {
        assert!(r <= 1e-10, "{r}");
    }
}

#[test]
fn certificates_on_sine_tube_and_cylinder() {
    let widest = parse_config("scenario = sine_tube\nnodes = 41\ninitial = exact\n").unwrap();
    let s = initial_state(&widest).unwrap();
    let c = stability_certificate(&s, &widest.profile, &Vector::new2(0.0, 0.0, std::f64::consts::FRAC_PI_2), None, 1e-3).unwrap();
    assert!(c.ok, "{c:?}");
    assert!(c.interior_margin >= c.epsilon && c.boundary_margin >= 0.0);
    // maximal plane: Delta |x - a|^2 = 2n exactly
    assert!(c.identity_residual < 1e-8, "{}", c.identity_residual);

    let thin = parse_config("scenario = sine_tube\nnodes = 41\ninitial = leaf(4.71238898038469)\n").unwrap();
    let s = initial_state(&thin).unwrap();
    let e = stability_certificate(&s, &thin.profile, &Vector::new2(0.0, 0.0, 4.71238898038469), None, 1e-3);
    assert!(matches!(e, Err(Error::HypothesisFailed { .. })), "{e:?}");

    let cyl = parse_config("scenario = cylinder_disk\nnodes = 21\n").unwrap();
    let s = initial_state(&cyl).unwrap();
    let c = stability_certificate(&s, &cyl.profile, &Vector::new2(0.0, 0.0, 0.0), None, 1e-3).unwrap();
    assert!(!c.ok);
}

#[test]
fn certificate_rejects_bad_epsilon() {
    let cfg = parse_config("scenario = sine_tube\nnodes = 21\n").unwrap();
    let s = initial_state(&cfg).unwrap();
    let r = stability_certificate(&s, &cfg.profile, &Vector::new2(0.0, 0.0, 1.5), None, 0.0);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}
