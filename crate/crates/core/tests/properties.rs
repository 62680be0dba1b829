use minkflow::chart::FlatChart;
use minkflow::flow::{comparison_pair_run, Event};
use minkflow::monitor::volume_identity;
use minkflow::profile::{condition_value, profile_curvature, RotationalProfile};
use minkflow::scenario::{initial_state, parse_config, simulate, InitialData, ScenarioConfig, ScenarioKind};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ScenarioKind> {
    prop::sample::select(ScenarioKind::ALL.to_vec())
}

fn data() -> impl Strategy<Value = InitialData> {
    prop_oneof![
        Just(InitialData::Exact),
        (-1.0..1.0f64).prop_map(InitialData::Constant),
        (-1.0..1.0f64, 0.0..0.3f64).prop_map(|(base, amp)| InitialData::Bump { base, amp }),
        (0.5..3.0f64).prop_map(InitialData::Leaf),
        (0.5..3.0f64).prop_map(InitialData::Hyperboloid),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(
        kind in kind(),
        half in 3usize..60,
        cfl in 0.01..0.5f64,
        eps in 1e-4..0.5f64,
        max_steps in 1usize..1_000_000,
        h_stop in 0.0..1e-3f64,
        t_end in prop::option::of(-1.0..50.0f64),
        stride in 1usize..5000,
        probe in 0usize..5000,
        toggles in prop::array::uniform4(any::<bool>()),
        initial in data(),
        comparison in prop::option::of(data()),
        center in prop::option::of(-3.0..3.0f64),
    ) {
        let mut cfg = ScenarioConfig::new(kind, 2 * half + 1).unwrap();
        cfg.control.cfl = cfl;
        cfg.control.eps_guard = eps;
        cfg.control.max_steps = max_steps;
        cfg.control.h_stop = h_stop;
        cfg.control.t_end = t_end.unwrap_or(f64::INFINITY);
        cfg.control.stride = stride;
        cfg.control.probe_every = probe;
        cfg.monitors.volume = toggles[0];
        cfg.monitors.evolution = toggles[1];
        cfg.monitors.boundary = toggles[2];
        cfg.monitors.estimates = toggles[3];
        cfg.initial = initial;
        cfg.comparison = comparison;
        cfg.certificate_center = center;
        cfg.identity_orders = toggles[0] ^ toggles[1];
        let back = parse_config(&cfg.serialize()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn condition_sign_matches_closed_form(a in 1.0..4.0f64, b in -0.9..0.9f64, omega in 0.2..1.0f64, z in -10.0..10.0f64) {
        prop_assume!(b.abs() < a && (b * omega).abs() < 0.95);
        let p = RotationalProfile::sine_tube(a, b, omega);
        let c = profile_curvature(&p, z).unwrap();
        let (f, df, d2f) = (a + b * (omega * z).sin(), b * omega * (omega * z).cos(), -b * omega * omega * (omega * z).sin());
        let closed = -(d2f / (1.0 - df * df) - 1.0 / f);
        prop_assert!((condition_value(&p, z) + closed).abs() <= 1e-12);
        if closed.abs() > 1e-9 {
            prop_assert_eq!((c.a_vv + c.a_ww[0]).signum(), closed.signum());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_bumps_stay_ordered(a1 in 0.0..0.2f64, a2 in 0.0..0.2f64, gap in 0.0..0.05f64) {
        let base = gap + (a1 - a2).max(0.0);
        let cfg = parse_config(&format!(
            "scenario = cylinder_disk\ngrid = radial2d\nnodes = 21\ninitial = bump(0,{a1})\ncomparison = bump({base},{a2})\nt_end = 0.05\n"
        )).unwrap();
        let upper = ScenarioConfig { initial: cfg.comparison.clone().unwrap(), ..cfg.clone() };
        let pair = comparison_pair_run(
            initial_state(&cfg).unwrap(),
            initial_state(&upper).unwrap(),
            &cfg.control,
            &cfg.profile,
            &FlatChart::new(2),
            None,
        ).unwrap();
        for &(t, g) in &pair.min_gap {
            prop_assert!(g >= -1e-10, "gap {} at t = {}", g, t);
        }
    }

    #[test]
    fn guard_keeps_recorded_states_spacelike(t0 in -2.0..-0.3f64, eps in 1e-3..0.2f64, half in 10usize..25) {
        let cfg = parse_config(&format!(
            "scenario = grim_reaper\nnodes = {}\nt0 = {t0}\neps_guard = {eps}\n", 2 * half + 1
        )).unwrap();
        let traj = simulate(&cfg).unwrap();
        let tripped = matches!(traj.event, Event::GuardTripped { .. });
        prop_assert!(tripped);
        for r in &traj.records {
            prop_assert!(r.max_slope2 <= 1.0 - eps, "{} at t = {}", r.max_slope2, r.t);
        }
    }

    #[test]
    fn volume_identity_holds_on_bumps(base in -0.5..0.5f64, amp in -0.15..0.15f64) {
        let cfg = parse_config(&format!(
            "scenario = cylinder_disk\ngrid = radial2d\nnodes = 41\ninitial = bump({base},{amp})\nt_end = 0.05\n"
        )).unwrap();
        let traj = simulate(&cfg).unwrap();
        prop_assert!(volume_identity(&traj).unwrap().residual <= 1e-3);
    }
}
