use hkflow::axisym::ProfileSurface;
use hkflow::cli::run_scenario;
use hkflow::flow::{self, FlowState, RunOptions, Status, StepControl};
use hkflow::monitors::ConstantsLedger;
use hkflow::scenario::{ScenarioConfig, Shape};

/// Adaptive RK4 with step doubling for `dR/dt = −(n/R)^k`, run until `R`
/// falls below `r_stop`. Returns the elapsed time.
fn ode_extinction_time(n: f64, k: i32, r0: f64, r_stop: f64, tol: f64) -> f64 {
    let f = |r: f64| -(n / r).powi(k);
    let rk4 = |r: f64, h: f64| {
        let k1 = f(r);
        let k2 = f(r + 0.5 * h * k1);
        let k3 = f(r + 0.5 * h * k2);
        let k4 = f(r + h * k3);
        r + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let (mut t, mut r, mut h) = (0.0, r0, 1e-6);
    while r > r_stop {
        let full = rk4(r, h);
        let half = rk4(rk4(r, 0.5 * h), 0.5 * h);
        let err = (full - half).abs() / 15.0;
        if err <= tol * r && half > 0.0 {
            t += h;
            r = half;
            h *= (0.9 * (tol * r / err.max(1e-300)).powf(0.2)).min(2.0);
        } else {
            h *= 0.5;
        }
        // Never step past the target radius.
        h = h.min(0.5 * (r - r_stop).max(r_stop) / f(r).abs());
    }
    t
}

#[test]
fn radius_law_matches_ode_oracle() {
    // Remaining time below r_stop is r_stop^4/32, so 1e-3 leaves 3e-14.
    let t = ode_extinction_time(2.0, 3, 1.0, 1e-3, 1e-12);
    assert!((t - 1.0 / 32.0).abs() <= 1e-10, "{t}");
    let t = ode_extinction_time(3.0, 5, 2.0, 1e-3, 1e-12);
    let exact = 2f64.powi(6) / (6.0 * 3f64.powi(5));
    assert!((t - exact).abs() <= 1e-10 * exact.max(1.0), "{t} vs {exact}");
}

fn sphere_blowup(nodes: usize) -> f64 {
    let cfg = ScenarioConfig { nodes, run_to_blowup: true, blowup_h: 1e3, ..Default::default() };
    let s = run_scenario(&cfg, None, false).unwrap();
    assert_eq!(s.status, Status::BlownUp);
    s.blowup.unwrap().t
}

#[test]
fn sphere_blowup_time_converges_with_n() {
    let exact = 1.0 / 32.0;
    let errs: Vec<f64> = [64, 128, 256].iter().map(|&n| (sphere_blowup(n) - exact).abs() / exact).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] <= 0.01);
    // dt scales with h², so the first-order Euler error is second order in h.
    let order = (errs[1] / errs[2]).log2();
    assert!(order > 1.8, "order {order}, {errs:?}");
}

#[test]
fn spheroid_keeps_h_min_and_loses_volume() {
    let cfg = ScenarioConfig {
        shape: Shape::Spheroid { a: 1.0, c: 2.0 },
        nodes: 200,
        t_end: Some(0.01),
        sample_every: Some(5e-4),
        ..Default::default()
    };
    let s = run_scenario(&cfg, None, false).unwrap();
    assert_eq!(s.status, Status::Completed);
    assert!(s.records.len() >= 20);
    for r in &s.records {
        assert!(r.h_min >= 1.25 * (1.0 - 1e-4), "H_min {} at t = {}", r.h_min, r.t);
        assert!(r.convex);
    }
    for w in s.records.windows(2) {
        assert!(w[1].volume < w[0].volume + 1e-10 * w[0].volume);
    }
    assert!(s.volume_monotone && s.pass);
}

#[test]
fn record_grid_hits_sample_times() {
    let surface = ProfileSurface::spheroid(1.0, 1.5, 100).unwrap();
    let mut st = FlowState::new(surface, 3, &[6.0], "grid").unwrap();
    let ledger = ConstantsLedger::new(2, 3, 6.0, st.h_min(), None).unwrap();
    let opts = RunOptions { t_end: Some(0.004), sample_every: Some(1e-3), growth_factor: 1e9, ..Default::default() };
    let out = flow::run(&mut st, &StepControl::default(), &opts, &ledger).unwrap();
    let times: Vec<f64> = out.records.iter().map(|r| r.t).collect();
    assert_eq!(times.len(), 5, "{times:?}");
    for (i, t) in times.iter().enumerate() {
        assert!((t - 1e-3 * i as f64).abs() < 1e-15, "{times:?}");
    }
}

#[test]
fn midpoint_and_euler_agree_on_a_short_run() {
    let mk = |scheme| {
        let cfg = ScenarioConfig {
            shape: Shape::Spheroid { a: 1.0, c: 1.5 },
            nodes: 100,
            t_end: Some(0.01),
            scheme,
            ..Default::default()
        };
        run_scenario(&cfg, None, false).unwrap()
    };
    let e = mk(flow::Scheme::Euler);
    let m = mk(flow::Scheme::Midpoint);
    let rel = (e.h_max_final - m.h_max_final).abs() / m.h_max_final;
    assert!(rel < 1e-3, "{rel}");
}
