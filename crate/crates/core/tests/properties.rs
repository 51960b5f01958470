use proptest::prelude::*;

use hkflow::axisym::{build_geometry, ProfileSurface};
use hkflow::flow::{Checkpoint, FlowState, StepControl};
use hkflow::monitors::{q_field, ConstantsLedger};
use hkflow::residual::{verify_square_completion, DerivedFields, Form, Identity};
use hkflow::scenario::ScenarioConfig;
use hkflow::sphere::SphereSolution;

fn odd_k() -> impl Strategy<Value = u32> {
    (1u32..=7).prop_map(|m| 2 * m + 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_of_shape_operator_is_sum_of_principal_curvatures(
        a in 0.5f64..2.0, c in 0.5f64..2.0, n in 64usize..300,
    ) {
        let g = build_geometry(&ProfileSurface::spheroid(a, c, n).unwrap()).unwrap();
        for j in 1..n {
            let s = &g.shape[j];
            let m = g.metric[j].unwrap();
            let trace = (m.g_inv * s.h).trace();
            let sum = g.curv.kappa_meridian[j] + g.curv.kappa_parallel[j];
            prop_assert!((trace - sum).abs() <= 1e-10 * sum.abs());
            prop_assert!((g.mean()[j] - sum).abs() <= 1e-10 * sum.abs());
        }
    }

    #[test]
    fn laplacian_integrates_to_zero(
        a in 0.5f64..2.0, c in 0.5f64..2.0, n in 64usize..300, m in 1u32..6, phase in 0.0f64..6.0,
    ) {
        let s = ProfileSurface::spheroid(a, c, n).unwrap();
        let g = build_geometry(&s).unwrap();
        let f: Vec<f64> = s.nodes().iter().map(|p| (m as f64 * p[1] + phase).sin() + p[0] * p[0]).collect();
        let lap = g.grid.laplace_beltrami(&f);
        let total = g.grid.integrate_cells(&lap);
        let scale = g.grid.integrate_cells(&lap.iter().map(|v| v.abs()).collect::<Vec<_>>());
        prop_assert!(total.abs() <= 1e-8 * scale, "{total} vs {scale}");
    }

    #[test]
    fn euler_step_keeps_spheres_round(r in 0.3f64..3.0, n in 64usize..200) {
        let mut st = FlowState::new(ProfileSurface::sphere(r, n).unwrap(), 3, &[6.0], "p").unwrap();
        let dt = st.stable_dt(&StepControl::default());
        st.step(&StepControl::default(), None).unwrap();
        let expected = r - dt * (2.0 / r).powi(3);
        for p in st.surface.nodes() {
            prop_assert!((p[0].hypot(p[1]) - expected).abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn mean_curvature_evolution_terms_scale_homogeneously(
        a in 0.6f64..1.6, c in 0.6f64..1.6, lambda in prop_oneof![Just(0.5f64), Just(2.0f64)],
    ) {
        let k = 3;
        let base = ProfileSurface::spheroid(a, c, 200).unwrap();
        let scaled = ProfileSurface::new(base.nodes().iter().map(|p| [lambda * p[0], lambda * p[1]]).collect()).unwrap();
        let f0 = DerivedFields::new(&base).unwrap();
        let f1 = DerivedFields::new(&scaled).unwrap();
        let factor = lambda.powi(-(k as i32 + 2));
        let t0 = Identity::HEvo.terms(&f0, k, Form::Stated);
        let t1 = Identity::HEvo.terms(&f1, k, Form::Stated);
        for ((name, v0), (_, v1)) in t0.iter().zip(&t1) {
            let scale = v0.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for j in 1..200 {
                prop_assert!((v1[j] - factor * v0[j]).abs() <= 1e-8 * factor * scale, "{name} at {j}");
            }
        }
    }

    #[test]
    fn square_completion_holds_on_perturbed_spheroids(
        seed in 0u64..1000, amp in 0.0f64..0.05, n in 64usize..400, k in odd_k(),
    ) {
        let s = ProfileSurface::perturbed_spheroid(1.0, 1.5, n, amp, seed).unwrap();
        let f = DerivedFields::new(&s).unwrap();
        let (lo, hi) = ConstantsLedger::ell_window(k);
        for ell in [ConstantsLedger::default_ell(k), lo.ceil() as i32, hi.floor() as i32] {
            let r = verify_square_completion(&f, k, ell);
            prop_assert!(r.max_relative <= 1e-10, "k={k} ell={ell}: {}", r.max_relative);
        }
    }

    #[test]
    fn default_ell_sits_in_window(k in odd_k(), h in 0.1f64..10.0) {
        let ell = ConstantsLedger::default_ell(k);
        let (lo, hi) = ConstantsLedger::ell_window(k);
        prop_assert!(lo <= ell as f64 && ell as f64 <= hi);
        let l = ConstantsLedger::new(2, k, 6.0, h, Some(2.0 * h)).unwrap();
        prop_assert_eq!(l, ConstantsLedger::new(2, k, 6.0, h, Some(2.0 * h)).unwrap());
    }

    #[test]
    fn q_max_matches_a_scan(a in 0.6f64..1.6, c in 0.6f64..2.0) {
        let g = build_geometry(&ProfileSurface::spheroid(a, c, 120).unwrap()).unwrap();
        let l = ConstantsLedger::new(2, 3, 6.0, g.h_min(), None).unwrap();
        let q = q_field(g.mean(), &g.a_norm_sq, &l).unwrap();
        let scan = g.mean().iter().zip(&g.a_norm_sq).map(|(h, a2)| l.q(*h, *a2)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(q.max, scan);
        prop_assert_eq!(q.values[q.argmax], scan);
    }

    #[test]
    fn umbilic_terms_vanish_on_spheres(r in 0.3f64..3.0) {
        let f = DerivedFields::new(&ProfileSurface::sphere(r, 200).unwrap()).unwrap();
        let h2 = (2.0 / r).powi(2);
        for j in 0..=200 {
            prop_assert!(f.grad_mean_sq[j] <= 1e-12 * h2 * h2);
            prop_assert!(f.grad_a_sq[j] <= 1e-12 * h2 * h2);
            prop_assert!(f.grad_a_a_grad_h[j].abs() <= 1e-12 * h2 * h2 * h2);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(steps in 0usize..40, c in 0.8f64..1.6) {
        let mut st = FlowState::new(ProfileSurface::spheroid(1.0, c, 64).unwrap(), 3, &[6.0, 5.0], "p").unwrap();
        for _ in 0..steps {
            st.step(&StepControl::default(), None).unwrap();
        }
        let ck = st.checkpoint();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &ck);
        let restored = FlowState::restore(&back).unwrap();
        prop_assert_eq!(restored.surface.nodes(), st.surface.nodes());
        prop_assert_eq!(restored.t.to_bits(), st.t.to_bits());
    }

    #[test]
    fn radius_power_is_affine(n in 2u32..6, k in odd_k(), r0 in 0.5f64..2.0) {
        let sol = SphereSolution::new(n, k, r0).unwrap();
        let rate = (k + 1) as f64 * (n as f64).powi(k as i32);
        let mut last_h = 0.0;
        for i in 0..10 {
            let t = sol.t_max() * i as f64 / 10.0;
            let r = sol.radius_at(t).unwrap();
            let affine = r0.powi(k as i32 + 1) - rate * t;
            prop_assert!((r.powi(k as i32 + 1) - affine).abs() <= 1e-12 * r0.powi(k as i32 + 1));
            let h = sol.mean_at(t).unwrap();
            prop_assert!(h >= last_h && h >= n as f64 / r0 * (1.0 - 1e-15));
            last_h = h;
        }
    }

    #[test]
    fn config_overrides_round_trip(nodes in 16usize..2000, safety in 0.01f64..1.0) {
        let c = ScenarioConfig::default()
            .with_overrides(&[("N".into(), nodes.to_string()), ("safety".into(), format!("{safety:e}"))])
            .unwrap();
        prop_assert_eq!(c.nodes, nodes);
        prop_assert_eq!(c.safety, safety);
        prop_assert_eq!(ScenarioConfig::from_json(&c.canonical_json()).unwrap(), c);
    }
}
