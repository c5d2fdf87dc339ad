use std::f64::consts::{FRAC_PI_2, PI};

use cml_stability::charroots::{char_fn, count_rhp_roots, rightmost_root, winding_number};
use cml_stability::cli::{cmd_sweep, Axis, SweepSpec};
use cml_stability::config::Config;
use cml_stability::dde_sim::{integrate, History, SampledHistory};
use cml_stability::hayes::{classify, hopf_boundary_r, omega0, t_func, t_inv, Status, DEFAULT_MARGINAL_BAND};
use cml_stability::lyapunov::{analytic_vdot, critical_delay, v_func};
use cml_stability::model::{
    b_sign_region, equilibria, linearization_slope, r_max, reduced_coeffs, EquilibriumTag, ParamName, Parameters,
    Region,
};
use proptest::prelude::*;

/// Parameters with `x2` present: `delta < beta0` and `r` a fraction of `r_max`.
fn with_x2() -> impl Strategy<Value = Parameters> {
    (0.1f64..10.0, 0.5f64..10.0, 0.01f64..0.95, 0.01f64..1.0, 0.001f64..0.999).prop_map(|(b, n, u, g, f)| {
        let base = Parameters::new(b, n, u * b, g, 1.0).unwrap();
        base.with_r(f * r_max(&base).unwrap()).unwrap()
    })
}

fn any_params() -> impl Strategy<Value = Parameters> {
    (0.1f64..10.0, 0.5f64..10.0, 0.01f64..10.0, 0.01f64..1.0, 0.01f64..10.0)
        .prop_map(|(b, n, d, g, r)| Parameters::new(b, n, d, g, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn production_balances_loss_at_x2(p in with_x2()) {
        let x2 = equilibria(&p).x2.unwrap();
        let want = p.delta / (p.k() - 1.0);
        prop_assert!((p.beta(x2) - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn closed_form_slope_matches_hill_function(p in with_x2()) {
        let c = reduced_coeffs(&p, EquilibriumTag::X2).unwrap();
        let direct = linearization_slope(&p, equilibria(&p).x2.unwrap());
        // relative to the cancelling terms n beta0 / A^2 and (n-1) beta0 / A
        let scale = p.beta0 * (p.n + (p.n - 1.0).abs() * c.a) / (c.a * c.a);
        prop_assert!((c.b - direct).abs() <= 1e-12 * scale, "{} vs {}", c.b, direct);
        prop_assert_eq!(c.p, p.delta + c.b);
        prop_assert_eq!(c.q, p.k() * c.b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn x2_exists_exactly_below_r_max(b in 0.1f64..10.0, n in 0.5f64..10.0, u in 0.01f64..0.95, g in 0.01f64..1.0) {
        let base = Parameters::new(b, n, u * b, g, 1.0).unwrap();
        let rm = r_max(&base).unwrap();
        for f in [0.5, 0.9, 0.999, 0.999_999, 1.000_001, 1.001, 1.1, 2.0] {
            let p = base.with_r(f * rm).unwrap();
            prop_assert_eq!(equilibria(&p).x2.is_some(), f < 1.0, "r = {} r_max", f);
        }
    }

    #[test]
    fn region_three_sign_of_b(p in with_x2(), fracs in prop::collection::vec(0.001f64..0.999, 8)) {
        let region = b_sign_region(&p);
        prop_assume!(region.region == Region::III);
        let (rn, rm) = (region.r_n.unwrap(), region.r_max.unwrap());
        for f in fracs {
            let r = f * rm;
            prop_assume!((r - rn).abs() > 1e-9 * rm);
            let b = reduced_coeffs(&p.with_r(r).unwrap(), EquilibriumTag::X2).unwrap().b;
            if r < rn {
                prop_assert!(b < 0.0, "B = {} at r = {} < r_n = {}", b, r, rn);
            } else {
                prop_assert!(b > 0.0, "B = {} at r = {} > r_n = {}", b, r, rn);
            }
        }
    }

    #[test]
    fn t_inverse_round_trip_moderate(v in -1e3f64..1.0) {
        let y = t_inv(v).unwrap();
        prop_assert!((0.0..PI).contains(&y));
        prop_assert!((t_func(y).unwrap() - v).abs() <= 1e-10 * (1.0 + v.abs()));
    }

    #[test]
    fn omega0_bracket(p in -5.0f64..5.0, r in 0.01f64..5.0) {
        prop_assume!(-p * r <= 1.0 && p != 0.0);
        let wr = omega0(p, r).unwrap() * r;
        if p < 0.0 {
            prop_assert!((0.0..FRAC_PI_2).contains(&wr));
        } else {
            prop_assert!(wr > FRAC_PI_2 && wr < PI);
        }
    }

    #[test]
    fn hopf_point_solves_both_relations(q in -5.0f64..-0.01, frac in -0.99f64..0.99) {
        let p = frac * q.abs();
        let h = hopf_boundary_r(p, q).unwrap();
        let w = h.omega_star;
        let cot = (w * h.r_star).cos() / (w * h.r_star).sin();
        prop_assert!((w * cot + p).abs() <= 1e-8 * (1.0 + p.abs()));
        prop_assert!((w * w + p * p - q * q).abs() <= 1e-10 * q * q);
        // the same delay from arccos(p/q) / omega0(p, r*)
        let w0 = omega0(p, h.r_star).unwrap();
        prop_assert!(((p / q).acos() / w0 - h.r_star).abs() <= 1e-8 * h.r_star);
    }

    #[test]
    fn classify_is_deterministic(p in -5.0f64..5.0, q in -5.0f64..5.0, r in 0.01f64..5.0) {
        prop_assert_eq!(classify(p, q, r, DEFAULT_MARGINAL_BAND).unwrap(), classify(p, q, r, DEFAULT_MARGINAL_BAND).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classify_agrees_with_root_count(p in -5.0f64..5.0, q in -5.0f64..5.0, r in 0.01f64..5.0) {
        let v = classify(p, q, r, DEFAULT_MARGINAL_BAND).unwrap();
        prop_assume!(v.margin.abs() > 10.0 * DEFAULT_MARGINAL_BAND);
        let count = count_rhp_roots(p, q, r).unwrap().count;
        prop_assert_eq!(count == 0, v.status == Status::Stable);
    }

    #[test]
    fn rightmost_root_symmetry_and_bound(p in -5.0f64..5.0, q in -5.0f64..5.0, r in 0.05f64..5.0) {
        let root = rightmost_root(p, q, r).unwrap().root;
        prop_assert!(char_fn(p, q, r, root.lambda().conj()).norm() <= 1e-10);
        if root.mu >= 0.0 {
            prop_assert!(root.lambda().norm() <= p.abs() + q.abs() + 1e-9);
        }
    }

    #[test]
    fn resolved_count_survives_finer_sampling(p in -5.0f64..5.0, q in -5.0f64..5.0, r in 0.05f64..5.0) {
        let Ok(c) = count_rhp_roots(p, q, r) else { return Ok(()) };
        let finer = winding_number(p, q, r, &c.contour, 2 * c.samples_per_edge);
        prop_assert_eq!(finer.round() as usize, c.count);
    }

    #[test]
    fn equilibria_are_fixed_points(p in with_x2()) {
        let x2 = equilibria(&p).x2.unwrap();
        for (which, level) in [(EquilibriumTag::X1, 0.0), (EquilibriumTag::X2, x2)] {
            // rounding grows like exp(-p t) near an unstable point; stop where that is at most e
            let rate = reduced_coeffs(&p, which).unwrap().p.abs();
            let horizon = (1.0 / rate).min(p.r);
            let t = integrate(&p, &History::Constant(level), p.r, p.r / 20.0).unwrap();
            let drift = (0..t.len())
                .take_while(|&i| i == 1 || t.time(i) <= horizon)
                .map(|i| (t.values[i] - level).abs())
                .fold(0.0, f64::max);
            prop_assert!(drift <= 1e-10 * level.max(1.0) * (1.0 + horizon), "drift {}", drift);
        }
    }

    #[test]
    fn lyapunov_value_nonnegative(p in any_params(), values in prop::collection::vec(0.0f64..2.0, 2..10)) {
        let h = History::Sampled(SampledHistory::uniform(p.r, values.clone()).unwrap());
        let v = v_func(&p, &h).unwrap().v;
        prop_assert!(v >= 0.0);
        if values.iter().all(|&x| x == 0.0) {
            prop_assert_eq!(v, 0.0);
        } else {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn vdot_nonpositive_on_critical_set(
        b in 0.1f64..10.0, n in 0.5f64..8.0, u in 0.01f64..0.95, g in 0.01f64..1.0,
        states in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 50),
    ) {
        let mut p = Parameters::new(b, n, u * b, g, 1.0).unwrap();
        p.r = critical_delay(&p).unwrap();
        for (x0, xr) in states {
            prop_assert!(analytic_vdot(&p, x0, xr) <= 1e-12 * b);
        }
    }
}

#[test]
fn sweep_output_is_deterministic() {
    let config = Config {
        params: Parameters::new(1.77, 3.0, 0.05, 0.2, 1.0).unwrap(),
        marginal_band: DEFAULT_MARGINAL_BAND,
    };
    let spec = SweepSpec {
        first: Axis {
            name: ParamName::R,
            from: 0.1,
            to: 3.3,
            steps: 40,
        },
        second: None,
        verify: true,
    };
    let first = cmd_sweep(&config, &spec).unwrap();
    for _ in 0..3 {
        assert_eq!(cmd_sweep(&config, &spec).unwrap(), first);
    }
}

#[test]
fn sweep_uses_seventeen_significant_digits() {
    let config = Config {
        params: Parameters::new(3.0, 2.0, 1.0, 0.2, 1.0).unwrap(),
        marginal_band: DEFAULT_MARGINAL_BAND,
    };
    let spec = SweepSpec {
        first: Axis {
            name: ParamName::R,
            from: 0.5,
            to: 0.5,
            steps: 1,
        },
        second: None,
        verify: false,
    };
    let text = cmd_sweep(&config, &spec).unwrap();
    let row = text.lines().nth(1).unwrap();
    let x2: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    let want = equilibria(&config.params.with_r(0.5).unwrap()).x2.unwrap();
    assert_eq!(x2, want);
}
