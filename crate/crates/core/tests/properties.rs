use proptest::prelude::*;

use tcpolicy_core::closed_form::{self, StationaryParams};
use tcpolicy_core::policy::{legacy, policy_at, value_function};
use tcpolicy_core::{fixtures, Curve, MarketParams, MortalityModel};

fn flat(v: f64) -> Curve {
    Curve::constant(0.0, 1.0, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stock_share_of_shifted_wealth_is_constant(t in 0.0..1.0f64, x in -0.4..50.0f64, a in 0.05..20.0f64, b in 0.5..2.0f64) {
        let spec = fixtures::insured_exponential();
        let p = policy_at(&flat(a), &flat(b), &spec, t, x).unwrap();
        prop_assert!((p.stock_amount / (x + b) - 0.875).abs() < 1e-12);
        prop_assert!(p.consumption > 0.0);
    }

    #[test]
    fn policies_scale_with_shifted_wealth(t in 0.0..1.0f64, y in 0.01..10.0f64, a in 0.05..20.0f64, b in 0.0..2.0f64) {
        let spec = fixtures::insured_exponential();
        let (ac, bc) = (flat(a), flat(b));
        let p = policy_at(&ac, &bc, &spec, t, y - b).unwrap();
        let q = policy_at(&ac, &bc, &spec, t, 2.0 * y - b).unwrap();
        prop_assert!((q.stock_amount - 2.0 * p.stock_amount).abs() <= 1e-12 * q.stock_amount.abs());
        prop_assert!((q.consumption - 2.0 * p.consumption).abs() <= 1e-12 * q.consumption);
        // the equilibrium legacy is proportional to x + b
        let z1 = legacy(&spec, t, y - b, p.insurance_premium);
        let z2 = legacy(&spec, t, 2.0 * y - b, q.insurance_premium);
        prop_assert!(z1 > 0.0);
        prop_assert!((z2 - 2.0 * z1).abs() <= 1e-9 * z2);
    }

    #[test]
    fn value_is_concave_in_wealth(g in -5.0..0.9f64, a in 0.1..10.0f64, x in 0.5..5.0f64) {
        prop_assume!(g.abs() > 1e-3);
        let v = |x: f64| value_function(&flat(a), &flat(0.0), g, 0.5, x).unwrap();
        let h = 1e-2;
        prop_assert!(v(x + h) - 2.0 * v(x) + v(x - h) < 0.0);
    }

    #[test]
    fn survival_composes(l0 in 0.0..0.5f64, l1 in 0.0..0.1f64, t in 0.0..2.0f64, d1 in 0.0..2.0f64, d2 in 0.0..2.0f64) {
        let m = MortalityModel::Affine { lambda0: l0, lambda1: l1 };
        let (s, u) = (t + d1, t + d1 + d2);
        let lhs = m.survival(t, u).unwrap();
        let rhs = m.survival(t, s).unwrap() * m.survival(s, u).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13);
    }

    #[test]
    fn death_time_inverts_cumulative_hazard(l0 in 1e-3..0.5f64, l1 in 0.0..0.1f64, t in 0.0..1.0f64, e in 1e-6..3.0f64) {
        let m = MortalityModel::Affine { lambda0: l0, lambda1: l1 };
        if let Some(tau) = m.death_time(t, e, 1e6) {
            prop_assert!(tau >= t);
            prop_assert!((m.cumulative(t, tau) - e).abs() <= 1e-9 * e.max(1.0));
        }
    }

    #[test]
    fn curve_interpolation_stays_in_hull(v0 in -5.0..5.0f64, v1 in -5.0..5.0f64, w in 0.0..1.0f64) {
        let c = Curve::new(vec![0.0, 2.0], vec![v0, v1]).unwrap();
        let v = c.eval(2.0 * w).unwrap();
        prop_assert!(v >= v0.min(v1) - 1e-12 && v <= v0.max(v1) + 1e-12);
    }

    #[test]
    fn stationary_root_satisfies_its_equation(
        lambda in 0.005..0.1f64,
        r1 in 0.05..0.4f64,
        r2 in 0.05..0.4f64,
        m in 0.5..3.0f64,
        l in 5.0..100.0f64,
        gamma in -4.0..-0.2f64,
    ) {
        let p = StationaryParams {
            lambda, r1, r2, m, l, eta: 1.0, i: 0.5, gamma,
            market: MarketParams::with_excess_return(0.03, 0.06, 0.25).unwrap(),
        };
        let s = closed_form::solve_stationary(&p).unwrap();
        prop_assert!(s.tc_holds());
        prop_assert!((s.x - s.a.powf(1.0 / (gamma - 1.0))).abs() <= 1e-12 * s.x);
        let r = closed_form::stationary_residual(&p, s.a).unwrap();
        prop_assert!(r.abs() <= 1e-10 * s.a.max(1.0), "residual {}", r);
        if m == 1.0 {
            let x = closed_form::stationary_root_by_bisection(&p).unwrap();
            prop_assert!((x - s.x).abs() < 1e-10);
        }
    }
}
