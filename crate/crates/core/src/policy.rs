//! Equilibrium feedback maps `(F1, F2, F3)` built from a solved pair of
//! curves `a(t)` and `b(t)`, plus the value function and the legacy.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Stock holding, consumption rate and insurance premium at one `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyTriple {
    pub stock_amount: f64,
    pub consumption: f64,
    /// Negative when the agent sells insurance.
    pub insurance_premium: f64,
}

/// `a^(1/(gamma-1))`; for `gamma = 0` this is the reciprocal `1/a`.
pub(crate) fn consumption_rate_of(a: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0 / a
    } else {
        a.powf(1.0 / (gamma - 1.0))
    }
}

/// Multiplier `(a/m(0))^(1/(gamma-1))` of `x + b` giving the equilibrium legacy.
pub(crate) fn legacy_rate(spec: &ModelSpec, a: f64) -> f64 {
    consumption_rate_of(a / spec.m0(), spec.gamma())
}

/// The closed-form maps with `a = a(t)`, `b = b(t)` already looked up.
pub(crate) fn triple_from(spec: &ModelSpec, a: f64, b: f64, t: f64, x: f64) -> PolicyTriple {
    let y = x + b;
    let psi = legacy_rate(spec, a);
    PolicyTriple {
        stock_amount: spec.market().merton_fraction(spec.gamma()) * y,
        consumption: consumption_rate_of(a, spec.gamma()) * y,
        insurance_premium: spec.inverse_payout(t) * ((psi - spec.eta(t)) * x + psi * b),
    }
}

fn lookup(a_curve: &Curve, b_curve: &Curve, t: f64, x: f64) -> Result<(f64, f64)> {
    let a = a_curve.eval(t)?;
    let b = b_curve.eval(t)?;
    if !(a > 0.0) {
        return Err(Error::domain(format!("a({t}) = {a} is not positive")));
    }
    if !(x + b > 0.0) {
        return Err(Error::domain(format!(
            "wealth below human-capital floor: x + b(t) = {} <= 0 at t = {t}",
            x + b
        )));
    }
    Ok((a, b))
}

/// Equilibrium policy at time `t` and wealth `x`.
pub fn policy_at(a_curve: &Curve, b_curve: &Curve, spec: &ModelSpec, t: f64, x: f64) -> Result<PolicyTriple> {
    let (a, b) = lookup(a_curve, b_curve, t, x)?;
    Ok(triple_from(spec, a, b, t, x))
}

/// Consumption per unit of `x + b(t)`.
pub fn consumption_rate(a_curve: &Curve, gamma: f64, t: f64) -> Result<f64> {
    let a = a_curve.eval(t)?;
    if !(a > 0.0) {
        return Err(Error::domain(format!("a({t}) = {a} is not positive")));
    }
    Ok(consumption_rate_of(a, gamma))
}

/// Coefficients of the premium `F3 = cx * x + cb * b(t)`.
pub fn insurance_coefficients(spec: &ModelSpec, a: f64, t: f64) -> (f64, f64) {
    let psi = legacy_rate(spec, a);
    let inv_l = spec.inverse_payout(t);
    (inv_l * (psi - spec.eta(t)), inv_l * psi)
}

/// Legacy `Z = eta(t) x + l(t) premium`; without an insurance market only
/// the bequeathed wealth remains.
pub fn legacy(spec: &ModelSpec, t: f64, x: f64, premium: f64) -> f64 {
    let inv_l = spec.inverse_payout(t);
    if inv_l == 0.0 {
        spec.eta(t) * x
    } else {
        spec.eta(t) * x + premium / inv_l
    }
}

/// `v(t,x) = a(t) U(x + b(t))` with `U(y) = y^gamma / gamma`.
///
/// For `gamma = 0` this returns `a(t) log(x + b(t))` without the additive
/// term `d(t)` of the logarithmic ansatz, so only its `x`-dependence is
/// meaningful there.
pub fn value_function(a_curve: &Curve, b_curve: &Curve, gamma: f64, t: f64, x: f64) -> Result<f64> {
    let (a, b) = lookup(a_curve, b_curve, t, x)?;
    Ok(if gamma == 0.0 {
        a * (x + b).ln()
    } else {
        a * (x + b).powf(gamma) / gamma
    })
}

/// Whether [`value_function`] gives the full value (`false` for log utility).
pub fn value_is_complete(gamma: f64) -> bool {
    gamma != 0.0
}

/// Time of an interior maximum of sampled `(t, rate)` pairs, if the maximum
/// beats both endpoint rates by more than `1e-9`.
pub fn find_satiation(samples: &[(f64, f64)]) -> Result<Option<f64>> {
    if samples.len() < 3 {
        return Err(Error::domain(format!("need >= 3 samples, got {}", samples.len())));
    }
    if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::domain("sample times must be strictly increasing"));
    }
    let (idx, &(t_max, r_max)) = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty");
    let first = samples[0].1;
    let last = samples[samples.len() - 1].1;
    let interior = idx != 0 && idx != samples.len() - 1;
    Ok((interior && r_max > first + 1e-9 && r_max > last + 1e-9).then_some(t_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ie_solver::solve_a;
    use crate::model::*;
    use approx::assert_relative_eq;

    fn flat(v: f64) -> Curve {
        Curve::constant(0.0, 1.0, v).unwrap()
    }

    #[test]
    fn merton_fraction_and_homogeneity() {
        let spec = fixtures::insured_exponential();
        let (a, b) = (flat(2.5), flat(0.3));
        let p = policy_at(&a, &b, &spec, 0.5, 1.7).unwrap();
        assert_relative_eq!(p.stock_amount / 2.0, 0.875, max_relative = 1e-12);
        let q = policy_at(&a, &b, &spec, 0.5, 2.0 * 2.0 - 0.3).unwrap();
        assert_relative_eq!(q.stock_amount, 2.0 * p.stock_amount, max_relative = 1e-12);
        assert_relative_eq!(q.consumption, 2.0 * p.consumption, max_relative = 1e-12);
        assert_relative_eq!(p.consumption, 2.5f64.powf(-0.5) * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn log_branch() {
        let spec = fixtures::insured_exponential().with_gamma(0.0).unwrap();
        let p = policy_at(&flat(2.0), &flat(0.0), &spec, 0.0, 3.0).unwrap();
        assert_relative_eq!(p.stock_amount, 0.07 / 0.04 * 3.0, max_relative = 1e-14);
        assert_relative_eq!(p.consumption, 1.5, max_relative = 1e-14);
        assert_eq!(consumption_rate(&flat(2.0), 0.0, 0.3).unwrap(), 0.5);
        assert!(!value_is_complete(0.0));
        assert_relative_eq!(value_function(&flat(2.0), &flat(0.0), 0.0, 0.0, 3.0).unwrap(), 2.0 * 3f64.ln());
    }

    #[test]
    fn consumption_rate_examples() {
        for g in [-3.0, -1.0, 0.0, 0.5] {
            assert_eq!(consumption_rate(&flat(1.0), g, 0.2).unwrap(), 1.0);
        }
        assert_eq!(consumption_rate(&flat(4.0), -1.0, 0.2).unwrap(), 0.5);
        assert!(consumption_rate(&flat(0.0), -1.0, 0.2).is_err());
    }

    #[test]
    fn premium_with_unit_ratio() {
        // a = m(0) gives psi = 1: F3 = b/l with eta = 1
        let spec = fixtures::insured_exponential();
        let p = policy_at(&flat(1.0), &flat(0.4), &spec, 0.1, 2.0).unwrap();
        assert_relative_eq!(p.insurance_premium, 0.4 / 50.0, max_relative = 1e-14);
        let (cx, cb) = insurance_coefficients(&spec, 1.0, 0.1);
        assert_eq!(cx, 0.0);
        assert_relative_eq!(cb, 0.02, max_relative = 1e-14);
    }

    #[test]
    fn legacy_values() {
        let spec = fixtures::insured_exponential();
        assert_eq!(legacy(&spec, 0.3, 1.25, 0.0), 1.25);
        assert_eq!(legacy(&spec, 0.3, 0.0, 1.0), 50.0);
        let (a, b) = (flat(3.0), flat(0.2));
        let (x, t) = (1.1, 0.6);
        let p = policy_at(&a, &b, &spec, t, x).unwrap();
        let z = legacy(&spec, t, x, p.insurance_premium);
        assert_relative_eq!(z, 3f64.powf(-0.5) * (x + 0.2), max_relative = 1e-13);
        assert!(z > 0.0);
        let uninsured = fixtures::uninsured_exponential(0.1);
        assert_eq!(legacy(&uninsured, 0.0, 2.0, 5.0), 2.0);
        let q = policy_at(&a, &b, &uninsured, t, x).unwrap();
        assert_eq!(q.insurance_premium, 0.0);
    }

    #[test]
    fn wealth_floor_is_enforced() {
        let spec = fixtures::insured_exponential();
        let err = policy_at(&flat(1.0), &flat(0.5), &spec, 0.0, -0.5).unwrap_err();
        assert!(err.to_string().contains("human-capital floor"));
        assert!(value_function(&flat(1.0), &flat(0.5), -1.0, 0.0, -0.6).is_err());
    }

    #[test]
    fn value_function_examples() {
        assert_relative_eq!(value_function(&flat(2.0), &flat(0.0), -1.0, 0.0, 4.0).unwrap(), -0.5);
        let spec = fixtures::insured_exponential();
        let grid = solve_a(&spec, 100).unwrap();
        let a = grid.a_curve();
        let b = Curve::constant(0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(value_function(&a, &b, -1.0, 1.0, 2.0).unwrap(), -0.5);
        let h = 1e-3;
        for x in [0.5, 1.0, 3.0] {
            let v = |x| value_function(&a, &b, -1.0, 0.4, x).unwrap();
            assert!(v(x + h) - 2.0 * v(x) + v(x - h) < 0.0);
        }
    }

    #[test]
    fn satiation_detection() {
        assert_eq!(find_satiation(&[(0.0, 1.0), (1.0, 2.0), (2.0, 1.0)]).unwrap(), Some(1.0));
        assert_eq!(find_satiation(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]).unwrap(), None);
        assert_eq!(find_satiation(&[(0.0, 1.0), (1.0, 1.0 + 1e-12), (2.0, 1.0)]).unwrap(), None);
        assert!(find_satiation(&[(0.0, 1.0), (2.0, 2.0), (1.0, 1.0)]).is_err());
        assert!(find_satiation(&[(0.0, 1.0), (1.0, 2.0)]).is_err());
    }

    fn rate_samples(spec: &ModelSpec) -> Vec<(f64, f64)> {
        let grid = solve_a(spec, 400).unwrap();
        let a = grid.a_curve();
        a.times()
            .iter()
            .map(|&t| (t, consumption_rate(&a, spec.gamma(), t).unwrap()))
            .collect()
    }

    #[test]
    fn hyperbolic_hump_and_exponential_control() {
        let t = find_satiation(&rate_samples(&fixtures::hump(5.0, 10.0))).unwrap();
        assert!(matches!(t, Some(t) if t > 0.0 && t < 4.0));
        for n in [1.0, 10.0, 30.0] {
            assert_eq!(find_satiation(&rate_samples(&fixtures::hump_exponential_control(n))).unwrap(), None);
        }
        let rates: Vec<f64> = rate_samples(&fixtures::insured_exponential()).iter().map(|p| p.1).collect();
        let up = rates.windows(2).all(|w| w[1] >= w[0]);
        let down = rates.windows(2).all(|w| w[1] <= w[0]);
        assert!(up || down);
    }

    #[test]
    fn unavailable_insurance_has_unit_weight() {
        let spec = fixtures::hump(5.0, 1.0);
        assert_eq!(spec.weight_m(1.0), 1.0);
        assert!(matches!(spec.insurance().payout, PayoutRatio::Unavailable));
    }
}
