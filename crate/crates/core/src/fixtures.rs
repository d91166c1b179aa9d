//! Reference problem instances used by the test suites and the examples in
//! the README.

use crate::model::{
    DiscountKernel, InsuranceIncomeSpec, MarketParams, ModelSpec, MortalityModel, ParetoWeight, PayoutRatio,
    PreferenceParams, TimeFunction,
};

fn market() -> MarketParams {
    MarketParams::with_excess_return(0.05, 0.07, 0.2).expect("valid market")
}

/// Exponential discounting with insurance: T = 1, rho = 0.1, lambda = 0.02,
/// l = 50, eta = 1, m = 1, i = 0, n = 1, gamma = -1.
pub fn insured_exponential() -> ModelSpec {
    let h = DiscountKernel::Exponential { rho: 0.1 };
    ModelSpec::new(
        1.0,
        market(),
        MortalityModel::Constant { lambda0: 0.02 },
        h,
        PreferenceParams::new(-1.0, 1.0, ParetoWeight::Constant(1.0), h),
        InsuranceIncomeSpec::new(PayoutRatio::Constant(50.0), TimeFunction::Constant(1.0), TimeFunction::Constant(0.0)),
    )
    .expect("valid fixture")
}

/// Market and horizon of [`insured_exponential`] without mortality or insurance.
pub fn uninsured_exponential(rho: f64) -> ModelSpec {
    let h = DiscountKernel::Exponential { rho };
    ModelSpec::new(
        1.0,
        market(),
        MortalityModel::none(),
        h,
        PreferenceParams::new(-1.0, 1.0, ParetoWeight::Constant(1.0), h),
        InsuranceIncomeSpec::uninsured(),
    )
    .expect("valid fixture")
}

/// Time-varying Pareto weight experiment: T = 4, rho = 0.8,
/// lambda(t) = 1/200 + 9t/8000, l = 1/lambda, eta = 1,
/// m(t) = log((T + 1e-15 - t) / 1e-15), n = 1, gamma = -1.
pub fn tapered_weight() -> ModelSpec {
    let h = DiscountKernel::Exponential { rho: 0.8 };
    ModelSpec::new(
        4.0,
        market(),
        MortalityModel::Affine {
            lambda0: 1.0 / 200.0,
            lambda1: 9.0 / 8000.0,
        },
        h,
        PreferenceParams::new(-1.0, 1.0, ParetoWeight::LogTaper { eps: 1e-15 }, h),
        InsuranceIncomeSpec::new(PayoutRatio::InverseHazard, TimeFunction::Constant(1.0), TimeFunction::Constant(0.0)),
    )
    .expect("valid fixture")
}

fn hump_with(h: DiscountKernel, n: f64) -> ModelSpec {
    ModelSpec::new(
        4.0,
        MarketParams::new(0.05, 0.12, 0.2).expect("valid market"),
        MortalityModel::none(),
        h,
        PreferenceParams::new(-1.0, n, ParetoWeight::Constant(1.0), h),
        InsuranceIncomeSpec::uninsured(),
    )
    .expect("valid fixture")
}

/// Merton problem with hyperbolic discounting: T = 4, alpha = 0.12,
/// sigma = 0.2, r = 0.05, gamma = -1, h(1) = 0.3, no income, insurance or
/// mortality.
pub fn hump(k1: f64, n: f64) -> ModelSpec {
    hump_with(DiscountKernel::hyperbolic_with_target(k1, 0.3).expect("valid kernel"), n)
}

/// Exponential control for [`hump`] with the same one-year discount h(1) = 0.3.
pub fn hump_exponential_control(n: f64) -> ModelSpec {
    hump_with(DiscountKernel::Exponential { rho: (1.0f64 / 0.3).ln() }, n)
}

/// Replaces gamma and the Pareto weight of an instance.
pub fn with_prefs(spec: ModelSpec, gamma: f64, pareto: ParetoWeight) -> ModelSpec {
    let mut prefs = *spec.prefs();
    prefs.gamma = gamma;
    prefs.pareto = pareto;
    ModelSpec::new(
        spec.horizon(),
        *spec.market(),
        *spec.mortality(),
        *spec.discount(),
        prefs,
        *spec.insurance(),
    )
    .expect("valid fixture")
}
