//! Problem primitives: market, mortality, discounting, insurance and
//! preferences, together with the kernels `Q(s,t)`, `q(s,t)` and the
//! constants `K` and `M(z)` derived from them.
//!
//! Time arguments of discount functions are *lags* (`s - t`); time arguments
//! of hazard, payout, bequest fraction and income are calendar times.

use crate::error::{Error, Result};

fn check_time(t: f64, what: &str) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!("{what} must be a finite time >= 0, got {t}")));
    }
    Ok(())
}

fn check_finite(value: f64, invariant: &'static str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(invariant, format!("non-finite value {value}")));
    }
    Ok(())
}

/// Riskless rate, stock drift and volatility of the one-stock market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    r: f64,
    alpha: f64,
    sigma: f64,
    mu: f64,
}

impl MarketParams {
    pub fn new(r: f64, alpha: f64, sigma: f64) -> Result<Self> {
        for v in [r, alpha, sigma] {
            check_finite(v, "market parameters are finite")?;
        }
        if sigma <= 0.0 {
            return Err(Error::invalid("sigma > 0", format!("sigma = {sigma}")));
        }
        let mu = alpha - r;
        if mu <= 0.0 {
            return Err(Error::invalid(
                "excess return mu = alpha - r > 0",
                format!("alpha = {alpha}, r = {r}"),
            ));
        }
        Ok(Self { r, alpha, sigma, mu })
    }

    /// Builds the market from the excess return instead of the drift.
    pub fn with_excess_return(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        let mut market = Self::new(r, r + mu, sigma)?;
        // keep mu bit-exact rather than (r + mu) - r
        market.mu = mu;
        Ok(market)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Merton fraction `mu / (sigma^2 (1 - gamma))` of `x + b(t)` held in the stock.
    pub fn merton_fraction(&self, gamma: f64) -> f64 {
        self.mu / (self.sigma * self.sigma * (1.0 - gamma))
    }
}

/// `K = gamma (r + mu^2 / (2 (1 - gamma) sigma^2))`.
pub fn constant_k(market: &MarketParams, gamma: f64) -> Result<f64> {
    if !(gamma < 1.0) {
        return Err(Error::domain(format!("gamma must be < 1, got {gamma}")));
    }
    let s2 = market.sigma * market.sigma;
    Ok(gamma * (market.r + market.mu * market.mu / (2.0 * (1.0 - gamma) * s2)))
}

/// A discount function `h` with `h(0) = 1`, positive and non-increasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscountKernel {
    /// `exp(-rho t)`
    Exponential { rho: f64 },
    /// `(1 + k1 t)^(-k2 / k1)`
    Hyperbolic { k1: f64, k2: f64 },
    /// `w exp(-r1 t) + (1 - w) exp(-r2 t)`
    SumOfExponentials { weight: f64, r1: f64, r2: f64 },
    /// `(1 + a t) exp(-r t)`
    AffineExponential { coef: f64, rate: f64 },
}

impl DiscountKernel {
    /// Hyperbolic kernel whose `k2` is chosen so that `h(1) = h1`.
    pub fn hyperbolic_with_target(k1: f64, h1: f64) -> Result<Self> {
        if !(k1 > 0.0) || !k1.is_finite() {
            return Err(Error::invalid("hyperbolic k1 > 0", format!("k1 = {k1}")));
        }
        if !(h1 > 0.0 && h1 < 1.0) {
            return Err(Error::invalid("target h(1) in (0, 1)", format!("h1 = {h1}")));
        }
        let k2 = k1 * (1.0 / h1).ln() / k1.ln_1p();
        Ok(DiscountKernel::Hyperbolic { k1, k2 })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DiscountKernel::Exponential { rho } => {
                check_finite(rho, "discount parameters are finite")?;
                if rho < 0.0 {
                    return Err(Error::invalid("exponential rho >= 0", format!("rho = {rho}")));
                }
            }
            DiscountKernel::Hyperbolic { k1, k2 } => {
                check_finite(k1, "discount parameters are finite")?;
                check_finite(k2, "discount parameters are finite")?;
                if !(k1 > 0.0 && k2 > 0.0) {
                    return Err(Error::invalid(
                        "hyperbolic k1 > 0 and k2 > 0",
                        format!("k1 = {k1}, k2 = {k2}"),
                    ));
                }
            }
            DiscountKernel::SumOfExponentials { weight, r1, r2 } => {
                for v in [weight, r1, r2] {
                    check_finite(v, "discount parameters are finite")?;
                }
                if !(0.0..=1.0).contains(&weight) {
                    return Err(Error::invalid("mixture weight in [0, 1]", format!("weight = {weight}")));
                }
                if r1 < 0.0 || r2 < 0.0 {
                    return Err(Error::invalid("mixture rates >= 0", format!("r1 = {r1}, r2 = {r2}")));
                }
            }
            DiscountKernel::AffineExponential { coef, rate } => {
                check_finite(coef, "discount parameters are finite")?;
                check_finite(rate, "discount parameters are finite")?;
                if coef < 0.0 || coef > rate {
                    return Err(Error::invalid(
                        "affine-exponential 0 <= a <= r (h non-increasing)",
                        format!("a = {coef}, r = {rate}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `h(t)` for a lag `t >= 0`.
    pub fn value(&self, t: f64) -> Result<f64> {
        check_time(t, "discount lag")?;
        Ok(self.at(t))
    }

    /// `h'(t) / h(t)` for a lag `t >= 0`.
    pub fn log_derivative(&self, t: f64) -> Result<f64> {
        check_time(t, "discount lag")?;
        Ok(self.log_derivative_at(t))
    }

    pub(crate) fn at(&self, t: f64) -> f64 {
        match *self {
            DiscountKernel::Exponential { rho } => (-rho * t).exp(),
            DiscountKernel::Hyperbolic { k1, k2 } => (-(k2 / k1) * (k1 * t).ln_1p()).exp(),
            DiscountKernel::SumOfExponentials { weight, r1, r2 } => {
                weight * (-r1 * t).exp() + (1.0 - weight) * (-r2 * t).exp()
            }
            DiscountKernel::AffineExponential { coef, rate } => (1.0 + coef * t) * (-rate * t).exp(),
        }
    }

    pub(crate) fn log_derivative_at(&self, t: f64) -> f64 {
        match *self {
            DiscountKernel::Exponential { rho } => -rho,
            DiscountKernel::Hyperbolic { k1, k2 } => -k2 / (1.0 + k1 * t),
            DiscountKernel::SumOfExponentials { weight, r1, r2 } => {
                let e1 = weight * (-r1 * t).exp();
                let e2 = (1.0 - weight) * (-r2 * t).exp();
                -(r1 * e1 + r2 * e2) / (e1 + e2)
            }
            DiscountKernel::AffineExponential { coef, rate } => coef / (1.0 + coef * t) - rate,
        }
    }

    pub fn is_exponential(&self) -> Option<f64> {
        match *self {
            DiscountKernel::Exponential { rho } => Some(rho),
            _ => None,
        }
    }
}

/// Hazard rate `lambda(t) = lambda0 + lambda1 t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MortalityModel {
    Constant { lambda0: f64 },
    Affine { lambda0: f64, lambda1: f64 },
}

impl MortalityModel {
    pub fn none() -> Self {
        MortalityModel::Constant { lambda0: 0.0 }
    }

    fn coefficients(&self) -> (f64, f64) {
        match *self {
            MortalityModel::Constant { lambda0 } => (lambda0, 0.0),
            MortalityModel::Affine { lambda0, lambda1 } => (lambda0, lambda1),
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let (l0, l1) = self.coefficients();
        check_finite(l0, "hazard coefficients are finite")?;
        check_finite(l1, "hazard coefficients are finite")?;
        if l0 < 0.0 || l0 + l1 * horizon < 0.0 {
            return Err(Error::invalid(
                "hazard lambda(t) >= 0 on [0, T]",
                format!("lambda(0) = {l0}, lambda(T) = {}", l0 + l1 * horizon),
            ));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients() == (0.0, 0.0)
    }

    pub fn hazard(&self, t: f64) -> f64 {
        let (l0, l1) = self.coefficients();
        l0 + l1 * t
    }

    /// `int_t^s lambda(u) du`.
    pub fn cumulative(&self, t: f64, s: f64) -> f64 {
        let (l0, l1) = self.coefficients();
        let d = s - t;
        l0 * d + 0.5 * l1 * d * (s + t)
    }

    /// Conditional survival `P(tau > s | tau > t) = exp(-int_t^s lambda)`.
    pub fn survival(&self, t: f64, s: f64) -> Result<f64> {
        check_time(t, "survival start")?;
        if !s.is_finite() || s < t {
            return Err(Error::domain(format!("survival requires t <= s, got t = {t}, s = {s}")));
        }
        Ok(self.survival_at(t, s))
    }

    pub(crate) fn survival_at(&self, t: f64, s: f64) -> f64 {
        (-self.cumulative(t, s)).exp()
    }

    /// Death time given survival to `t`, by inverse CDF: the `s >= t` with
    /// `int_t^s lambda = exposure` (an Exp(1) draw). Returns `None` when
    /// death happens after `horizon`.
    pub fn death_time(&self, t: f64, exposure: f64, horizon: f64) -> Option<f64> {
        if self.cumulative(t, horizon) <= exposure {
            return None;
        }
        let (l0, l1) = self.coefficients();
        if l1 == 0.0 {
            return Some(t + exposure / l0);
        }
        // l1/2 s^2 + l0 s - c = 0 with c = Lambda(0, t) + exposure, stable root
        let c = l0 * t + 0.5 * l1 * t * t + exposure;
        let disc = l0 * l0 + 2.0 * l1 * c;
        let s = 2.0 * c / (l0 + disc.max(0.0).sqrt());
        Some(s.clamp(t, horizon))
    }
}

/// A deterministic function of calendar time used for the bequest fraction
/// `eta(t)` and the income rate `i(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeFunction {
    Constant(f64),
    Affine { c0: f64, c1: f64 },
}

impl TimeFunction {
    pub fn coefficients(&self) -> (f64, f64) {
        match *self {
            TimeFunction::Constant(c) => (c, 0.0),
            TimeFunction::Affine { c0, c1 } => (c0, c1),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let (c0, c1) = self.coefficients();
        c0 + c1 * t
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients() == (0.0, 0.0)
    }

    fn min_on(&self, horizon: f64) -> f64 {
        self.value(0.0).min(self.value(horizon))
    }
}

/// Payout per unit premium `l(t)` paid by the insurer on death.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoutRatio {
    Constant(f64),
    /// `l(t) = 1 / lambda(t)` (actuarially fair pricing)
    InverseHazard,
    /// No insurance market: `1/l = 0` and the premium is identically zero.
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsuranceIncomeSpec {
    pub payout: PayoutRatio,
    pub eta: TimeFunction,
    pub income: TimeFunction,
}

impl InsuranceIncomeSpec {
    pub fn new(payout: PayoutRatio, eta: TimeFunction, income: TimeFunction) -> Self {
        Self { payout, eta, income }
    }

    /// No insurance, full wealth bequest, no income.
    pub fn uninsured() -> Self {
        Self::new(PayoutRatio::Unavailable, TimeFunction::Constant(1.0), TimeFunction::Constant(0.0))
    }
}

/// Pareto weight `m(lag)` on the heirs' utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParetoWeight {
    Constant(f64),
    /// `m(t) = log((T + eps - t) / eps)`
    LogTaper { eps: f64 },
}

impl ParetoWeight {
    pub fn value(&self, lag: f64, horizon: f64) -> f64 {
        match *self {
            ParetoWeight::Constant(m) => m,
            ParetoWeight::LogTaper { eps } => ((horizon - lag) / eps).ln_1p(),
        }
    }

    pub fn derivative(&self, lag: f64, horizon: f64) -> f64 {
        match *self {
            ParetoWeight::Constant(_) => 0.0,
            ParetoWeight::LogTaper { eps } => -1.0 / (horizon - lag + eps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceParams {
    /// CRRA exponent; `0` selects logarithmic utility.
    pub gamma: f64,
    /// Weight `n` of terminal wealth.
    pub terminal_weight: f64,
    pub pareto: ParetoWeight,
    /// Discount `h_hat` applied to the bequest.
    pub bequest_discount: DiscountKernel,
}

impl PreferenceParams {
    pub fn new(gamma: f64, terminal_weight: f64, pareto: ParetoWeight, bequest_discount: DiscountKernel) -> Self {
        Self {
            gamma,
            terminal_weight,
            pareto,
            bequest_discount,
        }
    }
}

/// `M(z) = 1 + 1 / (m^(1/(gamma-1)) l(z))` given `1/l(z)` and `m = m(0)`.
pub fn weight_m(gamma: f64, m0: f64, inverse_payout: f64) -> f64 {
    1.0 + inverse_payout / m0.powf(1.0 / (gamma - 1.0))
}

/// Outcome of the check `min_t (1 - gamma M(t) + lambda(t)) >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionCheck {
    pub holds: bool,
    pub min_value: f64,
    pub at: f64,
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    horizon: f64,
    market: MarketParams,
    mortality: MortalityModel,
    discount: DiscountKernel,
    prefs: PreferenceParams,
    insurance: InsuranceIncomeSpec,
    assumption: AssumptionCheck,
}

const ASSUMPTION_GRID: usize = 10_001;

impl ModelSpec {
    pub fn new(
        horizon: f64,
        market: MarketParams,
        mortality: MortalityModel,
        discount: DiscountKernel,
        prefs: PreferenceParams,
        insurance: InsuranceIncomeSpec,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("horizon T > 0", format!("T = {horizon}")));
        }
        // re-validate in case the market was built by hand
        MarketParams::new(market.r, market.alpha, market.sigma)?;
        mortality.validate(horizon)?;
        discount.validate()?;
        prefs.bequest_discount.validate()?;
        let gamma = prefs.gamma;
        if !(gamma < 1.0) || !gamma.is_finite() {
            return Err(Error::invalid("gamma < 1", format!("gamma = {gamma}")));
        }
        if !(prefs.terminal_weight > 0.0) || !prefs.terminal_weight.is_finite() {
            return Err(Error::invalid("terminal weight n > 0", format!("n = {}", prefs.terminal_weight)));
        }
        match prefs.pareto {
            ParetoWeight::Constant(m) => {
                if !(m > 0.0) || !m.is_finite() {
                    return Err(Error::invalid("Pareto weight m(t) > 0", format!("m = {m}")));
                }
            }
            ParetoWeight::LogTaper { eps } => {
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(Error::invalid("log-taper eps > 0", format!("eps = {eps}")));
                }
            }
        }
        match insurance.payout {
            PayoutRatio::Constant(l) => {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::invalid("payout ratio l(t) > 0", format!("l = {l}")));
                }
            }
            PayoutRatio::InverseHazard => {
                let lo = mortality.hazard(0.0).min(mortality.hazard(horizon));
                if !(lo > 0.0) {
                    return Err(Error::invalid(
                        "payout ratio l(t) = 1/lambda(t) > 0 needs lambda > 0 on [0, T]",
                        format!("min lambda = {lo}"),
                    ));
                }
            }
            PayoutRatio::Unavailable => {
                if !mortality.is_zero() {
                    return Err(Error::invalid(
                        "no insurance market requires zero hazard",
                        format!("{mortality:?}"),
                    ));
                }
            }
        }
        let (e0, e1) = insurance.eta.coefficients();
        check_finite(e0, "bequest fraction is finite")?;
        check_finite(e1, "bequest fraction is finite")?;
        if !(insurance.eta.min_on(horizon) > 0.0) {
            return Err(Error::invalid("bequest fraction eta(t) > 0", format!("{:?}", insurance.eta)));
        }
        let (i0, i1) = insurance.income.coefficients();
        check_finite(i0, "income is finite")?;
        check_finite(i1, "income is finite")?;
        if insurance.income.min_on(horizon) < 0.0 {
            return Err(Error::invalid("income i(t) >= 0", format!("{:?}", insurance.income)));
        }

        let mut spec = Self {
            horizon,
            market,
            mortality,
            discount,
            prefs,
            insurance,
            assumption: AssumptionCheck {
                holds: false,
                min_value: f64::NAN,
                at: f64::NAN,
            },
        };
        spec.assumption = spec.check_solvability(ASSUMPTION_GRID);
        Ok(spec)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn mortality(&self) -> &MortalityModel {
        &self.mortality
    }

    pub fn discount(&self) -> &DiscountKernel {
        &self.discount
    }

    pub fn prefs(&self) -> &PreferenceParams {
        &self.prefs
    }

    pub fn insurance(&self) -> &InsuranceIncomeSpec {
        &self.insurance
    }

    pub fn gamma(&self) -> f64 {
        self.prefs.gamma
    }

    pub fn terminal_weight(&self) -> f64 {
        self.prefs.terminal_weight
    }

    /// Assumption check recorded at construction (10^4 intervals).
    pub fn assumption(&self) -> AssumptionCheck {
        self.assumption
    }

    pub fn k(&self) -> f64 {
        // gamma < 1 is enforced by the constructor
        constant_k(&self.market, self.prefs.gamma).expect("validated gamma")
    }

    /// `m = m(0)`, the weight entering the policy maps.
    pub fn m0(&self) -> f64 {
        self.pareto_weight(0.0)
    }

    pub fn pareto_weight(&self, lag: f64) -> f64 {
        self.prefs.pareto.value(lag, self.horizon)
    }

    pub fn hazard(&self, t: f64) -> f64 {
        self.mortality.hazard(t)
    }

    /// `1 / l(t)`; zero without an insurance market.
    pub fn inverse_payout(&self, t: f64) -> f64 {
        match self.insurance.payout {
            PayoutRatio::Constant(l) => 1.0 / l,
            PayoutRatio::InverseHazard => self.mortality.hazard(t),
            PayoutRatio::Unavailable => 0.0,
        }
    }

    pub fn payout(&self, t: f64) -> f64 {
        1.0 / self.inverse_payout(t)
    }

    pub fn eta(&self, t: f64) -> f64 {
        self.insurance.eta.value(t)
    }

    pub fn income(&self, t: f64) -> f64 {
        self.insurance.income.value(t)
    }

    /// `eta(t) / l(t)`.
    pub fn eta_over_l(&self, t: f64) -> f64 {
        self.eta(t) * self.inverse_payout(t)
    }

    /// `int_t0^t1 eta(u) / l(u) du`, exact (the integrand is a polynomial of
    /// degree <= 2).
    pub fn eta_over_l_integral(&self, t0: f64, t1: f64) -> f64 {
        let (e0, e1) = self.insurance.eta.coefficients();
        let (g0, g1) = match self.insurance.payout {
            PayoutRatio::Constant(l) => (1.0 / l, 0.0),
            PayoutRatio::InverseHazard => match self.mortality {
                MortalityModel::Constant { lambda0 } => (lambda0, 0.0),
                MortalityModel::Affine { lambda0, lambda1 } => (lambda0, lambda1),
            },
            PayoutRatio::Unavailable => (0.0, 0.0),
        };
        let c0 = e0 * g0;
        let c1 = e0 * g1 + e1 * g0;
        let c2 = e1 * g1;
        let prim = |t: f64| t * (c0 + t * (0.5 * c1 + t * c2 / 3.0));
        prim(t1) - prim(t0)
    }

    /// `M(z)` with `m = m(0)`.
    pub fn weight_m(&self, z: f64) -> f64 {
        weight_m(self.prefs.gamma, self.m0(), self.inverse_payout(z))
    }

    /// Evaluates `1 - gamma M(t) + lambda(t)` on `grid_n` uniform points of
    /// `[0, T]` and reports the minimum.
    pub fn check_solvability(&self, grid_n: usize) -> AssumptionCheck {
        let grid_n = grid_n.max(2);
        let gamma = self.prefs.gamma;
        let mut min_value = f64::INFINITY;
        let mut at = 0.0;
        for k in 0..grid_n {
            let t = self.horizon * k as f64 / (grid_n - 1) as f64;
            let v = 1.0 - gamma * self.weight_m(t) + self.hazard(t);
            if v < min_value {
                min_value = v;
                at = t;
            }
        }
        AssumptionCheck {
            holds: min_value >= 0.0,
            min_value,
            at,
        }
    }

    fn check_pair(&self, s: f64, t: f64) -> Result<()> {
        check_time(t, "kernel t")?;
        if !s.is_finite() || s < t || s > self.horizon * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "kernels require t <= s <= T, got t = {t}, s = {s}, T = {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// `Q(s,t) = h(s-t) exp(-int_t^s lambda)`.
    pub fn kernel_q_big(&self, s: f64, t: f64) -> Result<f64> {
        self.check_pair(s, t)?;
        Ok(self.big_q_at(s, t))
    }

    /// `q(s,t) = m(s-t) h_hat(s-t) lambda(s) exp(-int_t^s lambda)`.
    pub fn kernel_q_small(&self, s: f64, t: f64) -> Result<f64> {
        self.check_pair(s, t)?;
        Ok(self.small_q_at(s, t))
    }

    pub(crate) fn big_q_at(&self, s: f64, t: f64) -> f64 {
        self.discount.at(s - t) * self.mortality.survival_at(t, s)
    }

    pub(crate) fn small_q_at(&self, s: f64, t: f64) -> f64 {
        let lambda = self.mortality.hazard(s);
        if lambda == 0.0 {
            return 0.0;
        }
        let lag = s - t;
        self.pareto_weight(lag) * self.prefs.bequest_discount.at(lag) * lambda * self.mortality.survival_at(t, s)
    }

    /// `m(0)^(-gamma/(gamma-1))`: the bequest utility under the equilibrium
    /// premium is this multiple of `a(s)^(gamma/(gamma-1)) U(x + b)`. Equals 1
    /// when `m(0) = 1` or `gamma = 0`.
    pub fn bequest_utility_scale(&self) -> f64 {
        let g = self.prefs.gamma;
        self.m0().powf(-g / (g - 1.0))
    }

    #[cfg(test)]
    /// Scaled bequest kernel `m(0)^(-gamma/(gamma-1)) q(s,t)` as it enters the
    /// integral equation for `a`.
    pub(crate) fn effective_small_q_at(&self, s: f64, t: f64) -> f64 {
        self.bequest_utility_scale() * self.small_q_at(s, t)
    }

    #[cfg(test)]
    /// `d/dt` of the bequest weight `h_bar(lag) = m(lag) h_hat(lag)`.
    pub(crate) fn bequest_weight_derivative(&self, lag: f64) -> f64 {
        let hh = &self.prefs.bequest_discount;
        let m = self.pareto_weight(lag);
        let dm = self.prefs.pareto.derivative(lag, self.horizon);
        hh.at(lag) * (dm + m * hh.log_derivative_at(lag))
    }

    /// True when `h = h_hat` is exponential and `m` is constant, the
    /// time-consistent (classical Merton) case.
    pub fn exponential_rate(&self) -> Option<f64> {
        let rho = self.discount.is_exponential()?;
        let rho_hat = self.prefs.bequest_discount.is_exponential()?;
        if rho != rho_hat {
            return None;
        }
        match self.prefs.pareto {
            ParetoWeight::Constant(_) => Some(rho),
            ParetoWeight::LogTaper { .. } => None,
        }
    }

    /// Same instance with a different terminal weight.
    pub fn with_terminal_weight(&self, n: f64) -> Result<Self> {
        let mut prefs = self.prefs;
        prefs.terminal_weight = n;
        Self::new(self.horizon, self.market, self.mortality, self.discount, prefs, self.insurance)
    }

    /// Same instance with a different CRRA exponent.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut prefs = self.prefs;
        prefs.gamma = gamma;
        Self::new(self.horizon, self.market, self.mortality, self.discount, prefs, self.insurance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn discount_values() {
        let exp = DiscountKernel::Exponential { rho: 0.1 };
        assert_eq!(exp.value(0.0).unwrap(), 1.0);
        let flat = DiscountKernel::Exponential { rho: 0.0 };
        assert_eq!(flat.value(7.3).unwrap(), 1.0);
        assert_eq!(exp.log_derivative(2.0).unwrap(), -0.1);
        assert!(exp.value(-1.0).is_err());
        assert!(exp.log_derivative(-1e-9).is_err());

        let hyp = DiscountKernel::Hyperbolic { k1: 5.0, k2: 3.3597 };
        assert_relative_eq!(hyp.log_derivative(0.0).unwrap(), -3.3597);
        assert_relative_eq!(hyp.log_derivative(0.5).unwrap(), -3.3597 / 3.5);
    }

    #[test]
    fn hyperbolic_target_matches_bisection() {
        // oracle: bisection on (1 + k1)^(-k2/k1) = 0.3
        let k1: f64 = 5.0;
        let f = |k2: f64| (1.0 + k1).powf(-k2 / k1) - 0.3;
        let (mut lo, mut hi) = (0.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let kernel = DiscountKernel::hyperbolic_with_target(k1, 0.3).unwrap();
        match kernel {
            DiscountKernel::Hyperbolic { k2, .. } => {
                assert_relative_eq!(k2, 0.5 * (lo + hi), max_relative = 1e-12);
                assert_relative_eq!(k2, 3.3597, max_relative = 1e-4);
            }
            _ => unreachable!(),
        }
        assert_relative_eq!(kernel.value(1.0).unwrap(), 0.3, max_relative = 1e-13);
    }

    #[test]
    fn kernels_are_strictly_decreasing() {
        let kernels = [
            DiscountKernel::Exponential { rho: 0.3 },
            DiscountKernel::Hyperbolic { k1: 10.0, k2: 5.2 },
            DiscountKernel::SumOfExponentials { weight: 0.4, r1: 0.05, r2: 0.9 },
            DiscountKernel::AffineExponential { coef: 0.1, rate: 0.3 },
        ];
        for k in kernels {
            k.validate().unwrap();
            let mut prev = k.value(0.0).unwrap();
            assert_eq!(prev, 1.0);
            for i in 1..1000 {
                let v = k.value(4.0 * i as f64 / 999.0).unwrap();
                assert!(v < prev, "{k:?} not decreasing at {i}");
                assert!(v > 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(DiscountKernel::Hyperbolic { k1: 0.0, k2: 1.0 }.validate().is_err());
        assert!(DiscountKernel::Exponential { rho: -0.1 }.validate().is_err());
        assert!(DiscountKernel::AffineExponential { coef: 0.5, rate: 0.2 }.validate().is_err());
        assert!(DiscountKernel::SumOfExponentials { weight: 1.5, r1: 0.1, r2: 0.2 }.validate().is_err());
    }

    #[test]
    fn survival_values() {
        let c = MortalityModel::Constant { lambda0: 0.02 };
        assert_eq!(c.survival(1.3, 1.3).unwrap(), 1.0);
        assert_relative_eq!(c.survival(0.0, 1.0).unwrap(), 0.980_198_673_306_755_1, max_relative = 1e-14);
        let a = MortalityModel::Affine {
            lambda0: 1.0 / 200.0,
            lambda1: 9.0 / 8000.0,
        };
        assert_relative_eq!(a.survival(0.0, 4.0).unwrap(), (-0.029f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(a.survival(0.0, 4.0).unwrap(), 0.971416, max_relative = 1e-6);
        assert!(a.survival(2.0, 1.0).is_err());
    }

    #[test]
    fn survival_semigroup() {
        let a = MortalityModel::Affine {
            lambda0: 0.01,
            lambda1: 0.003,
        };
        for &(t, s1, s2) in &[(0.0, 1.0, 4.0), (0.3, 0.3, 2.2), (1.1, 2.7, 3.9)] {
            let lhs = a.survival(t, s1).unwrap() * a.survival(s1, s2).unwrap();
            assert!((lhs - a.survival(t, s2).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn death_time_inverts_cumulative_hazard() {
        let a = MortalityModel::Affine {
            lambda0: 0.3,
            lambda1: 0.2,
        };
        for &e in &[0.01, 0.4, 1.2] {
            let s = a.death_time(0.5, e, 10.0).unwrap();
            assert_relative_eq!(a.cumulative(0.5, s), e, max_relative = 1e-12);
        }
        assert_eq!(a.death_time(0.5, 100.0, 1.0), None);
        let c = MortalityModel::Constant { lambda0: 0.5 };
        assert_relative_eq!(c.death_time(1.0, 0.25, 10.0).unwrap(), 1.5);
        assert_eq!(MortalityModel::none().death_time(0.0, 1e-9, 1e6), None);
    }

    #[test]
    fn kernel_values() {
        let spec = fixtures::insured_exponential();
        assert_eq!(spec.kernel_q_big(0.4, 0.4).unwrap(), 1.0);
        assert_relative_eq!(spec.kernel_q_big(1.0, 0.0).unwrap(), (-0.12f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(spec.kernel_q_big(1.0, 0.0).unwrap(), 0.886920, max_relative = 1e-6);
        assert_relative_eq!(spec.kernel_q_small(0.7, 0.7).unwrap(), 0.02, max_relative = 1e-15);
        assert_relative_eq!(spec.kernel_q_small(1.0, 0.0).unwrap(), 0.0177384, max_relative = 1e-5);
        assert!(spec.kernel_q_big(0.2, 0.5).is_err());
        assert!(spec.kernel_q_small(1.5, 0.5).is_err());

        let no_mort = fixtures::uninsured_exponential(0.1);
        assert_relative_eq!(no_mort.kernel_q_big(1.0, 0.0).unwrap(), (-0.1f64).exp(), max_relative = 1e-14);
        assert_eq!(no_mort.kernel_q_small(0.9, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_values_all_families() {
        for spec in [fixtures::insured_exponential(), fixtures::tapered_weight(), fixtures::hump(10.0, 30.0)] {
            for i in 0..=20 {
                let t = spec.horizon() * i as f64 / 20.0;
                assert_eq!(spec.kernel_q_big(t, t).unwrap(), 1.0);
                let expected = spec.m0() * spec.hazard(t);
                assert_relative_eq!(spec.kernel_q_small(t, t).unwrap(), expected, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn big_q_time_derivative() {
        // dQ/dt(s,t) = (lambda(t) - h'/h(s-t)) Q(s,t)
        let tapered = fixtures::tapered_weight();
        let hump = fixtures::hump(5.0, 10.0);
        for spec in [&tapered, &hump] {
            let s = 3.5;
            for &t in &[0.3, 1.0, 2.2] {
                let step = 1e-5;
                let fd = (spec.big_q_at(s, t + step) - spec.big_q_at(s, t - step)) / (2.0 * step);
                let exact = (spec.hazard(t) - spec.discount().log_derivative_at(s - t)) * spec.big_q_at(s, t);
                assert!(((fd - exact) / exact).abs() < 1e-6, "fd {fd} exact {exact}");
            }
        }
    }

    #[test]
    fn constant_k_values() {
        let m = MarketParams::with_excess_return(0.05, 0.07, 0.2).unwrap();
        assert_relative_eq!(constant_k(&m, -1.0).unwrap(), -0.080625, max_relative = 1e-14);
        assert_eq!(constant_k(&m, 0.0).unwrap(), 0.0);
        assert!(constant_k(&m, 1.0).is_err());
        let flat = MarketParams {
            r: 0.0,
            alpha: 0.0,
            sigma: 0.2,
            mu: 0.0,
        };
        assert_eq!(constant_k(&flat, -3.0).unwrap(), 0.0);
    }

    #[test]
    fn market_invariants() {
        assert!(MarketParams::new(0.05, 0.04, 0.2).is_err());
        assert!(MarketParams::new(0.05, 0.12, 0.0).is_err());
        let m = MarketParams::new(0.05, 0.12, 0.2).unwrap();
        assert_relative_eq!(m.mu(), 0.07, max_relative = 1e-14);
        assert_relative_eq!(m.merton_fraction(-1.0), 0.875, max_relative = 1e-13);
    }

    #[test]
    fn weight_m_values() {
        assert_relative_eq!(weight_m(-1.0, 1.0, 1.0 / 50.0), 1.02, max_relative = 1e-15);
        assert_relative_eq!(weight_m(-1.0, 4.0, 1.0), 3.0, max_relative = 1e-15);
        assert_eq!(weight_m(-1.0, 4.0, 0.0), 1.0);
    }

    #[test]
    fn assumption_checks() {
        // gamma <= 0 always satisfies it
        assert!(fixtures::insured_exponential().assumption().holds);
        assert!(fixtures::tapered_weight().assumption().holds);
        // m = 1 with l = 1 / lambda (and gamma in (0, 1))
        let fair_insurance = fixtures::with_prefs(fixtures::tapered_weight(), 0.5, ParetoWeight::Constant(1.0));
        assert!(fair_insurance.check_solvability(1001).holds);
        // gamma = 0.9, M = 1.2, lambda = 0: 1 - 1.08 < 0
        let market = MarketParams::with_excess_return(0.05, 0.07, 0.2).unwrap();
        let bad = ModelSpec::new(
            1.0,
            market,
            MortalityModel::Constant { lambda0: 0.0 },
            DiscountKernel::Exponential { rho: 0.1 },
            PreferenceParams::new(0.9, 1.0, ParetoWeight::Constant(1.0), DiscountKernel::Exponential { rho: 0.1 }),
            InsuranceIncomeSpec::new(PayoutRatio::Constant(5.0), TimeFunction::Constant(1.0), TimeFunction::Constant(0.0)),
        )
        .unwrap();
        let check = bad.check_solvability(11);
        assert!(!check.holds);
        assert_relative_eq!(check.min_value, -0.08, max_relative = 1e-12);
    }

    #[test]
    fn log_taper_weight() {
        let spec = fixtures::tapered_weight();
        let expected = ((4.0 + 1e-15) / 1e-15f64).ln();
        assert_relative_eq!(spec.m0(), expected, max_relative = 1e-14);
        assert_eq!(spec.pareto_weight(4.0), 0.0);
        assert!(spec.pareto_weight(3.999) > 0.0);
    }

    #[test]
    fn eta_over_l_integral_is_exact() {
        let spec = fixtures::tapered_weight();
        // Simpson is exact on quadratics
        let (a, b) = (0.3, 3.1);
        let mid = 0.5 * (a + b);
        let simpson = (b - a) / 6.0 * (spec.eta_over_l(a) + 4.0 * spec.eta_over_l(mid) + spec.eta_over_l(b));
        assert_relative_eq!(spec.eta_over_l_integral(a, b), simpson, max_relative = 1e-14);
    }

    #[test]
    fn uninsured_requires_zero_hazard() {
        let market = MarketParams::with_excess_return(0.05, 0.07, 0.2).unwrap();
        let r = ModelSpec::new(
            1.0,
            market,
            MortalityModel::Constant { lambda0: 0.02 },
            DiscountKernel::Exponential { rho: 0.1 },
            PreferenceParams::new(-1.0, 1.0, ParetoWeight::Constant(1.0), DiscountKernel::Exponential { rho: 0.1 }),
            InsuranceIncomeSpec::uninsured(),
        );
        assert!(matches!(r, Err(Error::InvalidModel { .. })));
    }
}
