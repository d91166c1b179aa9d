//! Closed and semi-closed forms: the human-capital term `b(t)`, `a(t)` under
//! exponential discounting and under logarithmic utility, and the stationary
//! (infinite-horizon, constant-coefficient) solution.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::model::{constant_k, MarketParams, ModelSpec, TimeFunction};
use crate::quadrature::{simpson, SIMPSON_PANELS};

fn check_t(spec: &ModelSpec, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= spec.horizon()) {
        return Err(Error::domain(format!("t = {t} outside [0, {}]", spec.horizon())));
    }
    Ok(())
}

/// `b(s) = int_s^T i(u) exp(-int_s^u (r + eta/l)) du` on `N + 1` uniform
/// knots of `[0, T]`.
///
/// Uses the closed form when `i` and `eta/l` are constant. Otherwise the
/// backward recursion `b_k = e^{-R_k} b_{k+1} + int_{s_k}^{s_{k+1}} ...` with
/// the discount factor integrated exactly and each piece by 3-point Simpson.
pub fn solve_b(spec: &ModelSpec, steps: usize) -> Result<Curve> {
    if steps < 2 {
        return Err(Error::domain(format!("N must be >= 2, got {steps}")));
    }
    let horizon = spec.horizon();
    let r = spec.market().r();
    let times: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { horizon } else { horizon * k as f64 / steps as f64 })
        .collect();

    let constant_rate = {
        let (_, e1) = spec.insurance().eta.coefficients();
        let probe = spec.eta_over_l(0.0);
        (e1 == 0.0 && spec.eta_over_l(horizon) == probe && spec.eta_over_l(0.5 * horizon) == probe).then_some(r + probe)
    };
    let values = match (spec.insurance().income, constant_rate) {
        (TimeFunction::Constant(i), Some(rate)) => times
            .iter()
            .map(|&s| {
                let tau = horizon - s;
                if rate == 0.0 {
                    i * tau
                } else {
                    -i * (-rate * tau).exp_m1() / rate
                }
            })
            .collect(),
        _ => {
            let discount = |s: f64, u: f64| (-(r * (u - s) + spec.eta_over_l_integral(s, u))).exp();
            let mut values = vec![0.0; steps + 1];
            for k in (0..steps).rev() {
                let (s0, s1) = (times[k], times[k + 1]);
                let mid = 0.5 * (s0 + s1);
                let piece = (s1 - s0) / 6.0
                    * (spec.income(s0) + 4.0 * spec.income(mid) * discount(s0, mid) + spec.income(s1) * discount(s0, s1));
                values[k] = discount(s0, s1) * values[k + 1] + piece;
            }
            values
        }
    };
    Curve::new(times, values)
}

/// `a(t)` for exponential `h = h_hat` with constant Pareto weight, where the
/// equation reduces to a Bernoulli ODE.
pub fn a_exponential(spec: &ModelSpec, t: f64) -> Result<f64> {
    let rho = spec.exponential_rate().ok_or_else(|| {
        Error::Unsupported("closed form needs exponential h = h_hat with one rate and constant m".into())
    })?;
    check_t(spec, t)?;
    let horizon = spec.horizon();
    let gamma = spec.gamma();
    let one_minus = 1.0 - gamma;
    let w0 = spec.terminal_weight().powf(1.0 / one_minus);
    if t == horizon {
        return Ok(spec.terminal_weight());
    }
    let k = spec.k();
    let diagonal_scale = spec.m0().powf(1.0 / one_minus);
    let mortality = spec.mortality();
    let exponent = |u: f64| {
        ((k - rho) * (u - t) + gamma * spec.eta_over_l_integral(t, u) - mortality.cumulative(t, u)) / one_minus
    };
    let coef = |u: f64| (1.0 + diagonal_scale * spec.hazard(u) - gamma * spec.weight_m(u)) / one_minus;
    let integral = simpson(|u| coef(u) * exponent(u).exp(), t, horizon, SIMPSON_PANELS);
    let w = w0 * exponent(horizon).exp() + integral;
    Ok(w.powf(one_minus))
}

/// `a(t) = int_t^T [Q(s,t) + q(s,t)] ds + n Q(T,t)`, the logarithmic-utility
/// solution. Evaluated for any spec; meaningful for `gamma = 0`.
pub fn a_log(spec: &ModelSpec, t: f64) -> Result<f64> {
    check_t(spec, t)?;
    let horizon = spec.horizon();
    if t == horizon {
        return Ok(spec.terminal_weight());
    }
    let integral = simpson(|s| spec.big_q_at(s, t) + spec.small_q_at(s, t), t, horizon, SIMPSON_PANELS);
    Ok(integral + spec.terminal_weight() * spec.big_q_at(horizon, t))
}

/// Constant-coefficient instance with `Q(s,t) = exp(-(lambda + r2)(s-t))`
/// and `q(s,t) = m lambda exp(-(lambda + r1)(s-t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryParams {
    pub lambda: f64,
    /// Bequest discount rate.
    pub r1: f64,
    /// Consumption discount rate.
    pub r2: f64,
    pub m: f64,
    pub l: f64,
    pub eta: f64,
    pub i: f64,
    pub gamma: f64,
    pub market: MarketParams,
}

impl StationaryParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda, self.r1, self.r2, self.m, self.l, self.eta, self.i, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("finite parameters", "stationary parameters must be finite"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda > 0", format!("lambda = {}", self.lambda)));
        }
        if !(self.l > 0.0) {
            return Err(Error::invalid("l > 0", format!("l = {}", self.l)));
        }
        if !(self.m > 0.0) {
            return Err(Error::invalid("m > 0", format!("m = {}", self.m)));
        }
        if !(self.gamma < 1.0) {
            return Err(Error::invalid("gamma < 1", format!("gamma = {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarySolution {
    pub a: f64,
    pub b: f64,
    /// Consumption rate `a^(1/(gamma-1))`, the root of the stationary equation.
    pub x: f64,
    /// `lambda + r1 - K - gamma eta/l`
    pub alpha1: f64,
    /// `lambda + r2 - K - gamma eta/l`
    pub alpha2: f64,
    pub beta: f64,
    pub tc1: bool,
    pub tc2: bool,
}

impl StationarySolution {
    pub fn tc_holds(&self) -> bool {
        self.tc1 && self.tc2
    }
}

/// Coefficients of the stationary equation in the consumption rate `x`:
/// `1/x = 1/(alpha2 + g x) + lambda'/(alpha1 + g x)` with `g = gamma beta`.
#[derive(Debug, Clone, Copy)]
struct Stationary {
    alpha1: f64,
    alpha2: f64,
    gb: f64,
    lambda_eff: f64,
}

impl Stationary {
    fn residual(&self, x: f64) -> f64 {
        1.0 / x - 1.0 / (self.alpha2 + self.gb * x) - self.lambda_eff / (self.alpha1 + self.gb * x)
    }

    fn feasible(&self, x: f64) -> bool {
        x > 0.0 && self.alpha1 + self.gb * x > 0.0 && self.alpha2 + self.gb * x > 0.0
    }

    /// Open interval of `x > 0` on which both transversality conditions hold.
    fn feasible_interval(&self) -> Option<(f64, f64)> {
        let (a1, a2, g) = (self.alpha1, self.alpha2, self.gb);
        if g == 0.0 {
            return (a1 > 0.0 && a2 > 0.0).then_some((0.0, f64::INFINITY));
        }
        if g < 0.0 {
            let hi = (a1 / -g).min(a2 / -g);
            return (hi > 0.0).then_some((0.0, hi));
        }
        Some(((-a1 / g).max(-a2 / g).max(0.0), f64::INFINITY))
    }

    /// Roots of `g(1 + lambda' - g) x^2 + (alpha1 (1 - g) + alpha2 (lambda' - g)) x - alpha1 alpha2 = 0`.
    fn quadratic_roots(&self) -> Vec<f64> {
        let g = self.gb;
        let qa = g * (1.0 + self.lambda_eff - g);
        let qb = self.alpha1 * (1.0 - g) + self.alpha2 * (self.lambda_eff - g);
        let qc = -self.alpha1 * self.alpha2;
        if qa == 0.0 {
            return if qb == 0.0 { vec![] } else { vec![-qc / qb] };
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return vec![];
        }
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        let mut roots = vec![q / qa];
        if q != 0.0 {
            roots.push(qc / q);
        }
        roots
    }

    fn bisect(&self) -> Result<f64> {
        let (lo_bound, hi_bound) = self
            .feasible_interval()
            .ok_or_else(|| Error::NoFeasibleRoot(format!("no x > 0 satisfies the transversality conditions ({self:?})")))?;
        let nudge = |x: f64| x + 1e-14 * x.abs().max(1e-300);
        let mut lo = if lo_bound == 0.0 { f64::MIN_POSITIVE.sqrt() } else { nudge(lo_bound) };
        while !self.residual(lo).is_finite() {
            lo = nudge(lo) * 2.0;
        }
        let f_lo = self.residual(lo);
        let mut hi = if hi_bound.is_finite() {
            hi_bound * (1.0 - 1e-14)
        } else {
            let mut hi = lo.max(1.0);
            while self.residual(hi).signum() == f_lo.signum() && hi < 1e12 {
                hi *= 2.0;
            }
            hi
        };
        if self.residual(hi).signum() == f_lo.signum() {
            return Err(Error::NoFeasibleRoot(format!(
                "stationary equation has no sign change on ({lo_bound}, {hi_bound})"
            )));
        }
        let mut lo_x = lo;
        for _ in 0..200 {
            let mid = 0.5 * (lo_x + hi);
            if mid == lo_x || mid == hi {
                break;
            }
            if self.residual(mid).signum() == f_lo.signum() {
                lo_x = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo_x + hi))
    }
}

fn stationary_equation(p: &StationaryParams) -> Result<(Stationary, f64)> {
    p.validate()?;
    let k = constant_k(&p.market, p.gamma)?;
    let shift = p.gamma * p.eta / p.l;
    let root_m = p.m.powf(1.0 / (1.0 - p.gamma));
    let beta = 1.0 + root_m / p.l;
    Ok((
        Stationary {
            alpha1: p.lambda + p.r1 - k - shift,
            alpha2: p.lambda + p.r2 - k - shift,
            gb: p.gamma * beta,
            lambda_eff: p.lambda * root_m,
        },
        beta,
    ))
}

/// Solves the stationary problem: the quadratic when `m = 1`, bisection on
/// the transversality-feasible interval otherwise.
pub fn solve_stationary(p: &StationaryParams) -> Result<StationarySolution> {
    let (eq, beta) = stationary_equation(p)?;
    let quadratic = if p.m == 1.0 {
        let feasible: Vec<f64> = eq.quadratic_roots().into_iter().filter(|&x| eq.feasible(x)).collect();
        (feasible.len() == 1).then(|| feasible[0])
    } else {
        None
    };
    let x = match quadratic {
        Some(x) => x,
        None => eq.bisect()?,
    };
    let a = if p.gamma == 0.0 { 1.0 / x } else { x.powf(p.gamma - 1.0) };
    Ok(StationarySolution {
        a,
        b: p.i / (p.market.r() + p.eta / p.l),
        x,
        alpha1: eq.alpha1,
        alpha2: eq.alpha2,
        beta,
        tc1: eq.alpha1 + eq.gb * x > 0.0,
        tc2: eq.alpha2 + eq.gb * x > 0.0,
    })
}

/// `a - a^p/(alpha2 + gamma beta phi) - m lambda (a/m)^p/(alpha1 + gamma beta phi)`
/// with `p = gamma/(gamma-1)` and `phi = a^(1/(gamma-1))`.
pub fn stationary_residual(p: &StationaryParams, a: f64) -> Result<f64> {
    let (eq, _) = stationary_equation(p)?;
    let g = p.gamma;
    let (pow, phi) = if g == 0.0 { (0.0, 1.0 / a) } else { (g / (g - 1.0), a.powf(1.0 / (g - 1.0))) };
    Ok(a - a.powf(pow) / (eq.alpha2 + eq.gb * phi) - p.m * p.lambda * (a / p.m).powf(pow) / (eq.alpha1 + eq.gb * phi))
}

/// The stationary equation's defining function `1/x - sum of terms` and its
/// feasible interval, exposed for monotonicity diagnostics.
pub fn stationary_function(p: &StationaryParams) -> Result<(impl Fn(f64) -> f64, (f64, f64))> {
    let (eq, _) = stationary_equation(p)?;
    let interval = eq
        .feasible_interval()
        .ok_or_else(|| Error::NoFeasibleRoot("empty transversality-feasible interval".into()))?;
    Ok((move |x: f64| eq.residual(x), interval))
}

/// Root selected by bisection regardless of `m`.
pub fn stationary_root_by_bisection(p: &StationaryParams) -> Result<f64> {
    stationary_equation(p)?.0.bisect()
}
