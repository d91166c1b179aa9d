//! Explicit backward scheme for the equilibrium integral equation of `a(t)`.
//!
//! Written in differential form the equation reads
//!
//! ```text
//! a'(t) = (gamma M(t) - 1 - lq(t)) a^p + (lambda(t) - g(T-t) - K - gamma eta/l(t)) a
//!         + int_t^T L(s,t) a(s)^p A(s)/A(t) ds,          a(T) = n
//! A(s)  = exp(int_s^T gamma a(z)^(1/(gamma-1)) M(z) dz)
//! ```
//!
//! with `p = gamma/(gamma-1)`, `g = h'/h`, `lq(t) = m(0)^(1/(1-gamma)) lambda(t)`
//! and
//!
//! ```text
//! L(s,t) = [(g(T-t) - g(s-t)) Q(s,t) + (g(T-t) - gbar(s-t)) qs(s,t)] exp(int_t^s K + gamma eta/l)
//! ```
//!
//! where `qs = m(0)^(-p) q` is the bequest kernel scaled by the utility of
//! the equilibrium legacy and `gbar` the log-derivative of `m h_hat`. The
//! scheme steps backward from `T` with `epsilon = -T/N`, replacing the
//! integral by a Riemann sum over the already computed nodes. It is first
//! order: the interpolated solution is within `C |epsilon|` of `a`.

use crate::closed_form;
use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Backward grid `t_n = T - n T / N` with the scheme values `a_n`, `A_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGrid {
    times: Vec<f64>,
    a_values: Vec<f64>,
    big_a_values: Vec<f64>,
    steps: usize,
    epsilon: f64,
}

impl SolutionGrid {
    /// Node times, decreasing from `T` to `0`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a_values
    }

    pub fn big_a_values(&self) -> &[f64] {
        &self.big_a_values
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Signed step `-T/N`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> f64 {
        self.times[0]
    }

    /// Linear interpolation of `(t_n, a_n)`; exact at the nodes.
    pub fn interpolate_a(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon) {
            return Err(Error::domain(format!("t = {t} outside [0, {horizon}]")));
        }
        let pos = (horizon - t) / horizon * self.steps as f64;
        let lo = (pos.floor() as usize).min(self.steps);
        if self.times[lo] == t {
            return Ok(self.a_values[lo]);
        }
        let hi = (lo + 1).min(self.steps);
        if self.times[hi] == t || hi == lo {
            return Ok(self.a_values[hi]);
        }
        let (t_lo, t_hi) = (self.times[lo], self.times[hi]);
        let w = (t_lo - t) / (t_lo - t_hi);
        Ok(self.a_values[lo] + w * (self.a_values[hi] - self.a_values[lo]))
    }

    /// The solution as an increasing-time curve.
    pub fn a_curve(&self) -> Curve {
        let times: Vec<f64> = self.times.iter().rev().copied().collect();
        let values: Vec<f64> = self.a_values.iter().rev().copied().collect();
        Curve::new(times, values).expect("grid times are strictly decreasing")
    }
}

/// The three parts of the discretized right-hand side at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsTerms {
    /// `(gamma M - 1 - lq) a_n^p`
    pub power: f64,
    /// `(lambda - g(T-t) - K - gamma eta/l) a_n`
    pub linear: f64,
    /// `-epsilon sum_{j<n} L(t_j, t_n) a_j^p A_j / A_n`
    pub integral: f64,
}

impl RhsTerms {
    pub fn total(&self) -> f64 {
        self.power + self.linear + self.integral
    }
}

/// Node- and lag-indexed coefficients of the scheme. Lags are multiples of
/// `T/N`, so every factor that depends on `s - t` alone is tabulated once.
struct Stepper {
    epsilon: f64,
    gamma: f64,
    power: f64,
    times: Vec<f64>,
    hazard: Vec<f64>,
    weight_m: Vec<f64>,
    power_coef: Vec<f64>,
    linear_coef: Vec<f64>,
    terminal_log_derivative: Vec<f64>,
    // int_0^t lambda - int_0^t (K + gamma eta/l)
    separable: Vec<f64>,
    lag_h: Vec<f64>,
    lag_g: Vec<f64>,
    lag_h_hat: Vec<f64>,
    lag_g_hat: Vec<f64>,
    lag_m: Vec<f64>,
    lag_dm: Vec<f64>,
    bequest_scale: f64,
}

impl Stepper {
    fn new(spec: &ModelSpec, steps: usize) -> Self {
        let horizon = spec.horizon();
        let gamma = spec.gamma();
        let k = spec.k();
        let m0 = spec.m0();
        let bequest_scale = spec.bequest_utility_scale();
        let diagonal_scale = m0.powf(1.0 / (1.0 - gamma));
        let times: Vec<f64> = (0..=steps)
            .map(|n| horizon * (steps - n) as f64 / steps as f64)
            .collect();
        let lags: Vec<f64> = (0..=steps).map(|d| horizon * d as f64 / steps as f64).collect();

        let h = spec.discount();
        let h_hat = &spec.prefs().bequest_discount;
        let pareto = &spec.prefs().pareto;

        let mut hazard = Vec::with_capacity(steps + 1);
        let mut weight_m = Vec::with_capacity(steps + 1);
        let mut power_coef = Vec::with_capacity(steps + 1);
        let mut linear_coef = Vec::with_capacity(steps + 1);
        let mut terminal_log_derivative = Vec::with_capacity(steps + 1);
        let mut separable = Vec::with_capacity(steps + 1);
        for &t in &times {
            let lambda = spec.hazard(t);
            let m = spec.weight_m(t);
            let g_terminal = h.log_derivative_at(horizon - t);
            hazard.push(lambda);
            weight_m.push(m);
            power_coef.push(gamma * m - 1.0 - diagonal_scale * lambda);
            linear_coef.push(lambda - g_terminal - k - gamma * spec.eta_over_l(t));
            terminal_log_derivative.push(g_terminal);
            separable.push(
                spec.mortality().cumulative(0.0, t) - k * t - gamma * spec.eta_over_l_integral(0.0, t),
            );
        }

        Self {
            epsilon: -horizon / steps as f64,
            gamma,
            power: gamma / (gamma - 1.0),
            hazard,
            weight_m,
            power_coef,
            linear_coef,
            terminal_log_derivative,
            separable,
            lag_h: lags.iter().map(|&d| h.at(d)).collect(),
            lag_g: lags.iter().map(|&d| h.log_derivative_at(d)).collect(),
            lag_h_hat: lags.iter().map(|&d| h_hat.at(d)).collect(),
            lag_g_hat: lags.iter().map(|&d| h_hat.log_derivative_at(d)).collect(),
            lag_m: lags.iter().map(|&d| pareto.value(d, horizon)).collect(),
            lag_dm: lags.iter().map(|&d| pareto.derivative(d, horizon)).collect(),
            times,
            bequest_scale,
        }
    }

    /// `L(t_j, t_n) exp(-int_{t_n}^{t_j} ...)` up to the separable factor,
    /// written without dividing by `m` so that a vanishing weight is harmless.
    #[inline]
    fn kernel(&self, j: usize, n: usize) -> f64 {
        let d = n - j;
        let g_t = self.terminal_log_derivative[n];
        let consumption = (g_t - self.lag_g[d]) * self.lag_h[d];
        let lambda = self.hazard[j];
        let bequest = if lambda == 0.0 {
            0.0
        } else {
            self.bequest_scale
                * lambda
                * self.lag_h_hat[d]
                * ((g_t - self.lag_g_hat[d]) * self.lag_m[d] - self.lag_dm[d])
        };
        (consumption + bequest) * (self.separable[n] - self.separable[j]).exp()
    }

    fn terms(&self, n: usize, a: &[f64], a_pow: &[f64], big_a: &[f64]) -> RhsTerms {
        let mut sum = 0.0;
        for j in 0..n {
            sum += self.kernel(j, n) * a_pow[j] * big_a[j];
        }
        RhsTerms {
            power: self.power_coef[n] * a_pow[n],
            linear: self.linear_coef[n] * a[n],
            integral: -self.epsilon * sum / big_a[n],
        }
    }
}

fn check_solvable(spec: &ModelSpec, steps: usize) -> Result<()> {
    if steps < 2 {
        return Err(Error::domain(format!("N must be >= 2, got {steps}")));
    }
    if spec.gamma() == 0.0 {
        return Err(Error::Unsupported(
            "gamma = 0 is the logarithmic case; use closed_form::a_log".into(),
        ));
    }
    let check = spec.assumption();
    if !check.holds {
        return Err(Error::AssumptionViolated {
            min_value: check.min_value,
            at: check.at,
        });
    }
    Ok(())
}

/// Runs the explicit scheme with `N = steps`.
pub fn solve_a(spec: &ModelSpec, steps: usize) -> Result<SolutionGrid> {
    check_solvable(spec, steps)?;
    let stepper = Stepper::new(spec, steps);
    let gamma = stepper.gamma;
    let eps = stepper.epsilon;
    let consumption_exp = 1.0 / (gamma - 1.0);

    let mut a = Vec::with_capacity(steps + 1);
    let mut a_pow = Vec::with_capacity(steps + 1);
    let mut big_a = Vec::with_capacity(steps + 1);
    a.push(spec.terminal_weight());
    a_pow.push(spec.terminal_weight().powf(stepper.power));
    big_a.push(1.0);

    for n in 0..steps {
        let terms = stepper.terms(n, &a, &a_pow, &big_a);
        let next = a[n] + eps * terms.total();
        let next_big = big_a[n] - gamma * eps * a[n].powf(consumption_exp) * stepper.weight_m[n] * big_a[n];
        if !(next > 0.0) || !next.is_finite() {
            return Err(Error::SchemeBreakdown {
                step: n + 1,
                t: stepper.times[n + 1],
                value: next,
            });
        }
        if !(next_big > 0.0) || !next_big.is_finite() {
            return Err(Error::SchemeBreakdown {
                step: n + 1,
                t: stepper.times[n + 1],
                value: next_big,
            });
        }
        a.push(next);
        a_pow.push(next.powf(stepper.power));
        big_a.push(next_big);
    }

    Ok(SolutionGrid {
        times: stepper.times,
        a_values: a,
        big_a_values: big_a,
        steps,
        epsilon: eps,
    })
}

/// Discretized right-hand side at node `n`, split into its parts.
pub fn rhs_terms(spec: &ModelSpec, grid: &SolutionGrid, n: usize) -> Result<RhsTerms> {
    if n > grid.steps {
        return Err(Error::domain(format!("node {n} outside 0..={}", grid.steps)));
    }
    check_solvable(spec, grid.steps)?;
    if spec.horizon() != grid.horizon() {
        return Err(Error::domain("grid horizon differs from the model horizon"));
    }
    if let Some(j) = (0..=n).find(|&j| !(grid.a_values[j] > 0.0)) {
        return Err(Error::SchemeBreakdown {
            step: j,
            t: grid.times[j],
            value: grid.a_values[j],
        });
    }
    let stepper = Stepper::new(spec, grid.steps);
    let a_pow: Vec<f64> = grid.a_values[..=n].iter().map(|v| v.powf(stepper.power)).collect();
    Ok(stepper.terms(n, &grid.a_values, &a_pow, &grid.big_a_values))
}

/// `a'(t_n)` as used by the scheme.
pub fn rhs_derivative(spec: &ModelSpec, grid: &SolutionGrid, n: usize) -> Result<f64> {
    Ok(rhs_terms(spec, grid, n)?.total())
}

/// Where the reference solution of a convergence study comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Closed form for exponential discounting with constant Pareto weight.
    ClosedForm,
    /// Richardson extrapolation `2 a_{4N} - a_{2N}` on the `2N` nodes.
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub steps: usize,
    /// Max-norm error at `N`.
    pub err_coarse: f64,
    /// Max-norm error at `2N`.
    pub err_fine: f64,
    pub ratio: f64,
    pub reference: Reference,
}

fn max_gap(values: &[f64], reference: impl Iterator<Item = f64>) -> f64 {
    values
        .iter()
        .zip(reference)
        .map(|(v, r)| (v - r).abs())
        .fold(0.0, f64::max)
}

/// Errors of the scheme at `N` and `2N` against the best available reference.
pub fn convergence_report(spec: &ModelSpec, steps: usize) -> Result<ConvergenceReport> {
    if steps < 4 {
        return Err(Error::domain(format!("convergence study needs N >= 4, got {steps}")));
    }
    let coarse = solve_a(spec, steps)?;
    let fine = solve_a(spec, 2 * steps)?;

    let (err_coarse, err_fine, reference) = if spec.exponential_rate().is_some() {
        let exact = |t: f64| closed_form::a_exponential(spec, t);
        let ref_coarse = coarse.times.iter().map(|&t| exact(t)).collect::<Result<Vec<_>>>()?;
        let ref_fine = fine.times.iter().map(|&t| exact(t)).collect::<Result<Vec<_>>>()?;
        (
            max_gap(&coarse.a_values, ref_coarse.into_iter()),
            max_gap(&fine.a_values, ref_fine.into_iter()),
            Reference::ClosedForm,
        )
    } else {
        let finest = solve_a(spec, 4 * steps)?;
        let extrapolated: Vec<f64> = (0..=2 * steps)
            .map(|k| 2.0 * finest.a_values[2 * k] - fine.a_values[k])
            .collect();
        (
            max_gap(&coarse.a_values, extrapolated.iter().step_by(2).copied()),
            max_gap(&fine.a_values, extrapolated.iter().copied()),
            Reference::Extrapolated,
        )
    };

    Ok(ConvergenceReport {
        steps,
        err_coarse,
        err_fine,
        ratio: err_coarse / err_fine,
        reference,
    })
}

/// Comparison constants and the envelopes they induce.
///
/// `a` satisfies `-D1 a^p - D0 a <= a' <= -C1 a^p + C0 a`; integrating both
/// Bernoulli equations backward from `a(T) = n` gives the lower and upper
/// curves. With `w = a^(1/(1-gamma))` both become linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub c0: f64,
    pub c1: f64,
    pub d0: f64,
    pub d1: f64,
    /// Bound on `|h'/h|` and `|hbar'/hbar|`.
    pub rho: f64,
    /// Bound on `|gamma eta / l|`.
    pub rho_prime: f64,
    horizon: f64,
    gamma: f64,
    terminal: f64,
}

const BOUNDS_GRID: usize = 10_000;

impl BoundsReport {
    fn envelope(&self, t: f64, source: f64, rate: f64) -> f64 {
        // dw/dtau = (source + rate w) / (1 - gamma), w(0) = n^(1/(1-gamma))
        let one_minus = 1.0 - self.gamma;
        let tau = self.horizon - t;
        let w0 = self.terminal.powf(1.0 / one_minus);
        let kappa = rate / one_minus;
        let growth = (kappa * tau).exp();
        let integral = if kappa == 0.0 {
            tau
        } else {
            (kappa * tau).exp_m1() / kappa
        };
        let w = w0 * growth + source / one_minus * integral;
        w.powf(one_minus)
    }

    pub fn lower(&self, t: f64) -> f64 {
        self.envelope(t, self.c1, -self.c0)
    }

    pub fn upper(&self, t: f64) -> f64 {
        self.envelope(t, self.d1, self.d0)
    }
}

/// Comparison constants by grid search over `10^4` points of `[0, T)`.
pub fn a_priori_bounds(spec: &ModelSpec) -> Result<BoundsReport> {
    check_solvable(spec, 2)?;
    let horizon = spec.horizon();
    let gamma = spec.gamma();
    let k = spec.k();
    let diagonal_scale = spec.m0().powf(1.0 / (1.0 - gamma));
    let h = spec.discount();
    let h_hat = &spec.prefs().bequest_discount;
    let pareto = &spec.prefs().pareto;

    let grid = (0..BOUNDS_GRID).map(|i| horizon * i as f64 / BOUNDS_GRID as f64);
    let mut rho: f64 = h.log_derivative_at(horizon).abs();
    let mut rho_prime: f64 = 0.0;
    let (mut c0, mut c1, mut d0, mut d1) = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut samples = Vec::with_capacity(BOUNDS_GRID);
    for t in grid {
        rho = rho.max(h.log_derivative_at(t).abs());
        let m = pareto.value(t, horizon);
        let g_bar = h_hat.log_derivative_at(t) + pareto.derivative(t, horizon) / m;
        rho = rho.max(g_bar.abs());
        rho_prime = rho_prime.max((gamma * spec.eta_over_l(t)).abs());
        samples.push(t);
    }
    for t in samples {
        let lambda = spec.hazard(t);
        let diag = 1.0 + diagonal_scale * lambda - gamma * spec.weight_m(t);
        c1 = c1.min(diag);
        d1 = d1.max(diag);
        c0 = c0.max(lambda + 3.0 * rho - k + rho_prime);
        d0 = d0.max(k - lambda + 3.0 * rho + rho_prime);
    }
    if c1 < 0.0 {
        return Err(Error::AssumptionViolated { min_value: c1, at: f64::NAN });
    }
    Ok(BoundsReport {
        c0,
        c1,
        d0,
        d1,
        rho,
        rho_prime,
        horizon,
        gamma,
        terminal: spec.terminal_weight(),
    })
}

/// `A(t_n)` recomputed by the trapezoid rule on the grid's own `a` values.
pub fn big_a_by_trapezoid(spec: &ModelSpec, grid: &SolutionGrid) -> Vec<f64> {
    let gamma = spec.gamma();
    let e = 1.0 / (gamma - 1.0);
    let f: Vec<f64> = grid
        .times
        .iter()
        .zip(&grid.a_values)
        .map(|(&t, &a)| gamma * a.powf(e) * spec.weight_m(t))
        .collect();
    let h = -grid.epsilon;
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(1.0);
    for n in 1..f.len() {
        acc += 0.5 * h * (f[n - 1] + f[n]);
        out.push(acc.exp());
    }
    out
}
