//! Monte Carlo simulation of equilibrium wealth and of the reward functional.
//!
//! Every path owns a ChaCha8 stream selected by its index, so a path's draws
//! do not depend on which thread runs it. Per-path results are collected in
//! path order and reduced sequentially, which makes every estimate
//! bit-identical for any size of the rayon pool.
//!
//! Draw order within a path: one standard normal per time step, then the
//! uniform for the death time, then one normal for the Brownian bridge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::policy::{self, PolicyTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact Gaussian increments of `log(X + b)`.
    ExactY,
    /// Euler-Maruyama on the wealth equation itself.
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(paths: usize, seed: u64, dt: f64, scheme: Scheme) -> Self {
        Self { paths, seed, dt, scheme }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::invalid("paths >= 1", "paths = 0"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt > 0", format!("dt = {}", self.dt)));
        }
        if self.dt > horizon / 10.0 {
            return Err(Error::invalid("dt <= T/10", format!("dt = {}, T = {horizon}", self.dt)));
        }
        Ok(())
    }
}

/// Sample mean and its standard error over the accepted paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub mean: f64,
    pub std_error: f64,
    pub paths_used: usize,
    /// Euler paths dropped because `X + b` left `(0, inf)`.
    pub rejected: usize,
}

impl EstimateReport {
    fn from_samples(samples: &[Option<f64>]) -> Self {
        let accepted: Vec<f64> = samples.iter().flatten().copied().collect();
        let n = accepted.len();
        let rejected = samples.len() - n;
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                paths_used: 0,
                rejected,
            };
        }
        let mean = accepted.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = accepted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            paths_used: n,
            rejected,
        }
    }

    /// More than 1% of the paths were rejected.
    pub fn rejection_warning(&self) -> bool {
        self.rejected * 100 > self.rejected + self.paths_used
    }
}

/// Simulated wealth paths `X(s)` on the simulation grid. Rejected paths
/// are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    pub rejected: usize,
}

impl PathEnsemble {
    /// Mean and standard error of `X` at grid index `k`.
    pub fn mean_at(&self, k: usize) -> EstimateReport {
        let samples: Vec<Option<f64>> = self.paths.iter().map(|p| Some(p[k])).collect();
        let mut report = EstimateReport::from_samples(&samples);
        report.rejected = self.rejected;
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub v_value: f64,
    pub j_estimate: EstimateReport,
    pub z_score: f64,
}

impl FixedPointReport {
    pub fn passes(&self) -> bool {
        self.z_score.abs() <= 3.0
    }
}

/// Deterministic ingredients of one simulation, tabulated on its grid.
struct Plan<'a> {
    spec: &'a ModelSpec,
    scheme: Scheme,
    times: Vec<f64>,
    dt: f64,
    t0: f64,
    x0: f64,
    y0: f64,
    vol: f64,
    // int_{t0}^{s_k} of the drift of log Y (Ito-corrected)
    log_drift: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    phi: Vec<f64>,
    psi: Vec<f64>,
    big_q: Vec<f64>,
    small_q: Vec<f64>,
    // (Q phi^gamma + q psi^gamma) / gamma, so the CRRA kernel integrand is Y^gamma times this
    crra_coef: Vec<f64>,
    discount: Vec<f64>,
}

impl<'a> Plan<'a> {
    fn new(spec: &'a ModelSpec, a_curve: &Curve, b_curve: &Curve, t0: f64, x0: f64, cfg: &SimConfig) -> Result<Self> {
        let horizon = spec.horizon();
        cfg.validate(horizon)?;
        if !(t0 >= 0.0 && t0 < horizon) {
            return Err(Error::domain(format!("t0 = {t0} outside [0, {horizon})")));
        }
        for (name, c) in [("a", a_curve), ("b", b_curve)] {
            if c.start() > t0 || c.end() < horizon {
                return Err(Error::domain(format!(
                    "{name} curve covers [{}, {}], need [{t0}, {horizon}]",
                    c.start(),
                    c.end()
                )));
            }
        }
        let y0 = x0 + b_curve.at(t0);
        if !(y0 > 0.0) {
            return Err(Error::domain(format!(
                "wealth below human-capital floor: x0 + b(t0) = {y0} <= 0"
            )));
        }
        let steps = (((horizon - t0) / cfg.dt).round() as usize).max(1);
        let dt = (horizon - t0) / steps as f64;
        let times: Vec<f64> = (0..=steps)
            .map(|k| if k == steps { horizon } else { t0 + dt * k as f64 })
            .collect();

        let gamma = spec.gamma();
        let market = spec.market();
        let vol = market.mu() / (market.sigma() * (1.0 - gamma));
        let a: Vec<f64> = times.iter().map(|&s| a_curve.at(s)).collect();
        if let Some(k) = a.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::domain(format!("a({}) = {} is not positive", times[k], a[k])));
        }
        let b: Vec<f64> = times.iter().map(|&s| b_curve.at(s)).collect();
        let phi: Vec<f64> = a
            .iter()
            .map(|&v| if gamma == 0.0 { 1.0 / v } else { v.powf(1.0 / (gamma - 1.0)) })
            .collect();
        let psi: Vec<f64> = a.iter().map(|&v| policy::legacy_rate(spec, v)).collect();

        let base = market.r() + market.mu() * market.mu() / (market.sigma() * market.sigma() * (1.0 - gamma))
            - 0.5 * vol * vol;
        let drift: Vec<f64> = times
            .iter()
            .zip(&phi)
            .map(|(&s, &f)| base + spec.eta_over_l(s) - f * spec.weight_m(s))
            .collect();
        let mut log_drift = Vec::with_capacity(times.len());
        log_drift.push(0.0);
        for k in 1..times.len() {
            log_drift.push(log_drift[k - 1] + 0.5 * dt * (drift[k - 1] + drift[k]));
        }

        let big_q: Vec<f64> = times.iter().map(|&s| spec.big_q_at(s, t0)).collect();
        let small_q: Vec<f64> = times.iter().map(|&s| spec.small_q_at(s, t0)).collect();
        let crra_coef = (0..times.len())
            .map(|k| {
                if gamma == 0.0 {
                    f64::NAN
                } else {
                    (big_q[k] * phi[k].powf(gamma) + small_q[k] * psi[k].powf(gamma)) / gamma
                }
            })
            .collect();
        let discount = times.iter().map(|&s| spec.discount().at(s - t0)).collect();

        Ok(Self {
            spec,
            scheme: cfg.scheme,
            times,
            dt,
            t0,
            x0,
            y0,
            vol,
            log_drift,
            a,
            b,
            phi,
            psi,
            big_q,
            small_q,
            crra_coef,
            discount,
        })
    }

    fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Fills `y` with `X + b` on the grid. Returns `false` for a rejected
    /// Euler path.
    fn fill(&self, rng: &mut ChaCha8Rng, y: &mut Vec<f64>) -> bool {
        y.clear();
        let sqrt_dt = self.dt.sqrt();
        match self.scheme {
            Scheme::ExactY => {
                let ln_y0 = self.y0.ln();
                let mut w = 0.0;
                y.push(self.y0);
                for k in 1..self.times.len() {
                    let z: f64 = rng.sample(StandardNormal);
                    w += sqrt_dt * z;
                    y.push((ln_y0 + self.log_drift[k] + self.vol * w).exp());
                }
                true
            }
            Scheme::EulerMaruyama => {
                let market = self.spec.market();
                let mut x = self.x0;
                let mut ok = true;
                y.push(self.y0);
                for k in 0..self.steps() {
                    let z: f64 = rng.sample(StandardNormal);
                    if !ok {
                        continue;
                    }
                    let s = self.times[k];
                    let p = policy::triple_from(self.spec, self.a[k], self.b[k], s, x);
                    x += (market.r() * x + market.mu() * p.stock_amount + self.spec.income(s)
                        - p.consumption
                        - p.insurance_premium)
                        * self.dt
                        + market.sigma() * p.stock_amount * sqrt_dt * z;
                    let yk = x + self.b[k + 1];
                    if !(yk > 0.0) {
                        ok = false;
                    }
                    y.push(yk);
                }
                ok
            }
        }
    }

    /// CRRA utility, logarithmic for `gamma = 0`.
    fn utility(&self, c: f64) -> f64 {
        let g = self.spec.gamma();
        if g == 0.0 {
            c.ln()
        } else {
            c.powf(g) / g
        }
    }

    fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        rng
    }

    fn run<T, F>(&self, cfg: &SimConfig, per_path: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng, &[f64], bool) -> T + Sync,
    {
        (0..cfg.paths)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(self.times.len()),
                |buf, i| {
                    let mut rng = Self::path_rng(cfg.seed, i);
                    let ok = self.fill(&mut rng, buf);
                    per_path(&mut rng, buf, ok)
                },
            )
            .collect()
    }

    /// Kernel form of the reward along one path:
    /// `int Q U(c) + int q U(Z) + n Q(T) U(X(T))`, trapezoid in `s`.
    /// `None` selects the model's own utility.
    fn kernel_reward(&self, y: &[f64], utility: Option<&dyn Fn(f64) -> f64>) -> f64 {
        let spec = self.spec;
        let n = self.steps();
        let gamma = spec.gamma();
        let f = |k: usize| match utility {
            None if gamma != 0.0 => self.crra_coef[k] * y[k].powf(gamma),
            _ => {
                let u = |c: f64| utility.map_or_else(|| self.utility(c), |f| f(c));
                let mut v = self.big_q[k] * u(self.phi[k] * y[k]);
                if self.small_q[k] != 0.0 {
                    v += self.small_q[k] * u(self.psi[k] * y[k]);
                }
                v
            }
        };
        let mut acc = 0.5 * (f(0) + f(n));
        for k in 1..n {
            acc += f(k);
        }
        let terminal = y[n] - self.b[n];
        let u_terminal = utility.map_or_else(|| self.utility(terminal), |f| f(terminal));
        acc * self.dt + spec.terminal_weight() * self.big_q[n] * u_terminal
    }

    /// Mortality form of the reward: consumption utility up to `T ^ tau`,
    /// the bequest at `tau <= T` or the terminal reward otherwise.
    fn mortality_reward(&self, rng: &mut ChaCha8Rng, y: &[f64]) -> f64 {
        let spec = self.spec;
        let horizon = spec.horizon();
        let n = self.steps();
        let u: f64 = rng.random();
        let bridge: f64 = rng.sample(StandardNormal);
        let exposure = -(-u).ln_1p();
        let tau = spec.mortality().death_time(self.t0, exposure, horizon);

        let h = |s: f64| spec.discount().at(s - self.t0);
        let f = |k: usize| self.discount[k] * self.utility(self.phi[k] * y[k]);
        let (last, tail) = match tau {
            None => (n, 0.0),
            Some(t) => ((((t - self.t0) / self.dt).floor() as usize).min(n - 1), t),
        };
        let mut acc = 0.0;
        for k in 0..last {
            acc += 0.5 * self.dt * (f(k) + f(k + 1));
        }
        match tau {
            None => {
                acc + spec.terminal_weight() * self.discount[n] * self.utility(y[n] - self.b[n])
            }
            Some(_) => {
                let (s0, s1) = (self.times[last], self.times[last + 1]);
                let w = ((tail - s0) / (s1 - s0)).clamp(0.0, 1.0);
                let (l0, l1) = (y[last].ln(), y[last + 1].ln());
                let sd = self.vol * ((tail - s0) * (s1 - tail) / (s1 - s0)).max(0.0).sqrt();
                let y_tau = (l0 + w * (l1 - l0) + sd * bridge).exp();
                let a_tau = self.a[last] + w * (self.a[last + 1] - self.a[last]);
                let phi = policy::consumption_rate_of(a_tau, spec.gamma());
                let psi = policy::legacy_rate(spec, a_tau);
                let lag = tail - self.t0;
                acc += 0.5 * (tail - s0) * (f(last) + h(tail) * self.utility(phi * y_tau));
                let weight = spec.pareto_weight(lag) * spec.prefs().bequest_discount.at(lag);
                acc + weight * self.utility(psi * y_tau)
            }
        }
    }
}

/// Wealth paths `X(s)` for `s` on the grid of step `dt` from `t0` to `T`.
pub fn simulate_wealth(
    spec: &ModelSpec,
    a_curve: &Curve,
    b_curve: &Curve,
    t0: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    let plan = Plan::new(spec, a_curve, b_curve, t0, x0, cfg)?;
    let raw = plan.run(cfg, |_, y, ok| {
        ok.then(|| y.iter().zip(&plan.b).map(|(yk, bk)| yk - bk).collect::<Vec<f64>>())
    });
    let rejected = raw.iter().filter(|p| p.is_none()).count();
    Ok(PathEnsemble {
        times: plan.times.clone(),
        paths: raw.into_iter().flatten().collect(),
        rejected,
    })
}

/// Mean terminal wealth `X(T)`.
pub fn terminal_wealth(
    spec: &ModelSpec,
    a_curve: &Curve,
    b_curve: &Curve,
    t0: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<EstimateReport> {
    let plan = Plan::new(spec, a_curve, b_curve, t0, x0, cfg)?;
    let n = plan.steps();
    let b_end = plan.b[n];
    let samples = plan.run(cfg, |_, y, ok| ok.then(|| y[n] - b_end));
    Ok(EstimateReport::from_samples(&samples))
}

/// Euler-Maruyama paths of the wealth equation under an arbitrary feedback
/// policy `(t, x) -> triple`. Income is taken from `spec`; no paths are
/// rejected.
pub fn simulate_with_policy<P>(spec: &ModelSpec, policy: P, t0: f64, x0: f64, cfg: &SimConfig) -> Result<PathEnsemble>
where
    P: Fn(f64, f64) -> PolicyTriple + Sync,
{
    let horizon = spec.horizon();
    cfg.validate(horizon)?;
    if !(t0 >= 0.0 && t0 < horizon) {
        return Err(Error::domain(format!("t0 = {t0} outside [0, {horizon})")));
    }
    let steps = (((horizon - t0) / cfg.dt).round() as usize).max(1);
    let dt = (horizon - t0) / steps as f64;
    let times: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { horizon } else { t0 + dt * k as f64 })
        .collect();
    let market = spec.market();
    let paths: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = Plan::path_rng(cfg.seed, i);
            let mut x = x0;
            let mut path = Vec::with_capacity(times.len());
            path.push(x);
            for &s in &times[..steps] {
                let z: f64 = rng.sample(StandardNormal);
                let p = policy(s, x);
                x += (market.r() * x + market.mu() * p.stock_amount + spec.income(s) - p.consumption - p.insurance_premium)
                    * dt
                    + market.sigma() * p.stock_amount * dt.sqrt() * z;
                path.push(x);
            }
            path
        })
        .collect();
    Ok(PathEnsemble {
        times,
        paths,
        rejected: 0,
    })
}

/// Reward estimated through the kernels `Q` and `q` (no death time drawn).
pub fn estimate_j_kernel(
    spec: &ModelSpec,
    a_curve: &Curve,
    b_curve: &Curve,
    t0: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<EstimateReport> {
    let plan = Plan::new(spec, a_curve, b_curve, t0, x0, cfg)?;
    let samples = plan.run(cfg, |_, y, ok| ok.then(|| plan.kernel_reward(y, None)));
    Ok(EstimateReport::from_samples(&samples))
}

/// Kernel estimator with a caller-supplied utility, e.g. a constant to
/// isolate the quadrature.
pub fn estimate_j_kernel_with_utility<U>(
    spec: &ModelSpec,
    a_curve: &Curve,
    b_curve: &Curve,
    t0: f64,
    x0: f64,
    cfg: &SimConfig,
    utility: U,
) -> Result<EstimateReport>
where
    U: Fn(f64) -> f64 + Sync,
{
    let plan = Plan::new(spec, a_curve, b_curve, t0, x0, cfg)?;
    let samples = plan.run(cfg, |_, y, ok| ok.then(|| plan.kernel_reward(y, Some(&utility))));
    Ok(EstimateReport::from_samples(&samples))
}

/// Reward estimated by sampling the death time from the hazard, conditional
/// on survival to `t0`.
pub fn estimate_j_mortality(
    spec: &ModelSpec,
    a_curve: &Curve,
    b_curve: &Curve,
    t0: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<EstimateReport> {
    let plan = Plan::new(spec, a_curve, b_curve, t0, x0, cfg)?;
    let samples = plan.run(cfg, |rng, y, ok| {
        let v = plan.mortality_reward(rng, y);
        ok.then_some(v)
    });
    Ok(EstimateReport::from_samples(&samples))
}

/// Draws `T ^ tau` with the same streams as [`estimate_j_mortality`]; `tau`
/// is capped at `T` when death falls after the horizon.
pub fn sample_death_times(spec: &ModelSpec, t0: f64, paths: usize, seed: u64, steps: usize) -> Vec<f64> {
    let horizon = spec.horizon();
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = Plan::path_rng(seed, i);
            for _ in 0..steps {
                let _: f64 = rng.sample(StandardNormal);
            }
            let u: f64 = rng.random();
            let exposure = -(-u).ln_1p();
            spec.mortality().death_time(t0, exposure, horizon).unwrap_or(horizon)
        })
        .collect()
}

/// Compares `v(t0, x0)` with the kernel estimate of the reward under the
/// equilibrium policy.
pub fn verify_fixed_point(
    spec: &ModelSpec,
    a_curve: &Curve,
    b_curve: &Curve,
    t0: f64,
    x0: f64,
    cfg: &SimConfig,
) -> Result<FixedPointReport> {
    let v_value = policy::value_function(a_curve, b_curve, spec.gamma(), t0, x0)?;
    if !policy::value_is_complete(spec.gamma()) {
        return Err(Error::Unsupported(
            "the logarithmic value function is known only up to an additive d(t)".into(),
        ));
    }
    let j_estimate = estimate_j_kernel(spec, a_curve, b_curve, t0, x0, cfg)?;
    Ok(FixedPointReport {
        v_value,
        j_estimate,
        z_score: (j_estimate.mean - v_value) / j_estimate.std_error,
    })
}
