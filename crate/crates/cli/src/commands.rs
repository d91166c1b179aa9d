//! The six experiments behind the `tcpolicy` subcommands.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use thiserror::Error;

use tcpolicy_core::closed_form::{self, solve_b};
use tcpolicy_core::ie_solver::convergence_report;
use tcpolicy_core::policy::{consumption_rate, find_satiation, insurance_coefficients};
use tcpolicy_core::simulate::verify_fixed_point;
use tcpolicy_core::{solve_a, Curve, ModelSpec};

use crate::config::{ConfigError, LoadedConfig};
use crate::output::{emit_csv, emit_svg_plot, OutputError, Series, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// a(t), A(t) and b(t) on the solver grid
    Solve,
    /// Feedback coefficients on the solver grid
    Policies,
    /// Monte Carlo check that v(t0, x0) equals the reward of the equilibrium
    Simulate,
    /// Constant-coefficient closed form
    Stationary,
    /// Max-norm errors for N and 2N
    Converge,
    /// Consumption-rate curve and its satiation time
    Hump,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Model(#[from] tcpolicy_core::Error),
    #[error("{0}")]
    Output(#[from] OutputError),
}

impl RunError {
    /// 2 for refusals of the input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use tcpolicy_core::Error as E;
        match self {
            RunError::Config(_) => 2,
            RunError::Model(E::SchemeBreakdown { .. }) => 1,
            RunError::Model(_) => 2,
            RunError::Output(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub no_svg: bool,
}

/// Files written and lines meant for standard output.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub messages: Vec<String>,
}

struct Sink {
    dir: PathBuf,
    svg: bool,
    outcome: Outcome,
}

impl Sink {
    fn csv(&mut self, name: &str, table: &Table) -> Result<(), RunError> {
        let path = self.dir.join(name);
        emit_csv(table, &path)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn svg(&mut self, name: &str, series: &[Series], title: &str, x_label: &str, y_label: &str) -> Result<(), RunError> {
        if !self.svg {
            return Ok(());
        }
        let path = self.dir.join(name);
        emit_svg_plot(series, title, x_label, y_label, &path)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn say(&mut self, line: String) {
        self.outcome.messages.push(line);
    }
}

/// `a` and `A` in increasing time on the `N + 1` uniform nodes. Log utility
/// has the explicit solution and `A = 1`.
fn a_on_grid(spec: &ModelSpec, steps: usize, times: &[f64]) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    if spec.gamma() == 0.0 {
        let a = times
            .iter()
            .map(|&t| closed_form::a_log(spec, t))
            .collect::<tcpolicy_core::Result<Vec<_>>>()?;
        return Ok((a, vec![1.0; times.len()]));
    }
    let grid = solve_a(spec, steps)?;
    let a = grid.a_values().iter().rev().copied().collect();
    let big_a = grid.big_a_values().iter().rev().copied().collect();
    Ok((a, big_a))
}

struct Solved {
    times: Vec<f64>,
    a: Vec<f64>,
    big_a: Vec<f64>,
    b: Curve,
}

impl Solved {
    fn new(spec: &ModelSpec, steps: usize) -> Result<Self, RunError> {
        let b = solve_b(spec, steps)?;
        let times = b.times().to_vec();
        let (a, big_a) = a_on_grid(spec, steps, &times)?;
        Ok(Self { times, a, big_a, b })
    }

    fn a_curve(&self) -> Curve {
        Curve::new(self.times.clone(), self.a.clone()).expect("grid times are increasing")
    }

    fn rates(&self, gamma: f64) -> Result<Vec<(f64, f64)>, RunError> {
        let curve = self.a_curve();
        Ok(self
            .times
            .iter()
            .map(|&t| consumption_rate(&curve, gamma, t).map(|c| (t, c)))
            .collect::<tcpolicy_core::Result<Vec<_>>>()?)
    }
}

pub fn run(command: Command, config_path: &Path, opts: &RunOptions) -> Result<Outcome, RunError> {
    let cfg = LoadedConfig::read(config_path)?;
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut sink = Sink {
        dir,
        svg: cfg.emit_svg() && !opts.no_svg,
        outcome: Outcome::default(),
    };
    match command {
        Command::Solve => solve(&cfg, &mut sink)?,
        Command::Policies => policies(&cfg, &mut sink)?,
        Command::Simulate => simulate(&cfg, &mut sink)?,
        Command::Stationary => stationary(&cfg, &mut sink)?,
        Command::Converge => converge(&cfg, &mut sink)?,
        Command::Hump => hump(&cfg, &mut sink)?,
    }
    Ok(sink.outcome)
}

fn solve(cfg: &LoadedConfig, sink: &mut Sink) -> Result<(), RunError> {
    let spec = cfg.model()?;
    let s = Solved::new(&spec, cfg.steps())?;
    let mut table = Table::new(&["t", "a", "A", "b"]);
    for (k, &t) in s.times.iter().enumerate() {
        table.push(vec![t.into(), s.a[k].into(), s.big_a[k].into(), s.b.values()[k].into()]);
    }
    sink.csv("solution.csv", &table)?;
    let series = [
        Series::new("a(t)", s.times.iter().copied().zip(s.a.iter().copied()).collect()),
        Series::new("b(t)", s.times.iter().copied().zip(s.b.values().iter().copied()).collect()),
    ];
    sink.svg("solution.svg", &series, "Equilibrium coefficients", "t", "value")?;
    sink.say(format!("a(0) = {}", s.a[0]));
    Ok(())
}

fn policies(cfg: &LoadedConfig, sink: &mut Sink) -> Result<(), RunError> {
    let spec = cfg.model()?;
    let s = Solved::new(&spec, cfg.steps())?;
    let rates = s.rates(spec.gamma())?;
    let merton = spec.market().merton_fraction(spec.gamma());
    let mut table = Table::new(&[
        "t",
        "consumption_rate",
        "merton_fraction",
        "insurance_x_coef",
        "insurance_b_coef",
    ]);
    for (k, &(t, rate)) in rates.iter().enumerate() {
        let (cx, cb) = insurance_coefficients(&spec, s.a[k], t);
        table.push(vec![t.into(), rate.into(), merton.into(), cx.into(), cb.into()]);
    }
    sink.csv("policies.csv", &table)?;
    sink.svg(
        "policies.svg",
        &[Series::new("c(t) / (x + b(t))", rates)],
        "Consumption rate",
        "t",
        "rate",
    )?;
    Ok(())
}

fn simulate(cfg: &LoadedConfig, sink: &mut Sink) -> Result<(), RunError> {
    let spec = cfg.model()?;
    let (sim, t0, x0) = cfg.simulation()?;
    let s = Solved::new(&spec, cfg.steps())?;
    let report = verify_fixed_point(&spec, &s.a_curve(), &s.b, t0, x0, &sim)?;
    let mut table = Table::new(&["t0", "x0", "v", "j_mean", "j_stderr", "z"]);
    table.push(vec![
        t0.into(),
        x0.into(),
        report.v_value.into(),
        report.j_estimate.mean.into(),
        report.j_estimate.std_error.into(),
        report.z_score.into(),
    ]);
    sink.csv("fixedpoint.csv", &table)?;
    sink.say(format!(
        "v = {}, J = {} +/- {}, z = {:.3} ({})",
        report.v_value,
        report.j_estimate.mean,
        report.j_estimate.std_error,
        report.z_score,
        if report.passes() { "consistent" } else { "inconsistent" }
    ));
    if report.j_estimate.rejection_warning() {
        sink.say(format!(
            "warning: {} of {} paths rejected",
            report.j_estimate.rejected,
            report.j_estimate.rejected + report.j_estimate.paths_used
        ));
    }
    Ok(())
}

fn stationary(cfg: &LoadedConfig, sink: &mut Sink) -> Result<(), RunError> {
    let params = cfg.stationary()?;
    let s = closed_form::solve_stationary(&params)?;
    let mut table = Table::new(&["a", "b", "x", "alpha1", "alpha2", "beta", "tc1", "tc2"]);
    table.push(vec![
        s.a.into(),
        s.b.into(),
        s.x.into(),
        s.alpha1.into(),
        s.alpha2.into(),
        s.beta.into(),
        s.tc1.into(),
        s.tc2.into(),
    ]);
    sink.csv("stationary.csv", &table)?;
    sink.say(format!("a = {}, x = {}", s.a, s.x));
    Ok(())
}

fn converge(cfg: &LoadedConfig, sink: &mut Sink) -> Result<(), RunError> {
    let spec = cfg.model()?;
    let mut table = Table::new(&["N", "err", "ratio"]);
    let mut points = Vec::new();
    for n in cfg.converge_sizes() {
        let r = convergence_report(&spec, n)?;
        table.push(vec![n.into(), r.err_coarse.into(), r.ratio.into()]);
        points.push(((n as f64).log10(), r.err_coarse.log10()));
        sink.say(format!(
            "N = {n}: err = {:.3e}, err(2N) = {:.3e}, ratio = {:.4} ({:?})",
            r.err_coarse, r.err_fine, r.ratio, r.reference
        ));
    }
    sink.csv("convergence.csv", &table)?;
    if points.len() >= 2 && points.iter().all(|p| p.1.is_finite()) {
        sink.svg(
            "convergence.svg",
            &[Series::new("max error", points)],
            "Convergence",
            "log10 N",
            "log10 error",
        )?;
    }
    Ok(())
}

fn hump(cfg: &LoadedConfig, sink: &mut Sink) -> Result<(), RunError> {
    let spec = cfg.model()?;
    let s = Solved::new(&spec, cfg.steps())?;
    let rates = s.rates(spec.gamma())?;
    let mut table = Table::new(&["t", "rate"]);
    for &(t, rate) in &rates {
        table.push(vec![t.into(), rate.into()]);
    }
    sink.csv("hump.csv", &table)?;
    sink.say(match find_satiation(&rates)? {
        Some(t) => format!("satiation time: {t}"),
        None => "satiation time: none".to_string(),
    });
    sink.svg(
        "hump.svg",
        &[Series::new("c(t) / (x + b(t))", rates)],
        "Consumption rate",
        "t",
        "rate",
    )?;
    Ok(())
}
