//! Run configuration: a TOML file with one table per model component.
//!
//! ```toml
//! [model]
//! horizon = 4.0
//!
//! [market]
//! r = 0.05
//! alpha = 0.12        # or `mu`, the excess return
//! sigma = 0.2
//!
//! [discount]
//! family = "hyperbolic"
//! k1 = 5.0
//! h1_target = 0.3
//! ```
//!
//! Unknown keys are rejected. Every error carries the line it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcpolicy_core::closed_form::StationaryParams;
use tcpolicy_core::{
    DiscountKernel, InsuranceIncomeSpec, MarketParams, ModelSpec, MortalityModel, ParetoWeight, PayoutRatio,
    PreferenceParams, Scheme, SimConfig, TimeFunction,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub market: MarketSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mortality: Option<MortalitySection>,
    pub discount: DiscountSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bequest_discount: Option<DiscountSection>,
    pub preferences: PreferencesSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insurance: Option<InsuranceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationarySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MortalitySection {
    pub lambda0: f64,
    #[serde(default)]
    pub lambda1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencesSection {
    pub gamma: f64,
    #[serde(default = "one")]
    pub terminal_weight: f64,
    /// `"constant"` (with `pareto_m`) or `"log_taper"` (with `pareto_eps`).
    #[serde(default = "constant_family")]
    pub pareto: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pareto_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pareto_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsuranceSection {
    /// `"constant"` (with `l`), `"inverse_hazard"` or `"none"`.
    pub payout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default = "one")]
    pub eta0: f64,
    #[serde(default)]
    pub eta1: f64,
    #[serde(default)]
    pub income0: f64,
    #[serde(default)]
    pub income1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_steps")]
    pub n: usize,
    /// Coarse sizes for `converge`; each is compared with twice its size.
    #[serde(default = "default_converge")]
    pub converge: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    #[serde(default = "exact_y")]
    pub scheme: String,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySection {
    pub lambda: f64,
    pub r1: f64,
    pub r2: f64,
    #[serde(default = "one")]
    pub m: f64,
    pub l: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "yes")]
    pub svg: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn constant_family() -> String {
    "constant".into()
}

fn exact_y() -> String {
    "exact_y".into()
}

fn default_steps() -> usize {
    1000
}

fn default_converge() -> Vec<usize> {
    vec![125, 250, 500]
}

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key` inside `[section]`, or of the section header when
/// `key` is empty.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header_line = Some(idx + 1);
            }
            continue;
        }
        if current != section || key.is_empty() {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim() == key {
                return Some(idx + 1);
            }
        }
    }
    header_line
}

/// Parsed configuration together with its source, for diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    source: String,
}

impl LoadedConfig {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|span| source.as_bytes()[..span.start.min(source.len())].iter().filter(|&&c| c == b'\n').count() + 1);
            ConfigError {
                key: "config".into(),
                line,
                message: e.message().to_string(),
            }
        })?;
        Ok(Self {
            config,
            source: source.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: path.display().to_string(),
            line: None,
            message: e.to_string(),
        })?;
        Self::parse(&source)
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            key: if key.is_empty() { section.to_string() } else { format!("{section}.{key}") },
            line: locate(&self.source, section, key),
            message: message.into(),
        }
    }

    fn require(&self, section: &str, key: &str, value: Option<f64>) -> Result<f64, ConfigError> {
        value.ok_or_else(|| self.error(section, key, "missing key"))
    }

    fn reject_extra(&self, section: &str, family: &str, present: &[(&str, bool)], allowed: &[&str]) -> Result<(), ConfigError> {
        for (key, set) in present {
            if *set && !allowed.contains(key) {
                return Err(self.error(section, key, format!("not a parameter of family \"{family}\"")));
            }
        }
        Ok(())
    }

    fn discount(&self, section: &str, d: &DiscountSection) -> Result<DiscountKernel, ConfigError> {
        let present = [
            ("rho", d.rho.is_some()),
            ("k1", d.k1.is_some()),
            ("k2", d.k2.is_some()),
            ("h1_target", d.h1_target.is_some()),
            ("weight", d.weight.is_some()),
            ("r1", d.r1.is_some()),
            ("r2", d.r2.is_some()),
            ("coef", d.coef.is_some()),
            ("rate", d.rate.is_some()),
        ];
        let kernel = match d.family.as_str() {
            "exponential" => {
                self.reject_extra(section, &d.family, &present, &["rho"])?;
                DiscountKernel::Exponential { rho: self.require(section, "rho", d.rho)? }
            }
            "hyperbolic" => {
                self.reject_extra(section, &d.family, &present, &["k1", "k2", "h1_target"])?;
                let k1 = self.require(section, "k1", d.k1)?;
                match (d.k2, d.h1_target) {
                    (Some(k2), None) => DiscountKernel::Hyperbolic { k1, k2 },
                    (None, Some(h1)) => DiscountKernel::hyperbolic_with_target(k1, h1)
                        .map_err(|e| self.error(section, "h1_target", e.to_string()))?,
                    _ => return Err(self.error(section, "k2", "give exactly one of k2 and h1_target")),
                }
            }
            "sum_of_exponentials" => {
                self.reject_extra(section, &d.family, &present, &["weight", "r1", "r2"])?;
                DiscountKernel::SumOfExponentials {
                    weight: self.require(section, "weight", d.weight)?,
                    r1: self.require(section, "r1", d.r1)?,
                    r2: self.require(section, "r2", d.r2)?,
                }
            }
            "affine_exponential" => {
                self.reject_extra(section, &d.family, &present, &["coef", "rate"])?;
                DiscountKernel::AffineExponential {
                    coef: self.require(section, "coef", d.coef)?,
                    rate: self.require(section, "rate", d.rate)?,
                }
            }
            other => {
                return Err(self.error(
                    section,
                    "family",
                    format!("unknown family \"{other}\" (exponential, hyperbolic, sum_of_exponentials, affine_exponential)"),
                ))
            }
        };
        kernel.validate().map_err(|e| self.error(section, "family", e.to_string()))?;
        Ok(kernel)
    }

    /// Builds and validates the model instance.
    pub fn model(&self) -> Result<ModelSpec, ConfigError> {
        let c = &self.config;
        let m = &c.market;
        let market = match (m.alpha, m.mu) {
            (Some(alpha), None) => MarketParams::new(m.r, alpha, m.sigma),
            (None, Some(mu)) => MarketParams::with_excess_return(m.r, mu, m.sigma),
            _ => return Err(self.error("market", "alpha", "give exactly one of alpha and mu")),
        }
        .map_err(|e| self.error("market", "", e.to_string()))?;

        let mortality = match &c.mortality {
            None => MortalityModel::none(),
            Some(s) if s.lambda1 == 0.0 => MortalityModel::Constant { lambda0: s.lambda0 },
            Some(s) => MortalityModel::Affine {
                lambda0: s.lambda0,
                lambda1: s.lambda1,
            },
        };
        let discount = self.discount("discount", &c.discount)?;
        let bequest_discount = match &c.bequest_discount {
            Some(d) => self.discount("bequest_discount", d)?,
            None => discount,
        };

        let p = &c.preferences;
        let pareto = match p.pareto.as_str() {
            "constant" => {
                if p.pareto_eps.is_some() {
                    return Err(self.error("preferences", "pareto_eps", "only used with pareto = \"log_taper\""));
                }
                ParetoWeight::Constant(p.pareto_m.unwrap_or(1.0))
            }
            "log_taper" => {
                if p.pareto_m.is_some() {
                    return Err(self.error("preferences", "pareto_m", "only used with pareto = \"constant\""));
                }
                ParetoWeight::LogTaper {
                    eps: self.require("preferences", "pareto_eps", p.pareto_eps)?,
                }
            }
            other => {
                return Err(self.error(
                    "preferences",
                    "pareto",
                    format!("unknown Pareto weight \"{other}\" (constant, log_taper)"),
                ))
            }
        };
        let prefs = PreferenceParams::new(p.gamma, p.terminal_weight, pareto, bequest_discount);

        let insurance = match &c.insurance {
            None => InsuranceIncomeSpec::uninsured(),
            Some(s) => {
                let payout = match s.payout.as_str() {
                    "constant" => PayoutRatio::Constant(self.require("insurance", "l", s.l)?),
                    "inverse_hazard" | "none" if s.l.is_some() => {
                        return Err(self.error("insurance", "l", format!("not used with payout = \"{}\"", s.payout)))
                    }
                    "inverse_hazard" => PayoutRatio::InverseHazard,
                    "none" => PayoutRatio::Unavailable,
                    other => {
                        return Err(self.error(
                            "insurance",
                            "payout",
                            format!("unknown payout \"{other}\" (constant, inverse_hazard, none)"),
                        ))
                    }
                };
                let affine = |c0: f64, c1: f64| {
                    if c1 == 0.0 {
                        TimeFunction::Constant(c0)
                    } else {
                        TimeFunction::Affine { c0, c1 }
                    }
                };
                InsuranceIncomeSpec::new(payout, affine(s.eta0, s.eta1), affine(s.income0, s.income1))
            }
        };

        ModelSpec::new(c.model.horizon, market, mortality, discount, prefs, insurance).map_err(|e| {
            let (section, key) = section_of(&e);
            self.error(section, key, e.to_string())
        })
    }

    pub fn steps(&self) -> usize {
        self.config.grid.as_ref().map_or_else(default_steps, |g| g.n)
    }

    pub fn converge_sizes(&self) -> Vec<usize> {
        self.config.grid.as_ref().map_or_else(default_converge, |g| g.converge.clone())
    }

    /// Simulation settings with the starting point `(t0, x0)`.
    pub fn simulation(&self) -> Result<(SimConfig, f64, f64), ConfigError> {
        let mc = self
            .config
            .mc
            .as_ref()
            .ok_or_else(|| self.error("mc", "", "section [mc] is required for simulate"))?;
        let scheme = match mc.scheme.as_str() {
            "exact_y" => Scheme::ExactY,
            "euler_maruyama" => Scheme::EulerMaruyama,
            other => {
                return Err(self.error("mc", "scheme", format!("unknown scheme \"{other}\" (exact_y, euler_maruyama)")))
            }
        };
        let cfg = SimConfig::new(mc.paths, mc.seed, mc.dt, scheme);
        cfg.validate(self.config.model.horizon)
            .map_err(|e| self.error("mc", "", e.to_string()))?;
        Ok((cfg, mc.t0, mc.x0))
    }

    /// Constant-coefficient parameters; gamma and the market come from the
    /// shared sections.
    pub fn stationary(&self) -> Result<StationaryParams, ConfigError> {
        let s = self
            .config
            .stationary
            .as_ref()
            .ok_or_else(|| self.error("stationary", "", "section [stationary] is required for stationary"))?;
        let m = &self.config.market;
        let market = match (m.alpha, m.mu) {
            (Some(alpha), None) => MarketParams::new(m.r, alpha, m.sigma),
            (None, Some(mu)) => MarketParams::with_excess_return(m.r, mu, m.sigma),
            _ => return Err(self.error("market", "alpha", "give exactly one of alpha and mu")),
        }
        .map_err(|e| self.error("market", "", e.to_string()))?;
        let params = StationaryParams {
            lambda: s.lambda,
            r1: s.r1,
            r2: s.r2,
            m: s.m,
            l: s.l,
            eta: s.eta,
            i: s.i,
            gamma: self.config.preferences.gamma,
            market,
        };
        params.validate().map_err(|e| self.error("stationary", "", e.to_string()))?;
        Ok(params)
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.config.output.as_ref().and_then(|o| o.directory.clone())
    }

    pub fn emit_svg(&self) -> bool {
        self.config.output.as_ref().map_or(true, |o| o.svg)
    }
}

/// Section and key most likely responsible for a model-construction error.
fn section_of(e: &tcpolicy_core::Error) -> (&'static str, &'static str) {
    use tcpolicy_core::Error;
    match e {
        Error::InvalidModel { invariant, .. } => {
            let inv = *invariant;
            if inv.contains("horizon") || inv.starts_with("T ") {
                ("model", "horizon")
            } else if inv.contains("payout") {
                ("insurance", "l")
            } else if inv.contains("eta(") {
                ("insurance", "eta0")
            } else if inv.contains("income") {
                ("insurance", "income0")
            } else if inv.contains("insurance") {
                ("insurance", "payout")
            } else if inv.contains("hazard") {
                ("mortality", "lambda0")
            } else if inv.contains("gamma") {
                ("preferences", "gamma")
            } else if inv.contains("terminal") {
                ("preferences", "terminal_weight")
            } else if inv.contains("Pareto") {
                ("preferences", "pareto_m")
            } else if inv.contains("log-taper") {
                ("preferences", "pareto_eps")
            } else {
                ("model", "")
            }
        }
        _ => ("model", ""),
    }
}

/// TOML text of a configuration; parsing it again yields the same model.
pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("configuration is always serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"[model]
horizon = 4.0

[market]
r = 0.05
alpha = 0.12
sigma = 0.2

[discount]
family = "hyperbolic"
k1 = 5.0
h1_target = 0.3

[preferences]
gamma = -1.0
"#;

    fn err(text: &str) -> ConfigError {
        LoadedConfig::parse(text).and_then(|c| c.model()).unwrap_err()
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = LoadedConfig::parse(BASE).unwrap();
        let spec = c.model().unwrap();
        assert_eq!(spec.terminal_weight(), 1.0);
        assert!(spec.mortality().is_zero());
        assert_eq!(c.steps(), 1000);
        assert_eq!(c.converge_sizes(), vec![125, 250, 500]);
        assert!(c.emit_svg());
        assert_eq!(c.output_dir(), None);
    }

    #[test]
    fn hyperbolic_target_solves_k2() {
        let spec = LoadedConfig::parse(BASE).unwrap().model().unwrap();
        assert!((spec.discount().value(1.0).unwrap() - 0.3).abs() < 1e-14);
        assert_eq!(spec.prefs().bequest_discount, *spec.discount());
    }

    #[test]
    fn foreign_family_parameter_is_refused() {
        let e = err(&BASE.replace("k1 = 5.0", "k1 = 5.0\nrho = 0.1"));
        assert_eq!(e.key, "discount.rho");
        assert_eq!(e.line, Some(12));
    }

    #[test]
    fn k2_and_target_are_exclusive() {
        let e = err(&BASE.replace("k1 = 5.0", "k1 = 5.0\nk2 = 3.0"));
        assert!(e.message.contains("exactly one"));
    }

    #[test]
    fn alpha_and_mu_are_exclusive() {
        let e = err(&BASE.replace("alpha = 0.12", "alpha = 0.12\nmu = 0.07"));
        assert_eq!(e.key, "market.alpha");
        assert_eq!(e.line, Some(6));
    }

    #[test]
    fn unknown_family_lists_the_choices() {
        let e = err(&BASE.replace("\"hyperbolic\"", "\"quasi\""));
        assert!(e.message.contains("sum_of_exponentials"));
        assert_eq!(e.line, Some(10));
    }

    #[test]
    fn taper_parameters_do_not_mix() {
        let e = err(&BASE.replace("gamma = -1.0", "gamma = -1.0\npareto_eps = 1e-15"));
        assert_eq!(e.key, "preferences.pareto_eps");
    }

    #[test]
    fn syntax_error_has_a_line() {
        let e = LoadedConfig::parse("[model]\nhorizon = = 4\n").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn missing_sections_are_reported_for_their_commands() {
        let c = LoadedConfig::parse(BASE).unwrap();
        assert!(c.simulation().unwrap_err().message.contains("[mc]"));
        assert!(c.stationary().unwrap_err().message.contains("[stationary]"));
    }

    #[test]
    fn simulation_settings_are_validated() {
        let text = format!("{BASE}\n[mc]\npaths = 10\nseed = 3\ndt = 1.0\n");
        let e = LoadedConfig::parse(&text).unwrap().simulation().unwrap_err();
        assert!(e.message.contains("dt <= T/10"));
        let text = format!("{BASE}\n[mc]\npaths = 10\nseed = 3\ndt = 0.1\nscheme = \"milstein\"\n");
        let e = LoadedConfig::parse(&text).unwrap().simulation().unwrap_err();
        assert_eq!(e.key, "mc.scheme");
    }

    #[test]
    fn error_display_carries_line_and_key() {
        let e = ConfigError {
            key: "market.r".into(),
            line: Some(5),
            message: "bad".into(),
        };
        assert_eq!(e.to_string(), "line 5: market.r: bad");
    }
}
