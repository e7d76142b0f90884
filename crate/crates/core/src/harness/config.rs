//! Experiment configuration: TOML (or JSON, by file extension) with four
//! sections plus an optional sequence block for `groenwall-check`.
//!
//! Every field is optional in the file. [`ExperimentConfig::resolve`] fills
//! the per-experiment defaults and validates everything the experiment will
//! read, so that no computation starts on a bad configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abstract_gd::SequenceParams;
use crate::activation::Activation;
use crate::deep::MAX_WIDTH_RATIO;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TrainShallow,
    TrainDeep,
    NtkEigen,
    NtkConcentration,
    NtkPerturbation,
    GroenwallCheck,
    RateSweep,
    GpTable,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::TrainShallow,
        ExperimentKind::TrainDeep,
        ExperimentKind::NtkEigen,
        ExperimentKind::NtkConcentration,
        ExperimentKind::NtkPerturbation,
        ExperimentKind::GroenwallCheck,
        ExperimentKind::RateSweep,
        ExperimentKind::GpTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrainShallow => "train-shallow",
            ExperimentKind::TrainDeep => "train-deep",
            ExperimentKind::NtkEigen => "ntk-eigen",
            ExperimentKind::NtkConcentration => "ntk-concentration",
            ExperimentKind::NtkPerturbation => "ntk-perturbation",
            ExperimentKind::GroenwallCheck => "groenwall-check",
            ExperimentKind::RateSweep => "rate-sweep",
            ExperimentKind::GpTable => "gp-table",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    Shallow,
    Deep,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<Network>,
    /// Width m (shallow: number of units; deep: every hidden layer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Deep hidden widths m₀ … m_L; overrides `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Smoothing order of the deep NTK; estimated from a wider network when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Spectral truncation K (interval modes or circle harmonics).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Quadrature nodes (Gauss–Legendre on the interval, equispaced on the
    /// circle, t-points for `gp-table`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gh_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder_sep: Option<f64>,
    /// Hölder exponent offset: the perturbation norm is C^{s+ε, s+ε}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_harmonics: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_width_factor: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Sobolev order S of the operator norm ‖·‖_{S,0}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    /// Relative slack on the theorem slope in the rate bracket.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Explicit sequence parameters; `groenwall-check` samples random ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groenwall: Option<SequenceParams>,
}

fn config_err(key: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

/// Value of a resolved field; missing only if `resolve` was skipped.
pub(crate) fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| config_err(key, "missing"))
}

fn set<T>(slot: &mut Option<T>, default: T) {
    if slot.is_none() {
        *slot = Some(default);
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn pow2(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") { Self::from_json(&text) } else { Self::from_toml(&text) };
        parsed.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn network(&self) -> Network {
        self.model.network.unwrap_or(Network::Shallow)
    }

    /// Fills the defaults of `kind` and validates every field it reads.
    pub fn resolve(&self, kind: ExperimentKind) -> Result<Self> {
        if let Some(k) = self.experiment {
            if k != kind {
                return Err(config_err("experiment", format!("file is for {k}, requested {kind}")));
            }
        }
        let mut c = self.clone();
        c.experiment = Some(kind);
        if c.seeds.is_empty() {
            c.seeds = if kind == ExperimentKind::RateSweep { vec![1, 2, 3, 4, 5] } else { vec![1] };
        }
        set(&mut c.format, Format::Csv);
        let network = match kind {
            ExperimentKind::TrainDeep => Network::Deep,
            ExperimentKind::TrainShallow | ExperimentKind::NtkEigen | ExperimentKind::RateSweep => Network::Shallow,
            _ => self.network(),
        };
        if let Some(n) = self.model.network {
            if n != network
                && matches!(
                    kind,
                    ExperimentKind::TrainDeep | ExperimentKind::TrainShallow | ExperimentKind::NtkEigen | ExperimentKind::RateSweep
                )
            {
                return Err(config_err("model.network", format!("{kind} runs the {network:?} network only").to_lowercase()));
            }
        }
        let (m, sc, nu, sw) = (&mut c.model, &mut c.schedule, &mut c.numerics, &mut c.sweep);
        match kind {
            ExperimentKind::TrainShallow | ExperimentKind::RateSweep => {
                m.network = Some(Network::Shallow);
                set(&mut m.m, 4096);
                set(&mut m.activation, Activation::ReluReflected);
                shallow_schedule_defaults(sc);
                set(&mut nu.modes, 512);
                set(&mut nu.grid, 2048);
                set(&mut nu.target_modes, 256);
                set(&mut nu.target_margin, 0.1);
                if kind == ExperimentKind::RateSweep {
                    set(&mut sw.m_list, pow2(8, 13));
                    set(&mut sw.bootstrap, 1000);
                    set(&mut sw.tolerance, 0.1);
                }
            }
            ExperimentKind::TrainDeep => {
                m.network = Some(Network::Deep);
                deep_model_defaults(m, 256);
                deep_schedule_defaults(sc);
                set(&mut nu.modes, 32);
                set(&mut nu.grid, 128);
                set(&mut nu.target_modes, 16);
                set(&mut nu.target_margin, 0.1);
                set(&mut nu.beta_harmonics, vec![1, 3, 5]);
                set(&mut nu.beta_width_factor, 4);
            }
            ExperimentKind::NtkEigen => {
                m.network = Some(Network::Shallow);
                set(&mut m.activation, Activation::ReluReflected);
                set(&mut nu.grid, 2000);
                set(&mut nu.eigen_count, 21);
            }
            ExperimentKind::NtkConcentration => match network {
                Network::Shallow => {
                    m.network = Some(Network::Shallow);
                    set(&mut m.activation, Activation::ReluReflected);
                    set(&mut sw.m_list, pow2(6, 14));
                    set(&mut sw.trials, 20);
                    set(&mut sw.s_order, 0.0);
                    set(&mut nu.modes, 64);
                    set(&mut nu.grid, 256);
                }
                Network::Deep => {
                    m.network = Some(Network::Deep);
                    set(&mut m.activation, Activation::Tanh);
                    set(&mut m.depth, 3);
                    set(&mut m.d, 2);
                    set(&mut sw.m_list, vec![64, 256, 1024]);
                    set(&mut sw.trials, 10);
                    set(&mut nu.holder_grid, 32);
                }
            },
            ExperimentKind::NtkPerturbation => match network {
                Network::Shallow => {
                    m.network = Some(Network::Shallow);
                    set(&mut m.m, 4096);
                    set(&mut m.activation, Activation::ReluReflected);
                    set(&mut sw.radii, log_spaced(0.01, 0.3, 6));
                    set(&mut sw.trials, 10);
                    set(&mut sw.s_order, 0.0);
                    set(&mut nu.modes, 64);
                    set(&mut nu.grid, 256);
                }
                Network::Deep => {
                    m.network = Some(Network::Deep);
                    deep_model_defaults(m, 256);
                    set(&mut sc.s, 0.25);
                    set(&mut sw.radii, log_spaced(0.01, 0.3, 8));
                    set(&mut sw.trials, 10);
                    set(&mut nu.epsilon, 0.05);
                    set(&mut nu.holder_grid, 33);
                    set(&mut nu.holder_sep, 4.0);
                }
            },
            ExperimentKind::GroenwallCheck => {
                if c.groenwall.is_some() {
                    set(&mut sw.steps, 2000);
                } else {
                    set(&mut sw.draws, 1000);
                    set(&mut sw.steps, 500);
                }
            }
            ExperimentKind::GpTable => {
                set(&mut m.activation, Activation::Tanh);
                set(&mut m.depth, 4);
                set(&mut nu.grid, 201);
                set(&mut nu.gh_order, crate::deep::GH_ORDER);
            }
        }
        c.validate(kind)?;
        Ok(c)
    }

    fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(config_err("seeds", "seeds must fit in a signed 64-bit integer"));
        }
        let (m, sc, nu, sw) = (&self.model, &self.schedule, &self.numerics, &self.sweep);
        let positive = |v: &Option<f64>, key: &str| -> Result<()> {
            match v {
                Some(x) if !(*x > 0.0 && x.is_finite()) => Err(config_err(key, format!("must be positive and finite, got {x}"))),
                _ => Ok(()),
            }
        };
        positive(&sc.c_h, "schedule.c_h")?;
        positive(&sc.c_gamma, "schedule.c_gamma")?;
        positive(&sc.gamma_cap, "schedule.gamma_cap")?;
        positive(&sc.beta, "schedule.beta")?;
        positive(&nu.holder_sep, "numerics.holder_sep")?;
        if let Some(c_a) = sc.c_a {
            if !(c_a >= 0.0 && c_a.is_finite()) {
                return Err(config_err("schedule.c_a", format!("must be finite and nonnegative, got {c_a}")));
            }
        }
        if let Some(s) = sc.s {
            if !(s > 0.0 && s < 0.5) {
                return Err(config_err("schedule.s", format!("must lie in (0, 1/2), got {s}")));
            }
        }
        if let Some(a) = sc.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(config_err("schedule.alpha", format!("must lie in (0, 1], got {a}")));
            }
        }
        if let Some(e) = nu.epsilon {
            if !(e > 0.0 && e.is_finite()) || sc.s.is_some_and(|s| s + e >= 1.0) {
                return Err(config_err("numerics.epsilon", format!("s + epsilon must lie in (0, 1), got epsilon = {e}")));
            }
        }
        if let Some(margin) = nu.target_margin {
            if !(margin >= 0.0 && margin.is_finite()) {
                return Err(config_err("numerics.target_margin", "must be finite and nonnegative"));
            }
        }
        if let Some(s_order) = sw.s_order {
            if !(s_order >= 0.0 && s_order.is_finite()) {
                return Err(config_err("sweep.s_order", "must be finite and nonnegative"));
            }
        }
        if let Some(t) = sw.tolerance {
            if !(0.0..1.0).contains(&t) {
                return Err(config_err("sweep.tolerance", format!("must lie in [0, 1), got {t}")));
            }
        }
        for (v, key) in [
            (m.m, "model.m"),
            (m.d, "model.d"),
            (sc.max_steps.map(|v| v.max(1)), "schedule.max_steps"),
            (nu.modes, "numerics.modes"),
            (nu.grid, "numerics.grid"),
            (nu.target_modes, "numerics.target_modes"),
            (nu.gh_order, "numerics.gh_order"),
            (nu.eigen_count, "numerics.eigen_count"),
            (nu.beta_width_factor, "numerics.beta_width_factor"),
            (sw.trials, "sweep.trials"),
            (sw.bootstrap, "sweep.bootstrap"),
            (sw.draws, "sweep.draws"),
        ] {
            if v == Some(0) {
                return Err(config_err(key, "must be at least 1"));
            }
        }
        if let Some(h) = &nu.holder_grid {
            if *h < 3 {
                return Err(config_err("numerics.holder_grid", "needs at least 3 points"));
            }
        }
        if let Some(list) = &sw.m_list {
            if list.contains(&0) {
                return Err(config_err("sweep.m_list", "widths must be positive"));
            }
        }
        if let Some(radii) = &sw.radii {
            if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(config_err("sweep.radii", "radii must be positive and finite"));
            }
        }
        if let Some(h) = &nu.beta_harmonics {
            if h.is_empty() || h.contains(&0) {
                return Err(config_err("numerics.beta_harmonics", "need positive harmonics"));
            }
        }
        if let Some(p) = &self.groenwall {
            p.validate().map_err(|e| config_err("groenwall", e))?;
            p.thresholds().map_err(|e| config_err("groenwall", e))?;
        }
        let act = m.activation;
        match kind {
            ExperimentKind::TrainShallow | ExperimentKind::RateSweep => {
                let grid = need(&nu.grid, "numerics.grid")?;
                let max = grid.saturating_sub(1) / 2;
                for (v, key) in [(nu.modes, "numerics.modes"), (nu.target_modes, "numerics.target_modes")] {
                    let v = need(&v, key)?;
                    if v > max {
                        return Err(config_err(key, format!("{v} modes alias on a {grid}-point grid (at most {max})")));
                    }
                }
                if kind == ExperimentKind::RateSweep {
                    let widths = need(&sw.m_list, "sweep.m_list")?;
                    if widths.len() < 4 {
                        return Err(config_err("sweep.m_list", format!("rate fit needs at least 4 widths, got {}", widths.len())));
                    }
                    if self.seeds.len() < 3 {
                        return Err(config_err("seeds", format!("rate fit needs at least 3 seeds, got {}", self.seeds.len())));
                    }
                }
            }
            ExperimentKind::TrainDeep | ExperimentKind::NtkPerturbation | ExperimentKind::NtkConcentration
                if m.network == Some(Network::Deep) =>
            {
                if act.is_some_and(|a| a.is_piecewise_linear()) {
                    return Err(config_err("model.activation", "deep networks need a smooth activation (tanh or softplus)"));
                }
                let depth = need(&m.depth, "model.depth")?;
                if depth < 2 {
                    return Err(config_err("model.depth", format!("deep networks need depth at least 2, got {depth}")));
                }
                if need(&m.d, "model.d")? != 2 {
                    return Err(config_err("model.d", "only the circle (d = 2) is supported"));
                }
                if let Some(w) = &m.widths {
                    if w.len() != depth + 1 {
                        return Err(config_err("model.widths", format!("need depth + 1 = {} hidden widths, got {}", depth + 1, w.len())));
                    }
                    if w.contains(&0)
                        || w.windows(2).any(|p| p[1] as f64 > MAX_WIDTH_RATIO * p[0] as f64 || p[0] as f64 > MAX_WIDTH_RATIO * p[1] as f64)
                    {
                        return Err(config_err(
                            "model.widths",
                            format!("consecutive widths must be positive with ratio at most {MAX_WIDTH_RATIO}"),
                        ));
                    }
                    if kind != ExperimentKind::TrainDeep {
                        return Err(config_err("model.widths", "only train-deep takes explicit widths"));
                    }
                } else if kind != ExperimentKind::NtkConcentration {
                    need(&m.m, "model.m")?;
                }
                if kind == ExperimentKind::TrainDeep {
                    let grid =
                        QuadratureGrid::circle_trapezoid(need(&nu.grid, "numerics.grid")?).map_err(|e| config_err("numerics.grid", e))?;
                    for (v, key) in [(nu.modes, "numerics.modes"), (nu.target_modes, "numerics.target_modes")] {
                        let v = need(&v, key)?;
                        if v > grid.max_modes() {
                            return Err(config_err(
                                key,
                                format!("{v} harmonics alias on a {}-point circle grid (at most {})", grid.len(), grid.max_modes()),
                            ));
                        }
                    }
                    if sc.beta.is_none() {
                        let kmax = need(&nu.beta_harmonics, "numerics.beta_harmonics")?.into_iter().max().unwrap_or(0);
                        if kmax > grid.max_modes() {
                            return Err(config_err("numerics.beta_harmonics", format!("harmonic {kmax} aliases on the grid")));
                        }
                    }
                }
                if kind == ExperimentKind::NtkPerturbation && sw.radii.as_ref().is_some_and(|r| r.len() < 2) {
                    return Err(config_err("sweep.radii", "need at least two radii"));
                }
                if kind == ExperimentKind::NtkConcentration && sw.m_list.as_ref().is_some_and(|l| l.is_empty()) {
                    return Err(config_err("sweep.m_list", "need at least one width"));
                }
            }
            ExperimentKind::NtkConcentration | ExperimentKind::NtkPerturbation => {
                let grid = QuadratureGrid::gauss_legendre(need(&nu.grid, "numerics.grid")?).map_err(|e| config_err("numerics.grid", e))?;
                let modes = need(&nu.modes, "numerics.modes")?;
                if modes > grid.max_modes() {
                    return Err(config_err("numerics.modes", format!("{modes} modes alias on a {}-point grid", grid.len())));
                }
                if kind == ExperimentKind::NtkConcentration && sw.m_list.as_ref().is_some_and(|l| l.is_empty()) {
                    return Err(config_err("sweep.m_list", "need at least one width"));
                }
                if kind == ExperimentKind::NtkPerturbation && sw.radii.as_ref().is_some_and(|r| r.is_empty()) {
                    return Err(config_err("sweep.radii", "need at least one radius"));
                }
            }
            ExperimentKind::NtkEigen => {
                let grid = need(&nu.grid, "numerics.grid")?;
                if grid < 2 {
                    return Err(config_err("numerics.grid", "need at least 2 nodes"));
                }
                if need(&nu.eigen_count, "numerics.eigen_count")? > grid {
                    return Err(config_err("numerics.eigen_count", "exceeds the number of grid nodes"));
                }
            }
            ExperimentKind::GpTable => {
                if need(&m.depth, "model.depth")? == 0 {
                    return Err(config_err("model.depth", "must be at least 1"));
                }
                if act.is_some_and(|a| a.is_piecewise_linear()) {
                    return Err(config_err("model.activation", "the GP table needs a smooth activation (tanh or softplus)"));
                }
                if need(&nu.grid, "numerics.grid")? < 2 {
                    return Err(config_err("numerics.grid", "need at least 2 t-points"));
                }
            }
            // A deep network was forced above, so the guarded arm handled it.
            ExperimentKind::TrainDeep | ExperimentKind::GroenwallCheck => {}
        }
        Ok(())
    }
}

fn shallow_schedule_defaults(sc: &mut ScheduleConfig) {
    set(&mut sc.s, 0.25);
    set(&mut sc.c_h, 1.0);
    set(&mut sc.c_a, 0.35);
    set(&mut sc.c_gamma, 0.5);
    set(&mut sc.gamma_cap, 0.03);
    set(&mut sc.max_steps, 20000);
}

fn deep_schedule_defaults(sc: &mut ScheduleConfig) {
    set(&mut sc.s, 0.25);
    set(&mut sc.alpha, 0.5);
    set(&mut sc.c_h, 1.0);
    set(&mut sc.c_a, 0.2);
    set(&mut sc.c_gamma, 0.5);
    set(&mut sc.max_steps, 2000);
}

fn deep_model_defaults(m: &mut ModelConfig, width: usize) {
    set(&mut m.activation, Activation::Tanh);
    set(&mut m.depth, 3);
    set(&mut m.d, 2);
    if m.widths.is_none() {
        set(&mut m.m, width);
    }
}

/// Hidden widths plus the scalar output width.
pub(crate) fn deep_widths(m: &ModelConfig) -> Result<Vec<usize>> {
    let depth = need(&m.depth, "model.depth")?;
    match &m.widths {
        Some(w) => Ok(w.iter().copied().chain([1]).collect()),
        None => Ok(crate::deep::uniform_widths(need(&m.m, "model.m")?, depth)),
    }
}
