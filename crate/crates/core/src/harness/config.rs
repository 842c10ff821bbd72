use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demand::{StochasticDemandParams, DEFAULT_SLACK};
use crate::learners::{MirrorMap, StepSchedule};
use crate::multi::{UpdateOrder, DEFAULT_RESOLUTION};
use crate::pricing::{CostBasis, VariableWindow};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub demand: DemandSpec,
    #[serde(default)]
    pub market: MarketSpec,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandSpec {
    Example1 {
        horizon: u64,
    },
    Example2 {
        horizon: u64,
        /// Every loan lasts the full horizon instead of `T - t`.
        #[serde(default)]
        full: bool,
    },
    Example3 {
        horizon: u64,
        delta: f64,
    },
    Stochastic(StochasticDemandParams),
    Csv {
        path: PathBuf,
        horizon: Option<u64>,
    },
    MultiPeriodic {
        assets: usize,
        pattern: Vec<PatternStep>,
        duration: u64,
        horizon: u64,
    },
    MultiCsv {
        path: PathBuf,
        assets: usize,
        horizon: Option<u64>,
    },
}

/// One step of a cyclic multi-asset pattern. `asset` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternStep {
    pub asset: usize,
    pub sizes: Vec<f64>,
}

impl DemandSpec {
    pub fn is_multi(&self) -> bool {
        matches!(self, DemandSpec::MultiPeriodic { .. } | DemandSpec::MultiCsv { .. })
    }

    pub fn horizon(&self) -> Option<u64> {
        match self {
            DemandSpec::Example1 { horizon }
            | DemandSpec::Example2 { horizon, .. }
            | DemandSpec::Example3 { horizon, .. }
            | DemandSpec::MultiPeriodic { horizon, .. } => Some(*horizon),
            DemandSpec::Stochastic(p) => Some(p.horizon),
            DemandSpec::Csv { horizon, .. } | DemandSpec::MultiCsv { horizon, .. } => *horizon,
        }
    }

    /// Same scenario at another horizon. File-backed demand cannot be resized.
    pub fn with_horizon(&self, t: u64) -> Result<DemandSpec> {
        let mut out = self.clone();
        match &mut out {
            DemandSpec::Example1 { horizon }
            | DemandSpec::Example2 { horizon, .. }
            | DemandSpec::Example3 { horizon, .. }
            | DemandSpec::MultiPeriodic { horizon, .. } => *horizon = t,
            DemandSpec::Stochastic(p) => {
                p.horizon = t;
                if p.max_duration.is_some_and(|m| m > t) {
                    p.max_duration = Some(t);
                }
            }
            DemandSpec::Csv { .. } | DemandSpec::MultiCsv { .. } => {
                return Err(config_err("demand.kind", "csv demand has a fixed horizon and cannot be swept"))
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(default = "one")]
    pub kappa: f64,
    /// Pooled supply, and the benchmark's total capacity.
    #[serde(default = "one")]
    pub supply_total: f64,
    #[serde(default)]
    pub s_min: f64,
    pub s_max: Option<f64>,
    /// Multi-asset elasticities, `B x C`.
    pub kappas: Option<Vec<Vec<f64>>>,
    /// Multi-asset supply per borrowable asset.
    pub supplies: Option<Vec<f64>>,
    pub min_mass: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            kappa: 1.0,
            supply_total: 1.0,
            s_min: 0.0,
            s_max: None,
            kappas: None,
            supplies: None,
            min_mass: None,
        }
    }
}

impl MarketSpec {
    pub fn s_max(&self) -> f64 {
        self.s_max.unwrap_or(self.supply_total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterestSpec {
    #[default]
    Fixed,
    Variable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuratorSpec {
    pub capacity: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub linear: f64,
    #[serde(default)]
    pub quadratic: f64,
    /// Number of identical curators this entry stands for.
    #[serde(default = "one_usize")]
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiCuratorSpec {
    pub capacities: Vec<f64>,
    #[serde(default = "one_usize")]
    pub count: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineSpec {
    Pooled {
        #[serde(default)]
        interest: InterestSpec,
        #[serde(default)]
        window: VariableWindow,
    },
    Tracking {
        #[serde(default)]
        interest: InterestSpec,
        #[serde(default)]
        window: VariableWindow,
        curators: Vec<CuratorSpec>,
    },
    Game {
        #[serde(default)]
        interest: InterestSpec,
        #[serde(default)]
        window: VariableWindow,
        curators: Vec<CuratorSpec>,
        learner: StepSchedule,
        #[serde(default)]
        basis: CostBasis,
        #[serde(default = "half")]
        low_cost_fraction: f64,
        #[serde(default = "half")]
        c_star: f64,
        #[serde(default)]
        revenue_floor: f64,
        #[serde(default = "alpha_floor")]
        alpha_floor: f64,
    },
    Mirror {
        curators: Vec<MultiCuratorSpec>,
        learner: StepSchedule,
        #[serde(default)]
        map: MirrorMap,
        #[serde(default)]
        order: UpdateOrder,
    },
}

fn half() -> f64 {
    0.5
}

fn alpha_floor() -> f64 {
    1e-6
}

impl Default for EngineSpec {
    fn default() -> Self {
        EngineSpec::Pooled {
            interest: InterestSpec::Fixed,
            window: VariableWindow::default(),
        }
    }
}

impl EngineSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EngineSpec::Pooled { .. } => "pooled",
            EngineSpec::Tracking { .. } => "tracking",
            EngineSpec::Game { .. } => "game",
            EngineSpec::Mirror { .. } => "mirror",
        }
    }

    pub fn interest(&self) -> Option<(InterestSpec, VariableWindow)> {
        match self {
            EngineSpec::Pooled { interest, window }
            | EngineSpec::Tracking { interest, window, .. }
            | EngineSpec::Game { interest, window, .. } => Some((*interest, *window)),
            EngineSpec::Mirror { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkSpec {
    #[default]
    Hindsight,
    BestFixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default)]
    pub benchmark: BenchmarkSpec,
    /// Cross-check the benchmark by exhaustive search on tiny instances.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "oracle_levels")]
    pub oracle_levels: usize,
    pub t_grid: Option<Vec<u64>>,
    #[serde(default = "one_usize")]
    pub reps: usize,
    /// Grid step of the static multi-asset optimum.
    #[serde(default = "resolution")]
    pub resolution: f64,
    #[serde(default = "slack")]
    pub slack: f64,
    pub increment_delta: Option<f64>,
    pub increment_rate: Option<f64>,
    pub reset_epsilon: Option<f64>,
    pub sigma_p: Option<f64>,
    pub kappa_max: Option<f64>,
}

fn oracle_levels() -> usize {
    20
}

fn resolution() -> f64 {
    DEFAULT_RESOLUTION
}

fn slack() -> f64 {
    DEFAULT_SLACK
}

impl Default for MetricsSpec {
    fn default() -> Self {
        MetricsSpec {
            benchmark: BenchmarkSpec::Hindsight,
            oracle: false,
            oracle_levels: oracle_levels(),
            t_grid: None,
            reps: 1,
            resolution: DEFAULT_RESOLUTION,
            slack: DEFAULT_SLACK,
            increment_delta: None,
            increment_rate: None,
            reset_epsilon: None,
            sigma_p: None,
            kappa_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
    #[serde(default = "trajectory_name")]
    pub trajectory: String,
    #[serde(default = "report_name")]
    pub report: String,
    #[serde(default = "assumptions_name")]
    pub assumptions: String,
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn trajectory_name() -> String {
    "trajectory.csv".into()
}

fn report_name() -> String {
    "report.json".into()
}

fn assumptions_name() -> String {
    "assumptions.json".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: out_dir(),
            trajectory: trajectory_name(),
            report: report_name(),
            assumptions: assumptions_name(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("", e.message().to_string()))?;
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { "" } else { &path }, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // csv paths are relative to the config file
        if let Some(dir) = path.parent() {
            match &mut cfg.demand {
                DemandSpec::Csv { path, .. } | DemandSpec::MultiCsv { path, .. } if path.is_relative() => {
                    *path = dir.join(&*path);
                }
                _ => {}
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(config_err("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version)));
        }
        self.validate_demand()?;
        self.validate_market()?;
        self.validate_engine()?;
        let m = &self.metrics;
        if m.reps == 0 {
            return Err(config_err("metrics.reps", "need at least one repetition"));
        }
        if !(m.resolution > 0.0 && m.resolution <= 0.5) {
            return Err(config_err("metrics.resolution", "must lie in (0, 0.5]"));
        }
        if !(m.slack > 0.0) {
            return Err(config_err("metrics.slack", "must be positive"));
        }
        if let Some(grid) = &m.t_grid {
            check_grid(grid).map_err(|msg| config_err("metrics.t_grid", msg))?;
        }
        if m.benchmark == BenchmarkSpec::BestFixed && !self.demand.is_multi() && !(self.market.s_min > 0.0) {
            return Err(config_err("market.s_min", "the best_fixed benchmark needs a positive lower supply bound"));
        }
        Ok(())
    }

    fn validate_demand(&self) -> Result<()> {
        if let Some(h) = self.demand.horizon() {
            if h == 0 {
                return Err(config_err("demand.horizon", "must be at least 1"));
            }
        }
        match &self.demand {
            DemandSpec::Example3 { horizon, delta } => {
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(config_err("demand.delta", "must lie in (0, 1)"));
                }
                if *horizon < 2 {
                    return Err(config_err("demand.horizon", "example 3 needs at least 2 steps"));
                }
            }
            DemandSpec::Stochastic(p) => {
                p.validate().map_err(|e| config_err("demand", e.to_string()))?;
            }
            DemandSpec::MultiPeriodic { assets, pattern, .. } => {
                if pattern.is_empty() {
                    return Err(config_err("demand.pattern", "must not be empty"));
                }
                for (i, step) in pattern.iter().enumerate() {
                    if step.asset == 0 || step.asset > *assets {
                        return Err(config_err(&format!("demand.pattern[{i}].asset"), format!("must lie in 1..={assets}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_market(&self) -> Result<()> {
        let m = &self.market;
        if !(m.kappa >= 0.0) || !m.kappa.is_finite() {
            return Err(config_err("market.kappa", "must be finite and non-negative"));
        }
        if !(m.supply_total > 0.0) {
            return Err(config_err("market.supply_total", "must be positive"));
        }
        if !(m.s_min >= 0.0) {
            return Err(config_err("market.s_min", "must be non-negative"));
        }
        if let Some(s_max) = m.s_max {
            if !(s_max > 0.0) {
                return Err(config_err("market.s_max", "must be positive"));
            }
            if m.s_min > s_max {
                return Err(config_err("market.s_min", format!("s_min = {} exceeds s_max = {s_max}", m.s_min)));
            }
        }
        if self.demand.is_multi() {
            if m.kappas.is_none() {
                return Err(config_err("market.kappas", "multi-asset demand needs an elasticity matrix"));
            }
            if m.supplies.is_none() {
                return Err(config_err("market.supplies", "multi-asset demand needs per-asset supplies"));
            }
            if m.min_mass.is_none() {
                return Err(config_err("market.min_mass", "multi-asset demand needs a minimum allocation"));
            }
        }
        Ok(())
    }

    fn validate_engine(&self) -> Result<()> {
        let multi = self.demand.is_multi();
        match (&self.engine, multi) {
            (EngineSpec::Mirror { .. }, false) => {
                return Err(config_err("engine.model", "mirror engine needs multi-asset demand"))
            }
            (EngineSpec::Pooled { .. } | EngineSpec::Tracking { .. } | EngineSpec::Game { .. }, true) => {
                return Err(config_err("engine.model", "multi-asset demand needs the mirror engine"))
            }
            _ => {}
        }
        let curators = match &self.engine {
            EngineSpec::Tracking { curators, .. } | EngineSpec::Game { curators, .. } => curators,
            EngineSpec::Mirror { curators, .. } => {
                if curators.is_empty() {
                    return Err(config_err("engine.curators", "need at least one curator"));
                }
                for (i, c) in curators.iter().enumerate() {
                    if c.count == 0 {
                        return Err(config_err(&format!("engine.curators[{i}].count"), "must be at least 1"));
                    }
                    if c.capacities.iter().any(|s| !(*s > 0.0)) {
                        return Err(config_err(&format!("engine.curators[{i}].capacities"), "must be positive"));
                    }
                }
                return Ok(());
            }
            EngineSpec::Pooled { .. } => return Ok(()),
        };
        if curators.is_empty() {
            return Err(config_err("engine.curators", "need at least one curator"));
        }
        for (i, c) in curators.iter().enumerate() {
            let at = |f: &str| format!("engine.curators[{i}].{f}");
            if !(c.capacity > 0.0) {
                return Err(config_err(&at("capacity"), "must be positive"));
            }
            if !(0.0..=1.0).contains(&c.alpha) {
                return Err(config_err(&at("alpha"), "must lie in [0, 1]"));
            }
            if c.count == 0 {
                return Err(config_err(&at("count"), "must be at least 1"));
            }
            if !(c.linear >= 0.0) || !(c.quadratic >= 0.0) {
                return Err(config_err(&at("linear"), "cost coefficients must be non-negative"));
            }
        }
        if let EngineSpec::Game { low_cost_fraction, c_star, alpha_floor, .. } = &self.engine {
            if !(*low_cost_fraction > 0.0 && *low_cost_fraction <= 1.0) {
                return Err(config_err("engine.low_cost_fraction", "must lie in (0, 1]"));
            }
            if !(*c_star > 0.0 && *c_star <= 1.0) {
                return Err(config_err("engine.c_star", "must lie in (0, 1]"));
            }
            if !(*alpha_floor > 0.0 && *alpha_floor < 1.0) {
                return Err(config_err("engine.alpha_floor", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Sweep grid rules: at least 5 strictly increasing horizons spanning two decades.
pub fn check_grid(grid: &[u64]) -> std::result::Result<(), String> {
    if grid.len() < 5 {
        return Err(format!("need at least 5 horizons, got {}", grid.len()));
    }
    if grid[0] == 0 {
        return Err("horizons must be at least 1".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("horizons must be strictly increasing".into());
    }
    if (grid[grid.len() - 1] as f64) < 100.0 * grid[0] as f64 {
        return Err("horizons must span at least two decades".into());
    }
    Ok(())
}
