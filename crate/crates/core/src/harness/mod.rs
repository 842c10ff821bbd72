//! Scenario files, experiment orchestration and artifact output.

mod assumptions;
mod config;
mod reproduce;
mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use num::BigRational;
use serde::Serialize;

pub use assumptions::{validate_scenario, AssumptionStatus, Status};
pub use config::{
    check_grid, BenchmarkSpec, CuratorSpec, DemandSpec, EngineSpec, InterestSpec, MarketSpec, MetricsSpec,
    MultiCuratorSpec, OutputSpec, PatternStep, ScenarioConfig, SCHEMA_VERSION,
};
pub use reproduce::{reproduce, ReproRow, ReproTable};
pub use sweep::{derive_seed, fit_table, splitmix64, sweep, SweepCell, SweepReport};

use crate::demand::{gen_example1, gen_example2, gen_example2_full, gen_example3, gen_stochastic};
use crate::learners::{estimate_curvature, besbes_dynamic_bound, hazan_bound, zinkevich_bound, Interval};
use crate::metrics::{evaluate, hindsight_bruteforce, hindsight_fixed_optimal, Benchmark, RegretReport};
use crate::model::{CostFunction, CuratorProfile, LoanStream};
use crate::multi::{
    gen_multi_periodic, md_optimal_static, run_curators_md, AllocationMatrix, MdConfig, MultiCurator, MultiStream,
    MultiTrajectory, StaticOptimum,
};
use crate::pricing::{
    curator_profit, nash_equilibrium, run_curated, run_pooled_fixed, simulate, CuratedMode, CuratorGameConfig,
    EngineSettings, FixedSupply, RunTrajectory, TrackingConfig,
};
use crate::{Error, Result};

pub enum Scenario {
    Single(LoanStream<f64>),
    Multi(MultiStream),
}

pub fn build_demand(spec: &DemandSpec, seed: u64) -> Result<Scenario> {
    Ok(match spec {
        DemandSpec::Example1 { horizon } => Scenario::Single(gen_example1(*horizon)?),
        DemandSpec::Example2 { horizon, full } => Scenario::Single(if *full {
            gen_example2_full(*horizon)?
        } else {
            gen_example2(*horizon)?
        }),
        DemandSpec::Example3 { horizon, delta } => Scenario::Single(gen_example3(*horizon, *delta)?),
        DemandSpec::Stochastic(p) => Scenario::Single(gen_stochastic(p, seed)?),
        DemandSpec::Csv { path, horizon } => Scenario::Single(LoanStream::read_csv(File::open(path)?, *horizon)?),
        DemandSpec::MultiPeriodic { assets, pattern, duration, horizon } => {
            let steps: Vec<(usize, Vec<f64>)> = pattern.iter().map(|p| (p.asset - 1, p.sizes.clone())).collect();
            Scenario::Multi(gen_multi_periodic(*assets, &steps, *duration, *horizon)?)
        }
        DemandSpec::MultiCsv { path, assets, horizon } => {
            Scenario::Multi(MultiStream::read_csv(File::open(path)?, *assets, *horizon)?)
        }
    })
}

pub(crate) fn expand_curators(specs: &[CuratorSpec]) -> Result<Vec<CuratorProfile>> {
    let mut out = Vec::new();
    for c in specs {
        for _ in 0..c.count {
            out.push(CuratorProfile::new(c.capacity, c.alpha, CostFunction::quadratic(c.linear, c.quadratic))?);
        }
    }
    Ok(out)
}

pub(crate) fn settings(cfg: &ScenarioConfig) -> EngineSettings {
    match cfg.engine.interest() {
        Some((InterestSpec::Variable, window)) => EngineSettings::variable(cfg.market.kappa, window),
        _ => EngineSettings::fixed(cfg.market.kappa),
    }
}

pub(crate) fn curated_mode(cfg: &ScenarioConfig) -> Result<Option<CuratedMode>> {
    Ok(match &cfg.engine {
        EngineSpec::Pooled { .. } | EngineSpec::Mirror { .. } => None,
        EngineSpec::Tracking { curators, .. } => {
            let mut t = TrackingConfig::new(expand_curators(curators)?, cfg.market.s_min);
            t.s_max = cfg.market.s_max;
            Some(CuratedMode::Tracking(t))
        }
        EngineSpec::Game {
            curators,
            learner,
            basis,
            low_cost_fraction,
            c_star,
            revenue_floor,
            alpha_floor,
            ..
        } => {
            let mut g = CuratorGameConfig::new(expand_curators(curators)?, *learner);
            g.basis = *basis;
            g.low_cost_fraction = *low_cost_fraction;
            g.c_star = *c_star;
            g.revenue_floor = *revenue_floor;
            g.alpha_floor = *alpha_floor;
            Some(CuratedMode::Game(g))
        }
    })
}

pub fn run_single_engine(cfg: &ScenarioConfig, stream: &LoanStream<f64>) -> Result<RunTrajectory<f64>> {
    let settings = settings(cfg);
    match curated_mode(cfg)? {
        Some(mode) => run_curated(stream, &mode, &settings),
        None => simulate(stream, &settings, &mut FixedSupply { supply: cfg.market.supply_total }),
    }
}

fn benchmark(cfg: &ScenarioConfig) -> Benchmark {
    match cfg.metrics.benchmark {
        BenchmarkSpec::Hindsight => Benchmark::Hindsight {
            supply_total: cfg.market.supply_total,
        },
        BenchmarkSpec::BestFixed => Benchmark::BestFixedSupply {
            s_min: cfg.market.s_min,
            s_max: cfg.market.s_max(),
        },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactReport {
    pub r_alg: String,
    pub r_star: String,
    pub regret: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SingleReport {
    pub engine: String,
    pub horizon: u64,
    pub seed: u64,
    pub rejections: usize,
    #[serde(flatten)]
    pub metrics: RegretReport,
    pub oracle: Option<f64>,
    pub exact: Option<ExactReport>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiReport {
    pub engine: String,
    pub horizon: u64,
    pub seed: u64,
    pub curators: usize,
    pub r_alg: f64,
    pub r_star: f64,
    pub regret: f64,
    pub saturation: f64,
    pub final_error: Option<f64>,
    pub optimum: StaticOptimum,
}

pub enum RunOutcome {
    Single { trajectory: RunTrajectory<f64>, report: SingleReport },
    Multi { trajectory: MultiTrajectory, report: MultiReport },
}

impl RunOutcome {
    pub fn regret(&self) -> f64 {
        match self {
            RunOutcome::Single { report, .. } => report.metrics.regret,
            RunOutcome::Multi { report, .. } => report.regret,
        }
    }

    pub fn revenue(&self) -> f64 {
        match self {
            RunOutcome::Single { report, .. } => report.metrics.r_alg,
            RunOutcome::Multi { report, .. } => report.r_alg,
        }
    }

    pub fn benchmark(&self) -> f64 {
        match self {
            RunOutcome::Single { report, .. } => report.metrics.r_star,
            RunOutcome::Multi { report, .. } => report.r_star,
        }
    }

    pub fn write_trajectory(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        match self {
            RunOutcome::Single { trajectory, .. } => trajectory.write_csv(w),
            RunOutcome::Multi { trajectory, .. } => trajectory.write_csv(w),
        }
    }

    pub fn write_report(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        match self {
            RunOutcome::Single { report, .. } => serde_json::to_writer_pretty(w, report)?,
            RunOutcome::Multi { report, .. } => serde_json::to_writer_pretty(w, report)?,
        }
        Ok(())
    }
}

/// Runs the scenario once. `exact` adds a rational-arithmetic pass for
/// pooled fixed-interest example scenarios.
pub fn run(cfg: &ScenarioConfig, exact: bool) -> Result<RunOutcome> {
    match build_demand(&cfg.demand, cfg.seed)? {
        Scenario::Single(stream) => run_single(cfg, &stream, exact),
        Scenario::Multi(stream) => {
            if exact {
                return Err(exact_unsupported());
            }
            run_multi(cfg, &stream)
        }
    }
}

fn run_single(cfg: &ScenarioConfig, stream: &LoanStream<f64>, exact: bool) -> Result<RunOutcome> {
    let exact = if exact { Some(run_exact(cfg)?) } else { None };
    let trajectory = run_single_engine(cfg, stream)?;
    let metrics = evaluate(stream, &trajectory, &benchmark(cfg))?;
    let oracle = if cfg.metrics.oracle {
        let levels = cfg.metrics.oracle_levels;
        let (lo, hi) = (cfg.market.s_min, cfg.market.s_max());
        let grid: Vec<f64> = (1..=levels).map(|k| lo + (hi - lo) * k as f64 / levels as f64).collect();
        Some(hindsight_bruteforce(stream, cfg.market.kappa, &grid)?.value)
    } else {
        None
    };
    let report = SingleReport {
        engine: cfg.engine.name().into(),
        horizon: stream.horizon(),
        seed: cfg.seed,
        rejections: trajectory.rejections(),
        metrics,
        oracle,
        exact,
        warnings: trajectory.warnings.clone(),
    };
    Ok(RunOutcome::Single { trajectory, report })
}

pub(crate) fn multi_parts(cfg: &ScenarioConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let kappas = cfg.market.kappas.clone().ok_or_else(|| Error::invalid("missing market.kappas"))?;
    let supplies = cfg.market.supplies.clone().ok_or_else(|| Error::invalid("missing market.supplies"))?;
    let a = cfg.market.min_mass.ok_or_else(|| Error::invalid("missing market.min_mass"))?;
    Ok((kappas, supplies, a))
}

fn run_multi(cfg: &ScenarioConfig, stream: &MultiStream) -> Result<RunOutcome> {
    let EngineSpec::Mirror { curators, learner, map, order } = &cfg.engine else {
        return Err(Error::invalid("multi-asset demand needs the mirror engine"));
    };
    let (kappas, supplies, a) = multi_parts(cfg)?;
    let optimum = md_optimal_static(stream, &kappas, &supplies, a, cfg.metrics.resolution)?;
    let initial = AllocationMatrix::uniform(stream.assets(), stream.collateral(), a)?;
    let mut population = Vec::new();
    for c in curators {
        for _ in 0..c.count {
            population.push(MultiCurator {
                capacities: c.capacities.clone(),
                initial: initial.clone(),
            });
        }
    }
    // the engine's supply is the curators' total, which the optimum must share
    let totals: Vec<f64> = (0..stream.assets())
        .map(|b| population.iter().map(|c| c.capacities.get(b).copied().unwrap_or(0.0)).sum())
        .collect();
    if totals.iter().zip(&supplies).any(|(x, y)| (x - y).abs() > 1e-9 * y.abs().max(1.0)) {
        return Err(Error::Config {
            path: "market.supplies".into(),
            message: format!("curator capacities sum to {totals:?}, not {supplies:?}"),
        });
    }
    let md = MdConfig {
        min_mass: a,
        schedule: *learner,
        map: *map,
        order: *order,
    };
    let trajectory = run_curators_md(stream, &population, &kappas, &md, Some(&optimum))?;
    let report = MultiReport {
        engine: cfg.engine.name().into(),
        horizon: stream.horizon(),
        seed: cfg.seed,
        curators: population.len(),
        r_alg: trajectory.total_revenue(),
        r_star: optimum.value,
        regret: trajectory.final_regret().unwrap_or(0.0),
        saturation: trajectory.saturation,
        final_error: trajectory.error.last().copied(),
        optimum,
    };
    Ok(RunOutcome::Multi { trajectory, report })
}

fn exact_unsupported() -> Error {
    Error::Config {
        path: "engine".into(),
        message: "exact mode supports pooled fixed-interest runs on example demand".into(),
    }
}

/// Exact rational value of a decimal literal such as `0.1`.
pub(crate) fn decimal_ratio(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("{x} has no rational value")));
    }
    let text = format!("{x}");
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let num: num::BigInt = format!("{int}{frac}").parse().map_err(|_| Error::invalid(format!("cannot parse {x}")))?;
    let den = num::BigInt::from(10u32).pow(frac.len() as u32);
    let r = BigRational::new(num, den);
    Ok(if neg { -r } else { r })
}

pub fn run_exact(cfg: &ScenarioConfig) -> Result<ExactReport> {
    if !matches!(cfg.engine, EngineSpec::Pooled { interest: InterestSpec::Fixed, .. }) {
        return Err(exact_unsupported());
    }
    let stream: LoanStream<BigRational> = match &cfg.demand {
        DemandSpec::Example1 { horizon } => gen_example1(*horizon)?,
        DemandSpec::Example2 { horizon, full: false } => gen_example2(*horizon)?,
        DemandSpec::Example2 { horizon, full: true } => gen_example2_full(*horizon)?,
        DemandSpec::Example3 { horizon, delta } => gen_example3(*horizon, decimal_ratio(*delta)?)?,
        _ => return Err(exact_unsupported()),
    };
    let supply = decimal_ratio(cfg.market.supply_total)?;
    let kappa = decimal_ratio(cfg.market.kappa)?;
    // revenue is linear in kappa, so price at kappa = 1 and scale exactly
    let r_alg = run_pooled_fixed(&stream, supply.clone(), 1.0)?.total_revenue() * kappa.clone();
    let r_star = hindsight_fixed_optimal(&stream, &kappa, &supply);
    Ok(ExactReport {
        r_alg: r_alg.to_string(),
        r_star: r_star.to_string(),
        regret: (r_star - r_alg).to_string(),
    })
}

/// Runs the scenario and writes its trajectory, report and assumption checks into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path, exact: bool) -> Result<RunOutcome> {
    let outcome = run(cfg, exact)?;
    std::fs::create_dir_all(dir)?;
    outcome.write_trajectory(&dir.join(&cfg.output.trajectory))?;
    outcome.write_report(&dir.join(&cfg.output.report))?;
    let checks = validate_scenario(cfg)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join(&cfg.output.assumptions))?), &checks)?;
    Ok(outcome)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub t: u64,
    pub hazan: f64,
    pub zinkevich: f64,
    pub besbes: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub loss: String,
    pub mu: f64,
    pub g: f64,
    pub diameter: f64,
    pub path_length: Option<f64>,
    pub rows: Vec<BoundRow>,
}

pub const DEFAULT_BOUND_GRID: [u64; 5] = [100, 1_000, 10_000, 100_000, 1_000_000];

/// Classical regret bounds from the curvature of the scenario's learning loss.
pub fn bounds(cfg: &ScenarioConfig, grid: &[u64]) -> Result<BoundsReport> {
    let (label, loss, domain, path): (String, Box<dyn Fn(f64) -> f64>, Interval, Option<f64>) = match &cfg.engine {
        EngineSpec::Game { .. } => {
            let Some(CuratedMode::Game(g)) = curated_mode(cfg)? else { unreachable!() };
            let revenue = cfg.market.kappa.max(g.revenue_floor);
            let eq = nash_equilibrium(&g.curators, revenue, g.basis, g.alpha_floor)?;
            let (curators, basis) = (g.curators.clone(), g.basis);
            let loss = move |x: f64| {
                let mut a = eq.clone();
                a[0] = x;
                -curator_profit(0, &a, revenue, &curators, basis).unwrap_or(f64::NAN)
            };
            let path = match build_demand(&cfg.demand, cfg.seed)? {
                Scenario::Single(s) => Some(evaluate(&s, &run_single_engine(cfg, &s)?, &benchmark(cfg))?.path_length),
                Scenario::Multi(_) => None,
            };
            // stencils reach slightly past the interval, which must stay inside [floor, 1]
            let lo = g.alpha_floor.max(1e-2);
            ("negated profit of curator 1 at the Nash point".into(), Box::new(loss), Interval::new(lo, 0.99)?, path)
        }
        EngineSpec::Mirror { .. } => {
            let Scenario::Multi(stream) = build_demand(&cfg.demand, cfg.seed)? else {
                return Err(Error::invalid("mirror engine needs multi-asset demand"));
            };
            let (kappas, supplies, a) = multi_parts(cfg)?;
            let d_min = stream.demand_path().iter().flatten().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
            if !d_min.is_finite() {
                return Err(Error::invalid("stream has no demand"));
            }
            let kappa = kappas.iter().flatten().copied().filter(|k| *k > 0.0).fold(f64::INFINITY, f64::min);
            let s = supplies.iter().copied().fold(0.0, f64::max);
            let c = stream.collateral() as f64;
            let loss = move |x: f64| kappa * d_min / (s * x);
            ("per-pair utilization loss at minimum demand".into(), Box::new(loss), Interval::new(a, 1.0 - (c - 1.0) * a)?, None)
        }
        _ => {
            return Err(Error::Config {
                path: "engine.model".into(),
                message: "bounds need a learning engine (game or mirror)".into(),
            })
        }
    };
    let est = estimate_curvature(&*loss, domain, 65)?;
    let rows = grid
        .iter()
        .map(|&t| {
            let tf = t as f64;
            Ok(BoundRow {
                t,
                hazan: hazan_bound(est.g, est.mu, tf)?,
                zinkevich: zinkevich_bound(domain.width(), est.g, tf)?,
                besbes: path.map(|p| besbes_dynamic_bound(est.g, est.mu, tf, p)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsReport {
        loss: label,
        mu: est.mu,
        g: est.g,
        diameter: domain.width(),
        path_length: path,
        rows,
    })
}
