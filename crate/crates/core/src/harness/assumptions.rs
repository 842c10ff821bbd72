use serde::Serialize;

use super::{build_demand, curated_mode, multi_parts, run_single_engine, DemandSpec, EngineSpec, InterestSpec, Scenario, ScenarioConfig};
use crate::demand::{
    check_bounded_increment, check_reset_condition, check_variable_rate_concentration, AssumptionReport,
};
use crate::metrics::uncapped_demand;
use crate::model::LoanStream;
use crate::multi::MultiStream;
use crate::pricing::CuratedMode;
use crate::Result;

const DEFAULT_DELTA: f64 = 0.05;
const DEFAULT_RATE: f64 = 20.0;
const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionStatus {
    pub id: u8,
    pub assumption: &'static str,
    pub status: Status,
    pub detail: String,
    pub report: Option<AssumptionReport>,
}

fn status(id: u8, assumption: &'static str, pass: bool, detail: String) -> AssumptionStatus {
    AssumptionStatus {
        id,
        assumption,
        status: if pass { Status::Pass } else { Status::Fail },
        detail,
        report: None,
    }
}

fn not_applicable(id: u8, assumption: &'static str, detail: impl Into<String>) -> AssumptionStatus {
    AssumptionStatus {
        id,
        assumption,
        status: Status::NotApplicable,
        detail: detail.into(),
        report: None,
    }
}

fn from_report(id: u8, assumption: &'static str, r: Result<AssumptionReport>) -> AssumptionStatus {
    match r {
        Ok(r) => AssumptionStatus {
            id,
            assumption,
            status: if r.pass { Status::Pass } else { Status::Fail },
            detail: format!("{} samples, slack {}", r.sample_size, r.slack),
            report: Some(r),
        },
        Err(e) => not_applicable(id, assumption, e.to_string()),
    }
}

/// One status per assumption (1 to 8), in order.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Result<Vec<AssumptionStatus>> {
    Ok(match build_demand(&cfg.demand, cfg.seed)? {
        Scenario::Single(s) => single(cfg, &s)?,
        Scenario::Multi(s) => multi(cfg, &s)?,
    })
}

fn elasticity(cfg: &ScenarioConfig, kappas: &[f64]) -> AssumptionStatus {
    let max = kappas.iter().copied().fold(0.0, f64::max);
    let finite = kappas.iter().all(|k| k.is_finite() && *k >= 0.0);
    let pass = finite && cfg.metrics.kappa_max.is_none_or(|k| max <= k);
    let bound = cfg.metrics.kappa_max.map_or("finite".to_string(), |k| format!("<= {k}"));
    status(8, "max_elasticity", pass, format!("max kappa {max}, required {bound}"))
}

fn single(cfg: &ScenarioConfig, stream: &LoanStream<f64>) -> Result<Vec<AssumptionStatus>> {
    let m = &cfg.metrics;
    let mut out = Vec::with_capacity(8);

    let (s_lo, s_hi) = match &cfg.engine {
        EngineSpec::Pooled { .. } => (cfg.market.supply_total, cfg.market.supply_total),
        EngineSpec::Game { curators, alpha_floor, .. } => {
            let cap: f64 = curators.iter().map(|c| c.capacity * c.count as f64).sum();
            (alpha_floor * cap, cap)
        }
        _ => (cfg.market.s_min, cfg.market.s_max()),
    };
    out.push(status(
        1,
        "min_supply",
        s_lo > 0.0 && s_lo <= s_hi,
        format!("supply confined to [{s_lo}, {s_hi}]"),
    ));

    let d_min = uncapped_demand(stream).into_iter().fold(f64::INFINITY, f64::min);
    out.push(status(2, "min_demand", d_min > 0.0 && d_min.is_finite(), format!("min demand {d_min}")));

    let (delta, rate, eps) = match &cfg.demand {
        DemandSpec::Stochastic(p) => (p.increment_scale, p.tail_rate, p.reset_epsilon),
        _ => (DEFAULT_DELTA, DEFAULT_RATE, DEFAULT_EPSILON),
    };
    let delta = m.increment_delta.unwrap_or(delta);
    let rate = m.increment_rate.unwrap_or(rate);
    let eps = m.reset_epsilon.unwrap_or(eps);
    out.push(from_report(3, "bounded_increment", check_bounded_increment(stream, delta, rate, m.slack)));
    out.push(from_report(4, "reset_condition", check_reset_condition(stream, cfg.market.supply_total, eps, m.slack)));

    let run = run_single_engine(cfg, stream);
    out.push(match curated_mode(cfg)? {
        Some(CuratedMode::Game(g)) => match (g.validate(), &run) {
            (Err(e), _) => status(5, "curator_costs", false, e.to_string()),
            (Ok(()), Err(e)) => status(5, "curator_costs", false, e.to_string()),
            (Ok(()), Ok(r)) => {
                let mut issues: Vec<String> = g.low_cost_warning().into_iter().collect();
                issues.extend(r.warnings.iter().filter(|w| w.contains("minimum revenue")).cloned());
                let detail = if issues.is_empty() {
                    format!("{} of {} curators are low cost", g.low_cost_count(), g.curators.len())
                } else {
                    issues.join("; ")
                };
                status(5, "curator_costs", issues.is_empty(), detail)
            }
        },
        _ => not_applicable(5, "curator_costs", "no strategic curators"),
    });

    out.push(match (cfg.engine.interest(), run) {
        (Some((InterestSpec::Variable, _)), Ok(r)) => {
            let durations: Vec<u64> = (1..=stream.horizon())
                .map(|t| stream.event_at(t).map_or(0, |e| e.duration))
                .collect();
            from_report(6, "variable_rate", check_variable_rate_concentration(&r.prices, &durations, m.sigma_p, m.slack))
        }
        (Some((InterestSpec::Variable, _)), Err(e)) => status(6, "variable_rate", false, e.to_string()),
        _ => not_applicable(6, "variable_rate", "fixed-interest engine"),
    });

    out.push(not_applicable(7, "min_alloc", "single borrowable asset"));
    out.push(elasticity(cfg, &[cfg.market.kappa]));
    Ok(out)
}

fn multi(cfg: &ScenarioConfig, stream: &MultiStream) -> Result<Vec<AssumptionStatus>> {
    let (kappas, supplies, a) = multi_parts(cfg)?;
    let c = stream.collateral() as f64;
    let mut out = Vec::with_capacity(8);
    let s_lo = supplies.iter().copied().fold(f64::INFINITY, f64::min) * a * c;
    out.push(status(1, "min_supply", s_lo > 0.0, format!("every asset supplies at least {s_lo}")));
    let d_min = stream
        .demand_path()
        .iter()
        .map(|d| d.iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    out.push(status(2, "min_demand", d_min > 0.0 && d_min.is_finite(), format!("min total demand {d_min}")));
    for (id, name) in [(3, "bounded_increment"), (4, "reset_condition"), (5, "curator_costs"), (6, "variable_rate")] {
        out.push(not_applicable(id, name, "single-asset assumption"));
    }
    out.push(status(
        7,
        "min_alloc",
        a > 0.0 && a * c < 1.0,
        format!("minimum allocation a = {a} over {c} collateral markets"),
    ));
    out.push(elasticity(cfg, &kappas.concat()));
    Ok(out)
}
