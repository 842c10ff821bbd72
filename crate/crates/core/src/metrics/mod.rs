//! Hindsight benchmarks, regret, dynamic regret, path length, competitive
//! ratio and scaling-law fits.

mod fit;

pub use fit::{fit_scaling, ScalingFit, BASIS_LABELS};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{active_demand, LoanStream, Market};
use crate::num::Real;
use crate::pricing::{pooled_price, run_pooled_fixed, simulate, EngineSettings, FixedSupply, InterestMode, RunTrajectory, VariableWindow};
use crate::{Error, Result};

/// `kappa * sum tau l` over arrivals that fit within `S_total` individually:
/// the benchmark supply tracks demand exactly, so every such loan pays `kappa`.
pub fn hindsight_fixed_optimal<V: Real>(stream: &LoanStream<V>, kappa: &V, supply_total: &V) -> V {
    let cap = supply_total.clone() + V::capacity_slack(supply_total);
    stream
        .arrivals()
        .filter(|e| e.size <= cap)
        .fold(V::zero(), |acc, e| {
            acc + kappa.clone() * V::from_int(e.duration as i64) * e.size.clone()
        })
}

/// Variable-rate analogue: every admissible loan pays `kappa` on each priced
/// step of its window that falls inside the horizon.
pub fn hindsight_variable_optimal(stream: &LoanStream<f64>, kappa: f64, supply_total: f64, window: VariableWindow) -> f64 {
    let cap = supply_total + f64::capacity_slack(&supply_total);
    let horizon = stream.horizon();
    stream
        .arrivals()
        .filter(|e| e.size <= cap)
        .map(|e| {
            let terms = window.terms(e.duration);
            let last = (e.t + terms).min(horizon + 1);
            kappa * e.size * last.saturating_sub(e.t) as f64
        })
        .sum()
}

pub const BRUTE_FORCE_MAX_HORIZON: u64 = 8;
pub const BRUTE_FORCE_MAX_LEVELS: usize = 21;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BruteForce {
    pub value: f64,
    /// Maximizing supply level per step.
    pub path: Vec<f64>,
}

/// Exhaustive search over supply paths drawn from `grid` maximizing
/// fixed-interest revenue under the capacity rule.
pub fn hindsight_bruteforce(stream: &LoanStream<f64>, kappa: f64, grid: &[f64]) -> Result<BruteForce> {
    let horizon = stream.horizon();
    if horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(Error::Budget(format!(
            "brute force limited to horizon {BRUTE_FORCE_MAX_HORIZON}, got {horizon}"
        )));
    }
    if grid.is_empty() || grid.len() > BRUTE_FORCE_MAX_LEVELS {
        return Err(Error::Budget(format!(
            "brute force needs 1..={BRUTE_FORCE_MAX_LEVELS} supply levels, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("supply levels must be positive"));
    }
    if stream.events().iter().any(|e| !e.is_arrival()) {
        return Err(Error::invalid("brute force takes arrival-only streams"));
    }
    let mut memo = HashMap::new();
    let value = search(stream, kappa, grid, 1, 0, &mut memo);
    let mut path = Vec::with_capacity(horizon as usize);
    let mut mask = 0u32;
    for t in 1..=horizon {
        let (_, level, accepted) = memo[&(t, mask)];
        path.push(grid[level]);
        if accepted {
            mask |= 1 << (t - 1);
        }
    }
    Ok(BruteForce { value, path })
}

type Memo = HashMap<(u64, u32), (f64, usize, bool)>;

fn demand_at(stream: &LoanStream<f64>, t: u64, mask: u32) -> f64 {
    stream
        .events()
        .iter()
        .filter(|e| mask & (1 << (e.t - 1)) != 0 && e.t <= t && t < e.t + e.duration)
        .map(|e| e.size)
        .sum()
}

fn search(stream: &LoanStream<f64>, kappa: f64, grid: &[f64], t: u64, mask: u32, memo: &mut Memo) -> f64 {
    if t > stream.horizon() {
        return 0.0;
    }
    if let Some(hit) = memo.get(&(t, mask)) {
        return hit.0;
    }
    let before = demand_at(stream, t, mask);
    let event = stream.event_at(t);
    let mut best = (f64::NEG_INFINITY, 0usize, false);
    for (i, &s) in grid.iter().enumerate() {
        let (gain, accepted) = match event {
            Some(ev) if before + ev.size <= s + f64::capacity_slack(&s) => {
                let d = if ev.duration > 0 { before + ev.size } else { before };
                (kappa * (d / s).min(1.0) * ev.duration as f64 * ev.size, true)
            }
            _ => (0.0, false),
        };
        let next = if accepted { mask | (1 << (t - 1)) } else { mask };
        let total = gain + search(stream, kappa, grid, t + 1, next, memo);
        if total > best.0 {
            best = (total, i, accepted);
        }
    }
    memo.insert((t, mask), best);
    best.0
}

/// `R* - R_alg(T)`.
pub fn regret(revenue_cumulative: &[f64], r_star: f64) -> f64 {
    r_star - revenue_cumulative.last().copied().unwrap_or(0.0)
}

/// `sum_t max-step value - sum_t realized value`.
pub fn dynamic_regret(per_step_max: &[f64], per_step_alg: &[f64]) -> Result<f64> {
    if per_step_max.len() != per_step_alg.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            per_step_max.len(),
            per_step_alg.len()
        )));
    }
    Ok(per_step_max.iter().sum::<f64>() - per_step_alg.iter().sum::<f64>())
}

/// `sum_{t >= 2} ||x_t - x_{t-1}||_2`; zero for fewer than two points.
pub fn path_length<P: AsRef<[f64]>>(series: &[P]) -> f64 {
    series
        .windows(2)
        .map(|w| {
            w[1].as_ref()
                .iter()
                .zip(w[0].as_ref())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

pub fn path_length_scalar(series: &[f64]) -> f64 {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// `R_alg / R*`, with `0/0 = 1`.
pub fn competitive_ratio(r_alg: f64, r_star: f64) -> Result<f64> {
    if r_star == 0.0 {
        if r_alg == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::numeric(format!("benchmark is zero but algorithm earned {r_alg}")));
    }
    Ok((r_alg / r_star).max(0.0))
}

/// What the algorithm is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Benchmark {
    /// Supply tracks demand exactly: every admissible loan pays `kappa`.
    Hindsight { supply_total: f64 },
    /// Best constant supply in `[s_min, s_max]`, evaluated by rerunning the
    /// pooled engine; per-step maxima use the lowest admissible supply.
    BestFixedSupply { s_min: f64, s_max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretReport {
    pub r_alg: f64,
    pub r_star: f64,
    pub regret: f64,
    pub dynamic_benchmark: f64,
    pub dynamic_regret: f64,
    /// `dynamic_regret - regret`; non-negative.
    pub decomposition_residual: f64,
    pub path_length: f64,
    pub competitive_ratio: f64,
    /// `R_alg` over the sum of per-step maxima.
    pub competitive_ratio_step: f64,
    /// Supply attaining `r_star` under [`Benchmark::BestFixedSupply`].
    pub best_supply: Option<f64>,
    pub open_at_horizon: usize,
    #[serde(skip)]
    pub per_step_alg: Vec<f64>,
    #[serde(skip)]
    pub per_step_max: Vec<f64>,
}

fn step_value(settings: &EngineSettings, horizon: u64, t: u64, duration: u64, size: f64, price: f64) -> f64 {
    match settings.mode {
        InterestMode::FixedInterest => price * duration as f64 * size,
        InterestMode::VariableInterest => {
            let terms = settings.window.terms(duration);
            let last = (t + terms).min(horizon + 1);
            price * size * last.saturating_sub(t) as f64
        }
    }
}

/// Best constant supply over `S_min`, `S_max` and up to 64 quantiles of the
/// uncapped demand path.
pub fn best_fixed_supply(stream: &LoanStream<f64>, settings: &EngineSettings, s_min: f64, s_max: f64) -> Result<(f64, f64)> {
    if !(s_min > 0.0) || s_min > s_max {
        return Err(Error::invalid(format!("need 0 < s_min <= s_max, got [{s_min}, {s_max}]")));
    }
    let mut demand = uncapped_demand(stream);
    demand.sort_by(f64::total_cmp);
    let mut candidates = vec![s_min, s_max];
    if !demand.is_empty() {
        for k in 0..=64 {
            let idx = (k * (demand.len() - 1)) / 64;
            candidates.push(demand[idx].clamp(s_min, s_max));
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let results: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|&s| simulate(stream, settings, &mut FixedSupply { supply: s }).map(|r| r.total_revenue()))
        .collect();
    let mut best = (s_min, f64::NEG_INFINITY);
    for (s, r) in candidates.iter().zip(results) {
        let r = r?;
        if r > best.1 {
            best = (*s, r);
        }
    }
    Ok(best)
}

/// `D(t)` with every arrival admitted.
pub fn uncapped_demand(stream: &LoanStream<f64>) -> Vec<f64> {
    let mut market = Market::<f64>::new();
    let unbounded = f64::MAX;
    (1..=stream.horizon())
        .map(|t| {
            market
                .advance(t, stream.event_at(t), &unbounded)
                .map(|o| o.state.active_demand)
                .unwrap_or(0.0)
        })
        .collect()
}

/// Regret report for a completed run against `benchmark`.
pub fn evaluate(stream: &LoanStream<f64>, run: &RunTrajectory<f64>, benchmark: &Benchmark) -> Result<RegretReport> {
    let settings = run.settings;
    let kappa = settings.kappa;
    let horizon = stream.horizon();
    let demand = uncapped_demand(stream);
    let (s_floor, s_cap, r_star, best_supply) = match *benchmark {
        Benchmark::Hindsight { supply_total } => {
            let r = match settings.mode {
                InterestMode::FixedInterest => hindsight_fixed_optimal(stream, &kappa, &supply_total),
                InterestMode::VariableInterest => {
                    hindsight_variable_optimal(stream, kappa, supply_total, settings.window)
                }
            };
            (0.0, supply_total, r, None)
        }
        Benchmark::BestFixedSupply { s_min, s_max } => {
            let (s, r) = best_fixed_supply(stream, &settings, s_min, s_max)?;
            (s_min, s_max, r, Some(s))
        }
    };
    let cap = s_cap + f64::capacity_slack(&s_cap);
    let mut per_step_max = vec![0.0; horizon as usize];
    for ev in stream.arrivals().filter(|e| e.size <= cap) {
        let d = demand[ev.t as usize - 1];
        let price = if s_floor > 0.0 {
            pooled_price(&d, &s_floor, &kappa)?
        } else {
            kappa
        };
        per_step_max[ev.t as usize - 1] = step_value(&settings, horizon, ev.t, ev.duration, ev.size, price);
    }
    let r_alg = run.total_revenue();
    let per_step_alg = run.ledger.per_step.clone();
    let dynamic_benchmark: f64 = per_step_max.iter().sum::<f64>().max(r_star);
    let dyn_regret = dynamic_benchmark - r_alg;
    let bench_path: Vec<f64> = demand.iter().map(|d| d.max(s_floor).min(s_cap)).collect();
    Ok(RegretReport {
        r_alg,
        r_star,
        regret: r_star - r_alg,
        dynamic_benchmark,
        dynamic_regret: dyn_regret,
        decomposition_residual: dyn_regret - (r_star - r_alg),
        path_length: path_length_scalar(&bench_path),
        competitive_ratio: competitive_ratio(r_alg, r_star)?,
        competitive_ratio_step: competitive_ratio(r_alg, dynamic_benchmark)?,
        best_supply,
        open_at_horizon: run.open_at_horizon,
        per_step_alg,
        per_step_max,
    })
}

/// Pooled fixed-interest regret against the hindsight benchmark (exact when
/// `V` is rational).
pub fn pooled_regret<V: Real>(stream: &LoanStream<V>, supply: V, kappa: f64) -> Result<(V, V)> {
    let r = run_pooled_fixed(stream, supply.clone(), kappa)?;
    let star = hindsight_fixed_optimal(stream, &V::from_f64(kappa), &supply);
    Ok((star, r.total_revenue()))
}

/// Demand path check used by tests and reports.
pub fn demand_at_horizon<V: Real>(stream: &LoanStream<V>) -> Result<V> {
    active_demand(stream.events(), stream.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{gen_example1, gen_example2_full, gen_example3};
    use crate::model::LoanEvent;
    use crate::pricing::run_curated_fixed;
    use num::BigRational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hindsight_examples() {
        let one = BigRational::from_int(1);
        let s1 = gen_example1::<BigRational>(10).unwrap();
        assert_eq!(hindsight_fixed_optimal(&s1, &one, &one), BigRational::from_int(10));
        let s2 = gen_example2_full::<BigRational>(10).unwrap();
        assert_eq!(hindsight_fixed_optimal(&s2, &one, &one), one);
        let s3 = gen_example3::<BigRational>(10, BigRational::from_ratio(1, 10)).unwrap();
        assert_eq!(hindsight_fixed_optimal(&s3, &one, &one), BigRational::from_int(18));
    }

    #[test]
    fn regret_examples() {
        let s1 = gen_example1::<f64>(10).unwrap();
        let r = run_pooled_fixed(&s1, 1.0, 1.0).unwrap();
        let star = hindsight_fixed_optimal(&s1, &1.0, &1.0);
        assert!((regret(&r.ledger.cumulative, star) - 4.5).abs() < 1e-12);
        assert_eq!(regret(&[1.0, 2.0, 3.0], 3.0), 0.0);
        let flat = [0.5; 6];
        assert_eq!(dynamic_regret(&flat, &flat).unwrap(), 0.0);
        assert!(dynamic_regret(&flat, &flat[1..]).is_err());
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(path_length_scalar(&[0.3; 5]), 0.0);
        assert_eq!(path_length_scalar(&[0.0, 1.0, 0.0]), 2.0);
        assert_eq!(path_length(&[vec![0.0, 0.0], vec![3.0, 4.0]]), 5.0);
        let t_max = 20;
        let s1 = gen_example1::<f64>(t_max).unwrap();
        let run = run_pooled_fixed(&s1, 1.0, 1.0).unwrap();
        let rep = evaluate(&s1, &run, &Benchmark::Hindsight { supply_total: 1.0 }).unwrap();
        let oracle: f64 = (2..=t_max).map(|_| 1.0 / t_max as f64).sum();
        assert!((rep.path_length - oracle).abs() < 1e-12);
        assert!((oracle - (t_max as f64 - 1.0) / t_max as f64).abs() < 1e-12);
    }

    #[test]
    fn competitive_ratio_examples() {
        let s2 = gen_example2_full::<f64>(10).unwrap();
        let r = run_pooled_fixed(&s2, 1.0, 1.0).unwrap();
        let cr = competitive_ratio(r.total_revenue(), hindsight_fixed_optimal(&s2, &1.0, &1.0)).unwrap();
        assert!((cr - 0.055).abs() < 1e-12 && cr <= 0.1);
        let s1 = gen_example1::<f64>(4000).unwrap();
        let r = run_pooled_fixed(&s1, 1.0, 1.0).unwrap();
        let cr = competitive_ratio(r.total_revenue(), 4000.0).unwrap();
        assert!((cr - 0.5).abs() < 1e-3);
        assert_eq!(competitive_ratio(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(competitive_ratio(0.0, 0.0).unwrap(), 1.0);
        assert!(competitive_ratio(0.1, 0.0).is_err());
    }

    #[test]
    fn brute_force_single_loan() {
        let s = LoanStream::from_events(vec![LoanEvent::new(1, 0.35, 3)]).unwrap();
        let grid: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
        let bf = hindsight_bruteforce(&s, 1.0, &grid).unwrap();
        assert!((bf.value - 3.0 * 0.35).abs() < 1e-12);
        assert!((bf.path[0] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn brute_force_drops_cheapest_overflow() {
        // 0.6 for 4 steps, then 0.5 for 1 step, then 0.4 for 3 steps, S_max = 1
        let s = LoanStream::from_events(vec![
            LoanEvent::new(1, 0.6, 4),
            LoanEvent::new(2, 0.5, 1),
            LoanEvent::new(3, 0.4, 3),
        ])
        .unwrap();
        let grid: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
        let bf = hindsight_bruteforce(&s, 1.0, &grid).unwrap();
        // the 0.5 loan (tau l = 0.5) is the cheapest to drop: 2.4 + 1.2
        assert!((bf.value - 3.6).abs() < 1e-9, "{}", bf.value);
        assert!(bf.path[1] < 0.6 + 0.5);
    }

    #[test]
    fn brute_force_budget() {
        let s = gen_example1::<f64>(9).unwrap();
        assert!(matches!(hindsight_bruteforce(&s, 1.0, &[1.0]), Err(Error::Budget(_))));
        let s = gen_example1::<f64>(3).unwrap();
        let grid: Vec<f64> = (1..=22).map(|k| k as f64 / 22.0).collect();
        assert!(matches!(hindsight_bruteforce(&s, 1.0, &grid), Err(Error::Budget(_))));
    }

    #[test]
    fn brute_force_agrees_with_analytic_benchmark() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
        let mut checked = 0;
        while checked < 50 {
            let horizon = rng.random_range(1..=8u64);
            let mut events = Vec::new();
            for t in 1..=horizon {
                if rng.random_bool(0.8) {
                    events.push(LoanEvent::new(t, 0.05 * rng.random_range(1..=4) as f64, rng.random_range(0..=horizon)));
                }
            }
            let s = LoanStream::new(events, horizon).unwrap();
            if uncapped_demand(&s).iter().cloned().fold(0.0, f64::max) > 1.0 {
                continue;
            }
            let kappa = rng.random_range(0.5..2.0);
            let bf = hindsight_bruteforce(&s, kappa, &grid).unwrap();
            let analytic = hindsight_fixed_optimal(&s, &kappa, &1.0);
            let mass: f64 = s.arrivals().map(|e| e.size * e.duration as f64).sum();
            assert!((bf.value - analytic).abs() <= 0.02 * kappa * mass + 1e-12, "{} vs {analytic}", bf.value);
            checked += 1;
        }
    }

    #[test]
    fn report_invariants() {
        let s3 = gen_example3::<f64>(40, 0.05).unwrap();
        let s1 = gen_example1::<f64>(40).unwrap();
        for s in [&s1, &s3] {
            let run = run_pooled_fixed(s, 1.0, 1.0).unwrap();
            for b in [
                Benchmark::Hindsight { supply_total: 1.0 },
                Benchmark::BestFixedSupply { s_min: 0.05, s_max: 1.0 },
            ] {
                let rep = evaluate(s, &run, &b).unwrap();
                assert!(rep.dynamic_regret >= rep.regret - 1e-12);
                assert!(rep.decomposition_residual >= -1e-12);
                if rep.r_star >= rep.r_alg && rep.r_alg >= 0.0 {
                    assert!((0.0..=1.0).contains(&rep.competitive_ratio));
                }
                assert_eq!(rep.competitive_ratio == 1.0, rep.regret.abs() < 1e-12);
            }
        }
        let perfect = run_pooled_fixed(&s1, 1.0, 1.0).unwrap();
        let rep = evaluate(&s1, &perfect, &Benchmark::BestFixedSupply { s_min: 1.0, s_max: 1.0 }).unwrap();
        assert!(rep.regret.abs() < 1e-12 && rep.competitive_ratio == 1.0);
    }

    #[test]
    fn curated_example1_regret_is_bounded() {
        use crate::model::{CostFunction, CuratorProfile};
        use crate::pricing::{CuratedMode, TrackingConfig};
        let mut regrets = Vec::new();
        for t_max in [10u64, 100, 1000, 10_000] {
            let s = gen_example1::<f64>(t_max).unwrap();
            let curators = vec![CuratorProfile::new(1.0, 1.0, CostFunction::zero()).unwrap()];
            let cfg = CuratedMode::Tracking(TrackingConfig::new(curators, 1e-9));
            let run = run_curated_fixed(&s, &cfg, 1.0).unwrap();
            let rep = evaluate(&s, &run, &Benchmark::Hindsight { supply_total: 1.0 }).unwrap();
            regrets.push(rep.regret);
        }
        assert!(regrets.iter().all(|r| *r <= 1.0 + 1e-9), "{regrets:?}");
    }
}
