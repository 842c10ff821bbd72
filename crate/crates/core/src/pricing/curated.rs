//! Curated supply: aggregate demand tracking, or the pro-rata curator game.

use serde::{Deserialize, Serialize};

use crate::learners::{gradient_step, Interval};
use crate::model::{total_capacity, CuratorProfile, LoanStream};
use crate::pricing::game::{CuratorGameConfig, GamePolicy};
use crate::pricing::{simulate, EngineSettings, RunTrajectory, StepRecord, SupplyPolicy};
use crate::{Error, Result};

/// Supply follows the carried-in demand plus a learned headroom:
/// `S_t = clamp(D(t-) + h_t, S_min, S_max)`, where `h` runs gradient descent
/// with step `1/k` on `(h - l_k)^2 / 2` over observed arrival sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub curators: Vec<CuratorProfile>,
    pub s_min: f64,
    /// Defaults to total curator capacity.
    #[serde(default)]
    pub s_max: Option<f64>,
}

impl TrackingConfig {
    pub fn new(curators: Vec<CuratorProfile>, s_min: f64) -> Self {
        TrackingConfig {
            curators,
            s_min,
            s_max: None,
        }
    }

    pub fn s_max(&self) -> f64 {
        self.s_max.unwrap_or_else(|| total_capacity(&self.curators))
    }

    pub fn validate(&self) -> Result<()> {
        if self.curators.is_empty() {
            return Err(Error::invalid("at least one curator is required"));
        }
        for c in &self.curators {
            c.validate()?;
        }
        let s_max = self.s_max();
        if !(self.s_min > 0.0) || self.s_min > s_max {
            return Err(Error::invalid(format!(
                "supply bounds must satisfy 0 < s_min <= s_max, got [{}, {s_max}]",
                self.s_min
            )));
        }
        if s_max > total_capacity(&self.curators) * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "s_max {s_max} exceeds total curator capacity {}",
                total_capacity(&self.curators)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrackingPolicy {
    config: TrackingConfig,
    capacity: f64,
    headroom: f64,
    observed: u64,
    supply: f64,
}

impl TrackingPolicy {
    pub fn new(config: TrackingConfig) -> Result<Self> {
        config.validate()?;
        let capacity = total_capacity(&config.curators);
        let s_max = config.s_max();
        Ok(TrackingPolicy {
            config,
            capacity,
            headroom: s_max,
            observed: 0,
            supply: s_max,
        })
    }

    pub fn headroom(&self) -> f64 {
        self.headroom
    }
}

impl SupplyPolicy<f64> for TrackingPolicy {
    fn supply(&mut self, _t: u64, demand_before: &f64) -> Result<f64> {
        self.supply = (demand_before + self.headroom).clamp(self.config.s_min, self.config.s_max());
        Ok(self.supply)
    }

    fn observe(&mut self, step: &StepRecord<'_, f64>) -> Result<()> {
        if let Some(size) = step.arrival_size {
            self.observed += 1;
            let domain = Interval::new(0.0, self.config.s_max())?;
            self.headroom = gradient_step(self.headroom, self.headroom - size, 1.0 / self.observed as f64, &domain)?;
        }
        Ok(())
    }

    fn alphas(&self) -> Vec<f64> {
        let share = self.supply / self.capacity;
        vec![share; self.config.curators.len()]
    }

    fn weights(&self) -> Vec<f64> {
        let share = self.supply / self.capacity;
        self.config.curators.iter().map(|c| share * c.capacity).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuratedMode {
    Tracking(TrackingConfig),
    Game(CuratorGameConfig),
}

pub type CuratedConfig = CuratedMode;

impl CuratedMode {
    pub fn curators(&self) -> &[CuratorProfile] {
        match self {
            CuratedMode::Tracking(c) => &c.curators,
            CuratedMode::Game(g) => &g.curators,
        }
    }

    pub fn capacity(&self) -> f64 {
        total_capacity(self.curators())
    }
}

/// Curated run under arbitrary engine settings.
pub fn run_curated(stream: &LoanStream<f64>, config: &CuratedConfig, settings: &EngineSettings) -> Result<RunTrajectory<f64>> {
    match config {
        CuratedMode::Tracking(c) => simulate(stream, settings, &mut TrackingPolicy::new(c.clone())?),
        CuratedMode::Game(g) => simulate(stream, settings, &mut GamePolicy::new(g.clone())?),
    }
}

/// Curated model with fixed-interest pricing.
pub fn run_curated_fixed(stream: &LoanStream<f64>, config: &CuratedConfig, kappa: f64) -> Result<RunTrajectory<f64>> {
    run_curated(stream, config, &EngineSettings::fixed(kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{gen_example1, gen_example3};
    use crate::learners::StepSchedule;
    use crate::model::CostFunction;
    use crate::pricing::run_pooled_fixed;

    fn unit_curator() -> Vec<CuratorProfile> {
        vec![CuratorProfile::new(1.0, 1.0, CostFunction::zero()).unwrap()]
    }

    #[test]
    fn tracking_follows_example1_demand() {
        let t_max = 50;
        let s = gen_example1::<f64>(t_max).unwrap();
        let cfg = CuratedMode::Tracking(TrackingConfig::new(unit_curator(), 1e-6));
        let r = run_curated_fixed(&s, &cfg, 1.0).unwrap();
        for (t, st) in r.states.iter().enumerate().skip(1) {
            let d = (t + 1) as f64 / t_max as f64;
            assert!((st.supply - d).abs() < 1e-12, "t={} supply {}", t + 1, st.supply);
        }
        let hindsight = t_max as f64;
        assert!((hindsight - r.total_revenue() - (1.0 - 1.0 / t_max as f64)).abs() < 1e-9);
    }

    #[test]
    fn tracking_example3_is_capacity_bound() {
        let (t_max, delta) = (40u64, 0.1);
        let s = gen_example3::<f64>(t_max, delta).unwrap();
        let cfg = CuratedMode::Tracking(TrackingConfig::new(unit_curator(), 0.01));
        let r = run_curated_fixed(&s, &cfg, 1.0).unwrap();
        let expect = t_max as f64 * ((1.0 - delta).powi(2) + delta);
        assert!((r.total_revenue() - expect).abs() < 1e-9);
    }

    #[test]
    fn zero_cost_game_at_one_equals_pooled() {
        let s = gen_example3::<f64>(30, 0.07).unwrap();
        let wide: Vec<_> = (0..3).map(|_| CuratorProfile::new(0.5, 1.0, CostFunction::zero()).unwrap()).collect();
        let game = CuratorGameConfig::new(wide, StepSchedule::strongly_convex(0.5).unwrap());
        let curated = run_curated_fixed(&s, &CuratedMode::Game(game), 1.0).unwrap();
        let pooled = run_pooled_fixed(&s, 1.5, 1.0).unwrap();
        assert!((curated.total_revenue() - pooled.total_revenue()).abs() < 1e-12);

        let single = CuratorGameConfig::new(unit_curator(), StepSchedule::strongly_convex(0.5).unwrap());
        let curated = run_curated_fixed(&s, &CuratedMode::Game(single), 1.0).unwrap();
        let pooled = run_pooled_fixed(&s, 1.0, 1.0).unwrap();
        assert_eq!(curated.prices, pooled.prices);
        assert_eq!(curated.ledger.per_step, pooled.ledger.per_step);
        assert_eq!(curated.states, pooled.states);
    }

    #[test]
    fn supplier_split_sums_to_total() {
        let s = gen_example1::<f64>(40).unwrap();
        let curators: Vec<_> = [0.2, 0.3, 0.5]
            .iter()
            .map(|c| CuratorProfile::new(*c, 1.0, CostFunction::quadratic(0.01, 0.05)).unwrap())
            .collect();
        let mut game = CuratorGameConfig::new(curators.clone(), StepSchedule::strongly_convex(0.2).unwrap());
        game.basis = crate::pricing::CostBasis::Allocated;
        for cfg in [CuratedMode::Game(game), CuratedMode::Tracking(TrackingConfig::new(curators, 0.01))] {
            let r = run_curated_fixed(&s, &cfg, 1.0).unwrap();
            let total = r.total_revenue();
            assert!((r.ledger.supplier_total() - total).abs() <= 1e-12 * total);
            assert!(r.alphas.iter().flatten().all(|a| *a > 0.0 && *a <= 1.0));
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        let mut cfg = TrackingConfig::new(unit_curator(), 0.5);
        cfg.s_max = Some(0.2);
        assert!(TrackingPolicy::new(cfg.clone()).is_err());
        cfg.s_max = Some(2.0);
        assert!(TrackingPolicy::new(cfg).is_err());
    }
}
