//! Adversarial example streams, a seeded stochastic generator and
//! empirical checks of the distributional assumptions.

mod validate;

pub use validate::{
    check_bounded_increment, check_reset_condition, check_variable_rate_concentration, AssumptionReport,
    DEFAULT_SLACK, GRID_POINTS, MIN_SAMPLES,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::model::{LoanEvent, LoanStream};
use crate::num::Real;
use crate::{Error, Result};

fn check_horizon(horizon: u64) -> Result<()> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    Ok(())
}

/// `T` loans of size `1/T` and duration `T`; `D(t) = t/T`.
pub fn gen_example1<V: Real>(horizon: u64) -> Result<LoanStream<V>> {
    check_horizon(horizon)?;
    let h = horizon as i64;
    let events = (1..=horizon)
        .map(|t| LoanEvent::new(t, V::from_ratio(1, h), horizon))
        .collect();
    LoanStream::new(events, horizon)
}

/// Loans of size `1/T^2` with duration `T - t`. At `t = T` the loan has
/// duration 0 and never becomes active.
pub fn gen_example2<V: Real>(horizon: u64) -> Result<LoanStream<V>> {
    check_horizon(horizon)?;
    let h = horizon as i64;
    let events = (1..=horizon)
        .map(|t| LoanEvent::new(t, V::from_ratio(1, h * h), horizon - t))
        .collect();
    LoanStream::new(events, horizon)
}

/// Loans of size `1/T^2` that all stay open through the horizon, so that
/// `D(t) = t/T^2` for every `t <= T`.
pub fn gen_example2_full<V: Real>(horizon: u64) -> Result<LoanStream<V>> {
    check_horizon(horizon)?;
    let h = horizon as i64;
    let events = (1..=horizon)
        .map(|t| LoanEvent::new(t, V::from_ratio(1, h * h), horizon))
        .collect();
    LoanStream::new(events, horizon)
}

/// One loan of size `1 - delta` followed by `T - 1` loans of size `delta`,
/// all of duration `T`.
pub fn gen_example3<V: Real>(horizon: u64, delta: V) -> Result<LoanStream<V>> {
    if horizon < 2 {
        return Err(Error::invalid("example 3 needs a horizon of at least 2"));
    }
    if !(delta > V::zero() && delta < V::one()) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let mut events = Vec::with_capacity(horizon as usize);
    events.push(LoanEvent::new(1, V::one() - delta.clone(), horizon));
    for t in 2..=horizon {
        events.push(LoanEvent::new(t, delta.clone(), horizon));
    }
    LoanStream::new(events, horizon)
}

fn default_size_max() -> f64 {
    1.0
}

fn default_supply_total() -> f64 {
    1.0
}

/// Parameters of the stochastic loan process.
///
/// Sizes follow a random walk with Laplace increments of rate `tail_rate`,
/// reflected into `[min_demand, size_max]`. Durations are `1 + Geometric`
/// with mean `duration_mean`, truncated at `max_duration` (default: the
/// horizon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticDemandParams {
    pub increment_scale: f64,
    pub tail_rate: f64,
    pub duration_mean: f64,
    pub reset_epsilon: f64,
    pub min_demand: f64,
    pub horizon: u64,
    #[serde(default = "default_size_max")]
    pub size_max: f64,
    #[serde(default = "default_supply_total")]
    pub supply_total: f64,
    #[serde(default)]
    pub initial_size: Option<f64>,
    #[serde(default)]
    pub max_duration: Option<u64>,
}

impl StochasticDemandParams {
    pub fn new(
        increment_scale: f64,
        tail_rate: f64,
        duration_mean: f64,
        reset_epsilon: f64,
        min_demand: f64,
        horizon: u64,
    ) -> Self {
        StochasticDemandParams {
            increment_scale,
            tail_rate,
            duration_mean,
            reset_epsilon,
            min_demand,
            horizon,
            size_max: default_size_max(),
            supply_total: default_supply_total(),
            initial_size: None,
            max_duration: None,
        }
    }

    pub fn max_duration(&self) -> u64 {
        self.max_duration.unwrap_or(self.horizon).max(1)
    }

    /// Upper bound on the active demand of any generated stream.
    pub fn demand_cap(&self) -> f64 {
        self.size_max * self.max_duration() as f64
    }

    /// Decay rate of `P[l tau > e' S_total]` in `e'` implied by the
    /// largest size and the geometric duration tail.
    pub fn reset_rate(&self) -> f64 {
        let q = 1.0 - 1.0 / self.duration_mean;
        if q <= 0.0 {
            return f64::INFINITY;
        }
        (self.supply_total / self.size_max) * -q.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("increment_scale", self.increment_scale),
            ("tail_rate", self.tail_rate),
            ("duration_mean", self.duration_mean),
            ("reset_epsilon", self.reset_epsilon),
            ("min_demand", self.min_demand),
            ("size_max", self.size_max),
            ("supply_total", self.supply_total),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        check_horizon(self.horizon)?;
        if self.duration_mean < 1.0 {
            return Err(Error::invalid(format!(
                "duration_mean must be at least 1, got {}",
                self.duration_mean
            )));
        }
        if self.size_max < self.min_demand {
            return Err(Error::invalid(format!(
                "size_max {} is below min_demand {}",
                self.size_max, self.min_demand
            )));
        }
        if let Some(l0) = self.initial_size {
            if !(self.min_demand..=self.size_max).contains(&l0) {
                return Err(Error::invalid(format!(
                    "initial_size {l0} outside [{}, {}]",
                    self.min_demand, self.size_max
                )));
            }
        }
        let rate = self.reset_rate();
        if rate < 1.0 {
            return Err(Error::invalid(format!(
                "reset tail unattainable: P[l tau > e' S] decays at rate {rate:.4} < 1 \
                 (supply_total / size_max = {:.4}, duration_mean = {}); \
                 shorten durations or lower size_max",
                self.supply_total / self.size_max,
                self.duration_mean
            )));
        }
        Ok(())
    }
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    let period = 2.0 * width;
    let y = (x - lo).rem_euclid(period);
    if y <= width {
        lo + y
    } else {
        lo + period - y
    }
}

/// Seeded stochastic stream with one arrival per step.
pub fn gen_stochastic(params: &StochasticDemandParams, seed: u64) -> Result<LoanStream<f64>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = params.min_demand;
    let hi = params.size_max;
    let step = if params.tail_rate.is_finite() {
        Some(Exp::new(params.tail_rate).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let geom = Geometric::new(1.0 / params.duration_mean).map_err(|e| Error::invalid(e.to_string()))?;
    let cap = params.max_duration();
    let mut size = params.initial_size.unwrap_or(lo);
    let mut events = Vec::with_capacity(params.horizon as usize);
    for t in 1..=params.horizon {
        if t > 1 {
            if let Some(exp) = &step {
                let mag: f64 = exp.sample(&mut rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                size = reflect(size + sign * mag, lo, hi);
            }
        }
        let tau = 1u64.saturating_add(geom.sample(&mut rng)).min(cap);
        events.push(LoanEvent::new(t, size, tau));
    }
    LoanStream::new(events, params.horizon)
}
