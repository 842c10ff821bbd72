//! The pro-rata curator game: each curator earns its share of protocol
//! revenue in proportion to allocated supply and pays a convex cost.

use serde::{Deserialize, Serialize};

use crate::learners::StepSchedule;
use crate::model::{total_capacity, CuratorProfile};
use crate::pricing::{StepRecord, SupplyPolicy};
use crate::{Error, Result};

/// What the cost function is charged on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostBasis {
    /// `C(1 - alpha)`: cost of idle, unallocated supply.
    #[default]
    Idle,
    /// `C(alpha)`: cost of sourcing allocated supply.
    Allocated,
}

impl CostBasis {
    fn argument(&self, alpha: f64) -> f64 {
        match self {
            CostBasis::Idle => 1.0 - alpha,
            CostBasis::Allocated => alpha,
        }
    }

    /// d/d(alpha) of the cost term.
    fn slope(&self, profile: &CuratorProfile, alpha: f64) -> f64 {
        match self {
            CostBasis::Idle => -profile.cost.derivative(1.0 - alpha),
            CostBasis::Allocated => profile.cost.derivative(alpha),
        }
    }
}

fn check_state(n: usize, alphas: &[f64], revenue: f64, profiles: &[CuratorProfile]) -> Result<()> {
    if alphas.len() != profiles.len() {
        return Err(Error::invalid(format!(
            "{} allocations for {} curators",
            alphas.len(),
            profiles.len()
        )));
    }
    if n >= profiles.len() {
        return Err(Error::invalid(format!("curator index {n} out of range")));
    }
    if !(revenue >= 0.0) {
        return Err(Error::invalid(format!("revenue must be non-negative, got {revenue}")));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::invalid("allocations must lie in (0, 1]"));
    }
    Ok(())
}

fn split(n: usize, alphas: &[f64], profiles: &[CuratorProfile]) -> (f64, f64) {
    let own = alphas[n] * profiles[n].capacity;
    let others: f64 = alphas
        .iter()
        .zip(profiles)
        .enumerate()
        .filter(|(m, _)| *m != n)
        .map(|(_, (a, p))| a * p.capacity)
        .sum();
    (own, others)
}

/// `pi_n = alpha_n S_n / S * R - C_n(.)`.
pub fn curator_profit(n: usize, alphas: &[f64], revenue: f64, profiles: &[CuratorProfile], basis: CostBasis) -> Result<f64> {
    check_state(n, alphas, revenue, profiles)?;
    let (own, others) = split(n, alphas, profiles);
    Ok(own / (own + others) * revenue - profiles[n].cost.value(basis.argument(alphas[n])))
}

/// `d pi_n / d alpha_n = R S_n S_{-n} / S^2 - d/d(alpha) C_n(.)`.
pub fn profit_gradient(n: usize, alphas: &[f64], revenue: f64, profiles: &[CuratorProfile], basis: CostBasis) -> Result<f64> {
    check_state(n, alphas, revenue, profiles)?;
    let (own, others) = split(n, alphas, profiles);
    let s = own + others;
    Ok(revenue * profiles[n].capacity * others / (s * s) - basis.slope(&profiles[n], alphas[n]))
}

/// `d^2 pi_n / d alpha_n^2` (negative: each curator's profit is concave in its own allocation).
pub fn profit_curvature(n: usize, alphas: &[f64], revenue: f64, profiles: &[CuratorProfile]) -> Result<f64> {
    check_state(n, alphas, revenue, profiles)?;
    let (own, others) = split(n, alphas, profiles);
    let s = own + others;
    let sn = profiles[n].capacity;
    Ok(-2.0 * revenue * sn * sn * others / (s * s * s) - profiles[n].cost.quadratic)
}

/// One simultaneous projected gradient-ascent step for every curator, each
/// holding the others at their current allocations.
pub fn pro_rata_game_step(
    alphas: &[f64],
    revenue: f64,
    profiles: &[CuratorProfile],
    eta: f64,
    basis: CostBasis,
    alpha_floor: f64,
) -> Result<Vec<f64>> {
    (0..profiles.len())
        .map(|n| {
            let g = profit_gradient(n, alphas, revenue, profiles, basis)?;
            if !g.is_finite() {
                return Err(Error::numeric(format!("non-finite profit gradient for curator {n}")));
            }
            Ok((alphas[n] + eta * g).clamp(alpha_floor, 1.0))
        })
        .collect()
}

/// Nash equilibrium of the static game at revenue `R`, by Gauss-Seidel best
/// responses (each found by bisection on the decreasing own-gradient).
pub fn nash_equilibrium(profiles: &[CuratorProfile], revenue: f64, basis: CostBasis, alpha_floor: f64) -> Result<Vec<f64>> {
    if profiles.is_empty() {
        return Err(Error::invalid("at least one curator is required"));
    }
    let mut alphas = vec![1.0; profiles.len()];
    for _ in 0..100_000 {
        let mut moved: f64 = 0.0;
        for n in 0..profiles.len() {
            let grad_at = |a: f64, alphas: &mut Vec<f64>| {
                alphas[n] = a;
                profit_gradient(n, alphas, revenue, profiles, basis)
            };
            let old = alphas[n];
            let best = if grad_at(1.0, &mut alphas)? >= 0.0 {
                1.0
            } else if grad_at(alpha_floor, &mut alphas)? <= 0.0 {
                alpha_floor
            } else {
                let (mut lo, mut hi) = (alpha_floor, 1.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if grad_at(mid, &mut alphas)? > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            alphas[n] = best;
            moved = moved.max((best - old).abs());
        }
        if moved < 1e-14 {
            return Ok(alphas);
        }
    }
    Err(Error::numeric("best-response iteration did not converge"))
}

fn default_alpha_floor() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuratorGameConfig {
    /// Initial allocations are taken from each profile's `alpha`.
    pub curators: Vec<CuratorProfile>,
    pub learner: StepSchedule,
    pub low_cost_fraction: f64,
    pub c_star: f64,
    #[serde(default)]
    pub basis: CostBasis,
    /// Baseline added to the previous step's booked revenue.
    #[serde(default)]
    pub revenue_floor: f64,
    #[serde(default = "default_alpha_floor")]
    pub alpha_floor: f64,
}

impl CuratorGameConfig {
    pub fn new(curators: Vec<CuratorProfile>, learner: StepSchedule) -> Self {
        CuratorGameConfig {
            curators,
            learner,
            low_cost_fraction: 1.0,
            c_star: 1.0,
            basis: CostBasis::default(),
            revenue_floor: 0.0,
            alpha_floor: default_alpha_floor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.curators.is_empty() {
            return Err(Error::invalid("at least one curator is required"));
        }
        for c in &self.curators {
            c.validate()?;
        }
        if !(self.low_cost_fraction > 0.0 && self.low_cost_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "low_cost_fraction must lie in (0, 1], got {}",
                self.low_cost_fraction
            )));
        }
        if !(self.c_star > 0.0 && self.c_star <= 1.0) {
            return Err(Error::invalid(format!("c_star must lie in (0, 1], got {}", self.c_star)));
        }
        if !(self.revenue_floor >= 0.0) {
            return Err(Error::invalid("revenue_floor must be non-negative"));
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor <= 1.0) {
            return Err(Error::invalid("alpha_floor must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Number of curators with `C'(0) <= c* S_n`.
    pub fn low_cost_count(&self) -> usize {
        self.curators
            .iter()
            .filter(|c| c.cost.derivative(0.0) <= self.c_star * c.capacity)
            .count()
    }

    pub fn low_cost_required(&self) -> usize {
        (self.low_cost_fraction * self.curators.len() as f64 - 1e-9).ceil() as usize
    }

    pub fn low_cost_warning(&self) -> Option<String> {
        let have = self.low_cost_count();
        let need = self.low_cost_required();
        (have < need).then(|| {
            format!("only {have} of {} curators are low-cost (need {need} with C'(0) <= c* S_n)", self.curators.len())
        })
    }
}

/// Curators play one projected gradient step per time index on their own
/// profit, fed with the previous step's booked revenue plus the floor.
#[derive(Clone, Debug)]
pub struct GamePolicy {
    config: CuratorGameConfig,
    alphas: Vec<f64>,
    last_revenue: f64,
    floor_held: bool,
    warnings: Vec<String>,
}

impl GamePolicy {
    pub fn new(config: CuratorGameConfig) -> Result<Self> {
        config.validate()?;
        let alphas = config.curators.iter().map(|c| c.alpha.max(config.alpha_floor)).collect();
        let warnings = config.low_cost_warning().into_iter().collect();
        Ok(GamePolicy {
            config,
            alphas,
            last_revenue: 0.0,
            floor_held: true,
            warnings,
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.alphas
    }

    /// Whether `R(t) >= c* S(alpha, t)` held at every step so far.
    pub fn floor_held(&self) -> bool {
        self.floor_held
    }

    fn supply_now(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.config.curators)
            .map(|(a, c)| a * c.capacity)
            .sum()
    }
}

impl SupplyPolicy<f64> for GamePolicy {
    fn supply(&mut self, t: u64, _demand_before: &f64) -> Result<f64> {
        let revenue = self.last_revenue + self.config.revenue_floor;
        let eta = self.config.learner.eta(t);
        self.alphas = pro_rata_game_step(
            &self.alphas,
            revenue,
            &self.config.curators,
            eta,
            self.config.basis,
            self.config.alpha_floor,
        )?;
        let s = self.supply_now();
        if revenue < self.config.c_star * s {
            self.floor_held = false;
        }
        Ok(s)
    }

    fn observe(&mut self, step: &StepRecord<'_, f64>) -> Result<()> {
        self.last_revenue = *step.revenue;
        Ok(())
    }

    fn alphas(&self) -> Vec<f64> {
        self.alphas.clone()
    }

    fn weights(&self) -> Vec<f64> {
        self.alphas
            .iter()
            .zip(&self.config.curators)
            .map(|(a, c)| a * c.capacity)
            .collect()
    }

    fn warnings(&self) -> Vec<String> {
        let mut w = self.warnings.clone();
        if !self.floor_held {
            w.push(format!(
                "minimum revenue R(t) >= c* S(alpha, t) failed at some step (c* = {})",
                self.config.c_star
            ));
        }
        w
    }
}

/// Total capacity of the game's curators.
pub fn game_capacity(config: &CuratorGameConfig) -> f64 {
    total_capacity(&config.curators)
}
