//! Single-asset pricing engines.
//!
//! Every engine is [`simulate`] driven by a [`SupplyPolicy`]: the policy
//! posts a supply before the step's loan is processed, then observes the
//! outcome. The pooled model is [`FixedSupply`]; the curated models live in
//! [`curated`] and [`game`].

pub mod curated;
pub mod game;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{LoanStream, Market, MarketState, RevenueLedger};
use crate::num::Real;
use crate::{Error, Result};

pub use curated::{run_curated, run_curated_fixed, CuratedConfig, CuratedMode, TrackingConfig, TrackingPolicy};
pub use game::{
    curator_profit, nash_equilibrium, profit_curvature, profit_gradient, pro_rata_game_step, CostBasis, CuratorGameConfig, GamePolicy,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterestMode {
    #[default]
    FixedInterest,
    VariableInterest,
}

/// Which posted prices a variable-rate loan opened at `t` pays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableWindow {
    /// `p_t, ..., p_{t+tau-1}`: the steps on which the loan is active.
    #[default]
    Active,
    /// `p_t, ..., p_{t+tau}`.
    InclusiveEnd,
}

impl VariableWindow {
    /// Number of priced steps for a loan of duration `tau`.
    pub fn terms(&self, tau: u64) -> u64 {
        match (self, tau) {
            (_, 0) => 0,
            (VariableWindow::Active, _) => tau,
            (VariableWindow::InclusiveEnd, _) => tau + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineSettings {
    pub kappa: f64,
    pub mode: InterestMode,
    pub window: VariableWindow,
}

impl EngineSettings {
    pub fn fixed(kappa: f64) -> Self {
        EngineSettings {
            kappa,
            mode: InterestMode::FixedInterest,
            window: VariableWindow::Active,
        }
    }

    pub fn variable(kappa: f64, window: VariableWindow) -> Self {
        EngineSettings {
            kappa,
            mode: InterestMode::VariableInterest,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// `kappa * min(D / S, 1)`.
pub fn pooled_price<V: Real>(demand: &V, supply: &V, kappa: &V) -> Result<V> {
    if !(supply.clone() > V::zero()) {
        return Err(Error::numeric(format!("supply must be positive, got {supply}")));
    }
    Ok(kappa.clone() * V::min_of(demand.clone() / supply.clone(), V::one()))
}

/// Posts supply each step and learns from the outcome.
pub trait SupplyPolicy<V: Real> {
    /// Supply for step `t`, given the demand carried into the step.
    fn supply(&mut self, t: u64, demand_before: &V) -> Result<V>;

    /// Called after the step's loan is processed and its revenue booked.
    fn observe(&mut self, _step: &StepRecord<'_, V>) -> Result<()> {
        Ok(())
    }

    /// Allocation fraction per curator at the current step.
    fn alphas(&self) -> Vec<f64>;

    /// Allocated supply per curator, used for the pro-rata revenue split.
    fn weights(&self) -> Vec<V>;

    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

/// What a policy sees after a step.
pub struct StepRecord<'a, V> {
    pub t: u64,
    pub state: &'a MarketState<V>,
    /// Size of this step's arrival, accepted or not.
    pub arrival_size: Option<&'a V>,
    pub accepted: Option<bool>,
    pub price: &'a V,
    pub revenue: &'a V,
}

/// The pooled model: supply fixed at `S` for the whole run.
#[derive(Clone, Debug)]
pub struct FixedSupply<V> {
    pub supply: V,
}

impl<V: Real> SupplyPolicy<V> for FixedSupply<V> {
    fn supply(&mut self, _t: u64, _demand_before: &V) -> Result<V> {
        Ok(self.supply.clone())
    }

    fn alphas(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn weights(&self) -> Vec<V> {
        vec![self.supply.clone()]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunTrajectory<V = f64> {
    pub settings: EngineSettings,
    pub states: Vec<MarketState<V>>,
    pub prices: Vec<V>,
    /// Arrival outcome per step: accepted, rejected, or no arrival.
    pub outcomes: Vec<Option<bool>>,
    pub alphas: Vec<Vec<f64>>,
    pub ledger: RevenueLedger<V>,
    /// Variable-rate loans still open at the horizon (booked for elapsed steps).
    pub open_at_horizon: usize,
    pub warnings: Vec<String>,
}

impl<V: Real> RunTrajectory<V> {
    pub fn total_revenue(&self) -> V {
        self.ledger.total()
    }

    pub fn horizon(&self) -> u64 {
        self.states.len() as u64
    }

    pub fn rejections(&self) -> usize {
        self.outcomes.iter().filter(|o| **o == Some(false)).count()
    }

    pub fn supplies(&self) -> Vec<V> {
        self.states.iter().map(|s| s.supply.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.alphas.first().map(Vec::len).unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = [
            "t",
            "demand",
            "supply",
            "utilization",
            "price",
            "revenue_step",
            "revenue_cum",
            "rejected",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=n).map(|i| format!("alpha_{i}")));
        w.write_record(&header)?;
        for (i, st) in self.states.iter().enumerate() {
            let mut row = vec![
                st.t.to_string(),
                st.active_demand.to_f64().to_string(),
                st.supply.to_f64().to_string(),
                st.utilization.to_f64().to_string(),
                self.prices[i].to_f64().to_string(),
                self.ledger.per_step[i].to_f64().to_string(),
                self.ledger.cumulative[i].to_f64().to_string(),
                (st.rejected as u8).to_string(),
            ];
            row.extend(self.alphas[i].iter().map(|a| a.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct OpenLoan<V> {
    start: u64,
    size: V,
}

/// Runs `policy` over `stream` for its full horizon.
pub fn simulate<V: Real, P: SupplyPolicy<V>>(
    stream: &LoanStream<V>,
    settings: &EngineSettings,
    policy: &mut P,
) -> Result<RunTrajectory<V>> {
    settings.validate()?;
    let kappa = V::from_f64(settings.kappa);
    let horizon = stream.horizon();
    let n = horizon as usize;
    let mut market = Market::<V>::new();
    let mut ledger = RevenueLedger::new(policy.weights().len());
    let mut states = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut alphas = Vec::with_capacity(n);
    // prefix[i] = p_1 + ... + p_i
    let mut prefix: Vec<V> = vec![V::zero()];
    let mut closing: BTreeMap<u64, Vec<OpenLoan<V>>> = BTreeMap::new();
    let variable = settings.mode == InterestMode::VariableInterest;

    for t in 1..=horizon {
        let before = market.demand_before(t);
        let supply = policy.supply(t, &before)?;
        let event = stream.event_at(t);
        let outcome = market.advance(t, event, &supply)?;
        let price = pooled_price(&outcome.state.active_demand, &supply, &kappa)?;
        prefix.push(prefix[t as usize - 1].clone() + price.clone());

        let mut revenue = V::zero();
        if let (Some(ev), Some(true)) = (event, outcome.arrival) {
            if variable {
                let terms = settings.window.terms(ev.duration);
                if terms > 0 {
                    closing.entry(t + terms - 1).or_default().push(OpenLoan {
                        start: t,
                        size: ev.size.clone(),
                    });
                }
            } else {
                revenue = price.clone() * V::from_int(ev.duration as i64) * ev.size.clone();
            }
        }
        if variable {
            if let Some(loans) = closing.remove(&t) {
                for loan in loans {
                    let paid = prefix[t as usize].clone() - prefix[loan.start as usize - 1].clone();
                    revenue = revenue + loan.size * paid;
                }
            }
        }

        alphas.push(policy.alphas());
        ledger.record(revenue.clone(), &policy.weights());
        policy.observe(&StepRecord {
            t,
            state: &outcome.state,
            arrival_size: event.filter(|e| e.is_arrival()).map(|e| &e.size),
            accepted: outcome.arrival,
            price: &price,
            revenue: &revenue,
        })?;
        states.push(outcome.state);
        prices.push(price);
        outcomes.push(outcome.arrival);
    }

    let mut open_at_horizon = 0;
    if !closing.is_empty() {
        let mut tail = V::zero();
        for loans in closing.into_values() {
            for loan in loans {
                let paid = prefix[n].clone() - prefix[loan.start as usize - 1].clone();
                tail = tail + loan.size * paid;
                open_at_horizon += 1;
            }
        }
        if n > 0 {
            // Elapsed-step revenue of loans still open is booked on the last step.
            let last = n - 1;
            let weights = policy.weights();
            let denom = weights.iter().fold(V::zero(), |a, w| a + w.clone());
            ledger.per_step[last] = ledger.per_step[last].clone() + tail.clone();
            ledger.cumulative[last] = ledger.cumulative[last].clone() + tail.clone();
            if denom > V::zero() {
                for (acc, w) in ledger.per_supplier.iter_mut().zip(&weights) {
                    *acc = acc.clone() + w.clone() / denom.clone() * tail.clone();
                }
            }
        }
    }

    let mut warnings = policy.warnings();
    if open_at_horizon > 0 {
        warnings.push(format!(
            "{open_at_horizon} variable-rate loans open at the horizon; booked for elapsed steps only"
        ));
    }
    Ok(RunTrajectory {
        settings: *settings,
        states,
        prices,
        outcomes,
        alphas,
        ledger,
        open_at_horizon,
        warnings,
    })
}

/// Pooled model with fixed-interest pricing.
pub fn run_pooled_fixed<V: Real>(stream: &LoanStream<V>, supply: V, kappa: f64) -> Result<RunTrajectory<V>> {
    simulate(stream, &EngineSettings::fixed(kappa), &mut FixedSupply { supply })
}

/// Which supply process a variable-rate run uses.
#[derive(Clone, Debug)]
pub enum SupplyModel {
    Pooled(f64),
    Curated(CuratedConfig),
}

/// Variable-interest run under either supply model.
pub fn run_variable(stream: &LoanStream<f64>, model: &SupplyModel, kappa: f64, window: VariableWindow) -> Result<RunTrajectory<f64>> {
    let settings = EngineSettings::variable(kappa, window);
    match model {
        SupplyModel::Pooled(s) => simulate(stream, &settings, &mut FixedSupply { supply: *s }),
        SupplyModel::Curated(cfg) => run_curated(stream, cfg, &settings),
    }
}
