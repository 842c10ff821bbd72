//! Loan events, the single-asset market state machine and the revenue ledger.
//!
//! A loan arriving at `t` with duration `tau` is active on `[t, t + tau)`.
//! Departures are synthesized by [`Market`] at `t + tau` and released before
//! the event of that step is applied, so at most one *input* event exists per
//! time index while the active demand follows the indicator form
//! `D(t) = sum_s l_s 1{s <= t < s + tau(s)}`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoanEvent<V = f64> {
    pub t: u64,
    /// Borrow amount; negative for an explicit departure.
    pub size: V,
    pub duration: u64,
}

impl<V: Real> LoanEvent<V> {
    pub fn new(t: u64, size: V, duration: u64) -> Self {
        LoanEvent { t, size, duration }
    }

    pub fn is_arrival(&self) -> bool {
        self.size > V::zero()
    }

    fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::invalid("time indices start at 1"));
        }
        if !self.size.is_finite() || self.size == V::zero() {
            return Err(Error::invalid(format!("event at t={} has zero or non-finite size", self.t)));
        }
        if self.size < V::zero() && self.duration != 0 {
            return Err(Error::invalid(format!(
                "departure at t={} must have duration 0, got {}",
                self.t, self.duration
            )));
        }
        Ok(())
    }
}

fn validate_events<V: Real>(events: &[LoanEvent<V>]) -> Result<()> {
    let mut prev = 0u64;
    for ev in events {
        ev.validate()?;
        if ev.t <= prev {
            return Err(Error::invalid(format!(
                "events must have strictly increasing time indices (t={} after t={})",
                ev.t, prev
            )));
        }
        prev = ev.t;
    }
    Ok(())
}

/// A validated event sequence over the horizon `1..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoanStream<V = f64> {
    events: Vec<LoanEvent<V>>,
    horizon: u64,
}

impl<V: Real> LoanStream<V> {
    pub fn new(events: Vec<LoanEvent<V>>, horizon: u64) -> Result<Self> {
        validate_events(&events)?;
        if let Some(last) = events.last() {
            if last.t > horizon {
                return Err(Error::invalid(format!(
                    "event at t={} lies beyond horizon {}",
                    last.t, horizon
                )));
            }
        }
        Ok(LoanStream { events, horizon })
    }

    /// Horizon defaults to the last event's time index.
    pub fn from_events(events: Vec<LoanEvent<V>>) -> Result<Self> {
        let horizon = events.last().map(|e| e.t).unwrap_or(0);
        Self::new(events, horizon)
    }

    pub fn events(&self) -> &[LoanEvent<V>] {
        &self.events
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event_at(&self, t: u64) -> Option<&LoanEvent<V>> {
        self.events
            .binary_search_by_key(&t, |e| e.t)
            .ok()
            .map(|i| &self.events[i])
    }

    pub fn arrivals(&self) -> impl Iterator<Item = &LoanEvent<V>> {
        self.events.iter().filter(|e| e.is_arrival())
    }

    pub fn max_duration(&self) -> u64 {
        self.events.iter().map(|e| e.duration).max().unwrap_or(0)
    }

    /// Two-sided ledger: every arrival plus its synthesized departure at
    /// `t + tau`, and any explicit departures, sorted by time (departures
    /// before arrivals within a step).
    pub fn expanded(&self) -> Vec<(u64, V)> {
        let mut out: Vec<(u64, u8, V)> = Vec::with_capacity(self.events.len() * 2);
        for ev in &self.events {
            if ev.is_arrival() {
                if ev.duration > 0 {
                    out.push((ev.t, 1, ev.size.clone()));
                    out.push((ev.t + ev.duration, 0, -ev.size.clone()));
                }
            } else {
                out.push((ev.t, 0, ev.size.clone()));
            }
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out.into_iter().map(|(t, _, v)| (t, v)).collect()
    }

    pub fn map<W: Real>(&self, f: impl Fn(&V) -> W) -> LoanStream<W> {
        LoanStream {
            events: self
                .events
                .iter()
                .map(|e| LoanEvent::new(e.t, f(&e.size), e.duration))
                .collect(),
            horizon: self.horizon,
        }
    }
}

impl LoanStream<f64> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "size", "duration"])?;
        for ev in &self.events {
            w.write_record([ev.t.to_string(), ev.size.to_string(), ev.duration.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `t,size,duration` rows; the horizon is the last row's `t`
    /// unless `horizon` is given.
    pub fn read_csv<R: Read>(reader: R, horizon: Option<u64>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut events = Vec::new();
        for rec in r.deserialize() {
            let ev: LoanEvent<f64> = rec?;
            events.push(ev);
        }
        match horizon {
            Some(h) => Self::new(events, h),
            None => Self::from_events(events),
        }
    }
}

/// Indicator-sum active demand at `t` over every arrival in `events`
/// (capacity ignored). Explicit departures count from their time index on.
pub fn active_demand<V: Real>(events: &[LoanEvent<V>], t: u64) -> Result<V> {
    validate_events(events)?;
    Ok(indicator_demand(events, t, |_| true))
}

/// Active demand counting only arrivals for which `accepted(index)` holds.
pub fn active_demand_accepted<V: Real>(
    events: &[LoanEvent<V>],
    t: u64,
    accepted: impl Fn(usize) -> bool,
) -> Result<V> {
    validate_events(events)?;
    Ok(indicator_demand(events, t, accepted))
}

fn indicator_demand<V: Real>(events: &[LoanEvent<V>], t: u64, accepted: impl Fn(usize) -> bool) -> V {
    let mut d = V::zero();
    for (i, ev) in events.iter().enumerate() {
        if ev.t > t {
            break;
        }
        if ev.is_arrival() {
            if accepted(i) && t < ev.t + ev.duration {
                d = d + ev.size.clone();
            }
        } else {
            d = d + ev.size.clone();
        }
    }
    if d < V::zero() {
        V::zero()
    } else {
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarketState<V = f64> {
    pub t: u64,
    pub active_demand: V,
    pub supply: V,
    pub utilization: V,
    /// Set when this step's arrival was refused for capacity.
    pub rejected: bool,
}

impl<V: Real> MarketState<V> {
    pub fn initial() -> Self {
        MarketState {
            t: 0,
            active_demand: V::zero(),
            supply: V::one(),
            utilization: V::zero(),
            rejected: false,
        }
    }
}

pub fn utilization<V: Real>(demand: &V, supply: &V) -> V {
    V::min_of(demand.clone() / supply.clone(), V::one())
}

fn check_supply<V: Real>(supply: &V) -> Result<()> {
    if !(supply.clone() > V::zero()) || !supply.is_finite() {
        return Err(Error::numeric(format!("supply must be positive, got {supply}")));
    }
    Ok(())
}

/// Applies one event to a state whose demand is already net of the
/// departures due at `event.t`. An arrival is accepted iff
/// `D(t-1) + l <= S` (ties accepted); zero-duration arrivals never occupy
/// supply.
pub fn step_market<V: Real>(state: &MarketState<V>, event: &LoanEvent<V>, supply: &V) -> Result<MarketState<V>> {
    check_supply(supply)?;
    if event.t != state.t + 1 {
        return Err(Error::invalid(format!(
            "event at t={} applied to state at t={}",
            event.t, state.t
        )));
    }
    let mut demand = state.active_demand.clone();
    let mut rejected = false;
    if event.is_arrival() {
        let requested = demand.clone() + event.size.clone();
        if requested <= supply.clone() + V::capacity_slack(supply) {
            if event.duration > 0 {
                demand = requested;
            }
        } else {
            rejected = true;
        }
    } else {
        demand = V::max_of(demand + event.size.clone(), V::zero());
    }
    Ok(MarketState {
        t: event.t,
        utilization: utilization(&demand, supply),
        active_demand: demand,
        supply: supply.clone(),
        rejected,
    })
}

/// A step with no input event.
pub fn idle_step<V: Real>(state: &MarketState<V>, t: u64, supply: &V) -> Result<MarketState<V>> {
    check_supply(supply)?;
    Ok(MarketState {
        t,
        utilization: utilization(&state.active_demand, supply),
        active_demand: state.active_demand.clone(),
        supply: supply.clone(),
        rejected: false,
    })
}

/// Result of advancing the market by one time index.
#[derive(Clone, Debug)]
pub struct StepOutcome<V = f64> {
    pub state: MarketState<V>,
    /// `Some(true)` for an accepted arrival, `Some(false)` for a rejected one.
    pub arrival: Option<bool>,
}

/// Stateful single-asset market: schedules departures for accepted arrivals.
#[derive(Clone, Debug)]
pub struct Market<V = f64> {
    state: MarketState<V>,
    pending: BTreeMap<u64, V>,
}

impl<V: Real> Default for Market<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V: Real> Market<V> {
    pub fn new() -> Self {
        Market {
            state: MarketState::initial(),
            pending: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &MarketState<V> {
        &self.state
    }

    /// Demand that will be active at `t` before its event, i.e. after the
    /// departures due at `t` are released.
    pub fn demand_before(&self, t: u64) -> V {
        let due = self
            .pending
            .range(..=t)
            .fold(V::zero(), |acc, (_, v)| acc + v.clone());
        V::max_of(self.state.active_demand.clone() - due, V::zero())
    }

    pub fn advance(&mut self, t: u64, event: Option<&LoanEvent<V>>, supply: &V) -> Result<StepOutcome<V>> {
        if t != self.state.t + 1 {
            return Err(Error::invalid(format!("market at t={} cannot advance to t={t}", self.state.t)));
        }
        let base = self.demand_before(t);
        let keep = self.pending.split_off(&(t + 1));
        self.pending = keep;
        let before = MarketState {
            active_demand: base,
            ..self.state.clone()
        };
        let (state, arrival) = match event {
            Some(ev) => {
                if ev.t != t {
                    return Err(Error::invalid(format!("event at t={} supplied for step {t}", ev.t)));
                }
                let next = step_market(&before, ev, supply)?;
                let arrival = if ev.is_arrival() {
                    let accepted = !next.rejected;
                    if accepted && ev.duration > 0 {
                        let due = self.pending.entry(t + ev.duration).or_insert_with(V::zero);
                        *due = due.clone() + ev.size.clone();
                    }
                    Some(accepted)
                } else {
                    None
                };
                (next, arrival)
            }
            None => (idle_step(&before, t, supply)?, None),
        };
        self.state = state.clone();
        Ok(StepOutcome { state, arrival })
    }
}

/// Convex increasing cost `C(x) = linear * x + quadratic * x^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct CostFunction {
    pub linear: f64,
    pub quadratic: f64,
}

impl CostFunction {
    pub fn zero() -> Self {
        CostFunction::default()
    }

    pub fn quadratic(linear: f64, quadratic: f64) -> Self {
        CostFunction { linear, quadratic }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.linear * x + 0.5 * self.quadratic * x * x
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.linear + self.quadratic * x
    }

    /// Checks `C(0) = 0`, and convexity and monotonicity on `[0, 1]` by
    /// second differences on a 64-point grid.
    pub fn validate(&self) -> Result<()> {
        if !self.linear.is_finite() || !self.quadratic.is_finite() {
            return Err(Error::invalid("cost parameters must be finite"));
        }
        if self.value(0.0) != 0.0 {
            return Err(Error::invalid("cost must vanish at 0"));
        }
        let n = 64;
        let h = 1.0 / n as f64;
        let tol = 1e-12 * (1.0 + self.linear.abs() + self.quadratic.abs());
        for i in 0..n {
            let x = i as f64 * h;
            if self.value(x + h) - self.value(x) < -tol {
                return Err(Error::invalid("cost must be increasing on [0, 1]"));
            }
            if i + 2 <= n && self.value(x + 2.0 * h) - 2.0 * self.value(x + h) + self.value(x) < -tol {
                return Err(Error::invalid("cost must be convex on [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuratorProfile {
    /// Maximum supply `S_n`.
    pub capacity: f64,
    /// Allocated fraction in `(0, 1]`.
    pub alpha: f64,
    pub cost: CostFunction,
}

impl CuratorProfile {
    pub fn new(capacity: f64, alpha: f64, cost: CostFunction) -> Result<Self> {
        let p = CuratorProfile { capacity, alpha, cost };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return Err(Error::invalid(format!("curator capacity must be positive, got {}", self.capacity)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("allocation fraction must lie in (0, 1], got {}", self.alpha)));
        }
        self.cost.validate()
    }

    pub fn allocated(&self) -> f64 {
        self.alpha * self.capacity
    }
}

/// `S(alpha, t) = sum_n alpha_n S_n`.
pub fn total_supply(curators: &[CuratorProfile]) -> Result<f64> {
    if curators.is_empty() {
        return Err(Error::invalid("at least one curator is required"));
    }
    let s: f64 = curators.iter().map(CuratorProfile::allocated).sum();
    check_supply(&s)?;
    Ok(s)
}

/// Total capacity `sum_n S_n`.
pub fn total_capacity(curators: &[CuratorProfile]) -> f64 {
    curators.iter().map(|c| c.capacity).sum()
}

/// Per-step and cumulative revenue with a pro-rata split across suppliers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RevenueLedger<V = f64> {
    pub per_step: Vec<V>,
    pub cumulative: Vec<V>,
    /// Cumulative revenue attributed to each supplier.
    pub per_supplier: Vec<V>,
}

impl<V: Real> RevenueLedger<V> {
    pub fn new(suppliers: usize) -> Self {
        RevenueLedger {
            per_step: Vec::new(),
            cumulative: Vec::new(),
            per_supplier: vec![V::zero(); suppliers],
        }
    }

    pub fn total(&self) -> V {
        self.cumulative.last().cloned().unwrap_or_else(V::zero)
    }

    /// Books `revenue` for the next step, split in proportion to `weights`
    /// (allocated supply per supplier).
    pub fn record(&mut self, revenue: V, weights: &[V]) {
        let prev = self.total();
        let denom = weights.iter().fold(V::zero(), |a, w| a + w.clone());
        if denom > V::zero() {
            for (acc, w) in self.per_supplier.iter_mut().zip(weights) {
                *acc = acc.clone() + w.clone() / denom.clone() * revenue.clone();
            }
        }
        self.cumulative.push(prev + revenue.clone());
        self.per_step.push(revenue);
    }

    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }

    pub fn supplier_total(&self) -> V {
        self.per_supplier.iter().fold(V::zero(), |a, v| a + v.clone())
    }
}
