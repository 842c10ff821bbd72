//! Several borrowable assets lent against several collateral types.
//!
//! Each asset `b` splits its supply `S_b` across collateral markets with a
//! row of the allocation matrix; revenue is `sum_{t,b,c} kappa_{b,c} U_{b,c}`.
//! The hindsight benchmark minimizes it over static matrices.

mod learn;
mod optimum;

pub use learn::{run_curators_md, run_monopolist, MdConfig, MultiCurator, MultiTrajectory, UpdateOrder};
pub use optimum::{md_optimal_static, per_step_minimizer, StaticOptimum, DEFAULT_RESOLUTION, GRID_BUDGET};

use std::io::{Read, Write};

use serde::Serialize;

use crate::{Error, Result};

/// Row-stochastic `B x C` allocation with every entry at least `a`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AllocationMatrix {
    rows: Vec<Vec<f64>>,
    min_mass: f64,
}

const ROW_TOL: f64 = 1e-9;

impl AllocationMatrix {
    pub fn new(rows: Vec<Vec<f64>>, min_mass: f64) -> Result<Self> {
        let c = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || c == 0 {
            return Err(Error::invalid("allocation matrix must be non-empty"));
        }
        if !(min_mass > 0.0) || min_mass * c as f64 >= 1.0 {
            return Err(Error::invalid(format!(
                "minimum mass {min_mass} infeasible for {c} collateral types (need 0 < a*C < 1)"
            )));
        }
        for (b, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::invalid(format!("row {b} has {} entries, expected {c}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::invalid(format!("row {b} sums to {sum}, not 1")));
            }
            if row.iter().any(|v| !(*v >= min_mass - 1e-12) || !v.is_finite()) {
                return Err(Error::invalid(format!("row {b} has an entry below the minimum mass {min_mass}")));
            }
        }
        Ok(AllocationMatrix { rows, min_mass })
    }

    pub fn uniform(assets: usize, collateral: usize, min_mass: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 / collateral as f64; collateral]; assets], min_mass)
    }

    pub fn assets(&self) -> usize {
        self.rows.len()
    }

    pub fn collateral(&self) -> usize {
        self.rows[0].len()
    }

    pub fn min_mass(&self) -> f64 {
        self.min_mass
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.rows[b]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub(crate) fn set_row(&mut self, b: usize, row: Vec<f64>) {
        self.rows[b] = row;
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &AllocationMatrix) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiLoanEvent {
    pub t: u64,
    pub asset: usize,
    /// Amount borrowed from each collateral market.
    pub sizes: Vec<f64>,
    pub duration: u64,
}

/// Validated multi-asset arrival sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiStream {
    assets: usize,
    collateral: usize,
    events: Vec<MultiLoanEvent>,
    horizon: u64,
}

impl MultiStream {
    pub fn new(assets: usize, collateral: usize, events: Vec<MultiLoanEvent>, horizon: u64) -> Result<Self> {
        if assets == 0 || collateral == 0 {
            return Err(Error::invalid("need at least one asset and one collateral type"));
        }
        let mut prev = 0;
        for ev in &events {
            if ev.t <= prev || ev.t > horizon {
                return Err(Error::invalid(format!(
                    "event times must be strictly increasing within 1..={horizon} (t={})",
                    ev.t
                )));
            }
            prev = ev.t;
            if ev.asset >= assets {
                return Err(Error::invalid(format!("asset index {} out of range at t={}", ev.asset, ev.t)));
            }
            if ev.sizes.len() != collateral {
                return Err(Error::invalid(format!(
                    "event at t={} has {} collateral sizes, expected {collateral}",
                    ev.t,
                    ev.sizes.len()
                )));
            }
            if ev.sizes.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                return Err(Error::invalid(format!("event at t={} has a negative or non-finite size", ev.t)));
            }
        }
        Ok(MultiStream {
            assets,
            collateral,
            events,
            horizon,
        })
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn collateral(&self) -> usize {
        self.collateral
    }

    pub fn events(&self) -> &[MultiLoanEvent] {
        &self.events
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn event_at(&self, t: u64) -> Option<&MultiLoanEvent> {
        self.events.binary_search_by_key(&t, |e| e.t).ok().map(|i| &self.events[i])
    }

    /// `D_{b,c}(t)` for `t = 1..=T`, flattened row-major per step.
    pub fn demand_path(&self) -> Vec<Vec<f64>> {
        let width = self.assets * self.collateral;
        let mut delta = vec![vec![0.0; width]; self.horizon as usize + 2];
        for ev in &self.events {
            let end = (ev.t + ev.duration).min(self.horizon + 1);
            if end <= ev.t {
                continue;
            }
            for (c, s) in ev.sizes.iter().enumerate() {
                let k = ev.asset * self.collateral + c;
                delta[ev.t as usize][k] += s;
                delta[end as usize][k] -= s;
            }
        }
        let mut out = Vec::with_capacity(self.horizon as usize);
        let mut run = vec![0.0; width];
        for t in 1..=self.horizon as usize {
            for (r, d) in run.iter_mut().zip(&delta[t]) {
                *r += d;
                if r.abs() < 1e-15 {
                    *r = 0.0;
                }
            }
            out.push(run.clone());
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "asset".to_string()];
        header.extend((1..=self.collateral).map(|c| format!("size_c{c}")));
        header.push("duration".into());
        w.write_record(&header)?;
        for ev in &self.events {
            let mut row = vec![ev.t.to_string(), (ev.asset + 1).to_string()];
            row.extend(ev.sizes.iter().map(|s| s.to_string()));
            row.push(ev.duration.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `t, asset, size_c1..size_cC, duration` with 1-based asset labels.
    pub fn read_csv<R: Read>(reader: R, assets: usize, horizon: Option<u64>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        if width < 4 {
            return Err(Error::invalid("multi-asset stream needs t, asset, sizes and duration columns"));
        }
        let collateral = width - 3;
        let mut events = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("column {i}: {e}")))
            };
            let t = parse(0)? as u64;
            let asset = parse(1)? as usize;
            if asset == 0 {
                return Err(Error::invalid("asset labels start at 1"));
            }
            let sizes = (2..2 + collateral).map(parse).collect::<Result<Vec<_>>>()?;
            let duration = parse(width - 1)? as u64;
            events.push(MultiLoanEvent {
                t,
                asset: asset - 1,
                sizes,
                duration,
            });
        }
        let horizon = horizon.unwrap_or_else(|| events.last().map(|e| e.t).unwrap_or(0));
        Self::new(assets, collateral, events, horizon)
    }
}

/// Repeats `pattern` (asset, sizes) with a common duration.
pub fn gen_multi_periodic(
    assets: usize,
    pattern: &[(usize, Vec<f64>)],
    duration: u64,
    horizon: u64,
) -> Result<MultiStream> {
    if pattern.is_empty() {
        return Err(Error::invalid("pattern must be non-empty"));
    }
    let collateral = pattern[0].1.len();
    let events = (1..=horizon)
        .map(|t| {
            let (b, sizes) = &pattern[(t as usize - 1) % pattern.len()];
            MultiLoanEvent {
                t,
                asset: *b,
                sizes: sizes.clone(),
                duration,
            }
        })
        .collect();
    MultiStream::new(assets, collateral, events, horizon)
}

/// `S_{b,c} = sum_n S^n_b A^n_{b,c}`.
pub fn md_supply(capacities: &[Vec<f64>], matrices: &[AllocationMatrix]) -> Result<Vec<Vec<f64>>> {
    if capacities.is_empty() || capacities.len() != matrices.len() {
        return Err(Error::invalid(format!(
            "{} capacity vectors for {} matrices",
            capacities.len(),
            matrices.len()
        )));
    }
    let b = matrices[0].assets();
    let c = matrices[0].collateral();
    let mut grid = vec![vec![0.0; c]; b];
    for (caps, m) in capacities.iter().zip(matrices) {
        if m.assets() != b || m.collateral() != c || caps.len() != b {
            return Err(Error::invalid("curator matrices and capacities must share dimensions"));
        }
        for (bi, row) in grid.iter_mut().enumerate() {
            if !(caps[bi] > 0.0) {
                return Err(Error::invalid(format!("capacity for asset {bi} must be positive")));
            }
            for (ci, v) in row.iter_mut().enumerate() {
                *v += caps[bi] * m.row(bi)[ci];
            }
        }
    }
    Ok(grid)
}

fn check_kappas(kappas: &[Vec<f64>], assets: usize, collateral: usize) -> Result<()> {
    if kappas.len() != assets || kappas.iter().any(|r| r.len() != collateral) {
        return Err(Error::invalid(format!("elasticities must be {assets} x {collateral}")));
    }
    if kappas.iter().flatten().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(Error::invalid("elasticities must be finite and non-negative"));
    }
    Ok(())
}

/// Revenue of one row at demand `d` (length C) with row supply `s_b` and allocation `row`.
pub fn row_revenue(kappa: &[f64], d: &[f64], s_b: f64, row: &[f64]) -> f64 {
    kappa
        .iter()
        .zip(d)
        .zip(row)
        .map(|((k, d), a)| k * (d / (s_b * a)).min(1.0))
        .sum()
}

/// Utilization-and-cap aware gradient of a row's revenue in its allocation.
pub fn row_gradient(kappa: &[f64], d: &[f64], s_b: f64, row: &[f64]) -> Vec<f64> {
    kappa
        .iter()
        .zip(d)
        .zip(row)
        .map(|((k, d), a)| if d / (s_b * a) >= 1.0 { 0.0 } else { -k * d / (s_b * a * a) })
        .collect()
}

/// `R(A, T) = sum_{t,b,c} kappa_{b,c} U_{b,c}(A, t)` with `S_{b,c} = S_b A_{b,c}`.
pub fn md_revenue_static(a: &AllocationMatrix, stream: &MultiStream, kappas: &[Vec<f64>], supply: &[f64]) -> Result<f64> {
    check_dims(a, stream, kappas, supply)?;
    let c = stream.collateral();
    Ok(stream
        .demand_path()
        .iter()
        .map(|d| {
            (0..stream.assets())
                .map(|b| row_revenue(&kappas[b], &d[b * c..(b + 1) * c], supply[b], a.row(b)))
                .sum::<f64>()
        })
        .sum())
}

fn check_dims(a: &AllocationMatrix, stream: &MultiStream, kappas: &[Vec<f64>], supply: &[f64]) -> Result<()> {
    if a.assets() != stream.assets() || a.collateral() != stream.collateral() {
        return Err(Error::invalid("allocation matrix and stream dimensions differ"));
    }
    if supply.len() != stream.assets() || supply.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("need one positive supply per asset"));
    }
    check_kappas(kappas, stream.assets(), stream.collateral())
}
