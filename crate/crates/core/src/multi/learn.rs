use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_dims, row_gradient, row_revenue, AllocationMatrix, MultiStream, StaticOptimum};
use crate::learners::{md_simplex_step, MirrorMap, StepSchedule};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// Allocations move on last step's demand, then the loan arrives.
    #[default]
    AllocateThenLoan,
    /// The loan arrives first and allocations react to it within the step.
    LoanThenAllocate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdConfig {
    pub min_mass: f64,
    pub schedule: StepSchedule,
    #[serde(default)]
    pub map: MirrorMap,
    #[serde(default)]
    pub order: UpdateOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiCurator {
    /// `S^n_b` per borrowable asset.
    pub capacities: Vec<f64>,
    pub initial: AllocationMatrix,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiTrajectory {
    pub assets: usize,
    pub collateral: usize,
    pub revenue_step: Vec<f64>,
    pub revenue_cumulative: Vec<f64>,
    /// Capacity-weighted aggregate matrix in force at each step, flattened.
    pub aggregate: Vec<Vec<f64>>,
    /// Per-pair utilization at each step, flattened.
    pub utilization: Vec<Vec<f64>>,
    /// `||A_hat(t) - A*||_2` when an optimum is supplied.
    pub error: Vec<f64>,
    /// Fraction of demanded pair-steps at full utilization.
    pub saturation: f64,
    pub r_star: Option<f64>,
    /// `R(alg) - R*` at each step when an optimum is supplied.
    pub regret: Vec<f64>,
}

impl MultiTrajectory {
    pub fn total_revenue(&self) -> f64 {
        self.revenue_cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.regret.last().copied()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "revenue_step".into(), "revenue_cum".into()];
        for prefix in ["a", "u"] {
            for b in 1..=self.assets {
                for c in 1..=self.collateral {
                    header.push(format!("{prefix}_b{b}_c{c}"));
                }
            }
        }
        w.write_record(&header)?;
        for i in 0..self.revenue_step.len() {
            let mut row = vec![
                (i + 1).to_string(),
                self.revenue_step[i].to_string(),
                self.revenue_cumulative[i].to_string(),
            ];
            row.extend(self.aggregate[i].iter().map(|v| v.to_string()));
            row.extend(self.utilization[i].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Population {
    matrices: Vec<AllocationMatrix>,
    /// weights[b][n] = S^n_b / sum_m S^m_b
    weights: Vec<Vec<f64>>,
    supply: Vec<f64>,
}

impl Population {
    fn aggregate_row(&self, b: usize) -> Vec<f64> {
        let c = self.matrices[0].collateral();
        let mut row = vec![0.0; c];
        for (m, w) in self.matrices.iter().zip(&self.weights[b]) {
            for (r, v) in row.iter_mut().zip(m.row(b)) {
                *r += w * v;
            }
        }
        row
    }

    fn update(&mut self, demand: &[f64], kappas: &[Vec<f64>], eta: f64, cfg: &MdConfig) -> Result<()> {
        let c = self.matrices[0].collateral();
        for b in 0..self.supply.len() {
            let hat = self.aggregate_row(b);
            let g = row_gradient(&kappas[b], &demand[b * c..(b + 1) * c], self.supply[b], &hat);
            for (n, m) in self.matrices.iter_mut().enumerate() {
                let w = self.weights[b][n];
                let grad: Vec<f64> = g.iter().map(|gi| w * gi).collect();
                let next = md_simplex_step(m.row(b), &grad, eta, cfg.min_mass, cfg.map)?;
                m.set_row(b, next);
            }
        }
        Ok(())
    }
}

/// Each curator runs mirror descent on its capacity-weighted share of the
/// revenue gradient; the market sees the aggregate matrix.
pub fn run_curators_md(
    stream: &MultiStream,
    curators: &[MultiCurator],
    kappas: &[Vec<f64>],
    cfg: &MdConfig,
    optimum: Option<&StaticOptimum>,
) -> Result<MultiTrajectory> {
    if curators.is_empty() {
        return Err(Error::invalid("at least one curator is required"));
    }
    let b = stream.assets();
    let c = stream.collateral();
    for cur in curators {
        if cur.capacities.len() != b {
            return Err(Error::invalid(format!("curator needs {b} capacities")));
        }
        if cur.initial.min_mass() < cfg.min_mass - 1e-15 {
            return Err(Error::invalid("initial matrix violates the configured minimum mass"));
        }
    }
    let supply: Vec<f64> = (0..b).map(|bi| curators.iter().map(|cu| cu.capacities[bi]).sum()).collect();
    check_dims(&curators[0].initial, stream, kappas, &supply)?;
    let weights: Vec<Vec<f64>> = (0..b)
        .map(|bi| curators.iter().map(|cu| cu.capacities[bi] / supply[bi]).collect())
        .collect();
    let mut pop = Population {
        matrices: curators.iter().map(|cu| cu.initial.clone()).collect(),
        weights,
        supply,
    };

    let demand = stream.demand_path();
    let n = demand.len();
    let mut out = MultiTrajectory {
        assets: b,
        collateral: c,
        revenue_step: Vec::with_capacity(n),
        revenue_cumulative: Vec::with_capacity(n),
        aggregate: Vec::with_capacity(n),
        utilization: Vec::with_capacity(n),
        error: Vec::new(),
        saturation: 0.0,
        r_star: optimum.map(|o| o.value),
        regret: Vec::new(),
    };
    let (mut demanded, mut saturated) = (0usize, 0usize);
    let mut cum = 0.0;
    for (i, d) in demand.iter().enumerate() {
        let t = i as u64 + 1;
        let eta = cfg.schedule.eta(t);
        match cfg.order {
            UpdateOrder::AllocateThenLoan if i > 0 => pop.update(&demand[i - 1], kappas, eta, cfg)?,
            UpdateOrder::LoanThenAllocate => pop.update(d, kappas, eta, cfg)?,
            _ => {}
        }
        let mut rev = 0.0;
        let mut flat = Vec::with_capacity(b * c);
        let mut util = Vec::with_capacity(b * c);
        for bi in 0..b {
            let hat = pop.aggregate_row(bi);
            let db = &d[bi * c..(bi + 1) * c];
            rev += row_revenue(&kappas[bi], db, pop.supply[bi], &hat);
            for (dc, a) in db.iter().zip(&hat) {
                let u = (dc / (pop.supply[bi] * a)).min(1.0);
                if *dc > 0.0 {
                    demanded += 1;
                    if u >= 1.0 {
                        saturated += 1;
                    }
                }
                util.push(u);
            }
            flat.extend(hat);
        }
        cum += rev;
        if let Some(opt) = optimum {
            let star = opt.matrix.flatten();
            let e = flat.iter().zip(&star).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            out.error.push(e);
        }
        out.revenue_step.push(rev);
        out.revenue_cumulative.push(cum);
        out.aggregate.push(flat);
        out.utilization.push(util);
    }
    out.saturation = if demanded > 0 { saturated as f64 / demanded as f64 } else { 0.0 };
    if let Some(opt) = optimum {
        out.regret = regret_series(stream, kappas, &pop.supply, &opt.matrix, &out.revenue_cumulative);
    }
    Ok(out)
}

// R(alg, t) - R(A*, t) for every prefix t.
fn regret_series(stream: &MultiStream, kappas: &[Vec<f64>], supply: &[f64], star: &AllocationMatrix, cum: &[f64]) -> Vec<f64> {
    let c = stream.collateral();
    let mut acc = 0.0;
    stream
        .demand_path()
        .iter()
        .zip(cum)
        .map(|(d, r)| {
            acc += (0..stream.assets())
                .map(|b| row_revenue(&kappas[b], &d[b * c..(b + 1) * c], supply[b], star.row(b)))
                .sum::<f64>();
            r - acc
        })
        .collect()
}

/// A single curator holding all supply.
pub fn run_monopolist(
    stream: &MultiStream,
    supply: &[f64],
    initial: AllocationMatrix,
    kappas: &[Vec<f64>],
    cfg: &MdConfig,
    optimum: Option<&StaticOptimum>,
) -> Result<MultiTrajectory> {
    let cur = MultiCurator {
        capacities: supply.to_vec(),
        initial,
    };
    run_curators_md(stream, std::slice::from_ref(&cur), kappas, cfg, optimum)
}
