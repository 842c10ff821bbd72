use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::{check_grid, run, ScenarioConfig};
use crate::metrics::{fit_scaling, ScalingFit};
use crate::{Error, Result};

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repetition `rep` at horizon `t`. Depends only on its own
/// coordinates, so adding repetitions leaves earlier seeds unchanged.
pub fn derive_seed(master: u64, t: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ t) ^ rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub t: u64,
    pub rep: usize,
    pub seed: u64,
    pub r_alg: f64,
    pub r_star: f64,
    pub regret: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub grid: Vec<u64>,
    pub reps: usize,
    pub medians: Vec<f64>,
    pub fit: ScalingFit,
    pub cells: Vec<SweepCell>,
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl SweepReport {
    pub fn write_cells<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_medians<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "median_regret"])?;
        for (t, m) in self.grid.iter().zip(&self.medians) {
            w.write_record([t.to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every `(T, repetition)` cell in parallel and fits the per-T median regret.
pub fn sweep(cfg: &ScenarioConfig, grid: &[u64], reps: usize) -> Result<SweepReport> {
    check_grid(grid).map_err(|message| Error::Config {
        path: "metrics.t_grid".into(),
        message,
    })?;
    if reps == 0 {
        return Err(Error::Config {
            path: "metrics.reps".into(),
            message: "need at least one repetition".into(),
        });
    }
    let jobs: Vec<(u64, usize)> = grid.iter().flat_map(|&t| (0..reps).map(move |r| (t, r))).collect();
    let cells = jobs
        .par_iter()
        .map(|&(t, rep)| {
            let mut c = cfg.clone();
            c.demand = cfg.demand.with_horizon(t)?;
            c.seed = derive_seed(cfg.seed, t, rep as u64);
            let out = run(&c, false)?;
            Ok(SweepCell {
                t,
                rep,
                seed: c.seed,
                r_alg: out.revenue(),
                r_star: out.benchmark(),
                regret: out.regret(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let medians: Vec<f64> = cells
        .chunks(reps)
        .map(|chunk| median(&mut chunk.iter().map(|c| c.regret).collect::<Vec<_>>()))
        .collect();
    let tf: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
    let fit = fit_scaling(&tf, &medians)?;
    Ok(SweepReport {
        grid: grid.to_vec(),
        reps,
        medians,
        fit,
        cells,
    })
}

/// Fits a two-column CSV (horizon, regret) with a header row.
pub fn fit_table<R: Read>(reader: R) -> Result<ScalingFit> {
    let mut r = csv::Reader::from_reader(reader);
    let (mut grid, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::invalid(format!("row {}: expected two columns", i + 1)))?
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("row {}: column {} is not a number", i + 1, k + 1)))
        };
        grid.push(field(0)?);
        values.push(field(1)?);
    }
    fit_scaling(&grid, &values)
}
