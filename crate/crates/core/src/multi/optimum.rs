use std::collections::HashMap;

use serde::Serialize;

use super::{check_dims, row_revenue, AllocationMatrix, MultiStream};
use crate::{Error, Result};

pub const DEFAULT_RESOLUTION: f64 = 0.05;
/// Maximum number of grid points per row.
pub const GRID_BUDGET: usize = 250_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StaticOptimum {
    pub grid_matrix: AllocationMatrix,
    pub grid_value: f64,
    /// Pairwise line-search refinement started from the grid optimum.
    pub matrix: AllocationMatrix,
    pub value: f64,
}

/// Distinct per-row demand vectors with multiplicities.
fn profiles(stream: &MultiStream) -> Vec<Vec<(Vec<f64>, f64)>> {
    let c = stream.collateral();
    let mut per_row: Vec<HashMap<Vec<u64>, (Vec<f64>, f64)>> = vec![HashMap::new(); stream.assets()];
    for d in stream.demand_path() {
        for (b, map) in per_row.iter_mut().enumerate() {
            let v = d[b * c..(b + 1) * c].to_vec();
            if v.iter().all(|x| *x == 0.0) {
                continue;
            }
            let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
            map.entry(key).or_insert((v, 0.0)).1 += 1.0;
        }
    }
    per_row
        .into_iter()
        .map(|m| {
            let mut v: Vec<_> = m.into_values().collect();
            v.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
            v
        })
        .collect()
}

fn row_objective(profiles: &[(Vec<f64>, f64)], kappa: &[f64], s_b: f64, row: &[f64]) -> f64 {
    profiles.iter().map(|(d, n)| n * row_revenue(kappa, d, s_b, row)).sum()
}

fn compositions(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(left: usize, parts: usize, acc: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if parts == 1 {
            acc.push(left);
            f(acc);
            acc.pop();
            return;
        }
        for k in 0..=left {
            acc.push(k);
            rec(left - k, parts - 1, acc, f);
            acc.pop();
        }
    }
    rec(total, parts, &mut Vec::with_capacity(parts), f);
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    r as usize
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

// Minimizes along x_i + s, x_j - s with both coordinates kept >= a.
fn refine_row(objective: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>, a: f64) -> Vec<f64> {
    let c = x.len();
    let mut best = objective(&x);
    for _ in 0..200 {
        let start = best;
        for i in 0..c {
            for j in (i + 1)..c {
                let lo = -(x[i] - a);
                let hi = x[j] - a;
                if hi - lo <= 1e-15 {
                    continue;
                }
                let eval = |s: f64| {
                    let mut y = x.clone();
                    y[i] += s;
                    y[j] -= s;
                    objective(&y)
                };
                let (mut l, mut h) = (lo, hi);
                let mut m1 = h - GOLDEN * (h - l);
                let mut m2 = l + GOLDEN * (h - l);
                let (mut f1, mut f2) = (eval(m1), eval(m2));
                for _ in 0..80 {
                    if f1 <= f2 {
                        h = m2;
                        m2 = m1;
                        f2 = f1;
                        m1 = h - GOLDEN * (h - l);
                        f1 = eval(m1);
                    } else {
                        l = m1;
                        m1 = m2;
                        f1 = f2;
                        m2 = l + GOLDEN * (h - l);
                        f2 = eval(m2);
                    }
                }
                let s = 0.5 * (l + h);
                let fs = eval(s);
                if fs < best {
                    best = fs;
                    x[i] += s;
                    x[j] -= s;
                    x[i] = x[i].max(a);
                    x[j] = x[j].max(a);
                }
            }
        }
        if start - best <= 1e-15 * start.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Static allocation minimizing `R(A, T)`: a grid of spacing `h` over each
/// row's capped simplex, then pairwise golden-section refinement.
pub fn md_optimal_static(
    stream: &MultiStream,
    kappas: &[Vec<f64>],
    supply: &[f64],
    min_mass: f64,
    resolution: f64,
) -> Result<StaticOptimum> {
    let b = stream.assets();
    let c = stream.collateral();
    let uniform = AllocationMatrix::uniform(b, c, min_mass)?;
    check_dims(&uniform, stream, kappas, supply)?;
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::invalid(format!("grid resolution must lie in (0, 1], got {resolution}")));
    }
    let steps = (1.0 / resolution).round() as usize;
    let per_row = binomial(steps + c - 1, c - 1);
    if per_row > GRID_BUDGET {
        return Err(Error::Budget(format!(
            "{per_row} grid points per row exceeds the budget of {GRID_BUDGET}; \
             coarsen the resolution or use the learning engines instead"
        )));
    }
    let free = 1.0 - min_mass * c as f64;
    let prof = profiles(stream);
    let mut grid_rows = Vec::with_capacity(b);
    let mut refined_rows = Vec::with_capacity(b);
    for bi in 0..b {
        let objective = |row: &[f64]| row_objective(&prof[bi], &kappas[bi], supply[bi], row);
        let mut best = (f64::INFINITY, vec![1.0 / c as f64; c]);
        compositions(steps, c, &mut |k| {
            let row: Vec<f64> = k.iter().map(|ki| min_mass + free * *ki as f64 / steps as f64).collect();
            let v = objective(&row);
            if v < best.0 {
                best = (v, row);
            }
        });
        let refined = if c > 1 { refine_row(&objective, best.1.clone(), min_mass) } else { best.1.clone() };
        grid_rows.push(best.1);
        refined_rows.push(refined);
    }
    let grid_matrix = AllocationMatrix::new(grid_rows, min_mass)?;
    let matrix = AllocationMatrix::new(refined_rows, min_mass)?;
    let grid_value = super::md_revenue_static(&grid_matrix, stream, kappas, supply)?;
    let value = super::md_revenue_static(&matrix, stream, kappas, supply)?;
    Ok(StaticOptimum {
        grid_matrix,
        grid_value,
        matrix,
        value,
    })
}

/// Minimizer of `sum_c w_c / A_c` over `{A : sum A = 1, A >= a}`:
/// `A_c = max(a, sqrt(w_c / lambda))` with `lambda` set by bisection.
pub fn per_step_minimizer(weights: &[f64], min_mass: f64) -> Result<Vec<f64>> {
    let c = weights.len();
    if c == 0 || !(min_mass > 0.0) || min_mass * c as f64 >= 1.0 {
        return Err(Error::invalid("infeasible minimum mass for the simplex"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Ok(vec![1.0 / c as f64; c]);
    }
    let mass = |root: f64| weights.iter().map(|w| (w.sqrt() / root).max(min_mass)).sum::<f64>();
    // mass is decreasing in root = sqrt(lambda)
    let (mut lo, mut hi) = (1e-300, weights.iter().map(|w| w.sqrt()).sum::<f64>() / (1.0 - min_mass * c as f64) * 2.0);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let mut x: Vec<f64> = weights.iter().map(|w| (w.sqrt() / root).max(min_mass)).collect();
    let sum: f64 = x.iter().sum();
    for v in &mut x {
        *v /= sum;
    }
    Ok(x)
}
