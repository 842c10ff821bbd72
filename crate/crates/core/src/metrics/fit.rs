use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result};

pub const BASIS_LABELS: [&str; 5] = ["1", "log T", "(log T)^2", "(log T)^3", "T"];

/// Non-negative least-squares fit of regret against
/// `{1, log T, (log T)^2, (log T)^3, T}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Basis term with the largest contribution at the largest `T`.
    pub dominant: String,
    pub residual_norm: f64,
}

impl ScalingFit {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        BASIS_LABELS.iter().position(|l| *l == label).map(|i| self.coefficients[i])
    }

    pub fn predict(&self, t: f64) -> f64 {
        basis(t).iter().zip(&self.coefficients).map(|(b, c)| b * c).sum()
    }
}

fn basis(t: f64) -> [f64; 5] {
    let l = t.ln();
    [1.0, l, l * l, l * l * l, t]
}

pub fn fit_scaling(grid: &[f64], values: &[f64]) -> Result<ScalingFit> {
    if grid.len() != values.len() {
        return Err(Error::invalid(format!(
            "{} grid points but {} values",
            grid.len(),
            values.len()
        )));
    }
    if grid.len() < 5 {
        return Err(Error::invalid("scaling fit needs at least 5 grid points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] >= 1.0) {
        return Err(Error::invalid("grid must be strictly increasing and start at T >= 1"));
    }
    if grid[grid.len() - 1] / grid[0] < 100.0 {
        return Err(Error::invalid("grid must span at least two decades"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("regret values must be finite"));
    }
    let m = grid.len();
    let mut a = DMatrix::<f64>::zeros(m, 5);
    for (i, &t) in grid.iter().enumerate() {
        for (j, b) in basis(t).iter().enumerate() {
            a[(i, j)] = *b;
        }
    }
    // Column scaling keeps the T column comparable to the log columns.
    let scales: Vec<f64> = (0..5).map(|j| a.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let b = DVector::from_column_slice(values);
    let x = nnls(&a, &b)?;
    let coefficients: Vec<f64> = x.iter().zip(&scales).map(|(v, s)| v / s).collect();
    let residual_norm = (&a * &x - &b).norm();
    let t_max = grid[m - 1];
    let contrib: Vec<f64> = basis(t_max).iter().zip(&coefficients).map(|(b, c)| b * c).collect();
    let dominant = contrib
        .iter()
        .enumerate()
        .max_by(|p, q| p.1.total_cmp(q.1))
        .map(|(i, _)| BASIS_LABELS[i].to_string())
        .unwrap();
    Ok(ScalingFit {
        grid: grid.to_vec(),
        values: values.to_vec(),
        coefficients,
        dominant,
        residual_norm,
    })
}

fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Result<DVector<f64>> {
    let sub = a.select_columns(passive);
    let svd = sub.svd(true, true);
    let z = svd
        .solve(b, 1e-12)
        .map_err(|e| Error::numeric(format!("least squares failed: {e}")))?;
    let mut full = DVector::zeros(a.ncols());
    for (k, &j) in passive.iter().enumerate() {
        full[j] = z[k];
    }
    Ok(full)
}

/// Lawson-Hanson active-set NNLS.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let tol = 1e-12 * (a.norm() * b.norm()).max(1.0);
    for _ in 0..(30 * n) {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|j| !passive.contains(j))
            .max_by(|p, q| w[*p].total_cmp(&w[*q]));
        match candidate {
            Some(j) if w[j] > tol => passive.push(j),
            _ => return Ok(x),
        }
        loop {
            passive.sort_unstable();
            let z = solve_subset(a, b, &passive)?;
            if passive.iter().all(|&j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut step = f64::INFINITY;
            for &j in &passive {
                if z[j] <= 0.0 {
                    step = step.min(x[j] / (x[j] - z[j]));
                }
            }
            x += (z - &x) * step;
            passive.retain(|&j| x[j] > 1e-15);
            for j in 0..n {
                if !passive.contains(&j) {
                    x[j] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    Ok(x)
}
