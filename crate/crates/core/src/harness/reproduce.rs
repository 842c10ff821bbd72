use std::fmt;

use num::BigRational;
use serde::Serialize;

use super::decimal_ratio;
use crate::demand::{gen_example1, gen_example2_full, gen_example3};
use crate::metrics::hindsight_fixed_optimal;
use crate::model::{CostFunction, CuratorProfile, LoanStream};
use crate::num::Real;
use crate::pricing::{run_curated_fixed, run_pooled_fixed, CuratedMode, TrackingConfig};
use crate::{Error, Result};

pub const EXACT_TOL: f64 = 1e-9;
const TRACKING_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ReproRow {
    pub quantity: String,
    pub closed_form: Option<f64>,
    pub simulated: f64,
    pub abs_diff: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReproTable {
    pub example: u8,
    pub horizon: u64,
    pub delta: Option<f64>,
    pub exact: bool,
    pub rows: Vec<ReproRow>,
    pub pass: bool,
}

impl fmt::Display for ReproTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "example {} at T = {}", self.example, self.horizon)?;
        writeln!(f, "{:<22} {:>18} {:>18} {:>10}", "quantity", "closed form", "simulated", "abs diff")?;
        for r in &self.rows {
            let cf = r.closed_form.map_or("-".into(), |v| format!("{v:.9}"));
            let diff = r.abs_diff.map_or("-".into(), |v| format!("{v:.1e}"));
            writeln!(f, "{:<22} {:>18} {:>18.9} {:>10}", r.quantity, cf, r.simulated, diff)?;
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn row(quantity: &str, closed_form: Option<f64>, simulated: f64) -> ReproRow {
    ReproRow {
        quantity: quantity.into(),
        closed_form,
        simulated,
        abs_diff: closed_form.map(|c| (c - simulated).abs()),
    }
}

fn tracking() -> CuratedMode {
    let unit = vec![CuratorProfile::new(1.0, 1.0, CostFunction::zero()).expect("unit curator")];
    CuratedMode::Tracking(TrackingConfig::new(unit, TRACKING_FLOOR))
}

/// Pooled revenue and benchmark, exactly when `exact`.
fn pooled(exact: bool, f: &LoanStream<f64>, q: impl FnOnce() -> Result<LoanStream<BigRational>>) -> Result<(f64, f64)> {
    if exact {
        let s = q()?;
        let one = BigRational::from_int(1);
        let r = run_pooled_fixed(&s, one.clone(), 1.0)?.total_revenue();
        let b = hindsight_fixed_optimal(&s, &one, &one);
        Ok((r.to_f64(), b.to_f64()))
    } else {
        Ok((run_pooled_fixed(f, 1.0, 1.0)?.total_revenue(), hindsight_fixed_optimal(f, &1.0, &1.0)))
    }
}

/// Closed-form example quantities against simulation, with `kappa = 1` and unit supply.
pub fn reproduce(example: u8, horizon: u64, delta: Option<f64>, exact: bool) -> Result<ReproTable> {
    let t = horizon as f64;
    let mut rows = Vec::new();
    let mut used_delta = None;
    match example {
        1 => {
            let s = gen_example1::<f64>(horizon)?;
            let (rev, bench) = pooled(exact, &s, || gen_example1(horizon))?;
            let cur = run_curated_fixed(&s, &tracking(), 1.0)?.total_revenue();
            rows.push(row("benchmark", Some(t), bench));
            rows.push(row("pooled revenue", Some(t / 2.0 + 0.5), rev));
            rows.push(row("pooled regret", Some((t - 1.0) / 2.0), bench - rev));
            rows.push(row("pooled CR", Some((t + 1.0) / (2.0 * t)), rev / bench));
            rows.push(row("curated revenue", Some(t - 1.0 + 1.0 / t), cur));
            rows.push(row("curated regret", Some(1.0 - 1.0 / t), bench - cur));
        }
        2 => {
            let s = gen_example2_full::<f64>(horizon)?;
            let (rev, bench) = pooled(exact, &s, || gen_example2_full(horizon))?;
            let cur = run_curated_fixed(&s, &tracking(), 1.0)?.total_revenue();
            rows.push(row("benchmark", Some(1.0), bench));
            rows.push(row("pooled revenue", Some((t + 1.0) / (2.0 * t * t)), rev));
            rows.push(row("pooled CR", Some((t + 1.0) / (2.0 * t * t)), rev / bench));
            rows.push(row("pooled CR bound 1/T", None, 1.0 / t));
            rows.push(row("curated CR", None, cur / bench));
        }
        3 => {
            let d = delta.unwrap_or(0.1);
            used_delta = Some(d);
            let s = gen_example3::<f64>(horizon, d)?;
            let (rev, bench) = pooled(exact, &s, || gen_example3(horizon, decimal_ratio(d)?))?;
            let cur = run_curated_fixed(&s, &tracking(), 1.0)?.total_revenue();
            let capped = t * ((1.0 - d).powi(2) + d).min(1.0);
            let star = t * t * d + t * (1.0 - 2.0 * d);
            rows.push(row("benchmark", Some(star), bench));
            rows.push(row("pooled revenue", Some(capped), rev));
            rows.push(row("curated revenue", Some(capped), cur));
            rows.push(row("pooled CR", Some(capped / star), rev / bench));
            rows.push(row("curated CR", Some(capped / star), cur / bench));
        }
        other => return Err(Error::invalid(format!("unknown example {other}; expected 1, 2 or 3"))),
    }
    let pass = rows.iter().all(|r| r.abs_diff.is_none_or(|d| d <= EXACT_TOL));
    Ok(ReproTable {
        example,
        horizon,
        delta: used_delta,
        exact,
        rows,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_table_values() {
        let t1 = reproduce(1, 100, None, true).unwrap();
        assert!(t1.pass);
        assert_eq!(t1.rows[1].simulated, 50.5);
        let t2 = reproduce(2, 100, None, true).unwrap();
        assert!(t2.pass);
        assert_eq!(t2.rows[0].simulated, 1.0);
        assert!(t2.rows[2].simulated <= 0.01);
        let t3 = reproduce(3, 100, Some(0.1), true).unwrap();
        assert!(t3.pass, "{t3}");
        assert!((t3.rows[0].simulated - 1080.0).abs() < 1e-12);
        assert!(reproduce(4, 10, None, false).is_err());
    }
}
