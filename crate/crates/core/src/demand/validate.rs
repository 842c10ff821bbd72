use serde::Serialize;

use crate::model::LoanStream;
use crate::{Error, Result};

pub const DEFAULT_SLACK: f64 = 2.0;
pub const GRID_POINTS: usize = 8;
pub const MIN_SAMPLES: usize = 100;

/// Empirical tail frequencies against a theoretical bound on a threshold grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub assumption: String,
    pub thresholds: Vec<f64>,
    pub empirical: Vec<f64>,
    pub bound: Vec<f64>,
    pub slack: f64,
    pub sample_size: usize,
    pub pass: bool,
}

impl AssumptionReport {
    fn build(
        assumption: &str,
        samples: &[f64],
        thresholds: Vec<f64>,
        bound: impl Fn(f64) -> f64,
        sample_at: impl Fn(f64) -> f64,
        slack: f64,
    ) -> Self {
        let n = samples.len();
        let mut empirical = Vec::with_capacity(thresholds.len());
        let mut bounds = Vec::with_capacity(thresholds.len());
        let mut pass = true;
        for &x in &thresholds {
            let cut = sample_at(x);
            let hits = samples.iter().filter(|&&s| s > cut).count();
            let freq = hits as f64 / n as f64;
            let b = bound(x);
            if freq > b * slack {
                pass = false;
            }
            empirical.push(freq);
            bounds.push(b);
        }
        AssumptionReport {
            assumption: assumption.to_string(),
            thresholds,
            empirical,
            bound: bounds,
            slack,
            sample_size: n,
            pass,
        }
    }

    /// Thresholds at which the empirical frequency exceeds `bound * slack`.
    pub fn violations(&self) -> Vec<f64> {
        self.thresholds
            .iter()
            .zip(self.empirical.iter().zip(&self.bound))
            .filter(|(_, (e, b))| **e > **b * self.slack)
            .map(|(x, _)| *x)
            .collect()
    }
}

/// Log-spaced grid from `lo` up to the threshold where a bound of
/// `exp(-rate x)` falls to `10 / n`.
fn threshold_grid(lo: f64, rate: f64, n: usize) -> Vec<f64> {
    let hi = ((n as f64 / 10.0).ln() / rate).max(lo);
    if !(hi > lo) || !hi.is_finite() {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| lo * (ratio * i as f64).exp()).collect()
}

fn check_inputs(n: usize, slack: f64) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} samples for a tail check, got {n}"
        )));
    }
    if !(slack > 0.0) {
        return Err(Error::invalid(format!("slack must be positive, got {slack}")));
    }
    Ok(())
}

/// Compares `P[|l_s - l_{s-1}| > d]` with `exp(-K d)` for thresholds `d >= delta`.
pub fn check_bounded_increment(stream: &LoanStream<f64>, delta: f64, k: f64, slack: f64) -> Result<AssumptionReport> {
    if !(delta > 0.0) || !(k > 0.0) {
        return Err(Error::invalid("delta and K must be positive"));
    }
    let sizes: Vec<f64> = stream.arrivals().map(|e| e.size).collect();
    let increments: Vec<f64> = sizes.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    check_inputs(increments.len() + 1, slack)?;
    let grid = threshold_grid(delta, k, increments.len());
    Ok(AssumptionReport::build(
        "bounded_increment",
        &increments,
        grid,
        |d| (-k * d).exp(),
        |d| d,
        slack,
    ))
}

/// Compares `P[l tau > e' S_total]` with `exp(-e')` for `e' >= epsilon`.
pub fn check_reset_condition(
    stream: &LoanStream<f64>,
    supply_total: f64,
    epsilon: f64,
    slack: f64,
) -> Result<AssumptionReport> {
    if !(supply_total > 0.0) || !(epsilon > 0.0) {
        return Err(Error::invalid("supply total and epsilon must be positive"));
    }
    let mass: Vec<f64> = stream.arrivals().map(|e| e.size * e.duration as f64).collect();
    check_inputs(mass.len(), slack)?;
    let grid = threshold_grid(epsilon, 1.0, mass.len());
    Ok(AssumptionReport::build(
        "reset_condition",
        &mass,
        grid,
        |e| (-e).exp(),
        |e| e * supply_total,
        slack,
    ))
}

const CONCENTRATION_EPS0: f64 = 0.25;

/// Median absolute increment over 0.6745, or the scaled mean absolute
/// increment when more than half the increments vanish.
fn increment_scale(prices: &[f64]) -> f64 {
    let mut abs: Vec<f64> = prices.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if abs.is_empty() {
        return 0.0;
    }
    abs.sort_by(f64::total_cmp);
    let mid = abs.len() / 2;
    let median = if abs.len() % 2 == 0 { 0.5 * (abs[mid - 1] + abs[mid]) } else { abs[mid] };
    if median > 0.0 {
        median / 0.6745
    } else {
        abs.iter().sum::<f64>() / abs.len() as f64 * std::f64::consts::FRAC_PI_2.sqrt()
    }
}

/// Compares `P[|sum_{s in [t, t+tau)} p_s - tau p_t| > (1 + e) sigma_p sqrt(tau)]`
/// with `exp(-e)`. Windows that run past the end of `prices` are skipped.
/// `durations[i]` belongs to the loan opened at `prices[i]`; zero means no loan.
/// Without `sigma_p`, the scale comes from the price increments: a robust
/// increment deviation times the root mean of `(tau - 1)(2 tau - 1) / 6`,
/// the normalized window variance of a walk with i.i.d. increments.
pub fn check_variable_rate_concentration(
    prices: &[f64],
    durations: &[u64],
    sigma_p: Option<f64>,
    slack: f64,
) -> Result<AssumptionReport> {
    if prices.len() != durations.len() {
        return Err(Error::invalid(format!(
            "{} prices but {} durations",
            prices.len(),
            durations.len()
        )));
    }
    let mut prefix = Vec::with_capacity(prices.len() + 1);
    prefix.push(0.0);
    for p in prices {
        prefix.push(prefix.last().unwrap() + p);
    }
    let mut normalized = Vec::new();
    let mut window_factor = 0.0;
    for (i, &tau) in durations.iter().enumerate() {
        let end = i + tau as usize;
        if tau == 0 || end > prices.len() {
            continue;
        }
        let window = prefix[end] - prefix[i];
        let mut dev = (window - tau as f64 * prices[i]).abs();
        if dev <= 1e-12 * (window.abs() + 1.0) {
            dev = 0.0;
        }
        normalized.push(dev / (tau as f64).sqrt());
        let tf = tau as f64;
        window_factor += (tf - 1.0) * (2.0 * tf - 1.0) / 6.0;
    }
    check_inputs(normalized.len(), slack)?;
    let sigma = match sigma_p {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("sigma_p must be positive, got {s}"))),
        None => increment_scale(prices) * (window_factor / normalized.len() as f64).sqrt(),
    };
    let grid = threshold_grid(CONCENTRATION_EPS0, 1.0, normalized.len());
    if sigma == 0.0 {
        // Degenerate scale: constant prices or single-step windows only.
        let zeros = vec![0.0; normalized.len()];
        let nonzero = normalized.iter().filter(|&&v| v > 0.0).count();
        let mut report =
            AssumptionReport::build("variable_rate", &zeros, grid, |e| (-e).exp(), |_| 0.0, slack);
        if nonzero > 0 {
            let freq = nonzero as f64 / normalized.len() as f64;
            for (emp, b) in report.empirical.iter_mut().zip(&report.bound) {
                *emp = freq;
                if freq > *b * slack {
                    report.pass = false;
                }
            }
        }
        return Ok(report);
    }
    Ok(AssumptionReport::build(
        "variable_rate",
        &normalized,
        grid,
        |e| (-e).exp(),
        |e| (1.0 + e) * sigma,
        slack,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{gen_example1, gen_example3, gen_stochastic, StochasticDemandParams};
    use crate::model::LoanEvent;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Pareto};

    fn stream_of(sizes: &[f64], duration: u64) -> LoanStream<f64> {
        let events = sizes
            .iter()
            .enumerate()
            .map(|(i, &l)| LoanEvent::new(i as u64 + 1, l, duration))
            .collect();
        LoanStream::from_events(events).unwrap()
    }

    #[test]
    fn constant_sizes_pass() {
        let s = stream_of(&vec![0.3; 500], 3);
        for k in [0.1, 1.0, 100.0, 1e6] {
            assert!(check_bounded_increment(&s, 0.01, k, DEFAULT_SLACK).unwrap().pass);
        }
    }

    #[test]
    fn single_large_jump_fails_for_large_k() {
        let s = gen_example3::<f64>(300, 0.01).unwrap();
        let strict = check_bounded_increment(&s, 0.1, 100.0, DEFAULT_SLACK).unwrap();
        assert!(!strict.pass);
        let loose = check_bounded_increment(&s, 0.1, 1.0, DEFAULT_SLACK).unwrap();
        assert!(loose.pass);
    }

    #[test]
    fn too_short_stream_rejected() {
        let s = stream_of(&vec![0.3; 50], 3);
        assert!(check_bounded_increment(&s, 0.1, 1.0, 2.0).is_err());
        assert!(check_reset_condition(&s, 1.0, 0.1, 2.0).is_err());
    }

    #[test]
    fn example1_fails_reset_for_small_eps() {
        let s = gen_example1::<f64>(1000).unwrap();
        let r = check_reset_condition(&s, 1.0, 0.1, DEFAULT_SLACK).unwrap();
        assert!(!r.pass);
        assert!(r.violations().iter().all(|&e| e < 1.0));
    }

    #[test]
    fn zero_duration_loans_pass_reset() {
        let s = stream_of(&vec![0.9; 200], 0);
        assert!(check_reset_condition(&s, 1.0, 0.01, DEFAULT_SLACK).unwrap().pass);
    }

    #[test]
    fn generator_passes_its_own_assumptions() {
        let mut p = StochasticDemandParams::new(0.01, 20.0, 4.0, 0.1, 0.02, 20_000);
        p.size_max = 0.2;
        for seed in 0..3 {
            let s = gen_stochastic(&p, seed).unwrap();
            let inc = check_bounded_increment(&s, p.increment_scale, p.tail_rate, DEFAULT_SLACK).unwrap();
            assert!(inc.pass, "{inc:?}");
            let reset = check_reset_condition(&s, p.supply_total, p.reset_epsilon, DEFAULT_SLACK).unwrap();
            assert!(reset.pass, "{reset:?}");
        }
    }

    // Increments placed at the exact quantiles of exp(-K x): the empirical
    // tail never exceeds the bound and is within 1/n of it.
    fn saturating_stream(n: usize, k: f64) -> LoanStream<f64> {
        let mut sizes = Vec::with_capacity(2 * n + 1);
        sizes.push(1.0);
        for i in 1..=n {
            let x = -((i as f64) / (n as f64 + 1.0)).ln() / k;
            sizes.push(1.0 + x);
            sizes.push(1.0);
        }
        stream_of(&sizes, 1)
    }

    #[test]
    fn validator_soundness_at_saturation() {
        let k = 5.0;
        let s = saturating_stream(20_000, k);
        assert!(check_bounded_increment(&s, 0.05, k, 1.1).unwrap().pass);
        assert!(!check_bounded_increment(&s, 0.05, k, 0.9).unwrap().pass);
    }

    #[test]
    fn constant_prices_pass_concentration() {
        let prices = vec![0.4; 1000];
        let durations = vec![5; 1000];
        let r = check_variable_rate_concentration(&prices, &durations, None, DEFAULT_SLACK).unwrap();
        assert!(r.pass);
        assert!(r.empirical.iter().all(|&e| e == 0.0));
    }

    fn price_path(incr: impl Fn(&mut ChaCha8Rng) -> f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = 0.0;
        (0..n)
            .map(|_| {
                p += incr(&mut rng);
                p
            })
            .collect()
    }

    // Monte-Carlo oracle: the fraction of synthetic paths that pass.
    fn pass_rate(incr: impl Fn(&mut ChaCha8Rng) -> f64 + Copy, paths: u64) -> f64 {
        let n = 400;
        let durations = vec![4u64; n];
        let passed = (0..paths)
            .filter(|&seed| {
                let prices = price_path(incr, n, seed);
                check_variable_rate_concentration(&prices, &durations, None, DEFAULT_SLACK)
                    .unwrap()
                    .pass
            })
            .count();
        passed as f64 / paths as f64
    }

    #[test]
    fn light_tailed_increments_pass_and_heavy_tails_fail() {
        let normal = Normal::new(0.0, 0.01).unwrap();
        let light = pass_rate(|r| normal.sample(r), 10_000);
        assert!(light > 0.99, "light-tailed pass rate {light}");
        let pareto = Pareto::new(1.0, 0.8).unwrap();
        let heavy = pass_rate(
            |r| {
                let s: f64 = if r.random::<bool>() { 1.0 } else { -1.0 };
                s * pareto.sample(r)
            },
            10_000,
        );
        assert!(heavy < 0.01, "heavy-tailed pass rate {heavy}");
    }

    #[test]
    fn supplied_sigma_scales_statistic() {
        let normal = Normal::new(0.0, 0.01).unwrap();
        let prices = price_path(|r| normal.sample(r), 2000, 9);
        let durations = vec![3u64; 2000];
        assert!(check_variable_rate_concentration(&prices, &durations, Some(1.0), 2.0).unwrap().pass);
        assert!(!check_variable_rate_concentration(&prices, &durations, Some(1e-5), 2.0).unwrap().pass);
        assert!(check_variable_rate_concentration(&prices, &durations[1..], None, 2.0).is_err());
    }
}
