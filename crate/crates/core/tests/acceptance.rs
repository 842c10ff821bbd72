use std::time::{Duration, Instant};

use num::{BigRational, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lendsim::demand::{
    check_bounded_increment, check_reset_condition, check_variable_rate_concentration, gen_example1,
    gen_example2_full, gen_example3, gen_stochastic, StochasticDemandParams,
};
use lendsim::harness::{self, ScenarioConfig};
use lendsim::learners::{estimate_curvature, project_capped_simplex, Interval, MirrorMap, StepSchedule};
use lendsim::metrics::{evaluate, fit_scaling, hindsight_bruteforce, hindsight_fixed_optimal, uncapped_demand, Benchmark};
use lendsim::model::{CostFunction, CuratorProfile, LoanEvent, LoanStream, RevenueLedger};
use lendsim::multi::{
    gen_multi_periodic, md_optimal_static, row_gradient, row_revenue, run_curators_md, run_monopolist, AllocationMatrix,
    MdConfig, MultiCurator, UpdateOrder,
};
use lendsim::num::Real;
use lendsim::pricing::{
    curator_profit, nash_equilibrium, pro_rata_game_step, profit_curvature, profit_gradient, run_curated,
    run_curated_fixed, run_pooled_fixed, run_variable, CostBasis, CuratedMode, CuratorGameConfig, EngineSettings,
    SupplyModel, TrackingConfig, VariableWindow,
};

const EXACT_TOL: f64 = 1e-9;
const SLACK_25: f64 = 1.25;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn int(n: u64) -> BigRational {
    BigRational::from_integer((n as i64).into())
}

fn tracking() -> CuratedMode {
    let unit = vec![CuratorProfile::new(1.0, 1.0, CostFunction::zero()).unwrap()];
    CuratedMode::Tracking(TrackingConfig::new(unit, 1e-6))
}

fn ln2(t: f64) -> f64 {
    t.ln().powi(2)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn example1_exact() -> Outcome {
    let mut worst = Duration::ZERO;
    let mut notes = Vec::new();
    for t in [10u64, 100, 1000, 10_000] {
        let start = Instant::now();
        let s = gen_example1::<BigRational>(t).unwrap();
        let rev = run_pooled_fixed(&s, BigRational::one(), 1.0).unwrap().total_revenue();
        let bench = hindsight_fixed_optimal(&s, &BigRational::one(), &BigRational::one());
        worst = worst.max(start.elapsed());
        let want_rev = int(t) / int(2) + q(1, 2);
        if rev != want_rev || bench != int(t) {
            notes.push(format!("T={t}: revenue {rev} benchmark {bench}"));
        }
        let sf = gen_example1::<f64>(t).unwrap();
        let rf = run_pooled_fixed(&sf, 1.0, 1.0).unwrap().total_revenue();
        let bf = hindsight_fixed_optimal(&sf, &1.0, &1.0);
        if (rf - (t as f64 / 2.0 + 0.5)).abs() > EXACT_TOL || (bf - t as f64).abs() > EXACT_TOL {
            notes.push(format!("T={t}: f64 revenue {rf} benchmark {bf}"));
        }
    }
    let fast = worst < Duration::from_secs(1);
    outcome(
        notes.is_empty() && fast,
        format!("revenue T/2+1/2, benchmark T, exact; slowest T {:.3}s (< 1s) {}", worst.as_secs_f64(), notes.join("; ")),
    )
}

fn example1_curation() -> Outcome {
    let regret = |t: u64| {
        let s = gen_example1::<f64>(t).unwrap();
        let r = run_curated_fixed(&s, &tracking(), 1.0).unwrap().total_revenue();
        hindsight_fixed_optimal(&s, &1.0, &1.0) - r
    };
    let (r2, r4) = (regret(100), regret(10_000));
    let cfg = ScenarioConfig::from_toml(
        "version = 1\n[demand]\nkind = \"example1\"\nhorizon = 10\n[market]\ns_min = 1e-6\n\
         [engine]\nmodel = \"tracking\"\ncurators = [{ capacity = 1.0 }]\n",
    )
    .unwrap();
    let sweep = harness::sweep(&cfg, &[10, 30, 100, 300, 1000, 3000, 10_000], 1).unwrap();
    let label = sweep.fit.dominant.clone();
    let pass = r4 <= 3.0 * r2 && (label == "1" || label == "log T");
    outcome(pass, format!("regret(1e4) {r4:.6} <= 3 x regret(1e2) {r2:.6}; fit dominant \"{label}\""))
}

fn example2() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for t in [10u64, 100, 1000] {
        let s = gen_example2_full::<BigRational>(t).unwrap();
        let bench = hindsight_fixed_optimal(&s, &BigRational::one(), &BigRational::one());
        let rev = run_pooled_fixed(&s, BigRational::one(), 1.0).unwrap().total_revenue();
        let cr = rev.clone() / bench.clone();
        let ok = bench.is_one() && cr <= BigRational::one() / int(t);
        let sf = gen_example2_full::<f64>(t).unwrap();
        let cur = run_curated_fixed(&sf, &tracking(), 1.0).unwrap().total_revenue();
        let cur_cr = cur / bench.to_f64();
        let cur_ok = t < 100 || cur_cr >= 0.25;
        pass &= ok && cur_ok;
        notes.push(format!("T={t}: bench {bench} pooled CR {:.3e} curated CR {cur_cr:.4}", cr.to_f64()));
    }
    outcome(pass, format!("benchmark 1, pooled CR <= 1/T, curated CR >= 0.25 for T >= 100; {}", notes.join("; ")))
}

fn example3() -> Outcome {
    let d = 0.1;
    let mut notes = Vec::new();
    let mut pass = true;
    for t in [10u64, 100, 1000, 10_000] {
        let tf = t as f64;
        let s = gen_example3::<BigRational>(t, q(1, 10)).unwrap();
        let bench = hindsight_fixed_optimal(&s, &BigRational::one(), &BigRational::one());
        let want = int(t) * int(t) * q(1, 10) + int(t) * q(8, 10);
        let sf = gen_example3::<f64>(t, d).unwrap();
        let pooled = run_pooled_fixed(&sf, 1.0, 1.0).unwrap().total_revenue();
        let curated = run_curated_fixed(&sf, &tracking(), 1.0).unwrap().total_revenue();
        let capped = tf * ((1.0 - d) * (1.0 - d) + d).min(1.0);
        let within = |v: f64| v >= capped * (1.0 - EXACT_TOL) && v <= capped * (1.0 + EXACT_TOL);
        let b = bench.to_f64();
        let cr_ok = t < 100 || (pooled / b <= 20.0 / tf && curated / b <= 20.0 / tf);
        pass &= bench == want && within(pooled) && within(curated) && cr_ok;
        notes.push(format!("T={t}: bench {bench} pooled {pooled:.9} curated {curated:.9} CR {:.3e}", pooled / b));
    }
    outcome(pass, format!("benchmark T^2 d + T(1-2d) exact, revenues T min((1-d)^2+d,1) to 1e-9, CR <= 20/T; {}", notes.join("; ")))
}

fn game_profiles() -> Vec<CuratorProfile> {
    let mut p: Vec<_> = (0..10)
        .map(|_| CuratorProfile::new(0.1, 1.0, CostFunction::quadratic(0.01, 0.01)).unwrap())
        .collect();
    for c in p.iter_mut().skip(5) {
        c.cost = CostFunction::quadratic(0.05, 0.1);
    }
    p
}

fn supply_of(alphas: &[f64], p: &[CuratorProfile]) -> f64 {
    alphas.iter().zip(p).map(|(a, c)| a * c.capacity).sum()
}

fn min_curvature(eq: &[f64], revenue: f64, p: &[CuratorProfile]) -> f64 {
    (0..p.len())
        .map(|n| -profit_curvature(n, eq, revenue, p).unwrap())
        .fold(f64::INFINITY, f64::min)
}

fn game_saturation() -> Outcome {
    let p = game_profiles();
    let total: f64 = p.iter().map(|c| c.capacity).sum();
    let r = 1.0;
    let eq = nash_equilibrium(&p, r, CostBasis::Allocated, 1e-6).unwrap();
    let c_limit = supply_of(&eq, &p) / total;
    let mu = min_curvature(&eq, r, &p);
    let mut a = vec![1.0; p.len()];
    let (mut low, mut early, mut late) = (f64::INFINITY, 0.0f64, 0.0f64);
    for t in 1..=100_000u64 {
        a = pro_rata_game_step(&a, r, &p, 1.0 / (mu * t as f64), CostBasis::Allocated, 1e-6).unwrap();
        let frac = supply_of(&a, &p) / total;
        let tf = t as f64;
        let gap = (c_limit - frac).abs() * tf / tf.ln();
        if t >= 100 {
            low = low.min(frac);
        }
        if (100..=1000).contains(&t) {
            early = early.max(gap);
        }
        if t >= 10_000 {
            late = late.max(gap);
        }
    }
    let pass = low >= 0.4 && late <= 2.0 * early + 1e-9;
    outcome(
        pass,
        format!("min S/S_total after t=100 {low:.6} (>= 0.4); c_limit {c_limit:.6}; max gap t/log t on [1e4,1e5] {late:.3e} <= 2 x {early:.3e} + 1e-9"),
    )
}

struct GameSetup {
    profiles: Vec<CuratorProfile>,
    mu: f64,
    floor: f64,
}

impl GameSetup {
    fn new(floor: f64) -> Self {
        let profiles = game_profiles();
        let eq = nash_equilibrium(&profiles, floor, CostBasis::Allocated, 1e-6).unwrap();
        let mu = min_curvature(&eq, floor, &profiles);
        GameSetup { profiles, mu, floor }
    }

    fn mode(&self) -> CuratedMode {
        let mut g = CuratorGameConfig::new(self.profiles.clone(), StepSchedule::strongly_convex(self.mu).unwrap());
        g.basis = CostBasis::Allocated;
        g.revenue_floor = self.floor;
        CuratedMode::Game(g)
    }

    /// Equilibrium supply at the revenue the stream books there on average.
    fn equilibrium_supply(&self, stream: &LoanStream<f64>, kappa: f64) -> f64 {
        let ud = uncapped_demand(stream);
        let mass: f64 = stream
            .events()
            .iter()
            .map(|e| ud[e.t as usize - 1] * e.size * e.duration as f64)
            .sum::<f64>()
            / stream.horizon() as f64;
        let mut s = 1.0;
        for _ in 0..50 {
            let eq = nash_equilibrium(&self.profiles, self.floor + kappa * mass / s, CostBasis::Allocated, 1e-6).unwrap();
            s = supply_of(&eq, &self.profiles);
        }
        s
    }
}

fn curated_regret_scaling() -> Outcome {
    let start = Instant::now();
    let kappa = 0.01;
    let game = GameSetup::new(1.0);
    let params = |t: u64| {
        let mut p = StochasticDemandParams::new(0.01, 50.0, 2.0, 0.1, 0.01, t);
        p.size_max = 0.05;
        p
    };
    let grid: Vec<u64> = (7..=17).map(|k| 1u64 << k).collect();
    let jobs: Vec<(u64, u64)> = grid.iter().flat_map(|&t| (0..11).map(move |r| (t, r))).collect();
    let regrets: Vec<f64> = jobs
        .par_iter()
        .map(|&(t, rep)| {
            let s = gen_stochastic(&params(t), harness::derive_seed(2, 0, rep)).unwrap();
            let se = game.equilibrium_supply(&s, kappa);
            let run = run_curated(&s, &game.mode(), &EngineSettings::fixed(kappa)).unwrap();
            evaluate(&s, &run, &Benchmark::BestFixedSupply { s_min: se, s_max: 1.0 }).unwrap().regret
        })
        .collect();
    let ratios: Vec<f64> = regrets
        .chunks(11)
        .zip(&grid)
        .map(|(c, &t)| median(c.to_vec()) / ln2(t as f64))
        .collect();
    let mut monotone = true;
    let mut running = 0.0f64;
    for (i, &t) in grid.iter().enumerate() {
        if t < 1024 {
            continue;
        }
        if t > 1024 && ratios[i].abs() > SLACK_25 * running {
            monotone = false;
        }
        running = running.max(ratios[i].abs());
    }
    let probe = gen_stochastic(&params(1 << 14), 5).unwrap();
    let conforming = check_bounded_increment(&probe, 0.01, 50.0, 2.0).unwrap().pass
        && check_reset_condition(&probe, 1.0, 0.1, 2.0).unwrap().pass;

    let pooled_grid: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
    let pooled: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let s = gen_example1::<f64>(t).unwrap();
            hindsight_fixed_optimal(&s, &1.0, &1.0) - run_pooled_fixed(&s, 1.0, 1.0).unwrap().total_revenue()
        })
        .collect();
    let label = fit_scaling(&pooled_grid, &pooled).unwrap().dominant;
    let elapsed = start.elapsed();
    let pass = monotone && conforming && label == "T" && elapsed < Duration::from_secs(300);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2e}")).collect();
    outcome(
        pass,
        format!(
            "|median regret|/(log T)^2 over 2^7..2^17 [{}] within 1.25 of running max beyond 2^10; stream conforming {conforming}; pooled example 1 dominant \"{label}\"; {:.1}s (< 300s)",
            shown.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn variable_rate_durations() -> Outcome {
    let kappa = 1.0;
    let t = 4096;
    let game = GameSetup::new(1.0);
    let mut medians = Vec::new();
    let mut concentrated = true;
    for m in [2.0f64, 8.0, 32.0] {
        let runs: Vec<(f64, bool)> = (0..11u64)
            .into_par_iter()
            .map(|rep| {
                let mut p = StochasticDemandParams::new(0.02 / m, 50.0, m, 0.1, 0.002, t);
                p.size_max = 0.1 / m;
                let s = gen_stochastic(&p, harness::derive_seed(4, m as u64, rep)).unwrap();
                let se = game.equilibrium_supply(&s, kappa);
                let run = run_variable(&s, &SupplyModel::Curated(game.mode()), kappa, VariableWindow::Active).unwrap();
                let regret = evaluate(&s, &run, &Benchmark::BestFixedSupply { s_min: se, s_max: 1.0 }).unwrap().regret;
                let durations: Vec<u64> = (1..=t).map(|i| s.event_at(i).map_or(0, |e| e.duration)).collect();
                let conc = check_variable_rate_concentration(&run.prices, &durations, None, 2.0).unwrap();
                (regret, conc.pass)
            })
            .collect();
        concentrated &= runs.iter().all(|r| r.1);
        medians.push(median(runs.iter().map(|r| r.0).collect()));
    }
    let ratio = medians[2] / medians[0];
    let pass = medians[0] > 0.0 && ratio <= 32.0 * 2.0 && concentrated;
    outcome(
        pass,
        format!(
            "median regret m=2,8,32: {:.3e}, {:.3e}, {:.3e}; ratio {ratio:.3} <= 64; concentration passes on all paths {concentrated}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn multi_pattern() -> Vec<(usize, Vec<f64>)> {
    vec![
        (0, vec![0.10, 0.04, 0.02]),
        (1, vec![0.02, 0.08, 0.05]),
        (0, vec![0.06, 0.06, 0.03]),
    ]
}

fn multi_kappas() -> Vec<Vec<f64>> {
    vec![vec![1.0, 1.0, 1.0], vec![0.8, 1.2, 1.0]]
}

fn md_config(scale: f64) -> MdConfig {
    MdConfig {
        min_mass: 0.05,
        schedule: StepSchedule::strongly_convex(1.0 / scale).unwrap(),
        map: MirrorMap::Entropic,
        order: UpdateOrder::AllocateThenLoan,
    }
}

fn monopolist_regret() -> Outcome {
    let (a, supply) = (0.05, [1.0, 1.0]);
    let kappas = multi_kappas();
    let grid: Vec<u64> = (8..=14).map(|k| 1u64 << k).collect();
    let ratios: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            let s = gen_multi_periodic(2, &multi_pattern(), 2, t).unwrap();
            let opt = md_optimal_static(&s, &kappas, &supply, a, 0.05).unwrap();
            let init = AllocationMatrix::uniform(2, 3, a).unwrap();
            let run = run_monopolist(&s, &supply, init, &kappas, &md_config(2.0), Some(&opt)).unwrap();
            run.final_regret().unwrap() / ln2(t as f64)
        })
        .collect();
    let bounded = ratios.windows(2).all(|w| w[1] <= SLACK_25 * w[0]);

    let s = gen_multi_periodic(2, &multi_pattern(), 2, 1 << 10).unwrap();
    let demand = s.demand_path();
    let mut curvature_ok = true;
    let mut worst = f64::INFINITY;
    for b in 0..2 {
        for c in 0..3 {
            let d_min = demand
                .iter()
                .map(|d| d[b * 3 + c])
                .filter(|v| *v > 0.0)
                .fold(f64::INFINITY, f64::min);
            let (k, s_b) = (kappas[b][c], supply[b]);
            let loss = move |x: f64| k * d_min / (s_b * x);
            let est = estimate_curvature(&loss, Interval::new(a, a * 1.01).unwrap(), 3).unwrap();
            let bound = 2.0 * k * d_min / (a * a * a * s_b);
            worst = worst.min(est.mu / bound);
            curvature_ok &= est.mu >= 0.9 * bound;
        }
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3e}")).collect();
    outcome(
        bounded && curvature_ok,
        format!(
            "regret/(log T)^2 over 2^8..2^14 [{}] each <= 1.25 x previous; min curvature / bound {worst:.4} >= 0.9",
            shown.join(", ")
        ),
    )
}

fn curator_convergence() -> Outcome {
    let kappas = multi_kappas();
    let caps = [0.4, 0.3, 0.2, 0.1];
    let starts = [vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8], vec![1.0 / 3.0; 3]];
    let curators: Vec<MultiCurator> = caps
        .iter()
        .zip(&starts)
        .map(|(c, r)| MultiCurator {
            capacities: vec![*c, *c],
            initial: AllocationMatrix::new(vec![r.clone(), r.clone()], 0.05).unwrap(),
        })
        .collect();
    let square: f64 = caps.iter().map(|c| c * c).sum();
    let cfg = md_config(2.0 / square);
    let grid: Vec<u64> = (7..=14).map(|k| 1u64 << k).collect();
    let runs: Vec<(f64, Vec<f64>)> = grid
        .par_iter()
        .map(|&t| {
            let s = gen_multi_periodic(2, &multi_pattern(), 2, t).unwrap();
            let opt = md_optimal_static(&s, &kappas, &[1.0, 1.0], 0.05, 0.05).unwrap();
            let run = run_curators_md(&s, &curators, &kappas, &cfg, Some(&opt)).unwrap();
            (run.final_regret().unwrap(), run.error)
        })
        .collect();
    let error = &runs.last().unwrap().1;
    let scaled = |t: usize| error[t - 1] * t as f64 / (t as f64).ln();
    let c = (128..=1024).map(scaled).fold(0.0, f64::max);
    let worst = (1024..=error.len()).map(scaled).fold(0.0, f64::max);
    let regrets: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let tf: Vec<f64> = grid.iter().map(|&t| t as f64).collect();
    let label = fit_scaling(&tf, &regrets).unwrap().dominant;
    let slow = ["1", "log T", "(log T)^2", "(log T)^3"].contains(&label.as_str());
    outcome(
        worst <= c && slow,
        format!("c fitted on t in [2^7,2^10] = {c:.4}; max err t/log t on [2^10,2^14] {worst:.4} <= c; regret fit dominant \"{label}\""),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
    let (mut checked, mut worst) = (0, 0.0f64);
    let mut pass = true;
    while checked < 50 {
        let horizon = rng.random_range(1..=8u64);
        let mut events = Vec::new();
        for t in 1..=horizon {
            if rng.random_bool(0.8) {
                events.push(LoanEvent::new(t, 0.05 * rng.random_range(1..=4) as f64, rng.random_range(0..=horizon)));
            }
        }
        let s = LoanStream::new(events, horizon).unwrap();
        if uncapped_demand(&s).iter().cloned().fold(0.0, f64::max) > 1.0 {
            continue;
        }
        let kappa = rng.random_range(0.5..2.0);
        let bf = hindsight_bruteforce(&s, kappa, &grid).unwrap().value;
        let analytic = hindsight_fixed_optimal(&s, &kappa, &1.0);
        let mass: f64 = s.arrivals().map(|e| e.size * e.duration as f64).sum();
        let tol = 0.02 * kappa * mass;
        pass &= (bf - analytic).abs() <= tol + 1e-12;
        if tol > 0.0 {
            worst = worst.max((bf - analytic).abs() / tol);
        }
        checked += 1;
    }
    outcome(pass, format!("50 instances, worst |diff| / (0.02 kappa sum tau l) = {worst:.3}"))
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let (mut profit_err, mut pair_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let profiles: Vec<CuratorProfile> = (0..n)
            .map(|_| {
                let cost = CostFunction::quadratic(rng.random_range(0.0..0.2), rng.random_range(0.0..0.5));
                CuratorProfile::new(rng.random_range(0.05..1.0), 1.0, cost).unwrap()
            })
            .collect();
        let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let revenue = rng.random_range(0.1..5.0);
        let basis = if rng.random_bool(0.5) { CostBasis::Idle } else { CostBasis::Allocated };
        let i = rng.random_range(0..n);
        let analytic = profit_gradient(i, &alphas, revenue, &profiles, basis).unwrap();
        let fd = central(
            |x| {
                let mut a = alphas.clone();
                a[i] = x;
                curator_profit(i, &a, revenue, &profiles, basis).unwrap()
            },
            alphas[i],
            h,
        );
        profit_err = profit_err.max(relative(analytic, fd));

        let kappa: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..2.0)).collect();
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let row = project_capped_simplex(&raw, 0.05).unwrap();
        let s_b = rng.random_range(0.5..2.0);
        let d: Vec<f64> = row
            .iter()
            .map(|a| {
                let u = if rng.random_bool(0.8) { rng.random_range(0.05..0.9) } else { rng.random_range(1.1..3.0) };
                u * s_b * a
            })
            .collect();
        let grad = row_gradient(&kappa, &d, s_b, &row);
        for c in 0..3 {
            let fd = central(
                |x| {
                    let mut r = row.clone();
                    r[c] = x;
                    -row_revenue(&kappa, &d, s_b, &r)
                },
                row[c],
                h * row[c],
            );
            pair_err = pair_err.max(relative(-grad[c], fd));
        }
    }

    let mut idempotent = true;
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..3.0)).collect();
        let a = rng.random_range(0.0..1.0 / k as f64);
        let once = project_capped_simplex(&w, a).unwrap();
        let twice = project_capped_simplex(&once, a).unwrap();
        idempotent &= once.iter().zip(&twice).all(|(x, y)| (x - y).abs() <= 1e-12);
        let iv = Interval::new(rng.random_range(-1.0..0.0), rng.random_range(0.0..1.0)).unwrap();
        let x = rng.random_range(-3.0..3.0);
        idempotent &= iv.project(iv.project(x)) == iv.project(x);
    }

    let mut additive = true;
    for _ in 0..20 {
        let suppliers = rng.random_range(1..=5);
        let mut ledger = RevenueLedger::<BigRational>::new(suppliers);
        let mut sum = BigRational::zero();
        for _ in 0..30 {
            let r = q(rng.random_range(0..1000), rng.random_range(1..97));
            let w: Vec<BigRational> = (0..suppliers).map(|_| q(rng.random_range(1..50), rng.random_range(1..13))).collect();
            sum += r.clone();
            ledger.record(r, &w);
        }
        additive &= ledger.total() == sum && ledger.supplier_total() == sum;
    }
    let s = gen_example3::<BigRational>(40, q(3, 20)).unwrap();
    let run = run_pooled_fixed(&s, q(7, 5), 1.3).unwrap();
    let steps = run.ledger.per_step.iter().fold(BigRational::zero(), |a, v| a + v.clone());
    additive &= steps == run.total_revenue() && run.ledger.supplier_total() == run.total_revenue();

    let pass = profit_err <= 1e-6 && pair_err <= 1e-6 && idempotent && additive;
    outcome(
        pass,
        format!(
            "max relative FD error: profit {profit_err:.2e}, pair loss {pair_err:.2e} (<= 1e-6); projections idempotent {idempotent}; rational ledger additive {additive}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("example 1 exact reproduction", example1_exact),
        ("example 1 curation bounded regret", example1_curation),
        ("example 2 ratios", example2),
        ("example 3 large loans", example3),
        ("pro-rata game saturation and convergence", game_saturation),
        ("curated fixed-rate regret scaling", curated_regret_scaling),
        ("variable-rate regret in duration", variable_rate_durations),
        ("multi-asset monopolist regret and curvature", monopolist_regret),
        ("multi-curator convergence", curator_convergence),
        ("hindsight oracle equivalence", oracle_equivalence),
        ("numerical hygiene", hygiene),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name} ({:.2}s): {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
