//! Projected online gradient descent, mirror descent on the capped simplex,
//! numerical curvature estimates and the classical regret bounds.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// `scale / t`, with `scale = 1/mu` for a `mu`-strongly convex loss.
    InverseT,
    /// `scale / sqrt(t)`.
    InverseSqrtT,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub kind: StepKind,
    pub scale: f64,
}

impl StepSchedule {
    pub fn new(kind: StepKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!("step scale must be positive, got {scale}")));
        }
        Ok(StepSchedule { kind, scale })
    }

    pub fn strongly_convex(mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("curvature must be positive, got {mu}")));
        }
        Self::new(StepKind::InverseT, 1.0 / mu)
    }

    pub fn inverse_sqrt(scale: f64) -> Result<Self> {
        Self::new(StepKind::InverseSqrtT, scale)
    }

    pub fn eta(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        match self.kind {
            StepKind::InverseT => self.scale / t,
            StepKind::InverseSqrtT => self.scale / t.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn unit() -> Self {
        Interval { lo: 0.0, hi: 1.0 }
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn finite_grad(g: f64) -> Result<()> {
    if !g.is_finite() {
        return Err(Error::numeric(format!("non-finite gradient {g}")));
    }
    Ok(())
}

/// `Proj(x - eta_t grad)` onto `domain`.
pub fn ogd_step(x: f64, grad: f64, t: u64, schedule: &StepSchedule, domain: &Interval) -> Result<f64> {
    finite_grad(grad)?;
    if t == 0 {
        return Err(Error::invalid("rounds start at 1"));
    }
    Ok(domain.project(x - schedule.eta(t) * grad))
}

/// Same update with an explicit step size.
pub fn gradient_step(x: f64, grad: f64, eta: f64, domain: &Interval) -> Result<f64> {
    finite_grad(grad)?;
    Ok(domain.project(x - eta * grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorMap {
    /// Exponentiated gradient.
    #[default]
    Entropic,
    /// Mirror map `-sum ln w`.
    LogBarrier,
}

fn check_min_mass(c: usize, a: f64) -> Result<()> {
    if c == 0 {
        return Err(Error::invalid("simplex dimension must be positive"));
    }
    if !(a >= 0.0) || a * c as f64 >= 1.0 {
        return Err(Error::invalid(format!(
            "minimum mass {a} infeasible for dimension {c} (need a*C < 1)"
        )));
    }
    Ok(())
}

/// KL projection onto `{w : sum w = 1, w >= a}`: coordinates that would fall
/// below `a` are pinned there and the rest rescaled.
pub fn project_capped_simplex(w: &[f64], a: f64) -> Result<Vec<f64>> {
    check_min_mass(w.len(), a)?;
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::numeric("weights must be finite and non-negative"));
    }
    let mut pinned = vec![false; w.len()];
    loop {
        let free_mass: f64 = w.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(v, _)| v).sum();
        let budget = 1.0 - a * pinned.iter().filter(|p| **p).count() as f64;
        if free_mass <= 0.0 {
            let free = pinned.iter().filter(|p| !**p).count();
            if free == 0 {
                return Err(Error::numeric("projection left no free coordinates"));
            }
            return Ok(pinned
                .iter()
                .map(|p| if *p { a } else { budget / free as f64 })
                .collect());
        }
        let scale = budget / free_mass;
        let mut changed = false;
        for (i, v) in w.iter().enumerate() {
            if !pinned[i] && v * scale < a {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            let out: Vec<f64> = w
                .iter()
                .zip(&pinned)
                .map(|(v, p)| if *p { a } else { v * scale })
                .collect();
            return Ok(renormalize(out, a));
        }
    }
}

// Pushes rounding error onto the largest free coordinate so the sum is 1.
fn renormalize(mut w: Vec<f64>, a: f64) -> Vec<f64> {
    let sum: f64 = w.iter().sum();
    let err = 1.0 - sum;
    if let Some((i, _)) = w
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
    {
        w[i] = (w[i] + err).max(a);
    }
    w
}

/// One mirror-descent step on the simplex with minimum mass `a`.
pub fn md_simplex_step(x: &[f64], grad: &[f64], eta: f64, a: f64, map: MirrorMap) -> Result<Vec<f64>> {
    check_min_mass(x.len(), a)?;
    if grad.len() != x.len() {
        return Err(Error::invalid(format!(
            "gradient has {} coordinates, point has {}",
            grad.len(),
            x.len()
        )));
    }
    for g in grad {
        finite_grad(*g)?;
    }
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("mirror descent needs a strictly positive point"));
    }
    let w = match map {
        MirrorMap::Entropic => {
            let shift = grad.iter().map(|g| eta * g).fold(f64::INFINITY, f64::min);
            x.iter()
                .zip(grad)
                .map(|(xi, g)| xi * (-(eta * g - shift)).exp())
                .collect::<Vec<_>>()
        }
        MirrorMap::LogBarrier => log_barrier_update(x, grad, eta)?,
    };
    project_capped_simplex(&w, a)
}

// Solves 1/w_c = 1/x_c + eta g_c + lambda with sum w = 1 by bisection on
// u = lambda + min(1/x_c + eta g_c), which lies in (0, C].
fn log_barrier_update(x: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    let base: Vec<f64> = x.iter().zip(grad).map(|(xi, g)| 1.0 / xi + eta * g).collect();
    let floor = base.iter().cloned().fold(f64::INFINITY, f64::min);
    let mass = |u: f64| base.iter().map(|b| 1.0 / (b - floor + u)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, x.len() as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    if !(u > 0.0) {
        return Err(Error::numeric("log-barrier normalization failed"));
    }
    Ok(base.iter().map(|b| 1.0 / (b - floor + u)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSign {
    Convex,
    Concave,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    /// Lower bound on `|f''|` over the sample grid.
    pub mu: f64,
    /// Upper bound on `|f'|` over the sample grid.
    pub g: f64,
    pub domain: Interval,
    pub sign: CurvatureSign,
    /// Where the minimum curvature magnitude was attained.
    pub argmin: f64,
}

fn richardson(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let d1 = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    (
        (4.0 * d1(h / 2.0) - d1(h)) / 3.0,
        (4.0 * d2(h / 2.0) - d2(h)) / 3.0,
    )
}

/// First and second derivatives by Richardson-extrapolated central
/// differences. The loss must be defined slightly beyond `x`.
pub fn derivatives(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    richardson(f, x, h)
}

/// Estimates curvature and gradient bounds of `loss` on `domain` from
/// `samples` evenly spaced points (endpoints included). The loss is evaluated
/// slightly outside the domain at the endpoints.
pub fn estimate_curvature(loss: &dyn Fn(f64) -> f64, domain: Interval, samples: usize) -> Result<CurvatureEstimate> {
    if samples < 2 {
        return Err(Error::invalid("need at least two sample points"));
    }
    if !(domain.width() > 0.0) {
        return Err(Error::invalid("curvature needs a non-degenerate interval"));
    }
    let h = 1e-3 * domain.width();
    let mut pts = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = domain.lo + domain.width() * i as f64 / (samples - 1) as f64;
        let (d1, d2) = richardson(loss, x, h);
        if !d1.is_finite() || !d2.is_finite() {
            return Err(Error::numeric(format!("non-finite derivative at {x}")));
        }
        pts.push((x, d1, d2));
    }
    let g = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let scale = pts.iter().map(|p| p.2.abs()).fold(0.0, f64::max);
    let tol = 1e-6 * scale.max(1e-12) + 1e-9;
    let pos = pts.iter().filter(|p| p.2 > tol).count();
    let neg = pts.iter().filter(|p| p.2 < -tol).count();
    if pos > 0 && neg > 0 {
        return Err(Error::numeric(format!(
            "curvature changes sign on [{}, {}] ({pos} convex, {neg} concave samples)",
            domain.lo, domain.hi
        )));
    }
    let (argmin, mu) = pts
        .iter()
        .map(|p| (p.0, p.2.abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    if mu <= tol {
        return Err(Error::numeric(format!(
            "loss is not strongly convex or concave on [{}, {}]: min |f''| = {mu:e} at {argmin}",
            domain.lo, domain.hi
        )));
    }
    Ok(CurvatureEstimate {
        mu,
        g,
        domain,
        sign: if pos > 0 { CurvatureSign::Convex } else { CurvatureSign::Concave },
        argmin,
    })
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) {
        return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
    }
    Ok(())
}

/// `(G^2 / mu) ln T`.
pub fn hazan_bound(g: f64, mu: f64, t: f64) -> Result<f64> {
    non_negative("G", g)?;
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    if !(t >= 1.0) {
        return Err(Error::invalid(format!("horizon must be at least 1, got {t}")));
    }
    Ok(g * g / mu * t.ln())
}

/// `((diam^2 + G^2) / 2) sqrt T`.
pub fn zinkevich_bound(diam: f64, g: f64, t: f64) -> Result<f64> {
    non_negative("diameter", diam)?;
    non_negative("G", g)?;
    non_negative("T", t)?;
    Ok((diam * diam + g * g) / 2.0 * t.sqrt())
}

/// `(G^2 / mu) ln T + (G / mu) P_T`.
pub fn besbes_dynamic_bound(g: f64, mu: f64, t: f64, path_length: f64) -> Result<f64> {
    non_negative("path length", path_length)?;
    Ok(hazan_bound(g, mu, t)? + g / mu * path_length)
}
