//! Sequential surrogate-based search over `(theta, alpha)`.
//!
//! A seeded Latin hypercube seeds the search; every further candidate
//! maximizes expected improvement under a [`gp::GaussianProcess`] fitted to
//! the standardized objective on the unit box. The objective is maximized.

pub mod gp;
mod sampling;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use gp::GaussianProcess;

/// Objective recorded for evaluations that returned a non-finite value.
pub const FAILED_OBJECTIVE: f64 = -1e12;

const N_CANDIDATES: usize = 256;
const N_LOCAL_STARTS: usize = 3;
const LOCAL_MAX_EVALS: usize = 150;
const LOCAL_MIN_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub theta_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
    /// Pins alpha (1 for a symmetric-threshold search).
    pub alpha_fixed: Option<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            theta_bounds: (0.0003, 0.003),
            alpha_bounds: (0.1, 1.0),
            alpha_fixed: None,
        }
    }
}

impl SearchSpace {
    pub fn theta_only(theta_bounds: (f64, f64)) -> Self {
        SearchSpace {
            theta_bounds,
            alpha_bounds: (0.1, 1.0),
            alpha_fixed: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.theta_bounds) || !ok(self.alpha_bounds) || self.theta_bounds.0 <= 0.0 {
            return Err(Error::domain(format!("invalid search bounds {self:?}")));
        }
        if let Some(a) = self.alpha_fixed {
            let inside = a >= self.alpha_bounds.0 && a <= self.alpha_bounds.1;
            if !(inside || a == 1.0) {
                return Err(Error::domain(format!("fixed alpha {a} outside bounds")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        if self.alpha_fixed.is_some() {
            1
        } else {
            2
        }
    }

    /// Maps a unit-box point to `(theta, alpha)`, keeping `theta < alpha`.
    pub fn decode(&self, u: &[f64]) -> (f64, f64) {
        let lerp = |(lo, hi): (f64, f64), t: f64| (lo + t.clamp(0.0, 1.0) * (hi - lo)).clamp(lo, hi);
        let theta = lerp(self.theta_bounds, u[0]);
        let alpha = match self.alpha_fixed {
            Some(a) => a,
            None => lerp(self.alpha_bounds, u[1]),
        };
        if theta >= alpha {
            (alpha * (1.0 - 1e-9), alpha)
        } else {
            (theta, alpha)
        }
    }

    pub fn contains(&self, theta: f64, alpha: f64) -> bool {
        let t = theta >= self.theta_bounds.0 && theta <= self.theta_bounds.1;
        let a = match self.alpha_fixed {
            Some(fixed) => alpha == fixed,
            None => alpha >= self.alpha_bounds.0 && alpha <= self.alpha_bounds.1,
        };
        t && a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    /// 0-based evaluation ordinal.
    pub iteration: usize,
    pub theta: f64,
    pub alpha: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimizeConfig {
    /// Total objective evaluations, initial design included.
    pub n_iters: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            n_iters: 100,
            n_init: 10,
            seed: 0,
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement over `best` for a Gaussian posterior.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gain = mean - best;
    if sd <= 1e-300 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    (gain * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// Acquisition value, compared lexicographically so that flat-zero EI
/// regions still climb the posterior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    ei: f64,
    mean: f64,
}

impl Score {
    fn beats(&self, other: &Score) -> bool {
        self.ei > other.ei || (self.ei == other.ei && self.mean > other.mean)
    }
}

struct Acquisition<'a> {
    gp: &'a GaussianProcess,
    incumbent: f64,
}

impl Acquisition<'_> {
    fn score(&self, u: &[f64]) -> Score {
        let (mean, sd) = self.gp.predict(u);
        Score {
            ei: expected_improvement(mean, sd, self.incumbent),
            mean,
        }
    }

    /// Compass search on the unit box.
    fn climb(&self, start: Vec<f64>) -> (Vec<f64>, Score) {
        let mut x = start;
        let mut fx = self.score(&x);
        let mut step = 0.1;
        let mut evals = 1;
        while step > LOCAL_MIN_STEP && evals < LOCAL_MAX_EVALS {
            let mut moved = false;
            for d in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[d] = (y[d] + dir * step).clamp(0.0, 1.0);
                    if y[d] == x[d] {
                        continue;
                    }
                    let fy = self.score(&y);
                    evals += 1;
                    if fy.beats(&fx) {
                        x = y;
                        fx = fy;
                        moved = true;
                        break;
                    }
                }
            }
            if moved {
                step *= 2.0;
                step = step.min(0.5);
            } else {
                step *= 0.5;
            }
        }
        (x, fx)
    }
}

fn is_duplicate(u: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter().any(|s| s.iter().zip(u).all(|(a, b)| (a - b).abs() < 1e-12))
}

/// Picks the next unit-box point by maximizing EI.
fn propose(xs: &[Vec<f64>], ys: &[f64], all_points: &[Vec<f64>], dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let random_point = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>();
    if xs.len() < 2 {
        return random_point(rng);
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let zs: Vec<f64> = ys.iter().map(|y| (y - mean) / scale).collect();
    let Some(gp) = GaussianProcess::fit(xs, &zs) else {
        return random_point(rng);
    };
    let (best_idx, incumbent) = zs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, z)| if z > acc.1 { (i, z) } else { acc });
    let acq = Acquisition { gp: &gp, incumbent };

    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let mut scored: Vec<(Vec<f64>, Score)> = sampling::halton(N_CANDIDATES, dim, &shift)
        .into_iter()
        .map(|u| {
            let s = acq.score(&u);
            (u, s)
        })
        .collect();
    scored.sort_by(|a, b| {
        if a.1.beats(&b.1) {
            std::cmp::Ordering::Less
        } else if b.1.beats(&a.1) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });

    let mut starts: Vec<Vec<f64>> = vec![xs[best_idx].clone()];
    starts.extend(scored.iter().take(N_LOCAL_STARTS).map(|(u, _)| u.clone()));
    let mut best: Option<(Vec<f64>, Score)> = None;
    for s in starts {
        let (u, score) = acq.climb(s);
        if is_duplicate(&u, all_points) {
            continue;
        }
        if best.as_ref().map_or(true, |(_, b)| score.beats(b)) {
            best = Some((u, score));
        }
    }
    if let Some((u, _)) = best {
        return u;
    }
    scored
        .into_iter()
        .map(|(u, _)| u)
        .find(|u| !is_duplicate(u, all_points))
        .unwrap_or_else(|| random_point(rng))
}

/// Maximizes `objective(theta, alpha)` over `space` with exactly
/// `cfg.n_iters` evaluations. The best trial is the highest objective,
/// earliest on ties.
pub fn optimize<F>(mut objective: F, space: &SearchSpace, cfg: &OptimizeConfig) -> Result<OptimizeResult>
where
    F: FnMut(f64, f64) -> f64,
{
    space.validate()?;
    if cfg.n_init < 1 || cfg.n_iters < cfg.n_init {
        return Err(Error::domain(format!(
            "need n_iters >= n_init >= 1, got n_iters={} n_init={}",
            cfg.n_iters, cfg.n_init
        )));
    }
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_iters);
    let mut history: Vec<Trial> = Vec::with_capacity(cfg.n_iters);
    let mut fit_xs: Vec<Vec<f64>> = Vec::new();
    let mut fit_ys: Vec<f64> = Vec::new();

    let design = sampling::latin_hypercube(cfg.n_init, dim, &mut rng);
    for iteration in 0..cfg.n_iters {
        let u = if iteration < cfg.n_init {
            design[iteration].clone()
        } else {
            propose(&fit_xs, &fit_ys, &points, dim, &mut rng)
        };
        let (theta, alpha) = space.decode(&u);
        let value = objective(theta, alpha);
        let objective_value = if value.is_finite() {
            fit_xs.push(u.clone());
            fit_ys.push(value);
            value
        } else {
            FAILED_OBJECTIVE
        };
        points.push(u);
        history.push(Trial {
            iteration,
            theta,
            alpha,
            objective: objective_value,
        });
    }

    let best = history
        .iter()
        .copied()
        .fold(None::<Trial>, |acc, t| match acc {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .expect("at least one trial");
    Ok(OptimizeResult { best, history })
}

/// Symmetric-threshold search: alpha pinned to 1, theta searched alone.
pub fn optimize_theta_only<F>(mut objective: F, theta_bounds: (f64, f64), cfg: &OptimizeConfig) -> Result<OptimizeResult>
where
    F: FnMut(f64) -> f64,
{
    optimize(|theta, _| objective(theta), &SearchSpace::theta_only(theta_bounds), cfg)
}

pub fn write_trials_csv<W: Write>(history: &[Trial], mut w: W) -> Result<()> {
    writeln!(w, "iteration,theta,alpha,objective")?;
    for t in history {
        writeln!(w, "{},{},{},{}", t.iteration, t.theta, t.alpha, t.objective)?;
    }
    Ok(())
}
