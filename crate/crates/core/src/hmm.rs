//! Gaussian hidden Markov model over R_DC observations.
//!
//! Baum-Welch runs on z-scored observations with scaled forward-backward
//! recursions; fitted parameters are reported in original units. Decoding is
//! log-domain Viterbi with ties broken toward the lower state index.

use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum emission variance on the standardized scale.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm<F> {
    pub initial: Vec<F>,
    /// Row-stochastic, `transitions[i][j] = P(j | i)`.
    pub transitions: Vec<Vec<F>>,
    pub means: Vec<F>,
    pub variances: Vec<F>,
}

impl<F: Scalar> GaussianHmm<F> {
    pub fn new(initial: Vec<F>, transitions: Vec<Vec<F>>, means: Vec<F>, variances: Vec<F>) -> Result<Self> {
        let m = GaussianHmm {
            initial,
            transitions,
            means,
            variances,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0
            || self.transitions.len() != n
            || self.means.len() != n
            || self.variances.len() != n
            || self.transitions.iter().any(|r| r.len() != n)
        {
            return Err(Error::domain("inconsistent HMM dimensions"));
        }
        let tol = F::lit(1e-9);
        let stochastic = |row: &[F]| {
            row.iter().all(|p| *p >= F::zero() && p.is_finite())
                && (row.iter().fold(F::zero(), |a, b| a + *b) - F::one()).abs() <= tol
        };
        if !stochastic(&self.initial) || !self.transitions.iter().all(|r| stochastic(r)) {
            return Err(Error::domain("HMM probabilities must be stochastic"));
        }
        if self.variances.iter().any(|v| !(*v > F::zero())) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("HMM emissions must have finite means and positive variances"));
        }
        Ok(())
    }

    /// `log N(o | mean_k, var_k)`.
    pub fn log_emission(&self, state: usize, o: F) -> F {
        let var = self.variances[state];
        let d = o - self.means[state];
        let two_pi = F::lit(std::f64::consts::TAU);
        -F::lit(0.5) * (two_pi * var).ln() - d * d / (var + var)
    }

    /// Log-likelihood of `obs` under the model.
    pub fn log_likelihood(&self, obs: &[F]) -> F {
        forward_backward(self, obs).log_likelihood
    }

    /// Posterior state probabilities at every time index.
    pub fn posteriors(&self, obs: &[F]) -> Vec<Vec<F>> {
        forward_backward(self, obs).gamma
    }
}

struct Expectations<F> {
    log_likelihood: F,
    gamma: Vec<Vec<F>>,
    /// Summed pairwise posteriors over t.
    xi_sum: Vec<Vec<F>>,
}

/// Scaled forward-backward. Emissions are rescaled per time step by their
/// maximum, so observations far from every state do not underflow.
fn forward_backward<F: Scalar>(model: &GaussianHmm<F>, obs: &[F]) -> Expectations<F> {
    let n = model.n_states();
    let t_len = obs.len();
    let mut b = vec![vec![F::zero(); n]; t_len];
    let mut log_shift = F::zero();
    for (t, &o) in obs.iter().enumerate() {
        let logs: Vec<F> = (0..n).map(|k| model.log_emission(k, o)).collect();
        let m = logs.iter().copied().fold(F::neg_infinity(), F::max);
        log_shift = log_shift + m;
        for k in 0..n {
            b[t][k] = (logs[k] - m).exp();
        }
    }

    let mut alpha = vec![vec![F::zero(); n]; t_len];
    let mut scale = vec![F::zero(); t_len];
    for t in 0..t_len {
        for j in 0..n {
            let prior = if t == 0 {
                model.initial[j]
            } else {
                (0..n).fold(F::zero(), |acc, i| acc + alpha[t - 1][i] * model.transitions[i][j])
            };
            alpha[t][j] = prior * b[t][j];
        }
        let c = alpha[t].iter().fold(F::zero(), |a, v| a + *v);
        let c = if c > F::zero() { c } else { F::min_positive_value() };
        scale[t] = c;
        for v in alpha[t].iter_mut() {
            *v = *v / c;
        }
    }

    let mut beta = vec![vec![F::one(); n]; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..n {
            let s = (0..n).fold(F::zero(), |acc, j| {
                acc + model.transitions[i][j] * b[t + 1][j] * beta[t + 1][j]
            });
            beta[t][i] = s / scale[t + 1];
        }
    }

    let mut gamma = vec![vec![F::zero(); n]; t_len];
    for t in 0..t_len {
        let mut z = F::zero();
        for k in 0..n {
            gamma[t][k] = alpha[t][k] * beta[t][k];
            z = z + gamma[t][k];
        }
        if z > F::zero() {
            for g in gamma[t].iter_mut() {
                *g = *g / z;
            }
        }
    }

    let mut xi_sum = vec![vec![F::zero(); n]; n];
    for t in 0..t_len.saturating_sub(1) {
        let mut local = vec![vec![F::zero(); n]; n];
        let mut z = F::zero();
        for i in 0..n {
            for j in 0..n {
                let v = alpha[t][i] * model.transitions[i][j] * b[t + 1][j] * beta[t + 1][j];
                local[i][j] = v;
                z = z + v;
            }
        }
        if z > F::zero() {
            for i in 0..n {
                for j in 0..n {
                    xi_sum[i][j] = xi_sum[i][j] + local[i][j] / z;
                }
            }
        }
    }

    let log_likelihood = scale.iter().fold(F::zero(), |a, c| a + c.ln()) + log_shift;
    Expectations {
        log_likelihood,
        gamma,
        xi_sum,
    }
}

fn m_step<F: Scalar>(prev: &GaussianHmm<F>, obs: &[F], e: &Expectations<F>) -> GaussianHmm<F> {
    let n = prev.n_states();
    let floor = F::lit(VARIANCE_FLOOR);
    let mut next = prev.clone();
    next.initial = e.gamma[0].clone();
    for i in 0..n {
        let row_total = e.xi_sum[i].iter().fold(F::zero(), |a, v| a + *v);
        if row_total > F::zero() {
            for j in 0..n {
                next.transitions[i][j] = e.xi_sum[i][j] / row_total;
            }
        }
        let occ = e.gamma.iter().fold(F::zero(), |a, g| a + g[i]);
        if occ > F::zero() {
            let mean = obs.iter().zip(&e.gamma).fold(F::zero(), |a, (o, g)| a + g[i] * *o) / occ;
            let var = obs
                .iter()
                .zip(&e.gamma)
                .fold(F::zero(), |a, (o, g)| a + g[i] * (*o - mean) * (*o - mean))
                / occ;
            next.means[i] = mean;
            next.variances[i] = var.max(floor);
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub n_states: usize,
    pub max_iters: usize,
    /// Stop once the log-likelihood gain drops below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_states: 2,
            max_iters: 200,
            tol: 1e-6,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<F> {
    pub model: GaussianHmm<F>,
    pub log_likelihood: F,
    /// Log-likelihood before the first and after every EM step of the kept restart.
    pub history: Vec<F>,
    /// Index of the restart that produced `model`.
    pub restart: usize,
}

fn initial_model<F: Scalar>(z: &[F], n: usize, restart: usize, seed: u64) -> GaussianHmm<F> {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite observations"));
    let len = sorted.len();
    let mut means = Vec::with_capacity(n);
    let mut variances = Vec::with_capacity(n);
    for k in 0..n {
        let chunk = &sorted[k * len / n..(k + 1) * len / n];
        let cnt = F::from_usize(chunk.len()).unwrap();
        let mean = chunk.iter().fold(F::zero(), |a, v| a + *v) / cnt;
        let var = chunk.iter().fold(F::zero(), |a, v| a + (*v - mean) * (*v - mean)) / cnt;
        means.push(mean);
        variances.push(var.max(F::lit(VARIANCE_FLOOR)));
    }
    let stay = 0.9;
    let leave = if n > 1 { (1.0 - stay) / (n - 1) as f64 } else { 0.0 };
    let mut transitions: Vec<Vec<F>> = (0..n)
        .map(|i| (0..n).map(|j| F::lit(if i == j { stay } else { leave })).collect())
        .collect();
    if n == 1 {
        transitions[0][0] = F::one();
    }
    let mut model = GaussianHmm {
        initial: vec![F::one() / F::from_usize(n).unwrap(); n],
        transitions,
        means,
        variances,
    };
    if restart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        for k in 0..n {
            let dm: f64 = StandardNormal.sample(&mut rng);
            let dv: f64 = StandardNormal.sample(&mut rng);
            model.means[k] = model.means[k] + F::lit(0.25 * dm);
            model.variances[k] = (model.variances[k] * F::lit((0.3 * dv).exp())).max(F::lit(VARIANCE_FLOOR));
        }
    }
    model
}

fn run_em<F: Scalar>(z: &[F], mut model: GaussianHmm<F>, cfg: &FitConfig) -> (GaussianHmm<F>, Vec<F>) {
    let mut e = forward_backward(&model, z);
    let mut history = vec![e.log_likelihood];
    let tol = F::lit(cfg.tol);
    for _ in 0..cfg.max_iters {
        let candidate = m_step(&model, z, &e);
        let next_e = forward_backward(&candidate, z);
        let gain = next_e.log_likelihood - e.log_likelihood;
        model = candidate;
        e = next_e;
        history.push(e.log_likelihood);
        if gain < tol {
            break;
        }
    }
    (model, history)
}

/// Fits an `n_states` Gaussian HMM by Baum-Welch with seeded restarts and
/// keeps the restart with the highest final log-likelihood.
///
/// Restart 0 starts from the median split of the sorted observations; later
/// restarts jitter it. With `max_iters == 0` the median-split start is
/// returned as is.
pub fn fit_baum_welch<F: Scalar>(obs: &[F], cfg: &FitConfig) -> Result<FitResult<F>> {
    let n = cfg.n_states;
    if n == 0 {
        return Err(Error::domain("need at least one state"));
    }
    let min_len = if cfg.max_iters == 0 { n.max(1) } else { 2 * n };
    if obs.len() < min_len {
        return Err(Error::domain(format!(
            "{} observations is too few for a {n}-state fit (need {min_len})",
            obs.len()
        )));
    }
    if obs.iter().any(|o| !o.is_finite() || *o < F::zero()) {
        return Err(Error::domain("observations must be finite and non-negative"));
    }
    let len = F::from_usize(obs.len()).unwrap();
    let mean = obs.iter().fold(F::zero(), |a, v| a + *v) / len;
    let var = obs.iter().fold(F::zero(), |a, v| a + (*v - mean) * (*v - mean)) / len;
    let sd = var.sqrt();
    if !(sd > F::zero()) {
        return Err(Error::Degenerate("all observations are identical".into()));
    }
    let z: Vec<F> = obs.iter().map(|o| (*o - mean) / sd).collect();

    let restarts = if cfg.max_iters == 0 { 1 } else { cfg.restarts.max(1) };
    let mut best: Option<(GaussianHmm<F>, Vec<F>, usize)> = None;
    for r in 0..restarts {
        let init = initial_model(&z, n, r, cfg.seed);
        let (model, history) = run_em(&z, init, cfg);
        let ll = *history.last().unwrap();
        let better = match &best {
            None => true,
            Some((_, h, _)) => ll > *h.last().unwrap(),
        };
        if better {
            best = Some((model, history, r));
        }
    }
    let (zmodel, zhistory, restart) = best.expect("at least one restart");

    let shift = len * sd.ln();
    let model = GaussianHmm {
        initial: zmodel.initial,
        transitions: zmodel.transitions,
        means: zmodel.means.iter().map(|m| mean + sd * *m).collect(),
        variances: zmodel.variances.iter().map(|v| *v * var).collect(),
    };
    let history: Vec<F> = zhistory.iter().map(|ll| *ll - shift).collect();
    Ok(FitResult {
        model,
        log_likelihood: *history.last().unwrap(),
        history,
        restart,
    })
}

fn log_transitions<F: Scalar>(model: &GaussianHmm<F>) -> Vec<Vec<F>> {
    model.transitions.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
}

/// One max-product step: `next[j] = max_i(delta[i] + log_a[i][j]) + log b_j(o)`,
/// with the argmax (lower index on ties) written to `ptr`.
fn viterbi_step<F: Scalar>(model: &GaussianHmm<F>, log_a: &[Vec<F>], delta: &[F], o: F, next: &mut [F], ptr: &mut [usize]) {
    let n = delta.len();
    for j in 0..n {
        let mut best_i = 0;
        let mut best_v = delta[0] + log_a[0][j];
        for i in 1..n {
            let v = delta[i] + log_a[i][j];
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        ptr[j] = best_i;
        next[j] = best_v + model.log_emission(j, o);
    }
}

fn argmax_low<F: Scalar>(delta: &[F]) -> usize {
    let mut last = 0;
    for k in 1..delta.len() {
        if delta[k] > delta[last] {
            last = k;
        }
    }
    last
}

/// Most likely state path, ties resolved toward the lower state index.
pub fn viterbi<F: Scalar>(model: &GaussianHmm<F>, obs: &[F]) -> Result<Vec<usize>> {
    if obs.is_empty() {
        return Err(Error::domain("cannot decode an empty sequence"));
    }
    let n = model.n_states();
    let log_a = log_transitions(model);
    let mut delta: Vec<F> = (0..n).map(|k| model.initial[k].ln() + model.log_emission(k, obs[0])).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(obs.len());
    back.push(vec![0; n]);
    let mut next = vec![F::zero(); n];
    for &o in &obs[1..] {
        let mut ptr = vec![0usize; n];
        viterbi_step(model, &log_a, &delta, o, &mut next, &mut ptr);
        back.push(ptr);
        std::mem::swap(&mut delta, &mut next);
    }
    let mut path = vec![0usize; obs.len()];
    path[obs.len() - 1] = argmax_low(&delta);
    for t in (1..obs.len()).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path)
}

/// Online form of [`viterbi`] that only tracks the final state of the best
/// path. After pushing `obs`, [`last_state`](Self::last_state) equals
/// `viterbi(model, obs)`'s last element, at O(1) cost per observation.
#[derive(Debug, Clone)]
pub struct ViterbiFilter<'a, F> {
    model: &'a GaussianHmm<F>,
    log_a: Vec<Vec<F>>,
    delta: Vec<F>,
    next: Vec<F>,
    ptr: Vec<usize>,
    len: usize,
}

impl<'a, F: Scalar> ViterbiFilter<'a, F> {
    pub fn new(model: &'a GaussianHmm<F>) -> Self {
        let n = model.n_states();
        ViterbiFilter {
            model,
            log_a: log_transitions(model),
            delta: vec![F::zero(); n],
            next: vec![F::zero(); n],
            ptr: vec![0; n],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, o: F) {
        if self.len == 0 {
            for k in 0..self.delta.len() {
                self.delta[k] = self.model.initial[k].ln() + self.model.log_emission(k, o);
            }
        } else {
            viterbi_step(self.model, &self.log_a, &self.delta, o, &mut self.next, &mut self.ptr);
            std::mem::swap(&mut self.delta, &mut self.next);
        }
        self.len += 1;
    }

    pub fn last_state(&self) -> Option<usize> {
        (self.len > 0).then(|| argmax_low(&self.delta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeLabel {
    Normal,
    Abnormal,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::Normal => "normal",
            RegimeLabel::Abnormal => "abnormal",
        })
    }
}

/// State-to-regime assignment of a two-state model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeMap {
    pub abnormal_state: usize,
}

impl RegimeMap {
    pub fn label(&self, state: usize) -> RegimeLabel {
        if state == self.abnormal_state {
            RegimeLabel::Abnormal
        } else {
            RegimeLabel::Normal
        }
    }
}

/// The state with the larger R_DC mean is abnormal; equal means fall back
/// to the larger variance, and a full tie picks state 1.
pub fn label_regimes<F: Scalar>(model: &GaussianHmm<F>) -> Result<RegimeMap> {
    if model.n_states() != 2 {
        return Err(Error::domain("regime labelling needs a two-state model"));
    }
    let (m, v) = (&model.means, &model.variances);
    let abnormal_state = if m[0] > m[1] || (m[0] == m[1] && v[0] > v[1]) { 0 } else { 1 };
    Ok(RegimeMap { abnormal_state })
}

/// Regime of the last observation of `history` under full-history Viterbi.
pub fn predict_regime<F: Scalar>(model: &GaussianHmm<F>, map: RegimeMap, history: &[F]) -> Result<RegimeLabel> {
    let path = viterbi(model, history)?;
    Ok(map.label(*path.last().expect("nonempty path")))
}

/// Flat `key = value` model dump.
pub fn write_model_dump<W: Write>(model: &GaussianHmm<f64>, map: RegimeMap, mut w: W) -> Result<()> {
    if model.n_states() != 2 {
        return Err(Error::domain("model dump is defined for two states"));
    }
    let a = &model.transitions;
    let lines = [
        ("pi_0", model.initial[0]),
        ("pi_1", model.initial[1]),
        ("a_00", a[0][0]),
        ("a_01", a[0][1]),
        ("a_10", a[1][0]),
        ("a_11", a[1][1]),
        ("mu_0", model.means[0]),
        ("var_0", model.variances[0]),
        ("mu_1", model.means[1]),
        ("var_1", model.variances[1]),
    ];
    for (k, v) in lines {
        writeln!(w, "{k} = {v:e}")?;
    }
    writeln!(w, "abnormal_state = {}", map.abnormal_state)?;
    Ok(())
}

pub fn read_model_dump<R: BufRead>(r: R) -> Result<(GaussianHmm<f64>, RegimeMap)> {
    let mut kv = std::collections::HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| -> Result<f64> {
        kv.get(k)
            .ok_or_else(|| Error::domain(format!("model dump missing {k}")))?
            .parse::<f64>()
            .map_err(|e| Error::domain(format!("model dump {k}: {e}")))
    };
    let model = GaussianHmm::new(
        vec![get("pi_0")?, get("pi_1")?],
        vec![vec![get("a_00")?, get("a_01")?], vec![get("a_10")?, get("a_11")?]],
        vec![get("mu_0")?, get("mu_1")?],
        vec![get("var_0")?, get("var_1")?],
    )?;
    let abnormal_state = get("abnormal_state")? as usize;
    if abnormal_state > 1 {
        return Err(Error::domain("abnormal_state must be 0 or 1"));
    }
    Ok((model, RegimeMap { abnormal_state }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_force_viterbi;
    use rand::Rng;
    use rand_distr::Normal;

    /// Alternating blocks of 50 from two Gaussians.
    fn two_regime_sample(seed: u64, len: usize) -> (Vec<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = Normal::new(1e-5, 1e-6).unwrap();
        let hi = Normal::new(1e-4, 1e-5).unwrap();
        let mut obs = Vec::with_capacity(len);
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let s = (t / 50) % 2;
            let v: f64 = if s == 0 { lo.sample(&mut rng) } else { hi.sample(&mut rng) };
            obs.push(v.abs());
            states.push(s);
        }
        (obs, states)
    }

    fn random_model(rng: &mut ChaCha8Rng) -> GaussianHmm<f64> {
        let p: f64 = rng.gen_range(0.05..0.95);
        let a: f64 = rng.gen_range(0.05..0.95);
        let b: f64 = rng.gen_range(0.05..0.95);
        GaussianHmm::new(
            vec![p, 1.0 - p],
            vec![vec![a, 1.0 - a], vec![1.0 - b, b]],
            vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            vec![rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
        )
        .unwrap()
    }

    #[test]
    fn recovers_generating_means() {
        let (obs, _) = two_regime_sample(7, 500);
        let fit = fit_baum_welch(&obs, &FitConfig { seed: 7, ..Default::default() }).unwrap();
        let mut means = fit.model.means.clone();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] - 1e-5).abs() / 1e-5 < 0.1, "{means:?}");
        assert!((means[1] - 1e-4).abs() / 1e-4 < 0.1, "{means:?}");
        fit.model.validate().unwrap();
    }

    #[test]
    fn log_likelihood_is_monotone() {
        for seed in 0..10 {
            let (obs, _) = two_regime_sample(seed, 300);
            let fit = fit_baum_welch(&obs, &FitConfig { seed, tol: 0.0, max_iters: 60, ..Default::default() }).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
            }
            let direct = fit.model.log_likelihood(&obs);
            assert!((direct - fit.log_likelihood).abs() < 1e-6 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn zero_iterations_returns_the_initialization() {
        let obs = [1.0, 2.0, 4.0];
        let cfg = FitConfig { max_iters: 0, ..Default::default() };
        let fit = fit_baum_welch(&obs, &cfg).unwrap();
        assert_eq!(fit.history.len(), 1);
        let mean = 7.0 / 3.0;
        let sd = ((1.0f64 - mean).powi(2) + (2.0 - mean).powi(2) + (4.0 - mean).powi(2)).sqrt() / 3f64.sqrt();
        let z: Vec<f64> = obs.iter().map(|o| (o - mean) / sd).collect();
        let init = initial_model(&z, 2, 0, cfg.seed);
        for k in 0..2 {
            assert!((fit.model.means[k] - (mean + sd * init.means[k])).abs() < 1e-12);
        }
        assert_eq!(fit.model.initial, vec![0.5, 0.5]);
        assert!((fit.model.transitions[0][0] - 0.9).abs() < 1e-15 && (fit.model.transitions[0][1] - 0.1).abs() < 1e-15);
        // lower chunk {1.0}, upper chunk {2.0, 4.0}
        assert!((fit.model.means[0] - 1.0).abs() < 1e-12);
        assert!((fit.model.means[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_baum_welch(&[1.0, 2.0, 3.0], &FitConfig::default()), Err(Error::Domain(_))));
        assert!(matches!(fit_baum_welch(&[2.0; 10], &FitConfig::default()), Err(Error::Degenerate(_))));
        assert!(fit_baum_welch(&[1.0, -2.0, 3.0, 4.0], &FitConfig::default()).is_err());
        assert!(fit_baum_welch(&[1.0, f64::NAN, 3.0, 4.0], &FitConfig::default()).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let (obs, _) = two_regime_sample(3, 200);
        let cfg = FitConfig { seed: 11, ..Default::default() };
        assert_eq!(fit_baum_welch(&obs, &cfg).unwrap(), fit_baum_welch(&obs, &cfg).unwrap());
    }

    #[test]
    fn posteriors_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = random_model(&mut rng);
            let obs: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for g in m.posteriors(&obs) {
                assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posteriors_survive_outliers() {
        let m = GaussianHmm::new(vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![0.0, 1.0], vec![1e-6, 1e-6]).unwrap();
        let g = m.posteriors(&[0.0, 500.0, 1.0]);
        assert!(g.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
        assert!(m.log_likelihood(&[0.0, 500.0]).is_finite());
    }

    #[test]
    fn single_observation_viterbi() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let m = random_model(&mut rng);
            let o: f64 = rng.gen_range(-2.0..2.0);
            let s0 = m.initial[0].ln() + m.log_emission(0, o);
            let s1 = m.initial[1].ln() + m.log_emission(1, o);
            let expect = if s1 > s0 { 1 } else { 0 };
            assert_eq!(viterbi(&m, &[o]).unwrap(), vec![expect]);
        }
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..60 {
            let m = random_model(&mut rng);
            let len = rng.gen_range(1..=10);
            let obs: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let log_pi: Vec<f64> = m.initial.iter().map(|p| p.ln()).collect();
            let log_a: Vec<Vec<f64>> = m.transitions.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
            let log_b: Vec<Vec<f64>> = obs.iter().map(|&o| vec![m.log_emission(0, o), m.log_emission(1, o)]).collect();
            assert_eq!(viterbi(&m, &obs).unwrap(), brute_force_viterbi(&log_pi, &log_a, &log_b));
        }
    }

    #[test]
    fn online_filter_tracks_full_decoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let m = random_model(&mut rng);
            let obs: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut filter = ViterbiFilter::new(&m);
            assert_eq!(filter.last_state(), None);
            for t in 0..obs.len() {
                filter.push(obs[t]);
                let full = viterbi(&m, &obs[..=t]).unwrap();
                assert_eq!(filter.last_state(), full.last().copied());
            }
        }
    }

    #[test]
    fn uninformative_emissions_stay_in_state_zero() {
        let m = GaussianHmm::new(vec![1.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        assert_eq!(viterbi(&m, &[0.1, 3.0, -2.0, 0.5]).unwrap(), vec![0; 4]);
        assert!(viterbi(&m, &[]).is_err());
    }

    #[test]
    fn label_rules() {
        let a = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let m = GaussianHmm::new(vec![0.5, 0.5], a.clone(), vec![1e-5, 1e-4], vec![1e-12, 1e-12]).unwrap();
        assert_eq!(label_regimes(&m).unwrap().abnormal_state, 1);
        let m = GaussianHmm::new(vec![0.5, 0.5], a.clone(), vec![1e-5, 1e-5], vec![1e-12, 1e-10]).unwrap();
        assert_eq!(label_regimes(&m).unwrap().abnormal_state, 1);
        let m = GaussianHmm::new(vec![0.5, 0.5], a, vec![2e-5, 1e-5], vec![1e-12, 1e-10]).unwrap();
        assert_eq!(label_regimes(&m).unwrap().abnormal_state, 0);
    }

    #[test]
    fn labels_follow_components_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let m = random_model(&mut rng);
            let swapped = GaussianHmm::new(
                vec![m.initial[1], m.initial[0]],
                vec![
                    vec![m.transitions[1][1], m.transitions[1][0]],
                    vec![m.transitions[0][1], m.transitions[0][0]],
                ],
                vec![m.means[1], m.means[0]],
                vec![m.variances[1], m.variances[0]],
            )
            .unwrap();
            let a = label_regimes(&m).unwrap().abnormal_state;
            let b = label_regimes(&swapped).unwrap().abnormal_state;
            assert_eq!(a, 1 - b);
        }
    }

    #[test]
    fn abnormal_is_the_minority_on_planted_bursts() {
        // bursts cover 20% of the span
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let calm = Normal::new(1e-5, 2e-6).unwrap();
        let burst = Normal::new(8e-5, 1e-5).unwrap();
        let obs: Vec<f64> = (0..1000)
            .map(|t| {
                let v: f64 = if t % 250 >= 200 { burst.sample(&mut rng) } else { calm.sample(&mut rng) };
                v.abs()
            })
            .collect();
        let fit = fit_baum_welch(&obs, &FitConfig { seed: 1, ..Default::default() }).unwrap();
        let map = label_regimes(&fit.model).unwrap();
        let path = viterbi(&fit.model, &obs).unwrap();
        let abnormal = path.iter().filter(|s| map.label(**s) == RegimeLabel::Abnormal).count();
        assert!(abnormal > 0 && (abnormal as f64) < 0.3 * obs.len() as f64, "{abnormal}");
    }

    #[test]
    fn prediction_flips_on_extreme_observation() {
        let m = GaussianHmm::new(
            vec![0.5, 0.5],
            vec![vec![0.95, 0.05], vec![0.05, 0.95]],
            vec![1e-5, 1e-4],
            vec![1e-12, 1e-10],
        )
        .unwrap();
        let map = label_regimes(&m).unwrap();
        let mut history = vec![1e-5; 30];
        assert_eq!(predict_regime(&m, map, &history).unwrap(), RegimeLabel::Normal);
        assert_eq!(predict_regime(&m, map, &history).unwrap(), RegimeLabel::Normal);
        history.push(1.2e-4);
        assert_eq!(predict_regime(&m, map, &history).unwrap(), RegimeLabel::Abnormal);
        assert_eq!(predict_regime(&m, map, &[1e-5]).unwrap(), RegimeLabel::Normal);
    }

    #[test]
    fn model_dump_roundtrip() {
        let m = GaussianHmm::new(vec![0.3, 0.7], vec![vec![0.9, 0.1], vec![0.2, 0.8]], vec![1.5e-5, 9e-5], vec![2e-12, 3e-10]).unwrap();
        let map = label_regimes(&m).unwrap();
        let mut buf = Vec::new();
        write_model_dump(&m, map, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("pi_0 = "));
        assert!(text.ends_with("abnormal_state = 1\n"));
        let (back, back_map) = read_model_dump(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back_map, map);
    }
}
