//! Gaussian-process surrogate on the unit box.
//!
//! Matérn-5/2 kernel with per-dimension length scales picked from a grid by
//! restricted marginal likelihood, a fixed relative nugget, and an explicit
//! quadratic trend (constant trend when data are too few) estimated by
//! generalized least squares.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Observation-noise variance relative to the signal variance.
pub const NUGGET: f64 = 1e-6;
const LENGTH_GRID: [f64; 4] = [0.1, 0.25, 0.6, 1.5];
const MIN_SIGNAL_VAR: f64 = 1e-10;

fn matern52(a: &[f64], b: &[f64], lengths: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(lengths)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let s = (5.0 * r2).sqrt();
    (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Constant,
    Quadratic,
}

impl Trend {
    fn width(self, dim: usize) -> usize {
        match self {
            Trend::Constant => 1,
            Trend::Quadratic => 1 + dim + dim * (dim + 1) / 2,
        }
    }

    fn basis(self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![1.0];
        if self == Trend::Quadratic {
            let c: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
            h.extend_from_slice(&c);
            for i in 0..c.len() {
                for j in i..c.len() {
                    h.push(c[i] * c[j]);
                }
            }
        }
        h
    }
}

/// Posterior over the latent function.
pub struct GaussianProcess {
    xs: Vec<Vec<f64>>,
    lengths: Vec<f64>,
    trend: Trend,
    chol: Cholesky<f64, Dyn>,
    /// `L^-1 H`
    whitened_basis: DMatrix<f64>,
    /// Cholesky factor of `H^T R^-1 H`.
    gls_chol: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    /// `R^-1 (y - H beta)`
    weights: DVector<f64>,
    signal_var: f64,
}

struct Candidate {
    gp: GaussianProcess,
    score: f64,
}

impl GaussianProcess {
    /// Fits to `ys` at unit-box points `xs`. Returns `None` when every
    /// hyperparameter setting is numerically singular.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Option<Self> {
        let n = xs.len();
        let dim = xs.first()?.len();
        let trend = if n >= Trend::Quadratic.width(dim) + 2 {
            Trend::Quadratic
        } else {
            Trend::Constant
        };
        let mut best: Option<Candidate> = None;
        let grid_points = LENGTH_GRID.len().pow(dim as u32);
        for code in 0..grid_points {
            let mut c = code;
            let lengths: Vec<f64> = (0..dim)
                .map(|_| {
                    let l = LENGTH_GRID[c % LENGTH_GRID.len()];
                    c /= LENGTH_GRID.len();
                    l
                })
                .collect();
            if let Some(cand) = Self::fit_with(xs, ys, lengths, trend) {
                if best.as_ref().map_or(true, |b| cand.score > b.score) {
                    best = Some(cand);
                }
            }
        }
        best.map(|b| b.gp)
    }

    fn fit_with(xs: &[Vec<f64>], ys: &[f64], lengths: Vec<f64>, trend: Trend) -> Option<Candidate> {
        let n = xs.len();
        let p = trend.width(xs[0].len());
        let r = DMatrix::from_fn(n, n, |i, j| {
            matern52(&xs[i], &xs[j], &lengths) + if i == j { NUGGET } else { 0.0 }
        });
        let chol = Cholesky::new(r)?;
        let h = DMatrix::from_fn(n, p, |i, j| trend.basis(&xs[i])[j]);
        let y = DVector::from_column_slice(ys);
        let l = chol.l();
        let whitened_basis = l.solve_lower_triangular(&h)?;
        let wy = l.solve_lower_triangular(&y)?;
        let gls = whitened_basis.transpose() * &whitened_basis;
        let gls_chol = Cholesky::new(gls)?;
        let beta = gls_chol.solve(&(whitened_basis.transpose() * &wy));
        let resid = &y - &h * &beta;
        let weights = chol.solve(&resid);
        let dof = (n.saturating_sub(p)).max(1) as f64;
        let signal_var = (resid.dot(&weights) / dof).max(MIN_SIGNAL_VAR);
        let log_det_r: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_det_g: f64 = 2.0 * gls_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let score = -0.5 * dof * signal_var.ln() - 0.5 * log_det_r - 0.5 * log_det_g;
        if !score.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return None;
        }
        Some(Candidate {
            gp: GaussianProcess {
                xs: xs.to_vec(),
                lengths,
                trend,
                chol,
                whitened_basis,
                gls_chol,
                beta,
                weights,
                signal_var,
            },
            score,
        })
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.xs.len();
        let k = DVector::from_fn(n, |i, _| matern52(x, &self.xs[i], &self.lengths));
        let h = DVector::from_vec(self.trend.basis(x));
        let mean = h.dot(&self.beta) + k.dot(&self.weights);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k)
            .unwrap_or_else(|| DVector::zeros(n));
        let q = &h - self.whitened_basis.transpose() * &v;
        let trend_var = q.dot(&self.gls_chol.solve(&q));
        let var = self.signal_var * (1.0 - v.norm_squared() + trend_var);
        (mean, var.max(0.0).sqrt())
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.lengths
    }
}
