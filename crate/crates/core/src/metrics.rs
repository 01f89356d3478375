//! Return and risk metrics on equity curves, and Friedman average ranks.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_curve<F: Scalar>(equity: &[F]) -> Result<()> {
    if equity.is_empty() {
        return Err(Error::domain("empty equity curve"));
    }
    if equity.iter().any(|v| !(*v > F::zero()) || !v.is_finite()) {
        return Err(Error::domain("equity values must be positive"));
    }
    Ok(())
}

/// Cumulative return rate in percent: `(P_f - P_i) / P_i * 100`.
pub fn crr<F: Scalar>(equity: &[F]) -> Result<F> {
    check_curve(equity)?;
    let (first, last) = (equity[0], equity[equity.len() - 1]);
    Ok((last - first) / first * F::lit(100.0))
}

/// Maximum drawdown in percent, computed with a running maximum. A curve
/// that never falls has zero drawdown.
pub fn mdd<F: Scalar>(equity: &[F]) -> Result<F> {
    check_curve(equity)?;
    let mut peak = equity[0];
    let mut worst = F::zero();
    for &v in &equity[1..] {
        if v > peak {
            peak = v;
        } else {
            let dd = (peak - v) / peak;
            if dd > worst {
                worst = dd;
            }
        }
    }
    Ok(worst * F::lit(100.0))
}

/// Chains per-period returns (percent) into one whole-period return (percent).
pub fn chain_returns<F: Scalar>(returns_pct: &[F]) -> F {
    let hundred = F::lit(100.0);
    let growth = returns_pct
        .iter()
        .fold(F::one(), |g, r| g * (F::one() + *r / hundred));
    (growth - F::one()) * hundred
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult<F> {
    /// Mean rank of each strategy, 1 = best.
    pub average_ranks: Vec<F>,
    /// Tie-corrected Friedman chi-square statistic.
    pub statistic: F,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Chi-square critical value at the 5% level.
    pub critical_value_05: f64,
}

impl<F: Scalar> FriedmanResult<F> {
    pub fn significant_at_05(&self) -> bool {
        self.statistic.to_f64_lossy() > self.critical_value_05
    }
}

/// statrs' inverse CDF is only bisected to a few digits; polish it with Newton steps.
fn chi_square_quantile(chi: &ChiSquared, p: f64) -> f64 {
    let mut x = chi.inverse_cdf(p);
    for _ in 0..4 {
        let d = chi.pdf(x);
        if d <= 0.0 {
            break;
        }
        x -= (chi.cdf(x) - p) / d;
    }
    x
}

/// Ranks of `values` with 1 = best; tied values share the mean of their ranks.
pub fn rank_with_ties<F: Scalar>(values: &[F], higher_is_better: bool) -> Vec<F> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let c = values[a].partial_cmp(&values[b]).expect("finite values");
        if higher_is_better {
            c.reverse()
        } else {
            c
        }
    });
    let mut ranks = vec![F::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = F::from_usize(i + j + 2).unwrap() / F::lit(2.0);
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman test over a `strategies x datasets` matrix. Non-finite cells
/// count as missing.
pub fn friedman_ranks<F: Scalar>(results: &[Vec<F>], higher_is_better: bool) -> Result<FriedmanResult<F>> {
    let k = results.len();
    if k < 2 {
        return Err(Error::domain("need at least two strategies"));
    }
    let n = results[0].len();
    if n < 2 {
        return Err(Error::domain("need at least two datasets"));
    }
    if results.iter().any(|r| r.len() != n) {
        return Err(Error::domain("ragged result matrix"));
    }
    if let Some((s, d)) = results
        .iter()
        .enumerate()
        .find_map(|(s, r)| r.iter().position(|v| !v.is_finite()).map(|d| (s, d)))
    {
        return Err(Error::domain(format!("missing cell for strategy {s}, dataset {d}")));
    }

    let mut rank_sums = vec![F::zero(); k];
    let mut sum_sq = F::zero();
    for d in 0..n {
        let column: Vec<F> = results.iter().map(|r| r[d]).collect();
        for (s, r) in rank_with_ties(&column, higher_is_better).into_iter().enumerate() {
            rank_sums[s] = rank_sums[s] + r;
            sum_sq = sum_sq + r * r;
        }
    }
    let kf = F::from_usize(k).unwrap();
    let nf = F::from_usize(n).unwrap();
    let average_ranks = rank_sums.iter().map(|r| *r / nf).collect();
    let expected = nf * (kf + F::one()) / F::lit(2.0);
    let spread = rank_sums
        .iter()
        .fold(F::zero(), |a, r| a + (*r - expected) * (*r - expected));
    let denom = sum_sq - nf * kf * (kf + F::one()) * (kf + F::one()) / F::lit(4.0);
    let statistic = if denom > F::zero() {
        (kf - F::one()) * spread / denom
    } else {
        F::zero()
    };
    let df = k - 1;
    let chi = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    Ok(FriedmanResult {
        average_ranks,
        statistic,
        degrees_of_freedom: df,
        p_value: 1.0 - chi.cdf(statistic.to_f64_lossy()),
        critical_value_05: chi_square_quantile(&chi, 0.95),
    })
}
