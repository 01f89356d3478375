//! Synthetic tick generator with planted high-volatility bursts.
//!
//! Mid-prices follow a geometric random walk sampled at exponential tick
//! arrivals. The timeline is cut into fixed-length blocks and a seeded subset
//! of blocks, covering `burst_fraction` of the span, switches to the burst
//! regime (higher volatility, its own drift). Rows carry a burst flag.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::Timestamp;

const DAY_SECONDS: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpec {
    /// Share of the timeline covered by bursts, in `[0, 1]`.
    pub burst_fraction: f64,
    /// Length of one burst block.
    pub burst_days: f64,
    /// Daily log-return volatility in the calm regime.
    pub daily_vol: f64,
    /// Daily log drift in the calm regime.
    pub daily_drift: f64,
    pub burst_vol_multiplier: f64,
    /// Daily log drift inside bursts.
    pub burst_daily_drift: f64,
    pub mean_tick_seconds: f64,
    pub initial_price: f64,
    /// Quoted spread as a fraction of mid.
    pub spread: f64,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        RegimeSpec {
            burst_fraction: 0.2,
            burst_days: 3.0,
            daily_vol: 0.004,
            daily_drift: 0.001,
            burst_vol_multiplier: 4.0,
            burst_daily_drift: -0.02,
            mean_tick_seconds: 60.0,
            initial_price: 1.10000,
            spread: 2e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTick {
    pub timestamp: Timestamp,
    pub bid: f64,
    pub ask: f64,
    pub burst: bool,
}

fn round5(x: f64) -> f64 {
    (x * 1e5).round() / 1e5
}

/// Generates `months` calendar months of ticks starting 2019-01-01 UTC.
pub fn generate(seed: u64, months: u32, spec: &RegimeSpec) -> Result<Vec<SyntheticTick>> {
    if months < 1 {
        return Err(Error::domain("months must be at least 1"));
    }
    if !(0.0..=1.0).contains(&spec.burst_fraction) || !(spec.burst_days > 0.0) || !(spec.mean_tick_seconds > 0.0) {
        return Err(Error::domain(format!("invalid regime spec {spec:?}")));
    }
    let start = Timestamp::parse("20190101 000000000").expect("valid literal");
    let end = start.add_months(months);
    let span_ms = end.0 - start.0;
    let block_ms = (spec.burst_days * DAY_SECONDS * 1000.0) as i64;
    let n_blocks = ((span_ms + block_ms - 1) / block_ms) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.shuffle(&mut rng);
    let n_burst = (spec.burst_fraction * span_ms as f64 / block_ms as f64).round() as usize;
    let mut is_burst = vec![false; n_blocks];
    for &b in order.iter().take(n_burst.min(n_blocks)) {
        is_burst[b] = true;
    }

    let arrivals = Exp::new(1.0 / spec.mean_tick_seconds).expect("positive rate");
    let mut out = Vec::with_capacity((span_ms as f64 / 1000.0 / spec.mean_tick_seconds) as usize + 1);
    let mut log_price = spec.initial_price.ln();
    let mut t = start.0;
    while t < end.0 {
        let burst = is_burst[((t - start.0) / block_ms) as usize];
        let mid = log_price.exp();
        let half = 0.5 * spec.spread * mid;
        out.push(SyntheticTick {
            timestamp: Timestamp(t),
            bid: round5(mid - half),
            ask: round5(mid + half),
            burst,
        });
        let gap_s: f64 = arrivals.sample(&mut rng).max(0.001);
        let days = gap_s / DAY_SECONDS;
        let (vol, drift) = if burst {
            (spec.daily_vol * spec.burst_vol_multiplier, spec.burst_daily_drift)
        } else {
            (spec.daily_vol, spec.daily_drift)
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        log_price += drift * days + vol * days.sqrt() * z;
        t += (gap_s * 1000.0).round().max(1.0) as i64;
    }
    Ok(out)
}

pub fn write_csv<W: Write>(ticks: &[SyntheticTick], mut w: W) -> Result<()> {
    writeln!(w, "timestamp,bid,ask,burst")?;
    for t in ticks {
        writeln!(w, "{},{:.5},{:.5},{}", t.timestamp, t.bid, t.ask, u8::from(t.burst))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_ticks;

    fn short_spec(fraction: f64) -> RegimeSpec {
        RegimeSpec {
            burst_fraction: fraction,
            mean_tick_seconds: 600.0,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(5, 2, &short_spec(0.2)).unwrap();
        let b = generate(5, 2, &short_spec(0.2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(6, 2, &short_spec(0.2)).unwrap());
    }

    #[test]
    fn no_bursts_means_no_flags() {
        let ticks = generate(1, 2, &short_spec(0.0)).unwrap();
        assert!(ticks.iter().all(|t| !t.burst));
    }

    #[test]
    fn burst_share_matches_request() {
        let ticks = generate(3, 10, &short_spec(0.2)).unwrap();
        let share = ticks.iter().filter(|t| t.burst).count() as f64 / ticks.len() as f64;
        assert!((share - 0.2).abs() <= 0.02, "{share}");
    }

    #[test]
    fn output_parses_as_ticks() {
        let ticks = generate(2, 1, &short_spec(0.2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&ticks, &mut buf).unwrap();
        let (series, summary) = parse_ticks(buf.as_slice(), "SYN").unwrap();
        assert_eq!(series.len(), ticks.len());
        assert_eq!(summary.rows_dropped(), 0);
        assert!(ticks.iter().all(|t| t.bid > 0.0 && t.ask >= t.bid));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(1, 0, &RegimeSpec::default()).is_err());
        assert!(generate(1, 1, &short_spec(1.5)).is_err());
    }
}
