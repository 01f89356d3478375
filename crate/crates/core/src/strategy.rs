//! Directional-change trading machine with optional regime gating.
//!
//! Signals, from the DC tracker's point of view:
//! * upturn confirmed: query the regime and go all-in when flat and Normal (rule 1)
//! * new high in an uptrend with `p_h >= (1 + 2 theta) p_l`: sell (rule 2)
//! * downturn confirmed: sell (rule 3)
//!
//! An Abnormal regime only blocks new buys (rule 4); open positions still
//! exit through rules 2 and 3. A position still open at the end of the
//! series is closed at the last price and logged as rule 0.

use std::fmt;
use std::io::Write;

use crate::dc::{rdc_value, DcConfig, DcTracker, Extreme, Signal};
use crate::error::{Error, Result};
use crate::hmm::{GaussianHmm, RegimeLabel, RegimeMap, ViterbiFilter};
use crate::ingest::{PriceSeries, Timestamp};
use crate::metrics;

pub const INITIAL_CAPITAL: f64 = 10_000.0;

/// Fixed thresholds of the FT benchmark.
pub const FT_THRESHOLDS: [f64; 8] = [0.0003, 0.0005, 0.0008, 0.001, 0.0015, 0.002, 0.0025, 0.003];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    /// Fixed symmetric threshold.
    Ft,
    /// Optimized symmetric threshold.
    OptT,
    /// Optimized `(theta, alpha)`.
    Idc,
    /// Optimized `(theta, alpha)` with regime gating.
    Ita,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [StrategyKind::Ft, StrategyKind::OptT, StrategyKind::Idc, StrategyKind::Ita];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ft => "FT",
            StrategyKind::OptT => "OPT_T",
            StrategyKind::Idc => "IDC",
            StrategyKind::Ita => "ITA",
        }
    }

    pub fn is_gated(self) -> bool {
        self == StrategyKind::Ita
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FT" => Some(StrategyKind::Ft),
            "OPT_T" | "OPTT" | "OPT-T" => Some(StrategyKind::OptT),
            "IDC" => Some(StrategyKind::Idc),
            "ITA" => Some(StrategyKind::Ita),
            _ => None,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a gated strategy gets its regime label from.
#[derive(Debug, Clone, Copy)]
pub enum RegimeSource<'a> {
    Model { model: &'a GaussianHmm<f64>, map: RegimeMap },
    /// Debug override.
    Forced(RegimeLabel),
}

/// Incremental regime state fed with every R_DC observation.
enum RegimeGate<'a> {
    Forced(RegimeLabel),
    Model { filter: ViterbiFilter<'a, f64>, map: RegimeMap },
}

impl<'a> RegimeGate<'a> {
    fn new(src: RegimeSource<'a>, history: &[f64]) -> Self {
        match src {
            RegimeSource::Forced(label) => RegimeGate::Forced(label),
            RegimeSource::Model { model, map } => {
                let mut filter = ViterbiFilter::new(model);
                for &v in history {
                    filter.push(v);
                }
                RegimeGate::Model { filter, map }
            }
        }
    }

    fn observe(&mut self, v: f64) {
        if let RegimeGate::Model { filter, .. } = self {
            filter.push(v);
        }
    }

    /// Label of the latest observation under full-history Viterbi. No
    /// evidence yet means Normal.
    fn label(&self) -> RegimeLabel {
        match self {
            RegimeGate::Forced(label) => *label,
            RegimeGate::Model { filter, map } => filter.last_state().map_or(RegimeLabel::Normal, |s| map.label(s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "BUY",
            Side::Sell => "SELL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    Flat { cash: f64 },
    Long { units: f64, entry_price: f64 },
}

impl Position {
    pub fn value(&self, price: f64) -> f64 {
        match *self {
            Position::Flat { cash } => cash,
            Position::Long { units, .. } => units * price,
        }
    }

    pub fn units(&self) -> f64 {
        match *self {
            Position::Flat { .. } => 0.0,
            Position::Long { units, .. } => units,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeEntry {
    pub index: usize,
    pub timestamp: Timestamp,
    pub side: Side,
    pub price: f64,
    pub capital_after: f64,
    /// 1-3 for the trading rules, 0 for the end-of-series liquidation.
    pub rule: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradeLog {
    pub entries: Vec<TradeEntry>,
}

impl TradeLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn buys(&self) -> usize {
        self.entries.iter().filter(|e| e.side == Side::Buy).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "timestamp,side,price,capital_after,rule")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{},{}", e.timestamp, e.side.as_str(), e.price, e.capital_after, e.rule)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquityCurve {
    pub timestamps: Vec<Timestamp>,
    pub capital: Vec<f64>,
}

impl EquityCurve {
    /// CRR in percent; zero for an empty curve.
    pub fn crr_pct(&self) -> f64 {
        if self.capital.is_empty() {
            0.0
        } else {
            metrics::crr(&self.capital).expect("positive equity")
        }
    }

    /// MDD in percent; zero for an empty curve.
    pub fn mdd_pct(&self) -> f64 {
        if self.capital.is_empty() {
            0.0
        } else {
            metrics::mdd(&self.capital).expect("positive equity")
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "timestamp,capital")?;
        for (t, c) in self.timestamps.iter().zip(&self.capital) {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    }
}

/// A regime lookup made at an upturn confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeQuery {
    pub index: usize,
    pub label: RegimeLabel,
    /// Length of the R_DC history the label was computed from.
    pub history_len: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyRun {
    pub trades: TradeLog,
    pub equity: EquityCurve,
    pub queries: Vec<RegimeQuery>,
    /// Units held after each tick.
    pub units: Vec<f64>,
    /// The R_DC history after the run, including observations formed during it.
    pub rdc_history: Vec<f64>,
}

/// Runs the trading machine over `series`.
///
/// Baselines (`Ft`, `OptT`, `Idc`) never consult `regime`; `Ita` requires it.
/// R_DC observations formed by newly confirmed extremes are appended to a
/// copy of `rdc_history` before each regime query.
pub fn run_strategy(
    series: &PriceSeries,
    config: &DcConfig<f64>,
    kind: StrategyKind,
    regime: Option<RegimeSource<'_>>,
    rdc_history: &[f64],
    initial_capital: f64,
) -> Result<StrategyRun> {
    config.validate()?;
    if !(initial_capital > 0.0) {
        return Err(Error::domain("initial capital must be positive"));
    }
    let mut gate = match (kind.is_gated(), regime) {
        (true, None) => return Err(Error::domain("ITA needs a regime source")),
        (true, Some(src)) => {
            if let RegimeSource::Model { model, .. } = src {
                model.validate()?;
            }
            Some(RegimeGate::new(src, rdc_history))
        }
        (false, _) => None,
    };
    let prices = series.prices();
    let stamps = series.timestamps();
    let mut run = StrategyRun {
        rdc_history: rdc_history.to_vec(),
        ..Default::default()
    };
    let Some(&p0) = prices.first() else {
        return Ok(run);
    };

    let mut tracker = DcTracker::new(*config, p0);
    let mut position = Position::Flat { cash: initial_capital };
    let mut last_extreme: Option<Extreme<f64>> = None;
    let mut log = Vec::new();

    let mut record_extreme = |ext: Extreme<f64>, history: &mut Vec<f64>, gate: &mut Option<RegimeGate<'_>>| {
        if let Some(prev) = last_extreme {
            let secs = stamps[ext.index].seconds_since(stamps[prev.index]);
            if let Some(v) = rdc_value(&prev, &ext, secs) {
                history.push(v);
                if let Some(g) = gate {
                    g.observe(v);
                }
            }
        }
        last_extreme = Some(ext);
    };

    run.equity.timestamps.push(stamps[0]);
    run.equity.capital.push(initial_capital);
    run.units.push(0.0);

    for i in 1..prices.len() {
        let p = prices[i];
        match tracker.step(i, p) {
            Signal::UpturnConfirmed(trough) => {
                record_extreme(trough, &mut run.rdc_history, &mut gate);
                let label = match &gate {
                    Some(g) => {
                        let label = g.label();
                        run.queries.push(RegimeQuery {
                            index: i,
                            label,
                            history_len: run.rdc_history.len(),
                        });
                        label
                    }
                    None => RegimeLabel::Normal,
                };
                if let (RegimeLabel::Normal, Position::Flat { cash }) = (label, position) {
                    position = Position::Long {
                        units: cash / p,
                        entry_price: p,
                    };
                    log.push(entry(i, stamps[i], Side::Buy, p, cash, 1));
                }
            }
            Signal::NewHigh => {
                if let Position::Long { units, .. } = position {
                    if tracker.high() >= (1.0 + 2.0 * config.theta) * tracker.low() {
                        let cash = units * p;
                        position = Position::Flat { cash };
                        log.push(entry(i, stamps[i], Side::Sell, p, cash, 2));
                    }
                }
            }
            Signal::DownturnConfirmed(peak) => {
                record_extreme(peak, &mut run.rdc_history, &mut gate);
                if let Position::Long { units, .. } = position {
                    let cash = units * p;
                    position = Position::Flat { cash };
                    log.push(entry(i, stamps[i], Side::Sell, p, cash, 3));
                }
            }
            Signal::NewLow | Signal::None => {}
        }
        run.equity.timestamps.push(stamps[i]);
        run.equity.capital.push(position.value(p));
        run.units.push(position.units());
    }

    if let Position::Long { units, .. } = position {
        let last = prices.len() - 1;
        let p = prices[last];
        log.push(entry(last, stamps[last], Side::Sell, p, units * p, 0));
    }
    run.trades.entries = log;
    Ok(run)
}

fn entry(index: usize, timestamp: Timestamp, side: Side, price: f64, capital_after: f64, rule: u8) -> TradeEntry {
    TradeEntry {
        index,
        timestamp,
        side,
        price,
        capital_after,
        rule,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtResult {
    pub theta: f64,
    pub run: StrategyRun,
}

/// One symmetric, ungated run per fixed threshold, ordered by threshold.
pub fn run_ft_suite(series: &PriceSeries, thresholds: &[f64], initial_capital: f64) -> Result<Vec<FtResult>> {
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    sorted
        .into_iter()
        .map(|theta| {
            let cfg = DcConfig::symmetric(theta)?;
            let run = run_strategy(series, &cfg, StrategyKind::Ft, None, &[], initial_capital)?;
            Ok(FtResult { theta, run })
        })
        .collect()
}

/// Mean CRR (percent) across an FT suite.
pub fn ft_average_crr(results: &[FtResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(|r| r.run.equity.crr_pct()).sum::<f64>() / results.len() as f64
}
