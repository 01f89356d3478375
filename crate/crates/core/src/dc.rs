//! Directional-change decomposition with asymmetric thresholds.
//!
//! An upturn is confirmed once price rises `theta` above the running low, a
//! downturn once it falls `alpha * theta` below the running high. With
//! `alpha = 1` this is the classic symmetric DC summary.
//!
//! The tracker starts undecided with `p_h = p_l = p(t0)`: whichever direction
//! confirms first fixes the initial trend. From then on it is the two-state
//! machine of the ITA pseudocode, and the strategy drives the same tracker.

use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::Timestamp;
use crate::scalar::Scalar;

/// Uptrend threshold `theta` and decay coefficient `alpha` (downturn
/// threshold is `alpha * theta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcConfig<F> {
    pub theta: F,
    pub alpha: F,
}

impl<F: Scalar> DcConfig<F> {
    /// Requires `theta > 0` and `theta < alpha <= 1`.
    pub fn new(theta: F, alpha: F) -> Result<Self> {
        let cfg = DcConfig { theta, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn symmetric(theta: F) -> Result<Self> {
        Self::new(theta, F::one())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > F::zero() && self.theta < self.alpha && self.alpha <= F::one()) {
            return Err(Error::domain(format!(
                "invalid DC config theta={} alpha={}: need theta > 0 and theta < alpha <= 1",
                self.theta, self.alpha
            )));
        }
        Ok(())
    }

    /// Price at or above which an upturn from `low` is confirmed.
    #[inline]
    pub fn upturn_level(&self, low: F) -> F {
        low * (F::one() + self.theta)
    }

    /// Price at or below which a downturn from `high` is confirmed.
    #[inline]
    pub fn downturn_level(&self, high: F) -> F {
        high * (F::one() - self.alpha * self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtremeKind {
    Peak,
    Trough,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extreme<F> {
    pub index: usize,
    pub price: F,
    pub kind: ExtremeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    UpturnDc,
    DownturnDc,
    UpOs,
    DownOs,
}

impl EventKind {
    pub fn is_up(self) -> bool {
        matches!(self, EventKind::UpturnDc | EventKind::UpOs)
    }

    pub fn is_dc(self) -> bool {
        matches!(self, EventKind::UpturnDc | EventKind::DownturnDc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::UpturnDc => "UpturnDC",
            EventKind::DownturnDc => "DownturnDC",
            EventKind::UpOs => "UpOS",
            EventKind::DownOs => "DownOS",
        }
    }
}

/// A DC or overshoot event; `start_index..=end_index` in the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcEventRecord<F> {
    pub kind: EventKind,
    pub start_index: usize,
    pub end_index: usize,
    pub start_price: F,
    pub end_price: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    /// No confirmation yet.
    Undecided,
    Up,
    Down,
}

/// Outcome of feeding one tick to the tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signal<F> {
    None,
    /// Upturn confirmed; carries the trough that started it.
    UpturnConfirmed(Extreme<F>),
    /// Downturn confirmed; carries the peak that started it.
    DownturnConfirmed(Extreme<F>),
    /// New running high while in an uptrend.
    NewHigh,
    /// New running low while in a downtrend.
    NewLow,
}

/// Incremental DC state machine. `Send` and cheap to clone.
#[derive(Debug, Clone)]
pub struct DcTracker<F> {
    config: DcConfig<F>,
    trend: Trend,
    high: F,
    high_index: usize,
    low: F,
    low_index: usize,
}

impl<F: Scalar> DcTracker<F> {
    /// Starts at tick 0 with price `p0`.
    pub fn new(config: DcConfig<F>, p0: F) -> Self {
        DcTracker {
            config,
            trend: Trend::Undecided,
            high: p0,
            high_index: 0,
            low: p0,
            low_index: 0,
        }
    }

    pub fn trend(&self) -> Trend {
        self.trend
    }

    /// Running high `p_h`.
    pub fn high(&self) -> F {
        self.high
    }

    /// Running low `p_l`. In an uptrend this stays at the trough.
    pub fn low(&self) -> F {
        self.low
    }

    pub fn config(&self) -> &DcConfig<F> {
        &self.config
    }

    pub fn step(&mut self, index: usize, price: F) -> Signal<F> {
        match self.trend {
            Trend::Undecided => {
                if price <= self.config.downturn_level(self.high) {
                    self.confirm_downturn(index, price)
                } else if price >= self.config.upturn_level(self.low) {
                    self.confirm_upturn(index, price)
                } else {
                    if price > self.high {
                        self.high = price;
                        self.high_index = index;
                    }
                    if price < self.low {
                        self.low = price;
                        self.low_index = index;
                    }
                    Signal::None
                }
            }
            Trend::Up => {
                if price <= self.config.downturn_level(self.high) {
                    self.confirm_downturn(index, price)
                } else if self.high < price {
                    self.high = price;
                    self.high_index = index;
                    Signal::NewHigh
                } else {
                    Signal::None
                }
            }
            Trend::Down => {
                if price >= self.config.upturn_level(self.low) {
                    self.confirm_upturn(index, price)
                } else if self.low > price {
                    self.low = price;
                    self.low_index = index;
                    Signal::NewLow
                } else {
                    Signal::None
                }
            }
        }
    }

    fn confirm_upturn(&mut self, index: usize, price: F) -> Signal<F> {
        let trough = Extreme {
            index: self.low_index,
            price: self.low,
            kind: ExtremeKind::Trough,
        };
        self.trend = Trend::Up;
        self.high = price;
        self.high_index = index;
        Signal::UpturnConfirmed(trough)
    }

    fn confirm_downturn(&mut self, index: usize, price: F) -> Signal<F> {
        let peak = Extreme {
            index: self.high_index,
            price: self.high,
            kind: ExtremeKind::Peak,
        };
        self.trend = Trend::Down;
        self.low = price;
        self.low_index = index;
        Signal::DownturnConfirmed(peak)
    }
}

/// Events and extremes of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct DcSummary<F> {
    pub events: Vec<DcEventRecord<F>>,
    /// The extreme that started each confirmed DC event, in order.
    pub extremes: Vec<Extreme<F>>,
    /// Confirmation index of each DC event, parallel to `extremes`.
    pub confirmations: Vec<usize>,
}

impl<F> DcSummary<F> {
    pub fn dc_event_count(&self) -> usize {
        self.confirmations.len()
    }
}

/// Builds the event list from confirmed (extreme, confirmation index) pairs.
///
/// Each DC event spans extreme..=confirmation. The overshoot after a DC event
/// spans the ticks strictly between its confirmation and the next extreme and
/// is only emitted once the next DC event has confirmed.
pub fn assemble_events<F: Scalar>(prices: &[F], extremes: &[Extreme<F>], confirmations: &[usize]) -> Vec<DcEventRecord<F>> {
    let mut events = Vec::with_capacity(extremes.len() * 2);
    for (i, (ext, &conf)) in extremes.iter().zip(confirmations).enumerate() {
        let up = ext.kind == ExtremeKind::Trough;
        events.push(DcEventRecord {
            kind: if up { EventKind::UpturnDc } else { EventKind::DownturnDc },
            start_index: ext.index,
            end_index: conf,
            start_price: ext.price,
            end_price: prices[conf],
        });
        if let Some(next) = extremes.get(i + 1) {
            if next.index >= conf + 2 {
                let (s, e) = (conf + 1, next.index - 1);
                events.push(DcEventRecord {
                    kind: if up { EventKind::UpOs } else { EventKind::DownOs },
                    start_index: s,
                    end_index: e,
                    start_price: prices[s],
                    end_price: prices[e],
                });
            }
        }
    }
    events
}

/// Single left-to-right DC pass. A trailing unconfirmed trend yields no event.
pub fn summarize<F: Scalar>(prices: &[F], config: &DcConfig<F>) -> Result<DcSummary<F>> {
    config.validate()?;
    let Some(&p0) = prices.first() else {
        return Err(Error::domain("cannot summarize an empty series"));
    };
    let mut tracker = DcTracker::new(*config, p0);
    let mut extremes = Vec::new();
    let mut confirmations = Vec::new();
    for (i, &p) in prices.iter().enumerate().skip(1) {
        match tracker.step(i, p) {
            Signal::UpturnConfirmed(ext) | Signal::DownturnConfirmed(ext) => {
                extremes.push(ext);
                confirmations.push(i);
            }
            _ => {}
        }
    }
    let events = assemble_events(prices, &extremes, &confirmations);
    Ok(DcSummary {
        events,
        extremes,
        confirmations,
    })
}

/// R_DC between two adjacent extremes: return per second of elapsed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdcPoint<F> {
    pub value: F,
    pub from_extreme: usize,
    pub to_extreme: usize,
    pub interval_seconds: F,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RdcSeries<F> {
    pub points: Vec<RdcPoint<F>>,
    /// Pairs skipped because both extremes share a timestamp.
    pub skipped: usize,
}

impl<F: Scalar> RdcSeries<F> {
    pub fn values(&self) -> Vec<F> {
        self.points.iter().map(|p| p.value).collect()
    }
}

/// R_DC value `|p1 - p0| / (p0 * T)`, or `None` when `T` is not positive.
#[inline]
pub fn rdc_value<F: Scalar>(from: &Extreme<F>, to: &Extreme<F>, interval_seconds: f64) -> Option<F> {
    if interval_seconds <= 0.0 {
        return None;
    }
    let t = F::lit(interval_seconds);
    Some((to.price - from.price).abs() / (from.price * t))
}

/// R_DC for each adjacent pair of extremes. Fewer than two extremes give an
/// empty series.
pub fn rdc_series<F: Scalar>(extremes: &[Extreme<F>], timestamps: &[Timestamp]) -> RdcSeries<F> {
    let mut out = RdcSeries {
        points: Vec::with_capacity(extremes.len().saturating_sub(1)),
        skipped: 0,
    };
    for pair in extremes.windows(2) {
        debug_assert_ne!(pair[0].kind, pair[1].kind, "extremes must alternate");
        let secs = timestamps[pair[1].index].seconds_since(timestamps[pair[0].index]);
        match rdc_value(&pair[0], &pair[1], secs) {
            Some(value) => out.points.push(RdcPoint {
                value,
                from_extreme: pair[0].index,
                to_extreme: pair[1].index,
                interval_seconds: F::lit(secs),
            }),
            None => out.skipped += 1,
        }
    }
    out
}

pub fn write_events_csv<F: Scalar, W: Write>(events: &[DcEventRecord<F>], mut w: W) -> Result<()> {
    writeln!(w, "kind,start_index,end_index,start_price,end_price")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.kind.as_str(),
            e.start_index,
            e.end_index,
            e.start_price,
            e.end_price
        )?;
    }
    Ok(())
}

pub fn write_rdc_csv<F: Scalar, W: Write>(rdc: &RdcSeries<F>, mut w: W) -> Result<()> {
    writeln!(w, "from_index,to_index,interval_seconds,value")?;
    for p in &rdc.points {
        writeln!(w, "{},{},{},{:e}", p.from_extreme, p.to_extreme, p.interval_seconds, p.value)?;
    }
    Ok(())
}
