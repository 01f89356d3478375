//! Brute-force reference implementations for tests.
//!
//! Nothing here shares code with the production paths it checks: the DC
//! scanner recomputes running extremes from scratch at every tick, MDD
//! scans every ordered pair, and Viterbi enumerates every state path.

use crate::dc::{DcEventRecord, DcSummary, EventKind, Extreme, ExtremeKind};

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Boot,
    Up,
    Down,
}

fn first_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

fn first_argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if xs[i] < xs[best] {
            best = i;
        }
    }
    best
}

fn events_from(prices: &[f64], extremes: &[Extreme<f64>], confs: &[usize]) -> Vec<DcEventRecord<f64>> {
    let mut out = Vec::new();
    for i in 0..extremes.len() {
        let up = extremes[i].kind == ExtremeKind::Trough;
        out.push(DcEventRecord {
            kind: if up { EventKind::UpturnDc } else { EventKind::DownturnDc },
            start_index: extremes[i].index,
            end_index: confs[i],
            start_price: extremes[i].price,
            end_price: prices[confs[i]],
        });
        if i + 1 < extremes.len() {
            let s = confs[i] + 1;
            let e = extremes[i + 1].index as isize - 1;
            if e >= s as isize {
                let e = e as usize;
                out.push(DcEventRecord {
                    kind: if up { EventKind::UpOs } else { EventKind::DownOs },
                    start_index: s,
                    end_index: e,
                    start_price: prices[s],
                    end_price: prices[e],
                });
            }
        }
    }
    out
}

/// Re-checks the upturn/downturn confirmation inequalities against the full
/// running max/min of the current segment at every index.
pub fn reference_dc_scan(prices: &[f64], theta: f64, alpha: f64) -> DcSummary<f64> {
    let mut phase = Phase::Boot;
    let mut anchor = 0usize;
    let mut extremes = Vec::new();
    let mut confs = Vec::new();
    for t in 1..prices.len() {
        let seg = &prices[anchor..t];
        let hi = anchor + first_argmax(seg);
        let lo = anchor + first_argmin(seg);
        let p = prices[t];
        let down = p <= prices[hi] * (1.0 - alpha * theta);
        let up = p >= prices[lo] * (1.0 + theta);
        let confirmed = match phase {
            Phase::Boot if down => Some((hi, ExtremeKind::Peak, Phase::Down)),
            Phase::Boot if up => Some((lo, ExtremeKind::Trough, Phase::Up)),
            Phase::Up if down => Some((hi, ExtremeKind::Peak, Phase::Down)),
            Phase::Down if up => Some((lo, ExtremeKind::Trough, Phase::Up)),
            _ => None,
        };
        if let Some((idx, kind, next)) = confirmed {
            extremes.push(Extreme { index: idx, price: prices[idx], kind });
            confs.push(t);
            phase = next;
            anchor = t;
        }
    }
    let events = events_from(prices, &extremes, &confs);
    DcSummary {
        events,
        extremes,
        confirmations: confs,
    }
}

/// Classic single-threshold DC detector.
pub fn symmetric_dc(prices: &[f64], theta: f64) -> DcSummary<f64> {
    let mut extremes = Vec::new();
    let mut confs = Vec::new();
    if prices.is_empty() {
        return DcSummary { events: vec![], extremes, confirmations: confs };
    }
    // 0 = undecided, 1 = up, -1 = down
    let mut mode = 0i8;
    let (mut hi, mut hi_i, mut lo, mut lo_i) = (prices[0], 0, prices[0], 0);
    for (t, &p) in prices.iter().enumerate().skip(1) {
        let falls = p <= hi * (1.0 - theta);
        let rises = p >= lo * (1.0 + theta);
        if mode >= 0 && falls {
            extremes.push(Extreme { index: hi_i, price: hi, kind: ExtremeKind::Peak });
            confs.push(t);
            mode = -1;
            lo = p;
            lo_i = t;
            continue;
        }
        if mode <= 0 && rises {
            extremes.push(Extreme { index: lo_i, price: lo, kind: ExtremeKind::Trough });
            confs.push(t);
            mode = 1;
            hi = p;
            hi_i = t;
            continue;
        }
        if mode >= 0 && p > hi {
            hi = p;
            hi_i = t;
        }
        if mode <= 0 && p < lo {
            lo = p;
            lo_i = t;
        }
    }
    let events = events_from(prices, &extremes, &confs);
    DcSummary {
        events,
        extremes,
        confirmations: confs,
    }
}

/// Maximum drawdown in percent over every ordered pair `x < y`.
pub fn brute_force_mdd(curve: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for x in 0..curve.len() {
        for y in x + 1..curve.len() {
            let dd = (curve[x] - curve[y]) / curve[x];
            if dd > worst {
                worst = dd;
            }
        }
    }
    worst * 100.0
}

/// Exhaustive MAP path over all `K^T` state sequences.
///
/// Scores accumulate left to right as `log_pi + log_b[0] + sum(log_a + log_b)`.
/// Among equal scores the path that is smallest when read from the last state
/// backwards wins, which is what lowest-index backtracking produces.
pub fn brute_force_viterbi(log_pi: &[f64], log_a: &[Vec<f64>], log_b: &[Vec<f64>]) -> Vec<usize> {
    let k = log_pi.len();
    let t_len = log_b.len();
    let total = k.pow(t_len as u32);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..total {
        let mut path = vec![0usize; t_len];
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % k;
            c /= k;
        }
        let mut score = log_pi[path[0]] + log_b[0][path[0]];
        for t in 1..t_len {
            score = score + log_a[path[t - 1]][path[t]] + log_b[t][path[t]];
        }
        let better = match &best {
            None => true,
            Some((s, p)) => {
                score > *s || (score == *s && path.iter().rev().lt(p.iter().rev()))
            }
        };
        if better {
            best = Some((score, path));
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}
