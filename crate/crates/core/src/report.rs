//! Per-window and aggregate backtest tables.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::metrics::{chain_returns, friedman_ranks, rank_with_ties, FriedmanResult};
use crate::strategy::StrategyKind;

/// One strategy's test-half outcome in one window. FT rows carry the
/// threshold in `label` (`FT@0.001`); the other strategies use their name.
#[derive(Debug, Clone, PartialEq)]
pub struct PerWindowRow {
    pub window_id: usize,
    pub label: String,
    pub kind: StrategyKind,
    pub crr_pct: f64,
    pub mdd_pct: f64,
    pub trades: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub kind: StrategyKind,
    pub mean_crr_pct: f64,
    /// Compounded return over consecutive windows. For FT this is the mean of
    /// the per-threshold compounded returns.
    pub chained_crr_pct: f64,
    pub mean_mdd_pct: f64,
    /// Average CRR rank across windows (1 = best).
    pub avg_rank: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub rows: Vec<PerWindowRow>,
    pub aggregate: Vec<AggregateRow>,
    /// Friedman test on CRR across windows, when there are at least two
    /// strategies and two windows.
    pub friedman_crr: Option<FriedmanResult<f64>>,
    pub friedman_mdd: Option<FriedmanResult<f64>>,
}

impl BacktestReport {
    pub fn aggregate_for(&self, kind: StrategyKind) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|a| a.kind == kind)
    }
}

pub fn ft_label(theta: f64) -> String {
    format!("FT@{theta}")
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn window_ids(rows: &[PerWindowRow]) -> Vec<usize> {
    let mut ids: Vec<usize> = rows.iter().map(|r| r.window_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Per-window value of `kind` for `pick`, averaging over FT thresholds.
fn per_window_values(rows: &[PerWindowRow], kind: StrategyKind, ids: &[usize], pick: fn(&PerWindowRow) -> f64) -> Option<Vec<f64>> {
    ids.iter()
        .map(|&id| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.kind == kind && r.window_id == id)
                .map(pick)
                .collect();
            (!vals.is_empty()).then(|| mean(&vals))
        })
        .collect()
}

/// Like [`per_window_values`] but skips windows without a row for `kind`.
fn present_values(rows: &[PerWindowRow], kind: StrategyKind, ids: &[usize], pick: fn(&PerWindowRow) -> f64) -> Vec<f64> {
    ids.iter()
        .filter_map(|&id| per_window_values(rows, kind, &[id], pick).map(|v| v[0]))
        .collect()
}

fn chained(rows: &[PerWindowRow], kind: StrategyKind) -> f64 {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| r.kind == kind) {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let per_label: Vec<f64> = labels
        .iter()
        .map(|label| {
            let mut series: Vec<&PerWindowRow> = rows.iter().filter(|r| r.label == *label).collect();
            series.sort_by_key(|r| r.window_id);
            chain_returns(&series.iter().map(|r| r.crr_pct).collect::<Vec<_>>())
        })
        .collect();
    mean(&per_label)
}

/// Builds aggregate rows (ordered FT, OPT_T, IDC, ITA) and Friedman ranks.
///
/// Ranks are computed on windows where every strategy present has a row.
pub fn build_report(rows: Vec<PerWindowRow>) -> Result<BacktestReport> {
    if rows.is_empty() {
        return Err(Error::domain("no per-window rows"));
    }
    if let Some(r) = rows.iter().find(|r| !r.crr_pct.is_finite() || !r.mdd_pct.is_finite()) {
        return Err(Error::domain(format!("non-finite metric for {} in window {}", r.label, r.window_id)));
    }
    let kinds: Vec<StrategyKind> = StrategyKind::ALL
        .into_iter()
        .filter(|k| rows.iter().any(|r| r.kind == *k))
        .collect();
    let ids = window_ids(&rows);
    let complete: Vec<usize> = ids
        .iter()
        .copied()
        .filter(|id| kinds.iter().all(|k| rows.iter().any(|r| r.kind == *k && r.window_id == *id)))
        .collect();

    // strategies x windows
    let table = |pick: fn(&PerWindowRow) -> f64| -> Vec<Vec<f64>> {
        kinds
            .iter()
            .map(|k| per_window_values(&rows, *k, &complete, pick).expect("complete windows"))
            .collect()
    };
    let crr_table = table(|r| r.crr_pct);
    let mdd_table = table(|r| r.mdd_pct);

    let avg_ranks: Vec<f64> = if complete.is_empty() {
        vec![f64::NAN; kinds.len()]
    } else {
        let mut sums = vec![0.0; kinds.len()];
        for w in 0..complete.len() {
            let column: Vec<f64> = crr_table.iter().map(|c| c[w]).collect();
            for (s, r) in sums.iter_mut().zip(rank_with_ties(&column, true)) {
                *s += r;
            }
        }
        sums.iter().map(|s| s / complete.len() as f64).collect()
    };
    let (friedman_crr, friedman_mdd) = if kinds.len() >= 2 && complete.len() >= 2 {
        (Some(friedman_ranks(&crr_table, true)?), Some(friedman_ranks(&mdd_table, false)?))
    } else {
        (None, None)
    };

    let aggregate = kinds
        .iter()
        .zip(avg_ranks)
        .map(|(&kind, avg_rank)| {
            let mine = present_values(&rows, kind, &ids, |r| r.crr_pct);
            let mine_mdd = present_values(&rows, kind, &ids, |r| r.mdd_pct);
            AggregateRow {
                kind,
                mean_crr_pct: mean(&mine),
                chained_crr_pct: chained(&rows, kind),
                mean_mdd_pct: mean(&mine_mdd),
                avg_rank,
            }
        })
        .collect();

    Ok(BacktestReport {
        rows,
        aggregate,
        friedman_crr,
        friedman_mdd,
    })
}

pub fn write_per_window_csv<W: Write>(rows: &[PerWindowRow], mut w: W) -> Result<()> {
    writeln!(w, "window_id,strategy,crr_pct,mdd_pct,trades")?;
    for r in rows {
        writeln!(w, "{},{},{:.6},{:.6},{}", r.window_id, r.label, r.crr_pct, r.mdd_pct, r.trades)?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(aggregate: &[AggregateRow], mut w: W) -> Result<()> {
    writeln!(w, "strategy,mean_crr_pct,chained_crr_pct,mean_mdd_pct,avg_rank")?;
    for a in aggregate {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.4}",
            a.kind, a.mean_crr_pct, a.chained_crr_pct, a.mean_mdd_pct, a.avg_rank
        )?;
    }
    Ok(())
}

pub fn write_friedman<W: Write>(report: &BacktestReport, mut w: W) -> Result<()> {
    for (name, res) in [("crr", &report.friedman_crr), ("mdd", &report.friedman_mdd)] {
        match res {
            Some(f) => {
                let ranks: Vec<String> = f.average_ranks.iter().map(|r| format!("{r:.4}")).collect();
                writeln!(
                    w,
                    "{name}: ranks [{}] statistic {:.6} df {} p {:.6} critical_05 {:.6} significant {}",
                    ranks.join(" "),
                    f.statistic,
                    f.degrees_of_freedom,
                    f.p_value,
                    f.critical_value_05,
                    f.significant_at_05()
                )?;
            }
            None => writeln!(w, "{name}: not enough strategies or windows")?,
        }
    }
    Ok(())
}

fn kind_of(label: &str) -> Option<StrategyKind> {
    match label.split_once('@') {
        Some(("FT", _)) => Some(StrategyKind::Ft),
        Some(_) => None,
        None => StrategyKind::parse(label),
    }
}

/// Reads a table written by [`write_per_window_csv`].
pub fn read_per_window_csv<R: BufRead>(r: R) -> Result<Vec<PerWindowRow>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: line_no, message };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let kind = kind_of(f[1]).ok_or_else(|| bad(format!("unknown strategy {:?}", f[1])))?;
        rows.push(PerWindowRow {
            window_id: int(f[0])?,
            label: f[1].to_string(),
            kind,
            crr_pct: num(f[2])?,
            mdd_pct: num(f[3])?,
            trades: int(f[4])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(window_id: usize, label: &str, crr_pct: f64, mdd_pct: f64) -> PerWindowRow {
        PerWindowRow {
            window_id,
            label: label.to_string(),
            kind: kind_of(label).unwrap(),
            crr_pct,
            mdd_pct,
            trades: 2,
        }
    }

    #[test]
    fn single_run_aggregate_equals_row() {
        let rep = build_report(vec![row(0, "IDC", 4.0, 1.5)]).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let a = &rep.aggregate[0];
        assert_eq!(a.mean_crr_pct, 4.0);
        assert!((a.chained_crr_pct - 4.0).abs() < 1e-12);
        assert_eq!(a.mean_mdd_pct, 1.5);
        assert_eq!(a.avg_rank, 1.0);
        assert!(rep.friedman_crr.is_none());
    }

    #[test]
    fn two_windows_mean_crr() {
        let rep = build_report(vec![row(0, "ITA", 10.0, 0.0), row(1, "ITA", -4.0, 5.0)]).unwrap();
        let a = rep.aggregate_for(StrategyKind::Ita).unwrap();
        assert!((a.mean_crr_pct - 3.0).abs() < 1e-12);
        assert!((a.chained_crr_pct - 5.6).abs() < 1e-9);
    }

    #[test]
    fn ordering_and_ft_averaging() {
        let rows = vec![
            row(0, "ITA", 3.0, 1.0),
            row(0, "FT@0.001", 1.0, 1.0),
            row(0, "FT@0.002", 3.0, 3.0),
            row(0, "IDC", 0.0, 1.0),
            row(1, "ITA", 1.0, 1.0),
            row(1, "FT@0.001", 2.0, 1.0),
            row(1, "FT@0.002", 2.0, 1.0),
            row(1, "IDC", 3.0, 1.0),
        ];
        let rep = build_report(rows).unwrap();
        let order: Vec<StrategyKind> = rep.aggregate.iter().map(|a| a.kind).collect();
        assert_eq!(order, vec![StrategyKind::Ft, StrategyKind::Idc, StrategyKind::Ita]);
        let ft = rep.aggregate_for(StrategyKind::Ft).unwrap();
        assert!((ft.mean_crr_pct - 2.0).abs() < 1e-12);
        assert!((ft.mean_mdd_pct - 1.5).abs() < 1e-12);
        // window 0: ITA 3 > FT 2 > IDC 0; window 1: IDC 3 > FT 2 > ITA 1
        assert!((ft.avg_rank - 2.0).abs() < 1e-12);
        assert!((rep.aggregate_for(StrategyKind::Ita).unwrap().avg_rank - 2.0).abs() < 1e-12);
        let f = rep.friedman_crr.as_ref().unwrap();
        assert_eq!(f.degrees_of_freedom, 2);
        assert_eq!(f.average_ranks.len(), 3);
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![row(0, "FT@0.0003", 1.25, 0.5), row(0, "OPT_T", -2.0, 3.0)];
        let mut buf = Vec::new();
        write_per_window_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_per_window_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn rejects_unknown_strategy() {
        let text = "window_id,strategy,crr_pct,mdd_pct,trades\n0,XYZ,1,1,1\n";
        assert!(matches!(read_per_window_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(build_report(vec![]).is_err());
    }
}
