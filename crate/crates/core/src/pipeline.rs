//! Sliding-window backtest: optimize on each train half, trade the test half.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::bayes_opt::{optimize, optimize_theta_only, write_trials_csv, OptimizeConfig, SearchSpace, Trial};
use crate::dc::{rdc_series, summarize, DcConfig};
use crate::error::{Error, Result};
use crate::hmm::{fit_baum_welch, label_regimes, write_model_dump, FitConfig, GaussianHmm, RegimeLabel, RegimeMap};
use crate::ingest::{sliding_windows, write_window_manifest, PriceSeries, WindowSplit};
use crate::report::{build_report, ft_label, write_aggregate_csv, write_friedman, write_per_window_csv, BacktestReport, PerWindowRow};
use crate::strategy::{run_ft_suite, run_strategy, EquityCurve, RegimeSource, StrategyKind, TradeLog, FT_THRESHOLDS, INITIAL_CAPITAL};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub window_months: u32,
    pub stride_months: u32,
    pub space: SearchSpace,
    /// Objective evaluations per optimization, initial design included.
    pub iters: usize,
    pub n_init: usize,
    pub seed: u64,
    pub hmm: FitConfig,
    pub strategies: Vec<StrategyKind>,
    pub fixed_thresholds: Vec<f64>,
    /// Replaces the regime detector with a constant label.
    pub force_regime: Option<RegimeLabel>,
    pub initial_capital: f64,
    /// Worker threads for window-level parallelism; results are collected in
    /// window order regardless.
    pub jobs: usize,
    /// Upper bound on points per equity curve in the plot files.
    pub plot_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_months: 2,
            stride_months: 1,
            space: SearchSpace::default(),
            iters: 100,
            n_init: 10,
            seed: 0,
            hmm: FitConfig::default(),
            strategies: StrategyKind::ALL.to_vec(),
            fixed_thresholds: FT_THRESHOLDS.to_vec(),
            force_regime: None,
            initial_capital: INITIAL_CAPITAL,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            plot_points: 500,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.window_months < 1 || self.stride_months < 1 {
            return Err(Error::domain("window and stride must be at least one month"));
        }
        if self.n_init < 1 || self.iters < self.n_init {
            return Err(Error::domain(format!("iters must be at least {}", self.n_init.max(1))));
        }
        if self.strategies.is_empty() {
            return Err(Error::domain("no strategies selected"));
        }
        if self.strategies.contains(&StrategyKind::Ft) && self.fixed_thresholds.is_empty() {
            return Err(Error::domain("FT needs at least one fixed threshold"));
        }
        if let Some(t) = self.fixed_thresholds.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::domain(format!("fixed threshold {t} must be positive")));
        }
        if !(self.initial_capital > 0.0) {
            return Err(Error::domain("initial capital must be positive"));
        }
        Ok(())
    }
}

/// Independent seed for one (window, consumer) pair.
pub fn derive_seed(seed: u64, window_id: usize, stream: u64) -> u64 {
    let mut z = seed ^ (window_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_OPT_T: u64 = 1;
const STREAM_IDC: u64 = 2;
const STREAM_ITA: u64 = 3;
const STREAM_HMM: u64 = 4;

/// HMM fitted to the R_DC series of a training span.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeModel {
    pub model: GaussianHmm<f64>,
    pub map: RegimeMap,
    pub log_likelihood: f64,
    /// The R_DC observations the model was fitted on.
    pub rdc: Vec<f64>,
}

/// R_DC values of `series` under `config`.
pub fn rdc_values(series: &PriceSeries, config: &DcConfig<f64>) -> Result<Vec<f64>> {
    let summary = summarize(series.prices(), config)?;
    Ok(rdc_series(&summary.extremes, series.timestamps()).values())
}

/// Fits the regime model on `train`. `None` when the R_DC series is too
/// short or flat to support a fit; the gate then stays Normal.
pub fn fit_regime_model(train: &PriceSeries, config: &DcConfig<f64>, hmm: &FitConfig) -> Result<Option<RegimeModel>> {
    let rdc = rdc_values(train, config)?;
    let fit = match fit_baum_welch(&rdc, hmm) {
        Ok(fit) => fit,
        Err(Error::Domain(_) | Error::Degenerate(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let map = label_regimes(&fit.model)?;
    Ok(Some(RegimeModel {
        model: fit.model,
        map,
        log_likelihood: fit.log_likelihood,
        rdc,
    }))
}

fn regime_source<'a>(force: Option<RegimeLabel>, fitted: &'a Option<RegimeModel>) -> RegimeSource<'a> {
    match (force, fitted) {
        (Some(label), _) => RegimeSource::Forced(label),
        (None, Some(m)) => RegimeSource::Model { model: &m.model, map: m.map },
        (None, None) => RegimeSource::Forced(RegimeLabel::Normal),
    }
}

/// In-sample CRR (percent) of `kind` on `train` at `(theta, alpha)`.
///
/// ITA fits its regime model on the same span and starts with an empty R_DC
/// history. Returns NaN when the configuration cannot be run.
pub fn training_objective(
    train: &PriceSeries,
    kind: StrategyKind,
    theta: f64,
    alpha: f64,
    hmm: &FitConfig,
    force: Option<RegimeLabel>,
    initial_capital: f64,
) -> f64 {
    let run = || -> Result<f64> {
        let config = DcConfig::new(theta, alpha)?;
        let run = if kind.is_gated() {
            let fitted = if force.is_some() { None } else { fit_regime_model(train, &config, hmm)? };
            run_strategy(train, &config, kind, Some(regime_source(force, &fitted)), &[], initial_capital)?
        } else {
            run_strategy(train, &config, kind, None, &[], initial_capital)?
        };
        Ok(run.equity.crr_pct())
    };
    run().unwrap_or(f64::NAN)
}

/// Test-half result of one strategy (one FT threshold) in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub label: String,
    pub kind: StrategyKind,
    pub theta: f64,
    pub alpha: f64,
    pub crr_pct: f64,
    pub mdd_pct: f64,
    pub trades: TradeLog,
    /// Decimated equity curve for plotting.
    pub equity: EquityCurve,
    /// Optimizer history, for the optimized strategies.
    pub trials: Option<Vec<Trial>>,
    /// Regime queries answered Abnormal during the test half.
    pub abnormal_queries: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub split: WindowSplit,
    pub outcomes: Vec<StrategyOutcome>,
    /// ITA's regime model at its chosen configuration.
    pub regime_model: Option<RegimeModel>,
}

/// Keeps at most `max_points` evenly spaced points, always including the last.
pub fn decimate(curve: &EquityCurve, max_points: usize) -> EquityCurve {
    let n = curve.capital.len();
    if n <= max_points || max_points < 2 {
        return curve.clone();
    }
    let mut out = EquityCurve::default();
    for k in 0..max_points {
        let i = k * (n - 1) / (max_points - 1);
        out.timestamps.push(curve.timestamps[i]);
        out.capital.push(curve.capital[i]);
    }
    out
}

fn outcome(label: String, kind: StrategyKind, config: &DcConfig<f64>, run: crate::strategy::StrategyRun, cfg: &RunConfig) -> StrategyOutcome {
    StrategyOutcome {
        label,
        kind,
        theta: config.theta,
        alpha: config.alpha,
        crr_pct: run.equity.crr_pct(),
        mdd_pct: run.equity.mdd_pct(),
        equity: decimate(&run.equity, cfg.plot_points),
        abnormal_queries: run.queries.iter().filter(|q| q.label == RegimeLabel::Abnormal).count(),
        queries: run.queries.len(),
        trades: run.trades,
        trials: None,
    }
}

/// Runs every selected strategy on one window.
pub fn run_window(series: &PriceSeries, split: &WindowSplit, cfg: &RunConfig) -> Result<WindowOutcome> {
    let train = series.slice(split.train_range.clone());
    let test = series.slice(split.test_range.clone());
    let id = split.window_id;
    let boa = |stream| OptimizeConfig {
        n_iters: cfg.iters,
        n_init: cfg.n_init,
        seed: derive_seed(cfg.seed, id, stream),
    };
    let hmm = FitConfig {
        seed: derive_seed(cfg.seed, id, STREAM_HMM),
        ..cfg.hmm
    };
    let objective = |kind, theta, alpha| training_objective(&train, kind, theta, alpha, &hmm, cfg.force_regime, cfg.initial_capital);

    let mut outcomes = Vec::new();
    let mut regime_model = None;
    for &kind in &cfg.strategies {
        match kind {
            StrategyKind::Ft => {
                for ft in run_ft_suite(&test, &cfg.fixed_thresholds, cfg.initial_capital)? {
                    let config = DcConfig::symmetric(ft.theta)?;
                    outcomes.push(outcome(ft_label(ft.theta), kind, &config, ft.run, cfg));
                }
            }
            StrategyKind::OptT => {
                let res = optimize_theta_only(|t| objective(kind, t, 1.0), cfg.space.theta_bounds, &boa(STREAM_OPT_T))?;
                let config = DcConfig::symmetric(res.best.theta)?;
                let run = run_strategy(&test, &config, kind, None, &[], cfg.initial_capital)?;
                let mut o = outcome(kind.name().to_string(), kind, &config, run, cfg);
                o.trials = Some(res.history);
                outcomes.push(o);
            }
            StrategyKind::Idc => {
                let res = optimize(|t, a| objective(kind, t, a), &cfg.space, &boa(STREAM_IDC))?;
                let config = DcConfig::new(res.best.theta, res.best.alpha)?;
                let run = run_strategy(&test, &config, kind, None, &[], cfg.initial_capital)?;
                let mut o = outcome(kind.name().to_string(), kind, &config, run, cfg);
                o.trials = Some(res.history);
                outcomes.push(o);
            }
            StrategyKind::Ita => {
                let res = optimize(|t, a| objective(kind, t, a), &cfg.space, &boa(STREAM_ITA))?;
                let config = DcConfig::new(res.best.theta, res.best.alpha)?;
                let fitted = if cfg.force_regime.is_some() { None } else { fit_regime_model(&train, &config, &hmm)? };
                let history = match &fitted {
                    Some(m) => m.rdc.clone(),
                    None => rdc_values(&train, &config)?,
                };
                let src = regime_source(cfg.force_regime, &fitted);
                let run = run_strategy(&test, &config, kind, Some(src), &history, cfg.initial_capital)?;
                let mut o = outcome(kind.name().to_string(), kind, &config, run, cfg);
                o.trials = Some(res.history);
                outcomes.push(o);
                regime_model = fitted;
            }
        }
    }
    Ok(WindowOutcome {
        split: split.clone(),
        outcomes,
        regime_model,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backtest {
    pub windows: Vec<WindowOutcome>,
    pub report: BacktestReport,
}

/// Runs all windows of `series`. Any window failure aborts the run with the
/// window's id.
pub fn run_backtest(series: &PriceSeries, cfg: &RunConfig) -> Result<Backtest> {
    cfg.validate()?;
    let splits = sliding_windows(series, cfg.window_months, cfg.stride_months)?;
    if splits.is_empty() {
        return Err(Error::domain(format!(
            "series spans fewer than {} calendar months; no complete window",
            cfg.window_months
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::domain(format!("worker pool: {e}")))?;
    let windows: Vec<WindowOutcome> = pool.install(|| {
        splits
            .par_iter()
            .map(|split| {
                run_window(series, split, cfg).map_err(|e| match e {
                    Error::Window { .. } => e,
                    other => Error::Window {
                        window_id: split.window_id,
                        message: other.to_string(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows = windows
        .iter()
        .flat_map(|w| {
            w.outcomes.iter().map(|o| PerWindowRow {
                window_id: w.split.window_id,
                label: o.label.clone(),
                kind: o.kind,
                crr_pct: o.crr_pct,
                mdd_pct: o.mdd_pct,
                trades: o.trades.len(),
            })
        })
        .collect();
    let report = build_report(rows)?;
    Ok(Backtest { windows, report })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_label(label: &str) -> String {
    label.replace('@', "_")
}

/// Writes every artifact of `backtest` under `dir`.
///
/// Layout: `windows.csv`, `per_window.csv`, `aggregate.csv`, `friedman.txt`,
/// `equity/<strategy>.csv` and `window_<id>/` with trade logs, optimizer
/// trials and the regime model.
pub fn write_outputs(backtest: &Backtest, dir: &Path) -> Result<()> {
    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(dir)?;
    let splits: Vec<WindowSplit> = backtest.windows.iter().map(|w| w.split.clone()).collect();
    let mut w = create(&dir.join("windows.csv"))?;
    write_window_manifest(&splits, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("per_window.csv"))?;
    write_per_window_csv(&backtest.report.rows, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("aggregate.csv"))?;
    write_aggregate_csv(&backtest.report.aggregate, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("friedman.txt"))?;
    write_friedman(&backtest.report, &mut w)?;
    w.flush()?;

    let equity_dir = dir.join("equity");
    mkdir(&equity_dir)?;
    let labels: Vec<&str> = backtest
        .windows
        .first()
        .map(|w| w.outcomes.iter().map(|o| o.label.as_str()).collect())
        .unwrap_or_default();
    for label in labels {
        let mut w = create(&equity_dir.join(format!("{}.csv", file_label(label))))?;
        writeln!(w, "window_id,timestamp,capital")?;
        for win in &backtest.windows {
            for o in win.outcomes.iter().filter(|o| o.label == label) {
                for (t, c) in o.equity.timestamps.iter().zip(&o.equity.capital) {
                    writeln!(w, "{},{},{}", win.split.window_id, t, c)?;
                }
            }
        }
        w.flush()?;
    }

    for win in &backtest.windows {
        let wdir = dir.join(format!("window_{}", win.split.window_id));
        mkdir(&wdir)?;
        let mut params = create(&wdir.join("params.csv"))?;
        writeln!(params, "strategy,theta,alpha,crr_pct,mdd_pct,trades,regime_queries,abnormal_queries")?;
        for o in &win.outcomes {
            writeln!(
                params,
                "{},{},{},{:.6},{:.6},{},{},{}",
                o.label,
                o.theta,
                o.alpha,
                o.crr_pct,
                o.mdd_pct,
                o.trades.len(),
                o.queries,
                o.abnormal_queries
            )?;
            let name = file_label(&o.label);
            let mut w = create(&wdir.join(format!("trades_{name}.csv")))?;
            o.trades.write_csv(&mut w)?;
            w.flush()?;
            if let Some(trials) = &o.trials {
                let mut w = create(&wdir.join(format!("trials_{name}.csv")))?;
                write_trials_csv(trials, &mut w)?;
                w.flush()?;
            }
        }
        params.flush()?;
        if let Some(m) = &win.regime_model {
            let mut w = create(&wdir.join("hmm_model.txt"))?;
            write_model_dump(&m.model, m.map, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Timestamp;

    fn walk(months: u32, step_s: i64, seed: u64) -> PriceSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let start = Timestamp::parse("20200101 000000000").unwrap();
        let end = start.add_months(months);
        let (mut ts, mut ps) = (Vec::new(), Vec::new());
        let (mut t, mut p) = (start.0, 1.2);
        while t < end.0 {
            ts.push(Timestamp(t));
            ps.push(p);
            p *= 1.0 + rng.gen_range(-0.001..0.001);
            t += step_s * 1000;
        }
        PriceSeries::new("X", ts, ps).unwrap()
    }

    fn quick() -> RunConfig {
        RunConfig {
            iters: 12,
            n_init: 4,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn seeds_differ_by_window_and_stream() {
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 1, 1));
        assert_ne!(derive_seed(1, 0, 1), derive_seed(1, 0, 2));
        assert_eq!(derive_seed(1, 3, 2), derive_seed(1, 3, 2));
    }

    #[test]
    fn decimation_keeps_endpoints() {
        let curve = EquityCurve {
            timestamps: (0..1000).map(Timestamp).collect(),
            capital: (0..1000).map(f64::from).collect(),
        };
        let d = decimate(&curve, 10);
        assert_eq!(d.capital.len(), 10);
        assert_eq!(d.capital[0], 0.0);
        assert_eq!(*d.capital.last().unwrap(), 999.0);
        assert_eq!(decimate(&curve, 5000), curve);
    }

    #[test]
    fn backtest_covers_every_window_and_strategy() {
        let series = walk(3, 600, 1);
        let bt = run_backtest(&series, &quick()).unwrap();
        assert_eq!(bt.windows.len(), 2);
        // 8 FT thresholds + OPT_T + IDC + ITA per window
        assert_eq!(bt.report.rows.len(), 2 * 11);
        let kinds: Vec<StrategyKind> = bt.report.aggregate.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, StrategyKind::ALL.to_vec());
        for w in &bt.windows {
            for o in w.outcomes.iter().filter(|o| o.trials.is_some()) {
                assert_eq!(o.trials.as_ref().unwrap().len(), 12);
                assert!(o.theta > 0.0 && o.alpha <= 1.0 && o.alpha > o.theta);
            }
        }
    }

    #[test]
    fn forced_abnormal_blocks_ita_entries() {
        let series = walk(3, 600, 2);
        let cfg = RunConfig {
            strategies: vec![StrategyKind::Ita],
            force_regime: Some(RegimeLabel::Abnormal),
            ..quick()
        };
        let bt = run_backtest(&series, &cfg).unwrap();
        assert!(bt.report.rows.iter().all(|r| r.trades == 0 && r.crr_pct == 0.0));
    }

    #[test]
    fn short_series_has_no_window() {
        let series = walk(1, 600, 3);
        assert!(run_backtest(&series, &quick()).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let series = walk(3, 600, 4);
        for cfg in [
            RunConfig { iters: 2, ..quick() },
            RunConfig { strategies: vec![], ..quick() },
            RunConfig {
                fixed_thresholds: vec![0.0],
                ..quick()
            },
        ] {
            assert!(matches!(run_backtest(&series, &cfg), Err(Error::Domain(_))));
        }
    }
}
