//! `ita`: command-line driver for the DC/HMM trading toolkit.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ita_core::bayes_opt::{optimize, write_trials_csv, OptimizeConfig, SearchSpace};
use ita_core::dc::{rdc_series, summarize, write_events_csv, write_rdc_csv, DcConfig, EventKind};
use ita_core::hmm::{fit_baum_welch, label_regimes, viterbi, write_model_dump, FitConfig, RegimeLabel};
use ita_core::ingest::{read_ticks_file, PriceSeries};
use ita_core::pipeline::{run_backtest, training_objective, write_outputs, RunConfig};
use ita_core::report::{build_report, read_per_window_csv, write_aggregate_csv, write_friedman, BacktestReport};
use ita_core::strategy::{StrategyKind, INITIAL_CAPITAL};
use ita_core::synthetic::{generate, write_csv, RegimeSpec};

#[derive(Parser)]
#[command(name = "ita", version, about = "Directional-change trading with HMM regime gating")]
struct Cli {
    /// `key = value` file; keys are flag names. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// DC events and R_DC for one tick file.
    Summarize(Opts),
    /// Bayesian search for one strategy's thresholds on a whole tick file.
    Optimize(Opts),
    /// Fit the regime HMM on a tick file's R_DC series and decode it.
    Regimes(Opts),
    /// Sliding-window backtest of the selected strategies.
    Backtest(Opts),
    /// Synthetic ticks with planted high-volatility bursts.
    GenSynthetic(Opts),
    /// Aggregate table and Friedman ranks from a per_window.csv.
    Report(Opts),
}

/// Every command accepts the same flags; each reads the ones it needs.
#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    instrument: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// `lo,hi`
    #[arg(long)]
    theta_bounds: Option<String>,
    /// `lo,hi`
    #[arg(long)]
    alpha_bounds: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    window_months: Option<String>,
    #[arg(long)]
    stride_months: Option<String>,
    /// Comma-separated subset of FT,OPT_T,IDC,ITA.
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    fixed_thresholds: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Debug override for the regime detector.
    #[arg(long, value_parser = ["normal", "abnormal"])]
    force_regime: Option<String>,
    #[arg(long)]
    hmm_max_iters: Option<String>,
    #[arg(long)]
    hmm_tol: Option<String>,
    #[arg(long)]
    hmm_restarts: Option<String>,
    /// Worker threads for the backtest.
    #[arg(long)]
    jobs: Option<String>,
    /// Length of generated data.
    #[arg(long)]
    months: Option<String>,
    /// Share of generated time covered by bursts.
    #[arg(long)]
    bursts: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("input", &self.input),
            ("instrument", &self.instrument),
            ("theta", &self.theta),
            ("alpha", &self.alpha),
            ("theta-bounds", &self.theta_bounds),
            ("alpha-bounds", &self.alpha_bounds),
            ("iters", &self.iters),
            ("seed", &self.seed),
            ("window-months", &self.window_months),
            ("stride-months", &self.stride_months),
            ("strategies", &self.strategies),
            ("fixed-thresholds", &self.fixed_thresholds),
            ("out", &self.out),
            ("force-regime", &self.force_regime),
            ("hmm-max-iters", &self.hmm_max_iters),
            ("hmm-tol", &self.hmm_tol),
            ("hmm-restarts", &self.hmm_restarts),
            ("jobs", &self.jobs),
            ("months", &self.months),
            ("bursts", &self.bursts),
        ]
    }
}

/// Resolved settings: flags over config file over built-in defaults.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(config: Option<&Path>, opts: &Opts) -> Result<Self> {
        let known: Vec<&str> = opts.pairs().iter().map(|(k, _)| *k).collect();
        let mut values = BTreeMap::new();
        if let Some(path) = config {
            let text = fs::read_to_string(path).with_context(|| format!("failed to read {}", path.display()))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), n + 1))?;
                let key = k.trim().replace('_', "-");
                if !known.contains(&key.as_str()) {
                    bail!("{}:{}: unknown key {key:?}", path.display(), n + 1);
                }
                values.insert(key, v.trim().to_string());
            }
        }
        for (k, v) in opts.pairs() {
            if let Some(v) = v {
                values.insert(k.to_string(), v.clone());
            }
        }
        Ok(Settings { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid --{key} {v:?}: {e}")))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| anyhow!("missing required --{key}"))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("invalid --{key} {v:?}: {e}")))
                    .collect()
            })
            .transpose()
    }

    fn bounds(&self, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok((v[0], v[1])),
            Some(_) => bail!("--{key} expects `lo,hi`"),
        }
    }

    fn input(&self) -> Result<PathBuf> {
        self.require::<String>("input").map(PathBuf::from)
    }

    fn out(&self, default: &str) -> PathBuf {
        PathBuf::from(self.raw("out").unwrap_or(default))
    }

    fn series(&self) -> Result<PriceSeries> {
        let path = self.input()?;
        let instrument = match self.raw("instrument") {
            Some(i) => i.to_string(),
            None => path.file_stem().map_or("UNKNOWN".into(), |s| s.to_string_lossy().into_owned()),
        };
        let (series, summary) = read_ticks_file(&path, &instrument)?;
        if summary.rows_dropped() > 0 {
            eprintln!(
                "{}: {} rows read, {} rejected, {} out of order",
                path.display(),
                summary.rows_read,
                summary.rows_rejected,
                summary.rows_out_of_order
            );
        }
        Ok(series)
    }

    fn space(&self) -> Result<SearchSpace> {
        let d = SearchSpace::default();
        Ok(SearchSpace {
            theta_bounds: self.bounds("theta-bounds", d.theta_bounds)?,
            alpha_bounds: self.bounds("alpha-bounds", d.alpha_bounds)?,
            alpha_fixed: None,
        })
    }

    fn hmm(&self, seed: u64) -> Result<FitConfig> {
        let d = FitConfig::default();
        Ok(FitConfig {
            max_iters: self.or("hmm-max-iters", d.max_iters)?,
            tol: self.or("hmm-tol", d.tol)?,
            restarts: self.or("hmm-restarts", d.restarts)?,
            seed,
            ..d
        })
    }

    fn strategies(&self) -> Result<Option<Vec<StrategyKind>>> {
        self.raw("strategies")
            .map(|v| {
                v.split(',')
                    .map(|s| StrategyKind::parse(s.trim()).ok_or_else(|| anyhow!("unknown strategy {:?}", s.trim())))
                    .collect()
            })
            .transpose()
    }

    fn force_regime(&self) -> Result<Option<RegimeLabel>> {
        match self.raw("force-regime") {
            None => Ok(None),
            Some("normal") => Ok(Some(RegimeLabel::Normal)),
            Some("abnormal") => Ok(Some(RegimeLabel::Abnormal)),
            Some(v) => bail!("--force-regime must be normal or abnormal, got {v:?}"),
        }
    }

    fn dc_config(&self) -> Result<DcConfig<f64>> {
        Ok(DcConfig::new(self.require("theta")?, self.or("alpha", 1.0)?)?)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("failed to create {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("failed to create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_summarize(s: &Settings) -> Result<()> {
    let series = s.series()?;
    let config = s.dc_config()?;
    let summary = summarize(series.prices(), &config)?;
    let rdc = rdc_series(&summary.extremes, series.timestamps());
    let out = s.out("summarize_out");
    let mut w = create(&out.join("events.csv"))?;
    write_events_csv(&summary.events, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("rdc.csv"))?;
    write_rdc_csv(&rdc, &mut w)?;
    w.flush()?;
    let os = summary.events.iter().filter(|e| !e.kind.is_dc()).count();
    let up = summary.events.iter().filter(|e| e.kind == EventKind::UpturnDc).count();
    println!(
        "{} events ({} DC: {} upturn, {} downturn; {} OS), {} confirmations, {} R_DC values ({} skipped)",
        summary.events.len(),
        summary.dc_event_count(),
        up,
        summary.dc_event_count() - up,
        os,
        summary.confirmations.len(),
        rdc.points.len(),
        rdc.skipped
    );
    Ok(())
}

fn cmd_optimize(s: &Settings) -> Result<()> {
    let seed: u64 = s.get("seed")?.ok_or_else(|| anyhow!("optimize needs --seed"))?;
    let series = s.series()?;
    let kinds = s.strategies()?.unwrap_or_else(|| vec![StrategyKind::Idc]);
    let [kind] = kinds[..] else {
        bail!("optimize takes exactly one strategy");
    };
    let mut space = s.space()?;
    match kind {
        StrategyKind::Ft => bail!("FT uses fixed thresholds; nothing to optimize"),
        StrategyKind::OptT => space.alpha_fixed = Some(1.0),
        _ => {}
    }
    let hmm = s.hmm(seed)?;
    let force = s.force_regime()?;
    let cfg = OptimizeConfig {
        n_iters: s.or("iters", 100)?,
        n_init: 10.min(s.or("iters", 100)?),
        seed,
    };
    let res = optimize(
        |theta, alpha| training_objective(&series, kind, theta, alpha, &hmm, force, INITIAL_CAPITAL),
        &space,
        &cfg,
    )?;
    let out = s.out("optimize_out");
    let mut w = create(&out.join(format!("trials_{}.csv", kind.name())))?;
    write_trials_csv(&res.history, &mut w)?;
    w.flush()?;
    println!(
        "{kind}: best theta {} alpha {} crr {:.4}% at evaluation {} of {}",
        res.best.theta,
        res.best.alpha,
        res.best.objective,
        res.best.iteration,
        res.history.len()
    );
    Ok(())
}

fn cmd_regimes(s: &Settings) -> Result<()> {
    let series = s.series()?;
    let config = s.dc_config()?;
    let summary = summarize(series.prices(), &config)?;
    let rdc = rdc_series(&summary.extremes, series.timestamps());
    let values = rdc.values();
    let fit = fit_baum_welch(&values, &s.hmm(s.or("seed", 0)?)?)?;
    let map = label_regimes(&fit.model)?;
    let path = viterbi(&fit.model, &values)?;
    let out = s.out("regimes_out");
    let mut w = create(&out.join("hmm_model.txt"))?;
    write_model_dump(&fit.model, map, &mut w)?;
    w.flush()?;
    let stamps = series.timestamps();
    let mut w = create(&out.join("regimes.csv"))?;
    writeln!(w, "extreme_index,timestamp,rdc,state,regime")?;
    for (p, &state) in rdc.points.iter().zip(&path) {
        writeln!(
            w,
            "{},{},{:e},{},{}",
            p.to_extreme,
            stamps[p.to_extreme],
            p.value,
            state,
            map.label(state)
        )?;
    }
    w.flush()?;
    let abnormal = path.iter().filter(|&&st| map.label(st) == RegimeLabel::Abnormal).count();
    println!(
        "{} R_DC values, {} abnormal; log-likelihood {:.4}, abnormal state {} (mean {:e})",
        values.len(),
        abnormal,
        fit.log_likelihood,
        map.abnormal_state,
        fit.model.means[map.abnormal_state]
    );
    Ok(())
}

fn print_report(report: &BacktestReport) {
    println!("{:<6} {:>12} {:>14} {:>12} {:>9}", "", "mean CRR%", "chained CRR%", "mean MDD%", "avg rank");
    for a in &report.aggregate {
        println!(
            "{:<6} {:>12.4} {:>14.4} {:>12.4} {:>9.3}",
            a.kind.name(),
            a.mean_crr_pct,
            a.chained_crr_pct,
            a.mean_mdd_pct,
            a.avg_rank
        );
    }
    if let Some(f) = &report.friedman_crr {
        println!(
            "Friedman (CRR): statistic {:.4}, p {:.4}, critical value {:.4}",
            f.statistic, f.p_value, f.critical_value_05
        );
    }
}

fn cmd_backtest(s: &Settings) -> Result<()> {
    let series = s.series()?;
    let d = RunConfig::default();
    let seed = s.or("seed", d.seed)?;
    let cfg = RunConfig {
        window_months: s.or("window-months", d.window_months)?,
        stride_months: s.or("stride-months", d.stride_months)?,
        space: s.space()?,
        iters: s.or("iters", d.iters)?,
        seed,
        hmm: s.hmm(seed)?,
        strategies: s.strategies()?.unwrap_or(d.strategies.clone()),
        fixed_thresholds: s.list("fixed-thresholds")?.unwrap_or(d.fixed_thresholds.clone()),
        force_regime: s.force_regime()?,
        jobs: s.or("jobs", d.jobs)?,
        ..d
    };
    let bt = run_backtest(&series, &cfg)?;
    let out = s.out("backtest_out");
    write_outputs(&bt, &out)?;
    println!("{} windows written to {}", bt.windows.len(), out.display());
    print_report(&bt.report);
    Ok(())
}

fn cmd_gen_synthetic(s: &Settings) -> Result<()> {
    let spec = RegimeSpec {
        burst_fraction: s.or("bursts", RegimeSpec::default().burst_fraction)?,
        ..Default::default()
    };
    let ticks = generate(s.or("seed", 0)?, s.or("months", 10)?, &spec)?;
    let out = s.out("synthetic.csv");
    let mut w = create(&out)?;
    write_csv(&ticks, &mut w)?;
    w.flush()?;
    let flagged = ticks.iter().filter(|t| t.burst).count();
    println!("{} ticks ({} in bursts) written to {}", ticks.len(), flagged, out.display());
    Ok(())
}

fn cmd_report(s: &Settings) -> Result<()> {
    let path = s.input()?;
    let file = File::open(&path).with_context(|| format!("failed to read {}", path.display()))?;
    let report = build_report(read_per_window_csv(BufReader::new(file))?)?;
    if let Some(out) = s.raw("out") {
        let out = PathBuf::from(out);
        let mut w = create(&out.join("aggregate.csv"))?;
        write_aggregate_csv(&report.aggregate, &mut w)?;
        w.flush()?;
        let mut w = create(&out.join("friedman.txt"))?;
        write_friedman(&report, &mut w)?;
        w.flush()?;
    }
    print_report(&report);
    Ok(())
}

/// Exit code 2 when an input could not be read, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let unreadable = err.chain().any(|e| {
        matches!(e.downcast_ref::<ita_core::Error>(), Some(ita_core::Error::Io { .. }))
            || e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound)
    });
    if unreadable {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<()> {
    let (opts, f): (&Opts, fn(&Settings) -> Result<()>) = match &cli.command {
        Command::Summarize(o) => (o, cmd_summarize),
        Command::Optimize(o) => (o, cmd_optimize),
        Command::Regimes(o) => (o, cmd_regimes),
        Command::Backtest(o) => (o, cmd_backtest),
        Command::GenSynthetic(o) => (o, cmd_gen_synthetic),
        Command::Report(o) => (o, cmd_report),
    };
    let settings = Settings::load(cli.config.as_deref(), opts)?;
    f(&settings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
