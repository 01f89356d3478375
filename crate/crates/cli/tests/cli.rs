use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ita(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ita")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ita(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_ticks(path: &Path, mids: &[f64]) {
    let mut text = String::from("timestamp,bid,ask\n");
    for (i, m) in mids.iter().enumerate() {
        text.push_str(&format!("20190102 0000{:02}000,{m},{m}\n", i));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn summarize_constant_prices() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.csv");
    write_ticks(&input, &[1.1; 20]);
    let out = dir.path().join("dumps");
    let stdout = ok(&["summarize", "--input", input.to_str().unwrap(), "--theta", "0.001", "--out", out.to_str().unwrap()]);
    assert!(stdout.starts_with("0 events"), "{stdout}");
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap().lines().count(), 1);
    assert_eq!(fs::read_to_string(out.join("rdc.csv")).unwrap().lines().count(), 1);
}

#[test]
fn summarize_five_tick_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("five.csv");
    write_ticks(&input, &[1.0000, 1.0005, 1.0011, 1.0012, 1.0006]);
    let out = dir.path().join("dumps");
    let stdout = ok(&[
        "summarize", "--input", input.to_str().unwrap(), "--theta", "0.001", "--alpha", "0.5", "--out", out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("2 confirmations"), "{stdout}");
    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    let kinds: Vec<&str> = events.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds, vec!["UpturnDC", "DownturnDC"]);
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let out = ita(&["summarize", "--input", "/no/such/ticks.csv", "--theta", "0.001"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("/no/such/ticks.csv"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn bad_arguments_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.csv");
    write_ticks(&input, &[1.0, 1.1]);
    let out = ita(&["summarize", "--input", input.to_str().unwrap(), "--theta", "0.5", "--alpha", "0.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stderr).unwrap().trim_end().lines().count(), 1);
    let out = ita(&["optimize", "--input", input.to_str().unwrap()]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("--seed"));
    assert!(!out.status.success());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# comment\nseed = 3\nmonths = 2\nbursts = 0\n").unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let conf_s = conf.to_str().unwrap();
    ok(&["--config", conf_s, "gen-synthetic", "--out", a.to_str().unwrap()]);
    ok(&["gen-synthetic", "--seed", "3", "--months", "2", "--bursts", "0", "--out", b.to_str().unwrap()]);
    ok(&["--config", conf_s, "gen-synthetic", "--months", "1", "--out", c.to_str().unwrap()]);
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert!(c.len() < a.len() * 2 / 3);
    fs::write(&conf, "colour = blue\n").unwrap();
    assert!(!ita(&["--config", conf_s, "gen-synthetic"]).status.success());
}

#[test]
fn synthetic_burst_flags() {
    let dir = tempfile::tempdir().unwrap();
    let calm = dir.path().join("calm.csv");
    ok(&["gen-synthetic", "--seed", "1", "--months", "1", "--bursts", "0", "--out", calm.to_str().unwrap()]);
    let text = fs::read_to_string(&calm).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
    let bursty = dir.path().join("bursty.csv");
    ok(&["gen-synthetic", "--seed", "1", "--months", "10", "--bursts", "0.2", "--out", bursty.to_str().unwrap()]);
    let text = fs::read_to_string(&bursty).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let share = rows.iter().filter(|l| l.ends_with(",1")).count() as f64 / rows.len() as f64;
    assert!((share - 0.2).abs() <= 0.02, "{share}");
}

#[test]
fn backtest_ft_only_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("three.csv");
    ok(&["gen-synthetic", "--seed", "5", "--months", "3", "--out", data.to_str().unwrap()]);
    let out = dir.path().join("bt");
    let stdout = ok(&["backtest", "--input", data.to_str().unwrap(), "--strategies", "FT", "--out", out.to_str().unwrap()]);
    assert!(stdout.starts_with("2 windows"), "{stdout}");
    let rows = fs::read_to_string(out.join("per_window.csv")).unwrap();
    for w in 0..2 {
        let n = rows.lines().filter(|l| l.starts_with(&format!("{w},FT@"))).count();
        assert_eq!(n, 8);
    }
    assert_eq!(fs::read_to_string(out.join("windows.csv")).unwrap().lines().count(), 3);

    let again = dir.path().join("report");
    let stdout = ok(&["report", "--input", out.join("per_window.csv").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(stdout.contains("FT"));
    assert_eq!(fs::read(out.join("aggregate.csv")).unwrap(), fs::read(again.join("aggregate.csv")).unwrap());
}

#[test]
fn regimes_and_optimize_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    ok(&["gen-synthetic", "--seed", "2", "--months", "1", "--out", data.to_str().unwrap()]);
    let out = dir.path().join("reg");
    let stdout = ok(&["regimes", "--input", data.to_str().unwrap(), "--theta", "0.001", "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("abnormal"), "{stdout}");
    assert!(fs::read_to_string(out.join("hmm_model.txt")).unwrap().contains("abnormal_state = "));
    let labels = fs::read_to_string(out.join("regimes.csv")).unwrap();
    assert!(labels.contains(",abnormal") && labels.contains(",normal"));

    let opt = dir.path().join("opt");
    let args = [
        "optimize", "--input", data.to_str().unwrap(), "--strategies", "OPT_T", "--iters", "12", "--seed", "4", "--out",
        opt.to_str().unwrap(),
    ];
    let first = ok(&args);
    assert!(first.starts_with("OPT_T: best theta"));
    let trials = fs::read_to_string(opt.join("trials_OPT_T.csv")).unwrap();
    assert_eq!(trials.lines().count(), 13);
    assert!(trials.lines().skip(1).all(|l| l.split(',').nth(2) == Some("1")));
    assert_eq!(ok(&args), first);
}
