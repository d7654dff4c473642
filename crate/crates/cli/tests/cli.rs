use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};
use lharg::io::{load_option_chain, write_option_chain, write_series, Series};
use lharg::model::{MarketState, ModelParams, RiskPremia, Variant};
use lharg::pricing::{model_price, trading_days, CosConfig, OptionChain, OptionQuote, OptionType};
use lharg::sim::{simulate_series, BURN_IN_DAYS};
use tempfile::TempDir;

fn lharg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lharg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_lines(o: &Output) -> Vec<String> {
    stdout(o).lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes `n` simulated days as RV and return files.
fn write_history(dir: &TempDir, variant: Variant, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let p = ModelParams::reference(variant);
    let st = MarketState::stationary(&p).unwrap();
    let (rv, y, _) = simulate_series(&p, &st, n, BURN_IN_DAYS, seed).unwrap();
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    let dates: Vec<NaiveDate> = (0..n as i64).map(|i| start + Duration::days(i)).collect();
    let (rv_path, ret_path) = (path(dir, "rv.csv"), path(dir, "returns.csv"));
    let rv_s = Series { dates: dates.clone(), values: rv };
    let y_s = Series { dates, values: y };
    write_series(fs::File::create(&rv_path).unwrap(), "rv", &rv_s).unwrap();
    write_series(fs::File::create(&ret_path).unwrap(), "log_return", &y_s).unwrap();
    (rv_path, ret_path)
}

#[test]
fn cumulants_csv_has_expected_columns() {
    let o = lharg(&["cumulants", "--model", "p-lharg", "--maturities", "22,63"]);
    assert!(o.status.success());
    let lines = csv_lines(&o);
    assert_eq!(lines[0], "T,measure,mean,variance,skewness,excess_kurtosis");
    assert_eq!(lines.len(), 5);
    assert!(stdout(&o).contains("# P-LHARG"));
}

#[test]
fn unknown_variant_is_a_validation_error() {
    let o = lharg(&["cumulants", "--model", "garch"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_flag_value_is_a_validation_error() {
    let o = lharg(&["simulate", "--paths", "many"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibration_out_of_reach_exits_4() {
    let o = lharg(&["calibrate", "--model", "zm-lharg", "--target-iv", "0.02", "--maturity", "63"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let fit = path(&dir, "fit.txt");
    // Explosive under Q at this premium: the long-horizon recursion fails.
    fs::write(
        &fit,
        "variant = HARG\ntheta = 1.3e-5\ndelta = 1.5\nbeta_d = 28000\nbeta_w = 20000\nbeta_m = 15000\nlambda = 2\nnu1 = -40000\n",
    )
    .unwrap();
    let o = lharg(&["cumulants", "--fit", s(&fit), "--measure", "q", "--maturities", "252"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "run.cfg");
    let out = path(&dir, "cum.csv");
    fs::write(&cfg, format!("# test config\nmodel = harg\nmaturities = 5\nmeasure = p\noutput = {}\n", out.display()))
        .unwrap();
    let o = lharg(&["--config", s(&cfg), "cumulants"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("5,P,"));
    assert!(stdout(&o).contains("HARG"));

    let o = lharg(&["--config", s(&cfg), "cumulants", "--maturities", "1,22", "--measure", "both"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 5);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bad.cfg");
    fs::write(&cfg, "modle = harg\n").unwrap();
    let o = lharg(&["--config", s(&cfg), "cumulants"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_validation_error() {
    let o = lharg(&["price", "--chain", "/nonexistent/chain.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn negative_rv_reports_line() {
    let dir = TempDir::new().unwrap();
    let rv = path(&dir, "rv.csv");
    let ret = path(&dir, "ret.csv");
    fs::write(&rv, "date,rv\n2020-01-01,1e-4\n2020-01-02,-1e-5\n").unwrap();
    fs::write(&ret, "date,log_return\n2020-01-01,0.01\n2020-01-02,0.0\n").unwrap();
    let o = lharg(&["estimate", "--rv", s(&rv), "--returns", s(&ret)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn simulate_writes_summary_and_raw_dump() {
    let dir = TempDir::new().unwrap();
    let raw = path(&dir, "paths.bin");
    let o = lharg(&["simulate", "--model", "p-lharg", "--paths", "500", "--horizon", "10", "--seed", "3", "--raw", s(&raw)]);
    assert!(o.status.success());
    let lines = csv_lines(&o);
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("day,rv_mean,rv_variance,rv_q05,rv_q50,rv_q95"));
    let (n, t, rv, y) = lharg::sim::PathSet::read_raw(fs::File::open(&raw).unwrap()).unwrap();
    assert_eq!((n, t, rv.len(), y.len()), (500, 10, 5000, 5000));

    // Same seed, same output.
    let again = lharg(&["simulate", "--model", "p-lharg", "--paths", "500", "--horizon", "10", "--seed", "3"]);
    assert_eq!(csv_lines(&again), lines);
}

#[test]
fn mgf_check_reports_deviation() {
    let o = lharg(&["mgf-check", "--model", "p-lharg", "--paths", "4000", "--maturities", "5", "--z-real", "-1,1", "--z-imag", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("max deviation:"));
    // 2 measures x 1 maturity x 3 arguments, plus header.
    assert_eq!(csv_lines(&o).len(), 7);
    let strict = lharg(&["mgf-check", "--model", "p-lharg", "--paths", "4000", "--maturities", "5", "--z-real", "1", "--max-se", "0"]);
    assert_eq!(strict.status.code(), Some(3));
}

fn synthetic_chain(params: &ModelParams, nu1: f64) -> OptionChain {
    let premia = RiskPremia::arbitrage_free(params.lambda, nu1);
    let st = MarketState::stationary(params).unwrap();
    let qd = NaiveDate::from_ymd_opt(2005, 3, 2).unwrap();
    let cfg = CosConfig::default();
    let mut quotes = Vec::new();
    for (days, strikes) in [(30, [90.0, 95.0, 100.0, 105.0]), (120, [85.0, 95.0, 105.0, 115.0])] {
        let expiry = qd + Duration::days(days);
        let tau = days as f64 / 365.0;
        for k in strikes {
            let ty = if k < 100.0 { OptionType::Put } else { OptionType::Call };
            let price = model_price(params, &premia, &st, 100.0, k, 0.02, tau, trading_days(days), ty, &cfg).unwrap();
            quotes.push(OptionQuote {
                quote_date: qd,
                expiry_date: expiry,
                strike: k,
                option_type: ty,
                mid_price: price,
                underlying: 100.0,
                rate: 0.02,
                market_iv: None,
            });
        }
    }
    OptionChain { quotes }
}

#[test]
fn price_and_evaluate_recover_a_model_generated_chain() {
    let dir = TempDir::new().unwrap();
    let p = ModelParams::reference(Variant::ZmLharg);
    let nu1 = ModelParams::reference_nu1(Variant::ZmLharg);
    let chain_path = path(&dir, "chain.csv");
    write_option_chain(fs::File::create(&chain_path).unwrap(), &synthetic_chain(&p, nu1)).unwrap();
    let out = path(&dir, "priced.csv");

    let o = lharg(&["price", "--chain", s(&chain_path), "--model", "zm-lharg", "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 characteristic-function grids"));
    let text = fs::read_to_string(&out).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let mkt: f64 = rec[col("market_iv")].parse().unwrap();
        let model: f64 = rec[col("model_iv")].parse().unwrap();
        assert!((mkt - model).abs() < 1e-6, "{mkt} vs {model}");
        n += 1;
    }
    assert_eq!(n, 8);

    let o = lharg(&["evaluate", "--chain", s(&chain_path), "--model", "zm-lharg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&o);
    assert_eq!(lines[0], "moneyness,maturity,count,rmse_iv,rmse_p");
    let total: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(total[..3], ["all", "all", "8"]);
    assert!(total[3].parse::<f64>().unwrap() < 1e-4);
}

#[test]
fn filter_drops_short_maturities() {
    let dir = TempDir::new().unwrap();
    let chain_path = path(&dir, "chain.csv");
    fs::write(
        &chain_path,
        "quote_date,expiry_date,strike,type,mid_price,underlying,rate\n\
         2005-01-05,2005-01-10,1200,call,2.0,1183.7,0.02\n\
         2005-01-05,2005-02-18,1200,call,14.9,1183.7,0.02\n",
    )
    .unwrap();
    let all = lharg(&["price", "--chain", s(&chain_path)]);
    assert_eq!(csv_lines(&all).len(), 3);
    let filtered = lharg(&["price", "--chain", s(&chain_path), "--filter"]);
    assert_eq!(csv_lines(&filtered).len(), 2);
    assert!(stdout(&filtered).contains("rejected by maturity: 1"));
}

#[test]
fn estimate_then_calibrate_then_price() {
    let dir = TempDir::new().unwrap();
    let (rv, ret) = write_history(&dir, Variant::Harg, 1500, 11);
    let fit = path(&dir, "fit.txt");
    let o = lharg(&["estimate", "--model", "harg", "--rv", s(&rv), "--returns", s(&ret), "--fit-out", s(&fit)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&o);
    assert_eq!(lines[0].split(',').count(), 25);
    assert!(lines[1].starts_with("HARG,"));
    assert!(fs::read_to_string(&fit).unwrap().contains("theta_se"));

    let calibrated = path(&dir, "calibrated.txt");
    let o = lharg(&[
        "calibrate", "--fit", s(&fit), "--target-iv", "0.2", "--maturity", "63", "--rv", s(&rv), "--returns", s(&ret),
        "--fit-out", s(&calibrated),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let row: Vec<String> = csv_lines(&o)[1].split(',').map(str::to_string).collect();
    let model_iv: f64 = row[6].parse().unwrap();
    assert!((model_iv - 0.2).abs() < 1e-8);
    assert!(fs::read_to_string(&calibrated).unwrap().contains("nu1 ="));

    // The calibrated file prices without an explicit --nu1, at the history's last state.
    let chain_path = path(&dir, "chain.csv");
    fs::write(
        &chain_path,
        "quote_date,expiry_date,strike,type,mid_price,underlying,rate\n2004-02-10,2004-05-10,100,call,4.0,100,0.0\n",
    )
    .unwrap();
    let o = lharg(&["price", "--chain", s(&chain_path), "--fit", s(&calibrated), "--rv", s(&rv), "--returns", s(&ret)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let chain = load_option_chain(&chain_path).unwrap();
    assert_eq!(chain.len(), 1);
    assert!(stdout(&o).contains("0 failures"));
}
