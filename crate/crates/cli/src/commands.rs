use std::fs::File;
use std::io::BufWriter;

use lharg::estimation::{calibrate_nu1, free_parameter_names, mle_fit, model_atm_iv, FitOptions};
use lharg::io::{
    filter_options, fit_csv_row, load_option_chain, quote_fields, write_fit, write_params, FilterReport,
    CHAIN_COLUMNS, FILTER_RULES, FIT_CSV_HEADER,
};
use lharg::mgf::{cumulants as model_cumulants, Measure};
use lharg::model::{risk_neutral_map, stationarity_margin, Variant};
use lharg::pricing::{price_chain, rmse_panel, ChainPricing, OptionChain, MATURITY_BUCKETS, MONEYNESS_BUCKETS};
use lharg::sim::{default_check_grid, mgf_check as run_mgf_check, simulate_paths, CHECK_MATURITIES};
use lharg::{Error, Result};
use num_complex::Complex64;

use crate::settings::{fmt, state, summary, write_csv, Model, Settings};
use crate::{
    CalibrateArgs, CumulantsArgs, EstimateArgs, EvaluateArgs, MgfCheckArgs, PriceArgs, SimulateArgs,
};

fn measures(s: &Settings, flag: Option<String>, model: &Model, default: &str) -> Result<Vec<Measure>> {
    let which = s.pick(flag, "measure")?.unwrap_or_else(|| default.to_string());
    match which.to_ascii_lowercase().as_str() {
        "p" | "physical" => Ok(vec![Measure::Physical]),
        "q" | "risk-neutral" => Ok(vec![Measure::RiskNeutral(model.premia()?)]),
        "both" => Ok(vec![Measure::Physical, Measure::RiskNeutral(model.premia()?)]),
        other => Err(Error::Config(format!("--measure: expected p, q or both, got '{other}'"))),
    }
}

pub fn estimate(s: &Settings, a: &EstimateArgs) -> Result<()> {
    let variant: Variant = s.pick(a.model.clone(), "model")?.unwrap_or_else(|| "zm-lharg".into()).parse()?;
    let r = s.pick(a.rate, "rate")?.unwrap_or(0.0) / lharg::pricing::TRADING_DAYS;
    let mut dummy = lharg::model::ModelParams::reference(variant).with_rate(r);
    if let Some(l) = s.pick(a.lambda, "lambda")? {
        dummy = dummy.with_lambda(l);
    }
    let h = s
        .history(&a.state, &dummy)?
        .ok_or_else(|| Error::Config("estimate needs --rv and --returns".into()))?;
    let opts = FitOptions {
        lambda: s.pick(a.lambda, "lambda")?,
        ..FitOptions::default()
    };
    let fit = mle_fit(&h.rv, &h.returns, r, variant, &opts)?;

    if let Some(path) = s.pick(a.fit_out.clone(), "fit-out")? {
        write_fit(BufWriter::new(File::create(&path)?), &fit)?;
    }
    write_csv(s.output(&a.output, "estimate")?.as_deref(), &FIT_CSV_HEADER, &[fit_csv_row(&fit, None)])?;

    let p = &fit.params;
    let mut lines = vec![
        format!("{} fit on {} days ({} to {})", variant, h.rv.len(), h.dates[0], h.dates[h.dates.len() - 1]),
        format!("lambda = {:.6} ({:.6})", p.lambda, fit.lambda_se),
    ];
    if let Some(f) = h.rescale {
        lines.push(format!("RV rescaled by {f:.6}"));
    }
    let values = [p.theta, p.delta, p.beta_d, p.beta_w, p.beta_m, p.alpha_d, p.alpha_w, p.alpha_m, p.gamma];
    for (name, se) in free_parameter_names(variant).iter().zip(&fit.std_errors) {
        let idx = ["theta", "delta", "beta_d", "beta_w", "beta_m", "alpha_d", "alpha_w", "alpha_m", "gamma"]
            .iter()
            .position(|n| n == name)
            .expect("known parameter");
        lines.push(format!("{name} = {:.6e} ({:.3e})", values[idx], se));
    }
    lines.push(format!("d = {:.6}", p.d));
    lines.push(format!(
        "log-likelihood = {:.3}, persistence = {:.4}, converged = {} after {} iterations",
        fit.loglik, fit.persistence, fit.converged, fit.iterations
    ));
    summary(&lines);
    Ok(())
}

pub fn calibrate(s: &Settings, a: &CalibrateArgs) -> Result<()> {
    let model = s.model(&a.model)?;
    let p = &model.params;
    let target: f64 = s.require(a.target_iv, "target-iv")?;
    let maturity = s.pick(a.maturity, "maturity")?.unwrap_or(252);
    let cos = s.cos(&a.cos)?;
    let history = s.history(&a.state, p)?;
    let (st, st_label) = state(history.as_ref(), p, s.as_of(&a.state)?)?;

    let nu1 = calibrate_nu1(p, target, maturity, &st, &cos)?;
    let premia = lharg::model::RiskPremia::arbitrage_free(p.lambda, nu1);
    let achieved = model_atm_iv(p, nu1, maturity, &st, &cos)?;
    let q_persistence = stationarity_margin(&risk_neutral_map(p, &premia)?);

    if let Some(path) = s.pick(a.fit_out.clone(), "fit-out")? {
        write_params(BufWriter::new(File::create(&path)?), p, Some(nu1))?;
    }
    let header = ["model", "target_iv", "maturity_days", "nu1", "nu2", "y_star", "model_iv", "persistence_q"];
    let row = vec![
        p.variant.to_string(),
        fmt(target),
        maturity.to_string(),
        fmt(nu1),
        fmt(premia.nu2),
        fmt(premia.y_star),
        fmt(achieved),
        fmt(q_persistence),
    ];
    write_csv(s.output(&a.output, "calibrate")?.as_deref(), &header, &[row])?;
    summary(&[
        format!("{} from {}, state: {st_label}", p.variant, model.source),
        format!("nu1 = {nu1:.6} matches ATM IV {target} at {maturity} trading days (model IV {achieved:.10})"),
        format!("risk-neutral persistence = {q_persistence:.6}"),
    ]);
    Ok(())
}

fn price_with(s: &Settings, model: &Model, chain: &OptionChain, st: &crate::StateArgs, cos: &crate::CosArgs) -> Result<ChainPricing> {
    let p = &model.params;
    let premia = model.premia()?;
    let cos = s.cos(cos)?;
    let history = s.history(st, p)?;
    let h = history.as_ref();
    price_chain(p, &premia, chain, |date| state(h, p, Some(date)).map(|x| x.0), &cos)
}

fn filter_lines(report: &FilterReport) -> Vec<String> {
    let mut lines = vec![format!("filter: {} of {} quotes retained", report.retained, report.input)];
    for (rule, n) in FILTER_RULES.iter().zip(report.rejected) {
        if n > 0 {
            lines.push(format!("  rejected by {rule}: {n}"));
        }
    }
    lines
}

pub fn price(s: &Settings, a: &PriceArgs) -> Result<()> {
    let model = s.model(&a.model)?;
    let path = s
        .input(a.chain.clone(), "chain")?
        .ok_or_else(|| Error::Config("missing --chain".into()))?;
    let mut chain = load_option_chain(path)?;
    let mut lines = Vec::new();
    if s.switch(a.filter, "filter")? {
        let (kept, report) = filter_options(&chain, &s.thresholds(&a.thresholds)?);
        chain = kept;
        lines.extend(filter_lines(&report));
    }
    let priced = price_with(s, &model, &chain, &a.state, &a.cos)?;

    let mut header: Vec<&str> = CHAIN_COLUMNS.to_vec();
    header.extend(["market_iv", "model_price", "model_iv", "error"]);
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let rows: Vec<Vec<String>> = priced
        .rows
        .iter()
        .map(|r| {
            let mut row = quote_fields(&r.quote);
            row.extend([opt(r.model_price), opt(r.model_iv), r.error.clone().unwrap_or_default()]);
            row
        })
        .collect();
    write_csv(s.output(&a.output, "price")?.as_deref(), &header, &rows)?;

    let failed = priced.rows.iter().filter(|r| r.error.is_some()).count();
    lines.insert(0, format!("{} from {}, nu1 = {}", model.params.variant, model.source, model.nu1.unwrap_or(f64::NAN)));
    lines.push(format!(
        "priced {} quotes with {} characteristic-function grids; {failed} failures",
        priced.rows.len(),
        priced.cf_builds
    ));
    summary(&lines);
    Ok(())
}

pub fn evaluate(s: &Settings, a: &EvaluateArgs) -> Result<()> {
    let model = s.model(&a.model)?;
    let path = s
        .input(a.chain.clone(), "chain")?
        .ok_or_else(|| Error::Config("missing --chain".into()))?;
    let mut chain = load_option_chain(path)?;
    let mut lines = vec![format!("{} from {}", model.params.variant, model.source)];
    if !s.switch(a.no_filter, "no-filter")? {
        let (kept, report) = filter_options(&chain, &s.thresholds(&a.thresholds)?);
        chain = kept;
        lines.extend(filter_lines(&report));
    }
    let priced = price_with(s, &model, &chain, &a.state, &a.cos)?;
    let panel = rmse_panel(&priced.rows)?;

    let maturity_label = |j: usize| match j {
        0 => format!("<={}", MATURITY_BUCKETS[0]),
        j if j == MATURITY_BUCKETS.len() => format!(">{}", MATURITY_BUCKETS[j - 1]),
        j => format!("{}-{}", MATURITY_BUCKETS[j - 1], MATURITY_BUCKETS[j]),
    };
    let header = ["moneyness", "maturity", "count", "rmse_iv", "rmse_p"];
    let mut rows = Vec::new();
    for (i, &(lo, hi)) in MONEYNESS_BUCKETS.iter().enumerate() {
        for j in 0..=MATURITY_BUCKETS.len() {
            let c = panel.cells[i][j];
            rows.push(vec![
                format!("{lo}-{hi}"),
                maturity_label(j),
                c.count.to_string(),
                if c.count > 0 { fmt(c.rmse_iv) } else { String::new() },
                if c.count > 0 { fmt(c.rmse_p) } else { String::new() },
            ]);
        }
    }
    rows.push(vec![
        "all".into(),
        "all".into(),
        panel.total.count.to_string(),
        fmt(panel.total.rmse_iv),
        fmt(panel.total.rmse_p),
    ]);
    write_csv(s.output(&a.output, "evaluate")?.as_deref(), &header, &rows)?;

    lines.push(format!(
        "RMSE_IV = {:.4} over {} quotes (RMSE_P = {:.4})",
        panel.total.rmse_iv, panel.total.count, panel.total.rmse_p
    ));
    let mut table = String::from("m \\ days   ");
    for j in 0..=MATURITY_BUCKETS.len() {
        table.push_str(&format!("{:>9}", maturity_label(j)));
    }
    lines.push(table);
    for (i, &(lo, hi)) in MONEYNESS_BUCKETS.iter().enumerate() {
        let mut line = format!("{lo:.2}-{hi:.2}  ");
        for c in &panel.cells[i] {
            if c.count > 0 {
                line.push_str(&format!("{:>9.3}", c.rmse_iv));
            } else {
                line.push_str(&format!("{:>9}", "-"));
            }
        }
        lines.push(line);
    }
    summary(&lines);
    Ok(())
}

pub fn simulate(s: &Settings, a: &SimulateArgs) -> Result<()> {
    let model = s.model(&a.model)?;
    let p = &model.params;
    let measure = measures(s, a.measure.clone(), &model, "p")?;
    let [measure] = measure[..] else {
        return Err(Error::Config("simulate runs one measure at a time: p or q".into()));
    };
    let horizon = s.pick(a.horizon, "horizon")?.unwrap_or(22);
    let n_paths = s.pick(a.paths, "paths")?.unwrap_or(10_000);
    let seed = s.pick(a.seed, "seed")?.unwrap_or(42);
    let history = s.history(&a.state, p)?;
    let (st, st_label) = state(history.as_ref(), p, s.as_of(&a.state)?)?;

    let paths = simulate_paths(p, &st, horizon, n_paths, &measure, seed)?;
    if let Some(raw) = s.pick(a.raw.clone(), "raw")? {
        paths.write_raw(BufWriter::new(File::create(&raw)?))?;
    }
    let header = [
        "day",
        "rv_mean",
        "rv_variance",
        "rv_q05",
        "rv_q50",
        "rv_q95",
        "cum_return_mean",
        "cum_return_variance",
    ];
    let rows: Vec<Vec<String>> = paths
        .summary()
        .iter()
        .map(|d| {
            vec![
                d.day.to_string(),
                fmt(d.rv_mean),
                fmt(d.rv_variance),
                fmt(d.rv_q05),
                fmt(d.rv_q50),
                fmt(d.rv_q95),
                fmt(d.cum_return_mean),
                fmt(d.cum_return_variance),
            ]
        })
        .collect();
    write_csv(s.output(&a.output, "simulate")?.as_deref(), &header, &rows)?;
    let days = (n_paths * horizon) as f64;
    summary(&[
        format!("{} from {} under {}, state: {st_label}", p.variant, model.source, measure.label()),
        format!("{n_paths} paths x {horizon} days, seed {seed}"),
        format!(
            "negative noncentrality clamped on {} path-days (rate {:.3e})",
            paths.clamp_count,
            paths.clamp_count as f64 / days
        ),
    ]);
    Ok(())
}

pub fn cumulants(s: &Settings, a: &CumulantsArgs) -> Result<()> {
    let model = s.model(&a.model)?;
    let p = &model.params;
    let ms = measures(s, a.measure.clone(), &model, "both")?;
    let maturities = s.list::<usize>(a.maturities.clone(), "maturities")?.unwrap_or(CHECK_MATURITIES.to_vec());
    let history = s.history(&a.state, p)?;
    let (st, st_label) = state(history.as_ref(), p, s.as_of(&a.state)?)?;

    let mut rows = Vec::new();
    for m in &ms {
        for &t in &maturities {
            let c = model_cumulants(p, &st, t, m)?;
            rows.push(vec![
                t.to_string(),
                m.label().to_string(),
                fmt(c.mean),
                fmt(c.variance),
                fmt(c.skewness),
                fmt(c.excess_kurtosis),
            ]);
        }
    }
    let header = ["T", "measure", "mean", "variance", "skewness", "excess_kurtosis"];
    write_csv(s.output(&a.output, "cumulants")?.as_deref(), &header, &rows)?;
    summary(&[format!(
        "{} from {}, state: {st_label}, {} maturities x {} measures",
        p.variant,
        model.source,
        maturities.len(),
        ms.len()
    )]);
    Ok(())
}

pub fn mgf_check(s: &Settings, a: &MgfCheckArgs) -> Result<()> {
    let model = s.model(&a.model)?;
    let p = &model.params;
    let ms = measures(s, a.measure.clone(), &model, "both")?;
    let maturities = s.list::<usize>(a.maturities.clone(), "maturities")?.unwrap_or(CHECK_MATURITIES.to_vec());
    let z_real = s.list::<f64>(a.z_real.clone(), "z-real")?;
    let z_imag = s.list::<f64>(a.z_imag.clone(), "z-imag")?;
    let grid: Vec<Complex64> = if z_real.is_none() && z_imag.is_none() {
        default_check_grid()
    } else {
        let re = z_real.unwrap_or_default().into_iter().map(|z| Complex64::new(z, 0.0));
        let im = z_imag.unwrap_or_default().into_iter().map(|u| Complex64::new(0.0, u));
        re.chain(im).collect()
    };
    let n_paths = s.pick(a.paths, "paths")?.unwrap_or(100_000);
    let seed = s.pick(a.seed, "seed")?.unwrap_or(42);
    let history = s.history(&a.state, p)?;
    let (st, st_label) = state(history.as_ref(), p, s.as_of(&a.state)?)?;

    let header = [
        "measure",
        "T",
        "z_re",
        "z_im",
        "analytic_re",
        "analytic_im",
        "mc_re",
        "mc_im",
        "se_re",
        "se_im",
        "dev_se",
    ];
    let mut rows = Vec::new();
    let mut lines = vec![format!(
        "{} from {}, state: {st_label}, {n_paths} paths, seed {seed}",
        p.variant, model.source
    )];
    let mut worst = 0.0f64;
    for m in &ms {
        let check = run_mgf_check(p, &st, m, &maturities, &grid, n_paths, seed)?;
        for r in &check.rows {
            rows.push(vec![
                m.label().to_string(),
                r.maturity.to_string(),
                fmt(r.mc.z.re),
                fmt(r.mc.z.im),
                fmt(r.analytic.re),
                fmt(r.analytic.im),
                fmt(r.mc.value.re),
                fmt(r.mc.value.im),
                fmt(r.mc.se_re),
                fmt(r.mc.se_im),
                fmt(r.max_dev()),
            ]);
        }
        worst = worst.max(check.max_dev());
        lines.push(format!(
            "{}: max deviation {:.3} SE; clamp rate {:.3e}",
            m.label(),
            check.max_dev(),
            check.stats.clamp_rate()
        ));
    }
    write_csv(s.output(&a.output, "mgf_check")?.as_deref(), &header, &rows)?;
    lines.push(format!("max deviation: {worst:.3} SE"));
    summary(&lines);
    if let Some(limit) = s.pick(a.max_se, "max-se")? {
        if !(worst <= limit) {
            return Err(Error::Numerical(format!("MGF deviation {worst:.3} SE exceeds {limit}")));
        }
    }
    Ok(())
}
