//! Data ingestion and serialization: RV and return series, option chains,
//! option filters, key=value configuration and fitted-model files.
//!
//! CSV files carry a mandatory header row; line numbers in errors count the
//! header as line 1. Dates are ISO `YYYY-MM-DD`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::estimation::{free_parameter_names, FitResult};
use crate::model::{ModelParams, Variant};
use crate::pricing::{implied_vol, OptionChain, OptionQuote, OptionType};

/// A dated univariate series in ascending date order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        msg: format!("bad date '{s}': {e}"),
    })
}

fn parse_num(s: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} '{s}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("{what} must be finite"),
        });
    }
    Ok(v)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse { line, msg: e.to_string() }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], optional: &[&str]) -> Result<Vec<String>> {
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let ok_prefix = header.len() >= expected.len() && header.iter().zip(expected).all(|(a, b)| a == b);
    let ok_rest = header[expected.len().min(header.len())..]
        .iter()
        .zip(optional)
        .all(|(a, b)| a == b)
        && header.len() <= expected.len() + optional.len();
    if !ok_prefix || !ok_rest {
        let mut want = expected.join(",");
        if !optional.is_empty() {
            want += &format!("[,{}]", optional.join(","));
        }
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header '{want}', got '{}'", header.join(",")),
        });
    }
    Ok(header)
}

/// Reads a `date,<value_name>` series. With `non_negative`, negative values
/// are a validation error.
pub fn read_series<R: Read>(r: R, value_name: &str, non_negative: bool) -> Result<Series> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &["date", value_name], &[])?;
    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        let date = parse_date(&rec[0], line)?;
        let v = parse_num(&rec[1], value_name, line)?;
        if non_negative && v < 0.0 {
            return Err(Error::Validation {
                line,
                msg: format!("{value_name} must be non-negative, got {v}"),
            });
        }
        rows.push((date, v, line));
    }
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Validation {
                line: w[0].2.max(w[1].2),
                msg: format!("duplicate date {}", w[1].0),
            });
        }
    }
    Ok(Series {
        dates: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// `date,rv` in daily decimal variance.
pub fn load_rv_series(path: impl AsRef<Path>) -> Result<Series> {
    read_series(open(path.as_ref())?, "rv", true)
}

/// `date,log_return`.
pub fn load_returns(path: impl AsRef<Path>) -> Result<Series> {
    read_series(open(path.as_ref())?, "log_return", false)
}

pub fn write_series<W: Write>(w: W, value_name: &str, s: &Series) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", value_name]).map_err(csv_error)?;
    for (d, v) in s.dates.iter().zip(&s.values) {
        wtr.write_record([d.format("%Y-%m-%d").to_string(), v.to_string()]).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Realized variance and returns on their common dates.
#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub dates: Vec<NaiveDate>,
    pub rv: Vec<f64>,
    pub returns: Vec<f64>,
}

pub fn align(rv: &Series, returns: &Series) -> Result<Aligned> {
    let ret: BTreeMap<NaiveDate, f64> = returns.dates.iter().copied().zip(returns.values.iter().copied()).collect();
    let mut out = Aligned {
        dates: Vec::new(),
        rv: Vec::new(),
        returns: Vec::new(),
    };
    for (d, v) in rv.dates.iter().zip(&rv.values) {
        if let Some(y) = ret.get(d) {
            out.dates.push(*d);
            out.rv.push(*v);
            out.returns.push(*y);
        }
    }
    if out.dates.is_empty() {
        return Err(Error::Empty);
    }
    Ok(out)
}

/// Scales RV so its mean equals the mean squared return, absorbing the
/// overnight contribution missing from intraday measures.
pub fn rescale_rv(data: &mut Aligned) -> f64 {
    let n = data.rv.len() as f64;
    let m_rv = data.rv.iter().sum::<f64>() / n;
    let m_y2 = data.returns.iter().map(|y| y * y).sum::<f64>() / n;
    let factor = if m_rv > 0.0 { m_y2 / m_rv } else { 1.0 };
    data.rv.iter_mut().for_each(|x| *x *= factor);
    factor
}

/// Mandatory option-chain columns; an optional `market_iv` may follow.
pub const CHAIN_COLUMNS: [&str; 7] = ["quote_date", "expiry_date", "strike", "type", "mid_price", "underlying", "rate"];

/// Reads an option chain. A missing or empty `market_iv` is inverted from
/// the mid price; quotes whose price admits no implied volatility keep
/// `market_iv = None`.
pub fn read_option_chain<R: Read>(r: R) -> Result<OptionChain> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &CHAIN_COLUMNS, &["market_iv"])?;
    let mut rows: Vec<(OptionQuote, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 7 && rec.len() != 8 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 7 or 8 fields, got {}", rec.len()),
            });
        }
        let option_type = OptionType::from_str(&rec[3]).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let mut q = OptionQuote {
            quote_date: parse_date(&rec[0], line)?,
            expiry_date: parse_date(&rec[1], line)?,
            strike: parse_num(&rec[2], "strike", line)?,
            option_type,
            mid_price: parse_num(&rec[4], "mid_price", line)?,
            underlying: parse_num(&rec[5], "underlying", line)?,
            rate: parse_num(&rec[6], "rate", line)?,
            market_iv: None,
        };
        q.validate().map_err(|e| Error::Validation { line, msg: e.to_string() })?;
        q.market_iv = match rec.get(7).filter(|s| !s.is_empty()) {
            Some(s) => Some(parse_num(s, "market_iv", line)?),
            None => implied_vol(q.mid_price, q.underlying, q.strike, q.rate, q.tau(), q.option_type).ok(),
        };
        rows.push((q, line));
    }
    rows.sort_by(|a, b| {
        let ka = (a.0.quote_date, a.0.expiry_date, a.0.option_type == OptionType::Put, a.0.strike);
        let kb = (b.0.quote_date, b.0.expiry_date, b.0.option_type == OptionType::Put, b.0.strike);
        ka.partial_cmp(&kb).unwrap()
    });
    for w in rows.windows(2) {
        let (a, b) = (&w[0].0, &w[1].0);
        if a.quote_date == b.quote_date && a.expiry_date == b.expiry_date && a.option_type == b.option_type && a.strike == b.strike {
            return Err(Error::Validation {
                line: w[0].1.max(w[1].1),
                msg: format!("duplicate quote {} {} {} {}", b.quote_date, b.expiry_date, b.option_type, b.strike),
            });
        }
    }
    Ok(OptionChain {
        quotes: rows.into_iter().map(|r| r.0).collect(),
    })
}

pub fn load_option_chain(path: impl AsRef<Path>) -> Result<OptionChain> {
    read_option_chain(open(path.as_ref())?)
}

pub fn write_option_chain<W: Write>(w: W, chain: &OptionChain) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = CHAIN_COLUMNS.to_vec();
    header.push("market_iv");
    wtr.write_record(&header).map_err(csv_error)?;
    for q in &chain.quotes {
        wtr.write_record(quote_fields(q)).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// The chain columns of one quote, `market_iv` last (empty when unknown).
pub fn quote_fields(q: &OptionQuote) -> Vec<String> {
    vec![
        q.quote_date.format("%Y-%m-%d").to_string(),
        q.expiry_date.format("%Y-%m-%d").to_string(),
        q.strike.to_string(),
        q.option_type.to_string(),
        q.mid_price.to_string(),
        q.underlying.to_string(),
        q.rate.to_string(),
        q.market_iv.map(|v| v.to_string()).unwrap_or_default(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterThresholds {
    pub min_days: i64,
    pub max_days: i64,
    pub max_iv: f64,
    pub min_price: f64,
    pub min_moneyness: f64,
    pub max_moneyness: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_days: 10,
            max_days: 365,
            max_iv: 0.7,
            min_price: 0.05,
            min_moneyness: 0.8,
            max_moneyness: 1.2,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_days > 0
            && self.max_days >= self.min_days
            && self.max_iv > 0.0
            && self.min_price > 0.0
            && self.min_moneyness > 0.0
            && self.max_moneyness > self.min_moneyness;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid filter thresholds {self:?}")))
        }
    }
}

/// The filter rules in the order they are applied.
pub const FILTER_RULES: [&str; 5] = ["maturity", "implied_vol", "price", "otm", "moneyness"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub input: usize,
    pub retained: usize,
    /// Rejections attributed to the first failing rule, in [`FILTER_RULES`] order.
    pub rejected: [usize; 5],
}

/// Index of the first rule a quote fails, if any.
pub fn failing_rule(q: &OptionQuote, t: &FilterThresholds) -> Option<usize> {
    let days = q.maturity_days();
    if days < t.min_days || days > t.max_days {
        return Some(0);
    }
    match q.market_iv {
        Some(iv) if iv <= t.max_iv => {}
        _ => return Some(1),
    }
    if q.mid_price < t.min_price {
        return Some(2);
    }
    if !q.is_otm() {
        return Some(3);
    }
    let m = q.moneyness();
    let in_box = match q.option_type {
        OptionType::Call => m <= t.max_moneyness,
        OptionType::Put => m >= t.min_moneyness,
    };
    if !in_box {
        return Some(4);
    }
    None
}

/// Keeps out-of-the-money quotes with maturity in `[min_days, max_days]`,
/// implied volatility at most `max_iv`, price at least `min_price` and
/// moneyness inside the box.
pub fn filter_options(chain: &OptionChain, t: &FilterThresholds) -> (OptionChain, FilterReport) {
    let mut report = FilterReport {
        input: chain.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for q in &chain.quotes {
        match failing_rule(q, t) {
            Some(rule) => report.rejected[rule] += 1,
            None => kept.push(q.clone()),
        }
    }
    report.retained = kept.len();
    (OptionChain { quotes: kept }, report)
}

/// Flat `key = value` configuration with `#` comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Config::parse(&text)
    }

    /// Keys are normalized to dashes, matching the command-line flags.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&key.replace('_', "-")).map(|s| s.as_str())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

const PARAM_KEYS: [&str; 12] = [
    "theta", "delta", "d", "beta_d", "beta_w", "beta_m", "alpha_d", "alpha_w", "alpha_m", "gamma", "lambda", "r",
];

fn param_values(p: &ModelParams) -> [f64; 12] {
    [
        p.theta, p.delta, p.d, p.beta_d, p.beta_w, p.beta_m, p.alpha_d, p.alpha_w, p.alpha_m, p.gamma, p.lambda, p.r,
    ]
}

/// Writes model parameters as `key = value` lines, plus `nu1` when given.
pub fn write_params<W: Write>(mut w: W, p: &ModelParams, nu1: Option<f64>) -> Result<()> {
    writeln!(w, "variant = {}", p.variant)?;
    for (k, v) in PARAM_KEYS.iter().zip(param_values(p)) {
        writeln!(w, "{k} = {v}")?;
    }
    if let Some(nu1) = nu1 {
        writeln!(w, "nu1 = {nu1}")?;
    }
    Ok(())
}

/// Writes a fit as `key = value` lines, readable by [`read_params`].
pub fn write_fit<W: Write>(mut w: W, fit: &FitResult) -> Result<()> {
    let p = &fit.params;
    write_params(&mut w, p, None)?;
    writeln!(w, "lambda_se = {}", fit.lambda_se)?;
    for (k, se) in free_parameter_names(p.variant).iter().zip(&fit.std_errors) {
        writeln!(w, "{k}_se = {se}")?;
    }
    writeln!(w, "loglik = {}", fit.loglik)?;
    writeln!(w, "persistence = {}", fit.persistence)?;
    writeln!(w, "converged = {}", fit.converged)?;
    writeln!(w, "iterations = {}", fit.iterations)?;
    writeln!(w, "n_obs = {}", fit.n_obs)?;
    Ok(())
}

/// Model parameters from a `key = value` file (extra keys are ignored;
/// missing loadings default to zero).
pub fn read_params(text: &str) -> Result<ModelParams> {
    let cfg = Config::parse(text)?;
    let variant: Variant = cfg
        .get("variant")
        .ok_or_else(|| Error::Config("missing 'variant'".into()))?
        .parse()?;
    let mut vals = [0.0; 12];
    for (slot, key) in vals.iter_mut().zip(PARAM_KEYS) {
        *slot = match cfg.get_parsed::<f64>(key)? {
            Some(v) => v,
            None if matches!(key, "theta" | "delta" | "lambda") => {
                return Err(Error::Config(format!("missing '{key}'")));
            }
            None => 0.0,
        };
    }
    let p = ModelParams {
        variant,
        theta: vals[0],
        delta: vals[1],
        d: vals[2],
        beta_d: vals[3],
        beta_w: vals[4],
        beta_m: vals[5],
        alpha_d: vals[6],
        alpha_w: vals[7],
        alpha_m: vals[8],
        gamma: vals[9],
        lambda: vals[10],
        r: vals[11],
    };
    p.validate()?;
    Ok(p)
}

/// Column names of the estimate table row.
pub const FIT_CSV_HEADER: [&str; 25] = [
    "model",
    "lambda",
    "lambda_se",
    "theta",
    "theta_se",
    "delta",
    "delta_se",
    "beta_d",
    "beta_d_se",
    "beta_w",
    "beta_w_se",
    "beta_m",
    "beta_m_se",
    "alpha_d",
    "alpha_d_se",
    "alpha_w",
    "alpha_w_se",
    "alpha_m",
    "alpha_m_se",
    "gamma",
    "gamma_se",
    "nu1",
    "loglik",
    "persistence",
    "n_obs",
];

/// One table row: estimates and standard errors, then `nu1` (empty when not
/// calibrated), log-likelihood and persistence.
pub fn fit_csv_row(fit: &FitResult, nu1: Option<f64>) -> Vec<String> {
    let p = &fit.params;
    let mut row = vec![p.variant.to_string(), p.lambda.to_string(), fit.lambda_se.to_string()];
    let values = [
        ("theta", p.theta),
        ("delta", p.delta),
        ("beta_d", p.beta_d),
        ("beta_w", p.beta_w),
        ("beta_m", p.beta_m),
        ("alpha_d", p.alpha_d),
        ("alpha_w", p.alpha_w),
        ("alpha_m", p.alpha_m),
        ("gamma", p.gamma),
    ];
    for (name, v) in values {
        match fit.std_error(name) {
            Some(se) => {
                row.push(v.to_string());
                row.push(se.to_string());
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
    }
    row.push(nu1.map(|v| v.to_string()).unwrap_or_default());
    row.push(fit.loglik.to_string());
    row.push(fit.persistence.to_string());
    row.push(fit.n_obs.to_string());
    row
}
