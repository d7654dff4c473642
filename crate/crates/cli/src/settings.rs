//! Merging of command-line flags with the optional config file, and the
//! model / state / output plumbing shared by the subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use lharg::io::{align, load_returns, load_rv_series, read_params, rescale_rv, Config, FilterThresholds};
use lharg::model::{filter_innovations, MarketState, ModelParams, RiskPremia, Variant};
use lharg::pricing::{CosConfig, TRADING_DAYS};
use lharg::{Error, Result};

use crate::{CosArgs, FilterArgs, ModelArgs, OutputArgs, StateArgs};

/// Every key a config file may contain. Keys match the long flag names.
const KNOWN_KEYS: &[&str] = &[
    "fit", "model", "nu1", "rate", "rv", "returns", "as-of", "rescale", "output", "out-dir", "cos-terms",
    "cos-range", "min-days", "max-days", "max-iv", "min-price", "min-moneyness", "max-moneyness", "no-filter",
    "filter", "target-iv", "maturity", "lambda", "fit-out", "measure", "horizon", "paths", "seed", "raw",
    "maturities", "z-real", "z-imag", "max-se",
];

pub struct Settings {
    cfg: Config,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let cfg = match path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(k) = cfg.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        Ok(Settings { cfg })
    }

    /// The flag if given, else the config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.cfg.get_parsed(key),
        }
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.pick(flag, key)?
            .ok_or_else(|| Error::Config(format!("missing --{key} (flag or config key)")))
    }

    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.cfg.get_parsed::<bool>(key)?.unwrap_or(false))
    }

    /// An existing input file.
    pub fn input(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        match self.pick(flag, key)? {
            Some(p) if !p.is_file() => Err(Error::Config(format!("--{key}: no such file {}", p.display()))),
            other => Ok(other),
        }
    }

    pub fn list<T: FromStr>(&self, flag: Option<String>, key: &str) -> Result<Option<Vec<T>>> {
        let Some(text) = self.pick(flag, key)? else { return Ok(None) };
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("--{key}: cannot parse '{}'", s.trim())))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn cos(&self, a: &CosArgs) -> Result<CosConfig> {
        let d = CosConfig::default();
        let cfg = CosConfig {
            n_terms: self.pick(a.cos_terms, "cos-terms")?.unwrap_or(d.n_terms),
            range_width: self.pick(a.cos_range, "cos-range")?.unwrap_or(d.range_width),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn thresholds(&self, a: &FilterArgs) -> Result<FilterThresholds> {
        let d = FilterThresholds::default();
        let t = FilterThresholds {
            min_days: self.pick(a.min_days, "min-days")?.unwrap_or(d.min_days),
            max_days: self.pick(a.max_days, "max-days")?.unwrap_or(d.max_days),
            max_iv: self.pick(a.max_iv, "max-iv")?.unwrap_or(d.max_iv),
            min_price: self.pick(a.min_price, "min-price")?.unwrap_or(d.min_price),
            min_moneyness: self.pick(a.min_moneyness, "min-moneyness")?.unwrap_or(d.min_moneyness),
            max_moneyness: self.pick(a.max_moneyness, "max-moneyness")?.unwrap_or(d.max_moneyness),
        };
        t.validate()?;
        Ok(t)
    }

    /// Model parameters from `--fit`, else the reference preset named by
    /// `--model` (default ZM-LHARG). `--rate` (annualized) overrides the
    /// daily rate.
    pub fn model(&self, a: &ModelArgs) -> Result<Model> {
        let (mut params, mut nu1, source) = match self.input(a.fit.clone(), "fit")? {
            Some(path) => {
                let text = std::fs::read_to_string(&path)?;
                let params = read_params(&text)?;
                let nu1 = Config::parse(&text)?.get_parsed::<f64>("nu1")?;
                (params, nu1, path.display().to_string())
            }
            None => {
                let variant = self.pick(a.model.clone(), "model")?.unwrap_or_else(|| "zm-lharg".into());
                let variant: Variant = variant.parse()?;
                (ModelParams::reference(variant), Some(ModelParams::reference_nu1(variant)), format!("{variant} preset"))
            }
        };
        if let Some(rate) = self.pick(a.rate, "rate")? {
            params = params.with_rate(rate / TRADING_DAYS);
        }
        if let Some(v) = self.pick(a.nu1, "nu1")? {
            nu1 = Some(v);
        }
        params.validate()?;
        Ok(Model { params, nu1, source })
    }

    pub fn history(&self, a: &StateArgs, params: &ModelParams) -> Result<Option<History>> {
        let rv = self.input(a.rv.clone(), "rv")?;
        let returns = self.input(a.returns.clone(), "returns")?;
        let (rv, returns) = match (rv, returns) {
            (None, None) => return Ok(None),
            (Some(rv), Some(ret)) => (rv, ret),
            _ => return Err(Error::Config("--rv and --returns must be given together".into())),
        };
        let mut data = align(&load_rv_series(rv)?, &load_returns(returns)?)?;
        let rescale = if self.switch(a.rescale, "rescale")? { Some(rescale_rv(&mut data)) } else { None };
        let eps = filter_innovations(&data.returns, &data.rv, params.r, params.lambda)?;
        Ok(Some(History {
            dates: data.dates,
            rv: data.rv,
            returns: data.returns,
            eps,
            rescale,
        }))
    }

    pub fn as_of(&self, a: &StateArgs) -> Result<Option<NaiveDate>> {
        self.pick(a.as_of, "as-of")
    }

    /// CSV destination: `--output`, else `<out-dir>/<name>.csv`, else stdout.
    pub fn output(&self, a: &OutputArgs, name: &str) -> Result<Option<PathBuf>> {
        if let Some(p) = self.pick(a.output.clone(), "output")? {
            return Ok(Some(p));
        }
        match self.pick::<PathBuf>(None, "out-dir")? {
            Some(dir) => {
                std::fs::create_dir_all(&dir)?;
                Ok(Some(dir.join(format!("{name}.csv"))))
            }
            None => Ok(None),
        }
    }
}

pub struct Model {
    pub params: ModelParams,
    pub nu1: Option<f64>,
    pub source: String,
}

impl Model {
    pub fn premia(&self) -> Result<RiskPremia> {
        let nu1 = self
            .nu1
            .ok_or_else(|| Error::Config("no nu1: pass --nu1 or a calibrated fit file".into()))?;
        Ok(RiskPremia::arbitrage_free(self.params.lambda, nu1))
    }
}

/// Aligned history with filtered innovations.
pub struct History {
    pub dates: Vec<NaiveDate>,
    pub rv: Vec<f64>,
    pub returns: Vec<f64>,
    pub eps: Vec<f64>,
    pub rescale: Option<f64>,
}

impl History {
    /// State built from every observation dated on or before `date`
    /// (all of them when `date` is `None`).
    pub fn state_at(&self, params: &ModelParams, date: Option<NaiveDate>) -> Result<MarketState> {
        let n = match date {
            Some(d) => self.dates.partition_point(|x| *x <= d),
            None => self.dates.len(),
        };
        MarketState::from_history(&self.rv[..n], &self.eps[..n], params)
    }
}

/// The conditioning state: from history when available, else stationary.
pub fn state(history: Option<&History>, params: &ModelParams, date: Option<NaiveDate>) -> Result<(MarketState, String)> {
    match history {
        Some(h) => {
            let st = h.state_at(params, date)?;
            let label = match date {
                Some(d) => format!("history up to {d}"),
                None => format!("history up to {}", h.dates.last().map(|d| d.to_string()).unwrap_or_default()),
            };
            Ok((st, label))
        }
        None => Ok((MarketState::stationary(params)?, "stationary".into())),
    }
}

/// Writes CSV rows to `path`, or to stdout when `path` is `None`.
pub fn write_csv(path: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable summary lines, `#`-prefixed so stdout stays valid CSV
/// with comments when the table is printed there too.
pub fn summary(lines: &[String]) {
    let mut out = io::stdout().lock();
    for l in lines {
        let _ = writeln!(out, "# {l}");
    }
}

pub fn fmt(x: f64) -> String {
    format!("{x}")
}
