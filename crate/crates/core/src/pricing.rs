//! European option pricing by Fourier-cosine expansion, Black–Scholes
//! utilities and pricing-error metrics.
//!
//! The cosine expansion recovers the density of the log-return `R` on a
//! truncation interval `[a, b]` built from its cumulants. Because the
//! frequencies `u_k = k pi / (b - a)` do not depend on the strike, one grid of
//! characteristic-function values serves every strike of a maturity.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::mgf::{cumulants, log_mgf_q_direct, Measure};
use crate::model::{MarketState, ModelParams, RiskPremia};
use crate::optim::brent;

/// Trading days per year, used to turn calendar maturities into recursion
/// horizons.
pub const TRADING_DAYS: f64 = 252.0;
/// Calendar days per year.
pub const CALENDAR_DAYS: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionType {
    Call,
    Put,
}

impl fmt::Display for OptionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionType::Call => "call",
            OptionType::Put => "put",
        })
    }
}

impl FromStr for OptionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionType::Call),
            "put" | "p" => Ok(OptionType::Put),
            other => Err(Error::InvalidParams(format!("unknown option type '{other}'"))),
        }
    }
}

/// One market option record. `rate` is the annualized continuously
/// compounded rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionQuote {
    pub quote_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub strike: f64,
    pub option_type: OptionType,
    pub mid_price: f64,
    pub underlying: f64,
    pub rate: f64,
    pub market_iv: Option<f64>,
}

impl OptionQuote {
    /// Calendar days to expiry.
    pub fn maturity_days(&self) -> i64 {
        (self.expiry_date - self.quote_date).num_days()
    }

    /// Year fraction on a 365-day calendar.
    pub fn tau(&self) -> f64 {
        self.maturity_days() as f64 / CALENDAR_DAYS
    }

    /// `K / S`.
    pub fn moneyness(&self) -> f64 {
        self.strike / self.underlying
    }

    /// Out of the money: calls with `m >= 1`, puts with `m < 1`.
    pub fn is_otm(&self) -> bool {
        match self.option_type {
            OptionType::Call => self.moneyness() >= 1.0,
            OptionType::Put => self.moneyness() < 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.maturity_days() <= 0 {
            return Err(Error::InvalidParams("expiry must follow the quote date".into()));
        }
        if !(self.strike > 0.0) || !(self.underlying > 0.0) {
            return Err(Error::InvalidParams("strike and underlying must be positive".into()));
        }
        if !(self.mid_price >= 0.0) {
            return Err(Error::InvalidParams("mid price must be non-negative".into()));
        }
        if !self.rate.is_finite() {
            return Err(Error::InvalidParams("rate must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptionChain {
    pub quotes: Vec<OptionQuote>,
}

impl OptionChain {
    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosConfig {
    pub n_terms: usize,
    pub range_width: f64,
}

impl Default for CosConfig {
    fn default() -> Self {
        CosConfig {
            n_terms: 512,
            range_width: 10.0,
        }
    }
}

impl CosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms < 64 {
            return Err(Error::InvalidParams(format!("COS needs at least 64 terms, got {}", self.n_terms)));
        }
        if !(self.range_width > 0.0) || !self.range_width.is_finite() {
            return Err(Error::InvalidParams("COS range width must be positive".into()));
        }
        Ok(())
    }
}

/// Truncation interval for the log-return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub a: f64,
    pub b: f64,
}

impl Truncation {
    /// `c1 -/+ L sqrt(c2 + sqrt(|c4|))`.
    pub fn from_cumulants(c1: f64, c2: f64, c4: f64, range_width: f64) -> Result<Truncation> {
        let half = range_width * (c2 + c4.abs().sqrt()).sqrt();
        if !(half > 0.0) || !half.is_finite() || !c1.is_finite() {
            return Err(Error::Numerical(format!("degenerate truncation from cumulants ({c1}, {c2}, {c4})")));
        }
        Ok(Truncation { a: c1 - half, b: c1 + half })
    }
}

/// Characteristic-function values on the cosine frequencies, pre-multiplied
/// by `exp(-i u_k a)`.
#[derive(Debug, Clone)]
pub struct CfGrid {
    pub trunc: Truncation,
    weights: Vec<Complex64>,
}

impl CfGrid {
    pub fn build<F>(cf: F, trunc: Truncation, n_terms: usize) -> Result<CfGrid>
    where
        F: Fn(f64) -> Result<Complex64>,
    {
        let width = trunc.b - trunc.a;
        if !(width > 0.0) {
            return Err(Error::InvalidParams("truncation interval must have b > a".into()));
        }
        let phi0 = cf(0.0)?;
        if (phi0 - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Numerical(format!("characteristic function at 0 is {phi0}, not 1")));
        }
        let mut weights = Vec::with_capacity(n_terms);
        for k in 0..n_terms {
            let u = k as f64 * PI / width;
            let phase = Complex64::new(0.0, -u * trunc.a).exp();
            let w = cf(u)? * phase;
            if !w.is_finite() {
                return Err(Error::Numerical(format!("characteristic function not finite at u = {u}")));
            }
            weights.push(w);
        }
        Ok(CfGrid { trunc, weights })
    }

    pub fn n_terms(&self) -> usize {
        self.weights.len()
    }

    /// Option value from the grid. `discount` is `exp(-r tau)`.
    pub fn price(&self, s: f64, k: f64, discount: f64, ty: OptionType) -> Result<f64> {
        if !(s > 0.0) || !(k > 0.0) {
            return Err(Error::InvalidParams("spot and strike must be positive".into()));
        }
        let x = (s / k).ln();
        // Interval for y = ln(S_T / K).
        let lo = x + self.trunc.a;
        let hi = x + self.trunc.b;
        let (c, d, sign) = match ty {
            OptionType::Call => (lo.max(0.0), hi, 1.0),
            OptionType::Put => (lo, hi.min(0.0), -1.0),
        };
        if c >= d {
            return Ok(0.0);
        }
        let width = hi - lo;
        let mut sum = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let (chi, psi) = chi_psi(j, lo, width, c, d);
            let vk = sign * (chi - psi);
            let term = w.re * vk;
            sum += if j == 0 { 0.5 * term } else { term };
        }
        let price = discount * k * 2.0 / width * sum;
        if price < -1e-10 * k.max(s) {
            return Err(Error::Numerical(format!("negative COS price {price}")));
        }
        Ok(price.max(0.0))
    }
}

// Cosine coefficients of e^y and 1 on [c, d] within [lo, lo + width].
fn chi_psi(k: usize, lo: f64, width: f64, c: f64, d: f64) -> (f64, f64) {
    let w = k as f64 * PI / width;
    let (sd, cd) = (w * (d - lo)).sin_cos();
    let (sc, cc) = (w * (c - lo)).sin_cos();
    let (ed, ec) = (d.exp(), c.exp());
    let chi = (cd * ed - cc * ec + w * (sd * ed - sc * ec)) / (1.0 + w * w);
    let psi = if k == 0 { d - c } else { (sd - sc) / w };
    (chi, psi)
}

/// Discounted expected payoff by cosine expansion. `cf(u)` is the
/// characteristic function of `ln(S_T / S)`; `rate * tau` is the discount
/// exponent (any consistent units).
#[allow(clippy::too_many_arguments)]
pub fn cos_price<F>(
    cf: F,
    s: f64,
    k: f64,
    rate: f64,
    tau: f64,
    ty: OptionType,
    cfg: &CosConfig,
    trunc: Truncation,
) -> Result<f64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    cfg.validate()?;
    let grid = CfGrid::build(cf, trunc, cfg.n_terms)?;
    grid.price(s, k, (-rate * tau).exp(), ty)
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Black–Scholes price; `r` and `sigma` annualized, `tau` in years.
pub fn bs_price(s: f64, k: f64, r: f64, sigma: f64, tau: f64, ty: OptionType) -> f64 {
    let df = (-r * tau).exp();
    if sigma <= 0.0 || tau <= 0.0 {
        return match ty {
            OptionType::Call => (s - k * df).max(0.0),
            OptionType::Put => (k * df - s).max(0.0),
        };
    }
    let sq = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sq;
    let d2 = d1 - sq;
    match ty {
        OptionType::Call => s * norm_cdf(d1) - k * df * norm_cdf(d2),
        OptionType::Put => k * df * norm_cdf(-d2) - s * norm_cdf(-d1),
    }
}

pub fn bs_vega(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    let sq = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sq;
    s * norm_pdf(d1) * tau.sqrt()
}

/// Black–Scholes characteristic function of `ln(S_T / S)`.
pub fn bs_cf(u: f64, r: f64, sigma: f64, tau: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    (i * u * (r - 0.5 * sigma * sigma) * tau - 0.5 * sigma * sigma * u * u * tau).exp()
}

/// Implied volatility by bracketing, refined with Newton steps.
pub fn implied_vol(price: f64, s: f64, k: f64, r: f64, tau: f64, ty: OptionType) -> Result<f64> {
    if !(s > 0.0) || !(k > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParams("spot, strike and maturity must be positive".into()));
    }
    let df = (-r * tau).exp();
    let (lower, upper) = match ty {
        OptionType::Call => ((s - k * df).max(0.0), s),
        OptionType::Put => ((k * df - s).max(0.0), k * df),
    };
    if !(price > lower && price < upper) {
        return Err(Error::InversionDomain { price, lower, upper });
    }
    let f = |sig: f64| bs_price(s, k, r, sig, tau, ty) - price;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Numerical(format!("no volatility reproduces price {price}")));
        }
    }
    let mut lo = 1e-3;
    while f(lo) > 0.0 {
        lo *= 0.1;
        if lo < 1e-12 {
            return Err(Error::Numerical(format!("no volatility reproduces price {price}")));
        }
    }
    let mut sigma = brent(f, lo, hi, 1e-13, 200)?;
    for _ in 0..3 {
        let vega = bs_vega(s, k, r, sigma, tau);
        if !(vega > 0.0) {
            break;
        }
        let step = f(sigma) / vega;
        if !step.is_finite() || step.abs() > 0.1 * sigma {
            break;
        }
        sigma -= step;
        if step.abs() < 1e-16 * sigma {
            break;
        }
    }
    Ok(sigma)
}

/// `sqrt(mean((a - b)^2)) * 100`.
pub fn rmse_iv(market: &[f64], model: &[f64]) -> Result<f64> {
    check_pair(market, model)?;
    let mse = market.iter().zip(model).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / market.len() as f64;
    Ok(mse.sqrt() * 100.0)
}

/// Root mean squared relative price error, in percent.
pub fn rmse_p(market: &[f64], model: &[f64]) -> Result<f64> {
    check_pair(market, model)?;
    let mse = market
        .iter()
        .zip(model)
        .map(|(a, b)| ((a - b) / a).powi(2))
        .sum::<f64>()
        / market.len() as f64;
    Ok(mse.sqrt() * 100.0)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Calendar maturity to whole trading days, at least one.
pub fn trading_days(calendar_days: i64) -> usize {
    ((calendar_days as f64 * TRADING_DAYS / CALENDAR_DAYS).round() as usize).max(1)
}

/// Risk-neutral characteristic-function grid of the `horizon`-day
/// log-return. `params.r` must already be the daily rate.
pub fn model_cf_grid(
    params: &ModelParams,
    premia: &RiskPremia,
    state: &MarketState,
    horizon: usize,
    cfg: &CosConfig,
) -> Result<CfGrid> {
    cfg.validate()?;
    let k = cumulants(params, state, horizon, &Measure::RiskNeutral(*premia))?;
    let trunc = Truncation::from_cumulants(k.kappa[0], k.kappa[1], k.kappa[3], cfg.range_width)?;
    CfGrid::build(
        |u| Ok(log_mgf_q_direct(params, state, premia, Complex64::new(0.0, u), horizon)?.exp()),
        trunc,
        cfg.n_terms,
    )
}

/// Model price of a European option on `horizon` trading days. `rate` is
/// annualized and `tau` in years; the daily model rate is chosen so that
/// `r_daily * horizon = rate * tau`.
#[allow(clippy::too_many_arguments)]
pub fn model_price(
    params: &ModelParams,
    premia: &RiskPremia,
    state: &MarketState,
    s: f64,
    k: f64,
    rate: f64,
    tau: f64,
    horizon: usize,
    ty: OptionType,
    cfg: &CosConfig,
) -> Result<f64> {
    let p = params.with_rate(rate * tau / horizon as f64);
    let grid = model_cf_grid(&p, premia, state, horizon, cfg)?;
    grid.price(s, k, (-rate * tau).exp(), ty)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricedQuote {
    pub quote: OptionQuote,
    pub model_price: Option<f64>,
    pub model_iv: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPricing {
    pub rows: Vec<PricedQuote>,
    /// Number of characteristic-function grids built.
    pub cf_builds: usize,
}

/// Prices every quote of a chain. One characteristic-function grid is
/// built per distinct (quote date, maturity, rate) and reused across
/// strikes. `state_for` supplies the conditioning state at each quote date.
/// Failures are recorded per quote.
pub fn price_chain<S>(
    params: &ModelParams,
    premia: &RiskPremia,
    chain: &OptionChain,
    state_for: S,
    cfg: &CosConfig,
) -> Result<ChainPricing>
where
    S: Fn(NaiveDate) -> Result<MarketState>,
{
    cfg.validate()?;
    if !premia.is_arbitrage_free(params.lambda) {
        return Err(Error::NotArbitrageFree(premia.nu2 - params.lambda - 0.5));
    }
    let mut cache: HashMap<(NaiveDate, i64, u64), std::result::Result<CfGrid, String>> = HashMap::new();
    let mut rows = Vec::with_capacity(chain.len());
    for q in &chain.quotes {
        let key = (q.quote_date, q.maturity_days(), q.rate.to_bits());
        let grid = cache.entry(key).or_insert_with(|| {
            (|| -> Result<CfGrid> {
                q.validate()?;
                let horizon = trading_days(q.maturity_days());
                let p = params.with_rate(q.rate * q.tau() / horizon as f64);
                let state = state_for(q.quote_date)?;
                model_cf_grid(&p, premia, &state, horizon, cfg)
            })()
            .map_err(|e| e.to_string())
        });
        let row = match grid {
            Err(e) => PricedQuote {
                quote: q.clone(),
                model_price: None,
                model_iv: None,
                error: Some(e.clone()),
            },
            Ok(g) => {
                let priced = g.price(q.underlying, q.strike, (-q.rate * q.tau()).exp(), q.option_type);
                match priced {
                    Err(e) => PricedQuote {
                        quote: q.clone(),
                        model_price: None,
                        model_iv: None,
                        error: Some(e.to_string()),
                    },
                    Ok(p) => {
                        let iv = implied_vol(p, q.underlying, q.strike, q.rate, q.tau(), q.option_type);
                        PricedQuote {
                            quote: q.clone(),
                            model_price: Some(p),
                            model_iv: iv.as_ref().ok().copied(),
                            error: iv.err().map(|e| e.to_string()),
                        }
                    }
                }
            }
        };
        rows.push(row);
    }
    Ok(ChainPricing {
        cf_builds: cache.len(),
        rows,
    })
}

/// Moneyness bucket edges (upper bounds, lower edge of the first bucket is
/// inclusive).
pub const MONEYNESS_BUCKETS: [(f64, f64); 5] = [(0.8, 0.9), (0.9, 0.98), (0.98, 1.02), (1.02, 1.1), (1.1, 1.2)];
/// Calendar-day maturity bucket upper bounds; the last bucket is open.
pub const MATURITY_BUCKETS: [i64; 3] = [50, 90, 160];

pub fn moneyness_bucket(m: f64) -> Option<usize> {
    if m < MONEYNESS_BUCKETS[0].0 {
        return None;
    }
    MONEYNESS_BUCKETS.iter().position(|&(_, hi)| m <= hi)
}

pub fn maturity_bucket(days: i64) -> usize {
    MATURITY_BUCKETS.iter().position(|&hi| days <= hi).unwrap_or(MATURITY_BUCKETS.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PanelCell {
    pub count: usize,
    pub rmse_iv: f64,
    pub rmse_p: f64,
}

/// RMSE by moneyness (rows) and maturity (columns), plus totals.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsePanel {
    pub cells: [[PanelCell; 4]; 5],
    pub total: PanelCell,
}

/// Builds the RMSE panel from priced quotes that have both a market and a
/// model implied volatility.
pub fn rmse_panel(rows: &[PricedQuote]) -> Result<RmsePanel> {
    let mut sums = [[(0usize, 0.0, 0.0); 4]; 5];
    let mut total = (0usize, 0.0, 0.0);
    for r in rows {
        let (Some(mkt_iv), Some(mod_iv), Some(mod_p)) = (r.quote.market_iv, r.model_iv, r.model_price) else {
            continue;
        };
        let Some(mi) = moneyness_bucket(r.quote.moneyness()) else { continue };
        let ti = maturity_bucket(r.quote.maturity_days());
        let e_iv = (mkt_iv - mod_iv).powi(2);
        let e_p = ((r.quote.mid_price - mod_p) / r.quote.mid_price).powi(2);
        let c = &mut sums[mi][ti];
        c.0 += 1;
        c.1 += e_iv;
        c.2 += e_p;
        total.0 += 1;
        total.1 += e_iv;
        total.2 += e_p;
    }
    if total.0 == 0 {
        return Err(Error::Empty);
    }
    let cell = |(n, siv, sp): (usize, f64, f64)| {
        if n == 0 {
            PanelCell::default()
        } else {
            PanelCell {
                count: n,
                rmse_iv: (siv / n as f64).sqrt() * 100.0,
                rmse_p: (sp / n as f64).sqrt() * 100.0,
            }
        }
    };
    let mut cells = [[PanelCell::default(); 4]; 5];
    for i in 0..5 {
        for j in 0..4 {
            cells[i][j] = cell(sums[i][j]);
        }
    }
    Ok(RmsePanel { cells, total: cell(total) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn bs_trunc(r: f64, sigma: f64, tau: f64) -> Truncation {
        let c1 = (r - 0.5 * sigma * sigma) * tau;
        Truncation::from_cumulants(c1, sigma * sigma * tau, 0.0, 10.0).unwrap()
    }

    #[test]
    fn cos_matches_black_scholes() {
        let (r, sigma, tau) = (0.0, 0.2, 1.0);
        let cfg = CosConfig::default();
        let p = cos_price(|u| Ok(bs_cf(u, r, sigma, tau)), 100.0, 100.0, r, tau, OptionType::Call, &cfg, bs_trunc(r, sigma, tau))
            .unwrap();
        assert!((p - 7.965567455405804).abs() < 1e-6, "{p}");
        assert!((p - bs_price(100.0, 100.0, r, sigma, tau, OptionType::Call)).abs() < 1e-9);
        for k in [70.0, 90.0, 110.0, 140.0] {
            for ty in [OptionType::Call, OptionType::Put] {
                let r = 0.03;
                let c = cos_price(|u| Ok(bs_cf(u, r, sigma, 0.5)), 100.0, k, r, 0.5, ty, &cfg, bs_trunc(r, sigma, 0.5)).unwrap();
                assert!((c - bs_price(100.0, k, r, sigma, 0.5, ty)).abs() < 1e-8, "{k} {ty}");
            }
        }
    }

    #[test]
    fn cos_rejects_bad_cf_and_config() {
        let cfg = CosConfig { n_terms: 32, range_width: 10.0 };
        let t = bs_trunc(0.0, 0.2, 1.0);
        assert!(cos_price(|u| Ok(bs_cf(u, 0.0, 0.2, 1.0)), 1.0, 1.0, 0.0, 1.0, OptionType::Call, &cfg, t).is_err());
        let cfg = CosConfig::default();
        let bad = |_u: f64| Ok(Complex64::new(2.0, 0.0));
        assert!(cos_price(bad, 1.0, 1.0, 0.0, 1.0, OptionType::Call, &cfg, t).is_err());
    }

    #[test]
    fn implied_vol_round_trip() {
        for sigma in [0.05, 0.2, 0.7] {
            for (k, ty) in [(80.0, OptionType::Put), (100.0, OptionType::Call), (125.0, OptionType::Call)] {
                let p = bs_price(100.0, k, 0.02, sigma, 0.75, ty);
                let iv = implied_vol(p, 100.0, k, 0.02, 0.75, ty).unwrap();
                assert!((iv - sigma).abs() < 1e-8, "{sigma} {k}: {iv}");
            }
        }
    }

    #[test]
    fn implied_vol_rejects_prices_outside_bounds() {
        let intrinsic = 100.0 - 90.0;
        assert!(matches!(
            implied_vol(intrinsic - 0.5, 100.0, 90.0, 0.0, 0.5, OptionType::Call),
            Err(Error::InversionDomain { .. })
        ));
        assert!(implied_vol(101.0, 100.0, 90.0, 0.0, 0.5, OptionType::Call).is_err());
    }

    #[test]
    fn implied_vol_deep_otm() {
        // Five cents on a 1000 index.
        let (s, k, r, tau) = (1000.0, 700.0, 0.01, 0.1);
        let sigma = implied_vol(0.05, s, k, r, tau, OptionType::Put).unwrap();
        let back = bs_price(s, k, r, sigma, tau, OptionType::Put);
        assert!((back - 0.05).abs() / 0.05 < 1e-4);
    }

    #[test]
    fn rmse_formulas() {
        let a = [0.2, 0.25, 0.3];
        assert_eq!(rmse_iv(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.01).collect();
        assert!((rmse_iv(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let r = rmse_iv(&[0.2, 0.2], &[0.21, 0.23]).unwrap();
        assert!((r - 0.0005f64.sqrt() * 100.0).abs() < 1e-12);
        assert!(matches!(rmse_iv(&[], &[]), Err(Error::Empty)));
        assert!(rmse_p(&[1.0], &[1.0, 2.0]).is_err());
        assert!((rmse_p(&[2.0, 4.0], &[2.2, 4.4]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn buckets() {
        assert_eq!(moneyness_bucket(0.8), Some(0));
        assert_eq!(moneyness_bucket(0.9), Some(0));
        assert_eq!(moneyness_bucket(0.95), Some(1));
        assert_eq!(moneyness_bucket(1.0), Some(2));
        assert_eq!(moneyness_bucket(1.2), Some(4));
        assert_eq!(moneyness_bucket(1.21), None);
        assert_eq!(moneyness_bucket(0.79), None);
        assert_eq!(maturity_bucket(50), 0);
        assert_eq!(maturity_bucket(51), 1);
        assert_eq!(maturity_bucket(160), 2);
        assert_eq!(maturity_bucket(161), 3);
    }

    #[test]
    fn lharg_put_call_parity() {
        let p = ModelParams::reference(Variant::ZmLharg);
        let s = MarketState::stationary(&p).unwrap();
        let prem = RiskPremia::arbitrage_free(p.lambda, ModelParams::reference_nu1(Variant::ZmLharg));
        let (rate, tau, horizon) = (0.03, 91.0 / 365.0, 63);
        let pd = p.with_rate(rate * tau / horizon as f64);
        let grid = model_cf_grid(&pd, &prem, &s, horizon, &CosConfig::default()).unwrap();
        let df = (-rate * tau).exp();
        for k in [80.0, 90.0, 100.0, 110.0, 120.0] {
            let c = grid.price(100.0, k, df, OptionType::Call).unwrap();
            let pu = grid.price(100.0, k, df, OptionType::Put).unwrap();
            assert!((c - pu - (100.0 - k * df)).abs() < 1e-8, "{k}: {}", c - pu - (100.0 - k * df));
        }
    }
}
