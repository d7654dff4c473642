//! Maximum-likelihood estimation of the RV dynamics, the market price of
//! risk regression, sandwich standard errors and calibration of the
//! variance risk premium to an at-the-money implied volatility.

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{filter_innovations, stationarity_margin, MarketState, ModelParams, RiskPremia, Variant, LAGS};
use crate::optim::{bfgs, brent, nelder_mead};
use crate::pricing::{bs_price, implied_vol, model_price, CosConfig, OptionType, TRADING_DAYS};

/// Mixture truncation used by default.
pub const K_MAX: usize = 90;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikOptions {
    /// Last Poisson index kept in the mixture sum.
    pub k_max: usize,
    /// Replace a non-positive noncentrality by this value instead of failing.
    pub clamp: Option<f64>,
}

impl Default for LoglikOptions {
    fn default() -> Self {
        LoglikOptions { k_max: K_MAX, clamp: None }
    }
}

/// Log of the noncentral gamma density at `x > 0`:
/// `sum_k Poisson(k; big_theta) Gamma(x; delta + k, theta)`, `k = 0..=k_max`.
pub fn ln_noncentral_gamma_pdf(x: f64, delta: f64, big_theta: f64, theta: f64, k_max: usize) -> f64 {
    let base = -x / theta - big_theta + (delta - 1.0) * x.ln() - delta * theta.ln() - ln_gamma(delta);
    if big_theta == 0.0 {
        return base;
    }
    base + ln_mixture(delta, (big_theta * x / theta).ln(), k_max)
}

// log sum_k exp(k q - ln Gamma(delta + k) + ln Gamma(delta) - ln k!), summed
// upward with a running maximum; stops once terms past the peak are
// negligible.
#[inline]
fn ln_mixture(delta: f64, q: f64, k_max: usize) -> f64 {
    let mut t = 0.0;
    let mut m = 0.0;
    let mut s = 1.0;
    for k in 0..k_max {
        let kf = k as f64;
        t += q - (delta + kf).ln() - (kf + 1.0).ln();
        if t > m {
            s = s * (m - t).exp() + 1.0;
            m = t;
        } else {
            let r = t - m;
            if r < -60.0 {
                break;
            }
            s += r.exp();
        }
    }
    m + s.ln()
}

/// Per-observation log-likelihood contributions for `t = 22..n`, the
/// noncentrality of day `t` built from the 22 preceding days.
pub fn loglik_contributions(params: &ModelParams, rv: &[f64], eps: &[f64], opts: &LoglikOptions) -> Result<Vec<f64>> {
    if rv.len() != eps.len() {
        return Err(Error::LengthMismatch(rv.len(), eps.len()));
    }
    if rv.len() <= LAGS {
        return Err(Error::TooShort { needed: LAGS + 1, got: rv.len() });
    }
    if !(params.theta > 0.0) || !(params.delta > 0.0) {
        return Err(Error::InvalidParams("theta and delta must be positive".into()));
    }
    if let Some(i) = rv.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateVariance(i));
    }
    let m = params.parabolic();
    let (theta, delta) = (m.theta, m.delta);
    let base = -delta * theta.ln() - ln_gamma(delta);
    let lev: Vec<f64> = rv.iter().zip(eps).map(|(x, e)| (e - m.gamma * x.sqrt()).powi(2)).collect();

    let mut out = Vec::with_capacity(rv.len() - LAGS);
    let mut rv_lags = [0.0; LAGS];
    let mut lev_lags = [0.0; LAGS];
    for t in LAGS..rv.len() {
        for i in 0..LAGS {
            rv_lags[i] = rv[t - 1 - i];
            lev_lags[i] = lev[t - 1 - i];
        }
        let mut big_theta = m.noncentrality(&rv_lags, &lev_lags);
        if !big_theta.is_finite() {
            return Err(Error::LikelihoodDomain { index: t, theta: big_theta });
        }
        if big_theta < 0.0 || (big_theta == 0.0 && opts.clamp.is_some()) {
            match opts.clamp {
                Some(c) => big_theta = c,
                None => return Err(Error::LikelihoodDomain { index: t, theta: big_theta }),
            }
        }
        let x = rv[t];
        let lx = x.ln();
        let mut l = base - x / theta - big_theta + (delta - 1.0) * lx;
        if big_theta > 0.0 {
            l += ln_mixture(delta, big_theta.ln() + lx - theta.ln(), opts.k_max);
        }
        out.push(l);
    }
    Ok(out)
}

/// Total log-likelihood of the RV series given filtered innovations.
pub fn loglik(params: &ModelParams, rv: &[f64], eps: &[f64]) -> Result<f64> {
    params.validate()?;
    loglik_with(params, rv, eps, &LoglikOptions::default())
}

pub fn loglik_with(params: &ModelParams, rv: &[f64], eps: &[f64], opts: &LoglikOptions) -> Result<f64> {
    Ok(loglik_contributions(params, rv, eps, opts)?.iter().sum())
}

/// Slope of `(y - r)/sqrt(RV)` on `sqrt(RV)` through the origin, with its
/// standard error.
pub fn estimate_lambda(returns: &[f64], rv: &[f64], r: f64) -> Result<(f64, f64)> {
    if returns.len() != rv.len() {
        return Err(Error::LengthMismatch(returns.len(), rv.len()));
    }
    if returns.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: returns.len() });
    }
    if let Some(i) = rv.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateVariance(i));
    }
    let sxx: f64 = rv.iter().sum();
    let sxy: f64 = returns.iter().map(|y| y - r).sum();
    let lambda = sxy / sxx;
    let ssr: f64 = returns
        .iter()
        .zip(rv)
        .map(|(y, x)| ((y - r) / x.sqrt() - lambda * x.sqrt()).powi(2))
        .sum();
    let s2 = ssr / (returns.len() - 1) as f64;
    Ok((lambda, (s2 / sxx).sqrt()))
}

/// Names of the estimated parameters, in table order.
pub fn free_parameter_names(variant: Variant) -> &'static [&'static str] {
    match variant {
        Variant::Harg => &["theta", "delta", "beta_d", "beta_w", "beta_m"],
        _ => &[
            "theta", "delta", "beta_d", "beta_w", "beta_m", "alpha_d", "alpha_w", "alpha_m", "gamma",
        ],
    }
}

fn free_values(p: &ModelParams) -> Vec<f64> {
    let mut v = vec![p.theta, p.delta, p.beta_d, p.beta_w, p.beta_m];
    if p.variant != Variant::Harg {
        v.extend([p.alpha_d, p.alpha_w, p.alpha_m, p.gamma]);
    }
    v
}

fn with_free_values(base: &ModelParams, v: &[f64]) -> ModelParams {
    let mut p = *base;
    p.theta = v[0];
    p.delta = v[1];
    p.beta_d = v[2];
    p.beta_w = v[3];
    p.beta_m = v[4];
    if p.variant != Variant::Harg {
        p.alpha_d = v[5];
        p.alpha_w = v[6];
        p.alpha_m = v[7];
        p.gamma = v[8];
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    pub loglik: f64,
    /// Robust standard errors aligned with [`free_parameter_names`].
    pub std_errors: Vec<f64>,
    pub lambda_se: f64,
    pub persistence: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

impl FitResult {
    pub fn std_error(&self, name: &str) -> Option<f64> {
        free_parameter_names(self.params.variant)
            .iter()
            .position(|n| *n == name)
            .map(|i| self.std_errors[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Starting point; a moment-based guess is used when absent.
    pub init: Option<ModelParams>,
    /// Fixes `lambda` instead of estimating it by regression.
    pub lambda: Option<f64>,
    pub loglik: LoglikOptions,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            init: None,
            lambda: None,
            loglik: LoglikOptions::default(),
            max_iter: 20_000,
        }
    }
}

fn default_start(variant: Variant, rv: &[f64], lambda: f64, r: f64) -> ModelParams {
    let mean = rv.iter().sum::<f64>() / rv.len() as f64;
    let delta = 1.5;
    let persistence = 0.8;
    let theta = (1.0 - persistence) * mean / delta;
    let beta = persistence / theta;
    let (alpha, gamma) = if variant == Variant::Harg {
        (0.0, 0.0)
    } else {
        (0.05, 1.0 / mean.sqrt())
    };
    ModelParams {
        variant,
        theta,
        delta,
        d: 0.0,
        beta_d: 0.4 * beta,
        beta_w: 0.35 * beta,
        beta_m: 0.2 * beta,
        alpha_d: alpha,
        alpha_w: alpha,
        alpha_m: alpha,
        gamma,
        lambda,
        r,
    }
}

// Optimizer coordinates: log for theta and delta, square-root for
// sign-constrained loadings, linear otherwise; all scaled to O(1).
struct Transform {
    scale: Vec<f64>,
    kind: Vec<Kind>,
}

#[derive(Clone, Copy)]
enum Kind {
    Log,
    Square,
    Linear,
}

impl Transform {
    fn new(start: &ModelParams) -> Transform {
        let v = free_values(start);
        let nonneg = start.variant != Variant::ZmLharg;
        let kind = (0..v.len())
            .map(|i| match i {
                0 | 1 => Kind::Log,
                8 => Kind::Linear,
                _ if nonneg => Kind::Square,
                _ => Kind::Linear,
            })
            .collect();
        let scale = v
            .iter()
            .enumerate()
            .map(|(i, x)| if i >= 5 && i < 8 { x.abs().max(1e-2) } else { x.abs().max(1.0) })
            .collect();
        Transform { scale, kind }
    }

    fn to_native(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.scale)
            .zip(&self.kind)
            .map(|((u, s), k)| match k {
                Kind::Log => s * u.exp(),
                Kind::Square => s * u * u,
                Kind::Linear => s * u,
            })
            .collect()
    }

    fn from_native(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.scale)
            .zip(&self.kind)
            .map(|((v, s), k)| match k {
                Kind::Log => (v / s).ln(),
                Kind::Square => (v / s).max(0.0).sqrt(),
                Kind::Linear => v / s,
            })
            .collect()
    }
}

/// Maximum-likelihood fit. `lambda` is estimated first by regression, the
/// innovations are filtered with it, and the RV dynamics are then fitted
/// by a simplex search followed by a quasi-Newton polish.
pub fn mle_fit(rv: &[f64], returns: &[f64], r: f64, variant: Variant, opts: &FitOptions) -> Result<FitResult> {
    if rv.len() != returns.len() {
        return Err(Error::LengthMismatch(rv.len(), returns.len()));
    }
    if rv.len() <= LAGS + 10 {
        return Err(Error::TooShort { needed: LAGS + 11, got: rv.len() });
    }
    let (lambda, lambda_se) = match opts.lambda {
        Some(l) => (l, f64::NAN),
        None => estimate_lambda(returns, rv, r)?,
    };
    let eps = filter_innovations(returns, rv, r, lambda)?;
    let start = match opts.init {
        Some(p) => {
            let mut p = p;
            if p.variant != variant {
                return Err(Error::InvalidParams("initial parameters are for another variant".into()));
            }
            p.lambda = lambda;
            p.r = r;
            p
        }
        None => default_start(variant, rv, lambda, r),
    };
    start.validate()?;
    let n_obs = rv.len() - LAGS;

    let tr = Transform::new(&start);
    let objective = |u: &[f64]| -> f64 {
        let p = with_free_values(&start, &tr.to_native(u));
        if !(stationarity_margin(&p) < 1.0) {
            return f64::INFINITY;
        }
        match loglik_with(&p, rv, &eps, &opts.loglik) {
            Ok(l) if l.is_finite() => -l / n_obs as f64,
            _ => f64::INFINITY,
        }
    };

    let u0 = tr.from_native(&free_values(&start));
    if !objective(&u0).is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite at the starting point".into()));
    }
    let mut best = nelder_mead(objective, &u0, 0.2, 1e-12, 1e-8, opts.max_iter);
    let mut iterations = best.iterations;
    // A restart guards against premature simplex collapse.
    let again = nelder_mead(objective, &best.x, 0.05, 1e-12, 1e-8, opts.max_iter);
    iterations += again.iterations;
    if again.value <= best.value {
        best = again;
    }
    let polish = bfgs(objective, &best.x, 1e-7, 500);
    iterations += polish.iterations;
    let nm_converged = best.converged;
    let (u_hat, converged) = if polish.value <= best.value {
        (polish.x, polish.converged || nm_converged)
    } else {
        (best.x, nm_converged)
    };

    let params = with_free_values(&start, &tr.to_native(&u_hat));
    let ll = loglik_with(&params, rv, &eps, &opts.loglik)?;
    let std_errors = sandwich_std_errors(&params, rv, &eps, &opts.loglik).unwrap_or_else(|_| {
        vec![f64::NAN; free_parameter_names(variant).len()]
    });
    Ok(FitResult {
        params,
        loglik: ll,
        std_errors,
        lambda_se,
        persistence: stationarity_margin(&params),
        converged,
        iterations,
        n_obs,
    })
}

// Floors for the scaling of parameters estimated at (or near) zero.
fn se_floor(i: usize) -> f64 {
    match i {
        0 => 1e-7,
        1 => 1e-2,
        2..=4 => 1e2,
        5..=7 => 1e-2,
        _ => 1.0,
    }
}

/// Relative step of the numerical Hessian and scores.
pub const SE_STEP: f64 = 1e-3;

/// Sandwich standard errors `H^-1 S H^-1` with a central-difference Hessian
/// and per-observation scores, both taken with relative step [`SE_STEP`].
pub fn sandwich_std_errors(params: &ModelParams, rv: &[f64], eps: &[f64], opts: &LoglikOptions) -> Result<Vec<f64>> {
    sandwich_std_errors_with_step(params, rv, eps, opts, SE_STEP)
}

pub fn sandwich_std_errors_with_step(
    params: &ModelParams,
    rv: &[f64],
    eps: &[f64],
    opts: &LoglikOptions,
    h: f64,
) -> Result<Vec<f64>> {
    let v0 = free_values(params);
    let n = v0.len();
    let scale: Vec<f64> = v0.iter().enumerate().map(|(i, x)| x.abs().max(se_floor(i))).collect();
    let at = |x: &[f64]| -> Result<Vec<f64>> {
        let v: Vec<f64> = v0.iter().zip(x).zip(&scale).map(|((v, x), s)| v + s * x).collect();
        loglik_contributions(&with_free_values(params, &v), rv, eps, opts)
    };
    let total = |x: &[f64]| -> Result<f64> { Ok(at(x)?.iter().sum()) };

    let zero = vec![0.0; n];
    let f0 = total(&zero)?;
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = zero.clone();
        x[i] = h;
        let cp = at(&x)?;
        x[i] = -h;
        let cm = at(&x)?;
        let (fp, fm): (f64, f64) = (cp.iter().sum(), cm.iter().sum());
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        plus.push(cp);
        minus.push(cm);
    }
    for i in 0..n {
        for j in 0..i {
            let mut x = zero.clone();
            let mut e = |si: f64, sj: f64| -> Result<f64> {
                x[i] = si * h;
                x[j] = sj * h;
                total(&x)
            };
            let v = (e(1.0, 1.0)? - e(1.0, -1.0)? - e(-1.0, 1.0)? + e(-1.0, -1.0)?) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let n_obs = plus[0].len();
    let mut scores = DMatrix::<f64>::zeros(n_obs, n);
    for i in 0..n {
        for t in 0..n_obs {
            scores[(t, i)] = (plus[i][t] - minus[i][t]) / (2.0 * h);
        }
    }
    let meat = scores.transpose() * &scores;
    let inv = hess
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Hessian".into()))?;
    let cov = &inv * meat * &inv;
    Ok((0..n).map(|i| scale[i] * cov[(i, i)].max(0.0).sqrt()).collect())
}

/// Likelihood-ratio test of a restricted model nested in an unrestricted
/// one. Returns the statistic and its chi-squared p-value.
pub fn likelihood_ratio(restricted: f64, unrestricted: f64, df: usize) -> Result<(f64, f64)> {
    let stat = (2.0 * (unrestricted - restricted)).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok((stat, 1.0 - chi.cdf(stat)))
}

/// Bracket of `nu1` for calibration: from halving the risk-neutral scale up
/// to a risk-neutral persistence of 0.995.
pub fn nu1_bracket(params: &ModelParams) -> Result<(f64, f64)> {
    let lambda = params.lambda;
    // Risk-neutral persistence at Y* = 0; it scales with 1 / (1 - theta Y*).
    let neutral = crate::model::risk_neutral_map(params, &RiskPremia::arbitrage_free(lambda, RiskPremia::neutral_nu1(lambda)))?;
    let p0 = stationarity_margin(&neutral);
    let ty_hi = (1.0 - p0 / 0.995).min(0.5);
    let ty_lo = -1.0;
    if ty_hi <= ty_lo {
        return Err(Error::CalibrationInfeasible { lo: f64::NAN, hi: f64::NAN });
    }
    let nu1 = |ty: f64| RiskPremia::neutral_nu1(lambda) - ty / params.theta;
    Ok((nu1(ty_hi), nu1(ty_lo)))
}

/// Model at-the-money implied volatility for `maturity_days` trading days.
pub fn model_atm_iv(params: &ModelParams, nu1: f64, maturity_days: usize, state: &MarketState, cfg: &CosConfig) -> Result<f64> {
    let (rate, tau) = (params.r * TRADING_DAYS, maturity_days as f64 / TRADING_DAYS);
    let premia = RiskPremia::arbitrage_free(params.lambda, nu1);
    let price = model_price(params, &premia, state, 1.0, 1.0, rate, tau, maturity_days, OptionType::Call, cfg)?;
    implied_vol(price, 1.0, 1.0, rate, tau, OptionType::Call)
}

/// Finds `nu1` such that the model at-the-money implied volatility at
/// `maturity_days` equals `target_iv`. The daily rate `params.r` is used
/// for discounting.
pub fn calibrate_nu1(
    params: &ModelParams,
    target_iv: f64,
    maturity_days: usize,
    state: &MarketState,
    cfg: &CosConfig,
) -> Result<f64> {
    if !(target_iv > 0.0 && target_iv < 0.7) {
        return Err(Error::InvalidParams(format!("target implied volatility {target_iv} outside (0, 0.7)")));
    }
    if maturity_days == 0 {
        return Err(Error::InvalidParams("maturity must be positive".into()));
    }
    params.validate()?;
    let (rate, tau) = (params.r * TRADING_DAYS, maturity_days as f64 / TRADING_DAYS);
    let target = bs_price(1.0, 1.0, rate, target_iv, tau, OptionType::Call);
    let premia = |nu1| RiskPremia::arbitrage_free(params.lambda, nu1);
    let price = |nu1: f64| model_price(params, &premia(nu1), state, 1.0, 1.0, rate, tau, maturity_days, OptionType::Call, cfg);

    let (lo, hi) = nu1_bracket(params)?;
    // Near the explosive end of the bracket the long-horizon transform can
    // leave its domain; pull such an endpoint back toward the neutral premium.
    let neutral = RiskPremia::neutral_nu1(params.lambda);
    let shrink = |mut end: f64| -> Result<(f64, f64)> {
        let mut last = None;
        for _ in 0..40 {
            match price(end) {
                Ok(p) => return Ok((end, p)),
                Err(e) => last = Some(e),
            }
            end = 0.5 * (end + neutral);
        }
        Err(last.expect("at least one attempt"))
    };
    let (lo, p_lo) = shrink(lo)?;
    let (hi, p_hi) = shrink(hi)?;
    let (f_lo, f_hi) = (p_lo - target, p_hi - target);
    if f_lo * f_hi > 0.0 {
        let iv = |p: f64| implied_vol(p, 1.0, 1.0, rate, tau, OptionType::Call).unwrap_or(f64::NAN);
        let (a, b) = (iv(p_lo), iv(p_hi));
        return Err(Error::CalibrationInfeasible { lo: a.min(b), hi: a.max(b) });
    }
    let mut failure = None;
    let root = brent(
        |nu1| match price(nu1) {
            Ok(p) => p - target,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        1e-10,
        200,
    );
    match (root, failure) {
        (Ok(nu1), _) => Ok(nu1),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e),
    }
}
