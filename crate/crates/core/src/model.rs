//! Model parameters, lag structure, market state and the measure change.
//!
//! Every model variant is stored in its native parameterization. The
//! recursions and the simulator work on [`ParabolicModel`], the common
//! reduced form in which the noncentrality is
//! `d + sum_i beta_i RV_{t+1-i} + sum_j alpha_j (eps_{t+1-j} - gamma sqrt(RV_{t+1-j}))^2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Number of daily lags spanned by the daily, weekly and monthly components.
pub const LAGS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No leverage.
    Harg,
    /// Parabolic leverage `(eps - gamma sqrt(RV))^2`.
    PLharg,
    /// Zero-mean leverage `eps^2 - 1 - 2 eps gamma sqrt(RV)`.
    ZmLharg,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Harg => "HARG",
            Variant::PLharg => "P-LHARG",
            Variant::ZmLharg => "ZM-LHARG",
        }
    }

    pub fn has_leverage(self) -> bool {
        !matches!(self, Variant::Harg)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "harg" => Ok(Variant::Harg),
            "p-lharg" | "plharg" | "p" => Ok(Variant::PLharg),
            "zm-lharg" | "zmlharg" | "zm" => Ok(Variant::ZmLharg),
            other => Err(Error::InvalidParams(format!("unknown variant '{other}'"))),
        }
    }
}

/// The LHARG parameter set in daily decimal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    /// Gamma scale.
    pub theta: f64,
    /// Gamma shape.
    pub delta: f64,
    /// Constant in the noncentrality.
    pub d: f64,
    pub beta_d: f64,
    pub beta_w: f64,
    pub beta_m: f64,
    pub alpha_d: f64,
    pub alpha_w: f64,
    pub alpha_m: f64,
    /// Leverage asymmetry.
    pub gamma: f64,
    /// Market price of risk.
    pub lambda: f64,
    /// Daily risk-free rate.
    pub r: f64,
}

impl ModelParams {
    /// Maximum-likelihood estimates on S&P 500 futures realized variance,
    /// 1990-2005, with `r = 0`.
    pub fn reference(variant: Variant) -> ModelParams {
        let lambda = 2.005;
        match variant {
            Variant::Harg => ModelParams {
                variant,
                theta: 1.149e-5,
                delta: 1.358,
                d: 0.0,
                beta_d: 3.959e4,
                beta_w: 2.451e4,
                beta_m: 1.012e4,
                alpha_d: 0.0,
                alpha_w: 0.0,
                alpha_m: 0.0,
                gamma: 0.0,
                lambda,
                r: 0.0,
            },
            Variant::PLharg => ModelParams {
                variant,
                theta: 1.068e-5,
                delta: 1.243,
                d: 0.0,
                beta_d: 2.429e4,
                beta_w: 2.317e4,
                beta_m: 1.322e4,
                alpha_d: 0.2376,
                alpha_w: 0.1194,
                alpha_m: 3.85e-6,
                gamma: 223.7,
                lambda,
                r: 0.0,
            },
            Variant::ZmLharg => ModelParams {
                variant,
                theta: 1.117e-5,
                delta: 1.78,
                d: 0.0,
                beta_d: 3.382e4,
                beta_w: 2.542e4,
                beta_m: 1.338e4,
                alpha_d: 0.3991,
                alpha_w: 0.3446,
                alpha_m: 0.4034,
                gamma: 134.8,
                lambda,
                r: 0.0,
            },
        }
    }

    /// Calibrated variance risk premium paired with [`ModelParams::reference`].
    pub fn reference_nu1(variant: Variant) -> f64 {
        match variant {
            Variant::Harg => -2794.0,
            Variant::PLharg => -3069.0,
            Variant::ZmLharg => -3375.0,
        }
    }

    pub fn with_rate(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.theta,
            self.delta,
            self.d,
            self.beta_d,
            self.beta_w,
            self.beta_m,
            self.alpha_d,
            self.alpha_w,
            self.alpha_m,
            self.gamma,
            self.lambda,
            self.r,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.theta <= 0.0 || self.delta <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "theta and delta must be positive (theta = {}, delta = {})",
                self.theta, self.delta
            )));
        }
        let alphas = [self.alpha_d, self.alpha_w, self.alpha_m];
        let betas = [self.beta_d, self.beta_w, self.beta_m];
        match self.variant {
            Variant::Harg => {
                if alphas.iter().any(|&a| a != 0.0) || self.d != 0.0 {
                    return Err(Error::InvalidParams(
                        "HARG has no leverage loadings and d = 0".into(),
                    ));
                }
            }
            Variant::PLharg => {
                if self.d != 0.0 {
                    return Err(Error::InvalidParams("P-LHARG requires d = 0".into()));
                }
                if alphas.iter().chain(betas.iter()).any(|&x| x < 0.0) {
                    return Err(Error::InvalidParams(
                        "P-LHARG requires non-negative alpha and beta loadings".into(),
                    ));
                }
            }
            Variant::ZmLharg => {}
        }
        Ok(())
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta_d + self.beta_w + self.beta_m
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha_d + self.alpha_w + self.alpha_m
    }

    /// Reduced parabolic form shared by the recursions and the simulator.
    ///
    /// For ZM-LHARG, `d -> d - sum(alpha)` and `beta_l -> beta_l - alpha_l gamma^2`.
    pub fn parabolic(&self) -> ParabolicModel {
        let (d, bd, bw, bm) = match self.variant {
            Variant::ZmLharg => {
                let g2 = self.gamma * self.gamma;
                (
                    self.d - self.alpha_sum(),
                    self.beta_d - self.alpha_d * g2,
                    self.beta_w - self.alpha_w * g2,
                    self.beta_m - self.alpha_m * g2,
                )
            }
            _ => (self.d, self.beta_d, self.beta_w, self.beta_m),
        };
        ParabolicModel {
            theta: self.theta,
            delta: self.delta,
            d,
            weights: LagWeights::from_components([bd, bw, bm], [self.alpha_d, self.alpha_w, self.alpha_m]),
            gamma: self.gamma,
            lambda: self.lambda,
            r: self.r,
        }
    }
}

/// Per-lag loadings. Index 0 is lag 1 (today).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagWeights {
    pub beta: [f64; LAGS],
    pub alpha: [f64; LAGS],
}

impl LagWeights {
    pub fn from_components(beta: [f64; 3], alpha: [f64; 3]) -> LagWeights {
        LagWeights {
            beta: spread(beta),
            alpha: spread(alpha),
        }
    }
}

fn spread([daily, weekly, monthly]: [f64; 3]) -> [f64; LAGS] {
    let mut out = [monthly / 17.0; LAGS];
    out[0] = daily;
    for w in &mut out[1..5] {
        *w = weekly / 4.0;
    }
    out
}

/// 22-lag expansion of the daily, weekly (4-day) and monthly (17-day) loadings.
pub fn expand_weights(params: &ModelParams) -> LagWeights {
    LagWeights::from_components(
        [params.beta_d, params.beta_w, params.beta_m],
        [params.alpha_d, params.alpha_w, params.alpha_m],
    )
}

/// The reduced model actually fed to the gamma noncentrality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicModel {
    pub theta: f64,
    pub delta: f64,
    pub d: f64,
    pub weights: LagWeights,
    pub gamma: f64,
    pub lambda: f64,
    pub r: f64,
}

impl ParabolicModel {
    pub fn persistence(&self) -> f64 {
        let b: f64 = self.weights.beta.iter().sum();
        let a: f64 = self.weights.alpha.iter().sum();
        self.theta * (b + self.gamma * self.gamma * a)
    }

    /// Noncentrality from realized variances and parabolic leverages.
    #[inline]
    pub fn noncentrality(&self, rv: &[f64; LAGS], lev: &[f64; LAGS]) -> f64 {
        let mut acc = self.d;
        for i in 0..LAGS {
            acc += self.weights.beta[i] * rv[i] + self.weights.alpha[i] * lev[i];
        }
        acc
    }
}

/// Leverage value for one day.
///
/// Parabolic (HARG, P-LHARG): `(eps - gamma sqrt(rv))^2`.
/// Zero-mean (ZM-LHARG): `eps^2 - 1 - 2 eps gamma sqrt(rv)`.
pub fn leverage(eps: f64, rv: f64, gamma: f64, variant: Variant) -> Result<f64> {
    if !(rv >= 0.0) {
        return Err(Error::Domain {
            what: "realized variance",
            value: rv,
        });
    }
    let s = rv.sqrt();
    Ok(match variant {
        Variant::ZmLharg => eps * eps - 1.0 - 2.0 * eps * gamma * s,
        _ => (eps - gamma * s).powi(2),
    })
}

/// The 22 most recent realized variances and leverages, index 0 = today.
///
/// Leverages follow the convention of the variant they are used with:
/// parabolic for HARG and P-LHARG, zero-mean for ZM-LHARG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub rv: [f64; LAGS],
    pub lev: [f64; LAGS],
}

impl MarketState {
    pub fn new(rv: &[f64], lev: &[f64]) -> Result<MarketState> {
        if rv.len() != LAGS {
            return Err(Error::StateLength(rv.len()));
        }
        if lev.len() != LAGS {
            return Err(Error::StateLength(lev.len()));
        }
        if let Some(&bad) = rv.iter().find(|&&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain {
                what: "realized variance",
                value: bad,
            });
        }
        if let Some(&bad) = lev.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain {
                what: "leverage",
                value: bad,
            });
        }
        let mut state = MarketState {
            rv: [0.0; LAGS],
            lev: [0.0; LAGS],
        };
        state.rv.copy_from_slice(rv);
        state.lev.copy_from_slice(lev);
        Ok(state)
    }

    /// Builds the state at the end of a history. The last element of each
    /// slice is today; only the final 22 observations are used.
    pub fn from_history(rv: &[f64], eps: &[f64], params: &ModelParams) -> Result<MarketState> {
        if rv.len() != eps.len() {
            return Err(Error::LengthMismatch(rv.len(), eps.len()));
        }
        if rv.len() < LAGS {
            return Err(Error::StateLength(rv.len()));
        }
        let n = rv.len();
        let mut r = [0.0; LAGS];
        let mut l = [0.0; LAGS];
        for i in 0..LAGS {
            r[i] = rv[n - 1 - i];
            l[i] = leverage(eps[n - 1 - i], r[i], params.gamma, params.variant)?;
        }
        MarketState::new(&r, &l)
    }

    /// Unconditional-mean state: every RV lag at the stationary mean and
    /// every leverage lag at its unconditional expectation.
    pub fn stationary(params: &ModelParams) -> Result<MarketState> {
        let mean = stationary_mean_rv(params)?;
        let parabolic_lev = 1.0 + params.gamma * params.gamma * mean;
        let lev = match params.variant {
            Variant::ZmLharg => 0.0,
            _ => parabolic_lev,
        };
        MarketState::new(&[mean; LAGS], &[lev; LAGS])
    }

    /// Leverages converted to the parabolic convention `(eps - gamma sqrt(rv))^2`.
    pub fn parabolic_leverage(&self, params: &ModelParams) -> [f64; LAGS] {
        match params.variant {
            Variant::ZmLharg => {
                let g2 = params.gamma * params.gamma;
                let mut out = self.lev;
                for (l, rv) in out.iter_mut().zip(self.rv.iter()) {
                    *l += 1.0 + g2 * rv;
                }
                out
            }
            _ => self.lev,
        }
    }

    /// Re-expresses the leverages of a state written for `from` in the
    /// convention of `to`. Parabolic leverage is the invariant quantity.
    pub fn reexpress(&self, from: &ModelParams, to: &ModelParams) -> MarketState {
        let mut lev = self.parabolic_leverage(from);
        if to.variant == Variant::ZmLharg {
            let g2 = to.gamma * to.gamma;
            for (l, rv) in lev.iter_mut().zip(self.rv.iter()) {
                *l -= 1.0 + g2 * rv;
            }
        }
        MarketState { rv: self.rv, lev }
    }
}

/// Unconditional mean of RV, from `E[RV] = theta (delta + E[Theta])` with
/// `E[(eps - gamma sqrt(RV))^2] = 1 + gamma^2 E[RV]`.
pub fn stationary_mean_rv(params: &ModelParams) -> Result<f64> {
    let pm = params.parabolic();
    let persistence = pm.persistence();
    if persistence >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "no stationary mean: persistence {persistence} >= 1"
        )));
    }
    let a: f64 = pm.weights.alpha.iter().sum();
    let mean = pm.theta * (pm.delta + pm.d + a) / (1.0 - persistence);
    if mean < 0.0 {
        return Err(Error::InvalidParams(format!("negative stationary mean {mean}")));
    }
    Ok(mean)
}

/// Noncentrality of the conditional gamma law in the native parameterization.
/// May be negative for ZM-LHARG.
pub fn theta_noncentrality(params: &ModelParams, weights: &LagWeights, state: &MarketState) -> f64 {
    let mut acc = params.d;
    for i in 0..LAGS {
        acc += weights.beta[i] * state.rv[i] + weights.alpha[i] * state.lev[i];
    }
    acc
}

/// Equity risk premium implied by the no-arbitrage restriction.
pub fn no_arbitrage_nu2(lambda: f64) -> f64 {
    lambda + 0.5
}

/// Variance (`nu1`) and equity (`nu2`) risk premia of the exponential-affine
/// pricing kernel, together with the scalar `Y*` used by the measure change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPremia {
    pub nu1: f64,
    pub nu2: f64,
    pub y_star: f64,
}

impl RiskPremia {
    pub fn arbitrage_free(lambda: f64, nu1: f64) -> RiskPremia {
        RiskPremia {
            nu1,
            nu2: no_arbitrage_nu2(lambda),
            y_star: -lambda * lambda / 2.0 - nu1 + 0.125,
        }
    }

    /// General premia; `y_star = -nu2 lambda - nu1 + nu2^2 / 2`.
    pub fn new(lambda: f64, nu1: f64, nu2: f64) -> RiskPremia {
        RiskPremia {
            nu1,
            nu2,
            y_star: -nu2 * lambda - nu1 + 0.5 * nu2 * nu2,
        }
    }

    pub fn is_arbitrage_free(&self, lambda: f64) -> bool {
        self.nu2 - lambda - 0.5 == 0.0
    }

    /// The `nu1` that makes `Y* = 0`, the fixed point of the measure change.
    pub fn neutral_nu1(lambda: f64) -> f64 {
        0.125 - lambda * lambda / 2.0
    }
}

/// Physical-to-risk-neutral parameter map.
///
/// Scale-type parameters are divided by `1 - theta Y*`, `gamma -> gamma +
/// lambda + 1/2`, `lambda -> -1/2`. For ZM-LHARG the map is applied to the
/// reduced parabolic form and the result re-expressed natively, so the
/// returned `beta` loadings pick up `alpha* (gamma*^2 - gamma^2)`.
pub fn risk_neutral_map(params: &ModelParams, premia: &RiskPremia) -> Result<ModelParams> {
    params.validate()?;
    if !premia.is_arbitrage_free(params.lambda) {
        return Err(Error::NotArbitrageFree(premia.nu2 - params.lambda - 0.5));
    }
    let ty = params.theta * premia.y_star;
    if !(ty < 1.0) {
        return Err(Error::MappingSingular(ty));
    }
    let s = 1.0 / (1.0 - ty);
    let gamma_q = params.gamma + params.lambda + 0.5;
    let mut q = *params;
    q.theta = params.theta * s;
    q.d = params.d * s;
    q.alpha_d = params.alpha_d * s;
    q.alpha_w = params.alpha_w * s;
    q.alpha_m = params.alpha_m * s;
    q.gamma = gamma_q;
    q.lambda = -0.5;
    match params.variant {
        Variant::ZmLharg => {
            let shift = gamma_q * gamma_q - params.gamma * params.gamma;
            q.beta_d = params.beta_d * s + q.alpha_d * shift;
            q.beta_w = params.beta_w * s + q.alpha_w * shift;
            q.beta_m = params.beta_m * s + q.alpha_m * shift;
        }
        _ => {
            q.beta_d = params.beta_d * s;
            q.beta_w = params.beta_w * s;
            q.beta_m = params.beta_m * s;
        }
    }
    Ok(q)
}

/// Persistence `theta (sum beta + gamma^2 sum alpha)` of the reduced form.
/// The RV process is stationary when this is below one.
pub fn stationarity_margin(params: &ModelParams) -> f64 {
    params.parabolic().persistence()
}

/// Componentwise non-negativity of the constant and every lag loading in
/// the reduced form.
pub fn check_positivity(params: &ModelParams) -> bool {
    let pm = params.parabolic();
    pm.d >= 0.0
        && pm.weights.beta.iter().all(|&b| b >= 0.0)
        && pm.weights.alpha.iter().all(|&a| a >= 0.0)
}

/// Recovers standardized innovations from log-returns:
/// `eps_t = (y_t - r - lambda RV_t) / sqrt(RV_t)`.
pub fn filter_innovations(returns: &[f64], rv: &[f64], r: f64, lambda: f64) -> Result<Vec<f64>> {
    if returns.len() != rv.len() {
        return Err(Error::LengthMismatch(returns.len(), rv.len()));
    }
    returns
        .iter()
        .zip(rv)
        .enumerate()
        .map(|(t, (&y, &v))| {
            if !(v > 0.0) {
                return Err(Error::DegenerateVariance(t));
            }
            Ok((y - r - lambda * v) / v.sqrt())
        })
        .collect()
}

/// Log-returns `r + lambda RV_t + sqrt(RV_t) eps_t`.
pub fn returns_from_innovations(eps: &[f64], rv: &[f64], r: f64, lambda: f64) -> Vec<f64> {
    eps.iter()
        .zip(rv)
        .map(|(&e, &v)| r + lambda * v + v.sqrt() * e)
        .collect()
}

/// Leverage-induced conditional covariance of today's return with
/// tomorrow's RV, `-2 theta^2 alpha_d gamma (delta + Theta)`.
///
/// This is the full covariance when `lambda = 0`; otherwise the drift term
/// `lambda RV` adds `lambda theta (beta_d + alpha_d gamma^2) Var(RV)`.
pub fn conditional_covariance(params: &ModelParams, state: &MarketState) -> f64 {
    let w = expand_weights(params);
    let big_theta = theta_noncentrality(params, &w, state);
    -2.0 * params.theta * params.theta * params.alpha_d * params.gamma * (params.delta + big_theta)
}
