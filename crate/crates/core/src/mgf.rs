//! Backward coefficient recursions for the moment generating function of
//! cumulative log-returns.
//!
//! For a horizon of `T` days the conditional MGF is
//! `exp(A + sum_i B_i RV_{t+1-i} + sum_j C_j l_{t+1-j})` where the
//! coefficients are obtained from zero terminal values by `T` applications
//! of the one-day affine map. Under the risk-neutral measure the same map is
//! applied at shifted arguments and differenced against the pricing-kernel
//! normalization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{risk_neutral_map, MarketState, ModelParams, ParabolicModel, RiskPremia, LAGS};

/// `v(x, theta) = theta x / (1 - theta x)`.
pub fn v(x: Complex64, theta: f64) -> Result<Complex64> {
    let den = Complex64::new(1.0, 0.0) - x * theta;
    if den.norm() == 0.0 {
        return Err(Error::Pole);
    }
    Ok(x * theta / den)
}

/// `w(x, theta) = ln(1 - x theta)`, principal branch.
pub fn w(x: Complex64, theta: f64) -> Complex64 {
    (Complex64::new(1.0, 0.0) - x * theta).ln()
}

const SLOTS: usize = 1 + 2 * LAGS;

/// `A`, `B_1..B_22`, `C_1..C_22` stored flat; slot 0 is `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfCoefficients {
    coeffs: [Complex64; SLOTS],
    pub horizon_remaining: usize,
}

impl MgfCoefficients {
    pub fn terminal() -> MgfCoefficients {
        MgfCoefficients {
            coeffs: [Complex64::new(0.0, 0.0); SLOTS],
            horizon_remaining: 0,
        }
    }

    pub fn a(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// 1-based, as `B_{s,i}`.
    pub fn b(&self, i: usize) -> Complex64 {
        self.coeffs[i]
    }

    /// 1-based, as `C_{s,j}`.
    pub fn c(&self, j: usize) -> Complex64 {
        self.coeffs[LAGS + j]
    }

    pub fn b_all(&self) -> &[Complex64] {
        &self.coeffs[1..=LAGS]
    }

    pub fn c_all(&self) -> &[Complex64] {
        &self.coeffs[LAGS + 1..]
    }

    /// `A + sum B_i rv_{i-1} + sum C_j lev_{j-1}`; `lev` must be parabolic.
    pub fn exponent(&self, rv: &[f64; LAGS], lev: &[f64; LAGS]) -> Complex64 {
        let mut e = self.a();
        for i in 0..LAGS {
            e += self.coeffs[1 + i] * rv[i] + self.coeffs[1 + LAGS + i] * lev[i];
        }
        e
    }

    fn shift_add(&self, inc: &AffineStepResult, horizon_remaining: usize) -> MgfCoefficients {
        let mut out = [Complex64::new(0.0, 0.0); SLOTS];
        out[0] = self.coeffs[0] + inc.a_inc;
        for i in 0..LAGS {
            let (nb, nc) = if i + 1 < LAGS {
                (self.coeffs[2 + i], self.coeffs[LAGS + 2 + i])
            } else {
                (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
            };
            out[1 + i] = nb + inc.b_inc[i];
            out[1 + LAGS + i] = nc + inc.c_inc[i];
        }
        MgfCoefficients {
            coeffs: out,
            horizon_remaining,
        }
    }
}

/// Values of the one-day scalar functions `A(z, b, c)`, `B_i(z, b, c)`,
/// `C_j(z, b, c)` together with the exponent argument `x(z, b, c)`.
#[derive(Debug, Clone, Copy)]
pub struct AffineStepResult {
    pub x: Complex64,
    pub a_inc: Complex64,
    pub b_inc: [Complex64; LAGS],
    pub c_inc: [Complex64; LAGS],
}

impl AffineStepResult {
    fn minus(mut self, other: &AffineStepResult) -> AffineStepResult {
        self.a_inc -= other.a_inc;
        for i in 0..LAGS {
            self.b_inc[i] -= other.b_inc[i];
            self.c_inc[i] -= other.c_inc[i];
        }
        self
    }
}

fn right_half_plane(z: Complex64) -> bool {
    // |arg z| < pi/2
    z.re > 0.0 && z.is_finite()
}

/// `log E[exp(z y + b RV + c l) | F]` written as an affine function of the
/// lagged state:
///
/// `x = z lambda + b + (z^2/2 + gamma^2 c - 2 c gamma z) / (1 - 2c)`,
/// `A = z r - ln(1 - 2c)/2 - delta w(x) + d v(x)`, `B_i = v(x) beta_i`,
/// `C_j = v(x) alpha_j`.
pub fn affine_scalars(
    model: &ParabolicModel,
    z: Complex64,
    b: Complex64,
    c: Complex64,
) -> std::result::Result<AffineStepResult, String> {
    let one = Complex64::new(1.0, 0.0);
    let one_m_2c = one - c * 2.0;
    if !right_half_plane(one_m_2c) {
        return Err(format!("1 - 2C = {one_m_2c} outside the right half-plane"));
    }
    let g = model.gamma;
    let x = z * model.lambda + b + (z * z * 0.5 + c * (g * g) - c * z * (2.0 * g)) / one_m_2c;
    let one_m_tx = one - x * model.theta;
    if !right_half_plane(one_m_tx) {
        return Err(format!("1 - theta X = {one_m_tx} outside the right half-plane"));
    }
    let vx = x * model.theta / one_m_tx;
    let wx = one_m_tx.ln();
    let a_inc = z * model.r - one_m_2c.ln() * 0.5 - wx * model.delta + vx * model.d;
    let mut b_inc = [Complex64::new(0.0, 0.0); LAGS];
    let mut c_inc = [Complex64::new(0.0, 0.0); LAGS];
    for i in 0..LAGS {
        b_inc[i] = vx * model.weights.beta[i];
        c_inc[i] = vx * model.weights.alpha[i];
    }
    Ok(AffineStepResult { x, a_inc, b_inc, c_inc })
}

/// One backward step under the physical measure.
pub fn step_p(next: &MgfCoefficients, z: Complex64, model: &ParabolicModel) -> Result<MgfCoefficients> {
    let step = next.horizon_remaining + 1;
    let inc = affine_scalars(model, z, next.b(1), next.c(1))
        .map_err(|reason| Error::RecursionDomain { step, reason })?;
    Ok(next.shift_add(&inc, step))
}

/// Pricing-kernel normalization `A(-nu2, -nu1, 0)`, `B_i(..)`, `C_j(..)`.
fn kernel_scalars(model: &ParabolicModel, premia: &RiskPremia) -> Result<AffineStepResult> {
    let zero = Complex64::new(0.0, 0.0);
    affine_scalars(model, Complex64::new(-premia.nu2, 0.0), Complex64::new(-premia.nu1, 0.0), zero)
        .map_err(|reason| Error::RecursionDomain { step: 0, reason })
}

fn step_q_with(
    next: &MgfCoefficients,
    z: Complex64,
    model: &ParabolicModel,
    premia: &RiskPremia,
    kernel: &AffineStepResult,
) -> Result<MgfCoefficients> {
    let step = next.horizon_remaining + 1;
    let shifted = affine_scalars(model, z - premia.nu2, next.b(1) - premia.nu1, next.c(1))
        .map_err(|reason| Error::RecursionDomain { step, reason })?;
    Ok(next.shift_add(&shifted.minus(kernel), step))
}

/// One backward step under the risk-neutral measure, taken directly on the
/// physical parameters.
pub fn step_q(
    next: &MgfCoefficients,
    z: Complex64,
    model: &ParabolicModel,
    premia: &RiskPremia,
) -> Result<MgfCoefficients> {
    let kernel = kernel_scalars(model, premia)?;
    step_q_with(next, z, model, premia, &kernel)
}

pub fn coefficients_p(model: &ParabolicModel, z: Complex64, horizon: usize) -> Result<MgfCoefficients> {
    let mut c = MgfCoefficients::terminal();
    for _ in 0..horizon {
        c = step_p(&c, z, model)?;
    }
    Ok(c)
}

pub fn coefficients_q(
    model: &ParabolicModel,
    premia: &RiskPremia,
    z: Complex64,
    horizon: usize,
) -> Result<MgfCoefficients> {
    let kernel = kernel_scalars(model, premia)?;
    let mut c = MgfCoefficients::terminal();
    for _ in 0..horizon {
        c = step_q_with(&c, z, model, premia, &kernel)?;
    }
    Ok(c)
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least one day".into()));
    }
    Ok(())
}

/// Log of the physical MGF of `ln(S_{t+T}/S_t)`.
pub fn log_mgf_p(params: &ModelParams, state: &MarketState, z: Complex64, horizon: usize) -> Result<Complex64> {
    check_horizon(horizon)?;
    let model = params.parabolic();
    let c = coefficients_p(&model, z, horizon)?;
    Ok(c.exponent(&state.rv, &state.parabolic_leverage(params)))
}

pub fn mgf_p(params: &ModelParams, state: &MarketState, z: Complex64, horizon: usize) -> Result<Complex64> {
    Ok(log_mgf_p(params, state, z, horizon)?.exp())
}

/// Log of the risk-neutral MGF, by the direct tower-law recursion on the
/// physical parameters.
pub fn log_mgf_q_direct(
    params: &ModelParams,
    state: &MarketState,
    premia: &RiskPremia,
    z: Complex64,
    horizon: usize,
) -> Result<Complex64> {
    check_horizon(horizon)?;
    if !premia.is_arbitrage_free(params.lambda) {
        return Err(Error::NotArbitrageFree(premia.nu2 - params.lambda - 0.5));
    }
    let model = params.parabolic();
    let c = coefficients_q(&model, premia, z, horizon)?;
    Ok(c.exponent(&state.rv, &state.parabolic_leverage(params)))
}

pub fn mgf_q_direct(
    params: &ModelParams,
    state: &MarketState,
    premia: &RiskPremia,
    z: Complex64,
    horizon: usize,
) -> Result<Complex64> {
    Ok(log_mgf_q_direct(params, state, premia, z, horizon)?.exp())
}

/// Risk-neutral MGF as the physical recursion on the mapped parameters.
pub fn mgf_q_mapped(
    params: &ModelParams,
    state: &MarketState,
    premia: &RiskPremia,
    z: Complex64,
    horizon: usize,
) -> Result<Complex64> {
    let q = risk_neutral_map(params, premia)?;
    let qs = state.reexpress(params, &q);
    mgf_p(&q, &qs, z, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Physical,
    RiskNeutral(RiskPremia),
}

impl Measure {
    pub fn label(&self) -> &'static str {
        match self {
            Measure::Physical => "P",
            Measure::RiskNeutral(_) => "Q",
        }
    }
}

/// Log-MGF under the requested measure.
pub fn log_mgf(
    params: &ModelParams,
    state: &MarketState,
    measure: &Measure,
    z: Complex64,
    horizon: usize,
) -> Result<Complex64> {
    match measure {
        Measure::Physical => log_mgf_p(params, state, z, horizon),
        Measure::RiskNeutral(p) => log_mgf_q_direct(params, state, p, z, horizon),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulants {
    /// `kappa_1..kappa_4`.
    pub kappa: [f64; 4],
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Cumulants {
    pub fn from_kappa(kappa: [f64; 4]) -> Cumulants {
        Cumulants {
            kappa,
            mean: kappa[0],
            variance: kappa[1],
            skewness: kappa[2] / kappa[1].powf(1.5),
            excess_kurtosis: kappa[3] / (kappa[1] * kappa[1]),
        }
    }
}

// Fourth-order central stencils on offsets -3h..3h.
fn derivatives(f: &[f64; 7], h: f64) -> [f64; 4] {
    let [m3, m2, m1, f0, p1, p2, p3] = *f;
    [
        (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h),
        (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * h * h),
        (-p3 + 8.0 * p2 - 13.0 * p1 + 13.0 * m1 - 8.0 * m2 + m3) / (8.0 * h.powi(3)),
        (-p3 + 12.0 * p2 - 39.0 * p1 + 56.0 * f0 - 39.0 * m1 + 12.0 * m2 - m3) / (6.0 * h.powi(4)),
    ]
}

/// Relative step (in units of the return standard deviation) for the
/// third and fourth cumulants. A fourth difference amplifies round-off by
/// `h^-4`, so these orders need a much wider stencil than the mean and
/// variance; the results are flat for steps between 0.03 and 0.1.
const HIGH_ORDER_STEP: f64 = 0.05;

/// Cumulants of the `horizon`-day log-return from central differences of
/// the log-MGF at real arguments, with one Richardson extrapolation.
/// `kappa_1`, `kappa_2` use a step of `1e-3` standard deviations,
/// `kappa_3`, `kappa_4` a step of [`HIGH_ORDER_STEP`] (narrowed if the wider
/// stencil leaves the MGF domain).
pub fn cumulants(params: &ModelParams, state: &MarketState, horizon: usize, measure: &Measure) -> Result<Cumulants> {
    check_horizon(horizon)?;
    let mean_rv = state.rv.iter().sum::<f64>() / LAGS as f64;
    let var_guess = (horizon as f64 * mean_rv).max(1e-12);
    let scale = (1.0 / var_guess.sqrt()).max(1.0);

    let stencil = |h: f64| -> Result<[f64; 4]> {
        let mut f = [0.0; 7];
        for (k, slot) in f.iter_mut().enumerate() {
            let z = (k as f64 - 3.0) * h;
            let val = log_mgf(params, state, measure, Complex64::new(z, 0.0), horizon)?;
            if !val.re.is_finite() {
                return Err(Error::Numerical(format!("log-MGF not finite at z = {z}")));
            }
            *slot = val.re;
        }
        Ok(derivatives(&f, h))
    };
    let extrapolated = |h: f64| -> Result<[f64; 4]> {
        let coarse = stencil(h)?;
        let fine = stencil(h / 2.0)?;
        Ok(std::array::from_fn(|k| (16.0 * fine[k] - coarse[k]) / 15.0))
    };

    let low = extrapolated(1e-3 * scale).map_err(differentiation_failure)?;
    let mut c = HIGH_ORDER_STEP;
    let high = loop {
        match extrapolated(c * scale) {
            Ok(k) => break k,
            Err(_) if c > 2e-3 => c /= 2.0,
            Err(e) => return Err(differentiation_failure(e)),
        }
    };
    let kappa = [low[0], low[1], high[2], high[3]];
    if !(kappa[1] > 0.0) || kappa.iter().any(|k| !k.is_finite()) {
        return Err(Error::Numerical(format!("invalid cumulants {kappa:?}")));
    }
    Ok(Cumulants::from_kappa(kappa))
}

fn differentiation_failure(e: Error) -> Error {
    match e {
        Error::Numerical(_) => e,
        other => Error::Numerical(format!("differentiation failure: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn v_w_at_origin_and_pole() {
        assert_eq!(v(c(0.0, 0.0), 1e-5).unwrap(), c(0.0, 0.0));
        assert_eq!(w(c(0.0, 0.0), 1e-5), c(0.0, 0.0));
        let theta = 2f64.powi(-16);
        let vx = v(c(0.5 / theta, 0.0), theta).unwrap();
        assert!((vx - c(1.0, 0.0)).norm() < 1e-12);
        assert!(matches!(v(c(1.0 / theta, 0.0), theta), Err(Error::Pole)));
    }

    #[test]
    fn w_derivative_by_finite_differences() {
        let theta = 1.3e-5;
        for x in [c(1000.0, 200.0), c(-5000.0, 3.0), c(20.0, -4000.0)] {
            let h = 1e-2;
            let num = (w(x + h, theta) - w(x - h, theta)) / (2.0 * h);
            let exact = -theta / (c(1.0, 0.0) - x * theta);
            assert!((num - exact).norm() < 1e-8 * exact.norm().max(1e-12) + 1e-14);
        }
    }

    #[test]
    fn zero_argument_keeps_coefficients_at_zero() {
        let p = ModelParams::reference(Variant::ZmLharg).with_rate(0.0);
        let m = p.parabolic();
        let c1 = step_p(&MgfCoefficients::terminal(), c(0.0, 0.0), &m).unwrap();
        assert_eq!(c1.a(), c(0.0, 0.0));
        assert!(c1.b_all().iter().chain(c1.c_all()).all(|x| *x == c(0.0, 0.0)));
        assert_eq!(c1.horizon_remaining, 1);
    }

    #[test]
    fn harg_has_no_leverage_coefficients() {
        let p = ModelParams::reference(Variant::Harg);
        let co = coefficients_p(&p.parabolic(), c(0.3, 2.0), 30).unwrap();
        assert!(co.c_all().iter().all(|x| *x == c(0.0, 0.0)));
    }

    #[test]
    fn shift_structure() {
        let p = ModelParams::reference(Variant::PLharg);
        let m = p.parabolic();
        let z = c(0.7, -1.1);
        let prev = coefficients_p(&m, z, 5).unwrap();
        let next = step_p(&prev, z, &m).unwrap();
        let inc = affine_scalars(&m, z, prev.b(1), prev.c(1)).unwrap();
        let vx = v(inc.x, m.theta).unwrap();
        for i in 2..LAGS {
            let expect = prev.b(i + 1) + vx * m.weights.beta[i - 1];
            assert!((next.b(i) - expect).norm() < 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn normalization_and_martingale() {
        for var in [Variant::Harg, Variant::PLharg, Variant::ZmLharg] {
            let p = ModelParams::reference(var).with_rate(0.03 / 252.0);
            let s = MarketState::stationary(&p).unwrap();
            let prem = RiskPremia::arbitrage_free(p.lambda, ModelParams::reference_nu1(var));
            for t in [1, 5, 22, 63, 126, 252] {
                let m0 = mgf_p(&p, &s, c(0.0, 0.0), t).unwrap();
                assert!((m0 - c(1.0, 0.0)).norm() <= 1e-12);
                let m1 = mgf_q_direct(&p, &s, &prem, c(1.0, 0.0), t).unwrap();
                let growth = (p.r * t as f64).exp();
                assert!((m1 - growth).norm() / growth <= 1e-10, "{var} {t} {m1}");
            }
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let p = ModelParams::reference(Variant::ZmLharg);
        let s = MarketState::stationary(&p).unwrap();
        let z = c(0.4, 7.0);
        let a = mgf_p(&p, &s, z, 40).unwrap();
        let b = mgf_p(&p, &s, z.conj(), 40).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn harg_ignores_gamma() {
        let p = ModelParams::reference(Variant::Harg);
        let mut g = p;
        g.gamma = 321.0;
        let s = MarketState::stationary(&p).unwrap();
        let z = c(1.5, 3.0);
        assert_eq!(mgf_p(&p, &s, z, 63).unwrap(), mgf_p(&g, &s, z, 63).unwrap());
    }

    #[test]
    fn one_day_moments_match_noncentral_gamma() {
        // y = r + lambda RV + sqrt(RV) eps with RV ~ noncentral gamma:
        // E[RV] = theta (delta + Theta), Var[RV] = theta^2 (delta + 2 Theta).
        for var in [Variant::PLharg, Variant::ZmLharg] {
            let p = ModelParams::reference(var).with_rate(1e-4);
            let mut s = MarketState::stationary(&p).unwrap();
            s.rv[0] *= 1.7;
            s.lev[3] += 0.8;
            let th = crate::model::theta_noncentrality(&p, &crate::model::expand_weights(&p), &s);
            let e_rv = p.theta * (p.delta + th);
            let v_rv = p.theta * p.theta * (p.delta + 2.0 * th);
            let mean = p.r + p.lambda * e_rv;
            let var_y = p.lambda * p.lambda * v_rv + e_rv;
            let k = cumulants(&p, &s, 1, &Measure::Physical).unwrap();
            assert!((k.mean - mean).abs() < 1e-9 * mean.abs(), "{} vs {mean}", k.mean);
            assert!((k.variance - var_y).abs() < 1e-7 * var_y, "{} vs {var_y}", k.variance);

            // Higher orders: RV cumulants are theta^n (n-1)! (delta + n Theta);
            // compose with x(z) = lambda z + z^2 / 2.
            let krv = |n: i32, fact: f64| p.theta.powi(n) * fact * (p.delta + n as f64 * th);
            let (k1, k2, k3, k4) = (krv(1, 1.0), krv(2, 1.0), krv(3, 2.0), krv(4, 6.0));
            let l = p.lambda;
            let kappa3 = 6.0 * (k2 * l / 2.0 + k3 * l.powi(3) / 6.0);
            let kappa4 = 24.0 * (k2 / 8.0 + k3 * l * l / 4.0 + k4 * l.powi(4) / 24.0);
            assert!((k1 * l + p.r - mean).abs() < 1e-18);
            assert!((k.kappa[2] - kappa3).abs() < 1e-6 * kappa3.abs(), "{} vs {kappa3}", k.kappa[2]);
            assert!((k.kappa[3] - kappa4).abs() < 1e-6 * kappa4, "{} vs {kappa4}", k.kappa[3]);
        }
    }

    #[test]
    fn recursion_domain_error_reports_step() {
        let p = ModelParams::reference(Variant::ZmLharg);
        let s = MarketState::stationary(&p).unwrap();
        // A large real argument drives 1 - theta X through zero.
        let err = mgf_p(&p, &s, c(400.0, 0.0), 252).unwrap_err();
        assert!(matches!(err, Error::RecursionDomain { .. }), "{err}");
    }
}
