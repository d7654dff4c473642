//! Monte Carlo simulation of realized variance and log-return paths.
//!
//! Each path owns a ChaCha8 stream: the generator is seeded with the run
//! seed and the stream id is set to the path index, so any path can be
//! regenerated independently and results do not depend on how paths are
//! scheduled. Paths are processed in fixed-size chunks whose partial
//! results are merged in path order.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mgf::Measure;
use crate::model::{risk_neutral_map, MarketState, ModelParams, ParabolicModel, LAGS};

const CHUNK: usize = 1024;

/// Draws from the noncentral gamma law: `K ~ Poisson(big_theta)`, then
/// `Gamma(shape = delta + K, scale = theta)`.
pub fn sample_noncentral_gamma<R: Rng + ?Sized>(delta: f64, big_theta: f64, theta: f64, rng: &mut R) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain { what: "gamma shape", value: delta });
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain { what: "gamma scale", value: theta });
    }
    if !(big_theta >= 0.0) || !big_theta.is_finite() {
        return Err(Error::Domain { what: "noncentrality", value: big_theta });
    }
    Ok(draw_noncentral_gamma(delta, big_theta, theta, rng))
}

#[inline]
fn draw_noncentral_gamma<R: Rng + ?Sized>(delta: f64, big_theta: f64, theta: f64, rng: &mut R) -> f64 {
    let k = if big_theta > 0.0 {
        Poisson::new(big_theta).expect("validated mean").sample(rng)
    } else {
        0.0
    };
    Gamma::new(delta + k, theta).expect("validated shape").sample(rng)
}

/// Deterministic per-path generator.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Forward dynamics in reduced parabolic form, already mapped to the
/// simulation measure.
#[derive(Debug, Clone)]
pub struct PathEngine {
    model: ParabolicModel,
    rv0: [f64; LAGS],
    lev0: [f64; LAGS],
}

impl PathEngine {
    pub fn new(params: &ModelParams, state: &MarketState, measure: &Measure) -> Result<PathEngine> {
        params.validate()?;
        let model = match measure {
            Measure::Physical => params.parabolic(),
            Measure::RiskNeutral(premia) => risk_neutral_map(params, premia)?.parabolic(),
        };
        // Parabolic leverage is the same number under both measures.
        Ok(PathEngine {
            model,
            rv0: state.rv,
            lev0: state.parabolic_leverage(params),
        })
    }

    pub fn model(&self) -> &ParabolicModel {
        &self.model
    }

    /// Simulates one path into `rv_out` / `y_out` (and `eps_out` when given).
    /// Returns the number of days on which a negative noncentrality was
    /// clamped to zero.
    pub fn run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        rv_out: &mut [f64],
        y_out: &mut [f64],
        mut eps_out: Option<&mut [f64]>,
    ) -> u64 {
        let m = &self.model;
        let mut rv = self.rv0;
        let mut lev = self.lev0;
        let mut clamps = 0;
        for t in 0..rv_out.len() {
            let mut big_theta = m.noncentrality(&rv, &lev);
            if big_theta < 0.0 {
                big_theta = 0.0;
                clamps += 1;
            }
            let x = draw_noncentral_gamma(m.delta, big_theta, m.theta, rng);
            let eps: f64 = StandardNormal.sample(rng);
            let s = x.sqrt();
            rv_out[t] = x;
            y_out[t] = m.r + m.lambda * x + s * eps;
            if let Some(e) = eps_out.as_deref_mut() {
                e[t] = eps;
            }
            rv.copy_within(0..LAGS - 1, 1);
            lev.copy_within(0..LAGS - 1, 1);
            rv[0] = x;
            lev[0] = (eps - m.gamma * s).powi(2);
        }
        clamps
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub paths: u64,
    pub days: u64,
    pub clamp_count: u64,
}

impl SimStats {
    /// Clamped days per simulated path-day.
    pub fn clamp_rate(&self) -> f64 {
        self.clamp_count as f64 / (self.paths * self.days).max(1) as f64
    }
}

/// Streams `n_paths` simulated paths through `fold` without storing them.
/// `fold` receives the path index and the RV and log-return trajectories.
#[allow(clippy::too_many_arguments)]
pub fn simulate_fold<A, I, F, M>(
    params: &ModelParams,
    state: &MarketState,
    measure: &Measure,
    horizon: usize,
    n_paths: usize,
    seed: u64,
    init: I,
    fold: F,
    merge: M,
) -> Result<(A, SimStats)>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize, &[f64], &[f64]) + Sync,
    M: Fn(&mut A, A),
{
    if horizon == 0 || n_paths == 0 {
        return Err(Error::InvalidParams("horizon and path count must be positive".into()));
    }
    let engine = PathEngine::new(params, state, measure)?;
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<(A, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let mut clamps = 0;
            let mut rv = vec![0.0; horizon];
            let mut y = vec![0.0; horizon];
            for p in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                let mut rng = path_rng(seed, p as u64);
                clamps += engine.run(&mut rng, &mut rv, &mut y, None);
                fold(&mut acc, p, &rv, &y);
            }
            (acc, clamps)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut acc, mut clamps) = iter.next().expect("at least one chunk");
    for (a, c) in iter {
        merge(&mut acc, a);
        clamps += c;
    }
    Ok((
        acc,
        SimStats {
            paths: n_paths as u64,
            days: horizon as u64,
            clamp_count: clamps,
        },
    ))
}

/// Stored Monte Carlo output, `n_paths x horizon`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub n_paths: usize,
    pub horizon: usize,
    pub rv_paths: Vec<f64>,
    pub y_paths: Vec<f64>,
    pub rng_seed: u64,
    pub measure: Measure,
    pub clamp_count: u64,
}

impl PathSet {
    pub fn rv_path(&self, i: usize) -> &[f64] {
        &self.rv_paths[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn y_path(&self, i: usize) -> &[f64] {
        &self.y_paths[i * self.horizon..(i + 1) * self.horizon]
    }

    /// Cumulative log-return of every path over the full horizon.
    pub fn total_returns(&self) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.y_path(i).iter().sum()).collect()
    }

    /// Per-day cross-sectional summary.
    pub fn summary(&self) -> Vec<DaySummary> {
        let mut cum = vec![0.0; self.n_paths];
        let mut out = Vec::with_capacity(self.horizon);
        let mut col = vec![0.0; self.n_paths];
        for t in 0..self.horizon {
            let mut rv_stats = RunningStats::default();
            let mut y_stats = RunningStats::default();
            for i in 0..self.n_paths {
                let x = self.rv_paths[i * self.horizon + t];
                cum[i] += self.y_paths[i * self.horizon + t];
                rv_stats.push(x);
                y_stats.push(cum[i]);
                col[i] = x;
            }
            col.sort_by(|a, b| a.total_cmp(b));
            out.push(DaySummary {
                day: t + 1,
                rv_mean: rv_stats.mean(),
                rv_variance: rv_stats.variance(),
                rv_q05: quantile(&col, 0.05),
                rv_q50: quantile(&col, 0.5),
                rv_q95: quantile(&col, 0.95),
                cum_return_mean: y_stats.mean(),
                cum_return_variance: y_stats.variance(),
            });
        }
        out
    }

    const MAGIC: [u8; 4] = *b"LHRG";
    const VERSION: u32 = 1;

    /// Raw dump: 16-byte header (magic `LHRG`, version, n, T as little-endian
    /// u32) followed by the RV matrix and the log-return matrix as
    /// little-endian f64, row-major.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        let n = u32::try_from(self.n_paths).map_err(|_| Error::InvalidParams("too many paths".into()))?;
        let t = u32::try_from(self.horizon).map_err(|_| Error::InvalidParams("horizon too long".into()))?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
        for x in self.rv_paths.iter().chain(self.y_paths.iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the matrices back from [`PathSet::write_raw`] output. Returns
    /// `(n, T, rv, y)`.
    pub fn read_raw<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>, Vec<f64>)> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if header[0..4] != Self::MAGIC {
            return Err(Error::Parse { line: 0, msg: "bad magic".into() });
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        if word(4) != Self::VERSION {
            return Err(Error::Parse { line: 0, msg: format!("unsupported version {}", word(4)) });
        }
        let (n, t) = (word(8) as usize, word(12) as usize);
        let mut read_matrix = || -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * t * 8];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let rv = read_matrix()?;
        let y = read_matrix()?;
        Ok((n, t, rv, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaySummary {
    pub day: usize,
    pub rv_mean: f64,
    pub rv_variance: f64,
    pub rv_q05: f64,
    pub rv_q50: f64,
    pub rv_q95: f64,
    pub cum_return_mean: f64,
    pub cum_return_variance: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Simulates and stores `n_paths` paths.
pub fn simulate_paths(
    params: &ModelParams,
    state: &MarketState,
    horizon: usize,
    n_paths: usize,
    measure: &Measure,
    seed: u64,
) -> Result<PathSet> {
    let (rows, stats) = simulate_fold(
        params,
        state,
        measure,
        horizon,
        n_paths,
        seed,
        Vec::new,
        |acc: &mut Vec<(Vec<f64>, Vec<f64>)>, _, rv, y| acc.push((rv.to_vec(), y.to_vec())),
        |acc, other| acc.extend(other),
    )?;
    let mut rv_paths = Vec::with_capacity(n_paths * horizon);
    let mut y_paths = Vec::with_capacity(n_paths * horizon);
    for (rv, y) in rows {
        rv_paths.extend(rv);
        y_paths.extend(y);
    }
    Ok(PathSet {
        n_paths,
        horizon,
        rv_paths,
        y_paths,
        rng_seed: seed,
        measure: *measure,
        clamp_count: stats.clamp_count,
    })
}

/// One long physical-measure series `(rv, y, eps)` of `n_days`, after
/// discarding `burn_in` days started from `state`.
pub fn simulate_series(
    params: &ModelParams,
    state: &MarketState,
    n_days: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let engine = PathEngine::new(params, state, &Measure::Physical)?;
    let total = n_days + burn_in;
    let mut rv = vec![0.0; total];
    let mut y = vec![0.0; total];
    let mut eps = vec![0.0; total];
    let mut rng = path_rng(seed, 0);
    engine.run(&mut rng, &mut rv, &mut y, Some(&mut eps));
    Ok((rv.split_off(burn_in), y.split_off(burn_in), eps.split_off(burn_in)))
}

/// Default burn-in for stationary starts.
pub const BURN_IN_DAYS: usize = 1000;

/// Mean and variance accumulator that merges exactly across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &RunningStats) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Monte Carlo MGF estimate with separate standard errors for the real and
/// imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfEstimate {
    pub z: Complex64,
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

/// Streaming estimator of `E[exp(z Y_T)]` for several maturities and
/// arguments at once, where `Y_T` is the cumulative log-return to day `T`.
#[derive(Debug, Clone)]
pub struct MgfAccumulator {
    maturities: Vec<usize>,
    z_grid: Vec<Complex64>,
    re: Vec<RunningStats>,
    im: Vec<RunningStats>,
}

impl MgfAccumulator {
    pub fn new(maturities: &[usize], z_grid: &[Complex64]) -> MgfAccumulator {
        let n = maturities.len() * z_grid.len();
        MgfAccumulator {
            maturities: maturities.to_vec(),
            z_grid: z_grid.to_vec(),
            re: vec![RunningStats::default(); n],
            im: vec![RunningStats::default(); n],
        }
    }

    pub fn observe(&mut self, y: &[f64]) {
        let mut cum = 0.0;
        let mut day = 0;
        for (mi, &t) in self.maturities.iter().enumerate() {
            while day < t {
                cum += y[day];
                day += 1;
            }
            for (zi, z) in self.z_grid.iter().enumerate() {
                let e = (z * cum).exp();
                let k = mi * self.z_grid.len() + zi;
                self.re[k].push(e.re);
                self.im[k].push(e.im);
            }
        }
    }

    pub fn merge(&mut self, other: MgfAccumulator) {
        for (a, b) in self.re.iter_mut().zip(other.re.iter()) {
            a.merge(b);
        }
        for (a, b) in self.im.iter_mut().zip(other.im.iter()) {
            a.merge(b);
        }
    }

    pub fn estimate(&self, maturity_index: usize, z_index: usize) -> MgfEstimate {
        let k = maturity_index * self.z_grid.len() + z_index;
        MgfEstimate {
            z: self.z_grid[z_index],
            value: Complex64::new(self.re[k].mean(), self.im[k].mean()),
            se_re: self.re[k].std_error(),
            se_im: self.im[k].std_error(),
        }
    }

    pub fn maturities(&self) -> &[usize] {
        &self.maturities
    }

    pub fn z_grid(&self) -> &[Complex64] {
        &self.z_grid
    }
}

/// Sample mean and standard error of `exp(z sum_t y_t)` over the full horizon.
pub fn mc_mgf(paths: &PathSet, z_grid: &[Complex64]) -> Result<Vec<MgfEstimate>> {
    if paths.n_paths == 0 {
        return Err(Error::Empty);
    }
    let mut acc = MgfAccumulator::new(&[paths.horizon], z_grid);
    for i in 0..paths.n_paths {
        acc.observe(paths.y_path(i));
    }
    Ok((0..z_grid.len()).map(|k| acc.estimate(0, k)).collect())
}

/// Default maturities (trading days) of the MGF validation.
pub const CHECK_MATURITIES: [usize; 6] = [1, 5, 22, 63, 126, 252];

/// Default validation arguments: real `z` for the MGF and imaginary `iu`
/// for the characteristic function.
pub fn default_check_grid() -> Vec<Complex64> {
    let real = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0].map(|z| Complex64::new(z, 0.0));
    let imag = [1.0, 2.0, 5.0, 10.0, 20.0].map(|u| Complex64::new(0.0, u));
    real.into_iter().chain(imag).collect()
}

/// One point of an analytic-vs-simulated MGF comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfCheckRow {
    pub maturity: usize,
    pub analytic: Complex64,
    pub mc: MgfEstimate,
    /// `|analytic - mc| / se` for the real and imaginary parts; zero where
    /// the standard error vanishes and the values agree.
    pub dev_re: f64,
    pub dev_im: f64,
}

impl MgfCheckRow {
    pub fn max_dev(&self) -> f64 {
        self.dev_re.max(self.dev_im)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgfCheck {
    pub rows: Vec<MgfCheckRow>,
    pub stats: SimStats,
}

impl MgfCheck {
    /// Largest deviation over every row, in standard errors.
    pub fn max_dev(&self) -> f64 {
        self.rows.iter().map(MgfCheckRow::max_dev).fold(0.0, f64::max)
    }
}

fn deviation(a: f64, m: f64, se: f64) -> f64 {
    let d = (a - m).abs();
    if se > 0.0 {
        d / se
    } else if d <= 1e-12 * a.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares the analytic MGF with a streamed Monte Carlo estimate on every
/// `(maturity, z)` pair, without storing paths.
pub fn mgf_check(
    params: &ModelParams,
    state: &MarketState,
    measure: &Measure,
    maturities: &[usize],
    z_grid: &[Complex64],
    n_paths: usize,
    seed: u64,
) -> Result<MgfCheck> {
    let mut mats = maturities.to_vec();
    mats.sort_unstable();
    mats.dedup();
    let horizon = *mats.last().ok_or(Error::Empty)?;
    if z_grid.is_empty() {
        return Err(Error::Empty);
    }
    let (acc, stats) = simulate_fold(
        params,
        state,
        measure,
        horizon,
        n_paths,
        seed,
        || MgfAccumulator::new(&mats, z_grid),
        |acc, _, _, y| acc.observe(y),
        |acc, other| acc.merge(other),
    )?;
    let mut rows = Vec::with_capacity(mats.len() * z_grid.len());
    for (mi, &t) in mats.iter().enumerate() {
        for (zi, &z) in z_grid.iter().enumerate() {
            let analytic = crate::mgf::log_mgf(params, state, measure, z, t)?.exp();
            let mc = acc.estimate(mi, zi);
            rows.push(MgfCheckRow {
                maturity: t,
                analytic,
                mc,
                dev_re: deviation(analytic.re, mc.value.re, mc.se_re),
                dev_im: deviation(analytic.im, mc.value.im, mc.se_im),
            });
        }
    }
    Ok(MgfCheck { rows, stats })
}
