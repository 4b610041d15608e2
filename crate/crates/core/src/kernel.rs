//! The continuum circle kernel, the line kernel and the identities in law
//! they satisfy.
//!
//! Every integral against `ds / M_s^2` is a trapezoid sum on the path grid.
//! Functions on the circle are sampled on the same grid; integrals against
//! them use trapezoid point weights. With these two discrete measures the
//! double-integral and single-integral forms of the quadratic form agree
//! exactly, and the discrete operator in [`operator_residual`] is the exact
//! inverse of [`apply_kernel`] at interior nodes.

use crate::error::{invalid, Error, Result};
use crate::stats::{ks_one_sample, mean_var, TestReport};
use crate::stochastic::{
    inverse_gamma_half_cdf_total, par_replicas, sample_brownian_path, PathKind, RngStream, SampledPath,
};

fn inverse_square_cumulative(gbm: &SampledPath) -> Vec<f64> {
    let h = gbm.step;
    let mut out = Vec::with_capacity(gbm.len());
    out.push(0.0);
    for w in gbm.values.windows(2) {
        let last = *out.last().unwrap();
        out.push(last + 0.5 * h * (1.0 / (w[0] * w[0]) + 1.0 / (w[1] * w[1])));
    }
    out
}

fn require_gbm(path: &SampledPath) -> Result<()> {
    if path.kind != PathKind::Gbm {
        return Err(Error::WrongPathKind { expected: "gbm" });
    }
    Ok(())
}

/// Step that splits `[-half, half]` into an even number of cells, so that 0
/// is a grid point.
fn symmetric_step(half: f64, step: f64) -> f64 {
    let cells = 2.0 * (half / step - 1e-9).ceil().max(1.0);
    2.0 * half / cells
}

/// Geometric path on `[-half, half]` with `M_0 = 1` at a grid point.
pub fn sample_symmetric_gbm(half: f64, step: f64, s: &mut RngStream) -> Result<SampledPath> {
    if !(half > 0.0 && step > 0.0) {
        return Err(invalid("need a positive half-width and step"));
    }
    let b = sample_brownian_path(-half, half, symmetric_step(half, step), s)?;
    crate::stochastic::gbm_from_brownian(&b)
}

/// Trapezoid point weights of a grid with `len` points.
fn point_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; len];
    w[0] = 0.5 * h;
    w[len - 1] = 0.5 * h;
    w
}

/// The kernel on `[-lambda, lambda]` built from one geometric path.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleKernel {
    pub lambda: f64,
    pub gbm: SampledPath,
    /// `int_{-lambda}^{t_k} ds / M_s^2` on the grid.
    pub inv_sq_cum: Vec<f64>,
}

impl CircleKernel {
    pub fn from_gbm(gbm: SampledPath) -> Result<Self> {
        require_gbm(&gbm)?;
        if gbm.len() < 3 {
            return Err(invalid("kernel path needs at least 3 grid points"));
        }
        let lambda = gbm.t_end();
        if (gbm.t0 + lambda).abs() > 1e-9 * lambda.max(1.0) {
            return Err(invalid("kernel path must span a symmetric interval [-lambda, lambda]"));
        }
        let (left, right) = (gbm.values[0], *gbm.values.last().unwrap());
        if (right - left).abs() < 1e-12 * left.max(right) {
            return Err(Error::DegeneratePath);
        }
        let inv_sq_cum = inverse_square_cumulative(&gbm);
        Ok(Self {
            lambda,
            gbm,
            inv_sq_cum,
        })
    }

    /// Kernel on a freshly sampled path.
    pub fn sample(lambda: f64, step: f64, s: &mut RngStream) -> Result<Self> {
        Self::from_gbm(sample_symmetric_gbm(lambda, step, s)?)
    }

    pub fn len(&self) -> usize {
        self.gbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gbm.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.gbm.step
    }

    pub fn time(&self, k: usize) -> f64 {
        self.gbm.time(k)
    }

    fn m_left(&self) -> f64 {
        self.gbm.values[0]
    }

    fn m_right(&self) -> f64 {
        *self.gbm.values.last().unwrap()
    }

    fn total(&self) -> f64 {
        *self.inv_sq_cum.last().unwrap()
    }

    /// `M_lambda - M_{-lambda}`.
    fn gap(&self) -> f64 {
        self.m_right() - self.m_left()
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let l = self.lambda;
        if !(t >= -l - 1e-12 && t <= l + 1e-12) {
            return Err(Error::OutOfRange {
                value: t,
                lo: -l,
                hi: l,
            });
        }
        Ok(())
    }

    fn interp(&self, values: &[f64], t: f64) -> f64 {
        let x = ((t - self.gbm.t0) / self.gbm.step).clamp(0.0, (values.len() - 1) as f64);
        let k = (x.floor() as usize).min(values.len() - 2);
        let w = x - k as f64;
        values[k] * (1.0 - w) + values[k + 1] * w
    }

    fn kernel_from(&self, m_lo: f64, i_lo: f64, m_hi: f64, i_hi: f64) -> f64 {
        let (ml, mr) = (self.m_left(), self.m_right());
        let bracket = mr * mr * (self.total() - i_hi) + mr * ml * (i_hi - i_lo) + ml * ml * i_lo;
        m_lo * m_hi * bracket / (self.gap() * self.gap())
    }

    /// Kernel between grid nodes `k` and `l`.
    pub fn eval_nodes(&self, k: usize, l: usize) -> f64 {
        let (a, b) = if k <= l { (k, l) } else { (l, k) };
        let m = &self.gbm.values;
        self.kernel_from(m[a], self.inv_sq_cum[a], m[b], self.inv_sq_cum[b])
    }

    /// Grid samples of a function.
    pub fn sample_fn(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.time(k))).collect()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: f.len(),
            });
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(invalid("sampled function must be finite"));
        }
        Ok(())
    }

    /// `w_k f_k M_k` with trapezoid weights `w_k`.
    fn weighted(&self, f: &[f64]) -> Vec<f64> {
        point_weights(self.len(), self.step())
            .iter()
            .zip(f)
            .zip(&self.gbm.values)
            .map(|((w, f), m)| w * f * m)
            .collect()
    }
}

/// Kernel value at `(t, t2)`; off-grid arguments interpolate `M` and the
/// cumulative integral linearly.
pub fn kernel_eval(k: &CircleKernel, t: f64, t2: f64) -> Result<f64> {
    k.check_range(t)?;
    k.check_range(t2)?;
    let (lo, hi) = if t <= t2 { (t, t2) } else { (t2, t) };
    Ok(k.kernel_from(
        k.interp(&k.gbm.values, lo),
        k.interp(&k.inv_sq_cum, lo),
        k.interp(&k.gbm.values, hi),
        k.interp(&k.inv_sq_cum, hi),
    ))
}

/// Quadratic form `int int f G f` via the single-integral representation
/// `(M_lambda - M_{-lambda})^{-2} int M_u^{-2} (M_{-lambda} int_u^lambda fM + M_lambda int_{-lambda}^u fM)^2 du`.
pub fn quadratic_form(k: &CircleKernel, f: &[f64]) -> Result<f64> {
    k.check_len(f)?;
    let weighted = k.weighted(f);
    let mut right: f64 = weighted.iter().sum();
    let mut left = 0.0;
    let (ml, mr) = (k.m_left(), k.m_right());
    let mut acc = 0.0;
    for (x, cum) in weighted.iter().zip(k.inv_sq_cum.windows(2)) {
        left += x;
        right -= x;
        acc += (cum[1] - cum[0]) * (ml * right + mr * left).powi(2);
    }
    Ok(acc / (k.gap() * k.gap()))
}

/// Quadratic form by the direct double sum `sum_k sum_l w_k w_l f_k f_l G(t_k, t_l)`.
///
/// Costs `O(N^2)`; used to cross-check [`quadratic_form`].
pub fn quadratic_form_double(k: &CircleKernel, f: &[f64]) -> Result<f64> {
    k.check_len(f)?;
    let w = point_weights(k.len(), k.step());
    let mut acc = 0.0;
    for a in 0..k.len() {
        let mut row = 0.0;
        for b in 0..k.len() {
            row += w[b] * f[b] * k.eval_nodes(a, b);
        }
        acc += w[a] * f[a] * row;
    }
    Ok(acc)
}

/// `g = G f` on the grid, in `O(N)` through prefix sums.
pub fn apply_kernel(k: &CircleKernel, f: &[f64]) -> Result<Vec<f64>> {
    k.check_len(f)?;
    let n = k.len();
    let weighted = k.weighted(f);
    let (ml, mr) = (k.m_left(), k.m_right());
    let cross = mr * ml;
    let total = k.total();
    let (mut a, mut b) = (0.0, 0.0);
    let mut c: f64 = weighted.iter().sum();
    let mut d: f64 = weighted.iter().zip(&k.inv_sq_cum).map(|(x, i)| x * i).sum();
    let norm = k.gap() * k.gap();
    let mut g = Vec::with_capacity(n);
    for ((&x, &i_j), &m_j) in weighted.iter().zip(&k.inv_sq_cum).zip(&k.gbm.values) {
        a += x;
        b += x * i_j;
        c -= x;
        d -= x * i_j;
        // Nodes at or left of j, then nodes right of j.
        let left = (mr * mr * (total - i_j) + cross * i_j) * a + (ml * ml - cross) * b;
        let right = mr * mr * total * c + (cross - mr * mr) * d + (ml * ml - cross) * i_j * c;
        g.push(m_j * (left + right) / norm);
    }
    Ok(g)
}

/// `M^2 (g/M)'` on each cell, as the difference quotient of `g/M` with
/// respect to the clock `int ds / M^2`.
pub fn flux(k: &CircleKernel, g: &[f64]) -> Result<Vec<f64>> {
    k.check_len(g)?;
    let m = &k.gbm.values;
    Ok((0..k.len() - 1)
        .map(|j| (g[j + 1] / m[j + 1] - g[j] / m[j]) / (k.inv_sq_cum[j + 1] - k.inv_sq_cum[j]))
        .collect())
}

/// Closed form of `M^2 (Gf/M)'` at the midpoint of each cell:
/// `-(M_lambda int_{-lambda}^x fM + M_{-lambda} int_x^lambda fM) / (M_lambda - M_{-lambda})`.
pub fn flux_closed_form(k: &CircleKernel, f: &[f64]) -> Result<Vec<f64>> {
    k.check_len(f)?;
    let m = &k.gbm.values;
    let h = k.step();
    let fm: Vec<f64> = f.iter().zip(m).map(|(f, m)| f * m).collect();
    let total: f64 = fm.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    let (ml, mr) = (k.m_left(), k.m_right());
    let mut left = 0.0;
    let mut out = Vec::with_capacity(k.len() - 1);
    for j in 0..k.len() - 1 {
        let half = 0.25 * h * (fm[j] + 0.5 * (fm[j] + fm[j + 1]));
        let to_mid = left + half;
        out.push(-(mr * to_mid + ml * (total - to_mid)) / k.gap());
        left += 0.5 * h * (fm[j] + fm[j + 1]);
    }
    Ok(out)
}

/// The two sides of the twisted boundary condition,
/// `M_{-lambda} (g/M)'(-lambda)` and `M_lambda (g/M)'(lambda)`, from one-sided
/// difference quotients.
pub fn twisted_boundary_sides(k: &CircleKernel, g: &[f64]) -> Result<(f64, f64)> {
    let q = flux(k, g)?;
    Ok((q[0] / k.m_left(), q[q.len() - 1] / k.m_right()))
}

/// Relative L2 norm of `H G f - f` over interior nodes, with
/// `H g = -(1/M)(M^2 (g/M)')'` applied by differences.
pub fn operator_residual(k: &CircleKernel, f: &[f64]) -> Result<f64> {
    let g = apply_kernel(k, f)?;
    let q = flux(k, &g)?;
    let h = k.step();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..k.len() - 1 {
        let hg = -(q[j] - q[j - 1]) / (h * k.gbm.values[j]);
        num += (hg - f[j]).powi(2);
        den += f[j] * f[j];
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// The kernel on the line, with the lower limit `-inf` truncated to `-S`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineKernel {
    pub horizon: f64,
    pub gbm: SampledPath,
    pub inv_sq_cum: Vec<f64>,
}

impl LineKernel {
    pub fn from_gbm(gbm: SampledPath) -> Result<Self> {
        require_gbm(&gbm)?;
        let horizon = gbm.t_end();
        if (gbm.t0 + horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(invalid("line kernel path must span [-S, S]"));
        }
        let inv_sq_cum = inverse_square_cumulative(&gbm);
        Ok(Self {
            horizon,
            gbm,
            inv_sq_cum,
        })
    }

    pub fn sample(horizon: f64, step: f64, s: &mut RngStream) -> Result<Self> {
        Self::from_gbm(sample_symmetric_gbm(horizon, step, s)?)
    }

    fn interp(&self, values: &[f64], t: f64) -> f64 {
        let x = ((t - self.gbm.t0) / self.gbm.step).clamp(0.0, (values.len() - 1) as f64);
        let k = (x.floor() as usize).min(values.len() - 2);
        let w = x - k as f64;
        values[k] * (1.0 - w) + values[k + 1] * w
    }
}

/// `M_t M_{t2} int_{-S}^{min(t, t2)} ds / M_s^2` for `t, t2` in `[-S/2, S/2]`.
pub fn line_kernel_eval(k: &LineKernel, t: f64, t2: f64) -> Result<f64> {
    let half = 0.5 * k.horizon;
    for x in [t, t2] {
        if !(x >= -half - 1e-12 && x <= half + 1e-12) {
            return Err(Error::OutOfRange {
                value: x,
                lo: -half,
                hi: half,
            });
        }
    }
    let lo = t.min(t2);
    Ok(k.interp(&k.gbm.values, t) * k.interp(&k.gbm.values, t2) * k.interp(&k.inv_sq_cum, lo))
}

/// `int_0^{t_k} exp(2 alpha_s - s) ds` along a Brownian path from 0.
fn exponential_functional(alpha: &SampledPath) -> Vec<f64> {
    let h = alpha.step;
    let e: Vec<f64> = alpha
        .values
        .iter()
        .enumerate()
        .map(|(k, a)| (2.0 * a - alpha.time(k)).exp())
        .collect();
    let mut out = Vec::with_capacity(e.len());
    out.push(0.0);
    for w in e.windows(2) {
        out.push(out.last().unwrap() + 0.5 * h * (w[0] + w[1]));
    }
    out
}

/// Settings shared by the ensemble checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub replicas: usize,
    pub step: f64,
    pub alpha: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            replicas: 10_000,
            step: 1e-3,
            alpha: 0.01,
        }
    }
}

/// Samples of `int_0^lambda e^{2 alpha - s} ds / (e^{alpha_lambda - lambda/2} - 1)^2`.
pub fn dufresne_ratio_samples(lambda: f64, cfg: EnsembleConfig, s: &RngStream) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be positive"));
    }
    par_replicas(s, cfg.replicas, |r| {
        let alpha = sample_brownian_path(0.0, lambda, cfg.step, r)?;
        let integral = *exponential_functional(&alpha).last().unwrap();
        let end = alpha.values.last().unwrap() - 0.5 * lambda;
        Ok(integral / end.exp_m1().powi(2))
    })
    .into_iter()
    .collect()
}

/// KS test of the truncated ratio against the law of `1/(2 gamma)`.
pub fn dufresne_ratio_check(lambda: f64, cfg: EnsembleConfig, s: &RngStream) -> Result<TestReport> {
    let samples = dufresne_ratio_samples(lambda, cfg, s)?;
    Ok(ks_one_sample(&samples, inverse_gamma_half_cdf_total, cfg.alpha)?
        .with_label(format!("dufresne_ratio lambda={lambda}")))
}

/// Settings of [`mbg_transform_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct MbgConfig {
    pub times: Vec<f64>,
    /// Extra horizon beyond the largest time, replacing the upper limit `inf`.
    pub tail: f64,
    pub replicas: usize,
    pub step: f64,
}

impl Default for MbgConfig {
    fn default() -> Self {
        Self {
            times: vec![0.5, 1.0, 2.0],
            tail: 40.0,
            replicas: 10_000,
            step: 1e-3,
        }
    }
}

/// Moments of `ln V_t` at one time.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LogMoments {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
}

/// Result of [`mbg_transform_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct MbgReport {
    pub moments: Vec<LogMoments>,
    /// Correlation of consecutive increments of `ln V`, with its null
    /// half-width at the 99% level.
    pub increment_correlations: Vec<(f64, f64)>,
    pub v0_max_deviation: f64,
}

impl MbgReport {
    pub fn passed(&self) -> bool {
        self.moments.iter().all(|m| m.mean_ok && m.variance_ok)
            && self.increment_correlations.iter().all(|(c, hw)| c.abs() <= *hw)
            && self.v0_max_deviation == 0.0
    }
}

/// Samples `ln V_t` at the configured times for
/// `V_t = e^{-alpha_t + t/2} int_t^inf e^{2 alpha - s} ds / int_0^inf e^{2 alpha - s} ds`.
pub fn mbg_log_samples(cfg: &MbgConfig, s: &RngStream) -> Result<Vec<Vec<f64>>> {
    let t_last = cfg.times.iter().copied().fold(0.0, f64::max);
    let horizon = t_last + cfg.tail;
    let rows = par_replicas(s, cfg.replicas, |r| -> Result<Vec<f64>> {
        let alpha = sample_brownian_path(0.0, horizon, cfg.step, r)?;
        let cum = exponential_functional(&alpha);
        let total = *cum.last().unwrap();
        let mut row = vec![(total - cum[0]).ln() - total.ln()];
        for &t in &cfg.times {
            let k = alpha.nearest_index(t);
            let tk = alpha.time(k);
            row.push(-alpha.values[k] + 0.5 * tk + (total - cum[k]).ln() - total.ln());
        }
        Ok(row)
    });
    rows.into_iter().collect()
}

/// Checks that `ln V_t` has mean `-t/2` (within 3 standard errors) and variance
/// `t` (within 10%), and that increments over disjoint intervals are
/// uncorrelated.
pub fn mbg_transform_check(cfg: &MbgConfig, s: &RngStream) -> Result<MbgReport> {
    let rows = mbg_log_samples(cfg, s)?;
    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let v0_max_deviation = column(0).iter().map(|x| x.abs()).fold(0.0, f64::max);
    let moments = cfg
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (mean, variance) = mean_var(&column(i + 1));
            let std_error = (variance / rows.len() as f64).sqrt();
            LogMoments {
                t,
                mean,
                std_error,
                variance,
                mean_ok: (mean + 0.5 * t).abs() <= 3.0 * std_error,
                variance_ok: (variance - t).abs() <= 0.1 * t,
            }
        })
        .collect();
    let half_width = crate::stats::correlation_null_half_width(rows.len(), 0.01)?;
    let increment_correlations = (2..cfg.times.len() + 1)
        .map(|c| {
            let first: Vec<f64> = rows.iter().map(|r| r[c - 1] - r[c - 2]).collect();
            let second: Vec<f64> = rows.iter().map(|r| r[c] - r[c - 1]).collect();
            (crate::stats::correlation(&first, &second), half_width)
        })
        .collect();
    Ok(MbgReport {
        moments,
        increment_correlations,
        v0_max_deviation,
    })
}

/// Samples of the circle kernel on its own diagonal at `t`.
pub fn diagonal_samples(lambda: f64, t: f64, cfg: EnsembleConfig, s: &RngStream) -> Result<Vec<f64>> {
    par_replicas(s, cfg.replicas, |r| {
        let k = CircleKernel::sample(lambda, cfg.step, r)?;
        kernel_eval(&k, t, t)
    })
    .into_iter()
    .collect()
}

/// Samples of the quadratic form of a deterministic function.
pub fn quadratic_form_samples<F>(lambda: f64, f: F, cfg: EnsembleConfig, s: &RngStream) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    par_replicas(s, cfg.replicas, |r| {
        let k = CircleKernel::sample(lambda, cfg.step, r)?;
        quadratic_form(&k, &k.sample_fn(&f))
    })
    .into_iter()
    .collect()
}

/// KS test of the quadratic form of `f` against `(int f)^2 / (2 gamma)`.
pub fn functional_identity_check<F>(
    lambda: f64,
    f: F,
    integral: f64,
    cfg: EnsembleConfig,
    s: &RngStream,
) -> Result<TestReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    let scale = integral * integral;
    let samples = quadratic_form_samples(lambda, f, cfg, s)?;
    Ok(ks_one_sample(&samples, |x| inverse_gamma_half_cdf_total(x / scale), cfg.alpha)?
        .with_label("functional_identity"))
}
