//! Eigenvalue counting for the continuum operator `-(1/M)(M^2 (g/M)')'` with
//! twisted periodic boundary conditions.
//!
//! Two independent routes: the oscillation phase, propagated exactly on each
//! grid cell with the path frozen, and a finite-difference discretisation whose
//! eigenvalues are counted by inertia. A third route counts eigenvalues of the
//! scaled discrete operator `n H` of a β-field.
//!
//! Paths are handled through `ln M`, so horizons where `M` itself under- or
//! overflows are fine.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::Serialize;

use crate::beta::BetaField;
use crate::error::{invalid, Error, Result};
use crate::green::assemble_h;
use crate::linalg::CyclicTridiagonal;
use crate::stats::{correlation, correlation_null_half_width, moment_ci, ratio_of_means_ci, Interval};
use crate::stochastic::{par_replicas, sample_brownian_path, PathKind, RngStream, SampledPath};

/// Largest dimension accepted by [`count_states_matrix`].
pub const MATRIX_BUDGET: usize = 4000;

/// Documented gap between the phase count and the true eigenvalue count:
/// `N - 2 <= floor(theta/pi) <= N + 1` up to the `floor`, so `|N - count| <= 2`.
pub const PHASE_COUNT_SLACK: usize = 2;

/// Phase `theta = branch * pi + r`, `r` in `(-pi/2, pi/2]`, stored as the sign
/// of `r` and `ln |tan r|`. The sign is 0 when `r = 0`.
#[derive(Clone, Copy, Debug)]
struct Phase {
    branch: i64,
    sign: f64,
    log_tan: f64,
}

impl Phase {
    const START: Phase = Phase {
        branch: 0,
        sign: 0.0,
        log_tan: f64::NEG_INFINITY,
    };

    fn theta(&self) -> f64 {
        self.branch as f64 * PI + self.sign * self.log_tan.exp().atan()
    }

    /// Auxiliary angle `arctan(c tan r)` for `c = exp(log_c)`.
    fn gauge(&self, log_c: f64) -> f64 {
        if self.sign == 0.0 {
            return 0.0;
        }
        let z = self.log_tan + log_c;
        let a = if z > 0.0 { FRAC_PI_2 - (-z).exp().atan() } else { z.exp().atan() };
        self.sign * a
    }

    /// Advance across one frozen cell; pushes the times where `theta` hits a
    /// multiple of pi.
    fn advance(&mut self, log_c: f64, sqrt_e: f64, t_start: f64, dt: f64, crossings: &mut Vec<f64>) {
        let rho = self.gauge(log_c);
        let mut end = rho + sqrt_e * dt;
        // Landing on a multiple of pi up to rounding counts as reaching it.
        let nearest = (end / PI).round() * PI;
        if nearest > end && nearest - end < 1e-12 {
            end = nearest;
        }
        let first = (rho / PI).floor() as i64 + 1;
        let last = (end / PI).floor() as i64;
        for j in first..=last {
            crossings.push(t_start + (j as f64 * PI - rho) / sqrt_e);
        }
        let shift = ((end + FRAC_PI_2) / PI).floor();
        let r = end - shift * PI;
        self.branch += shift as i64;
        if r == 0.0 {
            self.sign = 0.0;
            self.log_tan = f64::NEG_INFINITY;
            return;
        }
        let log_tan_gauge = if r.abs() > FRAC_PI_4 {
            -(FRAC_PI_2 - r.abs()).tan().ln()
        } else {
            r.abs().tan().ln()
        };
        self.sign = r.signum();
        self.log_tan = log_tan_gauge - log_c;
    }
}

/// Outcome of propagating the phase across a path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTrace {
    pub e: f64,
    /// Half the length of the propagation interval.
    pub lambda: f64,
    pub start: f64,
    pub theta_final: f64,
    /// Times at which the phase reaches a positive multiple of pi.
    pub crossings: Vec<f64>,
    pub grid_step: f64,
}

impl PhaseTrace {
    /// `floor(theta_final / pi)`, the number of crossings.
    pub fn count(&self) -> usize {
        self.crossings.len()
    }

    /// Gaps between consecutive crossings.
    pub fn interarrivals(&self) -> Vec<f64> {
        self.crossings.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn check_energy(e: f64) -> Result<()> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(invalid(format!("energy must be positive, got {e}")));
    }
    Ok(())
}

/// Solves `theta' = cos^2(theta)/M^2 + E M^2 sin^2(theta)` from `theta = 0`
/// at the start of the path.
///
/// On each cell `M` is frozen at the geometric mean of its endpoint values.
/// With the coefficients constant, `arctan(sqrt(E) M^2 tan theta)` grows at
/// the exact rate `sqrt(E)`, so every cell is solved in closed form with no
/// step-size restriction however large `M^{+-2}` gets.
pub fn phase_propagate(e: f64, path: &SampledPath) -> Result<PhaseTrace> {
    check_energy(e)?;
    if path.len() < 2 {
        return Err(invalid("phase propagation needs at least one cell"));
    }
    let log_m = path.log_gbm();
    let sqrt_e = e.sqrt();
    let half_log_e = 0.5 * e.ln();
    let mut phase = Phase::START;
    let mut crossings = Vec::new();
    for (k, w) in log_m.windows(2).enumerate() {
        let log_c = half_log_e + (w[0] + w[1]);
        phase.advance(log_c, sqrt_e, path.time(k), path.step, &mut crossings);
    }
    Ok(PhaseTrace {
        e,
        lambda: 0.5 * (path.t_end() - path.t0),
        start: path.t0,
        theta_final: phase.theta(),
        crossings,
        grid_step: path.step,
    })
}

/// The same ODE under the same frozen-cell convention, stepped with classical
/// RK4. An independent oracle for [`phase_propagate`]; slow on rough paths.
pub fn phase_rk4(e: f64, path: &SampledPath, substeps_per_unit_rate: f64) -> Result<f64> {
    check_energy(e)?;
    let log_m = path.log_gbm();
    let mut theta = 0.0_f64;
    for w in log_m.windows(2) {
        let lm = 0.5 * (w[0] + w[1]);
        let (a, b) = ((-2.0 * lm).exp(), e * (2.0 * lm).exp());
        let rate = |th: f64| a * th.cos().powi(2) + b * th.sin().powi(2);
        let steps = (path.step * (a + b) * substeps_per_unit_rate).ceil().max(4.0) as usize;
        let dt = path.step / steps as f64;
        for _ in 0..steps {
            let k1 = rate(theta);
            let k2 = rate(theta + 0.5 * dt * k1);
            let k3 = rate(theta + 0.5 * dt * k2);
            let k4 = rate(theta + dt * k3);
            theta += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    Ok(theta)
}

/// `floor(theta_E / pi)`; within [`PHASE_COUNT_SLACK`] of the number of
/// eigenvalues below `E`.
pub fn count_states_phase(e: f64, path: &SampledPath) -> Result<usize> {
    Ok(phase_propagate(e, path)?.count())
}

/// Relative mismatch between a centred difference quotient of
/// `j = -cot(theta)` and the drift `j^2 / M^2 + E M^2` on one frozen cell
/// with `ln M = log_m`, starting from phase `theta`.
pub fn riccati_cell_residual(e: f64, log_m: f64, theta: f64, dt: f64) -> Result<f64> {
    check_energy(e)?;
    let m2 = (2.0 * log_m).exp();
    let c = e.sqrt() * m2;
    let psi = (c * theta.tan()).atan();
    let j = |delta: f64| -c / (psi + e.sqrt() * delta).tan();
    let fd = (j(dt) - j(-dt)) / (2.0 * dt);
    let drift = j(0.0).powi(2) / m2 + e * m2;
    Ok((fd - drift).abs() / drift.abs())
}

/// Finite-difference operator on a path over `[-lambda, lambda]`.
///
/// The grid nodes `0..N` are the path nodes with the last one identified with
/// the first, which builds `g(-lambda) = g(lambda)` into the unknowns. The
/// matrix comes from the quadratic form `sum_k M_k M_{k+1} (g_{k+1}/M_{k+1} -
/// g_k/M_k)^2 / h^2`, the discrete `int M^2 ((g/M)')^2`. The flux condition is
/// then the natural one: the wrap cell uses `M_lambda` on the right and
/// `M_{-lambda}` on the left, and needs no extra stencil.
///
/// Node `j` has diagonal `(M_{j-1} + M_{j+1}) / (M_j h^2)` and off-diagonals
/// `-1/h^2`, corners included; at node 0 the left neighbour ratio is
/// `M_{N-1}/M_lambda`, at node `N-1` the right one is `M_lambda/M_{N-1}`.
pub fn fd_operator(path: &SampledPath) -> Result<CyclicTridiagonal> {
    let cells = path.len().saturating_sub(1);
    if cells < 3 {
        return Err(invalid("finite-difference operator needs at least 3 cells"));
    }
    let log_m = path.log_gbm();
    let inv_h2 = 1.0 / (path.step * path.step);
    let diag = (0..cells)
        .map(|j| {
            let left = if j == 0 { log_m[cells - 1] - log_m[cells] } else { log_m[j - 1] - log_m[j] };
            (left.exp() + (log_m[j + 1] - log_m[j]).exp()) * inv_h2
        })
        .collect();
    CyclicTridiagonal::new(diag, vec![-inv_h2; cells])
}

/// Number of eigenvalues of [`fd_operator`] below `E`.
pub fn count_states_fd(e: f64, path: &SampledPath) -> Result<usize> {
    check_energy(e)?;
    Ok(fd_operator(path)?.count_below(e))
}

/// Number of eigenvalues of `n H` at or below `E` for a circle field of
/// weight `n`.
pub fn count_states_matrix(e: f64, field: &BetaField, n: u32) -> Result<usize> {
    check_energy(e)?;
    let dim = field.dim();
    if dim > MATRIX_BUDGET {
        return Err(Error::BudgetExceeded {
            dim,
            budget: MATRIX_BUDGET,
        });
    }
    let h = assemble_h(field)?.to_tridiagonal();
    Ok(h.count_below(e / n as f64))
}

/// Where a spectrum came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    BetaMatrix,
    FdOperator,
}

/// Lowest eigenvalues of one operator, sorted, all positive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteSpectrum {
    eigenvalues: Vec<f64>,
    source: SpectrumSource,
}

impl DiscreteSpectrum {
    pub fn new(mut eigenvalues: Vec<f64>, source: SpectrumSource) -> Result<Self> {
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { eigenvalues, source })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn source(&self) -> SpectrumSource {
        self.source
    }

    /// Number of stored eigenvalues at or below `e`.
    pub fn count_below(&self, e: f64) -> usize {
        self.eigenvalues.partition_point(|x| *x <= e)
    }
}

/// Lowest `count` eigenvalues of [`fd_operator`].
pub fn fd_spectrum(path: &SampledPath, count: usize) -> Result<DiscreteSpectrum> {
    DiscreteSpectrum::new(fd_operator(path)?.lowest_eigenvalues(count)?, SpectrumSource::FdOperator)
}

/// Lowest `count` eigenvalues of `n H` for a circle field.
pub fn matrix_spectrum(field: &BetaField, n: u32, count: usize) -> Result<DiscreteSpectrum> {
    let h = assemble_h(field)?.to_tridiagonal();
    let values = h.lowest_eigenvalues(count)?.into_iter().map(|x| x * n as f64).collect();
    DiscreteSpectrum::new(values, SpectrumSource::BetaMatrix)
}

/// The flat path `B = 0` on `[-lambda, lambda]`, for which the spectrum is
/// `1/4 + (k pi / lambda)^2`, `k >= 0`, each `k >= 1` twice.
pub fn drift_only_path(lambda: f64, step: f64) -> Result<SampledPath> {
    if !(lambda > 0.0 && step > 0.0) {
        return Err(invalid("need positive lambda and step"));
    }
    let cells = (2.0 * lambda / step - 1e-9).ceil().max(3.0) as usize;
    SampledPath::new(-lambda, 2.0 * lambda / cells as f64, vec![0.0; cells + 1], PathKind::Brownian)
}

/// Exact counting function of [`drift_only_path`]: eigenvalues `<= e`.
pub fn drift_only_count(lambda: f64, e: f64) -> usize {
    if e < 0.25 {
        return 0;
    }
    let kmax = ((e - 0.25).sqrt() * lambda / PI).floor() as usize;
    1 + 2 * kmax
}

/// Interarrival statistics of the crossing times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalSummary {
    pub e: f64,
    pub count: usize,
    pub mean: Interval,
    pub variance: f64,
    pub target: f64,
    pub lag1_correlation: f64,
    pub lag1_half_width: f64,
}

impl RenewalSummary {
    pub fn relative_error(&self) -> f64 {
        (self.mean.estimate - self.target).abs() / self.target
    }
}

/// Settings of [`renewal_statistics`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenewalConfig {
    pub paths: usize,
    pub step: f64,
    pub alpha: f64,
}

impl Default for RenewalConfig {
    fn default() -> Self {
        Self {
            paths: 250,
            step: 1e-3,
            alpha: 0.01,
        }
    }
}

/// Gaps between consecutive crossings on independent paths over `[0, horizon]`.
/// The stretch before the first crossing is discarded on every path.
pub fn renewal_statistics(e: f64, horizon: f64, cfg: RenewalConfig, s: &RngStream) -> Result<RenewalSummary> {
    check_energy(e)?;
    let per_path = par_replicas(s, cfg.paths, |r| -> Result<Vec<f64>> {
        let path = sample_brownian_path(0.0, horizon, cfg.step, r)?;
        Ok(phase_propagate(e, &path)?.interarrivals())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = per_path.iter().flatten().copied().collect();
    if all.len() < 100 {
        return Err(Error::TooFewSamples {
            needed: 100,
            got: all.len(),
        });
    }
    let (first, second): (Vec<f64>, Vec<f64>) =
        per_path.iter().flat_map(|gaps| gaps.windows(2).map(|w| (w[0], w[1]))).unzip();
    let mean = moment_ci(&all, 1, cfg.alpha)?;
    let (_, variance) = crate::stats::mean_var(&all);
    Ok(RenewalSummary {
        e,
        count: all.len(),
        mean,
        variance,
        target: PI / e.sqrt(),
        lag1_correlation: correlation(&first, &second),
        lag1_half_width: correlation_null_half_width(first.len(), cfg.alpha)?,
    })
}

/// One row of a density-of-states sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DosRow {
    pub e: f64,
    /// `N_lambda(E) / (2 lambda)` with its confidence interval.
    pub density: Interval,
    /// `sqrt(E) / pi`.
    pub target: f64,
}

impl DosRow {
    pub fn relative_error(&self) -> f64 {
        (self.density.estimate - self.target).abs() / self.target
    }
}

/// Per-replica normalised counts `N_lambda(E) / (2 lambda)`, one row per path
/// and one column per energy. All energies share each path.
pub fn dos_samples(energies: &[f64], lambda: f64, replicas: usize, step: f64, s: &RngStream) -> Result<Vec<Vec<f64>>> {
    for &e in energies {
        check_energy(e)?;
    }
    par_replicas(s, replicas, |r| -> Result<Vec<f64>> {
        let path = sample_brownian_path(-lambda, lambda, step, r)?;
        energies
            .iter()
            .map(|&e| Ok(count_states_phase(e, &path)? as f64 / (2.0 * lambda)))
            .collect()
    })
    .into_iter()
    .collect()
}

/// Mean and confidence interval of `N_lambda(E) / (2 lambda)` per energy.
pub fn dos_sweep(energies: &[f64], lambda: f64, replicas: usize, step: f64, alpha: f64, s: &RngStream) -> Result<Vec<DosRow>> {
    let rows = dos_samples(energies, lambda, replicas, step, s)?;
    energies
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let column: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            Ok(DosRow {
                e,
                density: moment_ci(&column, 1, alpha)?,
                target: e.sqrt() / PI,
            })
        })
        .collect()
}

/// Ratio of mean densities of two columns of [`dos_samples`].
pub fn dos_ratio(rows: &[Vec<f64>], num: usize, den: usize, alpha: f64) -> Result<Interval> {
    let x: Vec<f64> = rows.iter().map(|r| r[num]).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[den]).collect();
    ratio_of_means_ci(&x, &y, alpha)
}

/// Integrand of the double-integral form of the mean first crossing time,
/// in `t > 0`, `u > 0`.
pub fn t1_integrand(e: f64, t: f64, u: f64) -> f64 {
    let s = t + u;
    let exponent = -t / (2.0 * u * s) - 0.5 * e * t;
    0.5 * exponent.exp() * (2.0 * u + t) / ((u * s).sqrt() * u * s)
}

const QUAD_TOL: f64 = 1e-13;

/// Sum of tanh-sinh integrals over unit-ish panels of `[a, b]`.
fn panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, width: f64, error: &mut f64) -> f64 {
    let count = ((b - a) / width).ceil().max(1.0) as usize;
    let h = (b - a) / count as f64;
    (0..count)
        .map(|k| {
            let lo = a + k as f64 * h;
            let out = quadrature::double_exponential::integrate(&f, lo, lo + h, QUAD_TOL);
            *error += out.error_estimate;
            out.integral
        })
        .sum()
}

fn t1_ranges(e: f64) -> ((f64, f64), impl Fn(f64) -> (f64, f64)) {
    let log_t = (-70.0, (100.0 / e).ln().max(1.0));
    let log_u = |x: f64| (0.5 * x.min(0.0) - 8.0, x.max(0.0) + 45.0);
    (log_t, log_u)
}

fn finish(value: f64, error: f64) -> Result<f64> {
    if !value.is_finite() || error > 1e-8 * value.abs() {
        return Err(Error::QuadratureFailed { estimate: error });
    }
    Ok(value)
}

/// Mean first crossing time as a nested double integral, inner over `u` and
/// outer over `t`, both in log coordinates. Equals `pi / sqrt(E)`.
pub fn mean_t1_quadrature(e: f64) -> Result<f64> {
    check_energy(e)?;
    let ((x0, x1), log_u) = t1_ranges(e);
    let mut error = 0.0;
    let inner_error = std::cell::Cell::new(0.0_f64);
    let value = panels(
        |x| {
            let t = x.exp();
            let (y0, y1) = log_u(x);
            let mut local = 0.0;
            let v = panels(
                |y| {
                    let u = y.exp();
                    t1_integrand(e, t, u) * t * u
                },
                y0,
                y1,
                2.0,
                &mut local,
            );
            inner_error.set(inner_error.get().max(local));
            v
        },
        x0,
        x1,
        2.0,
        &mut error,
    );
    finish(value, error + inner_error.get() * (x1 - x0))
}

/// The same integral with the order swapped: inner over `t`, outer over `u`,
/// on the rectangle that contains the region used by [`mean_t1_quadrature`].
pub fn mean_t1_quadrature_swapped(e: f64) -> Result<f64> {
    check_energy(e)?;
    let ((x0, x1), log_u) = t1_ranges(e);
    let (y0, _) = log_u(x0);
    let (_, y1) = log_u(x1);
    let mut error = 0.0;
    let inner_error = std::cell::Cell::new(0.0_f64);
    let value = panels(
        |y| {
            let u = y.exp();
            let mut local = 0.0;
            let v = panels(
                |x| {
                    let t = x.exp();
                    t1_integrand(e, t, u) * t * u
                },
                x0,
                x1,
                2.0,
                &mut local,
            );
            inner_error.set(inner_error.get().max(local));
            v
        },
        y0,
        y1,
        2.0,
        &mut error,
    );
    finish(value, error + inner_error.get() * (y1 - y0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::construct_beta_circle;
    use crate::stochastic::new_stream;

    fn flat_gbm(t0: f64, t1: f64, step: f64) -> SampledPath {
        let cells = ((t1 - t0) / step).round() as usize;
        SampledPath::new(t0, (t1 - t0) / cells as f64, vec![1.0; cells + 1], PathKind::Gbm).unwrap()
    }

    #[test]
    fn constant_coefficients_give_exact_crossings() {
        let path = flat_gbm(0.0, 10.0, 1e-3);
        let trace = phase_propagate(PI * PI, &path).unwrap();
        assert_eq!(trace.count(), 10);
        for (k, t) in trace.crossings.iter().enumerate() {
            assert!((t - (k + 1) as f64).abs() < 1e-9, "{t}");
        }
        assert!((trace.theta_final - 10.0 * PI).abs() < 1e-9);
        assert!(phase_propagate(0.0, &path).is_err());
    }

    #[test]
    fn monotone_in_energy_and_matches_rk4() {
        let mut s = new_stream(51, 0);
        let path = sample_brownian_path(-5.0, 5.0, 1e-3, &mut s).unwrap();
        let low = phase_propagate(1.0, &path).unwrap();
        let high = phase_propagate(4.0, &path).unwrap();
        assert!(high.theta_final > low.theta_final);
        assert!(low.crossings.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(low.count() as f64, (low.theta_final / PI).floor());
        let rk = phase_rk4(1.0, &path, 20.0).unwrap();
        assert!((rk - low.theta_final).abs() < 1e-3, "{rk} vs {}", low.theta_final);
    }

    #[test]
    fn extreme_paths_stay_finite() {
        let mut s = new_stream(52, 0);
        let path = sample_brownian_path(-400.0, 400.0, 1e-2, &mut s).unwrap();
        let trace = phase_propagate(2.0, &path).unwrap();
        assert!(trace.theta_final.is_finite());
        let ratio = trace.count() as f64 / 800.0 / (2f64.sqrt() / PI);
        assert!((ratio - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn drift_only_spectrum() {
        let path = drift_only_path(PI, 1e-3).unwrap();
        let spec = fd_spectrum(&path, 7).unwrap();
        let expect = [0.25, 1.25, 1.25, 4.25, 4.25, 9.25, 9.25];
        for (got, want) in spec.eigenvalues().iter().zip(expect) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        for e in [0.2, 1.25 + 1e-9, 5.0] {
            let exact = drift_only_count(PI, e) as i64;
            let phase = count_states_phase(e, &path).unwrap() as i64;
            assert!((phase - exact).abs() <= 2, "E={e}: {phase} vs {exact}");
            assert_eq!(count_states_fd(e, &path).unwrap() as i64, exact);
        }
        assert!(count_states_phase(0.2, &path).unwrap() <= 1);
    }

    #[test]
    fn fd_and_phase_agree_on_random_paths() {
        let mut s = new_stream(53, 0);
        for _ in 0..5 {
            let path = sample_brownian_path(-10.0, 10.0, 1e-3, &mut s).unwrap();
            for e in [0.5, 2.0, 8.0] {
                let a = count_states_phase(e, &path).unwrap() as i64;
                let b = count_states_fd(e, &path).unwrap() as i64;
                assert!((a - b).abs() <= 3, "E={e}: phase {a}, fd {b}");
            }
        }
    }

    #[test]
    fn matrix_counts() {
        let mut s = new_stream(54, 0);
        let field = construct_beta_circle(2.0, 50, &mut s).unwrap();
        assert_eq!(count_states_matrix(1e12, &field, 50).unwrap(), field.dim());
        let spec = matrix_spectrum(&field, 50, 5).unwrap();
        assert!(spec.eigenvalues()[0] > 0.0);
        let mut a = 0;
        for e in [0.5, 1.0, 3.0, 9.0] {
            let b = count_states_matrix(e, &field, 50).unwrap();
            assert!(b >= a);
            a = b;
        }
        let big = construct_beta_circle(30.0, 100, &mut s).unwrap();
        assert!(matches!(count_states_matrix(1.0, &big, 100), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn riccati_identity_on_a_cell() {
        for (lm, theta) in [(0.0, 0.3), (1.5, 2.0), (-2.0, 7.0)] {
            assert!(riccati_cell_residual(3.0, lm, theta, 1e-5).unwrap() < 1e-2);
        }
    }

    #[test]
    fn quadrature_routes() {
        for e in [1.0, 4.0] {
            let a = mean_t1_quadrature(e).unwrap();
            let b = mean_t1_quadrature_swapped(e).unwrap();
            let target = PI / e.sqrt();
            assert!((a - target).abs() < 1e-6 * target, "{a}");
            assert!((b - target).abs() < 1e-6 * target, "{b}");
        }
    }

    #[test]
    fn ratio_interval_is_sane() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0 + 0.01 * i as f64, 2.0 + 0.02 * i as f64]).collect();
        let r = dos_ratio(&rows, 1, 0, 0.01).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-12);
        assert!(r.half_width < 1e-12);
    }
}
