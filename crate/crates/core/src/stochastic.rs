//! Seeded randomness, elementary samplers and reference distributions.
//!
//! Every stochastic routine in the crate takes an explicit [`RngStream`].
//! A stream is a ChaCha8 generator keyed by a 64-bit seed and positioned on
//! one of its 2^64 independent substreams, so replicas running in parallel
//! each get their own reproducible sequence.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::erf::{erf, erfc};

use crate::error::{invalid, Error, Result};

/// A reproducible, splittable source of randomness.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

/// Creates the stream `(seed, stream_id)`.
pub fn new_stream(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(seed, stream_id)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream keyed by this stream's identity and `index`.
    ///
    /// Children of one parent are distinct substreams of one derived key, so
    /// they are mutually independent and independent of the parent's draws.
    pub fn child(&self, index: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0xA5A5_A5A5)));
        RngStream::new(key, index)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal draw (ziggurat).
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Runs `count` replicas in parallel, replica `i` drawing from `parent.child(i)`.
///
/// Output order is the replica order, so results do not depend on scheduling.
pub fn par_replicas<T, F>(parent: &RngStream, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync + Send,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| f(&mut parent.child(i)))
        .collect()
}

/// Parameters of the inverse Gaussian law IG(mu, lam).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IgParams {
    mu: f64,
    lam: f64,
}

impl IgParams {
    pub fn new(mu: f64, lam: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) || !(lam > 0.0 && lam.is_finite()) {
            return Err(invalid(format!("IG parameters must be positive, got ({mu}, {lam})")));
        }
        Ok(Self { mu, lam })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lam(&self) -> f64 {
        self.lam
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.mu.powi(3) / self.lam
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (mu, lam) = (self.mu, self.lam);
        let r = (lam / x).sqrt();
        let first = normal_cdf(r * (x / mu - 1.0));
        // e^{2 lam/mu} Phi(-r(x/mu+1)) evaluated in log space to avoid overflow.
        let tail_arg = -r * (x / mu + 1.0);
        let second = if tail_arg < -30.0 {
            // Mills-ratio form: Phi(-y) ~ phi(y)/y (1 - 1/y^2 + 3/y^4).
            let y = -tail_arg;
            let log_phi = -0.5 * y * y - 0.5 * (2.0 * std::f64::consts::PI).ln();
            let series = 1.0 - 1.0 / (y * y) + 3.0 / y.powi(4);
            (2.0 * lam / mu + log_phi - y.ln()).exp() * series
        } else {
            (2.0 * lam / mu).exp() * normal_cdf(tail_arg)
        };
        (first + second).min(1.0)
    }
}

/// Draw from IG(mu, lam) by the Gamma(1/2)-plus-uniform construction.
///
/// With `k = lam/mu`, `g ~ Gamma(1/2, 1)` and `x = 1 + g/k - sqrt(g)/k sqrt(2k + g)`,
/// the value `x` is kept with probability `1/(1+x)` and replaced by `1/x`
/// otherwise; the result is `mu` times an IG(1, k) draw. `x` is evaluated in the
/// cancellation-free form `2kg / (g + sqrt(g^2 + 2kg))^2`.
pub fn sample_inverse_gaussian(p: IgParams, s: &mut RngStream) -> f64 {
    let k = p.lam / p.mu;
    let g = sample_gamma_half(s);
    let x = if g > 0.0 {
        let root = (g * g + 2.0 * k * g).sqrt();
        2.0 * k * g / ((g + root) * (g + root))
    } else {
        1.0
    };
    let u = s.uniform();
    let unit = if u * (1.0 + x) <= 1.0 { x } else { 1.0 / x };
    p.mu * unit
}

/// Draw from Gamma(shape 1/2, rate 1), as half a squared standard normal.
pub fn sample_gamma_half(s: &mut RngStream) -> f64 {
    let z = s.normal();
    0.5 * z * z
}

/// Whether a path holds Brownian values or the derived geometric process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    Brownian,
    Gbm,
}

/// Path values on the uniform grid `t0 + k * step`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    pub t0: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub kind: PathKind,
}

impl SampledPath {
    pub fn new(t0: f64, step: f64, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("path needs at least one value"));
        }
        if !(step > 0.0) {
            return Err(invalid("path step must be positive"));
        }
        if kind == PathKind::Gbm && values.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("geometric path values must be positive"));
        }
        Ok(Self {
            t0,
            step,
            values,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.step
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Index of the grid point closest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.step).round();
        k.clamp(0.0, (self.values.len() - 1) as f64) as usize
    }

    /// Linear interpolation between grid values.
    pub fn value_at(&self, t: f64) -> f64 {
        let x = ((t - self.t0) / self.step).clamp(0.0, (self.values.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.values.len().saturating_sub(2));
        if self.values.len() == 1 {
            return self.values[0];
        }
        let w = x - k as f64;
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Logarithm of the geometric process on the grid.
    ///
    /// For a Brownian path this is `B_k - t_k/2` computed directly, which stays
    /// finite where `exp` of it would underflow.
    pub fn log_gbm(&self) -> Vec<f64> {
        match self.kind {
            PathKind::Brownian => self
                .values
                .iter()
                .enumerate()
                .map(|(k, b)| b - 0.5 * self.time(k))
                .collect(),
            PathKind::Gbm => self.values.iter().map(|v| v.ln()).collect(),
        }
    }
}

/// Brownian path on `[t0, t1]` with `B(0) = 0`.
///
/// The number of cells is `ceil((t1 - t0)/step)` and the spacing is shrunk to
/// fit the interval exactly. When 0 lies in the interval the grid point nearest
/// to it carries the value 0 and the path is grown outward in both directions;
/// otherwise the value at the endpoint nearer to 0 is drawn from its marginal.
pub fn sample_brownian_path(t0: f64, t1: f64, step: f64, s: &mut RngStream) -> Result<SampledPath> {
    if !(step > 0.0) {
        return Err(invalid(format!("step must be positive, got {step}")));
    }
    if !(t0 < t1) {
        return Err(invalid(format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    let cells = ((t1 - t0) / step - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / cells as f64;
    let sd = h.sqrt();
    let mut values = vec![0.0; cells + 1];
    let (anchor, anchor_value) = if t0 <= 0.0 && 0.0 <= t1 {
        (((-t0) / h).round().min(cells as f64) as usize, 0.0)
    } else if t0 > 0.0 {
        (0, t0.sqrt() * s.normal())
    } else {
        (cells, (-t1).sqrt() * s.normal())
    };
    values[anchor] = anchor_value;
    for k in anchor + 1..=cells {
        values[k] = values[k - 1] + sd * s.normal();
    }
    for k in (0..anchor).rev() {
        values[k] = values[k + 1] + sd * s.normal();
    }
    SampledPath::new(t0, h, values, PathKind::Brownian)
}

/// Pointwise `M_t = exp(B_t - t/2)`.
pub fn gbm_from_brownian(b: &SampledPath) -> Result<SampledPath> {
    if b.kind != PathKind::Brownian {
        return Err(Error::WrongPathKind {
            expected: "brownian",
        });
    }
    let values = b.log_gbm().into_iter().map(f64::exp).collect();
    Ok(SampledPath {
        t0: b.t0,
        step: b.step,
        values,
        kind: PathKind::Gbm,
    })
}

/// Geometric Brownian motion on `[t0, t1]`, anchored at `M(0) = 1` when 0 is in range.
pub fn sample_gbm_path(t0: f64, t1: f64, step: f64, s: &mut RngStream) -> Result<SampledPath> {
    gbm_from_brownian(&sample_brownian_path(t0, t1, step, s)?)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of Gamma(1/2, 1): `erf(sqrt(x))`.
pub fn gamma_half_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x.sqrt())
    }
}

/// CDF of `1/(2g)` with `g ~ Gamma(1/2, 1)`: `1 - erf(1/sqrt(2x))`.
pub fn inverse_gamma_half_cdf(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(invalid(format!("CDF argument must be positive, got {x}")));
    }
    Ok(erfc((0.5 / x).sqrt()))
}

/// Total version of [`inverse_gamma_half_cdf`] for use as a test CDF.
pub fn inverse_gamma_half_cdf_total(x: f64) -> f64 {
    inverse_gamma_half_cdf(x).unwrap_or(0.0)
}
