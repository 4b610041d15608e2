//! Discrete and continuous Matsumoto–Yor processes.
//!
//! On the half-line with weight `m` and `A_i` i.i.d. IG(1, m), the chain
//! `psi_n = A_1 ... A_n`, the diagonal Green entry `g11_n` of the operator
//! restricted to `1..=n`, and `Z_n = g11_n / psi_n` form the discrete
//! process. Its continuum counterpart is `e_t = exp(alpha_t - t/2)`,
//! `T_t = int_0^t e_s^2 ds` and `Z_t = T_t / e_t`.

use crate::beta::BetaField;
use crate::error::{invalid, Result};
use crate::linalg::spd_inverse;
use crate::stats::{ks_two_sample, TestReport};
use crate::stochastic::{
    par_replicas, sample_brownian_path, sample_inverse_gaussian, IgParams, RngStream, SampledPath,
};

/// Discrete chain, indexed so that entry `n` holds step `n`; index 0 holds
/// `psi_0 = 1`, `g11_0 = 0`, `Z_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MyChain {
    pub m: u32,
    pub psi: Vec<f64>,
    pub zhat: Vec<f64>,
    pub g11: Vec<f64>,
    pub a_seq: Vec<f64>,
}

impl MyChain {
    /// Chain generated by a given sequence `A_1, A_2, ...`.
    pub fn from_a(m: u32, a_seq: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(invalid("weight m must be at least 1"));
        }
        if a_seq.is_empty() || a_seq.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(invalid("generating sequence must be nonempty and positive"));
        }
        let mf = m as f64;
        let len = a_seq.len();
        let mut psi = Vec::with_capacity(len + 1);
        let mut g11 = Vec::with_capacity(len + 1);
        psi.push(1.0);
        g11.push(0.0);
        for (k, &a) in a_seq.iter().enumerate() {
            // g11_{k+1} = g11_k + psi_k^2 A_{k+1} / m.
            g11.push(g11[k] + psi[k] * psi[k] * a / mf);
            psi.push(psi[k] * a);
        }
        let zhat = g11.iter().zip(&psi).map(|(g, p)| g / p).collect();
        Ok(Self {
            m,
            psi,
            zhat,
            g11,
            a_seq,
        })
    }

    pub fn length(&self) -> usize {
        self.a_seq.len()
    }

    /// `(psi_n, g11_n)` from a dense inverse of the operator on `1..=n`.
    pub fn dense_values(&self, n: usize) -> Result<(f64, f64)> {
        if n == 0 || n > self.length() {
            return Err(invalid(format!("step {n} outside 1..={}", self.length())));
        }
        let field = BetaField::halfline_from_a(self.m as f64, self.a_seq[..n].to_vec())?;
        let g = spd_inverse(&field.h_dense())?;
        Ok((self.m as f64 * g[(0, n - 1)], g[(0, 0)]))
    }
}

/// Chain of the given length with `A_i` i.i.d. IG(1, m).
pub fn build_my_chain(m: u32, length: usize, s: &mut RngStream) -> Result<MyChain> {
    if length == 0 {
        return Err(invalid("chain length must be at least 1"));
    }
    let p = IgParams::new(1.0, m.max(1) as f64)?;
    let a_seq = (0..length).map(|_| sample_inverse_gaussian(p, s)).collect();
    MyChain::from_a(m, a_seq)
}

/// One transition `Z -> (Z/m) / Y` with `Y ~ IG(1/(m + 1/Z), 1)`.
pub fn kernel_step(z: f64, m: u32, s: &mut RngStream) -> Result<f64> {
    if !(z > 0.0) || m == 0 {
        return Err(invalid(format!("kernel needs z > 0 and m >= 1, got z={z}, m={m}")));
    }
    let mf = m as f64;
    let y = sample_inverse_gaussian(IgParams::new(1.0 / (mf + 1.0 / z), 1.0)?, s);
    Ok(z / mf / y)
}

/// `Z_n` obtained by iterating [`kernel_step`] from `Z_1 = 1/m`.
pub fn kernel_chain_terminal(m: u32, n: usize, s: &mut RngStream) -> Result<f64> {
    if n == 0 {
        return Err(invalid("chain index must be at least 1"));
    }
    let mut z = 1.0 / m as f64;
    for _ in 1..n {
        z = kernel_step(z, m, s)?;
    }
    Ok(z)
}

/// A draw of `psi` given `Z = z`: IG(1, 1/z).
pub fn conditional_psi_given_z(z: f64, s: &mut RngStream) -> Result<f64> {
    Ok(sample_inverse_gaussian(IgParams::new(1.0, 1.0 / z)?, s))
}

/// Piecewise-linear function through `(k * step, values[k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    pub step: f64,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn t_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let t_max = self.t_max();
        if !(t >= 0.0 && t <= t_max) {
            return Err(crate::Error::OutOfRange {
                value: t,
                lo: 0.0,
                hi: t_max,
            });
        }
        let x = t / self.step;
        let k = (x.floor() as usize).min(self.values.len() - 2);
        let w = x - k as f64;
        Ok(self.values[k] * (1.0 - w) + self.values[k + 1] * w)
    }
}

/// Linear interpolations of `t -> psi_{mt}` and `t -> Z_{mt}` on `[0, length/m]`.
pub fn scale_to_continuum(chain: &MyChain) -> Result<(PiecewiseLinear, PiecewiseLinear)> {
    if chain.length() < chain.m as usize {
        return Err(invalid("chain must have at least m steps"));
    }
    let step = 1.0 / chain.m as f64;
    Ok((
        PiecewiseLinear {
            step,
            values: chain.psi.clone(),
        },
        PiecewiseLinear {
            step,
            values: chain.zhat.clone(),
        },
    ))
}

/// Continuum process on a grid starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MyContinuum {
    /// `e_t`, a geometric path with `e_0 = 1`.
    pub gbm: SampledPath,
    /// `T_t` by the trapezoid rule.
    pub t_int: Vec<f64>,
    /// `Z_t = T_t / e_t`.
    pub z: Vec<f64>,
}

impl MyContinuum {
    pub fn terminal_z(&self) -> f64 {
        *self.z.last().unwrap()
    }

    pub fn terminal_e(&self) -> f64 {
        *self.gbm.values.last().unwrap()
    }
}

/// Samples `(e, T, Z)` on `[0, tmax]`.
pub fn build_continuum(tmax: f64, step: f64, s: &mut RngStream) -> Result<MyContinuum> {
    let b = sample_brownian_path(0.0, tmax, step, s)?;
    let gbm = crate::stochastic::gbm_from_brownian(&b)?;
    let h = gbm.step;
    let mut t_int = Vec::with_capacity(gbm.len());
    t_int.push(0.0);
    for w in gbm.values.windows(2) {
        let last = *t_int.last().unwrap();
        t_int.push(last + 0.5 * h * (w[0] * w[0] + w[1] * w[1]));
    }
    let z = t_int.iter().zip(&gbm.values).map(|(t, e)| t / e).collect();
    Ok(MyContinuum { gbm, t_int, z })
}

/// Euler–Maruyama for `dZ = noise * Z dW + (1 + Z) dt` from `Z_0 = 0`.
///
/// `noise = 1` is the diffusion; `noise = 0` gives the drift-only ODE.
pub fn euler_maruyama_z(tmax: f64, step: f64, noise: f64, s: &mut RngStream) -> Result<f64> {
    if !(tmax > 0.0 && step > 0.0) {
        return Err(invalid("need tmax > 0 and step > 0"));
    }
    let steps = (tmax / step - 1e-9).ceil() as usize;
    let h = tmax / steps as f64;
    let sd = h.sqrt();
    let mut z = 0.0;
    for _ in 0..steps {
        let dw = if noise == 0.0 { 0.0 } else { sd * s.normal() };
        z += noise * z * dw + (1.0 + z) * h;
    }
    Ok(z)
}

/// Settings of [`z_diffusion_step_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZDiffusionConfig {
    pub tmax: f64,
    pub replicas: usize,
    pub step: f64,
    pub alpha: f64,
}

impl Default for ZDiffusionConfig {
    fn default() -> Self {
        Self {
            tmax: 1.0,
            replicas: 10_000,
            step: 1e-3,
            alpha: 0.01,
        }
    }
}

/// Two-sample KS between pathwise `Z_tmax` and Euler–Maruyama `Z_tmax`.
pub fn z_diffusion_step_check(cfg: ZDiffusionConfig, s: &RngStream) -> Result<TestReport> {
    let pathwise = par_replicas(&s.child(0), cfg.replicas, |r| {
        build_continuum(cfg.tmax, cfg.step, r).map(|c| c.terminal_z())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let euler = par_replicas(&s.child(1), cfg.replicas, |r| {
        euler_maruyama_z(cfg.tmax, cfg.step, 1.0, r)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ks_two_sample(&pathwise, &euler, cfg.alpha)?.with_label("z_diffusion"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::new_stream;

    #[test]
    fn all_ones_chain() {
        let c = MyChain::from_a(1, vec![1.0; 6]).unwrap();
        for n in 1..=6 {
            assert_eq!(c.psi[n], 1.0);
            assert_eq!(c.g11[n], n as f64);
            assert_eq!(c.zhat[n], n as f64);
        }
    }

    #[test]
    fn dense_cross_check() {
        let mut s = new_stream(31, 0);
        let c = build_my_chain(3, 12, &mut s).unwrap();
        for n in [1, 5, 8, 12] {
            let (psi, g11) = c.dense_values(n).unwrap();
            assert!((psi - c.psi[n]).abs() < 1e-10 * c.psi[n]);
            assert!((g11 - c.g11[n]).abs() < 1e-10 * c.g11[n]);
        }
    }

    #[test]
    fn first_step_is_deterministic() {
        let mut s = new_stream(32, 0);
        for m in [1, 5, 64] {
            let c = build_my_chain(m, 3, &mut s).unwrap();
            assert!((c.zhat[1] - 1.0 / m as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_hits_chain_values() {
        let mut s = new_stream(33, 0);
        let c = build_my_chain(4, 10, &mut s).unwrap();
        let (psi, z) = scale_to_continuum(&c).unwrap();
        for k in 0..=10 {
            assert!((psi.eval(k as f64 / 4.0).unwrap() - c.psi[k]).abs() < 1e-14);
            assert!((z.eval(k as f64 / 4.0).unwrap() - c.zhat[k]).abs() < 1e-14);
        }
        // Slope at the first node: Z(1/m) / (1/m) = 1.
        assert!((z.eval(0.25).unwrap() / 0.25 - 1.0).abs() < 1e-14);
        assert!(psi.eval(2.6).is_err());
        assert!(scale_to_continuum(&build_my_chain(4, 3, &mut s).unwrap()).is_err());
    }

    #[test]
    fn drift_only_euler() {
        let mut s = new_stream(34, 0);
        for t in [0.5, 1.0, 2.0] {
            let z = euler_maruyama_z(t, 1e-4, 0.0, &mut s).unwrap();
            let exact = t.exp() - 1.0;
            assert!((z - exact).abs() < 1e-3 * exact.max(1.0) * t, "{z} vs {exact}");
        }
    }

    #[test]
    fn continuum_starts_at_zero() {
        let mut s = new_stream(35, 0);
        let c = build_continuum(1.0, 1e-3, &mut s).unwrap();
        assert_eq!(c.z[0], 0.0);
        assert_eq!(c.gbm.values[0], 1.0);
        assert!(c.t_int.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.z.iter().all(|&z| z >= 0.0));
    }

    #[test]
    fn kernel_rejects_bad_state() {
        let mut s = new_stream(36, 0);
        assert!(kernel_step(0.0, 3, &mut s).is_err());
        assert!(kernel_step(1.0, 0, &mut s).is_err());
    }

    #[test]
    fn small_z_concentrates_psi() {
        let mut s = new_stream(37, 0);
        for _ in 0..1000 {
            assert!((conditional_psi_given_z(1e-9, &mut s).unwrap() - 1.0).abs() < 1e-3);
        }
    }
}
