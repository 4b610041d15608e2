//! Symmetric cyclic tridiagonal matrices and small dense helpers.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Symmetric matrix with a main diagonal, one off-diagonal and the two
/// wrap-around corner entries.
///
/// `off[i]` couples `i` and `i + 1`; the last entry `off[n-1]` couples `n-1`
/// and `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl CyclicTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.len() < 3 {
            return Err(invalid("cyclic tridiagonal matrices need dimension at least 3"));
        }
        if off.len() != diag.len() {
            return Err(Error::DimensionMismatch {
                expected: diag.len(),
                got: off.len(),
            });
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let n = self.dim();
        if i == j {
            self.diag[i]
        } else if (i + 1) % n == j {
            self.off[i]
        } else if (j + 1) % n == i {
            self.off[j]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let prev = (i + n - 1) % n;
                let next = (i + 1) % n;
                self.diag[i] * x[i] + self.off[i] * x[next] + self.off[prev] * x[prev]
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `shift`.
    ///
    /// Sylvester inertia of `A - shift I`: Gaussian elimination of the first
    /// `n - 1` rows keeps the tridiagonal pivots plus the fill-in coupling to
    /// the last row, so the count costs `O(n)`.
    pub fn count_below(&self, shift: f64) -> usize {
        let n = self.dim();
        let tiny = f64::MIN_POSITIVE.sqrt();
        let guard = |p: f64| if p == 0.0 { tiny } else { p };
        let mut negatives = 0usize;
        let mut pivot = guard(self.diag[0] - shift);
        let mut coupling = self.off[n - 1];
        let mut last = self.diag[n - 1] - shift;
        for i in 0..n - 2 {
            if pivot < 0.0 {
                negatives += 1;
            }
            let e = self.off[i];
            let original = if i + 1 == n - 2 { self.off[n - 2] } else { 0.0 };
            last -= coupling * coupling / pivot;
            let next_coupling = original - e * coupling / pivot;
            pivot = guard(self.diag[i + 1] - shift - e * e / pivot);
            coupling = next_coupling;
        }
        if pivot < 0.0 {
            negatives += 1;
        }
        last -= coupling * coupling / pivot;
        if last < 0.0 {
            negatives += 1;
        }
        negatives
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = self.off[i].abs() + self.off[(i + n - 1) % n].abs();
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection on inertia counts.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        if k >= self.dim() {
            return Err(invalid(format!("eigenvalue index {k} out of range")));
        }
        let (mut lo, mut hi) = self.spectral_bounds();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        while hi - lo > 4.0 * f64::EPSILON * scale {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The `count` smallest eigenvalues in increasing order.
    pub fn lowest_eigenvalues(&self, count: usize) -> Result<Vec<f64>> {
        (0..count.min(self.dim())).map(|k| self.eigenvalue(k)).collect()
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite)
}

/// `a + b` as `(sum, rounding error)`.
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `a * b` as `(product, rounding error)`.
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Inverse of the cyclic tridiagonal matrix with diagonal `hi_k + lo_k` and
/// every off-diagonal entry `off`, where the diagonal is given to roughly
/// twice working precision.
///
/// A Cholesky inverse of the rounded matrix is corrected by iterative
/// refinement with residuals `I - M X` accumulated by error-free
/// transformations, so the result is the inverse of the unrounded matrix
/// rather than of its nearest `f64` neighbour.
pub fn refined_cyclic_inverse(diag: &[(f64, f64)], off: f64, steps: usize) -> Result<DMatrix<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(invalid(format!("cyclic matrices need dimension >= 3, got {n}")));
    }
    let rounded = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i].0 + diag[i].1
        } else if (i + 1) % n == j || (j + 1) % n == i {
            off
        } else {
            0.0
        }
    });
    let chol = rounded.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let mut x = chol.inverse();
    for _ in 0..steps {
        let residual = DMatrix::from_fn(n, n, |i, j| {
            let terms = [
                (diag[i].0, x[(i, j)]),
                (diag[i].1, x[(i, j)]),
                (off, x[((i + n - 1) % n, j)]),
                (off, x[((i + 1) % n, j)]),
            ];
            let (mut sum, mut carry) = (if i == j { 1.0 } else { 0.0 }, 0.0);
            for (a, b) in terms {
                let (p, pe) = two_prod(a, b);
                let (s, se) = two_sum(sum, -p);
                sum = s;
                carry += se - pe;
            }
            sum + carry
        });
        x += chol.solve(&residual);
    }
    Ok(x)
}

/// Whether a symmetric matrix is positive definite.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_free_transformations() {
        let (s, e) = two_sum(1.0, 1e-17);
        assert_eq!((s, e), (1.0, 1e-17));
        let a = 1.0 + f64::EPSILON;
        let (p, e) = two_prod(a, a);
        assert_eq!(p, 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(e, f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn refined_inverse_matches_plain_on_exact_data() {
        let diag: Vec<(f64, f64)> = (0..9).map(|k| (3.0 + 0.1 * k as f64, 0.0)).collect();
        let x = refined_cyclic_inverse(&diag, -1.0, 2).unwrap();
        let m = CyclicTridiagonal::new(diag.iter().map(|d| d.0).collect(), vec![-1.0; 9]).unwrap();
        let plain = spd_inverse(&m.to_dense()).unwrap();
        assert!((x - plain).abs().max() < 1e-14);
    }
    use crate::stochastic::new_stream;

    fn random_matrix(n: usize, seed: u64) -> CyclicTridiagonal {
        let mut s = new_stream(seed, 0);
        let diag = (0..n).map(|_| 4.0 * s.normal()).collect();
        let off = (0..n).map(|_| s.normal()).collect();
        CyclicTridiagonal::new(diag, off).unwrap()
    }

    #[test]
    fn inertia_matches_dense_eigenvalues() {
        for (n, seed) in [(3, 1), (4, 2), (7, 3), (40, 4), (200, 5)] {
            let m = random_matrix(n, seed);
            let mut eig: Vec<f64> = m.to_dense().symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            for w in eig.windows(2) {
                let shift = 0.5 * (w[0] + w[1]);
                let expect = eig.iter().filter(|&&e| e < shift).count();
                assert_eq!(m.count_below(shift), expect, "n={n}");
            }
            for (k, e) in eig.iter().enumerate() {
                let b = m.eigenvalue(k).unwrap();
                assert!((b - e).abs() < 1e-9 * e.abs().max(1.0), "n={n} k={k}: {b} vs {e}");
            }
        }
    }

    #[test]
    fn apply_matches_dense() {
        let m = random_matrix(9, 11);
        let x: Vec<f64> = (0..9).map(|i| i as f64 - 3.0).collect();
        let dense = m.to_dense() * nalgebra::DVector::from_vec(x.clone());
        for (a, b) in m.apply(&x).iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_dimension() {
        assert!(CyclicTridiagonal::new(vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
    }
}
