//! Green functions of the circle operator `H = 2 beta - W`.
//!
//! Writing `u_i = sqrt(A_i A_{i+1})` and `D = diag(sqrt(A_i))`, the circle
//! operator factors as `H = W D^{-1} R_u D^{-1}` where `R_u` has diagonal
//! `u_i^2 + 1` and off-diagonal `-u_i` between `i` and `i+1`. The inverse of
//! `R_u` has a closed form in directed products of the `u_i`, which
//! [`invert_r_explicit`] evaluates in `O(N^2)`.

use nalgebra::DMatrix;

use crate::beta::{product_is_one, BetaField, GraphShape};
use crate::error::{invalid, Error, Result};
use crate::linalg::{refined_cyclic_inverse, two_prod, two_sum, CyclicTridiagonal};

/// Largest graph accepted by [`path_sum_green`].
pub const PATH_SUM_MAX_VERTICES: usize = 7;
/// Longest path length accepted by [`path_sum_green`].
pub const PATH_SUM_MAX_LEN: usize = 30;

/// Cyclic index arithmetic with the `+1` orientation used by every directed
/// product and sum below.
#[derive(Clone, Copy, Debug)]
struct Cycle {
    n: usize,
}

impl Cycle {
    fn wrap(&self, i: i64) -> usize {
        i.rem_euclid(self.n as i64) as usize
    }

    /// Number of steps from `from` forward to `to`, in `0..n`.
    fn forward(&self, from: usize, to: usize) -> usize {
        (to + self.n - from) % self.n
    }
}

/// The circle operator as a symmetric cyclic tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HMatrix {
    /// `2 beta_i`.
    pub diag: Vec<f64>,
    /// The conductance `W`; every off-diagonal entry is `-W`.
    pub offweight: f64,
}

impl HMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let n = self.dim();
        if i == j {
            self.diag[i]
        } else if (i + 1) % n == j || (j + 1) % n == i {
            -self.offweight
        } else {
            0.0
        }
    }

    pub fn to_tridiagonal(&self) -> CyclicTridiagonal {
        CyclicTridiagonal {
            diag: self.diag.clone(),
            off: vec![-self.offweight; self.dim()],
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

fn require_circle(field: &BetaField) -> Result<()> {
    if field.graph.shape() != GraphShape::Circle {
        return Err(invalid("operation needs a circle field"));
    }
    Ok(())
}

/// `H` of a circle field.
pub fn assemble_h(field: &BetaField) -> Result<HMatrix> {
    require_circle(field)?;
    Ok(HMatrix {
        diag: field.beta.iter().map(|b| 2.0 * b).collect(),
        offweight: field.graph.weight(),
    })
}

/// Largest entrywise gap between `H` and `W D^{-1} R_u D^{-1}`.
pub fn factorization_deviation(field: &BetaField) -> Result<f64> {
    let h = assemble_h(field)?;
    let u = USequence::from_a(&field.a_seq)?;
    let r = u.r_matrix();
    let n = h.dim();
    let w = field.graph.weight();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let product = w * r.get(i, j) / (field.a_seq[i] * field.a_seq[j]).sqrt();
            worst = worst.max((product - h.get(i, j)).abs());
        }
    }
    Ok(worst)
}

/// `u_i = sqrt(A_i A_{i+1})` on the cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct USequence {
    u: Vec<f64>,
}

impl USequence {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.len() < 3 {
            return Err(invalid("the u-sequence needs at least 3 entries"));
        }
        if u.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(invalid("u entries must be positive and finite"));
        }
        if product_is_one(u.iter().map(|x| x.ln()).sum(), u.len()) {
            return Err(Error::DegenerateProduct);
        }
        Ok(Self { u })
    }

    pub fn from_a(a: &[f64]) -> Result<Self> {
        let n = a.len();
        Self::new((0..n).map(|i| (a[i] * a[(i + 1) % n]).sqrt()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `R_u` as a cyclic tridiagonal matrix.
    pub fn r_matrix(&self) -> CyclicTridiagonal {
        CyclicTridiagonal {
            diag: self.u.iter().map(|x| x * x + 1.0).collect(),
            off: self.u.iter().map(|x| -x).collect(),
        }
    }
}

/// How a Green matrix was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ExplicitFormula,
    DenseSolve,
    PathSum,
}

/// Dense symmetric inverse indexed by vertex position.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenMatrix {
    pub entries: DMatrix<f64>,
    pub provenance: Provenance,
}

impl GreenMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Largest entrywise relative gap to another matrix.
    pub fn max_relative_deviation(&self, other: &GreenMatrix) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).abs() / b.abs())
            .fold(0.0, f64::max)
    }

    /// Largest entry of `|M G - I|` relative to `sum_k |M_ik| |G_kj|`.
    pub fn inverse_residual(&self, m: &DMatrix<f64>) -> f64 {
        let n = self.dim();
        let product = m * &self.entries;
        let magnitude = m.abs() * self.entries.abs();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((product[(i, j)] - target).abs() / magnitude[(i, j)]);
            }
        }
        worst
    }
}

/// Closed-form evaluation of `R_u^{-1}` entries.
///
/// All entries share the denominator `(prod u - 1)^2`. The numerators are
/// built from directed products `u_a u_{a+1} ... u_{a+len-1}` and tails
/// `1 + sum_{r=1}^{len} (u_{b-r+1} ... u_b)^2` that end at `b`.
struct ExplicitInverse<'a> {
    u: &'a [f64],
    cycle: Cycle,
    log_prefix: Vec<f64>,
    denominator: f64,
}

impl<'a> ExplicitInverse<'a> {
    fn new(seq: &'a USequence) -> Self {
        let u = seq.as_slice();
        let mut log_prefix = Vec::with_capacity(u.len() + 1);
        log_prefix.push(0.0);
        for x in u {
            log_prefix.push(log_prefix.last().unwrap() + x.ln());
        }
        let total = log_prefix[u.len()];
        Self {
            u,
            cycle: Cycle { n: u.len() },
            denominator: total.exp_m1().powi(2),
            log_prefix,
        }
    }

    /// `u_start ... u_{start+len-1}` along the orientation.
    fn product(&self, start: usize, len: usize) -> f64 {
        let n = self.cycle.n;
        let end = start + len;
        let log = if end <= n {
            self.log_prefix[end] - self.log_prefix[start]
        } else {
            self.log_prefix[n] - self.log_prefix[start] + self.log_prefix[end - n]
        };
        log.exp()
    }

    fn tail(&self, end: usize, len: usize) -> f64 {
        let mut acc = 1.0;
        let mut running = 1.0;
        for r in 1..=len {
            let x = self.u[self.cycle.wrap(end as i64 - r as i64 + 1)];
            running *= x * x;
            acc += running;
        }
        acc
    }

    /// Every tail at once: `tails[b][len]`.
    fn all_tails(&self) -> Vec<Vec<f64>> {
        (0..self.cycle.n).map(|b| self.tails_ending_at(b)).collect()
    }

    fn tails_ending_at(&self, end: usize) -> Vec<f64> {
        let n = self.cycle.n;
        let mut out = Vec::with_capacity(n);
        out.push(1.0);
        let mut running = 1.0;
        for r in 1..n {
            let x = self.u[self.cycle.wrap(end as i64 - r as i64 + 1)];
            running *= x * x;
            out.push(out[r - 1] + running);
        }
        out
    }

    fn entry_with<T: Fn(usize, usize) -> f64>(&self, i: usize, j: usize, tail: T) -> f64 {
        let n = self.cycle.n;
        let before = |k: usize| self.cycle.wrap(k as i64 - 1);
        if i == j {
            // Diagonal: 1 + sum over k from i+1 around to i-1 of (u_k ... u_{i-1})^2.
            return tail(before(i), n - 1) / self.denominator;
        }
        // Off-diagonal. With d1 steps from i to j and d2 = n - d1 back, the two
        // terms are the products along each arc times the tail of the other arc.
        // For j = i + 1 and j = i - 1 one of the tails is empty, which recovers
        // the two neighbour formulas.
        let d1 = self.cycle.forward(i, j);
        let d2 = n - d1;
        let first = self.product(i, d1) * tail(before(i), d2 - 1);
        let second = self.product(j, d2) * tail(before(j), d1 - 1);
        (first + second) / self.denominator
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.entry_with(i, j, |b, len| self.tail(b, len))
    }

    fn matrix(&self) -> DMatrix<f64> {
        let tails = self.all_tails();
        let n = self.cycle.n;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.entry_with(i, j, |b, len| tails[b][len]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

/// `R_u^{-1}` from the closed form.
pub fn invert_r_explicit(u: &USequence) -> GreenMatrix {
    GreenMatrix {
        entries: ExplicitInverse::new(u).matrix(),
        provenance: Provenance::ExplicitFormula,
    }
}

/// Green matrix of a circle field by the chosen route.
///
/// The explicit route returns `(1/W) D R_u^{-1} D`; the dense route inverts `H`
/// by Cholesky, refined against `H` with its diagonal computed from `A` to
/// double-double accuracy; the path-sum route sums paths up to [`PATH_SUM_MAX_LEN`].
pub fn green_from_field(field: &BetaField, method: Provenance) -> Result<GreenMatrix> {
    require_circle(field)?;
    let n = field.dim();
    let entries = match method {
        Provenance::ExplicitFormula => {
            let u = USequence::from_a(&field.a_seq)?;
            let r_inv = ExplicitInverse::new(&u).matrix();
            let w = field.graph.weight();
            let d: Vec<f64> = field.a_seq.iter().map(|a| a.sqrt()).collect();
            DMatrix::from_fn(n, n, |i, j| d[i] * r_inv[(i, j)] * d[j] / w)
        }
        Provenance::DenseSolve => refined_cyclic_inverse(&unrounded_diagonal(field), -field.graph.weight(), 2)?,
        Provenance::PathSum => {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = path_sum_green(field, i, j, PATH_SUM_MAX_LEN)?;
                }
            }
            m
        }
    };
    Ok(GreenMatrix {
        entries,
        provenance: method,
    })
}

/// `2 beta_i = W (A_{i+1} + 1/A_i)` as `hi + lo`. Rounding it to one double
/// moves `G` by about `cond(H) eps`, which is visible when `prod A` is near 1.
fn unrounded_diagonal(field: &BetaField) -> Vec<(f64, f64)> {
    let a = &field.a_seq;
    let n = a.len();
    let w = field.graph.weight();
    (0..n)
        .map(|i| {
            let inv = 1.0 / a[i];
            let inv_err = (-inv).mul_add(a[i], 1.0) / a[i];
            let (sum, sum_err) = two_sum(a[(i + 1) % n], inv);
            let (hi, prod_err) = two_prod(w, sum);
            two_sum(hi, prod_err + w * (sum_err + inv_err))
        })
        .collect()
}

/// One entry of the circle Green matrix by the closed form, in `O(N)`.
///
/// Positions follow [`crate::beta::WeightedGraph1D::position`].
pub fn green_entry_explicit(field: &BetaField, i: usize, j: usize) -> Result<f64> {
    require_circle(field)?;
    let u = USequence::from_a(&field.a_seq)?;
    let inv = ExplicitInverse::new(&u);
    Ok(circle_entry(field, &inv, i, j))
}

fn circle_entry(field: &BetaField, inv: &ExplicitInverse<'_>, i: usize, j: usize) -> f64 {
    (field.a_seq[i] * field.a_seq[j]).sqrt() * inv.entry(i, j) / field.graph.weight()
}

fn bilinear(n: u32, size: usize, t: f64, t2: f64, entry: impl Fn(i64, i64) -> f64) -> Result<f64> {
    let nf = n as f64;
    let lambda = size as f64 / nf;
    for x in [t, t2] {
        if !(x >= -lambda && x <= lambda) {
            return Err(Error::OutOfRange {
                value: x,
                lo: -lambda,
                hi: lambda,
            });
        }
    }
    let cell = |x: f64| ((nf * x).floor() as i64).min(size as i64);
    let (i, j) = (cell(t), cell(t2));
    let (dx, dy) = (nf * t - i as f64, nf * t2 - j as f64);
    let g00 = entry(i, j);
    let g10 = entry(i + 1, j);
    let g01 = entry(i, j + 1);
    let g11 = entry(i + 1, j + 1);
    Ok(g00 + dx * (g10 - g00) + dy * (g01 - g00) + dx * dy * (g11 - g01 - g10 + g00))
}

fn circle_size(dim: usize) -> Result<usize> {
    if dim < 3 || dim % 2 == 0 {
        return Err(invalid(format!("circle matrices have odd dimension >= 3, got {dim}")));
    }
    Ok((dim - 1) / 2)
}

/// Bilinear interpolation of a circle Green matrix at `(t, t2)` on the
/// rescaled grid `i/n`, `i = -size..=size`; neighbours past `size` wrap around.
pub fn interpolate_green(g: &GreenMatrix, n: u32, t: f64, t2: f64) -> Result<f64> {
    let size = circle_size(g.dim())?;
    let cycle = Cycle { n: g.dim() };
    let at = |i: i64| cycle.wrap(i + size as i64);
    bilinear(n, size, t, t2, |i, j| g.get(at(i), at(j)))
}

/// [`interpolate_green`] computed from the field directly, touching only the
/// four corner entries.
pub fn interpolate_green_explicit(field: &BetaField, t: f64, t2: f64) -> Result<f64> {
    require_circle(field)?;
    let size = field.graph.size();
    let n = field.graph.weight();
    if n.fract() != 0.0 || n < 1.0 {
        return Err(invalid("interpolation needs an integer weight"));
    }
    let u = USequence::from_a(&field.a_seq)?;
    let inv = ExplicitInverse::new(&u);
    let cycle = Cycle { n: field.dim() };
    let at = |i: i64| cycle.wrap(i + size as i64);
    bilinear(n as u32, size, t, t2, |i, j| circle_entry(field, &inv, at(i), at(j)))
}

/// Truncated path expansion `sum over paths i -> j of W_path / (2 beta)_path`,
/// where the denominator runs over every vertex visited, endpoints included.
pub fn path_sum_green(field: &BetaField, i: usize, j: usize, max_len: usize) -> Result<f64> {
    let n = field.dim();
    if n > PATH_SUM_MAX_VERTICES {
        return Err(Error::BudgetExceeded {
            dim: n,
            budget: PATH_SUM_MAX_VERTICES,
        });
    }
    if max_len > PATH_SUM_MAX_LEN {
        return Err(invalid(format!("max_len must be at most {PATH_SUM_MAX_LEN}")));
    }
    if i >= n || j >= n {
        return Err(invalid("vertex position out of range"));
    }
    let w = field.graph.conductances();
    let two_beta: Vec<f64> = field.beta.iter().map(|b| 2.0 * b).collect();
    let mut weights = vec![0.0; n];
    weights[i] = 1.0 / two_beta[i];
    let mut total = weights[j];
    for _ in 0..max_len {
        weights = (0..n)
            .map(|b| (0..n).map(|a| weights[a] * w[(a, b)]).sum::<f64>() / two_beta[b])
            .collect();
        total += weights[j];
    }
    Ok(total)
}

/// Jump rate of the quenched walk along one directed edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectedRate {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Rates `(W/2) G(i0, j) / G(i0, i)` for every directed edge `i -> j`.
///
/// The walk is reversible with respect to `G(i0, .)^2`.
pub fn vrjp_rates(g: &GreenMatrix, field: &BetaField, i0: usize) -> Result<Vec<DirectedRate>> {
    if g.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: g.dim(),
        });
    }
    if i0 >= g.dim() {
        return Err(invalid("root vertex out of range"));
    }
    let half_w = 0.5 * field.graph.weight();
    Ok(field
        .graph
        .edges()
        .into_iter()
        .flat_map(|(a, b)| [(a, b), (b, a)])
        .map(|(from, to)| DirectedRate {
            from,
            to,
            rate: half_w * g.get(i0, to) / g.get(i0, from),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::construct_beta_circle;
    use crate::stochastic::new_stream;

    #[test]
    fn three_vertex_constant_u() {
        let g = invert_r_explicit(&USequence::new(vec![2.0; 3]).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 3.0 / 7.0 } else { 2.0 / 7.0 };
                assert!((g.get(i, j) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn explicit_inverse_of_r() {
        let mut s = new_stream(21, 0);
        let u = USequence::new((0..50).map(|_| (0.3 * s.normal()).exp()).collect()).unwrap();
        let g = invert_r_explicit(&u);
        let dense = GreenMatrix {
            entries: nalgebra::DMatrix::from(u.r_matrix().to_dense()).try_inverse().unwrap(),
            provenance: Provenance::DenseSolve,
        };
        assert!(g.max_relative_deviation(&dense) < 1e-10);
        assert!(g.inverse_residual(&u.r_matrix().to_dense()) < 1e-12);
        for i in [0, 7, 49] {
            for j in [0, 1, 25, 48, 49] {
                let single = ExplicitInverse::new(&u).entry(i, j);
                assert!((single - g.get(i, j)).abs() < 1e-12 * g.get(i, j));
            }
        }
    }

    #[test]
    fn degenerate_and_small_sequences_are_rejected() {
        assert!(matches!(USequence::new(vec![1.0; 5]), Err(Error::DegenerateProduct)));
        assert!(USequence::new(vec![2.0, 2.0]).is_err());
    }

    #[test]
    fn h_assembly() {
        let f = BetaField {
            graph: crate::beta::WeightedGraph1D::circle(1, 2.0).unwrap(),
            beta: vec![2.5; 3],
            a_seq: vec![1.0, 2.0, 3.0],
        };
        let h = assemble_h(&f).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 5.0 } else { -2.0 };
                assert_eq!(h[(i, j)], expect);
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn factorization_and_routes_agree() {
        let mut s = new_stream(22, 0);
        let f = construct_beta_circle(2.0, 5, &mut s).unwrap();
        assert!(factorization_deviation(&f).unwrap() < 1e-12);
        let a = green_from_field(&f, Provenance::ExplicitFormula).unwrap();
        let b = green_from_field(&f, Provenance::DenseSolve).unwrap();
        assert!(a.max_relative_deviation(&b) < 1e-10);
        assert!(a.entries.iter().all(|&x| x > 0.0));
        assert!(a.inverse_residual(&assemble_h(&f).unwrap().to_dense()) < 1e-10);
        let e = green_entry_explicit(&f, 3, 17).unwrap();
        assert!((e - a.get(3, 17)).abs() < 1e-12 * e);
    }

    #[test]
    fn interpolation_nodes_and_midpoints() {
        let mut s = new_stream(23, 0);
        let n = 4;
        let f = construct_beta_circle(1.0, n, &mut s).unwrap();
        let g = green_from_field(&f, Provenance::ExplicitFormula).unwrap();
        let pos = |i: i64| f.graph.position(i).unwrap();
        for (i, j) in [(-4, -4), (0, 3), (2, -1), (4, 4)] {
            let v = interpolate_green(&g, n, i as f64 / 4.0, j as f64 / 4.0).unwrap();
            assert!((v - g.get(pos(i), pos(j))).abs() < 1e-15);
        }
        let mid = interpolate_green(&g, n, 0.125, -0.125).unwrap();
        let corners = g.get(pos(0), pos(-1)) + g.get(pos(1), pos(-1)) + g.get(pos(0), pos(0)) + g.get(pos(1), pos(0));
        assert!((mid - corners / 4.0).abs() < 1e-14);
        let edge = 0.5;
        let left = interpolate_green(&g, n, edge - 1e-13, 0.3).unwrap();
        let right = interpolate_green(&g, n, edge, 0.3).unwrap();
        assert!((left - right).abs() < 1e-12);
        let direct = interpolate_green_explicit(&f, 0.3, -0.4).unwrap();
        let via_matrix = interpolate_green(&g, n, 0.3, -0.4).unwrap();
        assert!((direct - via_matrix).abs() < 1e-12 * via_matrix);
        assert!(interpolate_green(&g, n, 1.01, 0.0).is_err());
    }

    #[test]
    fn path_sums() {
        let mut s = new_stream(24, 0);
        let f = construct_beta_circle(1.0, 1, &mut s).unwrap();
        let dense = green_from_field(&f, Provenance::DenseSolve).unwrap();
        let mut previous = 0.0;
        for len in 0..=30 {
            let v = path_sum_green(&f, 0, 1, len).unwrap();
            assert!(v >= previous);
            previous = v;
        }
        assert_eq!(path_sum_green(&f, 0, 1, 0).unwrap(), 0.0);
        assert!(previous <= dense.get(0, 1) * (1.0 + 1e-12));
        assert!(path_sum_green(&f, 0, 1, 31).is_err());
    }

    #[test]
    fn rates_are_reversible() {
        let mut s = new_stream(25, 0);
        let f = construct_beta_circle(1.0, 3, &mut s).unwrap();
        let g = green_from_field(&f, Provenance::ExplicitFormula).unwrap();
        let i0 = 2;
        let rates = vrjp_rates(&g, &f, i0).unwrap();
        assert_eq!(rates.len(), 2 * f.dim());
        for r in &rates {
            assert!(r.rate > 0.0);
            let back = rates.iter().find(|q| q.from == r.to && q.to == r.from).unwrap();
            let lhs = r.rate * g.get(i0, r.from).powi(2);
            let rhs = back.rate * g.get(i0, r.to).powi(2);
            assert!((lhs - rhs).abs() < 1e-12 * lhs);
        }
        let out = rates.iter().find(|r| r.from == i0 && r.to == i0 + 1).unwrap();
        assert!((out.rate - 1.5 * g.get(i0, i0 + 1) / g.get(i0, i0)).abs() < 1e-15);
    }
}
