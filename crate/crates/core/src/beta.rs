//! The random potential on the discrete circle and half-line.
//!
//! A [`BetaField`] always carries the inverse Gaussian sequence that generated
//! it; the closed-form Green functions downstream are written in those
//! variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::stochastic::{sample_inverse_gaussian, IgParams, RngStream};

/// Largest vertex count accepted by the dense density evaluation.
pub const DENSITY_MAX_VERTICES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphShape {
    /// Vertices `-size..=size` with the wrap edge `(size, -size)`.
    Circle,
    /// Vertices `1..=size`, the initial segment of the half-line.
    HalflineSegment,
}

/// Nearest-neighbour graph on a circle or a half-line segment with a uniform
/// conductance.
///
/// Vertices are addressed by position `0..vertex_count()`; for the circle,
/// position `k` is the vertex labelled `k - size`, for the half-line it is
/// `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedGraph1D {
    shape: GraphShape,
    size: usize,
    weight: f64,
}

impl WeightedGraph1D {
    pub fn new(shape: GraphShape, size: usize, weight: f64) -> Result<Self> {
        if size == 0 {
            return Err(invalid("graph size must be at least 1"));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(invalid(format!("weight must be positive, got {weight}")));
        }
        Ok(Self {
            shape,
            size,
            weight,
        })
    }

    pub fn circle(size: usize, weight: f64) -> Result<Self> {
        Self::new(GraphShape::Circle, size, weight)
    }

    pub fn halfline(size: usize, weight: f64) -> Result<Self> {
        Self::new(GraphShape::HalflineSegment, size, weight)
    }

    pub fn shape(&self) -> GraphShape {
        self.shape
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn vertex_count(&self) -> usize {
        match self.shape {
            GraphShape::Circle => 2 * self.size + 1,
            GraphShape::HalflineSegment => self.size,
        }
    }

    /// Vertex label of a position.
    pub fn label(&self, position: usize) -> i64 {
        match self.shape {
            GraphShape::Circle => position as i64 - self.size as i64,
            GraphShape::HalflineSegment => position as i64 + 1,
        }
    }

    /// Position of a vertex label; circle labels are taken modulo the cycle.
    pub fn position(&self, label: i64) -> Result<usize> {
        let n = self.vertex_count() as i64;
        match self.shape {
            GraphShape::Circle => Ok((label + self.size as i64).rem_euclid(n) as usize),
            GraphShape::HalflineSegment if (1..=n).contains(&label) => Ok((label - 1) as usize),
            GraphShape::HalflineSegment => Err(Error::OutOfRange {
                value: label as f64,
                lo: 1.0,
                hi: n as f64,
            }),
        }
    }

    /// Undirected edges as position pairs, each listed once.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.vertex_count();
        match self.shape {
            GraphShape::Circle => (0..n).map(|k| (k, (k + 1) % n)).collect(),
            GraphShape::HalflineSegment => (1..n).map(|k| (k - 1, k)).collect(),
        }
    }

    /// Conductance matrix.
    pub fn conductances(&self) -> DMatrix<f64> {
        let n = self.vertex_count();
        let mut w = DMatrix::zeros(n, n);
        for (a, b) in self.edges() {
            w[(a, b)] += self.weight;
            w[(b, a)] += self.weight;
        }
        w
    }

    /// Total conductance at each vertex inside the graph.
    pub fn degree_weight(&self, position: usize) -> f64 {
        let n = self.vertex_count();
        match self.shape {
            GraphShape::Circle => 2.0 * self.weight,
            GraphShape::HalflineSegment => {
                let left = if position > 0 { 1.0 } else { 0.0 };
                let right = if position + 1 < n { 1.0 } else { 0.0 };
                (left + right) * self.weight
            }
        }
    }

    /// Boundary vector of the infinite-volume restriction: the conductance from
    /// the segment's last vertex to the rest of the half-line. Zero on the circle.
    pub fn boundary_eta(&self) -> EtaVector {
        let n = self.vertex_count();
        let mut eta = vec![0.0; n];
        if self.shape == GraphShape::HalflineSegment {
            eta[n - 1] = self.weight;
        }
        EtaVector(eta)
    }
}

/// Nonnegative boundary field.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaVector(Vec<f64>);

impl EtaVector {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if eta.iter().any(|&e| !(e >= 0.0)) {
            return Err(invalid("eta entries must be nonnegative"));
        }
        Ok(Self(eta))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Potential values together with the graph and generating sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaField {
    pub graph: WeightedGraph1D,
    pub beta: Vec<f64>,
    pub a_seq: Vec<f64>,
}

fn check_positive(a: &[f64]) -> Result<()> {
    if a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(invalid("generating sequence must be positive and finite"));
    }
    Ok(())
}

/// Whether `sum(ln a)` is zero up to rounding, i.e. the product is 1.
pub(crate) fn product_is_one(log_sum: f64, terms: usize) -> bool {
    log_sum.abs() <= 64.0 * f64::EPSILON * terms as f64
}

impl BetaField {
    /// Circle field `beta_i = (W/2)(A_{i+1} + 1/A_i)` with cyclic indices.
    pub fn circle_from_a(size: usize, weight: f64, a_seq: Vec<f64>) -> Result<Self> {
        let graph = WeightedGraph1D::circle(size, weight)?;
        let n = graph.vertex_count();
        if a_seq.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a_seq.len(),
            });
        }
        check_positive(&a_seq)?;
        if product_is_one(a_seq.iter().map(|a| a.ln()).sum(), n) {
            return Err(Error::DegenerateProduct);
        }
        let beta = (0..n)
            .map(|i| 0.5 * weight * (a_seq[(i + 1) % n] + 1.0 / a_seq[i]))
            .collect();
        Ok(Self {
            graph,
            beta,
            a_seq,
        })
    }

    /// Half-line field `beta_1 = W/(2A_1)`, `beta_i = (W/2)A_{i-1} + W/(2A_i)`.
    pub fn halfline_from_a(weight: f64, a_seq: Vec<f64>) -> Result<Self> {
        let graph = WeightedGraph1D::halfline(a_seq.len().max(1), weight)?;
        if a_seq.is_empty() {
            return Err(invalid("half-line field needs at least one vertex"));
        }
        check_positive(&a_seq)?;
        let beta = (0..a_seq.len())
            .map(|i| {
                let left = if i == 0 { 0.0 } else { 0.5 * weight * a_seq[i - 1] };
                left + 0.5 * weight / a_seq[i]
            })
            .collect();
        Ok(Self {
            graph,
            beta,
            a_seq,
        })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Dense `H = 2 beta - W`.
    pub fn h_dense(&self) -> DMatrix<f64> {
        h_dense(&self.beta, &self.graph)
    }

    /// Whether `H` is positive definite (Cholesky succeeds).
    pub fn is_positive_definite(&self) -> bool {
        crate::linalg::is_positive_definite(&self.h_dense())
    }
}

fn h_dense(beta: &[f64], graph: &WeightedGraph1D) -> DMatrix<f64> {
    let mut h = -graph.conductances();
    for (i, b) in beta.iter().enumerate() {
        h[(i, i)] += 2.0 * b;
    }
    h
}

/// Field on the circle of size `ceil(lambda n)` with weight `n` and
/// `A_i` i.i.d. IG(1, n).
pub fn construct_beta_circle(lambda: f64, n: u32, s: &mut RngStream) -> Result<BetaField> {
    if !(lambda > 0.0) || n == 0 || lambda * (n as f64) < 1.0 {
        return Err(invalid(format!("need lambda n >= 1, got lambda={lambda}, n={n}")));
    }
    let size = (lambda * n as f64).ceil() as usize;
    let weight = n as f64;
    let p = IgParams::new(1.0, weight)?;
    let a_seq: Vec<f64> = (0..2 * size + 1).map(|_| sample_inverse_gaussian(p, s)).collect();
    BetaField::circle_from_a(size, weight, a_seq)
}

/// Field on the half-line vertices `1..=count` with weight `m`.
pub fn construct_beta_halfline(m: u32, count: usize, s: &mut RngStream) -> Result<BetaField> {
    if m == 0 || count == 0 {
        return Err(invalid("need m >= 1 and count >= 1"));
    }
    let p = IgParams::new(1.0, m as f64)?;
    let a_seq = (0..count).map(|_| sample_inverse_gaussian(p, s)).collect();
    BetaField::halfline_from_a(m as f64, a_seq)
}

/// Density of the mixing measure with boundary field `eta`, including the
/// `(2/pi)^{|V|/2}` constant; zero off the positive definite cone.
pub fn nu_density_unnormalized(beta: &[f64], graph: &WeightedGraph1D, eta: &EtaVector) -> Result<f64> {
    let n = graph.vertex_count();
    for got in [beta.len(), eta.as_slice().len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    if n > DENSITY_MAX_VERTICES {
        return Err(Error::BudgetExceeded {
            dim: n,
            budget: DENSITY_MAX_VERTICES,
        });
    }
    let h = h_dense(beta, graph);
    let Some(chol) = h.clone().cholesky() else {
        return Ok(0.0);
    };
    let ones = DVector::from_element(n, 1.0);
    let eta_v = DVector::from_column_slice(eta.as_slice());
    let quad_ones = ones.dot(&(&h * &ones));
    let quad_eta = eta_v.dot(&chol.solve(&eta_v));
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let log_density = 0.5 * n as f64 * (2.0 / std::f64::consts::PI).ln() - 0.5 * quad_ones - 0.5 * quad_eta
        + eta_v.sum()
        - 0.5 * log_det;
    Ok(log_density.exp())
}

/// Closed-form Laplace transform `E exp(-<t, beta>)`.
pub fn laplace_transform_closed_form(t: &[f64], graph: &WeightedGraph1D, eta: &EtaVector) -> Result<f64> {
    let n = graph.vertex_count();
    for got in [t.len(), eta.as_slice().len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    if t.iter().any(|&x| !(x >= 0.0)) {
        return Err(invalid("Laplace arguments must be nonnegative"));
    }
    let root: Vec<f64> = t.iter().map(|x| (1.0 + x).sqrt()).collect();
    let boundary: f64 = eta.as_slice().iter().zip(&root).map(|(e, r)| e * (r - 1.0)).sum();
    let interior: f64 = graph
        .edges()
        .into_iter()
        .map(|(a, b)| graph.weight() * (root[a] * root[b] - 1.0))
        .sum();
    let log_norm: f64 = root.iter().map(|r| r.ln()).sum();
    Ok((-boundary - interior - log_norm).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::new_stream;

    #[test]
    fn single_vertex_density() {
        let g = WeightedGraph1D::halfline(1, 1.0).unwrap();
        let eta = EtaVector::zeros(1);
        for b in [0.1, 1.0, 3.5] {
            let d = nu_density_unnormalized(&[b], &g, &eta).unwrap();
            let expect = (2.0 / std::f64::consts::PI).sqrt() * (-b).exp() / (2.0 * b).sqrt();
            assert!((d - expect).abs() < 1e-14 * expect);
        }
        assert_eq!(nu_density_unnormalized(&[-1.0], &g, &eta).unwrap(), 0.0);
    }

    #[test]
    fn single_vertex_density_integrates_to_one() {
        // Midpoint rule after beta = x^2, which removes the endpoint singularity.
        let g = WeightedGraph1D::halfline(1, 1.0).unwrap();
        let eta = EtaVector::zeros(1);
        let h = 1e-3;
        let total: f64 = (0..12_000)
            .map(|k| {
                let x = (k as f64 + 0.5) * h;
                2.0 * x * nu_density_unnormalized(&[x * x], &g, &eta).unwrap() * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn non_positive_definite_has_zero_density() {
        let g = WeightedGraph1D::circle(1, 1.0).unwrap();
        let d = nu_density_unnormalized(&[0.5, 0.5, 0.5], &g, &EtaVector::zeros(3)).unwrap();
        assert_eq!(d, 0.0);
        assert!(nu_density_unnormalized(&[1.0, 1.0], &g, &EtaVector::zeros(3)).is_err());
    }

    #[test]
    fn laplace_basics() {
        let g = WeightedGraph1D::circle(2, 3.0).unwrap();
        let one = laplace_transform_closed_form(&[0.0; 5], &g, &EtaVector::zeros(5)).unwrap();
        assert_eq!(one, 1.0);
        let v = WeightedGraph1D::halfline(1, 1.0).unwrap();
        let x = laplace_transform_closed_form(&[2.0], &v, &EtaVector::zeros(1)).unwrap();
        assert!((x - 3.0f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn circle_invariant_and_degenerate_case() {
        let f = BetaField::circle_from_a(1, 2.0, vec![1.0, 2.0, 0.25]).unwrap();
        assert_eq!(f.beta, vec![3.0, 0.75, 5.0]);
        let err = BetaField::circle_from_a(1, 2.0, vec![1.0; 3]).unwrap_err();
        assert!(matches!(err, Error::DegenerateProduct));
    }

    #[test]
    fn halfline_invariant() {
        let f = BetaField::halfline_from_a(4.0, vec![2.0, 0.5, 1.0]).unwrap();
        assert_eq!(f.beta, vec![1.0, 8.0, 3.0]);
    }

    #[test]
    fn constructed_fields_are_positive_definite() {
        let mut s = new_stream(12, 0);
        for _ in 0..50 {
            assert!(construct_beta_circle(1.0, 4, &mut s).unwrap().is_positive_definite());
            assert!(construct_beta_halfline(3, 6, &mut s).unwrap().is_positive_definite());
        }
    }

    #[test]
    fn labels_and_positions() {
        let g = WeightedGraph1D::circle(2, 1.0).unwrap();
        assert_eq!(g.label(0), -2);
        assert_eq!(g.position(-2).unwrap(), 0);
        assert_eq!(g.position(3).unwrap(), 0);
        assert_eq!(g.edges().len(), 5);
        assert!(g.edges().contains(&(4, 0)));
        let h = WeightedGraph1D::halfline(3, 1.0).unwrap();
        assert!(h.position(0).is_err());
        assert_eq!(h.boundary_eta().as_slice(), &[0.0, 0.0, 1.0]);
    }
}
