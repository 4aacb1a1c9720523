//! Box domains `[a, b]^ν` and tensor-product quadrature grids on them.
//!
//! Every integral over the domain, and the sampling of the fiber variable,
//! goes through a [`QuadratureGrid`]. Grids are immutable once built and can
//! be shared freely between worker threads.

use crate::error::{PieError, Result};
use crate::scalar::{lit, to_f64, Real, C};

/// Largest supported number of axes; tensor grids grow as `n^ν`.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain<T> {
    lower: T,
    upper: T,
    dim: usize,
}

impl<T: Real> Domain<T> {
    pub fn new(lower: T, upper: T, dim: usize) -> Result<Self> {
        if !(lower < upper) {
            return Err(PieError::InvalidArgument(format!(
                "domain requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        if dim == 0 {
            return Err(PieError::InvalidArgument("domain dimension must be >= 1".into()));
        }
        if dim > MAX_DIM {
            return Err(PieError::UnsupportedDimension(dim));
        }
        Ok(Self { lower, upper, dim })
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(T::zero(), T::one(), dim)
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lebesgue measure `(b - a)^ν`.
    pub fn measure(&self) -> T {
        let side = self.upper - self.lower;
        (0..self.dim).fold(T::one(), |acc, _| acc * side)
    }

    pub fn contains(&self, point: &[T]) -> bool {
        point.len() == self.dim && point.iter().all(|&p| p >= self.lower && p <= self.upper)
    }

    pub(crate) fn check_point(&self, point: &[T]) -> Result<()> {
        if self.contains(point) {
            Ok(())
        } else {
            Err(PieError::Domain {
                point: point.iter().map(|&p| to_f64(p)).collect(),
                lower: to_f64(self.lower),
                upper: to_f64(self.upper),
                dim: self.dim,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Trapezoid,
    GaussLegendre,
}

/// Nodes and positive weights of a tensor-product rule on a [`Domain`].
///
/// Nodes are stored flat with stride `dim`; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid<T> {
    domain: Domain<T>,
    rule: Rule,
    per_axis: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> QuadratureGrid<T> {
    /// Builds the `n`-point rule per axis and its tensor product over `ν` axes.
    pub fn build(domain: Domain<T>, rule: Rule, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(PieError::InvalidArgument(format!(
                "quadrature needs at least 2 points per axis, got {n}"
            )));
        }
        let (x1, w1) = match rule {
            Rule::Trapezoid => trapezoid_1d(domain.lower, domain.upper, n),
            Rule::GaussLegendre => gauss_legendre_on(domain.lower, domain.upper, n),
        };
        let dim = domain.dim;
        let len = n.pow(dim as u32);
        let mut nodes = Vec::with_capacity(len * dim);
        let mut weights = Vec::with_capacity(len);
        for flat in 0..len {
            let mut rest = flat;
            let mut idx = [0usize; MAX_DIM];
            for axis in (0..dim).rev() {
                idx[axis] = rest % n;
                rest /= n;
            }
            let mut w = T::one();
            for &i in idx.iter().take(dim) {
                nodes.push(x1[i]);
                w *= w1[i];
            }
            weights.push(w);
        }
        Ok(Self {
            domain,
            rule,
            per_axis: n,
            nodes,
            weights,
        })
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[T] {
        let d = self.domain.dim;
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.nodes.chunks_exact(self.domain.dim)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Index of the node exactly equal to `point`, if there is one.
    pub fn index_of(&self, point: &[T]) -> Option<usize> {
        if point.len() != self.domain.dim {
            return None;
        }
        self.nodes().position(|node| node == point)
    }

    /// `Σ wᵢ·samples[i]`.
    pub fn integrate(&self, samples: &[C<T>]) -> Result<C<T>> {
        self.check_len(samples.len())?;
        Ok(samples
            .iter()
            .zip(&self.weights)
            .fold(C::new(T::zero(), T::zero()), |acc, (&v, &w)| acc + v * w))
    }

    pub fn integrate_real(&self, samples: &[T]) -> Result<T> {
        self.check_len(samples.len())?;
        Ok(samples
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&v, &w)| acc + v * w))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(PieError::InvalidArgument(format!(
                "expected {} samples, got {len}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// The space grid for `x`/`s` together with the grid of fiber nodes in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGrid<T> {
    space: QuadratureGrid<T>,
    fibers: QuadratureGrid<T>,
}

impl<T: Real> ProductGrid<T> {
    pub fn new(space: QuadratureGrid<T>, fibers: QuadratureGrid<T>) -> Result<Self> {
        if space.domain != fibers.domain {
            return Err(PieError::InvalidArgument(
                "space and fiber grids must live on the same domain".into(),
            ));
        }
        Ok(Self { space, fibers })
    }

    /// Same rule in `x` and `y`, with `n` space points and `fiber_n` fiber points per axis.
    pub fn uniform(domain: Domain<T>, rule: Rule, n: usize, fiber_n: usize) -> Result<Self> {
        Self::new(
            QuadratureGrid::build(domain, rule, n)?,
            QuadratureGrid::build(domain, rule, fiber_n)?,
        )
    }

    pub fn space(&self) -> &QuadratureGrid<T> {
        &self.space
    }

    pub fn fibers(&self) -> &QuadratureGrid<T> {
        &self.fibers
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.space.domain
    }

    pub fn n_space(&self) -> usize {
        self.space.len()
    }

    pub fn n_fibers(&self) -> usize {
        self.fibers.len()
    }
}

fn trapezoid_1d<T: Real>(a: T, b: T, n: usize) -> (Vec<T>, Vec<T>) {
    let h = (b - a) / lit::<T>((n - 1) as f64);
    let nodes: Vec<T> = (0..n)
        .map(|i| if i == n - 1 { b } else { a + h * lit::<T>(i as f64) })
        .collect();
    let half = h / lit::<T>(2.0);
    let weights = (0..n).map(|i| if i == 0 || i == n - 1 { half } else { h }).collect();
    (nodes, weights)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
///
/// Computed in `f64` by Newton iteration on the three-term recurrence, then
/// mirrored so the rule is exactly symmetric (odd `n` has the node `0`).
pub fn gauss_legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        // descending z for ascending index from the right end
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = weight;
        w[i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn gauss_legendre_on<T: Real>(a: T, b: T, n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre_reference(n);
    let two = lit::<T>(2.0);
    let mid = (a + b) / two;
    let half = (b - a) / two;
    let nodes = x.iter().map(|&t| mid + half * lit::<T>(t)).collect();
    let weights = w.iter().map(|&v| half * lit::<T>(v)).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize) -> Domain<f64> {
        Domain::unit(dim).unwrap()
    }

    #[test]
    fn trapezoid_three_points() {
        let g = QuadratureGrid::build(unit(1), Rule::Trapezoid, 3).unwrap();
        assert_eq!(g.nodes().map(|p| p[0]).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn gauss_two_points() {
        let g = QuadratureGrid::build(unit(1), Rule::GaussLegendre, 2).unwrap();
        let r = 0.5 / 3f64.sqrt();
        assert!((g.node(0)[0] - (0.5 - r)).abs() < 1e-15);
        assert!((g.node(1)[0] - (0.5 + r)).abs() < 1e-15);
        assert!((g.weights()[0] - 0.5).abs() < 1e-15);
        assert!((g.weights()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tensor_weights_sum_to_measure() {
        let g = QuadratureGrid::build(unit(2), Rule::Trapezoid, 3).unwrap();
        assert_eq!(g.len(), 9);
        let sum: f64 = g.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        let d = Domain::new(-1.0, 2.0, 3).unwrap();
        for rule in [Rule::Trapezoid, Rule::GaussLegendre] {
            let g = QuadratureGrid::build(d, rule, 5).unwrap();
            assert_eq!(g.len(), 125);
            assert!(g.weights().iter().all(|&w| w > 0.0));
            let sum: f64 = g.weights().iter().sum();
            assert!((sum - 27.0).abs() <= 27.0 * 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            QuadratureGrid::build(unit(1), Rule::Trapezoid, 1),
            Err(PieError::InvalidArgument(_))
        ));
        assert!(matches!(
            Domain::<f64>::unit(4),
            Err(PieError::UnsupportedDimension(4))
        ));
        assert!(Domain::new(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn integrate_examples() {
        let one = C::new(1.0, 0.0);
        for rule in [Rule::Trapezoid, Rule::GaussLegendre] {
            let g = QuadratureGrid::build(unit(1), rule, 7).unwrap();
            let v = g.integrate(&vec![one; g.len()]).unwrap();
            assert!((v - one).norm() < 1e-15);
        }
        let sq = |g: &QuadratureGrid<f64>| -> Vec<C<f64>> {
            g.nodes().map(|p| C::new(p[0] * p[0], 0.0)).collect()
        };
        let g = QuadratureGrid::build(unit(1), Rule::GaussLegendre, 2).unwrap();
        assert!((g.integrate(&sq(&g)).unwrap().re - 1.0 / 3.0).abs() < 1e-15);
        let g = QuadratureGrid::build(unit(1), Rule::Trapezoid, 3).unwrap();
        assert!((g.integrate(&sq(&g)).unwrap().re - 0.375).abs() < 1e-15);
        assert!(g.integrate(&[one]).is_err());
    }

    #[test]
    fn gauss_exact_up_to_degree_2n_minus_1() {
        let d = Domain::new(-0.5, 1.5, 1).unwrap();
        for n in 2..=20 {
            let g = QuadratureGrid::build(d, Rule::GaussLegendre, n).unwrap();
            for p in 0..2 * n {
                let exact = (1.5f64.powi(p as i32 + 1) - (-0.5f64).powi(p as i32 + 1))
                    / (p as f64 + 1.0);
                let v = g
                    .integrate_real(&g.nodes().map(|x: &[f64]| x[0].powi(p as i32)).collect::<Vec<_>>())
                    .unwrap();
                assert!(
                    (v - exact).abs() <= 1e-13 * exact.abs().max(1.0),
                    "n={n} p={p}: {v} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn odd_gauss_contains_midpoint() {
        let g = QuadratureGrid::build(unit(1), Rule::GaussLegendre, 33).unwrap();
        assert_eq!(g.index_of(&[0.5]), Some(16));
    }

    #[test]
    fn refinement_differences_decrease() {
        let f = |t: f64| (3.0 * t).sin() * (-t).exp() + 1.0 / (1.0 + t * t);
        let exact_at = |n: usize, rule| {
            let g = QuadratureGrid::build(unit(1), rule, n).unwrap();
            g.integrate_real(&g.nodes().map(|x| f(x[0])).collect::<Vec<_>>()).unwrap()
        };
        for rule in [Rule::Trapezoid, Rule::GaussLegendre] {
            let mut last = f64::INFINITY;
            for m in [8, 16, 32] {
                let diff = (exact_at(2 * m, rule) - exact_at(m, rule)).abs();
                // Gauss hits the round-off floor early
                assert!(diff <= last || diff < 1e-14, "{rule:?} m={m}");
                last = diff;
            }
        }
    }

    #[test]
    fn single_precision_grid() {
        let g = QuadratureGrid::<f32>::build(Domain::unit(1).unwrap(), Rule::GaussLegendre, 8)
            .unwrap();
        let sum: f32 = g.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}
