//! Sampled elements of `L_{2,0}(Ω²)` and `L⁰(Ω)`, and the `L⁰`-valued
//! inner-product calculus built on them.
//!
//! A [`FiberFunction`] holds `f(xᵢ, αⱼ)` on space nodes × fiber nodes; an
//! [`L0Scalar`] holds one value per fiber node. "Almost everywhere" in the
//! fiber variable is read on the grid: a property holds almost everywhere
//! when it holds at every fiber node, and a set of fibers has positive
//! measure when it covers at least a fraction `τ` of the fiber nodes.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{PieError, Result};
use crate::grid::ProductGrid;
use crate::kernel::Kernel;
use crate::scalar::{is_finite, lit, modulus, modulus_sq, Real, C};

/// Default relative threshold for fiberwise rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Default fraction of fiber nodes that counts as a set of positive measure.
pub const DEFAULT_TAU: f64 = 0.05;

pub type SharedGrid<T> = Arc<ProductGrid<T>>;

fn same_grid<T: Real>(a: &SharedGrid<T>, b: &SharedGrid<T>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(PieError::InvalidArgument(
            "operands live on different grids".into(),
        ))
    }
}

/// A function of the fiber variable, sampled at the fiber nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct L0Scalar<T> {
    grid: SharedGrid<T>,
    values: Vec<C<T>>,
}

impl<T: Real> L0Scalar<T> {
    pub fn new(grid: SharedGrid<T>, values: Vec<C<T>>) -> Result<Self> {
        if values.len() != grid.n_fibers() {
            return Err(PieError::InvalidArgument(format!(
                "L0 scalar needs {} fiber values, got {}",
                grid.n_fibers(),
                values.len()
            )));
        }
        if !values.iter().all(|&v| is_finite(v)) {
            return Err(PieError::InvalidArgument("L0 scalar has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: SharedGrid<T>, value: C<T>) -> Self {
        let values = vec![value; grid.n_fibers()];
        Self { grid, values }
    }

    pub fn from_fn(grid: SharedGrid<T>, f: impl Fn(&[T]) -> C<T>) -> Self {
        let values = grid.fibers().nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &SharedGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn max_modulus(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(modulus(v)))
    }

    /// `‖b‖ = (∫|b(t)|² dt)^{1/2}` by fiber quadrature.
    pub fn l2_norm(&self) -> T {
        self.values
            .iter()
            .zip(self.grid.fibers().weights())
            .fold(T::zero(), |acc, (&v, &w)| acc + w * modulus_sq(v))
            .sqrt()
    }
}

/// Boolean flag per fiber node; stands in for an idempotent of `L⁰`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NablaMask(Vec<bool>);

impl NablaMask {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn full(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn empty(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn none_set(&self) -> bool {
        self.count() == 0
    }

    pub fn all_set(&self) -> bool {
        self.count() == self.len()
    }

    pub fn fraction(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.0.len() as f64
        }
    }

    /// Whether the marked fibers form a set of positive measure at level `tau`.
    pub fn has_positive_measure(&self, tau: f64) -> bool {
        self.count() > 0 && self.fraction() >= tau
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }
}

/// Sampled element of `L_{2,0}(Ω²)`: values at space nodes × fiber nodes.
///
/// Storage is fiber-major, so each fiber is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberFunction<T> {
    grid: SharedGrid<T>,
    values: Vec<C<T>>,
}

impl<T: Real> FiberFunction<T> {
    pub fn zeros(grid: SharedGrid<T>) -> Self {
        let len = grid.n_space() * grid.n_fibers();
        Self {
            grid,
            values: vec![C::new(T::zero(), T::zero()); len],
        }
    }

    pub fn from_values(grid: SharedGrid<T>, values: Vec<C<T>>) -> Result<Self> {
        let len = grid.n_space() * grid.n_fibers();
        if values.len() != len {
            return Err(PieError::InvalidArgument(format!(
                "fiber function needs {len} samples, got {}",
                values.len()
            )));
        }
        if !values.iter().all(|&v| is_finite(v)) {
            return Err(PieError::InvalidArgument(
                "fiber function has non-finite entries".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    /// Builds the function fiber by fiber; `fibers[j]` holds the space samples at `αⱼ`.
    pub fn from_fibers(grid: SharedGrid<T>, fibers: Vec<Vec<C<T>>>) -> Result<Self> {
        if fibers.len() != grid.n_fibers() || fibers.iter().any(|f| f.len() != grid.n_space()) {
            return Err(PieError::InvalidArgument(
                "fiber columns do not match the grid".into(),
            ));
        }
        Self::from_values(grid, fibers.concat())
    }

    /// Samples `f(x, y)` at every space node `x` and fiber node `y`.
    pub fn from_fn(grid: SharedGrid<T>, f: impl Fn(&[T], &[T]) -> C<T>) -> Self {
        let mut values = Vec::with_capacity(grid.n_space() * grid.n_fibers());
        for y in grid.fibers().nodes() {
            for x in grid.space().nodes() {
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &SharedGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn fiber(&self, j: usize) -> &[C<T>] {
        let n = self.grid.n_space();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn fiber_mut(&mut self, j: usize) -> &mut [C<T>] {
        let n = self.grid.n_space();
        &mut self.values[j * n..(j + 1) * n]
    }

    /// Value at space node `i` and fiber node `j`.
    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.values[j * self.grid.n_space() + i]
    }

    /// Value at grid points given by coordinates; exact grid nodes only.
    pub fn eval_at(&self, x: &[T], y: &[T]) -> Result<C<T>> {
        let i = self.grid.space().index_of(x);
        let j = self.grid.fibers().index_of(y);
        match (i, j) {
            (Some(i), Some(j)) => Ok(self.get(i, j)),
            _ => Err(PieError::InterpolationUnsupported(
                x.iter().chain(y).map(|&v| crate::scalar::to_f64(v)).collect(),
            )),
        }
    }

    /// Discrete `L₂(Ω²)` norm, weighted along both axes.
    pub fn l2_norm(&self) -> T {
        self.l2_norm_on(None)
    }

    /// Discrete `L₂(Ω²)` norm restricted to the fibers marked in `mask`.
    pub fn l2_norm_on(&self, mask: Option<&NablaMask>) -> T {
        let wx = self.grid.space().weights();
        let wy = self.grid.fibers().weights();
        let mut acc = T::zero();
        for (j, &w) in wy.iter().enumerate() {
            if mask.is_some_and(|m| !m.get(j)) {
                continue;
            }
            let fiber = self.fiber(j);
            let part = fiber
                .iter()
                .zip(wx)
                .fold(T::zero(), |a, (&v, &wi)| a + wi * modulus_sq(v));
            acc += w * part;
        }
        acc.sqrt()
    }

    pub fn max_modulus(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(modulus(v)))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `⟨f, g⟩(y) = ∫ f(s, y)·conj(g(s, y)) ds`, one value per fiber.
pub fn inner<T: Real>(f: &FiberFunction<T>, g: &FiberFunction<T>) -> Result<L0Scalar<T>> {
    same_grid(&f.grid, &g.grid)?;
    let w = f.grid.space().weights();
    let values = (0..f.grid.n_fibers())
        .map(|j| weighted_dot(f.fiber(j), g.fiber(j), w))
        .collect();
    Ok(L0Scalar {
        grid: f.grid.clone(),
        values,
    })
}

pub(crate) fn weighted_dot<T: Real>(a: &[C<T>], b: &[C<T>], w: &[T]) -> C<T> {
    a.iter()
        .zip(b)
        .zip(w)
        .fold(C::new(T::zero(), T::zero()), |acc, ((&x, &y), &wi)| {
            acc + x * y.conj() * wi
        })
}

/// Module action `(b∘f)(x, y) = b(y)·f(x, y)`.
pub fn scale<T: Real>(b: &L0Scalar<T>, f: &FiberFunction<T>) -> Result<FiberFunction<T>> {
    same_grid(&b.grid, &f.grid)?;
    let n = f.grid.n_space();
    let values = f
        .values
        .iter()
        .enumerate()
        .map(|(idx, &v)| b.values[idx / n] * v)
        .collect();
    Ok(FiberFunction {
        grid: f.grid.clone(),
        values,
    })
}

/// Output of [`l0_orthonormalize`]: the family and the support of each member.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthonormalized<T> {
    pub functions: Vec<FiberFunction<T>>,
    pub supports: Vec<NablaMask>,
}

/// Fiberwise Gram–Schmidt in the weighted inner product.
///
/// On each fiber a vector whose component orthogonal to its predecessors has
/// norm `<= rank_tol * ‖input‖` is dropped: it is zeroed on that fiber and
/// the fiber is removed from its support mask. Projections are applied twice
/// so the result stays orthonormal to working precision.
pub fn l0_orthonormalize<T: Real>(
    fs: &[FiberFunction<T>],
    rank_tol: T,
) -> Result<Orthonormalized<T>> {
    let Some(first) = fs.first() else {
        return Ok(Orthonormalized {
            functions: Vec::new(),
            supports: Vec::new(),
        });
    };
    let grid = first.grid.clone();
    for f in fs {
        same_grid(&grid, &f.grid)?;
    }
    if !(rank_tol > T::zero()) {
        return Err(PieError::InvalidArgument("rank_tol must be positive".into()));
    }
    let w = grid.space().weights();
    let mut out: Vec<FiberFunction<T>> = fs.iter().map(|_| FiberFunction::zeros(grid.clone())).collect();
    let mut supports = vec![NablaMask::empty(grid.n_fibers()); fs.len()];
    for j in 0..grid.n_fibers() {
        let mut accepted: Vec<usize> = Vec::new();
        for (k, f) in fs.iter().enumerate() {
            let original = f.fiber(j);
            let norm0 = weighted_dot(original, original, w).re.sqrt();
            let mut v = original.to_vec();
            for _pass in 0..2 {
                for &p in &accepted {
                    let basis = out[p].fiber(j);
                    let c = weighted_dot(&v, basis, w);
                    for (vi, &bi) in v.iter_mut().zip(basis) {
                        *vi -= c * bi;
                    }
                }
            }
            let norm = weighted_dot(&v, &v, w).re.sqrt();
            if norm0 > T::zero() && norm > rank_tol * norm0 {
                let inv = T::one() / norm;
                for (o, &vi) in out[k].fiber_mut(j).iter_mut().zip(&v) {
                    *o = vi * inv;
                }
                supports[k].0[j] = true;
                accepted.push(k);
            }
        }
    }
    Ok(Orthonormalized {
        functions: out,
        supports,
    })
}

/// Per-fiber Gram matrix `G[a][b] = ⟨f_a, f_b⟩(αⱼ)`.
pub fn gram_matrix<T: Real>(fs: &[FiberFunction<T>], fiber: usize) -> DMatrix<C<T>> {
    let m = fs.len();
    let Some(first) = fs.first() else {
        return DMatrix::zeros(0, 0);
    };
    let w = first.grid.space().weights();
    DMatrix::from_fn(m, m, |a, b| weighted_dot(fs[a].fiber(fiber), fs[b].fiber(fiber), w))
}

/// Verdict of [`nabla_independent`] with the fibers where the family degenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct Independence {
    pub independent: bool,
    pub witness: NablaMask,
}

/// ∇-linear independence tested through the fiberwise Gram matrix.
///
/// A fiber is deficient when the Gram matrix has `σ_min <= rank_tol·σ_max`
/// (or vanishes). The family is independent when no fiber is deficient.
pub fn nabla_independent<T: Real>(fs: &[FiberFunction<T>], rank_tol: T) -> Result<Independence> {
    nabla_independent_on(fs, None, rank_tol)
}

/// As [`nabla_independent`], ignoring fibers outside `mask`.
pub fn nabla_independent_on<T: Real>(
    fs: &[FiberFunction<T>],
    mask: Option<&NablaMask>,
    rank_tol: T,
) -> Result<Independence> {
    let Some(first) = fs.first() else {
        return Err(PieError::InvalidArgument("empty family".into()));
    };
    for f in fs {
        same_grid(&first.grid, &f.grid)?;
    }
    if !(rank_tol > T::zero()) {
        return Err(PieError::InvalidArgument("rank_tol must be positive".into()));
    }
    let nf = first.grid.n_fibers();
    let mut witness = vec![false; nf];
    for (j, flag) in witness.iter_mut().enumerate() {
        if mask.is_some_and(|m| !m.get(j)) {
            continue;
        }
        let g = gram_matrix(fs, j);
        // The Gram matrix is Hermitian positive semidefinite: its singular
        // values are its eigenvalues.
        let eig = SymmetricEigen::new(g);
        let vals = eig.eigenvalues;
        let max = vals.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let min = vals.iter().fold(max, |a, &v| a.min(v.abs()));
        *flag = max <= T::zero() || min <= rank_tol * max;
    }
    let witness = NablaMask(witness);
    Ok(Independence {
        independent: witness.none_set(),
        witness,
    })
}

/// Upper bound on the number of `L⁰`-orthonormal eigenfunctions for an eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselBound<T> {
    pub lambda: C<T>,
    /// `∭ |q(x, s, y)|² dx ds dy` by quadrature.
    pub kernel_energy: T,
    pub m_max: usize,
}

/// Result of the pointwise Bessel inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselCheck<T> {
    /// Largest `|λ|²Σ|fⱼ|² − ∫|q(x,s,y)|² ds` over grid points (≤ 0 when it holds).
    pub max_excess: T,
    pub passed: bool,
}

pub fn bessel_bound<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    lambda: C<T>,
) -> Result<BesselBound<T>> {
    if modulus(lambda) == T::zero() {
        return Err(PieError::InvalidArgument("lambda must be non-zero".into()));
    }
    let (profile, _) = crate::kernel::bound_function(kernel, grid)?;
    let energy = grid
        .fibers()
        .integrate(profile.values())?
        .re;
    let ratio = energy / modulus_sq(lambda);
    // absorb quadrature round-off when the ratio is an integer
    let slack = lit::<T>(1e-9) * ratio.max(T::one());
    let m_max = (ratio + slack).floor().to_usize().unwrap_or(usize::MAX);
    Ok(BesselBound {
        lambda,
        kernel_energy: energy,
        m_max,
    })
}

impl<T: Real> BesselBound<T> {
    /// Checks `|λ|² Σⱼ |fⱼ(x, y)|² <= ∫ |q(x, s, y)|² ds` at every grid point
    /// for an `L⁰`-orthonormal family of eigenfunctions with eigenvalue `λ`.
    pub fn check_pointwise(
        &self,
        kernel: &Kernel<T>,
        family: &[FiberFunction<T>],
        tol: T,
    ) -> Result<BesselCheck<T>> {
        let Some(first) = family.first() else {
            return Ok(BesselCheck {
                max_excess: T::zero(),
                passed: true,
            });
        };
        let grid = first.grid.clone();
        let w = grid.space().weights();
        let lam2 = modulus_sq(self.lambda);
        let mut max_excess = lit::<T>(f64::NEG_INFINITY);
        for j in 0..grid.n_fibers() {
            let k = kernel.fiber_matrix_at(&grid, j)?;
            for i in 0..grid.n_space() {
                let rhs = (0..grid.n_space()).fold(T::zero(), |acc, s| acc + w[s] * modulus_sq(k[(i, s)]));
                let lhs = family
                    .iter()
                    .fold(T::zero(), |acc, f| acc + modulus_sq(f.get(i, j)));
                max_excess = max_excess.max(lam2 * lhs - rhs);
            }
        }
        Ok(BesselCheck {
            max_excess,
            passed: max_excess <= tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Rule};
    use crate::kernel::{BuiltinKernel, Kernel};

    fn grid(n: usize, fiber_n: usize) -> SharedGrid<f64> {
        Arc::new(ProductGrid::uniform(Domain::unit(1).unwrap(), Rule::GaussLegendre, n, fiber_n).unwrap())
    }

    fn c(re: f64) -> C<f64> {
        C::new(re, 0.0)
    }

    #[test]
    fn inner_examples() {
        let g = grid(6, 5);
        let one = FiberFunction::from_fn(g.clone(), |_, _| c(1.0));
        let s = FiberFunction::from_fn(g.clone(), |x, _| c(x[0]));
        let y = FiberFunction::from_fn(g.clone(), |_, y| c(y[0]));
        assert!(inner(&one, &one).unwrap().values().iter().all(|v| (v - c(1.0)).norm() < 1e-14));
        assert!(inner(&s, &one).unwrap().values().iter().all(|v| (v - c(0.5)).norm() < 1e-14));
        let iy = inner(&y, &one).unwrap();
        for (v, node) in iy.values().iter().zip(g.fibers().nodes()) {
            assert!((v - c(node[0])).norm() < 1e-14);
        }
        let other = grid(7, 5);
        assert!(inner(&one, &FiberFunction::zeros(other)).is_err());
    }

    #[test]
    fn scale_examples() {
        let g = grid(4, 3);
        let f = FiberFunction::from_fn(g.clone(), |x, y| C::new(x[0], y[0]));
        assert_eq!(scale(&L0Scalar::constant(g.clone(), c(1.0)), &f).unwrap(), f);
        assert_eq!(
            scale(&L0Scalar::constant(g.clone(), c(0.0)), &f).unwrap().max_modulus(),
            0.0
        );
        let b = L0Scalar::from_fn(g.clone(), |y| c(y[0]));
        let one = FiberFunction::from_fn(g.clone(), |_, _| c(1.0));
        let by = FiberFunction::from_fn(g.clone(), |_, y| c(y[0]));
        assert_eq!(scale(&b, &one).unwrap(), by);
    }

    #[test]
    fn orthonormalize_examples() {
        let g = grid(8, 5);
        let one = FiberFunction::from_fn(g.clone(), |_, _| c(1.0));
        let s = FiberFunction::from_fn(g.clone(), |x, _| c(x[0]));
        let out = l0_orthonormalize(&[one.clone(), s], 1e-8).unwrap();
        assert!(out.supports.iter().all(|m| m.all_set()));
        let expected = FiberFunction::from_fn(g.clone(), |x, _| c(12f64.sqrt() * (x[0] - 0.5)));
        assert!(out.functions[1].sub(&expected).unwrap().max_modulus() < 1e-13);
        assert!(out.functions[0].sub(&one).unwrap().max_modulus() < 1e-14);

        let dup = l0_orthonormalize(&[one.clone(), one.clone()], 1e-8).unwrap();
        assert!(dup.supports[0].all_set());
        assert!(dup.supports[1].none_set());
        assert_eq!(dup.functions[1].max_modulus(), 0.0);

        let single = l0_orthonormalize(std::slice::from_ref(&one), 1e-8).unwrap();
        assert!(single.functions[0].sub(&one).unwrap().max_modulus() < 1e-14);
        assert!(single.supports[0].all_set());
    }

    #[test]
    fn independence_examples() {
        let g = grid(8, 5);
        let one = FiberFunction::from_fn(g.clone(), |_, _| c(1.0));
        let s = FiberFunction::from_fn(g.clone(), |x, _| c(x[0]));
        let v = nabla_independent(&[one.clone(), s], 1e-8).unwrap();
        assert!(v.independent && v.witness.none_set());

        let b = L0Scalar::from_fn(g.clone(), |y| C::new(1.0 + y[0], -y[0]));
        let v = nabla_independent(&[one.clone(), scale(&b, &one).unwrap()], 1e-8).unwrap();
        assert!(!v.independent && v.witness.all_set());

        assert!(nabla_independent(&[one], 1e-8).unwrap().independent);
    }

    #[test]
    fn bessel_examples() {
        let g = grid(8, 9);
        let d = *g.domain();
        let one = Kernel::builtin(d, BuiltinKernel::Constant { value: c(1.0) });
        assert_eq!(bessel_bound(&one, &g, c(1.0)).unwrap().m_max, 1);
        assert_eq!(bessel_bound(&one, &g, c(0.5)).unwrap().m_max, 4);
        let xs = Kernel::builtin(
            d,
            BuiltinKernel::Polynomial {
                coeff: c(1.0),
                x_pow: 1,
                s_pow: 1,
                y_pow: 0,
            },
        );
        assert_eq!(bessel_bound(&xs, &g, c(1.0 / 3.0)).unwrap().m_max, 1);
        assert!(matches!(
            bessel_bound(&xs, &g, c(0.0)),
            Err(PieError::InvalidArgument(_))
        ));

        // constant eigenfunction of q ≡ 1 with λ = 1 meets the bound with equality
        let f = FiberFunction::from_fn(g.clone(), |_, _| c(1.0));
        let b = bessel_bound(&one, &g, c(1.0)).unwrap();
        assert!(b.check_pointwise(&one, std::slice::from_ref(&f), 1e-8).unwrap().passed);
        let doubled = f.map(|v| v * 2.0);
        assert!(!b.check_pointwise(&one, &[doubled], 1e-8).unwrap().passed);
    }

    #[test]
    fn positive_measure_rule() {
        let mut flags = vec![false; 40];
        flags[3] = true;
        assert!(!NablaMask::new(flags.clone()).has_positive_measure(DEFAULT_TAU));
        flags[4] = true;
        assert!(NablaMask::new(flags).has_positive_measure(DEFAULT_TAU));
        assert!(!NablaMask::empty(10).has_positive_measure(0.0));
    }
}
