//! Kernels `q(x, s, y)` of partial integral operators
//! `(Sf)(x, y) = ∫ q(x, s, y) f(s, y) ds`, and views of them.
//!
//! A [`Kernel`] is one of a small builtin catalog, a finite-rank sum of
//! separable products of named basis functions, or a tensor sampled on a
//! [`ProductGrid`]. A [`KernelView`] reads a kernel as itself, as its
//! adjoint `conj(q(s, x, y))`, or deflated by finitely many rank-one terms.

use nalgebra::DMatrix;

use crate::error::{PieError, Result};
use crate::grid::{Domain, ProductGrid, QuadratureGrid};
use crate::l0::{FiberFunction, L0Scalar, SharedGrid};
use crate::scalar::{is_finite, lit, modulus_sq, re, to_f64, Real, C};

/// Named one-dimensional basis functions; on `ν > 1` axes the basis is the
/// product of its values on each coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis<T> {
    One,
    Linear,
    Quadratic,
    Sin { freq: T },
    Cos { freq: T },
    /// Legendre polynomial `P_k` of the coordinate mapped affinely onto `[-1, 1]`.
    Legendre(u32),
}

impl<T: Real> Basis<T> {
    pub fn eval(&self, domain: &Domain<T>, point: &[T]) -> T {
        point
            .iter()
            .fold(T::one(), |acc, &t| acc * self.eval_axis(domain, t))
    }

    fn eval_axis(&self, domain: &Domain<T>, t: T) -> T {
        match *self {
            Basis::One => T::one(),
            Basis::Linear => t,
            Basis::Quadratic => t * t,
            Basis::Sin { freq } => (freq * t).sin(),
            Basis::Cos { freq } => (freq * t).cos(),
            Basis::Legendre(k) => {
                let two = lit::<T>(2.0);
                let u = two * (t - domain.lower()) / (domain.upper() - domain.lower()) - T::one();
                legendre(k, u)
            }
        }
    }
}

fn legendre<T: Real>(k: u32, u: T) -> T {
    let mut p0 = T::one();
    if k == 0 {
        return p0;
    }
    let mut p1 = u;
    for n in 2..=k {
        let nf = lit::<T>(n as f64);
        let p2 = ((lit::<T>(2.0) * nf - T::one()) * u * p1 - (nf - T::one()) * p0) / nf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `coeff · space(t) · fiber(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor<T> {
    pub coeff: C<T>,
    pub space: Basis<T>,
    pub fiber: Basis<T>,
}

impl<T: Real> Factor<T> {
    pub fn new(coeff: C<T>, space: Basis<T>, fiber: Basis<T>) -> Self {
        Self { coeff, space, fiber }
    }

    pub fn eval(&self, domain: &Domain<T>, t: &[T], y: &[T]) -> C<T> {
        self.coeff * (self.space.eval(domain, t) * self.fiber.eval(domain, y))
    }
}

/// One separable term `left(x, y) · right(s, y)` of a finite-rank kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTerm<T> {
    pub left: Factor<T>,
    pub right: Factor<T>,
}

impl<T: Real> RankTerm<T> {
    pub fn new(left: Factor<T>, right: Factor<T>) -> Self {
        Self { left, right }
    }

    pub fn eval(&self, domain: &Domain<T>, x: &[T], s: &[T], y: &[T]) -> C<T> {
        self.left.eval(domain, x, y) * self.right.eval(domain, s, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinKernel<T> {
    Constant {
        value: C<T>,
    },
    /// `coeff · x^p · s^r · y^t` (coordinate products on `ν > 1`).
    Polynomial {
        coeff: C<T>,
        x_pow: u32,
        s_pow: u32,
        y_pow: u32,
    },
    /// `amplitude · exp(−(|x − s|² + |s − y|²) / width²)`.
    GaussianBump {
        amplitude: T,
        width: T,
    },
}

impl<T: Real> BuiltinKernel<T> {
    fn eval(&self, x: &[T], s: &[T], y: &[T]) -> C<T> {
        match *self {
            BuiltinKernel::Constant { value } => value,
            BuiltinKernel::Polynomial {
                coeff,
                x_pow,
                s_pow,
                y_pow,
            } => {
                let p = |pt: &[T], k: u32| pt.iter().fold(T::one(), |a, &v| a * powi(v, k));
                coeff * (p(x, x_pow) * p(s, s_pow) * p(y, y_pow))
            }
            BuiltinKernel::GaussianBump { amplitude, width } => {
                let d2 = |a: &[T], b: &[T]| {
                    a.iter()
                        .zip(b)
                        .fold(T::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v))
                };
                re(amplitude * (-(d2(x, s) + d2(s, y)) / (width * width)).exp())
            }
        }
    }
}

fn powi<T: Real>(v: T, k: u32) -> T {
    (0..k).fold(T::one(), |a, _| a * v)
}

/// Kernel values on a [`ProductGrid`], indexed `((i·n_s) + k)·n_y + j` for
/// `q(xᵢ, s_k, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledKernel<T> {
    grid: SharedGrid<T>,
    values: Vec<C<T>>,
}

impl<T: Real> SampledKernel<T> {
    pub fn grid(&self) -> &SharedGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    fn at(&self, i: usize, k: usize, j: usize) -> C<T> {
        let n = self.grid.n_space();
        let ny = self.grid.n_fibers();
        self.values[(i * n + k) * ny + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind<T> {
    Builtin(BuiltinKernel<T>),
    FiniteRank(Vec<RankTerm<T>>),
    Sampled(SampledKernel<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    domain: Domain<T>,
    kind: KernelKind<T>,
}

impl<T: Real> Kernel<T> {
    pub fn builtin(domain: Domain<T>, kernel: BuiltinKernel<T>) -> Self {
        Self {
            domain,
            kind: KernelKind::Builtin(kernel),
        }
    }

    pub fn constant(domain: Domain<T>, value: T) -> Self {
        Self::builtin(domain, BuiltinKernel::Constant { value: re(value) })
    }

    pub fn finite_rank(domain: Domain<T>, terms: Vec<RankTerm<T>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(PieError::InvalidArgument(
                "finite-rank kernel needs at least one term".into(),
            ));
        }
        Ok(Self {
            domain,
            kind: KernelKind::FiniteRank(terms),
        })
    }

    /// Wraps a tensor of samples `q(xᵢ, s_k, y_j)` aligned with `grid`.
    pub fn sampled(grid: SharedGrid<T>, values: Vec<C<T>>) -> Result<Self> {
        let n = grid.n_space();
        let expected = n * n * grid.n_fibers();
        if values.len() != expected {
            return Err(PieError::InvalidArgument(format!(
                "sampled kernel needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| !is_finite(v)) {
            let ny = grid.n_fibers();
            let (i, k, j) = (pos / (n * ny), (pos / ny) % n, pos % ny);
            return Err(point_error(
                grid.space().node(i),
                grid.space().node(k),
                grid.fibers().node(j),
            ));
        }
        Ok(Self {
            domain: *grid.domain(),
            kind: KernelKind::Sampled(SampledKernel { grid, values }),
        })
    }

    /// Samples this kernel at every grid triple.
    pub fn sample(&self, grid: &SharedGrid<T>) -> Result<Self> {
        let (n, ny) = (grid.n_space(), grid.n_fibers());
        let mut values = vec![re(T::zero()); n * n * ny];
        for j in 0..ny {
            let k = self.fiber_matrix_at(grid, j)?;
            for i in 0..n {
                for s in 0..n {
                    values[(i * n + s) * ny + j] = k[(i, s)];
                }
            }
        }
        Self::sampled(grid.clone(), values)
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn kind(&self) -> &KernelKind<T> {
        &self.kind
    }

    /// Closed-form kernels are continuous on `Ω³`; sampled ones carry no such guarantee.
    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, KernelKind::Sampled(_))
    }

    pub fn rank_bound(&self) -> Option<usize> {
        match &self.kind {
            KernelKind::FiniteRank(terms) => Some(terms.len()),
            KernelKind::Builtin(BuiltinKernel::Constant { .. })
            | KernelKind::Builtin(BuiltinKernel::Polynomial { .. }) => Some(1),
            _ => None,
        }
    }

    /// `q(x, s, y)`; sampled kernels accept exact grid nodes only.
    pub fn eval(&self, x: &[T], s: &[T], y: &[T]) -> Result<C<T>> {
        for p in [x, s, y] {
            self.domain.check_point(p)?;
        }
        let v = match &self.kind {
            KernelKind::Builtin(b) => b.eval(x, s, y),
            KernelKind::FiniteRank(terms) => terms
                .iter()
                .fold(re(T::zero()), |acc, t| acc + t.eval(&self.domain, x, s, y)),
            KernelKind::Sampled(sk) => {
                let space = sk.grid.space();
                match (space.index_of(x), space.index_of(s), sk.grid.fibers().index_of(y)) {
                    (Some(i), Some(k), Some(j)) => sk.at(i, k, j),
                    _ => {
                        return Err(PieError::InterpolationUnsupported(
                            x.iter().chain(s).chain(y).map(|&v| to_f64(v)).collect(),
                        ))
                    }
                }
            }
        };
        if is_finite(v) {
            Ok(v)
        } else {
            Err(point_error(x, s, y))
        }
    }

    /// `K[i, k] = q(xᵢ, x_k, α)` over the nodes of `space`.
    pub fn fiber_matrix(&self, space: &QuadratureGrid<T>, alpha: &[T]) -> Result<DMatrix<C<T>>> {
        if let KernelKind::Sampled(sk) = &self.kind {
            if sk.grid.space() == space {
                if let Some(j) = sk.grid.fibers().index_of(alpha) {
                    return Ok(sampled_fiber(sk, j));
                }
            }
        }
        let n = space.len();
        let mut out = DMatrix::from_element(n, n, re(T::zero()));
        for i in 0..n {
            for k in 0..n {
                out[(i, k)] = self.eval(space.node(i), space.node(k), alpha)?;
            }
        }
        Ok(out)
    }

    /// Sample matrix at fiber node `j` of `grid`.
    pub fn fiber_matrix_at(&self, grid: &ProductGrid<T>, j: usize) -> Result<DMatrix<C<T>>> {
        if let KernelKind::Sampled(sk) = &self.kind {
            if *sk.grid == *grid {
                return Ok(sampled_fiber(sk, j));
            }
        }
        self.fiber_matrix(grid.space(), grid.fibers().node(j))
    }

    pub fn view(&self) -> KernelView<'_, T> {
        KernelView {
            base: self,
            mode: ViewMode::Plain,
        }
    }

    pub fn adjoint(&self) -> KernelView<'_, T> {
        KernelView {
            base: self,
            mode: ViewMode::Adjoint,
        }
    }

    /// `p(x, s, y) = q(x, s, y) − Σⱼ conj(fⱼ(s, y))·gⱼ(x, y)` for pairs `(fⱼ, gⱼ)`.
    pub fn deflated(&self, pairs: Vec<(FiberFunction<T>, FiberFunction<T>)>) -> Result<KernelView<'_, T>> {
        if let Some((f0, _)) = pairs.first() {
            let grid = f0.grid();
            if grid.domain() != &self.domain {
                return Err(PieError::InvalidArgument(
                    "deflation pairs live on a different domain".into(),
                ));
            }
            for (f, g) in &pairs {
                if **f.grid() != **grid || **g.grid() != **grid {
                    return Err(PieError::InvalidArgument(
                        "deflation pairs must share one grid".into(),
                    ));
                }
            }
        }
        Ok(KernelView {
            base: self,
            mode: ViewMode::Deflated(pairs),
        })
    }
}

fn sampled_fiber<T: Real>(sk: &SampledKernel<T>, j: usize) -> DMatrix<C<T>> {
    let n = sk.grid.n_space();
    DMatrix::from_fn(n, n, |i, k| sk.at(i, k, j))
}

fn point_error<T: Real>(x: &[T], s: &[T], y: &[T]) -> PieError {
    let f = |p: &[T]| p.iter().map(|&v| to_f64(v)).collect();
    PieError::Evaluation {
        x: f(x),
        s: f(s),
        y: f(y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViewMode<T> {
    Plain,
    Adjoint,
    Deflated(Vec<(FiberFunction<T>, FiberFunction<T>)>),
}

/// A kernel read plainly, as its adjoint, or deflated by rank-one terms.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelView<'k, T> {
    base: &'k Kernel<T>,
    mode: ViewMode<T>,
}

impl<'k, T: Real> KernelView<'k, T> {
    pub fn base(&self) -> &'k Kernel<T> {
        self.base
    }

    pub fn mode(&self) -> &ViewMode<T> {
        &self.mode
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.base.domain
    }

    /// The adjoint of a plain or adjoint view; deflated views have none here.
    pub fn adjoint(&self) -> Result<KernelView<'k, T>> {
        let mode = match self.mode {
            ViewMode::Plain => ViewMode::Adjoint,
            ViewMode::Adjoint => ViewMode::Plain,
            ViewMode::Deflated(_) => {
                return Err(PieError::InvalidArgument(
                    "adjoint of a deflated view is not supported".into(),
                ))
            }
        };
        Ok(KernelView {
            base: self.base,
            mode,
        })
    }

    pub fn eval(&self, x: &[T], s: &[T], y: &[T]) -> Result<C<T>> {
        match &self.mode {
            ViewMode::Plain => self.base.eval(x, s, y),
            ViewMode::Adjoint => Ok(self.base.eval(s, x, y)?.conj()),
            ViewMode::Deflated(pairs) => {
                let mut v = self.base.eval(x, s, y)?;
                for (f, g) in pairs {
                    v -= f.eval_at(s, y)?.conj() * g.eval_at(x, y)?;
                }
                Ok(v)
            }
        }
    }

    /// `K[i, k]` = view value at `(xᵢ, x_k, α)` over the nodes of `space`.
    pub fn fiber_matrix(&self, space: &QuadratureGrid<T>, alpha: &[T]) -> Result<DMatrix<C<T>>> {
        self.base.domain.check_point(alpha)?;
        let base = self.base.fiber_matrix(space, alpha)?;
        match &self.mode {
            ViewMode::Plain => Ok(base),
            ViewMode::Adjoint => Ok(base.adjoint()),
            ViewMode::Deflated(pairs) => {
                let Some((f0, _)) = pairs.first() else {
                    return Ok(base);
                };
                let grid = f0.grid();
                match grid.fibers().index_of(alpha) {
                    Some(j) if grid.space() == space => Ok(deflate(base, pairs, j)),
                    _ => Err(PieError::InterpolationUnsupported(
                        alpha.iter().map(|&v| to_f64(v)).collect(),
                    )),
                }
            }
        }
    }

    /// Sample matrix at fiber node `j` of `grid`.
    pub fn fiber_matrix_at(&self, grid: &ProductGrid<T>, j: usize) -> Result<DMatrix<C<T>>> {
        let base = self.base.fiber_matrix_at(grid, j)?;
        match &self.mode {
            ViewMode::Plain => Ok(base),
            ViewMode::Adjoint => Ok(base.adjoint()),
            ViewMode::Deflated(pairs) => {
                if let Some((f0, _)) = pairs.first() {
                    if **f0.grid() != *grid {
                        return Err(PieError::InvalidArgument(
                            "deflation pairs live on a different grid".into(),
                        ));
                    }
                }
                Ok(deflate(base, pairs, j))
            }
        }
    }
}

fn deflate<T: Real>(
    mut k: DMatrix<C<T>>,
    pairs: &[(FiberFunction<T>, FiberFunction<T>)],
    j: usize,
) -> DMatrix<C<T>> {
    for (f, g) in pairs {
        let (fj, gj) = (f.fiber(j), g.fiber(j));
        for i in 0..k.nrows() {
            for s in 0..k.ncols() {
                k[(i, s)] -= fj[s].conj() * gj[i];
            }
        }
    }
    k
}

/// `b(t) = ∬ |q(x, s, t)|² dx ds` at every fiber node, and its maximum.
///
/// A finite maximum certifies, at grid resolution, that the operator maps
/// `L₂(Ω²)` into itself.
pub fn bound_function<T: Real>(kernel: &Kernel<T>, grid: &SharedGrid<T>) -> Result<(L0Scalar<T>, T)> {
    let w = grid.space().weights();
    let mut values = Vec::with_capacity(grid.n_fibers());
    let mut sup = T::zero();
    for j in 0..grid.n_fibers() {
        let k = kernel.fiber_matrix_at(grid, j)?;
        let mut b = T::zero();
        for i in 0..k.nrows() {
            for s in 0..k.ncols() {
                b += w[i] * w[s] * modulus_sq(k[(i, s)]);
            }
        }
        sup = sup.max(b);
        values.push(re(b));
    }
    Ok((L0Scalar::new(grid.clone(), values)?, sup))
}
