//! Independent references for testing the production paths.
//!
//! Separable kernels `q = Σ aⱼ(x, y)·bⱼ(s, y)` reduce every fiber equation
//! to an `r × r` linear system, so determinants and resolvents are available
//! in closed form up to one-dimensional integrals, which are evaluated here
//! with twice the quadrature order of the production grid. The dense direct
//! solve assembles all fibers into one block-diagonal system and factors it
//! in a single LU, instead of fiber by fiber.

use nalgebra::{DMatrix, DVector};

use crate::error::{PieError, Result};
use crate::grid::{Domain, QuadratureGrid, Rule};
use crate::kernel::{Kernel, KernelKind, RankTerm};
use crate::l0::{FiberFunction, SharedGrid};
use crate::scalar::{lit, modulus, re, to_f64, Real, C};

/// Oracle quadrature points per axis.
pub const ORACLE_ORDER: usize = 64;

/// A separable kernel `Σ aⱼ(x, y)·bⱼ(s, y)` with closed-form factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableSpec<T> {
    domain: Domain<T>,
    terms: Vec<RankTerm<T>>,
}

impl<T: Real> SeparableSpec<T> {
    pub fn new(domain: Domain<T>, terms: Vec<RankTerm<T>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(PieError::InvalidArgument("separable kernel needs at least one term".into()));
        }
        Ok(Self { domain, terms })
    }

    /// The separable form of a finite-rank kernel.
    pub fn from_kernel(kernel: &Kernel<T>) -> Result<Self> {
        match kernel.kind() {
            KernelKind::FiniteRank(terms) => Self::new(*kernel.domain(), terms.clone()),
            _ => Err(PieError::InvalidArgument("kernel is not finite-rank".into())),
        }
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[RankTerm<T>] {
        &self.terms
    }

    pub fn a(&self, j: usize, x: &[T], y: &[T]) -> C<T> {
        self.terms[j].left.eval(&self.domain, x, y)
    }

    pub fn b(&self, j: usize, s: &[T], y: &[T]) -> C<T> {
        self.terms[j].right.eval(&self.domain, s, y)
    }

    /// `G[j, k] = ∫ bⱼ(t, α)·a_k(t, α) dt`.
    pub fn gram(&self, alpha: &[T], order: usize) -> Result<DMatrix<C<T>>> {
        let quad = QuadratureGrid::build(self.domain, Rule::GaussLegendre, order)?;
        let r = self.rank();
        let mut g = DMatrix::from_element(r, r, re(T::zero()));
        for (t, w) in quad.nodes().zip(quad.weights()) {
            let a: Vec<C<T>> = (0..r).map(|k| self.a(k, t, alpha)).collect();
            for j in 0..r {
                let bj = self.b(j, t, alpha) * *w;
                for k in 0..r {
                    g[(j, k)] += bj * a[k];
                }
            }
        }
        Ok(g)
    }
}

/// Rank-one reference: determinant and resolvent kernel on one fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Reference<T> {
    pub det: C<T>,
    pub singular: bool,
    spec: SeparableSpec<T>,
    alpha: Vec<T>,
}

impl<T: Real> Rank1Reference<T> {
    /// `a(x, α)·b(s, α)/det`; `None` when the fiber is singular.
    pub fn resolvent(&self, x: &[T], s: &[T]) -> Option<C<T>> {
        if self.singular {
            return None;
        }
        Some(self.spec.a(0, x, &self.alpha) * self.spec.b(0, s, &self.alpha) / self.det)
    }
}

/// `det = 1 − ϰ ∫ a(t, α)·b(t, α) dt`.
pub fn rank1_reference<T: Real>(spec: &SeparableSpec<T>, kappa: C<T>, alpha: &[T]) -> Result<Rank1Reference<T>> {
    if spec.rank() != 1 {
        return Err(PieError::InvalidArgument(format!(
            "rank-one reference needs one term, got {}",
            spec.rank()
        )));
    }
    let g = spec.gram(alpha, ORACLE_ORDER)?;
    let det = re(T::one()) - kappa * g[(0, 0)];
    let scale = T::one() + modulus(kappa * g[(0, 0)]);
    Ok(Rank1Reference {
        det,
        singular: modulus(det) <= lit::<T>(1e3) * T::default_epsilon() * scale,
        spec: spec.clone(),
        alpha: alpha.to_vec(),
    })
}

/// `det(I_r − ϰG)` with `G` from [`SeparableSpec::gram`].
pub fn finite_rank_reference<T: Real>(spec: &SeparableSpec<T>, kappa: C<T>, alpha: &[T]) -> Result<C<T>> {
    let g = spec.gram(alpha, ORACLE_ORDER)?;
    let r = spec.rank();
    let m = DMatrix::identity(r, r) - g * kappa;
    Ok(m.determinant())
}

/// Solves all fibers at once as one block-diagonal Nyström system.
pub fn dense_direct_solve<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    g0: &FiberFunction<T>,
) -> Result<FiberFunction<T>> {
    let n = grid.n_space();
    let nf = grid.n_fibers();
    let size = n * nf;
    let w = grid.space().weights();
    let mut a = DMatrix::from_element(size, size, re(T::zero()));
    let mut rhs = DVector::from_element(size, re(T::zero()));
    for j in 0..nf {
        let y = grid.fibers().node(j);
        for (i, x) in grid.space().nodes().enumerate() {
            let row = j * n + i;
            rhs[row] = g0.get(i, j);
            for (k, s) in grid.space().nodes().enumerate() {
                let col = j * n + k;
                let delta = if i == k { T::one() } else { T::zero() };
                a[(row, col)] = re(delta) - kappa * kernel.eval(x, s, y)? * w[k];
            }
        }
    }
    let lu = a.lu();
    let u = lu.u();
    let pivots: Vec<T> = (0..size).map(|d| modulus(u[(d, d)])).collect();
    let top = pivots.iter().fold(T::zero(), |m, &p| m.max(p));
    if let Some(bad) = pivots.iter().position(|&p| p <= lit::<T>(1e-12) * top) {
        let fiber = bad / n;
        return Err(PieError::SingularFiber {
            fiber: Some(fiber),
            alpha: grid.fibers().node(fiber).iter().map(|&v| to_f64(v)).collect(),
            det_abs: to_f64(pivots[bad]),
        });
    }
    let sol = lu.solve(&rhs).ok_or_else(|| PieError::InternalConsistency("dense LU failed".into()))?;
    FiberFunction::from_values(grid.clone(), sol.iter().copied().collect())
}
