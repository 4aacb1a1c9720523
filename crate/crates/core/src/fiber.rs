//! Nyström discretization of the fiber operators
//! `S_α φ = ∫ q(x, s, α) φ(s) ds` on `L₂(Ω)`.
//!
//! With kernel samples `K[i, j] = q(xᵢ, xⱼ, α)` and weights `W = diag(w)`,
//! the operator acts on node values as `A = K·W`. Determinants, singular
//! values and eigenvalues use the similar weight-symmetrized matrix
//! `Â = W^{1/2}·K·W^{1/2}`, whose Euclidean geometry is the weighted `L₂`
//! geometry of node values; the adjoint operator is then exactly `Â*`.
//!
//! A fiber is numerically singular for `ϰ` when
//! `σ_min(I − ϰÂ) <= tol·σ_max(I − ϰÂ)`, and the nullspace is spanned by
//! the right singular vectors below that threshold, so singularity and
//! non-trivial nullspace are one decision.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{PieError, Result};
use crate::grid::{ProductGrid, QuadratureGrid};
use crate::kernel::KernelView;
use crate::scalar::{is_finite, modulus, re, to_f64, Real, C};

/// Default relative singular-value threshold for fiber singularity.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FiberOperator<T> {
    fiber: Option<usize>,
    alpha: Vec<T>,
    kernel: DMatrix<C<T>>,
    weights: Vec<T>,
    sqrt_weights: Vec<T>,
}

/// Singular-value summary of `I − ϰÂ` on one fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularity<T> {
    pub det: C<T>,
    /// Descending.
    pub singular_values: Vec<T>,
    pub nullity: usize,
}

impl<T: Real> Regularity<T> {
    pub fn sigma_max(&self) -> T {
        self.singular_values.first().copied().unwrap_or_else(T::zero)
    }

    pub fn sigma_min(&self) -> T {
        self.singular_values.last().copied().unwrap_or_else(T::zero)
    }

    pub fn is_regular(&self) -> bool {
        self.nullity == 0
    }

    /// Determinant level below which the fiber counts as singular:
    /// `tol · σ_max · Π_{i < N−1} σ_i`.
    ///
    /// Since `|det| = Π σ_i`, the comparison `|det| <= det_threshold(tol)` is
    /// the singular-value criterion restated for the determinant.
    pub fn det_threshold(&self, tol: T) -> T {
        let n = self.singular_values.len();
        if n == 0 {
            return T::zero();
        }
        let others = self.singular_values[..n - 1]
            .iter()
            .fold(T::one(), |acc, &s| acc * s);
        tol * self.sigma_max() * others
    }
}

/// Orthonormal basis of the numerical nullspace of `I − ϰÂ`, as node values
/// of functions with unit weighted `L₂` norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberNullspace<T> {
    pub alpha: Vec<T>,
    pub kappa: C<T>,
    pub basis: Vec<Vec<C<T>>>,
    pub dim: usize,
    pub sigma_min: T,
}

impl<T: Real> FiberOperator<T> {
    /// Samples the view on the nodes of `space` at fiber coordinate `alpha`.
    pub fn assemble(view: &KernelView<'_, T>, space: &QuadratureGrid<T>, alpha: &[T]) -> Result<Self> {
        let kernel = view.fiber_matrix(space, alpha)?;
        Self::from_samples(None, alpha.to_vec(), kernel, space.weights().to_vec())
    }

    /// As [`assemble`](Self::assemble) at fiber node `j` of `grid`.
    pub fn assemble_at(view: &KernelView<'_, T>, grid: &ProductGrid<T>, j: usize) -> Result<Self> {
        let kernel = view.fiber_matrix_at(grid, j)?;
        Self::from_samples(
            Some(j),
            grid.fibers().node(j).to_vec(),
            kernel,
            grid.space().weights().to_vec(),
        )
    }

    pub fn from_samples(
        fiber: Option<usize>,
        alpha: Vec<T>,
        kernel: DMatrix<C<T>>,
        weights: Vec<T>,
    ) -> Result<Self> {
        if kernel.nrows() != kernel.ncols() || kernel.nrows() != weights.len() {
            return Err(PieError::InvalidArgument(
                "kernel samples must be square and match the weights".into(),
            ));
        }
        if !kernel.iter().all(|&v| is_finite(v)) {
            return Err(PieError::Evaluation {
                x: Vec::new(),
                s: Vec::new(),
                y: alpha.iter().map(|&v| to_f64(v)).collect(),
            });
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self {
            fiber,
            alpha,
            kernel,
            weights,
            sqrt_weights,
        })
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn fiber_index(&self) -> Option<usize> {
        self.fiber
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Unweighted samples `K[i, j] = q(xᵢ, xⱼ, α)`.
    pub fn kernel_samples(&self) -> &DMatrix<C<T>> {
        &self.kernel
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Nyström matrix `A[i, j] = q(xᵢ, xⱼ, α)·wⱼ`.
    pub fn matrix(&self) -> DMatrix<C<T>> {
        let mut a = self.kernel.clone();
        for (j, &w) in self.weights.iter().enumerate() {
            a.column_mut(j).scale_mut(w);
        }
        a
    }

    /// `Â = W^{1/2}·K·W^{1/2}`.
    pub fn symmetrized(&self) -> DMatrix<C<T>> {
        let sw = &self.sqrt_weights;
        DMatrix::from_fn(self.len(), self.len(), |i, j| self.kernel[(i, j)] * (sw[i] * sw[j]))
    }

    fn shifted(&self, kappa: C<T>, m: DMatrix<C<T>>) -> DMatrix<C<T>> {
        let mut b = m * (-kappa);
        for i in 0..self.len() {
            b[(i, i)] += re(T::one());
        }
        b
    }

    /// `det(I − ϰÂ)`, the Nyström approximation of the Fredholm determinant.
    pub fn fiber_determinant(&self, kappa: C<T>) -> C<T> {
        self.shifted(kappa, self.symmetrized()).determinant()
    }

    pub fn regularity(&self, kappa: C<T>, tol: T) -> Regularity<T> {
        let b = self.shifted(kappa, self.symmetrized());
        let det = b.clone().determinant();
        let svd = b.svd(false, false);
        let singular_values: Vec<T> = svd.singular_values.iter().copied().collect();
        let cutoff = tol * singular_values.first().copied().unwrap_or_else(T::zero);
        let nullity = singular_values.iter().filter(|&&s| s <= cutoff).count();
        Regularity {
            det,
            singular_values,
            nullity,
        }
    }

    fn require_regular(&self, kappa: C<T>, tol: T) -> Result<()> {
        let reg = self.regularity(kappa, tol);
        if reg.is_regular() {
            Ok(())
        } else {
            Err(PieError::SingularFiber {
                fiber: self.fiber,
                alpha: self.alpha.iter().map(|&v| to_f64(v)).collect(),
                det_abs: to_f64(modulus(reg.det)),
            })
        }
    }

    /// Solves `φ − ϰAφ = rhs` on a regular fiber.
    pub fn fiber_solve(&self, kappa: C<T>, rhs: &[C<T>], tol: T) -> Result<Vec<C<T>>> {
        if rhs.len() != self.len() {
            return Err(PieError::InvalidArgument(format!(
                "right-hand side has {} entries, fiber has {} nodes",
                rhs.len(),
                self.len()
            )));
        }
        if kappa == re(T::zero()) {
            return Ok(rhs.to_vec());
        }
        self.require_regular(kappa, tol)?;
        let lu = self.shifted(kappa, self.matrix()).lu();
        let b = DVector::from_column_slice(rhs);
        let x = lu.solve(&b).ok_or_else(|| PieError::SingularFiber {
            fiber: self.fiber,
            alpha: self.alpha.iter().map(|&v| to_f64(v)).collect(),
            det_abs: 0.0,
        })?;
        Ok(x.iter().copied().collect())
    }

    /// Samples of the resolvent kernel `R = (I − ϰKW)⁻¹K` at node pairs.
    pub fn resolvent_kernel(&self, kappa: C<T>, tol: T) -> Result<DMatrix<C<T>>> {
        if kappa == re(T::zero()) {
            return Ok(self.kernel.clone());
        }
        self.require_regular(kappa, tol)?;
        self.shifted(kappa, self.matrix())
            .lu()
            .solve(&self.kernel)
            .ok_or_else(|| PieError::SingularFiber {
                fiber: self.fiber,
                alpha: self.alpha.iter().map(|&v| to_f64(v)).collect(),
                det_abs: 0.0,
            })
    }

    /// Numerical nullspace of `I − ϰÂ`, mapped back to node values.
    ///
    /// Each basis vector is scaled so that its largest-modulus entry is real
    /// and positive.
    pub fn fiber_nullspace(&self, kappa: C<T>, tol: T) -> FiberNullspace<T> {
        let b = self.shifted(kappa, self.symmetrized());
        let svd = b.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let sigma: Vec<T> = svd.singular_values.iter().copied().collect();
        let cutoff = tol * sigma.first().copied().unwrap_or_else(T::zero);
        let basis: Vec<Vec<C<T>>> = sigma
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= cutoff)
            .map(|(k, _)| {
                let v: Vec<C<T>> = v_t
                    .row(k)
                    .iter()
                    .zip(&self.sqrt_weights)
                    .map(|(u, &sw)| u.conj() / sw)
                    .collect();
                normalize_phase(v)
            })
            .collect();
        FiberNullspace {
            alpha: self.alpha.clone(),
            kappa,
            dim: basis.len(),
            basis,
            sigma_min: sigma.last().copied().unwrap_or_else(T::zero),
        }
    }

    /// Eigenvalues of `Â` (equivalently of `A`).
    pub fn eigenvalues(&self) -> Result<Vec<C<T>>> {
        let n = self.len();
        let eps = T::default_epsilon();
        let schur = Schur::try_new(self.symmetrized(), eps, 100 * n.max(10)).ok_or_else(|| {
            PieError::InternalConsistency(format!(
                "Schur iteration did not converge on fiber {:?}",
                self.fiber
            ))
        })?;
        let (_, t) = schur.unpack();
        Ok((0..n).map(|i| t[(i, i)]).collect())
    }

    /// `Aφ`, the Nyström action of the fiber operator on node values.
    pub fn apply(&self, phi: &[C<T>]) -> Vec<C<T>> {
        (0..self.len())
            .map(|i| {
                (0..self.len()).fold(re(T::zero()), |acc, j| {
                    acc + self.kernel[(i, j)] * phi[j] * self.weights[j]
                })
            })
            .collect()
    }
}

fn normalize_phase<T: Real>(v: Vec<C<T>>) -> Vec<C<T>> {
    let mut best = 0;
    let mut best_mod = T::zero();
    for (i, &z) in v.iter().enumerate() {
        let m = modulus(z);
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    if best_mod == T::zero() {
        return v;
    }
    let phase = v[best].conj() / best_mod;
    v.into_iter().map(|z| z * phase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Rule};
    use crate::kernel::{BuiltinKernel, Kernel};
    use crate::l0::FiberFunction;
    use crate::scalar::modulus_sq;
    use std::sync::Arc;

    const TOL: f64 = DEFAULT_SINGULAR_TOL;

    fn space(n: usize) -> QuadratureGrid<f64> {
        QuadratureGrid::build(Domain::unit(1).unwrap(), Rule::GaussLegendre, n).unwrap()
    }

    fn c(re: f64) -> C<f64> {
        C::new(re, 0.0)
    }

    fn one() -> Kernel<f64> {
        Kernel::constant(Domain::unit(1).unwrap(), 1.0)
    }

    fn poly(x: u32, s: u32, y: u32) -> Kernel<f64> {
        Kernel::builtin(
            Domain::unit(1).unwrap(),
            BuiltinKernel::Polynomial {
                coeff: c(1.0),
                x_pow: x,
                s_pow: s,
                y_pow: y,
            },
        )
    }

    fn op(k: &Kernel<f64>, n: usize, alpha: f64) -> FiberOperator<f64> {
        FiberOperator::assemble(&k.view(), &space(n), &[alpha]).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let a = op(&one(), 2, 0.3).matrix();
        assert!(a.iter().all(|v| (v - c(0.5)).norm() < 1e-15));
        assert!(op(&poly(0, 0, 1), 4, 0.0).matrix().iter().all(|v| *v == c(0.0)));

        let g = Arc::new(ProductGrid::uniform(Domain::unit(1).unwrap(), Rule::GaussLegendre, 4, 3).unwrap());
        let k = one();
        let f = FiberFunction::from_fn(g.clone(), |_, _| c(1.0));
        let view = k.deflated(vec![(f.clone(), f)]).unwrap();
        let a = FiberOperator::assemble_at(&view, &g, 1).unwrap().matrix();
        assert!(a.iter().all(|v| *v == c(0.0)));
    }

    #[test]
    fn determinant_examples() {
        for n in [2, 5, 16] {
            assert!(op(&one(), n, 0.5).fiber_determinant(c(1.0)).norm() < 1e-12);
            assert_eq!(op(&one(), n, 0.5).fiber_determinant(c(0.0)), c(1.0));
            assert!(op(&poly(1, 1, 0), n, 0.5).fiber_determinant(c(3.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn solve_examples() {
        let o = op(&one(), 8, 0.2);
        let phi = o.fiber_solve(c(0.5), &[c(1.0); 8], TOL).unwrap();
        assert!(phi.iter().all(|v| (v - c(2.0)).norm() < 1e-13));
        let rhs: Vec<_> = (0..8).map(|i| C::new(i as f64, -1.0)).collect();
        assert_eq!(o.fiber_solve(c(0.0), &rhs, TOL).unwrap(), rhs);
        assert!(matches!(
            o.fiber_solve(c(1.0), &[c(1.0); 8], TOL),
            Err(PieError::SingularFiber { .. })
        ));
    }

    #[test]
    fn nullspace_examples() {
        let o = op(&one(), 8, 0.2);
        let ns = o.fiber_nullspace(c(1.0), TOL);
        assert_eq!(ns.dim, 1);
        assert!(ns.basis[0].iter().all(|v| (v - c(1.0)).norm() < 1e-12));
        assert_eq!(o.fiber_nullspace(c(0.5), TOL).dim, 0);
        let k = one();
        let adj = FiberOperator::assemble(&k.adjoint(), &space(8), &[0.2]).unwrap();
        assert_eq!(adj.fiber_nullspace(c(1.0), TOL).dim, 1);
    }

    #[test]
    fn nullspace_basis_is_weighted_orthonormal() {
        // q = 1 + P1(x)P1(s)·3 has eigenvalue 1 twice: κ = 1 nullity 2
        let d = Domain::unit(1).unwrap();
        use crate::kernel::{Basis, Factor, RankTerm};
        let f = |b| Factor::new(c(1.0), b, Basis::One);
        let k = Kernel::finite_rank(
            d,
            vec![
                RankTerm::new(f(Basis::One), f(Basis::One)),
                RankTerm::new(Factor::new(c(3.0), Basis::Legendre(1), Basis::One), f(Basis::Legendre(1))),
            ],
        )
        .unwrap();
        let o = op(&k, 10, 0.4);
        let ns = o.fiber_nullspace(c(1.0), TOL);
        assert_eq!(ns.dim, 2);
        let w = o.weights();
        for a in 0..2 {
            for b in 0..2 {
                let ip = crate::l0::weighted_dot(&ns.basis[a], &ns.basis[b], w);
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - c(expected)).norm() < 1e-12);
            }
            let img = o.apply(&ns.basis[a]);
            assert!(img.iter().zip(&ns.basis[a]).all(|(u, v)| (u - v).norm() < 1e-12));
        }
    }

    #[test]
    fn resolvent_examples() {
        let o = op(&one(), 8, 0.2);
        let r = o.resolvent_kernel(c(0.5), TOL).unwrap();
        assert!(r.iter().all(|v| (v - c(2.0)).norm() < 1e-12));
        assert_eq!(o.resolvent_kernel(c(0.0), TOL).unwrap(), *o.kernel_samples());
        let o = op(&poly(1, 1, 0), 8, 0.2);
        let r = o.resolvent_kernel(c(1.5), TOL).unwrap();
        let nodes: Vec<f64> = space(8).nodes().map(|p| p[0]).collect();
        for i in 0..8 {
            for j in 0..8 {
                assert!((r[(i, j)] - c(2.0 * nodes[i] * nodes[j])).norm() < 1e-12);
            }
        }
    }

    fn gaussian() -> Kernel<f64> {
        Kernel::builtin(
            Domain::unit(1).unwrap(),
            BuiltinKernel::GaussianBump {
                amplitude: 1.0,
                width: 0.5,
            },
        )
    }

    #[test]
    fn resolvent_identity_and_solve_consistency() {
        let k = gaussian();
        for &kappa in &[C::new(0.7, 0.3), C::new(-1.5, 0.0), C::new(0.0, 2.0)] {
            let o = op(&k, 12, 0.35);
            let r = o.resolvent_kernel(kappa, TOL).unwrap();
            let kw = o.matrix();
            let mut rw = r.clone();
            for (j, &w) in o.weights().iter().enumerate() {
                rw.column_mut(j).scale_mut(w);
            }
            let id = DMatrix::<C<f64>>::identity(12, 12);
            let prod = (&id - &kw * kappa) * (&id + &rw * kappa);
            assert!((prod - &id).iter().all(|v| v.norm() < 1e-10));

            let rhs: Vec<_> = (0..12).map(|i| C::new((i as f64).sin(), 0.5)).collect();
            let phi = o.fiber_solve(kappa, &rhs, TOL).unwrap();
            let via_r = &rw * DVector::from_column_slice(&rhs) * kappa + DVector::from_column_slice(&rhs);
            assert!(phi.iter().zip(via_r.iter()).all(|(a, b)| (a - b).norm() < 1e-10));
            let resid = phi
                .iter()
                .zip(o.apply(&phi))
                .zip(&rhs)
                .map(|((p, ap), r)| modulus_sq(p - ap * kappa - r))
                .sum::<f64>()
                .sqrt();
            let scale = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
                + phi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(resid <= 1e-10 * scale);
        }
    }

    #[test]
    fn adjoint_nullity_matches() {
        let k = gaussian();
        let o = op(&k, 10, 0.6);
        let adj = FiberOperator::assemble(&k.adjoint(), &space(10), &[0.6]).unwrap();
        for lam in o.eigenvalues().unwrap().into_iter().filter(|l| l.norm() > 1e-3) {
            let kappa = lam.inv();
            let d = o.fiber_nullspace(kappa, 1e-6).dim;
            let a = adj.fiber_nullspace(kappa.conj(), 1e-6).dim;
            assert_eq!(d, a);
            assert!(d >= 1);
        }
    }

    #[test]
    fn determinant_threshold_matches_nullity() {
        let k = gaussian();
        let o = op(&k, 10, 0.6);
        let lam = o.eigenvalues().unwrap()[0];
        for kappa in [lam.inv(), lam.inv() * 1.01, C::new(0.3, 0.0)] {
            let reg = o.regularity(kappa, TOL);
            let singular_by_det = modulus(reg.det) <= reg.det_threshold(TOL);
            assert_eq!(singular_by_det, !reg.is_regular(), "kappa={kappa}");
            assert_eq!(o.fiber_nullspace(kappa, TOL).dim, reg.nullity);
        }
    }

    #[test]
    fn refinement_of_determinant() {
        let kernels = [one(), poly(1, 1, 0), poly(2, 1, 1), gaussian()];
        for k in &kernels {
            for kappa in [C::new(2.0, 0.0), C::new(-2.0, 0.0), C::new(0.0, 1.5), C::new(1.0, 1.0)] {
                for alpha in [0.1, 0.5, 0.9] {
                    let d16 = op(k, 16, alpha).fiber_determinant(kappa);
                    let d32 = op(k, 32, alpha).fiber_determinant(kappa);
                    assert!((d16 - d32).norm() < 1e-8, "{d16} vs {d32}");
                }
            }
        }
    }

    #[test]
    fn eigenvalues_of_rank_one() {
        let eig = op(&poly(1, 1, 0), 6, 0.5).eigenvalues().unwrap();
        let top = eig.iter().fold(c(0.0), |a, &b| if b.norm() > a.norm() { b } else { a });
        assert!((top - c(1.0 / 3.0)).norm() < 1e-14);
        let rest = eig.iter().filter(|v| v.norm() < 1e-12).count();
        assert_eq!(rest, 5);
    }
}
