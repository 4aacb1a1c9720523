//! End-to-end treatment of `f − ϰSf = g₀`.
//!
//! - [`classify`] decides, fiber by fiber, whether `I − ϰS_α` is singular and
//!   turns the pattern into a [`Classification`]: regular, characteristic
//!   (singular on a set of positive measure), or singular on a null set only.
//! - [`find_characteristic_numbers`] looks for reciprocals of fiber
//!   eigenvalues that persist across a positive-measure set of fibers.
//! - [`null_families`] assembles `L⁰`-orthonormal solutions of the
//!   homogeneous equation and of its adjoint, and checks they have the same
//!   number of members.
//! - [`check_solvability`] tests `⟨g₀, g⟩ = 0` for every adjoint null function.
//! - [`solve`] solves fiberwise in the regular case and, in the
//!   characteristic case, solves the deflated equation with kernel
//!   `p = q − Σ conj(fⱼ)·gⱼ`, whose fibers are regular, then verifies the
//!   result against the original equation.
//!
//! Per-fiber work runs as an ordered parallel map, so results do not depend
//! on the number of worker threads.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{PieError, Result};
use crate::fiber::{FiberOperator, DEFAULT_SINGULAR_TOL};
use crate::kernel::{bound_function, Kernel, KernelView};
use crate::l0::{
    inner, l0_orthonormalize, nabla_independent_on, FiberFunction, L0Scalar, NablaMask,
    SharedGrid, DEFAULT_RANK_TOL, DEFAULT_TAU,
};
use crate::scalar::{lit, modulus, re, to_f64, Real, C};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Relative singular-value threshold for fiber singularity.
    pub singular_tol: T,
    /// Relative threshold for fiberwise rank decisions on families.
    pub rank_tol: T,
    /// Fraction of fiber nodes that counts as positive measure.
    pub tau: f64,
    /// Relative tolerance for grouping characteristic-number candidates.
    pub cluster_tol: T,
    /// `|⟨g₀, g⟩| <= solvability_tol·‖g₀‖` passes the orthogonality test.
    pub solvability_tol: T,
    /// Required relative residual of any returned solution.
    pub residual_tol: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            singular_tol: lit(DEFAULT_SINGULAR_TOL),
            rank_tol: lit(DEFAULT_RANK_TOL),
            tau: DEFAULT_TAU,
            cluster_tol: lit(1e-6),
            solvability_tol: lit(1e-8),
            residual_tol: lit(1e-8),
        }
    }
}

/// Singular-value data of `I − ϰÂ` on one fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberDiagnostic<T> {
    pub alpha: Vec<T>,
    pub det: C<T>,
    pub sigma_min: T,
    pub sigma_max: T,
    pub nullity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassKind {
    Regular,
    /// Singular on a set of positive measure; `m` is the largest fiber nullity.
    Characteristic { m: usize },
    /// Singular on a non-empty set of fibers below the positive-measure level.
    SingularFibers { mask: NablaMask },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<T> {
    pub kappa: C<T>,
    pub kind: ClassKind,
    /// `det(I − ϰÂ)` at every fiber node.
    pub det_profile: L0Scalar<T>,
    pub fibers: Vec<FiberDiagnostic<T>>,
    /// Fibers with non-trivial nullspace.
    pub deficient: NablaMask,
}

impl<T: Real> Classification<T> {
    pub fn is_regular(&self) -> bool {
        self.kind == ClassKind::Regular
    }

    pub fn is_characteristic(&self) -> bool {
        matches!(self.kind, ClassKind::Characteristic { .. })
    }
}

fn fiber_map<R, F>(n: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Singular-value scan of `I − ϰÂ` over all fibers.
pub fn scan_fibers<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    singular_tol: T,
) -> Result<Vec<FiberDiagnostic<T>>> {
    fiber_map(grid.n_fibers(), |j| {
        let op = FiberOperator::assemble_at(view, grid, j)?;
        let reg = op.regularity(kappa, singular_tol);
        Ok(FiberDiagnostic {
            alpha: op.alpha().to_vec(),
            det: reg.det,
            sigma_min: reg.sigma_min(),
            sigma_max: reg.sigma_max(),
            nullity: reg.nullity,
        })
    })
}

pub fn classify<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    cfg: &SolverConfig<T>,
) -> Result<Classification<T>> {
    let fibers = scan_fibers(view, grid, kappa, cfg.singular_tol)?;
    let det_profile = L0Scalar::new(grid.clone(), fibers.iter().map(|f| f.det).collect())?;
    let deficient = NablaMask::new(fibers.iter().map(|f| f.nullity > 0).collect());
    let kind = if deficient.none_set() {
        ClassKind::Regular
    } else if deficient.has_positive_measure(cfg.tau) {
        ClassKind::Characteristic {
            m: fibers.iter().map(|f| f.nullity).max().unwrap_or(0),
        }
    } else {
        ClassKind::SingularFibers {
            mask: deficient.clone(),
        }
    };
    Ok(Classification {
        kappa,
        kind,
        det_profile,
        fibers,
        deficient,
    })
}

/// Bounded part of the complex `ϰ` plane searched for characteristic numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchRegion<T> {
    Disc { center: C<T>, radius: T },
    Rect { re: (T, T), im: (T, T) },
}

impl<T: Real> SearchRegion<T> {
    pub fn contains(&self, z: C<T>) -> bool {
        match *self {
            SearchRegion::Disc { center, radius } => modulus(z - center) <= radius,
            SearchRegion::Rect { re, im } => z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SearchRegion::Disc { center, radius } => {
                radius > T::zero() && crate::scalar::is_finite(center) && crate::scalar::is_finite(re(radius))
            }
            SearchRegion::Rect { re: r, im } => {
                r.0 <= r.1 && im.0 <= im.1 && [r.0, r.1, im.0, im.1].iter().all(|&v| crate::scalar::is_finite(re(v)))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PieError::InvalidArgument("search region must be bounded and non-empty".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicNumber<T> {
    pub kappa: C<T>,
    pub m: usize,
    /// Fraction of fibers on which the reciprocal eigenvalue appears.
    pub support_fraction: f64,
}

/// Characteristic numbers inside `region`, sorted by real then imaginary part.
///
/// Reciprocals `1/λ` of the eigenvalues of every fiber are grouped when they
/// lie within `cluster_tol` (relative) of each other; a group present on at
/// least a `τ` fraction of fibers yields its mean as a candidate, which is
/// kept only if [`classify`] confirms it as characteristic.
pub fn find_characteristic_numbers<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    region: &SearchRegion<T>,
    cfg: &SolverConfig<T>,
) -> Result<Vec<CharacteristicNumber<T>>> {
    region.validate()?;
    let per_fiber = fiber_map(grid.n_fibers(), |j| {
        let op = FiberOperator::assemble_at(view, grid, j)?;
        let eig = op.eigenvalues()?;
        let scale = eig.iter().fold(T::zero(), |a, &l| a.max(modulus(l)));
        let floor = lit::<T>(1e3) * T::default_epsilon() * scale.max(T::one());
        Ok(eig
            .into_iter()
            .filter(|&l| modulus(l) > floor)
            .map(|l| re(T::one()) / l)
            .filter(|&k| region.contains(k))
            .collect::<Vec<_>>())
    })?;

    let mut points: Vec<(C<T>, usize)> = per_fiber
        .iter()
        .enumerate()
        .flat_map(|(j, ks)| ks.iter().map(move |&k| (k, j)))
        .collect();
    points.sort_by(|a, b| {
        a.0.re
            .partial_cmp(&b.0.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.im.partial_cmp(&b.0.im).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.1.cmp(&b.1))
    });

    let nf = grid.n_fibers();
    let mut assigned = vec![false; points.len()];
    let mut candidates = Vec::new();
    for i in 0..points.len() {
        if assigned[i] {
            continue;
        }
        let seed = points[i].0;
        let radius = cfg.cluster_tol * modulus(seed).max(T::one());
        let mut fibers = vec![false; nf];
        let mut sum = re(T::zero());
        let mut count = 0usize;
        for (k, &(z, j)) in points.iter().enumerate().skip(i) {
            if !assigned[k] && modulus(z - seed) <= radius {
                assigned[k] = true;
                fibers[j] = true;
                sum += z;
                count += 1;
            }
        }
        let support = NablaMask::new(fibers);
        if support.has_positive_measure(cfg.tau) {
            candidates.push((sum / lit::<T>(count as f64), support.fraction()));
        }
    }

    let mut found = Vec::new();
    for (kappa, support_fraction) in candidates {
        let class = classify(view, grid, kappa, cfg)?;
        if let ClassKind::Characteristic { m } = class.kind {
            found.push(CharacteristicNumber {
                kappa,
                m,
                support_fraction,
            });
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Direct,
    Adjoint,
}

/// `L⁰`-orthonormal solutions of `f − ϰSf = 0` (direct) or
/// `f − conj(ϰ)S*f = 0` (adjoint).
#[derive(Debug, Clone, PartialEq)]
pub struct NullFamily<T> {
    pub kappa: C<T>,
    pub side: Side,
    pub functions: Vec<FiberFunction<T>>,
    /// Fibers on which each member is non-zero.
    pub supports: Vec<NablaMask>,
}

impl<T: Real> NullFamily<T> {
    pub fn count(&self) -> usize {
        self.functions.len()
    }

    /// Fibers on which every member is supported.
    pub fn common_support(&self) -> Option<NablaMask> {
        let first = self.supports.first()?;
        let flags = (0..first.len())
            .map(|j| self.supports.iter().all(|m| m.get(j)))
            .collect();
        Some(NablaMask::new(flags))
    }
}

/// Direct and adjoint null families at a characteristic number `kappa0`.
///
/// Fiberwise nullspace bases are phase-aligned from one deficient fiber to
/// the next (unitary Procrustes against the previous fiber's basis), padded
/// with zeros where the nullity is lower, and `L⁰`-orthonormalized. The two
/// families must have the same number of members.
pub fn null_families<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    kappa0: C<T>,
    cfg: &SolverConfig<T>,
) -> Result<(NullFamily<T>, NullFamily<T>)> {
    null_families_inner(kernel, grid, kappa0, cfg, 0)
}

#[doc(hidden)]
pub mod test_hooks {
    use super::*;

    /// [`null_families`] with the adjoint count shifted by `skew`, to exercise
    /// the count-mismatch failure path.
    pub fn null_families_with_adjoint_skew<T: Real>(
        kernel: &Kernel<T>,
        grid: &SharedGrid<T>,
        kappa0: C<T>,
        cfg: &SolverConfig<T>,
        skew: isize,
    ) -> Result<(NullFamily<T>, NullFamily<T>)> {
        null_families_inner(kernel, grid, kappa0, cfg, skew)
    }
}

fn null_families_inner<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    kappa0: C<T>,
    cfg: &SolverConfig<T>,
    skew: isize,
) -> Result<(NullFamily<T>, NullFamily<T>)> {
    let direct_view = kernel.view();
    let adjoint_view = kernel.adjoint();
    let bases = fiber_map(grid.n_fibers(), |j| {
        let d = FiberOperator::assemble_at(&direct_view, grid, j)?.fiber_nullspace(kappa0, cfg.singular_tol);
        let a = FiberOperator::assemble_at(&adjoint_view, grid, j)?
            .fiber_nullspace(kappa0.conj(), cfg.singular_tol);
        Ok((d.basis, a.basis))
    })?;
    let (direct_bases, adjoint_bases): (Vec<_>, Vec<_>) = bases.into_iter().unzip();
    let deficient = NablaMask::new(direct_bases.iter().map(|b| !b.is_empty()).collect());
    if !deficient.has_positive_measure(cfg.tau) {
        return Err(PieError::InvalidArgument(format!(
            "kappa = {} is not a characteristic number on this grid",
            crate::scalar::complex_to_f64(kappa0)
        )));
    }

    let direct = assemble_family(grid, direct_bases, kappa0, Side::Direct, &direct_view, cfg)?;
    let adjoint = assemble_family(grid, adjoint_bases, kappa0.conj(), Side::Adjoint, &adjoint_view, cfg)?;

    let m = direct.count();
    let n = adjoint.count() as isize + skew;
    if n != m as isize {
        return Err(PieError::InternalConsistency(format!(
            "direct null family has {m} members but the adjoint family has {n}"
        )));
    }
    Ok((direct, adjoint))
}

fn assemble_family<T: Real>(
    grid: &SharedGrid<T>,
    bases: Vec<Vec<Vec<C<T>>>>,
    kappa: C<T>,
    side: Side,
    view: &KernelView<'_, T>,
    cfg: &SolverConfig<T>,
) -> Result<NullFamily<T>> {
    let w = grid.space().weights();
    let m = bases.iter().map(Vec::len).max().unwrap_or(0);
    let mut raw: Vec<FiberFunction<T>> = (0..m).map(|_| FiberFunction::zeros(grid.clone())).collect();
    let mut previous: Option<Vec<Vec<C<T>>>> = None;
    for (j, basis) in bases.into_iter().enumerate() {
        if basis.is_empty() {
            continue;
        }
        let aligned = match &previous {
            Some(prev) if prev.len() == basis.len() => procrustes_align(prev, basis, w),
            _ => basis,
        };
        for (k, v) in aligned.iter().enumerate() {
            raw[k].fiber_mut(j).copy_from_slice(v);
        }
        previous = Some(aligned);
    }
    let ortho = l0_orthonormalize(&raw, cfg.rank_tol)?;
    let family = NullFamily {
        kappa,
        side,
        functions: ortho.functions,
        supports: ortho.supports,
    };

    for (f, support) in family.functions.iter().zip(&family.supports) {
        let sf = apply_operator(view, grid, f)?;
        let r = f.sub(&sf.map(|v| v * kappa))?;
        let norm = f.l2_norm_on(Some(support));
        let resid = r.l2_norm_on(Some(support));
        if !(resid <= cfg.residual_tol * norm.max(T::one())) {
            return Err(PieError::InternalConsistency(format!(
                "{side:?} null function violates the homogeneous equation (residual {:e})",
                to_f64(resid)
            )));
        }
    }
    if let Some(common) = family.common_support() {
        if !common.none_set() {
            let verdict = nabla_independent_on(&family.functions, Some(&common), cfg.rank_tol)?;
            if !verdict.independent {
                return Err(PieError::InternalConsistency(format!(
                    "{side:?} null family is not independent on its common support"
                )));
            }
        }
    }
    Ok(family)
}

/// Rotates `current` within its span to best match `previous` in the weighted inner product.
fn procrustes_align<T: Real>(previous: &[Vec<C<T>>], current: Vec<Vec<C<T>>>, w: &[T]) -> Vec<Vec<C<T>>> {
    let d = current.len();
    // overlap[a][b] = ⟨previous_b, current_a⟩ = Σ w conj(current_a) previous_b
    let overlap = DMatrix::from_fn(d, d, |a, b| crate::l0::weighted_dot(&previous[b], &current[a], w));
    let svd = overlap.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return current;
    };
    let rot = u * v_t;
    (0..d)
        .map(|b| {
            let mut out = vec![re(T::zero()); current[0].len()];
            for (a, vec_a) in current.iter().enumerate() {
                let r = rot[(a, b)];
                for (o, &x) in out.iter_mut().zip(vec_a) {
                    *o += x * r;
                }
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solvability<T> {
    Solvable,
    /// `⟨g₀, g_index⟩` is not negligible; `witness` holds its fiber values.
    Obstructed { index: usize, witness: L0Scalar<T> },
}

impl<T> Solvability<T> {
    pub fn is_solvable(&self) -> bool {
        matches!(self, Solvability::Solvable)
    }
}

/// Orthogonality test `⟨g₀, g⟩ = 0` against every adjoint null function.
pub fn check_solvability<T: Real>(
    g0: &FiberFunction<T>,
    adjoint: &NullFamily<T>,
    tol: T,
) -> Result<Solvability<T>> {
    let scale = g0.l2_norm();
    for (index, g) in adjoint.functions.iter().enumerate() {
        let ip = inner(g0, g)?;
        if ip.max_modulus() > tol * scale {
            return Ok(Solvability::Obstructed { index, witness: ip });
        }
    }
    Ok(Solvability::Solvable)
}

/// The orthogonality test in the continuous-kernel setting,
/// `∫ g₀(s, t)·conj(g(s, t)) ds = 0` for almost all `t`.
///
/// Requires a closed-form kernel with finite `sup b(t)`, under which the
/// operator is bounded on `L₂(Ω²)`; the test itself is then the fiberwise one.
pub fn check_solvability_continuous<T: Real>(
    kernel: &Kernel<T>,
    g0: &FiberFunction<T>,
    adjoint: &NullFamily<T>,
    tol: T,
) -> Result<Solvability<T>> {
    if !kernel.is_continuous() {
        return Err(PieError::InvalidArgument(
            "continuous-kernel test needs a closed-form kernel".into(),
        ));
    }
    let (_, sup) = bound_function(kernel, g0.grid())?;
    if !crate::scalar::is_finite(re(sup)) {
        return Err(PieError::InvalidArgument("sup b(t) is not finite".into()));
    }
    check_solvability(g0, adjoint, tol)
}

/// `(Sf)(xᵢ, αⱼ)` by Nyström quadrature on every fiber.
pub fn apply_operator<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    f: &FiberFunction<T>,
) -> Result<FiberFunction<T>> {
    let fibers = fiber_map(grid.n_fibers(), |j| {
        let op = FiberOperator::assemble_at(view, grid, j)?;
        Ok(op.apply(f.fiber(j)))
    })?;
    FiberFunction::from_fibers(grid.clone(), fibers)
}

/// `‖f − ϰSf − g₀‖ / (‖g₀‖ + ‖f‖)` in the discrete `L₂(Ω²)` norm, over the
/// fibers in `mask` (all fibers when `None`).
pub fn relative_residual<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    f: &FiberFunction<T>,
    g0: &FiberFunction<T>,
    mask: Option<&NablaMask>,
) -> Result<T> {
    let sf = apply_operator(view, grid, f)?;
    let r = f.sub(&sf.map(|v| v * kappa))?.sub(g0)?;
    let denom = g0.l2_norm_on(mask) + f.l2_norm_on(mask);
    let num = r.l2_norm_on(mask);
    Ok(if denom > T::zero() { num / denom } else { num })
}

/// Direct and adjoint null families.
pub type FamilyPair<T> = (NullFamily<T>, NullFamily<T>);

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub kappa: C<T>,
    pub classification: Classification<T>,
    pub solution: Option<FiberFunction<T>>,
    /// Relative residual of `solution` in the original equation.
    pub residual: Option<T>,
    pub solvability: Solvability<T>,
    /// Fibers left out of the solution (singular fibers of a null set).
    pub excluded: NablaMask,
    /// Characteristic case: `max |⟨f₀, fⱼ⟩|` over members and fibers.
    pub orthogonality: Option<T>,
    /// Characteristic case: direct and adjoint null families.
    pub families: Option<FamilyPair<T>>,
}

pub fn solve<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    g0: &FiberFunction<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    if **g0.grid() != **grid {
        return Err(PieError::InvalidArgument("right-hand side lives on a different grid".into()));
    }
    let view = kernel.view();
    let classification = classify(&view, grid, kappa, cfg)?;
    match classification.kind.clone() {
        ClassKind::Regular => {
            let excluded = NablaMask::empty(grid.n_fibers());
            let solution = fiberwise_solve(&view, grid, kappa, g0, &excluded, cfg, false)?;
            finish(kernel, grid, kappa, g0, classification, solution, excluded, cfg, None)
        }
        ClassKind::SingularFibers { mask } => {
            let solution = fiberwise_solve(&view, grid, kappa, g0, &mask, cfg, false)?;
            finish(kernel, grid, kappa, g0, classification, solution, mask, cfg, None)
        }
        ClassKind::Characteristic { .. } => {
            let (direct, adjoint) = null_families(kernel, grid, kappa, cfg)?;
            let solvability = check_solvability(g0, &adjoint, cfg.solvability_tol)?;
            if !solvability.is_solvable() {
                return Ok(SolveReport {
                    kappa,
                    classification,
                    solution: None,
                    residual: None,
                    solvability,
                    excluded: NablaMask::empty(grid.n_fibers()),
                    orthogonality: None,
                    families: Some((direct, adjoint)),
                });
            }
            let pairs = direct
                .functions
                .iter()
                .cloned()
                .zip(adjoint.functions.iter().cloned())
                .collect();
            let deflated = kernel.deflated(pairs)?;
            let excluded = NablaMask::empty(grid.n_fibers());
            let solution = fiberwise_solve(&deflated, grid, kappa, g0, &excluded, cfg, true)?;
            let mut orth = T::zero();
            for f in &direct.functions {
                orth = orth.max(inner(&solution, f)?.max_modulus());
            }
            if !(orth <= cfg.residual_tol * solution.l2_norm().max(T::one())) {
                return Err(PieError::InternalConsistency(format!(
                    "deflated solution is not orthogonal to the null family ({:e})",
                    to_f64(orth)
                )));
            }
            finish(
                kernel,
                grid,
                kappa,
                g0,
                classification,
                solution,
                excluded,
                cfg,
                Some((orth, (direct, adjoint))),
            )
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    g0: &FiberFunction<T>,
    classification: Classification<T>,
    solution: FiberFunction<T>,
    excluded: NablaMask,
    cfg: &SolverConfig<T>,
    characteristic: Option<(T, FamilyPair<T>)>,
) -> Result<SolveReport<T>> {
    let included = NablaMask::new(excluded.flags().iter().map(|&e| !e).collect());
    let residual = relative_residual(&kernel.view(), grid, kappa, &solution, g0, Some(&included))?;
    if !(residual <= cfg.residual_tol) {
        return Err(PieError::InternalConsistency(format!(
            "solution residual {:e} exceeds {:e}",
            to_f64(residual),
            to_f64(cfg.residual_tol)
        )));
    }
    let (orthogonality, families) = match characteristic {
        Some((o, fam)) => (Some(o), Some(fam)),
        None => (None, None),
    };
    Ok(SolveReport {
        kappa,
        classification,
        solution: Some(solution),
        residual: Some(residual),
        solvability: Solvability::Solvable,
        excluded,
        orthogonality,
        families,
    })
}

fn fiberwise_solve<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    g0: &FiberFunction<T>,
    excluded: &NablaMask,
    cfg: &SolverConfig<T>,
    deflated: bool,
) -> Result<FiberFunction<T>> {
    let fibers = fiber_map(grid.n_fibers(), |j| {
        if excluded.get(j) {
            return Ok(vec![re(T::zero()); grid.n_space()]);
        }
        let op = FiberOperator::assemble_at(view, grid, j)?;
        op.fiber_solve(kappa, g0.fiber(j), cfg.singular_tol).map_err(|e| match e {
            PieError::SingularFiber { fiber, alpha, det_abs } if deflated => PieError::InternalConsistency(format!(
                "deflated fiber {fiber:?} at alpha={alpha:?} is singular (|det| = {det_abs:e})"
            )),
            other => other,
        })
    })?;
    FiberFunction::from_fibers(grid.clone(), fibers)
}

/// Nyström extension of a computed solution to an arbitrary space point `x`
/// on fiber `j`: `f(x) = g₀(x) + ϰ Σ_t w_t q(x, x_t, αⱼ) f(x_t)`.
pub fn nystrom_extend<T: Real>(
    kernel: &Kernel<T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    solution: &FiberFunction<T>,
    g0_at_x: C<T>,
    x: &[T],
    j: usize,
) -> Result<C<T>> {
    let alpha = grid.fibers().node(j);
    let w = grid.space().weights();
    let mut acc = re(T::zero());
    for (t, node) in grid.space().nodes().enumerate() {
        acc += kernel.eval(x, node, alpha)? * solution.get(t, j) * w[t];
    }
    Ok(g0_at_x + acc * kappa)
}
