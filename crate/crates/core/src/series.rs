//! The Fredholm determinant `D₁(α; ϰ)` and first minor `M₁(x, s, α; ϰ)` as
//! truncated power series in `ϰ`:
//!
//! ```text
//! D₁(α)       = 1 + Σ_{n≥1} (−ϰ)ⁿ/n! · d_n(α)
//! M₁(x, s, α) = q(x, s, α) + Σ_{n≥1} (−ϰ)ⁿ/n! · q_n(x, s, α)
//! ```
//!
//! `d_n` integrates the `n×n` determinant `Π⁽ⁿ⁾` of kernel values over the
//! diagonal `(ξ₁…ξₙ, ξ₁…ξₙ)`, and `q_n` integrates the bordered
//! `(n+1)×(n+1)` determinant. Two routes compute the coefficients:
//!
//! - tensor quadrature: the literal `n`-fold quadrature sums, cost `N^n`,
//!   restricted to `n <= 3`;
//! - trace recursion: `d_n = n!·e_n` where `e_n` are the elementary
//!   symmetric functions of the eigenvalues of `Â`, obtained from the power
//!   sums `trace(Âᵐ)` by Newton's identities, and the minor coefficients from
//!   the classical recursion `q_n = d_n·q − n·∫ q(x, t) q_{n−1}(t, s) dt`.
//!
//! On the same grid both routes are exact functions of the same samples, so
//! they agree to round-off. The minor is taken with its constant term `q`, so
//! `M₁(·; 0) = q` and `M₁/D₁` is the resolvent kernel.

use nalgebra::DMatrix;

use crate::error::{PieError, Result};
use crate::fiber::FiberOperator;
use crate::grid::QuadratureGrid;
use crate::kernel::KernelView;
use crate::l0::SharedGrid;
use crate::scalar::{is_finite, lit, modulus, modulus_sq, re, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientMethod {
    TensorQuadrature,
    TraceRecursion,
}

/// Highest order the tensor-quadrature route accepts.
pub const MAX_TENSOR_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig<T> {
    max_order: usize,
    tail_tol: T,
    method: CoefficientMethod,
}

impl<T: Real> SeriesConfig<T> {
    pub fn new(max_order: usize, tail_tol: T, method: CoefficientMethod) -> Result<Self> {
        if max_order == 0 {
            return Err(PieError::InvalidArgument("max_order must be >= 1".into()));
        }
        if !(tail_tol > T::zero()) {
            return Err(PieError::InvalidArgument("tail_tol must be positive".into()));
        }
        if method == CoefficientMethod::TensorQuadrature && max_order > MAX_TENSOR_ORDER {
            return Err(PieError::UnsupportedOrder(max_order));
        }
        Ok(Self {
            max_order,
            tail_tol,
            method,
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn tail_tol(&self) -> T {
        self.tail_tol
    }

    pub fn method(&self) -> CoefficientMethod {
        self.method
    }
}

impl<T: Real> Default for SeriesConfig<T> {
    fn default() -> Self {
        Self {
            max_order: 64,
            tail_tol: lit(1e-14),
            method: CoefficientMethod::TraceRecursion,
        }
    }
}

/// A truncated series value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue<T> {
    pub value: C<T>,
    /// Magnitude of the last term(s) inspected by the stopping rule.
    pub tail_bound: T,
    pub order_used: usize,
    /// `false` when `max_order` was reached with the tail above `tail_tol`.
    pub converged: bool,
}

/// `det [q(x_a, s_b, α)]_{a,b}`.
pub fn pi_n<T: Real>(view: &KernelView<'_, T>, xs: &[&[T]], ss: &[&[T]], alpha: &[T]) -> Result<C<T>> {
    if xs.is_empty() || xs.len() != ss.len() {
        return Err(PieError::InvalidArgument(
            "pi_n needs two equally long, non-empty point lists".into(),
        ));
    }
    let n = xs.len();
    let mut m = DMatrix::from_element(n, n, re(T::zero()));
    for a in 0..n {
        for b in 0..n {
            m[(a, b)] = view.eval(xs[a], ss[b], alpha)?;
        }
    }
    Ok(m.determinant())
}

/// Coefficient `d_k(α)` of the determinant series.
pub fn d_k<T: Real>(
    view: &KernelView<'_, T>,
    space: &QuadratureGrid<T>,
    alpha: &[T],
    k: usize,
    method: CoefficientMethod,
) -> Result<C<T>> {
    if k == 0 {
        return Err(PieError::InvalidArgument("d_k needs k >= 1".into()));
    }
    check_order(k, method)?;
    let op = FiberOperator::assemble(view, space, alpha)?;
    Ok(match method {
        CoefficientMethod::TensorQuadrature => tensor_sum(&op, k, None),
        CoefficientMethod::TraceRecursion => {
            let mut tc = TraceCoefficients::new(&op);
            tc.elementary(k) * factorial::<T>(k)
        }
    })
}

/// Coefficient `q_k(x, s, α)` of the minor series; `k = 0` gives `q(x, s, α)`.
#[allow(clippy::too_many_arguments)]
pub fn q_k<T: Real>(
    view: &KernelView<'_, T>,
    space: &QuadratureGrid<T>,
    x: &[T],
    s: &[T],
    alpha: &[T],
    k: usize,
    method: CoefficientMethod,
) -> Result<C<T>> {
    check_order(k, method)?;
    let op = FiberOperator::assemble(view, space, alpha)?;
    let border = Border::new(view, space, x, s, alpha)?;
    Ok(match method {
        CoefficientMethod::TensorQuadrature => tensor_sum(&op, k, Some(&border)),
        CoefficientMethod::TraceRecursion => {
            let mut tc = TraceCoefficients::new(&op);
            let mut minor = MinorRecursion::new(&op, &border);
            for n in 1..=k {
                let e = tc.elementary(n);
                minor.advance(e);
            }
            minor.current * factorial::<T>(k)
        }
    })
}

fn check_order(k: usize, method: CoefficientMethod) -> Result<()> {
    if method == CoefficientMethod::TensorQuadrature && k > MAX_TENSOR_ORDER {
        Err(PieError::UnsupportedOrder(k))
    } else {
        Ok(())
    }
}

/// Truncated `D₁(α; ϰ)`.
pub fn determinant_series<T: Real>(
    view: &KernelView<'_, T>,
    space: &QuadratureGrid<T>,
    alpha: &[T],
    kappa: C<T>,
    cfg: &SeriesConfig<T>,
) -> Result<SeriesValue<T>> {
    let op = FiberOperator::assemble(view, space, alpha)?;
    Ok(determinant_series_on(&op, kappa, cfg))
}

/// As [`determinant_series`] on an assembled fiber.
pub fn determinant_series_on<T: Real>(op: &FiberOperator<T>, kappa: C<T>, cfg: &SeriesConfig<T>) -> SeriesValue<T> {
    let one = re(T::one());
    if kappa == re(T::zero()) {
        return SeriesValue {
            value: one,
            tail_bound: T::zero(),
            order_used: 0,
            converged: true,
        };
    }
    let mut tc = TraceCoefficients::new(op);
    let minus_kappa = -kappa;
    let term = |n: usize, tc: &mut TraceCoefficients<T>| -> C<T> {
        match cfg.method {
            CoefficientMethod::TraceRecursion => cpow(minus_kappa, n) * tc.elementary(n),
            CoefficientMethod::TensorQuadrature => {
                cpow(minus_kappa, n) * tensor_sum(op, n, None) / factorial::<T>(n)
            }
        }
    };
    let terms = TermStream::new(cfg.max_order, cfg.tail_tol, |n| term(n, &mut tc));
    terms.sum_from(one)
}

/// Truncated `M₁(x, s, α; ϰ)`.
#[allow(clippy::too_many_arguments)]
pub fn minor_series<T: Real>(
    view: &KernelView<'_, T>,
    space: &QuadratureGrid<T>,
    x: &[T],
    s: &[T],
    alpha: &[T],
    kappa: C<T>,
    cfg: &SeriesConfig<T>,
) -> Result<SeriesValue<T>> {
    let op = FiberOperator::assemble(view, space, alpha)?;
    let border = Border::new(view, space, x, s, alpha)?;
    let q = border.corner;
    if kappa == re(T::zero()) {
        return Ok(SeriesValue {
            value: q,
            tail_bound: T::zero(),
            order_used: 0,
            converged: true,
        });
    }
    let minus_kappa = -kappa;
    Ok(match cfg.method {
        CoefficientMethod::TraceRecursion => {
            let mut tc = TraceCoefficients::new(&op);
            let mut minor = MinorRecursion::new(&op, &border);
            TermStream::new(cfg.max_order, cfg.tail_tol, |n| {
                let e = tc.elementary(n);
                minor.advance(e);
                cpow(minus_kappa, n) * minor.current
            })
            .sum_from(q)
        }
        CoefficientMethod::TensorQuadrature => TermStream::new(cfg.max_order, cfg.tail_tol, |n| {
            cpow(minus_kappa, n) * tensor_sum(&op, n, Some(&border)) / factorial::<T>(n)
        })
        .sum_from(q),
    })
}

/// `M₁(xᵢ, x_k, α; ϰ)` at every pair of space nodes, by the trace route.
pub fn minor_matrix<T: Real>(op: &FiberOperator<T>, kappa: C<T>, cfg: &SeriesConfig<T>) -> (DMatrix<C<T>>, SeriesValue<T>) {
    let k = op.kernel_samples().clone();
    let mut total = k.clone();
    if kappa == re(T::zero()) {
        let summary = SeriesValue {
            value: re(T::zero()),
            tail_bound: T::zero(),
            order_used: 0,
            converged: true,
        };
        return (total, summary);
    }
    let a = op.matrix();
    let mut tc = TraceCoefficients::new(op);
    let mut current = k.clone();
    let mut factor = re(T::one());
    let largest = |m: &DMatrix<C<T>>| m.iter().fold(T::zero(), |acc, &v| acc.max(modulus(v)));
    let mut prev_small = false;
    let mut summary = SeriesValue {
        value: re(T::zero()),
        tail_bound: T::zero(),
        order_used: 0,
        converged: false,
    };
    for n in 1..=cfg.max_order {
        let e = tc.elementary(n);
        current = &k * e - &a * &current;
        factor *= -kappa;
        let term = &current * factor;
        let size = largest(&term);
        total += &term;
        summary.order_used = n;
        summary.tail_bound = size;
        let small = size <= cfg.tail_tol;
        if small && prev_small {
            summary.converged = true;
            break;
        }
        prev_small = small;
    }
    if !summary.converged && prev_small && summary.order_used == cfg.max_order {
        summary.converged = true;
    }
    (total, summary)
}

/// Per-fiber finiteness and square-integrability of the series values.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberFiniteness<T> {
    pub alpha: Vec<T>,
    pub determinant: SeriesValue<T>,
    pub determinant_finite: bool,
    pub minor_finite: bool,
    /// `∬ |M₁(x, s, α)|² dx ds` by quadrature.
    pub minor_l2_sq: T,
    pub minor_converged: bool,
}

/// Grid-level realization of the measurability/integrability statements for
/// `D₁` and `M₁`.
///
/// Measurability is automatic for grid samples; what can fail is finiteness
/// of the sampled values and of `∬|M₁|²`, which are reported per fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitenessReport<T> {
    pub fibers: Vec<FiberFiniteness<T>>,
}

impl<T: Real> FinitenessReport<T> {
    pub fn all_finite(&self) -> bool {
        self.fibers.iter().all(|f| {
            f.determinant_finite && f.minor_finite && is_finite(re(f.minor_l2_sq))
        })
    }
}

pub fn finiteness_checks<T: Real>(
    view: &KernelView<'_, T>,
    grid: &SharedGrid<T>,
    kappa: C<T>,
    cfg: &SeriesConfig<T>,
) -> Result<FinitenessReport<T>> {
    let w = grid.space().weights();
    let mut fibers = Vec::with_capacity(grid.n_fibers());
    for j in 0..grid.n_fibers() {
        let op = FiberOperator::assemble_at(view, grid, j)?;
        let det = determinant_series_on(&op, kappa, cfg);
        let (m, summary) = minor_matrix(&op, kappa, cfg);
        let mut l2 = T::zero();
        for i in 0..m.nrows() {
            for k in 0..m.ncols() {
                l2 += w[i] * w[k] * modulus_sq(m[(i, k)]);
            }
        }
        fibers.push(FiberFiniteness {
            alpha: grid.fibers().node(j).to_vec(),
            determinant_finite: is_finite(det.value),
            determinant: det,
            minor_finite: m.iter().all(|&v| is_finite(v)),
            minor_l2_sq: l2,
            minor_converged: summary.converged,
        });
    }
    Ok(FinitenessReport { fibers })
}

/// Values of the kernel needed to border the `Π` determinants at `(x, s)`.
struct Border<T> {
    /// `q(x, x_t, α)`
    row: Vec<C<T>>,
    /// `q(x_t, s, α)`
    col: Vec<C<T>>,
    /// `q(x, s, α)`
    corner: C<T>,
}

impl<T: Real> Border<T> {
    fn new(view: &KernelView<'_, T>, space: &QuadratureGrid<T>, x: &[T], s: &[T], alpha: &[T]) -> Result<Self> {
        let row = space
            .nodes()
            .map(|t| view.eval(x, t, alpha))
            .collect::<Result<Vec<_>>>()?;
        let col = space
            .nodes()
            .map(|t| view.eval(t, s, alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            row,
            col,
            corner: view.eval(x, s, alpha)?,
        })
    }
}

/// Literal `k`-fold quadrature of `Π⁽ᵏ⁾` on the diagonal, optionally bordered.
fn tensor_sum<T: Real>(op: &FiberOperator<T>, k: usize, border: Option<&Border<T>>) -> C<T> {
    let n = op.len();
    let kmat = op.kernel_samples();
    let w = op.weights();
    if k == 0 {
        return border.map_or(re(T::one()), |b| b.corner);
    }
    let offset = usize::from(border.is_some());
    let size = k + offset;
    let mut idx = vec![0usize; k];
    let mut total = re(T::zero());
    let mut m = DMatrix::from_element(size, size, re(T::zero()));
    loop {
        let weight = idx.iter().fold(T::one(), |acc, &i| acc * w[i]);
        if let Some(b) = border {
            m[(0, 0)] = b.corner;
            for (a, &ia) in idx.iter().enumerate() {
                m[(0, a + 1)] = b.row[ia];
                m[(a + 1, 0)] = b.col[ia];
            }
        }
        for (a, &ia) in idx.iter().enumerate() {
            for (c, &ic) in idx.iter().enumerate() {
                m[(a + offset, c + offset)] = kmat[(ia, ic)];
            }
        }
        total += m.clone().determinant() * weight;
        // odometer over n^k index tuples
        let mut pos = 0;
        loop {
            if pos == k {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Elementary symmetric functions of the spectrum of `Â`, from power sums.
struct TraceCoefficients<T> {
    a_hat: DMatrix<C<T>>,
    power: DMatrix<C<T>>,
    /// `p[m-1] = trace(Âᵐ)`
    p: Vec<C<T>>,
    /// `e[n]`, with `e[0] = 1`
    e: Vec<C<T>>,
}

impl<T: Real> TraceCoefficients<T> {
    fn new(op: &FiberOperator<T>) -> Self {
        let a_hat = op.symmetrized();
        let n = a_hat.nrows();
        Self {
            a_hat,
            power: DMatrix::identity(n, n),
            p: Vec::new(),
            e: vec![re(T::one())],
        }
    }

    fn elementary(&mut self, n: usize) -> C<T> {
        while self.e.len() <= n {
            let m = self.e.len();
            while self.p.len() < m {
                self.power = &self.power * &self.a_hat;
                self.p.push(self.power.trace());
            }
            // Newton: m·e_m = Σ_{i=1..m} (−1)^{i−1} e_{m−i} p_i
            let mut acc = re(T::zero());
            for i in 1..=m {
                let term = self.e[m - i] * self.p[i - 1];
                if i % 2 == 1 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            self.e.push(acc / lit::<T>(m as f64));
        }
        self.e[n]
    }
}

/// Scaled minor coefficients `m_n = q_n / n!` at one `(x, s)` pair:
/// `m_n = e_n·q(x, s) − Σ_t w_t q(x, t)·m_{n−1}(t, s)`.
struct MinorRecursion<'a, T> {
    op: &'a FiberOperator<T>,
    border: &'a Border<T>,
    /// `m_{n}(x_t, s)` at the space nodes
    column: Vec<C<T>>,
    current: C<T>,
}

impl<'a, T: Real> MinorRecursion<'a, T> {
    fn new(op: &'a FiberOperator<T>, border: &'a Border<T>) -> Self {
        Self {
            op,
            border,
            column: border.col.clone(),
            current: border.corner,
        }
    }

    fn advance(&mut self, e: C<T>) {
        let w = self.op.weights();
        let next_value = e * self.border.corner
            - self
                .border
                .row
                .iter()
                .zip(&self.column)
                .zip(w)
                .fold(re(T::zero()), |acc, ((&r, &v), &wt)| acc + r * v * wt);
        let applied = self.op.apply(&self.column);
        self.column = self
            .border
            .col
            .iter()
            .zip(applied)
            .map(|(&c, a)| e * c - a)
            .collect();
        self.current = next_value;
    }
}

/// Series terms `t_1, t_2, …` with the stopping rule: stop at the first
/// order `n` whose term and the following term both have modulus
/// `<= tail_tol` (or at `max_order`).
struct TermStream<F, T> {
    max_order: usize,
    tail_tol: T,
    next: F,
}

impl<F, T> TermStream<F, T>
where
    T: Real,
    F: FnMut(usize) -> C<T>,
{
    fn new(max_order: usize, tail_tol: T, next: F) -> Self {
        Self {
            max_order,
            tail_tol,
            next,
        }
    }

    fn sum_from(mut self, start: C<T>) -> SeriesValue<T> {
        let mut sum = start;
        let mut pending: Option<C<T>> = None;
        for n in 1..=self.max_order {
            let term = pending.take().unwrap_or_else(|| (self.next)(n));
            sum += term;
            let size = modulus(term);
            if size <= self.tail_tol {
                if n == self.max_order {
                    return SeriesValue {
                        value: sum,
                        tail_bound: size,
                        order_used: n,
                        converged: true,
                    };
                }
                let ahead = (self.next)(n + 1);
                let ahead_size = modulus(ahead);
                if ahead_size <= self.tail_tol {
                    return SeriesValue {
                        value: sum,
                        tail_bound: size.max(ahead_size),
                        order_used: n,
                        converged: true,
                    };
                }
                pending = Some(ahead);
            }
            if n == self.max_order {
                return SeriesValue {
                    value: sum,
                    tail_bound: size,
                    order_used: n,
                    converged: false,
                };
            }
        }
        unreachable!("max_order >= 1")
    }
}

fn cpow<T: Real>(z: C<T>, n: usize) -> C<T> {
    (0..n).fold(re(T::one()), |acc, _| acc * z)
}

fn factorial<T: Real>(n: usize) -> T {
    (1..=n).fold(T::one(), |acc, k| acc * lit::<T>(k as f64))
}
