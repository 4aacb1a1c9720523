//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pie_core::fiber::FiberOperator;
use pie_core::grid::Rule;
use pie_core::kernel::{bound_function, Basis, BuiltinKernel, Factor, RankTerm};
use pie_core::l0::{bessel_bound, inner, scale};
use pie_core::oracles::{dense_direct_solve, rank1_reference, SeparableSpec};
use pie_core::series::{d_k, determinant_series, minor_series, CoefficientMethod, SeriesConfig};
use pie_core::solver::{
    self, classify, find_characteristic_numbers, null_families, nystrom_extend, relative_residual,
    test_hooks, SearchRegion,
};
use pie_core::{Complex64, Domain, FiberFunction, Kernel, L0Scalar, PieError, ProductGrid, SharedGrid, SolverConfig};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn unit() -> Domain {
    Domain::unit(1).unwrap()
}

fn grid(n: usize, fiber_n: usize) -> SharedGrid {
    Arc::new(ProductGrid::uniform(unit(), Rule::GaussLegendre, n, fiber_n).unwrap())
}

fn factor(b: Basis<f64>) -> Factor<f64> {
    Factor::new(c(1.0), b, Basis::One)
}

fn separable(a: Basis<f64>, b: Basis<f64>) -> (Kernel, SeparableSpec<f64>) {
    let terms = vec![RankTerm::new(factor(a), factor(b))];
    (
        Kernel::finite_rank(unit(), terms.clone()).unwrap(),
        SeparableSpec::new(unit(), terms).unwrap(),
    )
}

fn q_one() -> Kernel {
    Kernel::constant(unit(), 1.0)
}

fn q_y() -> Kernel {
    Kernel::builtin(
        unit(),
        BuiltinKernel::Polynomial {
            coeff: c(1.0),
            x_pow: 0,
            s_pow: 0,
            y_pow: 1,
        },
    )
}

/// `1·1 + P₁(x)·P₁(s)` with `P₁` the Legendre polynomial mapped to `[0, 1]`.
fn orthogonal_pair() -> Kernel {
    Kernel::finite_rank(
        unit(),
        vec![
            RankTerm::new(factor(Basis::One), factor(Basis::One)),
            RankTerm::new(factor(Basis::Legendre(1)), factor(Basis::Legendre(1))),
        ],
    )
    .unwrap()
}

fn gaussian() -> Kernel {
    Kernel::builtin(
        unit(),
        BuiltinKernel::GaussianBump {
            amplitude: 1.0,
            width: 0.5,
        },
    )
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rank1_exactness() -> Check {
    let g = grid(16, 33);
    let kappas = [c(0.0), c(0.5), c(-0.5), c(2.0), c(-2.0), Complex64::new(0.0, 3.0)];
    let cfg = SeriesConfig::default();
    let probes = [0.0, 0.137, 0.5, 0.91, 1.0];
    let mut worst = 0.0f64;
    for (name, (kernel, spec)) in [
        ("q = 1", separable(Basis::One, Basis::One)),
        ("q = x s", separable(Basis::Linear, Basis::Linear)),
    ] {
        let view = kernel.view();
        for &kappa in &kappas {
            for j in 0..g.n_fibers() {
                let alpha = g.fibers().node(j);
                let oracle = rank1_reference(&spec, kappa, alpha).map_err(err)?;
                let op = FiberOperator::assemble_at(&view, &g, j).map_err(err)?;
                let mut check = |what: &str, got: Complex64, want: Complex64| {
                    let d = (got - want).norm();
                    worst = worst.max(d);
                    ensure(d <= 1e-10, || format!("{name}, kappa={kappa}, fiber {j}: {what} off by {d:e}"))
                };
                check("fiber_determinant", op.fiber_determinant(kappa), oracle.det)?;
                let series = determinant_series(&view, g.space(), alpha, kappa, &cfg).map_err(err)?;
                check("determinant_series", series.value, oracle.det)?;
                for &x in &probes {
                    for &s in &probes {
                        let minor = minor_series(&view, g.space(), &[x], &[s], alpha, kappa, &cfg).map_err(err)?;
                        let want = oracle.resolvent(&[x], &[s]).map(|r| r * oracle.det);
                        check("minor_series", minor.value, want.ok_or("singular oracle fiber")?)?;
                    }
                }
                let r = op.resolvent_kernel(kappa, 1e-8).map_err(err)?;
                for (i, x) in g.space().nodes().enumerate() {
                    for (k, s) in g.space().nodes().enumerate() {
                        check("resolvent_kernel", r[(i, k)], oracle.resolvent(x, s).unwrap())?;
                    }
                }
            }
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn series_matrix_coherence() -> Check {
    let g = grid(16, 33);
    let k = gaussian();
    let view = k.view();
    let cfg = SeriesConfig::default();
    let mut worst_det = 0.0f64;
    for kappa in [c(0.5), c(-0.5), Complex64::new(0.0, 0.5), Complex64::new(0.3, -0.35)] {
        for j in 0..g.n_fibers() {
            let alpha = g.fibers().node(j);
            let op = FiberOperator::assemble_at(&view, &g, j).map_err(err)?;
            let s = determinant_series(&view, g.space(), alpha, kappa, &cfg).map_err(err)?;
            let d = (s.value - op.fiber_determinant(kappa)).norm();
            let tol = s.tail_bound.max(1e-8);
            worst_det = worst_det.max(d);
            ensure(s.converged && d <= tol, || {
                format!("kappa={kappa}, fiber {j}: series off by {d:e} (allowed {tol:e})")
            })?;
        }
    }
    let mut worst_dk = 0.0f64;
    for j in (0..g.n_fibers()).step_by(4) {
        let alpha = g.fibers().node(j);
        for k in 1..=3 {
            let a = d_k(&view, g.space(), alpha, k, CoefficientMethod::TraceRecursion).map_err(err)?;
            let b = d_k(&view, g.space(), alpha, k, CoefficientMethod::TensorQuadrature).map_err(err)?;
            let d = (a - b).norm();
            worst_dk = worst_dk.max(d);
            ensure(d <= 1e-10, || format!("fiber {j}: d_{k} methods differ by {d:e}"))?;
        }
    }
    Ok(format!("series vs matrix {worst_det:.1e}, d_k methods {worst_dk:.1e}"))
}

fn random_basis(rng: &mut ChaCha8Rng) -> Basis<f64> {
    match rng.gen_range(0..6) {
        0 => Basis::One,
        1 => Basis::Linear,
        2 => Basis::Quadratic,
        3 => Basis::Sin {
            freq: rng.gen_range(0.5..3.0),
        },
        4 => Basis::Cos {
            freq: rng.gen_range(0.5..3.0),
        },
        _ => Basis::Legendre(rng.gen_range(0..4)),
    }
}

fn random_factor(rng: &mut ChaCha8Rng) -> Factor<f64> {
    Factor::new(
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        random_basis(rng),
        random_basis(rng),
    )
}

fn regular_solve() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let cfg = SolverConfig::default();
    let coarse = grid(16, 33);
    let fine = grid(32, 33);
    let (mut worst_res, mut worst_dense, mut worst_refine) = (0.0f64, 0.0f64, 0.0f64);
    let mut done = 0;
    while done < 20 {
        let r = rng.gen_range(1..=3);
        let terms = (0..r)
            .map(|_| RankTerm::new(random_factor(&mut rng), random_factor(&mut rng)))
            .collect();
        let kernel = Kernel::finite_rank(unit(), terms).map_err(err)?;
        let rhs_terms: Vec<Factor<f64>> = (0..rng.gen_range(1..=3)).map(|_| random_factor(&mut rng)).collect();
        let kappa = Complex64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let rhs_at = |x: &[f64], y: &[f64]| -> Complex64 { rhs_terms.iter().map(|f| f.eval(&unit(), x, y)).sum() };

        let class = classify(&kernel.view(), &coarse, kappa, &cfg).map_err(err)?;
        let conditioned = class.fibers.iter().all(|f| f.sigma_min >= 1e-3 * f.sigma_max);
        if !class.is_regular() || !conditioned {
            continue;
        }
        done += 1;
        let g0 = FiberFunction::from_fn(coarse.clone(), rhs_at);
        let report = solver::solve(&kernel, &coarse, kappa, &g0, &cfg).map_err(err)?;
        let f = report.solution.ok_or("no solution in the regular case")?;
        let res = report.residual.unwrap();
        worst_res = worst_res.max(res);
        ensure(res <= 1e-8, || format!("case {done}: residual {res:e}"))?;

        let dense = dense_direct_solve(&kernel, &coarse, kappa, &g0).map_err(err)?;
        let scale_f = f.max_modulus().max(1.0);
        let d = dense.sub(&f).map_err(err)?.max_modulus() / scale_f;
        worst_dense = worst_dense.max(d);
        ensure(d <= 1e-10, || format!("case {done}: dense solve differs by {d:e}"))?;

        let g0_fine = FiberFunction::from_fn(fine.clone(), rhs_at);
        let f_fine = solver::solve(&kernel, &fine, kappa, &g0_fine, &cfg)
            .map_err(err)?
            .solution
            .ok_or("no solution on the refined grid")?;
        for j in 0..fine.n_fibers() {
            for (i, x) in fine.space().nodes().enumerate() {
                let ext = nystrom_extend(&kernel, &coarse, kappa, &f, rhs_at(x, fine.fibers().node(j)), x, j)
                    .map_err(err)?;
                let d = (ext - f_fine.get(i, j)).norm() / scale_f;
                worst_refine = worst_refine.max(d);
                ensure(d <= 1e-8, || format!("case {done}: refinement changes solution by {d:e}"))?;
            }
        }
    }
    Ok(format!(
        "20 kernels: residual {worst_res:.1e}, dense {worst_dense:.1e}, refinement {worst_refine:.1e}"
    ))
}

fn search_disc() -> SearchRegion<f64> {
    SearchRegion::Disc {
        center: c(0.0),
        radius: 10.0,
    }
}

fn characteristic_detection() -> Check {
    let g = grid(16, 33);
    let cfg = SolverConfig::default();
    let expect = |name: &str, kernel: Kernel, want: &[f64]| -> Result<String, String> {
        let found = find_characteristic_numbers(&kernel.view(), &g, &search_disc(), &cfg).map_err(err)?;
        ensure(found.len() == want.len(), || format!("{name}: found {:?}", found.iter().map(|f| f.kappa).collect::<Vec<_>>()))?;
        for (f, &w) in found.iter().zip(want) {
            let d = (f.kappa - c(w)).norm();
            ensure(d <= 1e-8 && f.m == 1, || format!("{name}: {} (m={}) vs {w}", f.kappa, f.m))?;
        }
        Ok(format!("{name} -> {want:?}"))
    };
    let parts = [
        expect("q = 1", q_one(), &[1.0])?,
        expect("q = y", q_y(), &[])?,
        expect("orthogonal pair", orthogonal_pair(), &[1.0, 3.0])?,
    ];
    Ok(parts.join("; "))
}

fn write_problem(dir: &Path, text: &str) -> String {
    let path = dir.join("problem.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn fredholm_alternative() -> Check {
    let g = grid(16, 33);
    let cfg = SolverConfig::default();
    let kernel = q_one();
    let kappa0 = c(1.0);
    let g0 = FiberFunction::from_fn(g.clone(), |x, _| c(x[0] - 0.5));
    let report = solver::solve(&kernel, &g0.grid().clone(), kappa0, &g0, &cfg).map_err(err)?;
    let f0 = report.solution.ok_or("centred right-hand side was rejected")?;
    let res = report.residual.unwrap();
    ensure(res <= 1e-8, || format!("residual {res:e}"))?;
    let (direct, _) = report.families.ok_or("no null families reported")?;
    let f1 = &direct.functions[0];
    let orth = inner(&f0, f1).map_err(err)?.max_modulus();
    ensure(orth <= 1e-8, || format!("|<f0, f1>| = {orth:e}"))?;

    let dir = tempfile::tempdir().map_err(err)?;
    let problem = write_problem(
        dir.path(),
        r#"{"domain":[0,1],"nu":1,"grid":{"rule":"gauss","n":16,"fiber_n":33},
            "kernel":{"builtin":"constant","value":1},"rhs":{"terms":[{"coeff":1}]},"kappa":1}"#,
    );
    let out = Command::new(env!("CARGO_BIN_EXE_pie"))
        .args(["check-solvability", "--problem", &problem])
        .output()
        .map_err(err)?;
    ensure(out.status.code() == Some(2), || format!("g0 = 1 exit code {:?}", out.status.code()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = res;
    for _ in 0..5 {
        let values = (0..g.n_fibers())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let b = L0Scalar::new(g.clone(), values).map_err(err)?;
        let f = f0.add(&scale(&b, f1).map_err(err)?).map_err(err)?;
        let r = relative_residual(&kernel.view(), &g, kappa0, &f, &g0, None).map_err(err)?;
        worst = worst.max(r);
        ensure(r <= 1e-8, || format!("f0 + b f1 residual {r:e}"))?;
    }
    Ok(format!("residual {worst:.1e}, orthogonality {orth:.1e}, g0 = 1 exits 2"))
}

fn found_pairs() -> Vec<(&'static str, Kernel, Vec<f64>)> {
    vec![("q = 1", q_one(), vec![1.0]), ("orthogonal pair", orthogonal_pair(), vec![1.0, 3.0])]
}

fn count_equality() -> Check {
    let g = grid(16, 33);
    let cfg = SolverConfig::default();
    let mut notes = Vec::new();
    for (name, kernel, kappas) in found_pairs() {
        for k in kappas {
            let (d, a) = null_families(&kernel, &g, c(k), &cfg).map_err(err)?;
            ensure(d.count() == a.count(), || format!("{name} at {k}: m={} n={}", d.count(), a.count()))?;
            notes.push(format!("{name}@{k}: m=n={}", d.count()));
        }
    }
    match test_hooks::null_families_with_adjoint_skew(&q_one(), &g, c(1.0), &cfg, 1) {
        Err(PieError::InternalConsistency(_)) => {}
        other => return Err(format!("off-by-one not detected: {other:?}")),
    }
    notes.push("injected mismatch detected".into());
    Ok(notes.join("; "))
}

fn bessel_bound_check() -> Check {
    let g = grid(16, 33);
    let cfg = SolverConfig::default();
    let mut notes = Vec::new();
    for (name, kernel, kappas) in found_pairs() {
        for k in kappas {
            let (d, _) = null_families(&kernel, &g, c(k), &cfg).map_err(err)?;
            let bound = bessel_bound(&kernel, &g, c(1.0 / k)).map_err(err)?;
            ensure(d.count() <= bound.m_max, || format!("{name} at {k}: m={} > {}", d.count(), bound.m_max))?;
            let check = bound.check_pointwise(&kernel, &d.functions, 1e-8).map_err(err)?;
            ensure(check.passed, || format!("{name} at {k}: pointwise excess {:e}", check.max_excess))?;
            notes.push(format!("{name}@{k}: m={} <= {}", d.count(), bound.m_max));
        }
    }
    Ok(notes.join("; "))
}

fn boundedness() -> Check {
    let g = grid(16, 33);
    let kernels = [
        ("constant", q_one()),
        (
            "polynomial",
            Kernel::builtin(
                unit(),
                BuiltinKernel::Polynomial {
                    coeff: Complex64::new(2.0, -1.0),
                    x_pow: 2,
                    s_pow: 1,
                    y_pow: 3,
                },
            ),
        ),
        ("gaussian", gaussian()),
    ];
    let mut notes = Vec::new();
    for (name, k) in kernels {
        let (_, sup) = bound_function(&k, &g).map_err(err)?;
        ensure(sup.is_finite(), || format!("{name}: sup b = {sup}"))?;
        notes.push(format!("{name} {sup:.4}"));
    }
    let (_, sup) = bound_function(&q_one(), &g).map_err(err)?;
    ensure((sup - 1.0).abs() <= 1e-12, || format!("q = 1: sup b = {sup}"))?;
    Ok(format!("sup b: {}", notes.join(", ")))
}

fn strip_timing(report: &str) -> Result<&str, String> {
    report
        .find("\"timing\"")
        .map(|i| &report[..i])
        .ok_or_else(|| "report has no timing block".to_string())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let problems = [
        (
            "solve",
            r#"{"domain":[0,1],"grid":{"rule":"gauss","n":16,"fiber_n":33},
                "kernel":{"builtin":"gaussian","amplitude":1.5,"width":0.4},
                "rhs":{"terms":[{"coeff":[1,0.5],"space":{"cos":2}},{"coeff":-1,"space":"linear","fiber":"quadratic"}]},
                "kappa":[0.7,-0.3]}"#,
        ),
        (
            "solve",
            r#"{"domain":[0,1],"grid":{"rule":"gauss","n":16,"fiber_n":33},
                "kernel":{"builtin":"constant","value":1},"rhs":{"terms":[{"space":"linear"},{"coeff":-0.5}]},"kappa":1}"#,
        ),
        (
            "find-characteristic",
            r#"{"domain":[0,1],"grid":{"rule":"gauss","n":16,"fiber_n":33},
                "kernel":{"finite_rank":[{"left":{},"right":{}},{"left":{"space":{"legendre":1}},"right":{"space":{"legendre":1}}}]},
                "kappa_search":{"disc":{"center":0,"radius":10}}}"#,
        ),
        (
            "det",
            r#"{"domain":[0,1],"grid":{"rule":"gauss","n":16,"fiber_n":33},
                "kernel":{"builtin":"gaussian"},"kappa":[0.4,0.2]}"#,
        ),
    ];
    for (cmd, text) in problems {
        let problem = write_problem(dir.path(), text);
        let run = |workers: &str| -> Result<String, String> {
            let out = Command::new(env!("CARGO_BIN_EXE_pie"))
                .args([cmd, "--problem", &problem, "--workers", workers])
                .output()
                .map_err(err)?;
            ensure(out.status.success(), || {
                format!("{cmd} failed: {}", String::from_utf8_lossy(&out.stderr))
            })?;
            String::from_utf8(out.stdout).map_err(err)
        };
        let (one, eight) = (run("1")?, run("8")?);
        ensure(strip_timing(&one)? == strip_timing(&eight)?, || format!("{cmd}: reports differ"))?;
    }
    Ok(format!("{} reports byte-identical for 1 and 8 workers", problems.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("rank-1 exactness", rank1_exactness),
        ("series/matrix coherence", series_matrix_coherence),
        ("regular solve", regular_solve),
        ("characteristic detection", characteristic_detection),
        ("Fredholm alternative", fredholm_alternative),
        ("count equality", count_equality),
        ("Bessel bound", bessel_bound_check),
        ("boundedness", boundedness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.2}s] {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.2}s] {detail}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
