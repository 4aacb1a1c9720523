use std::path::Path;
use std::time::Instant;

use pie_core::fiber::FiberOperator;
use pie_core::kernel::bound_function;
use pie_core::l0::bessel_bound;
use pie_core::series::determinant_series_on;
use pie_core::solver::{self, ClassKind, Solvability};
use pie_core::{Complex64, L0Scalar};

use crate::error::{CliError, CliResult};
use crate::problem::{Problem, ProblemFile};
use crate::report::{
    pair, profile, profile_csv, solution_csv, BesselOut, BoundOut, CharacteristicOut,
    NullspaceOut, Report, SeriesPoint, SolutionOut, SolvabilityOut,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Classify,
    Det,
    Nullspace,
    CheckSolvability,
    FindCharacteristic,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Classify => "classify",
            Command::Det => "det",
            Command::Nullspace => "nullspace",
            Command::CheckSolvability => "check-solvability",
            Command::FindCharacteristic => "find-characteristic",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_OBSTRUCTED: i32 = 2;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    /// `(file name, contents)` pairs for `--csv-out`.
    pub csv: Vec<(String, String)>,
    pub exit_code: i32,
}

fn require_kappa(p: &Problem, cmd: Command) -> CliResult<Complex64> {
    p.kappa
        .ok_or_else(|| CliError::validation("kappa", format!("required by `{}`", cmd.name())))
}

fn require_rhs(p: &Problem, cmd: Command) -> CliResult<&pie_core::FiberFunction> {
    p.rhs
        .as_ref()
        .ok_or_else(|| CliError::validation("rhs", format!("required by `{}`", cmd.name())))
}

/// Runs one command on a validated problem file.
pub fn run_command(cmd: Command, file: &ProblemFile, base: &Path) -> CliResult<Outcome> {
    let start = Instant::now();
    let problem = file.build(base)?;
    let mut out = Outcome {
        report: Report::new(cmd.name(), file.clone()),
        csv: Vec::new(),
        exit_code: EXIT_OK,
    };
    match cmd {
        Command::Det => det(&problem, &mut out)?,
        Command::Classify => classify(&problem, &mut out)?,
        Command::Solve => solve(&problem, &mut out)?,
        Command::Nullspace => nullspace(&problem, &mut out)?,
        Command::CheckSolvability => check_solvability(&problem, &mut out)?,
        Command::FindCharacteristic => find_characteristic(&problem, &mut out)?,
    }
    out.report.timing.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

fn det_profile_into(out: &mut Outcome, values: &L0Scalar) {
    let points = profile(values);
    out.csv.push(("det_profile.csv".into(), profile_csv(&points)));
    out.report.det_profile = Some(points);
}

fn det(p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let kappa = require_kappa(p, Command::Det)?;
    out.report.kappa = Some(pair(kappa));
    let view = p.kernel.view();
    let mut dets = Vec::with_capacity(p.grid.n_fibers());
    let mut series = Vec::with_capacity(p.grid.n_fibers());
    for j in 0..p.grid.n_fibers() {
        let op = FiberOperator::assemble_at(&view, &p.grid, j)?;
        let d = op.fiber_determinant(kappa);
        let s = determinant_series_on(&op, kappa, &p.series);
        series.push(SeriesPoint {
            alpha: op.alpha().to_vec(),
            value: pair(s.value),
            tail_bound: s.tail_bound,
            order_used: s.order_used,
            converged: s.converged,
            deviation: (s.value - d).norm(),
        });
        dets.push(d);
    }
    det_profile_into(out, &L0Scalar::new(p.grid.clone(), dets)?);
    out.report.determinant_series = Some(series);
    Ok(())
}

fn classify(p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let kappa = require_kappa(p, Command::Classify)?;
    out.report.kappa = Some(pair(kappa));
    let class = solver::classify(&p.kernel.view(), &p.grid, kappa, &p.solver)?;
    out.report.classification = Some((&class).into());
    det_profile_into(out, &class.det_profile);
    let (_, sup) = bound_function(&p.kernel, &p.grid)?;
    out.report.kernel_bound = Some(BoundOut { sup });
    Ok(())
}

fn bessel(p: &Problem, kappa: Complex64, family: &[pie_core::FiberFunction]) -> CliResult<Option<BesselOut>> {
    if kappa.norm() == 0.0 {
        return Ok(None);
    }
    let lambda = Complex64::new(1.0, 0.0) / kappa;
    let bound = bessel_bound(&p.kernel, &p.grid, lambda)?;
    let check = bound.check_pointwise(&p.kernel, family, p.bessel_tol)?;
    Ok(Some(BesselOut {
        lambda: pair(lambda),
        kernel_energy: bound.kernel_energy,
        m_max: bound.m_max,
        pointwise_max_excess: check.max_excess,
        pointwise_passed: check.passed,
    }))
}

fn nullspace_out(
    p: &Problem,
    kappa: Complex64,
    direct: &solver::NullFamily<f64>,
    adjoint: &solver::NullFamily<f64>,
) -> CliResult<NullspaceOut> {
    Ok(NullspaceOut {
        m: direct.count(),
        n: adjoint.count(),
        supports: direct.supports.iter().map(|s| s.fraction()).collect(),
        bessel: bessel(p, kappa, &direct.functions)?,
    })
}

fn solve(p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let kappa = require_kappa(p, Command::Solve)?;
    let rhs = require_rhs(p, Command::Solve)?;
    out.report.kappa = Some(pair(kappa));
    let r = solver::solve(&p.kernel, &p.grid, kappa, rhs, &p.solver)?;
    out.report.classification = Some((&r.classification).into());
    det_profile_into(out, &r.classification.det_profile);
    out.report.solvability = Some((&r.solvability).into());
    if let Some((direct, adjoint)) = &r.families {
        out.report.nullspace = Some(nullspace_out(p, kappa, direct, adjoint)?);
    }
    match (&r.solution, r.residual) {
        (Some(f), Some(residual)) => {
            out.report.solution = Some(SolutionOut {
                l2_norm: f.l2_norm(),
                max_modulus: f.max_modulus(),
                residual,
                orthogonality: r.orthogonality,
                excluded_fibers: r.excluded.indices().collect(),
            });
            out.csv.push(("solution.csv".into(), solution_csv(f)));
        }
        _ => out.exit_code = EXIT_OBSTRUCTED,
    }
    Ok(())
}

fn nullspace(p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let kappa = require_kappa(p, Command::Nullspace)?;
    out.report.kappa = Some(pair(kappa));
    let class = solver::classify(&p.kernel.view(), &p.grid, kappa, &p.solver)?;
    out.report.classification = Some((&class).into());
    out.report.nullspace = Some(if class.is_characteristic() {
        let (direct, adjoint) = solver::null_families(&p.kernel, &p.grid, kappa, &p.solver)?;
        nullspace_out(p, kappa, &direct, &adjoint)?
    } else {
        NullspaceOut {
            m: 0,
            n: 0,
            supports: Vec::new(),
            bessel: None,
        }
    });
    Ok(())
}

fn check_solvability(p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let kappa = require_kappa(p, Command::CheckSolvability)?;
    let rhs = require_rhs(p, Command::CheckSolvability)?;
    out.report.kappa = Some(pair(kappa));
    let class = solver::classify(&p.kernel.view(), &p.grid, kappa, &p.solver)?;
    out.report.classification = Some((&class).into());
    let verdict = match class.kind {
        ClassKind::Characteristic { .. } => {
            let (direct, adjoint) = solver::null_families(&p.kernel, &p.grid, kappa, &p.solver)?;
            out.report.nullspace = Some(nullspace_out(p, kappa, &direct, &adjoint)?);
            solver::check_solvability(rhs, &adjoint, p.solver.solvability_tol)?
        }
        // no adjoint null functions on a set of positive measure
        _ => Solvability::Solvable,
    };
    if !verdict.is_solvable() {
        out.exit_code = EXIT_OBSTRUCTED;
    }
    out.report.solvability = Some(SolvabilityOut::from(&verdict));
    Ok(())
}

fn find_characteristic(p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let region = p
        .search
        .ok_or_else(|| CliError::validation("kappa_search", "required by `find-characteristic`"))?;
    let found = solver::find_characteristic_numbers(&p.kernel.view(), &p.grid, &region, &p.solver)?;
    out.report.characteristic_numbers = Some(
        found
            .iter()
            .map(|c| CharacteristicOut {
                kappa: pair(c.kappa),
                m: c.m,
                support_fraction: c.support_fraction,
            })
            .collect(),
    );
    Ok(())
}
