//! Machine-readable reports and CSV profiles.

use serde::Serialize;

use pie_core::solver::{ClassKind, Classification, Solvability};
use pie_core::{Complex64, FiberFunction, L0Scalar};

use crate::problem::ProblemFile;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub problem: ProblemFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub det_profile: Option<Vec<ProfilePoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub determinant_series: Option<Vec<SeriesPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_bound: Option<BoundOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solvability: Option<SolvabilityOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nullspace: Option<NullspaceOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub characteristic_numbers: Option<Vec<CharacteristicOut>>,
    pub timing: Timing,
}

impl Report {
    pub fn new(command: &str, problem: ProblemFile) -> Self {
        Self {
            command: command.to_string(),
            problem,
            kappa: None,
            classification: None,
            det_profile: None,
            determinant_series: None,
            kernel_bound: None,
            solvability: None,
            solution: None,
            nullspace: None,
            characteristic_numbers: None,
            timing: Timing { elapsed_ms: 0.0 },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

pub fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    pub alpha: Vec<f64>,
    pub re: f64,
    pub im: f64,
}

pub fn profile(values: &L0Scalar) -> Vec<ProfilePoint> {
    let fibers = values.grid().fibers();
    values
        .values()
        .iter()
        .enumerate()
        .map(|(j, v)| ProfilePoint {
            alpha: fibers.node(j).to_vec(),
            re: v.re,
            im: v.im,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesPoint {
    pub alpha: Vec<f64>,
    pub value: [f64; 2],
    pub tail_bound: f64,
    pub order_used: usize,
    pub converged: bool,
    /// `|series − matrix determinant|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationOut {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Fiber indices with a non-trivial nullspace.
    pub deficient_fibers: Vec<usize>,
    pub deficient_fraction: f64,
    pub min_sigma_ratio: f64,
}

impl From<&Classification<f64>> for ClassificationOut {
    fn from(c: &Classification<f64>) -> Self {
        let (kind, m) = match c.kind {
            ClassKind::Regular => ("regular", None),
            ClassKind::Characteristic { m } => ("characteristic", Some(m)),
            ClassKind::SingularFibers { .. } => ("singular_fibers", None),
        };
        let min_sigma_ratio = c
            .fibers
            .iter()
            .map(|f| if f.sigma_max > 0.0 { f.sigma_min / f.sigma_max } else { 0.0 })
            .fold(f64::INFINITY, f64::min);
        Self {
            kind,
            m,
            deficient_fibers: c.deficient.indices().collect(),
            deficient_fraction: c.deficient.fraction(),
            min_sigma_ratio,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundOut {
    /// `sup_t b(t)` with `b(t) = ∫∫ |q(x, s, t)|² dx ds`.
    pub sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolvabilityOut {
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjoint_index: Option<usize>,
    /// `⟨g₀, g⟩` on every fiber for the offending adjoint null function.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<ProfilePoint>>,
}

impl From<&Solvability<f64>> for SolvabilityOut {
    fn from(s: &Solvability<f64>) -> Self {
        match s {
            Solvability::Solvable => Self {
                verdict: "solvable",
                adjoint_index: None,
                witness: None,
            },
            Solvability::Obstructed { index, witness } => Self {
                verdict: "obstructed",
                adjoint_index: Some(*index),
                witness: Some(profile(witness)),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionOut {
    pub l2_norm: f64,
    pub max_modulus: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orthogonality: Option<f64>,
    pub excluded_fibers: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NullspaceOut {
    pub m: usize,
    pub n: usize,
    /// Fraction of fibers on which each direct null function is non-zero.
    pub supports: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bessel: Option<BesselOut>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BesselOut {
    pub lambda: [f64; 2],
    pub kernel_energy: f64,
    pub m_max: usize,
    pub pointwise_max_excess: f64,
    pub pointwise_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacteristicOut {
    pub kappa: [f64; 2],
    pub m: usize,
    pub support_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

fn alpha_header(dim: usize, name: &str) -> String {
    if dim == 1 {
        name.to_string()
    } else {
        (0..dim).map(|k| format!("{name}_{k}")).collect::<Vec<_>>().join(",")
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// `alpha,re,im` rows.
pub fn profile_csv(points: &[ProfilePoint]) -> String {
    let dim = points.first().map_or(1, |p| p.alpha.len());
    let mut out = format!("{},re,im\n", alpha_header(dim, "alpha"));
    for p in points {
        out.push_str(&format!("{},{},{}\n", join(&p.alpha), p.re, p.im));
    }
    out
}

/// `x,alpha,re,im` rows, fiber by fiber.
pub fn solution_csv(f: &FiberFunction) -> String {
    let grid = f.grid();
    let dim = grid.domain().dim();
    let mut out = format!("{},{},re,im\n", alpha_header(dim, "x"), alpha_header(dim, "alpha"));
    for j in 0..grid.n_fibers() {
        let alpha = join(grid.fibers().node(j));
        for (i, x) in grid.space().nodes().enumerate() {
            let v = f.get(i, j);
            out.push_str(&format!("{},{},{},{}\n", join(x), alpha, v.re, v.im));
        }
    }
    out
}
