//! JSON problem files.
//!
//! ```json
//! {
//!   "domain": [0, 1], "nu": 1,
//!   "grid": {"rule": "gauss", "n": 16, "fiber_n": 33},
//!   "kernel": {"builtin": "constant", "value": 1},
//!   "rhs": {"terms": [{"coeff": 1, "space": "linear"}]},
//!   "kappa": 0.5
//! }
//! ```
//!
//! Kernels are a builtin (`constant`, `polynomial`, `gaussian`), a
//! `finite_rank` list of `{left, right}` factor pairs, or a `sampled` tensor
//! file. The right-hand side is a sum of factor `terms` or a `sampled` file.
//! `kappa` (a number or `[re, im]`) and `kappa_search` are mutually
//! exclusive. Relative file paths resolve against the problem file's
//! directory. Parsing fills every default, so a parsed file serializes with
//! all effective settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use pie_core::grid::Rule;
use pie_core::kernel::{Basis, BuiltinKernel, Factor, RankTerm};
use pie_core::series::{CoefficientMethod, SeriesConfig};
use pie_core::solver::SearchRegion;
use pie_core::{Complex64, Domain, FiberFunction, Kernel, ProductGrid, SharedGrid, SolverConfig};

use crate::error::{CliError, CliResult};
use crate::tensor::{KernelTensor, RhsTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub domain: [f64; 2],
    #[serde(default = "default_nu")]
    pub nu: usize,
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<RhsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<ComplexSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_search: Option<SearchSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_nu() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Gauss,
    Trapezoid,
}

impl From<RuleName> for Rule {
    fn from(r: RuleName) -> Rule {
        match r {
            RuleName::Gauss => Rule::GaussLegendre,
            RuleName::Trapezoid => Rule::Trapezoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rule: RuleName,
    pub n: usize,
    #[serde(default = "default_fiber_n")]
    pub fiber_n: usize,
}

fn default_fiber_n() -> usize {
    33
}

/// A complex number written as `1.5` or `[1.5, -0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(self) -> Complex64 {
        match self {
            ComplexSpec::Real(re) => Complex64::new(re, 0.0),
            ComplexSpec::Pair([re, im]) => Complex64::new(re, im),
        }
    }

    fn check(self, field: &str) -> CliResult<Complex64> {
        let v = self.value();
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(CliError::validation(field, "must be finite"))
        }
    }
}

impl Default for ComplexSpec {
    fn default() -> Self {
        ComplexSpec::Real(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSpec {
    #[default]
    One,
    Linear,
    Quadratic,
    Sin(f64),
    Cos(f64),
    Legendre(u32),
}

impl From<BasisSpec> for Basis<f64> {
    fn from(b: BasisSpec) -> Self {
        match b {
            BasisSpec::One => Basis::One,
            BasisSpec::Linear => Basis::Linear,
            BasisSpec::Quadratic => Basis::Quadratic,
            BasisSpec::Sin(freq) => Basis::Sin { freq },
            BasisSpec::Cos(freq) => Basis::Cos { freq },
            BasisSpec::Legendre(k) => Basis::Legendre(k),
        }
    }
}

/// `coeff · space(t) · fiber(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    #[serde(default)]
    pub coeff: ComplexSpec,
    #[serde(default)]
    pub space: BasisSpec,
    #[serde(default)]
    pub fiber: BasisSpec,
}

impl FactorSpec {
    fn build(&self, field: &str) -> CliResult<Factor<f64>> {
        let coeff = self.coeff.check(&format!("{field}.coeff"))?;
        for (name, b) in [("space", self.space), ("fiber", self.fiber)] {
            if let BasisSpec::Sin(f) | BasisSpec::Cos(f) = b {
                if !f.is_finite() {
                    return Err(CliError::validation(format!("{field}.{name}"), "frequency must be finite"));
                }
            }
        }
        Ok(Factor::new(coeff, self.space.into(), self.fiber.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub left: FactorSpec,
    pub right: FactorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    Constant,
    Polynomial,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ComplexSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<ComplexSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_pow: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_pow: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_pow: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite_rank: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled: Option<PathBuf>,
}

impl KernelSpec {
    fn param_names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.value.is_some() {
            out.push("value");
        }
        if self.coeff.is_some() {
            out.push("coeff");
        }
        if self.x_pow.is_some() {
            out.push("x_pow");
        }
        if self.s_pow.is_some() {
            out.push("s_pow");
        }
        if self.y_pow.is_some() {
            out.push("y_pow");
        }
        if self.amplitude.is_some() {
            out.push("amplitude");
        }
        if self.width.is_some() {
            out.push("width");
        }
        out
    }

    /// Fills builtin defaults and rejects parameters the chosen form ignores.
    fn normalize(&mut self) -> CliResult<()> {
        let forms = [self.builtin.is_some(), self.finite_rank.is_some(), self.sampled.is_some()];
        if forms.iter().filter(|&&f| f).count() != 1 {
            return Err(CliError::validation(
                "kernel",
                "exactly one of `builtin`, `finite_rank`, `sampled` is required",
            ));
        }
        let allowed: &[&str] = match self.builtin {
            Some(BuiltinName::Constant) => {
                self.value.get_or_insert(ComplexSpec::Real(1.0));
                &["value"]
            }
            Some(BuiltinName::Polynomial) => {
                self.coeff.get_or_insert(ComplexSpec::Real(1.0));
                self.x_pow.get_or_insert(0);
                self.s_pow.get_or_insert(0);
                self.y_pow.get_or_insert(0);
                &["coeff", "x_pow", "s_pow", "y_pow"]
            }
            Some(BuiltinName::Gaussian) => {
                self.amplitude.get_or_insert(1.0);
                self.width.get_or_insert(0.5);
                &["amplitude", "width"]
            }
            None => &[],
        };
        if let Some(extra) = self.param_names().into_iter().find(|p| !allowed.contains(p)) {
            return Err(CliError::validation(
                format!("kernel.{extra}"),
                "not a parameter of this kernel form",
            ));
        }
        if let Some(terms) = &self.finite_rank {
            if terms.is_empty() {
                return Err(CliError::validation("kernel.finite_rank", "needs at least one term"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<FactorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchSpec {
    Disc { center: ComplexSpec, radius: f64 },
    Rect { re: [f64; 2], im: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative singular-value threshold for singular fibers.
    pub singular: f64,
    pub rank: f64,
    /// Positive-measure fraction of fiber nodes.
    pub tau: f64,
    pub cluster: f64,
    pub solvability: f64,
    pub residual: f64,
    pub series_tail: f64,
    pub series_max_order: usize,
    pub bessel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let cfg = SolverConfig::default();
        let series = SeriesConfig::<f64>::default();
        Self {
            singular: cfg.singular_tol,
            rank: cfg.rank_tol,
            tau: cfg.tau,
            cluster: cfg.cluster_tol,
            solvability: cfg.solvability_tol,
            residual: cfg.residual_tol,
            series_tail: series.tail_tol(),
            series_max_order: series.max_order(),
            bessel: 1e-8,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> CliResult<()> {
        let positive = [
            ("singular", self.singular),
            ("rank", self.rank),
            ("cluster", self.cluster),
            ("solvability", self.solvability),
            ("residual", self.residual),
            ("series_tail", self.series_tail),
            ("bessel", self.bessel),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::validation(format!("tolerances.{name}"), "must be positive and finite"));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(CliError::validation("tolerances.tau", "must lie in (0, 1]"));
        }
        if self.series_max_order == 0 {
            return Err(CliError::validation("tolerances.series_max_order", "must be at least 1"));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            singular_tol: self.singular,
            rank_tol: self.rank,
            tau: self.tau,
            cluster_tol: self.cluster,
            solvability_tol: self.solvability,
            residual_tol: self.residual,
        }
    }

    pub fn series_config(&self) -> CliResult<SeriesConfig<f64>> {
        SeriesConfig::new(self.series_max_order, self.series_tail, CoefficientMethod::TraceRecursion)
            .map_err(|e| CliError::validation("tolerances.series_max_order", e.to_string()))
    }
}

/// Command-line overrides applied on top of a problem file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub fibers: Option<usize>,
    pub tol_solve: Option<f64>,
    pub tau: Option<f64>,
}

/// Everything a command needs, resolved from a validated [`ProblemFile`].
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: SharedGrid,
    pub kernel: Kernel,
    pub rhs: Option<FiberFunction>,
    pub kappa: Option<Complex64>,
    pub search: Option<SearchRegion<f64>>,
    pub solver: SolverConfig,
    pub series: SeriesConfig<f64>,
    pub bessel_tol: f64,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(f) = o.fibers {
            self.grid.fiber_n = f;
        }
        if let Some(t) = o.tol_solve {
            self.tolerances.singular = t;
        }
        if let Some(t) = o.tau {
            self.tolerances.tau = t;
        }
    }

    /// Checks the file and fills defaults. `base` resolves relative paths.
    pub fn validate(&mut self, base: &Path) -> CliResult<()> {
        let [a, b] = self.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CliError::validation("domain", "needs finite bounds with a < b"));
        }
        if !(1..=3).contains(&self.nu) {
            return Err(CliError::validation("nu", "must be 1, 2 or 3"));
        }
        if self.grid.n < 2 {
            return Err(CliError::validation("grid.n", "must be at least 2"));
        }
        if self.grid.fiber_n < 2 {
            return Err(CliError::validation("grid.fiber_n", "must be at least 2"));
        }
        self.tolerances.validate()?;
        self.kernel.normalize()?;
        if let (Some(BuiltinName::Gaussian), Some(w)) = (self.kernel.builtin, self.kernel.width) {
            if !(w.is_finite() && w > 0.0) {
                return Err(CliError::validation("kernel.width", "must be positive"));
            }
        }
        if let Some(terms) = &self.kernel.finite_rank {
            for (k, t) in terms.iter().enumerate() {
                t.left.build(&format!("kernel.finite_rank[{k}].left"))?;
                t.right.build(&format!("kernel.finite_rank[{k}].right"))?;
            }
        }
        let n_space = self.grid.n.pow(self.nu as u32);
        let n_fibers = self.grid.fiber_n.pow(self.nu as u32);
        if let Some(path) = &self.kernel.sampled {
            let dims = KernelTensor::read_dims(&base.join(path), "kernel.sampled")?;
            if dims != [n_space, n_space, n_fibers] {
                return Err(CliError::validation(
                    "kernel.sampled",
                    format!("tensor shape {dims:?} does not match the grid [{n_space}, {n_space}, {n_fibers}]"),
                ));
            }
        }
        if let Some(rhs) = &self.rhs {
            match (&rhs.terms, &rhs.sampled) {
                (Some(terms), None) => {
                    if terms.is_empty() {
                        return Err(CliError::validation("rhs.terms", "needs at least one term"));
                    }
                    for (k, t) in terms.iter().enumerate() {
                        t.build(&format!("rhs.terms[{k}]"))?;
                    }
                }
                (None, Some(path)) => {
                    let dims = RhsTensor::read_dims(&base.join(path), "rhs.sampled")?;
                    if dims != [n_space, n_fibers] {
                        return Err(CliError::validation(
                            "rhs.sampled",
                            format!("tensor shape {dims:?} does not match the grid [{n_space}, {n_fibers}]"),
                        ));
                    }
                }
                _ => return Err(CliError::validation("rhs", "exactly one of `terms`, `sampled` is required")),
            }
        }
        if self.kappa.is_some() && self.kappa_search.is_some() {
            return Err(CliError::validation("kappa_search", "`kappa` and `kappa_search` are mutually exclusive"));
        }
        if let Some(k) = self.kappa {
            k.check("kappa")?;
        }
        if let Some(s) = self.kappa_search {
            s.region()?;
        }
        Ok(())
    }

    /// Builds grids, kernel and right-hand side. Call after [`validate`](Self::validate).
    pub fn build(&self, base: &Path) -> CliResult<Problem> {
        let domain = Domain::new(self.domain[0], self.domain[1], self.nu)
            .map_err(|e| CliError::validation("domain", e.to_string()))?;
        let grid: SharedGrid = Arc::new(
            ProductGrid::uniform(domain, self.grid.rule.into(), self.grid.n, self.grid.fiber_n)
                .map_err(|e| CliError::validation("grid", e.to_string()))?,
        );
        let kernel = self.build_kernel(&domain, &grid, base)?;
        let rhs = match &self.rhs {
            None => None,
            Some(RhsSpec {
                terms: Some(terms), ..
            }) => {
                let factors = terms
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t.build(&format!("rhs.terms[{k}]")))
                    .collect::<CliResult<Vec<_>>>()?;
                Some(FiberFunction::from_fn(grid.clone(), |x, y| {
                    factors.iter().map(|f| f.eval(&domain, x, y)).sum()
                }))
            }
            Some(RhsSpec {
                sampled: Some(path), ..
            }) => {
                let t = RhsTensor::read(&base.join(path), "rhs.sampled")?;
                check_values(&t.values, "rhs.sampled")?;
                let (n, ny) = (grid.n_space(), grid.n_fibers());
                if t.dims != [n, ny] {
                    return Err(CliError::validation("rhs.sampled", "tensor shape does not match the grid"));
                }
                // file order is (x, y) row-major; fiber functions store fiber-major
                let values = (0..ny)
                    .flat_map(|j| (0..n).map(move |i| (i, j)))
                    .map(|(i, j)| t.values[i * ny + j])
                    .collect();
                Some(FiberFunction::from_values(grid.clone(), values)?)
            }
            Some(_) => return Err(CliError::validation("rhs", "exactly one of `terms`, `sampled` is required")),
        };
        Ok(Problem {
            grid,
            kernel,
            rhs,
            kappa: self.kappa.map(ComplexSpec::value),
            search: self.kappa_search.map(|s| s.region()).transpose()?,
            solver: self.tolerances.solver_config(),
            series: self.tolerances.series_config()?,
            bessel_tol: self.tolerances.bessel,
        })
    }

    fn build_kernel(&self, domain: &Domain, grid: &SharedGrid, base: &Path) -> CliResult<Kernel> {
        let k = &self.kernel;
        if let Some(name) = k.builtin {
            let builtin = match name {
                BuiltinName::Constant => BuiltinKernel::Constant {
                    value: k.value.unwrap_or_default().check("kernel.value")?,
                },
                BuiltinName::Polynomial => BuiltinKernel::Polynomial {
                    coeff: k.coeff.unwrap_or_default().check("kernel.coeff")?,
                    x_pow: k.x_pow.unwrap_or(0),
                    s_pow: k.s_pow.unwrap_or(0),
                    y_pow: k.y_pow.unwrap_or(0),
                },
                BuiltinName::Gaussian => BuiltinKernel::GaussianBump {
                    amplitude: k.amplitude.unwrap_or(1.0),
                    width: k.width.unwrap_or(0.5),
                },
            };
            return Ok(Kernel::builtin(*domain, builtin));
        }
        if let Some(terms) = &k.finite_rank {
            let terms = terms
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    Ok(RankTerm::new(
                        t.left.build(&format!("kernel.finite_rank[{j}].left"))?,
                        t.right.build(&format!("kernel.finite_rank[{j}].right"))?,
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?;
            return Kernel::finite_rank(*domain, terms)
                .map_err(|e| CliError::validation("kernel.finite_rank", e.to_string()));
        }
        let path = k
            .sampled
            .as_ref()
            .ok_or_else(|| CliError::validation("kernel", "no kernel form given"))?;
        let t = KernelTensor::read(&base.join(path), "kernel.sampled")?;
        check_values(&t.values, "kernel.sampled")?;
        Kernel::sampled(grid.clone(), t.values).map_err(|e| CliError::validation("kernel.sampled", e.to_string()))
    }
}

fn check_values(values: &[Complex64], field: &str) -> CliResult<()> {
    match values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        Some(k) => Err(CliError::validation(field, format!("entry {k} is not finite"))),
        None => Ok(()),
    }
}

impl SearchSpec {
    pub fn region(&self) -> CliResult<SearchRegion<f64>> {
        match *self {
            SearchSpec::Disc { center, radius } => {
                let center = center.check("kappa_search.disc.center")?;
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(CliError::validation("kappa_search.disc.radius", "must be positive and finite"));
                }
                Ok(SearchRegion::Disc { center, radius })
            }
            SearchSpec::Rect { re, im } => {
                for (name, r) in [("re", re), ("im", im)] {
                    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                        return Err(CliError::validation(
                            format!("kappa_search.rect.{name}"),
                            "needs finite bounds with lower <= upper",
                        ));
                    }
                }
                Ok(SearchRegion::Rect {
                    re: (re[0], re[1]),
                    im: (im[0], im[1]),
                })
            }
        }
    }
}

/// Reads, overrides and validates a problem file.
pub fn parse_problem(path: &Path, overrides: &Overrides) -> CliResult<ProblemFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut file = ProblemFile::from_json(&text)?;
    file.apply(overrides);
    file.validate(base_dir(path))?;
    Ok(file)
}

pub fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"domain":[0,1], "nu":1, "grid":{"rule":"gauss","n":16}, "kernel":{"builtin":"constant","value":1}, "kappa":0.5}"#;

    fn parse(text: &str) -> CliResult<ProblemFile> {
        let mut p = ProblemFile::from_json(text)?;
        p.validate(Path::new("."))?;
        Ok(p)
    }

    fn field_of(err: CliError) -> String {
        match err {
            CliError::Validation { field, .. } => field,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn minimal_file_is_valid_and_filled() {
        let p = parse(MINIMAL).unwrap();
        assert_eq!(p.grid.fiber_n, 33);
        assert_eq!(p.tolerances, Tolerances::default());
        assert_eq!(p.kappa, Some(ComplexSpec::Real(0.5)));
        let built = p.build(Path::new(".")).unwrap();
        assert_eq!(built.grid.n_space(), 16);
        assert_eq!(built.kappa, Some(Complex64::new(0.5, 0.0)));
    }

    #[test]
    fn kappa_and_search_are_exclusive() {
        let text = MINIMAL.replace(
            "\"kappa\":0.5",
            r#""kappa":0.5, "kappa_search":{"disc":{"center":0,"radius":5}}"#,
        );
        assert_eq!(field_of(parse(&text).unwrap_err()), "kappa_search");
    }

    #[test]
    fn malformed_json_reports_position() {
        match ProblemFile::from_json("{\n  \"domain\": [0, 1,\n}") {
            Err(CliError::Parse { line, column, .. }) => assert!(line == 3 && column >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"nu\":1", "\"nu\":1, \"colour\":2");
        assert!(matches!(ProblemFile::from_json(&text), Err(CliError::Parse { .. })));
        let text = MINIMAL.replace("\"value\":1", "\"value\":1, \"width\":2");
        assert_eq!(field_of(parse(&text).unwrap_err()), "kernel.width");
    }

    #[test]
    fn validation_names_the_field() {
        let cases = [
            (MINIMAL.replace("[0,1]", "[1,0]"), "domain"),
            (MINIMAL.replace("\"nu\":1", "\"nu\":4"), "nu"),
            (MINIMAL.replace("\"n\":16", "\"n\":1"), "grid.n"),
            (MINIMAL.replace("\"kappa\":0.5", "\"tolerances\":{\"tau\":0}"), "tolerances.tau"),
            (
                MINIMAL.replace(r#""builtin":"constant","value":1"#, r#""finite_rank":[]"#),
                "kernel.finite_rank",
            ),
            (MINIMAL.replace(r#""builtin":"constant","value":1"#, ""), "kernel"),
            (
                MINIMAL.replace("\"kappa\":0.5", r#""kappa_search":{"disc":{"center":0,"radius":-1}}"#),
                "kappa_search.disc.radius",
            ),
        ];
        for (text, field) in cases {
            assert_eq!(field_of(parse(&text).unwrap_err()), field, "{text}");
        }
    }

    #[test]
    fn sampled_kernel_shape_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let bad = KernelTensor::new([4, 4, 3], vec![Complex64::new(1.0, 0.0); 48]).unwrap();
        bad.write(&dir.path().join("k.bin")).unwrap();
        let text = r#"{"domain":[0,1],"grid":{"rule":"gauss","n":4,"fiber_n":5},"kernel":{"sampled":"k.bin"}}"#;
        let mut p = ProblemFile::from_json(text).unwrap();
        assert_eq!(field_of(p.validate(dir.path()).unwrap_err()), "kernel.sampled");

        let good = KernelTensor::new([4, 4, 5], vec![Complex64::new(1.0, 0.0); 80]).unwrap();
        good.write(&dir.path().join("k.bin")).unwrap();
        p.validate(dir.path()).unwrap();
        let built = p.build(dir.path()).unwrap();
        assert_eq!(built.kernel.eval(&[built.grid.space().node(0)[0]], built.grid.space().node(1), built.grid.fibers().node(2)).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn sampled_rhs_is_transposed_into_fibers() {
        let dir = tempfile::tempdir().unwrap();
        let (n, ny) = (3, 4);
        let values = (0..n * ny).map(|k| Complex64::new(k as f64, 0.0)).collect();
        RhsTensor::new([n, ny], values).unwrap().write(&dir.path().join("g.bin")).unwrap();
        let text = r#"{"domain":[0,1],"grid":{"rule":"trapezoid","n":3,"fiber_n":4},"kernel":{"builtin":"constant"},"rhs":{"sampled":"g.bin"}}"#;
        let mut p = ProblemFile::from_json(text).unwrap();
        p.validate(dir.path()).unwrap();
        let g = p.build(dir.path()).unwrap().rhs.unwrap();
        assert_eq!(g.get(2, 1), Complex64::new((2 * ny + 1) as f64, 0.0));
    }

    #[test]
    fn round_trip_after_filling_defaults() {
        let texts = [
            MINIMAL.to_string(),
            r#"{"domain":[-1,2],"nu":2,"grid":{"rule":"trapezoid","n":5,"fiber_n":4},
                "kernel":{"finite_rank":[{"left":{"coeff":[1,2],"space":{"legendre":1}},"right":{"space":{"cos":2.5},"fiber":"linear"}}]},
                "rhs":{"terms":[{"coeff":-1,"space":"quadratic","fiber":{"sin":1}}]},
                "kappa_search":{"rect":{"re":[-3,3],"im":[-1,1]}},
                "tolerances":{"tau":0.1,"series_max_order":12}}"#
                .to_string(),
            r#"{"domain":[0,1],"grid":{"rule":"gauss","n":8},"kernel":{"builtin":"gaussian","width":0.3},"kappa":[0,3]}"#
                .to_string(),
        ];
        for text in texts {
            let p = parse(&text).unwrap();
            let again = parse(&p.to_json()).unwrap();
            assert_eq!(again, p);
            assert_eq!(again.to_json(), p.to_json());
        }
    }
}
