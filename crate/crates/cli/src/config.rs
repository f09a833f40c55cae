//! TOML run configuration and the builders that turn it into solver inputs.

use std::fs;
use std::path::{Path, PathBuf};

use evoeq::models::kelvin_voigt::{self, KelvinVoigtConfig, KvProblem};
use evoeq::models::mixed_type::{self, MixedTypeConfig, Variant};
use evoeq::perturbation::{ConvolutionOperator, DelayOperator};
use evoeq::spatial_operator::{grad_1d_dirichlet, make_block_skew};
use evoeq::{EvoProblem64, OperatorFamily64, Perturbation, SkewOperator64, TimeGrid64, Trajectory64, Weight64};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Seed of every randomized check; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub weight: WeightSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    /// Number of steps; chosen from `ρ` when absent.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub rho: f64,
    /// Weights of `sweep-rho`.
    #[serde(default)]
    pub sweep: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ProblemSpec {
    General(GeneralSpec),
    MixedType(MixedTypeSpec),
    KelvinVoigt(KelvinVoigtSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralSpec {
    pub m0: FamilySpec,
    pub m1: FamilySpec,
    /// Zero operator when absent.
    pub spatial: Option<SpatialSpec>,
    pub forcing: ForcingSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedTypeSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_half_length")]
    pub half_length: f64,
    #[serde(default = "default_mixed_cells")]
    pub cells: usize,
    #[serde(default)]
    pub variant: VariantSpec,
    pub forcing: Option<ForcingSpec>,
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_half_length() -> f64 {
    2.0
}

fn default_mixed_cells() -> usize {
    64
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantSpec {
    Autonomous,
    #[default]
    Nonautonomous,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KelvinVoigtSpec {
    #[serde(default = "default_kv_cells")]
    pub cells: usize,
    /// `1/cells` when absent.
    pub dx: Option<f64>,
    /// Indices of the viscous cells; the left half when absent.
    pub viscous: Option<Vec<usize>>,
    /// Identity when absent.
    pub c: Option<FamilySpec>,
    pub b: Option<FamilySpec>,
    pub eta: Option<FamilySpec>,
    #[serde(default = "default_coercivity")]
    pub coercivity: f64,
    pub forcing: Option<ForcingSpec>,
}

fn default_kv_cells() -> usize {
    16
}

fn default_coercivity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilySpec {
    Constant { matrix: Vec<Vec<f64>> },
    /// Piece `i` holds on `]breaks[i−1], breaks[i]]`.
    Piecewise { breaks: Vec<f64>, matrices: Vec<Vec<Vec<f64>>> },
    /// `base + φ(t)·slope`, `φ` rising linearly from 0 at `t = 0` to 1 at `t = 1`.
    Ramp { base: Vec<Vec<f64>>, slope: Vec<Vec<f64>> },
    /// CSV rows `t, m00, m01, …` (row-major), interpolated linearly.
    Table { csv: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialSpec {
    /// `[[0, Dᵀ], [−D, 0]]` with `D` the Dirichlet gradient on `n` cells; dimension `2n`.
    #[serde(rename = "block_skew_1d")]
    BlockSkew1d { n: usize, dx: f64 },
    /// Headerless CSV of a skew-symmetric matrix.
    Matrix { csv: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    /// `amplitude` for `t > start`, zero before.
    Step {
        #[serde(default)]
        start: f64,
        amplitude: Vec<f64>,
    },
    /// `amplitude·sin²(π(t − start)/(end − start))` on `]start, end[`.
    Bump { start: f64, end: f64, amplitude: Vec<f64> },
    /// Trajectory CSV (`t,v0,…`), interpolated linearly onto the grid.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    #[default]
    None,
    Delay {
        tau: f64,
    },
    /// Kernel as a trajectory CSV starting at `t = 0`.
    Convolution {
        kernel: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub eps_margin: f64,
    pub tail_probes: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            eps_margin: 0.1,
            tail_probes: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Causality,
    NormBound,
    Energy,
    Adjoint,
    Oracle,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::Causality,
        CheckKind::NormBound,
        CheckKind::Energy,
        CheckKind::Adjoint,
        CheckKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Causality => "causality",
            CheckKind::NormBound => "norm_bound",
            CheckKind::Energy => "energy",
            CheckKind::Adjoint => "adjoint",
            CheckKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckKind>,
}

fn all_checks() -> Vec<CheckKind> {
    CheckKind::ALL.to_vec()
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { checks: all_checks() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

/// Problem assembled at one weight.
#[allow(clippy::large_enum_variant)]
pub enum Built {
    Plain {
        problem: EvoProblem64,
        perturbation: Option<Box<dyn Perturbation<f64>>>,
    },
    KelvinVoigt {
        kv: Box<KvProblem<f64>>,
        cfg: Box<KelvinVoigtConfig<f64>>,
    },
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            CliError::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses and validates; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.grid.t_min < self.grid.t_max) {
            return Err(config_err("grid: t_min must be below t_max"));
        }
        if self.grid.n == Some(0) {
            return Err(config_err("grid: n must be positive"));
        }
        if !(self.weight.rho > 0.0) || self.weight.sweep.iter().any(|r| !(*r > 0.0)) {
            return Err(config_err("weight: every rho must be positive"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 || !(self.solver.eps_margin > 0.0) {
            return Err(config_err("solver: tol, max_iter and eps_margin must be positive"));
        }
        for p in self.referenced_paths() {
            if !p.is_file() {
                return Err(config_err(format!("referenced file {} does not exist", p.display())));
            }
        }
        if matches!(self.problem, ProblemSpec::KelvinVoigt(_)) && !matches!(self.perturbation, PerturbationSpec::None) {
            return Err(config_err(
                "perturbation: the kelvin-voigt model carries its own remainder; use kind = \"none\"",
            ));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn referenced_paths(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut family = |f: &FamilySpec| {
            if let FamilySpec::Table { csv } = f {
                out.push(self.resolve(csv));
            }
        };
        match &self.problem {
            ProblemSpec::General(g) => {
                family(&g.m0);
                family(&g.m1);
            }
            ProblemSpec::KelvinVoigt(k) => {
                for f in [&k.c, &k.b, &k.eta].into_iter().flatten() {
                    family(f);
                }
            }
            ProblemSpec::MixedType(_) => {}
        }
        let forcing = match &self.problem {
            ProblemSpec::General(g) => Some(&g.forcing),
            ProblemSpec::MixedType(m) => m.forcing.as_ref(),
            ProblemSpec::KelvinVoigt(k) => k.forcing.as_ref(),
        };
        if let Some(ForcingSpec::Csv { path }) = forcing {
            out.push(self.resolve(path));
        }
        if let ProblemSpec::General(GeneralSpec {
            spatial: Some(SpatialSpec::Matrix { csv }),
            ..
        }) = &self.problem
        {
            out.push(self.resolve(csv));
        }
        if let PerturbationSpec::Convolution { kernel } = &self.perturbation {
            out.push(self.resolve(kernel));
        }
        out
    }

    pub fn model_name(&self) -> &'static str {
        match self.problem {
            ProblemSpec::General(_) => "general",
            ProblemSpec::MixedType(_) => "mixed-type",
            ProblemSpec::KelvinVoigt(_) => "kelvin-voigt",
        }
    }

    /// Grid of the config; without an explicit `n` the step honours the largest weight in use.
    pub fn grid(&self) -> Result<TimeGrid64, CliError> {
        let g = &self.grid;
        let res = match g.n {
            Some(n) => TimeGrid64::new(g.t_min, g.t_max, n),
            None => {
                let rho = self.weight.sweep.iter().fold(self.weight.rho, |a, b| a.max(*b));
                TimeGrid64::recommended(g.t_min, g.t_max, rho)
            }
        };
        res.map_err(|e| config_err(format!("grid: {e}")))
    }

    pub fn mixed_type(&self) -> Result<Option<MixedTypeConfig<f64>>, CliError> {
        let ProblemSpec::MixedType(m) = &self.problem else {
            return Ok(None);
        };
        let variant = match m.variant {
            VariantSpec::Autonomous => Variant::Autonomous,
            VariantSpec::Nonautonomous => Variant::Nonautonomous,
        };
        MixedTypeConfig::new(m.epsilon, m.half_length, m.cells, variant)
            .map(Some)
            .map_err(|e| config_err(format!("problem: {e}")))
    }

    pub fn kelvin_voigt(&self) -> Result<Option<KelvinVoigtConfig<f64>>, CliError> {
        let ProblemSpec::KelvinVoigt(k) = &self.problem else {
            return Ok(None);
        };
        if k.cells < 2 {
            return Err(config_err("problem: kelvin-voigt needs at least 2 cells"));
        }
        let mut cfg = KelvinVoigtConfig::reference(k.cells, k.dx.unwrap_or(1.0 / k.cells as f64));
        if let Some(idx) = &k.viscous {
            let mut mask = vec![false; k.cells];
            for &j in idx {
                if j >= k.cells {
                    return Err(config_err(format!("problem.viscous: cell {j} is out of range")));
                }
                mask[j] = true;
            }
            cfg.viscous = mask;
            cfg.b = OperatorFamily64::identity(cfg.dim_v());
        }
        if let Some(f) = &k.c {
            cfg.c = self.family(f, "problem.c")?;
        }
        if let Some(f) = &k.b {
            cfg.b = self.family(f, "problem.b")?;
        }
        if let Some(f) = &k.eta {
            cfg.eta = self.family(f, "problem.eta")?;
        }
        cfg.coercivity = k.coercivity;
        Ok(Some(cfg))
    }

    pub fn family(&self, f: &FamilySpec, what: &str) -> Result<OperatorFamily64, CliError> {
        let wrap = |e: evoeq::Error| config_err(format!("{what}: {e}"));
        match f {
            FamilySpec::Constant { matrix } => OperatorFamily64::constant(to_matrix(matrix, what)?).map_err(wrap),
            FamilySpec::Piecewise { breaks, matrices } => {
                let mats = matrices.iter().map(|m| to_matrix(m, what)).collect::<Result<Vec<_>, _>>()?;
                OperatorFamily64::piecewise(breaks.clone(), mats).map_err(wrap)
            }
            FamilySpec::Ramp { base, slope } => {
                OperatorFamily64::ramp(to_matrix(base, what)?, to_matrix(slope, what)?).map_err(wrap)
            }
            FamilySpec::Table { csv } => {
                let (times, mats) = read_table(&self.resolve(csv)).map_err(|m| config_err(format!("{what}: {m}")))?;
                OperatorFamily64::table(times, mats).map_err(wrap)
            }
        }
    }

    fn spatial(&self, spec: Option<&SpatialSpec>, dim: usize) -> Result<SkewOperator64, CliError> {
        let a = match spec {
            None => SkewOperator64::zero(dim),
            Some(SpatialSpec::BlockSkew1d { n, dx }) => {
                let grad = grad_1d_dirichlet(*n, *dx).map_err(|e| config_err(format!("problem.spatial: {e}")))?;
                make_block_skew(&grad)
            }
            Some(SpatialSpec::Matrix { csv }) => {
                let m = read_matrix(&self.resolve(csv)).map_err(|m| config_err(format!("problem.spatial: {m}")))?;
                SkewOperator64::new(m).map_err(|e| config_err(format!("problem.spatial: {e}")))?
            }
        };
        if a.dim() != dim {
            return Err(config_err(format!(
                "problem.spatial: dimension {} does not match the material law dimension {dim}",
                a.dim()
            )));
        }
        Ok(a)
    }

    fn forcing_spec(&self) -> Option<&ForcingSpec> {
        match &self.problem {
            ProblemSpec::General(g) => Some(&g.forcing),
            ProblemSpec::MixedType(m) => m.forcing.as_ref(),
            ProblemSpec::KelvinVoigt(k) => k.forcing.as_ref(),
        }
    }

    /// Right-hand side sampled on `grid`; model defaults apply when none is configured.
    pub fn forcing(&self, grid: TimeGrid64, dim: usize) -> Result<Trajectory64, CliError> {
        match self.forcing_spec() {
            Some(spec) => self.sample_forcing(spec, grid, dim),
            None => match &self.problem {
                ProblemSpec::MixedType(_) => {
                    let cfg = self.mixed_type()?.expect("mixed-type problem");
                    Ok(mixed_type::default_forcing(&cfg, grid))
                }
                ProblemSpec::KelvinVoigt(_) => {
                    let cfg = self.kelvin_voigt()?.expect("kelvin-voigt problem");
                    Ok(kelvin_voigt::default_forcing(&cfg, grid))
                }
                ProblemSpec::General(_) => unreachable!("general problems always carry a forcing"),
            },
        }
    }

    fn sample_forcing(&self, spec: &ForcingSpec, grid: TimeGrid64, dim: usize) -> Result<Trajectory64, CliError> {
        let amp = |a: &[f64]| -> Result<DVector<f64>, CliError> {
            if a.len() != dim {
                return Err(config_err(format!(
                    "problem.forcing: amplitude has {} entries, the state has {dim}",
                    a.len()
                )));
            }
            Ok(DVector::from_column_slice(a))
        };
        match spec {
            ForcingSpec::Zero => Ok(Trajectory64::zeros(grid, dim)),
            ForcingSpec::Step { start, amplitude } => {
                let a = amp(amplitude)?;
                Ok(Trajectory64::from_fn(grid, dim, |t| if t > *start { a.clone() } else { DVector::zeros(dim) }))
            }
            ForcingSpec::Bump { start, end, amplitude } => {
                if !(start < end) {
                    return Err(config_err("problem.forcing: bump needs start < end"));
                }
                let a = amp(amplitude)?;
                Ok(Trajectory64::from_fn(grid, dim, |t| {
                    if t <= *start || t >= *end {
                        DVector::zeros(dim)
                    } else {
                        &a * (std::f64::consts::PI * (t - start) / (end - start)).sin().powi(2)
                    }
                }))
            }
            ForcingSpec::Csv { path } => {
                let src = read_trajectory(&self.resolve(path)).map_err(|m| config_err(format!("problem.forcing: {m}")))?;
                if src.dim() != dim {
                    return Err(config_err(format!(
                        "problem.forcing: csv has {} components, the state has {dim}",
                        src.dim()
                    )));
                }
                interpolate(&src, grid).map_err(|m| config_err(format!("problem.forcing: {m}")))
            }
        }
    }

    pub fn perturbation(&self) -> Result<Option<Box<dyn Perturbation<f64>>>, CliError> {
        Ok(match &self.perturbation {
            PerturbationSpec::None => None,
            PerturbationSpec::Delay { tau } => Some(Box::new(
                DelayOperator::new(*tau).map_err(|e| config_err(format!("perturbation: {e}")))?,
            )),
            PerturbationSpec::Convolution { kernel } => {
                let k = read_trajectory(&self.resolve(kernel)).map_err(|m| config_err(format!("perturbation: {m}")))?;
                Some(Box::new(
                    ConvolutionOperator::new(k).map_err(|e| config_err(format!("perturbation: {e}")))?,
                ))
            }
        })
    }

    /// State dimension of the configured problem.
    pub fn dim(&self) -> Result<usize, CliError> {
        Ok(match &self.problem {
            ProblemSpec::General(g) => self.family(&g.m0, "problem.m0")?.dim(),
            ProblemSpec::MixedType(_) => self.mixed_type()?.expect("mixed-type problem").dim(),
            ProblemSpec::KelvinVoigt(k) => 2 * k.cells,
        })
    }

    /// Material law of the problem (for the kelvin-voigt model, of its reduced system).
    pub fn build(&self, rho: f64, grid: TimeGrid64) -> Result<Built, CliError> {
        let w = Weight64::new(rho).map_err(|e| config_err(format!("weight: {e}")))?;
        let dim = self.dim()?;
        let forcing = self.forcing(grid, dim)?;
        match &self.problem {
            ProblemSpec::General(g) => {
                let m0 = self.family(&g.m0, "problem.m0")?;
                let m1 = self.family(&g.m1, "problem.m1")?;
                let a = self.spatial(g.spatial.as_ref(), dim)?;
                let problem =
                    EvoProblem64::new(m0, m1, a, forcing, w).map_err(|e| config_err(format!("problem: {e}")))?;
                Ok(Built::Plain {
                    problem,
                    perturbation: self.perturbation()?,
                })
            }
            ProblemSpec::MixedType(_) => {
                let cfg = self.mixed_type()?.expect("mixed-type problem");
                let problem =
                    mixed_type::build_mixed_type(&cfg, w, forcing).map_err(|e| config_err(format!("problem: {e}")))?;
                Ok(Built::Plain {
                    problem,
                    perturbation: self.perturbation()?,
                })
            }
            ProblemSpec::KelvinVoigt(_) => {
                let cfg = self.kelvin_voigt()?.expect("kelvin-voigt problem");
                let kv = kelvin_voigt::build_kv_problem(&cfg, w, forcing).map_err(crate::error::classify)?;
                Ok(Built::KelvinVoigt {
                    kv: Box::new(kv),
                    cfg: Box::new(cfg),
                })
            }
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(config_err(format!("{what}: matrix rows must be non-empty and of equal length")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn parse_cell(s: &str, line: usize, path: &Path) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| format!("{} line {line}: {e}", path.display()))
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<DMatrix<f64>>), String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let width = r.headers().map_err(|e| format!("{}: {e}", path.display()))?.len();
    let d = ((width.saturating_sub(1)) as f64).sqrt().round() as usize;
    if d == 0 || d * d + 1 != width {
        return Err(format!("{}: a table needs 1 + d² columns, found {width}", path.display()));
    }
    let (mut times, mut mats) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let vals = rec.iter().map(|s| parse_cell(s, i + 2, path)).collect::<Result<Vec<_>, _>>()?;
        times.push(vals[0]);
        mats.push(DMatrix::from_row_slice(d, d, &vals[1..]));
    }
    if times.is_empty() {
        return Err(format!("{}: table has no rows", path.display()));
    }
    Ok((times, mats))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>, String> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        rows.push(rec.iter().map(|s| parse_cell(s, i + 1, path)).collect::<Result<Vec<_>, _>>()?);
    }
    to_matrix(&rows, &path.display().to_string()).map_err(|e| e.to_string())
}

fn read_trajectory(path: &Path) -> Result<Trajectory64, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Trajectory64::read_csv(file).map_err(|e| format!("{}: {e}", path.display()))
}

/// Linear interpolation of `src` onto `grid`, which must lie inside the sampled interval.
fn interpolate(src: &Trajectory64, grid: TimeGrid64) -> Result<Trajectory64, String> {
    let g = *src.grid();
    let slack = g.h() * 1e-9;
    if grid.t_min() < g.t_min() - slack || grid.t_max() > g.t_max() + slack {
        return Err(format!(
            "csv covers [{}, {}] but the grid spans [{}, {}]",
            g.t_min(),
            g.t_max(),
            grid.t_min(),
            grid.t_max()
        ));
    }
    Ok(Trajectory64::from_fn(grid, src.dim(), |t| {
        let x = ((t - g.t_min()) / g.h()).clamp(0.0, g.n() as f64);
        let k = (x.floor() as usize).min(g.n() - 1);
        let s = x - k as f64;
        src.sample(k) * (1.0 - s) + src.sample(k + 1) * s
    }))
}
