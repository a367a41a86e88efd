//! Batch front door: configuration parsing and run orchestration.
//!
//! A config is a JSON object with one block per module. The keys `N`, `p`
//! and `j` may also be given at top level as shorthand for
//! `problem.N`, `problem.p` and `symmetry.j`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bubble::{lattice_survey, BubbleParams, LatticeSurvey};
use crate::diagnostics::{
    classify_sequence, profile_record, synthetic_family, Classification, ClassifyThresholds,
    DiagnosticsReport, ProfileRecord, SequenceKind, SyntheticKind, DEFAULT_DELTA_FRACTION,
};
use crate::error::{Error, Result};
use crate::functional::ProblemParams;
use crate::grid::{DomainMask, Field, Grid, GridSpec};
use crate::io::{self, Encoding};
use crate::solver::{ps_diagnostics, solve, InitSpec, PsReport, SignCertificate, SolveConfig, SolveResult, Termination};
use crate::symmetry::{check_hypotheses, distinctness_witness, DistinctnessWitness, HypothesisReport, SymmetryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    ValidateBubble,
    Diagnose,
    CheckHypotheses,
    SweepJ,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::config("mode", format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub armijo_beta: f64,
    pub armijo_c1: f64,
    pub tol_defect: f64,
    pub tol_residual: f64,
    pub tol_energy: f64,
    pub max_iters: usize,
    pub diagnostics_every: usize,
    pub residual_bank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleBlock {
    #[serde(default = "default_bubble_eps")]
    pub eps: f64,
    #[serde(default = "default_bubble_radius")]
    pub radius: f64,
    #[serde(default = "default_spacings")]
    pub spacings: Vec<f64>,
}

fn default_bubble_eps() -> f64 {
    1.0
}
fn default_bubble_radius() -> f64 {
    4.0
}
fn default_spacings() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625]
}

impl Default for BubbleBlock {
    fn default() -> Self {
        BubbleBlock {
            eps: default_bubble_eps(),
            radius: default_bubble_radius(),
            spacings: default_spacings(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlock {
    pub kind: SyntheticKind,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseBlock {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_delta_fraction")]
    pub delta_fraction: f64,
    #[serde(default)]
    pub thresholds: ClassifyThresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticBlock>,
}

fn default_delta_fraction() -> f64 {
    DEFAULT_DELTA_FRACTION
}

impl Default for DiagnoseBlock {
    fn default() -> Self {
        DiagnoseBlock {
            inputs: Vec::new(),
            delta_fraction: DEFAULT_DELTA_FRACTION,
            thresholds: ClassifyThresholds::default(),
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Defaults to `1..=N/4`.
    pub j_values: Vec<usize>,
    pub workers: usize,
    /// Pointwise tolerance the distinctness margin is compared against.
    pub field_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub problem: ProblemParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetryConfig>,
    pub grid: GridSpec,
    pub solver: SolverBlock,
    pub bubble: BubbleBlock,
    pub diagnose: DiagnoseBlock,
    pub sweep: SweepBlock,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn solve_config(&self, symmetry: Option<SymmetryConfig>) -> SolveConfig {
        let s = &self.solver;
        let mut c = SolveConfig::new(self.problem, symmetry, self.grid.clone(), s.init.clone());
        c.step = s.step;
        c.armijo_beta = s.armijo_beta;
        c.armijo_c1 = s.armijo_c1;
        c.tol_defect = s.tol_defect;
        c.tol_residual = s.tol_residual;
        c.tol_energy = s.tol_energy;
        c.max_iters = s.max_iters;
        c.diagnostics_every = s.diagnostics_every;
        c.residual_bank = s.residual_bank;
        c
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Command-line overrides applied before defaults are filled in.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    #[serde(rename = "N")]
    dim: Option<usize>,
    p: Option<f64>,
    j: Option<usize>,
    problem: Option<RawProblem>,
    symmetry: Option<RawSymmetry>,
    grid: Option<RawGrid>,
    solver: Option<RawSolver>,
    bubble: Option<BubbleBlock>,
    diagnose: Option<DiagnoseBlock>,
    sweep: Option<RawSweep>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    #[serde(rename = "N")]
    dim: Option<usize>,
    p: Option<f64>,
    mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSymmetry {
    #[serde(rename = "N")]
    dim: Option<usize>,
    j: Option<usize>,
    samples_per_circle: Option<usize>,
    lambda_samples: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: Option<usize>,
    nodes_per_axis: Option<usize>,
    half_extent: Option<f64>,
    mask: Option<DomainMask>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    init: Option<InitSpec>,
    step: Option<f64>,
    armijo_beta: Option<f64>,
    armijo_c1: Option<f64>,
    tol_defect: Option<f64>,
    tol_residual: Option<f64>,
    tol_energy: Option<f64>,
    max_iters: Option<usize>,
    diagnostics_every: Option<usize>,
    residual_bank: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    j_values: Option<Vec<usize>>,
    workers: Option<usize>,
    field_tol: Option<f64>,
}

pub const DEFAULT_OUTPUT_DIR: &str = "critp-out";
pub const OUTPUT_ROOT_ENV: &str = "CRITP_OUTPUT_ROOT";

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| Error::config(".", e.to_string()))?;
    resolve(raw, overrides).map_err(|e| match e {
        Error::Config { path, message } => {
            let key = path.rsplit('.').next().unwrap_or(&path).to_string();
            let message = match locate_key(text, &key) {
                Some(line) => format!("{message} (line {line})"),
                None => message,
            };
            Error::Config { path, message }
        }
        other => other,
    })
}

fn locate_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn pick<T: PartialEq + Copy + std::fmt::Debug>(path: &str, a: Option<T>, b: Option<T>) -> Result<Option<T>> {
    match (a, b) {
        (Some(x), Some(y)) if x != y => Err(Error::config(
            path,
            format!("top-level value {x:?} conflicts with block value {y:?}"),
        )),
        (x, y) => Ok(x.or(y)),
    }
}

fn default_nodes_per_axis(dim: usize) -> usize {
    match dim {
        0..=2 => 129,
        3 => 65,
        4 => 33,
        5 => 17,
        6 => 11,
        _ => 7,
    }
}

/// High dimensions use a ball smaller than the lattice span to keep the
/// interpolation stencils of the projector affordable.
fn default_mask_fraction(dim: usize) -> f64 {
    if dim >= 7 {
        0.75
    } else {
        1.0
    }
}

/// Bubble seed off the fixed subspace: one coordinate per 4-block.
pub fn default_init(dim: usize, half_extent: f64, j: Option<usize>) -> InitSpec {
    let blocks = j.unwrap_or(1).max(1);
    let mut center = vec![0.0; dim];
    for b in 0..blocks.min(dim.div_ceil(4)) {
        center[4 * b] = 0.3 * half_extent / (blocks as f64).sqrt();
    }
    InitSpec::ProjectedBubble {
        center,
        eps: 0.25 * half_extent,
    }
}

fn resolve(raw: RawConfig, ov: &Overrides) -> Result<RunConfig> {
    let rp = raw.problem.unwrap_or_default();
    let dim = pick("N", raw.dim, rp.dim)?.ok_or_else(|| Error::config("N", "missing dimension"))?;
    let p = pick("p", raw.p, rp.p)?.ok_or_else(|| Error::config("p", "missing exponent"))?;
    if dim < 2 {
        return Err(Error::config("N", format!("N must be at least 2, got {dim}")));
    }
    if !(p > 1.0 && p < dim as f64) {
        return Err(Error::config("p", format!("p must satisfy 1 < p < N (N = {dim}, p = {p})")));
    }
    let problem = ProblemParams { dim, p, mu: rp.mu };
    problem.validate().map_err(|e| Error::config("problem", e.to_string()))?;
    let seed = ov.seed.or(raw.seed).unwrap_or(0);
    let mode = ov.mode.or(raw.mode).ok_or_else(|| Error::config("mode", "missing mode"))?;

    let symmetry = match (raw.j, raw.symmetry) {
        (None, None) => None,
        (top, block) => {
            let rs = block.unwrap_or_default();
            if let Some(n) = rs.dim {
                if n != dim {
                    return Err(Error::config("symmetry.N", format!("symmetry N = {n} differs from N = {dim}")));
                }
            }
            let j = pick("j", top, rs.j)?.ok_or_else(|| Error::config("symmetry.j", "missing j"))?;
            if j < 1 || 4 * j > dim {
                return Err(Error::config("j", format!("j must satisfy 1 <= j and 4j <= N (N = {dim}, j = {j})")));
            }
            let mut s = SymmetryConfig::new(dim, j).map_err(|e| Error::config("symmetry", e.to_string()))?;
            s.samples_per_circle = rs.samples_per_circle.unwrap_or(s.samples_per_circle);
            s.lambda_samples = rs.lambda_samples.unwrap_or(s.lambda_samples);
            s.seed = rs.seed.unwrap_or(seed);
            s.validate().map_err(|e| Error::config("symmetry", e.to_string()))?;
            Some(s)
        }
    };

    let rg = raw.grid.unwrap_or_default();
    if let Some(d) = rg.dim {
        if d != dim {
            return Err(Error::config("grid.dim", format!("grid dim = {d} differs from N = {dim}")));
        }
    }
    let half_extent = rg.half_extent.unwrap_or(2.0);
    let grid = GridSpec::new(
        dim,
        rg.nodes_per_axis.unwrap_or_else(|| default_nodes_per_axis(dim)),
        half_extent,
        rg.mask.unwrap_or(DomainMask::Ball {
            radius: default_mask_fraction(dim) * half_extent,
        }),
    )
    .map_err(|e| Error::config("grid", e.to_string()))?;

    let rs = raw.solver.unwrap_or_default();
    let base = SolveConfig::new(problem, None, grid.clone(), default_init(dim, half_extent, None));
    let solver = SolverBlock {
        init: rs
            .init
            .unwrap_or_else(|| default_init(dim, half_extent, symmetry.as_ref().map(|s| s.j))),
        step: rs.step,
        armijo_beta: rs.armijo_beta.unwrap_or(base.armijo_beta),
        armijo_c1: rs.armijo_c1.unwrap_or(base.armijo_c1),
        tol_defect: rs.tol_defect.unwrap_or(base.tol_defect),
        tol_residual: rs.tol_residual.unwrap_or(base.tol_residual),
        tol_energy: rs.tol_energy.unwrap_or(base.tol_energy),
        max_iters: rs.max_iters.unwrap_or(base.max_iters),
        diagnostics_every: rs.diagnostics_every.unwrap_or(0),
        residual_bank: rs.residual_bank.unwrap_or(base.residual_bank),
    };

    let rsw = raw.sweep.unwrap_or_default();
    let sweep = SweepBlock {
        j_values: rsw.j_values.unwrap_or_else(|| (1..=dim / 4).collect()),
        workers: ov.workers.or(rsw.workers).unwrap_or(1).max(1),
        field_tol: rsw.field_tol.unwrap_or(1e-6),
    };
    for &j in &sweep.j_values {
        if j < 1 || 4 * j > dim {
            return Err(Error::config(
                "sweep.j_values",
                format!("j must satisfy 1 <= j and 4j <= N (N = {dim}, j = {j})"),
            ));
        }
    }

    let output_dir = ov.output_dir.clone().or(raw.output_dir).unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
        root.join(mode_name(mode))
    });

    let config = RunConfig {
        mode,
        problem,
        symmetry,
        grid,
        solver,
        bubble: raw.bubble.unwrap_or_default(),
        diagnose: raw.diagnose.unwrap_or_default(),
        sweep,
        output_dir,
        seed,
    };
    check_mode(&config)?;
    Ok(config)
}

fn mode_name(mode: Mode) -> String {
    serde_json::to_value(mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn check_mode(c: &RunConfig) -> Result<()> {
    match c.mode {
        Mode::Solve => c
            .solve_config(c.symmetry.clone())
            .validate()
            .map_err(|e| Error::config("solver", e.to_string())),
        Mode::SweepJ | Mode::CheckHypotheses if c.problem.dim < 4 => {
            Err(Error::config("N", "this mode needs N >= 4"))
        }
        Mode::ValidateBubble if c.bubble.spacings.is_empty() => {
            Err(Error::config("bubble.spacings", "need at least one spacing"))
        }
        Mode::Diagnose if c.diagnose.inputs.is_empty() && c.diagnose.synthetic.is_none() => Err(
            Error::config("diagnose.inputs", "give field files or a synthetic family"),
        ),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a RunConfig,
}

/// Summary of one solve, written next to its field and trace.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub j: Option<usize>,
    pub termination: Termination,
    pub iterations: usize,
    #[serde(rename = "J")]
    pub energy: f64,
    pub relative_defect: f64,
    pub dual_residual: Option<f64>,
    pub sign: SignCertificate,
    pub equivariance_defect: Option<f64>,
    pub near_zero_fraction: f64,
    pub descent: PsReport,
}

impl SolveSummary {
    fn new(j: Option<usize>, r: &SolveResult) -> Result<Self> {
        let last = r.final_report();
        Ok(SolveSummary {
            j,
            termination: r.termination,
            iterations: r.iterations,
            energy: last.energy,
            relative_defect: last.relative_defect(),
            dual_residual: last.dual_residual,
            sign: r.sign,
            equivariance_defect: r.equivariance_defect,
            near_zero_fraction: r.near_zero_fraction,
            descent: ps_diagnostics(&r.trace)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistinctnessEntry {
    pub i: usize,
    pub j: usize,
    pub witness: DistinctnessWitness,
    pub distinct: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub runs: Vec<SolveSummary>,
    pub field_tol: f64,
    pub distinctness: Vec<DistinctnessEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BubbleLevel {
    #[serde(flatten)]
    pub survey: LatticeSurvey,
    /// Previous level's sup residual over this one.
    pub reduction: Option<f64>,
}

/// What a run produced, beyond the files it wrote.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RunOutcome {
    Solve(SolveSummary),
    ValidateBubble { levels: Vec<BubbleLevel> },
    Diagnose(DiagnosticsReport),
    CheckHypotheses { reports: Vec<HypothesisReport> },
    SweepJ(SweepReport),
}

pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    io::write_json(
        &out.join("manifest.json"),
        &Manifest {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
        },
    )?;
    let outcome = match config.mode {
        Mode::Solve => RunOutcome::Solve(run_solve(config)?),
        Mode::ValidateBubble => RunOutcome::ValidateBubble {
            levels: run_validate_bubble(config)?,
        },
        Mode::Diagnose => RunOutcome::Diagnose(run_diagnose(config)?),
        Mode::CheckHypotheses => RunOutcome::CheckHypotheses {
            reports: run_check_hypotheses(config)?,
        },
        Mode::SweepJ => RunOutcome::SweepJ(run_sweep(config)?),
    };
    Ok(outcome)
}

fn write_solve_artifacts(dir: &Path, j: Option<usize>, r: &SolveResult) -> Result<SolveSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_text(&dir.join("trace.csv"), &io::trace_csv(&r.trace))?;
    io::write_field(&dir.join("field.pbf"), &r.field, Encoding::auto(r.field.grid().spec()))?;
    let summary = SolveSummary::new(j, r)?;
    io::write_json(&dir.join("result.json"), &summary)?;
    Ok(summary)
}

fn run_solve(config: &RunConfig) -> Result<SolveSummary> {
    let sc = config.solve_config(config.symmetry.clone());
    let result = solve(&sc)?;
    let summary = write_solve_artifacts(&config.output_dir, config.symmetry.as_ref().map(|s| s.j), &result)?;
    let record = profile_record(
        &result.field,
        &config.problem,
        config.diagnose.delta_fraction,
        config.symmetry.as_ref(),
        None,
    );
    if let Ok(record) = record {
        let report = DiagnosticsReport::from_records(
            &[record],
            Classification {
                kind: SequenceKind::Undetermined,
                normal: None,
                offset: None,
            },
        )?;
        io::write_json(&config.output_dir.join("diagnostics.json"), &report)?;
    }
    Ok(summary)
}

fn run_validate_bubble(config: &RunConfig) -> Result<Vec<BubbleLevel>> {
    let b = &config.bubble;
    let params = BubbleParams::centered(config.problem, b.eps)?;
    let mut levels: Vec<BubbleLevel> = Vec::new();
    for &h in &b.spacings {
        let survey = lattice_survey(&params, b.radius, h)?;
        let reduction = levels
            .last()
            .map(|l| l.survey.residual.sup_residual / survey.residual.sup_residual);
        levels.push(BubbleLevel { survey, reduction });
    }
    let mut csv = String::from("h,sup_residual,l1_residual,J,C_u,active_nodes,reduction\n");
    for l in &levels {
        let s = &l.survey;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.h,
            s.residual.sup_residual,
            s.residual.l1_residual,
            s.energy.energy,
            s.c_u,
            s.active_nodes,
            l.reduction.map(|r| r.to_string()).unwrap_or_default()
        ));
    }
    io::write_text(&config.output_dir.join("bubble_residuals.csv"), &csv)?;
    io::write_json(&config.output_dir.join("bubble.json"), &levels)?;
    Ok(levels)
}

fn run_diagnose(config: &RunConfig) -> Result<DiagnosticsReport> {
    let d = &config.diagnose;
    let mut fields: Vec<Field> = Vec::new();
    for path in &d.inputs {
        fields.push(io::read_field(path)?);
    }
    if let Some(s) = &d.synthetic {
        let grid = Arc::new(Grid::new(config.grid.clone())?);
        fields.extend(synthetic_family(s.kind, &s.eps, &config.problem, &grid)?);
    }
    let reference = fields.first().map(|f| f.grid().clone());
    let records = fields
        .iter()
        .map(|f| {
            profile_record(
                f,
                &config.problem,
                d.delta_fraction,
                config.symmetry.as_ref(),
                reference.as_ref(),
            )
        })
        .collect::<Result<Vec<ProfileRecord>>>()?;
    let classification = if records.len() >= 2 {
        classify_sequence(&records, &config.problem, &d.thresholds)?
    } else {
        Classification {
            kind: SequenceKind::Undetermined,
            normal: None,
            offset: None,
        }
    };
    let report = DiagnosticsReport::from_records(&records, classification)?;
    io::write_json(&config.output_dir.join("diagnostics.json"), &report)?;
    Ok(report)
}

fn run_check_hypotheses(config: &RunConfig) -> Result<Vec<HypothesisReport>> {
    let js: Vec<usize> = match &config.symmetry {
        Some(s) => vec![s.j],
        None => (1..=config.problem.dim / 4).collect(),
    };
    let reports = js
        .into_iter()
        .map(|j| {
            let mut s = SymmetryConfig::new(config.problem.dim, j)?;
            s.seed = config.seed;
            check_hypotheses(&s, 64)
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_json(&config.output_dir.join("hypotheses.json"), &reports)?;
    Ok(reports)
}

fn symmetry_for(config: &RunConfig, j: usize) -> Result<SymmetryConfig> {
    let mut s = SymmetryConfig::new(config.problem.dim, j)?;
    if let Some(base) = &config.symmetry {
        s.samples_per_circle = base.samples_per_circle;
        s.lambda_samples = base.lambda_samples;
        s.seed = base.seed;
    } else {
        s.seed = config.seed;
    }
    Ok(s)
}

fn run_sweep(config: &RunConfig) -> Result<SweepReport> {
    let js = config.sweep.j_values.clone();
    let jobs: Vec<(usize, SolveConfig)> = js
        .iter()
        .map(|&j| {
            let mut sc = config.solve_config(Some(symmetry_for(config, j)?));
            sc.init = default_init(config.problem.dim, config.grid.half_extent, Some(j));
            Ok((j, sc))
        })
        .collect::<Result<_>>()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<(SolveSummary, Field)>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = config.sweep.workers.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some((j, sc)) = jobs.get(k) else { break };
                let dir = config.output_dir.join(format!("j{j}"));
                let res = solve(sc).and_then(|r| {
                    let s = write_solve_artifacts(&dir, Some(*j), &r)?;
                    Ok((s, r.field))
                });
                slots.lock().expect("sweep slots")[k] = Some(res);
            });
        }
    });
    let mut runs = Vec::new();
    let mut fields = Vec::new();
    for slot in slots.into_inner().expect("sweep slots") {
        let (s, f) = slot.expect("every job ran")?;
        runs.push(s);
        fields.push(f);
    }
    let tol = config.sweep.field_tol;
    let mut distinctness = Vec::new();
    for a in 0..js.len() {
        for b in 0..js.len() {
            if js[a] < js[b] {
                let witness = distinctness_witness(&fields[a], js[a], &fields[b], js[b], tol)?;
                let distinct = witness.measured_margin > 10.0 * tol;
                distinctness.push(DistinctnessEntry {
                    i: js[a],
                    j: js[b],
                    witness,
                    distinct,
                });
            }
        }
    }
    let report = SweepReport {
        runs,
        field_tol: tol,
        distinctness,
    };
    io::write_json(&config.output_dir.join("distinctness.json"), &report)?;
    let mut csv = String::from("i,j,predicted_margin,measured_margin,max_gap,distinct\n");
    for e in &report.distinctness {
        let w = &e.witness;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.i, e.j, w.predicted_margin, w.measured_margin, w.max_gap, e.distinct
        ));
    }
    io::write_text(&config.output_dir.join("distinctness.csv"), &csv)?;
    Ok(report)
}
