//! Nehari-constrained descent in the space of equivariant fields.
//!
//! Iterates are kept as `u = P v` where `P` is the signed Haar average and
//! `v` a representative. A step moves `v` along `-P^T grad J(u)`, then
//! rescales onto the Nehari set.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bubble::BubbleParams;
use crate::diagnostics::{extract_scale, ConcentrationSnapshot, DEFAULT_DELTA_FRACTION};
use crate::error::{Error, Result};
use crate::functional::{
    energy_gradient_with_flux, nehari_scale_with_flux, EnergyReport, ProblemParams,
};
use crate::grid::{Field, Flux, Grid, GridSpec};
use crate::symmetry::{equivariance_defect, project_to_fixed, EquivariantProjector, SymmetryConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    ProjectedBubble { center: Vec<f64>, eps: f64 },
    RandomSmooth { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub problem: ProblemParams,
    /// `None` solves without symmetry (positive ground state).
    pub symmetry: Option<SymmetryConfig>,
    pub grid: GridSpec,
    pub init: InitSpec,
    /// Initial step; `None` means `h^{2-N} / (4N)`.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default = "default_beta")]
    pub armijo_beta: f64,
    #[serde(default = "default_c1")]
    pub armijo_c1: f64,
    #[serde(default = "default_tol_defect")]
    pub tol_defect: f64,
    #[serde(default = "default_tol_residual")]
    pub tol_residual: f64,
    #[serde(default = "default_tol_energy")]
    pub tol_energy: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Attach concentration diagnostics every this many iterations; 0 disables.
    #[serde(default)]
    pub diagnostics_every: usize,
    /// Size of the bank of test fields used for the dual residual.
    #[serde(default = "default_bank")]
    pub residual_bank: usize,
}

fn default_beta() -> f64 {
    0.5
}
fn default_c1() -> f64 {
    1e-4
}
fn default_tol_defect() -> f64 {
    1e-10
}
fn default_tol_residual() -> f64 {
    0.0
}
fn default_tol_energy() -> f64 {
    1e-9
}
fn default_max_iters() -> usize {
    2000
}
fn default_bank() -> usize {
    8
}

pub const MAX_BACKTRACKS: usize = 60;

impl SolveConfig {
    pub fn new(problem: ProblemParams, symmetry: Option<SymmetryConfig>, grid: GridSpec, init: InitSpec) -> Self {
        SolveConfig {
            problem,
            symmetry,
            grid,
            init,
            step: None,
            armijo_beta: default_beta(),
            armijo_c1: default_c1(),
            tol_defect: default_tol_defect(),
            tol_residual: default_tol_residual(),
            tol_energy: default_tol_energy(),
            max_iters: default_max_iters(),
            diagnostics_every: 0,
            residual_bank: default_bank(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.grid.validate()?;
        if self.grid.dim != self.problem.dim {
            return Err(Error::Parameter(format!(
                "grid dimension {} differs from N = {}",
                self.grid.dim, self.problem.dim
            )));
        }
        if let Some(s) = &self.symmetry {
            s.validate()?;
            if s.dim != self.problem.dim {
                return Err(Error::Parameter("symmetry N differs from problem N".into()));
            }
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return Err(Error::Parameter("armijo_beta must lie in (0, 1)".into()));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::Parameter("armijo_c1 must lie in (0, 1)".into()));
        }
        if let Some(a) = self.step {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Parameter("step must be positive".into()));
            }
        }
        for (name, v) in [
            ("tol_defect", self.tol_defect),
            ("tol_residual", self.tol_residual),
            ("tol_energy", self.tol_energy),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be >= 0")));
            }
        }
        if let InitSpec::ProjectedBubble { center, eps } = &self.init {
            if center.len() != self.problem.dim {
                return Err(Error::Parameter("init center has the wrong dimension".into()));
            }
            if !(eps.is_finite() && *eps > 0.0) {
                return Err(Error::Parameter("init eps must be positive".into()));
            }
            if let Some(s) = &self.symmetry {
                let fixed = project_to_fixed(s, center);
                let off: f64 = center
                    .iter()
                    .zip(&fixed)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if off <= 1e-12 {
                    return Err(Error::Degenerate(
                        "bubble center lies in the fixed-point subspace; the signed average of a radial \
                         field about a fixed point vanishes. Move the center off the fixed subspace"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Stagnation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub report: EnergyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignCertificate {
    pub min: f64,
    pub max: f64,
    pub changes_sign: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: Field,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub termination: Termination,
    pub sign: SignCertificate,
    pub equivariance_defect: Option<f64>,
    /// Volume fraction of the active set where `|W| <= 1e-3 max |W|`.
    pub near_zero_fraction: f64,
    pub concentration: Vec<ConcentrationSnapshot>,
}

impl SolveResult {
    pub fn final_report(&self) -> &EnergyReport {
        &self.trace.last().expect("trace is never empty").report
    }
}

enum Projection {
    Identity,
    Equivariant(EquivariantProjector),
}

impl Projection {
    fn apply(&self, v: &Field) -> Field {
        match self {
            Projection::Identity => v.clone(),
            Projection::Equivariant(p) => p.apply(v),
        }
    }

    fn apply_transpose(&self, r: &Field) -> Field {
        match self {
            Projection::Identity => r.clone(),
            Projection::Equivariant(p) => p.apply_transpose(r),
        }
    }
}

/// Descent state: the representative `v`, the iterate `u = P v` on the
/// Nehari set, and the data reused by the next step.
pub struct Solver {
    config: SolveConfig,
    grid: Arc<Grid>,
    projection: Projection,
    flux: Flux,
    v: Field,
    u: Field,
    report: EnergyReport,
    gradient: Field,
    alpha: f64,
    bank: Option<Vec<Field>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub report: EnergyReport,
    pub alpha: f64,
    pub accepted: bool,
    /// `||P^T grad J(u)||_2` before the step.
    pub gradient_norm: f64,
}

impl Solver {
    pub fn new(config: SolveConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(Grid::new(config.grid.clone())?);
        let projection = match &config.symmetry {
            Some(s) => Projection::Equivariant(EquivariantProjector::new(&grid, s)?),
            None => Projection::Identity,
        };
        let mut v = seed_field(&config, &grid, 0)?;
        let mut u = projection.apply(&v);
        if let InitSpec::RandomSmooth { .. } = config.init {
            let mut attempt = 1;
            while u.max_abs() <= 1e-12 * v.max_abs().max(f64::MIN_POSITIVE) && attempt < 8 {
                v = seed_field(&config, &grid, attempt)?;
                u = projection.apply(&v);
                attempt += 1;
            }
        }
        if u.max_abs() <= 1e-10 * v.max_abs() {
            return Err(Error::Degenerate(
                "the projection annihilates the initial field; choose a seed that is not invariant \
                 under the group (for bubbles, a center off the fixed-point subspace)"
                    .into(),
            ));
        }
        let flux = config.problem.flux_for(&u);
        let scaled = nehari_scale_with_flux(&u, &config.problem, flux)?;
        let v = v.scaled(scaled.t_star);
        let u = scaled.scaled;
        let gradient = projection.apply_transpose(&energy_gradient_with_flux(&u, &config.problem, flux));
        let h = grid.spacing();
        let n = grid.dim() as f64;
        let alpha = config.step.unwrap_or(h.powf(2.0 - n) / (4.0 * n));
        Ok(Solver {
            report: scaled.report,
            config,
            grid,
            projection,
            flux,
            v,
            u,
            gradient,
            alpha,
            bank: None,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn field(&self) -> &Field {
        &self.u
    }

    pub fn report(&self) -> &EnergyReport {
        &self.report
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    /// One Armijo step. The energy never increases: a rejected step leaves
    /// the state untouched.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let d = self.gradient.scaled(-1.0);
        let d2 = d.dot(&d);
        let gradient_norm = d2.sqrt();
        if d2 == 0.0 {
            return Ok(StepOutcome {
                report: self.report,
                alpha: 0.0,
                accepted: false,
                gradient_norm,
            });
        }
        let pd = self.projection.apply(&d);
        let j0 = self.report.energy;
        let mut alpha = self.alpha;
        for _ in 0..=MAX_BACKTRACKS {
            let trial = self.u.axpy(alpha, &pd);
            if let Ok(scaled) = nehari_scale_with_flux(&trial, &self.config.problem, self.flux) {
                let j1 = scaled.report.energy;
                if j1.is_finite() && j1 <= j0 - self.config.armijo_c1 * alpha * d2 {
                    let v_new = self.v.axpy(alpha, &d).scaled(scaled.t_star);
                    let g_new = self.projection.apply_transpose(&energy_gradient_with_flux(
                        &scaled.scaled,
                        &self.config.problem,
                        self.flux,
                    ));
                    let s = v_new.axpy(-1.0, &self.v);
                    let y = g_new.axpy(-1.0, &self.gradient);
                    let sy = s.dot(&y);
                    let ss = s.dot(&s);
                    // Barzilai-Borwein guess for the next trial step
                    self.alpha = if sy > 0.0 && ss > 0.0 {
                        (ss / sy).clamp(alpha * 1e-3, alpha * 1e3)
                    } else {
                        alpha * 2.0
                    };
                    self.v = v_new;
                    self.u = scaled.scaled;
                    self.report = scaled.report;
                    self.gradient = g_new;
                    return Ok(StepOutcome {
                        report: self.report,
                        alpha,
                        accepted: true,
                        gradient_norm,
                    });
                }
            }
            alpha *= self.config.armijo_beta;
        }
        Ok(StepOutcome {
            report: self.report,
            alpha,
            accepted: false,
            gradient_norm,
        })
    }

    /// `max |J'(u) e| / ||e||` over a fixed bank of projected smooth bumps.
    pub fn dual_residual(&mut self) -> Result<f64> {
        if self.bank.is_none() {
            self.bank = Some(self.build_bank()?);
        }
        let g = energy_gradient_with_flux(&self.u, &self.config.problem, self.flux);
        let bank = self.bank.as_ref().expect("bank built above");
        Ok(bank.iter().map(|e| g.dot(e).abs()).fold(0.0, f64::max))
    }

    fn build_bank(&self) -> Result<Vec<Field>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6261_6e6b);
        let mut bank = Vec::with_capacity(self.config.residual_bank);
        let mut tries = 0;
        while bank.len() < self.config.residual_bank && tries < 10 * self.config.residual_bank.max(1) {
            tries += 1;
            let raw = random_bump(&self.grid, &mut rng, 1);
            let e = self.projection.apply(&raw);
            let flux = Flux {
                p: self.config.problem.p,
                mu: 0.0,
            };
            let norm = crate::grid::p_energy_unchecked(&e, flux).powf(1.0 / flux.p);
            if norm > 0.0 && norm.is_finite() && e.max_abs() > 1e-12 {
                bank.push(e.scaled(1.0 / norm));
            }
        }
        Ok(bank)
    }

    fn concentration_snapshot(&self, step: usize) -> Option<ConcentrationSnapshot> {
        let total = self.report.crit_norm;
        extract_scale(
            &self.u,
            &self.config.problem,
            DEFAULT_DELTA_FRACTION * total,
            self.config.symmetry.as_ref(),
        )
            .ok()
            .map(|s| ConcentrationSnapshot {
                step,
                eps: s.eps,
                xi: s.xi,
            })
    }

    fn into_result(
        self,
        trace: Vec<TraceEntry>,
        iterations: usize,
        termination: Termination,
        concentration: Vec<ConcentrationSnapshot>,
    ) -> Result<SolveResult> {
        let w = self.u;
        let (min, max) = (w.min(), w.max());
        let tol = 1e-8 * w.max_abs();
        let equivariance_defect = match &self.config.symmetry {
            Some(s) => Some(equivariance_defect(&w, s, 256)?),
            None => None,
        };
        let cut = 1e-3 * w.max_abs();
        let near = w.values().iter().filter(|v| v.abs() <= cut).count();
        Ok(SolveResult {
            near_zero_fraction: near as f64 / w.values().len() as f64,
            sign: SignCertificate {
                min,
                max,
                changes_sign: min < -tol && max > tol,
            },
            equivariance_defect,
            field: w,
            trace,
            iterations,
            termination,
            concentration,
        })
    }
}

fn seed_field(config: &SolveConfig, grid: &Arc<Grid>, attempt: u64) -> Result<Field> {
    match &config.init {
        InitSpec::ProjectedBubble { center, eps } => {
            let b = BubbleParams::new(config.problem, *eps, center.clone())?;
            let spec = grid.spec();
            let taper = 0.25 * spec.half_extent;
            Ok(Field::from_fn(grid, |x| {
                let d = spec.signed_distance(x).max(0.0);
                b.value(x) * (d / taper).min(1.0)
            }))
        }
        InitSpec::RandomSmooth { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9)));
            Ok(random_bump(grid, &mut rng, 6))
        }
    }
}

/// Sum of `count` Gaussian bumps with random signs, widths and centers,
/// tapered to vanish on the mask boundary.
pub fn random_bump(grid: &Arc<Grid>, rng: &mut impl Rng, count: usize) -> Field {
    let spec = grid.spec();
    let ext = spec.half_extent;
    let dim = grid.dim();
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5) * ext).collect();
            let w = rng.gen_range(0.15..0.35) * ext;
            let a = rng.gen_range(0.5..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (c, w, a)
        })
        .collect();
    let taper = 0.25 * ext;
    Field::from_fn(grid, |x| {
        let d = spec.signed_distance(x).max(0.0);
        let s: f64 = bumps
            .iter()
            .map(|(c, w, a)| {
                let r2: f64 = x.iter().zip(c).map(|(p, q)| (p - q) * (p - q)).sum();
                a * (-r2 / (w * w)).exp()
            })
            .sum();
        s * (d / taper).min(1.0)
    })
}

/// Initial field: the seed, projected and scaled onto the Nehari set.
pub fn initialize(config: &SolveConfig) -> Result<Field> {
    Ok(Solver::new(config.clone())?.u)
}

pub fn solve(config: &SolveConfig) -> Result<SolveResult> {
    solve_with(config, |_, _| {})
}

/// As [`solve`], calling `observe(step, outcome)` after every step.
pub fn solve_with(config: &SolveConfig, mut observe: impl FnMut(usize, &StepOutcome)) -> Result<SolveResult> {
    let mut solver = Solver::new(config.clone())?;
    let mut trace = vec![TraceEntry {
        step: 0,
        report: with_residual(&mut solver)?,
    }];
    let mut concentration = Vec::new();
    let mut quiet = 0;
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;
    let g0 = solver.gradient.dot(&solver.gradient).sqrt();
    for it in 1..=config.max_iters {
        let before = solver.report.energy;
        let out = solver.step()?;
        observe(it, &out);
        if !out.accepted {
            termination = if out.gradient_norm == 0.0 {
                Termination::Converged
            } else {
                Termination::Stagnation
            };
            break;
        }
        iterations = it;
        let mut report = out.report;
        if config.diagnostics_every > 0 && it % config.diagnostics_every == 0 {
            report.dual_residual = Some(solver.dual_residual()?);
            if let Some(s) = solver.concentration_snapshot(it) {
                concentration.push(s);
            }
        }
        trace.push(TraceEntry { step: it, report });
        let decrease = (before - report.energy) / report.energy.abs().max(f64::MIN_POSITIVE);
        let gnorm = solver.gradient.dot(&solver.gradient).sqrt();
        let small = decrease <= config.tol_energy || gnorm <= config.tol_residual * g0;
        if report.relative_defect() <= config.tol_defect && small {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= 2 {
            termination = Termination::Converged;
            break;
        }
    }
    if let Some(last) = trace.last_mut() {
        if last.report.dual_residual.is_none() {
            last.report.dual_residual = Some(solver.dual_residual()?);
        }
    }
    let last_step = trace.last().map(|t| t.step).unwrap_or(0);
    if config.diagnostics_every > 0 && concentration.last().map(|c| c.step) != Some(last_step) {
        if let Some(s) = solver.concentration_snapshot(last_step) {
            concentration.push(s);
        }
    }
    solver.into_result(trace, iterations, termination, concentration)
}

fn with_residual(solver: &mut Solver) -> Result<EnergyReport> {
    let mut r = solver.report;
    r.dual_residual = Some(solver.dual_residual()?);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsReport {
    pub monotone: bool,
    /// Largest relative increase of `J` between consecutive entries.
    pub max_increase: f64,
    pub energy_first: f64,
    pub energy_last: f64,
    /// Last over first recorded dual residual, when at least two exist.
    pub residual_ratio: Option<f64>,
    pub ps_like: bool,
}

/// Monotonicity of `J` along a trace and the trend of the dual residual.
/// `ps_like` flags a plateauing energy with a decreasing residual.
pub fn ps_diagnostics(trace: &[TraceEntry]) -> Result<PsReport> {
    if trace.len() < 2 {
        return Err(Error::Precondition("ps_diagnostics needs at least two trace entries".into()));
    }
    let mut max_increase: f64 = 0.0;
    for w in trace.windows(2) {
        let (a, b) = (w[0].report.energy, w[1].report.energy);
        let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        max_increase = max_increase.max((b - a) / scale);
    }
    let monotone = max_increase <= 1e-12;
    let residuals: Vec<f64> = trace.iter().filter_map(|t| t.report.dual_residual).collect();
    let residual_ratio = (residuals.len() >= 2 && residuals[0] > 0.0)
        .then(|| residuals[residuals.len() - 1] / residuals[0]);
    let first = trace[0].report.energy;
    let last = trace[trace.len() - 1].report.energy;
    let tail_start = trace.len() - (trace.len() / 4).max(2).min(trace.len());
    let tail = &trace[tail_start..];
    let tail_drop = (tail[0].report.energy - last) / last.abs().max(f64::MIN_POSITIVE);
    let plateau = tail_drop.abs() <= 1e-6;
    Ok(PsReport {
        monotone,
        max_increase,
        energy_first: first,
        energy_last: last,
        residual_ratio,
        ps_like: monotone && plateau && residual_ratio.map(|r| r < 1.0).unwrap_or(false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainMask;

    fn small_config(symmetric: bool) -> SolveConfig {
        let problem = ProblemParams::new(4, 2.0).unwrap();
        let grid = GridSpec::new(4, 9, 1.0, DomainMask::Ball { radius: 1.0 }).unwrap();
        let sym = symmetric.then(|| SymmetryConfig::new(4, 1).unwrap());
        let mut c = SolveConfig::new(
            problem,
            sym,
            grid,
            InitSpec::ProjectedBubble {
                center: vec![0.4, 0.0, 0.0, 0.0],
                eps: 0.3,
            },
        );
        c.max_iters = 30;
        c
    }

    #[test]
    fn max_iters_zero_returns_initialization() {
        let mut c = small_config(true);
        c.max_iters = 0;
        let r = solve(&c).unwrap();
        assert_eq!(r.termination, Termination::MaxIters);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.trace.len(), 1);
        let init = initialize(&c).unwrap();
        assert_eq!(init.values(), r.field.values());
    }

    #[test]
    fn bubble_at_fixed_point_is_rejected() {
        let mut c = small_config(true);
        c.init = InitSpec::ProjectedBubble {
            center: vec![0.0; 4],
            eps: 0.3,
        };
        assert!(matches!(initialize(&c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn energy_never_increases() {
        let c = small_config(true);
        let r = solve(&c).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].report.energy <= w[0].report.energy);
        }
        for t in &r.trace {
            assert!(t.report.relative_defect() <= 1e-10);
        }
        assert!(r.sign.changes_sign);
    }

    #[test]
    fn ps_diagnostics_flags() {
        let rep = |j: f64, d: Option<f64>| EnergyReport {
            energy: j,
            grad_norm_p: 4.0 * j,
            crit_norm: 4.0 * j,
            nehari_defect: 0.0,
            dual_residual: d,
        };
        let constant: Vec<TraceEntry> = (0..5).map(|k| TraceEntry { step: k, report: rep(1.0, None) }).collect();
        let r = ps_diagnostics(&constant).unwrap();
        assert!(r.monotone && !r.ps_like);
        let rising: Vec<TraceEntry> = (0..5).map(|k| TraceEntry { step: k, report: rep(1.0 + k as f64, None) }).collect();
        assert!(!ps_diagnostics(&rising).unwrap().monotone);
        assert!(ps_diagnostics(&rising[..1]).is_err());
        let plateau: Vec<TraceEntry> = (0..8)
            .map(|k| TraceEntry {
                step: k,
                report: rep(1.0, Some(2f64.powi(-(k as i32)))),
            })
            .collect();
        assert!(ps_diagnostics(&plateau).unwrap().ps_like);
    }
}
