//! The explicit positive solution
//! `U(x) = a (1 + |x|^{p/(p-1)})^{-(N-p)/p}` and its dilates, with residual
//! and decay checks on lattices.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{EnergyReport, ProblemParams};
use crate::grid::{discrete_gradient, p_laplacian_apply, Field, Flux, Grid, GridSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub problem: ProblemParams,
    pub eps: f64,
    pub center: Vec<f64>,
    pub a_const: f64,
}

impl BubbleParams {
    pub fn new(problem: ProblemParams, eps: f64, center: Vec<f64>) -> Result<Self> {
        problem.validate()?;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
        }
        if center.len() != problem.dim || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!(
                "center must be a finite point of R^{}",
                problem.dim
            )));
        }
        Ok(BubbleParams {
            a_const: normalization_constant(problem.dim, problem.p),
            problem,
            eps,
            center,
        })
    }

    pub fn centered(problem: ProblemParams, eps: f64) -> Result<Self> {
        let dim = problem.dim;
        Self::new(problem, eps, vec![0.0; dim])
    }

    /// Unit-scale profile `U` as a function of `r = |x|`.
    pub fn profile(&self, r: f64) -> f64 {
        let p = self.problem.p;
        let n = self.problem.dim as f64;
        self.a_const * (1.0 + r.powf(p / (p - 1.0))).powf(-(n - p) / p)
    }

    /// `eps^{-(N-p)/p} U(r / eps)`, `r` measured from the center.
    pub fn radial_value(&self, r: f64) -> f64 {
        self.eps.powf(-self.problem.dilation_exponent()) * self.profile(r / self.eps)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        self.radial_value(r)
    }

    /// Samples the bubble at the active nodes (zero outside the mask).
    pub fn sample(&self, grid: &Arc<Grid>) -> Result<Field> {
        if grid.dim() != self.problem.dim {
            return Err(Error::Parameter("grid and bubble dimensions differ".into()));
        }
        Ok(Field::from_fn(grid, |x| self.value(x)))
    }

    /// `max(U_eps(x - xi) - U_eps(boundary_radius), 0)`: the bubble lowered so
    /// that it vanishes on the sphere of radius `boundary_radius` about its
    /// center. Sampling the raw bubble on a Dirichlet mask leaves a jump at
    /// the boundary whose discrete energy grows like `1/h`.
    pub fn sample_shifted(&self, grid: &Arc<Grid>, boundary_radius: f64) -> Result<Field> {
        if grid.dim() != self.problem.dim {
            return Err(Error::Parameter("grid and bubble dimensions differ".into()));
        }
        let floor = self.radial_value(boundary_radius);
        Ok(Field::from_fn(grid, |x| (self.value(x) - floor).max(0.0)))
    }
}

/// `a_{N,p} = [N ((N-p)/(p-1))^{p-1}]^{(N-p)/p^2}`.
pub fn normalization_constant(dim: usize, p: f64) -> f64 {
    let n = dim as f64;
    (n * ((n - p) / (p - 1.0)).powf(p - 1.0)).powf((n - p) / (p * p))
}

pub fn bubble_value(params: &BubbleParams, x: &[f64]) -> f64 {
    params.value(x)
}

/// `-Delta_p u - |u|^{p*-2} u` at every active node.
pub fn pointwise_residual(u: &Field, problem: &ProblemParams) -> Result<Field> {
    problem.validate()?;
    let flux = problem.flux_for(u);
    let lap = p_laplacian_apply(u, flux)?;
    let q = problem.p_star() - 2.0;
    let values = lap
        .field
        .values()
        .iter()
        .zip(u.values())
        .map(|(l, &v)| -l - v.abs().powf(q) * v)
        .collect();
    Field::from_values(u.grid(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub sup_residual: f64,
    pub l1_residual: f64,
    /// Nodes at distance `>= 4h` from the mask boundary.
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn resolution_warning(eps: f64, h: f64) -> Option<String> {
    (eps < 4.0 * h).then(|| format!("bubble core under-resolved: eps = {eps} < 4h = {}", 4.0 * h))
}

/// Residual of the sampled bubble away from the mask boundary.
pub fn residual_norm(params: &BubbleParams, grid: &Arc<Grid>) -> Result<ResidualNorms> {
    let u = params.sample(grid)?;
    let res = pointwise_residual(&u, &params.problem)?;
    let h = grid.spacing();
    let spec = grid.spec();
    let mut x = vec![0.0; grid.dim()];
    let (mut sup, mut l1, mut nodes) = (0.0_f64, 0.0, 0);
    for (i, r) in res.values().iter().enumerate() {
        grid.write_node_coords(i, &mut x);
        if spec.signed_distance(&x) >= 4.0 * h * (1.0 - 1e-9) {
            sup = sup.max(r.abs());
            l1 += r.abs();
            nodes += 1;
        }
    }
    Ok(ResidualNorms {
        sup_residual: sup,
        l1_residual: l1 * grid.cell_volume(),
        nodes,
        warning: resolution_warning(params.eps, h),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSurvey {
    pub h: f64,
    pub radius: f64,
    pub residual: ResidualNorms,
    /// Energy of the shifted sample (see [`BubbleParams::sample_shifted`]).
    pub energy: EnergyReport,
    pub c_u: f64,
    pub active_nodes: u64,
}

/// Residual, energy and decay constant of a centered bubble sampled on the
/// ball of radius `radius` with spacing `h`, without materializing the field.
///
/// The scheme commutes with coordinate permutations (not with single-axis
/// reflections once `p != 2`), so only sorted offsets are visited, each
/// weighted by the size of its orbit.
pub fn lattice_survey(params: &BubbleParams, radius: f64, h: f64) -> Result<LatticeSurvey> {
    if params.center.iter().any(|&c| c != 0.0) {
        return Err(Error::Parameter("lattice_survey needs a bubble centered at the origin".into()));
    }
    let spec = GridSpec::ball_with_spacing(params.problem.dim, radius, h)?;
    let dim = spec.dim;
    let kmax = spec.half_nodes();
    // shifted values indexed by |k|^2, with slack for the stencil
    let lim = ((kmax + 3) * (kmax + 3)) as usize;
    let snap = 1e-9 * h;
    let floor = params.radial_value(radius);
    let table: Vec<f64> = (0..=lim)
        .map(|n2| {
            let r = (n2 as f64).sqrt() * h;
            if radius - r > snap {
                (params.radial_value(r) - floor).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let umax = table[0];
    let flux = Flux {
        p: params.problem.p,
        mu: params.problem.mu.unwrap_or(if params.problem.p < 2.0 { 1e-8 * umax / h } else { 0.0 }),
    };
    let ps = params.problem.p_star();
    let decay_exp = (dim as f64 - params.problem.p) / (params.problem.p - 1.0);
    let inv_h = 1.0 / h;
    let interior = radius - 4.0 * h * (1.0 - 1e-9);

    let mut st = SurveyState {
        table: &table,
        k: vec![0; dim],
        scratch: vec![0; dim],
        sq: 0,
        inv_h,
        flux,
    };

    let (mut sup, mut l1, mut nodes) = (0.0_f64, 0.0_f64, 0usize);
    let (mut grad_p, mut crit, mut c_u, mut active) = (0.0_f64, 0.0_f64, 0.0_f64, 0u64);
    let anchor_limit = (kmax + 1) * (kmax + 1);
    let mut visit = |st: &mut SurveyState, mult: f64| {
        let n2 = st.sq as usize;
        let r = (n2 as f64).sqrt() * h;
        let inside = radius - r > snap;
        // every cell touching an active node is anchored within |k| <= kmax + 1
        let (f2, b2) = st.cell_norms();
        grad_p += mult * 0.5 * (flux.density(f2) + flux.density(b2));
        if !inside {
            return;
        }
        let raw = params.radial_value(r);
        active += mult as u64;
        crit += mult * st.table[n2].powf(ps);
        c_u = c_u.max(raw * (1.0 + r.powf(decay_exp)));
        // the stencil of an interior node sees only the shifted bubble, whose
        // differences agree with those of the raw one
        if r <= interior {
            let res = (-st.p_laplacian() - raw.powf(ps - 1.0)).abs();
            sup = sup.max(res);
            l1 += mult * res;
            nodes += mult as usize;
        }
    };
    enumerate_sorted(&mut st, 0, kmax + 1, anchor_limit, &mut visit);

    let vol = h.powi(dim as i32);
    let problem = params.problem;
    let (grad_p, crit) = (grad_p * vol, crit * vol);
    Ok(LatticeSurvey {
        h,
        radius,
        residual: ResidualNorms {
            sup_residual: sup,
            l1_residual: l1 * vol,
            nodes,
            warning: resolution_warning(params.eps, h),
        },
        energy: EnergyReport {
            energy: grad_p / problem.p - crit / ps,
            grad_norm_p: grad_p,
            crit_norm: crit,
            nehari_defect: grad_p - crit,
            dual_residual: None,
        },
        c_u,
        active_nodes: active,
    })
}

struct SurveyState<'a> {
    table: &'a [f64],
    k: Vec<i32>,
    scratch: Vec<i32>,
    sq: i32,
    inv_h: f64,
    flux: Flux,
}

impl SurveyState<'_> {
    #[inline]
    fn at(&self, k: &[i32]) -> f64 {
        let n2: i32 = k.iter().map(|v| v * v).sum();
        self.table.get(n2 as usize).copied().unwrap_or(0.0)
    }

    /// Squared forward and backward cell gradients anchored at `scratch`.
    fn norms_at_scratch(&mut self) -> (f64, f64) {
        let u0 = self.at(&self.scratch);
        let (mut f2, mut b2) = (0.0, 0.0);
        for a in 0..self.scratch.len() {
            self.scratch[a] += 1;
            let df = (self.at(&self.scratch) - u0) * self.inv_h;
            self.scratch[a] -= 2;
            let db = (u0 - self.at(&self.scratch)) * self.inv_h;
            self.scratch[a] += 1;
            f2 += df * df;
            b2 += db * db;
        }
        (f2, b2)
    }

    fn cell_norms(&mut self) -> (f64, f64) {
        self.scratch.copy_from_slice(&self.k);
        self.norms_at_scratch()
    }

    fn coef(&self, s2: f64) -> f64 {
        self.flux.coefficient(s2).unwrap_or(0.0)
    }

    fn p_laplacian(&mut self) -> f64 {
        let (f2, b2) = self.cell_norms();
        let (ap, am) = (self.coef(f2), self.coef(b2));
        let u0 = self.at(&self.k);
        let mut acc = 0.0;
        for a in 0..self.k.len() {
            self.scratch.copy_from_slice(&self.k);
            self.scratch[a] += 1;
            let uf = self.at(&self.scratch);
            let (_, bf) = self.norms_at_scratch();
            self.scratch[a] -= 2;
            let ub = self.at(&self.scratch);
            let (fb, _) = self.norms_at_scratch();
            let c_out = 0.5 * (ap + self.coef(bf));
            let c_in = 0.5 * (self.coef(fb) + am);
            acc += c_out * (uf - u0) - c_in * (u0 - ub);
        }
        acc * self.inv_h * self.inv_h
    }
}

/// Visits `k_0 >= k_1 >= ... >= k_{N-1}` with `|k|^2 <= limit`, passing the
/// number of lattice points in the orbit under coordinate permutations.
fn enumerate_sorted(
    st: &mut SurveyState,
    pos: usize,
    max_val: i32,
    limit: i32,
    visit: &mut impl FnMut(&mut SurveyState, f64),
) {
    let dim = st.k.len();
    if pos == dim {
        let mult = orbit_size(&st.k);
        visit(st, mult);
        return;
    }
    let bound = (limit as f64).sqrt() as i32;
    for v in (-bound..=max_val.min(bound)).rev() {
        let sq = st.sq + v * v;
        if sq > limit {
            continue;
        }
        st.k[pos] = v;
        st.sq = sq;
        enumerate_sorted(st, pos + 1, v, limit, visit);
        st.sq -= v * v;
    }
    st.k[pos] = 0;
}

fn orbit_size(k: &[i32]) -> f64 {
    let dim = k.len();
    let mut mult = (1..=dim).map(|v| v as f64).product::<f64>();
    let mut run = 1;
    for i in 1..=dim {
        if i < dim && k[i] == k[i - 1] {
            run += 1;
        } else {
            mult /= (1..=run).map(|v| v as f64).product::<f64>();
            run = 1;
        }
    }
    mult
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `max |u(x)| (1 + |x|^{(N-p)/(p-1)})`
    pub c_u: f64,
    /// `max |grad u(x)| (1 + |x|^{(N-1)/(p-1)})` over cells, when requested.
    pub c_grad: Option<f64>,
    /// Same as `c_u`, restricted to nodes within half the lattice span.
    pub c_u_inner: f64,
    /// `c_u <= 1.25 c_u_inner`: the weighted sup does not keep growing with
    /// the span.
    pub admissible: bool,
}

pub const DECAY_GROWTH_TOLERANCE: f64 = 0.25;

pub fn decay_check(u: &Field, problem: &ProblemParams, with_gradient: bool) -> Result<DecayReport> {
    problem.validate()?;
    u.check_finite()?;
    let grid = u.grid();
    let (n, p) = (problem.dim as f64, problem.p);
    let e_u = (n - p) / (p - 1.0);
    let inner = 0.5 * grid.spec().half_extent;
    let mut x = vec![0.0; grid.dim()];
    let (mut c_u, mut c_inner) = (0.0_f64, 0.0_f64);
    for (i, &v) in u.values().iter().enumerate() {
        grid.write_node_coords(i, &mut x);
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let w = v.abs() * (1.0 + r.powf(e_u));
        c_u = c_u.max(w);
        if r <= inner {
            c_inner = c_inner.max(w);
        }
    }
    let c_grad = if with_gradient {
        let g = discrete_gradient(u)?;
        let e_g = (n - 1.0) / (p - 1.0);
        let h = grid.spacing();
        let mut c: f64 = 0.0;
        for i in 0..grid.support_len() {
            grid.write_node_coords(i, &mut x);
            // cell midpoint
            let r = x.iter().map(|a| (a + 0.5 * h).powi(2)).sum::<f64>().sqrt();
            let gn = g.at(i).iter().map(|a| a * a).sum::<f64>().sqrt();
            c = c.max(gn * (1.0 + r.powf(e_g)));
        }
        Some(c)
    } else {
        None
    };
    Ok(DecayReport {
        c_u,
        c_grad,
        c_u_inner: c_inner,
        admissible: c_u <= (1.0 + DECAY_GROWTH_TOLERANCE) * c_inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::energy;
    use approx::assert_relative_eq;

    fn prob(n: usize, p: f64) -> ProblemParams {
        ProblemParams::new(n, p).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let b = BubbleParams::centered(prob(4, 2.0), 1.0).unwrap();
        assert_relative_eq!(b.a_const, 8f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(bubble_value(&b, &[0.0; 4]), b.a_const);
        assert_relative_eq!(bubble_value(&b, &[1.0, 0.0, 0.0, 0.0]), b.a_const * 0.5);
        let b3 = BubbleParams::centered(prob(4, 3.0), 1.0).unwrap();
        assert_relative_eq!(
            bubble_value(&b3, &[0.0, 0.0, 1.0, 0.0]),
            b3.a_const * 2f64.powf(-1.0 / 3.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn dilation_rule() {
        let b1 = BubbleParams::centered(prob(4, 3.0), 1.0).unwrap();
        let be = BubbleParams::centered(prob(4, 3.0), 0.37).unwrap();
        let x = [0.3, -0.1, 0.7, 0.2];
        let xs: Vec<f64> = x.iter().map(|v| v / 0.37).collect();
        assert_relative_eq!(
            be.value(&x),
            0.37f64.powf(-1.0 / 3.0) * b1.value(&xs),
            max_relative = 1e-14
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BubbleParams::centered(prob(4, 2.0), 0.0).is_err());
        assert!(BubbleParams::new(prob(4, 2.0), 1.0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn affine_residual_is_the_source_term() {
        let g = Arc::new(Grid::new(GridSpec::ball_with_spacing(4, 1.0, 0.25).unwrap()).unwrap());
        let u = Field::from_fn(&g, |x| 1.0 + 0.5 * x[0] - x[2]);
        let problem = prob(4, 2.0);
        let res = pointwise_residual(&u, &problem).unwrap();
        let mut x = vec![0.0; 4];
        for i in 0..g.active_len() {
            g.write_node_coords(i, &mut x);
            if g.spec().signed_distance(&x) > 0.3 {
                let v = u.values()[i];
                assert_relative_eq!(res.values()[i], -v.powi(3), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn orbit_sizes() {
        assert_eq!(orbit_size(&[0, 0, 0, 0]), 1.0);
        assert_eq!(orbit_size(&[1, 0, 0, 0]), 4.0);
        assert_eq!(orbit_size(&[2, 1, 0, -1]), 24.0);
        assert_eq!(orbit_size(&[1, 1, -1, -1]), 6.0);
        assert_eq!(orbit_size(&[3, 2, 1, 1]), 12.0);
    }

    #[test]
    fn survey_agrees_with_materialized_field() {
        for p in [2.0, 3.0, 1.6] {
            let problem = prob(4, p);
            let b = BubbleParams::centered(problem, 0.6).unwrap();
            let spec = GridSpec::ball_with_spacing(4, 2.0, 0.25).unwrap();
            let g = Arc::new(Grid::new(spec).unwrap());
            let u = b.sample(&g).unwrap();
            let shifted = b.sample_shifted(&g, 2.0).unwrap();
            let survey = lattice_survey(&b, 2.0, 0.25).unwrap();
            assert_eq!(survey.active_nodes as usize, g.active_len());
            let direct = residual_norm(&b, &g).unwrap();
            assert_eq!(survey.residual.nodes, direct.nodes);
            assert_relative_eq!(survey.residual.sup_residual, direct.sup_residual, max_relative = 1e-10);
            assert_relative_eq!(survey.residual.l1_residual, direct.l1_residual, max_relative = 1e-10);
            let e = energy(&shifted, &problem).unwrap();
            assert_relative_eq!(survey.energy.grad_norm_p, e.grad_norm_p, max_relative = 1e-10);
            assert_relative_eq!(survey.energy.crit_norm, e.crit_norm, max_relative = 1e-10);
            let d = decay_check(&u, &problem, false).unwrap();
            assert_relative_eq!(survey.c_u, d.c_u, max_relative = 1e-12);
        }
    }

    #[test]
    fn decay_of_zero_and_fat_tail() {
        let g = Arc::new(Grid::new(GridSpec::ball_with_spacing(4, 4.0, 0.5).unwrap()).unwrap());
        let problem = prob(4, 2.0);
        let z = decay_check(&Field::zeros(&g), &problem, true).unwrap();
        assert_eq!(z.c_u, 0.0);
        assert_eq!(z.c_grad, Some(0.0));
        let b = BubbleParams::centered(problem, 1.0).unwrap();
        let d = decay_check(&b.sample(&g).unwrap(), &problem, true).unwrap();
        assert!(d.admissible);
        assert!(d.c_grad.unwrap() > 0.0);
        let fat = Field::from_fn(&g, |x| (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(-0.25));
        assert!(!decay_check(&fat, &problem, false).unwrap().admissible);
    }

    #[test]
    fn resolution_warning_below_four_cells() {
        let b = BubbleParams::centered(prob(4, 2.0), 0.3).unwrap();
        let g = Arc::new(Grid::new(GridSpec::ball_with_spacing(4, 1.0, 0.25).unwrap()).unwrap());
        assert!(residual_norm(&b, &g).unwrap().warning.is_some());
    }
}
