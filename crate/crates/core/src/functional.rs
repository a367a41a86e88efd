//! The energy `J(u) = ||u||^p / p - |u|_{p*}^{p*} / p*` on lattice fields,
//! its derivative, and the scalar structure of the Nehari set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cell_coefficients, integrate_power, p_energy_unchecked, p_laplacian_from, Field, Flux,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    #[serde(rename = "N")]
    pub dim: usize,
    pub p: f64,
    /// Flux regularization; `None` means `1e-8 max|u| / h` for `p < 2` and
    /// no regularization otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

impl ProblemParams {
    pub fn new(dim: usize, p: f64) -> Result<Self> {
        let params = ProblemParams { dim, p, mu: None };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Parameter(format!("N must be at least 2, got {}", self.dim)));
        }
        if !(self.p > 1.0 && self.p < self.dim as f64) {
            return Err(Error::Parameter(format!(
                "p must satisfy 1 < p < N (N = {}, p = {})",
                self.dim, self.p
            )));
        }
        if let Some(mu) = self.mu {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(Error::Parameter(format!("mu must be >= 0, got {mu}")));
            }
        }
        Ok(())
    }

    /// Critical Sobolev exponent `Np / (N - p)`.
    pub fn p_star(&self) -> f64 {
        let n = self.dim as f64;
        n * self.p / (n - self.p)
    }

    /// `(N - p) / p`, the dilation weight of `u_eps(x) = eps^{-(N-p)/p} u(x / eps)`.
    pub fn dilation_exponent(&self) -> f64 {
        (self.dim as f64 - self.p) / self.p
    }

    pub fn flux_for(&self, u: &Field) -> Flux {
        let mu = self.mu.unwrap_or_else(|| Flux::default_mu(self.p, u));
        Flux { p: self.p, mu }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    fn check_grid(&self, u: &Field) -> Result<()> {
        self.validate()?;
        if u.grid().dim() != self.dim {
            return Err(Error::Parameter(format!(
                "field has dimension {}, problem has N = {}",
                u.grid().dim(),
                self.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "J")]
    pub energy: f64,
    /// `||u||^p`
    pub grad_norm_p: f64,
    /// `|u|_{p*}^{p*}`
    pub crit_norm: f64,
    /// `||u||^p - |u|_{p*}^{p*}`
    pub nehari_defect: f64,
    pub dual_residual: Option<f64>,
}

impl EnergyReport {
    fn from_parts(params: &ProblemParams, grad_norm_p: f64, crit_norm: f64) -> Self {
        EnergyReport {
            energy: grad_norm_p / params.p - crit_norm / params.p_star(),
            grad_norm_p,
            crit_norm,
            nehari_defect: grad_norm_p - crit_norm,
            dual_residual: None,
        }
    }

    /// `|defect| / ||u||^p`, zero for the zero field.
    pub fn relative_defect(&self) -> f64 {
        if self.grad_norm_p == 0.0 {
            0.0
        } else {
            self.nehari_defect.abs() / self.grad_norm_p
        }
    }
}

pub fn energy(u: &Field, params: &ProblemParams) -> Result<EnergyReport> {
    params.check_grid(u)?;
    u.check_finite()?;
    let flux = params.flux_for(u);
    Ok(energy_with_flux(u, params, flux))
}

pub(crate) fn energy_with_flux(u: &Field, params: &ProblemParams, flux: Flux) -> EnergyReport {
    let grad = p_energy_unchecked(u, flux);
    let crit = integrate_power(u, params.p_star()).expect("finite field");
    EnergyReport::from_parts(params, grad, crit)
}

/// Nodal gradient of `J`: `dJ/du(y) = h^N (-Delta_p u(y) - |u|^{p*-2} u(y))`,
/// i.e. `J'(u)` tested against the nodal basis.
pub fn energy_gradient(u: &Field, params: &ProblemParams) -> Result<Field> {
    params.check_grid(u)?;
    u.check_finite()?;
    Ok(energy_gradient_with_flux(u, params, params.flux_for(u)))
}

pub(crate) fn energy_gradient_with_flux(u: &Field, params: &ProblemParams, flux: Flux) -> Field {
    let grid = u.grid();
    let ext = u.extended();
    let coef = cell_coefficients(grid, &ext, flux);
    let lap = p_laplacian_from(grid, &ext, &coef);
    let vol = grid.cell_volume();
    let q = params.p_star() - 2.0;
    let values = lap
        .iter()
        .zip(u.values())
        .map(|(l, &v)| vol * (-l - v.abs().powf(q) * v))
        .collect();
    Field::from_values(grid, values).expect("finite gradient")
}

/// `J'(u) v = sum over cells of |grad u|^{p-2} grad u . grad v - sum |u|^{p*-2} u v`,
/// assembled cell by cell.
pub fn weak_derivative_action(u: &Field, v: &Field, params: &ProblemParams) -> Result<f64> {
    params.check_grid(u)?;
    if !u.same_grid(v) {
        return Err(Error::Precondition("u and v must share a grid".into()));
    }
    u.check_finite()?;
    v.check_finite()?;
    let grid = u.grid();
    let flux = params.flux_for(u);
    let ue = u.extended();
    let ve = v.extended();
    let coef = cell_coefficients(grid, &ue, flux);
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut flux_sum = 0.0;
    for i in 0..grid.support_len() {
        let (mut fwd, mut bwd) = (0.0, 0.0);
        for a in 0..grid.dim() {
            let f = grid.neighbor(i, a, true);
            let b = grid.neighbor(i, a, false);
            fwd += (ue[f] - ue[i]) * (ve[f] - ve[i]);
            bwd += (ue[i] - ue[b]) * (ve[i] - ve[b]);
        }
        flux_sum += 0.5 * (coef.forward[i] * fwd + coef.backward[i] * bwd);
    }
    let q = params.p_star() - 2.0;
    let source: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&a, &b)| a.abs().powf(q) * a * b)
        .sum();
    Ok(grid.cell_volume() * (flux_sum * inv_h2 - source))
}

/// `kappa(u) = |u|_{p*}^{p*} / ||u||^p`, and `0` for `u = 0`.
pub fn kappa(u: &Field, params: &ProblemParams) -> Result<f64> {
    let r = energy(u, params)?;
    Ok(kappa_of(&r))
}

pub fn kappa_of(report: &EnergyReport) -> f64 {
    if report.grad_norm_p == 0.0 {
        0.0
    } else {
        report.crit_norm / report.grad_norm_p
    }
}

#[derive(Debug, Clone)]
pub struct NehariScaling {
    pub t_star: f64,
    pub scaled: Field,
    pub report: EnergyReport,
}

/// Radial projection onto the Nehari set: `t* = (||u||^p / |u|_{p*}^{p*})^{1/(p*-p)}`.
///
/// With a regularized flux the energy is no longer homogeneous; the closed
/// form is then refined by Newton steps on the defect.
pub fn nehari_scale(u: &Field, params: &ProblemParams) -> Result<NehariScaling> {
    params.check_grid(u)?;
    u.check_finite()?;
    let flux = params.flux_for(u);
    nehari_scale_with_flux(u, params, flux)
}

pub(crate) fn nehari_scale_with_flux(
    u: &Field,
    params: &ProblemParams,
    flux: Flux,
) -> Result<NehariScaling> {
    let r = energy_with_flux(u, params, flux);
    if r.crit_norm <= 0.0 || r.grad_norm_p <= 0.0 {
        return Err(Error::Degenerate(
            "cannot scale the zero field onto the Nehari set".into(),
        ));
    }
    let gap = params.p_star() - params.p;
    let mut t = (r.grad_norm_p / r.crit_norm).powf(1.0 / gap);
    let mut scaled = u.scaled(t);
    let mut report = energy_with_flux(&scaled, params, flux);
    if flux.mu > 0.0 {
        for _ in 0..20 {
            if report.relative_defect() <= 1e-14 {
                break;
            }
            // d/ds of the defect of (s t u) at s = 1, ignoring the regularization
            let slope = params.p * report.grad_norm_p - params.p_star() * report.crit_norm;
            let s = 1.0 - report.nehari_defect / slope;
            t *= s;
            scaled = u.scaled(t);
            report = energy_with_flux(&scaled, params, flux);
        }
    }
    Ok(NehariScaling {
        t_star: t,
        scaled,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct MountainPassProfile {
    /// `(t, J(t u))`
    pub table: Vec<(f64, f64)>,
    /// Zero of `t -> J(t u)` beyond `t = 1`: `(p*/p)^{1/(p*-p)}`.
    pub zero_crossing: f64,
    /// A scaling with `J(s_u u) < 0`.
    pub s_u: f64,
    pub energy_at_s_u: f64,
}

/// `J(t u) = (t^p / p - t^{p*} / p*) ||u||^p` for `u` on the Nehari set.
pub fn mountain_pass_profile(
    u: &Field,
    params: &ProblemParams,
    t_grid: &[f64],
    defect_tol: f64,
) -> Result<MountainPassProfile> {
    let r = energy(u, params)?;
    if r.grad_norm_p == 0.0 || r.relative_defect() > defect_tol {
        return Err(Error::Precondition(format!(
            "field is not on the Nehari set (relative defect {:.3e})",
            r.relative_defect()
        )));
    }
    let (p, ps) = (params.p, params.p_star());
    let j_of = |t: f64| (t.powf(p) / p - t.powf(ps) / ps) * r.grad_norm_p;
    let zero_crossing = (ps / p).powf(1.0 / (ps - p));
    let s_u = (2.0 * ps / p).powf(1.0 / (ps - p));
    Ok(MountainPassProfile {
        table: t_grid.iter().map(|&t| (t, j_of(t))).collect(),
        zero_crossing,
        s_u,
        energy_at_s_u: j_of(s_u),
    })
}

/// `T(t) = t` for `|t| <= 1`, `t / |t|` otherwise.
pub fn truncate(t: f64) -> f64 {
    if t.abs() <= 1.0 {
        t
    } else {
        t.signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityGap {
    /// `(|eta|^{p-2} eta - |xi|^{p-2} xi) . (eta - xi)`
    pub lhs: f64,
    /// `lhs / |eta - xi|^p` for `p >= 2`, and
    /// `lhs (|xi|^p + |eta|^p + 1)^{2-p} / |eta - xi|^2` for `1 < p < 2`;
    /// `None` when `eta = xi`.
    pub lower_bound_ratio: Option<f64>,
}

pub fn monotonicity_gap(eta: &[f64], xi: &[f64], p: f64) -> Result<MonotonicityGap> {
    if eta.len() != xi.len() {
        return Err(Error::Parameter("vectors must have equal dimension".into()));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
    }
    let ne = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nx = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let pow = |n: f64| if n == 0.0 { 0.0 } else { n.powf(p - 2.0) };
    let (ce, cx) = (pow(ne), pow(nx));
    let mut lhs = 0.0;
    let mut d2 = 0.0;
    for (e, x) in eta.iter().zip(xi) {
        lhs += (ce * e - cx * x) * (e - x);
        d2 += (e - x) * (e - x);
    }
    if d2 == 0.0 {
        return Ok(MonotonicityGap {
            lhs: 0.0,
            lower_bound_ratio: None,
        });
    }
    let ratio = if p >= 2.0 {
        lhs / d2.powf(0.5 * p)
    } else {
        lhs * (nx.powf(p) + ne.powf(p) + 1.0).powf(2.0 - p) / d2
    };
    Ok(MonotonicityGap {
        lhs,
        lower_bound_ratio: Some(ratio),
    })
}
