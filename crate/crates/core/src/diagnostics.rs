//! Concentration instrumentation: the concentration function
//! `Q(eps) = max_x sum_{B_eps(x)} h^N |u|^{p*}`, extraction of a scale and
//! center, rescaled profiles, and classification of sequences.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bubble::BubbleParams;
use crate::error::{Error, Result};
use crate::functional::ProblemParams;
use crate::grid::{integrate_power, interpolate, Field, Grid};
use crate::symmetry::{project_to_fixed, SymmetryConfig};

pub const DEFAULT_DELTA_FRACTION: f64 = 0.45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    #[serde(rename = "Q")]
    pub q: f64,
    pub center: Vec<f64>,
}

/// Windowed sums of the critical mass over discrete balls.
struct WindowScan<'a> {
    grid: &'a Arc<Grid>,
    mass: Vec<f64>,
    total: f64,
}

impl<'a> WindowScan<'a> {
    fn new(u: &'a Field, p_star: f64) -> Result<Self> {
        u.check_finite()?;
        let vol = u.grid().cell_volume();
        let mass: Vec<f64> = u.values().iter().map(|v| vol * v.abs().powf(p_star)).collect();
        let total = mass.iter().sum();
        Ok(WindowScan {
            grid: u.grid(),
            mass,
            total,
        })
    }

    /// `(Q, argmax)` for the ball `|k|^2 <= r2` in lattice units.
    fn scan(&self, r2: i64) -> (f64, usize) {
        let grid = self.grid;
        let dim = grid.dim();
        let n = grid.spec().nodes_per_axis as i64;
        let half = grid.half_nodes();
        let kr = (r2 as f64).sqrt().floor() as i32;
        if 2 * half <= kr && r2 >= (dim as i64) * (2 * half as i64).pow(2) {
            return (self.total, 0);
        }
        // offsets and their row-major deltas
        let mut offsets: Vec<i32> = Vec::new();
        let mut deltas: Vec<i64> = Vec::new();
        let mut k = vec![-kr; dim];
        loop {
            let s: i64 = k.iter().map(|&v| (v as i64) * (v as i64)).sum();
            if s <= r2 {
                offsets.extend_from_slice(&k);
                deltas.push(k.iter().fold(0i64, |acc, &v| acc * n + v as i64));
            }
            if !advance(&mut k, -kr, kr) {
                break;
            }
        }
        let mut best = (-1.0, 0);
        let mut nb = vec![0i32; dim];
        for c in 0..grid.active_len() {
            let oc = grid.node_offsets(c);
            let interior = oc.iter().all(|&v| v.abs() + kr <= half);
            let mut sum = 0.0;
            if interior {
                let id = grid.row_major_id(c) as i64;
                for &d in &deltas {
                    if let Some(j) = grid.active_by_row_major((id + d) as u64) {
                        sum += self.mass[j];
                    }
                }
            } else {
                for off in offsets.chunks(dim) {
                    for a in 0..dim {
                        nb[a] = oc[a] + off[a];
                    }
                    if let Some(j) = grid.active_index(&nb) {
                        sum += self.mass[j];
                    }
                }
            }
            if sum > best.0 {
                best = (sum, c);
            }
        }
        best
    }

    fn diameter_r2(&self) -> i64 {
        let dim = self.grid.dim() as i64;
        let span = 2 * self.grid.half_nodes() as i64;
        dim * span * span
    }
}

/// Odometer increment over `[lo, hi]^dim`; false after the last point.
fn advance(k: &mut [i32], lo: i32, hi: i32) -> bool {
    for a in (0..k.len()).rev() {
        if k[a] < hi {
            k[a] += 1;
            return true;
        }
        k[a] = lo;
    }
    false
}

pub fn concentration_function(u: &Field, params: &ProblemParams, eps: f64) -> Result<Concentration> {
    let h = u.grid().spacing();
    if !(eps >= h * (1.0 - 1e-12)) {
        return Err(Error::Resolution(format!("window radius {eps} is below the spacing {h}")));
    }
    let scan = WindowScan::new(u, params.p_star())?;
    let r2 = ((eps / h).powi(2) * (1.0 + 1e-12)).floor() as i64;
    let (q, c) = scan.scan(r2.min(scan.diameter_r2()));
    Ok(Concentration {
        q,
        center: u.grid().node_coords(c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub delta: f64,
    pub total_mass: f64,
    pub eps: f64,
    pub xi: Vec<f64>,
    /// Window maximizer before snapping.
    pub raw_center: Vec<f64>,
    pub snapped: bool,
}

/// Smallest lattice window radius with `Q(eps) >= delta` and its maximizing
/// center. With a symmetry, a center within `eps` of the fixed-point
/// subspace is replaced by its projection onto it.
pub fn extract_scale(
    u: &Field,
    params: &ProblemParams,
    delta: f64,
    symmetry: Option<&SymmetryConfig>,
) -> Result<ScaleEstimate> {
    let total = integrate_power(u, params.p_star())?;
    if !(delta > 0.0 && delta <= 0.5 * total) {
        return Err(Error::Parameter(format!(
            "delta must lie in (0, total/2] = (0, {:.6e}], got {delta:.6e}",
            0.5 * total
        )));
    }
    let scan = WindowScan::new(u, params.p_star())?;
    let top = scan.diameter_r2();
    let mut hi = 1i64;
    let mut hit = scan.scan(hi);
    while hit.0 < delta && hi < top {
        hi = (hi * 2).min(top);
        hit = scan.scan(hi);
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let r = scan.scan(mid);
        if r.0 >= delta {
            hi = mid;
            hit = r;
        } else {
            lo = mid;
        }
    }
    let grid = u.grid();
    let eps = (hi as f64).sqrt() * grid.spacing();
    let raw_center = grid.node_coords(hit.1);
    let (xi, snapped) = match symmetry {
        Some(s) => {
            let f = project_to_fixed(s, &raw_center);
            let d: f64 = f
                .iter()
                .zip(&raw_center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d <= eps && d > 0.0 {
                (f, true)
            } else {
                (raw_center.clone(), false)
            }
        }
        None => (raw_center.clone(), false),
    };
    Ok(ScaleEstimate {
        delta,
        total_mass: total,
        eps,
        xi,
        raw_center,
        snapped,
    })
}

/// `w(y) = eps^{(N-p)/p} u(eps y + xi)` sampled on `reference`.
pub fn rescale_field(
    u: &Field,
    eps: f64,
    xi: &[f64],
    params: &ProblemParams,
    reference: &Arc<Grid>,
) -> Result<Field> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    if xi.len() != u.grid().dim() || reference.dim() != u.grid().dim() {
        return Err(Error::Parameter("dimension mismatch in rescale_field".into()));
    }
    let scale = eps.powf(params.dilation_exponent());
    let mut x = vec![0.0; xi.len()];
    Ok(Field::from_fn(reference, |y| {
        for ((o, yi), c) in x.iter_mut().zip(y).zip(xi) {
            *o = eps * yi + c;
        }
        scale * interpolate(u, &x)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Converging,
    ConcentratingInterior,
    ConcentratingBoundary,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: SequenceKind,
    /// Inward normal and offset of the limiting half-space
    /// `{y : y . nu > offset}` in rescaled coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

impl Classification {
    fn plain(kind: SequenceKind) -> Self {
        Classification {
            kind,
            normal: None,
            offset: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub delta: f64,
    pub eps: f64,
    pub xi: Vec<f64>,
    /// Signed distance from `xi` to the mask boundary.
    pub boundary_distance: f64,
    pub boundary_normal: Vec<f64>,
    #[serde(skip)]
    pub rescaled: Option<Field>,
}

/// Extracts `(eps, xi)` at `delta = delta_fraction * |u|_{p*}^{p*}` and, when
/// a reference grid is given, the rescaled profile.
pub fn profile_record(
    u: &Field,
    params: &ProblemParams,
    delta_fraction: f64,
    symmetry: Option<&SymmetryConfig>,
    reference: Option<&Arc<Grid>>,
) -> Result<ProfileRecord> {
    let total = integrate_power(u, params.p_star())?;
    let s = extract_scale(u, params, delta_fraction * total, symmetry)?;
    let spec = u.grid().spec();
    let rescaled = match reference {
        Some(r) => Some(rescale_field(u, s.eps, &s.xi, params, r)?),
        None => None,
    };
    Ok(ProfileRecord {
        delta: s.delta,
        boundary_distance: spec.signed_distance(&s.xi),
        boundary_normal: spec.inward_normal(&s.xi),
        eps: s.eps,
        xi: s.xi,
        rescaled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyThresholds {
    /// `eps_last / eps_first` at or above this counts as stable.
    #[serde(default = "default_stable")]
    pub eps_stable_ratio: f64,
    /// `eps_last / eps_first` at or below this counts as concentrating.
    #[serde(default = "default_shrink")]
    pub eps_shrink_ratio: f64,
    /// `dist(xi, boundary) / eps` above this at the last record is interior.
    #[serde(default = "default_d_ratio")]
    pub d_ratio_max: f64,
    /// Relative `p*`-distance between the last two rescaled profiles.
    #[serde(default = "default_cauchy")]
    pub cauchy_tol: f64,
}

fn default_stable() -> f64 {
    0.75
}
fn default_shrink() -> f64 {
    0.5
}
fn default_d_ratio() -> f64 {
    4.0
}
fn default_cauchy() -> f64 {
    0.2
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            eps_stable_ratio: default_stable(),
            eps_shrink_ratio: default_shrink(),
            d_ratio_max: default_d_ratio(),
            cauchy_tol: default_cauchy(),
        }
    }
}

pub fn classify_sequence(
    records: &[ProfileRecord],
    params: &ProblemParams,
    thresholds: &ClassifyThresholds,
) -> Result<Classification> {
    if records.len() < 2 {
        return Err(Error::Precondition("classification needs at least two records".into()));
    }
    let first = &records[0];
    let last = &records[records.len() - 1];
    let ratio = last.eps / first.eps;
    let monotone = records.windows(2).all(|w| w[1].eps <= w[0].eps * 1.05);
    if ratio >= thresholds.eps_stable_ratio && ratio <= 1.0 / thresholds.eps_stable_ratio {
        let prev = &records[records.len() - 2];
        let cauchy = match (&prev.rescaled, &last.rescaled) {
            (Some(a), Some(b)) if a.same_grid(b) => {
                let diff = b.axpy(-1.0, a);
                let ps = params.p_star();
                let nb = integrate_power(b, ps)?;
                nb > 0.0 && (integrate_power(&diff, ps)? / nb).powf(1.0 / ps) <= thresholds.cauchy_tol
            }
            _ => true,
        };
        return Ok(Classification::plain(if cauchy {
            SequenceKind::Converging
        } else {
            SequenceKind::Undetermined
        }));
    }
    if ratio <= thresholds.eps_shrink_ratio && monotone {
        let d_ratio = last.boundary_distance.max(0.0) / last.eps;
        if d_ratio > thresholds.d_ratio_max {
            return Ok(Classification::plain(SequenceKind::ConcentratingInterior));
        }
        let bounded = records
            .iter()
            .all(|r| r.boundary_distance.max(0.0) / r.eps <= thresholds.d_ratio_max);
        if bounded {
            return Ok(Classification {
                kind: SequenceKind::ConcentratingBoundary,
                normal: Some(last.boundary_normal.clone()),
                offset: Some(-d_ratio),
            });
        }
    }
    Ok(Classification::plain(SequenceKind::Undetermined))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSnapshot {
    pub step: usize,
    pub eps: f64,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub delta: f64,
    pub eps: f64,
    pub xi: Vec<f64>,
    pub classification: Classification,
    pub trends: Trends,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trends {
    pub eps: Vec<f64>,
    pub d_ratio: Vec<f64>,
    pub delta: Vec<f64>,
}

impl DiagnosticsReport {
    pub fn from_records(records: &[ProfileRecord], classification: Classification) -> Result<Self> {
        let last = records
            .last()
            .ok_or_else(|| Error::Precondition("no records".into()))?;
        Ok(DiagnosticsReport {
            delta: last.delta,
            eps: last.eps,
            xi: last.xi.clone(),
            classification,
            trends: Trends {
                eps: records.iter().map(|r| r.eps).collect(),
                d_ratio: records.iter().map(|r| r.boundary_distance / r.eps).collect(),
                delta: records.iter().map(|r| r.delta).collect(),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Bubbles centered at the origin.
    Interior,
    /// Bubbles whose center sits `2 eps` inside the boundary along `e_0`.
    Boundary,
}

/// One sampled bubble per entry of `eps`, for exercising the classifier.
pub fn synthetic_family(
    kind: SyntheticKind,
    eps: &[f64],
    params: &ProblemParams,
    grid: &Arc<Grid>,
) -> Result<Vec<Field>> {
    let dim = grid.dim();
    let reach = grid.spec().signed_distance(&vec![0.0; dim]);
    eps.iter()
        .map(|&e| {
            let mut center = vec![0.0; dim];
            if kind == SyntheticKind::Boundary {
                center[0] = reach - 2.0 * e;
            }
            BubbleParams::new(*params, e, center)?.sample(grid)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;

    fn grid(dim: usize, radius: f64, h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(GridSpec::ball_with_spacing(dim, radius, h).unwrap()).unwrap())
    }

    fn prob() -> ProblemParams {
        ProblemParams::new(3, 2.0).unwrap()
    }

    #[test]
    fn zero_field_and_full_window() {
        let g = grid(3, 1.0, 0.125);
        let z = Field::zeros(&g);
        assert_eq!(concentration_function(&z, &prob(), 0.5).unwrap().q, 0.0);
        let u = Field::from_fn(&g, |x| 1.0 - x[0] * x[0]);
        let total = integrate_power(&u, 6.0).unwrap();
        let c = concentration_function(&u, &prob(), 10.0).unwrap();
        assert_relative_eq!(c.q, total, max_relative = 1e-12);
        assert!(concentration_function(&u, &prob(), 0.05).is_err());
    }

    #[test]
    fn q_is_monotone() {
        let g = grid(3, 1.0, 0.125);
        let u = Field::from_fn(&g, |x| (x[0] - 0.2).sin() + x[1] * x[2]);
        let mut last = 0.0;
        for k in 1..12 {
            let q = concentration_function(&u, &prob(), 0.125 * k as f64).unwrap().q;
            assert!(q >= last);
            last = q;
        }
    }

    #[test]
    fn bubble_center_and_scale() {
        let g = grid(3, 1.0, 0.0625);
        let b = BubbleParams::new(prob(), 0.2, vec![0.25, 0.0, -0.125]).unwrap();
        let u = b.sample(&g).unwrap();
        let total = integrate_power(&u, 6.0).unwrap();
        let s = extract_scale(&u, &prob(), 0.45 * total, None).unwrap();
        assert!(s.eps >= 0.1 && s.eps <= 0.4, "{s:?}");
        let d: f64 = s.xi.iter().zip(&b.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
        assert!(d <= 0.2, "{s:?}");
        assert!(extract_scale(&u, &prob(), 1.5 * total, None).is_err());
    }

    #[test]
    fn rescale_identity() {
        let g = grid(3, 1.0, 0.125);
        let u = Field::from_fn(&g, |x| 1.0 - x.iter().map(|v| v * v).sum::<f64>());
        let w = rescale_field(&u, 1.0, &[0.0; 3], &prob(), &g).unwrap();
        assert!(w.max_abs_diff(&u) <= 1e-12);
    }

    #[test]
    fn classification_of_constant_records() {
        let rec = |eps: f64, d: f64| ProfileRecord {
            delta: 1.0,
            eps,
            xi: vec![0.0; 3],
            boundary_distance: d,
            boundary_normal: vec![1.0, 0.0, 0.0],
            rescaled: None,
        };
        let t = ClassifyThresholds::default();
        let same = vec![rec(0.5, 1.0), rec(0.5, 1.0), rec(0.5, 1.0)];
        assert_eq!(classify_sequence(&same, &prob(), &t).unwrap().kind, SequenceKind::Converging);
        let inner: Vec<_> = (0..4).map(|k| rec(0.5f64.powi(k), 1.0)).collect();
        assert_eq!(
            classify_sequence(&inner, &prob(), &t).unwrap().kind,
            SequenceKind::ConcentratingInterior
        );
        let edge: Vec<_> = (0..4).map(|k| rec(0.5f64.powi(k), 0.5f64.powi(k))).collect();
        let c = classify_sequence(&edge, &prob(), &t).unwrap();
        assert_eq!(c.kind, SequenceKind::ConcentratingBoundary);
        assert_relative_eq!(c.offset.unwrap(), -1.0);
        assert!(classify_sequence(&same[..1], &prob(), &t).is_err());
    }
}
