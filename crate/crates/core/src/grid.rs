//! Masked tensor lattices and the discrete p-calculus on them.
//!
//! A [`Grid`] is the uniform lattice `{-L, -L + h, ..., L}^N` restricted to a
//! [`DomainMask`]. Only *active* nodes (strictly inside the mask) carry
//! values; every other node is a hard zero, which is how the Dirichlet
//! condition is imposed. Nodes are addressed by centered integer offsets so
//! that the origin is always node `0`.
//!
//! The p-Dirichlet energy is a sum over cells of `|grad u|^p`, where each
//! cell anchored at node `x` contributes the forward-difference gradient and
//! the backward-difference gradient with weight one half each. Every edge
//! therefore carries a two-point flux with coefficient
//! `(a+(x) + a-(x + e_k)) / 2`, the scheme reduces to the standard
//! `2N + 1` point Laplacian at `p = 2`, and the discrete p-Laplacian is the
//! exact gradient of the discrete energy.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 16;

const NONE: u32 = u32::MAX;
const SNAP: f64 = 1e-9;
const DENSE_LOOKUP_LIMIT: u64 = 1 << 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainMask {
    /// Open ball of the given radius about the origin.
    Ball { radius: f64 },
    /// The full lattice span; the outer faces are the Dirichlet boundary.
    Box,
    /// `{x : x . normal > offset}` intersected with the lattice span.
    HalfSpaceSlab { normal: Vec<f64>, offset: f64 },
}

/// Geometry of a masked lattice. Cheap to clone and serializable; building
/// the index tables is the job of [`Grid::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub half_extent: f64,
    pub mask: DomainMask,
}

impl GridSpec {
    pub fn new(dim: usize, nodes_per_axis: usize, half_extent: f64, mask: DomainMask) -> Result<Self> {
        let spec = GridSpec {
            dim,
            nodes_per_axis,
            half_extent,
            mask,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Ball of radius `half_extent` on a lattice with spacing `h`.
    pub fn ball_with_spacing(dim: usize, radius: f64, h: f64) -> Result<Self> {
        let cells = (2.0 * radius / h).round();
        if (cells * h - 2.0 * radius).abs() > 1e-9 * radius || cells < 2.0 {
            return Err(Error::Grid(format!(
                "radius {radius} is not a multiple of the spacing {h}"
            )));
        }
        GridSpec::new(dim, cells as usize + 1, radius, DomainMask::Ball { radius })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.dim > MAX_DIM {
            return Err(Error::Grid(format!("dim must lie in [2, {MAX_DIM}], got {}", self.dim)));
        }
        if self.nodes_per_axis < 3 || self.nodes_per_axis % 2 == 0 {
            return Err(Error::Grid(format!(
                "nodes_per_axis must be odd and at least 3, got {}",
                self.nodes_per_axis
            )));
        }
        if !(self.half_extent.is_finite() && self.half_extent > 0.0) {
            return Err(Error::Grid(format!("half_extent must be positive, got {}", self.half_extent)));
        }
        match &self.mask {
            DomainMask::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Grid(format!("ball radius must be positive, got {radius}")));
                }
            }
            DomainMask::Box => {}
            DomainMask::HalfSpaceSlab { normal, offset } => {
                if normal.len() != self.dim {
                    return Err(Error::Grid(format!(
                        "slab normal has {} components, lattice dimension is {}",
                        normal.len(),
                        self.dim
                    )));
                }
                let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (len - 1.0).abs() > 1e-9 || !offset.is_finite() {
                    return Err(Error::Grid("slab normal must be a unit vector".into()));
                }
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.nodes_per_axis - 1) as f64
    }

    pub fn half_nodes(&self) -> i32 {
        ((self.nodes_per_axis - 1) / 2) as i32
    }

    pub fn total_nodes(&self) -> u128 {
        (self.nodes_per_axis as u128).pow(self.dim as u32)
    }

    /// Positive strictly inside the domain, zero on its boundary.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let span = self.half_extent - x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        match &self.mask {
            DomainMask::Ball { radius } => (radius - norm(x)).min(span),
            DomainMask::Box => span,
            DomainMask::HalfSpaceSlab { normal, offset } => (dot(x, normal) - offset).min(span),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > SNAP * self.spacing()
    }

    /// Inward unit normal of the boundary piece nearest to `x`.
    pub fn inward_normal(&self, x: &[f64]) -> Vec<f64> {
        let (axis, far) = x
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(ia, m), (a, v)| if v.abs() > m { (a, v.abs()) } else { (ia, m) });
        let span = self.half_extent - far;
        let mut box_normal = vec![0.0; self.dim];
        box_normal[axis] = if x[axis] > 0.0 { -1.0 } else { 1.0 };
        match &self.mask {
            DomainMask::Ball { radius } => {
                let r = norm(x);
                if radius - r <= span && r > 0.0 {
                    x.iter().map(|v| -v / r).collect()
                } else if r == 0.0 && radius - r <= span {
                    let mut e = vec![0.0; self.dim];
                    e[0] = 1.0;
                    e
                } else {
                    box_normal
                }
            }
            DomainMask::Box => box_normal,
            DomainMask::HalfSpaceSlab { normal, offset } => {
                if dot(x, normal) - offset <= span {
                    normal.clone()
                } else {
                    box_normal
                }
            }
        }
    }
}

#[derive(Debug)]
enum NodeLookup {
    Dense(Vec<u32>),
    Sparse(HashMap<u64, u32>),
}

impl NodeLookup {
    fn get(&self, id: u64) -> u32 {
        match self {
            NodeLookup::Dense(table) => table[id as usize],
            NodeLookup::Sparse(map) => map.get(&id).copied().unwrap_or(NONE),
        }
    }
}

/// A masked lattice with its node tables.
///
/// Support nodes are the active nodes (first, in row-major order) followed by
/// the *ring*: inactive nodes adjacent to an active one. Cells anchored
/// anywhere else see only zeros.
#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    h: f64,
    half: i32,
    n_active: usize,
    coords: Vec<i32>,
    // support x 2N; slot 2k is +e_k, slot 2k+1 is -e_k. Missing neighbours
    // point at index `support_len()`, which always holds a zero.
    neighbors: Vec<u32>,
    lookup: NodeLookup,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim;
        let n = spec.nodes_per_axis as i64;
        let half = spec.half_nodes();
        let h = spec.spacing();
        let total = spec.total_nodes();
        if total > u64::MAX as u128 / 2 {
            return Err(Error::Grid("lattice too large".into()));
        }
        let total = total as u64;

        let mut coords: Vec<i32> = Vec::new();
        let mut idx = vec![-half; dim];
        let mut x = vec![0.0; dim];
        for _ in 0..total {
            for a in 0..dim {
                x[a] = idx[a] as f64 * h;
            }
            if spec.contains(&x) {
                coords.extend_from_slice(&idx);
            }
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] as i64 <= half as i64 {
                    break;
                }
                idx[a] = -half;
            }
        }
        let n_active = coords.len() / dim;
        if n_active == 0 {
            return Err(Error::Grid("mask contains no lattice node".into()));
        }
        if n_active as u64 >= (NONE as u64) / 4 {
            return Err(Error::Grid("too many active nodes".into()));
        }

        let mut lookup = if total <= DENSE_LOOKUP_LIMIT {
            NodeLookup::Dense(vec![NONE; total as usize])
        } else {
            NodeLookup::Sparse(HashMap::with_capacity(n_active * 2))
        };
        let insert = |lookup: &mut NodeLookup, id: u64, i: u32| match lookup {
            NodeLookup::Dense(t) => t[id as usize] = i,
            NodeLookup::Sparse(m) => {
                m.insert(id, i);
            }
        };
        let row_major = |c: &[i32]| -> u64 {
            c.iter().fold(0u64, |acc, &v| acc * n as u64 + (v + half) as u64)
        };
        for i in 0..n_active {
            let id = row_major(&coords[i * dim..(i + 1) * dim]);
            insert(&mut lookup, id, i as u32);
        }

        // ring
        let mut nb = vec![0i32; dim];
        for i in 0..n_active {
            for a in 0..dim {
                for s in [1, -1] {
                    nb.copy_from_slice(&coords[i * dim..(i + 1) * dim]);
                    nb[a] += s;
                    if nb[a].abs() > half {
                        continue;
                    }
                    let id = row_major(&nb);
                    if lookup.get(id) == NONE {
                        let j = (coords.len() / dim) as u32;
                        coords.extend_from_slice(&nb);
                        insert(&mut lookup, id, j);
                    }
                }
            }
        }
        let support = coords.len() / dim;
        let mut neighbors = vec![support as u32; support * 2 * dim];
        for i in 0..support {
            for a in 0..dim {
                for (slot, s) in [(0, 1), (1, -1)] {
                    nb.copy_from_slice(&coords[i * dim..(i + 1) * dim]);
                    nb[a] += s;
                    if nb[a].abs() > half {
                        continue;
                    }
                    let j = lookup.get(row_major(&nb));
                    if j != NONE {
                        neighbors[i * 2 * dim + 2 * a + slot] = j;
                    }
                }
            }
        }

        Ok(Grid {
            spec,
            h,
            half,
            n_active,
            coords,
            neighbors,
            lookup,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Volume element `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.spec.dim as i32)
    }

    pub fn active_len(&self) -> usize {
        self.n_active
    }

    pub fn support_len(&self) -> usize {
        self.coords.len() / self.spec.dim
    }

    /// Centered integer offsets of a support node.
    pub fn node_offsets(&self, i: usize) -> &[i32] {
        let d = self.spec.dim;
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        self.node_offsets(i).iter().map(|&c| c as f64 * self.h).collect()
    }

    pub fn write_node_coords(&self, i: usize, out: &mut [f64]) {
        for (o, &c) in out.iter_mut().zip(self.node_offsets(i)) {
            *o = c as f64 * self.h;
        }
    }

    /// Index of the support node `+e_axis` (`forward`) or `-e_axis` away;
    /// `support_len()` when that node carries no value.
    #[inline]
    pub fn neighbor(&self, i: usize, axis: usize, forward: bool) -> usize {
        self.neighbors[i * 2 * self.spec.dim + 2 * axis + usize::from(!forward)] as usize
    }

    /// Active index of the node at the given centered offsets.
    pub fn active_index(&self, offsets: &[i32]) -> Option<usize> {
        let n = self.spec.nodes_per_axis as u64;
        let mut id = 0u64;
        for &c in offsets {
            if c.abs() > self.half {
                return None;
            }
            id = id * n + (c + self.half) as u64;
        }
        let j = self.lookup.get(id);
        (j != NONE && (j as usize) < self.n_active).then_some(j as usize)
    }

    /// Row-major position of an active node within the full lattice.
    pub fn row_major_id(&self, i: usize) -> u64 {
        let n = self.spec.nodes_per_axis as u64;
        self.node_offsets(i)
            .iter()
            .fold(0u64, |acc, &c| acc * n + (c + self.half) as u64)
    }

    /// Active index of the lattice node with the given row-major id.
    #[inline]
    pub(crate) fn active_by_row_major(&self, id: u64) -> Option<usize> {
        let j = self.lookup.get(id);
        (j != NONE && (j as usize) < self.n_active).then_some(j as usize)
    }

    /// Largest centered offset along an axis.
    pub fn half_nodes(&self) -> i32 {
        self.half
    }

    /// Multilinear interpolation weights of `x` over active nodes. Corners
    /// with zero weight or zero value (inactive) are skipped, so a point on
    /// a lattice line only touches `2^m` corners for its `m` fractional axes.
    pub fn interpolation_stencil(&self, x: &[f64], out: &mut Vec<(u32, f64)>) {
        out.clear();
        let dim = self.spec.dim;
        let top = 2 * self.half;
        let mut base = [0i32; MAX_DIM];
        let mut frac: [(usize, f64); MAX_DIM] = [(0, 0.0); MAX_DIM];
        let mut m = 0;
        for a in 0..dim {
            let t = x[a] / self.h + self.half as f64;
            if !(t > -SNAP && t < top as f64 + SNAP) {
                return;
            }
            let mut i0 = t.floor();
            let mut f = t - i0;
            if f < SNAP {
                f = 0.0;
            } else if f > 1.0 - SNAP {
                i0 += 1.0;
                f = 0.0;
            }
            let i0 = (i0 as i32).clamp(0, top);
            base[a] = i0 - self.half;
            if f > 0.0 {
                frac[m] = (a, f);
                m += 1;
            }
        }
        let mut corner = [0i32; MAX_DIM];
        for bits in 0u32..(1u32 << m) {
            corner[..dim].copy_from_slice(&base[..dim]);
            let mut w = 1.0;
            for (b, &(a, f)) in frac[..m].iter().enumerate() {
                if bits >> b & 1 == 1 {
                    corner[a] += 1;
                    w *= f;
                } else {
                    w *= 1.0 - f;
                }
            }
            if let Some(j) = self.active_index(&corner[..dim]) {
                out.push((j as u32, w));
            }
        }
    }
}

/// Scalar nodal values on the active nodes of a grid. Values elsewhere are
/// zero by construction.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Field {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.active_len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.active_len() {
            return Err(Error::InvalidField(format!(
                "expected {} active values, got {}",
                grid.active_len(),
                values.len()
            )));
        }
        let field = Field {
            grid: Arc::clone(grid),
            values,
        };
        field.check_finite()?;
        Ok(field)
    }

    /// Samples `f` at the active nodes.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.active_len())
            .map(|i| {
                grid.write_node_coords(i, &mut x);
                f(&x)
            })
            .collect();
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidField(format!(
                "non-finite value at node {:?}",
                self.grid.node_offsets(i)
            ))),
            None => Ok(()),
        }
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        debug_assert!(self.same_grid(other));
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Values over the support plus one trailing zero, so neighbour indices
    /// can be dereferenced without branching.
    pub(crate) fn extended(&self) -> Vec<f64> {
        let mut ext = Vec::with_capacity(self.grid.support_len() + 1);
        ext.extend_from_slice(&self.values);
        ext.resize(self.grid.support_len() + 1, 0.0);
        ext
    }
}

/// `h^N * sum |u|^q` over the lattice.
pub fn integrate_power(u: &Field, q: f64) -> Result<f64> {
    if !(q.is_finite() && q >= 1.0) {
        return Err(Error::Parameter(format!("exponent q must be finite and >= 1, got {q}")));
    }
    u.check_finite()?;
    let sum: f64 = if q == 2.0 {
        u.values.iter().map(|v| v * v).sum()
    } else {
        u.values.iter().map(|v| v.abs().powf(q)).sum()
    };
    Ok(u.grid.cell_volume() * sum)
}

/// Forward differences `(u(x + h e_k) - u(x)) / h` for every support anchor.
#[derive(Debug, Clone)]
pub struct StaggeredGradient {
    grid: Arc<Grid>,
    components: Vec<f64>,
}

impl StaggeredGradient {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.support_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gradient of the cell anchored at support node `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn max_norm(&self) -> f64 {
        self.components.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn discrete_gradient(u: &Field) -> Result<StaggeredGradient> {
    u.check_finite()?;
    let grid = &u.grid;
    let dim = grid.dim();
    let ext = u.extended();
    let inv_h = 1.0 / grid.h;
    let support = grid.support_len();
    let mut components = vec![0.0; support * dim];
    for i in 0..support {
        for a in 0..dim {
            components[i * dim + a] = (ext[grid.neighbor(i, a, true)] - ext[i]) * inv_h;
        }
    }
    Ok(StaggeredGradient {
        grid: Arc::clone(grid),
        components,
    })
}

/// Exponent and regularization of the flux `(|g|^2 + mu^2)^{(p-2)/2} g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flux {
    pub p: f64,
    pub mu: f64,
}

impl Flux {
    pub fn new(p: f64, mu: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::Parameter(format!("regularization mu must be >= 0, got {mu}")));
        }
        Ok(Flux { p, mu })
    }

    /// Default regularization `1e-8 * max|u| / h` for `p < 2`, none otherwise.
    pub fn default_mu(p: f64, u: &Field) -> f64 {
        if p < 2.0 {
            1e-8 * u.max_abs() / u.grid.h
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn density(&self, s2: f64) -> f64 {
        if self.mu == 0.0 {
            if self.p == 2.0 {
                s2
            } else {
                s2.powf(0.5 * self.p)
            }
        } else {
            let m2 = self.mu * self.mu;
            (s2 + m2).powf(0.5 * self.p) - m2.powf(0.5 * self.p)
        }
    }

    /// Returns `None` when the coefficient is singular (`p < 2`, zero gradient, `mu = 0`).
    #[inline]
    pub(crate) fn coefficient(&self, s2: f64) -> Option<f64> {
        let r = s2 + self.mu * self.mu;
        if self.p == 2.0 {
            Some(1.0)
        } else if r == 0.0 {
            if self.p > 2.0 {
                Some(0.0)
            } else {
                None
            }
        } else if self.p == 3.0 {
            Some(r.sqrt())
        } else {
            Some(r.powf(0.5 * (self.p - 2.0)))
        }
    }
}

/// Squared norms of the forward and backward cell gradients at anchor `i`.
#[inline]
fn cell_norms(grid: &Grid, ext: &[f64], i: usize) -> (f64, f64) {
    let inv_h = 1.0 / grid.h;
    let ui = ext[i];
    let (mut f2, mut b2) = (0.0, 0.0);
    for a in 0..grid.dim() {
        let df = (ext[grid.neighbor(i, a, true)] - ui) * inv_h;
        let db = (ui - ext[grid.neighbor(i, a, false)]) * inv_h;
        f2 += df * df;
        b2 += db * db;
    }
    (f2, b2)
}

/// `h^N * sum over cells of |grad u|^p`, i.e. `||u||^p`.
pub fn p_dirichlet_energy(u: &Field, flux: Flux) -> Result<f64> {
    let dim = u.grid.dim() as f64;
    if !(flux.p > 1.0 && flux.p < dim) {
        return Err(Error::Parameter(format!(
            "p must satisfy 1 < p < N = {dim}, got {}",
            flux.p
        )));
    }
    u.check_finite()?;
    Ok(p_energy_unchecked(u, flux))
}

pub(crate) fn p_energy_unchecked(u: &Field, flux: Flux) -> f64 {
    let grid = &u.grid;
    let ext = u.extended();
    let mut sum = 0.0;
    for i in 0..grid.support_len() {
        let (f2, b2) = cell_norms(grid, &ext, i);
        sum += 0.5 * (flux.density(f2) + flux.density(b2));
    }
    grid.cell_volume() * sum
}

/// Edge coefficients: `coef[i]` for anchor `i` holds `(a+, a-)`.
pub(crate) struct CellCoefficients {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub singular: usize,
}

pub(crate) fn cell_coefficients(grid: &Grid, ext: &[f64], flux: Flux) -> CellCoefficients {
    let support = grid.support_len();
    let mut forward = vec![0.0; support + 1];
    let mut backward = vec![0.0; support + 1];
    let mut singular = 0;
    for i in 0..support {
        let (f2, b2) = cell_norms(grid, ext, i);
        forward[i] = flux.coefficient(f2).unwrap_or_else(|| {
            singular += 1;
            0.0
        });
        backward[i] = flux.coefficient(b2).unwrap_or_else(|| {
            singular += 1;
            0.0
        });
    }
    CellCoefficients {
        forward,
        backward,
        singular,
    }
}

/// Discrete `div(|grad u|^{p-2} grad u)` at the active nodes.
#[derive(Debug, Clone)]
pub struct PLaplacian {
    pub field: Field,
    /// Cells whose flux was singular and set to zero (`p < 2`, `mu = 0`).
    pub singular_cells: usize,
}

pub fn p_laplacian_apply(u: &Field, flux: Flux) -> Result<PLaplacian> {
    u.check_finite()?;
    let grid = &u.grid;
    let ext = u.extended();
    let coef = cell_coefficients(grid, &ext, flux);
    let values = p_laplacian_from(grid, &ext, &coef);
    Ok(PLaplacian {
        field: Field {
            grid: Arc::clone(grid),
            values,
        },
        singular_cells: coef.singular,
    })
}

pub(crate) fn p_laplacian_from(grid: &Grid, ext: &[f64], coef: &CellCoefficients) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let dim = grid.dim();
    (0..grid.active_len())
        .map(|y| {
            let uy = ext[y];
            let mut acc = 0.0;
            for a in 0..dim {
                let f = grid.neighbor(y, a, true);
                let b = grid.neighbor(y, a, false);
                let c_out = 0.5 * (coef.forward[y] + coef.backward[f]);
                let c_in = 0.5 * (coef.forward[b] + coef.backward[y]);
                acc += c_out * (ext[f] - uy) - c_in * (uy - ext[b]);
            }
            acc * inv_h2
        })
        .collect()
}

/// Multilinear interpolation of the nodal data; zero outside the span.
pub fn interpolate(u: &Field, x: &[f64]) -> f64 {
    let mut stencil = Vec::with_capacity(16);
    u.grid.interpolation_stencil(x, &mut stencil);
    stencil.iter().map(|&(j, w)| w * u.values[j as usize]).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
