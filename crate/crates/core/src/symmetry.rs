//! The groups `G_j = Gamma^j x Lambda_j` acting on `R^N = (C^2)^j x R^{N-4j}`
//! and their sign homomorphisms.
//!
//! `Gamma` is generated by the scalar rotations `e^{i theta}` of `C^2` and the
//! map `rho(z1, z2) = (-conj z2, conj z1)`. Each block of a [`GroupElement`] is
//! kept in the normal form `rho^flag * e^{i theta}` (rotate, then optionally
//! apply `rho`), which composes exactly through `e^{i theta} rho = rho e^{-i theta}`
//! and `rho^2 = e^{i pi}`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interpolate, norm, Field, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    pub j: usize,
    #[serde(default = "default_samples_per_circle")]
    pub samples_per_circle: usize,
    #[serde(default = "default_lambda_samples")]
    pub lambda_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples_per_circle() -> usize {
    8
}

fn default_lambda_samples() -> usize {
    8
}

impl SymmetryConfig {
    pub fn new(dim: usize, j: usize) -> Result<Self> {
        let config = SymmetryConfig {
            dim,
            j,
            samples_per_circle: default_samples_per_circle(),
            lambda_samples: default_lambda_samples(),
            seed: 0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_samples(mut self, samples_per_circle: usize, lambda_samples: usize) -> Result<Self> {
        self.samples_per_circle = samples_per_circle;
        self.lambda_samples = lambda_samples;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 {
            return Err(Error::Symmetry(format!("N must be at least 4, got {}", self.dim)));
        }
        if self.j < 1 || 4 * self.j > self.dim {
            return Err(Error::Symmetry(format!(
                "j must satisfy 1 <= j and 4j <= N (N = {}, j = {})",
                self.dim, self.j
            )));
        }
        if self.samples_per_circle < 8 || self.samples_per_circle % 2 != 0 {
            return Err(Error::Symmetry(format!(
                "samples_per_circle must be even and at least 8, got {}",
                self.samples_per_circle
            )));
        }
        if !self.lambda_trivial() && self.lambda_samples == 0 {
            return Err(Error::Symmetry("lambda_samples must be positive when Lambda_j = O(N-4j)".into()));
        }
        Ok(())
    }

    /// `n` in `N = 4n + m`.
    pub fn max_j(&self) -> usize {
        self.dim / 4
    }

    /// Dimension of the `R^{N-4j}` factor.
    pub fn tail_dim(&self) -> usize {
        self.dim - 4 * self.j
    }

    /// `Lambda_n = {1}`; `Lambda_j = O(N - 4j)` for `j < n`.
    pub fn lambda_trivial(&self) -> bool {
        self.j == self.max_j()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockElement {
    pub theta: f64,
    pub rho: bool,
}

impl BlockElement {
    pub const IDENTITY: BlockElement = BlockElement {
        theta: 0.0,
        rho: false,
    };

    pub fn rotation(theta: f64) -> Self {
        BlockElement {
            theta: theta.rem_euclid(TAU),
            rho: false,
        }
    }

    pub fn rho() -> Self {
        BlockElement {
            theta: 0.0,
            rho: true,
        }
    }

    /// `self * other` (apply `other` first).
    pub fn compose(self, other: BlockElement) -> BlockElement {
        let s = if other.rho { -1.0 } else { 1.0 };
        let mut theta = s * self.theta + other.theta;
        let rho = self.rho ^ other.rho;
        if self.rho && other.rho {
            theta += PI;
        }
        BlockElement {
            theta: theta.rem_euclid(TAU),
            rho,
        }
    }

    #[inline]
    pub fn apply(self, z: [f64; 4]) -> [f64; 4] {
        let (s, c) = self.theta.sin_cos();
        let r = [
            c * z[0] - s * z[1],
            s * z[0] + c * z[1],
            c * z[2] - s * z[3],
            s * z[2] + c * z[3],
        ];
        if self.rho {
            [-r[2], r[3], r[0], -r[1]]
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub blocks: Vec<BlockElement>,
    /// Row-major orthogonal matrix on the tail factor; `None` is the identity.
    pub lambda: Option<Vec<f64>>,
}

impl GroupElement {
    pub fn identity(j: usize) -> Self {
        GroupElement {
            blocks: vec![BlockElement::IDENTITY; j],
            lambda: None,
        }
    }

    /// `rho` in block `block`, identity elsewhere.
    pub fn rho_in_block(j: usize, block: usize) -> Self {
        let mut g = GroupElement::identity(j);
        g.blocks[block] = BlockElement::rho();
        g
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.compose(*b))
            .collect();
        let lambda = match (&self.lambda, &other.lambda) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (Some(a), Some(b)) => {
                let k = (a.len() as f64).sqrt().round() as usize;
                let ma = DMatrix::from_row_slice(k, k, a);
                let mb = DMatrix::from_row_slice(k, k, b);
                let prod = ma * mb;
                Some(prod.transpose().as_slice().to_vec())
            }
        };
        GroupElement { blocks, lambda }
    }
}

/// `phi_j(g)`: the product of the block signs.
pub fn sign(g: &GroupElement) -> f64 {
    if g.blocks.iter().filter(|b| b.rho).count() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn act(g: &GroupElement, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    act_into(g, x, &mut out)?;
    Ok(out)
}

pub fn act_into(g: &GroupElement, x: &[f64], out: &mut [f64]) -> Result<()> {
    let j = g.blocks.len();
    if x.len() < 4 * j || out.len() != x.len() {
        return Err(Error::Symmetry(format!(
            "point of dimension {} does not fit {} blocks",
            x.len(),
            j
        )));
    }
    for (i, b) in g.blocks.iter().enumerate() {
        let z = [x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]];
        out[4 * i..4 * i + 4].copy_from_slice(&b.apply(z));
    }
    let tail = &x[4 * j..];
    match &g.lambda {
        None => out[4 * j..].copy_from_slice(tail),
        Some(m) => {
            let k = tail.len();
            if m.len() != k * k {
                return Err(Error::Symmetry(format!(
                    "Lambda matrix has {} entries, tail dimension is {k}",
                    m.len()
                )));
            }
            for r in 0..k {
                out[4 * j + r] = (0..k).map(|c| m[r * k + c] * tail[c]).sum();
            }
        }
    }
    Ok(())
}

/// Haar-uniform orthogonal matrix (QR of a Gaussian matrix with the signs of
/// `R`'s diagonal absorbed into `Q`), row-major.
pub fn random_orthogonal(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let a = DMatrix::<f64>::from_fn(k, k, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..k {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q.transpose().as_slice().to_vec()
}

/// Uniformly random group element (continuous angles).
pub fn random_element(config: &SymmetryConfig, rng: &mut impl Rng) -> GroupElement {
    let blocks = (0..config.j)
        .map(|_| BlockElement {
            theta: rng.gen::<f64>() * TAU,
            rho: rng.gen::<bool>(),
        })
        .collect();
    let lambda = (!config.lambda_trivial()).then(|| random_orthogonal(config.tail_dim(), rng));
    GroupElement { blocks, lambda }
}

/// Tensor-product quadrature of the Haar measure: `M` equispaced angles and
/// both `rho` cosets per block, times `lambda_samples` random orthogonal
/// matrices when `Lambda_j` is not trivial. Weights are uniform.
pub fn haar_sample(config: &SymmetryConfig) -> Result<Vec<(GroupElement, f64)>> {
    config.validate()?;
    let m = config.samples_per_circle;
    let per_block: Vec<BlockElement> = (0..m)
        .flat_map(|k| {
            let theta = TAU * k as f64 / m as f64;
            [false, true].map(move |rho| BlockElement { theta, rho })
        })
        .collect();
    let mut blocks_list: Vec<Vec<BlockElement>> = vec![Vec::new()];
    for _ in 0..config.j {
        blocks_list = blocks_list
            .into_iter()
            .flat_map(|prefix| {
                per_block.iter().map(move |b| {
                    let mut v = prefix.clone();
                    v.push(*b);
                    v
                })
            })
            .collect();
    }
    let lambdas: Vec<Option<Vec<f64>>> = if config.lambda_trivial() {
        vec![None]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4c41_4d42_4441);
        (0..config.lambda_samples)
            .map(|_| Some(random_orthogonal(config.tail_dim(), &mut rng)))
            .collect()
    };
    let total = (blocks_list.len() * lambdas.len()) as f64;
    let mut out = Vec::with_capacity(total as usize);
    for blocks in &blocks_list {
        for lambda in &lambdas {
            out.push((
                GroupElement {
                    blocks: blocks.clone(),
                    lambda: lambda.clone(),
                },
                1.0 / total,
            ));
        }
    }
    Ok(out)
}

/// Orthonormal basis of the points fixed by every element of `G_j`.
pub fn fixed_subspace(config: &SymmetryConfig) -> Vec<Vec<f64>> {
    if !config.lambda_trivial() {
        return Vec::new();
    }
    (4 * config.j..config.dim)
        .map(|a| {
            let mut e = vec![0.0; config.dim];
            e[a] = 1.0;
            e
        })
        .collect()
}

/// Orthogonal projection onto the fixed-point subspace.
pub fn project_to_fixed(config: &SymmetryConfig, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for e in fixed_subspace(config) {
        let c: f64 = e.iter().zip(x).map(|(a, b)| a * b).sum();
        for (o, v) in out.iter_mut().zip(&e) {
            *o += c * v;
        }
    }
    out
}

/// The signed Haar average `sum_g w_g phi(g) u(g x)` as a sparse linear
/// operator on the active nodes of one grid.
#[derive(Debug, Clone)]
pub struct EquivariantProjector {
    grid: Arc<Grid>,
    config: SymmetryConfig,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl EquivariantProjector {
    pub fn new(grid: &Arc<Grid>, config: &SymmetryConfig) -> Result<Self> {
        config.validate()?;
        if grid.dim() != config.dim {
            return Err(Error::Symmetry(format!(
                "grid dimension {} differs from N = {}",
                grid.dim(),
                config.dim
            )));
        }
        let samples = haar_sample(config)?;
        check_mask_symmetry(grid, &samples)?;

        let n = grid.active_len();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut scratch = vec![0.0; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut x = vec![0.0; grid.dim()];
        let mut gx = vec![0.0; grid.dim()];
        let mut stencil = Vec::with_capacity(1 << grid.dim().min(10));
        row_start.push(0);
        for i in 0..n {
            grid.write_node_coords(i, &mut x);
            for (g, w) in &samples {
                act_into(g, &x, &mut gx)?;
                let sw = sign(g) * w;
                grid.interpolation_stencil(&gx, &mut stencil);
                for &(c, cw) in &stencil {
                    let slot = &mut scratch[c as usize];
                    if *slot == 0.0 {
                        touched.push(c);
                    }
                    *slot += sw * cw;
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &c in &touched {
                let v = scratch[c as usize];
                scratch[c as usize] = 0.0;
                if v.abs() > 1e-14 {
                    cols.push(c);
                    weights.push(v);
                }
            }
            touched.clear();
            row_start.push(cols.len());
        }
        Ok(EquivariantProjector {
            grid: Arc::clone(grid),
            config: config.clone(),
            row_start,
            cols,
            weights,
        })
    }

    pub fn config(&self) -> &SymmetryConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nonzeros(&self) -> usize {
        self.cols.len()
    }

    pub fn apply(&self, u: &Field) -> Field {
        assert!(Arc::ptr_eq(u.grid(), &self.grid), "field lives on another grid");
        let v = u.values();
        let out: Vec<f64> = (0..self.grid.active_len())
            .map(|i| {
                let r = self.row_start[i]..self.row_start[i + 1];
                self.cols[r.clone()]
                    .iter()
                    .zip(&self.weights[r])
                    .map(|(&c, w)| w * v[c as usize])
                    .sum()
            })
            .collect();
        Field::from_values(&self.grid, out).expect("projection of a finite field is finite")
    }

    /// Adjoint with respect to the plain nodal inner product.
    pub fn apply_transpose(&self, r: &Field) -> Field {
        assert!(Arc::ptr_eq(r.grid(), &self.grid), "field lives on another grid");
        let mut out = vec![0.0; self.grid.active_len()];
        for (i, &ri) in r.values().iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            let range = self.row_start[i]..self.row_start[i + 1];
            for (&c, w) in self.cols[range.clone()].iter().zip(&self.weights[range]) {
                out[c as usize] += w * ri;
            }
        }
        Field::from_values(&self.grid, out).expect("adjoint of a finite field is finite")
    }
}

fn check_mask_symmetry(grid: &Grid, samples: &[(GroupElement, f64)]) -> Result<()> {
    let spec = grid.spec();
    let tol = 1e-9 * (1.0 + spec.half_extent);
    let mut x = vec![0.0; grid.dim()];
    let mut gx = vec![0.0; grid.dim()];
    let stride = (grid.active_len() / 2000).max(1);
    for i in (0..grid.active_len()).step_by(stride) {
        grid.write_node_coords(i, &mut x);
        for (g, _) in samples {
            act_into(g, &x, &mut gx)?;
            if spec.signed_distance(&gx) < -tol {
                return Err(Error::Symmetry(format!(
                    "mask is not invariant: node {:?} leaves the domain under a group element",
                    grid.node_offsets(i)
                )));
            }
        }
    }
    Ok(())
}

/// Signed Haar average of `u` (see [`EquivariantProjector`]).
pub fn equivariant_project(u: &Field, config: &SymmetryConfig) -> Result<Field> {
    Ok(EquivariantProjector::new(u.grid(), config)?.apply(u))
}

/// `max |u(g x) - phi(g) u(x)|` over random probe points inside the mask and
/// random (continuous) group elements. Deterministic for a given config seed.
pub fn equivariance_defect(u: &Field, config: &SymmetryConfig, probes: usize) -> Result<f64> {
    if probes == 0 {
        return Err(Error::Parameter("probes must be at least 1".into()));
    }
    config.validate()?;
    let grid = u.grid();
    let spec = grid.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5052_4f42_4553);
    let l = spec.half_extent;
    let mut worst = 0.0_f64;
    let mut x = vec![0.0; config.dim];
    let mut gx = vec![0.0; config.dim];
    let mut found = 0;
    let mut attempts = 0;
    while found < probes && attempts < probes * 1000 {
        attempts += 1;
        for v in x.iter_mut() {
            *v = rng.gen_range(-l..l);
        }
        if !spec.contains(&x) {
            continue;
        }
        found += 1;
        let g = random_element(config, &mut rng);
        act_into(&g, &x, &mut gx)?;
        let d = (interpolate(u, &gx) - sign(&g) * interpolate(u, &x)).abs();
        worst = worst.max(d);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub detail: String,
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub dim: usize,
    pub j: usize,
    pub s1: CheckOutcome,
    pub s2: CheckOutcome,
    pub s3: CheckOutcome,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.s1.passed && self.s2.passed && self.s3.passed
    }
}

/// Sampled checks of the three structural hypotheses:
/// (S1) orbits are points or have positive dimension, (S2) `phi` is onto,
/// (S3) some point has its stabilizer inside `ker phi`.
pub fn check_hypotheses(config: &SymmetryConfig, trials: usize) -> Result<HypothesisReport> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let samples = haar_sample(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4859_504f);
    let dim = config.dim;
    let tol = 1e-9;

    // S1
    let mut s1 = CheckOutcome {
        passed: true,
        detail: String::new(),
        witness: Vec::new(),
    };
    let mut min_diam = f64::INFINITY;
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let fixed = project_to_fixed(config, &x);
        for (v, f) in x.iter_mut().zip(&fixed) {
            *v -= f;
        }
        let d = orbit_spread(&samples, &x)?;
        min_diam = min_diam.min(d / norm(&x));
        if d <= tol {
            s1.passed = false;
            s1.detail = "a moving point has a zero-diameter orbit sample".into();
            s1.witness = x;
            break;
        }
    }
    for e in fixed_subspace(config) {
        let d = orbit_spread(&samples, &e)?;
        if d > tol {
            s1.passed = false;
            s1.detail = "a fixed-subspace basis vector moves".into();
            s1.witness = e;
        }
    }
    if s1.passed {
        s1.detail = format!(
            "{trials} moving points with relative orbit diameter >= {min_diam:.3e}; fixed points stay fixed"
        );
    }

    // S2
    let g = GroupElement::rho_in_block(config.j, 0);
    let s2 = CheckOutcome {
        passed: sign(&g) == -1.0,
        detail: "rho in the first block has sign -1".into(),
        witness: Vec::new(),
    };

    // S3: witness with a unit component in every block
    let mut xi = vec![0.0; dim];
    for i in 0..config.j {
        xi[4 * i] = 1.0;
    }
    let mut stabilizer = 0;
    let mut bad = None;
    let mut gx = vec![0.0; dim];
    for (g, _) in &samples {
        act_into(g, &xi, &mut gx)?;
        let moved = gx.iter().zip(&xi).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if moved < tol {
            stabilizer += 1;
            if sign(g) != 1.0 {
                bad = Some(g.clone());
            }
        }
    }
    let s3 = CheckOutcome {
        passed: bad.is_none() && stabilizer > 0,
        detail: match bad {
            None => format!("{stabilizer} sampled stabilizer elements, all with sign +1"),
            Some(_) => "a stabilizer element has sign -1".into(),
        },
        witness: xi,
    };

    Ok(HypothesisReport {
        dim,
        j: config.j,
        s1,
        s2,
        s3,
    })
}

fn orbit_spread(samples: &[(GroupElement, f64)], x: &[f64]) -> Result<f64> {
    let mut gx = vec![0.0; x.len()];
    let mut d = 0.0_f64;
    for (g, _) in samples {
        act_into(g, x, &mut gx)?;
        d = d.max(gx.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct OrbitSeparation {
    pub elements: Vec<GroupElement>,
    pub delta: f64,
}

/// `m` group elements moving a non-fixed point `x` to pairwise distinct points.
///
/// Rotations `2 pi i / m` in the first block with a nonzero component; if all
/// blocks vanish, rotations of the tail factor in the plane spanned by the
/// tail component and an orthogonal direction.
pub fn separate_orbit(x: &[f64], m: usize, config: &SymmetryConfig) -> Result<OrbitSeparation> {
    config.validate()?;
    if x.len() != config.dim {
        return Err(Error::Symmetry(format!(
            "point has dimension {}, N = {}",
            x.len(),
            config.dim
        )));
    }
    if m < 2 {
        return Err(Error::Parameter("m must be at least 2".into()));
    }
    let angles: Vec<f64> = (0..m).map(|i| TAU * i as f64 / m as f64).collect();
    let block = (0..config.j).find(|&i| norm(&x[4 * i..4 * i + 4]) > 1e-12);
    let elements: Vec<GroupElement> = if let Some(b) = block {
        angles
            .iter()
            .map(|&t| {
                let mut g = GroupElement::identity(config.j);
                g.blocks[b] = BlockElement::rotation(t);
                g
            })
            .collect()
    } else {
        let k = config.tail_dim();
        let y = &x[4 * config.j..];
        let ny = norm(y);
        if config.lambda_trivial() || ny <= 1e-12 {
            return Err(Error::NoSeparation(format!(
                "{x:?} lies in the fixed-point subspace"
            )));
        }
        let yh: Vec<f64> = y.iter().map(|v| v / ny).collect();
        let pivot = (0..k)
            .min_by(|&a, &b| yh[a].abs().total_cmp(&yh[b].abs()))
            .unwrap_or(0);
        let mut w = vec![0.0; k];
        w[pivot] = 1.0;
        let c = w[pivot] * yh[pivot];
        for (wi, yi) in w.iter_mut().zip(&yh) {
            *wi -= c * yi;
        }
        let nw = norm(&w);
        w.iter_mut().for_each(|v| *v /= nw);
        angles
            .iter()
            .map(|&t| {
                let (s, cth) = t.sin_cos();
                let mut mat = vec![0.0; k * k];
                for r in 0..k {
                    for col in 0..k {
                        let id = if r == col { 1.0 } else { 0.0 };
                        mat[r * k + col] = id + (cth - 1.0) * (yh[r] * yh[col] + w[r] * w[col])
                            + s * (w[r] * yh[col] - yh[r] * w[col]);
                    }
                }
                GroupElement {
                    blocks: vec![BlockElement::IDENTITY; config.j],
                    lambda: Some(mat),
                }
            })
            .collect()
    };
    let images: Vec<Vec<f64>> = elements.iter().map(|g| act(g, x)).collect::<Result<_>>()?;
    let mut delta = f64::INFINITY;
    for a in 0..m {
        for b in a + 1..m {
            let d = images[a]
                .iter()
                .zip(&images[b])
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
            delta = delta.min(d);
        }
    }
    Ok(OrbitSeparation { elements, delta })
}

/// Evidence that a `phi_i`-equivariant `u` and a `phi_j`-equivariant `v`
/// (`i < j`) are different functions.
#[derive(Debug, Clone, Serialize)]
pub struct DistinctnessWitness {
    /// Point where `|u|` is largest.
    pub base: Vec<f64>,
    /// `rho` in block `j` applied to `base`.
    pub point: Vec<f64>,
    /// `|u(base) + v(base)|`: the gap at `point` forced by the two symmetries
    /// (`u` is even and `v` is odd under `rho` in block `j`).
    pub predicted_margin: f64,
    /// `|u(point) - v(point)|` measured on the data.
    pub measured_margin: f64,
    /// `max |u - v|` over the active nodes of `u`'s grid.
    pub max_gap: f64,
}

pub fn distinctness_witness(
    u: &Field,
    i: usize,
    v: &Field,
    j: usize,
    tol: f64,
) -> Result<DistinctnessWitness> {
    if i >= j || i == 0 {
        return Err(Error::Precondition(format!("need 1 <= i < j, got i = {i}, j = {j}")));
    }
    let dim = u.grid().dim();
    if 4 * j > dim || v.grid().dim() != dim {
        return Err(Error::Precondition(format!("j = {j} does not fit N = {dim}")));
    }
    let (imax, umax) = u
        .values()
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bm), (k, x)| if x.abs() > bm { (k, x.abs()) } else { (bi, bm) });
    if umax <= tol {
        return Err(Error::Precondition("u vanishes within tolerance".into()));
    }
    let base = u.grid().node_coords(imax);
    let point = act(&GroupElement::rho_in_block(j, j - 1), &base)?;
    let u_base = u.values()[imax];
    let v_base = interpolate(v, &base);
    let measured = (interpolate(u, &point) - interpolate(v, &point)).abs();
    let max_gap = {
        let mut x = vec![0.0; dim];
        (0..u.grid().active_len()).fold(0.0_f64, |m, k| {
            u.grid().write_node_coords(k, &mut x);
            m.max((u.values()[k] - interpolate(v, &x)).abs())
        })
    };
    Ok(DistinctnessWitness {
        base,
        point,
        predicted_margin: (u_base + v_base).abs(),
        measured_margin: measured,
        max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DomainMask, GridSpec};
    use approx::assert_relative_eq;

    fn config(dim: usize, j: usize) -> SymmetryConfig {
        SymmetryConfig::new(dim, j).unwrap()
    }

    #[test]
    fn rho_maps_first_axis_to_second_complex_coordinate() {
        let g = GroupElement::rho_in_block(1, 0);
        assert_eq!(act(&g, &[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        let rr = g.compose(&g);
        let x = act(&rr, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(x[0], -1.0, epsilon = 1e-15);
        assert!(x[1].abs() < 1e-15 && x[2].abs() < 1e-15 && x[3].abs() < 1e-15);
        let twice = act(&g, &act(&g, &[1.0, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(twice, vec![-1.0, 0.0, -0.0, -0.0]);
    }

    #[test]
    fn identity_fixes_points() {
        let x = [0.3, -1.0, 2.0, 0.5, 4.0];
        assert_eq!(act(&GroupElement::identity(1), &x).unwrap(), x.to_vec());
    }

    #[test]
    fn signs_of_generators() {
        assert_eq!(sign(&GroupElement::identity(2)), 1.0);
        let mut g = GroupElement::identity(2);
        g.blocks[0] = BlockElement::rotation(1.0);
        assert_eq!(sign(&g), 1.0);
        assert_eq!(sign(&GroupElement::rho_in_block(2, 1)), -1.0);
        g.blocks = vec![BlockElement::rho(), BlockElement::rho()];
        assert_eq!(sign(&g), 1.0);
    }

    #[test]
    fn rho_anticommutes_with_rotation() {
        let t = 0.7;
        let lhs = BlockElement::rotation(t).compose(BlockElement::rho());
        let rhs = BlockElement::rho().compose(BlockElement::rotation(-t));
        assert_eq!(lhs.rho, rhs.rho);
        assert_relative_eq!(lhs.theta, rhs.theta, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(act(&GroupElement::identity(2), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn haar_sample_sizes_and_signed_sum() {
        let s = haar_sample(&config(4, 1)).unwrap();
        assert_eq!(s.len(), 16);
        assert!(s.iter().all(|(_, w)| (*w - 1.0 / 16.0).abs() < 1e-15));
        let s2 = haar_sample(&config(8, 2)).unwrap();
        assert_eq!(s2.len(), 256);
        let s3 = haar_sample(&config(9, 1).with_samples(8, 3).unwrap()).unwrap();
        assert_eq!(s3.len(), 48);
        for set in [&s, &s2, &s3] {
            let signed: f64 = set.iter().map(|(g, w)| w * sign(g)).sum();
            assert!(signed.abs() < 1e-15);
            let total: f64 = set.iter().map(|(_, w)| w).sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SymmetryConfig::new(4, 2).is_err());
        assert!(SymmetryConfig::new(3, 1).is_err());
        assert!(SymmetryConfig::new(9, 2).unwrap().lambda_trivial());
        assert!(!SymmetryConfig::new(9, 1).unwrap().lambda_trivial());
        assert!(config(4, 1).with_samples(6, 1).is_err());
    }

    #[test]
    fn fixed_subspaces() {
        assert!(fixed_subspace(&config(4, 1)).is_empty());
        let f = fixed_subspace(&config(9, 2));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0][8], 1.0);
        assert!(fixed_subspace(&config(8, 1)).is_empty());
    }

    #[test]
    fn orbit_separation() {
        let c = config(4, 1);
        let s = separate_orbit(&[1.0, 0.0, 0.0, 0.0], 4, &c).unwrap();
        assert_eq!(s.elements.len(), 4);
        assert_relative_eq!(s.delta, 2f64.sqrt(), epsilon = 1e-12);
        for cval in [0.5, 3.0] {
            let s = separate_orbit(&[cval, 0.0, 0.0, 0.0], 2, &c).unwrap();
            assert_relative_eq!(s.delta, 2.0 * cval, epsilon = 1e-12);
        }
        assert!(matches!(
            separate_orbit(&[0.0; 4], 3, &c),
            Err(Error::NoSeparation(_))
        ));
        let c9 = config(9, 2);
        let mut x = vec![0.0; 9];
        x[8] = 1.0;
        assert!(separate_orbit(&x, 3, &c9).is_err());
        // tail rotation when only the O(N-4j) factor moves
        let c8 = config(8, 1);
        let mut y = vec![0.0; 8];
        y[6] = 2.0;
        let s = separate_orbit(&y, 6, &c8).unwrap();
        assert!(s.delta >= 2.0 * 2.0 * (PI / 6.0).sin() - 1e-12);
    }

    #[test]
    fn hypotheses_hold_for_admissible_j() {
        for (dim, j) in [(4, 1), (8, 1), (8, 2), (9, 1), (9, 2)] {
            let r = check_hypotheses(&config(dim, j).with_samples(8, 2).unwrap(), 20).unwrap();
            assert!(r.all_passed(), "N={dim} j={j}: {r:?}");
        }
    }

    #[test]
    fn stabilizer_of_first_axis_is_trivial_for_one_block() {
        let r = check_hypotheses(&config(4, 1), 5).unwrap();
        assert!(r.s3.detail.starts_with("1 sampled"), "{}", r.s3.detail);
    }

    #[test]
    fn projector_rejects_non_invariant_mask() {
        let g = Arc::new(Grid::new(GridSpec::new(4, 9, 1.0, DomainMask::Box).unwrap()).unwrap());
        assert!(matches!(
            EquivariantProjector::new(&g, &config(4, 1)),
            Err(Error::Symmetry(_))
        ));
    }

    #[test]
    fn projector_adjoint_is_consistent() {
        let g = Arc::new(
            Grid::new(GridSpec::new(4, 9, 1.0, DomainMask::Ball { radius: 1.0 }).unwrap()).unwrap(),
        );
        let p = EquivariantProjector::new(&g, &config(4, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = g.active_len();
        let u = Field::from_values(&g, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let v = Field::from_values(&g, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lhs = p.apply(&u).dot(&v);
        assert!(lhs.abs() > 1e-3);
        assert_relative_eq!(lhs, u.dot(&p.apply_transpose(&v)), max_relative = 1e-12);
    }

    #[test]
    fn distinctness_from_identical_data() {
        let g = Arc::new(
            Grid::new(GridSpec::new(8, 5, 1.0, DomainMask::Ball { radius: 1.0 }).unwrap()).unwrap(),
        );
        let u = Field::from_fn(&g, |x| (1.0 - grid_norm2(x)).max(0.0) * (1.0 + x[0]));
        let w = distinctness_witness(&u, 1, &u, 2, 1e-9).unwrap();
        assert!(w.predicted_margin > 0.5);
        assert!(distinctness_witness(&Field::zeros(&g), 1, &u, 2, 1e-9).is_err());
    }

    fn grid_norm2(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
}
