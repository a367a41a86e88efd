//! Browser bindings: bubble profiles, the fibering curve `t -> J(t u)` and
//! slices of projected equivariant fields.

use std::sync::Arc;

use wasm_bindgen::prelude::*;

use critp::bubble::{normalization_constant, BubbleParams};
use critp::functional::{mountain_pass_profile, nehari_scale, ProblemParams};
use critp::grid::{interpolate, DomainMask, Field, Grid, GridSpec};
use critp::symmetry::{EquivariantProjector, SymmetryConfig};

fn js(e: critp::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub fn bubble_constant(n: usize, p: f64) -> Result<f64, JsValue> {
    ProblemParams::new(n, p).map_err(js)?;
    Ok(normalization_constant(n, p))
}

/// `U_eps(r)` at `samples` radii evenly spaced on `[0, r_max]`.
#[wasm_bindgen]
pub fn bubble_profile(n: usize, p: f64, eps: f64, r_max: f64, samples: usize) -> Result<Vec<f64>, JsValue> {
    let b = BubbleParams::centered(ProblemParams::new(n, p).map_err(js)?, eps).map_err(js)?;
    let step = r_max / (samples.max(2) - 1) as f64;
    Ok((0..samples).map(|k| b.radial_value(k as f64 * step)).collect())
}

/// `J(t u)` for `t` evenly spaced on `[0, t_max]`, where `u` is a bubble on a
/// small three-dimensional ball scaled onto the Nehari set. The last two
/// entries are the zero crossing and a scaling with negative energy.
#[wasm_bindgen]
pub fn fibering_curve(p: f64, eps: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, JsValue> {
    let params = ProblemParams::new(3, p).map_err(js)?;
    let grid = Arc::new(Grid::new(GridSpec::ball_with_spacing(3, 1.0, 1.0 / 12.0).map_err(js)?).map_err(js)?);
    let u = BubbleParams::centered(params, eps).map_err(js)?.sample_shifted(&grid, 1.0).map_err(js)?;
    let on_nehari = nehari_scale(&u, &params).map_err(js)?.scaled;
    let step = t_max / (samples.max(2) - 1) as f64;
    let ts: Vec<f64> = (0..samples).map(|k| k as f64 * step).collect();
    let mp = mountain_pass_profile(&on_nehari, &params, &ts, 1e-9).map_err(js)?;
    let mut out: Vec<f64> = mp.table.iter().map(|&(_, j)| j).collect();
    out.push(mp.zero_crossing);
    out.push(mp.s_u);
    Ok(out)
}

/// Holds the projector for `N = 4`, `j = 1` on a small ball so that
/// repeated slices are cheap.
#[wasm_bindgen]
pub struct Projector {
    inner: EquivariantProjector,
    grid: Arc<Grid>,
}

#[wasm_bindgen]
impl Projector {
    #[wasm_bindgen(constructor)]
    pub fn new(nodes_per_axis: usize) -> Result<Projector, JsValue> {
        let spec = GridSpec::new(4, nodes_per_axis, 1.0, DomainMask::Ball { radius: 1.0 }).map_err(js)?;
        let grid = Arc::new(Grid::new(spec).map_err(js)?);
        let config = SymmetryConfig::new(4, 1).map_err(js)?;
        let inner = EquivariantProjector::new(&grid, &config).map_err(js)?;
        Ok(Projector { inner, grid })
    }

    /// Projects a Gaussian bump centered at `(cx, 0, cy, 0)` of width
    /// `width` and samples the result on a `res x res` grid over the
    /// `(x_0, x_2)` plane.
    pub fn slice(&self, cx: f64, cy: f64, width: f64, res: usize) -> Vec<f64> {
        let w2 = width * width;
        let bump = Field::from_fn(&self.grid, |x| {
            let d = (x[0] - cx).powi(2) + x[1].powi(2) + (x[2] - cy).powi(2) + x[3].powi(2);
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (-d / w2).exp() * (1.0 - r2).max(0.0)
        });
        let v = self.inner.apply(&bump);
        let step = 2.0 / (res.max(2) - 1) as f64;
        let mut out = Vec::with_capacity(res * res);
        for row in 0..res {
            for col in 0..res {
                let x = [-1.0 + col as f64 * step, 0.0, 1.0 - row as f64 * step, 0.0];
                out.push(interpolate(&v, &x));
            }
        }
        out
    }
}
