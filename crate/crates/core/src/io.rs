//! On-disk formats: `.pbf` field files, CSV exports and energy traces.
//!
//! A `.pbf` file is one line of JSON (the header) followed by
//! little-endian `f64` values in row-major node order. `f64le-dense` stores
//! every lattice node, `f64le-masked` only the active ones.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::EnergyReport;
use crate::grid::{DomainMask, Field, Grid, GridSpec};
use crate::solver::TraceEntry;

pub const PBF_FORMAT: &str = "pbf";
pub const PBF_VERSION: u32 = 1;
/// Largest lattice written densely by [`Encoding::auto`] and exported to CSV.
pub const SMALL_GRID_NODES: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    #[serde(rename = "f64le-dense")]
    Dense,
    #[serde(rename = "f64le-masked")]
    Masked,
}

impl Encoding {
    pub fn auto(spec: &GridSpec) -> Self {
        if spec.total_nodes() <= SMALL_GRID_NODES {
            Encoding::Dense
        } else {
            Encoding::Masked
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub half_extent: f64,
    pub mask: DomainMask,
    pub encoding: Encoding,
    pub count: u64,
}

impl FieldHeader {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.nodes_per_axis, self.half_extent, self.mask.clone())
    }
}

pub fn encode_field(u: &Field, encoding: Encoding) -> Result<Vec<u8>> {
    let grid = u.grid();
    let spec = grid.spec();
    let values: Vec<f64> = match encoding {
        Encoding::Masked => u.values().to_vec(),
        Encoding::Dense => {
            let total = spec.total_nodes();
            if total > SMALL_GRID_NODES * 64 {
                return Err(Error::Format(format!("lattice of {total} nodes is too large to write densely")));
            }
            let mut dense = vec![0.0; total as usize];
            for (i, &v) in u.values().iter().enumerate() {
                dense[grid.row_major_id(i) as usize] = v;
            }
            dense
        }
    };
    let header = FieldHeader {
        format: PBF_FORMAT.into(),
        version: PBF_VERSION,
        dim: spec.dim,
        nodes_per_axis: spec.nodes_per_axis,
        half_extent: spec.half_extent,
        mask: spec.mask.clone(),
        encoding,
        count: values.len() as u64,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_field(path: &Path, u: &Field, encoding: Encoding) -> Result<()> {
    let bytes = encode_field(u, encoding)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a field, building its grid from the header.
pub fn read_field(path: &Path) -> Result<Field> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader)?;
    let grid = Arc::new(Grid::new(header.spec()?)?);
    read_values(&mut reader, &header, &grid)
}

/// Reads a field onto an existing grid with the same geometry.
pub fn read_field_on(path: &Path, grid: &Arc<Grid>) -> Result<Field> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let header = read_header(&mut reader)?;
    if &header.spec()? != grid.spec() {
        return Err(Error::Format("field file geometry differs from the target grid".into()));
    }
    read_values(&mut reader, &header, grid)
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let mut reader = BufReader::new(bytes);
    let header = read_header(&mut reader)?;
    let grid = Arc::new(Grid::new(header.spec()?)?);
    read_values(&mut reader, &header, &grid)
}

fn read_header(reader: &mut impl BufRead) -> Result<FieldHeader> {
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?;
    let header: FieldHeader = serde_json::from_slice(&line)
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.format != PBF_FORMAT {
        return Err(Error::Format(format!("unknown format {:?}", header.format)));
    }
    if header.version != PBF_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    Ok(header)
}

fn read_values(reader: &mut impl Read, header: &FieldHeader, grid: &Arc<Grid>) -> Result<Field> {
    let expected = match header.encoding {
        Encoding::Dense => grid.spec().total_nodes() as u64,
        Encoding::Masked => grid.active_len() as u64,
    };
    if header.count != expected {
        return Err(Error::Format(format!(
            "header declares {} values, geometry needs {expected}",
            header.count
        )));
    }
    let mut raw = Vec::new();
    reader
        .read_to_end(&mut raw)
        .map_err(|e| Error::Format(format!("cannot read values: {e}")))?;
    if raw.len() as u64 != expected * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            raw.len(),
            expected * 8
        )));
    }
    let all: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let values = match header.encoding {
        Encoding::Masked => all,
        Encoding::Dense => (0..grid.active_len())
            .map(|i| all[grid.row_major_id(i) as usize])
            .collect(),
    };
    Field::from_values(grid, values)
}

/// `x_0,...,x_{N-1},value` per active node.
pub fn write_field_csv(path: &Path, u: &Field) -> Result<()> {
    let grid = u.grid();
    if grid.spec().total_nodes() > SMALL_GRID_NODES {
        return Err(Error::Format("CSV export is limited to small grids".into()));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let cols: Vec<String> = (0..grid.dim()).map(|a| format!("x{a}")).collect();
    writeln!(w, "{},value", cols.join(",")).map_err(io)?;
    let mut x = vec![0.0; grid.dim()];
    for (i, v) in u.values().iter().enumerate() {
        grid.write_node_coords(i, &mut x);
        let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{}", xs.join(","), v).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub const TRACE_HEADER: &str = "step,J,grad_norm_p,crit_norm,nehari_defect,dual_residual";

pub fn trace_row(step: usize, r: &EnergyReport) -> String {
    let dual = r.dual_residual.map(|d| d.to_string()).unwrap_or_default();
    format!(
        "{step},{},{},{},{},{dual}",
        r.energy, r.grad_norm_p, r.crit_norm, r.nehari_defect
    )
}

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut s = String::with_capacity(64 * (trace.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for t in trace {
        s.push_str(&trace_row(t.step, &t.report));
        s.push('\n');
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
