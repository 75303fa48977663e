//! File formats: TSR1 binary tensors, CSV matrices and change-point lists,
//! and decomposition model directories.
//!
//! TSR1 layout: magic `TSR1`, `u32` little-endian order K, K `u64` extents,
//! then all values as `f64` little endian in vec order.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::decompose::{CpModel, HosvdModel};
use crate::error::{Result, TensegError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TSR1";
/// Refuse absurd element counts before allocating.
const MAX_ELEMENTS: u64 = 1 << 31;

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &n in t.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| TensegError::parse("file too short for TSR1 header"))?;
    if &magic != MAGIC {
        return Err(TensegError::parse("bad magic, not a TSR1 file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|_| TensegError::parse("truncated TSR1 header"))?;
    let order = u32::from_le_bytes(b4) as usize;
    if order == 0 || order > 64 {
        return Err(TensegError::parse(format!("unreasonable tensor order {order}")));
    }
    let mut shape = Vec::with_capacity(order);
    let mut total: u64 = 1;
    for _ in 0..order {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)
            .map_err(|_| TensegError::parse("truncated TSR1 extents"))?;
        let n = u64::from_le_bytes(b8);
        if n == 0 {
            return Err(TensegError::parse("zero extent in TSR1 file"));
        }
        total = total
            .checked_mul(n)
            .filter(|&t| t <= MAX_ELEMENTS)
            .ok_or_else(|| TensegError::parse("TSR1 extent product overflows"))?;
        shape.push(n as usize);
    }
    let mut data = vec![0.0f64; total as usize];
    let mut b8 = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut b8)
            .map_err(|_| TensegError::parse("truncated TSR1 payload"))?;
        *v = f64::from_le_bytes(b8);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(TensegError::parse("trailing bytes after TSR1 payload"));
    }
    Tensor::new(shape, data)
}

/// Writes a matrix as CSV, one row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{}", m[(i, j)])?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV into a matrix, one row per line. An initial
/// non-numeric line is treated as a header and skipped.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let r = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if let Some(first) = rows.first() {
                    if vals.len() != first.len() {
                        return Err(TensegError::parse(format!(
                            "ragged CSV: line {} has {} fields, expected {}",
                            lineno + 1,
                            vals.len(),
                            first.len()
                        )));
                    }
                }
                rows.push(vals);
            }
            Err(_) if rows.is_empty() && lineno == 0 => continue, // header
            Err(e) => {
                return Err(TensegError::parse(format!(
                    "line {}: non-numeric field ({e})",
                    lineno + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(TensegError::parse("CSV contains no data rows"));
    }
    let nrows = rows.len();
    let ncols = rows[0].len();
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(TensegError::parse("non-finite value in CSV"));
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Reads a p-variate series stored as CSV with one row per time point,
/// returning the p × T matrix the detector consumes.
pub fn read_series_csv(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read_matrix_csv(path)?.transpose())
}

pub fn write_series_csv(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(path, &x.transpose())
}

/// Writes change-point locations, one per line under a `change_point` header.
pub fn write_change_points(path: &Path, cps: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "change_point")?;
    for c in cps {
        writeln!(w, "{c}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_change_points(path: &Path) -> Result<Vec<usize>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let field = line.trim();
        if field.is_empty() || (lineno == 0 && field.parse::<usize>().is_err()) {
            continue;
        }
        let v = field
            .parse::<usize>()
            .map_err(|e| TensegError::parse(format!("line {}: {e}", lineno + 1)))?;
        out.push(v);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| TensegError::parse(format!("json encode: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct ModelManifest {
    kind: String,
    shape: Vec<usize>,
    ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    weights: Vec<f64>,
}

fn read_manifest(dir: &Path) -> Result<ModelManifest> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| TensegError::parse(format!("manifest.json: {e}")))
}

/// Saves a CP model as factor CSVs plus a manifest with weights and shape.
pub fn save_cp_model(dir: &Path, model: &CpModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = ModelManifest {
        kind: "cp".to_string(),
        shape: model.factors.iter().map(|f| f.nrows()).collect(),
        ranks: vec![model.rank()],
        weights: model.weights.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    for (k, f) in model.factors.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("factor_{k}.csv")), f)?;
    }
    Ok(())
}

pub fn load_cp_model(dir: &Path) -> Result<CpModel> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != "cp" {
        return Err(TensegError::parse(format!(
            "expected cp model, manifest says {:?}",
            manifest.kind
        )));
    }
    let mut factors = Vec::with_capacity(manifest.shape.len());
    for k in 0..manifest.shape.len() {
        factors.push(read_matrix_csv(&dir.join(format!("factor_{k}.csv")))?);
    }
    let model = CpModel {
        weights: manifest.weights,
        factors,
    };
    model.validate()?;
    Ok(model)
}

/// Saves an HOSVD model as factor CSVs, a TSR1 core, and a manifest.
pub fn save_hosvd_model(dir: &Path, model: &HosvdModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = ModelManifest {
        kind: "hosvd".to_string(),
        shape: model.factors.iter().map(|f| f.nrows()).collect(),
        ranks: model.core.shape().to_vec(),
        weights: Vec::new(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    for (k, f) in model.factors.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("factor_{k}.csv")), f)?;
    }
    write_tensor(&dir.join("core.tsr"), &model.core)
}

pub fn load_hosvd_model(dir: &Path) -> Result<HosvdModel> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != "hosvd" {
        return Err(TensegError::parse(format!(
            "expected hosvd model, manifest says {:?}",
            manifest.kind
        )));
    }
    let core = read_tensor(&dir.join("core.tsr"))?;
    let mut factors = Vec::with_capacity(manifest.shape.len());
    for k in 0..manifest.shape.len() {
        factors.push(read_matrix_csv(&dir.join(format!("factor_{k}.csv")))?);
    }
    let model = HosvdModel { core, factors };
    model.validate()?;
    Ok(model)
}
