//! Sample sets, deterministic synthetic samplers and the on-disk format.
//!
//! Samples are stored as plain text: one sample per line, coordinates as
//! shortest round-trip decimal floats separated by commas, no header. A
//! sibling `<stem>.meta.json` carries provenance.

mod rng;

pub use rng::{streams, RngStream, Sampler};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// An `n × d` matrix of finite samples from one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Array2<f64>,
    tag: String,
}

impl SampleSet {
    pub fn new(data: Array2<f64>, tag: impl Into<String>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(invalid!(
                "sample set must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            ));
        }
        if let Some(((i, j), v)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid!("non-finite entry {v} at row {i}, column {j}"));
        }
        Ok(Self {
            data,
            tag: tag.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], tag: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(invalid!("row {i} has length {}, expected {d}", rows[i].len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| invalid!("{e}"))?;
        Self::new(data, tag)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(invalid!("row index {i} out of range for n = {}", self.n()));
        }
        Self::new(self.data.select(Axis(0), indices), self.tag.clone())
    }

    /// Row-wise concatenation.
    pub fn concat(&self, other: &SampleSet) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(invalid!("dimension mismatch: {} vs {}", self.dim(), other.dim()));
        }
        let data = ndarray::concatenate(Axis(0), &[self.view(), other.view()])
            .map_err(|e| invalid!("{e}"))?;
        Self::new(data, self.tag.clone())
    }
}

fn check_counts(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(invalid!("sample count and dimension must be >= 1, got n={n}, d={d}"));
    }
    Ok(())
}

/// I.i.d. uniform entries on `[low, high)`, filled row-major.
pub fn gen_uniform(n: usize, d: usize, low: f64, high: f64, rng: RngStream) -> Result<SampleSet> {
    check_counts(n, d)?;
    if !(low.is_finite() && high.is_finite() && low < high) {
        return Err(invalid!("uniform bounds require low < high, got [{low}, {high})"));
    }
    let mut s = rng.sampler();
    let width = high - low;
    let data = Array2::from_shape_simple_fn((n, d), || {
        let v = low + width * s.uniform();
        if v >= high {
            high.next_down()
        } else {
            v
        }
    });
    SampleSet::new(data, format!("uniform[{low},{high})"))
}

/// I.i.d. normal entries `N(mu, sigma²)`, filled row-major.
pub fn gen_gaussian(n: usize, d: usize, mu: f64, sigma: f64, rng: RngStream) -> Result<SampleSet> {
    check_counts(n, d)?;
    if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
        return Err(invalid!("gaussian requires finite mu and sigma > 0, got mu={mu}, sigma={sigma}"));
    }
    let mut s = rng.sampler();
    let data = Array2::from_shape_simple_fn((n, d), || mu + sigma * s.standard_normal());
    SampleSet::new(data, format!("gauss({mu},{sigma})"))
}

/// One isotropic Gaussian component of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: f64,
}

/// Draws `n` points from an isotropic Gaussian mixture. For each sample the
/// component is drawn first, then the coordinates.
pub fn gen_mixture(n: usize, components: &[MixtureComponent], rng: RngStream) -> Result<SampleSet> {
    let d = components.first().map_or(0, |c| c.mean.len());
    check_counts(n, d)?;
    if components
        .iter()
        .any(|c| c.mean.len() != d || !(c.std > 0.0) || !(c.weight >= 0.0))
    {
        return Err(invalid!("mixture components need equal dimension, std > 0, weight >= 0"));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return Err(invalid!("mixture weights sum to zero"));
    }
    let mut s = rng.sampler();
    let mut data = Array2::zeros((n, d));
    for mut row in data.rows_mut() {
        let u = s.uniform() * total;
        let mut acc = 0.0;
        let mut pick = components.len() - 1;
        for (k, c) in components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = k;
                break;
            }
        }
        let c = &components[pick];
        for (x, m) in row.iter_mut().zip(&c.mean) {
            *x = m + c.std * s.standard_normal();
        }
    }
    SampleSet::new(data, "mixture")
}

/// Rotates the first two coordinates of every sample by `angle` radians about the origin.
pub fn rotate_2d(set: &SampleSet, angle: f64) -> Result<SampleSet> {
    if set.dim() < 2 {
        return Err(invalid!("rotation needs d >= 2, got {}", set.dim()));
    }
    let (sin, cos) = angle.sin_cos();
    let mut data = set.data().clone();
    for mut row in data.rows_mut() {
        let (x, y) = (row[0], row[1]);
        row[0] = cos * x - sin * y;
        row[1] = sin * x + cos * y;
    }
    SampleSet::new(data, format!("{}-rot", set.tag()))
}

/// Provenance written next to a sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub tag: String,
    pub n: usize,
    pub d: usize,
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
}

/// `dir/name.csv` → `dir/name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_samples(set: &SampleSet, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(set.n() * set.dim() * 20);
    for row in set.data().rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_meta(meta: &SampleMeta, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)? + "\n";
    let mp = meta_path(path);
    fs::write(&mp, text).map_err(|e| Error::io(mp, e))
}

/// Parses the sample format. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_samples(text: &str, tag: &str) -> Result<SampleSet> {
    let mut flat = Vec::new();
    let mut d = None;
    let mut n = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let before = flat.len();
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric token {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            flat.push(v);
        }
        let len = flat.len() - before;
        match d {
            None => d = Some(len),
            Some(expected) if expected != len => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("row has {len} entries, expected {expected}"),
                })
            }
            _ => {}
        }
        n += 1;
    }
    let Some(d) = d else {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    };
    let data = Array2::from_shape_vec((n, d), flat).map_err(|e| invalid!("{e}"))?;
    SampleSet::new(data, tag)
}

/// Reads a sample file; the tag comes from the sibling meta file when present,
/// otherwise from the file stem.
pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tag = read_meta(path)
        .ok()
        .map(|m| m.tag)
        .unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
    parse_samples(&text, &tag)
}

pub fn read_meta(path: &Path) -> Result<SampleMeta> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One value per line, same number formatting as sample files.
pub fn write_vector(values: &[f64], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 20);
    for v in values {
        let _ = writeln!(out, "{v}");
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let set = parse_samples(&text, "")?;
    if set.dim() != 1 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected one value per line, found {}", set.dim()),
        });
    }
    Ok(set.into_data().into_raw_vec_and_offset().0)
}

/// Pooled mean and population standard deviation of every entry.
pub fn pooled_moments(set: &SampleSet) -> (f64, f64) {
    let count = (set.n() * set.dim()) as f64;
    let mean = set.data().iter().sum::<f64>() / count;
    let var = set.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    (mean, var.sqrt())
}
