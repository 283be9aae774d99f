//! Twinning-moons generation, rotation shift, an open-set variant, and CSV
//! ingestion of externally computed features.
//!
//! CSV layout: a header line `d=<int>,labels=<0|1>`, then one sample per
//! line with `d` comma-separated values, followed by the integer label when
//! `labels=1` (`-1` marks an unlabeled or unknown-class sample).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::scalar::Real;

/// Label value for unlabeled or unknown-class rows.
pub const UNLABELED: i64 = -1;

/// Center and spread of the unknown-class blob added by [`make_open_set_variant`].
pub const UNKNOWN_BLOB_CENTER: [f64; 2] = [0.5, -1.5];
pub const UNKNOWN_BLOB_SIGMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: DenseMatrix<T>,
    /// One per row; [`UNLABELED`] for unknown.
    pub labels: Vec<i64>,
    pub domain: Domain,
    pub num_classes: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: DenseMatrix<T>, labels: Vec<i64>, domain: Domain, num_classes: usize) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::InvalidInput("dataset needs at least one row".into()));
        }
        if labels.len() != x.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                x.rows()
            )));
        }
        if let Some(&bad) = labels
            .iter()
            .find(|&&y| y != UNLABELED && (y < 0 || y as usize >= num_classes))
        {
            return Err(Error::Label(format!(
                "label {bad} outside [0, {num_classes}) and not {UNLABELED}"
            )));
        }
        Ok(Self {
            x,
            labels,
            domain,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(|&y| y != UNLABELED)
    }

    pub fn has_labels(&self) -> bool {
        self.labels.iter().any(|&y| y != UNLABELED)
    }

    /// Labels as class indices, failing on any unlabeled row.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if y == UNLABELED {
                    Err(Error::Label(format!("row {i} is unlabeled")))
                } else {
                    Ok(y as usize)
                }
            })
            .collect()
    }

    /// Same points with every label replaced by [`UNLABELED`].
    pub fn without_labels(&self) -> Self {
        Self {
            labels: vec![UNLABELED; self.len()],
            ..self.clone()
        }
    }

    pub fn centroid(&self) -> Vec<T> {
        let n = T::of_usize(self.len());
        self.x.column_sums().into_iter().map(|s| s / n).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoonsConfig {
    pub n_per_class: usize,
    pub noise_sigma: f64,
    pub rotation_deg: f64,
    pub seed: u64,
}

impl Default for MoonsConfig {
    fn default() -> Self {
        Self {
            n_per_class: 300,
            noise_sigma: 0.1,
            rotation_deg: 0.0,
            seed: 0,
        }
    }
}

/// Two interleaved half circles: class 0 at `(cos θ, sin θ)`, class 1 at
/// `(1 − cos θ, 0.5 − sin θ)`, `θ ~ U[0, π]`, plus isotropic Gaussian
/// noise. Rows are ordered class 0 then class 1. A non-zero
/// `rotation_deg` returns the rotated (target-domain) set.
pub fn make_twin_moons<T: Real>(cfg: &MoonsConfig) -> Result<Dataset<T>> {
    if cfg.n_per_class == 0 {
        return Err(Error::Config("n_per_class must be ≥ 1".into()));
    }
    if !(cfg.noise_sigma >= 0.0) || !cfg.noise_sigma.is_finite() {
        return Err(Error::Config(format!("noise σ must be ≥ 0, got {}", cfg.noise_sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let n = cfg.n_per_class;
    let mut data = Vec::with_capacity(4 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for class in 0..2 {
        for _ in 0..n {
            let theta: f64 = rng.random_range(0.0..=std::f64::consts::PI);
            let (x, y) = if class == 0 {
                (theta.cos(), theta.sin())
            } else {
                (1.0 - theta.cos(), 0.5 - theta.sin())
            };
            let (ex, ey) = if cfg.noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            data.push(T::lit(x + ex));
            data.push(T::lit(y + ey));
            labels.push(class as i64);
        }
    }
    let ds = Dataset::new(DenseMatrix::new(2 * n, 2, data)?, labels, Domain::Source, 2)?;
    if cfg.rotation_deg != 0.0 {
        rotate_dataset(&ds, cfg.rotation_deg)
    } else {
        Ok(ds)
    }
}

/// Rotates 2-D points about the dataset centroid and tags the result as
/// target domain.
pub fn rotate_dataset<T: Real>(ds: &Dataset<T>, degrees: f64) -> Result<Dataset<T>> {
    if ds.dim() != 2 {
        return Err(Error::Dimension(format!(
            "rotation needs 2-D points, got {}",
            ds.dim()
        )));
    }
    if degrees == 0.0 {
        let mut out = ds.clone();
        out.domain = Domain::Target;
        return Ok(out);
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let (s, c) = (T::lit(s), T::lit(c));
    let center = ds.centroid();
    let mut x = ds.x.clone();
    for r in 0..x.rows() {
        let row = x.row_mut(r);
        let dx = row[0] - center[0];
        let dy = row[1] - center[1];
        row[0] = center[0] + c * dx - s * dy;
        row[1] = center[1] + s * dx + c * dy;
    }
    Ok(Dataset {
        x,
        labels: ds.labels.clone(),
        domain: Domain::Target,
        num_classes: ds.num_classes,
    })
}

/// Appends `n_unknown` points of an unknown class (label −1) drawn from a
/// Gaussian blob below both moons.
pub fn make_open_set_variant<T: Real>(ds: &Dataset<T>, n_unknown: usize, seed: u64) -> Result<Dataset<T>> {
    if ds.dim() != 2 {
        return Err(Error::Dimension(format!(
            "open-set blob is 2-D, dataset is {}-D",
            ds.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, UNKNOWN_BLOB_SIGMA).expect("valid σ");
    let mut data = ds.x.data().to_vec();
    let mut labels = ds.labels.clone();
    for _ in 0..n_unknown {
        data.push(T::lit(UNKNOWN_BLOB_CENTER[0] + noise.sample(&mut rng)));
        data.push(T::lit(UNKNOWN_BLOB_CENTER[1] + noise.sample(&mut rng)));
        labels.push(UNLABELED);
    }
    Dataset::new(
        DenseMatrix::new(ds.len() + n_unknown, 2, data)?,
        labels,
        ds.domain,
        ds.num_classes,
    )
}

pub fn dataset_to_csv<T: Real>(ds: &Dataset<T>, with_labels: bool) -> String {
    let mut out = format!("d={},labels={}\n", ds.dim(), u8::from(with_labels));
    for (row, &label) in ds.x.row_iter().zip(&ds.labels) {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
        if with_labels {
            cells.push(label.to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses the CSV layout described in the module docs. The class count is
/// one more than the largest label seen (0 for an unlabeled file).
pub fn parse_csv_dataset<T: Real>(text: &str, domain: Domain) -> Result<Dataset<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let (d, labeled) = parse_header(header)?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = d + usize::from(labeled);
        if cells.len() != expected {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("{} cells, expected {expected}", cells.len()),
            });
        }
        for cell in &cells[..d] {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            data.push(T::lit(v));
        }
        labels.push(if labeled {
            cells[d].parse::<i64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("not an integer label: {:?}", cells[d]),
            })?
        } else {
            UNLABELED
        });
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y < UNLABELED) {
        return Err(Error::Label(format!("label {bad} is negative")));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    Dataset::new(DenseMatrix::new(labels.len(), d, data)?, labels, domain, num_classes)
}

fn parse_header(header: &str) -> Result<(usize, bool)> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let mut d = None;
    let mut labeled = None;
    for part in header.split(',') {
        let (key, val) = part
            .trim()
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `d=<int>,labels=<0|1>` header, got {header:?}")))?;
        match key.trim() {
            "d" => d = Some(val.trim().parse::<usize>().map_err(|_| bad(format!("bad d: {val:?}")))?),
            "labels" => {
                labeled = Some(match val.trim() {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("labels must be 0 or 1, got {other:?}"))),
                })
            }
            other => return Err(bad(format!("unknown header key {other:?}"))),
        }
    }
    match (d, labeled) {
        (Some(d), Some(l)) if d > 0 => Ok((d, l)),
        _ => Err(bad(format!("header must declare d ≥ 1 and labels: {header:?}"))),
    }
}

pub fn save_csv_dataset<T: Real>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_csv(ds, ds.has_labels()))?;
    Ok(())
}

pub fn load_csv_dataset<T: Real>(path: impl AsRef<Path>, domain: Domain) -> Result<Dataset<T>> {
    parse_csv_dataset(&std::fs::read_to_string(path)?, domain)
}
