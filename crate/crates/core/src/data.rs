//! Labelled feature matrices: a seeded Gaussian-blob generator plus CSV and
//! flat binary loaders.
//!
//! CSV rows are `f_0,...,f_{d-1},label`, optional header line skipped when
//! its first field is not numeric. The binary layout is a little-endian
//! `u32` feature width followed by rows of `d` `f32` values and a `u32` label.

use std::io::{self, BufRead, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dataset is empty")]
    Empty,
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Invalid("feature width must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        let classes = labels.iter().map(|&y| y as usize + 1).max().unwrap_or(0);
        Ok(Dataset {
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `max(label) + 1`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the selected rows into contiguous buffers.
    pub fn gather(&self, indices: &[usize], features: &mut Vec<f32>, labels: &mut Vec<u32>) {
        features.clear();
        labels.clear();
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        let mut f = Vec::new();
        let mut l = Vec::new();
        self.gather(indices, &mut f, &mut l);
        Dataset {
            dim: self.dim,
            classes: self.classes,
            features: f,
            labels: l,
        }
    }

    /// Seeded shuffle, then the last `val_fraction` of rows become the
    /// validation set.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(DataError::Invalid("val_fraction must be in [0, 1)".into()));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = (self.len() as f64 * val_fraction).round() as usize;
        let (train, val) = idx.split_at(self.len() - n_val);
        Ok((self.subset(train), self.subset(val)))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let file = std::fs::File::open(path)?;
        if is_csv {
            Self::read_csv(io::BufReader::new(file))
        } else {
            Self::read_binary(io::BufReader::new(file))
        }
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, DataError> {
        let mut dim = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if labels.is_empty() && dim.is_none() && fields[0].parse::<f32>().is_err() {
                continue; // header
            }
            if fields.len() < 2 {
                return Err(DataError::Parse {
                    line: line_no,
                    msg: "need at least one feature and a label".into(),
                });
            }
            let d = fields.len() - 1;
            match dim {
                None => dim = Some(d),
                Some(prev) if prev != d => {
                    return Err(DataError::Parse {
                        line: line_no,
                        msg: format!("{d} features, earlier rows have {prev}"),
                    })
                }
                _ => {}
            }
            for f in &fields[..d] {
                features.push(f.parse::<f32>().map_err(|e| DataError::Parse {
                    line: line_no,
                    msg: format!("feature {f:?}: {e}"),
                })?);
            }
            labels.push(fields[d].parse::<u32>().map_err(|e| DataError::Parse {
                line: line_no,
                msg: format!("label {:?}: {e}", fields[d]),
            })?);
        }
        let dim = dim.ok_or(DataError::Empty)?;
        Self::new(dim, features, labels)
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self, DataError> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        if buf.len() < 4 {
            return Err(DataError::Empty);
        }
        let dim = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(DataError::Invalid("feature width must be positive".into()));
        }
        let row = 4 * (dim + 1);
        let body = &buf[4..];
        if body.len() % row != 0 {
            return Err(DataError::Invalid(format!(
                "{} body bytes is not a whole number of {row}-byte rows",
                body.len()
            )));
        }
        let mut features = Vec::with_capacity(body.len() / row * dim);
        let mut labels = Vec::with_capacity(body.len() / row);
        for r in body.chunks_exact(row) {
            let (f, y) = r.split_at(4 * dim);
            features.extend(
                f.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
            );
            labels.push(u32::from_le_bytes(y.try_into().unwrap()));
        }
        Self::new(dim, features, labels)
    }

    pub fn write_binary<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for i in 0..self.len() {
            for v in self.row(i) {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(&self.labels[i].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        for i in 0..self.len() {
            for v in self.row(i) {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", self.labels[i])?;
        }
        Ok(())
    }
}

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticBlobs {
    pub samples: usize,
    pub classes: usize,
    pub features: usize,
    /// Standard deviation of each cluster center coordinate.
    pub separation: f32,
    /// Standard deviation of samples around their center.
    pub spread: f32,
}

impl Default for SyntheticBlobs {
    fn default() -> Self {
        SyntheticBlobs {
            samples: 10_000,
            classes: 4,
            features: 32,
            separation: 0.5,
            spread: 1.0,
        }
    }
}

impl SyntheticBlobs {
    pub fn generate(&self, seed: u64) -> Result<Dataset, DataError> {
        if self.samples == 0 || self.classes == 0 || self.features == 0 {
            return Err(DataError::Invalid(
                "samples, classes and features must be positive".into(),
            ));
        }
        let spread = Normal::new(0.0f32, self.spread)
            .map_err(|e| DataError::Invalid(format!("spread: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<f32> = (0..self.classes * self.features)
            .map(|_| {
                let z: f32 = StandardNormal.sample(&mut rng);
                z * self.separation
            })
            .collect();
        let mut features = Vec::with_capacity(self.samples * self.features);
        let mut labels = Vec::with_capacity(self.samples);
        for _ in 0..self.samples {
            let y = rng.random_range(0..self.classes);
            let c = &centers[y * self.features..(y + 1) * self.features];
            features.extend(c.iter().map(|&m| m + spread.sample(&mut rng)));
            labels.push(y as u32);
        }
        Dataset::new(self.features, features, labels)
    }
}
