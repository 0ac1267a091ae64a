//! Feature/label pairs for residual training, with a train/validation split.
//!
//! File layout (little-endian):
//!
//! ```text
//! b"RTND" | u32 version | u8 variant tag | u32 feature dim | u32 label dim | u64 count
//! count * feature_dim f64 (row-major) | count * label_dim f64 (row-major)
//! ```
//!
//! A JSON sidecar (`<file>.json`) mirrors the header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::residual::ResidualVariant;
use crate::error::{Error, Result};
use crate::Vector;

const MAGIC: &[u8; 4] = b"RTND";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDataset {
    pub variant: ResidualVariant,
    pub feature_dim: usize,
    pub label_dim: usize,
    /// `len x feature_dim`, row-major.
    pub inputs: Vec<f64>,
    /// `len x label_dim`, row-major.
    pub labels: Vec<f64>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub variant: ResidualVariant,
    pub feature_dim: usize,
    pub label_dim: usize,
    pub count: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl ResidualDataset {
    /// Dataset with every sample in the training split.
    pub fn new(
        variant: ResidualVariant,
        feature_dim: usize,
        label_dim: usize,
        inputs: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        if feature_dim == 0 || label_dim == 0 {
            return Err(Error::Config("dataset dimensions must be positive".into()));
        }
        if inputs.len() % feature_dim != 0 || labels.len() % label_dim != 0 {
            return Err(Error::Config("ragged dataset rows".into()));
        }
        let n = inputs.len() / feature_dim;
        if labels.len() / label_dim != n {
            return Err(Error::shape("dataset labels", n, labels.len() / label_dim));
        }
        Ok(Self {
            variant,
            feature_dim,
            label_dim,
            inputs,
            labels,
            train_idx: (0..n).collect(),
            val_idx: Vec::new(),
        })
    }

    pub fn from_rows(variant: ResidualVariant, inputs: &[Vector], labels: &[Vector]) -> Result<Self> {
        let fd = inputs.first().map_or(variant.feature_dim(), |v| v.len());
        let ld = labels.first().map_or(variant.output_dim(), |v| v.len());
        if inputs.len() != labels.len() {
            return Err(Error::shape("dataset labels", inputs.len(), labels.len()));
        }
        if inputs.iter().any(|v| v.len() != fd) || labels.iter().any(|v| v.len() != ld) {
            return Err(Error::Config("ragged dataset rows".into()));
        }
        Self::new(
            variant,
            fd,
            ld,
            inputs.iter().flat_map(|v| v.iter().copied()).collect(),
            labels.iter().flat_map(|v| v.iter().copied()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i * self.label_dim..(i + 1) * self.label_dim]
    }

    /// Seeded random split; `ceil(fraction * len)` samples go to validation.
    pub fn with_split(mut self, validation_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {validation_fraction} outside [0, 1)"
            )));
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = (validation_fraction * n as f64).ceil() as usize;
        self.val_idx = idx[..n_val].to_vec();
        self.train_idx = idx[n_val..].to_vec();
        Ok(self)
    }

    /// Explicit split; the two index sets must be disjoint and cover all rows.
    pub fn with_explicit_split(mut self, train: Vec<usize>, val: Vec<usize>) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&val) {
            if i >= n || seen[i] {
                return Err(Error::Config("split indices must be disjoint and in range".into()));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("split must cover every sample".into()));
        }
        self.train_idx = train;
        self.val_idx = val;
        Ok(self)
    }

    pub fn append(&mut self, other: &ResidualDataset) -> Result<()> {
        if other.variant != self.variant
            || other.feature_dim != self.feature_dim
            || other.label_dim != self.label_dim
        {
            return Err(Error::Config("cannot merge datasets of different layouts".into()));
        }
        let offset = self.len();
        self.inputs.extend_from_slice(&other.inputs);
        self.labels.extend_from_slice(&other.labels);
        self.train_idx.extend(other.train_idx.iter().map(|i| i + offset));
        self.val_idx.extend(other.val_idx.iter().map(|i| i + offset));
        Ok(())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format: "residual-dataset".into(),
            version: VERSION,
            variant: self.variant,
            feature_dim: self.feature_dim,
            label_dim: self.label_dim,
            count: self.len(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.variant.tag()])?;
        w.write_all(&(self.feature_dim as u32).to_le_bytes())?;
        w.write_all(&(self.label_dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in self.inputs.iter().chain(&self.labels) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = serde_json::to_string_pretty(&self.header())
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(sidecar_path(path), sidecar + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("{} is not a residual dataset", path.display())));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let variant = ResidualVariant::from_tag(tag[0])?;
        let fd = read_u32(&mut r)? as usize;
        let ld = read_u32(&mut r)? as usize;
        let mut count = [0u8; 8];
        r.read_exact(&mut count)?;
        let n = u64::from_le_bytes(count) as usize;
        let inputs = read_f64s(&mut r, n * fd)?;
        let labels = read_f64s(&mut r, n * ld)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after dataset body".into()));
        }
        Self::new(variant, fd, ld, inputs, labels)
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file ends before the declared data".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> ResidualDataset {
        let inputs = (0..n * 3).map(|i| i as f64 * 0.5).collect();
        let labels = (0..n * 3).map(|i| -(i as f64)).collect();
        ResidualDataset::new(ResidualVariant::A, 3, 3, inputs, labels).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let d = sample(17);
        d.write(&path).unwrap();
        let back = ResidualDataset::read(&path).unwrap();
        assert_eq!(back.inputs, d.inputs);
        assert_eq!(back.labels, d.labels);
        assert_eq!(back.variant, ResidualVariant::A);
        let header: DatasetHeader =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(header.count, 17);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        sample(4).write(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(ResidualDataset::read(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"nope").unwrap();
        assert!(ResidualDataset::read(&path).is_err());
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let d = sample(95).with_split(0.1, 3).unwrap();
        assert_eq!(d.val_idx.len(), 10);
        let mut all: Vec<usize> = d.train_idx.iter().chain(&d.val_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..95).collect::<Vec<_>>());
        assert_eq!(d.clone().with_split(0.1, 3).unwrap().val_idx, d.val_idx);
        assert!(sample(3).with_explicit_split(vec![0, 1], vec![1, 2]).is_err());
        assert!(sample(3).with_explicit_split(vec![0], vec![1]).is_err());
    }

    #[test]
    fn unequal_lengths_rejected() {
        assert!(ResidualDataset::new(ResidualVariant::A, 3, 3, vec![0.0; 6], vec![0.0; 3]).is_err());
        assert!(ResidualDataset::new(ResidualVariant::A, 3, 3, vec![0.0; 5], vec![0.0; 3]).is_err());
    }
}
