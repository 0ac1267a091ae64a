//! Model files.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"RTNM" | u32 version | u8 activation | u8 variant | u32 feature layout
//! u32 L (weight layers) | (L + 1) * u32 layer sizes
//! input mean, input scale, output mean, output scale (f64 each)
//! per layer: W (out x in, row-major) then b
//! ```
//!
//! The JSON sidecar (`<file>.json`) mirrors the metadata and may carry extra
//! fields such as training settings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{read_f64s, read_u32, sidecar_path};
use super::mlp::{Activation, Layer, MlpModel, Normalization};
use crate::dynamics::residual::{ResidualVariant, FEATURE_LAYOUT_VERSION};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RTNM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format: String,
    pub version: u32,
    pub arch: String,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub variant: ResidualVariant,
    pub feature_layout_version: u32,
    pub param_count: usize,
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl ModelSidecar {
    pub fn describe(model: &MlpModel, extra: serde_json::Value) -> Self {
        Self {
            format: "mlp-model".into(),
            version: VERSION,
            arch: model.arch_name(),
            layer_sizes: model.layer_sizes(),
            activation: model.activation(),
            variant: model.variant(),
            feature_layout_version: FEATURE_LAYOUT_VERSION,
            param_count: model.param_count(),
            normalization: model.normalization().clone(),
            extra,
        }
    }
}

pub fn write_model(model: &MlpModel, path: &Path, extra: serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[model.activation().tag(), model.variant().tag()])?;
    w.write_all(&FEATURE_LAYOUT_VERSION.to_le_bytes())?;
    let sizes = model.layer_sizes();
    w.write_all(&((sizes.len() - 1) as u32).to_le_bytes())?;
    for s in &sizes {
        w.write_all(&(*s as u32).to_le_bytes())?;
    }
    let n = model.normalization();
    let norm_values = n
        .input_mean
        .iter()
        .chain(&n.input_scale)
        .chain(&n.output_mean)
        .chain(&n.output_scale);
    for v in norm_values {
        w.write_all(&v.to_le_bytes())?;
    }
    for l in &model.layers {
        for v in l.w.iter().chain(&l.b) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let sidecar = serde_json::to_string_pretty(&ModelSidecar::describe(model, extra))
        .map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), sidecar + "\n")?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<MlpModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for a model header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{} is not a model file", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags)?;
    let activation = Activation::from_tag(tags[0])?;
    let variant = ResidualVariant::from_tag(tags[1])?;
    let layout = read_u32(&mut r)?;
    if layout != FEATURE_LAYOUT_VERSION {
        return Err(Error::Config(format!(
            "model uses feature layout {layout}, this build expects {FEATURE_LAYOUT_VERSION}"
        )));
    }
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_layers}")));
    }
    let sizes = (0..=n_layers)
        .map(|_| read_u32(&mut r).map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    if sizes.iter().any(|s| *s == 0) {
        return Err(Error::Format("zero layer width".into()));
    }
    let (n_in, n_out) = (sizes[0], sizes[n_layers]);
    let norm = Normalization {
        input_mean: read_f64s(&mut r, n_in)?,
        input_scale: read_f64s(&mut r, n_in)?,
        output_mean: read_f64s(&mut r, n_out)?,
        output_scale: read_f64s(&mut r, n_out)?,
    };
    let mut layers = Vec::with_capacity(n_layers);
    for p in sizes.windows(2) {
        let w = read_f64s(&mut r, p[0] * p[1])?;
        let b = read_f64s(&mut r, p[1])?;
        let mut layer = Layer {
            n_in: p[0],
            n_out: p[1],
            w,
            wt: vec![0.0; p[0] * p[1]],
            b,
        };
        layer.refresh_transpose();
        layers.push(layer);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format("trailing bytes after model weights".into()));
    }
    MlpModel::from_raw(layers, activation, variant, norm)
}

pub fn read_sidecar(path: &Path) -> Result<ModelSidecar> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
}
