//! Minibatch Adam training with early stopping on a validation split.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::dataset::ResidualDataset;
use super::mlp::{Activation, MlpModel, Normalization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// `<hidden layers>x<width>`, e.g. `3x32`, or a comma list of widths.
    pub arch: String,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        crate::config::embedded(crate::config::TRAIN, "train.toml")
    }
}

impl TrainConfig {
    pub fn hidden_widths(&self) -> Result<Vec<usize>> {
        parse_arch(&self.arch)
    }

    pub fn validate(&self) -> Result<()> {
        self.hidden_widths()?;
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "learning_rate, batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `3x32` -> `[32, 32, 32]`; `32,16` -> `[32, 16]`.
pub fn parse_arch(arch: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse architecture {arch:?}"));
    let widths: Vec<usize> = if let Some((l, w)) = arch.split_once(['x', 'X']) {
        let l: usize = l.trim().parse().map_err(|_| bad())?;
        let w: usize = w.trim().parse().map_err(|_| bad())?;
        vec![w; l]
    } else {
        arch.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if widths.is_empty() || widths.contains(&0) {
        return Err(bad());
    }
    Ok(widths)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: MlpModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
    pub seed: u64,
}

impl TrainReport {
    /// `epoch,train_mse,val_mse,wall_ms`.
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,train_mse,val_mse,wall_ms")?;
        for e in &self.log {
            writeln!(f, "{},{:e},{:e},{:.3}", e.epoch, e.train_mse, e.val_mse, e.wall_ms)?;
        }
        f.flush()?;
        Ok(())
    }
}

fn mean_std(data: &[f64], dim: usize, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = idx.len() as f64;
    let mut mean = vec![0.0; dim];
    for &i in idx {
        for d in 0..dim {
            mean[d] += data[i * dim + d];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for &i in idx {
        for d in 0..dim {
            let e = data[i * dim + d] - mean[d];
            var[d] += e * e;
        }
    }
    let scale = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < 1e-8 {
                1.0
            } else {
                s
            }
        })
        .collect();
    (mean, scale)
}

/// Mean squared error in label units over the rows in `idx`.
pub fn dataset_mse(model: &MlpModel, ds: &ResidualDataset, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let z: Vec<f64> = idx.iter().flat_map(|&i| ds.input(i).iter().copied()).collect();
    let y = model.forward_rows(&z, idx.len());
    let mut acc = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        for (d, t) in ds.label(i).iter().enumerate() {
            let e = y[r * ds.label_dim + d] - t;
            acc += e * e;
        }
    }
    acc / (idx.len() * ds.label_dim) as f64
}

/// Loss and gradient of the normalized-space MSE over one minibatch,
/// laid out like `MlpModel::params_flat`.
fn minibatch_gradient(model: &MlpModel, zn: &[f64], yn: &[f64], rows: usize, grad: &mut [f64]) -> f64 {
    let n_out = model.output_dim();
    let mut acts = model.trace(zn.to_vec(), rows);
    let out = acts.pop().expect("output layer");
    let denom = (rows * n_out) as f64;
    let mut loss = 0.0;
    let mut delta: Vec<f64> = out
        .iter()
        .zip(yn)
        .map(|(o, t)| {
            let e = o - t;
            loss += e * e;
            2.0 * e / denom
        })
        .collect();

    let mut offsets = Vec::with_capacity(model.layers.len());
    let mut at = 0;
    for l in &model.layers {
        offsets.push(at);
        at += l.w.len() + l.b.len();
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    for idx in (0..model.layers.len()).rev() {
        let l = &model.layers[idx];
        let h = &acts[idx];
        let (gw, gb) = grad[offsets[idx]..offsets[idx] + l.w.len() + l.b.len()].split_at_mut(l.w.len());
        for p in 0..rows {
            let hp = &h[p * l.n_in..(p + 1) * l.n_in];
            for o in 0..l.n_out {
                let d = delta[p * l.n_out + o];
                gb[o] += d;
                for (g, hv) in gw[o * l.n_in..(o + 1) * l.n_in].iter_mut().zip(hp) {
                    *g += d * hv;
                }
            }
        }
        if idx > 0 {
            let mut prev = vec![0.0; rows * l.n_in];
            for p in 0..rows {
                for o in 0..l.n_out {
                    let d = delta[p * l.n_out + o];
                    for (pv, wv) in prev[p * l.n_in..(p + 1) * l.n_in]
                        .iter_mut()
                        .zip(&l.w[o * l.n_in..(o + 1) * l.n_in])
                    {
                        *pv += d * wv;
                    }
                }
            }
            for (pv, hv) in prev.iter_mut().zip(h.iter()) {
                *pv *= model.activation().slope(*hv);
            }
            delta = prev;
        }
    }
    loss / denom
}

/// Train a network on `ds` using its train/validation split.
///
/// Inputs and labels are standardized with statistics of the training rows;
/// the constants are stored in the returned model. Returns the parameters
/// with the lowest validation MSE.
pub fn train_residual(ds: &ResidualDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.train_idx.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if ds.val_idx.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let (fd, ld) = (ds.feature_dim, ds.label_dim);
    if fd != ds.variant.feature_dim() || ld != ds.variant.output_dim() {
        return Err(Error::Config(format!(
            "dataset layout {fd}->{ld} does not match variant {}",
            ds.variant
        )));
    }
    let (in_mean, in_scale) = mean_std(&ds.inputs, fd, &ds.train_idx);
    let (out_mean, out_scale) = mean_std(&ds.labels, ld, &ds.train_idx);
    let norm = Normalization {
        input_mean: in_mean,
        input_scale: in_scale,
        output_mean: out_mean,
        output_scale: out_scale,
    };

    let mut sizes = vec![fd];
    sizes.extend(cfg.hidden_widths()?);
    sizes.push(ld);
    let mut model = MlpModel::new(&sizes, cfg.activation, ds.variant, cfg.seed)?.with_normalization(norm.clone())?;

    let zn = model.normalize_inputs(&ds.inputs);
    let yn: Vec<f64> = ds
        .labels
        .iter()
        .enumerate()
        .map(|(k, y)| (y - norm.output_mean[k % ld]) / norm.output_scale[k % ld])
        .collect();

    let mut params = model.params_flat();
    let mut grad = vec![0.0; params.len()];
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order = ds.train_idx.clone();
    let mut zb = Vec::with_capacity(cfg.batch_size * fd);
    let mut yb = Vec::with_capacity(cfg.batch_size * ld);

    let start = Instant::now();
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            zb.clear();
            yb.clear();
            for &i in batch {
                zb.extend_from_slice(&zn[i * fd..(i + 1) * fd]);
                yb.extend_from_slice(&yn[i * ld..(i + 1) * ld]);
            }
            let loss = minibatch_gradient(&model, &zb, &yb, batch.len(), &mut grad);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss in epoch {epoch}; try a smaller learning rate"
                )));
            }
            adam.step(&mut params, &grad);
            model.set_params_flat(&params);
        }
        let train_mse = dataset_mse(&model, ds, &ds.train_idx);
        let val_mse = dataset_mse(&model, ds, &ds.val_idx);
        if !(train_mse.is_finite() && val_mse.is_finite()) {
            return Err(Error::Training(format!("non-finite MSE after epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            train_mse,
            val_mse,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("epoch {epoch}: train {train_mse:.3e} val {val_mse:.3e}");
        if val_mse < best.0 {
            best = (val_mse, epoch, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    model.set_params_flat(&best.2);
    Ok(TrainReport {
        model,
        log,
        best_epoch: best.1,
        best_val_mse: best.0,
        stopped_early,
        seed: cfg.seed,
    })
}
