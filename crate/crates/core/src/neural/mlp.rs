//! Multilayer perceptron with tanh or relu hidden layers and a linear output.
//!
//! Every evaluation path, single or batched, goes through the same row kernel
//! ([`accumulate_rows`]), so a batch of `K` points returns bit-for-bit the
//! same numbers as `K` separate calls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::residual::ResidualVariant;
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Batches at least this large are split across rayon workers.
const PARALLEL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            t => Err(Error::Format(format!("unknown activation tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }

    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `h`.
    #[inline]
    pub(crate) fn slope(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine standardization of inputs and outputs:
/// `y = output_scale * net((z - input_mean) / input_scale) + output_mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(n_in: usize, n_out: usize) -> Self {
        Self {
            input_mean: vec![0.0; n_in],
            input_scale: vec![1.0; n_in],
            output_mean: vec![0.0; n_out],
            output_scale: vec![1.0; n_out],
        }
    }

    fn validate(&self, n_in: usize, n_out: usize) -> Result<()> {
        if self.input_mean.len() != n_in || self.input_scale.len() != n_in {
            return Err(Error::shape("input normalization", n_in, self.input_mean.len()));
        }
        if self.output_mean.len() != n_out || self.output_scale.len() != n_out {
            return Err(Error::shape("output normalization", n_out, self.output_mean.len()));
        }
        let scales = self.input_scale.iter().chain(&self.output_scale);
        if scales.clone().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("normalization scales must be positive".into()));
        }
        let means = self.input_mean.iter().chain(&self.output_mean);
        if means.clone().any(|m| !m.is_finite()) {
            return Err(Error::Config("normalization means must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out x n_in`, row-major.
    pub w: Vec<f64>,
    /// `n_in x n_out`, row-major (the transpose of `w`).
    pub wt: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn new(n_in: usize, n_out: usize, w: Vec<f64>, b: Vec<f64>) -> Self {
        let mut layer = Self {
            n_in,
            n_out,
            w,
            wt: vec![0.0; n_in * n_out],
            b,
        };
        layer.refresh_transpose();
        layer
    }

    pub fn refresh_transpose(&mut self) {
        for o in 0..self.n_out {
            for i in 0..self.n_in {
                self.wt[i * self.n_out + o] = self.w[o * self.n_in + i];
            }
        }
    }
}

/// `y[r] += sum_i x[r][i] * m[i]` where `x` is `rows x inp` and `m` is
/// `inp x out`, both row-major; summation runs over `i` in increasing order.
#[inline]
fn accumulate_rows(x: &[f64], inp: usize, m: &[f64], out: usize, y: &mut [f64]) {
    let rows = y.len() / out;
    for i in 0..inp {
        let mrow = &m[i * out..(i + 1) * out];
        for r in 0..rows {
            let a = x[r * inp + i];
            let yr = &mut y[r * out..(r + 1) * out];
            for (yv, mv) in yr.iter_mut().zip(mrow) {
                *yv += a * mv;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layers: Vec<Layer>,
    activation: Activation,
    variant: ResidualVariant,
    norm: Normalization,
}

impl MlpModel {
    /// Random network with uniform `+-1/sqrt(fan_in)` initialization.
    pub fn new(
        sizes: &[usize],
        activation: Activation,
        variant: ResidualVariant,
        seed: u64,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|p| {
                let bound = 1.0 / (p[0] as f64).sqrt();
                let w = (0..p[0] * p[1]).map(|_| rng.random_range(-bound..bound)).collect();
                let b = (0..p[1]).map(|_| rng.random_range(-bound..bound)).collect();
                Layer::new(p[0], p[1], w, b)
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            variant,
            norm: Normalization::identity(sizes[0], sizes[sizes.len() - 1]),
        })
    }

    /// Network from explicit `(W, b)` pairs, `W` being `out x in`.
    pub fn from_layers(
        layers: Vec<(Matrix, Vector)>,
        activation: Activation,
        variant: ResidualVariant,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut built = Vec::with_capacity(layers.len());
        for (idx, (w, b)) in layers.into_iter().enumerate() {
            if w.nrows() != b.len() {
                return Err(Error::shape("layer bias", w.nrows(), b.len()));
            }
            if let Some(prev) = built.last() {
                let prev: &Layer = prev;
                if prev.n_out != w.ncols() {
                    return Err(Error::Config(format!(
                        "layer {idx} expects {} inputs but previous layer has {} outputs",
                        w.ncols(),
                        prev.n_out
                    )));
                }
            }
            let row_major: Vec<f64> = w.transpose().as_slice().to_vec();
            built.push(Layer::new(w.ncols(), w.nrows(), row_major, b.as_slice().to_vec()));
        }
        let n_in = built[0].n_in;
        let n_out = built[built.len() - 1].n_out;
        Ok(Self {
            layers: built,
            activation,
            variant,
            norm: Normalization::identity(n_in, n_out),
        })
    }

    pub(crate) fn from_raw(
        layers: Vec<Layer>,
        activation: Activation,
        variant: ResidualVariant,
        norm: Normalization,
    ) -> Result<Self> {
        let model = Self {
            layers,
            activation,
            variant,
            norm,
        };
        model.norm.validate(model.input_dim(), model.output_dim())?;
        Ok(model)
    }

    pub fn with_normalization(mut self, norm: Normalization) -> Result<Self> {
        norm.validate(self.input_dim(), self.output_dim())?;
        self.norm = norm;
        Ok(self)
    }

    /// Zero the last layer so the network outputs exactly zero everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.w.iter_mut().for_each(|v| *v = 0.0);
        last.b.iter_mut().for_each(|v| *v = 0.0);
        last.refresh_transpose();
        self.norm.output_mean.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn variant(&self) -> ResidualVariant {
        self.variant
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// `N-<hidden layers>-<width of first hidden layer>`.
    pub fn arch_name(&self) -> String {
        match self.layers.len() {
            1 => "N-0-0".to_string(),
            n => format!("N-{}-{}", n - 1, self.layers[0].n_out),
        }
    }

    /// `(W, b)` per layer, `W` being `out x in`.
    pub fn weights(&self) -> Vec<(Matrix, Vector)> {
        self.layers
            .iter()
            .map(|l| {
                (
                    Matrix::from_row_slice(l.n_out, l.n_in, &l.w),
                    Vector::from_column_slice(&l.b),
                )
            })
            .collect()
    }

    pub(crate) fn params_flat(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub(crate) fn set_params_flat(&mut self, p: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[at..at + nb]);
            at += nb;
            l.refresh_transpose();
        }
    }

    pub(crate) fn normalize_inputs(&self, z: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        z.iter()
            .enumerate()
            .map(|(idx, v)| {
                let i = idx % n;
                (v - self.norm.input_mean[i]) / self.norm.input_scale[i]
            })
            .collect()
    }

    /// Layer-by-layer activations for `rows` normalized inputs; entry 0 is the
    /// input itself, the last entry the (normalized) linear output.
    pub(crate) fn trace(&self, zn: Vec<f64>, rows: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(zn);
        let last = self.layers.len() - 1;
        for (idx, l) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(rows * l.n_out);
            for _ in 0..rows {
                y.extend_from_slice(&l.b);
            }
            accumulate_rows(&acts[idx], l.n_in, &l.wt, l.n_out, &mut y);
            if idx < last {
                y.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            acts.push(y);
        }
        acts
    }

    fn denormalize_outputs(&self, yn: &mut [f64]) {
        let n = self.output_dim();
        for (idx, v) in yn.iter_mut().enumerate() {
            let o = idx % n;
            *v = *v * self.norm.output_scale[o] + self.norm.output_mean[o];
        }
    }

    fn values_serial(&self, z: &[f64], rows: usize) -> Vec<f64> {
        let mut acts = self.trace(self.normalize_inputs(z), rows);
        let mut y = acts.pop().expect("output layer");
        self.denormalize_outputs(&mut y);
        y
    }

    /// Values and Jacobians (`rows x out x in`, row-major) by reverse mode.
    fn value_jacobian_serial(&self, z: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
        let n_out = self.output_dim();
        let n_in = self.input_dim();
        let mut acts = self.trace(self.normalize_inputs(z), rows);

        // Seed: d y / d y_n = diag(output_scale), one block of n_out rows per point.
        let mut g = vec![0.0; rows * n_out * n_out];
        for p in 0..rows {
            for o in 0..n_out {
                g[(p * n_out + o) * n_out + o] = self.norm.output_scale[o];
            }
        }
        for idx in (0..self.layers.len()).rev() {
            let l = &self.layers[idx];
            let mut next = vec![0.0; rows * n_out * l.n_in];
            accumulate_rows(&g, l.n_out, &l.w, l.n_in, &mut next);
            if idx > 0 {
                let h = &acts[idx];
                for p in 0..rows {
                    let hp = &h[p * l.n_in..(p + 1) * l.n_in];
                    for o in 0..n_out {
                        let row = &mut next[(p * n_out + o) * l.n_in..(p * n_out + o + 1) * l.n_in];
                        for (gv, hv) in row.iter_mut().zip(hp) {
                            *gv *= self.activation.slope(*hv);
                        }
                    }
                }
            }
            g = next;
        }
        for (idx, v) in g.iter_mut().enumerate() {
            *v /= self.norm.input_scale[idx % n_in];
        }
        let mut y = acts.pop().expect("output layer");
        self.denormalize_outputs(&mut y);
        (y, g)
    }

    /// Batched values over `rows` inputs stored row-major in `z`.
    pub fn forward_rows(&self, z: &[f64], rows: usize) -> Vec<f64> {
        let n_in = self.input_dim();
        debug_assert_eq!(z.len(), rows * n_in);
        if rows < PARALLEL_BATCH {
            return self.values_serial(z, rows);
        }
        let chunk = PARALLEL_BATCH / 2;
        z.par_chunks(chunk * n_in)
            .flat_map_iter(|c| self.values_serial(c, c.len() / n_in))
            .collect()
    }

    /// Batched values and Jacobians; the Jacobian block of point `p` is
    /// `jac[p * out * in..(p + 1) * out * in]`, row-major `out x in`.
    pub fn value_jacobian_rows(&self, z: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
        let n_in = self.input_dim();
        debug_assert_eq!(z.len(), rows * n_in);
        if rows < PARALLEL_BATCH {
            return self.value_jacobian_serial(z, rows);
        }
        let chunk = PARALLEL_BATCH / 2;
        let parts: Vec<_> = z
            .par_chunks(chunk * n_in)
            .map(|c| self.value_jacobian_serial(c, c.len() / n_in))
            .collect();
        let mut y = Vec::new();
        let mut j = Vec::new();
        for (py, pj) in parts {
            y.extend(py);
            j.extend(pj);
        }
        (y, j)
    }

    /// Unchecked single-point forward pass; see [`mlp_forward`].
    pub fn forward(&self, z: &Vector) -> Vector {
        Vector::from_vec(self.values_serial(z.as_slice(), 1))
    }

    /// Unchecked single-point Jacobian (`out x in`); see [`mlp_jacobian`].
    pub fn jacobian(&self, z: &Vector) -> Matrix {
        let (_, j) = self.value_jacobian_serial(z.as_slice(), 1);
        Matrix::from_row_slice(self.output_dim(), self.input_dim(), &j)
    }

    /// Single-point value and Jacobian from one forward pass.
    pub fn value_and_jacobian(&self, z: &Vector) -> (Vector, Matrix) {
        let (y, j) = self.value_jacobian_serial(z.as_slice(), 1);
        (
            Vector::from_vec(y),
            Matrix::from_row_slice(self.output_dim(), self.input_dim(), &j),
        )
    }

    /// Per-output Hessians by forward second-order propagation.
    pub fn hessian(&self, z: &Vector) -> Result<Vec<Matrix>> {
        if self.activation == Activation::Relu && self.layers.len() > 1 {
            return Err(Error::Unsupported(
                "Hessians of relu networks are not defined".into(),
            ));
        }
        self.check_input(z)?;
        let n_in = self.input_dim();
        let zn = self.normalize_inputs(z.as_slice());

        // h, dh/dz and d2h/dz2 of the current layer's input.
        let mut h: Vec<f64> = zn;
        let mut dh = Matrix::from_diagonal(&Vector::from_iterator(
            n_in,
            self.norm.input_scale.iter().map(|s| 1.0 / s),
        ));
        let mut d2h: Vec<Matrix> = vec![Matrix::zeros(n_in, n_in); n_in];
        let last = self.layers.len() - 1;
        for (idx, l) in self.layers.iter().enumerate() {
            let w = Matrix::from_row_slice(l.n_out, l.n_in, &l.w);
            let mut a = Vector::from_column_slice(&l.b);
            a.gemv(1.0, &w, &Vector::from_column_slice(&h), 1.0);
            let da = &w * &dh;
            let mut d2a = Vec::with_capacity(l.n_out);
            for o in 0..l.n_out {
                let mut acc = Matrix::zeros(n_in, n_in);
                for (k, hk) in d2h.iter().enumerate() {
                    let wk = w[(o, k)];
                    if wk != 0.0 {
                        acc += hk * wk;
                    }
                }
                d2a.push(acc);
            }
            if idx == last {
                return Ok(d2a
                    .into_iter()
                    .enumerate()
                    .map(|(o, m)| {
                        let s = self.norm.output_scale[o];
                        let m = m * s;
                        (&m + m.transpose()) * 0.5
                    })
                    .collect());
            }
            let t: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
            let mut next_dh = da.clone();
            let mut next_d2h = Vec::with_capacity(l.n_out);
            for o in 0..l.n_out {
                let s1 = 1.0 - t[o] * t[o];
                let s2 = -2.0 * t[o] * s1;
                next_dh.row_mut(o).scale_mut(s1);
                let g = da.row(o);
                let mut m = &d2a[o] * s1;
                m.ger(s2, &g.transpose(), &g.transpose(), 1.0);
                next_d2h.push(m);
            }
            h = t;
            dh = next_dh;
            d2h = next_d2h;
        }
        unreachable!("loop returns at the output layer")
    }

    fn check_input(&self, z: &Vector) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), z.len()));
        }
        Ok(())
    }
}

/// Checked forward pass.
pub fn mlp_forward(model: &MlpModel, z: &Vector) -> Result<Vector> {
    model.check_input(z)?;
    Ok(model.forward(z))
}

/// Checked Jacobian, `out x in`.
pub fn mlp_jacobian(model: &MlpModel, z: &Vector) -> Result<Matrix> {
    model.check_input(z)?;
    Ok(model.jacobian(z))
}

/// Per-output Hessian stack, each `in x in` and symmetric.
pub fn mlp_hessian(model: &MlpModel, z: &Vector) -> Result<Vec<Matrix>> {
    model.hessian(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrder {
    Value,
    /// Values and Jacobians.
    Jacobian,
    /// Values, Jacobians and Hessians.
    Hessian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub values: Vec<Vector>,
    pub jacobians: Option<Vec<Matrix>>,
    pub hessians: Option<Vec<Vec<Matrix>>>,
}

/// Evaluate a batch of feature vectors in one call.
pub fn mlp_batched_eval(model: &MlpModel, zs: &[Vector], order: BatchOrder) -> Result<BatchResult> {
    let n_in = model.input_dim();
    let n_out = model.output_dim();
    if let Some(bad) = zs.iter().find(|z| z.len() != n_in) {
        return Err(Error::shape("batched network input", n_in, bad.len()));
    }
    let flat: Vec<f64> = zs.iter().flat_map(|z| z.iter().copied()).collect();
    let rows = zs.len();
    let split_values = |y: Vec<f64>| -> Vec<Vector> {
        y.chunks(n_out.max(1))
            .take(rows)
            .map(Vector::from_column_slice)
            .collect()
    };
    match order {
        BatchOrder::Value => Ok(BatchResult {
            values: split_values(model.forward_rows(&flat, rows)),
            jacobians: None,
            hessians: None,
        }),
        BatchOrder::Jacobian | BatchOrder::Hessian => {
            let (y, j) = model.value_jacobian_rows(&flat, rows);
            let jacobians = j
                .chunks(n_out * n_in)
                .take(rows)
                .map(|c| Matrix::from_row_slice(n_out, n_in, c))
                .collect();
            let hessians = if order == BatchOrder::Hessian {
                Some(zs.iter().map(|z| model.hessian(z)).collect::<Result<Vec<_>>>()?)
            } else {
                None
            };
            Ok(BatchResult {
                values: split_values(y),
                jacobians: Some(jacobians),
                hessians,
            })
        }
    }
}
