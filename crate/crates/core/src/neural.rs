//! Fully connected networks with hand-written reverse accumulation and plain SGD.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::Sampler;
use crate::error::{invalid, Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA * z
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (z.exp() - 1.0)
                }
            }
            Activation::Sigmoid => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z` given the output `a = apply(z)`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA
                } else {
                    a + SELU_LAMBDA * SELU_ALPHA
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

/// Affine map `x ↦ act(W x + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.w.nrows()
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Layer shapes and activations of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub hidden_act: Activation,
    pub output_act: Activation,
}

impl Architecture {
    pub fn generator(hidden: Vec<usize>) -> Self {
        Self {
            hidden,
            hidden_act: Activation::Selu,
            output_act: Activation::Linear,
        }
    }

    pub fn discriminator(hidden: Vec<usize>) -> Self {
        Self {
            hidden,
            hidden_act: Activation::Selu,
            output_act: Activation::Sigmoid,
        }
    }

    pub fn sizes(&self, d_in: usize, d_out: usize) -> Vec<usize> {
        let mut s = vec![d_in];
        s.extend(&self.hidden);
        s.push(d_out);
        s
    }
}

/// Network parameters. Every mutation assigns a new identity so caches from
/// an earlier forward pass are detected as stale.
#[derive(Debug, Clone)]
pub struct MlpParams {
    layers: Vec<Layer>,
    id: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid!("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.b.len() != l.fan_out() {
                return Err(invalid!("layer {k}: bias length {} != {} outputs", l.b.len(), l.fan_out()));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(invalid!("layer {k}: non-finite parameter"));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(invalid!(
                    "layer {k} has {} outputs but layer {} expects {} inputs",
                    pair[0].fan_out(),
                    k + 1,
                    pair[1].fan_in()
                ));
            }
        }
        Ok(Self { layers, id: fresh_id() })
    }

    /// LeCun-normal weights (std `1/√fan_in`) drawn layer by layer in
    /// row-major order; zero biases.
    pub fn lecun_init(arch: &Architecture, d_in: usize, d_out: usize, rng: &mut Sampler) -> Result<Self> {
        let sizes = arch.sizes(d_in, d_out);
        if sizes.iter().any(|&s| s == 0) {
            return Err(invalid!("layer sizes must be positive: {sizes:?}"));
        }
        let depth = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, io)| {
                let std = 1.0 / (io[0] as f64).sqrt();
                Layer {
                    w: Array2::from_shape_simple_fn((io[1], io[0]), || std * rng.standard_normal()),
                    b: Array1::zeros(io[1]),
                    act: if k + 1 == depth { arch.output_act } else { arch.hidden_act },
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(invalid!("expected {} parameters, got {}", self.num_params(), flat.len()));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        self.id = fresh_id();
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if batch.ncols() != self.input_dim() {
            return Err(invalid!("batch has {} columns, network expects {}", batch.ncols(), self.input_dim()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(batch.to_owned());
        for l in &self.layers {
            let x = acts.last().unwrap();
            let mut z = x.dot(&l.w.t());
            z += &l.b;
            let a = z.mapv(|v| l.act.apply(v));
            pre.push(z);
            acts.push(a);
        }
        let out = acts.last().unwrap().clone();
        Ok((
            out,
            ForwardCache {
                params_id: self.id,
                acts,
                pre,
            },
        ))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if batch.ncols() != self.input_dim() {
            return Err(invalid!("batch has {} columns, network expects {}", batch.ncols(), self.input_dim()));
        }
        let mut x = batch.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.w.t());
            z += &l.b;
            z.mapv_inplace(|v| l.act.apply(v));
            x = z;
        }
        Ok(x)
    }

    fn check_cache(&self, cache: &ForwardCache, upstream: &ArrayView2<'_, f64>) -> Result<()> {
        if cache.params_id != self.id || cache.pre.len() != self.layers.len() {
            return Err(Error::Contract("forward cache does not belong to these parameters".into()));
        }
        let out = cache.acts.last().unwrap();
        if upstream.dim() != out.dim() {
            return Err(Error::Contract(format!(
                "upstream gradient shape {:?} does not match output shape {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        Ok(())
    }

    /// Reverse pass: parameter gradients and the gradient with respect to the input batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        self.check_cache(cache, &upstream)?;
        let (layers, input) = self.reverse(cache, upstream, true, false);
        Ok(Gradients { layers, input })
    }

    /// As [`backward`](Self::backward) with `upstream` taken with respect to the
    /// output layer's pre-activation rather than its output.
    pub fn backward_from_logits(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        self.check_cache(cache, &upstream)?;
        let (layers, input) = self.reverse(cache, upstream, true, true);
        Ok(Gradients { layers, input })
    }

    /// Reverse pass that only propagates to the input.
    pub fn backward_input(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_cache(cache, &upstream)?;
        Ok(self.reverse(cache, upstream, false, false).1)
    }

    pub fn backward_input_from_logits(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_cache(cache, &upstream)?;
        Ok(self.reverse(cache, upstream, false, true).1)
    }

    fn reverse(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<'_, f64>,
        with_params: bool,
        from_logits: bool,
    ) -> (Vec<LayerGrad>, Array2<f64>) {
        let mut grads = Vec::with_capacity(if with_params { self.layers.len() } else { 0 });
        let mut delta = upstream.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate().rev() {
            if !(from_logits && k == last) {
                let z = &cache.pre[k];
                let a = &cache.acts[k + 1];
                ndarray::Zip::from(&mut delta)
                    .and(z)
                    .and(a)
                    .for_each(|g, &z, &a| *g *= l.act.derivative(z, a));
            }
            if with_params {
                grads.push(LayerGrad {
                    w: delta.t().dot(&cache.acts[k]),
                    b: delta.sum_axis(Axis(0)),
                });
            }
            delta = delta.dot(&l.w);
        }
        grads.reverse();
        (grads, delta)
    }

    /// `p ← p − lr·g` on every parameter. Rejects non-finite gradients without
    /// touching the parameters.
    pub fn sgd_step(&mut self, grads: &Gradients, cfg: &SgdConfig) -> Result<()> {
        if grads.layers.len() != self.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.w.dim() != l.w.dim() || g.b.len() != l.b.len())
        {
            return Err(invalid!("gradient shapes do not match parameters"));
        }
        if let Some(k) = grads.layers.iter().position(|g| !g.is_finite()) {
            return Err(Error::Domain(format!("non-finite gradient in layer {k}")));
        }
        let lr = cfg.learning_rate;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.w.scaled_add(-lr, &g.w);
            l.b.scaled_add(-lr, &g.b);
        }
        self.id = fresh_id();
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn sgd_step(params: &mut MlpParams, grads: &Gradients, cfg: &SgdConfig) -> Result<()> {
    params.sgd_step(grads, cfg)
}

/// Intermediates of one forward pass, tied to the parameters that produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    params_id: u64,
    acts: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LayerGrad {
    fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub input: Array2<f64>,
}

impl Gradients {
    /// Adds another gradient of the same network (input gradients are not summed).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.w.iter());
            out.extend(g.b.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(LayerGrad::is_finite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    layers: Vec<LayerFile>,
}

impl Serialize for MlpParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CheckpointFile {
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                    b: l.b.to_vec(),
                    act: l.act,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MlpParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = CheckpointFile::deserialize(deserializer)?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                let cols = l.w.first().map_or(0, Vec::len);
                if l.w.iter().any(|r| r.len() != cols) {
                    return Err(D::Error::custom("ragged weight matrix"));
                }
                let rows = l.w.len();
                let w = Array2::from_shape_vec((rows, cols), l.w.into_iter().flatten().collect())
                    .map_err(D::Error::custom)?;
                Ok(Layer {
                    w,
                    b: Array1::from(l.b),
                    act: l.act,
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        MlpParams::new(layers).map_err(D::Error::custom)
    }
}
