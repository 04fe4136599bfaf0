//! Dense multilayer perceptrons with analytic backpropagation.
//!
//! Batches are row-major matrices: one sample per row. Every network keeps
//! a `stamp` that changes whenever its parameters change, so a
//! [`ForwardCache`] taken before an update cannot be fed to `backward`
//! afterwards.

mod adam;
mod checkpoint;

pub use adam::AdamState;
pub use checkpoint::{read_params, write_params};

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    /// `bound * tanh(x)`, used on actor outputs.
    ScaledTanh(f64),
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::ScaledTanh(bound) => bound * x.tanh(),
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::ScaledTanh(bound) => {
                let t = pre.tanh();
                bound * (1.0 - t * t)
            }
        }
    }
}

/// One affine layer followed by an elementwise activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a feed-forward network.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Dense>,
    stamp: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// Builds a network with layer widths `sizes` (input first). Hidden layers
    /// use `hidden`, the last layer uses `output`. Weights and biases are drawn
    /// uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must have length >= 2 and be non-zero, got {sizes:?}"
            )));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound));
                let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
                let activation = if i + 1 == n { output } else { hidden };
                Dense {
                    weight,
                    bias,
                    activation,
                }
            })
            .collect();
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: bias length {} vs {} outputs",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} takes {} inputs but layer {} produces {}",
                    layer.input_dim(),
                    i - 1,
                    layers[i - 1].output_dim()
                )));
            }
            if !layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite())
            {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self {
            layers,
            stamp: fresh_stamp(),
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// `(out, in)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.output_dim(), l.input_dim()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// All parameters in checkpoint order: per layer, weight row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weight.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter vector",
                expected: self.num_params(),
                got: params.len(),
            });
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weight.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weight.iter_mut().zip(w).for_each(|(d, s)| *d = *s);
            layer.bias.iter_mut().zip(b).for_each(|(d, s)| *d = *s);
            rest = tail;
        }
        self.touch();
        Ok(())
    }

    fn touch(&mut self) {
        self.stamp = fresh_stamp();
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: input.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate needed by [`Mlp::backward`].
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let z = affine(layer, x.view());
            let act = layer.activation;
            let y = z.mapv(|v| act.apply(v));
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: x,
            stamp: self.stamp,
        })
    }

    /// Forward pass without a cache.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut x = input.to_owned();
        for layer in &self.layers {
            let act = layer.activation;
            x = affine(layer, x.view());
            x.mapv_inplace(|v| act.apply(v));
        }
        Ok(x)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of a loss with respect to every parameter and to the input,
    /// given `grad_output = ∂loss/∂output` for the batch in `cache`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        let (grads, input_grad) = self.backprop(cache, grad_output, true)?;
        Ok((grads.expect("parameter gradients requested"), input_grad))
    }

    /// Like [`Mlp::backward`] but only the input gradient is formed.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(self.backprop(cache, grad_output, false)?.1)
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
        want_params: bool,
    ) -> Result<(Option<Gradients>, Array2<f64>)> {
        if cache.stamp != self.stamp || cache.pre.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_output.dim() != cache.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                grad_output.dim(),
                cache.output.dim()
            )));
        }
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut delta = upstream;
            Zip::from(&mut delta)
                .and(&cache.pre[i])
                .for_each(|d, &z| *d *= act.derivative(z));
            if want_params {
                let dw = delta.t().dot(&cache.inputs[i]);
                let db = delta.sum_axis(Axis(0));
                layer_grads.push((dw, db));
            }
            upstream = delta.dot(&layer.weight);
        }
        let grads = want_params.then(|| {
            layer_grads.reverse();
            Gradients {
                layers: layer_grads,
            }
        });
        Ok((grads, upstream))
    }
}

fn affine(layer: &Dense, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
    stamp: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Per-layer `(∂W, ∂b)` shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weight.raw_dim()),
                        Array1::zeros(l.bias.len()),
                    )
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[(Array2<f64>, Array1<f64>)] {
        &self.layers
    }

    pub fn zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        self.check_same_shape(other)?;
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }

    /// Same ordering as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }

    fn check_same_shape(&self, other: &Gradients) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|((w, b), (ow, ob))| w.dim() == ow.dim() && b.len() == ob.len());
        if same {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(
                "gradient buffers differ in shape".into(),
            ))
        }
    }
}

/// `target ← tau·online + (1 − tau)·target`, parameter by parameter.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "tau must be in [0, 1], got {tau}"
        )));
    }
    if target.shapes() != online.shapes() {
        return Err(Error::ShapeMismatch(format!(
            "soft update between {:?} and {:?}",
            target.shapes(),
            online.shapes()
        )));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weight)
            .and(&o.weight)
            .for_each(|t, &o| *t = tau * o + keep * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + keep * *t);
    }
    target.touch();
    Ok(())
}
