use ndarray::Zip;

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Adam moment estimates for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Gradients,
    second: Gradients,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self::with_constants(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(net: &Mlp, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second
    }

    /// One bias-corrected Adam update of `net`. On error neither the network
    /// nor the optimizer state is modified.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {lr}"
            )));
        }
        if !grads.matches(net) || !self.first.matches(net) {
            return Err(Error::ShapeMismatch(
                "gradients or optimizer state do not match the network".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }

        let t = self.step + 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);

        let mut first = self.first.clone();
        let mut second = self.second.clone();
        let mut layers = net.layers.clone();
        for (((layer, (g_w, g_b)), (m_w, m_b)), (v_w, v_b)) in layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut first.layers)
            .zip(&mut second.layers)
        {
            let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            Zip::from(&mut layer.weight)
                .and(g_w)
                .and(m_w)
                .and(v_w)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(g_b)
                .and(m_b)
                .and(v_b)
                .for_each(update);
        }
        if !layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("network parameters after Adam step"));
        }

        net.layers = layers;
        net.touch();
        self.first = first;
        self.second = second;
        self.step = t;
        Ok(())
    }
}
