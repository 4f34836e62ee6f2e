use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::NnError;

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// `max(0, z) + 1`; strictly positive, used for logits that get masked.
    ReluPlusOne,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::ReluPlusOne => z.max(0.0) + 1.0,
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu | Activation::ReluPlusOne => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected feed-forward network.
///
/// Layer `i` maps `widths[i]` inputs to `widths[i + 1]` outputs. Its weights
/// are stored row-major (`out x in`) followed by the bias, all inside
/// `params`.
#[derive(Clone, Debug)]
pub struct DenseNet {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    generation: u64,
}

/// Activations recorded by [`DenseNet::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output_pre_activation(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backward {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl DenseNet {
    /// Xavier-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(widths, activations)?;
        for layer in 0..net.num_layers() {
            let (fan_in, fan_out) = (widths[layer], widths[layer + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = net.offsets[layer];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], activations: &[Activation]) -> Result<Self, NnError> {
        if widths.len() < 2 {
            return Err(NnError::Layout(
                "need at least an input and an output width".into(),
            ));
        }
        if activations.len() != widths.len() - 1 {
            return Err(NnError::Layout(format!(
                "{} layers but {} activations",
                widths.len() - 1,
                activations.len()
            )));
        }
        if widths.contains(&0) {
            return Err(NnError::Layout("zero-width layer".into()));
        }
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut total = 0;
        for pair in widths.windows(2) {
            offsets.push(total);
            total += pair[0] * pair[1] + pair[1];
        }
        Ok(Self {
            widths: widths.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; total],
            offsets,
            generation: next_generation(),
        })
    }

    /// Hidden layers use `hidden`, the last layer uses `output`.
    pub fn mlp<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let layers = widths.len().saturating_sub(1);
        let mut acts = vec![hidden; layers];
        if let Some(last) = acts.last_mut() {
            *last = output;
        }
        Self::new(widths, &acts, rng)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.params
    }

    /// Weights (row-major `out x in`) and bias of one layer.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        self.generation = next_generation();
        let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
        let start = self.offsets[layer];
        let (w, rest) = self.params[start..].split_at_mut(fan_in * fan_out);
        (w, &mut rest[..fan_out])
    }

    /// Zero the last layer so the network outputs exactly zero everywhere.
    pub fn zero_output_layer(&mut self) {
        let last = self.num_layers() - 1;
        let (w, b) = self.layer_mut(last);
        w.fill(0.0);
        b.fill(0.0);
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn affine(&self, layer: usize, input: &[f64], out: &mut Vec<f64>) {
        let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
        let start = self.offsets[layer];
        let weights = &self.params[start..start + fan_in * fan_out];
        let bias = &self.params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
        out.clear();
        out.extend(
            weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }

    /// Output without recording a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for layer in 0..self.num_layers() {
            self.affine(layer, &current, &mut next);
            let act = self.activations[layer];
            next.iter_mut().for_each(|z| *z = act.apply(*z));
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        self.check_input(input)?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut current = input.to_vec();
        for layer in 0..layers {
            let mut z = Vec::new();
            self.affine(layer, &current, &mut z);
            let act = self.activations[layer];
            let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        let cache = ForwardCache {
            generation: self.generation,
            inputs,
            pre,
        };
        Ok((current, cache))
    }

    /// Accumulate parameter gradients into `param_grads` and return the
    /// gradient with respect to the network input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        param_grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if cache.generation != self.generation || cache.pre.len() != self.num_layers() {
            return Err(NnError::StaleCache);
        }
        if output_grad.len() != self.output_dim() {
            return Err(NnError::Dimension {
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if param_grads.len() != self.params.len() {
            return Err(NnError::Dimension {
                expected: self.params.len(),
                got: param_grads.len(),
            });
        }
        let mut delta: Vec<f64> = output_grad.to_vec();
        for layer in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
            let act = self.activations[layer];
            for (d, &z) in delta.iter_mut().zip(&cache.pre[layer]) {
                *d *= act.derivative(z);
            }
            let start = self.offsets[layer];
            let x = &cache.inputs[layer];
            let (gw, rest) = param_grads[start..].split_at_mut(fan_in * fan_out);
            for ((row, gb), &d) in gw.chunks_exact_mut(fan_in).zip(rest.iter_mut()).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                *gb += d;
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
            }
            let weights = &self.params[start..start + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for (row, &d) in weights.chunks_exact(fan_in).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Backward, NnError> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(cache, output_grad, &mut params)?;
        Ok(Backward { params, input })
    }

    /// One optimizer step that *descends* along `grads`.
    pub fn apply_adam(&mut self, adam: &mut Adam, grads: &[f64]) -> Result<(), NnError> {
        adam.step(&mut self.params, grads)?;
        self.generation = next_generation();
        Ok(())
    }

    pub fn copy_params_from(&mut self, other: &DenseNet) -> Result<(), NnError> {
        if other.widths != self.widths || other.activations != self.activations {
            return Err(NnError::Layout(
                "copy between differently shaped networks".into(),
            ));
        }
        self.params.copy_from_slice(&other.params);
        self.generation = other.generation;
        Ok(())
    }

    pub(crate) fn from_parts(
        widths: Vec<usize>,
        activations: Vec<Activation>,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(&widths, &activations)?;
        if params.len() != net.params.len() {
            return Err(NnError::Dimension {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }
}
