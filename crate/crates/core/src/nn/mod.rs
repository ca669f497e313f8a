//! Feedforward tanh MLP with named output heads, manual backprop and Adam.
//!
//! Parameters live in one flat vector; [`ParamLayout`] maps each layer to its
//! weight block (row-major, `out × in`) and bias block. The same layout is
//! used for gradients, optimizer moments and checkpoints.

mod adam;
mod categorical;
mod checkpoint;

pub use adam::AdamState;
pub use categorical::{argmax, categorical_entropy, categorical_sample, log_softmax, logsumexp, softmax};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use rand::Rng as _;

use crate::seeding::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    CategoricalLogits,
    Scalar,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::CategoricalLogits => "categorical",
            HeadKind::Scalar => "scalar",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "categorical" => Some(HeadKind::CategoricalLogits),
            "scalar" => Some(HeadKind::Scalar),
            _ => None,
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            HeadKind::CategoricalLogits => 0.01,
            HeadKind::Scalar => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadSpec {
    pub name: String,
    pub output_dim: usize,
    pub kind: HeadKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub heads: Vec<HeadSpec>,
}

/// Head indices of the actor-critic built by [`MlpSpec::actor_critic`].
pub const SCHEDULE_HEAD: usize = 0;
pub const ALTITUDE_HEAD: usize = 1;
pub const VALUE_HEAD: usize = 2;

impl MlpSpec {
    /// Shared tanh trunk with schedule logits, altitude logits and a value head.
    pub fn actor_critic(input_dim: usize, num_devices: usize, hidden: Vec<usize>) -> Self {
        Self {
            input_dim,
            hidden,
            activation: Activation::Tanh,
            heads: vec![
                HeadSpec { name: "schedule".into(), output_dim: num_devices, kind: HeadKind::CategoricalLogits },
                HeadSpec { name: "altitude".into(), output_dim: 3, kind: HeadKind::CategoricalLogits },
                HeadSpec { name: "value".into(), output_dim: 1, kind: HeadKind::Scalar },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("nn.input_dim", "must be >= 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("nn.hidden", "need at least one hidden layer, all widths >= 1"));
        }
        if self.heads.is_empty() || self.heads.iter().any(|h| h.output_dim == 0) {
            return Err(Error::config("nn.heads", "need at least one head, all widths >= 1"));
        }
        if self
            .heads
            .iter()
            .any(|h| h.kind == HeadKind::Scalar && h.output_dim != 1)
        {
            return Err(Error::config("nn.heads", "scalar heads have exactly one output"));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |in_dim: usize, out_dim: usize| {
            let l = LayerLayout { in_dim, out_dim, weights: offset, bias: offset + in_dim * out_dim };
            offset += (in_dim + 1) * out_dim;
            l
        };
        let mut prev = self.input_dim;
        for &w in &self.hidden {
            layers.push(push(prev, w));
            prev = w;
        }
        let heads = self.heads.iter().map(|h| push(prev, h.output_dim)).collect();
        ParamLayout { trunk: layers, heads, len: offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub trunk: Vec<LayerLayout>,
    pub heads: Vec<LayerLayout>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    spec: MlpSpec,
    layout: ParamLayout,
    data: Vec<f64>,
}

/// Per-head outputs. Categorical heads carry raw logits.
pub type HeadOutputs = Vec<Vec<f64>>;

/// Layer activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` the output of trunk layer `l`.
    acts: Vec<Vec<f64>>,
}

impl PolicyParams {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let data = vec![0.0; layout.len];
        Ok(Self { spec, layout, data })
    }

    /// Fan-in scaled uniform init: gain √2 on the trunk, 0.01 on categorical
    /// heads, 1 on scalar heads. Biases start at zero.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        let trunk_gain = match p.spec.activation {
            Activation::Tanh => std::f64::consts::SQRT_2,
            Activation::Identity => 1.0,
        };
        let gains = std::iter::repeat(trunk_gain)
            .take(p.layout.trunk.len())
            .chain(p.spec.heads.iter().map(|h| h.kind.init_gain()))
            .collect::<Vec<_>>();
        let layers: Vec<LayerLayout> = p.layout.trunk.iter().chain(&p.layout.heads).copied().collect();
        for (l, gain) in layers.iter().zip(gains) {
            let bound = gain * (3.0 / l.in_dim as f64).sqrt();
            for w in &mut p.data[l.weights..l.bias] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn from_flat(spec: MlpSpec, data: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if data.len() != layout.len {
            return Err(Error::LengthMismatch { expected: layout.len, got: data.len() });
        }
        Ok(Self { spec, layout, data })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn affine(&self, l: &LayerLayout, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &self.data[l.weights..l.bias];
        let b = &self.data[l.bias..l.bias + l.out_dim];
        for (j, row) in w.chunks_exact(l.in_dim).enumerate() {
            let z: f64 = row.iter().zip(input).map(|(a, x)| a * x).sum();
            out.push(z + b[j]);
        }
    }

    pub fn forward(&self, features: &[f64]) -> Result<HeadOutputs> {
        Ok(self.forward_cached(features)?.0)
    }

    pub fn forward_cached(&self, features: &[f64]) -> Result<(HeadOutputs, ForwardCache)> {
        if features.len() != self.spec.input_dim {
            return Err(Error::LengthMismatch { expected: self.spec.input_dim, got: features.len() });
        }
        let act = self.spec.activation;
        let mut acts = Vec::with_capacity(self.layout.trunk.len() + 1);
        acts.push(features.to_vec());
        for l in &self.layout.trunk {
            let mut z = Vec::with_capacity(l.out_dim);
            self.affine(l, acts.last().unwrap(), &mut z);
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            acts.push(z);
        }
        let top = acts.last().unwrap();
        let outputs = self
            .layout
            .heads
            .iter()
            .map(|l| {
                let mut o = Vec::with_capacity(l.out_dim);
                self.affine(l, top, &mut o);
                o
            })
            .collect();
        Ok((outputs, ForwardCache { acts }))
    }

    /// Gradients of Σ_h ⟨head_grads[h], outputs[h]⟩ with respect to every parameter.
    pub fn backward(&self, features: &[f64], head_grads: &[Vec<f64>]) -> Result<Vec<f64>> {
        let (_, cache) = self.forward_cached(features)?;
        let mut grads = vec![0.0; self.data.len()];
        self.accumulate_backward(&cache, head_grads, &mut grads)?;
        Ok(grads)
    }

    /// Adds the parameter gradients for one sample into `grads`.
    pub fn accumulate_backward(&self, cache: &ForwardCache, head_grads: &[Vec<f64>], grads: &mut [f64]) -> Result<()> {
        if head_grads.len() != self.layout.heads.len() {
            return Err(Error::LengthMismatch { expected: self.layout.heads.len(), got: head_grads.len() });
        }
        if grads.len() != self.data.len() {
            return Err(Error::LengthMismatch { expected: self.data.len(), got: grads.len() });
        }
        let top = cache.acts.last().unwrap();
        let mut d_top = vec![0.0; top.len()];
        for (l, g) in self.layout.heads.iter().zip(head_grads) {
            if g.len() != l.out_dim {
                return Err(Error::LengthMismatch { expected: l.out_dim, got: g.len() });
            }
            self.backprop_affine(l, top, g, grads, Some(&mut d_top));
        }
        let act = self.spec.activation;
        let mut d_out = d_top;
        for (idx, l) in self.layout.trunk.iter().enumerate().rev() {
            let out = &cache.acts[idx + 1];
            let dz: Vec<f64> = d_out.iter().zip(out).map(|(d, a)| d * act.grad_from_output(*a)).collect();
            let input = &cache.acts[idx];
            if idx == 0 {
                self.backprop_affine(l, input, &dz, grads, None);
            } else {
                let mut d_in = vec![0.0; l.in_dim];
                self.backprop_affine(l, input, &dz, grads, Some(&mut d_in));
                d_out = d_in;
            }
        }
        Ok(())
    }

    fn backprop_affine(&self, l: &LayerLayout, input: &[f64], dz: &[f64], grads: &mut [f64], d_in: Option<&mut Vec<f64>>) {
        let (gw, gb) = grads[l.weights..l.bias + l.out_dim].split_at_mut(l.in_dim * l.out_dim);
        for ((row, g), &d) in gw.chunks_exact_mut(l.in_dim).zip(gb.iter_mut()).zip(dz) {
            if d == 0.0 {
                continue;
            }
            *g += d;
            row.iter_mut().zip(input).for_each(|(r, x)| *r += d * x);
        }
        if let Some(d_in) = d_in {
            let w = &self.data[l.weights..l.bias];
            for (row, &d) in w.chunks_exact(l.in_dim).zip(dz) {
                if d == 0.0 {
                    continue;
                }
                d_in.iter_mut().zip(row).for_each(|(acc, wv)| *acc += d * wv);
            }
        }
    }
}
