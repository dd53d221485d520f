//! Dense network substrate.
//!
//! A fixed MLP family: `input -> hidden... -> 1`, hidden layers share one
//! activation and the output is always `tanh`, so every prediction lies in
//! `(-1, 1)`. Parameters are held in a flat [`ParamVector`] whose `layout`
//! records how the flat buffer maps onto weight matrices and bias vectors.
//! Weights are row-major with shape `(out_dim, in_dim)`.

mod checkpoint;
mod optim;

pub use checkpoint::{load_params, save_params, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{sgd_step, Optimizer, Sgd, TrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: Activation,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            input_dim: 3,
            hidden_dims: vec![32, 32],
            hidden_activation: Activation::Tanh,
        }
    }
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, hidden_activation: Activation) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            hidden_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "network dimensions must be positive: input {} hidden {:?}",
                self.input_dim, self.hidden_dims
            )));
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` of each dense layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, 1));
        dims
    }

    pub fn layout(&self) -> Vec<TensorShape> {
        self.layer_dims()
            .into_iter()
            .enumerate()
            .flat_map(|(l, (fan_in, fan_out))| {
                [
                    TensorShape::new(format!("layer{l}.weight"), fan_out, fan_in),
                    TensorShape::new(format!("layer{l}.bias"), fan_out, 1),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| o * (i + 1)).sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer == self.hidden_dims.len() {
            Activation::Tanh
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl TensorShape {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter buffer plus the table describing its tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<TensorShape>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Vec<TensorShape>) -> Result<Self> {
        let expected: usize = layout.iter().map(TensorShape::len).sum();
        if expected != values.len() {
            return Err(Error::Dimension {
                context: "parameter layout",
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
            layout: spec.layout(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: Seed) -> Self {
        let mut rng = seed.rng();
        let mut values = Vec::with_capacity(spec.param_count());
        for (fan_in, fan_out) in spec.layer_dims() {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-s..=s)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            values,
            layout: spec.layout(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[TensorShape] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&TensorShape, &[f64])> {
        let mut offset = 0;
        self.layout.iter().map(move |shape| {
            let slice = &self.values[offset..offset + shape.len()];
            offset += shape.len();
            (shape, slice)
        })
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    pub fn check_spec(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layout != spec.layout() {
            return Err(Error::Dimension {
                context: "parameter layout vs network spec",
                expected: spec.param_count(),
                actual: self.values.len(),
            });
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ParamVector) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(s, _)| s.name.as_str())
    }
}

/// Activations recorded by a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> f64 {
        self.activations.last().expect("trace holds the output layer")[0]
    }
}

/// Reverse-mode gradients of the scalar network output.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamVector,
    pub input: Vec<f64>,
}

fn check_shapes(params: &ParamVector, spec: &NetworkSpec, input: &[f64]) -> Result<()> {
    if input.len() != spec.input_dim {
        return Err(Error::Dimension {
            context: "network input",
            expected: spec.input_dim,
            actual: input.len(),
        });
    }
    params.check_spec(spec)
}

pub fn forward_trace(params: &ParamVector, spec: &NetworkSpec, input: &[f64]) -> Result<Trace> {
    check_shapes(params, spec, input)?;
    Ok(forward_trace_unchecked(params, spec, input))
}

pub(crate) fn forward_trace_unchecked(params: &ParamVector, spec: &NetworkSpec, input: &[f64]) -> Trace {
    let dims = spec.layer_dims();
    let mut activations = Vec::with_capacity(dims.len() + 1);
    activations.push(input.to_vec());
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w = &params.values[offset..offset + fan_in * fan_out];
        let b = &params.values[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_out * (fan_in + 1);
        let act = spec.activation_of(l);
        let prev = &activations[l];
        let next: Vec<f64> = (0..fan_out)
            .map(|r| {
                let row = &w[r * fan_in..(r + 1) * fan_in];
                let z = b[r] + row.iter().zip(prev).map(|(wi, xi)| wi * xi).sum::<f64>();
                act.apply(z)
            })
            .collect();
        activations.push(next);
    }
    Trace { activations }
}

pub fn forward(params: &ParamVector, spec: &NetworkSpec, input: &[f64]) -> Result<f64> {
    Ok(forward_trace(params, spec, input)?.output())
}

/// Accumulates `upstream * d(output)/d(params)` into `param_grad` and, when
/// requested, writes `upstream * d(output)/d(input)` into `input_grad`.
pub(crate) fn backward_into(
    params: &ParamVector,
    spec: &NetworkSpec,
    trace: &Trace,
    upstream: f64,
    param_grad: &mut ParamVector,
    input_grad: Option<&mut [f64]>,
) {
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let mut offsets = Vec::with_capacity(n_layers);
    let mut offset = 0;
    for &(fan_in, fan_out) in &dims {
        offsets.push(offset);
        offset += fan_out * (fan_in + 1);
    }

    let out = trace.output();
    let mut delta = vec![upstream * Activation::Tanh.derivative_from_output(out)];
    let mut input_grad = input_grad;
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = dims[l];
        let w_off = offsets[l];
        let b_off = w_off + fan_in * fan_out;
        let prev = &trace.activations[l];
        {
            let g = &mut param_grad.values;
            for r in 0..fan_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut g[w_off + r * fan_in..w_off + (r + 1) * fan_in];
                for (gw, x) in row.iter_mut().zip(prev) {
                    *gw += d * x;
                }
                g[b_off + r] += d;
            }
        }
        if l == 0 && input_grad.is_none() {
            break;
        }
        let w = &params.values[w_off..w_off + fan_in * fan_out];
        let mut back = vec![0.0; fan_in];
        for r in 0..fan_out {
            let d = delta[r];
            if d == 0.0 {
                continue;
            }
            for (bk, wi) in back.iter_mut().zip(&w[r * fan_in..(r + 1) * fan_in]) {
                *bk += d * wi;
            }
        }
        if l == 0 {
            if let Some(ig) = input_grad.take() {
                ig.copy_from_slice(&back);
            }
            break;
        }
        let act = spec.activation_of(l - 1);
        delta = back
            .iter()
            .zip(prev)
            .map(|(bk, a)| bk * act.derivative_from_output(*a))
            .collect();
    }
}

pub fn backward(params: &ParamVector, spec: &NetworkSpec, input: &[f64], upstream: f64) -> Result<Gradients> {
    let trace = forward_trace(params, spec, input)?;
    let mut grad = params.zeros_like();
    let mut input_grad = vec![0.0; spec.input_dim];
    backward_into(params, spec, &trace, upstream, &mut grad, Some(&mut input_grad));
    Ok(Gradients {
        params: grad,
        input: input_grad,
    })
}
