//! Plain (MLP) and cascade-forward (CFMLP) regression networks.
//!
//! # Parameter layout
//!
//! `theta` is layer-major over the receiving layers (hidden 1, hidden 2 if
//! present, output). Each layer stores its weight matrix first, row-major with
//! one row per receiving neuron, followed by one bias per receiving neuron.
//! A row lists the incoming weights in source order: for an MLP the only
//! source is the previous layer; for a CFMLP the sources are the raw input
//! followed by every earlier hidden layer, shallowest first. The CFMLP output
//! layer therefore also sees the raw input directly.

mod checkpoint;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use checkpoint::{expect_key, next_line, parse_usize, read_values, write_values};
pub use checkpoint::{parse_network_block, write_network_block};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Mlp,
    Cfmlp,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mlp => "mlp",
            Scheme::Cfmlp => "cfmlp",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Scheme::Mlp),
            "cfmlp" => Ok(Scheme::Cfmlp),
            other => Err(NetworkError::InvalidTopology(format!(
                "unknown scheme `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(NetworkError::InvalidTopology(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub scheme: Scheme,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub hidden_activation: Activation,
    #[serde(default = "linear")]
    pub output_activation: Activation,
}

fn linear() -> Activation {
    Activation::Linear
}

impl Topology {
    /// Tanh hidden layers, one linear output.
    pub fn new(scheme: Scheme, input_dim: usize, hidden: &[usize]) -> Self {
        Self {
            scheme,
            input_dim,
            hidden: hidden.to_vec(),
            output_dim: 1,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        }
    }

    pub fn mlp(input_dim: usize, hidden: &[usize]) -> Self {
        Self::new(Scheme::Mlp, input_dim, hidden)
    }

    pub fn cfmlp(input_dim: usize, hidden: &[usize]) -> Self {
        Self::new(Scheme::Cfmlp, input_dim, hidden)
    }

    pub fn with_output_dim(mut self, output_dim: usize) -> Self {
        self.output_dim = output_dim;
        self
    }

    pub fn with_hidden_activation(mut self, act: Activation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NetworkError::InvalidTopology(
                "input and output sizes must be positive".into(),
            ));
        }
        if !(1..=2).contains(&self.hidden.len()) {
            return Err(NetworkError::InvalidTopology(format!(
                "expected 1 or 2 hidden layers, got {}",
                self.hidden.len()
            )));
        }
        if self.hidden.contains(&0) {
            return Err(NetworkError::InvalidTopology(
                "hidden layer of size 0".into(),
            ));
        }
        Ok(())
    }

    /// Input, hidden and output sizes.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.hidden.len() + 2);
        v.push(self.input_dim);
        v.extend_from_slice(&self.hidden);
        v.push(self.output_dim);
        v
    }

    pub fn total_hidden(&self) -> usize {
        self.hidden.iter().sum()
    }

    pub fn param_count(&self) -> usize {
        layout(self)
            .iter()
            .map(|l| l.fan_in * l.fan_out + l.fan_out)
            .sum()
    }

    /// Short label such as `mlp(5,2)`.
    pub fn label(&self) -> String {
        let h: Vec<String> = self.hidden.iter().map(|n| n.to_string()).collect();
        format!("{}({})", self.scheme.name(), h.join(","))
    }
}

pub fn param_count(topology: &Topology) -> usize {
    topology.param_count()
}

/// Geometry of one receiving layer inside `theta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    /// Index (into `layer_sizes`) of this receiving layer.
    pub layer: usize,
    /// First source layer; sources are `first_source..layer`.
    pub first_source: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

pub(crate) fn layout(topology: &Topology) -> Vec<LayerLayout> {
    let sizes = topology.layer_sizes();
    let mut offset = 0;
    (1..sizes.len())
        .map(|layer| {
            let first_source = match topology.scheme {
                Scheme::Mlp => layer - 1,
                Scheme::Cfmlp => 0,
            };
            let fan_in: usize = sizes[first_source..layer].iter().sum();
            let fan_out = sizes[layer];
            let l = LayerLayout {
                layer,
                first_source,
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            l
        })
        .collect()
}

/// Activations of every layer for one input (index 0 is the input itself).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output layer")
    }
}

/// One supervised example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Pattern {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }

    pub fn scalar(input: Vec<f64>, target: f64) -> Self {
        Self {
            input,
            target: vec![target],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: Topology,
    theta: Vec<f64>,
    layout: Vec<LayerLayout>,
}

impl Network {
    pub fn from_params(topology: Topology, theta: Vec<f64>) -> Result<Self, NetworkError> {
        topology.validate()?;
        let expected = topology.param_count();
        if theta.len() != expected {
            return Err(NetworkError::Dimension {
                expected,
                got: theta.len(),
            });
        }
        let layout = layout(&topology);
        Ok(Self {
            topology,
            theta,
            layout,
        })
    }

    pub fn zeros(topology: Topology) -> Result<Self, NetworkError> {
        let n = topology.param_count();
        Self::from_params(topology, vec![0.0; n])
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))` per receiving
    /// layer, zero biases.
    pub fn init(topology: Topology, seed: u64) -> Result<Self, NetworkError> {
        let mut net = Self::zeros(topology)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &net.layout {
            let r = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-r, r).expect("finite bound");
            for w in &mut net.theta[l.weight_offset..l.bias_offset] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<(), NetworkError> {
        if theta.len() != self.theta.len() {
            return Err(NetworkError::Dimension {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    pub fn with_params(&self, theta: &[f64]) -> Result<Self, NetworkError> {
        let mut n = self.clone();
        n.set_params(theta)?;
        Ok(n)
    }

    pub fn input_dim(&self) -> usize {
        self.topology.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.topology.output_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace, NetworkError> {
        forward_with(&self.topology, &self.layout, &self.theta, x)
    }

    /// Scalar prediction (first output).
    pub fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        Ok(self.forward(x)?.output()[0])
    }

    /// Half sum of squared residuals and its exact gradient.
    pub fn gradient(&self, batch: &[Pattern]) -> Result<(f64, Vec<f64>), NetworkError> {
        let mut grad = vec![0.0; self.theta.len()];
        let loss = loss_and_gradient(&self.topology, &self.layout, &self.theta, batch, &mut grad)?;
        Ok((loss, grad))
    }

    /// Residual Jacobian, one row per (pattern, output) residual
    /// `target - prediction`, row-major.
    pub fn jacobian(&self, batch: &[Pattern]) -> Result<Jacobian, NetworkError> {
        let rows = batch.len() * self.output_dim();
        let mut jac = Jacobian {
            rows,
            cols: self.theta.len(),
            data: vec![0.0; rows * self.theta.len()],
            residuals: vec![0.0; rows],
        };
        residual_jacobian(
            &self.topology,
            &self.layout,
            &self.theta,
            batch,
            &mut jac.residuals,
            &mut jac.data,
        )?;
        Ok(jac)
    }

    /// Indices of CFMLP weights that bypass the immediately preceding
    /// layer. Empty for an MLP.
    pub fn skip_weight_indices(&self) -> Vec<usize> {
        let sizes = self.topology.layer_sizes();
        let mut out = Vec::new();
        for l in &self.layout {
            let skip_cols: usize = sizes[l.first_source..l.layer - 1].iter().sum();
            for j in 0..l.fan_out {
                let row = l.weight_offset + j * l.fan_in;
                out.extend(row..row + skip_cols);
            }
        }
        out
    }

    /// Equivalent CFMLP whose skip weights are all zero.
    pub fn embed_in_cascade(&self) -> Result<Network, NetworkError> {
        if self.topology.scheme != Scheme::Mlp {
            return Err(NetworkError::InvalidTopology(
                "embedding requires an MLP".into(),
            ));
        }
        let mut topo = self.topology.clone();
        topo.scheme = Scheme::Cfmlp;
        let mut cascade = Network::zeros(topo)?;
        let sizes = self.topology.layer_sizes();
        for (src, dst) in self.layout.iter().zip(cascade.layout.clone()) {
            let skip_cols: usize = sizes[dst.first_source..dst.layer - 1].iter().sum();
            for j in 0..src.fan_out {
                let from = src.weight_offset + j * src.fan_in;
                let to = dst.weight_offset + j * dst.fan_in + skip_cols;
                cascade.theta[to..to + src.fan_in]
                    .copy_from_slice(&self.theta[from..from + src.fan_in]);
            }
            cascade.theta[dst.bias_offset..dst.bias_offset + dst.fan_out]
                .copy_from_slice(&self.theta[src.bias_offset..src.bias_offset + src.fan_out]);
        }
        Ok(cascade)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        write_network_block(&mut s, self);
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text.lines();
        let net = parse_network_block(&mut lines)?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(NetworkError::Checkpoint("trailing content".into()));
        }
        Ok(net)
    }
}

/// Dense residual Jacobian plus the residual vector it was evaluated with.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl Jacobian {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `J^T r`.
    pub fn transpose_times_residuals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, r) in self.residuals.iter().enumerate() {
            for (o, j) in out.iter_mut().zip(self.row(i)) {
                *o += j * r;
            }
        }
        out
    }
}

fn check_input(topology: &Topology, x: &[f64]) -> Result<(), NetworkError> {
    if x.len() != topology.input_dim {
        return Err(NetworkError::Dimension {
            expected: topology.input_dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NetworkError::NonFiniteInput);
    }
    Ok(())
}

pub(crate) fn forward_with(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    x: &[f64],
) -> Result<ForwardTrace, NetworkError> {
    let mut trace = ForwardTrace {
        activations: Vec::new(),
    };
    forward_into(topology, layout, theta, x, &mut trace)?;
    Ok(trace)
}

/// `forward_with` into a reused trace.
pub(crate) fn forward_into(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    x: &[f64],
    trace: &mut ForwardTrace,
) -> Result<(), NetworkError> {
    check_input(topology, x)?;
    let last = layout.len();
    let acts = &mut trace.activations;
    acts.resize_with(last + 1, Vec::new);
    acts[0].clear();
    acts[0].extend_from_slice(x);
    for l in layout {
        let act = if l.layer == last {
            topology.output_activation
        } else {
            topology.hidden_activation
        };
        let (sources, rest) = acts.split_at_mut(l.layer);
        let out = &mut rest[0];
        out.clear();
        out.extend_from_slice(&theta[l.bias_offset..l.bias_offset + l.fan_out]);
        for (j, o) in out.iter_mut().enumerate() {
            let row = &theta[l.weight_offset + j * l.fan_in..l.weight_offset + (j + 1) * l.fan_in];
            let mut col = 0;
            for src in &sources[l.first_source..] {
                for (w, a) in row[col..col + src.len()].iter().zip(src) {
                    *o += w * a;
                }
                col += src.len();
            }
            *o = act.apply(*o);
        }
    }
    Ok(())
}

/// Reverse accumulation from `d loss / d output` (`seed`). Adds parameter
/// gradients into `grad` and returns `d loss / d input`.
pub(crate) fn backward_with(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    trace: &ForwardTrace,
    seed: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let mut scratch = Backward::default();
    backward_into(topology, layout, theta, trace, seed, grad, &mut scratch);
    scratch.da.swap_remove(0)
}

/// Buffers for `backward_into`; `da[0]` holds `d loss / d input` afterwards.
#[derive(Debug, Default)]
pub(crate) struct Backward {
    da: Vec<Vec<f64>>,
    delta: Vec<f64>,
}

pub(crate) fn backward_into(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    trace: &ForwardTrace,
    seed: &[f64],
    grad: &mut [f64],
    scratch: &mut Backward,
) {
    let acts = &trace.activations;
    let last = layout.len();
    let Backward { da, delta } = scratch;
    da.resize_with(acts.len(), Vec::new);
    for (d, a) in da.iter_mut().zip(acts) {
        d.clear();
        d.resize(a.len(), 0.0);
    }
    da[last].copy_from_slice(seed);
    for l in layout.iter().rev() {
        let act = if l.layer == last {
            topology.output_activation
        } else {
            topology.hidden_activation
        };
        delta.clear();
        delta.extend(
            da[l.layer]
                .iter()
                .zip(&acts[l.layer])
                .map(|(g, a)| g * act.derivative_from_output(*a)),
        );
        let (lower, _) = da.split_at_mut(l.layer);
        for (j, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[l.bias_offset + j] += d;
            let w0 = l.weight_offset + j * l.fan_in;
            let mut col = 0;
            for (src, dsrc) in acts[l.first_source..l.layer]
                .iter()
                .zip(&mut lower[l.first_source..])
            {
                let n = src.len();
                let g = &mut grad[w0 + col..w0 + col + n];
                let w = &theta[w0 + col..w0 + col + n];
                for (((g, ds), s), w) in g.iter_mut().zip(dsrc.iter_mut()).zip(src).zip(w) {
                    *g += d * s;
                    *ds += w * d;
                }
                col += n;
            }
        }
    }
}

pub(crate) fn loss_and_gradient(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    batch: &[Pattern],
    grad: &mut [f64],
) -> Result<f64, NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut seed = vec![0.0; topology.output_dim];
    let mut trace = ForwardTrace {
        activations: Vec::new(),
    };
    let mut scratch = Backward::default();
    for p in batch {
        check_target(topology, p)?;
        forward_into(topology, layout, theta, &p.input, &mut trace)?;
        for ((s, y), t) in seed.iter_mut().zip(trace.output()).zip(&p.target) {
            let r = t - y;
            loss += 0.5 * r * r;
            *s = -r;
        }
        backward_into(topology, layout, theta, &trace, &seed, grad, &mut scratch);
    }
    Ok(loss)
}

pub(crate) fn residuals_into(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    batch: &[Pattern],
    out: &mut [f64],
) -> Result<f64, NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let m = topology.output_dim;
    let mut loss = 0.0;
    let mut trace = ForwardTrace {
        activations: Vec::new(),
    };
    for (i, p) in batch.iter().enumerate() {
        check_target(topology, p)?;
        forward_into(topology, layout, theta, &p.input, &mut trace)?;
        for (o, (y, t)) in trace.output().iter().zip(&p.target).enumerate() {
            let r = t - y;
            out[i * m + o] = r;
            loss += 0.5 * r * r;
        }
    }
    Ok(loss)
}

pub(crate) fn residual_jacobian(
    topology: &Topology,
    layout: &[LayerLayout],
    theta: &[f64],
    batch: &[Pattern],
    residuals: &mut [f64],
    jac: &mut [f64],
) -> Result<f64, NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let m = topology.output_dim;
    let p_count = theta.len();
    let mut seed = vec![0.0; m];
    let mut loss = 0.0;
    let mut trace = ForwardTrace {
        activations: Vec::new(),
    };
    let mut scratch = Backward::default();
    for (i, p) in batch.iter().enumerate() {
        check_target(topology, p)?;
        forward_into(topology, layout, theta, &p.input, &mut trace)?;
        for o in 0..m {
            let row_idx = i * m + o;
            let r = p.target[o] - trace.output()[o];
            residuals[row_idx] = r;
            loss += 0.5 * r * r;
            // d r / d theta = -d y_o / d theta
            seed.iter_mut().for_each(|s| *s = 0.0);
            seed[o] = -1.0;
            let row = &mut jac[row_idx * p_count..(row_idx + 1) * p_count];
            row.iter_mut().for_each(|v| *v = 0.0);
            backward_into(topology, layout, theta, &trace, &seed, row, &mut scratch);
        }
    }
    Ok(loss)
}

fn check_target(topology: &Topology, p: &Pattern) -> Result<(), NetworkError> {
    if p.target.len() != topology.output_dim {
        return Err(NetworkError::Dimension {
            expected: topology.output_dim,
            got: p.target.len(),
        });
    }
    Ok(())
}
