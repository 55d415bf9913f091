//! The deep model flattened into one parameter vector for fine-tuning.

use crate::network::{
    backward_with, forward_with, layout, Activation, LayerLayout, NetworkError, Pattern, Topology,
};
use crate::optimizers::{train_problem, LeastSquares, TrainConfig, TrainReport};

use super::autoencoder::encode_raw;
use super::{DeepError, DeepModel, Encoder};

#[derive(Debug, Clone, Copy, PartialEq)]
struct EncoderShape {
    in_dim: usize,
    code_dim: usize,
    activation: Activation,
    offset: usize,
}

/// Encoders and front as one feed-forward net: `θ = [enc₀, enc₁, front]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledNetwork {
    shapes: Vec<EncoderShape>,
    front: Topology,
    front_layout: Vec<LayerLayout>,
    front_offset: usize,
    theta: Vec<f64>,
}

impl UnrolledNetwork {
    pub fn new(model: &DeepModel) -> Self {
        let mut theta = Vec::new();
        let mut shapes = Vec::new();
        for e in model.stack() {
            shapes.push(EncoderShape {
                in_dim: e.in_dim(),
                code_dim: e.code_dim(),
                activation: e.activation(),
                offset: theta.len(),
            });
            theta.extend(e.params());
        }
        let front_offset = theta.len();
        theta.extend_from_slice(model.front().params());
        let front = model.front().topology().clone();
        Self {
            front_layout: layout(&front),
            shapes,
            front,
            front_offset,
            theta,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, NetworkError> {
        let codes = self.encode_all(&self.theta, x)?;
        let trace = forward_with(
            &self.front,
            &self.front_layout,
            &self.theta[self.front_offset..],
            codes.last().unwrap(),
        )?;
        Ok(trace.output()[0])
    }

    /// Rebuilds a model from composite parameters.
    pub fn fold(&self, model: &DeepModel, theta: &[f64]) -> Result<DeepModel, DeepError> {
        let stack: Vec<Encoder> = model
            .stack()
            .iter()
            .zip(&self.shapes)
            .map(|(e, s)| e.with_params(&theta[s.offset..s.offset + e.param_count()]))
            .collect();
        let front = model.front().with_params(&theta[self.front_offset..])?;
        DeepModel::new(stack, front)
    }

    /// Input followed by every encoder's code.
    fn encode_all(&self, theta: &[f64], x: &[f64]) -> Result<Vec<Vec<f64>>, NetworkError> {
        let first = self
            .shapes
            .first()
            .map_or(self.front.input_dim, |s| s.in_dim);
        if x.len() != first {
            return Err(NetworkError::Dimension {
                expected: first,
                got: x.len(),
            });
        }
        let mut codes = vec![x.to_vec()];
        for s in &self.shapes {
            let w = &theta[s.offset..s.offset + s.in_dim * s.code_dim];
            let b =
                &theta[s.offset + s.in_dim * s.code_dim..s.offset + (s.in_dim + 1) * s.code_dim];
            let next = encode_raw(s.in_dim, s.activation, w, b, codes.last().unwrap());
            codes.push(next);
        }
        Ok(codes)
    }

    /// Accumulates parameter gradients of `seedᵀ·output` into `grad`.
    fn backward(
        &self,
        theta: &[f64],
        codes: &[Vec<f64>],
        front_trace: &crate::network::ForwardTrace,
        seed: &[f64],
        grad: &mut [f64],
    ) {
        let (enc_grad, front_grad) = grad.split_at_mut(self.front_offset);
        let mut upstream = backward_with(
            &self.front,
            &self.front_layout,
            &theta[self.front_offset..],
            front_trace,
            seed,
            front_grad,
        );
        for (j, s) in self.shapes.iter().enumerate().rev() {
            let input = &codes[j];
            let code = &codes[j + 1];
            let w_off = s.offset;
            let b_off = s.offset + s.in_dim * s.code_dim;
            let mut below = vec![0.0; s.in_dim];
            for c in 0..s.code_dim {
                let d = upstream[c] * s.activation.derivative_from_output(code[c]);
                if d == 0.0 {
                    continue;
                }
                enc_grad[b_off + c] += d;
                for k in 0..s.in_dim {
                    enc_grad[w_off + c * s.in_dim + k] += d * input[k];
                    below[k] += theta[w_off + c * s.in_dim + k] * d;
                }
            }
            upstream = below;
        }
    }
}

/// Per-layer codes plus the front network's trace.
type CompositeTrace = (Vec<Vec<f64>>, crate::network::ForwardTrace);

struct CompositeProblem<'a> {
    net: &'a UnrolledNetwork,
    batch: &'a [Pattern],
}

impl CompositeProblem<'_> {
    /// Codes and front trace, or `None` when a code overflowed.
    fn forward(&self, theta: &[f64], x: &[f64]) -> Result<Option<CompositeTrace>, NetworkError> {
        let codes = self.net.encode_all(theta, x)?;
        let last = codes.last().unwrap();
        if last.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let trace = forward_with(
            &self.net.front,
            &self.net.front_layout,
            &theta[self.net.front_offset..],
            last,
        )?;
        Ok(Some((codes, trace)))
    }
}

impl LeastSquares for CompositeProblem<'_> {
    fn n_params(&self) -> usize {
        self.net.theta.len()
    }

    fn n_residuals(&self) -> usize {
        self.batch.len()
    }

    fn residuals(&self, theta: &[f64], out: &mut [f64]) -> Result<f64, NetworkError> {
        let mut loss = 0.0;
        for (i, p) in self.batch.iter().enumerate() {
            let Some((_, trace)) = self.forward(theta, &p.input)? else {
                return Ok(f64::INFINITY);
            };
            out[i] = p.target[0] - trace.output()[0];
            loss += 0.5 * out[i] * out[i];
        }
        Ok(loss)
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, NetworkError> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for p in self.batch {
            let Some((codes, trace)) = self.forward(theta, &p.input)? else {
                return Ok(f64::INFINITY);
            };
            let r = p.target[0] - trace.output()[0];
            loss += 0.5 * r * r;
            self.net.backward(theta, &codes, &trace, &[-r], grad);
        }
        Ok(loss)
    }

    fn residual_jacobian(
        &self,
        theta: &[f64],
        residuals: &mut [f64],
        jac: &mut [f64],
    ) -> Result<f64, NetworkError> {
        let n = theta.len();
        let mut loss = 0.0;
        for (i, p) in self.batch.iter().enumerate() {
            let row = &mut jac[i * n..(i + 1) * n];
            row.iter_mut().for_each(|v| *v = 0.0);
            let Some((codes, trace)) = self.forward(theta, &p.input)? else {
                return Ok(f64::INFINITY);
            };
            residuals[i] = p.target[0] - trace.output()[0];
            loss += 0.5 * residuals[i] * residuals[i];
            self.net.backward(theta, &codes, &trace, &[-1.0], row);
        }
        Ok(loss)
    }
}

/// Supervised training of every parameter of `model` at once.
///
/// The returned model is marked fine-tuned. Its training loss never
/// exceeds the pre-trained loss: a run that ends higher, or fails
/// numerically, keeps the pre-trained parameters. `max_epochs = 0` trains
/// nothing and returns no report.
pub fn fine_tune(
    model: &DeepModel,
    train_set: &[Pattern],
    config: &TrainConfig,
) -> Result<(DeepModel, Option<TrainReport>), DeepError> {
    let mut out = model.clone();
    out.fine_tuned = true;
    if config.max_epochs == 0 {
        return Ok((out, None));
    }
    for p in train_set {
        if p.target.len() != 1 {
            return Err(NetworkError::Dimension {
                expected: 1,
                got: p.target.len(),
            }
            .into());
        }
    }
    let net = UnrolledNetwork::new(model);
    let problem = CompositeProblem {
        net: &net,
        batch: train_set,
    };
    let result = train_problem(&problem, net.params(), config)?;
    let initial = result.report.loss_trace[0];
    if !result.report.is_failure() && result.report.final_loss <= initial {
        out = net.fold(model, &result.theta)?;
        out.fine_tuned = true;
    }
    Ok((out, Some(result.report)))
}
