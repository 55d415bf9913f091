use crate::network::{
    layout, loss_and_gradient, residual_jacobian, residuals_into, LayerLayout, Network,
    NetworkError, Pattern, Topology,
};

/// A sum-of-squares objective `½‖r(θ)‖²` over a flat parameter vector.
///
/// Residuals are `target - prediction`, so the gradient is `Jᵀr` with
/// `J = ∂r/∂θ`.
pub trait LeastSquares: Sync {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;

    /// Writes residuals into `out` and returns `½‖r‖²`.
    fn residuals(&self, theta: &[f64], out: &mut [f64]) -> Result<f64, NetworkError>;

    /// Returns `½‖r‖²` and writes its gradient into `grad`.
    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, NetworkError>;

    /// Writes residuals and the row-major `n_residuals × n_params` Jacobian.
    fn residual_jacobian(
        &self,
        theta: &[f64],
        residuals: &mut [f64],
        jac: &mut [f64],
    ) -> Result<f64, NetworkError>;

    fn loss(&self, theta: &[f64]) -> Result<f64, NetworkError> {
        let mut r = vec![0.0; self.n_residuals()];
        self.residuals(theta, &mut r)
    }
}

/// Supervised training objective of a fixed-topology network.
pub struct NetworkProblem<'a> {
    topology: &'a Topology,
    layout: Vec<LayerLayout>,
    batch: &'a [Pattern],
}

impl<'a> NetworkProblem<'a> {
    pub fn new(net: &'a Network, batch: &'a [Pattern]) -> Result<Self, NetworkError> {
        Self::for_topology(net.topology(), batch)
    }

    pub fn for_topology(
        topology: &'a Topology,
        batch: &'a [Pattern],
    ) -> Result<Self, NetworkError> {
        topology.validate()?;
        if batch.is_empty() {
            return Err(NetworkError::EmptyBatch);
        }
        for p in batch {
            if p.input.len() != topology.input_dim {
                return Err(NetworkError::Dimension {
                    expected: topology.input_dim,
                    got: p.input.len(),
                });
            }
            if p.target.len() != topology.output_dim {
                return Err(NetworkError::Dimension {
                    expected: topology.output_dim,
                    got: p.target.len(),
                });
            }
        }
        Ok(Self {
            topology,
            layout: layout(topology),
            batch,
        })
    }
}

impl LeastSquares for NetworkProblem<'_> {
    fn n_params(&self) -> usize {
        self.topology.param_count()
    }

    fn n_residuals(&self) -> usize {
        self.batch.len() * self.topology.output_dim
    }

    fn residuals(&self, theta: &[f64], out: &mut [f64]) -> Result<f64, NetworkError> {
        residuals_into(self.topology, &self.layout, theta, self.batch, out)
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, NetworkError> {
        loss_and_gradient(self.topology, &self.layout, theta, self.batch, grad)
    }

    fn residual_jacobian(
        &self,
        theta: &[f64],
        residuals: &mut [f64],
        jac: &mut [f64],
    ) -> Result<f64, NetworkError> {
        residual_jacobian(
            self.topology,
            &self.layout,
            theta,
            self.batch,
            residuals,
            jac,
        )
    }
}

/// Linear least squares `½‖y - Xθ‖²`; every positive-definite quadratic
/// can be written this way.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    /// Row-major `n × p` design matrix.
    pub design: Vec<f64>,
    pub targets: Vec<f64>,
    pub p: usize,
}

impl LinearProblem {
    pub fn new(design: Vec<f64>, targets: Vec<f64>, p: usize) -> Self {
        assert_eq!(design.len(), targets.len() * p, "design shape");
        Self { design, targets, p }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.p..(i + 1) * self.p]
    }
}

impl LeastSquares for LinearProblem {
    fn n_params(&self) -> usize {
        self.p
    }

    fn n_residuals(&self) -> usize {
        self.targets.len()
    }

    fn residuals(&self, theta: &[f64], out: &mut [f64]) -> Result<f64, NetworkError> {
        let mut loss = 0.0;
        for (i, (o, y)) in out.iter_mut().zip(&self.targets).enumerate() {
            let pred: f64 = self.row(i).iter().zip(theta).map(|(x, t)| x * t).sum();
            *o = y - pred;
            loss += 0.5 * *o * *o;
        }
        Ok(loss)
    }

    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, NetworkError> {
        let mut r = vec![0.0; self.targets.len()];
        let loss = self.residuals(theta, &mut r)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, ri) in r.iter().enumerate() {
            for (g, x) in grad.iter_mut().zip(self.row(i)) {
                *g -= x * ri;
            }
        }
        Ok(loss)
    }

    fn residual_jacobian(
        &self,
        theta: &[f64],
        residuals: &mut [f64],
        jac: &mut [f64],
    ) -> Result<f64, NetworkError> {
        let loss = self.residuals(theta, residuals)?;
        for (j, x) in jac.iter_mut().zip(&self.design) {
            *j = -x;
        }
        Ok(loss)
    }
}
