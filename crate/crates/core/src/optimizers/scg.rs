//! Møller's scaled conjugate gradient.

use super::{all_finite, dot, Iterate, LeastSquares, Step, Stepper, StopReason, TrainError};

pub const LAMBDA_INIT: f64 = 5e-5;
const SIGMA: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ScgState {
    /// Search direction.
    pub p: Vec<f64>,
    pub lambda: f64,
    pub lambda_bar: f64,
    /// Curvature `pᵀs` from the last fresh estimate, before scaling terms.
    pub delta: f64,
    /// The previous iteration was accepted, so curvature must be re-estimated.
    pub success: bool,
    /// Accepted steps since the last restart.
    pub since_restart: usize,
}

impl ScgState {
    pub fn new(grad: &[f64]) -> Self {
        Self {
            p: grad.iter().map(|g| -g).collect(),
            lambda: LAMBDA_INIT,
            lambda_bar: 0.0,
            delta: 0.0,
            success: true,
            since_restart: 0,
        }
    }

    fn restart(&mut self, grad: &[f64]) {
        self.p = grad.iter().map(|g| -g).collect();
        self.success = true;
        self.since_restart = 0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgStep {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub accepted: bool,
}

/// One iteration of scaled conjugate gradient, accepted or not. A rejected
/// iteration returns the input point unchanged with a larger `λ`.
pub fn scg_step<P: LeastSquares + ?Sized>(
    problem: &P,
    theta: &[f64],
    loss: f64,
    grad: &[f64],
    state: &mut ScgState,
) -> Result<ScgStep, TrainError> {
    let unchanged = |accepted| ScgStep {
        theta: theta.to_vec(),
        loss,
        grad: grad.to_vec(),
        accepted,
    };
    let n = theta.len();
    let mut p_sq = dot(&state.p, &state.p);
    if !(p_sq > 0.0) {
        return Ok(unchanged(false));
    }
    if state.success {
        let sigma = SIGMA / p_sq.sqrt();
        let probe: Vec<f64> = theta
            .iter()
            .zip(&state.p)
            .map(|(t, p)| t + sigma * p)
            .collect();
        let mut g_probe = vec![0.0; n];
        let l = problem.loss_grad(&probe, &mut g_probe)?;
        let delta = g_probe
            .iter()
            .zip(grad)
            .zip(&state.p)
            .map(|((a, b), p)| p * (a - b))
            .sum::<f64>()
            / sigma;
        if !l.is_finite() || !delta.is_finite() {
            state.lambda *= 2.0;
            state.lambda_bar = 0.0;
            state.restart(grad);
            return Ok(unchanged(false));
        }
        state.delta = delta;
    }
    let mut delta = state.delta + (state.lambda - state.lambda_bar) * p_sq;
    if delta <= 0.0 {
        // Make the scaled curvature positive.
        state.lambda_bar = 2.0 * (state.lambda - delta / p_sq);
        delta = -delta + state.lambda * p_sq;
        state.lambda = state.lambda_bar;
    }
    let mu = -dot(&state.p, grad);
    if !(mu > 0.0) {
        state.restart(grad);
        return Ok(unchanged(false));
    }
    let alpha = mu / delta;
    let cand: Vec<f64> = theta
        .iter()
        .zip(&state.p)
        .map(|(t, p)| t + alpha * p)
        .collect();
    let mut g_new = vec![0.0; n];
    let l_new = problem.loss_grad(&cand, &mut g_new)?;
    let finite = l_new.is_finite() && all_finite(&g_new);
    let comparison = if finite {
        2.0 * delta * (loss - l_new) / (mu * mu)
    } else {
        f64::NEG_INFINITY
    };

    let out = if comparison >= 0.0 && l_new <= loss {
        state.lambda_bar = 0.0;
        state.success = true;
        state.since_restart += 1;
        if state.since_restart >= n {
            state.restart(&g_new);
        } else {
            // β = (|r'|² − r'ᵀr)/μ with r = −g
            let beta = (dot(&g_new, &g_new) - dot(&g_new, grad)) / mu;
            state.p = g_new
                .iter()
                .zip(&state.p)
                .map(|(g, p)| -g + beta * p)
                .collect();
            p_sq = dot(&state.p, &state.p);
            if !(beta.is_finite() && p_sq.is_finite()) {
                state.restart(&g_new);
            }
        }
        if comparison >= 0.75 {
            state.lambda *= 0.5;
        }
        ScgStep {
            theta: cand,
            loss: l_new,
            grad: g_new,
            accepted: true,
        }
    } else {
        state.lambda_bar = state.lambda;
        state.success = false;
        unchanged(false)
    };
    if comparison < 0.25 {
        state.lambda *= 4.0;
    }
    state.lambda = state.lambda.clamp(f64::MIN_POSITIVE, 1e100);
    Ok(out)
}

pub(crate) struct ScgStepper<'a, P: ?Sized> {
    problem: &'a P,
    state: Option<ScgState>,
}

impl<'a, P: LeastSquares + ?Sized> ScgStepper<'a, P> {
    pub fn new(problem: &'a P) -> Self {
        Self {
            problem,
            state: None,
        }
    }
}

impl<P: LeastSquares + ?Sized> Stepper for ScgStepper<'_, P> {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError> {
        let state = self.state.get_or_insert_with(|| ScgState::new(&it.grad));
        let out = scg_step(self.problem, &it.theta, it.loss, &it.grad, state)?;
        if !(state.lambda < 1e100) {
            return Ok(Step::Stop(StopReason::Stalled));
        }
        if out.accepted {
            *it = Iterate {
                theta: out.theta,
                loss: out.loss,
                grad: out.grad,
            };
        }
        Ok(Step::Continue)
    }
}
