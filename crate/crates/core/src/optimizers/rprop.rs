use super::{
    all_finite, Iterate, LeastSquares, RpropParams, Step, Stepper, StopReason, TrainConfig,
    TrainError,
};

/// Per-parameter step sizes and the gradient seen on the previous epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    pub step: Vec<f64>,
    pub prev_grad: Vec<f64>,
}

impl RpropState {
    pub fn new(n: usize, params: &RpropParams) -> Self {
        Self {
            step: vec![params.delta0; n],
            prev_grad: vec![0.0; n],
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One iRprop− update. A sign flip shrinks the step, forgets the gradient
/// and leaves that parameter in place for the epoch.
pub fn rprop_step(
    theta: &[f64],
    grad: &[f64],
    state: &RpropState,
    params: &RpropParams,
) -> (Vec<f64>, RpropState) {
    let mut next = theta.to_vec();
    let mut st = state.clone();
    for i in 0..theta.len() {
        let g = grad[i];
        let agree = g * state.prev_grad[i];
        if agree > 0.0 {
            st.step[i] = (st.step[i] * params.eta_plus).min(params.delta_max);
        } else if agree < 0.0 {
            st.step[i] = (st.step[i] * params.eta_minus).max(params.delta_min);
            st.prev_grad[i] = 0.0;
            continue;
        }
        next[i] -= sign(g) * st.step[i];
        st.prev_grad[i] = g;
    }
    (next, st)
}

pub(crate) struct RpropStepper<'a, P: ?Sized> {
    problem: &'a P,
    params: RpropParams,
    state: RpropState,
}

impl<'a, P: LeastSquares + ?Sized> RpropStepper<'a, P> {
    pub fn new(problem: &'a P, config: &TrainConfig) -> Self {
        Self {
            problem,
            params: config.rprop,
            state: RpropState::new(problem.n_params(), &config.rprop),
        }
    }
}

impl<P: LeastSquares + ?Sized> Stepper for RpropStepper<'_, P> {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError> {
        let (theta, state) = rprop_step(&it.theta, &it.grad, &self.state, &self.params);
        let mut grad = vec![0.0; theta.len()];
        let loss = self.problem.loss_grad(&theta, &mut grad)?;
        if !loss.is_finite() || !all_finite(&grad) {
            return Ok(Step::Stop(StopReason::NumericalFailure));
        }
        self.state = state;
        *it = Iterate { theta, loss, grad };
        Ok(Step::Continue)
    }
}
