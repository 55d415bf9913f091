use super::{
    all_finite, Algorithm, Iterate, LeastSquares, Step, Stepper, StopReason, TrainConfig,
    TrainError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GdFlags {
    pub momentum: bool,
    pub adaptive: bool,
}

impl GdFlags {
    pub fn for_algorithm(a: Algorithm) -> Self {
        Self {
            momentum: matches!(a, Algorithm::GDm | Algorithm::GDma),
            adaptive: matches!(a, Algorithm::GDa | Algorithm::GDma),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdState {
    pub lr: f64,
    pub prev_delta: Vec<f64>,
}

impl GdState {
    pub fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            prev_delta: vec![0.0; n],
        }
    }
}

/// Proposes `θ + Δθ` with `Δθ = −lr·g + momentum·Δθ_prev`. The returned
/// state carries the new `Δθ`.
pub fn gd_step(
    theta: &[f64],
    grad: &[f64],
    state: &GdState,
    flags: GdFlags,
    momentum: f64,
) -> (Vec<f64>, GdState) {
    let m = if flags.momentum { momentum } else { 0.0 };
    let delta: Vec<f64> = grad
        .iter()
        .zip(&state.prev_delta)
        .map(|(g, d)| -state.lr * g + m * d)
        .collect();
    let next: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + d).collect();
    (
        next,
        GdState {
            lr: state.lr,
            prev_delta: delta,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDecision {
    Accept,
    Reject,
}

/// Adaptive learning-rate rule: a loss rise above `max_loss_rise` rejects
/// the step and shrinks the rate; otherwise the step stands and a decrease
/// grows the rate.
pub fn gd_adapt(
    lr: f64,
    old_loss: f64,
    new_loss: f64,
    config: &TrainConfig,
) -> (StepDecision, f64) {
    if new_loss > old_loss * (1.0 + config.max_loss_rise) {
        (StepDecision::Reject, lr * config.lr_dec)
    } else if new_loss < old_loss {
        (StepDecision::Accept, lr * config.lr_inc)
    } else {
        (StepDecision::Accept, lr)
    }
}

pub(crate) struct GdStepper<'a, P: ?Sized> {
    problem: &'a P,
    config: TrainConfig,
    flags: GdFlags,
    state: GdState,
}

impl<'a, P: LeastSquares + ?Sized> GdStepper<'a, P> {
    pub fn new(problem: &'a P, config: &TrainConfig, flags: GdFlags) -> Self {
        Self {
            problem,
            config: config.clone(),
            flags,
            state: GdState::new(config.lr, problem.n_params()),
        }
    }
}

impl<P: LeastSquares + ?Sized> Stepper for GdStepper<'_, P> {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError> {
        let (theta, next_state) = gd_step(
            &it.theta,
            &it.grad,
            &self.state,
            self.flags,
            self.config.momentum,
        );
        let mut grad = vec![0.0; theta.len()];
        let loss = self.problem.loss_grad(&theta, &mut grad)?;
        if !self.flags.adaptive {
            if !loss.is_finite() || !all_finite(&grad) {
                return Ok(Step::Stop(StopReason::NumericalFailure));
            }
            self.state = next_state;
            *it = Iterate { theta, loss, grad };
            return Ok(Step::Continue);
        }
        let new_loss = if loss.is_finite() && all_finite(&grad) {
            loss
        } else {
            f64::INFINITY
        };
        let (decision, lr) = gd_adapt(self.state.lr, it.loss, new_loss, &self.config);
        match decision {
            StepDecision::Accept => {
                self.state = GdState {
                    lr,
                    prev_delta: next_state.prev_delta,
                };
                *it = Iterate { theta, loss, grad };
            }
            StepDecision::Reject => {
                self.state.lr = lr;
                self.state.prev_delta.iter_mut().for_each(|d| *d = 0.0);
                if !(lr > f64::MIN_POSITIVE) {
                    return Ok(Step::Stop(StopReason::NumericalFailure));
                }
            }
        }
        Ok(Step::Continue)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{train_problem, LinearProblem};

    #[test]
    fn plain_step() {
        let s = GdState::new(0.1, 2);
        let flags = GdFlags::for_algorithm(Algorithm::GD);
        let (theta, next) = gd_step(&[0.0, 0.0], &[1.0, -2.0], &s, flags, 0.9);
        assert_eq!(theta, vec![-0.1, 0.2]);
        assert_eq!(next.prev_delta, vec![-0.1, 0.2]);
    }

    #[test]
    fn pure_momentum() {
        let s = GdState {
            lr: 0.1,
            prev_delta: vec![1.0, 0.0],
        };
        let (theta, next) = gd_step(
            &[0.0, 0.0],
            &[0.0, 0.0],
            &s,
            GdFlags::for_algorithm(Algorithm::GDm),
            0.9,
        );
        assert_eq!(next.prev_delta, vec![0.9, 0.0]);
        assert_eq!(theta, vec![0.9, 0.0]);
    }

    #[test]
    fn adaptive_rule_trace() {
        let mut c = TrainConfig::for_algorithm(Algorithm::GDa);
        c.lr_dec = 0.5;
        // +10% rise rejects and halves
        assert_eq!(gd_adapt(0.2, 1.0, 1.1, &c), (StepDecision::Reject, 0.1));
        // +3% rise is tolerated, rate unchanged
        assert_eq!(gd_adapt(0.2, 1.0, 1.03, &c), (StepDecision::Accept, 0.2));
        let (d, lr) = gd_adapt(0.2, 1.0, 0.9, &c);
        assert_eq!(d, StepDecision::Accept);
        assert!((lr - 0.21).abs() < 1e-15);
    }

    #[test]
    fn adaptive_rejection_leaves_parameters_unchanged() {
        // ½(2θ - 2)²: a unit step from 0 overshoots to loss 18 vs 2.
        let p = LinearProblem::new(vec![2.0], vec![2.0], 1);
        let mut c = TrainConfig::for_algorithm(Algorithm::GDa).with_max_epochs(1);
        c.lr = 1.0;
        c.lr_dec = 0.5;
        let out = train_problem(&p, &[0.0], &c).unwrap();
        assert_eq!(out.theta, vec![0.0]);
        assert_eq!(out.report.loss_trace, vec![2.0, 2.0]);

        let mut stepper = GdStepper::new(&p, &c, GdFlags::for_algorithm(Algorithm::GDa));
        let mut grad = vec![0.0];
        let loss = p.loss_grad(&[0.0], &mut grad).unwrap();
        let mut it = Iterate {
            theta: vec![0.0],
            loss,
            grad,
        };
        stepper.step(&mut it).unwrap();
        assert_eq!(it.theta, vec![0.0]);
        assert_eq!(stepper.state.lr, 0.5);
    }
}
