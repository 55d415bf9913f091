//! BFGS and one-step secant directions.

use super::cg::initial_step;
use super::line_search::{line_search, LineSearchError, WolfeParams};
use super::{dot, Iterate, LeastSquares, Step, Stepper, StopReason, TrainError};

/// Parameter step `s = θ' − θ` and gradient change `y = g' − g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantPair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

impl SecantPair {
    fn curvature_ok(&self) -> bool {
        let sy = dot(&self.s, &self.y);
        let scale = dot(&self.s, &self.s).sqrt() * dot(&self.y, &self.y).sqrt();
        sy.is_finite() && sy > 1e-10 * scale
    }
}

/// Dense inverse-Hessian approximation, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsState {
    pub n: usize,
    pub h: Vec<f64>,
    /// False until the first accepted update; used to rescale the identity.
    pub updated: bool,
}

impl BfgsState {
    pub fn new(n: usize) -> Self {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        Self {
            n,
            h,
            updated: false,
        }
    }

    fn update(&mut self, pair: &SecantPair) {
        let n = self.n;
        let sy = dot(&pair.s, &pair.y);
        if !self.updated {
            // Shanno–Phua scaling of the initial identity.
            let gamma = sy / dot(&pair.y, &pair.y);
            self.h.iter_mut().for_each(|v| *v *= gamma);
        }
        let rho = 1.0 / sy;
        let hy: Vec<f64> = (0..n)
            .map(|i| dot(&self.h[i * n..(i + 1) * n], &pair.y))
            .collect();
        let yhy = dot(&pair.y, &hy);
        // H' = H − ρ(s·hyᵀ + hy·sᵀ) + (ρ²·yᵀHy + ρ)·s·sᵀ, H symmetric
        let c = rho * rho * yhy + rho;
        for i in 0..n {
            for j in 0..n {
                self.h[i * n + j] +=
                    -rho * (pair.s[i] * hy[j] + hy[i] * pair.s[j]) + c * pair.s[i] * pair.s[j];
            }
        }
        self.updated = true;
    }
}

/// Only the most recent secant pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OssState {
    pub last: Option<SecantPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuasiNewtonState {
    Bfgs(BfgsState),
    Oss(OssState),
}

impl QuasiNewtonState {
    pub fn bfgs(n: usize) -> Self {
        QuasiNewtonState::Bfgs(BfgsState::new(n))
    }

    pub fn oss() -> Self {
        QuasiNewtonState::Oss(OssState::default())
    }

    pub fn reset(&mut self) {
        match self {
            QuasiNewtonState::Bfgs(b) => *b = BfgsState::new(b.n),
            QuasiNewtonState::Oss(o) => o.last = None,
        }
    }

    /// True when the next direction is plain steepest descent.
    pub fn is_fresh(&self) -> bool {
        match self {
            QuasiNewtonState::Bfgs(b) => !b.updated,
            QuasiNewtonState::Oss(o) => o.last.is_none(),
        }
    }

    /// Folds in a secant pair. A pair failing `sᵀy > 1e-10·‖s‖‖y‖` resets
    /// the state instead and `false` is returned.
    pub fn record(&mut self, pair: SecantPair) -> bool {
        if !pair.curvature_ok() {
            self.reset();
            return false;
        }
        match self {
            QuasiNewtonState::Bfgs(b) => b.update(&pair),
            QuasiNewtonState::Oss(o) => o.last = Some(pair),
        }
        true
    }
}

/// Search direction at `grad`: `−H·g` for BFGS, the one-step secant
/// combination `−g + a·s + b·y` for OSS.
pub fn quasi_newton_step(state: &QuasiNewtonState, grad: &[f64]) -> Vec<f64> {
    match state {
        QuasiNewtonState::Bfgs(b) => {
            let n = b.n;
            (0..n)
                .map(|i| -dot(&b.h[i * n..(i + 1) * n], grad))
                .collect()
        }
        QuasiNewtonState::Oss(OssState { last: None }) => grad.iter().map(|g| -g).collect(),
        QuasiNewtonState::Oss(OssState { last: Some(p) }) => {
            let sy = dot(&p.s, &p.y);
            let sg = dot(&p.s, grad);
            let yg = dot(&p.y, grad);
            let yy = dot(&p.y, &p.y);
            let a = -(1.0 + yy / sy) * sg / sy + yg / sy;
            let b = sg / sy;
            grad.iter()
                .zip(p.s.iter().zip(&p.y))
                .map(|(g, (s, y))| -g + a * s + b * y)
                .collect()
        }
    }
}

pub(crate) struct QuasiNewtonStepper<'a, P: ?Sized> {
    problem: &'a P,
    state: QuasiNewtonState,
    flagged: usize,
}

impl<'a, P: LeastSquares + ?Sized> QuasiNewtonStepper<'a, P> {
    pub fn new(problem: &'a P, state: QuasiNewtonState) -> Self {
        Self {
            problem,
            state,
            flagged: 0,
        }
    }
}

impl<P: LeastSquares + ?Sized> Stepper for QuasiNewtonStepper<'_, P> {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError> {
        let mut dir = quasi_newton_step(&self.state, &it.grad);
        if !(dot(&dir, &it.grad) < 0.0) {
            self.state.reset();
            dir = it.grad.iter().map(|g| -g).collect();
        }
        loop {
            let fresh = self.state.is_fresh();
            let alpha0 = if fresh {
                initial_step(&it.grad, &dir, None)
            } else {
                1.0
            };
            match line_search(
                self.problem,
                &it.theta,
                it.loss,
                &it.grad,
                &dir,
                alpha0,
                WolfeParams::QUASI_NEWTON,
            ) {
                Ok(out) => {
                    self.flagged += out.flagged as usize;
                    let pair = SecantPair {
                        s: out
                            .theta
                            .iter()
                            .zip(&it.theta)
                            .map(|(a, b)| a - b)
                            .collect(),
                        y: out.grad.iter().zip(&it.grad).map(|(a, b)| a - b).collect(),
                    };
                    self.state.record(pair);
                    *it = Iterate {
                        theta: out.theta,
                        loss: out.loss,
                        grad: out.grad,
                    };
                    return Ok(Step::Continue);
                }
                Err(LineSearchError::Network(e)) => return Err(e.into()),
                Err(_) if !fresh => {}
                Err(LineSearchError::NotDescent(_)) => {
                    return Ok(Step::Stop(StopReason::NumericalFailure))
                }
                Err(LineSearchError::NoDecrease) => return Ok(Step::Stop(StopReason::Stalled)),
            }
            self.state.reset();
            dir = it.grad.iter().map(|g| -g).collect();
        }
    }

    fn flagged_line_searches(&self) -> usize {
        self.flagged
    }
}
