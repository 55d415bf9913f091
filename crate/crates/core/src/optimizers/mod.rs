//! The thirteen full-batch training algorithms behind one `train` contract.

mod cg;
mod gd;
mod line_search;
mod lm;
mod problem;
mod quasi_newton;
mod rprop;
mod scg;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkError, Pattern};

pub use cg::{cg_direction, CgState, CgVariant};
pub use gd::{gd_adapt, gd_step, GdFlags, GdState, StepDecision};
pub use line_search::{line_search, LineSearchError, LineSearchOutcome, WolfeParams};
pub use lm::{bayes_hyperparam_update, lm_step, BayesUpdate, LmStep, Regularization};
pub use problem::{LeastSquares, LinearProblem, NetworkProblem};
pub use quasi_newton::{quasi_newton_step, BfgsState, OssState, QuasiNewtonState, SecantPair};
pub use rprop::{rprop_step, RpropState};
pub use scg::{scg_step, ScgState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    /// Levenberg–Marquardt on the plain sum of squares.
    LM,
    /// Levenberg–Marquardt with Bayesian (evidence) regularization.
    LMbr,
    GD,
    GDm,
    GDa,
    GDma,
    /// Conjugate gradient with Powell–Beale restarts.
    CGpb,
    CGfr,
    CGpr,
    SCG,
    BFGS,
    /// One-step secant.
    OSS,
    /// Resilient backpropagation (iRprop−).
    RBP,
}

impl Algorithm {
    pub const ALL: [Algorithm; 13] = [
        Algorithm::LM,
        Algorithm::LMbr,
        Algorithm::GD,
        Algorithm::GDm,
        Algorithm::GDa,
        Algorithm::GDma,
        Algorithm::CGpb,
        Algorithm::CGfr,
        Algorithm::CGpr,
        Algorithm::SCG,
        Algorithm::BFGS,
        Algorithm::OSS,
        Algorithm::RBP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LM => "LM",
            Algorithm::LMbr => "LMbr",
            Algorithm::GD => "GD",
            Algorithm::GDm => "GDm",
            Algorithm::GDa => "GDa",
            Algorithm::GDma => "GDma",
            Algorithm::CGpb => "CGpb",
            Algorithm::CGfr => "CGfr",
            Algorithm::CGpr => "CGpr",
            Algorithm::SCG => "SCG",
            Algorithm::BFGS => "BFGS",
            Algorithm::OSS => "OSS",
            Algorithm::RBP => "RBP",
        }
    }

    /// Algorithms whose training-loss trace never increases.
    pub fn is_monotone(self) -> bool {
        matches!(
            self,
            Algorithm::LM
                | Algorithm::CGpb
                | Algorithm::CGfr
                | Algorithm::CGpr
                | Algorithm::SCG
                | Algorithm::BFGS
                | Algorithm::OSS
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TrainError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpropParams {
    pub delta0: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        Self {
            delta0: 0.07,
            delta_min: 1e-6,
            delta_max: 50.0,
            eta_plus: 1.2,
            eta_minus: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub loss_tol: f64,
    pub lr: f64,
    pub momentum: f64,
    pub lr_inc: f64,
    pub lr_dec: f64,
    /// Largest relative loss increase an adaptive GD step may make and
    /// still be accepted.
    pub max_loss_rise: f64,
    pub mu_init: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub mu_max: f64,
    pub rprop: RpropParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_algorithm(Algorithm::LM)
    }
}

impl TrainConfig {
    /// Defaults for `algorithm`; LM-family runs get a shorter epoch budget.
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        let max_epochs = match algorithm {
            Algorithm::LM | Algorithm::LMbr => 300,
            _ => 1000,
        };
        Self {
            algorithm,
            max_epochs,
            grad_tol: 1e-7,
            loss_tol: 1e-10,
            lr: 0.01,
            momentum: 0.9,
            lr_inc: 1.05,
            lr_dec: 0.7,
            max_loss_rise: 0.04,
            mu_init: 1e-3,
            mu_inc: 10.0,
            mu_dec: 0.1,
            mu_max: 1e10,
            rprop: RpropParams::default(),
            seed: 0,
        }
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !positive(self.grad_tol) || !positive(self.loss_tol) {
            return bad("tolerances must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !positive(self.lr) || !(self.lr_inc >= 1.0) || !(self.lr_dec > 0.0 && self.lr_dec < 1.0)
        {
            return bad("learning-rate schedule must satisfy lr > 0, lr_inc >= 1, 0 < lr_dec < 1");
        }
        if !(self.max_loss_rise >= 0.0) {
            return bad("max_loss_rise must be non-negative");
        }
        if !positive(self.mu_init)
            || !(self.mu_inc > 1.0)
            || !(self.mu_dec > 0.0 && self.mu_dec < 1.0)
            || !(self.mu_max > self.mu_init)
        {
            return bad("mu schedule must satisfy mu_init > 0, mu_inc > 1, 0 < mu_dec < 1, mu_max > mu_init");
        }
        let r = &self.rprop;
        if !(r.eta_minus > 0.0 && r.eta_minus < 1.0 && r.eta_plus > 1.0) {
            return bad("rprop factors must satisfy 0 < eta_minus < 1 < eta_plus");
        }
        if !(positive(r.delta_min) && r.delta_min <= r.delta0 && r.delta0 <= r.delta_max) {
            return bad("rprop steps must satisfy 0 < delta_min <= delta0 <= delta_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    GradTol,
    LossTol,
    MuOverflow,
    NumericalFailure,
    /// A line search found no decreasing step even along steepest descent.
    Stalled,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::GradTol => "grad_tol",
            StopReason::LossTol => "loss_tol",
            StopReason::MuOverflow => "mu_overflow",
            StopReason::NumericalFailure => "numerical_failure",
            StopReason::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    /// Half sum of squared residuals at the returned parameters.
    pub final_loss: f64,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    /// Half sum of squares before training and after every epoch.
    pub loss_trace: Vec<f64>,
    /// LMbr only: regularized objective before and after each epoch's
    /// step, both under the hyperparameters that step used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regularized_steps: Vec<[f64; 2]>,
    /// Line searches that ended on a flagged fallback step.
    #[serde(default)]
    pub flagged_line_searches: usize,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for (i, l) in self.loss_trace.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        Ok(())
    }

    pub fn is_failure(&self) -> bool {
        self.stop_reason == StopReason::NumericalFailure
    }
}

/// Current point of an iterative method.
pub(crate) struct Iterate {
    pub theta: Vec<f64>,
    /// Half sum of squares at `theta`.
    pub loss: f64,
    /// Gradient of the objective the method minimizes.
    pub grad: Vec<f64>,
}

pub(crate) enum Step {
    Continue,
    Stop(StopReason),
}

pub(crate) trait Stepper {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError>;

    fn regularized_steps(&mut self) -> Vec<[f64; 2]> {
        Vec::new()
    }

    fn flagged_line_searches(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    pub report: TrainReport,
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Trains `net` on `batch`, returning the trained copy.
pub fn train(
    net: &Network,
    batch: &[Pattern],
    config: &TrainConfig,
) -> Result<(Network, TrainReport), TrainError> {
    let problem = NetworkProblem::new(net, batch)?;
    let out = train_problem(&problem, net.params(), config)?;
    Ok((net.with_params(&out.theta)?, out.report))
}

/// Minimizes any least-squares objective from `theta0`.
pub fn train_problem<P: LeastSquares + ?Sized>(
    problem: &P,
    theta0: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if theta0.len() != problem.n_params() {
        return Err(NetworkError::Dimension {
            expected: problem.n_params(),
            got: theta0.len(),
        }
        .into());
    }
    let mut grad = vec![0.0; theta0.len()];
    let loss = problem.loss_grad(theta0, &mut grad)?;
    let mut it = Iterate {
        theta: theta0.to_vec(),
        loss,
        grad,
    };
    let report =
        |it: &Iterate, trace: Vec<f64>, stop: StopReason, reg: Vec<[f64; 2]>, flagged: usize| {
            TrainReport {
                algorithm: config.algorithm,
                final_loss: it.loss,
                epochs_run: trace.len() - 1,
                stop_reason: stop,
                loss_trace: trace,
                regularized_steps: reg,
                flagged_line_searches: flagged,
            }
        };
    if !it.loss.is_finite() || !all_finite(&it.grad) {
        let theta = it.theta.clone();
        return Ok(TrainOutcome {
            report: report(
                &it,
                vec![it.loss],
                StopReason::NumericalFailure,
                Vec::new(),
                0,
            ),
            theta,
        });
    }

    let mut stepper: Box<dyn Stepper + '_> = match config.algorithm {
        Algorithm::LM => Box::new(lm::LmStepper::new(problem, config, false)),
        Algorithm::LMbr => Box::new(lm::LmStepper::new(problem, config, true)),
        Algorithm::GD | Algorithm::GDm | Algorithm::GDa | Algorithm::GDma => Box::new(
            gd::GdStepper::new(problem, config, GdFlags::for_algorithm(config.algorithm)),
        ),
        Algorithm::CGpb => Box::new(cg::CgStepper::new(problem, CgVariant::PowellBeale)),
        Algorithm::CGfr => Box::new(cg::CgStepper::new(problem, CgVariant::FletcherReeves)),
        Algorithm::CGpr => Box::new(cg::CgStepper::new(problem, CgVariant::PolakRibiere)),
        Algorithm::SCG => Box::new(scg::ScgStepper::new(problem)),
        Algorithm::BFGS => Box::new(quasi_newton::QuasiNewtonStepper::new(
            problem,
            QuasiNewtonState::bfgs(theta0.len()),
        )),
        Algorithm::OSS => Box::new(quasi_newton::QuasiNewtonStepper::new(
            problem,
            QuasiNewtonState::oss(),
        )),
        Algorithm::RBP => Box::new(rprop::RpropStepper::new(problem, config)),
    };

    let mut trace = vec![it.loss];
    let stop = loop {
        if inf_norm(&it.grad) <= config.grad_tol {
            break StopReason::GradTol;
        }
        if it.loss <= config.loss_tol {
            break StopReason::LossTol;
        }
        if trace.len() > config.max_epochs {
            break StopReason::MaxEpochs;
        }
        match stepper.step(&mut it)? {
            Step::Continue => trace.push(it.loss),
            Step::Stop(reason) => break reason,
        }
    };
    let reg = stepper.regularized_steps();
    let flagged = stepper.flagged_line_searches();
    let theta = it.theta.clone();
    Ok(TrainOutcome {
        report: report(&it, trace, stop, reg, flagged),
        theta,
    })
}
