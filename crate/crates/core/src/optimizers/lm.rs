//! Levenberg–Marquardt, plain and with evidence-framework (MacKay)
//! regularization.

use nalgebra::{DMatrix, DVector};

use super::{
    all_finite, dot, Iterate, LeastSquares, Step, Stepper, StopReason, TrainConfig, TrainError,
};

/// Upper bound applied to the regularization hyperparameters.
pub const HYPERPARAMETER_CEILING: f64 = 1e10;

/// Weights of the regularized objective `F = β·E_D + α·E_w`, with
/// `E_D = ½‖r‖²` and `E_w = ½‖θ‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub alpha: f64,
    pub beta: f64,
}

impl Regularization {
    pub const NONE: Regularization = Regularization {
        alpha: 0.0,
        beta: 1.0,
    };

    pub fn objective(&self, data_loss: f64, theta: &[f64]) -> f64 {
        self.beta * data_loss + self.alpha * 0.5 * dot(theta, theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmStep {
    pub theta: Vec<f64>,
    /// Half sum of squares at `theta`.
    pub loss: f64,
    pub mu: f64,
    pub accepted: bool,
}

/// Residuals, Jacobian products and loss at one point.
struct Linearization {
    loss: f64,
    jtj: DMatrix<f64>,
    /// `Jᵀr`, the gradient of the half sum of squares.
    jtr: DVector<f64>,
}

fn linearize<P: LeastSquares + ?Sized>(
    problem: &P,
    theta: &[f64],
) -> Result<Linearization, TrainError> {
    let n = problem.n_residuals();
    let p = problem.n_params();
    let mut r = vec![0.0; n];
    let mut jac = vec![0.0; n * p];
    let loss = problem.residual_jacobian(theta, &mut r, &mut jac)?;
    // A row-major n×p buffer is Jᵀ in column-major order.
    let jt = DMatrix::from_vec(p, n, jac);
    let r = DVector::from_vec(r);
    Ok(Linearization {
        loss,
        jtj: &jt * jt.transpose(),
        jtr: &jt * r,
    })
}

struct Attempt {
    theta: Vec<f64>,
    loss: f64,
    objective: f64,
    /// `tr(A⁻¹)` of the damped system matrix `A = βJᵀJ + (α+μ)I`.
    trace_inv: Option<f64>,
    zero_step: bool,
}

/// Solves `(βJᵀJ + (α+μ)I)Δ = −(βJᵀr + αθ)` by Cholesky. `None` when the
/// matrix is not numerically positive definite.
fn attempt<P: LeastSquares + ?Sized>(
    problem: &P,
    lin: &Linearization,
    theta: &[f64],
    mu: f64,
    reg: Regularization,
    want_trace: bool,
) -> Result<Option<Attempt>, TrainError> {
    let p = theta.len();
    let mut a = &lin.jtj * reg.beta;
    for i in 0..p {
        a[(i, i)] += reg.alpha + mu;
    }
    let th = DVector::from_column_slice(theta);
    let rhs = -(&lin.jtr * reg.beta + &th * reg.alpha);
    let Some(chol) = a.cholesky() else {
        return Ok(None);
    };
    let delta = chol.solve(&rhs);
    if !all_finite(delta.as_slice()) {
        return Ok(None);
    }
    let zero_step = delta.iter().all(|d| *d == 0.0);
    let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
    let loss = problem.loss(&cand)?;
    let objective = if loss.is_finite() {
        reg.objective(loss, &cand)
    } else {
        f64::INFINITY
    };
    let trace_inv = want_trace.then(|| chol.inverse().trace());
    Ok(Some(Attempt {
        theta: cand,
        loss,
        objective,
        trace_inv,
        zero_step,
    }))
}

fn accepts(current: f64, att: &Attempt) -> bool {
    att.objective < current || (att.zero_step && att.objective <= current)
}

/// One Levenberg–Marquardt attempt at damping `mu` on the plain sum of
/// squares. An accepted step lowers the loss and divides `mu` by
/// `1/mu_dec`; a rejected one leaves `theta` untouched and multiplies `mu`
/// by `mu_inc`. A factorization failure counts as a rejection.
pub fn lm_step<P: LeastSquares + ?Sized>(
    problem: &P,
    theta: &[f64],
    mu: f64,
    config: &TrainConfig,
) -> Result<LmStep, TrainError> {
    let lin = linearize(problem, theta)?;
    match attempt(problem, &lin, theta, mu, Regularization::NONE, false)? {
        Some(att) if accepts(lin.loss, &att) => Ok(LmStep {
            theta: att.theta,
            loss: att.loss,
            mu: (mu * config.mu_dec).max(f64::MIN_POSITIVE),
            accepted: true,
        }),
        _ => Ok(LmStep {
            theta: theta.to_vec(),
            loss: lin.loss,
            mu: mu * config.mu_inc,
            accepted: false,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesUpdate {
    pub alpha: f64,
    pub beta: f64,
    /// Effective number of well-determined parameters.
    pub gamma: f64,
    /// Set when γ or a division guard had to be clamped.
    pub clamped: bool,
}

/// Evidence re-estimation of `(α, β)`.
///
/// `hessian` is `H = 2βJᵀJ + 2αI` (damping folded into the diagonal). With
/// `γ = P − 2α·tr(H⁻¹)`: `α' = γ / (2E_w)` and `β' = (N − γ) / (2E_D)`.
pub fn bayes_hyperparam_update(
    data_loss: f64,
    weight_loss: f64,
    alpha: f64,
    n_residuals: usize,
    hessian: &DMatrix<f64>,
) -> Option<BayesUpdate> {
    let trace = hessian.clone().cholesky()?.inverse().trace();
    Some(bayes_from_trace(
        data_loss,
        weight_loss,
        alpha,
        hessian.nrows(),
        n_residuals,
        2.0 * alpha * trace,
    ))
}

/// `alpha_trace` is `2α·tr(H⁻¹)`.
fn bayes_from_trace(
    e_d: f64,
    e_w: f64,
    _alpha: f64,
    p: usize,
    n: usize,
    alpha_trace: f64,
) -> BayesUpdate {
    let p = p as f64;
    let n = n as f64;
    let raw = p - alpha_trace;
    let mut clamped = !(0.0..=p).contains(&raw);
    let gamma = if raw.is_nan() { p } else { raw.clamp(0.0, p) };
    let alpha = if e_w > 0.0 {
        (gamma / (2.0 * e_w)).min(HYPERPARAMETER_CEILING)
    } else {
        clamped = true;
        HYPERPARAMETER_CEILING
    };
    // β needs at least one residual degree of freedom.
    let dof = n - gamma;
    if dof < 1.0 {
        clamped = true;
    }
    let beta = if e_d > 0.0 {
        (dof.max(1.0) / (2.0 * e_d)).min(HYPERPARAMETER_CEILING)
    } else {
        clamped = true;
        HYPERPARAMETER_CEILING
    };
    BayesUpdate {
        alpha,
        beta,
        gamma,
        clamped,
    }
}

pub(crate) struct LmStepper<'a, P: ?Sized> {
    problem: &'a P,
    config: TrainConfig,
    mu: f64,
    lin: Option<Linearization>,
    bayes: bool,
    reg: Regularization,
    reg_steps: Vec<[f64; 2]>,
}

impl<'a, P: LeastSquares + ?Sized> LmStepper<'a, P> {
    pub fn new(problem: &'a P, config: &TrainConfig, bayes: bool) -> Self {
        Self {
            problem,
            config: config.clone(),
            mu: config.mu_init,
            lin: None,
            bayes,
            reg: Regularization::NONE,
            reg_steps: Vec::new(),
        }
    }
}

impl<P: LeastSquares + ?Sized> Stepper for LmStepper<'_, P> {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError> {
        let lin = match self.lin.take() {
            Some(l) => l,
            None => linearize(self.problem, &it.theta)?,
        };
        if !lin.loss.is_finite() || !all_finite(lin.jtj.as_slice()) {
            return Ok(Step::Stop(StopReason::NumericalFailure));
        }
        let current = self.reg.objective(lin.loss, &it.theta);
        loop {
            if self.mu > self.config.mu_max {
                self.lin = Some(lin);
                return Ok(Step::Stop(StopReason::MuOverflow));
            }
            match attempt(self.problem, &lin, &it.theta, self.mu, self.reg, self.bayes)? {
                Some(att) if accepts(current, &att) => {
                    self.mu = (self.mu * self.config.mu_dec).max(f64::MIN_POSITIVE);
                    let next = linearize(self.problem, &att.theta)?;
                    if self.bayes {
                        self.reg_steps.push([current, att.objective]);
                        let e_w = 0.5 * dot(&att.theta, &att.theta);
                        let alpha_trace = self.reg.alpha * att.trace_inv.unwrap_or(0.0);
                        let upd = bayes_from_trace(
                            att.loss,
                            e_w,
                            self.reg.alpha,
                            att.theta.len(),
                            self.problem.n_residuals(),
                            alpha_trace,
                        );
                        self.reg = Regularization {
                            alpha: upd.alpha,
                            beta: upd.beta,
                        };
                    }
                    let grad: Vec<f64> = next
                        .jtr
                        .iter()
                        .zip(&att.theta)
                        .map(|(g, t)| self.reg.beta * g + self.reg.alpha * t)
                        .collect();
                    *it = Iterate {
                        theta: att.theta,
                        loss: att.loss,
                        grad,
                    };
                    self.lin = Some(next);
                    return Ok(Step::Continue);
                }
                _ => self.mu *= self.config.mu_inc,
            }
        }
    }

    fn regularized_steps(&mut self) -> Vec<[f64; 2]> {
        std::mem::take(&mut self.reg_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{train_problem, Algorithm, LinearProblem};

    #[test]
    fn tiny_mu_lands_on_least_squares_optimum() {
        // y = 3x + noise-free: θ* = Σxy / Σx²
        let xs = [1.0, 2.0, -0.5, 0.25];
        let ys = [2.9, 6.3, -1.4, 0.8];
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let p = LinearProblem::new(xs.to_vec(), ys.to_vec(), 1);
        let step = lm_step(&p, &[0.0], 1e-12, &TrainConfig::default()).unwrap();
        assert!(step.accepted);
        assert!((step.theta[0] - sxy / sxx).abs() <= 1e-8);
    }

    #[test]
    fn zero_residuals_accept_zero_step() {
        let p = LinearProblem::new(vec![1.0, 2.0], vec![2.0, 4.0], 1);
        let c = TrainConfig::default();
        let step = lm_step(&p, &[2.0], 1e-3, &c).unwrap();
        assert!(step.accepted);
        assert_eq!(step.theta, vec![2.0]);
        assert!(step.mu < 1e-3);
    }

    /// r(θ) = 1 − θ²; far from θ = ±1 the Gauss–Newton step overshoots.
    struct Square;

    impl LeastSquares for Square {
        fn n_params(&self) -> usize {
            1
        }
        fn n_residuals(&self) -> usize {
            1
        }
        fn residuals(
            &self,
            t: &[f64],
            out: &mut [f64],
        ) -> Result<f64, crate::network::NetworkError> {
            out[0] = 1.0 - t[0] * t[0];
            Ok(0.5 * out[0] * out[0])
        }
        fn loss_grad(&self, t: &[f64], g: &mut [f64]) -> Result<f64, crate::network::NetworkError> {
            let r = 1.0 - t[0] * t[0];
            g[0] = r * (-2.0 * t[0]);
            Ok(0.5 * r * r)
        }
        fn residual_jacobian(
            &self,
            t: &[f64],
            r: &mut [f64],
            j: &mut [f64],
        ) -> Result<f64, crate::network::NetworkError> {
            j[0] = -2.0 * t[0];
            self.residuals(t, r)
        }
    }

    #[test]
    fn rejected_step_keeps_theta_bitwise() {
        // From θ = 0.1 the step to ≈4.93 raises the loss from 0.49 to ≈271.
        let theta = [0.1];
        let step = lm_step(&Square, &theta, 1e-3, &TrainConfig::default()).unwrap();
        assert!(!step.accepted);
        assert_eq!(step.theta[0].to_bits(), theta[0].to_bits());
        assert_eq!(step.mu, 1e-3 * 10.0);
    }

    #[test]
    fn training_recovers_after_rejections() {
        let out =
            train_problem(&Square, &[0.1], &TrainConfig::for_algorithm(Algorithm::LM)).unwrap();
        assert!(out.report.final_loss <= 1e-10);
        assert!((out.theta[0].abs() - 1.0).abs() < 1e-4);
        assert!(out.report.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gamma_always_within_bounds() {
        for trace in [-5.0, 0.0, 3.0, 100.0, f64::NAN] {
            let u = bayes_from_trace(1.0, 1.0, 0.1, 10, 40, trace);
            assert!((0.0..=10.0).contains(&u.gamma));
        }
        let u = bayes_from_trace(1.0, 1.0, 0.1, 10, 40, 20.0);
        assert!(u.clamped);
    }

    #[test]
    fn zero_weights_hit_the_ceiling() {
        let u = bayes_from_trace(1.0, 0.0, 0.1, 10, 40, 1.0);
        assert_eq!(u.alpha, HYPERPARAMETER_CEILING);
        assert!(u.clamped);
        assert!(u.alpha.is_finite());
    }

    #[test]
    fn effective_parameters_shrink_as_alpha_grows() {
        // Linear-Gaussian toy: H = 2βXᵀX + 2αI.
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.2, 0.0, 0.5, 1.0, 0.1, 0.0, 0.3, 1.0, 0.7, 0.7, 0.7],
        );
        let beta = 2.0;
        let xtx = x.tr_mul(&x);
        let mut last = f64::INFINITY;
        for alpha in [1e-4, 1e-2, 0.1, 1.0, 10.0, 100.0] {
            let h = &xtx * (2.0 * beta) + DMatrix::identity(3, 3) * (2.0 * alpha);
            let u = bayes_hyperparam_update(1.0, 1.0, alpha, 4, &h).unwrap();
            assert!(u.gamma <= 3.0);
            assert!(u.gamma < last);
            last = u.gamma;
        }
    }

    #[test]
    fn lmbr_regularized_objective_never_rises() {
        let xs: Vec<f64> = (0..30)
            .flat_map(|i| [1.0, i as f64 / 10.0, (i as f64 / 7.0).sin()])
            .collect();
        let ys: Vec<f64> = (0..30)
            .map(|i| 0.5 + (i as f64 / 10.0) * 0.3 + ((i * 7) % 5) as f64 * 0.01)
            .collect();
        let p = LinearProblem::new(xs, ys, 3);
        let out =
            train_problem(&p, &[0.0; 3], &TrainConfig::for_algorithm(Algorithm::LMbr)).unwrap();
        assert!(!out.report.regularized_steps.is_empty());
        for [before, after] in &out.report.regularized_steps {
            assert!(after <= before);
        }
    }

    #[test]
    fn mu_overflow_stops_training() {
        let p = LinearProblem::new(vec![1.0], vec![1.0], 1);
        let mut c = TrainConfig::for_algorithm(Algorithm::LM);
        c.mu_max = 1e-2;
        c.grad_tol = 1e-300;
        c.loss_tol = 1e-300;
        let out = train_problem(&p, &[0.0], &c).unwrap();
        assert!(matches!(
            out.report.stop_reason,
            StopReason::MuOverflow | StopReason::GradTol | StopReason::LossTol
        ));
    }
}
