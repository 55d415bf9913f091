use super::line_search::{line_search, LineSearchError, WolfeParams};
use super::{dot, Iterate, LeastSquares, Step, Stepper, StopReason, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgVariant {
    FletcherReeves,
    /// Polak–Ribière with the non-negative clamp (PR+).
    PolakRibiere,
    /// PR+ update with Powell–Beale orthogonality restarts.
    PowellBeale,
}

/// Previous gradient and direction; empty before the first iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CgState {
    pub prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl CgState {
    pub fn remember(&mut self, grad: &[f64], dir: &[f64]) {
        self.prev = Some((grad.to_vec(), dir.to_vec()));
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }
}

/// Next search direction `−g + β·d_prev` and the `β` used (`0` on restart).
pub fn cg_direction(grad: &[f64], state: &CgState, variant: CgVariant) -> (Vec<f64>, f64) {
    let steepest = || grad.iter().map(|g| -g).collect::<Vec<f64>>();
    let Some((g_prev, d_prev)) = &state.prev else {
        return (steepest(), 0.0);
    };
    let prev_sq = dot(g_prev, g_prev);
    if !(prev_sq > 0.0) {
        return (steepest(), 0.0);
    }
    let g_sq = dot(grad, grad);
    let overlap = dot(grad, g_prev);
    let beta = match variant {
        CgVariant::FletcherReeves => g_sq / prev_sq,
        CgVariant::PolakRibiere => ((g_sq - overlap) / prev_sq).max(0.0),
        CgVariant::PowellBeale => {
            if overlap.abs() >= 0.2 * g_sq {
                return (steepest(), 0.0);
            }
            ((g_sq - overlap) / prev_sq).max(0.0)
        }
    };
    if !beta.is_finite() {
        return (steepest(), 0.0);
    }
    let dir = grad
        .iter()
        .zip(d_prev)
        .map(|(g, d)| -g + beta * d)
        .collect();
    (dir, beta)
}

pub(crate) struct CgStepper<'a, P: ?Sized> {
    problem: &'a P,
    variant: CgVariant,
    state: CgState,
    prev_alpha_slope: Option<f64>,
    flagged: usize,
}

impl<'a, P: LeastSquares + ?Sized> CgStepper<'a, P> {
    pub fn new(problem: &'a P, variant: CgVariant) -> Self {
        Self {
            problem,
            variant,
            state: CgState::default(),
            prev_alpha_slope: None,
            flagged: 0,
        }
    }
}

/// First trial step: unit step scaled by the gradient on a restart,
/// otherwise matched to the previous iteration's first-order decrease.
pub(crate) fn initial_step(grad: &[f64], dir: &[f64], prev_alpha_slope: Option<f64>) -> f64 {
    let slope = dot(grad, dir);
    match prev_alpha_slope {
        Some(prev) if slope < 0.0 => (prev / slope).min(1e6),
        _ => 1.0 / dot(dir, dir).sqrt().max(1.0),
    }
}

impl<P: LeastSquares + ?Sized> Stepper for CgStepper<'_, P> {
    fn step(&mut self, it: &mut Iterate) -> Result<Step, TrainError> {
        let (mut dir, _) = cg_direction(&it.grad, &self.state, self.variant);
        if !(dot(&dir, &it.grad) < 0.0) {
            self.state.reset();
            dir = it.grad.iter().map(|g| -g).collect();
        }
        let mut restarted = self.state.prev.is_none();
        loop {
            let alpha0 = initial_step(
                &it.grad,
                &dir,
                if restarted {
                    None
                } else {
                    self.prev_alpha_slope
                },
            );
            match line_search(
                self.problem,
                &it.theta,
                it.loss,
                &it.grad,
                &dir,
                alpha0,
                WolfeParams::CONJUGATE_GRADIENT,
            ) {
                Ok(out) => {
                    self.flagged += out.flagged as usize;
                    self.prev_alpha_slope = Some(out.alpha * dot(&it.grad, &dir));
                    self.state.remember(&it.grad, &dir);
                    *it = Iterate {
                        theta: out.theta,
                        loss: out.loss,
                        grad: out.grad,
                    };
                    return Ok(Step::Continue);
                }
                Err(LineSearchError::Network(e)) => return Err(e.into()),
                Err(LineSearchError::NotDescent(_)) if !restarted => {}
                Err(LineSearchError::NoDecrease) if !restarted => {}
                Err(LineSearchError::NotDescent(_)) => {
                    return Ok(Step::Stop(StopReason::NumericalFailure))
                }
                Err(LineSearchError::NoDecrease) => return Ok(Step::Stop(StopReason::Stalled)),
            }
            self.state.reset();
            restarted = true;
            dir = it.grad.iter().map(|g| -g).collect();
        }
    }

    fn flagged_line_searches(&self) -> usize {
        self.flagged
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_direction_is_steepest_descent() {
        let (d, beta) = cg_direction(&[3.0, 4.0], &CgState::default(), CgVariant::FletcherReeves);
        assert_eq!(d, vec![-3.0, -4.0]);
        assert_eq!(beta, 0.0);
    }

    #[test]
    fn fletcher_reeves_equal_gradients() {
        let g = [1.0, -2.0];
        let prev_dir = [0.5, 0.25];
        let mut s = CgState::default();
        s.remember(&g, &prev_dir);
        let (d, beta) = cg_direction(&g, &s, CgVariant::FletcherReeves);
        assert_eq!(beta, 1.0);
        assert_eq!(d, vec![-1.0 + 0.5, 2.0 + 0.25]);
    }

    #[test]
    fn polak_ribiere_equal_gradients_vanish() {
        let g = [1.0, -2.0];
        let mut s = CgState::default();
        s.remember(&g, &[0.5, 0.25]);
        let (d, beta) = cg_direction(&g, &s, CgVariant::PolakRibiere);
        assert_eq!(beta, 0.0);
        assert_eq!(d, vec![-1.0, 2.0]);
    }

    #[test]
    fn polak_ribiere_clamps_negative_beta() {
        let mut s = CgState::default();
        s.remember(&[1.0, 0.0], &[-1.0, 0.0]);
        // gᵀ(g − g_prev) = 0.25 − 0.5 < 0
        let (_, beta) = cg_direction(&[0.5, 0.0], &s, CgVariant::PolakRibiere);
        assert_eq!(beta, 0.0);
    }

    #[test]
    fn powell_beale_restarts_on_overlap() {
        let mut s = CgState::default();
        s.remember(&[1.0, 0.0], &[-1.0, 0.0]);
        // |g_prevᵀg| = 1 ≥ 0.2·‖g‖² = 0.4
        let (d, beta) = cg_direction(&[1.0, 1.0], &s, CgVariant::PowellBeale);
        assert_eq!((d, beta), (vec![-1.0, -1.0], 0.0));
        // orthogonal gradients keep the conjugate update
        let (_, beta) = cg_direction(&[0.0, 1.0], &s, CgVariant::PowellBeale);
        assert_eq!(beta, 1.0);
    }

    #[test]
    fn zero_previous_gradient_restarts() {
        let mut s = CgState::default();
        s.remember(&[0.0, 0.0], &[1.0, 1.0]);
        for v in [
            CgVariant::FletcherReeves,
            CgVariant::PolakRibiere,
            CgVariant::PowellBeale,
        ] {
            assert_eq!(cg_direction(&[1.0, 2.0], &s, v).0, vec![-1.0, -2.0]);
        }
    }
}
