//! Strong-Wolfe bracket-and-zoom line search with cubic interpolation.

use thiserror::Error;

use super::{all_finite, dot, LeastSquares};
use crate::network::NetworkError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_zoom: usize,
    pub max_expand: usize,
}

impl WolfeParams {
    pub const CONJUGATE_GRADIENT: WolfeParams = WolfeParams {
        c1: 1e-4,
        c2: 0.1,
        max_zoom: 25,
        max_expand: 40,
    };
    pub const QUASI_NEWTON: WolfeParams = WolfeParams {
        c1: 1e-4,
        c2: 0.9,
        max_zoom: 25,
        max_expand: 40,
    };
}

#[derive(Debug, Error)]
pub enum LineSearchError {
    #[error("direction is not a descent direction (slope {0})")]
    NotDescent(f64),
    #[error("no step along the direction decreases the loss")]
    NoDecrease,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    /// True when the strong Wolfe conditions were not met and the shortest
    /// bracketed decreasing step was returned instead.
    pub flagged: bool,
    pub evaluations: usize,
}

#[derive(Clone)]
struct Point {
    a: f64,
    f: f64,
    d: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
}

struct Search<'a, P: ?Sized> {
    problem: &'a P,
    theta: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    d0: f64,
    params: WolfeParams,
    evals: usize,
}

impl<P: LeastSquares + ?Sized> Search<'_, P> {
    fn eval(&mut self, a: f64) -> Result<Point, LineSearchError> {
        self.evals += 1;
        let theta: Vec<f64> = self
            .theta
            .iter()
            .zip(self.dir)
            .map(|(t, d)| t + a * d)
            .collect();
        let mut grad = vec![0.0; theta.len()];
        let f = self.problem.loss_grad(&theta, &mut grad)?;
        let (f, d) = if f.is_finite() && all_finite(&grad) {
            (f, dot(&grad, self.dir))
        } else {
            (f64::INFINITY, f64::NAN)
        };
        Ok(Point {
            a,
            f,
            d,
            theta,
            grad,
        })
    }

    fn armijo(&self, p: &Point) -> bool {
        p.f.is_finite() && p.f <= self.f0 + self.params.c1 * p.a * self.d0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.d.abs() <= -self.params.c2 * self.d0
    }

    fn done(&self, p: Point, flagged: bool) -> LineSearchOutcome {
        LineSearchOutcome {
            alpha: p.a,
            theta: p.theta,
            loss: p.f,
            grad: p.grad,
            flagged,
            evaluations: self.evals,
        }
    }

    /// One secant step on φ' from the origin; exact for quadratics.
    fn polish(&mut self, p: Point) -> Result<LineSearchOutcome, LineSearchError> {
        if p.d.abs() > 1e-12 * self.d0.abs() && p.d > self.d0 {
            let a = p.a * self.d0 / (self.d0 - p.d);
            if a.is_finite() && a > 0.0 && a != p.a {
                let q = self.eval(a)?;
                if q.f <= p.f && self.armijo(&q) && self.curvature(&q) {
                    return Ok(self.done(q, false));
                }
            }
        }
        Ok(self.done(p, false))
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<LineSearchOutcome, LineSearchError> {
        for _ in 0..self.params.max_zoom {
            let (left, right) = if lo.a < hi.a {
                (lo.a, hi.a)
            } else {
                (hi.a, lo.a)
            };
            let width = right - left;
            let a = match cubic_min(&lo, &hi) {
                Some(a) if a > left + 0.01 * width && a < right - 0.01 * width => a,
                // shrink quickly out of an overflowing region
                _ if !hi.f.is_finite() => lo.a + 0.1 * (hi.a - lo.a),
                _ => 0.5 * (lo.a + hi.a),
            };
            let p = self.eval(a)?;
            if !self.armijo(&p) || p.f >= lo.f {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return self.polish(p);
                }
                if p.d * (hi.a - lo.a) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
            if width <= f64::EPSILON * right.max(1e-300) {
                break;
            }
        }
        if lo.a > 0.0 {
            return Ok(self.done(lo, true));
        }
        // Nothing decreasing inside the bracket yet: back off geometrically.
        let mut a = hi.a.min(1.0);
        for _ in 0..60 {
            a *= 0.25;
            let p = self.eval(a)?;
            if p.f < self.f0 {
                return Ok(self.done(p, true));
            }
        }
        Err(LineSearchError::NoDecrease)
    }
}

/// Minimizer of the cubic through two points with slopes, if it exists.
fn cubic_min(p: &Point, q: &Point) -> Option<f64> {
    if !(p.f.is_finite() && q.f.is_finite() && p.d.is_finite() && q.d.is_finite()) {
        return None;
    }
    let d1 = p.d + q.d - 3.0 * (p.f - q.f) / (p.a - q.a);
    let disc = d1 * d1 - p.d * q.d;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.a - p.a).signum() * disc.sqrt();
    let a = q.a - (q.a - p.a) * (q.d + d2 - d1) / (q.d - p.d + 2.0 * d2);
    a.is_finite().then_some(a)
}

/// Finds `α > 0` along `dir` meeting the strong Wolfe conditions.
///
/// `dir` must be a descent direction at `theta`. The returned step always
/// lowers the loss; when the conditions cannot be met within the zoom
/// budget the shortest bracketed decreasing step comes back flagged.
pub fn line_search<P: LeastSquares + ?Sized>(
    problem: &P,
    theta: &[f64],
    loss: f64,
    grad: &[f64],
    dir: &[f64],
    alpha_init: f64,
    params: WolfeParams,
) -> Result<LineSearchOutcome, LineSearchError> {
    let d0 = dot(grad, dir);
    if !(d0 < 0.0) {
        return Err(LineSearchError::NotDescent(d0));
    }
    let mut s = Search {
        problem,
        theta,
        dir,
        f0: loss,
        d0,
        params,
        evals: 0,
    };
    let mut prev = Point {
        a: 0.0,
        f: loss,
        d: d0,
        theta: theta.to_vec(),
        grad: grad.to_vec(),
    };
    let mut a = if alpha_init.is_finite() && alpha_init > 0.0 {
        alpha_init
    } else {
        1.0
    };
    for i in 0..params.max_expand {
        let p = s.eval(a)?;
        if !s.armijo(&p) || (i > 0 && p.f >= prev.f) {
            return s.zoom(prev, p);
        }
        if s.curvature(&p) {
            return s.polish(p);
        }
        if p.d >= 0.0 {
            return s.zoom(p, prev);
        }
        let next = match cubic_min(&prev, &p) {
            Some(c) if c > 1.1 * p.a && c < 10.0 * p.a => c,
            _ => 4.0 * p.a,
        };
        prev = p;
        a = next;
    }
    // Still descending after every expansion: take the furthest point.
    Ok(s.done(prev, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Network, Pattern, Topology};
    use crate::optimizers::{LinearProblem, NetworkProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eval_at(p: &impl LeastSquares, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; theta.len()];
        let l = p.loss_grad(theta, &mut g).unwrap();
        (l, g)
    }

    #[test]
    fn exact_on_one_dimensional_quadratic() {
        // ½(x θ − y)² = ½aθ² − bθ + c with a = x², b = xy
        for (x, y, init) in [
            (2.0, 3.0, 1.0),
            (0.3, -5.0, 1.0),
            (7.0, 1.0, 1e-3),
            (1.0, 1.0, 100.0),
        ] {
            let p = LinearProblem::new(vec![x], vec![y], 1);
            let (l, g) = eval_at(&p, &[0.0]);
            let dir = vec![-g[0].signum()];
            let out = line_search(
                &p,
                &[0.0],
                l,
                &g,
                &dir,
                init,
                WolfeParams::CONJUGATE_GRADIENT,
            )
            .unwrap();
            let a = x * x;
            let b = x * y;
            // along dir = ±1 the minimizer is |b| / a
            assert!(
                (out.alpha - (b / a).abs()).abs() <= 1e-8,
                "{x} {y}: {}",
                out.alpha
            );
            assert!(!out.flagged);
        }
    }

    #[test]
    fn ascent_direction_rejected() {
        let p = LinearProblem::new(vec![1.0], vec![1.0], 1);
        let (l, g) = eval_at(&p, &[0.0]);
        let up = g.clone();
        assert!(matches!(
            line_search(&p, &[0.0], l, &g, &up, 1.0, WolfeParams::QUASI_NEWTON),
            Err(LineSearchError::NotDescent(_))
        ));
    }

    #[test]
    fn always_decreases_on_random_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..100u64 {
            let topo = if case % 2 == 0 {
                Topology::mlp(3, &[1 + (case as usize % 5)])
            } else {
                Topology::cfmlp(3, &[2, 1 + (case as usize % 4)])
            };
            let net = Network::init(topo, case).unwrap();
            let batch: Vec<Pattern> = (0..12)
                .map(|_| {
                    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                    Pattern::scalar(x, rng.random_range(-1.0..1.0))
                })
                .collect();
            let prob = NetworkProblem::new(&net, &batch).unwrap();
            let (l, g) = eval_at(&prob, net.params());
            let dir: Vec<f64> = g.iter().map(|v| -v).collect();
            let init = 10f64.powi(rng.random_range(-3..3));
            let params = if case % 3 == 0 {
                WolfeParams::QUASI_NEWTON
            } else {
                WolfeParams::CONJUGATE_GRADIENT
            };
            let out = line_search(&prob, net.params(), l, &g, &dir, init, params).unwrap();
            assert!(out.loss < l, "case {case}: {} !< {l}", out.loss);
            assert!(out.alpha > 0.0);
        }
    }

    #[test]
    fn non_finite_region_is_backed_out_of() {
        // Trial steps past |θ| ~ 1e4 overflow the loss to infinity.
        let p = LinearProblem::new(vec![1e150], vec![0.0], 1);
        let (l, g) = eval_at(&p, &[1.0]);
        let out = line_search(&p, &[1.0], l, &g, &[-1.0], 1e10, WolfeParams::QUASI_NEWTON).unwrap();
        assert!(out.loss < l);
        assert!((out.alpha - 1.0).abs() < 1e-6, "{out:?}");
    }
}
