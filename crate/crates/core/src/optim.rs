//! Damped Newton ascent for smooth concave objectives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and Hessian at a point, or `None` if the point is
/// infeasible.
pub type Evaluation = Option<(f64, DVector<f64>, DMatrix<f64>)>;

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Convergence when `‖g‖ · gradient_scale ≤ tolerance`.
    pub tolerance: f64,
    pub gradient_scale: f64,
    pub max_iterations: usize,
    /// Iterates with a larger Euclidean norm count as divergence.
    pub max_norm: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            gradient_scale: 1.0,
            max_iterations: 100,
            max_norm: f64::INFINITY,
            max_halvings: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// `gᵀ(−H)⁻¹g` at each iteration taken.
    pub decrements: Vec<f64>,
}

pub fn maximize<F>(objective: F, x0: Vec<f64>, opts: &NewtonOptions) -> Result<NewtonOutcome>
where
    F: Fn(&[f64]) -> Evaluation,
{
    let mut x = DVector::from_vec(x0);
    let (mut value, mut grad, mut hess) = objective(x.as_slice())
        .ok_or_else(|| Error::Optimizer("starting point is infeasible".into()))?;
    let mut decrements = Vec::new();

    for iter in 0..=opts.max_iterations {
        let gnorm = grad.norm() * opts.gradient_scale;
        if gnorm <= opts.tolerance {
            return Ok(NewtonOutcome {
                x: x.as_slice().to_vec(),
                value,
                gradient_norm: gnorm,
                iterations: iter,
                decrements,
            });
        }
        if iter == opts.max_iterations {
            break;
        }
        let neg_h = -&hess;
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => return Err(Error::SingularInformation),
        };
        decrements.push(grad.dot(&step));

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &x + &step * t;
            if let Some(eval) = objective(candidate.as_slice()) {
                if eval.0.is_finite() && eval.0 >= value - 1e-12 * value.abs().max(1.0) {
                    accepted = Some((candidate, eval));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((candidate, (v, g, h))) = accepted else {
            return Err(Error::Optimizer(format!(
                "line search failed at iteration {iter} (gradient norm {gnorm:e})"
            )));
        };
        x = candidate;
        value = v;
        grad = g;
        hess = h;
        let norm = x.norm();
        if norm > opts.max_norm {
            return Err(Error::Separation { norm });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        gradient_norm: grad.norm() * opts.gradient_scale,
        last_iterate: x.as_slice().to_vec(),
    })
}
