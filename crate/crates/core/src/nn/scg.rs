//! Scaled conjugate gradient (Møller, 1993).
//!
//! Full-batch, no line search: the curvature along the search direction is
//! estimated from a gradient difference, and a Levenberg-Marquardt style
//! scalar `lambda` keeps the local quadratic model positive definite. Only
//! steps that reduce the loss are accepted.

use crate::error::{Error, Result};

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn loss(&self, params: &[f64]) -> Result<f64>;
    fn loss_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgConfig {
    pub max_iterations: usize,
    /// Stop once the gradient norm drops below this.
    pub grad_tol: f64,
    pub sigma: f64,
    pub lambda0: f64,
}

impl Default for ScgConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            grad_tol: 1e-6,
            sigma: 1e-5,
            lambda0: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScgOutcome {
    pub params: Vec<f64>,
    /// Loss at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(x, p)| x + alpha * p).collect()
}

pub fn train_scg<O: Objective + ?Sized>(objective: &O, initial: Vec<f64>, config: &ScgConfig) -> Result<ScgOutcome> {
    let mut w = initial;
    let (mut loss, g) = objective.loss_grad(&w)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("initial SCG loss".into()));
    }
    let mut r: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut p = r.clone();
    let mut trace = vec![loss];
    let mut lambda = config.lambda0;
    let mut success = true;
    // Curvature p·(∇E(w + σp) - ∇E(w))/σ without the lambda term.
    let mut curvature = 0.0;
    let mut grad_norm = dot(&r, &r).sqrt();
    let mut iterations = 0;

    while iterations < config.max_iterations && grad_norm >= config.grad_tol {
        iterations += 1;
        let p_sq = dot(&p, &p);
        if p_sq == 0.0 {
            break;
        }
        if success {
            let sigma_k = config.sigma / p_sq.sqrt();
            let (_, g_probe) = objective.loss_grad(&axpy(&w, sigma_k, &p))?;
            // -r is the gradient at w.
            curvature = p
                .iter()
                .zip(g_probe.iter().zip(&r))
                .map(|(p, (gp, r))| p * (gp + r))
                .sum::<f64>()
                / sigma_k;
        }
        let mut delta = curvature + lambda * p_sq;
        if delta <= 0.0 {
            // Raise lambda until the model along p is positive definite.
            lambda = 2.0 * (lambda - delta / p_sq);
            delta = curvature + lambda * p_sq;
        }
        let mu = dot(&p, &r);
        let alpha = mu / delta;
        let w_new = axpy(&w, alpha, &p);
        let loss_new = objective.loss(&w_new)?;
        let comparison = if loss_new.is_finite() {
            2.0 * delta * (loss - loss_new) / (mu * mu)
        } else {
            f64::NEG_INFINITY
        };

        if comparison >= 0.0 {
            let (l, g_new) = objective.loss_grad(&w_new)?;
            let r_new: Vec<f64> = g_new.iter().map(|x| -x).collect();
            w = w_new;
            loss = l;
            trace.push(loss);
            success = true;
            // No periodic restart: the finite-difference curvature is never
            // exact, and resetting to steepest descent after n steps throws
            // away the conjugacy that finishes the job on quadratics.
            let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
            p = r_new.iter().zip(&p).map(|(r, p)| r + beta * p).collect();
            r = r_new;
            grad_norm = dot(&r, &r).sqrt();
            if comparison >= 0.75 {
                lambda /= 4.0;
            }
            // Keep p a descent direction.
            if dot(&p, &r) <= 0.0 {
                p = r.clone();
            }
        } else {
            success = false;
        }
        if comparison < 0.25 {
            let bump = if comparison.is_finite() {
                delta * (1.0 - comparison) / p_sq
            } else {
                4.0 * lambda.max(config.lambda0)
            };
            lambda += bump;
        }
        if !lambda.is_finite() {
            return Err(Error::Diverged(format!("SCG lambda overflow after {iterations} iterations")));
        }
    }

    Ok(ScgOutcome {
        params: w,
        trace,
        iterations,
        grad_norm,
        converged: grad_norm < config.grad_tol,
    })
}
