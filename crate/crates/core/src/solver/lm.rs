//! Unweighted Levenberg–Marquardt with forward-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Result, SmolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Stop when an accepted step reduces SSE by less than this fraction.
    pub sse_rel_tol: f64,
    /// Stop when the step norm falls below this.
    pub step_tol: f64,
    /// Damping beyond which no descent step exists at working precision.
    pub lambda_max: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            sse_rel_tol: 1e-10,
            step_tol: 1e-12,
            lambda_max: 1e16,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.lambda_init,
            self.sse_rel_tol,
            self.step_tol,
            self.lambda_max,
        ];
        if self.max_iterations == 0
            || positive.iter().any(|v| !(*v > 0.0))
            || !(self.lambda_up > 1.0)
            || !(self.lambda_down > 1.0)
        {
            return Err(SmolError::InvalidParameter {
                name: "solver",
                reason: "tolerances must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residual function over a parameter vector, plus per-parameter difference steps
/// and an optional projection applied after each accepted step.
pub trait LeastSquares {
    fn residuals(&mut self, params: &[f64], out: &mut Vec<f64>) -> Result<()>;

    fn steps(&self, params: &[f64]) -> Vec<f64>;

    fn project(&self, _params: &mut [f64]) {}
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward-difference Jacobian, row-major by residual.
pub fn jacobian<P: LeastSquares>(problem: &mut P, x: &[f64], r0: &[f64]) -> Result<DMatrix<f64>> {
    let steps = problem.steps(x);
    let m = r0.len();
    let mut j = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    let mut rp = Vec::with_capacity(m);
    for (c, h) in steps.iter().enumerate() {
        xp[c] = x[c] + h;
        problem.residuals(&xp, &mut rp)?;
        if rp.len() != m {
            return Err(SmolError::LengthMismatch(format!(
                "residual length changed from {m} to {}",
                rp.len()
            )));
        }
        for i in 0..m {
            j[(i, c)] = (rp[i] - r0[i]) / h;
        }
        xp[c] = x[c];
    }
    Ok(j)
}

pub fn levenberg_marquardt<P: LeastSquares>(
    problem: &mut P,
    x0: &[f64],
    cfg: &LmConfig,
) -> Result<LmOutcome> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut r = Vec::new();
    problem.residuals(&x, &mut r)?;
    let mut cost = sse(&r);
    if cost == 0.0 {
        return Ok(LmOutcome {
            params: x,
            sse: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let n = x.len();
    let mut lambda = cfg.lambda_init;
    let mut trial_r = Vec::with_capacity(r.len());
    for it in 1..=cfg.max_iterations {
        let j = jacobian(problem, &x, &r)?;
        let jtj = j.tr_mul(&j);
        let g = j.tr_mul(&DVector::from_column_slice(&r));
        loop {
            let mut a = jtj.clone();
            for d in 0..n {
                let diag = jtj[(d, d)];
                a[(d, d)] += lambda * if diag > 0.0 { diag } else { 1e-30 };
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    lambda *= cfg.lambda_up;
                    if lambda > cfg.lambda_max {
                        return Ok(LmOutcome {
                            params: x,
                            sse: cost,
                            iterations: it,
                            converged: true,
                        });
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.project(&mut trial);
            let accepted = match problem.residuals(&trial, &mut trial_r) {
                Ok(()) => {
                    let c = sse(&trial_r);
                    c.is_finite() && c < cost
                }
                Err(SmolError::Singularity { .. }) => false,
                Err(e) => return Err(e),
            };
            if accepted {
                let new_cost = sse(&trial_r);
                let rel = (cost - new_cost) / cost;
                let step_norm = step.norm();
                x = trial;
                std::mem::swap(&mut r, &mut trial_r);
                cost = new_cost;
                lambda = (lambda / cfg.lambda_down).max(1e-300);
                if rel < cfg.sse_rel_tol || step_norm < cfg.step_tol || cost == 0.0 {
                    return Ok(LmOutcome {
                        params: x,
                        sse: cost,
                        iterations: it,
                        converged: true,
                    });
                }
                break;
            }
            if step.norm() < cfg.step_tol {
                return Ok(LmOutcome {
                    params: x,
                    sse: cost,
                    iterations: it,
                    converged: true,
                });
            }
            lambda *= cfg.lambda_up;
            if lambda > cfg.lambda_max {
                return Ok(LmOutcome {
                    params: x,
                    sse: cost,
                    iterations: it,
                    converged: true,
                });
            }
        }
    }
    Ok(LmOutcome {
        params: x,
        sse: cost,
        iterations: cfg.max_iterations,
        converged: false,
    })
}
