//! Levenberg-Marquardt over dense normal equations with IRLS robust weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::cauchy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite residual or Jacobian in block `{block}`")]
    NonFinite { block: String },
    #[error("model evaluation failed: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 20,
            initial_damping: 1e-4,
            cost_tolerance: 1e-8,
            step_tolerance: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn is_valid(&self) -> bool {
        self.max_iterations > 0
            && [self.initial_damping, self.cost_tolerance, self.step_tolerance]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// A group of residual rows sharing a weight and a set of variable columns.
///
/// `residual` holds noise-normalized errors. The block contributes
/// `weight · ρ(r_i²)` per row when `robust_scale` is set, otherwise
/// `weight · ‖r‖²`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub label: String,
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub columns: Vec<usize>,
    pub weight: f64,
    pub robust_scale: Option<f64>,
}

impl ResidualBlock {
    fn cost_and_row_weights(&self) -> (f64, Vec<f64>) {
        match self.robust_scale {
            Some(c) => {
                let mut cost = 0.0;
                let w = self
                    .residual
                    .iter()
                    .map(|r| {
                        let (rho, drho) = cauchy(r * r, c);
                        cost += self.weight * rho;
                        self.weight * drho
                    })
                    .collect();
                (cost, w)
            }
            None => (
                self.weight * self.residual.norm_squared(),
                vec![self.weight; self.residual.len()],
            ),
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.is_finite()
            && self.residual.iter().all(|v| v.is_finite())
            && self.jacobian.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct ResidualSystem {
    pub num_variables: usize,
    pub blocks: Vec<ResidualBlock>,
}

impl ResidualSystem {
    pub fn new(num_variables: usize) -> Self {
        ResidualSystem {
            num_variables,
            blocks: Vec::new(),
        }
    }

    /// Robustified total cost.
    pub fn cost(&self) -> f64 {
        self.blocks.iter().map(|b| b.cost_and_row_weights().0).sum()
    }

    pub fn num_residuals(&self) -> usize {
        self.blocks.iter().map(|b| b.residual.len()).sum()
    }

    pub fn check_finite(&self) -> Result<(), SolverError> {
        match self.blocks.iter().find(|b| !b.is_finite()) {
            Some(b) => Err(SolverError::NonFinite {
                block: b.label.clone(),
            }),
            None => Ok(()),
        }
    }

    /// Gauss-Newton normal equations `(JᵀWJ, JᵀWr)` with IRLS weights.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.num_variables;
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for b in &self.blocks {
            let (_, w) = b.cost_and_row_weights();
            let mut wj = b.jacobian.clone();
            for (i, wi) in w.iter().enumerate() {
                wj.row_mut(i).scale_mut(*wi);
            }
            let hb = b.jacobian.transpose() * &wj;
            let gb = wj.transpose() * &b.residual;
            for (lc, &gc) in b.columns.iter().enumerate() {
                g[gc] += gb[lc];
                for (lr, &gr) in b.columns.iter().enumerate() {
                    h[(gr, gc)] += hb[(lr, lc)];
                }
            }
        }
        (h, g)
    }

    /// Stacked `√w · r` without robust reweighting.
    pub fn weighted_residuals(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_residuals());
        let mut row = 0;
        for b in &self.blocks {
            let s = b.weight.sqrt();
            for r in b.residual.iter() {
                out[row] = s * r;
                row += 1;
            }
        }
        out
    }

    /// Dense Jacobian of [`ResidualSystem::weighted_residuals`].
    pub fn weighted_jacobian(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.num_residuals(), self.num_variables);
        let mut row = 0;
        for b in &self.blocks {
            let s = b.weight.sqrt();
            for i in 0..b.residual.len() {
                for (lc, &gc) in b.columns.iter().enumerate() {
                    out[(row + i, gc)] += s * b.jacobian[(i, lc)];
                }
            }
            row += b.residual.len();
        }
        out
    }
}

pub trait LeastSquaresProblem {
    type Snapshot;

    fn linearize(&self) -> Result<ResidualSystem, SolverError>;
    fn retract(&mut self, delta: &DVector<f64>);
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroCost,
    CostTolerance,
    StepTolerance,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost before the first iteration and after every accepted step.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

const ZERO_COST: f64 = 1e-30;

pub fn solve<P: LeastSquaresProblem>(
    problem: &mut P,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    let mut system = problem.linearize()?;
    system.check_finite()?;
    let mut cost = system.cost();
    let mut report = SolveReport {
        iterations: 0,
        accepted_steps: 0,
        initial_cost: cost,
        final_cost: cost,
        cost_history: vec![cost],
        termination: Termination::MaxIterations,
    };
    if cost < ZERO_COST {
        report.iterations = 1;
        report.termination = Termination::ZeroCost;
        return Ok(report);
    }

    let mut lambda = config.initial_damping;
    let n = system.num_variables;
    while report.iterations < config.max_iterations {
        report.iterations += 1;
        let (h, g) = system.normal_equations();
        let max_diag = (0..n).map(|i| h[(i, i)]).fold(0.0f64, f64::max);
        let floor = 1e-12 * max_diag.max(1.0);
        let mut a = h.clone();
        for i in 0..n {
            a[(i, i)] += lambda * h[(i, i)].max(floor);
        }
        let Some(chol) = a.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let delta = chol.solve(&(-&g));
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite {
                block: "update step".into(),
            });
        }
        if delta.norm() < config.step_tolerance {
            report.termination = Termination::StepTolerance;
            break;
        }

        let saved = problem.snapshot();
        problem.retract(&delta);
        let candidate = problem.linearize()?;
        candidate.check_finite()?;
        let new_cost = candidate.cost();
        if new_cost < cost {
            let rel = (cost - new_cost) / cost;
            cost = new_cost;
            system = candidate;
            lambda = (lambda * 0.1).max(1e-12);
            report.accepted_steps += 1;
            report.cost_history.push(cost);
            if cost < ZERO_COST {
                report.termination = Termination::ZeroCost;
                break;
            }
            if rel < config.cost_tolerance {
                report.termination = Termination::CostTolerance;
                break;
            }
        } else {
            problem.restore(saved);
            lambda *= 10.0;
        }
    }
    report.final_cost = cost;
    Ok(report)
}
