//! Entropic optimal transport: balanced and unbalanced Sinkhorn scaling and
//! multi-cost unbalanced barycenters.
//!
//! Plans are indexed `P[i][j]` = mass moved from source `j` to destination
//! `i`, so `P1` (row sums) is matched against the first marginal `mu` and
//! `Pᵀ1` against `nu`.
//!
//! The unbalanced objective uses the plain entropy `h(P) = Σ P log P`
//! together with mass-corrected KL penalties. Its optimal plan has the form
//! `diag(u) · e⁻¹K · diag(v)`, so the unbalanced scalings refer to the
//! kernel `e⁻¹K` rather than `K`; [`TransportResult::log_scale`] records
//! which one applies.

mod barycenter;
mod divergence;
mod logkernel;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::cost::{CostMatrix, KernelMatrix};
use crate::error::{Error, Result};

pub use barycenter::{barycenter, uniform_weights};
pub use divergence::{
    entropy, generalized_kl, kl_divergence, objective_balanced, objective_unbalanced,
};
pub use sinkhorn::{sinkhorn_balanced, sinkhorn_unbalanced};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Entropic regularization λ.
    pub lambda: f64,
    /// Marginal relaxation λ_u; `f64::INFINITY` enforces the marginals.
    pub lambda_u: f64,
    pub max_iters: usize,
    /// Stop once the sup-norm change of the log-scalings (or of the log
    /// barycenter) drops below this.
    pub tol: f64,
    /// Period of forced absorption of the scalings into the kernel.
    pub stabilize_every: usize,
    /// Record the objective every this many iterations; 0 disables.
    pub objective_every: usize,
}

impl SolverConfig {
    pub fn new(lambda: f64, lambda_u: f64) -> Self {
        SolverConfig {
            lambda,
            lambda_u,
            ..Default::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_objective_every(mut self, every: usize) -> Self {
        self.objective_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.lambda_u.is_nan() || self.lambda_u <= 0.0 {
            return Err(Error::Config(format!(
                "lambda_u must be positive or infinite, got {}",
                self.lambda_u
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 || self.stabilize_every == 0 {
            return Err(Error::Config(
                "max_iters and stabilize_every must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_kernel(&self, k: &KernelMatrix) -> Result<()> {
        if (k.lambda() - self.lambda).abs() > 1e-12 * self.lambda {
            return Err(Error::Config(format!(
                "kernel was built with lambda={} but the solver uses lambda={}",
                k.lambda(),
                self.lambda
            )));
        }
        Ok(())
    }

    /// Scaling exponent `λ_u / (λ_u + λ)`, 1 in the balanced limit.
    pub fn exponent(&self) -> f64 {
        if self.lambda_u.is_infinite() {
            1.0
        } else {
            self.lambda_u / (self.lambda_u + self.lambda)
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 1.0,
            lambda_u: 1.0,
            max_iters: 5000,
            tol: 1e-6,
            stabilize_every: 50,
            objective_every: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransportResult {
    /// `log u`; `-∞` where the first marginal vanishes.
    pub log_u: Vec<f64>,
    /// `log v`; `-∞` where the second marginal vanishes.
    pub log_v: Vec<f64>,
    /// The plan is `exp(log_scale) · diag(u) K diag(v)`: 0 for balanced
    /// problems, -1 for unbalanced ones.
    pub log_scale: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm deviations `(|P1 - mu|, |Pᵀ1 - nu|)`.
    pub marginal_gap: (f64, f64),
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    /// `(iteration, objective)` samples.
    pub objective_trace: Vec<(usize, f64)>,
}

impl TransportResult {
    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|v| v.exp()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|v| v.exp()).collect()
    }

    /// Dense row-major plan.
    pub fn plan(&self, kernel: &KernelMatrix) -> Vec<f64> {
        plan_entries(
            kernel.cost(),
            kernel.lambda(),
            &self.log_u,
            &self.log_v,
            self.log_scale,
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BarycenterResult {
    pub g_bar: Vec<f64>,
    pub per_image: Vec<TransportResult>,
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, Σ_k w_k objective_k)` samples.
    pub objective_trace: Vec<(usize, f64)>,
}

pub(crate) fn plan_entries(
    c: &CostMatrix,
    lambda: f64,
    log_u: &[f64],
    log_v: &[f64],
    log_scale: f64,
) -> Vec<f64> {
    let m = c.side();
    let mut p = vec![0.0; m * m];
    for (i, row) in p.chunks_mut(m).enumerate() {
        let crow = c.row(i);
        for (j, e) in row.iter_mut().enumerate() {
            *e = (log_u[i] + log_v[j] + log_scale - crow[j] / lambda).exp();
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(1.0, 1.0).validate().is_ok());
        assert!(SolverConfig::new(1.0, f64::INFINITY).validate().is_ok());
        assert!(SolverConfig::new(0.0, 1.0).validate().is_err());
        assert!(SolverConfig::new(1.0, 0.0).validate().is_err());
        assert!(SolverConfig::new(1.0, 1.0)
            .with_tol(0.0)
            .validate()
            .is_err());
        assert!(SolverConfig::new(1.0, 1.0)
            .with_max_iters(0)
            .validate()
            .is_err());
        assert_eq!(SolverConfig::new(1.0, f64::INFINITY).exponent(), 1.0);
        assert_eq!(SolverConfig::new(1.0, 3.0).exponent(), 0.75);
    }
}
