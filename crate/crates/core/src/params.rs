use serde::{Deserialize, Serialize};

use crate::analysis::formulas::compute_lambda_c;
use crate::error::{domain, Result};

/// Edge density, bias, and the derived critical bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub lambda: f64,
    pub lambda_c: f64,
}

impl ModelParams {
    pub fn new(p: f64, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return domain(format!("bias must be finite and >= 0, got {lambda}"));
        }
        let lambda_c = compute_lambda_c(p)?;
        Ok(Self { p, lambda, lambda_c })
    }

    /// `λ_c / λ`, the tail exponent of regeneration times (infinite at λ = 0).
    pub fn tail_exponent(&self) -> f64 {
        self.lambda_c / self.lambda
    }
}
