//! Closed-form token cost of the baseline loop and the multi-agent workflow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Quantity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelInput<T> {
    /// Baseline rounds per question.
    pub k1: usize,
    /// Reasoning rounds per non-deterministic question.
    pub k2: usize,
    /// Mean tokens per baseline call.
    pub t_g: T,
    /// Mean tokens per classification, action and reasoning call.
    pub t_c: T,
    pub t_a: T,
    pub t_t: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModelOutput<T> {
    pub baseline_tokens: T,
    pub glm_det_tokens: T,
    pub glm_nondet_tokens: T,
    /// `(k2 + 1) * T_G`, valid when `T_a + T_t` is close to `T_G`.
    pub glm_nondet_approx: T,
    pub det_reduction: T,
    pub nondet_reduction: T,
    /// `(2 k1 - 1) * T_G`.
    pub det_reduction_approx: T,
    /// `(2 k1 - k2 - 1) * T_G`.
    pub nondet_reduction_approx: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostModelError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl<T: Quantity> CostModelInput<T> {
    pub fn validate(&self) -> Result<(), CostModelError> {
        let checks = [
            ("k1", self.k1 > 0),
            ("k2", self.k2 > 0),
            ("t_g", self.t_g > T::zero()),
            ("t_c", self.t_c > T::zero()),
            ("t_a", self.t_a > T::zero()),
            ("t_t", self.t_t > T::zero()),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(CostModelError::NonPositive(name)),
            None => Ok(()),
        }
    }
}

/// Evaluates the model. Use a signed `T` when `k2` may exceed `2 k1 - 1`.
pub fn cost_model<T: Quantity>(c: &CostModelInput<T>) -> CostModelOutput<T> {
    let n = T::from_count;
    let baseline = n(2 * c.k1) * c.t_g;
    let det = c.t_c + c.t_a;
    let nondet = c.t_c + n(c.k2) * c.t_a + n(c.k2 + 1) * c.t_t;
    let approx = n(c.k2 + 1) * c.t_g;
    CostModelOutput {
        baseline_tokens: baseline,
        glm_det_tokens: det,
        glm_nondet_tokens: nondet,
        glm_nondet_approx: approx,
        det_reduction: baseline - det,
        nondet_reduction: baseline - nondet,
        det_reduction_approx: baseline - c.t_g,
        nondet_reduction_approx: baseline - approx,
    }
}
