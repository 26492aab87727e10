use serde::{Deserialize, Serialize};

use crate::geometry::Norm;

/// Relative tolerance used for strong duality, money classes and demand ties.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

/// Default branch-and-bound node budget.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Numerical knobs shared by the solvers and the equilibrium checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub tol: f64,
    pub node_budget: usize,
    pub norm: Norm,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            node_budget: DEFAULT_NODE_BUDGET,
            norm: Norm::L2,
        }
    }
}

impl Settings {
    /// Absolute tolerance for a quantity of the given magnitude.
    pub fn scaled(&self, magnitude: f64) -> f64 {
        self.tol * (1.0 + magnitude.abs())
    }
}
