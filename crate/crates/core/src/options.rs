use ndarray::Array1;

use crate::error::{Error, Result};

/// Iteration controls shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold; its meaning is solver specific but always
    /// relative to the total mass `F`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Denominators at or below this value are treated as zero.
    pub epsilon_floor: f64,
    /// Iterate on log-scalings (Sinkhorn only).
    pub log_domain: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iterations: 10_000, epsilon_floor: 1e-300, log_domain: false }
    }
}

impl SolverOptions {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_log_domain(mut self, log_domain: bool) -> Self {
        self.log_domain = log_domain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !(self.epsilon_floor >= 0.0) {
            return Err(Error::Config("epsilon_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// Log-scaling vectors of a diagonal-scaling solver: `T = diag(e^f) K diag(e^g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalings {
    pub log_u: Array1<f64>,
    pub log_v: Array1<f64>,
}

/// Outcome summary of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final convergence residual, relative to the total mass.
    pub residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Per-iteration monitor value (dual objective for scaling solvers).
    pub history: Vec<f64>,
    pub scalings: Option<Scalings>,
}

impl SolveReport {
    pub(crate) fn new(iterations: usize, residual: f64, tolerance: f64) -> Self {
        Self {
            iterations,
            residual,
            objective: f64::NAN,
            converged: residual <= tolerance,
            history: Vec::new(),
            scalings: None,
        }
    }
}
