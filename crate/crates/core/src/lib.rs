//! Optimal transport as MAP inference in collective graphical models.
//!
//! Solvers for entropic OT, OT between noisy histograms, histogram
//! interpolation on paths and continuous-time Markov chains, and
//! histogram propagation on trees, plus reference oracles for testing.

pub mod ctmc;
pub mod entropic_ot;
pub mod error;
pub mod histogram;
pub mod interpolation;
pub mod matrix;
pub mod noisy_ot;
pub mod numeric;
pub mod options;
pub mod oracles;
pub mod plan;
pub mod tree;
pub mod tree_propagation;

pub use ctmc::{build_grid_rate_matrix, CtmcModel};
pub use entropic_ot::{cgm_log_joint_approx, sinkhorn_distance, sinkhorn_plan, transport_cost, EntropicObjectiveValue};
pub use error::{Error, Result};
pub use histogram::Histogram;
pub use interpolation::{
    expm_action, interpolate_all_k, interpolate_path, interpolate_path_loopy, kernel_power_apply, InterpolationResult,
    PathInterpolationProblem, PathKernel,
};
pub use matrix::{cost_from_kernel, CostMatrix, CsrMatrix, Kernel, LinearOperator};
pub use noisy_ot::{kl_prox, noisy_objective, noisy_ot_solve, MarginalPenalty, NoiseModel};
pub use options::{SolveReport, SolverOptions};
pub use plan::TransportPlan;
pub use tree::{TreeCgm, TreeEdge};
pub use tree_propagation::{solve_tree, tree_objective, TreeSolution};
