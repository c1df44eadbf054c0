//! Reference implementations used to validate the solvers.
//!
//! Nothing here is tuned for speed. Each oracle reaches its answer by a
//! route that shares no code path with the solver it checks.

mod brute_force;
mod dense_expm;
mod exact_cgm;
mod mape;
mod prox;
mod wb_line;

pub use brute_force::{brute_force_plan, BruteForcePlan, MAX_BRUTE_FORCE_N};
pub use dense_expm::dense_expm;
pub use exact_cgm::{enumerate_tables, exact_cgm_log_joint, ExactCgmInstance};
pub use mape::{mape, Mape};
pub use prox::prox_oracle_1d;
pub use wb_line::{analytic_wb_line, WbLineSolution};
