//! Exact evaluation and Bayes-optimal design of two-arm Bernoulli
//! allocation trials with a finite number of subjects.
//!
//! The state of a trial is the count vector `(s_C, f_C, s_D, f_D)`. All
//! exact computations sweep the lattice of such states layer by layer,
//! keeping a single layer of values resident.

pub mod beta;
pub mod design;
pub mod dp;
pub mod error;
pub mod eval;
pub mod exec;
pub mod lattice;
pub mod sim;
mod sweep;
pub mod table_io;

pub use beta::{
    beta_params_from_moments, expected_max, expected_max_prior, moments_from_beta, posterior, predictive_success, Arm,
    BetaCounts, PriorSpec,
};
pub use design::{action_of, ActionProb, DesignSpec, Policy};
pub use dp::{optimal_action, solve, solve_to_file, solve_with, ActionTable, SolveOptions, SolveOutput};
pub use error::{Error, Result};
pub use eval::{
    backward_mean_classic, backward_mean_terminal, forward_eval, forward_eval_with, regret_of, table_sweep,
    terminal_distribution, EvalResult, Mode, Scenario, TerminalDistribution,
};
pub use exec::Exec;
pub use lattice::{LayerIndexer, PhysicalState};
pub use sim::{enumerate_paths, simulate, SimConfig, SimResult};
pub use table_io::{load_table, save_table};
