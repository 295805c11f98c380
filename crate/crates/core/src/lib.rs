//! Epidemic-control optimization: a SEIRAH simulator with health and economic
//! costs, a weekly lockdown decision environment, value-based learners
//! (fixed-β DQN, goal-conditioned DQN, constrained goal-conditioned DQN),
//! NSGA-II over policy weights, and experiment tooling for Pareto analysis.

pub mod costs;
pub mod dqn;
pub mod env;
pub mod evalkit;
pub mod nsga2;
pub mod params;
pub mod policy;
pub mod seirah;
