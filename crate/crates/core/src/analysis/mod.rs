//! Estimators and condition checks built on simulated ensembles.

pub mod additive;
pub mod conditions;
pub mod lyapunov;
pub mod stats;

pub use additive::{
    deviation_bound_test, mean_trajectory_test, DeviationReport, EnsembleSettings, MeanTrajectoryReport,
};
pub use conditions::{
    check_t1_discrete, check_t2_discrete, check_t3_continuous, check_t4_coarse_grain, ContractionVerdict,
    GainSamples, PathCells, Theorem,
};
pub use lyapunov::{finite_time_lyapunov, log_rate, mean_decay_fit, ms_rate_fit, ms_rate_fit_trajectories, RateEstimate};
pub use stats::{log_mean_exp, mean_ci, tail_average, MeanCi, Z95};
