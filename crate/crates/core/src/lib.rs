//! Dead-time event detection: simulation, likelihood inference, Fisher bounds
//! and estimators for periodic photon-counting data.

pub mod bench;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod lidar;
pub mod optimize;
pub mod pchip;
pub mod process;
pub mod templates;

pub use bench::{
    bounds_report, emit, estimate_from_stream, relative_mse, run_mc, BoundsReport, Coords,
    ExperimentConfig, RiskRow,
};
pub use error::{DedError, Result};
pub use estimators::{
    coates_max_bin, fill_amplitude_background, fourier_pilot, mle, one_step, quadratic_peak_fit,
    rate_estimates, robust_pilot, EstimateReport, EstimateStatus, Method, RateEstimates,
};
pub use inference::{
    empirical_gating_frequencies, exact_gating_frequencies, fisher_lower_bound, information_rate,
    log_likelihood, per_bin_derivatives, phase_fisher, score, FisherInfo, GatingFrequencies,
    Provenance,
};
pub use lidar::{LidarParams, LidarRateModel, ThetaBox};
pub use optimize::OptimizerSettings;
pub use process::{
    accumulate_stats, check_feasible, free_running_policy, ingest_event_stream, simulate,
    synchronous_policy, GatingPolicy, ModelDims, PhaseRates, PolicyKind, RateModel,
    SufficientStats, Trajectory,
};
pub use templates::PulseTemplate;
