//! Graphical representation, direct simulation and Monte Carlo estimators.

mod estimators;
mod realization;
mod simulate;

pub use estimators::{
    e_gamma_curve, estimate_conditioned_law, estimate_delta_c, estimate_growth_rate, estimate_r_gamma,
    estimate_russo_integrand, has_pivotal, pivotal_fraction, CompensatedSum, ConditionedLaw, DeltaCInterval,
    DeltaCMethod, GridPoint, GrowthEstimate, MCEstimate, RussoEstimate,
};
pub use realization::{GraphicalRealization, Mark, SiteEvents};
pub use simulate::{sample_campbell, simulate_forward, CampbellSample, EventKind, Simulator, Trajectory, TrajectoryEvent};
