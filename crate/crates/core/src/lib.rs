//! Spectral and Monte Carlo computation of subcritical contact-process quantities
//! on countable groups: growth rates, quasi-invariant laws of the process modulo
//! shifts, homogeneous eigenmeasures, Doob transforms, and the derivative of the
//! growth rate in the recovery rate.

pub mod config_set;
pub mod error;
pub mod graphical;
pub mod group;
pub mod kernel;
pub mod measures;
pub mod metric;
pub mod quotient;
pub mod rng;
pub mod spectral;

pub use config_set::ConfigSet;
pub use error::{Error, Result};
pub use group::{Group, GroupElement};
pub use kernel::{check_irreducibility, IrreducibilityMode, Kernel, Verdict};
pub use measures::{HomogeneousMeasure, IntersectionStats, TildeLaw};
pub use metric::{Metric, TailSchedule};
pub use quotient::{canonicalize, Caps, ShiftClass, SparseGenerator, StateSpace};
pub use spectral::{DoobChain, SpectralResult};
