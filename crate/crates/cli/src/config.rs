//! Run configuration: one JSON document, validated before any computation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use subcrit_cp_core::graphical::DeltaCMethod;
use subcrit_cp_core::{Caps, Group, GroupElement, IrreducibilityMode, Kernel};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Zd { dim: usize },
    FreeProduct { orders: Vec<u32> },
}

/// Integer vector for `zd`, word string for `free_product`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetSpec {
    Coords(Vec<i64>),
    Word(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub offset: OffsetSpec,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub replicates: usize,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    /// Times at which the survival-conditioned law is compared with `ν̃`.
    pub conditioned_times: Vec<f64>,
    /// Full event logs kept by `simulate`.
    pub sample_trajectories: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replicates: 10_000,
            t_grid: vec![2.0, 5.0, 10.0],
            seed: 0,
            conditioned_times: vec![2.0, 5.0, 10.0],
            sample_trajectories: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Power-iteration stopping tolerance (sup-norm change per step).
    pub eigen: f64,
    pub max_iter: usize,
    /// Slack in the Lipschitz and monotonicity audits.
    pub audit: f64,
    /// Eigen residuals accepted by `check`.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eigen: 1e-12, max_iter: 2_000_000, audit: 1e-6, residual: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RussoConfig {
    pub s: f64,
    pub t: f64,
}

impl Default for RussoConfig {
    fn default() -> Self {
        RussoConfig { s: 2.5, t: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaCKind {
    Mc,
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaCConfig {
    pub method: DeltaCKind,
    pub bracket: (f64, f64),
    pub tol: f64,
}

impl Default for DeltaCConfig {
    fn default() -> Self {
        DeltaCConfig { method: DeltaCKind::Mc, bracket: (0.5, 2.0), tol: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupSpec,
    pub kernel: Vec<KernelEntry>,
    pub delta: f64,
    /// Recovery rates for `growth` and `sweep`; empty means `[delta]`.
    pub delta_grid: Vec<f64>,
    /// `(max_size, max_diameter)`.
    pub caps: (usize, u64),
    pub mc: McConfig,
    pub gammas: Vec<f64>,
    pub tolerances: Tolerances,
    pub russo: RussoConfig,
    pub delta_c: DeltaCConfig,
    /// Half-width of the central difference of `r̂` in `δ`.
    pub fd_step: f64,
    /// Writes the sparse generators as `from to rate` lines.
    pub export_generator: bool,
    /// Worker threads; `null` uses all available cores. Results do not depend on it.
    pub threads: Option<usize>,
    pub irreducibility: IrreducibilityMode,
    pub irreducibility_radius: u64,
    pub metric_check_radius: u64,
    /// Times at which `check` compares both sides of the duality relation.
    pub duality_times: Vec<f64>,
    /// `false` writes `null` for the wall clock, making documents byte-identical.
    pub record_wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            group: GroupSpec::Zd { dim: 1 },
            kernel: vec![
                KernelEntry { offset: OffsetSpec::Coords(vec![1]), rate: 1.0 },
                KernelEntry { offset: OffsetSpec::Coords(vec![-1]), rate: 1.0 },
            ],
            delta: 1.5,
            delta_grid: Vec::new(),
            caps: (6, 8),
            mc: McConfig::default(),
            gammas: vec![0.0, 0.2],
            tolerances: Tolerances::default(),
            russo: RussoConfig::default(),
            delta_c: DeltaCConfig::default(),
            fd_step: 0.05,
            export_generator: false,
            threads: None,
            irreducibility: IrreducibilityMode::ConditionIrr,
            irreducibility_radius: 6,
            metric_check_radius: 6,
            duality_times: vec![0.5, 1.0, 2.0],
            record_wall_clock: true,
        }
    }
}

/// Validated objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub kernel: Kernel,
    pub dual: Kernel,
    /// Whether the kernel equals its reversal, so dual computations can be reused.
    pub symmetric: bool,
    pub caps: Caps,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite_nonneg(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must be finite and nonnegative, got {x}")))
    }
}

fn time_grid(name: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(bad(format!("{name} is empty")));
    }
    for &t in grid {
        finite_nonneg(name, t)?;
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// `delta_grid`, or `[delta]` when it is empty.
    pub fn deltas(&self) -> Vec<f64> {
        if self.delta_grid.is_empty() {
            vec![self.delta]
        } else {
            self.delta_grid.clone()
        }
    }

    pub fn group(&self) -> Group {
        match &self.group {
            GroupSpec::Zd { dim } => Group::zd(*dim),
            GroupSpec::FreeProduct { orders } => Group::free_product(orders),
        }
    }

    fn offset(&self, group: &Group, spec: &OffsetSpec) -> Result<GroupElement, CliError> {
        match (spec, group) {
            (OffsetSpec::Coords(v), Group::Zd { dim }) if v.len() == *dim => Ok(GroupElement::lattice(v)),
            (OffsetSpec::Word(w), Group::FreeProduct { .. }) => {
                group.parse_element(w).map_err(|e| bad(e.to_string()))
            }
            _ => Err(bad(format!("offset {spec:?} does not match group {:?}", self.group))),
        }
    }

    pub fn delta_c_method(&self, seed: u64) -> DeltaCMethod {
        match self.delta_c.method {
            DeltaCKind::Spectral => DeltaCMethod::Spectral { caps: Caps::new(self.caps.0, self.caps.1) },
            DeltaCKind::Mc => DeltaCMethod::Mc { t_grid: self.mc.t_grid.clone(), replicates: self.mc.replicates, seed },
        }
    }

    /// Checks every field and builds the kernel and its reversal.
    pub fn validate(&self) -> Result<Setup, CliError> {
        let group = self.group();
        group.validate().map_err(|e| bad(e.to_string()))?;
        let mut entries = Vec::with_capacity(self.kernel.len());
        for e in &self.kernel {
            finite_nonneg("kernel rate", e.rate)?;
            entries.push((self.offset(&group, &e.offset)?, e.rate));
        }
        let kernel = Kernel::new(group, entries).map_err(|e| bad(e.to_string()))?;
        finite_nonneg("delta", self.delta)?;
        if self.delta <= 0.0 {
            return Err(bad("delta must be positive"));
        }
        for &d in &self.delta_grid {
            finite_nonneg("delta_grid", d)?;
            if d <= 0.0 {
                return Err(bad("delta_grid entries must be positive"));
            }
        }
        if self.delta_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("delta_grid must be strictly increasing"));
        }
        if self.caps.0 == 0 {
            return Err(bad("caps: max_size must be at least 1"));
        }
        if self.mc.replicates == 0 {
            return Err(bad("mc.replicates must be positive"));
        }
        time_grid("mc.t_grid", &self.mc.t_grid)?;
        time_grid("mc.conditioned_times", &self.mc.conditioned_times)?;
        time_grid("duality_times", &self.duality_times)?;
        for &g in &self.gammas {
            finite_nonneg("gammas", g)?;
        }
        let t = &self.tolerances;
        for (name, x) in [("tolerances.eigen", t.eigen), ("tolerances.audit", t.audit), ("tolerances.residual", t.residual)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(bad(format!("{name} must be positive, got {x}")));
            }
        }
        if t.max_iter == 0 {
            return Err(bad("tolerances.max_iter must be positive"));
        }
        if !(self.russo.s >= 0.0 && self.russo.s <= self.russo.t && self.russo.t.is_finite()) {
            return Err(bad(format!("russo needs 0 <= s <= t, got s = {}, t = {}", self.russo.s, self.russo.t)));
        }
        let (lo, hi) = self.delta_c.bracket;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) || !(self.delta_c.tol > 0.0) {
            return Err(bad(format!("delta_c bracket ({lo}, {hi}) with tol {}", self.delta_c.tol)));
        }
        if !(self.fd_step > 0.0 && self.fd_step < self.deltas().iter().cloned().fold(f64::INFINITY, f64::min)) {
            return Err(bad(format!("fd_step {} must be positive and below every delta", self.fd_step)));
        }
        if self.threads == Some(0) {
            return Err(bad("threads must be positive"));
        }
        let dual = kernel.dual();
        let symmetric = dual == kernel;
        Ok(Setup { kernel, dual, symmetric, caps: Caps::new(self.caps.0, self.caps.1) })
    }
}
