use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;

use super::realization::exponential;
use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::kernel::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Infect,
    Recover,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEvent {
    pub time: f64,
    pub site: GroupElement,
    pub kind: EventKind,
}

/// One run of the process from a finite set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial: ConfigSet,
    pub events: Vec<TrajectoryEvent>,
    pub final_set: ConfigSet,
    pub survived: bool,
    pub horizon: f64,
}

impl Trajectory {
    /// Replays the events on the initial set.
    pub fn replay(&self) -> ConfigSet {
        let mut cur: std::collections::BTreeSet<GroupElement> = self.initial.iter().cloned().collect();
        for e in &self.events {
            match e.kind {
                EventKind::Infect => cur.insert(e.site.clone()),
                EventKind::Recover => cur.remove(&e.site),
            };
        }
        cur.into_iter().collect()
    }
}

/// Infected set with O(1) insertion, removal and uniform sampling.
#[derive(Debug, Default, Clone)]
pub(crate) struct InfectedSet {
    sites: Vec<GroupElement>,
    pos: HashMap<GroupElement, usize>,
}

impl InfectedSet {
    pub(crate) fn from_set(set: &ConfigSet) -> Self {
        let mut s = InfectedSet::default();
        for x in set {
            s.insert(x.clone());
        }
        s
    }

    pub(crate) fn len(&self) -> usize {
        self.sites.len()
    }

    pub(crate) fn contains(&self, x: &GroupElement) -> bool {
        self.pos.contains_key(x)
    }

    pub(crate) fn insert(&mut self, x: GroupElement) -> bool {
        if self.pos.contains_key(&x) {
            return false;
        }
        self.pos.insert(x.clone(), self.sites.len());
        self.sites.push(x);
        true
    }

    pub(crate) fn remove_at(&mut self, k: usize) -> GroupElement {
        let x = self.sites.swap_remove(k);
        self.pos.remove(&x);
        if k < self.sites.len() {
            self.pos.insert(self.sites[k].clone(), k);
        }
        x
    }

    pub(crate) fn get(&self, k: usize) -> &GroupElement {
        &self.sites[k]
    }

    pub(crate) fn to_config(&self) -> ConfigSet {
        self.sites.iter().cloned().collect()
    }
}

/// Event-driven simulator: every infected site carries a clock of rate `δ + |a|`;
/// a ring is a recovery with probability `δ/(δ+|a|)`, otherwise an infection
/// attempt along an offset drawn with probability `a(0,o)/|a|`, which is void when
/// the target is already infected.
#[derive(Debug, Clone)]
pub struct Simulator {
    kernel: Kernel,
    delta: f64,
    offsets: Option<WeightedIndex<f64>>,
}

impl Simulator {
    pub fn new(kernel: &Kernel, delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("recovery rate {delta}")));
        }
        let offsets = if kernel.is_zero() {
            None
        } else {
            Some(WeightedIndex::new(kernel.rates()).map_err(|e| Error::InvalidKernel(e.to_string()))?)
        };
        Ok(Simulator { kernel: kernel.clone(), delta, offsets })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Runs from `set` and calls `observe(k, state)` at each `times[k]` (sorted,
    /// nonnegative). Stops early on extinction; later observations then see the
    /// empty state. `record` receives every effective event.
    pub(crate) fn run<R: Rng + ?Sized>(
        &self,
        set: &ConfigSet,
        times: &[f64],
        rng: &mut R,
        mut observe: impl FnMut(usize, &InfectedSet),
        mut record: impl FnMut(f64, &GroupElement, EventKind),
    ) {
        let mut state = InfectedSet::from_set(set);
        let per_site = self.delta + self.kernel.total_rate();
        let p_recover = if per_site > 0.0 { self.delta / per_site } else { 0.0 };
        let group = self.kernel.group();
        let mut t = 0.0;
        let mut next_obs = 0;
        while next_obs < times.len() {
            let n = state.len();
            let next = if n == 0 || per_site == 0.0 { f64::INFINITY } else { t + exponential(rng, per_site * n as f64) };
            while next_obs < times.len() && times[next_obs] < next {
                observe(next_obs, &state);
                next_obs += 1;
            }
            if next_obs == times.len() {
                break;
            }
            t = next;
            let k = rng.gen_range(0..n);
            if rng.gen::<f64>() < p_recover {
                let x = state.remove_at(k);
                record(t, &x, EventKind::Recover);
            } else if let Some(dist) = &self.offsets {
                let o = &self.kernel.offsets()[dist.sample(rng)];
                let y = group.mul(state.get(k), o);
                if !state.contains(&y) {
                    record(t, &y, EventKind::Infect);
                    state.insert(y);
                }
            }
        }
    }

    /// Sizes and sets at the requested times, without recording events.
    pub fn sample_path<R: Rng + ?Sized>(&self, set: &ConfigSet, times: &[f64], rng: &mut R) -> Vec<ConfigSet> {
        let mut out = vec![ConfigSet::empty(); times.len()];
        self.run(set, times, rng, |k, s| out[k] = s.to_config(), |_, _, _| {});
        out
    }
}

/// Exact simulation of `η^A` on `[0, horizon]`, recording every effective event.
pub fn simulate_forward<R: Rng + ?Sized>(kernel: &Kernel, delta: f64, set: &ConfigSet, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    if !(horizon >= 0.0) {
        return Err(Error::NegativeTime(horizon));
    }
    let sim = Simulator::new(kernel, delta)?;
    let mut events = Vec::new();
    let mut final_set = ConfigSet::empty();
    sim.run(
        set,
        &[horizon],
        rng,
        |_, s| final_set = s.to_config(),
        |time, site, kind| events.push(TrajectoryEvent { time, site: site.clone(), kind }),
    );
    Ok(Trajectory { initial: set.clone(), events, survived: !final_set.is_empty(), final_set, horizon })
}

/// A size-biased sample: `weight = |η_t|` and `ι` uniform on `η_t` (weight 0 and
/// `ι = 0` on extinction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampbellSample {
    pub trajectory: Trajectory,
    pub iota: GroupElement,
    pub weight: f64,
}

impl CampbellSample {
    /// `ι⁻¹η_t`, the configuration seen from the tagged site.
    pub fn recentred(&self, kernel: &Kernel) -> ConfigSet {
        let g = kernel.group();
        self.trajectory.final_set.translate(g, &g.inverse(&self.iota))
    }
}

pub fn sample_campbell<R: Rng + ?Sized>(kernel: &Kernel, delta: f64, t: f64, rng: &mut R) -> Result<CampbellSample> {
    let origin = ConfigSet::singleton(kernel.group().identity());
    let trajectory = simulate_forward(kernel, delta, &origin, t, rng)?;
    let n = trajectory.final_set.len();
    let iota = if n == 0 { kernel.group().identity() } else { trajectory.final_set.as_slice()[rng.gen_range(0..n)].clone() };
    Ok(CampbellSample { trajectory, iota, weight: n as f64 })
}
