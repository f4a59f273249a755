use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::{Arc, RwLock};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::kernel::Kernel;
use crate::rng::StreamKey;

/// A mark on a site's time line.
#[derive(Debug, Clone, PartialEq)]
pub enum Mark {
    /// Recovery candidate carrying a uniform label. It acts as a recovery at rate
    /// `δ` iff `label < δ / δ_max`, which couples all `δ ≤ δ_max` on one realization.
    Recovery { label: f64 },
    /// Infection arrow to `target`.
    Arrow { target: GroupElement },
}

/// Events of one site inside the window, sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteEvents {
    pub events: Vec<(f64, Mark)>,
}

impl SiteEvents {
    /// Index of the first event strictly after `t`.
    fn first_after(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.0 <= t)
    }

    /// Number of events strictly before `t`; the last such event is at index `k - 1`.
    fn count_before(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.0 < t)
    }
}

#[derive(Debug)]
enum Source {
    Lazy { kernel: Kernel, key: StreamKey, offsets: Option<WeightedIndex<f64>> },
    Explicit { incoming: HashMap<GroupElement, Vec<(f64, GroupElement)>> },
}

/// Poisson recovery marks and infection arrows on `window`, materialized per site
/// on first use. Lazy streams depend only on `(seed, site)`.
#[derive(Debug)]
pub struct GraphicalRealization {
    window: (f64, f64),
    delta: f64,
    delta_max: f64,
    source: Source,
    sites: RwLock<HashMap<GroupElement, Arc<SiteEvents>>>,
}

impl GraphicalRealization {
    /// Realization for recovery rate `delta`.
    pub fn sample(kernel: &Kernel, delta: f64, window: (f64, f64), seed: u64) -> Result<Self> {
        Self::sample_coupled(kernel, delta, delta, window, seed)
    }

    /// Realization whose recovery candidates have rate `delta_max`; queries at any
    /// `δ ≤ delta_max` see a thinned, monotonically coupled recovery process.
    pub fn sample_coupled(kernel: &Kernel, delta: f64, delta_max: f64, window: (f64, f64), seed: u64) -> Result<Self> {
        check_rates(delta, delta_max, window)?;
        let offsets = if kernel.is_zero() {
            None
        } else {
            Some(WeightedIndex::new(kernel.rates()).map_err(|e| Error::InvalidKernel(e.to_string()))?)
        };
        Ok(GraphicalRealization {
            window,
            delta,
            delta_max,
            source: Source::Lazy { kernel: kernel.clone(), key: StreamKey::root(seed).child("graphical"), offsets },
            sites: RwLock::new(HashMap::new()),
        })
    }

    /// Realization with prescribed events: recoveries `(site, time)` and arrows
    /// `(from, to, time)`. Sites not mentioned carry no events.
    pub fn from_events(
        delta: f64,
        window: (f64, f64),
        recoveries: &[(GroupElement, f64)],
        arrows: &[(GroupElement, GroupElement, f64)],
    ) -> Result<Self> {
        check_rates(delta, delta, window)?;
        let mut sites: HashMap<GroupElement, SiteEvents> = HashMap::new();
        let mut incoming: HashMap<GroupElement, Vec<(f64, GroupElement)>> = HashMap::new();
        for (x, t) in recoveries {
            sites.entry(x.clone()).or_default().events.push((*t, Mark::Recovery { label: 0.0 }));
        }
        for (x, y, t) in arrows {
            sites.entry(x.clone()).or_default().events.push((*t, Mark::Arrow { target: y.clone() }));
            incoming.entry(y.clone()).or_default().push((*t, x.clone()));
        }
        for e in sites.values_mut() {
            e.events.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        for v in incoming.values_mut() {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Ok(GraphicalRealization {
            window,
            delta,
            delta_max: delta,
            source: Source::Explicit { incoming },
            sites: RwLock::new(sites.into_iter().map(|(k, v)| (k, Arc::new(v))).collect()),
        })
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Events of `site`, generating them on first use.
    pub fn site_events(&self, site: &GroupElement) -> Arc<SiteEvents> {
        if let Some(e) = self.sites.read().expect("realization lock poisoned").get(site) {
            return Arc::clone(e);
        }
        let fresh = match &self.source {
            Source::Explicit { .. } => Arc::new(SiteEvents::default()),
            Source::Lazy { kernel, key, offsets } => Arc::new(self.generate(kernel, *key, offsets.as_ref(), site)),
        };
        let mut guard = self.sites.write().expect("realization lock poisoned");
        Arc::clone(guard.entry(site.clone()).or_insert(fresh))
    }

    fn generate(&self, kernel: &Kernel, key: StreamKey, offsets: Option<&WeightedIndex<f64>>, site: &GroupElement) -> SiteEvents {
        let (t0, t1) = self.window;
        let mut events = Vec::new();
        let site_key = key.site(site);
        if self.delta_max > 0.0 {
            let mut rng = site_key.child("recovery").rng();
            let mut t = t0;
            loop {
                t += exponential(&mut rng, self.delta_max);
                if t > t1 {
                    break;
                }
                events.push((t, Mark::Recovery { label: rng.gen::<f64>() }));
            }
        }
        if let Some(dist) = offsets {
            let mut rng = site_key.child("arrows").rng();
            let group = kernel.group();
            let mut t = t0;
            loop {
                t += exponential(&mut rng, kernel.total_rate());
                if t > t1 {
                    break;
                }
                let o = &kernel.offsets()[dist.sample(&mut rng)];
                events.push((t, Mark::Arrow { target: group.mul(site, o) }));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        SiteEvents { events }
    }

    /// Arrows into `site` as `(time, source)`, sorted by time.
    fn incoming(&self, site: &GroupElement) -> Vec<(f64, GroupElement)> {
        match &self.source {
            Source::Explicit { incoming } => incoming.get(site).cloned().unwrap_or_default(),
            Source::Lazy { kernel, .. } => {
                let group = kernel.group();
                let mut out = Vec::new();
                for o in kernel.offsets() {
                    let from = group.mul(site, &group.inverse(o));
                    for (t, m) in &self.site_events(&from).events {
                        if matches!(m, Mark::Arrow { target } if target == site) {
                            out.push((*t, from.clone()));
                        }
                    }
                }
                out.sort_by(|a, b| a.0.total_cmp(&b.0));
                out
            }
        }
    }

    fn check_interval(&self, from: f64, to: f64) -> Result<()> {
        let (t0, t1) = self.window;
        if from > to || from < t0 || to > t1 {
            return Err(Error::InvalidArgument(format!("interval [{from}, {to}] is outside the window [{t0}, {t1}]")));
        }
        Ok(())
    }

    fn recovers(&self, label: f64, delta: f64) -> bool {
        delta > 0.0 && label * self.delta_max < delta
    }

    /// `η^{A,s}_t`: sites reached at time `s + t` by open paths from `A × {s}`.
    pub fn forward_set(&self, set: &ConfigSet, s: f64, t: f64) -> Result<ConfigSet> {
        self.forward_set_at(self.delta, set, s, t)
    }

    /// [`forward_set`](Self::forward_set) at another recovery rate `δ ≤ δ_max`.
    pub fn forward_set_at(&self, delta: f64, set: &ConfigSet, s: f64, t: f64) -> Result<ConfigSet> {
        self.check_delta(delta)?;
        let end = s + t;
        self.check_interval(s, end)?;
        // Heap of (time, epoch, site, event index); a site's epoch advances whenever
        // it recovers, which invalidates its pending entry.
        let mut epoch: HashMap<GroupElement, u64> = HashMap::new();
        let mut infected: HashSet<GroupElement> = HashSet::new();
        let mut heap: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();
        let mut counter = 0u64;
        let mut schedule = |heap: &mut BinaryHeap<Reverse<Pending>>, site: &GroupElement, after: f64, ep: u64| {
            let ev = self.site_events(site);
            let k = ev.first_after(after);
            if k < ev.events.len() && ev.events[k].0 <= end {
                counter += 1;
                heap.push(Reverse(Pending { time: ev.events[k].0, order: counter, site: site.clone(), epoch: ep, index: k, events: ev }));
            }
        };
        for x in set {
            infected.insert(x.clone());
            epoch.insert(x.clone(), 0);
            schedule(&mut heap, x, s, 0);
        }
        while let Some(Reverse(p)) = heap.pop() {
            if epoch.get(&p.site) != Some(&p.epoch) || !infected.contains(&p.site) {
                continue;
            }
            match &p.events.events[p.index].1 {
                Mark::Recovery { label } if self.recovers(*label, delta) => {
                    infected.remove(&p.site);
                    *epoch.get_mut(&p.site).expect("tracked") += 1;
                    continue;
                }
                Mark::Recovery { .. } => {}
                Mark::Arrow { target } => {
                    if !infected.contains(target) {
                        infected.insert(target.clone());
                        let ep = epoch.entry(target.clone()).and_modify(|e| *e += 1).or_insert(0);
                        let ep = *ep;
                        schedule(&mut heap, target, p.time, ep);
                    }
                }
            }
            schedule(&mut heap, &p.site, p.time, p.epoch);
        }
        Ok(infected.into_iter().collect())
    }

    /// `η^{†B,s}_t`: sites `j` with `(j, s - t) ⇝ (i, s)` for some `i ∈ B`.
    pub fn dual_set(&self, set: &ConfigSet, s: f64, t: f64) -> Result<ConfigSet> {
        self.dual_set_at(self.delta, set, s, t)
    }

    pub fn dual_set_at(&self, delta: f64, set: &ConfigSet, s: f64, t: f64) -> Result<ConfigSet> {
        self.check_delta(delta)?;
        let start = s - t;
        self.check_interval(start, s)?;
        // Backward sweep. A site's backward stream merges its own recovery marks and
        // the arrows pointing into it, in decreasing time.
        let mut streams: HashMap<GroupElement, Arc<Vec<(f64, BackMark)>>> = HashMap::new();
        let mut stream_of = |site: &GroupElement| -> Arc<Vec<(f64, BackMark)>> {
            Arc::clone(streams.entry(site.clone()).or_insert_with(|| {
                let mut v: Vec<(f64, BackMark)> = self
                    .site_events(site)
                    .events
                    .iter()
                    .filter_map(|(t, m)| match m {
                        Mark::Recovery { label } => Some((*t, BackMark::Recovery(*label))),
                        Mark::Arrow { .. } => None,
                    })
                    .collect();
                v.extend(self.incoming(site).into_iter().map(|(t, from)| (t, BackMark::From(from))));
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                Arc::new(v)
            }))
        };
        let mut epoch: HashMap<GroupElement, u64> = HashMap::new();
        let mut alive: HashSet<GroupElement> = HashSet::new();
        let mut heap: BinaryHeap<BackPending> = BinaryHeap::new();
        let mut counter = 0u64;
        let mut schedule = |heap: &mut BinaryHeap<BackPending>, stream: Arc<Vec<(f64, BackMark)>>, site: &GroupElement, before: f64, ep: u64| {
            let k = stream.partition_point(|e| e.0 < before);
            if k > 0 && stream[k - 1].0 >= start {
                counter += 1;
                heap.push(BackPending { time: stream[k - 1].0, order: counter, site: site.clone(), epoch: ep, index: k - 1, stream });
            }
        };
        for x in set {
            alive.insert(x.clone());
            epoch.insert(x.clone(), 0);
            let st = stream_of(x);
            schedule(&mut heap, st, x, s, 0);
        }
        while let Some(p) = heap.pop() {
            if epoch.get(&p.site) != Some(&p.epoch) || !alive.contains(&p.site) {
                continue;
            }
            match &p.stream[p.index].1 {
                BackMark::Recovery(label) if self.recovers(*label, delta) => {
                    alive.remove(&p.site);
                    *epoch.get_mut(&p.site).expect("tracked") += 1;
                    continue;
                }
                BackMark::Recovery(_) => {}
                BackMark::From(from) => {
                    if !alive.contains(from) {
                        alive.insert(from.clone());
                        let ep = *epoch.entry(from.clone()).and_modify(|e| *e += 1).or_insert(0);
                        let st = stream_of(from);
                        schedule(&mut heap, st, from, p.time, ep);
                    }
                }
            }
            let st = Arc::clone(&p.stream);
            schedule(&mut heap, st, &p.site, p.time, p.epoch);
        }
        Ok(alive.into_iter().collect())
    }

    fn check_delta(&self, delta: f64) -> Result<()> {
        if !(0.0..=self.delta_max).contains(&delta) {
            return Err(Error::InvalidArgument(format!("delta {delta} outside [0, {}]", self.delta_max)));
        }
        Ok(())
    }

    /// Number of recovery marks active at rate `delta` on `site` during `[from, to)`.
    pub fn recovery_count(&self, site: &GroupElement, from: f64, to: f64) -> usize {
        let ev = self.site_events(site);
        let (a, b) = (ev.count_before(from), ev.count_before(to));
        ev.events[a..b].iter().filter(|e| matches!(e.1, Mark::Recovery { label } if self.recovers(label, self.delta))).count()
    }
}

fn check_rates(delta: f64, delta_max: f64, window: (f64, f64)) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite() && delta_max >= delta && delta_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("recovery rates delta={delta}, delta_max={delta_max}")));
    }
    if !(window.0 <= window.1) {
        return Err(Error::InvalidArgument(format!("window [{}, {}] is empty", window.0, window.1)));
    }
    Ok(())
}

pub(crate) fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is finite.
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

#[derive(Debug, Clone)]
enum BackMark {
    Recovery(f64),
    From(GroupElement),
}

struct Pending {
    time: f64,
    order: u64,
    site: GroupElement,
    epoch: u64,
    index: usize,
    events: Arc<SiteEvents>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.order.cmp(&other.order))
    }
}

/// Max-heap entry for the backward sweep (latest time first).
struct BackPending {
    time: f64,
    order: u64,
    site: GroupElement,
    epoch: u64,
    index: usize,
    stream: Arc<Vec<(f64, BackMark)>>,
}

impl PartialEq for BackPending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for BackPending {}
impl PartialOrd for BackPending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BackPending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(other.order.cmp(&self.order))
    }
}
