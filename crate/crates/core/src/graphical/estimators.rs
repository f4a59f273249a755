use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::realization::GraphicalRealization;
use super::simulate::Simulator;
use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::measures::{singleton_ratio, HomogeneousMeasure, MeanCurve, TildeLaw};
use crate::metric::Metric;
use crate::quotient::{canonicalize, Caps, ShiftClass, StateSpace};
use crate::rng::StreamKey;

/// Monte Carlo point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Mean and standard error `sd/√n` of samples, summed in index order.
fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mut s = CompensatedSum::default();
    values.clone().for_each(|v| s.add(v));
    let mean = s.value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::default();
    values.for_each(|v| ss.add((v - mean) * (v - mean)));
    let var = ss.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn check_mc(t_grid: &[f64], n: usize) -> Result<()> {
    if t_grid.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("time grid and replicate count must be nonempty".into()));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::NegativeTime(*t));
    }
    Ok(())
}

/// Runs `n` replicates of `η^{{0}}` and evaluates `f` at every grid time. Replicate
/// `i` draws from `key.index(i)`, so results do not depend on the thread count.
fn replicate_functionals(
    sim: &Simulator,
    times: &[f64],
    n: usize,
    key: StreamKey,
    f: impl Fn(&ConfigSet) -> f64 + Sync,
) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| times[k]).collect();
    let origin = ConfigSet::singleton(sim.kernel().group().identity());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.index(i as u64).rng();
            let mut out = vec![0.0; times.len()];
            sim.run(&origin, &sorted, &mut rng, |k, s| out[order[k]] = if s.len() == 0 { 0.0 } else { f(&s.to_config()) }, |_, _, _| {});
            out
        })
        .collect()
}

/// Estimates at one grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub t: f64,
    /// `E f(η_t)`.
    pub mean: MCEstimate,
    /// `(1/t) log E f(η_t)`; `None` when every replicate died or `t = 0`.
    pub rate: Option<MCEstimate>,
    pub survivors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthEstimate {
    pub points: Vec<GridPoint>,
    /// Minimum of the defined rates over the grid.
    pub r_hat: Option<MCEstimate>,
    pub t_at_min: Option<f64>,
    /// `log(E f(η_{t₂}) / E f(η_{t₁})) / (t₂ - t₁)` over the two largest grid times,
    /// with a paired delta-method error. Free of the `log C / t` prefactor bias of
    /// the single-time rates, but not a bound on `r`.
    pub slope: Option<MCEstimate>,
}

fn rate_estimates(values: &[Vec<f64>], times: &[f64], n: usize, seed: u64) -> GrowthEstimate {
    let mut points = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let col = values.iter().map(|v| v[k]);
        let (mean, se) = mean_and_se(col.clone(), n);
        let survivors = col.filter(|&v| v > 0.0).count();
        let mean_est = MCEstimate { estimate: mean, std_err: se, replicates: n, seed };
        let rate = (mean > 0.0 && t > 0.0).then(|| MCEstimate { estimate: mean.ln() / t, std_err: se / (mean * t), replicates: n, seed });
        points.push(GridPoint { t, mean: mean_est, rate, survivors });
    }
    let best = points
        .iter()
        .filter_map(|p| p.rate.map(|r| (p.t, r)))
        .min_by(|a, b| a.1.estimate.total_cmp(&b.1.estimate));
    let slope = log_slope(values, times, n, seed);
    GrowthEstimate { r_hat: best.map(|b| b.1), t_at_min: best.map(|b| b.0), points, slope }
}

fn log_slope(values: &[Vec<f64>], times: &[f64], n: usize, seed: u64) -> Option<MCEstimate> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (&k2, &k1) = (order.last()?, order.get(order.len().checked_sub(2)?)?);
    let dt = times[k2] - times[k1];
    let (m1, _) = mean_and_se(values.iter().map(|v| v[k1]), n);
    let (m2, _) = mean_and_se(values.iter().map(|v| v[k2]), n);
    if !(m1 > 0.0 && m2 > 0.0 && dt > 0.0) {
        return None;
    }
    let (_, se) = mean_and_se(values.iter().map(|v| v[k2] / m2 - v[k1] / m1), n);
    Some(MCEstimate { estimate: (m2 / m1).ln() / dt, std_err: se / dt, replicates: n, seed })
}

/// `(1/t) log E|η^{{0}}_t|` on a grid; the combined estimate is the grid minimum.
pub fn estimate_growth_rate(kernel: &Kernel, delta: f64, t_grid: &[f64], n: usize, seed: u64) -> Result<GrowthEstimate> {
    check_mc(t_grid, n)?;
    let sim = Simulator::new(kernel, delta)?;
    let key = StreamKey::root(seed).child("growth");
    let values = replicate_functionals(&sim, t_grid, n, key, |s| s.len() as f64);
    Ok(rate_estimates(&values, t_grid, n, seed))
}

/// As [`estimate_growth_rate`] with `e_γ(η_t)` in place of `|η_t|`; the same
/// replicates are used, so `γ = 0` reproduces the growth-rate estimate.
pub fn estimate_r_gamma(
    kernel: &Kernel,
    delta: f64,
    metric: &Metric,
    gamma: f64,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<GrowthEstimate> {
    check_mc(t_grid, n)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} must be >= 0")));
    }
    let sim = Simulator::new(kernel, delta)?;
    let key = StreamKey::root(seed).child("growth");
    let values = if gamma == 0.0 {
        replicate_functionals(&sim, t_grid, n, key, |s| s.len() as f64)
    } else {
        replicate_functionals(&sim, t_grid, n, key, |s| metric.e_gamma(gamma, s))
    };
    Ok(rate_estimates(&values, t_grid, n, seed))
}

/// `t ↦ E[e_γ(η^{{0}}_t)]` with standard errors.
pub fn e_gamma_curve(kernel: &Kernel, delta: f64, metric: &Metric, gamma: f64, times: &[f64], n: usize, seed: u64) -> Result<MeanCurve> {
    let est = estimate_r_gamma(kernel, delta, metric, gamma, times, n, seed)?;
    Ok(MeanCurve {
        times: times.to_vec(),
        means: est.points.iter().map(|p| p.mean.estimate).collect(),
        std_errs: est.points.iter().map(|p| p.mean.std_err).collect(),
    })
}

/// Empirical law of the shift class of `η^{{0}}_t` given survival.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedLaw {
    pub law: TildeLaw,
    pub survivors: usize,
    pub replicates: usize,
}

fn surviving_classes(sim: &Simulator, t: f64, n: usize, key: StreamKey) -> Result<Vec<ShiftClass>> {
    let group = sim.kernel().group().clone();
    let origin = ConfigSet::singleton(group.identity());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.index(i as u64).rng();
            let set = sim.sample_path(&origin, &[t], &mut rng).pop().expect("one time");
            if set.is_empty() {
                Ok(None)
            } else {
                canonicalize(&group, &set).map(|c| Some(c.0))
            }
        })
        .collect::<Result<Vec<Option<ShiftClass>>>>()
        .map(|v| v.into_iter().flatten().collect())
}

fn empirical(classes: Vec<ShiftClass>) -> Result<TildeLaw> {
    let mut counts: HashMap<ShiftClass, usize> = HashMap::new();
    for c in classes {
        *counts.entry(c).or_insert(0) += 1;
    }
    TildeLaw::empirical(counts)
}

pub fn estimate_conditioned_law(kernel: &Kernel, delta: f64, t: f64, n: usize, seed: u64) -> Result<ConditionedLaw> {
    check_mc(&[t], n)?;
    let sim = Simulator::new(kernel, delta)?;
    let classes = surviving_classes(&sim, t, n, StreamKey::root(seed).child("conditioned"))?;
    let survivors = classes.len();
    if survivors == 0 {
        return Err(Error::NoSurvivors(format!("no replicate survived to t = {t}")));
    }
    Ok(ConditionedLaw { law: empirical(classes)?, survivors, replicates: n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RussoEstimate {
    pub value: MCEstimate,
    pub forward_survivors: usize,
    pub dual_survivors: usize,
}

/// Product-form estimate of `(χP_s ⊼ χP†_{t-s})({0}) / ⟨⟨χP_s ⊼ χP†_{t-s}⟩⟩` from
/// independent survival-conditioned forward and dual samples.
pub fn estimate_russo_integrand(kernel: &Kernel, delta: f64, s: f64, t: f64, n: usize, seed: u64) -> Result<RussoEstimate> {
    if !(0.0 <= s && s <= t) {
        return Err(Error::InvalidArgument(format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    check_mc(&[t], n)?;
    let key = StreamKey::root(seed).child("russo");
    let fwd = surviving_classes(&Simulator::new(kernel, delta)?, s, n, key.child("forward"))?;
    let dual = surviving_classes(&Simulator::new(&kernel.dual(), delta)?, t - s, n, key.child("dual"))?;
    if fwd.is_empty() || dual.is_empty() {
        return Err(Error::NoSurvivors(format!("forward {} / dual {} survivors", fwd.len(), dual.len())));
    }
    let (nf, nd) = (fwd.len(), dual.len());
    let group = kernel.group().clone();
    let mu = HomogeneousMeasure::new(group.clone(), 1.0, empirical(fwd)?)?;
    let nu = HomogeneousMeasure::new(group, 1.0, empirical(dual)?)?;
    let (ratio, se) = singleton_ratio(&mu, &nu)?;
    Ok(RussoEstimate {
        value: MCEstimate { estimate: ratio, std_err: se, replicates: n, seed },
        forward_survivors: nf,
        dual_survivors: nd,
    })
}

/// Whether some `(j, s)` lies on every open path from `(start, 0)` to `(end, t)`.
/// The sites at time `s` on such paths are
/// `forward_set({start}, 0, s) ∩ dual_set({end}, t, t - s)`; a pivotal point
/// exists iff that set is a single site.
pub fn has_pivotal(
    g: &GraphicalRealization,
    start: &crate::group::GroupElement,
    end: &crate::group::GroupElement,
    s: f64,
    t: f64,
) -> Result<bool> {
    let fwd = g.forward_set(&ConfigSet::singleton(start.clone()), 0.0, s)?;
    let back = g.dual_set(&ConfigSet::singleton(end.clone()), t, t - s)?;
    Ok(fwd.intersection_len(&back) == 1)
}

/// Direct check of the Russo integrand: the Campbell-weighted frequency of a
/// pivotal point at time `s`, `E[Σ_{ι∈η_t} 1{pivotal}] / E|η_t|`, over `n`
/// graphical realizations on `[0, t]`.
pub fn pivotal_fraction(kernel: &Kernel, delta: f64, s: f64, t: f64, n: usize, seed: u64) -> Result<MCEstimate> {
    if !(0.0 <= s && s <= t) {
        return Err(Error::InvalidArgument(format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    check_mc(&[t], n)?;
    let key = StreamKey::root(seed).child("pivotal");
    let zero = kernel.group().identity();
    let origin = ConfigSet::singleton(zero.clone());
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let g = GraphicalRealization::sample(kernel, delta, (0.0, t), key.index(i as u64).seed())?;
            let end = g.forward_set(&origin, 0.0, t)?;
            let mut piv = 0.0;
            for iota in &end {
                if has_pivotal(&g, &zero, iota, s, t)? {
                    piv += 1.0;
                }
            }
            Ok((piv, end.len() as f64))
        })
        .collect::<Result<_>>()?;
    let (num, _) = mean_and_se(pairs.iter().map(|p| p.0), n);
    let (den, _) = mean_and_se(pairs.iter().map(|p| p.1), n);
    if den <= 0.0 {
        return Err(Error::NoSurvivors(format!("no realization reached t = {t}")));
    }
    let ratio = num / den;
    let (_, se) = mean_and_se(pairs.iter().map(|p| (p.0 - ratio * p.1) / den), n);
    Ok(MCEstimate { estimate: ratio, std_err: se, replicates: n, seed })
}

/// How `r̂(δ)` is evaluated during bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DeltaCMethod {
    Spectral { caps: Caps },
    Mc { t_grid: Vec<f64>, replicates: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaCInterval {
    pub lo: f64,
    pub hi: f64,
    /// `(δ, r̂, standard error)` at every evaluated point.
    pub trace: Vec<(f64, f64, f64)>,
    pub notes: String,
}

/// Bisection on the sign of `r̂(δ)` until the bracket is at most `tol` wide.
///
/// The spectral rate of a truncated chain is a decay rate of a killed chain and
/// hence never positive, so the spectral method only succeeds when the caller's
/// lower end already has `r̂ > 0`, which truncation rules out; it is kept for
/// symmetry with the Monte Carlo method and reports the failure explicitly.
pub fn estimate_delta_c(kernel: &Kernel, method: &DeltaCMethod, bracket: (f64, f64), tol: f64) -> Result<DeltaCInterval> {
    if kernel.is_zero() {
        return Ok(DeltaCInterval {
            lo: 0.0,
            hi: 0.0,
            trace: Vec::new(),
            notes: "zero kernel: r = -delta < 0 for every delta > 0".into(),
        });
    }
    if !(tol > 0.0) || !(0.0 <= bracket.0 && bracket.0 < bracket.1) {
        return Err(Error::InvalidArgument(format!("bracket {bracket:?} with tol {tol}")));
    }
    let space = match method {
        DeltaCMethod::Spectral { caps } => Some(StateSpace::enumerate(kernel, *caps)?),
        DeltaCMethod::Mc { .. } => None,
    };
    let eval = |delta: f64| -> Result<(f64, f64)> {
        match method {
            DeltaCMethod::Spectral { .. } => {
                Ok((crate::spectral::growth_rate(space.as_ref().expect("enumerated"), delta)?, 0.0))
            }
            DeltaCMethod::Mc { t_grid, replicates, seed } => {
                let est = estimate_growth_rate(kernel, delta, t_grid, *replicates, *seed)?;
                let r = est.r_hat.ok_or_else(|| Error::NoSurvivors(format!("no survivors at delta = {delta}")))?;
                Ok((r.estimate, r.std_err))
            }
        }
    };
    let (mut lo, mut hi) = bracket;
    let mut trace = Vec::new();
    let r_lo = eval(lo)?;
    let r_hi = eval(hi)?;
    trace.push((lo, r_lo.0, r_lo.1));
    trace.push((hi, r_hi.0, r_hi.1));
    if !(r_lo.0 > 0.0 && r_hi.0 < 0.0) {
        return Err(Error::BracketNoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        trace.push((mid, r.0, r.1));
        if r.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let notes = match method {
        DeltaCMethod::Spectral { caps } => format!(
            "truncated spectral r at caps ({}, {}) is a lower bound on r and never positive",
            caps.max_size, caps.max_diameter
        ),
        DeltaCMethod::Mc { .. } => {
            "Monte Carlo r is a grid minimum of (1/t) log E|eta_t|, an upper bound up to noise, so the interval tends to sit above the true critical rate; signs within two standard errors of zero are uncertain".into()
        }
    };
    Ok(DeltaCInterval { lo, hi, trace, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Group, GroupElement};
    use crate::metric::TailSchedule;

    #[test]
    fn compensated_sum() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn pure_death_growth() {
        let k = Kernel::zero(Group::zd(1));
        let est = estimate_growth_rate(&k, 0.7, &[1.0, 2.0], 20_000, 1).unwrap();
        let r = est.r_hat.unwrap();
        assert!((r.estimate + 0.7).abs() < 3.0 * r.std_err, "{r:?}");
        let slope = est.slope.unwrap();
        assert!((slope.estimate + 0.7).abs() < 3.0 * slope.std_err, "{slope:?}");
        let m = Metric::build(&k, &TailSchedule::Exponential, 4).unwrap();
        let rg = estimate_r_gamma(&k, 0.7, &m, 0.8, &[1.0, 2.0], 20_000, 1).unwrap();
        assert_eq!(rg.r_hat, est.r_hat);
        let law = estimate_conditioned_law(&k, 0.7, 1.0, 2000, 3).unwrap();
        assert_eq!(law.law.len(), 1);
        assert!(law.law.entries()[0].0.is_singleton());
        let russo = estimate_russo_integrand(&k, 0.7, 0.5, 1.0, 2000, 3).unwrap();
        assert_eq!(russo.value.estimate, 1.0);
        let piv = pivotal_fraction(&k, 0.7, 0.5, 1.0, 2000, 3).unwrap();
        assert_eq!(piv.estimate, 1.0);
    }

    #[test]
    fn gamma_zero_is_growth_and_reproducible() {
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let m = Metric::build(&k, &TailSchedule::Exponential, 4).unwrap();
        let a = estimate_growth_rate(&k, 1.5, &[2.0, 4.0], 4000, 9).unwrap();
        let b = estimate_r_gamma(&k, 1.5, &m, 0.0, &[2.0, 4.0], 4000, 9).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| estimate_growth_rate(&k, 1.5, &[2.0, 4.0], 4000, 9).unwrap());
        assert_eq!(a, c);
        let r = a.r_hat.unwrap().estimate;
        assert!((-1.5 - 0.1..=0.5 + 0.1).contains(&r));
        let g1 = estimate_r_gamma(&k, 1.5, &m, 0.5, &[2.0, 4.0], 4000, 9).unwrap().r_hat.unwrap().estimate;
        assert!(g1 >= r);
    }

    #[test]
    fn conditioned_at_time_zero_is_singleton() {
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let law = estimate_conditioned_law(&k, 1.5, 0.0, 100, 1).unwrap();
        assert_eq!(law.survivors, 100);
        assert_eq!(law.law.entries().len(), 1);
        assert!(law.law.entries()[0].0.is_singleton());
    }

    #[test]
    fn russo_in_unit_interval() {
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let est = estimate_russo_integrand(&k, 1.5, 1.0, 2.0, 4000, 5).unwrap();
        assert!((0.0..=1.0).contains(&est.value.estimate));
        let piv = pivotal_fraction(&k, 1.5, 1.0, 2.0, 2000, 5).unwrap();
        assert!((0.0..=1.0).contains(&piv.estimate));
    }

    #[test]
    fn pivotal_on_hand_traced_realizations() {
        let z = GroupElement::z;
        let piv = |g: &GraphicalRealization, end: i64, s: f64| has_pivotal(g, &z(0), &z(end), s, 2.0).unwrap();
        // 0 -> 1 at 0.5, 1 -> 2 at 1.5, site 0 recovers at 0.7.
        let chain = GraphicalRealization::from_events(1.0, (0.0, 2.0), &[(z(0), 0.7)], &[(z(0), z(1), 0.5), (z(1), z(2), 1.5)]).unwrap();
        assert!(piv(&chain, 2, 1.0));
        assert!(piv(&chain, 1, 1.0));
        // At s = 0.6 sites 0 and 1 are infected, but only 1 lies on a path to 2.
        assert!(piv(&chain, 2, 0.6));
        // 0 -> 1 at 0.5 and 0 -> 2 at 1.5, no recoveries: each endpoint has one route.
        let fork = GraphicalRealization::from_events(1.0, (0.0, 2.0), &[], &[(z(0), z(1), 0.5), (z(0), z(2), 1.5)]).unwrap();
        assert!(piv(&fork, 1, 1.0));
        assert!(piv(&fork, 2, 1.0));
        // Two routes to 2 through different sites at s = 1.
        let diamond = GraphicalRealization::from_events(
            1.0,
            (0.0, 2.0),
            &[],
            &[(z(0), z(1), 0.5), (z(1), z(2), 1.2), (z(0), z(2), 1.4)],
        )
        .unwrap();
        assert!(!piv(&diamond, 2, 1.0));
        assert!(piv(&diamond, 2, 0.3));
    }

    #[test]
    fn delta_c_zero_kernel_and_bad_bracket() {
        let k = Kernel::zero(Group::zd(1));
        let iv = estimate_delta_c(&k, &DeltaCMethod::Spectral { caps: Caps::new(3, 3) }, (0.1, 1.0), 0.05).unwrap();
        assert_eq!((iv.lo, iv.hi), (0.0, 0.0));
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let err = estimate_delta_c(&k, &DeltaCMethod::Spectral { caps: Caps::new(4, 5) }, (1.5, 2.0), 0.05).unwrap_err();
        assert!(matches!(err, Error::BracketNoSignChange { .. }));
    }

    /// The truncated chain is sub-Markovian, so its rate is never positive and
    /// a spectral bracket cannot straddle a sign change.
    #[test]
    fn delta_c_spectral_never_brackets() {
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let err = estimate_delta_c(&k, &DeltaCMethod::Spectral { caps: Caps::new(6, 8) }, (0.1, 1.5), 0.01).unwrap_err();
        assert!(matches!(err, Error::BracketNoSignChange { .. }));
    }
}
