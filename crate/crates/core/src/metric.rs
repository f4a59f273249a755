//! A translation-invariant metric whose balls are finite and for which the kernel
//! has exponential moments of every order.
//!
//! Offsets are grouped into nested symmetric shells `Δ₂ ⊂ Δ₃ ⊂ …` by how much
//! rate mass they leave outside; an offset first admitted in shell `n` gets edge
//! length `log n`, and `d` is the shortest-path closure of those edges.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::RwLock;

use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::group::{Group, GroupElement};
use crate::kernel::Kernel;

/// Thresholds `τ₂ ≥ τ₃ ≥ …` on the excluded tail mass of each shell.
#[derive(Debug, Clone, PartialEq)]
pub enum TailSchedule {
    /// `τ_n = |a| e^{-(n-1)}`.
    Exponential,
    /// Explicit thresholds for `n = 2, 3, …`; later shells reuse the last value.
    Custom(Vec<f64>),
}

impl TailSchedule {
    fn threshold(&self, total: f64, n: usize) -> f64 {
        match self {
            TailSchedule::Exponential => total * (-((n - 1) as f64)).exp(),
            TailSchedule::Custom(v) => v.get(n - 2).or(v.last()).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}
impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Default)]
struct Dijkstra {
    settled: HashMap<GroupElement, f64>,
    tentative: HashMap<GroupElement, f64>,
    frontier: BinaryHeap<Reverse<(Dist, GroupElement)>>,
}

#[derive(Debug)]
pub struct Metric {
    group: Group,
    generators: Vec<(GroupElement, f64)>,
    memo: RwLock<Dijkstra>,
}

impl Clone for Metric {
    fn clone(&self) -> Self {
        Metric::from_generators(self.group.clone(), self.generators.clone())
    }
}

impl Metric {
    /// Builds the metric for `kernel`. The generating set is the support together
    /// with its inverses (or the standard generators when the support is empty);
    /// `check_radius` bounds the word-length ball in which generation is verified.
    pub fn build(kernel: &Kernel, schedule: &TailSchedule, check_radius: u64) -> Result<Metric> {
        let group = kernel.group().clone();
        if kernel.is_zero() {
            let gens = group.standard_generators().into_iter().map(|g| (g, 2f64.ln())).collect();
            return Ok(Metric::from_generators(group, gens));
        }

        // Symmetric pairs {o, o⁻¹} carrying their combined rate, largest first.
        let mut pairs: Vec<(Vec<GroupElement>, f64)> = Vec::new();
        for (o, rate) in kernel.support() {
            let inv = group.inverse(o);
            if let Some(p) = pairs.iter_mut().find(|(members, _)| members.contains(o)) {
                p.1 += rate;
                continue;
            }
            let members = if inv == *o { vec![o.clone()] } else { vec![o.clone(), inv] };
            pairs.push((members, rate));
        }
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let total = kernel.total_rate();
        let mut shell_of = vec![0usize; pairs.len()];
        let mut admitted = 0;
        let mut excluded = total;
        let mut n = 2;
        while admitted < pairs.len() {
            let tau = schedule.threshold(total, n);
            while admitted < pairs.len() && excluded > tau * (1.0 + 1e-12) {
                excluded -= pairs[admitted].1;
                shell_of[admitted] = n;
                admitted += 1;
            }
            // Guard against a custom schedule that never drops below the remaining mass.
            if admitted < pairs.len() && n > 64 + pairs.len() {
                for s in shell_of.iter_mut().skip(admitted) {
                    *s = n;
                }
                break;
            }
            n += 1;
        }

        let mut gens = Vec::new();
        for ((members, _), shell) in pairs.iter().zip(&shell_of) {
            // Shell indices start at 2, so every edge has length at least log 2.
            let len = ((*shell).max(2) as f64).ln();
            for m in members {
                gens.push((m.clone(), len));
            }
        }
        gens.sort_by(|a, b| a.0.cmp(&b.0));
        let metric = Metric::from_generators(group.clone(), gens);
        metric.check_generates(check_radius)?;
        Ok(metric)
    }

    fn from_generators(group: Group, generators: Vec<(GroupElement, f64)>) -> Metric {
        let id = group.identity();
        let mut memo = Dijkstra::default();
        memo.tentative.insert(id.clone(), 0.0);
        memo.frontier.push(Reverse((Dist(0.0), id)));
        Metric { group, generators, memo: RwLock::new(memo) }
    }

    fn check_generates(&self, radius: u64) -> Result<()> {
        let g = &self.group;
        let id = g.identity();
        let mut seen = HashSet::from([id.clone()]);
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            for (s, _) in &self.generators {
                let y = g.mul(&x, s);
                if g.word_length(&y) <= radius.max(1) && seen.insert(y.clone()) {
                    stack.push(y);
                }
            }
        }
        if g.standard_generators().iter().all(|s| seen.contains(s)) {
            Ok(())
        } else {
            Err(Error::DisconnectedMetric { radius })
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    /// Edge generators and their lengths `log φ`.
    pub fn generators(&self) -> &[(GroupElement, f64)] {
        &self.generators
    }

    /// Settles frontier nodes until `stop` says enough.
    fn advance(&self, mut stop: impl FnMut(&Dijkstra) -> bool) {
        let mut memo = self.memo.write().expect("metric memo poisoned");
        while !stop(&memo) {
            let Some(Reverse((Dist(dist), x))) = memo.frontier.pop() else { break };
            if memo.settled.contains_key(&x) {
                continue;
            }
            memo.settled.insert(x.clone(), dist);
            for (s, len) in &self.generators {
                let y = self.group.mul(&x, s);
                if memo.settled.contains_key(&y) {
                    continue;
                }
                let nd = dist + len;
                let better = memo.tentative.get(&y).is_none_or(|&old| nd < old);
                if better {
                    memo.tentative.insert(y.clone(), nd);
                    memo.frontier.push(Reverse((Dist(nd), y)));
                }
            }
        }
    }

    /// `d(0, x)`.
    pub fn norm(&self, x: &GroupElement) -> f64 {
        if let Some(&d) = self.memo.read().expect("metric memo poisoned").settled.get(x) {
            return d;
        }
        self.advance(|m| m.settled.contains_key(x));
        self.memo.read().expect("metric memo poisoned").settled[x]
    }

    /// `d(x, y) = d(0, x⁻¹y)`.
    pub fn distance(&self, x: &GroupElement, y: &GroupElement) -> f64 {
        self.norm(&self.group.between(x, y))
    }

    /// `{x : d(0, x) ≤ radius}`, sorted.
    pub fn ball(&self, radius: f64) -> Vec<GroupElement> {
        self.advance(|m| m.frontier.peek().is_none_or(|Reverse((Dist(d), _))| *d > radius));
        let memo = self.memo.read().expect("metric memo poisoned");
        let mut out: Vec<GroupElement> =
            memo.settled.iter().filter(|(_, &d)| d <= radius).map(|(x, _)| x.clone()).collect();
        out.sort();
        out
    }

    /// `e_γ(A) = Σ_{i∈A} e^{γ d(0,i)}`.
    pub fn e_gamma(&self, gamma: f64, set: &ConfigSet) -> f64 {
        set.iter().map(|x| (gamma * self.norm(x)).exp()).sum()
    }

    /// `K_γ = Σ_i a(0,i) e^{γ d(0,i)}`.
    pub fn k_gamma(&self, kernel: &Kernel, gamma: f64) -> f64 {
        kernel.support().map(|(o, rate)| rate * (gamma * self.norm(o)).exp()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nn() -> Kernel {
        Kernel::nearest_neighbour(1, 1.0).unwrap()
    }

    /// Oracle: on the line with unit steps of length `len`, `d(0, i) = |i| len`.
    #[test]
    fn nearest_neighbour_line() {
        let m = Metric::build(&nn(), &TailSchedule::Exponential, 4).unwrap();
        let ln2 = 2f64.ln();
        for i in -6..=6 {
            assert!((m.norm(&GroupElement::z(i)) - (i.abs() as f64) * ln2).abs() < 1e-12);
        }
        assert_eq!(m.norm(&GroupElement::z(0)), 0.0);
        let ball: Vec<GroupElement> = (-1..=1).map(GroupElement::z).collect();
        assert_eq!(m.ball(ln2 + 1e-12), ball);
    }

    #[test]
    fn e_gamma_and_k_gamma() {
        let m = Metric::build(&nn(), &TailSchedule::Exponential, 4).unwrap();
        let a: ConfigSet = [0, 1].iter().map(|&x| GroupElement::z(x)).collect();
        assert!((m.e_gamma(1.0, &a) - 3.0).abs() < 1e-12);
        assert_eq!(m.e_gamma(0.0, &a), 2.0);
        assert_eq!(m.e_gamma(1.0, &ConfigSet::empty()), 0.0);
        assert!((m.k_gamma(&nn(), 0.0) - 2.0).abs() < 1e-12);
        assert!((m.k_gamma(&nn(), 1.0) - 4.0).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 0..20 {
            let kg = m.k_gamma(&nn(), k as f64 * 0.25);
            assert!(kg >= prev);
            prev = kg;
        }
    }

    #[test]
    fn long_range_offsets_get_longer_edges() {
        let k = Kernel::new(
            Group::zd(1),
            vec![(GroupElement::z(1), 1.0), (GroupElement::z(-1), 1.0), (GroupElement::z(5), 0.001)],
        )
        .unwrap();
        let m = Metric::build(&k, &TailSchedule::Exponential, 4).unwrap();
        let lens: HashMap<_, _> = m.generators().iter().cloned().collect();
        assert!((lens[&GroupElement::z(1)] - 2f64.ln()).abs() < 1e-12);
        assert!(lens[&GroupElement::z(5)] > 2f64.ln());
        assert_eq!(lens[&GroupElement::z(5)], lens[&GroupElement::z(-5)]);
    }

    #[test]
    fn disconnected_generators_are_reported() {
        let k = Kernel::new(Group::zd(1), vec![(GroupElement::z(2), 1.0)]).unwrap();
        assert!(matches!(
            Metric::build(&k, &TailSchedule::Exponential, 6),
            Err(Error::DisconnectedMetric { .. })
        ));
        let zero = Kernel::zero(Group::zd(2));
        let m = Metric::build(&zero, &TailSchedule::Exponential, 2).unwrap();
        assert_eq!(m.norm(&zero.group().identity()), 0.0);
    }

    #[test]
    fn invariance_and_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kernel in [
            Kernel::new(
                Group::zd(2),
                vec![(GroupElement::lattice(&[1, 0]), 1.0), (GroupElement::lattice(&[0, 1]), 0.4), (GroupElement::lattice(&[2, 1]), 0.05)],
            )
            .unwrap(),
            {
                let g = Group::free_product(&[2, 3]);
                Kernel::new(g.clone(), vec![(g.parse_element("a").unwrap(), 1.0), (g.parse_element("b").unwrap(), 0.2)]).unwrap()
            },
        ] {
            let m = Metric::build(&kernel, &TailSchedule::Exponential, 4).unwrap();
            let g = kernel.group();
            for _ in 0..1000 {
                let i = g.random_element(&mut rng, 5);
                let j = g.random_element(&mut rng, 5);
                let k = g.random_element(&mut rng, 5);
                let dij = m.distance(&i, &j);
                assert!((dij - m.distance(&g.mul(&k, &i), &g.mul(&k, &j))).abs() < 1e-12);
                assert!(m.distance(&i, &k) <= dij + m.distance(&j, &k) + 1e-12);
                assert_eq!(dij == 0.0, i == j);
                assert!((dij - m.distance(&j, &i)).abs() < 1e-12);
            }
            for radius in [1.0, 2.0, 3.0] {
                let ball = m.ball(radius);
                assert!(ball.iter().all(|x| m.norm(x) <= radius));
                assert!(!ball.is_empty() && ball.len() < 10_000);
            }
        }
    }
}
