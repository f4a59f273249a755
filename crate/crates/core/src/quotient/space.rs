use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{canonical_rep, symmetry_count, ShiftClass};
use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::kernel::Kernel;

pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

/// Truncation caps: at most `max_size` infected sites, and no pair of sites further
/// apart than `max_diameter` in word length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Caps {
    pub max_size: usize,
    pub max_diameter: u64,
}

impl Caps {
    pub fn new(max_size: usize, max_diameter: u64) -> Self {
        Caps { max_size, max_diameter }
    }
}

/// Class-level transition structure of one state, independent of `δ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transitions {
    /// `(target, number of sites whose recovery leads there)`.
    pub recoveries: Vec<(usize, u32)>,
    /// Number of recoveries that empty the configuration (0 or 1).
    pub deaths: u32,
    /// `(target, summed infection rate)`.
    pub infections: Vec<(usize, f64)>,
    /// Infection rate leading outside the caps.
    pub truncated_rate: f64,
}

/// Shift classes reachable from the singleton class within the caps.
#[derive(Debug, Clone)]
pub struct StateSpace {
    kernel: Kernel,
    caps: Caps,
    classes: Vec<ShiftClass>,
    index: HashMap<ConfigSet, usize>,
    transitions: Vec<Transitions>,
}

impl StateSpace {
    /// Breadth-first enumeration from `{0}` over all in-cap transitions.
    pub fn enumerate(kernel: &Kernel, caps: Caps) -> Result<Self> {
        Self::enumerate_with_limit(kernel, caps, DEFAULT_STATE_LIMIT)
    }

    pub fn enumerate_with_limit(kernel: &Kernel, caps: Caps, limit: usize) -> Result<Self> {
        if caps.max_size == 0 {
            return Err(Error::InvalidCaps("max_size must be at least 1".into()));
        }
        let group = kernel.group();
        let start = ShiftClass::singleton(group);
        let mut classes = vec![start.clone()];
        let mut index = HashMap::from([(start.rep().clone(), 0usize)]);
        let mut transitions: Vec<Transitions> = Vec::new();
        let mut queue = VecDeque::from([0usize]);

        let mut lookup = |rep: ConfigSet, classes: &mut Vec<ShiftClass>, queue: &mut VecDeque<usize>| -> Result<usize> {
            if let Some(&k) = index.get(&rep) {
                return Ok(k);
            }
            if classes.len() >= limit {
                return Err(Error::CapsTooLarge { limit, count: classes.len() });
            }
            let k = classes.len();
            let m = symmetry_count(group, &rep);
            index.insert(rep.clone(), k);
            classes.push(ShiftClass { rep, m });
            queue.push_back(k);
            Ok(k)
        };

        while let Some(k) = queue.pop_front() {
            let rep = classes[k].rep().clone();
            let mut tr = Transitions::default();
            let mut rec: Vec<(usize, u32)> = Vec::new();
            for x in rep.iter() {
                let rest = rep.without(x);
                if rest.is_empty() {
                    tr.deaths += 1;
                    continue;
                }
                let (c, _) = canonical_rep(group, &rest)?;
                let target = lookup(c, &mut classes, &mut queue)?;
                match rec.iter_mut().find(|(t, _)| *t == target) {
                    Some(e) => e.1 += 1,
                    None => rec.push((target, 1)),
                }
            }
            let mut inf: Vec<(usize, f64)> = Vec::new();
            for x in rep.iter() {
                for (o, rate) in kernel.support() {
                    let y = group.mul(x, o);
                    if rep.contains(&y) {
                        continue;
                    }
                    let grown = rep.with(y.clone());
                    let fits = grown.len() <= caps.max_size
                        && rep.iter().all(|z| group.word_length(&group.between(z, &y)) <= caps.max_diameter);
                    if !fits {
                        tr.truncated_rate += rate;
                        continue;
                    }
                    let (c, _) = canonical_rep(group, &grown)?;
                    let target = lookup(c, &mut classes, &mut queue)?;
                    match inf.iter_mut().find(|(t, _)| *t == target) {
                        Some(e) => e.1 += rate,
                        None => inf.push((target, rate)),
                    }
                }
            }
            rec.sort_by_key(|e| e.0);
            inf.sort_by_key(|e| e.0);
            tr.recoveries = rec;
            tr.infections = inf;
            debug_assert_eq!(transitions.len(), k);
            transitions.push(tr);
        }

        Ok(StateSpace { kernel: kernel.clone(), caps, classes, index, transitions })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ShiftClass] {
        &self.classes
    }

    pub fn class(&self, k: usize) -> &ShiftClass {
        &self.classes[k]
    }

    pub fn transitions(&self) -> &[Transitions] {
        &self.transitions
    }

    /// Index of the class whose canonical representative is `rep`.
    pub fn index_of_rep(&self, rep: &ConfigSet) -> Option<usize> {
        self.index.get(rep).copied()
    }

    /// Index of the class of an arbitrary nonempty set.
    pub fn index_of(&self, set: &ConfigSet) -> Option<usize> {
        let (rep, _) = canonical_rep(self.kernel.group(), set).ok()?;
        self.index_of_rep(&rep)
    }

    /// Class sizes `|A|` as floats, aligned with the state indices.
    pub fn sizes(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.size() as f64).collect()
    }

    /// Whether every state can reach the singleton class (true whenever recoveries
    /// are possible; the chain is then irreducible on the enumerated states).
    pub fn all_reach_singleton(&self) -> bool {
        self.transitions.iter().enumerate().all(|(k, t)| k == 0 || !t.recoveries.is_empty())
    }
}
