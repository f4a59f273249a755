//! Translation-invariant infection kernels and irreducibility predicates.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Group, GroupElement};

/// A finitely supported, translation-invariant kernel: `a(i, j) = rate(i⁻¹j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    group: Group,
    offsets: Vec<GroupElement>,
    rates: Vec<f64>,
    total_rate: f64,
}

impl Kernel {
    /// Builds a kernel from `(offset, rate)` pairs. Zero rates are dropped.
    pub fn new(group: Group, entries: Vec<(GroupElement, f64)>) -> Result<Self> {
        group.validate()?;
        let mut kept: Vec<(GroupElement, f64)> = Vec::with_capacity(entries.len());
        for (offset, rate) in entries {
            if !group.contains(&offset) {
                return Err(Error::InvalidKernel(format!("offset {offset} is not an element of {group:?}")));
            }
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::InvalidKernel(format!("rate {rate} at offset {offset} must be finite and >= 0")));
            }
            if rate == 0.0 {
                continue;
            }
            if group.is_identity(&offset) {
                return Err(Error::InvalidKernel("identity offset: a site cannot infect itself".into()));
            }
            if kept.iter().any(|(o, _)| *o == offset) {
                return Err(Error::InvalidKernel(format!("duplicate offset {offset}")));
            }
            kept.push((offset, rate));
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let total_rate = kept.iter().map(|(_, r)| r).sum();
        let (offsets, rates) = kept.into_iter().unzip();
        Ok(Kernel { group, offsets, rates, total_rate })
    }

    /// The kernel with no infections at all (pure death).
    pub fn zero(group: Group) -> Self {
        Kernel { group, offsets: Vec::new(), rates: Vec::new(), total_rate: 0.0 }
    }

    /// Nearest-neighbour kernel on `Z^d` with the given rate per neighbour.
    pub fn nearest_neighbour(dim: usize, rate: f64) -> Result<Self> {
        let group = Group::zd(dim);
        let entries = group.standard_generators().into_iter().map(|g| (g, rate)).collect();
        Kernel::new(group, entries)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    /// `|a| = Σ rates`.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn offsets(&self) -> &[GroupElement] {
        &self.offsets
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn support(&self) -> impl Iterator<Item = (&GroupElement, f64)> {
        self.offsets.iter().zip(self.rates.iter().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.offsets.is_empty()
    }

    /// `a(i, j)`.
    pub fn rate(&self, i: &GroupElement, j: &GroupElement) -> f64 {
        let o = self.group.between(i, j);
        match self.offsets.binary_search(&o) {
            Ok(k) => self.rates[k],
            Err(_) => 0.0,
        }
    }

    /// Reversed kernel `a†(i, j) = a(j, i)`: offsets mapped to their inverses.
    pub fn dual(&self) -> Kernel {
        let mut entries: Vec<(GroupElement, f64)> =
            self.support().map(|(o, r)| (self.group.inverse(o), r)).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let (offsets, rates) = entries.into_iter().unzip();
        Kernel { group: self.group.clone(), offsets, rates, total_rate: self.total_rate }
    }

    /// Offsets together with their inverses.
    pub fn symmetrized_offsets(&self) -> Vec<GroupElement> {
        let mut v: Vec<GroupElement> =
            self.offsets.iter().flat_map(|o| [o.clone(), self.group.inverse(o)]).collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IrreducibilityMode {
    /// `i ⇀ j` for all `i, j`.
    Full,
    /// Every pair has a common ancestor and a common descendant.
    ConditionIrr,
    /// Cut condition with `a(i,j) ∨ a(j,i)`.
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Verified,
    Refuted,
    Inconclusive,
}

/// Elements reachable from the identity by chains of `steps` that stay inside the
/// word-length ball of the given radius.
fn reachable_in_ball(group: &Group, steps: &[GroupElement], radius: u64) -> HashSet<GroupElement> {
    let id = group.identity();
    let mut seen = HashSet::from([id.clone()]);
    let mut queue = VecDeque::from([id]);
    while let Some(x) = queue.pop_front() {
        for s in steps {
            let y = group.mul(&x, s);
            if group.word_length(&y) <= radius && seen.insert(y.clone()) {
                queue.push_back(y);
            }
        }
    }
    seen
}

/// Sound refutation of "the offsets generate everything by positive chains" and
/// "the offsets generate the group": homomorphisms into `Z` (coordinates, exponent
/// sums of infinite factors) and into `Z_n` (exponent sums of finite factors).
fn refutes(group: &Group, offsets: &[GroupElement], semigroup: bool) -> bool {
    match group {
        Group::Zd { dim } => (0..*dim).any(|k| {
            let coords: Vec<i64> = offsets
                .iter()
                .map(|o| match o {
                    GroupElement::Lattice(v) => v[k],
                    GroupElement::Word(_) => 0,
                })
                .collect();
            let all_zero = coords.iter().all(|&c| c == 0);
            let one_signed = coords.iter().all(|&c| c >= 0) || coords.iter().all(|&c| c <= 0);
            let g = coords.iter().fold(0u64, |g, &c| gcd(g, c.unsigned_abs()));
            all_zero || g != 1 || (semigroup && one_signed)
        }),
        Group::FreeProduct { orders } => orders.iter().enumerate().any(|(f, &n)| {
            let sums: Vec<i64> = offsets
                .iter()
                .map(|o| match o {
                    GroupElement::Word(w) => w.iter().filter(|s| s.factor as usize == f).map(|s| s.exp).sum(),
                    GroupElement::Lattice(_) => 0,
                })
                .collect();
            if n == 0 {
                let g = sums.iter().fold(0u64, |g, &c| gcd(g, c.unsigned_abs()));
                let one_signed = sums.iter().all(|&c| c >= 0) || sums.iter().all(|&c| c <= 0);
                g != 1 || (semigroup && one_signed)
            } else {
                let g = sums.iter().fold(u64::from(n), |g, &c| gcd(g, c.rem_euclid(i64::from(n)) as u64));
                g != 1
            }
        }),
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Checks an irreducibility condition on the ball of the given word-length radius.
///
/// `Verified` means every generator (for `Full`/`Weak`) or every pair in the ball
/// (for `ConditionIrr`) has a witness inside the search region; `Refuted` is only
/// returned when a homomorphism argument rules the condition out globally.
pub fn check_irreducibility(kernel: &Kernel, mode: IrreducibilityMode, radius: u64) -> Verdict {
    let group = kernel.group();
    let radius = radius.max(1);
    match mode {
        IrreducibilityMode::Full | IrreducibilityMode::Weak => {
            let steps = if mode == IrreducibilityMode::Full {
                kernel.offsets().to_vec()
            } else {
                kernel.symmetrized_offsets()
            };
            let reach = reachable_in_ball(group, &steps, radius);
            if group.standard_generators().iter().all(|g| reach.contains(g)) {
                Verdict::Verified
            } else if refutes(group, &steps, mode == IrreducibilityMode::Full) {
                Verdict::Refuted
            } else {
                Verdict::Inconclusive
            }
        }
        IrreducibilityMode::ConditionIrr => {
            let reach = reachable_in_ball(group, kernel.offsets(), 2 * radius);
            let reach_list: Vec<&GroupElement> = reach.iter().collect();
            let ok = group.ball(radius).iter().all(|g| {
                let ancestor = reach_list.iter().any(|u| reach.contains(&group.mul(u, g)));
                let descendant = reach_list.iter().any(|w| reach.contains(&group.mul(g, w)));
                ancestor && descendant
            });
            if ok {
                Verdict::Verified
            } else if refutes(group, &kernel.symmetrized_offsets(), false) {
                // Not even weakly irreducible, so the intermediate condition fails too.
                Verdict::Refuted
            } else {
                Verdict::Inconclusive
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z1(entries: &[(i64, f64)]) -> Result<Kernel> {
        Kernel::new(Group::zd(1), entries.iter().map(|&(o, r)| (GroupElement::z(o), r)).collect())
    }

    #[test]
    fn construction() {
        let k = z1(&[(1, 1.0), (-1, 1.0)]).unwrap();
        assert_eq!(k.total_rate(), 2.0);
        let k2 = Kernel::new(Group::zd(2), vec![(GroupElement::lattice(&[1, 0]), 0.5)]).unwrap();
        assert_eq!(k2.total_rate(), 0.5);
        assert_eq!(k2.offsets().len(), 1);
        assert!(matches!(z1(&[(0, 1.0)]), Err(Error::InvalidKernel(_))));
        assert!(matches!(z1(&[(1, -1.0)]), Err(Error::InvalidKernel(_))));
        assert_eq!(z1(&[(1, 1.0), (2, 0.0)]).unwrap().offsets().len(), 1);
        assert_eq!(z1(&[(0, 0.0)]).unwrap().total_rate(), 0.0);
    }

    #[test]
    fn dual_kernel() {
        let k = z1(&[(1, 1.0), (2, 0.5)]).unwrap();
        let d = k.dual();
        assert_eq!(d, z1(&[(-1, 1.0), (-2, 0.5)]).unwrap());
        assert_eq!(d.dual(), k);
        let sym = z1(&[(1, 1.0), (-1, 1.0)]).unwrap();
        assert_eq!(sym.dual(), sym);

        let g = Group::free_product(&[0, 0]);
        let ab = g.parse_element("ab").unwrap();
        let k = Kernel::new(g.clone(), vec![(ab, 0.3)]).unwrap();
        let d = k.dual();
        assert_eq!(d.offsets()[0], g.parse_element("BA").unwrap());
        assert_eq!(d.rates()[0], 0.3);
        assert_eq!(d.total_rate(), k.total_rate());
    }

    #[test]
    fn rate_lookup_is_translation_invariant() {
        let k = z1(&[(1, 1.0), (2, 0.5)]).unwrap();
        assert_eq!(k.rate(&GroupElement::z(3), &GroupElement::z(5)), 0.5);
        assert_eq!(k.rate(&GroupElement::z(5), &GroupElement::z(3)), 0.0);
    }

    /// Brute-force oracle: BFS on the radius ball for pairs (i, j) of the ball.
    fn brute_full(k: &Kernel, radius: i64) -> bool {
        let inside = |x: i64| x.abs() <= radius;
        (-radius..=radius).all(|i| {
            let mut seen = HashSet::from([i]);
            let mut q = VecDeque::from([i]);
            while let Some(x) = q.pop_front() {
                for o in k.offsets() {
                    let GroupElement::Lattice(v) = o else { unreachable!() };
                    let y = x + v[0];
                    if inside(y) && seen.insert(y) {
                        q.push_back(y);
                    }
                }
            }
            (-radius..=radius).all(|j| seen.contains(&j))
        })
    }

    #[test]
    fn irreducibility_modes() {
        let nn = z1(&[(1, 1.0), (-1, 1.0)]).unwrap();
        assert_eq!(check_irreducibility(&nn, IrreducibilityMode::Full, 5), Verdict::Verified);
        assert!(brute_full(&nn, 5));

        let right = z1(&[(1, 1.0)]).unwrap();
        assert!(!brute_full(&right, 5));
        assert_eq!(check_irreducibility(&right, IrreducibilityMode::Full, 5), Verdict::Refuted);
        assert_eq!(check_irreducibility(&right, IrreducibilityMode::ConditionIrr, 5), Verdict::Verified);
        assert_eq!(check_irreducibility(&right, IrreducibilityMode::Weak, 5), Verdict::Verified);

        let even = z1(&[(2, 1.0), (-2, 1.0)]).unwrap();
        assert_eq!(check_irreducibility(&even, IrreducibilityMode::Weak, 5), Verdict::Refuted);
        assert_eq!(check_irreducibility(&Kernel::zero(Group::zd(1)), IrreducibilityMode::Full, 3), Verdict::Refuted);
    }

    #[test]
    fn irreducibility_on_tree() {
        let g = Group::free_product(&[2, 2, 2]);
        let k = Kernel::new(g.clone(), g.standard_generators().into_iter().map(|x| (x, 1.0)).collect()).unwrap();
        assert_eq!(check_irreducibility(&k, IrreducibilityMode::Full, 2), Verdict::Verified);
        let only_a = Kernel::new(g.clone(), vec![(g.parse_element("a").unwrap(), 1.0)]).unwrap();
        assert_eq!(check_irreducibility(&only_a, IrreducibilityMode::Weak, 3), Verdict::Refuted);
    }
}
