use std::fmt;

use serde::{Deserialize, Serialize};

use crate::group::{Group, GroupElement};

/// A finite set of sites, kept sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct ConfigSet(Vec<GroupElement>);

impl ConfigSet {
    pub fn empty() -> Self {
        ConfigSet(Vec::new())
    }

    pub fn singleton(x: GroupElement) -> Self {
        ConfigSet(vec![x])
    }

    pub fn new(mut elems: Vec<GroupElement>) -> Self {
        elems.sort();
        elems.dedup();
        ConfigSet(elems)
    }

    /// Builds from a list that is already sorted and duplicate-free.
    pub(crate) fn from_sorted(elems: Vec<GroupElement>) -> Self {
        debug_assert!(elems.windows(2).all(|w| w[0] < w[1]));
        ConfigSet(elems)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.0.binary_search(x).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GroupElement> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[GroupElement] {
        &self.0
    }

    pub fn min(&self) -> Option<&GroupElement> {
        self.0.first()
    }

    pub fn intersects(&self, other: &ConfigSet) -> bool {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().any(|x| large.contains(x))
    }

    pub fn intersection_len(&self, other: &ConfigSet) -> usize {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().filter(|x| large.contains(x)).count()
    }

    pub fn with(&self, x: GroupElement) -> ConfigSet {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&x) {
            v.insert(pos, x);
        }
        ConfigSet(v)
    }

    pub fn without(&self, x: &GroupElement) -> ConfigSet {
        ConfigSet(self.0.iter().filter(|y| *y != x).cloned().collect())
    }

    /// Left translate `g·A`.
    pub fn translate(&self, group: &Group, g: &GroupElement) -> ConfigSet {
        ConfigSet::new(self.0.iter().map(|x| group.mul(g, x)).collect())
    }

    /// Largest word length of `a⁻¹b` over pairs of elements.
    pub fn diameter(&self, group: &Group) -> u64 {
        let mut best = 0;
        for (k, a) in self.0.iter().enumerate() {
            for b in &self.0[k + 1..] {
                best = best.max(group.word_length(&group.between(a, b)));
            }
        }
        best
    }
}

impl FromIterator<GroupElement> for ConfigSet {
    fn from_iter<T: IntoIterator<Item = GroupElement>>(iter: T) -> Self {
        ConfigSet::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ConfigSet {
    type Item = &'a GroupElement;
    type IntoIter = std::slice::Iter<'a, GroupElement>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for ConfigSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(xs: &[i64]) -> ConfigSet {
        xs.iter().map(|&x| GroupElement::z(x)).collect()
    }

    #[test]
    fn sorted_and_deduplicated() {
        let a = z(&[3, 1, 3, -2]);
        assert_eq!(a, z(&[-2, 1, 3]));
        assert_eq!(a.to_string(), "{-2,1,3}");
        assert_eq!(a.with(GroupElement::z(0)), z(&[-2, 0, 1, 3]));
        assert_eq!(a.without(&GroupElement::z(1)), z(&[-2, 3]));
    }

    #[test]
    fn diameter_and_translation() {
        let g = Group::zd(1);
        let a = z(&[0, 2, 5]);
        assert_eq!(a.diameter(&g), 5);
        assert_eq!(a.translate(&g, &GroupElement::z(-2)), z(&[-2, 0, 3]));
        assert_eq!(a.intersection_len(&z(&[2, 5, 7])), 2);
    }
}
