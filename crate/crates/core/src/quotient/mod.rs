//! The contact process modulo shifts as an explicit chain on shift classes.

mod generator;
mod semigroup;
mod space;

pub use generator::SparseGenerator;
pub use semigroup::{apply_semigroup, expected_size, SemigroupOutput, DEFAULT_UNIFORMIZATION_TOL};
pub use space::{Caps, StateSpace, Transitions, DEFAULT_STATE_LIMIT};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::group::{Group, GroupElement};

/// Equivalence class of a finite set under left translation, stored through a
/// canonical representative that contains the identity as its smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftClass {
    rep: ConfigSet,
    m: u32,
}

impl ShiftClass {
    /// Class of `{0}`.
    pub fn singleton(group: &Group) -> Self {
        ShiftClass { rep: ConfigSet::singleton(group.identity()), m: 1 }
    }

    pub fn rep(&self) -> &ConfigSet {
        &self.rep
    }

    /// Number of translations fixing the representative.
    pub fn symmetry(&self) -> u32 {
        self.m
    }

    pub fn size(&self) -> usize {
        self.rep.len()
    }

    pub fn is_singleton(&self) -> bool {
        self.rep.len() == 1
    }
}

impl fmt::Display for ShiftClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.rep.fmt(f)
    }
}

/// Canonical representative of `set` and the shift `g` with `g·rep = set`.
pub fn canonicalize(group: &Group, set: &ConfigSet) -> Result<(ShiftClass, GroupElement)> {
    let (rep, shift) = canonical_rep(group, set)?;
    let m = symmetry_count(group, &rep);
    Ok((ShiftClass { rep, m }, shift))
}

/// Representative only, without the symmetry count.
pub(crate) fn canonical_rep(group: &Group, set: &ConfigSet) -> Result<(ConfigSet, GroupElement)> {
    let first = set.min().ok_or(Error::EmptyConfiguration)?;
    match group {
        // Lexicographic order on Z^d is translation invariant, so shifting by the
        // minimum keeps the list sorted and puts the origin first.
        Group::Zd { .. } => {
            let inv = group.inverse(first);
            let rep = ConfigSet::from_sorted(set.iter().map(|x| group.mul(&inv, x)).collect());
            Ok((rep, first.clone()))
        }
        // Shortlex is not translation invariant; take the smallest of the |A|
        // translates that contain the identity.
        Group::FreeProduct { .. } => {
            let mut best: Option<(ConfigSet, GroupElement)> = None;
            for a in set.iter() {
                let cand = set.translate(group, &group.inverse(a));
                if best.as_ref().is_none_or(|(b, _)| cand < *b) {
                    best = Some((cand, a.clone()));
                }
            }
            Ok(best.expect("nonempty set"))
        }
    }
}

/// `m(A) = |{i : iA = A}|` for a representative containing the identity: any such
/// `i` maps the identity into `A`, so the candidates are the elements of `A`.
pub fn symmetry_count(group: &Group, rep: &ConfigSet) -> u32 {
    if group.is_torsion_free() || rep.len() == 1 {
        return 1;
    }
    rep.iter().filter(|i| rep.translate(group, i) == *rep).count() as u32
}
