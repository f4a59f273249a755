//! Countable groups: integer lattices `Z^d` and free products of cyclic groups.
//!
//! Elements are plain values tagged by their model. All arithmetic goes through a
//! [`Group`] descriptor, which knows the lattice dimension or the orders of the
//! cyclic factors needed to reduce words.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// One syllable `g_f^k` of a reduced word in a free product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Syllable {
    pub factor: u8,
    pub exp: i64,
}

/// A group element, tagged by the group model it belongs to.
///
/// The total order is lexicographic for lattice vectors and shortlex for words,
/// so the identity is the smallest word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupElement {
    Lattice(SmallVec<[i64; 3]>),
    Word(SmallVec<[Syllable; 4]>),
}

impl GroupElement {
    /// Element of `Z^d` from its coordinates.
    pub fn lattice(coords: &[i64]) -> Self {
        GroupElement::Lattice(SmallVec::from_slice(coords))
    }

    /// One-dimensional lattice element.
    pub fn z(x: i64) -> Self {
        GroupElement::Lattice(SmallVec::from_slice(&[x]))
    }

    fn syllable_len(&self) -> usize {
        match self {
            GroupElement::Lattice(_) => 0,
            GroupElement::Word(w) => w.iter().map(|s| s.exp.unsigned_abs() as usize).sum(),
        }
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (GroupElement::Lattice(a), GroupElement::Lattice(b)) => a.cmp(b),
            (GroupElement::Word(a), GroupElement::Word(b)) => self
                .syllable_len()
                .cmp(&other.syllable_len())
                .then_with(|| a.len().cmp(&b.len()))
                .then_with(|| a.cmp(b)),
            (GroupElement::Lattice(_), GroupElement::Word(_)) => Ordering::Less,
            (GroupElement::Word(_), GroupElement::Lattice(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Lattice(v) if v.len() == 1 => write!(f, "{}", v[0]),
            GroupElement::Lattice(v) => {
                write!(f, "(")?;
                for (k, x) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            GroupElement::Word(w) if w.is_empty() => write!(f, "e"),
            GroupElement::Word(w) => {
                for s in w {
                    let letter = (b'a' + s.factor) as char;
                    match s.exp {
                        1 => write!(f, "{letter}")?,
                        -1 => write!(f, "{}", letter.to_ascii_uppercase())?,
                        k => write!(f, "{letter}^{k}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

/// Group model descriptor.
///
/// `FreeProduct` holds the order of each cyclic factor; order `0` stands for an
/// infinite cyclic factor. A single factor of order `n` gives the cyclic group
/// `Z_n`; factors `[2, 2, 2]` give the Cayley graph of the 3-regular tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Group {
    Zd { dim: usize },
    FreeProduct { orders: Vec<u32> },
}

impl Group {
    pub fn zd(dim: usize) -> Self {
        Group::Zd { dim }
    }

    pub fn free_product(orders: &[u32]) -> Self {
        Group::FreeProduct { orders: orders.to_vec() }
    }

    /// Checks the descriptor itself (positive dimension, orders 0 or >= 2).
    pub fn validate(&self) -> Result<()> {
        match self {
            Group::Zd { dim } if *dim == 0 || *dim > 16 => {
                Err(Error::InvalidGroup(format!("lattice dimension {dim} out of range 1..=16")))
            }
            Group::FreeProduct { orders } if orders.is_empty() || orders.len() > 26 => Err(
                Error::InvalidGroup(format!("free product needs 1..=26 factors, got {}", orders.len())),
            ),
            Group::FreeProduct { orders } if orders.iter().any(|&n| n == 1) => {
                Err(Error::InvalidGroup("cyclic factor of order 1 is trivial".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            Group::Zd { dim } => GroupElement::Lattice(SmallVec::from_elem(0, *dim)),
            Group::FreeProduct { .. } => GroupElement::Word(SmallVec::new()),
        }
    }

    pub fn is_identity(&self, x: &GroupElement) -> bool {
        match x {
            GroupElement::Lattice(v) => v.iter().all(|&c| c == 0),
            GroupElement::Word(w) => w.is_empty(),
        }
    }

    /// Whether `x` is a well-formed element of this group.
    pub fn contains(&self, x: &GroupElement) -> bool {
        match (self, x) {
            (Group::Zd { dim }, GroupElement::Lattice(v)) => v.len() == *dim,
            (Group::FreeProduct { orders }, GroupElement::Word(w)) => {
                w.iter().all(|s| {
                    let Some(&n) = orders.get(s.factor as usize) else { return false };
                    if n == 0 {
                        s.exp != 0
                    } else {
                        s.exp > 0 && s.exp < i64::from(n)
                    }
                }) && w.windows(2).all(|p| p[0].factor != p[1].factor)
            }
            _ => false,
        }
    }

    fn reduce_exp(&self, factor: u8, exp: i64) -> i64 {
        match self {
            Group::FreeProduct { orders } => {
                let n = i64::from(orders[factor as usize]);
                if n == 0 {
                    exp
                } else {
                    exp.rem_euclid(n)
                }
            }
            Group::Zd { .. } => exp,
        }
    }

    /// Group product `x · y`.
    pub fn mul(&self, x: &GroupElement, y: &GroupElement) -> GroupElement {
        match (x, y) {
            (GroupElement::Lattice(a), GroupElement::Lattice(b)) => {
                GroupElement::Lattice(a.iter().zip(b.iter()).map(|(p, q)| p + q).collect())
            }
            (GroupElement::Word(a), GroupElement::Word(b)) => {
                let mut out: SmallVec<[Syllable; 4]> = a.clone();
                let mut rest = b.iter().peekable();
                while let (Some(last), Some(first)) = (out.last().copied(), rest.peek().copied()) {
                    if last.factor != first.factor {
                        break;
                    }
                    rest.next();
                    let e = self.reduce_exp(last.factor, last.exp + first.exp);
                    out.pop();
                    if e != 0 {
                        out.push(Syllable { factor: last.factor, exp: e });
                        break;
                    }
                }
                out.extend(rest.copied());
                GroupElement::Word(out)
            }
            _ => panic!("mixed group models in product"),
        }
    }

    pub fn inverse(&self, x: &GroupElement) -> GroupElement {
        match x {
            GroupElement::Lattice(a) => GroupElement::Lattice(a.iter().map(|p| -p).collect()),
            GroupElement::Word(w) => GroupElement::Word(
                w.iter()
                    .rev()
                    .map(|s| Syllable { factor: s.factor, exp: self.reduce_exp(s.factor, -s.exp) })
                    .collect(),
            ),
        }
    }

    /// `x⁻¹ · y`, the offset carrying `x` to `y`.
    pub fn between(&self, x: &GroupElement, y: &GroupElement) -> GroupElement {
        self.mul(&self.inverse(x), y)
    }

    /// Word length with respect to the standard generators (L1 norm on `Z^d`;
    /// on a finite cyclic factor of order `n`, `g^k` costs `min(k, n - k)`).
    pub fn word_length(&self, x: &GroupElement) -> u64 {
        match (self, x) {
            (_, GroupElement::Lattice(v)) => v.iter().map(|c| c.unsigned_abs()).sum(),
            (Group::FreeProduct { orders }, GroupElement::Word(w)) => w
                .iter()
                .map(|s| {
                    let n = u64::from(orders[s.factor as usize]);
                    let k = s.exp.unsigned_abs();
                    if n == 0 {
                        k
                    } else {
                        k.min(n - k)
                    }
                })
                .sum(),
            (Group::Zd { .. }, GroupElement::Word(_)) => panic!("word in lattice model"),
        }
    }

    /// Standard symmetric generating set (unit vectors and their negatives, or
    /// each factor letter and its inverse).
    pub fn standard_generators(&self) -> Vec<GroupElement> {
        let mut out = Vec::new();
        match self {
            Group::Zd { dim } => {
                for k in 0..*dim {
                    for s in [1, -1] {
                        let mut v: SmallVec<[i64; 3]> = SmallVec::from_elem(0, *dim);
                        v[k] = s;
                        out.push(GroupElement::Lattice(v));
                    }
                }
            }
            Group::FreeProduct { orders } => {
                for (f, _) in orders.iter().enumerate() {
                    let g = GroupElement::Word(SmallVec::from_slice(&[Syllable { factor: f as u8, exp: 1 }]));
                    let gi = self.inverse(&g);
                    if gi != g {
                        out.push(gi);
                    }
                    out.push(g);
                }
            }
        }
        out.sort();
        out
    }

    /// All elements of word length at most `radius`, in BFS order.
    pub fn ball(&self, radius: u64) -> Vec<GroupElement> {
        let gens = self.standard_generators();
        let id = self.identity();
        let mut seen: HashSet<GroupElement> = HashSet::from([id.clone()]);
        let mut out = vec![id.clone()];
        let mut queue = VecDeque::from([(id, 0u64)]);
        while let Some((x, dist)) = queue.pop_front() {
            if dist == radius {
                continue;
            }
            for g in &gens {
                let y = self.mul(&x, g);
                if seen.insert(y.clone()) {
                    out.push(y.clone());
                    queue.push_back((y, dist + 1));
                }
            }
        }
        out
    }

    /// A random element built from a random walk of up to `steps` generator moves.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> GroupElement {
        let gens = self.standard_generators();
        let mut x = self.identity();
        for _ in 0..rng.gen_range(0..=steps) {
            x = self.mul(&x, &gens[rng.gen_range(0..gens.len())]);
        }
        x
    }

    /// Parses an element from its text form: an integer (for `Z`), a comma
    /// separated tuple `(x,y,..)`, or a word such as `aB`, `a^2b`, `e`.
    pub fn parse_element(&self, text: &str) -> Result<GroupElement> {
        let text = text.trim();
        let bad = || Error::InvalidElement(format!("cannot parse `{text}` for group {self:?}"));
        match self {
            Group::Zd { dim } => {
                let inner = text.trim_start_matches('(').trim_end_matches(')');
                let coords: std::result::Result<Vec<i64>, _> =
                    inner.split(',').map(|s| s.trim().parse::<i64>()).collect();
                let coords = coords.map_err(|_| bad())?;
                if coords.len() != *dim {
                    return Err(bad());
                }
                Ok(GroupElement::lattice(&coords))
            }
            Group::FreeProduct { orders } => {
                if text.is_empty() || text == "e" {
                    return Ok(self.identity());
                }
                let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
                let mut x = self.identity();
                let mut k = 0;
                while k < chars.len() {
                    let c = chars[k];
                    if !c.is_ascii_alphabetic() {
                        return Err(bad());
                    }
                    let factor = (c.to_ascii_lowercase() as u8 - b'a') as usize;
                    if factor >= orders.len() {
                        return Err(bad());
                    }
                    let mut exp: i64 = if c.is_ascii_uppercase() { -1 } else { 1 };
                    k += 1;
                    if k < chars.len() && chars[k] == '^' {
                        let start = k + 1;
                        let mut end = start;
                        while end < chars.len() && (chars[end] == '-' || chars[end].is_ascii_digit()) {
                            end += 1;
                        }
                        let num: String = chars[start..end].iter().collect();
                        exp *= num.parse::<i64>().map_err(|_| bad())?;
                        k = end;
                    }
                    let e = self.reduce_exp(factor as u8, exp);
                    if e != 0 {
                        let letter = GroupElement::Word(SmallVec::from_slice(&[Syllable { factor: factor as u8, exp: e }]));
                        x = self.mul(&x, &letter);
                    }
                }
                Ok(x)
            }
        }
    }

    /// Elements of infinite order only (`Z^d`, or free products with no finite factor
    /// and so no torsion).
    pub fn is_torsion_free(&self) -> bool {
        match self {
            Group::Zd { .. } => true,
            Group::FreeProduct { orders } => orders.iter().all(|&n| n == 0),
        }
    }

    /// Lattice dimension, if this is `Z^d`.
    pub fn lattice_dim(&self) -> Option<usize> {
        match self {
            Group::Zd { dim } => Some(*dim),
            Group::FreeProduct { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn groups() -> Vec<Group> {
        vec![Group::zd(1), Group::zd(2), Group::free_product(&[2, 3]), Group::free_product(&[0, 2]), Group::free_product(&[3])]
    }

    #[test]
    fn axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for g in groups() {
            let id = g.identity();
            for _ in 0..10_000 {
                let x = g.random_element(&mut rng, 6);
                let y = g.random_element(&mut rng, 6);
                let z = g.random_element(&mut rng, 6);
                assert!(g.contains(&x));
                assert_eq!(g.mul(&g.mul(&x, &y), &z), g.mul(&x, &g.mul(&y, &z)));
                assert_eq!(g.mul(&id, &x), x);
                assert_eq!(g.mul(&x, &g.inverse(&x)), id);
                assert_eq!(g.inverse(&g.mul(&x, &y)), g.mul(&g.inverse(&y), &g.inverse(&x)));
            }
        }
    }

    #[test]
    fn cyclic_three_wraps() {
        let g = Group::free_product(&[3]);
        let a = g.parse_element("a").unwrap();
        let a3 = g.mul(&g.mul(&a, &a), &a);
        assert!(g.is_identity(&a3));
        assert_eq!(g.inverse(&a), g.parse_element("aa").unwrap());
        assert_eq!(g.ball(5).len(), 3);
    }

    #[test]
    fn word_inverse_and_display() {
        let g = Group::free_product(&[0, 0]);
        let ab = g.parse_element("ab").unwrap();
        assert_eq!(g.inverse(&ab).to_string(), "BA");
        assert_eq!(g.parse_element("a^3B").unwrap().to_string(), "a^3B");
        assert_eq!(g.identity().to_string(), "e");
    }

    #[test]
    fn shortlex_puts_identity_first() {
        let g = Group::free_product(&[2, 2, 2]);
        let ball = g.ball(3);
        let min = ball.iter().min().unwrap();
        assert!(g.is_identity(min));
        assert_eq!(ball.len(), 1 + 3 + 6 + 12);
    }

    #[test]
    fn parse_lattice() {
        let g = Group::zd(2);
        assert_eq!(g.parse_element("(1,-2)").unwrap(), GroupElement::lattice(&[1, -2]));
        assert!(g.parse_element("(1)").is_err());
        assert_eq!(Group::zd(1).parse_element("-3").unwrap(), GroupElement::z(-3));
    }

    #[test]
    fn rejects_bad_descriptors() {
        assert!(Group::zd(0).validate().is_err());
        assert!(Group::free_product(&[1]).validate().is_err());
        assert!(Group::free_product(&[2, 0]).validate().is_ok());
    }
}
