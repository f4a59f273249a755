//! Homogeneous locally finite measures on finite configurations.
//!
//! A homogeneous measure `μ` with finite bracket is stored as a pair `(c, ν̃)`:
//! `μ = c Σ_i P[iΔ ∈ ·]` where `Δ̃ ~ ν̃` is a law on shift classes. Every functional
//! used here reduces to finite sums over classes. Translates of `Δ` that contain
//! the origin are enumerated as `i ∈ Δ⁻¹`.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::group::Group;
use crate::metric::Metric;
use crate::quotient::{apply_semigroup, ShiftClass, SparseGenerator, StateSpace, DEFAULT_UNIFORMIZATION_TOL};

/// Probability law on shift classes. Empirical laws carry their sample count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TildeLaw {
    entries: Vec<(ShiftClass, f64)>,
    replicates: Option<usize>,
}

impl TildeLaw {
    /// Exact law from `(class, probability)` pairs; zero entries are dropped and the
    /// remainder renormalized.
    pub fn new(mut entries: Vec<(ShiftClass, f64)>) -> Result<Self> {
        if let Some((c, p)) = entries.iter().find(|e| !(e.1 >= 0.0 && e.1.is_finite())) {
            return Err(Error::InvalidArgument(format!("probability {p} for class {c}")));
        }
        // Sorted before summing so the result does not depend on input order.
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(ShiftClass, f64)> = Vec::with_capacity(entries.len());
        for (c, p) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += p,
                _ => merged.push((c, p)),
            }
        }
        let total: f64 = merged.iter().map(|e| e.1).sum();
        if total <= 0.0 {
            return Err(Error::ZeroSurvivingMass);
        }
        let entries = merged.into_iter().filter(|e| e.1 > 0.0).map(|(c, p)| (c, p / total)).collect();
        Ok(TildeLaw { entries, replicates: None })
    }

    /// Empirical law from observed class counts.
    pub fn empirical(counts: HashMap<ShiftClass, usize>) -> Result<Self> {
        let n: usize = counts.values().sum();
        if n == 0 {
            return Err(Error::NoSurvivors("empirical law has no samples".into()));
        }
        let mut law = TildeLaw::new(counts.into_iter().map(|(c, k)| (c, k as f64)).collect())?;
        law.replicates = Some(n);
        Ok(law)
    }

    pub fn point_mass(class: ShiftClass) -> Self {
        TildeLaw { entries: vec![(class, 1.0)], replicates: None }
    }

    /// Law aligned with the states of `space`.
    pub fn from_dense(space: &StateSpace, probs: &[f64]) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::Mismatch(format!("{} probabilities for {} states", probs.len(), space.len())));
        }
        TildeLaw::new(space.classes().iter().cloned().zip(probs.iter().copied()).collect())
    }

    /// Dense vector over `space`; classes outside the space are an error.
    pub fn to_dense(&self, space: &StateSpace) -> Result<Vec<f64>> {
        let mut v = vec![0.0; space.len()];
        for (c, p) in &self.entries {
            let k = space
                .index_of_rep(c.rep())
                .ok_or_else(|| Error::Mismatch(format!("class {c} is not in the state space")))?;
            v[k] += p;
        }
        Ok(v)
    }

    pub fn entries(&self) -> &[(ShiftClass, f64)] {
        &self.entries
    }

    pub fn replicates(&self) -> Option<usize> {
        self.replicates
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prob(&self, class: &ShiftClass) -> f64 {
        self.entries.binary_search_by(|e| e.0.cmp(class)).map_or(0.0, |k| self.entries[k].1)
    }

    /// `E[|Δ|]`.
    pub fn mean_size(&self) -> f64 {
        self.entries.iter().map(|(c, p)| p * c.size() as f64).sum()
    }

    pub fn total_variation(&self, other: &TildeLaw) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let ord = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Less => {
                    sum += a[i].1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    sum += b[j].1;
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    sum += (a[i].1 - b[j].1).abs();
                    i += 1;
                    j += 1;
                }
            }
        }
        0.5 * sum
    }

    /// Expected total-variation distance between this law and an empirical law of
    /// `n` i.i.d. draws from it, `½ Σ E|p̂ - p| ≈ ½ Σ √(2p(1-p)/(πn))`.
    pub fn expected_sampling_tv(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let n = n as f64;
        0.5 * self
            .entries
            .iter()
            .map(|(_, p)| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * n)).sqrt())
            .sum::<f64>()
    }
}

/// `μ = c Σ_i P[iΔ ∈ ·]` with `Δ̃ ~ law`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousMeasure {
    #[serde(skip)]
    group: Group,
    c: f64,
    law: TildeLaw,
    /// Recovery rate the measure belongs to, when it is an eigenmeasure.
    delta: Option<f64>,
}

impl HomogeneousMeasure {
    pub fn new(group: Group, c: f64, law: TildeLaw) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass {c} must be finite and >= 0")));
        }
        Ok(HomogeneousMeasure { group, c, law, delta: None })
    }

    /// `χ_A = Σ_i δ_{iA}` for a nonempty set `A` (mass 1, point law on `Ã`).
    pub fn translates_of(group: &Group, set: &ConfigSet) -> Result<Self> {
        let (class, _) = crate::quotient::canonicalize(group, set)?;
        HomogeneousMeasure::new(group.clone(), 1.0, TildeLaw::point_mass(class))
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        HomogeneousMeasure { c: self.c * factor, ..self.clone() }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn mass(&self) -> f64 {
        self.c
    }

    pub fn law(&self) -> &TildeLaw {
        &self.law
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// `μ({A}) = m(A) c ν̃(Ã)` for a nonempty set `A`.
    pub fn point_mass(&self, set: &ConfigSet) -> Result<f64> {
        let (class, _) = crate::quotient::canonicalize(&self.group, set)?;
        Ok(f64::from(class.symmetry()) * self.c * self.law.prob(&class))
    }
}

/// `⟨⟨μ⟩⟩ = ∫μ(dA)|A|⁻¹1{0∈A}`; in this representation it is exactly `c`.
pub fn bracket_of(m: &HomogeneousMeasure) -> f64 {
    m.c
}

/// Largest representative element handled by the line fast path; differences then
/// fit in 63 bits after an offset of `LINE_WIDTH`.
const LINE_WIDTH: u32 = 31;

/// Line representatives packed as bitmasks (bit `x` set iff `x ∈ rep`; canonical
/// representatives on `Z` start at 0) together with their element lists.
struct PackedLine {
    masks: Vec<u64>,
    elems: Vec<u8>,
    starts: Vec<usize>,
    probs: Vec<f64>,
}

impl PackedLine {
    fn elems(&self, k: usize) -> &[u8] {
        &self.elems[self.starts[k]..self.starts[k + 1]]
    }
}

fn pack_line(group: &Group, law: &TildeLaw) -> Option<PackedLine> {
    if group.lattice_dim() != Some(1) {
        return None;
    }
    let mut packed = PackedLine {
        masks: Vec::with_capacity(law.len()),
        elems: Vec::new(),
        starts: vec![0],
        probs: Vec::with_capacity(law.len()),
    };
    for (c, p) in law.entries() {
        let mut mask = 0u64;
        for x in c.rep() {
            let crate::group::GroupElement::Lattice(v) = x else { return None };
            if !(0..=i64::from(LINE_WIDTH)).contains(&v[0]) {
                return None;
            }
            mask |= 1 << v[0];
            packed.elems.push(v[0] as u8);
        }
        packed.masks.push(mask);
        packed.starts.push(packed.elems.len());
        packed.probs.push(*p);
    }
    Some(packed)
}

/// For line sets `A` (given by its elements) and `B` (by its mask), both containing
/// 0: the number of shifts `s` with `B ∩ (A + s) ≠ ∅`, and the number with
/// `|B ∩ (A + s)| = 1`. Bit `LINE_WIDTH + s` of `once` records the first case.
#[inline]
fn line_overlap_counts(a: &[u8], b: u64) -> (u32, u32) {
    let mut once = 0u64;
    let mut twice = 0u64;
    for &x in a {
        let shifted = b << (LINE_WIDTH - u32::from(x));
        twice |= once & shifted;
        once |= shifted;
    }
    (once.count_ones(), (once & !twice).count_ones())
}

/// First component of [`line_overlap_counts`] alone.
#[inline]
fn line_reach_count(a: &[u8], b: u64) -> u32 {
    a.iter().fold(0u64, |acc, &x| acc | (b << (LINE_WIDTH - u32::from(x)))).count_ones()
}

/// Both counts are symmetric in the two sets; iterate over the smaller one.
#[inline]
fn packed_pair(p: &PackedLine, k: usize, q: &PackedLine, l: usize) -> (u32, u32) {
    let (ek, el) = (p.elems(k), q.elems(l));
    if ek.len() <= el.len() {
        line_overlap_counts(ek, q.masks[l])
    } else {
        line_overlap_counts(el, p.masks[k])
    }
}

#[inline]
fn packed_reach(p: &PackedLine, k: usize, q: &PackedLine, l: usize) -> u32 {
    let (ek, el) = (p.elems(k), q.elems(l));
    if ek.len() <= el.len() {
        line_reach_count(ek, q.masks[l])
    } else {
        line_reach_count(el, p.masks[k])
    }
}

/// `|{a d⁻¹ : a ∈ A, d ∈ D}|`, the number of translates of `D` that meet `A`.
pub fn translates_meeting(group: &Group, set: &ConfigSet, rep: &ConfigSet) -> usize {
    let mut out: HashSet<crate::group::GroupElement> = HashSet::with_capacity(set.len() * rep.len());
    for a in set {
        for d in rep {
            out.insert(group.mul(a, &group.inverse(d)));
        }
    }
    out.len()
}

/// `h_μ(A) = ∫μ(dB) 1{A∩B≠∅} = c Σ_Δ̃ ν̃(Δ̃) |{a d⁻¹ : a∈A, d∈Δ}|`; zero for empty `A`.
pub fn h_eval(m: &HomogeneousMeasure, set: &ConfigSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    m.c * m
        .law
        .entries()
        .iter()
        .map(|(c, p)| p * translates_meeting(&m.group, set, c.rep()) as f64)
        .sum::<f64>()
}

/// `h_μ` on the representatives of `classes`, with the line fast path.
pub fn h_vector(m: &HomogeneousMeasure, classes: &[ShiftClass]) -> Vec<f64> {
    use rayon::prelude::*;
    let packed_law = pack_line(&m.group, &m.law);
    let targets = TildeLaw { entries: classes.iter().map(|c| (c.clone(), 1.0)).collect(), replicates: None };
    let packed_targets = pack_line(&m.group, &targets);
    match (packed_law, packed_targets) {
        (Some(law), Some(tg)) => (0..classes.len())
            .into_par_iter()
            .map(|k| {
                let s: f64 = (0..law.probs.len()).map(|l| law.probs[l] * f64::from(packed_reach(&tg, k, &law, l))).sum();
                m.c * s
            })
            .collect(),
        _ => classes.par_iter().map(|c| h_eval(m, c.rep())).collect(),
    }
}

/// `⟨⟨μ⊼ν⟩⟩` and `(μ⊼ν)({{0}})`, with standard errors when a law is empirical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntersectionStats {
    pub bracket: f64,
    pub singleton_mass: f64,
    pub bracket_se: f64,
    pub singleton_se: f64,
}

/// For one pair of representatives: `Σ_{i∈Δ⁻¹} Σ_{j∈Δ'⁻¹} |iΔ∩jΔ'|⁻¹` and the
/// number of `(i, j)` with `iΔ∩jΔ' = {0}`, summed literally over the index pairs.
pub fn pair_intersection_sums(group: &Group, delta: &ConfigSet, delta2: &ConfigSet) -> (f64, f64) {
    let mut bracket = 0.0;
    let mut single = 0.0;
    for d in delta {
        let left = delta.translate(group, &group.inverse(d));
        for e in delta2 {
            let right = delta2.translate(group, &group.inverse(e));
            let k = left.intersection_len(&right);
            debug_assert!(k >= 1, "both translates contain the origin");
            bracket += 1.0 / k as f64;
            if k == 1 {
                single += 1.0;
            }
        }
    }
    (bracket, single)
}

/// Row and column sums of the class-pair matrices (`|·|⁻¹` sums and singleton
/// counts) weighted by the opposite law. Columns are only filled on request.
struct PairTables {
    row_b: Vec<f64>,
    row_s: Vec<f64>,
    col_b: Vec<f64>,
    col_s: Vec<f64>,
}

fn pair_tables(mu: &HomogeneousMeasure, nu: &HomogeneousMeasure, columns: bool) -> Result<PairTables> {
    use rayon::prelude::*;
    if mu.group != nu.group {
        return Err(Error::Mismatch("measures live on different groups".into()));
    }
    let (p, q) = (&mu.law, &nu.law);
    let mut t = PairTables { row_b: vec![0.0; p.len()], row_s: vec![0.0; p.len()], col_b: vec![0.0; q.len()], col_s: vec![0.0; q.len()] };
    if let (Some(pa), Some(qa)) = (pack_line(&mu.group, p), pack_line(&nu.group, q)) {
        let rows: Vec<(f64, f64)> = (0..pa.probs.len())
            .into_par_iter()
            .map(|k| {
                let (mut rb, mut rs) = (0.0, 0.0);
                for (l, w) in qa.probs.iter().enumerate() {
                    let (nb, ns) = packed_pair(&pa, k, &qa, l);
                    rb += w * f64::from(nb);
                    rs += w * f64::from(ns);
                }
                (rb, rs)
            })
            .collect();
        (t.row_b, t.row_s) = rows.into_iter().unzip();
        if columns {
            let cols: Vec<(f64, f64)> = (0..qa.probs.len())
                .into_par_iter()
                .map(|l| {
                    let (mut cb, mut cs) = (0.0, 0.0);
                    for (k, w) in pa.probs.iter().enumerate() {
                        let (nb, ns) = packed_pair(&pa, k, &qa, l);
                        cb += w * f64::from(nb);
                        cs += w * f64::from(ns);
                    }
                    (cb, cs)
                })
                .collect();
            (t.col_b, t.col_s) = cols.into_iter().unzip();
        }
        return Ok(t);
    }
    let pairs: Vec<Vec<(f64, f64)>> = p
        .entries()
        .par_iter()
        .map(|(c, _)| q.entries().iter().map(|(c2, _)| pair_intersection_sums(&mu.group, c.rep(), c2.rep())).collect())
        .collect();
    for (k, row) in pairs.iter().enumerate() {
        let pk = p.entries()[k].1;
        for (l, &(b, s)) in row.iter().enumerate() {
            let ql = q.entries()[l].1;
            t.row_b[k] += ql * b;
            t.row_s[k] += ql * s;
            t.col_b[l] += pk * b;
            t.col_s[l] += pk * s;
        }
    }
    Ok(t)
}

fn weighted_mean(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn weighted_var(w: &[f64], v: &[f64]) -> f64 {
    let m = weighted_mean(w, v);
    w.iter().zip(v).map(|(a, b)| a * (b - m).powi(2)).sum()
}

fn law_probs(law: &TildeLaw) -> Vec<f64> {
    law.entries().iter().map(|e| e.1).collect()
}

/// Exact class double sums. For empirical laws the standard errors follow the
/// two-sample variance of a V-statistic: `Var_p(row)/n_p + Var_q(col)/n_q`.
pub fn intersection_stats(mu: &HomogeneousMeasure, nu: &HomogeneousMeasure) -> Result<IntersectionStats> {
    let (p, q) = (&mu.law, &nu.law);
    let t = pair_tables(mu, nu, p.replicates.is_some() || q.replicates.is_some())?;
    let (wp, wq) = (law_probs(p), law_probs(q));
    let se = |rows: &[f64], cols: &[f64]| {
        let mut v = 0.0;
        if let Some(n) = p.replicates {
            v += weighted_var(&wp, rows) / n as f64;
        }
        if let Some(n) = q.replicates {
            v += weighted_var(&wq, cols) / n as f64;
        }
        v.sqrt()
    };
    let scale = mu.c * nu.c;
    Ok(IntersectionStats {
        bracket: scale * weighted_mean(&wp, &t.row_b),
        singleton_mass: scale * weighted_mean(&wp, &t.row_s),
        bracket_se: scale * se(&t.row_b, &t.col_b),
        singleton_se: scale * se(&t.row_s, &t.col_s),
    })
}

/// `(μ⊼ν)({0}) / ⟨⟨μ⊼ν⟩⟩` and its delta-method standard error (zero for exact laws).
pub fn singleton_ratio(mu: &HomogeneousMeasure, nu: &HomogeneousMeasure) -> Result<(f64, f64)> {
    let (p, q) = (&mu.law, &nu.law);
    let t = pair_tables(mu, nu, q.replicates.is_some())?;
    let (wp, wq) = (law_probs(p), law_probs(q));
    let bracket = weighted_mean(&wp, &t.row_b);
    if !(bracket > 0.0) {
        return Err(Error::InvalidArgument("measures have zero intersection bracket".into()));
    }
    let ratio = weighted_mean(&wp, &t.row_s) / bracket;
    // Influence of one sample on N - R·B, divided by B.
    let infl = |s: &[f64], b: &[f64]| -> Vec<f64> { s.iter().zip(b).map(|(x, y)| (x - ratio * y) / bracket).collect() };
    let mut var = 0.0;
    if let Some(n) = p.replicates {
        var += weighted_var(&wp, &infl(&t.row_s, &t.row_b)) / n as f64;
    }
    if let Some(n) = q.replicates {
        var += weighted_var(&wq, &infl(&t.col_s, &t.col_b)) / n as f64;
    }
    Ok((ratio, var.sqrt()))
}

/// `⟨⟨f μ⟩⟩ = c Σ_Ã ν̃(Ã) f(A)` for a shift-invariant `f`.
pub fn weighted_bracket(m: &HomogeneousMeasure, f: impl Fn(&ConfigSet) -> f64) -> f64 {
    m.c * m.law.entries().iter().map(|(c, p)| p * f(c.rep())).sum::<f64>()
}

/// `⟨⟨h_ν μ⟩⟩`, the right-hand side of the intersection/weighting identity.
pub fn h_weighted_bracket(mu: &HomogeneousMeasure, nu: &HomogeneousMeasure) -> f64 {
    let classes: Vec<ShiftClass> = mu.law.entries().iter().map(|e| e.0.clone()).collect();
    let h = h_vector(nu, &classes);
    mu.c * mu.law.entries().iter().zip(&h).map(|((_, p), hv)| p * hv).sum::<f64>()
}

/// `μ P_t` for a measure whose law lives on `space`: mass `c × surviving`,
/// renormalized evolved law. Also returns the mass lost to truncation (times `c`).
pub fn evolve_measure(
    m: &HomogeneousMeasure,
    g: &SparseGenerator,
    space: &StateSpace,
    t: f64,
) -> Result<(HomogeneousMeasure, f64)> {
    let start = m.law.to_dense(space)?;
    let out = apply_semigroup(g, &start, t, DEFAULT_UNIFORMIZATION_TOL)?;
    let surviving = out.surviving();
    if surviving <= 0.0 {
        return Err(Error::ZeroSurvivingMass);
    }
    let law = TildeLaw::from_dense(space, &out.law)?;
    let evolved = HomogeneousMeasure { group: m.group.clone(), c: m.c * surviving, law, delta: m.delta };
    Ok((evolved, m.c * out.truncated))
}

/// Both sides of `⟨⟨μP_t ⊼ ν⟩⟩ = ⟨⟨μ ⊼ νP†_t⟩⟩` and the truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Truncated mass of both evolutions, scaled by the opposite measure's
    /// `h(·)/|·|` bound; a one-sided bound on what truncation can remove.
    pub truncation_bound: f64,
}

pub fn duality_residual(
    mu: &HomogeneousMeasure,
    nu: &HomogeneousMeasure,
    forward: (&SparseGenerator, &StateSpace),
    dual: (&SparseGenerator, &StateSpace),
    t: f64,
) -> Result<DualityResidual> {
    let (mu_t, trunc_mu) = evolve_measure(mu, forward.0, forward.1, t)?;
    let (nu_t, trunc_nu) = evolve_measure(nu, dual.0, dual.1, t)?;
    let lhs = intersection_stats(&mu_t, nu)?.bracket;
    let rhs = intersection_stats(mu, &nu_t)?.bracket;
    // A configuration of the killed mass would have contributed at most
    // h_ν(A) ≤ h_ν({0})|A| ≤ h_ν({0}) S to the bracket (S = max size in the caps).
    let one = ConfigSet::singleton(mu.group.identity());
    let s_fwd = forward.1.caps().max_size as f64 + 1.0;
    let s_dual = dual.1.caps().max_size as f64 + 1.0;
    let bound = trunc_mu * h_eval(nu, &one) * s_fwd + trunc_nu * h_eval(mu, &one) * s_dual;
    Ok(DualityResidual { lhs, rhs, residual: (lhs - rhs).abs(), truncation_bound: bound })
}

/// `c = ⟨⟨μ⊼ν°†⟩⟩ / ⟨⟨ν°⊼ν°†⟩⟩`.
pub fn cform_constant(
    mu: &HomogeneousMeasure,
    nu_circ: &HomogeneousMeasure,
    nu_circ_dagger: &HomogeneousMeasure,
) -> Result<f64> {
    let num = intersection_stats(mu, nu_circ_dagger)?.bracket;
    let den = intersection_stats(nu_circ, nu_circ_dagger)?.bracket;
    if den <= 0.0 {
        return Err(Error::InvalidArgument("eigenmeasures have zero intersection bracket".into()));
    }
    Ok(num / den)
}

/// `-dr/dδ = (ν°⊼ν°†)({0}) / ⟨⟨ν°⊼ν°†⟩⟩`, a value in `(0, 1]`.
pub fn growth_derivative(nu_circ: &HomogeneousMeasure, nu_circ_dagger: &HomogeneousMeasure) -> Result<f64> {
    if let (Some(a), Some(b)) = (nu_circ.delta, nu_circ_dagger.delta) {
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::Mismatch(format!("eigenmeasures computed at delta {a} and {b}")));
        }
    }
    Ok(singleton_ratio(nu_circ, nu_circ_dagger)?.0)
}

/// Both sides of the tightness estimate and whether `lhs ≤ rhs` holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TightnessReport {
    pub gamma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// Exponent of the extrapolated integrand tail (negative when convergent).
    pub tail_exponent: f64,
    pub holds: bool,
}

/// Mean curve `t ↦ E[e_γ(η_t)]` on a time grid starting at 0, with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanCurve {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errs: Vec<f64>,
}

/// `lhs = ∫ν°(dA)1{0∈A}e_γ(A) = c E_ν̃[Σ_{i∈Δ⁻¹} e_γ(iΔ)]`, exactly over the law.
pub fn tightness_lhs(nu_circ: &HomogeneousMeasure, metric: &Metric, gamma: f64) -> f64 {
    let group = &nu_circ.group;
    weighted_bracket(nu_circ, |rep| {
        rep.iter().map(|d| metric.e_gamma(gamma, &rep.translate(group, &group.inverse(d)))).sum()
    })
}

/// Integral of `e^{-rt} f(t)²` over `[0, ∞)` from samples of `f`: exact for
/// piecewise exponential integrands between grid points, with the last segment's
/// exponent extended to infinity. Returns `(integral, tail exponent)`.
fn exponential_quadrature(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    let seg = |t0: f64, t1: f64, y0: f64, y1: f64| {
        let h = t1 - t0;
        if y0 <= 0.0 || y1 <= 0.0 {
            return 0.5 * h * (y0 + y1);
        }
        let k = (y1 / y0).ln() / h;
        if (k * h).abs() < 1e-9 {
            0.5 * h * (y0 + y1)
        } else {
            (y1 - y0) / k
        }
    };
    let mut total = 0.0;
    for w in 0..times.len() - 1 {
        total += seg(times[w], times[w + 1], values[w], values[w + 1]);
    }
    let n = times.len();
    let (y0, y1) = (values[n - 2], values[n - 1]);
    let k = if y0 > 0.0 && y1 > 0.0 { (y1 / y0).ln() / (times[n - 1] - times[n - 2]) } else { f64::NEG_INFINITY };
    if k >= 0.0 {
        return Err(Error::DivergentIntegral(k));
    }
    if y1 > 0.0 {
        total += y1 / -k;
    }
    Ok((total, k))
}

/// Compares the exact left side with `(|a|+δ) ∫₀^∞ e^{-rt} E[e_γ(η_t)]² dt`
/// computed from `curve`.
pub fn tightness_check(
    nu_circ: &HomogeneousMeasure,
    metric: &Metric,
    gamma: f64,
    r_hat: f64,
    total_rate_plus_delta: f64,
    curve: &MeanCurve,
) -> Result<TightnessReport> {
    if curve.times.len() < 2 || curve.times[0] != 0.0 {
        return Err(Error::InvalidArgument("mean curve needs at least two points starting at t = 0".into()));
    }
    let lhs = tightness_lhs(nu_circ, metric, gamma);
    let integrand: Vec<f64> =
        curve.times.iter().zip(&curve.means).map(|(t, m)| (-r_hat * t).exp() * m * m).collect();
    let (integral, tail) = exponential_quadrature(&curve.times, &integrand)?;
    // Linearized error: ∂integrand/∂mean = 2 e^{-rt} mean, trapezoid weights.
    let mut var = 0.0;
    for k in 0..curve.times.len() {
        let left = if k > 0 { curve.times[k] - curve.times[k - 1] } else { 0.0 };
        let right = if k + 1 < curve.times.len() { curve.times[k + 1] - curve.times[k] } else { 0.0 };
        let w = 0.5 * (left + right);
        let d = 2.0 * (-r_hat * curve.times[k]).exp() * curve.means[k] * curve.std_errs[k];
        var += (w * d).powi(2);
    }
    let rhs = total_rate_plus_delta * integral;
    Ok(TightnessReport {
        gamma,
        lhs,
        rhs,
        rhs_se: total_rate_plus_delta * var.sqrt(),
        tail_exponent: tail,
        holds: lhs <= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use crate::quotient::canonicalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z(xs: &[i64]) -> ConfigSet {
        xs.iter().map(|&x| GroupElement::z(x)).collect()
    }

    fn class(g: &Group, set: &ConfigSet) -> ShiftClass {
        canonicalize(g, set).unwrap().0
    }

    fn singleton_counting(g: &Group) -> HomogeneousMeasure {
        HomogeneousMeasure::translates_of(g, &ConfigSet::singleton(g.identity())).unwrap()
    }

    #[test]
    fn brackets() {
        let g = Group::zd(1);
        assert_eq!(bracket_of(&singleton_counting(&g)), 1.0);
        assert_eq!(bracket_of(&singleton_counting(&g).scaled(2.0)), 2.0);
        let pair = HomogeneousMeasure::translates_of(&g, &z(&[0, 1])).unwrap();
        assert_eq!(bracket_of(&pair), 1.0);
    }

    #[test]
    fn h_values() {
        let g = Group::zd(1);
        let chi = singleton_counting(&g);
        assert_eq!(h_eval(&chi, &z(&[0, 3, 7])), 3.0);
        let pair = HomogeneousMeasure::translates_of(&g, &z(&[0, 1])).unwrap();
        assert_eq!(h_eval(&pair, &z(&[0])), 2.0);
        assert_eq!(h_eval(&pair, &ConfigSet::empty()), 0.0);
    }

    /// Oracle for the Z fast path: the literal index-pair sums.
    #[test]
    fn line_fast_path_matches_index_sums() {
        let g = Group::zd(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let a: ConfigSet = (0..rng.gen_range(1..6)).map(|_| GroupElement::z(rng.gen_range(0..32))).collect();
            let b: ConfigSet = (0..rng.gen_range(1..6)).map(|_| GroupElement::z(rng.gen_range(0..32))).collect();
            let (ca, cb) = (class(&g, &a), class(&g, &b));
            let pa = pack_line(&g, &TildeLaw::point_mass(ca.clone())).unwrap();
            let pb = pack_line(&g, &TildeLaw::point_mass(cb.clone())).unwrap();
            let (nb, ns) = packed_pair(&pa, 0, &pb, 0);
            assert_eq!(packed_pair(&pb, 0, &pa, 0), (nb, ns));
            assert_eq!(line_overlap_counts(pa.elems(0), pb.masks[0]), (nb, ns));
            assert_eq!(packed_reach(&pa, 0, &pb, 0), nb);
            let (bracket, single) = pair_intersection_sums(&g, ca.rep(), cb.rep());
            assert!((bracket - f64::from(nb)).abs() < 1e-12, "{a} {b}");
            assert_eq!(single, f64::from(ns));
            assert_eq!(translates_meeting(&g, ca.rep(), cb.rep()) as u32, nb);
        }
    }

    #[test]
    fn intersection_examples() {
        let g = Group::zd(1);
        let chi = singleton_counting(&g);
        let s = intersection_stats(&chi, &chi).unwrap();
        assert_eq!((s.bracket, s.singleton_mass), (1.0, 1.0));
        let pair = HomogeneousMeasure::translates_of(&g, &z(&[0, 1])).unwrap();
        let s = intersection_stats(&chi, &pair).unwrap();
        assert_eq!((s.bracket, s.singleton_mass), (2.0, 2.0));
        let s2 = intersection_stats(&pair, &chi).unwrap();
        assert_eq!(s, s2);
    }

    fn random_law(g: &Group, rng: &mut ChaCha8Rng, classes: usize) -> TildeLaw {
        let entries = (0..classes)
            .map(|_| {
                let n = rng.gen_range(1..5);
                let set: ConfigSet = (0..n).map(|_| g.random_element(rng, 3)).collect();
                (class(g, &set), rng.gen_range(0.1..1.0))
            })
            .collect();
        TildeLaw::new(entries).unwrap()
    }

    #[test]
    fn intersection_equals_h_weighted_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in [Group::zd(1), Group::zd(2), Group::free_product(&[2, 3]), Group::free_product(&[3])] {
            for _ in 0..10 {
                let mu = HomogeneousMeasure::new(g.clone(), rng.gen_range(0.2..2.0), random_law(&g, &mut rng, 6)).unwrap();
                let nu = HomogeneousMeasure::new(g.clone(), rng.gen_range(0.2..2.0), random_law(&g, &mut rng, 6)).unwrap();
                let s = intersection_stats(&mu, &nu).unwrap();
                let w = h_weighted_bracket(&mu, &nu);
                assert!((s.bracket - w).abs() <= 1e-12 * w.max(1.0), "{g:?}: {} vs {}", s.bracket, w);
                let swapped = intersection_stats(&nu, &mu).unwrap();
                assert!((swapped.bracket - s.bracket).abs() < 1e-12 * s.bracket);
                assert!((swapped.singleton_mass - s.singleton_mass).abs() < 1e-12 * s.bracket);
                assert!(s.singleton_mass <= s.bracket + 1e-12);
                let scaled = intersection_stats(&mu.scaled(3.0), &nu).unwrap();
                assert!((scaled.bracket - 3.0 * s.bracket).abs() < 1e-12 * s.bracket.max(1.0));
            }
        }
    }

    #[test]
    fn h_sandwich_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for g in [Group::zd(1), Group::free_product(&[2, 2, 2])] {
            let mu = HomogeneousMeasure::new(g.clone(), 0.7, random_law(&g, &mut rng, 8)).unwrap();
            let h0 = h_eval(&mu, &ConfigSet::singleton(g.identity()));
            for _ in 0..1000 {
                let set: ConfigSet = (0..rng.gen_range(1..7)).map(|_| g.random_element(&mut rng, 5)).collect();
                let h = h_eval(&mu, &set);
                let n = set.len() as f64;
                assert!(bracket_of(&mu) * n <= h + 1e-12);
                assert!(h <= h0 * n + 1e-12);
                let shift = g.random_element(&mut rng, 4);
                assert!((h_eval(&mu, &set.translate(&g, &shift)) - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_masses_follow_symmetry() {
        let g = Group::free_product(&[3]);
        let whole: ConfigSet = g.ball(2).into_iter().collect();
        let law = TildeLaw::new(vec![(class(&g, &whole), 0.25), (ShiftClass::singleton(&g), 0.75)]).unwrap();
        let m = HomogeneousMeasure::new(g.clone(), 2.0, law).unwrap();
        // μ({Λ}) counts the 3 translations mapping Λ to itself.
        assert!((m.point_mass(&whole).unwrap() - 3.0 * 2.0 * 0.25).abs() < 1e-12);
        assert!((m.point_mass(&ConfigSet::singleton(g.identity())).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_quadrature_is_exact_on_exponentials() {
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.5).collect();
        let values: Vec<f64> = times.iter().map(|t| (-0.7 * t).exp()).collect();
        let (v, k) = exponential_quadrature(&times, &values).unwrap();
        assert!((v - 1.0 / 0.7).abs() < 1e-12);
        assert!((k + 0.7).abs() < 1e-12);
        let growing: Vec<f64> = times.iter().map(|t| (0.1 * t).exp()).collect();
        assert!(matches!(exponential_quadrature(&times, &growing), Err(Error::DivergentIntegral(_))));
    }

    #[test]
    fn empirical_tv_scale() {
        let g = Group::zd(1);
        let law = TildeLaw::new(vec![(ShiftClass::singleton(&g), 0.5), (class(&g, &z(&[0, 1])), 0.5)]).unwrap();
        let e = law.expected_sampling_tv(100);
        assert!((e - (0.5f64 / (std::f64::consts::PI * 100.0)).sqrt()).abs() < 1e-12);
    }
}
