//! Perron pair of the truncated quotient chain and the objects built from it.
//!
//! Sign convention: the growth rate `r` satisfies `ν̃P̃_t = e^{rt}ν̃` and
//! `P̃_t h̃ = e^{rt}h̃`. The Doob transform uses `λ = -r`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config_set::ConfigSet;
use crate::error::{Error, Result};
use crate::measures::{h_eval, h_vector, HomogeneousMeasure, TildeLaw};
use crate::quotient::{apply_semigroup, Caps, ShiftClass, SparseGenerator, StateSpace, DEFAULT_UNIFORMIZATION_TOL};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 2_000_000;

/// One side of the Perron pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub r_hat: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Power iteration with `step`, normalizing by `norm` each round. Stops when the
/// normalized iterate moves by less than `tol` in sup norm.
fn power_iterate(
    n: usize,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
    step: impl Fn(&[f64], &mut [f64]),
    norm: impl Fn(&[f64]) -> f64,
) -> Result<(Vec<f64>, usize)> {
    let mut v = start;
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        step(&v, &mut next);
        let s = norm(&next);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::NoConvergence { iterations: it, change });
        }
        next.iter_mut().for_each(|x| *x /= s);
        change = v.iter().zip(&next).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut v, &mut next);
        if change <= tol {
            return Ok((v, it));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, change })
}

/// Left Perron vector of `I + Q̃/Γ` as a probability vector and `r̂ = Γ(ρ - 1)`.
pub fn leading_eigen(g: &SparseGenerator, tol: f64, max_iter: usize) -> Result<Eigenpair> {
    let n = g.dim();
    let (nu, iterations) = power_iterate(n, vec![1.0 / n as f64; n], tol, max_iter, |x, o| g.left_step(x, o), |v| v.iter().sum())?;
    let mut q_nu = vec![0.0; n];
    g.left_mul(&nu, &mut q_nu);
    // Rayleigh-type estimate: Σ(ν̃Q̃) = r̂ Σν̃ = r̂.
    let r_hat = q_nu.iter().sum::<f64>();
    let residual = l1(&q_nu.iter().zip(&nu).map(|(a, b)| a - r_hat * b).collect::<Vec<_>>());
    Ok(Eigenpair { r_hat, vector: nu, residual, iterations })
}

/// Right Perron vector, normalized so that the singleton class (index 0) has value 1.
pub fn right_eigen(g: &SparseGenerator, tol: f64, max_iter: usize) -> Result<Eigenpair> {
    let n = g.dim();
    let (mut h, iterations) = power_iterate(n, vec![1.0; n], tol, max_iter, |x, o| g.right_step(x, o), sup)?;
    let h0 = h[0];
    if !(h0 > 0.0) {
        return Err(Error::NonPositiveEigenvector(0));
    }
    h.iter_mut().for_each(|x| *x /= h0);
    let mut q_h = vec![0.0; n];
    g.right_mul(&h, &mut q_h);
    // r̂ from the singleton row, where h = 1.
    let r_hat = q_h[0];
    let residual = sup(&q_h.iter().zip(&h).map(|(a, b)| a - r_hat * b).collect::<Vec<_>>()) / sup(&h);
    Ok(Eigenpair { r_hat, vector: h, residual, iterations })
}

/// Perron pair of a truncated chain.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub r_hat: f64,
    pub r_hat_right: f64,
    pub nu_tilde: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub residual_left: f64,
    pub residual_right: f64,
    pub caps: Caps,
    pub delta: f64,
    pub iterations: (usize, usize),
    /// Whether some enumerated state cannot return to the singleton class.
    pub reducible: bool,
}

/// JSON shape of a [`SpectralResult`], with classes keyed by their display string.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDocument {
    pub r_hat: f64,
    pub r_hat_right: f64,
    pub delta: f64,
    pub caps: Caps,
    pub states: usize,
    pub residual_left: f64,
    pub residual_right: f64,
    pub reducible: bool,
    pub nu_tilde: BTreeMap<String, f64>,
    pub h_tilde: BTreeMap<String, f64>,
}

impl SpectralResult {
    pub fn compute(space: &StateSpace, g: &SparseGenerator, tol: f64, max_iter: usize) -> Result<Self> {
        let left = leading_eigen(g, tol, max_iter)?;
        let right = right_eigen(g, tol, max_iter)?;
        Ok(SpectralResult {
            r_hat: left.r_hat,
            r_hat_right: right.r_hat,
            nu_tilde: left.vector,
            h_tilde: right.vector,
            residual_left: left.residual,
            residual_right: right.residual,
            caps: space.caps(),
            delta: g.delta(),
            iterations: (left.iterations, right.iterations),
            reducible: !space.all_reach_singleton(),
        })
    }

    pub fn law(&self, space: &StateSpace) -> Result<TildeLaw> {
        TildeLaw::from_dense(space, &self.nu_tilde)
    }

    pub fn to_document(&self, space: &StateSpace) -> SpectralDocument {
        let key = |k: usize| space.class(k).to_string();
        SpectralDocument {
            r_hat: self.r_hat,
            r_hat_right: self.r_hat_right,
            delta: self.delta,
            caps: self.caps,
            states: space.len(),
            residual_left: self.residual_left,
            residual_right: self.residual_right,
            reducible: self.reducible,
            nu_tilde: self.nu_tilde.iter().enumerate().map(|(k, p)| (key(k), *p)).collect(),
            h_tilde: self.h_tilde.iter().enumerate().map(|(k, p)| (key(k), *p)).collect(),
        }
    }
}

/// Conservative Doob-transformed chain and its stationary law.
#[derive(Debug, Clone)]
pub struct DoobChain {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    /// Largest `|Σ_j Q^h(i, j)|` before the diagonal was projected.
    pub projection_residual: f64,
    pub pi_tilde: Vec<f64>,
    /// `‖π̃Q^h‖₁` after projection.
    pub stationarity_residual: f64,
}

impl DoobChain {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&e| self.cols[e] == j).map_or(0.0, |e| self.vals[e])
    }

    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim())
            .map(|i| (self.diag[i] + self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().zip(&self.diag).zip(x).for_each(|((o, d), xi)| *o = d * xi);
        for i in 0..self.dim() {
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[e]] += x[i] * self.vals[e];
            }
        }
    }

    /// `ℓ¹` distance between `π̃` and the normalized `ν̃∘h̃`.
    pub fn pip_deviation(&self, nu: &[f64], h: &[f64]) -> f64 {
        let prod: Vec<f64> = nu.iter().zip(h).map(|(a, b)| a * b).collect();
        let s: f64 = prod.iter().sum();
        prod.iter().zip(&self.pi_tilde).map(|(p, q)| (p / s - q).abs()).sum()
    }
}

/// `Q^h(i,j) = h_i⁻¹ Q̃(i,j) h_j` off the diagonal and `Q̃(i,i) + λ` on it, `λ = -r̂`;
/// the diagonal is then reset so that rows sum to zero.
pub fn doob_transform(g: &SparseGenerator, h: &[f64], r_hat: f64, tol: f64, max_iter: usize) -> Result<DoobChain> {
    let n = g.dim();
    if h.len() != n {
        return Err(Error::Mismatch(format!("h has {} entries, generator {}", h.len(), n)));
    }
    if let Some(k) = h.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::NonPositiveEigenvector(k));
    }
    let lambda = -r_hat;
    let mut row_ptr = vec![0];
    let mut cols = Vec::with_capacity(g.nnz());
    let mut vals = Vec::with_capacity(g.nnz());
    let mut diag = vec![0.0; n];
    let mut projection_residual: f64 = 0.0;
    for i in 0..n {
        let mut off = 0.0;
        for (j, q) in g.row(i) {
            let v = q * h[j] / h[i];
            cols.push(j);
            vals.push(v);
            off += v;
        }
        row_ptr.push(cols.len());
        let raw = g.diag()[i] + lambda;
        projection_residual = projection_residual.max((raw + off).abs());
        diag[i] = -off;
    }
    let mut chain = DoobChain {
        row_ptr,
        cols,
        vals,
        diag,
        projection_residual,
        pi_tilde: Vec::new(),
        stationarity_residual: 0.0,
    };
    let gamma = 1.01 * chain.diag.iter().fold(0.0f64, |m, d| m.max(-d)).max(f64::MIN_POSITIVE);
    let step = |x: &[f64], o: &mut [f64]| {
        chain.left_mul(x, o);
        o.iter_mut().zip(x).for_each(|(oi, xi)| *oi = xi + *oi / gamma);
    };
    let (pi, _) = if n == 1 {
        (vec![1.0], 0)
    } else {
        power_iterate(n, vec![1.0 / n as f64; n], tol, max_iter, step, |v| v.iter().sum())?
    };
    let mut res = vec![0.0; n];
    chain.left_mul(&pi, &mut res);
    chain.stationarity_residual = l1(&res);
    chain.pi_tilde = pi;
    Ok(chain)
}

/// `(c = 1/E_ν̃|Δ|, ν̃)`, so that `∫ν°(dA)1{0∈A} = 1`.
pub fn normalize_eigenmeasure(group: &crate::group::Group, nu_tilde: &TildeLaw) -> Result<HomogeneousMeasure> {
    let mean = nu_tilde.mean_size();
    HomogeneousMeasure::new(group.clone(), 1.0 / mean, nu_tilde.clone())
}

/// `h(A)` assembled from the dual eigenmeasure.
pub fn h_from_dual(dual_measure: &HomogeneousMeasure, set: &ConfigSet) -> f64 {
    h_eval(dual_measure, set)
}

/// Relative deviation between two positive vectors scaled to agree on the
/// singleton class: the maximum over classes and the `ν̃`-weighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportionality {
    pub max_relative: f64,
    pub weighted_relative: f64,
}

/// Compares `h_from_dual` on every class with the right eigenvector, both scaled to
/// 1 on the singleton class.
pub fn h_proportionality(space: &StateSpace, h_tilde: &[f64], dual_measure: &HomogeneousMeasure, nu: &[f64]) -> Proportionality {
    let hd = h_vector(dual_measure, space.classes());
    let scale = hd[0];
    let rel: Vec<f64> = hd.par_iter().zip(h_tilde).map(|(a, b)| (a / scale - b).abs() / b).collect();
    Proportionality {
        max_relative: rel.iter().cloned().fold(0.0, f64::max),
        weighted_relative: rel.iter().zip(nu).map(|(r, w)| r * w).sum(),
    }
}

/// TV distance between the surviving law started from `start` and `ν̃`, on a time grid.
pub fn quasi_convergence_check(
    g: &SparseGenerator,
    space: &StateSpace,
    nu_tilde: &[f64],
    start: &ShiftClass,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let k = space
        .index_of_rep(start.rep())
        .ok_or_else(|| Error::Mismatch(format!("class {start} is not in the state space")))?;
    let mut init = vec![0.0; space.len()];
    init[k] = 1.0;
    t_grid
        .iter()
        .map(|&t| {
            let out = apply_semigroup(g, &init, t, DEFAULT_UNIFORMIZATION_TOL)?;
            let s = out.surviving();
            if !(s > 1e-300) {
                return Err(Error::ZeroSurvivingMass);
            }
            Ok(0.5 * out.law.iter().zip(nu_tilde).map(|(p, q)| (p / s - q).abs()).sum::<f64>())
        })
        .collect()
}

/// `r̂` for one kernel, caps and recovery rate.
pub fn growth_rate(space: &StateSpace, delta: f64) -> Result<f64> {
    let g = SparseGenerator::build(space, delta);
    Ok(leading_eigen(&g, DEFAULT_TOL, DEFAULT_MAX_ITER)?.r_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;
    use crate::kernel::Kernel;

    fn two_state(delta: f64) -> (StateSpace, SparseGenerator) {
        let space = StateSpace::enumerate(&Kernel::nearest_neighbour(1, 1.0).unwrap(), Caps::new(2, 1)).unwrap();
        let g = SparseGenerator::build(&space, delta);
        (space, g)
    }

    #[test]
    fn pure_death() {
        let space = StateSpace::enumerate(&Kernel::zero(Group::zd(1)), Caps::new(4, 4)).unwrap();
        let g = SparseGenerator::build(&space, 0.7);
        let res = SpectralResult::compute(&space, &g, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((res.r_hat + 0.7).abs() < 1e-12);
        assert_eq!(res.nu_tilde, vec![1.0]);
        assert_eq!(res.h_tilde, vec![1.0]);
        let doob = doob_transform(&g, &res.h_tilde, res.r_hat, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(doob.entry(0, 0), 0.0);
        assert_eq!(doob.pi_tilde, vec![1.0]);
    }

    #[test]
    fn two_state_closed_form() {
        let (space, g) = two_state(1.0);
        let res = SpectralResult::compute(&space, &g, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let r = (-7.0 + 17f64.sqrt()) / 2.0;
        assert!((res.r_hat - r).abs() < 1e-9);
        assert!((res.r_hat_right - r).abs() < 1e-9);
        assert!((res.h_tilde[1] - (r + 3.0) / 2.0).abs() < 1e-9);
        // Symmetric generator: left and right vectors are proportional.
        assert!((res.nu_tilde[1] / res.nu_tilde[0] - res.h_tilde[1]).abs() < 1e-9);
        assert!(res.residual_left < 1e-9 && res.residual_right < 1e-9);
    }

    #[test]
    fn doob_two_state() {
        let (space, g) = two_state(1.0);
        let res = SpectralResult::compute(&space, &g, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let doob = doob_transform(&g, &res.h_tilde, res.r_hat, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(doob.max_row_sum() < 1e-10);
        assert!(doob.projection_residual < 1e-9);
        assert!(doob.stationarity_residual < 1e-8);
        assert!(doob.pip_deviation(&res.nu_tilde, &res.h_tilde) < 1e-6);
        assert!(matches!(doob_transform(&g, &[1.0, 0.0], res.r_hat, 1e-12, 10), Err(Error::NonPositiveEigenvector(1))));
        let _ = space;
    }

    #[test]
    fn quasi_convergence_rate_is_the_gap() {
        let (space, g) = two_state(1.0);
        let res = SpectralResult::compute(&space, &g, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let grid = [1.0, 2.0, 3.0];
        let tv = quasi_convergence_check(&g, &space, &res.nu_tilde, space.class(0), &grid).unwrap();
        let rate = (tv[1] / tv[2]).ln();
        assert!((rate - 17f64.sqrt()).abs() < 1e-4, "rate {rate}");
        assert!(tv[0] > tv[1] && tv[1] > tv[2]);
    }

    #[test]
    fn normalization() {
        let g = Group::zd(1);
        let m = normalize_eigenmeasure(&g, &TildeLaw::point_mass(ShiftClass::singleton(&g))).unwrap();
        assert_eq!(m.mass(), 1.0);
        let pair: ConfigSet = [crate::GroupElement::z(0), crate::GroupElement::z(1)].into_iter().collect();
        let (c, _) = crate::quotient::canonicalize(&g, &pair).unwrap();
        let m = normalize_eigenmeasure(&g, &TildeLaw::point_mass(c)).unwrap();
        assert_eq!(m.mass(), 0.5);
    }

    #[test]
    fn caps_monotone_and_bounded() {
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for caps in [Caps::new(2, 1), Caps::new(3, 2), Caps::new(5, 6), Caps::new(6, 8)] {
            let space = StateSpace::enumerate(&k, caps).unwrap();
            let r = growth_rate(&space, 1.5).unwrap();
            assert!(r >= prev - 1e-12);
            // Truncation kills mass, so only the upper bound |a| - δ is guaranteed
            // at finite caps; the lower bound -δ can fail on tiny state spaces.
            assert!(r <= 0.5);
            assert!(r <= 0.0, "a killed chain cannot grow");
            prev = r;
        }
    }
}
