use super::generator::SparseGenerator;
use super::space::StateSpace;
use crate::error::{Error, Result};

pub const DEFAULT_UNIFORMIZATION_TOL: f64 = 1e-12;

/// A law pushed through `e^{Q̃t}`, with the mass that went extinct and the mass
/// that left the caps reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupOutput {
    pub law: Vec<f64>,
    pub died: f64,
    pub truncated: f64,
}

impl SemigroupOutput {
    pub fn surviving(&self) -> f64 {
        self.law.iter().sum()
    }
}

/// `law · e^{Q̃t}` by uniformization: Poisson(`Γt`)-weighted powers of `I + Q̃/Γ`,
/// truncated once the neglected Poisson tail is below `tol`.
pub fn apply_semigroup(g: &SparseGenerator, law: &[f64], t: f64, tol: f64) -> Result<SemigroupOutput> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if law.len() != g.dim() {
        return Err(Error::Mismatch(format!("law has {} entries, generator {}", law.len(), g.dim())));
    }
    let rate = g.gamma() * t;
    let mut v = law.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut out = vec![0.0; v.len()];
    let (mut died_k, mut trunc_k) = (0.0, 0.0);
    let (mut died, mut truncated) = (0.0, 0.0);
    let mut cum = 0.0;
    let ln_rate = rate.ln();
    let mut ln_fact = 0.0;
    let mut k = 0usize;
    loop {
        let w = if rate == 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else {
            (-rate + k as f64 * ln_rate - ln_fact).exp()
        };
        if w > 0.0 {
            out.iter_mut().zip(&v).for_each(|(o, x)| *o += w * x);
            died += w * died_k;
            truncated += w * trunc_k;
        }
        cum += w;
        if 1.0 - cum <= tol || (rate == 0.0 && k == 0) {
            break;
        }
        // Guard for pathological tolerances; far past the Poisson mode the tail is negligible.
        if k as f64 > rate + 50.0 * rate.sqrt().max(1.0) + 100.0 {
            break;
        }
        let gamma = g.gamma();
        died_k += v.iter().zip(g.kill_death()).map(|(x, r)| x * r).sum::<f64>() / gamma;
        trunc_k += v.iter().zip(g.kill_trunc()).map(|(x, r)| x * r).sum::<f64>() / gamma;
        g.left_step(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
        k += 1;
        ln_fact += (k as f64).ln();
    }
    Ok(SemigroupOutput { law: out, died, truncated })
}

/// `E|η_t|` from a single infected site: `Σ P̃_t({0}, B̃)|B|` over surviving classes.
/// Returns the value and the truncated mass; the value is a lower bound.
pub fn expected_size(g: &SparseGenerator, space: &StateSpace, t: f64) -> Result<(f64, f64)> {
    let mut start = vec![0.0; space.len()];
    start[0] = 1.0;
    let out = apply_semigroup(g, &start, t, DEFAULT_UNIFORMIZATION_TOL)?;
    let value = out.law.iter().zip(space.classes()).map(|(p, c)| p * c.size() as f64).sum();
    Ok((value, out.truncated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;
    use crate::kernel::Kernel;
    use crate::quotient::Caps;

    fn two_state() -> (StateSpace, SparseGenerator) {
        let space = StateSpace::enumerate(&Kernel::nearest_neighbour(1, 1.0).unwrap(), Caps::new(2, 1)).unwrap();
        let g = SparseGenerator::build(&space, 1.0);
        (space, g)
    }

    /// Closed-form `e^{Qt}` for a symmetric 2×2 matrix via its eigendecomposition.
    fn expm_2x2_sym(a: f64, b: f64, d: f64, t: f64) -> [[f64; 2]; 2] {
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d).powi(2) + b * b).sqrt();
        let (l1, l2) = (mean + disc, mean - disc);
        // Eigenvector for l1: (b, l1 - a), normalized.
        let (x, y) = (b, l1 - a);
        let n = (x * x + y * y).sqrt();
        let (u1, u2) = (x / n, y / n);
        let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
        [
            [e1 * u1 * u1 + e2 * u2 * u2, (e1 - e2) * u1 * u2],
            [(e1 - e2) * u1 * u2, e1 * u2 * u2 + e2 * u1 * u1],
        ]
    }

    #[test]
    fn two_state_survival_matches_dense_exponential() {
        let (_, g) = two_state();
        let e = expm_2x2_sym(-3.0, 2.0, -4.0, 1.0);
        let want = e[0][0] + e[0][1];
        // Cross-checked against scipy.linalg.expm: 0.2621211374583.
        assert!((want - 0.262_121_137_458_3).abs() < 1e-12);
        let out = apply_semigroup(&g, &[1.0, 0.0], 1.0, 1e-13).unwrap();
        assert!((out.surviving() - want).abs() < 1e-10);
        assert!((out.law[0] - e[0][0]).abs() < 1e-10);
        assert!((out.surviving() + out.died + out.truncated - 1.0).abs() < 1e-11);
    }

    #[test]
    fn zero_time_is_identity() {
        let (_, g) = two_state();
        let out = apply_semigroup(&g, &[0.3, 0.7], 0.0, 1e-12).unwrap();
        assert_eq!(out.law, vec![0.3, 0.7]);
        assert_eq!((out.died, out.truncated), (0.0, 0.0));
        assert!(matches!(apply_semigroup(&g, &[1.0, 0.0], -1.0, 1e-12), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn pure_death_decay() {
        let space = StateSpace::enumerate(&Kernel::zero(Group::zd(1)), Caps::new(2, 2)).unwrap();
        let g = SparseGenerator::build(&space, 0.7);
        for t in [0.5, 2.0, 10.0] {
            let out = apply_semigroup(&g, &[1.0], t, 1e-13).unwrap();
            assert!((out.surviving() - (-0.7 * t).exp()).abs() < 1e-12);
            assert!((out.died - (1.0 - (-0.7 * t).exp())).abs() < 1e-11);
            let (size, trunc) = expected_size(&g, &space, t).unwrap();
            assert!((size - (-0.7 * t).exp()).abs() < 1e-12);
            assert_eq!(trunc, 0.0);
        }
        assert_eq!(expected_size(&g, &space, 0.0).unwrap().0, 1.0);
    }

    #[test]
    fn mass_is_conserved_at_long_times() {
        let space = StateSpace::enumerate(&Kernel::nearest_neighbour(1, 1.0).unwrap(), Caps::new(5, 6)).unwrap();
        let g = SparseGenerator::build(&space, 1.5);
        let mut start = vec![0.0; space.len()];
        start[0] = 1.0;
        let tol = 1e-12;
        let out = apply_semigroup(&g, &start, 15.0, tol).unwrap();
        assert!((out.surviving() + out.died + out.truncated - 1.0).abs() <= 10.0 * tol);
        assert!(out.law.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn surviving_mass_grows_with_caps() {
        let k = Kernel::nearest_neighbour(1, 1.0).unwrap();
        let mut prev = 0.0;
        for caps in [Caps::new(2, 1), Caps::new(3, 2), Caps::new(5, 6), Caps::new(6, 8)] {
            let space = StateSpace::enumerate(&k, caps).unwrap();
            let g = SparseGenerator::build(&space, 1.5);
            let mut start = vec![0.0; space.len()];
            start[0] = 1.0;
            let s = apply_semigroup(&g, &start, 3.0, 1e-13).unwrap().surviving();
            assert!(s >= prev - 1e-12);
            prev = s;
        }
    }
}
