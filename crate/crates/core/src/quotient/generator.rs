use std::io::{self, Write};

use rayon::prelude::*;

use super::space::StateSpace;

/// Sub-Markovian generator of the truncated chain in compressed-row form.
///
/// Exit mass is split into genuine extinction (`kill_death`) and leaving the caps
/// (`kill_trunc`); each row satisfies
/// `diag + Σ offdiag + kill_death + kill_trunc = 0`.
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    n: usize,
    delta: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // Transposed copy for row-parallel left products.
    t_row_ptr: Vec<usize>,
    t_cols: Vec<usize>,
    t_vals: Vec<f64>,
    diag: Vec<f64>,
    kill_death: Vec<f64>,
    kill_trunc: Vec<f64>,
    gamma: f64,
}

const PAR_THRESHOLD: usize = 4096;

impl SparseGenerator {
    /// Assembles `Q̃` for recovery rate `delta`.
    pub fn build(space: &StateSpace, delta: f64) -> SparseGenerator {
        let n = space.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        let mut kill_death = vec![0.0; n];
        let mut kill_trunc = vec![0.0; n];
        row_ptr.push(0);
        for (k, tr) in space.transitions().iter().enumerate() {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for &(t, count) in &tr.recoveries {
                row.push((t, delta * f64::from(count)));
            }
            for &(t, rate) in &tr.infections {
                match row.iter_mut().find(|e| e.0 == t) {
                    Some(e) => e.1 += rate,
                    None => row.push((t, rate)),
                }
            }
            row.sort_by_key(|e| e.0);
            // Recoveries change the size by -1 and infections by +1, so there are no self-loops.
            row.retain(|e| e.1 > 0.0);
            kill_death[k] = delta * f64::from(tr.deaths);
            kill_trunc[k] = tr.truncated_rate;
            let exit: f64 = row.iter().map(|e| e.1).sum::<f64>() + kill_death[k] + kill_trunc[k];
            diag[k] = -exit;
            for (t, r) in row {
                cols.push(t);
                vals.push(r);
            }
            row_ptr.push(cols.len());
        }
        let max_exit = diag.iter().map(|d| -d).fold(0.0, f64::max);
        let gamma = if max_exit > 0.0 { 1.01 * max_exit } else { 1.0 };

        let mut counts = vec![0usize; n + 1];
        for &c in &cols {
            counts[c + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let t_row_ptr = counts.clone();
        let mut fill = counts;
        let mut t_cols = vec![0usize; cols.len()];
        let mut t_vals = vec![0.0; cols.len()];
        for r in 0..n {
            for e in row_ptr[r]..row_ptr[r + 1] {
                let c = cols[e];
                t_cols[fill[c]] = r;
                t_vals[fill[c]] = vals[e];
                fill[c] += 1;
            }
        }

        SparseGenerator { n, delta, row_ptr, cols, vals, t_row_ptr, t_cols, t_vals, diag, kill_death, kill_trunc, gamma }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Uniformization constant, `1.01 ×` the largest exit rate.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn kill_death(&self) -> &[f64] {
        &self.kill_death
    }

    pub fn kill_trunc(&self) -> &[f64] {
        &self.kill_trunc
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Off-diagonal entries of row `k` as `(column, rate)`.
    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[k]..self.row_ptr[k + 1]).map(move |e| (self.cols[e], self.vals[e]))
    }

    /// `Q̃(i, j)` including the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    /// Dense copy, for small instances and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.entry(i, j)).collect()).collect()
    }

    /// Largest `|diag + Σ offdiag + kills|` relative to the exit rate.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.n)
            .map(|k| {
                let s: f64 = self.row(k).map(|e| e.1).sum::<f64>() + self.kill_death[k] + self.kill_trunc[k];
                (self.diag[k] + s).abs() / s.max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// `out = x Q̃` (row vector on the left).
    pub fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        let body = |(j, o): (usize, &mut f64)| {
            let mut acc = self.diag[j] * x[j];
            for e in self.t_row_ptr[j]..self.t_row_ptr[j + 1] {
                acc += x[self.t_cols[e]] * self.t_vals[e];
            }
            *o = acc;
        };
        if self.n >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(body);
        } else {
            out.iter_mut().enumerate().for_each(body);
        }
    }

    /// `out = Q̃ x` (column vector on the right).
    pub fn right_mul(&self, x: &[f64], out: &mut [f64]) {
        let body = |(i, o): (usize, &mut f64)| {
            let mut acc = self.diag[i] * x[i];
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[e] * x[self.cols[e]];
            }
            *o = acc;
        };
        if self.n >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(body);
        } else {
            out.iter_mut().enumerate().for_each(body);
        }
    }

    /// `out = x (I + Q̃/Γ)`.
    pub fn left_step(&self, x: &[f64], out: &mut [f64]) {
        self.left_mul(x, out);
        let g = self.gamma;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = xi + *o / g);
    }

    /// `out = (I + Q̃/Γ) x`.
    pub fn right_step(&self, x: &[f64], out: &mut [f64]) {
        self.right_mul(x, out);
        let g = self.gamma;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = xi + *o / g);
    }

    /// Writes the generator as text: `#` header lines, one `from to rate` line per
    /// nonzero entry (diagonal included), then `death i rate` and `trunc i rate`
    /// lines for the nonzero kill rates.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# dim {}", self.n)?;
        writeln!(w, "# delta {}", self.delta)?;
        writeln!(w, "# gamma {}", self.gamma)?;
        for i in 0..self.n {
            let mut entries: Vec<(usize, f64)> = self.row(i).collect();
            entries.push((i, self.diag[i]));
            entries.sort_by_key(|e| e.0);
            for (j, r) in entries {
                if r != 0.0 {
                    writeln!(w, "{i} {j} {r:e}")?;
                }
            }
        }
        for (i, &r) in self.kill_death.iter().enumerate().filter(|e| *e.1 > 0.0) {
            writeln!(w, "death {i} {r:e}")?;
        }
        for (i, &r) in self.kill_trunc.iter().enumerate().filter(|e| *e.1 > 0.0) {
            writeln!(w, "trunc {i} {r:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;
    use crate::kernel::Kernel;
    use crate::quotient::Caps;

    #[test]
    fn two_state_line() {
        let space = StateSpace::enumerate(&Kernel::nearest_neighbour(1, 1.0).unwrap(), Caps::new(2, 1)).unwrap();
        let g = SparseGenerator::build(&space, 1.0);
        assert_eq!(g.to_dense(), vec![vec![-3.0, 2.0], vec![2.0, -4.0]]);
        assert_eq!(g.kill_death(), &[1.0, 0.0]);
        assert_eq!(g.kill_trunc(), &[0.0, 2.0]);
        assert!((g.gamma() - 4.04).abs() < 1e-12);
        assert!(g.row_sum_defect() < 1e-12);
    }

    #[test]
    fn pure_death() {
        let space = StateSpace::enumerate(&Kernel::zero(Group::zd(1)), Caps::new(3, 3)).unwrap();
        let g = SparseGenerator::build(&space, 0.7);
        assert_eq!(g.to_dense(), vec![vec![-0.7]]);
        assert_eq!(g.kill_death(), &[0.7]);
    }

    /// Exit rate of class A is |A|δ plus the rate of infections onto healthy sites.
    #[test]
    fn exit_rate_bookkeeping() {
        let k = Kernel::new(
            Group::zd(1),
            vec![(crate::GroupElement::z(1), 1.0), (crate::GroupElement::z(-1), 0.4), (crate::GroupElement::z(2), 0.3)],
        )
        .unwrap();
        let space = StateSpace::enumerate(&k, Caps::new(5, 6)).unwrap();
        let delta = 1.3;
        let g = SparseGenerator::build(&space, delta);
        let group = k.group();
        for (i, c) in space.classes().iter().enumerate() {
            let rep = c.rep();
            let mut infect = 0.0;
            for x in rep.iter() {
                for (o, r) in k.support() {
                    if !rep.contains(&group.mul(x, o)) {
                        infect += r;
                    }
                }
            }
            let want = rep.len() as f64 * delta + infect;
            assert!((-g.diag()[i] - want).abs() < 1e-12);
        }
        assert!(g.row_sum_defect() < 1e-12);
    }

    #[test]
    fn triplet_export() {
        let space = StateSpace::enumerate(&Kernel::nearest_neighbour(1, 1.0).unwrap(), Caps::new(2, 1)).unwrap();
        let g = SparseGenerator::build(&space, 1.0);
        let mut buf = Vec::new();
        g.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines, vec!["0 0 -3e0", "0 1 2e0", "1 0 2e0", "1 1 -4e0", "death 0 1e0", "trunc 1 2e0"]);
    }
}
