//! Dense-inverse revised simplex for `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The all-slack basis is always feasible, so no phase one is needed. Columns
//! can be appended between solves (column generation); the previous basis is
//! kept as a warm start. An optional secondary objective is optimised over the
//! optimal face of the primary one.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis matrix became singular")]
    Singular,
    #[error("right-hand side {row} is negative ({value})")]
    NegativeRhs { row: usize, value: f64 },
    #[error("column entry refers to row {row}, problem has {rows} rows")]
    BadRow { row: usize, rows: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: 200_000,
            refactor_every: 64,
            degenerate_limit: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simplex {
    m: usize,
    b: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    cost2: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    pub opts: SimplexOptions,
}

impl Simplex {
    pub fn new(b: Vec<f64>) -> Result<Self, LpError> {
        if let Some((row, &value)) = b.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(LpError::NegativeRhs { row, value });
        }
        let m = b.len();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Ok(Self {
            m,
            xb: b.clone(),
            b,
            cols: (0..m).map(|i| vec![(i, 1.0)]).collect(),
            cost: vec![0.0; m],
            cost2: vec![0.0; m],
            basis: (0..m).collect(),
            is_basic: vec![true; m],
            binv,
            since_refactor: 0,
            iterations: 0,
            opts: SimplexOptions::default(),
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn num_columns(&self) -> usize {
        self.cols.len() - self.m
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Adds a structural column and returns its index.
    pub fn add_column(&mut self, entries: Vec<(usize, f64)>, cost: f64) -> Result<usize, LpError> {
        if let Some(&(row, _)) = entries.iter().find(|(r, _)| *r >= self.m) {
            return Err(LpError::BadRow { row, rows: self.m });
        }
        self.cols.push(entries);
        self.cost.push(cost);
        self.cost2.push(0.0);
        self.is_basic.push(false);
        Ok(self.cols.len() - 1 - self.m)
    }

    /// Sets the secondary (maximised) objective coefficient of a column.
    pub fn set_secondary(&mut self, col: usize, value: f64) {
        self.cost2[self.m + col] = value;
    }

    /// Solves the primary problem, then the secondary one over its optimal face.
    pub fn solve(&mut self) -> Result<Solution, LpError> {
        let cost = std::mem::take(&mut self.cost);
        let res = self.run(&cost, None);
        self.cost = cost;
        res?;
        let objective = self.objective(&self.cost);
        let duals = self.duals(&self.cost);
        if self.cost2.iter().any(|&c| c != 0.0) {
            let allowed: Vec<bool> = (0..self.cols.len())
                .map(|j| {
                    self.is_basic[j]
                        || self.reduced(&self.cost, &duals, j) > -self.opts.optimality_tol
                })
                .collect();
            let cost2 = std::mem::take(&mut self.cost2);
            let res = self.run(&cost2, Some(&allowed));
            self.cost2 = cost2;
            res?;
        }
        let mut x = vec![0.0; self.cols.len() - self.m];
        for (i, &j) in self.basis.iter().enumerate() {
            if j >= self.m {
                x[j - self.m] = self.xb[i].max(0.0);
            }
        }
        Ok(Solution {
            objective,
            secondary: self.objective(&self.cost2),
            x,
            duals,
            iterations: self.iterations,
        })
    }

    fn objective(&self, c: &[f64]) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&j, &v)| c[j] * v).sum()
    }

    fn duals(&self, c: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cj = c[j];
            if cj != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &bk) in y.iter_mut().zip(row) {
                    *yk += cj * bk;
                }
            }
        }
        y
    }

    fn reduced(&self, c: &[f64], y: &[f64], j: usize) -> f64 {
        c[j] - self.cols[j].iter().map(|&(r, v)| y[r] * v).sum::<f64>()
    }

    fn run(&mut self, c: &[f64], allowed: Option<&[bool]>) -> Result<(), LpError> {
        let m = self.m;
        let tol = self.opts.optimality_tol;
        let mut degenerate = 0usize;
        let mut u = vec![0.0; m];
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpError::IterationLimit(self.opts.max_iterations));
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let y = self.duals(c);
            let bland = degenerate >= self.opts.degenerate_limit;
            let mut enter = None;
            let mut best = tol;
            for j in 0..self.cols.len() {
                if self.is_basic[j] || allowed.is_some_and(|a| !a[j]) {
                    continue;
                }
                let d = self.reduced(c, &y, j);
                if d > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = enter else {
                return Ok(());
            };

            u.iter_mut().for_each(|v| *v = 0.0);
            for &(r, v) in &self.cols[q] {
                for i in 0..m {
                    u[i] += self.binv[i * m + r] * v;
                }
            }

            let mut leave: Option<usize> = None;
            let mut theta = f64::INFINITY;
            for i in 0..m {
                if u[i] > self.opts.pivot_tol {
                    let ratio = self.xb[i].max(0.0) / u[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < theta - 1e-12 {
                                true
                            } else if ratio <= theta + 1e-12 {
                                if bland {
                                    self.basis[i] < self.basis[l]
                                } else {
                                    u[i] > u[l]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some(i);
                        theta = ratio;
                    }
                }
            }
            let Some(r) = leave else {
                return Err(LpError::Unbounded);
            };

            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..m {
                if i != r {
                    self.xb[i] -= theta * u[i];
                    if self.xb[i] < 0.0 && self.xb[i] > -1e-11 {
                        self.xb[i] = 0.0;
                    }
                }
            }
            self.xb[r] = theta;
            let piv = u[r];
            for k in 0..m {
                self.binv[r * m + k] /= piv;
            }
            for i in 0..m {
                if i != r && u[i] != 0.0 {
                    let f = u[i];
                    for k in 0..m {
                        self.binv[i * m + k] -= f * self.binv[r * m + k];
                    }
                }
            }
            self.is_basic[self.basis[r]] = false;
            self.is_basic[q] = true;
            self.basis[r] = q;
            self.iterations += 1;
            self.since_refactor += 1;
        }
    }

    /// Recomputes the basis inverse from scratch by Gauss-Jordan elimination.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + i] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let p = (col..m)
                .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
                .unwrap();
            if a[p * m + col].abs() < 1e-13 {
                return Err(LpError::Singular);
            }
            if p != col {
                for k in 0..m {
                    a.swap(p * m + k, col * m + k);
                    inv.swap(p * m + k, col * m + k);
                }
            }
            let piv = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= piv;
                inv[col * m + k] /= piv;
            }
            for i in 0..m {
                let f = a[i * m + col];
                if i != col && f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[col * m + k];
                        inv[i * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i * m + k] * self.b[k]).sum();
            self.xb[i] = if v < 0.0 && v > -1e-9 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub objective: f64,
    pub secondary: f64,
    /// Values of the structural columns.
    pub x: Vec<f64>,
    /// Row duals of the primary problem.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl Solution {
    /// Reduced cost of a candidate column against the primary duals.
    pub fn reduced_cost(&self, entries: &[(usize, f64)], cost: f64) -> f64 {
        cost - entries.iter().map(|&(r, v)| self.duals[r] * v).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dense(b: Vec<f64>, a: &[Vec<f64>], c: &[f64]) -> Simplex {
        let mut lp = Simplex::new(b).unwrap();
        for (j, &cj) in c.iter().enumerate() {
            let entries = a
                .iter()
                .enumerate()
                .filter(|(_, row)| row[j] != 0.0)
                .map(|(i, row)| (i, row[j]))
                .collect();
            lp.add_column(entries, cj).unwrap();
        }
        lp
    }

    #[test]
    fn textbook() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = dense(
            vec![4.0, 12.0, 18.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[3.0, 5.0],
        );
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 36.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.x[1], 6.0, epsilon = 1e-9);
        assert_relative_eq!(s.duals[1], 1.5, epsilon = 1e-9);
        assert_relative_eq!(s.duals[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn unbounded() {
        let mut lp = dense(vec![1.0], &[vec![1.0, -1.0]], &[0.0, 1.0]);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn negative_rhs_rejected() {
        assert!(matches!(Simplex::new(vec![1.0, -1.0]), Err(LpError::NegativeRhs { row: 1, .. })));
    }

    #[test]
    fn max_min_time_sharing() {
        // Two links with rates on two schedules, maximise common rate.
        // rows: gamma - 2 x1 <= 0, gamma - 3 x2 <= 0, x1 + x2 <= 1 -> gamma = 6/5.
        let mut lp = Simplex::new(vec![0.0, 0.0, 1.0]).unwrap();
        lp.add_column(vec![(0, 1.0), (1, 1.0)], 1.0).unwrap();
        lp.add_column(vec![(0, -2.0), (2, 1.0)], 0.0).unwrap();
        lp.add_column(vec![(1, -3.0), (2, 1.0)], 0.0).unwrap();
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 1.2, epsilon = 1e-12);
    }

    #[test]
    fn warm_start_after_new_column() {
        let mut lp = Simplex::new(vec![0.0, 0.0, 1.0]).unwrap();
        lp.add_column(vec![(0, 1.0), (1, 1.0)], 1.0).unwrap();
        lp.add_column(vec![(0, -2.0), (2, 1.0)], 0.0).unwrap();
        lp.add_column(vec![(1, -3.0), (2, 1.0)], 0.0).unwrap();
        let s = lp.solve().unwrap();
        let both = vec![(0, -2.0), (1, -3.0), (2, 1.0)];
        assert!(s.reduced_cost(&both, 0.0) > 0.0);
        lp.add_column(both, 0.0).unwrap();
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 2.0, epsilon = 1e-12);
        assert!(s.x[3] > 0.5);
    }

    #[test]
    fn secondary_objective_stays_on_optimal_face() {
        // max x + y, x + y <= 1; then prefer y.
        let mut lp = dense(vec![1.0], &[vec![1.0, 1.0]], &[1.0, 1.0]);
        lp.set_secondary(1, 1.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the textbook rule without safeguards.
        let mut lp = dense(
            vec![0.0, 0.0, 1.0],
            &[
                vec![0.25, -60.0, -0.04, 9.0],
                vec![0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            &[0.75, -150.0, 0.02, -6.0],
        );
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 0.05, epsilon = 1e-9);
    }

    /// Optimum of a 2-variable LP by vertex enumeration.
    fn brute_force(a: &[[f64; 2]], b: &[f64], c: [f64; 2]) -> f64 {
        let mut lines: Vec<([f64; 2], f64)> = a.iter().copied().zip(b.iter().copied()).collect();
        lines.push(([-1.0, 0.0], 0.0));
        lines.push(([0.0, -1.0], 0.0));
        let mut best = f64::NEG_INFINITY;
        for p in 0..lines.len() {
            for q in p + 1..lines.len() {
                let ([a1, b1], c1) = lines[p];
                let ([a2, b2], c2) = lines[q];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-9 {
                    continue;
                }
                let x = (c1 * b2 - c2 * b1) / det;
                let y = (a1 * c2 - a2 * c1) / det;
                if lines.iter().all(|([u, v], w)| u * x + v * y <= w + 1e-7) {
                    best = best.max(c[0] * x + c[1] * y);
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            rows in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0, 0.0f64..10.0), 1..6),
            c in (-2.0f64..3.0, 0.1f64..3.0),
        ) {
            let a: Vec<[f64; 2]> = rows.iter().map(|r| [r.0, r.1]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let mut lp = dense(b.clone(), &a.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), &[c.0, c.1]);
            let s = lp.solve().unwrap();
            let expect = brute_force(&a, &b, [c.0, c.1]);
            prop_assert!((s.objective - expect).abs() <= 1e-7 * (1.0 + expect.abs()));
        }
    }
}
