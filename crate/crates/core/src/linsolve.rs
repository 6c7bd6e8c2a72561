//! Sparse linear systems with strongly enforced constraints.
//!
//! The full (unconstrained) matrix is kept in CSR form for residual and
//! reaction computations; the factored matrix has constrained rows/columns
//! replaced by the identity. Factorizations are meant to be built once per
//! run and reused across time steps.

use faer::prelude::Solve;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("sparse factorization failed (singular or structurally deficient system)")]
    Factorization,
    #[error("eigen iteration did not converge after {0} iterations")]
    EigenNonConvergence(usize),
}

/// Compressed sparse row matrix; duplicate triplets are summed.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
        y
    }
}

pub struct LinearSystem {
    pub n: usize,
    /// Unconstrained assembled matrix.
    pub full: CsrMatrix,
    pub constrained: Vec<usize>,
    pub is_constrained: Vec<bool>,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl LinearSystem {
    /// Builds and factors the system with `constrained` dofs eliminated
    /// (identity rows/columns); constraint values are supplied at solve time.
    pub fn new(
        n: usize,
        triplets: &[(usize, usize, f64)],
        constrained: &[usize],
    ) -> Result<Self, SolveError> {
        faer::set_global_parallelism(faer::Par::Seq);
        let full = CsrMatrix::from_triplets(n, n, triplets);
        let mut is_constrained = vec![false; n];
        for &d in constrained {
            is_constrained[d] = true;
        }
        let mut modified: Vec<faer::sparse::Triplet<usize, usize, f64>> = triplets
            .iter()
            .filter(|(r, c, _)| !is_constrained[*r] && !is_constrained[*c])
            .map(|&(r, c, v)| faer::sparse::Triplet::new(r, c, v))
            .collect();
        for &d in constrained {
            modified.push(faer::sparse::Triplet::new(d, d, 1.0));
        }
        let a = faer::sparse::SparseColMat::try_new_from_triplets(n, n, &modified)
            .map_err(|_| SolveError::Factorization)?;
        let lu = a.sp_lu().map_err(|_| SolveError::Factorization)?;
        Ok(Self {
            n,
            full,
            constrained: constrained.to_vec(),
            is_constrained,
            lu,
        })
    }

    /// Solves with the given unconstrained right-hand side and constraint
    /// values (indexed by dof).
    pub fn solve(&self, rhs: &[f64], bc_value: impl Fn(usize) -> f64) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut b = rhs.to_vec();
        if !self.constrained.is_empty() {
            // move constrained columns to the right-hand side
            let mut xbc = vec![0.0; self.n];
            for &d in &self.constrained {
                xbc[d] = bc_value(d);
            }
            for r in 0..self.n {
                if self.is_constrained[r] {
                    continue;
                }
                let mut corr = 0.0;
                for (c, v) in self.full.row(r) {
                    if self.is_constrained[c] {
                        corr += v * xbc[c];
                    }
                }
                b[r] -= corr;
            }
            for &d in &self.constrained {
                b[d] = xbc[d];
            }
        }
        let m = faer::Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&m);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Residual of the unconstrained system: `A_full x - rhs`. At constrained
    /// rows this is the discrete reaction functional.
    pub fn reaction(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        let ax = self.full.matvec(x);
        ax.iter().zip(rhs).map(|(a, b)| a - b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_merges_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0), (0, 1, 4.0)]);
        let y = m.matvec(&[1.0, 1.0]);
        assert_eq!(y, vec![7.0, 5.0]);
    }

    #[test]
    fn solve_with_constraints() {
        // 1D Laplace on 4 nodes, u0 = 1, u3 = 4, interior harmonic
        let mut t = Vec::new();
        for i in 0..3usize {
            t.push((i, i, 1.0));
            t.push((i + 1, i + 1, 1.0));
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
        let sys = LinearSystem::new(4, &t, &[0, 3]).unwrap();
        let x = sys.solve(&[0.0; 4], |d| if d == 0 { 1.0 } else { 4.0 });
        for (i, v) in x.iter().enumerate() {
            assert!((v - (1.0 + i as f64)).abs() < 1e-12, "{x:?}");
        }
        // reaction at the clamped end equals the discrete flux
        let r = sys.reaction(&x, &[0.0; 4]);
        assert!((r[0] - (x[0] - x[1])).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12);
    }

    #[test]
    fn indefinite_saddle_point() {
        // [2 1; 1 0] (a minimal saddle shape) stays solvable via LU
        let t = vec![(0usize, 0usize, 2.0), (0, 1, 1.0), (1, 0, 1.0)];
        let sys = LinearSystem::new(2, &t, &[]).unwrap();
        let x = sys.solve(&[3.0, 1.0], |_| 0.0);
        assert!((x[0] - 1.0).abs() < 1e-13 && (x[1] - 1.0).abs() < 1e-13);
    }
}
