//! Internal dense symmetric linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number limit above which symmetric systems are treated as
/// singular.
pub(crate) const CONDITION_LIMIT: f64 = 1e14;

/// Eigendecomposition-backed solver for symmetric positive-definite systems.
///
/// A single decomposition serves the condition check and any number of
/// right-hand sides.
pub(crate) struct SpdSolver {
    q: DMatrix<f64>,
    eigenvalues: DVector<f64>,
}

impl SpdSolver {
    pub(crate) fn new(matrix: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        let eig = matrix.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::Singular {
                context,
                condition,
                limit: CONDITION_LIMIT,
            });
        }
        Ok(Self {
            q: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
        })
    }

    /// Solves `M X = B`.
    pub(crate) fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = self.q.transpose() * rhs;
        for (i, lambda) in self.eigenvalues.iter().enumerate() {
            y.row_mut(i).scale_mut(1.0 / lambda);
        }
        &self.q * y
    }
}

/// Max absolute deviation from symmetry.
pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let (r, c) = m.shape();
    if r != c {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in (i + 1)..r {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Copies the lower triangle onto the upper one so the result is symmetric
/// entry-for-entry.
pub(crate) fn mirror_lower(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (eigenvector columns permuted to match).
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues must be comparable")
    });
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `Q diag(v) Q^T`, mirrored so the output is exactly symmetric.
pub(crate) fn from_eigen_pairs(q: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = q.clone();
    for (j, value) in v.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*value);
    }
    let mut out = scaled * q.transpose();
    mirror_lower(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solver_reproduces_rhs() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let solver = SpdSolver::new(&m, "test").unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let x = solver.solve(&b);
        let residual = (&m * &x - &b).norm();
        assert!(residual < 1e-12, "residual {residual}");
    }

    #[test]
    fn spd_solver_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            SpdSolver::new(&m, "test"),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn sorted_eigen_is_descending_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let (vals, vecs) = sorted_symmetric_eigen(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rebuilt = from_eigen_pairs(&vecs, &vals);
        assert!((rebuilt - &m).norm() < 1e-12);
    }
}
