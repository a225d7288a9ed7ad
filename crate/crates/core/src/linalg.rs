//! Small dense linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`symmetric_eigen`].
const SYMMETRY_TOL: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// ascending and eigenvectors stored column-wise in matching order.
pub fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !matrix.is_square() {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let n = matrix.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    Ok((values, vectors))
}

pub fn complexify(re: &DVector<f64>, im: &DVector<f64>) -> DVector<Complex64> {
    re.zip_map(im, Complex64::new)
}

pub fn split(v: &DVector<Complex64>) -> (DVector<f64>, DVector<f64>) {
    (v.map(|z| z.re), v.map(|z| z.im))
}

pub fn real_times_complex(m: &DMatrix<f64>, v: &DVector<Complex64>) -> DVector<Complex64> {
    let (re, im) = split(v);
    let out_re = m * re;
    let out_im = if im.iter().all(|&x| x == 0.0) {
        DVector::zeros(m.nrows())
    } else {
        m * im
    };
    complexify(&out_re, &out_im)
}

/// Rows/columns `rows x cols` of `m`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

pub fn relative_error(estimate: &DVector<Complex64>, truth: &DVector<Complex64>) -> f64 {
    let denom = truth.norm();
    let diff = (estimate - truth).norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// SVD-backed Tikhonov solver for `min ||M x - b||^2 + reg ||x||^2`.
///
/// Singular values below `rank_tol * sigma_max` are discarded, which gives
/// minimum-norm (pseudo-inverse) semantics as `reg -> 0`.
#[derive(Clone, Debug)]
pub struct TikhonovSvd {
    u: DMatrix<f64>,
    singular_values: DVector<f64>,
    v_t: DMatrix<f64>,
    rank_tol: f64,
}

impl TikhonovSvd {
    pub fn new(m: &DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidInput("empty least-squares matrix".into()));
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not produce V^T".into()))?;
        let k = svd.singular_values.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let singular_values = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
        let u = DMatrix::from_fn(u.nrows(), k, |r, c| u[(r, order[c])]);
        let v_t = DMatrix::from_fn(k, v_t.ncols(), |r, c| v_t[(order[r], c)]);
        Ok(TikhonovSvd {
            u,
            singular_values,
            v_t,
            rank_tol,
        })
    }

    /// Descending singular values.
    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values, self.rank_tol)
    }

    fn filter(&self, reg: f64) -> Vec<f64> {
        let top = self.singular_values.get(0).copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .map(|&s| {
                if s <= self.rank_tol * top || s == 0.0 {
                    0.0
                } else {
                    s / (s * s + reg)
                }
            })
            .collect()
    }

    pub fn solve(&self, rhs: &DVector<f64>, reg: f64) -> DVector<f64> {
        let coeffs = self.u.transpose() * rhs;
        let f = self.filter(reg);
        let scaled = DVector::from_iterator(coeffs.len(), coeffs.iter().zip(&f).map(|(c, w)| c * w));
        self.v_t.transpose() * scaled
    }

    pub fn solve_complex(&self, rhs: &DVector<Complex64>, reg: f64) -> DVector<Complex64> {
        let (re, im) = split(rhs);
        complexify(&self.solve(&re, reg), &self.solve(&im, reg))
    }

    /// `||M x_reg - b||^2` for the regularized solution of `rhs`.
    pub fn residual_squared(&self, rhs: &DVector<f64>, reg: f64) -> f64 {
        let coeffs = self.u.transpose() * rhs;
        let outside = (rhs.norm_squared() - coeffs.norm_squared()).max(0.0);
        let f = self.filter(reg);
        let inside: f64 = coeffs
            .iter()
            .zip(self.singular_values.iter())
            .zip(&f)
            .map(|((c, s), w)| ((1.0 - s * w) * c).powi(2))
            .sum();
        outside + inside
    }

    /// Generalized cross-validation score of `reg` for complex data `rhs`.
    pub fn gcv(&self, rhs: &DVector<Complex64>, reg: f64) -> f64 {
        let (re, im) = split(rhs);
        let m = self.u.nrows() as f64;
        let trace: f64 = self
            .singular_values
            .iter()
            .zip(self.filter(reg))
            .map(|(s, w)| s * w)
            .sum();
        let resid = self.residual_squared(&re, reg) + self.residual_squared(&im, reg);
        m * resid / (m - trace).powi(2).max(f64::MIN_POSITIVE)
    }
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(singular_values: &DVector<f64>, rel_tol: f64) -> usize {
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    singular_values.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Logarithmically spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == points - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted() {
        let m = DMatrix::from_row_slice(3, 3, &[5.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert_eq!(vals.as_slice(), &[1.0, 3.0, 5.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tikhonov_exact_and_min_norm() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let t = TikhonovSvd::new(&m, 1e-12).unwrap();
        let x = t.solve(&DVector::from_vec(vec![1.0, 4.0, 7.0]), 0.0);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        // underdetermined: minimum norm
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let t = TikhonovSvd::new(&m, 1e-12).unwrap();
        let x = t.solve(&DVector::from_vec(vec![2.0]), 0.0);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert_eq!(t.rank(), 1);
    }

    #[test]
    fn logspace_endpoints() {
        let v = logspace(1e-12, 1e-4, 9);
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], 1e-12);
        assert_eq!(v[8], 1e-4);
        assert!((v[4] / 1e-8 - 1.0).abs() < 1e-12);
    }
}
