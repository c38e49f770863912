//! Dense complex linear algebra shared by the propagation, correlation and
//! estimation code. Everything is `f64`-backed `nalgebra` storage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Thin SVD with singular values in non-increasing order.
#[derive(Debug, Clone)]
pub struct SortedSvd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v_adjoint: CMatrix,
}

pub fn svd(m: &CMatrix) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return SortedSvd {
            u,
            singular_values: s,
            v_adjoint: v_t,
        };
    }
    let u_sorted = CMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = CMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
    SortedSvd {
        u: u_sorted,
        singular_values: order.iter().map(|&i| s[i]).collect(),
        v_adjoint: v_sorted,
    }
}

/// Default numerical-rank tolerance, `max(rows, cols) * eps * sigma_max`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

impl SortedSvd {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    /// 2-norm condition number over the full spectrum (infinite when any
    /// singular value is exactly zero).
    pub fn condition_number(&self) -> f64 {
        let min = self.singular_values.last().copied().unwrap_or(0.0);
        if min == 0.0 {
            f64::INFINITY
        } else {
            self.sigma_max() / min
        }
    }

    /// Moore–Penrose pseudo-inverse keeping singular values above `tol`.
    pub fn pseudo_inverse(&self, tol: f64) -> CMatrix {
        let kept = self.rank(tol);
        let mut v = self.v_adjoint.rows(0, kept).adjoint();
        for (k, mut col) in v.column_iter_mut().enumerate() {
            col /= C64::new(self.singular_values[k], 0.0);
        }
        v * self.u.columns(0, kept).adjoint()
    }
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// `||a - b||_F / ||b||_F`, or the absolute norm when `b` vanishes.
pub fn relative_error(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = frobenius(&(a - b));
    let base = frobenius(b);
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

pub fn relative_error_vec(a: &CVector, b: &CVector) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// Relative Hermitian asymmetry `||a - a^H||_F / ||a||_F`.
pub fn hermitian_defect(a: &CMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let norm = frobenius(a);
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(frobenius(&(a - a.adjoint())) / norm)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let m = CMatrix::from_fn(4, 3, |r, c| {
            C64::new((r * 3 + c) as f64 * 0.37 - 1.0, ((r + 2 * c) as f64).sin())
        });
        let svd = svd(&m);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let sigma = CMatrix::from_diagonal(&CVector::from_iterator(
            3,
            svd.singular_values.iter().map(|&s| C64::new(s, 0.0)),
        ));
        let back = &svd.u * sigma * &svd.v_adjoint;
        assert!(relative_error(&back, &m) < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_tall_full_rank_is_left_inverse() {
        let m = CMatrix::from_fn(6, 3, |r, c| C64::new((r as f64 + 1.0).powi(c as i32), c as f64));
        let svd = svd(&m);
        let tol = default_rank_tolerance(6, 3, svd.sigma_max());
        let pinv = svd.pseudo_inverse(tol);
        assert!(relative_error(&(pinv * &m), &identity(3)) < 1e-10);
    }

    #[test]
    fn hermitian_defect_detects_asymmetry() {
        let mut a = identity(3);
        assert_eq!(hermitian_defect(&a).unwrap(), 0.0);
        a[(0, 1)] = C64::new(0.0, 1.0);
        assert!(hermitian_defect(&a).unwrap() > 0.1);
        assert!(hermitian_defect(&CMatrix::zeros(2, 3)).is_err());
    }
}
