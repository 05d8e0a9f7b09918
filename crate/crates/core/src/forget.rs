//! Exponentially forgetting information-matrix recursion.
//!
//! Shared by the online GLNAR estimator and the Gaussian benchmark: the
//! information matrix absorbs score outer products with geometric weights,
//! and the parameter step solves against it rather than forming an inverse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Diagonal jitter applied once when the factorization fails.
const CHOLESKY_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ForgettingFilter {
    r: DMatrix<f64>,
    alpha: f64,
}

impl ForgettingFilter {
    pub fn new(dim: usize, alpha: f64) -> Self {
        ForgettingFilter { r: DMatrix::zeros(dim, dim), alpha }
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// R <- alpha R + (1 - alpha) h h^T, re-symmetrized exactly.
    pub fn absorb(&mut self, h: &DVector<f64>) {
        let w = 1.0 - self.alpha;
        self.r *= self.alpha;
        self.r.ger(w, h, h, 1.0);
        let sym = (&self.r + self.r.transpose()) * 0.5;
        self.r = sym;
    }

    /// Solve R d = h; `None` when R is numerically non-invertible.
    pub fn solve(&self, h: &DVector<f64>) -> Option<DVector<f64>> {
        if let Some(chol) = self.r.clone().cholesky() {
            return Some(chol.solve(h));
        }
        let dim = self.r.nrows();
        let jittered = &self.r + DMatrix::identity(dim, dim) * CHOLESKY_JITTER;
        jittered.cholesky().map(|chol| chol.solve(h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorb_keeps_symmetry_and_scale() {
        let mut f = ForgettingFilter::new(3, 0.9);
        let h = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        for _ in 0..50 {
            f.absorb(&h);
        }
        let r = f.information();
        assert_eq!(r[(0, 1)], r[(1, 0)]);
        assert_eq!(r[(0, 2)], r[(2, 0)]);
        // fixed point of the recursion under a constant score is h h^T
        let target = &h * h.transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[(i, j)] - target[(i, j)]).abs() < 0.91_f64.powi(50) * 10.0);
            }
        }
    }

    #[test]
    fn constant_stream_converges_geometrically() {
        let alpha = 0.9;
        let mut f = ForgettingFilter::new(2, alpha);
        let h = DVector::from_vec(vec![0.7, -0.3]);
        let target = &h * h.transpose();
        f.absorb(&h);
        let mut prev = (f.information() - &target).norm();
        for _ in 0..20 {
            f.absorb(&h);
            let gap = (f.information() - &target).norm();
            assert!((gap - alpha * prev).abs() < 1e-12 * prev.max(1.0));
            prev = gap;
        }
    }

    #[test]
    fn zero_score_leaves_no_step() {
        let mut f = ForgettingFilter::new(2, 0.95);
        f.absorb(&DVector::from_vec(vec![1.0, 0.5]));
        f.absorb(&DVector::from_vec(vec![-0.5, 1.0]));
        let zero = DVector::zeros(2);
        let d = f.solve(&zero).unwrap();
        assert!(d.norm() == 0.0);
    }

    #[test]
    fn singular_information_falls_back_to_jitter() {
        let mut f = ForgettingFilter::new(2, 0.9);
        // one rank-1 absorption leaves a singular matrix; plain Cholesky
        // fails and the jittered retry takes over
        f.absorb(&DVector::from_vec(vec![1.0, 0.0]));
        let d = f.solve(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(d.is_some());
    }
}
