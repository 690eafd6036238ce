//! Dense complex LU with a 1-norm condition estimate.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Systems whose estimated 1-norm condition number exceeds this are rejected.
pub const COND_LIMIT: f64 = 1e12;

pub struct LuSolver {
    lu: PartialPivLu<C64>,
    n: usize,
    condition: f64,
}

impl LuSolver {
    /// Factors `a` and rejects it if the condition estimate exceeds [`COND_LIMIT`].
    pub fn new(a: &Mat<C64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid("LU needs a non-empty square matrix"));
        }
        let lu = a.partial_piv_lu();
        let mut s = LuSolver { lu, n, condition: f64::NAN };
        let inv_norm = s.inverse_norm1_estimate();
        let cond = norm1(a) * inv_norm;
        s.condition = cond;
        if !cond.is_finite() || cond > COND_LIMIT {
            return Err(Error::Numerical {
                message: format!("linear system is singular to working precision (cond ≈ {cond:.3e})"),
                condition: Some(cond),
            });
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Estimated κ₁(A).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_adjoint_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Hager's estimate of ‖A⁻¹‖₁ with Higham's alternating-sign safeguard.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 1 {
            let x = self.solve(&[C64::new(1.0, 0.0)]);
            return x[0].norm();
        }
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0f64;
        let mut last = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            let y1: f64 = y.iter().map(|v| v.norm()).sum();
            if !y1.is_finite() {
                return f64::INFINITY;
            }
            if y1 <= est {
                break;
            }
            est = y1;
            let xi: Vec<C64> = y
                .iter()
                .map(|v| if v.norm() > 0.0 { v / v.norm() } else { C64::new(1.0, 0.0) })
                .collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last {
                break;
            }
            last = j;
            x = vec![C64::new(0.0, 0.0); n];
            x[j] = C64::new(1.0, 0.0);
        }
        let alt: Vec<C64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(s * (1.0 + i as f64 / (n - 1) as f64), 0.0)
            })
            .collect();
        let y: f64 = self.solve(&alt).iter().map(|v| v.norm()).sum();
        est.max(2.0 * y / (3.0 * n as f64))
    }
}

pub fn norm1(a: &Mat<C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn solves_small_system() {
        let a = Mat::from_fn(2, 2, |i, j| [[c(2.0, 1.0), c(0.0, -1.0)], [c(1.0, 0.0), c(3.0, 0.0)]][i][j]);
        let lu = LuSolver::new(&a).unwrap();
        let x = lu.solve(&[c(1.0, 0.0), c(0.0, 1.0)]);
        for i in 0..2 {
            let r = a[(i, 0)] * x[0] + a[(i, 1)] * x[1];
            let b = [c(1.0, 0.0), c(0.0, 1.0)][i];
            assert!((r - b).norm() < 1e-14);
        }
    }

    #[test]
    fn condition_of_diagonal_is_exact() {
        let a = Mat::from_fn(4, 4, |i, j| if i == j { c(10f64.powi(i as i32), 0.0) } else { c(0.0, 0.0) });
        let lu = LuSolver::new(&a).unwrap();
        assert!((lu.condition() / 1000.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = Mat::from_fn(3, 3, |i, j| c((i + 1) as f64 * (j + 1) as f64, 0.0));
        match LuSolver::new(&a) {
            Err(Error::Numerical { condition, .. }) => assert!(condition.is_some()),
            other => panic!("expected numerical failure, got {:?}", other.err()),
        }
    }

    #[test]
    fn estimate_brackets_true_condition() {
        // Hilbert-like complex matrix; true κ₁ from the explicit inverse.
        let n = 6;
        let a = Mat::from_fn(n, n, |i, j| c(1.0 / (i + j + 1) as f64, 0.01 * (i as f64 - j as f64)));
        let lu = LuSolver::new(&a).unwrap();
        let mut inv = Mat::<C64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![c(0.0, 0.0); n];
            e[j] = c(1.0, 0.0);
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        let exact = norm1(&a) * norm1(&inv);
        assert!(lu.condition() <= exact * (1.0 + 1e-9));
        assert!(lu.condition() >= exact / 10.0);
    }
}
