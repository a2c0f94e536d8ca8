//! Fourth-order compact z-discretization of one segment and its sine
//! diagonalization.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Matrices of the compact relation
/// `(u''_{k-1} + 10 u''_k + u''_{k+1}) / 12 = (u_{k-1} − 2u_k + u_{k+1}) / h²`
/// on the q − 1 interior planes of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactScheme {
    pub q: usize,
    pub h: f64,
    /// tridiag(1, 10, 1) / 12.
    pub a: Array2<f64>,
    /// tridiag(1, −2, 1).
    pub b: Array2<f64>,
    /// `A⁻¹ B`.
    pub d_mat: Array2<f64>,
    /// `A⁻¹ a₀` and `A⁻¹ a_q`.
    pub a_hat_first: Array1<f64>,
    pub a_hat_last: Array1<f64>,
    /// Eigenvalues of `D`, `μ_k = 12 (cos(kπ/q) − 1) / (5 + cos(kπ/q))`.
    pub mu: Array1<f64>,
    /// `R_{jk} = sin(jkπ/q)`; symmetric with `R⁻¹ = (2/q) R`.
    pub r: Array2<f64>,
    /// `R⁻¹ A⁻¹ a₀` and `R⁻¹ A⁻¹ a_q`.
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Solves the constant-coefficient tridiagonal system `tridiag(off, diag, off) x = rhs`.
fn thomas(diag: f64, off: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = if i == 0 { diag } else { diag - off * c[i - 1] };
        c[i] = off / denom;
        d[i] = if i == 0 {
            rhs[0] / denom
        } else {
            (rhs[i] - off * d[i - 1]) / denom
        };
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = if i + 1 == n {
            d[i]
        } else {
            d[i] - c[i] * x[i + 1]
        };
    }
    x
}

pub fn mode_eigenvalue(k: usize, q: usize) -> f64 {
    let c = (k as f64 * PI / q as f64).cos();
    12.0 * (c - 1.0) / (5.0 + c)
}

pub fn build_scheme(q: usize, h: f64) -> Result<CompactScheme> {
    if q < 2 {
        return Err(Error::Validation(format!(
            "compact scheme needs q >= 2, got {q}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Validation(format!(
            "z-step must be positive, got {h}"
        )));
    }
    let m = q - 1;
    let tridiag = |d: f64, o: f64| {
        Array2::from_shape_fn((m, m), |(i, j)| match i.abs_diff(j) {
            0 => d,
            1 => o,
            _ => 0.0,
        })
    };
    let a = tridiag(10.0 / 12.0, 1.0 / 12.0);
    let b = tridiag(-2.0, 1.0);

    let mut d_mat = Array2::zeros((m, m));
    for j in 0..m {
        let col = thomas(10.0 / 12.0, 1.0 / 12.0, &b.column(j).to_vec());
        for i in 0..m {
            d_mat[(i, j)] = col[i];
        }
    }

    let mut unit_first = vec![0.0; m];
    unit_first[0] = 1.0;
    let mut unit_last = vec![0.0; m];
    unit_last[m - 1] = 1.0;
    let a_hat_first = Array1::from(thomas(10.0 / 12.0, 1.0 / 12.0, &unit_first));
    let a_hat_last = Array1::from(thomas(10.0 / 12.0, 1.0 / 12.0, &unit_last));

    let mu = Array1::from_iter((1..q).map(|k| mode_eigenvalue(k, q)));
    let r = Array2::from_shape_fn((m, m), |(j, k)| {
        ((j + 1) as f64 * (k + 1) as f64 * PI / q as f64).sin()
    });
    let r_inv = r.t().mapv(|v| v * 2.0 / q as f64);
    let alpha = r_inv.dot(&a_hat_first);
    let beta = r_inv.dot(&a_hat_last);

    let scheme = CompactScheme {
        q,
        h,
        a,
        b,
        d_mat,
        a_hat_first,
        a_hat_last,
        mu,
        r,
        alpha,
        beta,
    };
    debug_assert!(scheme.eigen_residual() <= 1e-12, "D R != R diag(mu)");
    debug_assert!(scheme.orthogonality_residual() <= 1e-12, "R^T R != q/2 I");
    Ok(scheme)
}

impl CompactScheme {
    /// Interior plane count q − 1.
    pub fn modes(&self) -> usize {
        self.q - 1
    }

    /// `(R⁻¹)_{kj} = (2/q) R_{jk}`.
    pub fn r_inv(&self, k: usize, j: usize) -> f64 {
        2.0 / self.q as f64 * self.r[(j, k)]
    }

    /// `max |D R − R diag(μ)|`.
    pub fn eigen_residual(&self) -> f64 {
        let dr = self.d_mat.dot(&self.r);
        let m = self.modes();
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                worst = worst.max((dr[(j, k)] - self.r[(j, k)] * self.mu[k]).abs());
            }
        }
        worst
    }

    /// `max |Rᵀ R − (q/2) I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let g = self.r.t().dot(&self.r);
        let half = self.q as f64 / 2.0;
        g.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { half } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q2_has_one_mode() {
        let s = build_scheme(2, 0.1).unwrap();
        assert_eq!(s.mu.len(), 1);
        assert!((s.mu[0] + 2.4).abs() < 1e-15);
        assert!((s.r[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn q3_eigenvalues() {
        let s = build_scheme(3, 0.1).unwrap();
        assert!((s.mu[0] - 12.0 * (-0.5) / 5.5).abs() < 1e-14);
        assert!((s.mu[0] + 1.0909090909090908).abs() < 1e-13);
        assert!((s.mu[1] + 4.0).abs() < 1e-14);
    }

    #[test]
    fn identities_hold_up_to_q64() {
        for q in 2..=64 {
            let s = build_scheme(q, 1.0 / q as f64).unwrap();
            assert!(
                s.eigen_residual() <= 1e-12,
                "q = {q}: {}",
                s.eigen_residual()
            );
            assert!(s.orthogonality_residual() <= 1e-12, "q = {q}");
            let a_d = s.a.dot(&s.d_mat);
            let err = (&a_d - &s.b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err <= 1e-13, "A D != B at q = {q}");
            assert!(s.mu.iter().all(|&m| m < 0.0 && m > -6.0), "q = {q}");
        }
    }

    #[test]
    fn alpha_beta_closed_form() {
        // R⁻¹A⁻¹a₀ = diag(6 / (5 + cos)) (2/q) sin(kπ/q)
        let q = 9;
        let s = build_scheme(q, 0.1).unwrap();
        for k in 1..q {
            let t = k as f64 * PI / q as f64;
            let expect = 6.0 / (5.0 + t.cos()) * 2.0 / q as f64 * t.sin();
            assert!((s.alpha[k - 1] - expect).abs() < 1e-14);
            let expect_b = expect * if k % 2 == 0 { -1.0 } else { 1.0 };
            assert!((s.beta[k - 1] - expect_b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(build_scheme(1, 0.1).is_err());
        assert!(build_scheme(4, 0.0).is_err());
    }
}
