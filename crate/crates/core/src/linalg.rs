//! Dense complex linear-algebra helpers on top of LAPACK.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Factorize, LUFactorized, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Principal square root with `Re >= 0` and, on the cut, `Im >= 0`.
///
/// `num_complex` follows the sign of a negative zero imaginary part, which
/// would send `-9 - 0i` to `-3i`; this folds that case back onto `+3i`.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    let r = z.sqrt();
    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
        -r
    } else {
        r
    }
}

/// LU factorization with a 1-norm reciprocal condition estimate.
pub struct Lu {
    factors: LUFactorized<ndarray::OwnedRepr<Complex64>>,
    rcond: f64,
    n: usize,
}

impl Lu {
    pub fn new(a: &Array2<Complex64>, context: &str) -> Result<Self> {
        let n = a.nrows();
        let anorm = norm_one(a.view());
        if !anorm.is_finite() {
            return Err(Error::numerical(context, "matrix has non-finite entries"));
        }
        let factors = a.factorize().map_err(|_| Error::Singular {
            context: context.to_string(),
            rcond: 0.0,
        })?;
        let mut lu = Lu {
            factors,
            rcond: 0.0,
            n,
        };
        let inv_norm = lu.inverse_norm_one_estimate()?;
        lu.rcond = if anorm == 0.0 || !inv_norm.is_finite() {
            0.0
        } else {
            1.0 / (anorm * inv_norm)
        };
        Ok(lu)
    }

    /// Factorizes and rejects matrices whose reciprocal condition falls below `min_rcond`.
    pub fn new_checked(a: &Array2<Complex64>, context: &str, min_rcond: f64) -> Result<Self> {
        let lu = Self::new(a, context)?;
        if !(lu.rcond >= min_rcond) {
            return Err(Error::Singular {
                context: context.to_string(),
                rcond: lu.rcond,
            });
        }
        Ok(lu)
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: ArrayView1<Complex64>) -> Result<Array1<Complex64>> {
        Ok(self.factors.solve(&b)?)
    }

    pub fn solve_h(&self, b: ArrayView1<Complex64>) -> Result<Array1<Complex64>> {
        Ok(self.factors.solve_h(&b)?)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: ArrayView2<Complex64>) -> Result<Array2<Complex64>> {
        let mut x = Array2::zeros(b.raw_dim());
        for (col_b, mut col_x) in b.axis_iter(Axis(1)).zip(x.axis_iter_mut(Axis(1))) {
            col_x.assign(&self.solve(col_b)?);
        }
        Ok(x)
    }

    // Hager/Higham estimator of ||A^-1||_1 (the LAPACK xLACN2 iteration).
    fn inverse_norm_one_estimate(&self) -> Result<f64> {
        let n = self.n;
        if n == 0 {
            return Ok(0.0);
        }
        let mut x = Array1::from_elem(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(x.view())?;
            let y_norm: f64 = y.iter().map(|v| v.norm()).sum();
            if y_norm <= est {
                break;
            }
            est = y_norm;
            let xi = y.mapv(|v| if v.norm() > 0.0 { v / v.norm() } else { ONE });
            let z = self.solve_h(xi.view())?;
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let ztx: f64 = z.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x.fill(ZERO);
            x[j] = ONE;
        }
        // alternating-sign fallback vector guards against the classic failure cases
        let alt = Array1::from_shape_fn(n, |i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let scale = if n > 1 {
                1.0 + i as f64 / (n - 1) as f64
            } else {
                1.0
            };
            Complex64::new(sign * scale, 0.0)
        });
        let y = self.solve(alt.view())?;
        let alt_est = 2.0 * y.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        Ok(est.max(alt_est))
    }
}

/// Maximum absolute column sum.
pub fn norm_one(a: ArrayView2<Complex64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: ArrayView2<Complex64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm2(v: ArrayView1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(v: impl IntoIterator<Item = Complex64>) -> f64 {
    v.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `||a - b||_F / max(||b||_F, tiny)`; zero when both vanish.
pub fn rel_diff_mat(a: ArrayView2<Complex64>, b: ArrayView2<Complex64>) -> f64 {
    let d = frobenius((&a - &b).view());
    let scale = frobenius(b).max(frobenius(a));
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

pub fn rel_diff_vec(a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> f64 {
    let d = norm2((&a - &b).view());
    let scale = norm2(a).max(norm2(b));
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

pub fn identity(n: usize) -> Array2<Complex64> {
    Array2::from_diag_elem(n, ONE)
}

pub fn all_finite<'a>(it: impl IntoIterator<Item = &'a Complex64>) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
