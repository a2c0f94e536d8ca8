//! Transverse operator `L = (1/s) d/dx ((1/s) d/dx) + k₀² n²(x)` with PML
//! stretching, its eigendecomposition, principal square root and lead modes.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{Eig, Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, norm_one, principal_sqrt, Lu, ZERO};
use crate::model::{GridKey, IndexProfile, TransverseGrid};

/// Polynomially graded absorbing layer of thickness `thickness` at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmlSpec {
    pub thickness: f64,
    pub sigma_max: f64,
    pub order: u32,
}

impl PmlSpec {
    pub fn validate(&self, half_width: f64) -> Result<()> {
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(Error::Validation(format!(
                "pml.thickness must be positive, got {}",
                self.thickness
            )));
        }
        if self.thickness >= half_width {
            return Err(Error::Validation(format!(
                "pml.thickness {} leaves no interior in a half-width of {half_width}",
                self.thickness
            )));
        }
        if !(self.sigma_max >= 0.0 && self.sigma_max.is_finite()) {
            return Err(Error::Validation(format!(
                "pml.sigma_max must be non-negative, got {}",
                self.sigma_max
            )));
        }
        if self.order < 1 {
            return Err(Error::Validation("pml.order must be at least 1".into()));
        }
        Ok(())
    }

    /// σ(x): zero for |x| ≤ D − d, polynomial ramp up to σ_max at |x| = D.
    pub fn sigma(&self, x: f64, half_width: f64) -> f64 {
        let start = half_width - self.thickness;
        let depth = x.abs() - start;
        if depth <= 0.0 {
            0.0
        } else {
            self.sigma_max * (depth.min(self.thickness) / self.thickness).powi(self.order as i32)
        }
    }
}

/// s(x) = 1 + iσ(x).
pub fn pml_stretch(x: f64, pml: &PmlSpec, half_width: f64) -> Complex64 {
    Complex64::new(1.0, pml.sigma(x, half_width))
}

/// Identity of an assembled operator for caching.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OperatorKey {
    pub profile_id: String,
    pub profile_fingerprint: u64,
    pub k0_bits: u64,
    pub grid: GridKey,
}

/// Sorted eigendecomposition `L V = V Λ`.
///
/// Columns of `vectors` have unit norm under the weighted inner product
/// `h_x Σ |v_i|²` and are phased so their largest entry is real positive.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Array1<Complex64>,
    pub vectors: Array2<Complex64>,
    /// `V⁻¹`; equals `h_x Vᵀ` in the lossless case.
    pub inverse: Array2<Complex64>,
    /// `‖V‖₁ ‖V⁻¹‖₁`.
    pub condition: f64,
    /// `‖L Ṽ − Ṽ Λ‖_F / ‖L‖_F` with unit-2-norm columns Ṽ.
    pub residual: f64,
    /// Leading entries of `values` that are guided (propagating) modes.
    pub propagating: Vec<bool>,
}

pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e12;
pub const MAX_EIGEN_RESIDUAL: f64 = 1e-10;
const PROPAGATING_TOL_LOSSLESS: f64 = 1e-8;
const PROPAGATING_TOL_LOSSY: f64 = 1e-3;

pub struct TransverseOperator {
    matrix: Array2<Complex64>,
    hx: f64,
    lossless: bool,
    key: Option<OperatorKey>,
    eigen: OnceLock<Result<Eigen>>,
    sqrt: OnceLock<Result<Array2<Complex64>>>,
}

impl std::fmt::Debug for TransverseOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransverseOperator")
            .field("n", &self.dim())
            .field("hx", &self.hx)
            .field("lossless", &self.lossless)
            .field("key", &self.key)
            .finish_non_exhaustive()
    }
}

/// Discretizes L on the grid with the conservative three-point stencil.
///
/// Row i reads
/// `(1/(s_i h²)) [u_{i-1}/s_{i-1/2} − (1/s_{i-1/2} + 1/s_{i+1/2}) u_i + u_{i+1}/s_{i+1/2}] + k₀² n(x_i)² u_i`,
/// with the couplings to the Dirichlet end points dropped.
pub fn assemble_l(profile: &IndexProfile, grid: &TransverseGrid, k0: f64) -> TransverseOperator {
    let n = grid.n;
    let h2 = grid.hx * grid.hx;
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        let x = grid.x(i);
        let s = grid.stretch(x);
        let left = 1.0 / grid.stretch(x - 0.5 * grid.hx);
        let right = 1.0 / grid.stretch(x + 0.5 * grid.hx);
        let scale = 1.0 / (s * h2);
        if i > 0 {
            l[(i, i - 1)] = scale * left;
        }
        if i + 1 < n {
            l[(i, i + 1)] = scale * right;
        }
        let nx = profile.index_at(x);
        l[(i, i)] = -scale * (left + right) + k0 * k0 * nx * nx;
    }
    let mut op = TransverseOperator::from_matrix(l, grid.hx);
    op.lossless = grid.is_lossless();
    op.key = Some(OperatorKey {
        profile_id: profile.id.clone(),
        profile_fingerprint: crate::fingerprint(profile),
        k0_bits: k0.to_bits(),
        grid: grid.key(),
    });
    op
}

impl TransverseOperator {
    /// Wraps an arbitrary square matrix; `hx` is the quadrature weight used
    /// to normalize eigenvectors.
    pub fn from_matrix(matrix: Array2<Complex64>, hx: f64) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "L must be square");
        let lossless = matrix.iter().all(|z| z.im == 0.0)
            && matrix
                .indexed_iter()
                .all(|((i, j), z)| *z == matrix[(j, i)]);
        TransverseOperator {
            matrix,
            hx,
            lossless,
            key: None,
            eigen: OnceLock::new(),
            sqrt: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    /// Real symmetric operator (no absorbing layer, real index).
    pub fn is_lossless(&self) -> bool {
        self.lossless
    }

    pub fn key(&self) -> Option<&OperatorKey> {
        self.key.as_ref()
    }

    pub fn apply(&self, v: ArrayView1<Complex64>) -> Array1<Complex64> {
        self.matrix.dot(&v)
    }

    /// Cached eigendecomposition, computed at most once.
    pub fn eigen(&self) -> Result<&Eigen> {
        self.eigen
            .get_or_init(|| self.compute_eigen())
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Cached principal square root `V diag(√λ) V⁻¹`.
    pub fn sqrt(&self) -> Result<&Array2<Complex64>> {
        self.sqrt
            .get_or_init(|| {
                let eig = self.eigen()?;
                let roots = eig.values.mapv(principal_sqrt);
                let mut scaled = eig.vectors.clone();
                for (mut col, r) in scaled.axis_iter_mut(Axis(1)).zip(roots.iter()) {
                    col.mapv_inplace(|v| v * r);
                }
                Ok(scaled.dot(&eig.inverse))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn compute_eigen(&self) -> Result<Eigen> {
        let n = self.dim();
        let (values, vectors) = if self.lossless {
            let real = self.matrix.mapv(|z| z.re);
            let (w, v) = real
                .eigh(UPLO::Lower)
                .map_err(|e| Error::numerical("eigendecomposition of L", e))?;
            // eigh sorts ascending; reverse to descending
            let order: Vec<usize> = (0..n).rev().collect();
            let values = Array1::from_iter(order.iter().map(|&k| Complex64::new(w[k], 0.0)));
            let vectors =
                Array2::from_shape_fn((n, n), |(i, c)| Complex64::new(v[(i, order[c])], 0.0));
            (values, vectors)
        } else {
            let (w, v) = self
                .matrix
                .eig()
                .map_err(|e| Error::numerical("eigendecomposition of L", e))?;
            let propagating: Vec<bool> = w.iter().map(|&l| is_propagating(l, false)).collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                propagating[b]
                    .cmp(&propagating[a])
                    .then(w[b].re.total_cmp(&w[a].re))
                    .then(w[b].im.total_cmp(&w[a].im))
            });
            let values = Array1::from_iter(order.iter().map(|&k| w[k]));
            let vectors = Array2::from_shape_fn((n, n), |(i, c)| v[(i, order[c])]);
            (values, vectors)
        };
        let vectors = normalize_columns(vectors, self.hx);

        let unit_scale = self.hx.sqrt();
        let lnorm = frobenius(self.matrix.view());
        let mut resid = self.matrix.dot(&vectors);
        for (mut col, (vcol, lam)) in resid
            .axis_iter_mut(Axis(1))
            .zip(vectors.axis_iter(Axis(1)).zip(values.iter()))
        {
            col.zip_mut_with(&vcol, |r, v| *r -= v * lam);
        }
        let residual = if lnorm > 0.0 {
            frobenius(resid.view()) * unit_scale / lnorm
        } else {
            0.0
        };
        if !(residual <= MAX_EIGEN_RESIDUAL) {
            return Err(Error::numerical(
                "eigendecomposition of L",
                format!("residual {residual:.3e} exceeds {MAX_EIGEN_RESIDUAL:.0e}"),
            ));
        }

        let inverse = if self.lossless {
            vectors.t().mapv(|v| v * self.hx)
        } else {
            let lu = Lu::new(&vectors, "eigenvector matrix of L")?;
            lu.solve_mat(crate::linalg::identity(n).view())?
        };
        let condition = norm_one(vectors.view()) * norm_one(inverse.view());
        if !(condition <= MAX_EIGENVECTOR_CONDITION) {
            return Err(Error::numerical(
                "eigendecomposition of L",
                format!("eigenvector matrix is numerically defective (condition estimate {condition:.3e})"),
            ));
        }
        let propagating = values
            .iter()
            .map(|&l| is_propagating(l, self.lossless))
            .collect();
        Ok(Eigen {
            values,
            vectors,
            inverse,
            condition,
            residual,
            propagating,
        })
    }
}

fn is_propagating(lambda: Complex64, lossless: bool) -> bool {
    let beta = principal_sqrt(lambda);
    let tol = if lossless {
        PROPAGATING_TOL_LOSSLESS
    } else {
        PROPAGATING_TOL_LOSSY
    };
    beta.re > 0.0 && beta.im.abs() < tol * beta.norm()
}

fn normalize_columns(mut v: Array2<Complex64>, hx: f64) -> Array2<Complex64> {
    for mut col in v.axis_iter_mut(Axis(1)) {
        let norm = (hx * col.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        let pivot = col.iter().copied().fold(ZERO, |best, z| {
            if z.norm() > best.norm() * (1.0 + 1e-12) {
                z
            } else {
                best
            }
        });
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let scale = phase / norm;
        col.mapv_inplace(|z| z * scale);
    }
    v
}

/// Transverse modes of a lead, sorted with the fundamental at index 0.
#[derive(Debug, Clone)]
pub struct LeadModes {
    pub lambda: Array1<Complex64>,
    /// β_m = √λ_m on the principal branch.
    pub beta: Array1<Complex64>,
    pub propagating: Vec<bool>,
    pub vectors: Array2<Complex64>,
    pub inverse: Array2<Complex64>,
    pub hx: f64,
    pub lossless: bool,
}

pub fn lead_modes(op: &TransverseOperator) -> Result<LeadModes> {
    let eig = op.eigen()?;
    Ok(LeadModes {
        lambda: eig.values.clone(),
        beta: eig.values.mapv(principal_sqrt),
        propagating: eig.propagating.clone(),
        vectors: eig.vectors.clone(),
        inverse: eig.inverse.clone(),
        hx: op.hx(),
        lossless: op.is_lossless(),
    })
}

impl LeadModes {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn propagating_count(&self) -> usize {
        self.propagating.iter().filter(|&&p| p).count()
    }

    pub fn mode(&self, m: usize) -> ArrayView1<'_, Complex64> {
        self.vectors.column(m)
    }

    /// Modal coefficients `c = V⁻¹ u`.
    pub fn coefficients(&self, field: ArrayView1<Complex64>) -> Array1<Complex64> {
        self.inverse.dot(&field)
    }

    /// Power carried by the propagating content of `field`.
    pub fn power(&self, field: ArrayView1<Complex64>) -> Result<f64> {
        if !self.lossless {
            return Err(Error::numerical(
                "modal flux",
                "lead has an absorbing layer; modal power is only defined for a lossless lead",
            ));
        }
        Ok(power_of(&self.coefficients(field), self))
    }
}

fn power_of(c: &Array1<Complex64>, modes: &LeadModes) -> f64 {
    c.iter()
        .zip(modes.beta.iter().zip(&modes.propagating))
        .filter(|(_, (_, &p))| p)
        .map(|(c, (b, _))| b.re * c.norm_sqr())
        .sum()
}

#[derive(Debug, Clone)]
pub struct ModalFlux {
    pub coefficients: Array1<Complex64>,
    /// `Σ_propagating Re β_m |c_m|²`; `None` on a lossy lead.
    pub flux: Option<f64>,
}

pub fn modal_flux(field: ArrayView1<Complex64>, modes: &LeadModes) -> ModalFlux {
    let coefficients = modes.coefficients(field);
    let flux = modes.lossless.then(|| power_of(&coefficients, modes));
    ModalFlux { coefficients, flux }
}
