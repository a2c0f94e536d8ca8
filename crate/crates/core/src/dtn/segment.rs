//! Per-mode solves inside one uniform segment.
//!
//! After diagonalizing the compact scheme the interior field decouples into
//! q − 1 transverse problems `(L + μ_k/h² I) W_k = rhs_k`; the interior
//! planes are recovered as `U_j = Σ_k R_{jk} W_k`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;

use super::scheme::CompactScheme;
use crate::error::{Error, Result};
use crate::linalg::{identity, Lu};
use crate::transverse::TransverseOperator;

/// Shifted systems closer to singular than this are treated as a transverse resonance.
pub const RESONANCE_RCOND: f64 = 1e-12;

/// LU factors of `L + (μ_k/h²) I` for every mode k of one segment.
pub struct ModeWorkspace {
    factors: Vec<Lu>,
}

impl std::fmt::Debug for ModeWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeWorkspace")
            .field("modes", &self.factors.len())
            .field("min_rcond", &self.min_rcond())
            .finish()
    }
}

impl ModeWorkspace {
    pub fn new(scheme: &CompactScheme, l: &TransverseOperator) -> Result<Self> {
        let n = l.dim();
        let h2 = scheme.h * scheme.h;
        let mut factors = Vec::with_capacity(scheme.modes());
        for (k, &mu) in scheme.mu.iter().enumerate() {
            let shift = mu / h2;
            let mut shifted = l.matrix().clone();
            for i in 0..n {
                shifted[(i, i)] += shift;
            }
            let context = format!(
                "mode k = {} (shift μ_k/h² = {shift:.6e}): transverse resonance at this grid, change q or N",
                k + 1
            );
            factors.push(Lu::new_checked(&shifted, &context, RESONANCE_RCOND)?);
        }
        Ok(ModeWorkspace { factors })
    }

    pub fn factor(&self, k: usize) -> &Lu {
        &self.factors[k]
    }

    pub fn min_rcond(&self) -> f64 {
        self.factors
            .iter()
            .map(Lu::rcond)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solves the segment interior for given end-plane values and source samples.
///
/// `f_samples` is `N × (q+1)` (see [`crate::model::sample_source`]). Returns
/// the `N × (q−1)` matrix whose column `j−1` is `u(·, ξ_j)`.
pub fn solve_segment_modes(
    scheme: &CompactScheme,
    workspace: &ModeWorkspace,
    l: &TransverseOperator,
    u_left: ArrayView1<Complex64>,
    u_right: ArrayView1<Complex64>,
    f_samples: ArrayView2<Complex64>,
) -> Result<Array2<Complex64>> {
    let n = l.dim();
    let q = scheme.q;
    let m = scheme.modes();
    let h2 = scheme.h * scheme.h;
    assert_eq!(
        f_samples.dim(),
        (n, q + 1),
        "source samples must be N x (q+1)"
    );

    let lu_left = l.apply(u_left);
    let lu_right = l.apply(u_right);
    let f_first = f_samples.column(0);
    let f_last = f_samples.column(q);
    let interior_f = f_samples.slice(s![.., 1..q]);

    let mut w = Array2::<Complex64>::zeros((n, m));
    for k in 0..m {
        let (a, b) = (scheme.alpha[k], scheme.beta[k]);
        let mut rhs = Array1::<Complex64>::zeros(n);
        for i in 0..n {
            let mut v = -(u_left[i] * a + u_right[i] * b) / h2
                - (lu_left[i] * a + lu_right[i] * b) / 12.0
                + (f_first[i] * a + f_last[i] * b) / 12.0;
            // Z_k = (R⁻¹ F)_k
            for j in 0..m {
                v += interior_f[(i, j)] * scheme.r_inv(k, j);
            }
            rhs[i] = v;
        }
        w.column_mut(k)
            .assign(&workspace.factor(k).solve(rhs.view())?);
    }
    // U = W Rᵀ (R is symmetric)
    let r = scheme.r.mapv(|v| Complex64::new(v, 0.0));
    Ok(w.dot(&r.t()))
}

fn plane<'a>(
    j: usize,
    q: usize,
    u_left: ArrayView1<'a, Complex64>,
    interior: ArrayView2<'a, Complex64>,
    u_right: ArrayView1<'a, Complex64>,
) -> ArrayView1<'a, Complex64> {
    if j == 0 {
        u_left
    } else if j == q {
        u_right
    } else {
        interior.index_axis_move(Axis(1), j - 1)
    }
}

/// One-sided fourth-order derivatives at both segment ends:
///
/// `∂u(z_{j−1}) ≈ (u(ξ₂) − u(ξ₀)) / 2h − (h/3) [u''(ξ₀) + 2u''(ξ₁)]`,
/// `∂u(z_j) ≈ (u(ξ_q) − u(ξ_{q−2})) / 2h + (h/3) [2u''(ξ_{q−1}) + u''(ξ_q)]`,
/// with `u'' = −L u + f`.
pub fn endpoint_derivatives(
    scheme: &CompactScheme,
    l: &TransverseOperator,
    interior: ArrayView2<Complex64>,
    u_left: ArrayView1<Complex64>,
    u_right: ArrayView1<Complex64>,
    f_samples: ArrayView2<Complex64>,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    let q = scheme.q;
    if q < 2 {
        return Err(Error::Validation("endpoint derivatives need q >= 2".into()));
    }
    let h = scheme.h;
    let p = |j: usize| plane(j, q, u_left, interior, u_right);
    let second = |j: usize| -l.apply(p(j)) + f_samples.column(j);

    let left = (&p(2) - &p(0)) / (2.0 * h) - (second(0) + second(1) * 2.0) * (h / 3.0);
    let right = (&p(q) - &p(q - 2)) / (2.0 * h) + (second(q - 1) * 2.0 + second(q)) * (h / 3.0);
    Ok((left, right))
}

/// Source part `(s₁, s₂)` of the DtN relation: the end derivatives of the
/// solution with zero end values.
pub fn compute_source_vector(
    scheme: &CompactScheme,
    workspace: &ModeWorkspace,
    l: &TransverseOperator,
    f_samples: ArrayView2<Complex64>,
) -> Result<(Array1<Complex64>, Array1<Complex64>)> {
    let zero = Array1::zeros(l.dim());
    let interior = solve_segment_modes(scheme, workspace, l, zero.view(), zero.view(), f_samples)?;
    endpoint_derivatives(
        scheme,
        l,
        interior.view(),
        zero.view(),
        zero.view(),
        f_samples,
    )
}

/// The four N×N blocks of the homogeneous DtN map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapBlocks {
    pub m11: Array2<Complex64>,
    pub m12: Array2<Complex64>,
    pub m21: Array2<Complex64>,
    pub m22: Array2<Complex64>,
}

/// Assembles the DtN blocks from the affine structure of the mode solves.
///
/// With `P_k = (L + μ_k/h²)⁻¹ (I/h² + L/12)`, a left end value `u₀` produces
/// `W_k = −α_k P_k u₀` and a right end value `W_k = −β_k P_k u_q`, so every
/// plane is a fixed matrix times the end data. Only the planes touched by
/// the end stencils (ξ₁, ξ₂, ξ_{q−2}, ξ_{q−1}) are formed.
pub fn assemble_map_blocks(
    scheme: &CompactScheme,
    workspace: &ModeWorkspace,
    l: &TransverseOperator,
) -> Result<MapBlocks> {
    let n = l.dim();
    let q = scheme.q;
    let h = scheme.h;
    let lm = l.matrix();
    let eye = identity(n);
    let rhs = eye.mapv(|v| v / (h * h)) + lm.mapv(|v| v / 12.0);

    // interior planes needed by the stencils
    let mut wanted: Vec<usize> = [1, 2, q.saturating_sub(2), q - 1]
        .into_iter()
        .filter(|&j| j >= 1 && j < q)
        .collect();
    wanted.sort_unstable();
    wanted.dedup();

    let zeros = Array2::<Complex64>::zeros((n, n));
    let mut from_left = vec![zeros.clone(); wanted.len()];
    let mut from_right = vec![zeros.clone(); wanted.len()];
    for k in 0..scheme.modes() {
        let pk = workspace.factor(k).solve_mat(rhs.view())?;
        for (slot, &j) in wanted.iter().enumerate() {
            let r = scheme.r[(j - 1, k)];
            let ca = -scheme.alpha[k] * r;
            let cb = -scheme.beta[k] * r;
            from_left[slot].scaled_add(Complex64::new(ca, 0.0), &pk);
            from_right[slot].scaled_add(Complex64::new(cb, 0.0), &pk);
        }
    }
    let pick = |planes: &[Array2<Complex64>],
                first: &Array2<Complex64>,
                last: &Array2<Complex64>,
                j: usize| {
        if j == 0 {
            first.clone()
        } else if j == q {
            last.clone()
        } else {
            planes[wanted.binary_search(&j).expect("plane assembled")].clone()
        }
    };
    let derivs =
        |planes: &[Array2<Complex64>], first: &Array2<Complex64>, last: &Array2<Complex64>| {
            let g = |j| pick(planes, first, last, j);
            let lg = |j| lm.dot(&g(j));
            let left = (g(2) - g(0)) / (2.0 * h) + (lg(0) + lg(1) * 2.0) * (h / 3.0);
            let right = (g(q) - g(q - 2)) / (2.0 * h) - (lg(q - 1) * 2.0 + lg(q)) * (h / 3.0);
            (left, right)
        };
    let (m11, m21) = derivs(&from_left, &eye, &zeros);
    let (m12, m22) = derivs(&from_right, &zeros, &eye);
    Ok(MapBlocks { m11, m12, m21, m22 })
}

/// The literal construction: one interior solve per column of the 2N×2N
/// identity, reading the map column off the end derivatives.
pub fn map_blocks_by_unit_columns(
    scheme: &CompactScheme,
    workspace: &ModeWorkspace,
    l: &TransverseOperator,
) -> Result<MapBlocks> {
    let n = l.dim();
    let zeros_f = Array2::zeros((n, scheme.q + 1));
    let mut full = Array2::<Complex64>::zeros((2 * n, 2 * n));
    for c in 0..2 * n {
        let mut ends = Array1::<Complex64>::zeros(2 * n);
        ends[c] = Complex64::new(1.0, 0.0);
        let (u_left, u_right) = ends.view().split_at(Axis(0), n);
        let interior = solve_segment_modes(scheme, workspace, l, u_left, u_right, zeros_f.view())?;
        let (dl, dr) =
            endpoint_derivatives(scheme, l, interior.view(), u_left, u_right, zeros_f.view())?;
        full.slice_mut(s![..n, c]).assign(&dl);
        full.slice_mut(s![n.., c]).assign(&dr);
    }
    Ok(MapBlocks {
        m11: full.slice(s![..n, ..n]).to_owned(),
        m12: full.slice(s![..n, n..]).to_owned(),
        m21: full.slice(s![n.., ..n]).to_owned(),
        m22: full.slice(s![n.., n..]).to_owned(),
    })
}
