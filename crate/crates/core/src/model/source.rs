//! Inside light sources f(x, z) and their sampling on a segment grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use super::grid::TransverseGrid;

/// Which z coordinate a source is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ZFrame {
    /// z measured from the start of the segment that carries the source.
    #[default]
    Local,
    /// z measured from z₀, the left end of the structure.
    Global,
}

/// Callback signature of a programmatic source: `(x, z_local, z_global) -> f`.
pub type SourceFn = dyn Fn(f64, f64, f64) -> Complex64 + Send + Sync;

#[derive(Clone)]
pub struct CustomSource(pub Arc<SourceFn>);

impl fmt::Debug for CustomSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomSource({:p})", Arc::as_ptr(&self.0) as *const ())
    }
}

impl PartialEq for CustomSource {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceTerm {
    /// `amplitude · cos(πx/(2D)) · sin(πz/period)`.
    Separable {
        amplitude: Complex64,
        period: f64,
        frame: ZFrame,
    },
    /// Bilinear interpolation of samples on a rectangular (x, z) table; zero outside it.
    Tabulated {
        x: Vec<f64>,
        z: Vec<f64>,
        /// `values[i][k]` is f at `(x[i], z[k])`.
        values: Vec<Vec<Complex64>>,
        frame: ZFrame,
    },
    /// Pointwise sum of other named sources.
    Sum {
        ids: Vec<String>,
        terms: Vec<SourceTerm>,
    },
    /// Programmatic source; not representable in a config document.
    Custom { f: CustomSource },
}

impl SourceTerm {
    pub fn separable(amplitude: Complex64, period: f64) -> Self {
        SourceTerm::Separable {
            amplitude,
            period,
            frame: ZFrame::Local,
        }
    }

    pub fn custom(f: impl Fn(f64, f64, f64) -> Complex64 + Send + Sync + 'static) -> Self {
        SourceTerm::Custom {
            f: CustomSource(Arc::new(f)),
        }
    }

    pub fn eval(&self, x: f64, z_local: f64, z_global: f64, half_width: f64) -> Complex64 {
        match self {
            SourceTerm::Separable {
                amplitude,
                period,
                frame,
            } => {
                let z = pick(*frame, z_local, z_global);
                amplitude * ((PI * x / (2.0 * half_width)).cos() * (PI * z / period).sin())
            }
            SourceTerm::Tabulated {
                x: xs,
                z: zs,
                values,
                frame,
            } => bilinear(xs, zs, values, x, pick(*frame, z_local, z_global)),
            SourceTerm::Sum { terms, .. } => terms
                .iter()
                .map(|t| t.eval(x, z_local, z_global, half_width))
                .sum(),
            SourceTerm::Custom { f } => (f.0)(x, z_local, z_global),
        }
    }

    /// True when the value depends on where the segment sits along z.
    pub fn depends_on_position(&self) -> bool {
        match self {
            SourceTerm::Separable { frame, .. } | SourceTerm::Tabulated { frame, .. } => {
                *frame == ZFrame::Global
            }
            SourceTerm::Sum { terms, .. } => terms.iter().any(SourceTerm::depends_on_position),
            SourceTerm::Custom { .. } => true,
        }
    }
}

fn pick(frame: ZFrame, local: f64, global: f64) -> f64 {
    match frame {
        ZFrame::Local => local,
        ZFrame::Global => global,
    }
}

fn bracket(axis: &[f64], t: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n == 0 || t < axis[0] || t > axis[n - 1] {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = match axis.partition_point(|&a| a <= t) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let w = (t - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, w))
}

fn bilinear(xs: &[f64], zs: &[f64], values: &[Vec<Complex64>], x: f64, z: f64) -> Complex64 {
    let (Some((i, wx)), Some((k, wz))) = (bracket(xs, x), bracket(zs, z)) else {
        return Complex64::new(0.0, 0.0);
    };
    let i1 = (i + 1).min(xs.len() - 1);
    let k1 = (k + 1).min(zs.len() - 1);
    let v00 = values[i][k];
    let v01 = values[i][k1];
    let v10 = values[i1][k];
    let v11 = values[i1][k1];
    v00 * ((1.0 - wx) * (1.0 - wz))
        + v01 * ((1.0 - wx) * wz)
        + v10 * (wx * (1.0 - wz))
        + v11 * (wx * wz)
}

/// Samples f on a segment's (x_i, ξ_k) grid.
///
/// Returns an `N × (q+1)` matrix whose column `k` holds `f(·, ξ_k)`; columns
/// `0` and `q` are the segment end planes. A missing source yields zeros.
pub fn sample_source(
    term: Option<&SourceTerm>,
    length: f64,
    q: usize,
    grid: &TransverseGrid,
    z_offset: f64,
) -> Array2<Complex64> {
    let n = grid.n;
    let Some(term) = term else {
        return Array2::zeros((n, q + 1));
    };
    let h = length / q as f64;
    let xs = grid.points();
    Array2::from_shape_fn((n, q + 1), |(i, k)| {
        // pin the last plane to the exact segment length
        let z_local = if k == q { length } else { k as f64 * h };
        term.eval(xs[i], z_local, z_offset + z_local, grid.half_width)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, d: f64) -> TransverseGrid {
        TransverseGrid::new(d, n, None).unwrap()
    }

    #[test]
    fn sourceless_segment_samples_to_zero() {
        let g = grid(5, 1.0);
        let s = sample_source(None, 0.5, 4, &g, 0.0);
        assert_eq!(s.dim(), (5, 5));
        assert!(s.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn separable_source_peaks_mid_tooth() {
        let f = SourceTerm::separable(Complex64::new(1.0, 0.0), 0.215);
        let v = f.eval(0.0, 0.1075, 3.0, 2.0);
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn samples_match_the_closed_form_pointwise() {
        let d = 1.7;
        let g = grid(9, d);
        let f = SourceTerm::separable(Complex64::new(0.5, -0.25), 0.215);
        let s = sample_source(Some(&f), 0.215, 6, &g, 4.3);
        for i in 0..9 {
            let x = -d + (i + 1) as f64 * (2.0 * d / 10.0);
            for k in 0..=6 {
                let z = 0.215 * k as f64 / 6.0;
                let expect = Complex64::new(0.5, -0.25)
                    * ((PI * x / (2.0 * d)).cos() * (PI * z / 0.215).sin());
                assert!((s[(i, k)] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn global_frame_uses_offset() {
        let g = grid(3, 1.0);
        let f = SourceTerm::Separable {
            amplitude: Complex64::new(1.0, 0.0),
            period: 1.0,
            frame: ZFrame::Global,
        };
        let s = sample_source(Some(&f), 1.0, 4, &g, 0.5);
        // x = 0 is the middle point, ξ_0 = 0.5 globally
        assert!((s[(1, 0)].re - 1.0).abs() < 1e-15);
        assert!(f.depends_on_position());
    }

    #[test]
    fn tabulated_source_interpolates_bilinearly() {
        let c = |r: f64| Complex64::new(r, 0.0);
        let f = SourceTerm::Tabulated {
            x: vec![-1.0, 1.0],
            z: vec![0.0, 1.0],
            values: vec![vec![c(0.0), c(1.0)], vec![c(2.0), c(3.0)]],
            frame: ZFrame::Local,
        };
        assert!((f.eval(0.0, 0.5, 0.0, 1.0) - c(1.5)).norm() < 1e-15);
        assert_eq!(f.eval(0.0, 1.5, 0.0, 1.0), c(0.0));
    }

    proptest! {
        #[test]
        fn sampling_is_linear_in_the_source(
            a in -2.0f64..2.0, b in -2.0f64..2.0, p1 in 0.1f64..1.0, p2 in 0.1f64..1.0,
            off in 0.0f64..3.0,
        ) {
            let g = grid(6, 1.3);
            let f1 = SourceTerm::separable(Complex64::new(a, 0.3), p1);
            let f2 = SourceTerm::Separable { amplitude: Complex64::new(0.1, b), period: p2, frame: ZFrame::Global };
            let sum = SourceTerm::Sum { ids: vec!["a".into(), "b".into()], terms: vec![f1.clone(), f2.clone()] };
            let s1 = sample_source(Some(&f1), 0.4, 5, &g, off);
            let s2 = sample_source(Some(&f2), 0.4, 5, &g, off);
            let s = sample_source(Some(&sum), 0.4, 5, &g, off);
            for ((x, y), z) in s1.iter().zip(s2.iter()).zip(s.iter()) {
                prop_assert!((x + y - z).norm() <= 1e-14 * (1.0 + z.norm()));
            }
        }
    }
}
