//! Uniform transverse grid on (−D, D) with Dirichlet end points.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::transverse::PmlSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TransverseGrid {
    pub half_width: f64,
    /// Interior point count; x₀ = −D and x_{N+1} = D are not unknowns.
    pub n: usize,
    pub hx: f64,
    pub pml: Option<PmlSpec>,
}

/// Hashable identity of a grid, used inside cache keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridKey {
    n: usize,
    half_width: u64,
    pml: Option<(u64, u64, u32)>,
}

impl TransverseGrid {
    pub fn new(half_width: f64, n: usize, pml: Option<PmlSpec>) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Validation(format!(
                "domain.half_width must be positive, got {half_width}"
            )));
        }
        if n < 3 {
            return Err(Error::Validation(format!(
                "domain.N must be at least 3, got {n}"
            )));
        }
        if let Some(p) = &pml {
            p.validate(half_width)?;
        }
        Ok(TransverseGrid {
            half_width,
            n,
            hx: 2.0 * half_width / (n + 1) as f64,
            pml,
        })
    }

    /// x_i for i = 1..N, stored 0-based.
    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i + 1) as f64 * self.hx
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn sigma(&self, x: f64) -> f64 {
        self.pml
            .as_ref()
            .map_or(0.0, |p| p.sigma(x, self.half_width))
    }

    pub fn stretch(&self, x: f64) -> Complex64 {
        Complex64::new(1.0, self.sigma(x))
    }

    /// No absorbing layer anywhere: L is then real symmetric.
    pub fn is_lossless(&self) -> bool {
        self.pml.as_ref().is_none_or(|p| p.sigma_max == 0.0)
    }

    pub fn key(&self) -> GridKey {
        GridKey {
            n: self.n,
            half_width: self.half_width.to_bits(),
            pml: self
                .pml
                .as_ref()
                .map(|p| (p.thickness.to_bits(), p.sigma_max.to_bits(), p.order)),
        }
    }
}
