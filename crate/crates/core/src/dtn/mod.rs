//! Discrete Dirichlet-to-Neumann map of one uniform segment.
//!
//! For a segment (z_{j−1}, z_j) the map relates end values to end derivatives,
//!
//! ```text
//! [∂u(z_{j−1})]   [M11 M12] [u(z_{j−1})]   [s1]
//! [∂u(z_j)    ] = [M21 M22] [u(z_j)    ] + [s2]
//! ```
//!
//! The blocks depend only on the segment's structure (profile, length, q,
//! wavelength, grid), so equal segments share one map; `s` depends on f.

pub mod cache;
pub mod scheme;
pub mod segment;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

pub use cache::{DtnCache, Lookup, MapKey, SourceKey};
pub use scheme::{build_scheme, CompactScheme};
pub use segment::{
    assemble_map_blocks, compute_source_vector, endpoint_derivatives, map_blocks_by_unit_columns,
    solve_segment_modes, MapBlocks, ModeWorkspace,
};

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::transverse::TransverseOperator;

/// Homogeneous map of a segment together with the factorizations that
/// produced it; the factorizations are reused for source vectors.
#[derive(Debug)]
pub struct SegmentMap {
    pub scheme: CompactScheme,
    pub workspace: ModeWorkspace,
    pub blocks: MapBlocks,
}

impl SegmentMap {
    pub fn build(scheme: CompactScheme, l: &TransverseOperator) -> Result<Self> {
        let workspace = ModeWorkspace::new(&scheme, l)?;
        let blocks = assemble_map_blocks(&scheme, &workspace, l)?;
        let b = &blocks;
        if !all_finite(b.m11.iter().chain(&b.m12).chain(&b.m21).chain(&b.m22)) {
            return Err(Error::numerical(
                "DtN map assembly",
                "non-finite map entries",
            ));
        }
        Ok(SegmentMap {
            scheme,
            workspace,
            blocks,
        })
    }

    pub fn source_vectors(
        &self,
        l: &TransverseOperator,
        f_samples: ArrayView2<Complex64>,
    ) -> Result<SourceVectors> {
        let (s1, s2) = compute_source_vector(&self.scheme, &self.workspace, l, f_samples)?;
        if !all_finite(s1.iter().chain(&s2)) {
            return Err(Error::numerical("DtN source vector", "non-finite entries"));
        }
        Ok(SourceVectors { s1, s2 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceVectors {
    pub s1: Array1<Complex64>,
    pub s2: Array1<Complex64>,
}

impl SourceVectors {
    pub fn zeros(n: usize) -> Self {
        SourceVectors {
            s1: Array1::zeros(n),
            s2: Array1::zeros(n),
        }
    }
}

/// The full affine DtN relation of one segment.
#[derive(Debug, Clone)]
pub struct DtnMap {
    pub segment: Arc<SegmentMap>,
    pub source: Arc<SourceVectors>,
}

impl DtnMap {
    pub fn m11(&self) -> &Array2<Complex64> {
        &self.segment.blocks.m11
    }
    pub fn m12(&self) -> &Array2<Complex64> {
        &self.segment.blocks.m12
    }
    pub fn m21(&self) -> &Array2<Complex64> {
        &self.segment.blocks.m21
    }
    pub fn m22(&self) -> &Array2<Complex64> {
        &self.segment.blocks.m22
    }
    pub fn s1(&self) -> &Array1<Complex64> {
        &self.source.s1
    }
    pub fn s2(&self) -> &Array1<Complex64> {
        &self.source.s2
    }
}

/// Uncached construction of a segment's map; `f_samples = None` means f ≡ 0.
pub fn compute_dtn_map(
    scheme: CompactScheme,
    l: &TransverseOperator,
    f_samples: Option<ArrayView2<Complex64>>,
) -> Result<DtnMap> {
    let segment = SegmentMap::build(scheme, l)?;
    let source = match f_samples {
        Some(f) => segment.source_vectors(l, f)?,
        None => SourceVectors::zeros(l.dim()),
    };
    Ok(DtnMap {
        segment: Arc::new(segment),
        source: Arc::new(source),
    })
}
