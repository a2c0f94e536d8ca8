//! Coalescing cache of segment maps and source vectors.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use super::{SegmentMap, SourceVectors};
use crate::error::Result;
use crate::transverse::OperatorKey;

/// Everything the homogeneous map depends on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MapKey {
    pub operator: OperatorKey,
    pub length_bits: u64,
    pub q: usize,
}

/// The source part additionally depends on f and, for position-dependent
/// sources, on where the segment starts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceKey {
    pub map: MapKey,
    pub source_id: String,
    pub source_fingerprint: u64,
    pub z_offset_bits: Option<u64>,
}

type Slot<T> = Arc<OnceLock<Result<Arc<T>>>>;

/// At-most-once construction per key; concurrent requests for the same key
/// block on the first builder and share its result.
#[derive(Default)]
pub struct DtnCache {
    maps: Mutex<HashMap<MapKey, Slot<SegmentMap>>>,
    sources: Mutex<HashMap<SourceKey, Slot<SourceVectors>>>,
    maps_built: AtomicUsize,
    map_hits: AtomicUsize,
    sources_built: AtomicUsize,
    source_hits: AtomicUsize,
}

/// A cached value and whether this request constructed it.
pub struct Lookup<T> {
    pub value: Arc<T>,
    pub built: bool,
}

fn get_or_build<K: Eq + Hash + Clone, T>(
    table: &Mutex<HashMap<K, Slot<T>>>,
    key: &K,
    build: impl FnOnce() -> Result<T>,
) -> Result<Lookup<T>> {
    let slot = {
        let mut guard = table.lock().unwrap_or_else(|p| p.into_inner());
        guard.entry(key.clone()).or_default().clone()
    };
    let mut built = false;
    let result = slot.get_or_init(|| {
        built = true;
        build().map(Arc::new)
    });
    result.clone().map(|value| Lookup { value, built })
}

impl DtnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn segment_map(
        &self,
        key: &MapKey,
        build: impl FnOnce() -> Result<SegmentMap>,
    ) -> Result<Lookup<SegmentMap>> {
        let lookup = get_or_build(&self.maps, key, build)?;
        let counter = if lookup.built {
            &self.maps_built
        } else {
            &self.map_hits
        };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(lookup)
    }

    pub fn source_vectors(
        &self,
        key: &SourceKey,
        build: impl FnOnce() -> Result<SourceVectors>,
    ) -> Result<Lookup<SourceVectors>> {
        let lookup = get_or_build(&self.sources, key, build)?;
        let counter = if lookup.built {
            &self.sources_built
        } else {
            &self.source_hits
        };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(lookup)
    }

    /// Number of homogeneous maps constructed so far.
    pub fn maps_built(&self) -> usize {
        self.maps_built.load(Ordering::Relaxed)
    }

    pub fn map_hits(&self) -> usize {
        self.map_hits.load(Ordering::Relaxed)
    }

    pub fn sources_built(&self) -> usize {
        self.sources_built.load(Ordering::Relaxed)
    }

    pub fn source_hits(&self) -> usize {
        self.source_hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.maps.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
