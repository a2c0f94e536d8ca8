//! Problem description: geometry, index profiles, sources, excitation and the
//! transverse grid, plus the JSON configuration format.

pub mod config;
pub mod grid;
pub mod problem;
pub mod source;

pub use config::{parse_problem, serialize_problem, ProblemConfig};
pub use grid::{GridKey, TransverseGrid};
pub use problem::{
    Frequency, IncidentSpec, IndexInterval, IndexProfile, NamedSource, Segment, WaveguideProblem,
    MIN_Q,
};
pub use source::{sample_source, SourceTerm, ZFrame};
