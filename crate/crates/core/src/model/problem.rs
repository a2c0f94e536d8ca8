use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::grid::TransverseGrid;
use super::source::{sample_source, SourceTerm};
use crate::error::{Error, Result};
use crate::transverse::PmlSpec;

/// Either representation of the excitation frequency; lengths are in µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Wavelength(f64),
    Wavenumber(f64),
}

impl Frequency {
    pub fn k0(&self) -> f64 {
        match *self {
            Frequency::Wavelength(l) => 2.0 * PI / l,
            Frequency::Wavenumber(k) => k,
        }
    }

    pub fn wavelength(&self) -> f64 {
        match *self {
            Frequency::Wavelength(l) => l,
            Frequency::Wavenumber(k) => 2.0 * PI / k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexInterval {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n: f64,
}

/// Piecewise-constant refractive index n(x) across (−D, D).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexProfile {
    pub id: String,
    pub intervals: Vec<IndexInterval>,
}

const COVER_TOL: f64 = 1e-12;

impl IndexProfile {
    pub fn uniform(id: impl Into<String>, half_width: f64, n: f64) -> Self {
        IndexProfile {
            id: id.into(),
            intervals: vec![IndexInterval {
                x_lo: -half_width,
                x_hi: half_width,
                n,
            }],
        }
    }

    /// Index at `x`; intervals are half-open `[x_lo, x_hi)` except the last.
    pub fn index_at(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .find(|iv| x >= iv.x_lo && x < iv.x_hi)
            .or_else(|| self.intervals.last())
            .map_or(1.0, |iv| iv.n)
    }

    fn validate(&self, half_width: f64) -> Result<()> {
        let ivs = &self.intervals;
        let bad = |msg: String| Err(Error::Validation(format!("profile `{}`: {msg}", self.id)));
        if ivs.is_empty() {
            return bad("no intervals".into());
        }
        for (i, iv) in ivs.iter().enumerate() {
            if !(iv.n > 0.0 && iv.n.is_finite()) {
                return bad(format!("interval {i} has non-positive index {}", iv.n));
            }
            if !(iv.x_hi > iv.x_lo) {
                return bad(format!("interval {i} is empty ({}, {})", iv.x_lo, iv.x_hi));
            }
            if i > 0 && (iv.x_lo - ivs[i - 1].x_hi).abs() > COVER_TOL {
                return bad(format!(
                    "gap or overlap between intervals {} and {i} at x = {}",
                    i - 1,
                    iv.x_lo
                ));
            }
        }
        if ivs[0].x_lo > -half_width + COVER_TOL || ivs[ivs.len() - 1].x_hi < half_width - COVER_TOL
        {
            return bad(format!(
                "intervals do not cover [-{half_width}, {half_width}]"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedSource {
    pub id: String,
    pub term: SourceTerm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Index into `WaveguideProblem::profiles`.
    pub profile: usize,
    pub length: f64,
    /// Number of z-subintervals; the z-step is `length / q`.
    pub q: usize,
    /// Index into `WaveguideProblem::sources`.
    pub source: Option<usize>,
}

impl Segment {
    pub fn step(&self) -> f64 {
        self.length / self.q as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentSpec {
    /// Lead mode index, 0 being the fundamental.
    pub mode: usize,
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideProblem {
    pub half_width: f64,
    pub n_points: usize,
    pub pml: Option<PmlSpec>,
    pub frequency: Frequency,
    pub profiles: Vec<IndexProfile>,
    pub segments: Vec<Segment>,
    pub left_lead: usize,
    pub right_lead: usize,
    pub incident: Option<IncidentSpec>,
    pub sources: Vec<NamedSource>,
}

/// Smallest z-subinterval count accepted per segment.
pub const MIN_Q: usize = 3;

impl WaveguideProblem {
    pub fn k0(&self) -> f64 {
        self.frequency.k0()
    }

    pub fn wavelength(&self) -> f64 {
        self.frequency.wavelength()
    }

    /// Same geometry at another vacuum wavelength.
    pub fn with_wavelength(&self, wavelength: f64) -> Self {
        WaveguideProblem {
            frequency: Frequency::Wavelength(wavelength),
            ..self.clone()
        }
    }

    pub fn without_sources(&self) -> Self {
        let mut p = self.clone();
        for s in &mut p.segments {
            s.source = None;
        }
        p
    }

    pub fn without_incident(&self) -> Self {
        WaveguideProblem {
            incident: None,
            ..self.clone()
        }
    }

    pub fn build_grid(&self) -> Result<TransverseGrid> {
        TransverseGrid::new(self.half_width, self.n_points, self.pml)
    }

    /// Interface positions z₀ = 0 < z₁ < … < z_m from cumulative lengths.
    pub fn interfaces(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.segments.len() + 1);
        let mut acc = 0.0;
        z.push(acc);
        for s in &self.segments {
            acc += s.length;
            z.push(acc);
        }
        z
    }

    pub fn profile_id(&self, segment: usize) -> &str {
        &self.profiles[self.segments[segment].profile].id
    }

    pub fn source_term(&self, segment: usize) -> Option<&SourceTerm> {
        self.segments[segment].source.map(|i| &self.sources[i].term)
    }

    pub fn has_excitation(&self) -> bool {
        self.incident
            .is_some_and(|inc| inc.amplitude != Complex64::new(0.0, 0.0))
            || self.segments.iter().any(|s| s.source.is_some())
    }

    /// f on the grid of segment `j`, see [`sample_source`].
    pub fn sample_source(&self, segment: usize, grid: &TransverseGrid) -> Array2<Complex64> {
        let seg = &self.segments[segment];
        let z_offset = self.interfaces()[segment];
        sample_source(self.source_term(segment), seg.length, seg.q, grid, z_offset)
    }

    /// Checks every invariant of the problem description.
    ///
    /// A problem without any excitation is accepted; its solution is zero.
    pub fn validate(&self) -> Result<()> {
        let grid = self.build_grid()?;
        let k0 = self.k0();
        if !(k0 > 0.0 && k0.is_finite()) {
            return Err(Error::Validation(format!("k0 must be positive, got {k0}")));
        }
        for p in &self.profiles {
            p.validate(grid.half_width)?;
        }
        for (i, a) in self.profiles.iter().enumerate() {
            if self.profiles[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::Validation(format!(
                    "duplicate profile id `{}`",
                    a.id
                )));
            }
        }
        for (i, a) in self.sources.iter().enumerate() {
            if self.sources[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::Validation(format!("duplicate source id `{}`", a.id)));
            }
        }
        if self.segments.is_empty() {
            return Err(Error::Validation("at least one segment is required".into()));
        }
        for (j, s) in self.segments.iter().enumerate() {
            if s.profile >= self.profiles.len() {
                return Err(Error::Validation(format!("segment {j}: unknown profile")));
            }
            if !(s.length > 0.0 && s.length.is_finite()) {
                return Err(Error::Validation(format!(
                    "segment {j}: length must be positive, got {}",
                    s.length
                )));
            }
            if s.q < MIN_Q {
                return Err(Error::Validation(format!(
                    "segment {j}: q must be at least {MIN_Q}, got {}",
                    s.q
                )));
            }
            if s.source.is_some_and(|i| i >= self.sources.len()) {
                return Err(Error::Validation(format!("segment {j}: unknown source")));
            }
        }
        let z = self.interfaces();
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(
                "segment interfaces are not strictly increasing".into(),
            ));
        }
        if self.left_lead >= self.profiles.len() || self.right_lead >= self.profiles.len() {
            return Err(Error::Validation("unknown lead profile".into()));
        }
        if let Some(inc) = &self.incident {
            if inc.mode >= self.n_points {
                return Err(Error::Validation(format!(
                    "incident.mode {} exceeds the {} transverse modes",
                    inc.mode, self.n_points
                )));
            }
            if !(inc.amplitude.re.is_finite() && inc.amplitude.im.is_finite()) {
                return Err(Error::Validation("incident.amplitude is not finite".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn uniform_problem() -> WaveguideProblem {
        WaveguideProblem {
            half_width: 1.0,
            n_points: 5,
            pml: None,
            frequency: Frequency::Wavelength(1.0),
            profiles: vec![IndexProfile::uniform("core", 1.0, 1.0)],
            segments: vec![Segment {
                profile: 0,
                length: 1.0,
                q: 4,
                source: None,
            }],
            left_lead: 0,
            right_lead: 0,
            incident: Some(IncidentSpec {
                mode: 0,
                amplitude: Complex64::new(1.0, 0.0),
            }),
            sources: vec![],
        }
    }

    #[test]
    fn minimal_problem_validates() {
        let p = uniform_problem();
        p.validate().unwrap();
        assert_eq!(p.interfaces(), vec![0.0, 1.0]);
        assert!(p.has_excitation());
    }

    #[test]
    fn degenerate_segments_are_rejected() {
        let mut p = uniform_problem();
        p.segments[0].length = 0.0;
        assert!(matches!(p.validate(), Err(Error::Validation(_))));
        let mut p = uniform_problem();
        p.segments[0].q = 2;
        assert!(p.validate().is_err());
        let mut p = uniform_problem();
        p.segments.clear();
        assert!(p.validate().is_err());
    }

    #[test]
    fn profile_gaps_are_rejected() {
        let mut p = uniform_problem();
        p.profiles[0].intervals = vec![
            IndexInterval {
                x_lo: -1.0,
                x_hi: 0.0,
                n: 1.0,
            },
            IndexInterval {
                x_lo: 0.1,
                x_hi: 1.0,
                n: 1.5,
            },
        ];
        assert!(p.validate().is_err());
        p.profiles[0].intervals[1].x_lo = 0.0;
        p.validate().unwrap();
        assert_eq!(p.profiles[0].index_at(0.0), 1.5);
        assert_eq!(p.profiles[0].index_at(-0.5), 1.0);
        assert_eq!(p.profiles[0].index_at(1.0), 1.5);
    }

    #[test]
    fn interfaces_accumulate_lengths() {
        let mut p = uniform_problem();
        p.segments = (0..41)
            .map(|_| Segment {
                profile: 0,
                length: 0.215,
                q: 4,
                source: None,
            })
            .collect();
        let z = p.interfaces();
        assert_eq!(z.len(), 42);
        assert!(z.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(z, p.interfaces());
    }
}
