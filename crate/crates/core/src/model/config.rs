//! JSON configuration document: parsing, validation and serialization.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::problem::{
    Frequency, IncidentSpec, IndexInterval, IndexProfile, NamedSource, Segment, WaveguideProblem,
};
use super::source::{SourceTerm, ZFrame};
use crate::error::{Error, Result};
use crate::transverse::PmlSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    pub profiles: Vec<ProfileConfig>,
    pub segments: Vec<SegmentConfig>,
    pub leads: LeadsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident: Option<IncidentConfig>,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub half_width: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pml: Option<PmlConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmlConfig {
    pub thickness: f64,
    pub sigma_max: f64,
    pub order: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub id: String,
    pub intervals: Vec<IntervalConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub profile: String,
    pub length: f64,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadsConfig {
    pub left_profile: String,
    pub right_profile: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentConfig {
    pub mode: usize,
    pub amplitude: ComplexValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// A complex number written as `1.5`, `[re, im]` or `{"re": .., "im": ..}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
    Parts { re: f64, im: f64 },
}

impl From<ComplexValue> for Complex64 {
    fn from(v: ComplexValue) -> Self {
        match v {
            ComplexValue::Real(r) => Complex64::new(r, 0.0),
            ComplexValue::Pair([re, im]) | ComplexValue::Parts { re, im } => Complex64::new(re, im),
        }
    }
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        ComplexValue::Pair([z.re, z.im])
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
enum FrameConfig {
    #[default]
    Local,
    Global,
}

impl From<FrameConfig> for ZFrame {
    fn from(f: FrameConfig) -> Self {
        match f {
            FrameConfig::Local => ZFrame::Local,
            FrameConfig::Global => ZFrame::Global,
        }
    }
}

impl From<ZFrame> for FrameConfig {
    fn from(f: ZFrame) -> Self {
        match f {
            ZFrame::Local => FrameConfig::Local,
            ZFrame::Global => FrameConfig::Global,
        }
    }
}

/// Period of the built-in separable source, the tooth width of the reference grating.
pub const DEFAULT_SOURCE_PERIOD: f64 = 0.215;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CosSinParams {
    #[serde(default)]
    amplitude: Option<ComplexValue>,
    #[serde(default)]
    period: Option<f64>,
    #[serde(default)]
    frame: FrameConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedParams {
    x: Vec<f64>,
    z: Vec<f64>,
    re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    frame: FrameConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SumParams {
    terms: Vec<String>,
}

fn from_value_at<T: DeserializeOwned>(value: &serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{path}")
        };
        Error::config(field, e.into_inner())
    })
}

/// Parses and validates a JSON configuration document.
pub fn parse_problem(text: &str) -> Result<WaveguideProblem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(
            if path.is_empty() { ".".into() } else { path },
            e.into_inner(),
        )
    })?;
    config.into_problem()
}

/// Serializes a problem back into the configuration document format.
pub fn serialize_problem(problem: &WaveguideProblem) -> Result<String> {
    let config = ProblemConfig::from_problem(problem)?;
    serde_json::to_string_pretty(&config).map_err(|e| Error::config(".", e))
}

impl ProblemConfig {
    pub fn into_problem(self) -> Result<WaveguideProblem> {
        let frequency = match (self.wavelength, self.k0) {
            (Some(l), None) => {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::config(
                        "wavelength",
                        format!("must be positive, got {l}"),
                    ));
                }
                Frequency::Wavelength(l)
            }
            (None, Some(k)) => {
                if !(k > 0.0 && k.is_finite()) {
                    return Err(Error::config("k0", format!("must be positive, got {k}")));
                }
                Frequency::Wavenumber(k)
            }
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "wavelength",
                    "give either `wavelength` or `k0`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config("wavelength", "missing `wavelength` or `k0`"))
            }
        };

        let pml = self.domain.pml.map(|p| PmlSpec {
            thickness: p.thickness,
            sigma_max: p.sigma_max,
            order: p.order,
        });

        let profiles: Vec<IndexProfile> = self
            .profiles
            .into_iter()
            .map(|p| IndexProfile {
                id: p.id,
                intervals: p
                    .intervals
                    .into_iter()
                    .map(|iv| IndexInterval {
                        x_lo: iv.x_lo,
                        x_hi: iv.x_hi,
                        n: iv.n,
                    })
                    .collect(),
            })
            .collect();
        let profile_index: HashMap<&str, usize> = profiles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect();
        let lookup_profile = |id: &str, field: String| {
            profile_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::config(field, format!("unknown profile `{id}`")))
        };

        let sources = resolve_sources(&self.sources)?;
        let source_index: HashMap<&str, usize> = sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();

        let mut segments = Vec::with_capacity(self.segments.len());
        for (j, s) in self.segments.iter().enumerate() {
            let profile = lookup_profile(&s.profile, format!("segments[{j}].profile"))?;
            let source = match &s.source {
                None => None,
                Some(id) => Some(source_index.get(id.as_str()).copied().ok_or_else(|| {
                    Error::config(
                        format!("segments[{j}].source"),
                        format!("unknown source `{id}`"),
                    )
                })?),
            };
            segments.push(Segment {
                profile,
                length: s.length,
                q: s.q,
                source,
            });
        }

        let left_lead = lookup_profile(&self.leads.left_profile, "leads.left_profile".into())?;
        let right_lead = lookup_profile(&self.leads.right_profile, "leads.right_profile".into())?;

        let problem = WaveguideProblem {
            half_width: self.domain.half_width,
            n_points: self.domain.n,
            pml,
            frequency,
            profiles,
            segments,
            left_lead,
            right_lead,
            incident: self.incident.map(|inc| IncidentSpec {
                mode: inc.mode,
                amplitude: inc.amplitude.into(),
            }),
            sources,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn from_problem(p: &WaveguideProblem) -> Result<Self> {
        let (wavelength, k0) = match p.frequency {
            Frequency::Wavelength(l) => (Some(l), None),
            Frequency::Wavenumber(k) => (None, Some(k)),
        };
        let sources = p
            .sources
            .iter()
            .map(source_to_config)
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemConfig {
            domain: DomainConfig {
                half_width: p.half_width,
                n: p.n_points,
                pml: p.pml.map(|m| PmlConfig {
                    thickness: m.thickness,
                    sigma_max: m.sigma_max,
                    order: m.order,
                }),
            },
            wavelength,
            k0,
            profiles: p
                .profiles
                .iter()
                .map(|pr| ProfileConfig {
                    id: pr.id.clone(),
                    intervals: pr
                        .intervals
                        .iter()
                        .map(|iv| IntervalConfig {
                            x_lo: iv.x_lo,
                            x_hi: iv.x_hi,
                            n: iv.n,
                        })
                        .collect(),
                })
                .collect(),
            segments: p
                .segments
                .iter()
                .map(|s| SegmentConfig {
                    profile: p.profiles[s.profile].id.clone(),
                    length: s.length,
                    q: s.q,
                    source: s.source.map(|i| p.sources[i].id.clone()),
                })
                .collect(),
            leads: LeadsConfig {
                left_profile: p.profiles[p.left_lead].id.clone(),
                right_profile: p.profiles[p.right_lead].id.clone(),
            },
            incident: p.incident.map(|inc| IncidentConfig {
                mode: inc.mode,
                amplitude: inc.amplitude.into(),
            }),
            sources,
        })
    }
}

fn source_to_config(s: &NamedSource) -> Result<SourceConfig> {
    let (kind, params) = match &s.term {
        SourceTerm::Separable {
            amplitude,
            period,
            frame,
        } => (
            "cos_sin",
            serde_json::to_value(CosSinParams {
                amplitude: Some((*amplitude).into()),
                period: Some(*period),
                frame: (*frame).into(),
            }),
        ),
        SourceTerm::Tabulated {
            x,
            z,
            values,
            frame,
        } => (
            "tabulated",
            serde_json::to_value(TabulatedParams {
                x: x.clone(),
                z: z.clone(),
                re: values
                    .iter()
                    .map(|r| r.iter().map(|v| v.re).collect())
                    .collect(),
                im: Some(
                    values
                        .iter()
                        .map(|r| r.iter().map(|v| v.im).collect())
                        .collect(),
                ),
                frame: (*frame).into(),
            }),
        ),
        SourceTerm::Sum { ids, .. } => (
            "sum",
            serde_json::to_value(SumParams { terms: ids.clone() }),
        ),
        SourceTerm::Custom { .. } => {
            return Err(Error::config(
                format!("sources.{}", s.id),
                "programmatic sources cannot be serialized",
            ))
        }
    };
    Ok(SourceConfig {
        id: s.id.clone(),
        kind: kind.to_string(),
        params: params.map_err(|e| Error::config(format!("sources.{}", s.id), e))?,
    })
}

fn resolve_sources(configs: &[SourceConfig]) -> Result<Vec<NamedSource>> {
    let index: HashMap<&str, usize> = configs
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut resolved: Vec<Option<SourceTerm>> = vec![None; configs.len()];
    for i in 0..configs.len() {
        let mut stack = Vec::new();
        resolve_one(i, configs, &index, &mut resolved, &mut stack)?;
    }
    Ok(configs
        .iter()
        .zip(resolved)
        .map(|(c, t)| NamedSource {
            id: c.id.clone(),
            term: t.expect("every source resolved"),
        })
        .collect())
}

fn resolve_one(
    i: usize,
    configs: &[SourceConfig],
    index: &HashMap<&str, usize>,
    resolved: &mut Vec<Option<SourceTerm>>,
    stack: &mut Vec<usize>,
) -> Result<SourceTerm> {
    if let Some(t) = &resolved[i] {
        return Ok(t.clone());
    }
    let field = format!("sources[{i}].params");
    if stack.contains(&i) {
        return Err(Error::config(
            field,
            format!("source `{}` refers to itself", configs[i].id),
        ));
    }
    stack.push(i);
    let cfg = &configs[i];
    let params = if cfg.params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        cfg.params.clone()
    };
    let term = match cfg.kind.as_str() {
        "cos_sin" => {
            let p: CosSinParams = from_value_at(&params, &field)?;
            let period = p.period.unwrap_or(DEFAULT_SOURCE_PERIOD);
            if !(period > 0.0 && period.is_finite()) {
                return Err(Error::config(format!("{field}.period"), "must be positive"));
            }
            SourceTerm::Separable {
                amplitude: p.amplitude.map_or(Complex64::new(1.0, 0.0), Into::into),
                period,
                frame: p.frame.into(),
            }
        }
        "tabulated" => {
            let p: TabulatedParams = from_value_at(&params, &field)?;
            let sorted = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[1] > w[0]);
            if !sorted(&p.x) || !sorted(&p.z) {
                return Err(Error::config(
                    field,
                    "x and z must be non-empty and strictly increasing",
                ));
            }
            let shape_ok =
                |t: &Vec<Vec<f64>>| t.len() == p.x.len() && t.iter().all(|r| r.len() == p.z.len());
            if !shape_ok(&p.re) || p.im.as_ref().is_some_and(|im| !shape_ok(im)) {
                return Err(Error::config(
                    field,
                    "value table must be len(x) rows of len(z) entries",
                ));
            }
            let values =
                p.re.iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(k, &re)| {
                                Complex64::new(re, p.im.as_ref().map_or(0.0, |im| im[i][k]))
                            })
                            .collect()
                    })
                    .collect();
            SourceTerm::Tabulated {
                x: p.x,
                z: p.z,
                values,
                frame: p.frame.into(),
            }
        }
        "sum" => {
            let p: SumParams = from_value_at(&params, &field)?;
            let mut terms = Vec::with_capacity(p.terms.len());
            for id in &p.terms {
                let j = *index.get(id.as_str()).ok_or_else(|| {
                    Error::config(format!("{field}.terms"), format!("unknown source `{id}`"))
                })?;
                terms.push(resolve_one(j, configs, index, resolved, stack)?);
            }
            SourceTerm::Sum {
                ids: p.terms,
                terms,
            }
        }
        other => {
            return Err(Error::config(
                format!("sources[{i}].kind"),
                format!("unknown source kind `{other}` (expected cos_sin, tabulated or sum)"),
            ))
        }
    };
    stack.pop();
    resolved[i] = Some(term.clone());
    Ok(term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "domain": {"half_width": 1.0, "N": 8},
        "wavelength": 1.0,
        "profiles": [{"id": "air", "intervals": [{"x_lo": -1.0, "x_hi": 1.0, "n": 1.0}]}],
        "segments": [{"profile": "air", "length": 1.0, "q": 8}],
        "leads": {"left_profile": "air", "right_profile": "air"},
        "incident": {"mode": 0, "amplitude": 1.0}
    }"#;

    #[test]
    fn minimal_document_parses() {
        let p = parse_problem(MINIMAL).unwrap();
        assert_eq!(p.segments.len(), 1);
        assert_eq!(p.incident.unwrap().amplitude, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let text = MINIMAL.replace("\"q\": 8", "\"q\": 8, \"colour\": 3");
        match parse_problem(&text) {
            Err(Error::Config { field, .. }) => assert!(field.contains("segments[0]"), "{field}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_length_segment_fails_validation() {
        let text = MINIMAL.replace("\"length\": 1.0", "\"length\": 0.0");
        assert!(matches!(parse_problem(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_profile_reference_names_the_field() {
        let text = MINIMAL.replace("\"profile\": \"air\"", "\"profile\": \"glass\"");
        match parse_problem(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "segments[0].profile"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn source_kinds_and_cycles() {
        let base = MINIMAL.replace(
            "\"incident\"",
            r#""sources": [
                {"id": "a", "kind": "cos_sin", "params": {"amplitude": [0.0, 2.0]}},
                {"id": "b", "kind": "sum", "params": {"terms": ["a", "a"]}}
            ], "incident""#,
        );
        let p = parse_problem(&base).unwrap();
        assert!(matches!(p.sources[1].term, SourceTerm::Sum { .. }));

        let cyclic = base.replace("[\"a\", \"a\"]", "[\"b\"]");
        assert!(matches!(parse_problem(&cyclic), Err(Error::Config { .. })));

        let bad_kind = base.replace("\"sum\"", "\"expr\"");
        match parse_problem(&bad_kind) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sources[1].kind"),
            other => panic!("unexpected {other:?}"),
        }

        let bad_param = base.replace("\"amplitude\": [0.0, 2.0]", "\"amp\": 1");
        match parse_problem(&bad_param) {
            Err(Error::Config { field, .. }) => {
                assert!(field.starts_with("sources[0].params"), "{field}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wavelength_and_k0_are_exclusive() {
        let text = MINIMAL.replace("\"wavelength\": 1.0", "\"wavelength\": 1.0, \"k0\": 3.0");
        assert!(parse_problem(&text).is_err());
        let text = MINIMAL.replace("\"wavelength\": 1.0", "\"k0\": 3.0");
        assert_eq!(parse_problem(&text).unwrap().k0(), 3.0);
    }

    proptest! {
        #[test]
        fn serialize_then_parse_round_trips(
            d in 0.5f64..3.0, n in 3usize..40, lam in 0.8f64..2.0,
            lens in proptest::collection::vec((0.01f64..1.0, 3usize..12, proptest::bool::ANY), 1..6),
            amp_re in -2.0f64..2.0, amp_im in -2.0f64..2.0, period in 0.1f64..1.0,
            core in 1.0f64..4.0, frac in 0.1f64..0.9,
        ) {
            let split = -d + 2.0 * d * frac;
            let profiles = vec![
                IndexProfile::uniform("clad", d, 1.0),
                IndexProfile { id: "guide".into(), intervals: vec![
                    IndexInterval { x_lo: -d, x_hi: split, n: core },
                    IndexInterval { x_lo: split, x_hi: d, n: 1.0 },
                ]},
            ];
            let sources = vec![NamedSource { id: "s".into(), term: SourceTerm::Separable {
                amplitude: Complex64::new(amp_re, amp_im), period, frame: ZFrame::Global } }];
            let segments = lens.iter().enumerate().map(|(j, &(len, q, src))| Segment {
                profile: j % 2, length: len, q, source: src.then_some(0) }).collect();
            let p = WaveguideProblem {
                half_width: d, n_points: n,
                pml: Some(PmlSpec { thickness: 0.25 * d, sigma_max: 2.0, order: 2 }),
                frequency: Frequency::Wavelength(lam), profiles, segments,
                left_lead: 1, right_lead: 0,
                incident: Some(IncidentSpec { mode: 0, amplitude: Complex64::new(amp_im, amp_re) }),
                sources,
            };
            p.validate().unwrap();
            let text = serialize_problem(&p).unwrap();
            let back = parse_problem(&text).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
