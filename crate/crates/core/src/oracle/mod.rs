//! Direct solve of the whole discretized boundary-value problem.
//!
//! Every z-plane of every segment is an unknown block; interface planes are
//! shared. Interior rows are the compact fourth-order relation of their
//! segment, interface rows equate the one-sided derivative stencils of the
//! two neighbouring segments, and the two end rows impose the radiation
//! conditions. The marcher discretizes exactly the same equations, so the
//! two answers agree to roundoff.

pub mod band;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{identity, I};
use crate::march::{assemble_operators, build_leads, finish_result, Diagnostics, SolveResult};
use crate::model::WaveguideProblem;
use band::BandMatrix;

/// Default limit on the number of unknowns.
pub const DEFAULT_MAX_UNKNOWNS: usize = 200_000;
/// Default limit on band storage (complex entries, 16 bytes each).
pub const DEFAULT_MAX_BAND_ENTRIES: usize = 40_000_000;
/// Largest accepted normwise backward error of the returned solution.
pub const MAX_BACKWARD_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub max_unknowns: usize,
    pub max_band_entries: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_unknowns: DEFAULT_MAX_UNKNOWNS,
            max_band_entries: DEFAULT_MAX_BAND_ENTRIES,
        }
    }
}

/// Size of the global system of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemSize {
    pub planes: usize,
    pub unknowns: usize,
    pub half_bandwidth: usize,
    pub band_entries: usize,
}

pub fn system_size(problem: &WaveguideProblem) -> SystemSize {
    let n = problem.n_points;
    let planes = problem.segments.iter().map(|s| s.q).sum::<usize>() + 1;
    let unknowns = planes * n;
    let half_bandwidth = 3 * n;
    SystemSize {
        planes,
        unknowns,
        half_bandwidth,
        band_entries: BandMatrix::storage(unknowns, half_bandwidth, half_bandwidth),
    }
}

pub fn direct_solve(problem: &WaveguideProblem) -> Result<SolveResult> {
    direct_solve_with(problem, OracleOptions::default())
}

pub fn direct_solve_with(
    problem: &WaveguideProblem,
    options: OracleOptions,
) -> Result<SolveResult> {
    problem.validate()?;
    let size = system_size(problem);
    if size.unknowns > options.max_unknowns || size.band_entries > options.max_band_entries {
        return Err(Error::OracleCap {
            unknowns: size.unknowns,
            band_entries: size.band_entries,
            cap: options.max_unknowns,
        });
    }
    let grid = problem.build_grid()?;
    let n = grid.n;
    let mut diagnostics = Diagnostics::default();
    let ops = assemble_operators(problem, &grid);
    let leads = build_leads(problem, &ops, &mut diagnostics.warnings)?;

    let m = problem.segments.len();
    let eye = identity(n);
    let mut a = BandMatrix::zeros(size.unknowns, size.half_bandwidth, size.half_bandwidth);
    let mut rhs = vec![Complex64::new(0.0, 0.0); size.unknowns];

    let add_block =
        |a: &mut BandMatrix, row_plane: usize, col_plane: usize, block: &Array2<Complex64>| {
            for ((i, j), v) in block.indexed_iter() {
                if *v != Complex64::new(0.0, 0.0) {
                    a.add(row_plane * n + i, col_plane * n + j, *v);
                }
            }
        };
    let add_rhs = |rhs: &mut [Complex64], plane: usize, v: &Array1<Complex64>| {
        for (i, x) in v.iter().enumerate() {
            rhs[plane * n + i] += *x;
        }
    };

    // one-sided derivative stencils as (plane offset, block) lists plus the f part
    struct Stencil {
        blocks: Vec<(usize, Array2<Complex64>)>,
        forcing: Array1<Complex64>,
    }
    let mut samples = Vec::with_capacity(m);
    let mut offsets = Vec::with_capacity(m + 1);
    let mut offset = 0;
    for j in 0..m {
        offsets.push(offset);
        offset += problem.segments[j].q;
        samples.push(
            problem.segments[j]
                .source
                .as_ref()
                .map(|_| problem.sample_source(j, &grid)),
        );
    }
    offsets.push(offset);
    let f_col = |j: usize, k: usize| -> Array1<Complex64> {
        match &samples[j] {
            Some(f) => f.column(k).to_owned(),
            None => Array1::zeros(n),
        }
    };

    let left_stencil = |j: usize| -> Stencil {
        let seg = &problem.segments[j];
        let h = seg.step();
        let l = ops[seg.profile].as_ref().expect("operator").matrix();
        let o = offsets[j];
        // (u₂ − u₀)/2h − (h/3)[u''₀ + 2u''₁], u'' = −Lu + f
        Stencil {
            blocks: vec![
                (o, l.mapv(|v| v * (h / 3.0)) - eye.mapv(|v| v / (2.0 * h))),
                (o + 1, l.mapv(|v| v * (2.0 * h / 3.0))),
                (o + 2, eye.mapv(|v| v / (2.0 * h))),
            ],
            forcing: (f_col(j, 0) + f_col(j, 1) * 2.0) * (-h / 3.0),
        }
    };
    let right_stencil = |j: usize| -> Stencil {
        let seg = &problem.segments[j];
        let (h, q) = (seg.step(), seg.q);
        let l = ops[seg.profile].as_ref().expect("operator").matrix();
        let o = offsets[j];
        // (u_q − u_{q−2})/2h + (h/3)[2u''_{q−1} + u''_q]
        Stencil {
            blocks: vec![
                (
                    o + q,
                    eye.mapv(|v| v / (2.0 * h)) - l.mapv(|v| v * (h / 3.0)),
                ),
                (o + q - 1, l.mapv(|v| v * (-2.0 * h / 3.0))),
                (o + q - 2, eye.mapv(|v| -v / (2.0 * h))),
            ],
            forcing: (f_col(j, q - 1) * 2.0 + f_col(j, q)) * (h / 3.0),
        }
    };

    // compact rows
    for (j, seg) in problem.segments.iter().enumerate() {
        let h2 = seg.step() * seg.step();
        let l = ops[seg.profile].as_ref().expect("operator").matrix();
        let side = eye.mapv(|v| v / h2) + l.mapv(|v| v / 12.0);
        let centre = eye.mapv(|v| -2.0 * v / h2) + l.mapv(|v| v * 10.0 / 12.0);
        for k in 1..seg.q {
            let p = offsets[j] + k;
            add_block(&mut a, p, p - 1, &side);
            add_block(&mut a, p, p, &centre);
            add_block(&mut a, p, p + 1, &side);
            if samples[j].is_some() {
                let f = (f_col(j, k - 1) + f_col(j, k) * 10.0 + f_col(j, k + 1)) / 12.0;
                add_rhs(&mut rhs, p, &f);
            }
        }
    }

    // interface rows: right stencil of segment j−1 minus left stencil of segment j
    for j in 1..m {
        let p = offsets[j];
        let (r, l) = (right_stencil(j - 1), left_stencil(j));
        for (plane, block) in &r.blocks {
            add_block(&mut a, p, *plane, block);
        }
        for (plane, block) in &l.blocks {
            add_block(&mut a, p, *plane, &block.mapv(|v| -v));
        }
        add_rhs(&mut rhs, p, &(&l.forcing - &r.forcing));
    }

    // ∂u + i√L u = 2i√L u⁺ at z₀
    let root_left = leads.left.sqrt()?.mapv(|v| v * I);
    let l0 = left_stencil(0);
    for (plane, block) in &l0.blocks {
        add_block(&mut a, 0, *plane, block);
    }
    add_block(&mut a, 0, 0, &root_left);
    add_rhs(
        &mut rhs,
        0,
        &(root_left.dot(&leads.incident) * 2.0 - &l0.forcing),
    );

    // ∂u − i√L u = 0 at z_m
    let root_right = leads.right.sqrt()?.mapv(|v| -v * I);
    let last = offsets[m];
    let rm = right_stencil(m - 1);
    for (plane, block) in &rm.blocks {
        add_block(&mut a, last, *plane, block);
    }
    add_block(&mut a, last, last, &root_right);
    add_rhs(&mut rhs, last, &rm.forcing.mapv(|v| -v));

    let norm_a = a.norm_inf();
    let x = a.clone().factorize()?.solve(&rhs);
    let residual = a.matvec(&x);
    let r_inf = residual
        .iter()
        .zip(&rhs)
        .map(|(ax, b)| (ax - b).norm())
        .fold(0.0, f64::max);
    let x_inf = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let b_inf = rhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let denom = norm_a * x_inf + b_inf;
    let backward = if denom == 0.0 { r_inf } else { r_inf / denom };
    if !backward.is_finite() || backward > MAX_BACKWARD_ERROR {
        return Err(Error::numerical(
            "global solve",
            format!("backward error {backward:.3e} exceeds {MAX_BACKWARD_ERROR:.0e}"),
        ));
    }

    let plane = |p: usize| Array1::from(x[p * n..(p + 1) * n].to_vec());
    let apply = |s: &Stencil| {
        s.blocks.iter().fold(s.forcing.clone(), |acc, (p, block)| {
            acc + block.dot(&plane(*p))
        })
    };
    let u: Vec<Array1<Complex64>> = offsets.iter().map(|&p| plane(p)).collect();
    let mut du = Vec::with_capacity(m + 1);
    du.push(apply(&left_stencil(0)));
    for j in 0..m {
        du.push(apply(&right_stencil(j)));
    }
    Ok(finish_result(problem, &grid, &leads, u, du, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::march::solve;
    use crate::model::{
        Frequency, IncidentSpec, IndexInterval, IndexProfile, NamedSource, Segment, SourceTerm,
    };
    use crate::transverse::{assemble_l, lead_modes, PmlSpec};
    use std::f64::consts::PI;

    fn slab(id: &str, core: f64) -> IndexProfile {
        IndexProfile {
            id: id.into(),
            intervals: vec![
                IndexInterval {
                    x_lo: -1.0,
                    x_hi: -0.25,
                    n: 1.0,
                },
                IndexInterval {
                    x_lo: -0.25,
                    x_hi: 0.25,
                    n: core,
                },
                IndexInterval {
                    x_lo: 0.25,
                    x_hi: 1.0,
                    n: 1.0,
                },
            ],
        }
    }

    fn grating(pml: Option<PmlSpec>, incident: bool, source: bool) -> WaveguideProblem {
        WaveguideProblem {
            half_width: 1.0,
            n_points: 16,
            pml,
            frequency: Frequency::Wavelength(1.1),
            profiles: vec![slab("a", 1.6), slab("b", 1.3)],
            segments: (0..5)
                .map(|j| Segment {
                    profile: j % 2,
                    length: 0.15 + 0.01 * j as f64,
                    q: 6 + j,
                    source: (source && j == 2).then_some(0),
                })
                .collect(),
            left_lead: 0,
            right_lead: 1,
            incident: incident.then_some(IncidentSpec {
                mode: 0,
                amplitude: Complex64::new(0.6, -0.8),
            }),
            sources: vec![NamedSource {
                id: "f".into(),
                term: SourceTerm::separable(Complex64::new(2.0, 0.0), 0.215),
            }],
        }
    }

    #[test]
    fn agrees_with_the_marcher() {
        let pml = Some(PmlSpec {
            thickness: 0.3,
            sigma_max: 4.0,
            order: 2,
        });
        for p in [
            grating(pml, true, true),
            grating(None, true, false),
            grating(pml, false, true),
        ] {
            let a = direct_solve(&p).unwrap();
            let b = solve(&p).unwrap();
            let d = a.max_interface_discrepancy(&b);
            assert!(d <= 1e-8, "{d}");
        }
    }

    #[test]
    fn zero_excitation_is_zero() {
        let r = direct_solve(&grating(None, false, false)).unwrap();
        assert!(r
            .u_at_interfaces
            .iter()
            .all(|u| u.iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn refuses_oversized_systems() {
        let p = grating(None, true, false);
        let size = system_size(&p);
        assert_eq!(size.planes, 6 + 7 + 8 + 9 + 10 + 1);
        let small = OracleOptions {
            max_unknowns: size.unknowns - 1,
            ..Default::default()
        };
        match direct_solve_with(&p, small) {
            Err(Error::OracleCap { unknowns, .. }) => assert_eq!(unknowns, size.unknowns),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manufactured_solution_converges_at_fourth_order() {
        // u = v(x) φ(z) with v a discrete lead mode, φ = e^{iβz} + ε sin²(πz/Z)
        let base = WaveguideProblem {
            segments: vec![],
            incident: Some(IncidentSpec {
                mode: 0,
                amplitude: Complex64::new(1.0, 0.0),
            }),
            profiles: vec![slab("a", 1.5)],
            right_lead: 0,
            ..grating(None, false, false)
        };
        let grid = base.build_grid().unwrap();
        let op = assemble_l(&base.profiles[0], &grid, base.k0());
        let modes = lead_modes(&op).unwrap();
        let lambda = modes.lambda[0].re;
        let beta = lambda.sqrt();
        let v: Vec<Complex64> = modes.mode(0).to_vec();
        let (total, eps) = (0.8, 0.7);
        let phi =
            |z: f64| Complex64::from_polar(1.0, beta * z) + eps * (PI * z / total).sin().powi(2);
        let hx = grid.hx;
        let vv = v.clone();
        let source = SourceTerm::custom(move |x, _z_local, z| {
            let i = ((x + 1.0) / hx).round() as usize - 1;
            let w = 2.0 * PI / total;
            let amp = eps * (0.5 * w * w * (w * z).cos() + lambda * (PI * z / total).sin().powi(2));
            vv[i] * amp
        });
        let mut errs = Vec::new();
        for q in [24, 48, 96] {
            let p = WaveguideProblem {
                segments: (0..2)
                    .map(|_| Segment {
                        profile: 0,
                        length: total / 2.0,
                        q,
                        source: Some(0),
                    })
                    .collect(),
                sources: vec![NamedSource {
                    id: "mms".into(),
                    term: source.clone(),
                }],
                ..base.clone()
            };
            let r = direct_solve(&p).unwrap();
            let err =
                r.z.iter()
                    .zip(&r.u_at_interfaces)
                    .map(|(&z, u)| {
                        u.iter()
                            .zip(&v)
                            .map(|(a, b)| (a - b * phi(z)).norm())
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max);
            errs.push(err);
            let marched = solve(&p).unwrap();
            assert!(r.max_interface_discrepancy(&marched) <= 1e-8);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((12.0..=20.0).contains(&ratio), "{errs:?}");
        }
    }
}
