//! Backward Riccati march over the interfaces, left closure and forward
//! recovery of the interface fields.
//!
//! With `∂u(z_j) = Q(z_j) u(z_j) + g(z_j)` and `u(z_m) = Y(z_j) u(z_j) + h(z_j)`
//! the segment map of `(z_{j−1}, z_j)` gives
//!
//! ```text
//! Q(z_{j−1}) = M11 + M12 (Q(z_j) − M22)⁻¹ M21
//! g(z_{j−1}) = s1 + M12 (Q(z_j) − M22)⁻¹ (s2 − g(z_j))
//! ```
//!
//! and the same factorization carries Y and h.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dtn::{build_scheme, DtnCache, DtnMap, MapKey, SegmentMap, SourceKey, SourceVectors};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, identity, max_abs, norm2, rel_diff_vec, Lu, I};
use crate::model::{TransverseGrid, WaveguideProblem};
use crate::transverse::{assemble_l, lead_modes, modal_flux, LeadModes, TransverseOperator};

/// Factorizations below this reciprocal condition are reported as warnings.
pub const WARN_RCOND: f64 = 1e-12;

/// Relative mismatch between the two recovery paths that triggers a warning.
pub const WARN_RECOVERY: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MarchState {
    pub interface: usize,
    pub q: Array2<Complex64>,
    pub y: Array2<Complex64>,
    pub g: Array1<Complex64>,
    pub h: Array1<Complex64>,
}

/// What the forward pass needs from one backward step:
/// `u(z_j) = (Q(z_j) − M22)⁻¹ (M21 u(z_{j−1}) + s2 − g(z_j))`.
pub struct InterfaceFactor {
    pub interface: usize,
    pub lu: Lu,
    pub m21: Array2<Complex64>,
    /// `s2 − g(z_j)`.
    pub offset: Array1<Complex64>,
}

pub fn init_state(l_right: &TransverseOperator, interface: usize) -> Result<MarchState> {
    let n = l_right.dim();
    let root = l_right.sqrt().map_err(|e| e.at("right lead square root"))?;
    Ok(MarchState {
        interface,
        q: root.mapv(|v| v * I),
        y: identity(n),
        g: Array1::zeros(n),
        h: Array1::zeros(n),
    })
}

/// One step of the recurrence across the segment ending at `state.interface`.
pub fn step_back(state: &MarchState, map: &DtnMap) -> Result<(MarchState, InterfaceFactor)> {
    let j = state.interface;
    if j == 0 {
        return Err(Error::numerical(
            "march",
            "cannot step back from the first interface",
        ));
    }
    let f = &state.q - map.m22();
    let context = format!("interface z_{j}: Q - M22 (physical resonance or grid degeneracy)");
    let lu = Lu::new(&f, &context)?;
    let x = lu.solve_mat(map.m21().view())?;
    let offset = map.s2() - &state.g;
    let y = lu.solve(offset.view())?;

    let q = map.m11() + &map.m12().dot(&x);
    let g = map.s1() + &map.m12().dot(&y);
    let h = &state.h + &state.y.dot(&y);
    let y_new = state.y.dot(&x);
    if !all_finite(q.iter().chain(&g).chain(&y_new).chain(&h)) {
        return Err(Error::numerical(
            "march",
            format!("non-finite state at interface z_{}", j - 1),
        ));
    }
    let factor = InterfaceFactor {
        interface: j,
        lu,
        m21: map.m21().clone(),
        offset,
    };
    Ok((
        MarchState {
            interface: j - 1,
            q,
            y: y_new,
            g,
            h,
        },
        factor,
    ))
}

/// Solves `(Q(z₀) + i√L) u₀ = 2i√L u⁺ − g(z₀)`; returns `u₀` and the rcond of the system.
pub fn close_left(
    state: &MarchState,
    l_left: &TransverseOperator,
    incident: &Array1<Complex64>,
) -> Result<(Array1<Complex64>, f64)> {
    let root = l_left.sqrt().map_err(|e| e.at("left lead square root"))?;
    let i_root = root.mapv(|v| v * I);
    let system = &state.q + &i_root;
    let lu = Lu::new(&system, "left closure Q(z_0) + i sqrt(L)")?;
    let rhs = i_root.dot(incident) * Complex64::new(2.0, 0.0) - &state.g;
    Ok((lu.solve(rhs.view())?, lu.rcond()))
}

/// Forward pass `j = 1..m`; `factors` is in backward order as produced by the march.
pub fn recover_fields(
    u0: Array1<Complex64>,
    factors: &[InterfaceFactor],
) -> Result<Vec<Array1<Complex64>>> {
    let mut fields = Vec::with_capacity(factors.len() + 1);
    fields.push(u0);
    for factor in factors.iter().rev() {
        let prev = fields.last().expect("u0 pushed");
        let rhs = factor.m21.dot(prev) + &factor.offset;
        fields.push(factor.lu.solve(rhs.view())?);
    }
    Ok(fields)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Homogeneous maps constructed by this solve (cache misses).
    pub maps_built: usize,
    pub cache_hits: usize,
    pub sources_built: usize,
    pub source_hits: usize,
    /// Reciprocal condition of `Q(z_j) − M22`, indexed by segment.
    pub step_rcond: Vec<f64>,
    pub closure_rcond: f64,
    /// Smallest rcond over all shifted mode systems of the segment maps.
    pub min_mode_rcond: f64,
    /// `‖Y(z₀) u(z₀) + h(z₀) − u(z_m)‖ / ‖u(z_m)‖`.
    pub recovery_mismatch: f64,
    /// Largest `|g|` and `|h|` entries seen over all interfaces.
    pub g_max: f64,
    pub h_max: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadFlux {
    /// Modal coefficients in the lead basis.
    pub coefficients: Array1<Complex64>,
    /// `Σ Re β |c|²` over propagating modes; `None` on an absorbing lead.
    pub flux: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Interface positions `z₀ .. z_m`.
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub hx: f64,
    pub u_at_interfaces: Vec<Array1<Complex64>>,
    /// `∂_z u` at every interface.
    pub du_at_interfaces: Vec<Array1<Complex64>>,
    /// Incident field `u⁺(·, z₀)`.
    pub incident: Array1<Complex64>,
    /// `u(·, z₀) − u⁺(·, z₀)`.
    pub reflected: Array1<Complex64>,
    /// `u(·, z_m)`.
    pub transmitted: Array1<Complex64>,
    pub incident_flux: LeadFlux,
    pub reflected_flux: LeadFlux,
    pub transmitted_flux: LeadFlux,
    /// `h_x Im(uᴴ ∂_z u)` at every interface.
    pub net_flux: Vec<f64>,
    /// `(h_x Σ |u|²)^{1/2}` at every interface.
    pub norms: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl SolveResult {
    /// `‖u⁻‖` weighted L2 norm of the reflected field.
    pub fn norm_left_outgoing(&self) -> f64 {
        weighted_norm(&self.reflected, self.hx)
    }

    pub fn norm_right_outgoing(&self) -> f64 {
        weighted_norm(&self.transmitted, self.hx)
    }

    /// Largest relative interface-field difference to another result.
    pub fn max_interface_discrepancy(&self, other: &SolveResult) -> f64 {
        let scale = self
            .u_at_interfaces
            .iter()
            .chain(&other.u_at_interfaces)
            .map(|u| norm2(u.view()))
            .fold(0.0, f64::max);
        let diff = self
            .u_at_interfaces
            .iter()
            .zip(&other.u_at_interfaces)
            .map(|(a, b)| norm2((a - b).view()))
            .fold(0.0, f64::max);
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

fn weighted_norm(u: &Array1<Complex64>, hx: f64) -> f64 {
    (hx * u.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// Operators and modes of both leads plus the incident field.
pub(crate) struct Leads {
    pub left: Arc<TransverseOperator>,
    pub right: Arc<TransverseOperator>,
    pub left_modes: LeadModes,
    pub right_modes: LeadModes,
    pub incident: Array1<Complex64>,
}

/// Assembles `L` once per profile referenced by a segment or a lead.
pub(crate) fn assemble_operators(
    problem: &WaveguideProblem,
    grid: &TransverseGrid,
) -> Vec<Option<Arc<TransverseOperator>>> {
    let k0 = problem.k0();
    let mut used = vec![false; problem.profiles.len()];
    for s in &problem.segments {
        used[s.profile] = true;
    }
    used[problem.left_lead] = true;
    used[problem.right_lead] = true;
    problem
        .profiles
        .iter()
        .zip(used)
        .map(|(p, u)| u.then(|| Arc::new(assemble_l(p, grid, k0))))
        .collect()
}

pub(crate) fn build_leads(
    problem: &WaveguideProblem,
    ops: &[Option<Arc<TransverseOperator>>],
    warnings: &mut Vec<String>,
) -> Result<Leads> {
    let left = ops[problem.left_lead]
        .clone()
        .expect("lead operator assembled");
    let right = ops[problem.right_lead]
        .clone()
        .expect("lead operator assembled");
    let left_modes = lead_modes(&left).map_err(|e| e.at("left lead modes"))?;
    let right_modes = lead_modes(&right).map_err(|e| e.at("right lead modes"))?;
    let n = left.dim();
    let incident = match problem.incident {
        Some(inc) => {
            if !left_modes
                .propagating
                .get(inc.mode)
                .copied()
                .unwrap_or(false)
            {
                warnings.push(format!(
                    "incident mode {} is not propagating in the left lead",
                    inc.mode
                ));
            }
            left_modes.mode(inc.mode).mapv(|v| v * inc.amplitude)
        }
        None => Array1::zeros(n),
    };
    Ok(Leads {
        left,
        right,
        left_modes,
        right_modes,
        incident,
    })
}

/// Turns interface fields and derivatives into the reported quantities.
pub(crate) fn finish_result(
    problem: &WaveguideProblem,
    grid: &TransverseGrid,
    leads: &Leads,
    u: Vec<Array1<Complex64>>,
    du: Vec<Array1<Complex64>>,
    diagnostics: Diagnostics,
) -> SolveResult {
    let hx = grid.hx;
    let reflected = &u[0] - &leads.incident;
    let transmitted = u.last().expect("at least one interface").clone();
    let flux = |field: &Array1<Complex64>, modes: &LeadModes| {
        let m = modal_flux(field.view(), modes);
        LeadFlux {
            coefficients: m.coefficients,
            flux: m.flux,
        }
    };
    let net_flux = u
        .iter()
        .zip(&du)
        .map(|(a, b)| {
            hx * a
                .iter()
                .zip(b)
                .map(|(x, y)| x.conj() * y)
                .sum::<Complex64>()
                .im
        })
        .collect();
    let norms = u.iter().map(|v| weighted_norm(v, hx)).collect();
    SolveResult {
        z: problem.interfaces(),
        x: grid.points(),
        hx,
        incident_flux: flux(&leads.incident, &leads.left_modes),
        reflected_flux: flux(&reflected, &leads.left_modes),
        transmitted_flux: flux(&transmitted, &leads.right_modes),
        u_at_interfaces: u,
        du_at_interfaces: du,
        incident: leads.incident.clone(),
        reflected,
        transmitted,
        net_flux,
        norms,
        diagnostics,
    }
}

/// Solves with a private cache.
pub fn solve(problem: &WaveguideProblem) -> Result<SolveResult> {
    solve_with_cache(problem, &DtnCache::new())
}

/// Solves, sharing segment maps with every other solve using `cache`.
pub fn solve_with_cache(problem: &WaveguideProblem, cache: &DtnCache) -> Result<SolveResult> {
    problem.validate()?;
    let grid = problem.build_grid()?;
    let n = grid.n;
    let m = problem.segments.len();
    let mut diagnostics = Diagnostics::default();

    let ops = assemble_operators(problem, &grid);
    let leads = build_leads(problem, &ops, &mut diagnostics.warnings)?;
    let z = problem.interfaces();

    // segment maps; distinct keys are built concurrently
    let lookups: Vec<(DtnMap, bool, Option<bool>)> = (0..m)
        .into_par_iter()
        .map(|j| {
            segment_map(problem, &grid, &ops, cache, j, z[j])
                .map_err(|e| e.at(&format!("segment {}", j + 1)))
        })
        .collect::<Result<_>>()?;
    let mut maps = Vec::with_capacity(m);
    for (map, built, source_built) in lookups {
        if built {
            diagnostics.maps_built += 1;
        } else {
            diagnostics.cache_hits += 1;
        }
        match source_built {
            Some(true) => diagnostics.sources_built += 1,
            Some(false) => diagnostics.source_hits += 1,
            None => {}
        }
        maps.push(map);
    }
    diagnostics.min_mode_rcond = maps
        .iter()
        .map(|mp| mp.segment.workspace.min_rcond())
        .fold(f64::INFINITY, f64::min);

    let mut state = init_state(&leads.right, m)?;
    let mut factors = Vec::with_capacity(m);
    diagnostics.step_rcond = vec![0.0; m];
    for j in (1..=m).rev() {
        let (next, factor) = step_back(&state, &maps[j - 1])?;
        diagnostics.step_rcond[j - 1] = factor.lu.rcond();
        if factor.lu.rcond() < WARN_RCOND {
            diagnostics.warnings.push(format!(
                "ill-conditioned step at interface z_{j}: rcond {:.3e}",
                factor.lu.rcond()
            ));
        }
        factors.push(factor);
        state = next;
        diagnostics.g_max = diagnostics.g_max.max(max_abs(state.g.iter().copied()));
        diagnostics.h_max = diagnostics.h_max.max(max_abs(state.h.iter().copied()));
    }

    let (u0, closure_rcond) = close_left(&state, &leads.left, &leads.incident)?;
    diagnostics.closure_rcond = closure_rcond;
    if closure_rcond < WARN_RCOND {
        diagnostics.warnings.push(format!(
            "ill-conditioned left closure: rcond {closure_rcond:.3e}"
        ));
    }
    let u = recover_fields(u0, &factors)?;
    if !u.iter().all(|v| all_finite(v.iter())) {
        return Err(Error::numerical(
            "forward recovery",
            "non-finite interface field",
        ));
    }

    let via_y = state.y.dot(&u[0]) + &state.h;
    diagnostics.recovery_mismatch = rel_diff_vec(via_y.view(), u[m].view());
    if diagnostics.recovery_mismatch > WARN_RECOVERY {
        diagnostics.warnings.push(format!(
            "Y/h recovery disagrees with forward recovery by {:.3e}",
            diagnostics.recovery_mismatch
        ));
    }

    let mut du = Vec::with_capacity(m + 1);
    du.push(maps[0].m11().dot(&u[0]) + &maps[0].m12().dot(&u[1]) + maps[0].s1());
    for j in 1..=m {
        let mp = &maps[j - 1];
        du.push(mp.m21().dot(&u[j - 1]) + &mp.m22().dot(&u[j]) + mp.s2());
    }
    debug_assert_eq!(du[0].len(), n);
    Ok(finish_result(problem, &grid, &leads, u, du, diagnostics))
}

/// Map key of segment `j` at the problem's wavelength.
pub fn map_key(problem: &WaveguideProblem, op: &TransverseOperator, j: usize) -> MapKey {
    let seg = &problem.segments[j];
    MapKey {
        operator: op.key().cloned().expect("assembled operators carry a key"),
        length_bits: seg.length.to_bits(),
        q: seg.q,
    }
}

fn segment_map(
    problem: &WaveguideProblem,
    grid: &TransverseGrid,
    ops: &[Option<Arc<TransverseOperator>>],
    cache: &DtnCache,
    j: usize,
    z_offset: f64,
) -> Result<(DtnMap, bool, Option<bool>)> {
    let seg = &problem.segments[j];
    let op = ops[seg.profile]
        .as_ref()
        .expect("segment operator assembled");
    let key = map_key(problem, op, j);
    let lookup = cache.segment_map(&key, || {
        SegmentMap::build(build_scheme(seg.q, seg.step())?, op)
    })?;
    let segment = lookup.value;
    let (source, source_built) = match seg.source {
        None => (Arc::new(SourceVectors::zeros(grid.n)), None),
        Some(si) => {
            let named = &problem.sources[si];
            let skey = SourceKey {
                map: key,
                source_id: named.id.clone(),
                source_fingerprint: crate::fingerprint(&named.term),
                z_offset_bits: named.term.depends_on_position().then(|| z_offset.to_bits()),
            };
            let samples = || problem.sample_source(j, grid);
            let got =
                cache.source_vectors(&skey, || segment.source_vectors(op, samples().view()))?;
            (got.value, Some(got.built))
        }
    };
    Ok((DtnMap { segment, source }, lookup.built, source_built))
}

/// Counts how many segments share each map key; used by diagnostics and tests.
pub fn distinct_map_keys(problem: &WaveguideProblem) -> Result<HashMap<MapKey, usize>> {
    let grid = problem.build_grid()?;
    let ops = assemble_operators(problem, &grid);
    let mut counts = HashMap::new();
    for (j, s) in problem.segments.iter().enumerate() {
        let op = ops[s.profile].as_ref().expect("segment operator assembled");
        *counts.entry(map_key(problem, op, j)).or_insert(0) += 1;
    }
    Ok(counts)
}
