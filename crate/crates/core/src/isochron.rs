//! Planar isochrons of the fast subsystem at frozen h, built by backward
//! integration from points displaced off the limit cycle, and the fast
//! phase response read off them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bifurcation::{equilibria_at, EquilibriumSample};
use crate::integrate::{integrate, Crossing, EventSpec, IntegrateError, IntegratorConfig, OdeSystem};
use crate::model::{FastSystem, ModelParams};
use crate::orbit::{find_fast_orbit, OrbitConfig, OrbitError, SpikeOrbit, SPIKE_EVENT, SPIKE_THRESHOLD};

#[derive(Debug, Error)]
pub enum IsochronError {
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("phase {0} outside [0, 1)")]
    InvalidPhase(f64),
    #[error("perturbation trace needs at least {needed} isochrons, portrait has {have}")]
    TooFewIsochrons { needed: usize, have: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsochronConfig {
    /// Number of log-spaced relative phases seeded per branch.
    pub seeds: usize,
    /// Relative-phase interval; backward time is relative phase times period.
    pub rel_phase_range: (f64, f64),
    /// Normal offset of each seed from the orbit.
    pub seed_offset: f64,
    /// Cap on collected points per branch.
    pub max_points: usize,
    /// Consecutive points farther apart than this get an intermediate seed.
    pub gap: f64,
    /// Extra seeds allowed per isochron for gap filling.
    pub gap_budget: usize,
    /// Backward trajectories leaving this norm are discarded.
    pub blowup_norm: f64,
    pub backward: IntegratorConfig,
    pub forward: IntegratorConfig,
    /// Transient length, in periods, before reading the asymptotic phase.
    pub return_periods: f64,
    pub return_tol: f64,
}

impl Default for IsochronConfig {
    fn default() -> Self {
        let base = IntegratorConfig {
            store_steps: false,
            ..IntegratorConfig::default()
        };
        Self {
            seeds: 40,
            rel_phase_range: (1e-4, 3.0),
            seed_offset: 1e-6,
            max_points: 200,
            gap: 0.05,
            gap_budget: 400,
            blowup_norm: 1e3,
            backward: IntegratorConfig {
                h_init: 1e-6,
                h_max: 1e-4,
                ..base.clone()
            }
            .stiff()
            .backward(),
            forward: base.forward(),
            return_periods: 5.0,
            return_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Inner,
    Outer,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Inner => "inner",
            Branch::Outer => "outer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsochronPoint {
    pub rel_phase: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
    pub backward_time: f64,
    pub branch: Branch,
    /// Circular distance between the recovered asymptotic phase and the target.
    pub return_error: f64,
    /// Distance to the orbit polygon.
    pub orbit_distance: f64,
}

impl IsochronPoint {
    pub fn state(&self) -> [f64; 2] {
        [self.v, self.n]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IsochronDiagnostics {
    pub seeds_used: usize,
    pub blowups: usize,
    pub outside_basin: usize,
    pub unresolved_gaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isochron {
    pub theta: f64,
    pub base: [f64; 2],
    /// Ordered by relative phase, base point first.
    pub inner: Vec<IsochronPoint>,
    pub outer: Vec<IsochronPoint>,
    pub complete: bool,
    pub diagnostics: IsochronDiagnostics,
}

impl Isochron {
    pub fn branch(&self, b: Branch) -> &[IsochronPoint] {
        match b {
            Branch::Inner => &self.inner,
            Branch::Outer => &self.outer,
        }
    }

    /// Points off the orbit, excluding the two base copies.
    pub fn retained(&self) -> impl Iterator<Item = &IsochronPoint> {
        self.inner.iter().skip(1).chain(self.outer.iter().skip(1))
    }

    /// Polyline running from the inner tip through the base to the outer tip.
    pub fn polyline(&self) -> Vec<[f64; 2]> {
        let mut line: Vec<[f64; 2]> = self.inner.iter().rev().map(|p| p.state()).collect();
        line.extend(self.outer.iter().skip(1).map(|p| p.state()));
        line
    }

    /// Unwrapped angle swept by the inner branch about `centre`.
    pub fn inner_winding(&self, centre: [f64; 2]) -> f64 {
        let angle = |p: &IsochronPoint| (p.n - centre[1]).atan2(p.v - centre[0]);
        let mut total = 0.0;
        for w in self.inner.windows(2) {
            let mut d = angle(&w[1]) - angle(&w[0]);
            d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            total += d;
        }
        total.abs()
    }
}

/// Isochrons of one fast subsystem with its plotting context.
#[derive(Debug, Clone)]
pub struct IsochronSet {
    pub h: f64,
    pub orbit: SpikeOrbit,
    pub isochrons: Vec<Isochron>,
    pub equilibria: Vec<EquilibriumSample>,
    /// (V, n) samples of the V and n nullclines.
    pub v_nullcline: Vec<[f64; 2]>,
    pub n_nullcline: Vec<[f64; 2]>,
}

impl IsochronSet {
    pub fn retained_points(&self) -> impl Iterator<Item = &IsochronPoint> {
        self.isochrons.iter().flat_map(|i| i.retained())
    }

    /// Fraction of retained points whose asymptotic phase matches their
    /// isochron within `tol`; restricted to points within `radius` of the orbit
    /// when given.
    pub fn return_pass_fraction(&self, tol: f64, radius: Option<f64>) -> f64 {
        let pts: Vec<_> = self
            .retained_points()
            .filter(|p| radius.is_none_or(|r| p.orbit_distance <= r))
            .collect();
        if pts.is_empty() {
            return 1.0;
        }
        pts.iter().filter(|p| p.return_error <= tol).count() as f64 / pts.len() as f64
    }

    /// Closest approach to the orbit of the outer branch of the isochron
    /// nearest `theta`, ignoring points within `exclusion` of its base.
    pub fn clearance(&self, theta: f64, exclusion: f64) -> Option<f64> {
        let iso = self.isochrons.iter().min_by(|a, b| {
            circular_distance(a.theta, theta)
                .partial_cmp(&circular_distance(b.theta, theta))
                .unwrap()
        })?;
        iso.outer
            .iter()
            .filter(|p| (p.v - iso.base[0]).hypot(p.n - iso.base[1]) >= exclusion)
            .map(|p| p.orbit_distance)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Signed phase difference a - b wrapped to [-1/2, 1/2).
fn wrapped_difference(a: f64, b: f64) -> f64 {
    (a - b + 0.5).rem_euclid(1.0) - 0.5
}

fn point_segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((q[0] - a[0]) * dx + (q[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (q[0] - a[0] - s * dx).hypot(q[1] - a[1] - s * dy)
}

fn polyline_distance(q: [f64; 2], line: &[[f64; 2]]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [p] => (q[0] - p[0]).hypot(q[1] - p[1]),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(q, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

fn closed_orbit_polygon(orbit: &SpikeOrbit) -> Vec<[f64; 2]> {
    let mut poly: Vec<[f64; 2]> = orbit.samples.iter().map(|s| s.state).collect();
    poly.push(orbit.anchor);
    poly
}

/// +1 for counter-clockwise traversal in the (V, n) plane, -1 otherwise.
fn orientation(orbit: &SpikeOrbit) -> f64 {
    let poly = closed_orbit_polygon(orbit);
    let area: f64 = poly.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum();
    area.signum()
}

/// Asymptotic phase of `x` on `orbit`: time of the first spike peak after a
/// transient, read back modulo the period. None when no spike follows.
pub fn asymptotic_phase(orbit: &SpikeOrbit, x: [f64; 2], cfg: &IsochronConfig) -> Result<Option<f64>, IntegrateError> {
    let h = orbit.h_frozen.expect("fast orbit");
    let sys = FastSystem {
        params: orbit.params,
        h,
    };
    let skip = cfg.return_periods * orbit.period;
    let events = [
        EventSpec::new(SPIKE_EVENT, Crossing::Falling, |t, y: &[f64; 2]| sys.rhs(t, y)[0])
            .with_guard(move |t, y| y[0] > SPIKE_THRESHOLD && t > skip)
            .terminal(),
    ];
    let tr = integrate(&sys, x, 0.0, skip + 3.0 * orbit.period, &cfg.forward, &events)?;
    Ok(tr
        .stopped_by_event()
        .then(|| (-tr.t_end() / orbit.period).rem_euclid(1.0)))
}

enum SeedOutcome {
    Kept(IsochronPoint),
    Blowup,
    OutsideBasin,
}

fn trace_seed(
    orbit: &SpikeOrbit,
    theta: f64,
    rel_phase: f64,
    branch: Branch,
    orient: f64,
    polygon: &[[f64; 2]],
    cfg: &IsochronConfig,
) -> Result<SeedOutcome, IntegrateError> {
    let h = orbit.h_frozen.expect("fast orbit");
    let sys = FastSystem {
        params: orbit.params,
        h,
    };
    let x = orbit.state_at_phase(theta + rel_phase);
    let f = sys.rhs(0.0, &x);
    let norm = f[0].hypot(f[1]);
    // right-hand normal points outward on a counter-clockwise orbit
    let side = match branch {
        Branch::Outer => orient,
        Branch::Inner => -orient,
    };
    let nrm = [side * f[1] / norm, -side * f[0] / norm];
    let y0 = [x[0] + cfg.seed_offset * nrm[0], x[1] + cfg.seed_offset * nrm[1]];
    let tau = rel_phase * orbit.period;
    let bound = cfg.blowup_norm;
    let events = [EventSpec::new("blowup", Crossing::Rising, move |_t, y: &[f64; 2]| {
        y[0].hypot(y[1]) - bound
    })
    .terminal()];
    let tr = match integrate(&sys, y0, 0.0, -tau, &cfg.backward, &events) {
        Ok(tr) => tr,
        Err(IntegrateError::NonFiniteState(_)) | Err(IntegrateError::StepSizeUnderflow { .. }) => {
            return Ok(SeedOutcome::Blowup)
        }
        Err(e) => return Err(e),
    };
    if tr.stopped_by_event() {
        return Ok(SeedOutcome::Blowup);
    }
    let end = tr.y_end();
    let Some(phase) = asymptotic_phase(orbit, end, cfg)? else {
        return Ok(SeedOutcome::OutsideBasin);
    };
    Ok(SeedOutcome::Kept(IsochronPoint {
        rel_phase,
        v: end[0],
        n: end[1],
        backward_time: tau,
        branch,
        return_error: circular_distance(phase, theta),
        orbit_distance: polyline_distance(end, polygon),
    }))
}

/// Relative spacing below which the last kept and first discarded seed of a
/// branch are left unrefined.
const BOUNDARY_RESOLUTION: f64 = 0.01;

/// Isochron of phase `theta` on a fast-subsystem orbit.
pub fn compute_isochron(orbit: &SpikeOrbit, theta: f64, cfg: &IsochronConfig) -> Result<Isochron, IsochronError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(IsochronError::InvalidPhase(theta));
    }
    let orient = orientation(orbit);
    let polygon = closed_orbit_polygon(orbit);
    let base = orbit.state_at_phase(theta);
    let (lo, hi) = cfg.rel_phase_range;
    let k = cfg.seeds.max(2);
    let initial: Vec<f64> = (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect();
    let mut diag = IsochronDiagnostics::default();
    let mut budget = cfg.gap_budget;
    let mut branches = Vec::with_capacity(2);
    let mut complete = true;

    for branch in [Branch::Inner, Branch::Outer] {
        // the inner branch may use half the budget, the outer branch the rest
        let mut branch_budget = if branch == Branch::Inner { budget / 2 } else { budget };
        // slots ordered by relative phase; None marks a discarded seed
        let mut slots: Vec<(f64, Option<IsochronPoint>)> = Vec::new();
        let mut pending = initial.clone();
        let unresolved = loop {
            let results: Vec<(f64, Result<SeedOutcome, IntegrateError>)> = pending
                .par_iter()
                .map(|&rp| (rp, trace_seed(orbit, theta, rp, branch, orient, &polygon, cfg)))
                .collect();
            diag.seeds_used += results.len();
            for (rp, res) in results {
                let kept = match res? {
                    SeedOutcome::Kept(p) => Some(p),
                    SeedOutcome::Blowup => {
                        diag.blowups += 1;
                        None
                    }
                    SeedOutcome::OutsideBasin => {
                        diag.outside_basin += 1;
                        None
                    }
                };
                slots.push((rp, kept));
            }
            slots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let kept = slots.iter().filter(|s| s.1.is_some()).count();
            let mut gaps = Vec::new();
            let mut edges = Vec::new();
            let mut stuck = 0;
            for w in slots.windows(2) {
                let ratio = w[1].0 / w[0].0;
                let mid = (w[0].0 * w[1].0).sqrt();
                match (&w[0].1, &w[1].1) {
                    (Some(a), Some(b)) if (a.v - b.v).hypot(a.n - b.n) > cfg.gap => {
                        if ratio < 1.0 + 1e-9 {
                            stuck += 1;
                        } else {
                            gaps.push(mid);
                        }
                    }
                    // locate where the branch stops, to coarse resolution
                    (Some(_), None) | (None, Some(_)) if ratio > 1.0 + BOUNDARY_RESOLUTION => edges.push(mid),
                    _ => {}
                }
            }
            let room = branch_budget.min(cfg.max_points.saturating_sub(kept));
            let open_gaps = gaps.len();
            pending = gaps;
            pending.extend(edges);
            pending.truncate(room);
            if pending.is_empty() {
                break stuck + open_gaps;
            }
            branch_budget -= pending.len();
            budget -= pending.len();
        };
        diag.unresolved_gaps += unresolved;
        complete &= unresolved == 0;
        let base_point = IsochronPoint {
            rel_phase: 0.0,
            v: base[0],
            n: base[1],
            backward_time: 0.0,
            branch,
            return_error: 0.0,
            orbit_distance: 0.0,
        };
        let mut pts = vec![base_point];
        pts.extend(slots.into_iter().filter_map(|s| s.1));
        branches.push(pts);
    }
    let outer = branches.pop().unwrap();
    let inner = branches.pop().unwrap();
    Ok(Isochron {
        theta,
        base,
        inner,
        outer,
        complete,
        diagnostics: diag,
    })
}

/// Phases 0.0, 0.1, ..., 0.9.
pub fn default_phase_set() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

pub const NULLCLINE_SAMPLES: usize = 400;

/// Isochrons at each phase in `phases` for the fast subsystem at `h`.
pub fn isochron_portrait(
    h: f64,
    phases: &[f64],
    p: &ModelParams,
    orbit_cfg: &OrbitConfig,
    cfg: &IsochronConfig,
) -> Result<IsochronSet, IsochronError> {
    let orbit = find_fast_orbit(h, p, orbit_cfg)?;
    let isochrons = phases
        .par_iter()
        .map(|&th| compute_isochron(&orbit, th, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let equilibria = equilibria_at(p, h)
        .into_iter()
        .map(|v| EquilibriumSample::at_v(p, v))
        .collect();
    let (vlo, vhi) = orbit.component_range(0);
    let pad = 0.5 * (vhi - vlo);
    let vs =
        (0..NULLCLINE_SAMPLES).map(|k| vlo - pad + (vhi - vlo + 2.0 * pad) * k as f64 / (NULLCLINE_SAMPLES - 1) as f64);
    let v_nullcline = vs
        .clone()
        .map(|v| [v, p.a * v * v * v - p.b * v * v + h - p.i_app])
        .collect();
    let n_nullcline = vs.map(|v| [v, p.n_nullcline(v)]).collect();
    Ok(IsochronSet {
        h,
        orbit,
        isochrons,
        equilibria,
        v_nullcline,
        n_nullcline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStatus {
    Ok,
    OutsideBasin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub theta: f64,
    /// Phase shift from isochron interpolation, positive = delay.
    pub dtheta: Option<f64>,
    /// Phase shift from forward integration of the displaced point.
    pub dtheta_direct: Option<f64>,
    pub status: TraceStatus,
}

/// Fast-subsystem phase response to a voltage displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastPrc {
    pub h: f64,
    pub eps: f64,
    pub samples: Vec<TraceSample>,
}

impl FastPrc {
    pub fn max_abs(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| s.dtheta)
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn max_abs_direct(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| s.dtheta_direct)
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn outside_basin(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.status == TraceStatus::OutsideBasin)
            .count()
    }

    /// Phase of the largest delay in the forward-integration estimate.
    pub fn delay_peak_phase(&self) -> Option<f64> {
        self.samples
            .iter()
            .filter_map(|s| s.dtheta_direct.map(|d| (s.theta, d)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(th, _)| th)
    }
}

pub const MIN_TRACE_ISOCHRONS: usize = 10;

/// Asymptotic phase of `q` interpolated between the two nearest isochrons
/// adjacent in phase.
pub fn interpolate_phase(set: &IsochronSet, q: [f64; 2]) -> Option<f64> {
    let mut lines: Vec<(f64, Vec<[f64; 2]>)> = set.isochrons.iter().map(|i| (i.theta, i.polyline())).collect();
    lines.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let d: Vec<f64> = lines.iter().map(|(_, l)| polyline_distance(q, l)).collect();
    let m = lines.len();
    let k = (0..m).min_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap())?;
    if d[k] == 0.0 {
        return Some(lines[k].0);
    }
    let (prev, next) = ((k + m - 1) % m, (k + 1) % m);
    let j = if d[prev] < d[next] { prev } else { next };
    let span = wrapped_difference(lines[j].0, lines[k].0);
    Some((lines[k].0 + span * d[k] / (d[k] + d[j])).rem_euclid(1.0))
}

/// Displace each of `n` on-orbit phase samples by `eps` in V and estimate the
/// resulting phase shift.
pub fn perturbation_trace(
    set: &IsochronSet,
    eps: f64,
    n: usize,
    cfg: &IsochronConfig,
) -> Result<FastPrc, IsochronError> {
    if set.isochrons.len() < MIN_TRACE_ISOCHRONS {
        return Err(IsochronError::TooFewIsochrons {
            needed: MIN_TRACE_ISOCHRONS,
            have: set.isochrons.len(),
        });
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|k| {
            let theta = k as f64 / n as f64;
            if eps == 0.0 {
                return Ok(TraceSample {
                    theta,
                    dtheta: Some(0.0),
                    dtheta_direct: Some(0.0),
                    status: TraceStatus::Ok,
                });
            }
            let x = set.orbit.state_at_phase(theta);
            let q = [x[0] + eps, x[1]];
            let Some(direct) = asymptotic_phase(&set.orbit, q, cfg)? else {
                return Ok(TraceSample {
                    theta,
                    dtheta: None,
                    dtheta_direct: None,
                    status: TraceStatus::OutsideBasin,
                });
            };
            let interp = interpolate_phase(set, q);
            Ok(TraceSample {
                theta,
                dtheta: interp.map(|ph| -wrapped_difference(ph, theta)),
                dtheta_direct: Some(-wrapped_difference(direct, theta)),
                status: TraceStatus::Ok,
            })
        })
        .collect::<Result<Vec<_>, IntegrateError>>()?;
    Ok(FastPrc { h: set.h, eps, samples })
}
