//! Fast-subsystem bifurcation structure in the frozen slow variable h.
//!
//! Equilibria are parametrized by V in closed form, so saddle-node and Hopf
//! points are exact. The spiking family is followed by re-converging fast
//! orbits, and the homoclinic end of the family is bracketed by bisection on
//! the fate of the saddle's unstable manifold.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{integrate, Crossing, EventSpec, IntegrateError, IntegratorConfig};
use crate::model::{fast_jacobian, FastState, FastSystem, ModelParams};
use crate::orbit::{find_fast_orbit, BurstOrbit, OrbitConfig, OrbitError, SpikeOrbit, SPIKE_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BifurcationError {
    #[error("no Hopf point with positive determinant")]
    NoHopf,
    #[error("lost the orbit family at h = {h}: {source}")]
    LostOrbit { h: f64, source: OrbitError },
    #[error("homoclinic bracket [{lo}, {hi}] does not straddle the orbit's end")]
    BracketFailure { lo: f64, hi: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    StableNode,
    StableFocus,
    Saddle,
    UnstableNode,
    UnstableFocus,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::StableNode => "stable-node",
            Stability::StableFocus => "stable-focus",
            Stability::Saddle => "saddle",
            Stability::UnstableNode => "unstable-node",
            Stability::UnstableFocus => "unstable-focus",
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }
}

/// Eigenvalues of a real 2x2 matrix as `(re, im)` pairs, ordered by real part.
pub fn eigenvalues_2x2(m: &Matrix2<f64>) -> [(f64, f64); 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = 0.5 * tr + s.copysign(tr);
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (lo, hi) = if big < small { (big, small) } else { (small, big) };
        [(lo, 0.0), (hi, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(0.5 * tr, -s), (0.5 * tr, s)]
    }
}

pub fn classify(m: &Matrix2<f64>) -> Stability {
    let tr = m.trace();
    let det = m.determinant();
    if det < 0.0 {
        return Stability::Saddle;
    }
    let focus = tr * tr < 4.0 * det;
    match (tr < 0.0, focus) {
        (true, true) => Stability::StableFocus,
        (true, false) => Stability::StableNode,
        (false, true) => Stability::UnstableFocus,
        (false, false) => Stability::UnstableNode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSample {
    pub h: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
    pub eigenvalues: [(f64, f64); 2],
    pub stability: Stability,
}

impl EquilibriumSample {
    pub fn at_v(p: &ModelParams, v: f64) -> Self {
        let h = p.equilibrium_h_of_v(v);
        let n = p.n_nullcline(v);
        let j = fast_jacobian(&FastState::new(v, n), h, p);
        Self {
            h,
            v,
            n,
            eigenvalues: eigenvalues_2x2(&j),
            stability: classify(&j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBranch {
    pub id: usize,
    pub stability: Stability,
    pub samples: Vec<EquilibriumSample>,
}

/// Sweep V uniformly and split the equilibrium curve where stability changes.
pub fn equilibrium_branches(p: &ModelParams, v_range: (f64, f64), n_samples: usize) -> Vec<EquilibriumBranch> {
    let n = n_samples.max(2);
    let (v0, v1) = v_range;
    let mut branches: Vec<EquilibriumBranch> = Vec::new();
    for k in 0..n {
        let v = v0 + (v1 - v0) * k as f64 / (n - 1) as f64;
        let s = EquilibriumSample::at_v(p, v);
        match branches.last_mut() {
            Some(b) if b.stability == s.stability => b.samples.push(s),
            _ => branches.push(EquilibriumBranch {
                id: branches.len(),
                stability: s.stability,
                samples: vec![s],
            }),
        }
    }
    branches
}

/// Real V with `equilibrium_h_of_v(V) = h`, ascending.
pub fn equilibria_at(p: &ModelParams, h: f64) -> Vec<f64> {
    // g(V) = equilibrium_h_of_v(V) - h; split at the critical points of the cubic
    let g = |v: f64| p.equilibrium_h_of_v(v) - h;
    let dg = |v: f64| -3.0 * p.a * v * v + 2.0 * (p.b - p.d) * v;
    let mut crit = vec![0.0];
    if p.a != 0.0 {
        crit.push(2.0 * (p.b - p.d) / (3.0 * p.a));
    }
    crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crit.dedup();
    let big = 1e3 * (1.0 + h.abs()).cbrt() + crit.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut knots = vec![-big];
    knots.extend(crit.iter().copied());
    knots.push(big);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            roots.push(lo);
            continue;
        }
        if glo * ghi > 0.0 {
            continue;
        }
        let rising = ghi > glo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if (g(mid) < 0.0) == rising {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // polish with Newton
        let mut v = 0.5 * (lo + hi);
        for _ in 0..3 {
            let d = dg(v);
            if d != 0.0 {
                let nv = v - g(v) / d;
                if nv >= w[0] && nv <= w[1] {
                    v = nv;
                }
            }
        }
        roots.push(v);
    }
    if g(*knots.last().unwrap()) == 0.0 {
        roots.push(*knots.last().unwrap());
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    roots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BifurcationKind {
    SaddleNode,
    Hopf,
    Homoclinic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub label: String,
    pub kind: BifurcationKind,
    pub h: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
}

/// Fold points of the equilibrium curve, where `dh/dV = 0`. Labelled by increasing h.
pub fn saddle_node_points(p: &ModelParams) -> Vec<BifurcationPoint> {
    let mut vs = vec![0.0];
    if p.a != 0.0 && p.b != p.d {
        vs.push(2.0 * (p.b - p.d) / (3.0 * p.a));
    }
    let mut pts: Vec<BifurcationPoint> = vs
        .into_iter()
        .map(|v| BifurcationPoint {
            label: String::new(),
            kind: BifurcationKind::SaddleNode,
            h: p.equilibrium_h_of_v(v),
            v,
            n: p.n_nullcline(v),
        })
        .collect();
    pts.sort_by(|a, b| a.h.partial_cmp(&b.h).unwrap());
    for (k, pt) in pts.iter_mut().enumerate() {
        pt.label = format!("LP{}", k + 1);
    }
    pts
}

/// Zero-trace equilibria with positive determinant. H1 is the one at larger h.
pub fn hopf_points(p: &ModelParams) -> Result<Vec<BifurcationPoint>, BifurcationError> {
    // -3a V^2 + 2b V - 1 = 0
    let (qa, qb, qc) = (-3.0 * p.a, 2.0 * p.b, -1.0);
    let disc = qb * qb - 4.0 * qa * qc;
    if qa == 0.0 || disc < 0.0 {
        return Err(BifurcationError::NoHopf);
    }
    let s = disc.sqrt();
    let q = -0.5 * (qb + s.copysign(qb));
    let roots = [q / qa, qc / q];
    let mut pts: Vec<BifurcationPoint> = roots
        .iter()
        .filter(|&&v| {
            let j = fast_jacobian(&FastState::new(v, p.n_nullcline(v)), 0.0, p);
            j.determinant() > 0.0
        })
        .map(|&v| BifurcationPoint {
            label: String::new(),
            kind: BifurcationKind::Hopf,
            h: p.equilibrium_h_of_v(v),
            v,
            n: p.n_nullcline(v),
        })
        .collect();
    if pts.is_empty() {
        return Err(BifurcationError::NoHopf);
    }
    pts.sort_by(|a, b| b.h.partial_cmp(&a.h).unwrap());
    for (k, pt) in pts.iter_mut().enumerate() {
        pt.label = format!("H{}", k + 1);
    }
    Ok(pts)
}

/// The middle equilibrium where three coexist, with its eigen-decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleInfo {
    pub h: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
    pub lambda_unstable: f64,
    pub lambda_stable: f64,
    pub vec_unstable: [f64; 2],
    pub vec_stable: [f64; 2],
}

pub fn saddle_at(p: &ModelParams, h: f64) -> Option<SaddleInfo> {
    let eq = equilibria_at(p, h);
    let v = eq.into_iter().find(|&v| {
        let j = fast_jacobian(&FastState::new(v, p.n_nullcline(v)), h, p);
        j.determinant() < 0.0
    })?;
    let n = p.n_nullcline(v);
    let j = fast_jacobian(&FastState::new(v, n), h, p);
    let [(ls, _), (lu, _)] = eigenvalues_2x2(&j);
    // (J - lambda I) w = 0 with J = [[j00, 1], [j10, -1]]: w = (1, lambda - j00)
    let evec = |l: f64| {
        let w = [1.0, l - j[(0, 0)]];
        let norm = w[0].hypot(w[1]);
        [w[0] / norm, w[1] / norm]
    };
    Some(SaddleInfo {
        h,
        v,
        n,
        lambda_unstable: lu,
        lambda_stable: ls,
        vec_unstable: evec(lu),
        vec_stable: evec(ls),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    pub h: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub period: f64,
    pub anchor: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFamily {
    pub samples: Vec<CycleSample>,
    /// Estimated end of the family (midpoint of the final failure bracket).
    pub terminal_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleStepControl {
    pub dh: f64,
    pub dh_min: f64,
    /// Stop once the period exceeds this multiple of the period at h = 1.95.
    pub period_cap_factor: f64,
    pub orbit: OrbitConfig,
}

impl Default for CycleStepControl {
    fn default() -> Self {
        Self {
            dh: 0.01,
            dh_min: 1e-6,
            period_cap_factor: 50.0,
            orbit: OrbitConfig {
                n_samples: 256,
                transient_periods: 3,
                ..OrbitConfig::default()
            },
        }
    }
}

fn cycle_sample(o: &SpikeOrbit, h: f64) -> CycleSample {
    let (v_min, v_max) = o.component_range(0);
    CycleSample {
        h,
        v_min,
        v_max,
        period: o.period,
        anchor: o.anchor,
    }
}

/// Follow the stable spiking family from `h_start` toward `h_end`.
///
/// A uniform grid is converged in parallel; the step is then halved near the
/// first h without an orbit until it falls below `dh_min`.
pub fn cycle_family(
    p: &ModelParams,
    h_start: f64,
    h_end: f64,
    ctl: &CycleStepControl,
) -> Result<CycleFamily, BifurcationError> {
    let dir = if h_end >= h_start { 1.0 } else { -1.0 };
    let steps = ((h_end - h_start).abs() / ctl.dh).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| h_start + dir * (k as f64 * ctl.dh).min((h_end - h_start).abs()))
        .collect();
    let results: Vec<Result<SpikeOrbit, OrbitError>> =
        grid.par_iter().map(|&h| find_fast_orbit(h, p, &ctl.orbit)).collect();
    let period_cap = find_fast_orbit(1.95, p, &ctl.orbit)
        .map(|o| o.period * ctl.period_cap_factor)
        .unwrap_or(f64::INFINITY);

    let mut samples = Vec::new();
    let mut fail_h = None;
    for (&h, r) in grid.iter().zip(results) {
        match r {
            Ok(o) if o.period <= period_cap => samples.push(cycle_sample(&o, h)),
            Ok(_) | Err(OrbitError::NoOrbitAtThisH(_)) => {
                fail_h = Some(h);
                break;
            }
            Err(e) => return Err(BifurcationError::LostOrbit { h, source: e }),
        }
    }
    let Some(mut hi) = fail_h else {
        return Ok(CycleFamily {
            samples,
            terminal_h: None,
        });
    };
    let Some(last) = samples.last() else {
        return Err(BifurcationError::LostOrbit {
            h: h_start,
            source: OrbitError::NoOrbitAtThisH(h_start),
        });
    };
    let mut lo = last.h;
    while (hi - lo).abs() > ctl.dh_min {
        let mid = 0.5 * (lo + hi);
        match find_fast_orbit(mid, p, &ctl.orbit) {
            Ok(o) if o.period <= period_cap => {
                samples.push(cycle_sample(&o, mid));
                lo = mid;
            }
            Ok(_) | Err(OrbitError::NoOrbitAtThisH(_)) => hi = mid,
            Err(e) => return Err(BifurcationError::LostOrbit { h: mid, source: e }),
        }
    }
    Ok(CycleFamily {
        samples,
        terminal_h: Some(0.5 * (lo + hi)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomoclinicConfig {
    pub bracket: (f64, f64),
    pub tol: f64,
    /// Offset from the saddle along its unstable eigenvector.
    pub offset: f64,
    pub integrator: IntegratorConfig,
}

impl Default for HomoclinicConfig {
    fn default() -> Self {
        Self {
            bracket: (1.9, 2.3),
            tol: 1e-6,
            offset: 1e-9,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Whether the orbit-side branch of the saddle's unstable manifold winds onto
/// a spiking cycle (true) or falls to the hyperpolarized node (false).
///
/// Past the saddle-node of the lower node there is no saddle; the cycle is
/// then the only attractor and existence is decided by the spike count alone.
pub fn unstable_manifold_spikes(p: &ModelParams, h: f64, cfg: &HomoclinicConfig) -> Result<bool, BifurcationError> {
    let sys = FastSystem { params: *p, h };
    let (start, node) = match saddle_at(p, h) {
        Some(s) => {
            let dir = if s.vec_unstable[0] >= 0.0 { 1.0 } else { -1.0 };
            let start = [
                s.v + dir * cfg.offset * s.vec_unstable[0],
                s.n + dir * cfg.offset * s.vec_unstable[1],
            ];
            let v_node = equilibria_at(p, h)[0];
            (start, Some([v_node, p.n_nullcline(v_node)]))
        }
        None => {
            let v_up = *equilibria_at(p, h).last().ok_or(BifurcationError::NoHopf)?;
            ([v_up + 1e-3, p.n_nullcline(v_up)], None)
        }
    };
    let needed = 3;
    let mut events = vec![EventSpec::new("spike", Crossing::Falling, move |_t, x: &[f64; 2]| {
        x[1] - p.a * x[0].powi(3) + p.b * x[0] * x[0] - h + p.i_app
    })
    .with_guard(|_t, x| x[0] > SPIKE_THRESHOLD)
    .terminal_after(needed)];
    if let Some(q) = node {
        events.push(
            EventSpec::new("rest", Crossing::Falling, move |_t, x: &[f64; 2]| {
                (x[0] - q[0]).hypot(x[1] - q[1]) - 1e-4
            })
            .terminal(),
        );
    }
    let icfg = cfg.integrator.clone().forward().without_steps();
    let tr = integrate(&sys, start, 0.0, 1e5, &icfg, &events)?;
    Ok(tr.events_with_id("spike").count() >= needed)
}

/// Bisect on h for the end of the spiking family.
pub fn homoclinic_h(p: &ModelParams, cfg: &HomoclinicConfig) -> Result<BifurcationPoint, BifurcationError> {
    let (mut lo, mut hi) = cfg.bracket;
    if !unstable_manifold_spikes(p, lo, cfg)? || unstable_manifold_spikes(p, hi, cfg)? {
        return Err(BifurcationError::BracketFailure { lo, hi });
    }
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if unstable_manifold_spikes(p, mid, cfg)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = 0.5 * (lo + hi);
    let s = saddle_at(p, h).ok_or(BifurcationError::BracketFailure { lo, hi })?;
    Ok(BifurcationPoint {
        label: "HC".into(),
        kind: BifurcationKind::Homoclinic,
        h,
        v: s.v,
        n: s.n,
    })
}

/// Slow-structure skeleton over the burst's h-range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    /// Hyperpolarized stable equilibria.
    pub quiescent: Vec<EquilibriumSample>,
    pub saddles: Vec<SaddleInfo>,
    /// Per-h rings of the spiking cycles: (h, samples of (V, n)).
    pub cycles: Vec<(f64, Vec<[f64; 2]>)>,
}

pub fn export_skeleton(
    p: &ModelParams,
    burst: &BurstOrbit,
    n_h: usize,
    ring_samples: usize,
    ctl: &CycleStepControl,
) -> Skeleton {
    let (h_lo, h_hi) = burst.component_range(2);
    let n_h = n_h.max(2);
    let hs: Vec<f64> = (0..n_h)
        .map(|k| h_lo + (h_hi - h_lo) * k as f64 / (n_h - 1) as f64)
        .collect();
    let quiescent = hs
        .iter()
        .filter_map(|&h| {
            let v = *equilibria_at(p, h).first()?;
            let s = EquilibriumSample::at_v(p, v);
            s.stability.is_stable().then_some(EquilibriumSample { h, ..s })
        })
        .collect();
    let saddles = hs.iter().filter_map(|&h| saddle_at(p, h)).collect();
    let orbit_cfg = OrbitConfig {
        n_samples: ring_samples.max(8),
        ..ctl.orbit.clone()
    };
    let cycles = hs
        .par_iter()
        .filter_map(|&h| {
            let o = find_fast_orbit(h, p, &orbit_cfg).ok()?;
            Some((h, o.samples.iter().map(|s| s.state).collect()))
        })
        .collect();
    Skeleton {
        quiescent,
        saddles,
        cycles,
    }
}

/// Spread of the saddle's eigenvalues across an h-interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSpectrumSummary {
    pub h_from: f64,
    pub h_to: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub unstable_growth: f64,
    pub stable_growth: f64,
}

/// Stable/unstable magnitude ratio and growth factors from `h_from` to `h_to`.
pub fn saddle_spectrum(p: &ModelParams, h_from: f64, h_to: f64, n: usize) -> Option<SaddleSpectrumSummary> {
    let n = n.max(2);
    let mut ratios = Vec::with_capacity(n);
    let mut first = None;
    let mut last = None;
    for k in 0..n {
        let h = h_from + (h_to - h_from) * k as f64 / (n - 1) as f64;
        let s = saddle_at(p, h)?;
        ratios.push(s.lambda_stable.abs() / s.lambda_unstable.abs());
        if first.is_none() {
            first = Some(s);
        }
        last = Some(s);
    }
    let (f, l) = (first?, last?);
    Some(SaddleSpectrumSummary {
        h_from,
        h_to,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        unstable_growth: l.lambda_unstable.abs() / f.lambda_unstable.abs(),
        stable_growth: l.lambda_stable.abs() / f.lambda_stable.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fold_points_closed_form() {
        let p = ModelParams::default();
        let lp = saddle_node_points(&p);
        assert_eq!(lp[0].label, "LP1");
        assert!((lp[0].h - 49.0 / 27.0).abs() <= 1e-10);
        assert!((lp[0].v + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(lp[1].label, "LP2");
        assert_eq!(lp[1].h, 3.0);
        assert_eq!(lp[1].v, 0.0);
    }

    #[test]
    fn hopf_points_closed_form() {
        let p = ModelParams::default();
        let hp = hopf_points(&p).unwrap();
        assert_eq!(hp.len(), 2);
        assert!((hp[0].h - 2.92647388572).abs() < 1e-6);
        assert!((hp[1].h + 9.5931404587).abs() < 1e-6);
        for pt in &hp {
            let j = fast_jacobian(&FastState::new(pt.v, pt.n), pt.h, &p);
            assert!(j.trace().abs() <= 1e-12 && j.determinant() > 0.0);
        }
    }

    #[test]
    fn no_hopf_when_trace_has_no_real_root() {
        let p = ModelParams {
            b: 0.5,
            ..Default::default()
        };
        assert_eq!(hopf_points(&p), Err(BifurcationError::NoHopf));
    }

    #[test]
    fn three_equilibria_between_folds() {
        let p = ModelParams::default();
        for h in [1.82, 1.9, 2.0, 2.5, 2.9] {
            let eq = equilibria_at(&p, h);
            assert_eq!(eq.len(), 3, "h={h}");
            let kinds: Vec<Stability> = eq.iter().map(|&v| EquilibriumSample::at_v(&p, v).stability).collect();
            assert!(kinds[0].is_stable());
            assert_eq!(kinds[1], Stability::Saddle);
            assert!(!kinds[2].is_stable());
        }
        assert_eq!(equilibria_at(&p, 1.7).len(), 1);
        assert_eq!(equilibria_at(&p, 3.1).len(), 1);
    }

    #[test]
    fn branches_split_only_at_special_points() {
        let p = ModelParams::default();
        let br = equilibrium_branches(&p, (-3.0, 3.0), 6001);
        let lp: Vec<f64> = saddle_node_points(&p).iter().map(|b| b.v).collect();
        let hopf: Vec<f64> = hopf_points(&p).unwrap().iter().map(|b| b.v).collect();
        for w in br.windows(2) {
            let vb = 0.5 * (w[0].samples.last().unwrap().v + w[1].samples[0].v);
            let near_special = lp.iter().chain(hopf.iter()).any(|&v| (v - vb).abs() < 2e-3);
            // node/focus transitions are not bifurcations; skip those
            let same_stability = w[0].stability.is_stable() == w[1].stability.is_stable()
                && (w[0].stability == Stability::Saddle) == (w[1].stability == Stability::Saddle);
            assert!(
                near_special || same_stability,
                "{:?} -> {:?} at V={vb}",
                w[0].stability,
                w[1].stability
            );
        }
    }

    #[test]
    fn saddle_eigenvectors_are_eigenvectors() {
        let p = ModelParams::default();
        let s = saddle_at(&p, 2.0).unwrap();
        let j = fast_jacobian(&FastState::new(s.v, s.n), 2.0, &p);
        for (l, w) in [(s.lambda_unstable, s.vec_unstable), (s.lambda_stable, s.vec_stable)] {
            let jw = j * nalgebra::Vector2::new(w[0], w[1]);
            assert!((jw[0] - l * w[0]).abs() < 1e-12 && (jw[1] - l * w[1]).abs() < 1e-12);
        }
        assert!(s.lambda_unstable > 0.0 && s.lambda_stable < 0.0);
    }

    #[test]
    fn manifold_test_straddles_the_homoclinic() {
        let p = ModelParams::default();
        let cfg = HomoclinicConfig::default();
        assert!(unstable_manifold_spikes(&p, 2.075, &cfg).unwrap());
        assert!(!unstable_manifold_spikes(&p, 2.095, &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn equilibria_solve_the_fixed_point_condition(h in -12.0f64..5.0) {
            let p = ModelParams::default();
            for v in equilibria_at(&p, h) {
                let s = EquilibriumSample::at_v(&p, v);
                prop_assert!((s.h - h).abs() <= 1e-12 * (1.0 + h.abs()));
            }
        }

        #[test]
        fn eigenvalues_match_trace_and_determinant(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
            let m = Matrix2::new(a, b, c, d);
            let [(r1, i1), (r2, i2)] = eigenvalues_2x2(&m);
            prop_assert!((r1 + r2 - m.trace()).abs() < 1e-10);
            prop_assert!((i1 + i2).abs() < 1e-12);
            let det = r1 * r2 - i1 * i2;
            prop_assert!((det - m.determinant()).abs() < 1e-9 * (1.0 + m.determinant().abs()));
        }
    }
}
