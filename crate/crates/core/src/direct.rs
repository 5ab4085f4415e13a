//! Direct burst phase response by spike injection through a graded synapse.
//!
//! A copy of the stereotypical spike drives the synapse for exactly one
//! template duration starting at the perturbation phase. Afterwards the
//! conductance is zero and the unperturbed dynamics carry the neuron to its
//! next burst starts, whose timing against the unperturbed schedule gives the
//! phase shift of each order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjoint::{PhaseResponseCurve, PrcMethod};
use crate::integrate::{integrate, Crossing, EventSpec, IntegrateError, IntegratorConfig, OdeSystem, Trajectory};
use crate::model::{AugmentedSystem, ModelParams, Polarity, SynapseParams};
use crate::orbit::{BurstOrbit, SpikeTemplate, HMIN_EVENT, SPIKE_EVENT, SPIKE_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectError {
    #[error("no burst start within {periods} periods after injection")]
    Silenced { periods: f64 },
    #[error("integration failure: {0}")]
    IntegrationFailure(#[from] IntegrateError),
}

impl DirectError {
    pub fn code(&self) -> &'static str {
        match self {
            DirectError::Silenced { .. } => "silenced",
            DirectError::IntegrationFailure(_) => "integration-failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Shift,
    Addition,
    Deletion,
    EarlyTermination,
    EarlyInitiation,
    Silenced,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Shift => "shift",
            Classification::Addition => "addition",
            Classification::Deletion => "deletion",
            Classification::EarlyTermination => "early-termination",
            Classification::EarlyInitiation => "early-initiation",
            Classification::Silenced => "silenced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub polarity: Polarity,
    pub gsyn: f64,
    /// Onset phase of the injection.
    pub theta: f64,
    pub synapse: SynapseParams,
}

impl PerturbationSpec {
    pub fn new(polarity: Polarity, gsyn: f64, theta: f64) -> Self {
        Self {
            polarity,
            gsyn,
            theta,
            synapse: SynapseParams::with_polarity(polarity, gsyn),
        }
    }

    /// Take the gate kinetics (alpha, beta, Kp, Vp) from `k`.
    pub fn with_kinetics(mut self, k: &SynapseParams) -> Self {
        self.synapse = SynapseParams {
            alpha: k.alpha,
            beta: k.beta,
            kp: k.kp,
            vp: k.vp,
            ..self.synapse
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectConfig {
    pub n_orders: usize,
    /// A perturbation with no burst start within this many periods is silenced.
    pub silence_periods: f64,
    pub integrator: IntegratorConfig,
    /// Keep the dense perturbed trajectory for export.
    pub keep_trajectory: bool,
    /// Gate kinetics applied to every injection; conductance and reversal
    /// potential come from the perturbation itself.
    pub kinetics: SynapseParams,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            n_orders: 3,
            silence_periods: 5.0,
            integrator: IntegratorConfig::default(),
            keep_trajectory: false,
            kinetics: SynapseParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub theta: f64,
    pub onset: f64,
    /// `dtheta[k]` is the order `k + 1` shift (t_hat - t_ref) / T, positive = delay.
    pub dtheta: Vec<f64>,
    /// The same shifts divided by their order.
    pub dtheta_per_order: Vec<f64>,
    /// Spikes in the perturbed burst (order 0) and in each following burst.
    pub spike_counts: Vec<usize>,
    pub burst_starts: Vec<f64>,
    pub spike_times: Vec<f64>,
    pub classification: Classification,
    #[serde(skip)]
    pub window: Option<Trajectory<4>>,
    #[serde(skip)]
    pub post: Option<Trajectory<4>>,
}

/// Reference counts derived from the unperturbed orbit.
struct Reference {
    spikes_per_burst: usize,
    spikes_before: usize,
    mean_isi: f64,
    max_isi: f64,
    last_spike_before: Option<f64>,
    hmax_phase: f64,
}

fn reference(orbit: &BurstOrbit, theta: f64) -> Reference {
    let isi = orbit.interspike_intervals();
    let mean_isi = if isi.is_empty() {
        0.0
    } else {
        isi.iter().sum::<f64>() / isi.len() as f64
    };
    Reference {
        spikes_per_burst: orbit.spike_count(),
        spikes_before: orbit.markers.spike_phases.iter().filter(|&&p| p < theta).count(),
        mean_isi,
        max_isi: isi.iter().copied().fold(0.0, f64::max),
        last_spike_before: orbit
            .spike_times()
            .into_iter()
            .filter(|&t| t < theta * orbit.period)
            .last(),
        hmax_phase: orbit.markers.hmax_phase.unwrap_or(1.0),
    }
}

const SPIKE_END_EVENT: &str = "spike-end";

/// Peaks that open a new excursion above the spike threshold. A switched-off
/// conductance can leave two voltage maxima within one excursion.
fn excursion_peaks(peaks: &[f64], ends: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(peaks.len());
    for &t in peaks {
        if out.last().is_none_or(|&prev| ends.iter().any(|&e| e > prev && e < t)) {
            out.push(t);
        }
    }
    out
}

/// Burst-start candidate (h minimum), spike peak and spike end events after
/// `skip`.
fn burst_events<'a>(
    p: &ModelParams,
    vdot: &'a (dyn Fn(f64, &[f64; 4]) -> f64 + Sync),
    skip: f64,
) -> Vec<EventSpec<'a, 4>> {
    let p = *p;
    vec![
        EventSpec::new(HMIN_EVENT, Crossing::Rising, move |_t, x: &[f64; 4]| {
            p.r * (p.sigma * (x[0] - p.v0) - x[2])
        })
        .with_guard(move |t, _x| t > skip),
        EventSpec::new(SPIKE_EVENT, Crossing::Falling, move |t, x: &[f64; 4]| vdot(t, x))
            .with_guard(move |t, x| x[0] > SPIKE_THRESHOLD && t > skip),
        EventSpec::new(SPIKE_END_EVENT, Crossing::Falling, move |_t, x: &[f64; 4]| {
            x[0] - SPIKE_THRESHOLD
        })
        .with_guard(move |t, _x| t > skip),
    ]
}

/// Spike groups separated by gaps longer than this multiple of the longest
/// reference interspike interval are distinct bursts.
pub const BURST_GAP_FACTOR: f64 = 3.0;

/// Bursts reconstructed from the perturbed event record.
#[derive(Debug, Clone, Default, PartialEq)]
struct BurstRecord {
    /// Spikes after onset that continue the burst in progress at onset.
    continued: usize,
    /// Start time and spike count of each subsequent burst.
    bursts: Vec<(f64, usize)>,
    /// Time of the last spike of the final burst.
    last_spike: Option<f64>,
}

/// Group spikes into bursts and date each burst by the last h minimum before
/// its first spike. A transient h minimum without spikes (a kick during
/// quiescence) or one inside an ongoing burst (a strong inhibitory kick) thus
/// never counts as a burst start.
fn group_bursts(
    hmins: &[f64],
    spikes: &[f64],
    in_progress_since: Option<f64>,
    gap: f64,
    first_spike_latency: f64,
) -> BurstRecord {
    let mut rec = BurstRecord::default();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &t in spikes {
        match groups.last_mut() {
            Some(g) if t - g[g.len() - 1] <= gap => g.push(t),
            _ => groups.push(vec![t]),
        }
    }
    let mut prev_end = f64::NEG_INFINITY;
    for (k, g) in groups.iter().enumerate() {
        let first = g[0];
        if k == 0 {
            if let Some(since) = in_progress_since {
                if first - since <= gap {
                    rec.continued = g.len();
                    prev_end = g[g.len() - 1];
                    continue;
                }
            }
        }
        let start = hmins
            .iter()
            .copied()
            .filter(|&t| t > prev_end && t < first)
            .last()
            .unwrap_or(first - first_spike_latency);
        rec.bursts.push((start, g.len()));
        prev_end = g[g.len() - 1];
    }
    rec.last_spike = spikes.last().copied();
    rec
}

pub fn inject_and_measure(
    orbit: &BurstOrbit,
    template: &SpikeTemplate,
    spec: &PerturbationSpec,
    cfg: &DirectConfig,
) -> Result<PerturbationResult, DirectError> {
    let p: ModelParams = orbit.params;
    let period = orbit.period;
    let theta = spec.theta.rem_euclid(1.0);
    let onset = theta * period;
    let x = orbit.state_at_phase(theta);
    let y0 = [x[0], x[1], x[2], 0.0];
    let skip = onset + 1e-9 * period;
    let r = reference(orbit, theta);
    let gap = BURST_GAP_FACTOR * r.max_isi;
    let in_progress_since = (theta < r.hmax_phase).then(|| r.last_spike_before.unwrap_or(0.0).max(0.0));
    let latency = orbit.markers.spike_phases.first().copied().unwrap_or(0.0) * period;
    let mut icfg = cfg.integrator.clone().forward();
    icfg.store_steps = cfg.keep_trajectory;

    // injection window
    let t_end_window = onset + template.duration;
    let v_last = template.voltage[template.voltage.len() - 1];
    let drive = AugmentedSystem {
        params: p,
        synapse: spec.synapse,
        v_pre: |t: f64| template.eval(t - onset).unwrap_or(v_last),
    };
    let vdot_window = |t: f64, x: &[f64; 4]| drive.rhs(t, x)[0];
    let win = integrate(
        &drive,
        y0,
        onset,
        t_end_window,
        &icfg,
        &burst_events(&p, &vdot_window, skip),
    )?;
    let mut hmins: Vec<f64> = win.events_with_id(HMIN_EVENT).map(|e| e.t).collect();
    let mut spikes: Vec<f64> = win.events_with_id(SPIKE_EVENT).map(|e| e.t).collect();
    let mut ends: Vec<f64> = win.events_with_id(SPIKE_END_EVENT).map(|e| e.t).collect();

    // free evolution with the conductance switched off, in half-period chunks
    // until the last needed burst is complete
    let free = AugmentedSystem {
        params: p,
        synapse: SynapseParams {
            gsyn: 0.0,
            ..spec.synapse
        },
        v_pre: move |_t: f64| v_last,
    };
    let vdot_free = |t: f64, x: &[f64; 4]| free.rhs(t, x)[0];
    let chunk_cfg = icfg.clone().without_steps();
    let horizon = onset + (cfg.silence_periods + cfg.n_orders as f64) * period;
    // an event sitting on a segment boundary is located by both segments
    let dedup_tol = 1e-6 * period;
    let (mut t, mut y) = (win.t_end(), win.y_end());
    let mut record;
    loop {
        record = group_bursts(
            &hmins,
            &excursion_peaks(&spikes, &ends),
            in_progress_since,
            gap,
            latency,
        );
        let done = record.bursts.len() > cfg.n_orders
            || (record.bursts.len() == cfg.n_orders && record.last_spike.is_some_and(|ls| t - ls > gap));
        let silent = record.bursts.is_empty() && t > onset + cfg.silence_periods * period;
        if done || silent || t >= horizon {
            break;
        }
        let t_next = (t + 0.5 * period).min(horizon);
        let tr = integrate(&free, y, t, t_next, &chunk_cfg, &burst_events(&p, &vdot_free, skip))?;
        extend_distinct(&mut hmins, tr.events_with_id(HMIN_EVENT).map(|e| e.t), dedup_tol);
        extend_distinct(&mut spikes, tr.events_with_id(SPIKE_EVENT).map(|e| e.t), dedup_tol);
        extend_distinct(&mut ends, tr.events_with_id(SPIKE_END_EVENT).map(|e| e.t), dedup_tol);
        t = tr.t_end();
        y = tr.y_end();
    }
    match record.bursts.first() {
        Some(&(t1, _)) if t1 <= onset + cfg.silence_periods * period && record.bursts.len() >= cfg.n_orders => {}
        _ => {
            return Err(DirectError::Silenced {
                periods: cfg.silence_periods,
            })
        }
    }
    let post = if cfg.keep_trajectory && t > win.t_end() {
        Some(integrate(
            &free,
            win.y_end(),
            win.t_end(),
            t,
            &icfg,
            &burst_events(&p, &vdot_free, skip),
        )?)
    } else {
        None
    };

    let burst_starts: Vec<f64> = record.bursts.iter().map(|b| b.0).collect();
    let dtheta: Vec<f64> = (1..=cfg.n_orders)
        .map(|n| (burst_starts[n - 1] - n as f64 * period) / period)
        .collect();
    let dtheta_per_order = dtheta.iter().enumerate().map(|(k, d)| d / (k + 1) as f64).collect();
    let mut spike_counts = Vec::with_capacity(cfg.n_orders + 1);
    spike_counts.push(r.spikes_before + record.continued);
    spike_counts.extend(record.bursts.iter().take(cfg.n_orders).map(|b| b.1));
    let spikes = excursion_peaks(&spikes, &ends);
    let first_spike = spikes.first().copied();
    let classification = classify(&r, theta, period, &burst_starts, first_spike, spike_counts[0]);
    let window = cfg.keep_trajectory.then_some(win);
    Ok(PerturbationResult {
        theta,
        onset,
        dtheta,
        dtheta_per_order,
        spike_counts,
        burst_starts,
        spike_times: spikes,
        classification,
        window,
        post,
    })
}

/// Append event times, skipping any within `tol` of the last one kept.
fn extend_distinct(times: &mut Vec<f64>, new: impl Iterator<Item = f64>, tol: f64) {
    for t in new {
        if times.last().is_none_or(|&last| t - last > tol) {
            times.push(t);
        }
    }
}

/// Outcome of one perturbation.
///
/// Quiescent-segment perturbations that produce spikes before the reference
/// burst start are early initiations. Otherwise the order-0 spike count
/// decides: unchanged is a shift, more is an addition, fewer is an early
/// termination when the next burst starts more than one mean ISI early and a
/// deletion otherwise.
fn classify(
    r: &Reference,
    theta: f64,
    period: f64,
    burst_starts: &[f64],
    first_spike: Option<f64>,
    count0: usize,
) -> Classification {
    if theta >= r.hmax_phase {
        if let Some(ts) = first_spike {
            if ts < period {
                return Classification::EarlyInitiation;
            }
        }
    }
    use std::cmp::Ordering::*;
    match count0.cmp(&r.spikes_per_burst) {
        Equal => Classification::Shift,
        Greater => Classification::Addition,
        Less => {
            if burst_starts[0] < period - r.mean_isi {
                Classification::EarlyTermination
            } else {
                Classification::Deletion
            }
        }
    }
}

/// One row of a direct sweep; `result` is `Err(reason)` for failed points.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub theta: f64,
    pub result: Result<PerturbationResult, DirectError>,
}

#[derive(Debug, Clone)]
pub struct DirectSweep {
    pub polarity: Polarity,
    pub gsyn: f64,
    pub n_orders: usize,
    pub points: Vec<SweepPoint>,
}

/// Active-segment share of the perturbation phases.
pub const ACTIVE_FRACTION: f64 = 0.6;

/// Perturbation phases: 60% uniform over the active segment `[0, h-max)`, the
/// rest uniform over the quiescent segment.
pub fn sweep_phases(orbit: &BurstOrbit, n_phases: usize) -> Vec<f64> {
    let hmax = orbit.markers.hmax_phase.unwrap_or(0.5);
    let n_active = ((n_phases as f64) * ACTIVE_FRACTION).round() as usize;
    let n_quiet = n_phases.saturating_sub(n_active);
    let mut out: Vec<f64> = (0..n_active).map(|k| hmax * k as f64 / n_active as f64).collect();
    out.extend((0..n_quiet).map(|k| hmax + (1.0 - hmax) * k as f64 / n_quiet as f64));
    out
}

pub fn direct_sweep(
    orbit: &BurstOrbit,
    template: &SpikeTemplate,
    polarity: Polarity,
    gsyn: f64,
    phases: &[f64],
    cfg: &DirectConfig,
) -> DirectSweep {
    let cfg = DirectConfig {
        keep_trajectory: false,
        ..cfg.clone()
    };
    let points = phases
        .par_iter()
        .map(|&theta| {
            let spec = PerturbationSpec::new(polarity, gsyn, theta).with_kinetics(&cfg.kinetics);
            SweepPoint {
                theta,
                result: inject_and_measure(orbit, template, &spec, &cfg),
            }
        })
        .collect();
    DirectSweep {
        polarity,
        gsyn,
        n_orders: cfg.n_orders,
        points,
    }
}

impl DirectSweep {
    /// Order-`order` phase response curve, `NaN` at failed points.
    pub fn prc(&self, order: usize) -> PhaseResponseCurve {
        PhaseResponseCurve {
            method: PrcMethod::Direct,
            polarity: Some(self.polarity),
            strength: self.gsyn,
            order,
            theta: self.points.iter().map(|p| p.theta).collect(),
            dtheta: self
                .points
                .iter()
                .map(|p| match &p.result {
                    Ok(r) if order >= 1 && order <= r.dtheta.len() => r.dtheta[order - 1],
                    _ => f64::NAN,
                })
                .collect(),
        }
    }

    /// Spike counts of the given order, `None` at failed points.
    pub fn snrc(&self, order: usize) -> Vec<Option<usize>> {
        self.points
            .iter()
            .map(|p| p.result.as_ref().ok().and_then(|r| r.spike_counts.get(order).copied()))
            .collect()
    }
}

pub fn direct_bprc(
    orbit: &BurstOrbit,
    template: &SpikeTemplate,
    polarity: Polarity,
    gsyn: f64,
    n_phases: usize,
    cfg: &DirectConfig,
) -> DirectSweep {
    direct_sweep(orbit, template, polarity, gsyn, &sweep_phases(orbit, n_phases), cfg)
}
