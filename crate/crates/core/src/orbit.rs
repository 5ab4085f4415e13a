//! Periodic orbits of the full system (bursting) and the fast subsystem
//! (tonic spiking), phase conventions and the stereotypical spike template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{integrate, Crossing, EventSpec, IntegrateError, IntegratorConfig, OdeSystem, Trajectory};
use crate::model::{FastSystem, FullSystem, ModelParams, ParamError};

/// Spike peaks must have V above this threshold.
pub const SPIKE_THRESHOLD: f64 = 0.0;

pub const SPIKE_EVENT: &str = "spike";
pub const VMIN_EVENT: &str = "vmin";
pub const HMIN_EVENT: &str = "hmin";
pub const HMAX_EVENT: &str = "hmax";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("return-map Newton iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("not bursting: {spikes} spikes per period")]
    NotBursting { spikes: usize },
    #[error("no stable fast-subsystem orbit at h = {0}")]
    NoOrbitAtThisH(f64),
    #[error("orbit has {found} spikes, {needed} needed")]
    TooFewSpikes { found: usize, needed: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitConfig {
    pub integrator: IntegratorConfig,
    pub n_samples: usize,
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    /// Number of periods integrated before refinement starts.
    pub transient_periods: usize,
    pub fd_step: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            n_samples: 4096,
            newton_tol: 1e-10,
            max_newton_iter: 30,
            transient_periods: 10,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSample<const N: usize> {
    pub theta: f64,
    pub state: [f64; N],
    pub rhs: [f64; N],
}

/// Event positions on the orbit, as phases in [0, 1).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrbitMarkers {
    pub spike_phases: Vec<f64>,
    pub vmin_phases: Vec<f64>,
    pub hmin_phase: Option<f64>,
    pub hmax_phase: Option<f64>,
}

/// A converged periodic orbit with its one-period dense trajectory.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit<const N: usize> {
    pub params: ModelParams,
    /// Frozen slow variable for fast-subsystem orbits.
    pub h_frozen: Option<f64>,
    pub period: f64,
    pub anchor: [f64; N],
    pub samples: Vec<OrbitSample<N>>,
    pub markers: OrbitMarkers,
    pub residual: f64,
    pub newton_iterations: usize,
    trajectory: Trajectory<N>,
}

pub type BurstOrbit = PeriodicOrbit<3>;
pub type SpikeOrbit = PeriodicOrbit<2>;

impl<const N: usize> PeriodicOrbit<N> {
    pub fn trajectory(&self) -> &Trajectory<N> {
        &self.trajectory
    }

    pub fn phase_of_time(&self, t: f64) -> f64 {
        let th = t.rem_euclid(self.period) / self.period;
        if th >= 1.0 {
            0.0
        } else {
            th
        }
    }

    pub fn state_at_phase(&self, theta: f64) -> [f64; N] {
        let th = theta.rem_euclid(1.0);
        if th == 0.0 {
            return self.anchor;
        }
        let t = (th * self.period).min(self.trajectory.t_end());
        self.trajectory.eval(t).expect("phase inside orbit span")
    }

    pub fn state_at_time(&self, t: f64) -> [f64; N] {
        self.state_at_phase(t / self.period)
    }

    pub fn spike_count(&self) -> usize {
        self.markers.spike_phases.len()
    }

    pub fn spike_times(&self) -> Vec<f64> {
        self.markers.spike_phases.iter().map(|p| p * self.period).collect()
    }

    /// Minimum and maximum of component `k` over the sample table.
    pub fn component_range(&self, k: usize) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.state[k]), hi.max(s.state[k]))
            })
    }

    /// Shortest peak-to-peak interval between consecutive spikes.
    pub fn shortest_isi(&self) -> Result<f64, OrbitError> {
        let isi = self.interspike_intervals();
        if isi.is_empty() {
            return Err(OrbitError::TooFewSpikes {
                found: self.spike_count(),
                needed: 2,
            });
        }
        Ok(isi.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn interspike_intervals(&self) -> Vec<f64> {
        let t = self.spike_times();
        t.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn spike_event<'a, const N: usize, S: OdeSystem<N> + Sync>(sys: &'a S, t_skip: f64) -> EventSpec<'a, N> {
    EventSpec::new(SPIKE_EVENT, Crossing::Falling, move |t, x: &[f64; N]| sys.rhs(t, x)[0])
        .with_guard(move |t, x| x[0] > SPIKE_THRESHOLD && t > t_skip)
}

fn vmin_event<'a, const N: usize, S: OdeSystem<N> + Sync>(sys: &'a S, t_skip: f64) -> EventSpec<'a, N> {
    EventSpec::new(VMIN_EVENT, Crossing::Rising, move |t, x: &[f64; N]| sys.rhs(t, x)[0])
        .with_guard(move |t, _x| t > t_skip)
}

fn hdot(p: &ModelParams, x: &[f64; 3]) -> f64 {
    p.r * (p.sigma * (x[0] - p.v0) - x[2])
}

/// Burst start marker: a minimum of h (rising zero of h').
fn hmin_event(p: &ModelParams, t_skip: f64) -> EventSpec<'static, 3> {
    let p = *p;
    EventSpec::new(HMIN_EVENT, Crossing::Rising, move |_t, x: &[f64; 3]| hdot(&p, x))
        .with_guard(move |t, _x| t > t_skip)
}

fn hmax_event(p: &ModelParams, t_skip: f64) -> EventSpec<'static, 3> {
    let p = *p;
    EventSpec::new(HMAX_EVENT, Crossing::Falling, move |_t, x: &[f64; 3]| hdot(&p, x))
        .with_guard(move |t, _x| t > t_skip)
}

/// Full-system burst orbit anchored at the h-minimum.
pub fn find_burst_orbit(p: &ModelParams, cfg: &OrbitConfig) -> Result<BurstOrbit, OrbitError> {
    p.validate()?;
    let sys = FullSystem { params: *p };
    let icfg = cfg.integrator.clone().forward().without_steps();
    // seed on the hyperpolarized branch and relax onto the attractor
    let seed = [-1.2, p.n_nullcline(-1.2), 1.8];
    let cap = 1e3 * (cfg.transient_periods as f64 + 2.0) / p.r;
    let ev = [hmin_event(p, 1.0).terminal_after(cfg.transient_periods + 1)];
    let tr = integrate(&sys, seed, 0.0, cap, &icfg, &ev)?;
    if !tr.stopped_by_event() {
        return Err(OrbitError::NotBursting { spikes: 0 });
    }
    let x0 = tr.y_end();

    // section h' = 0 parametrized by (V, n) with h = sigma (V - V0)
    let lift = |u: [f64; 2]| [u[0], u[1], p.sigma * (u[0] - p.v0)];
    let ret = |u: [f64; 2]| -> Result<([f64; 2], f64), OrbitError> {
        let ev = [hmin_event(p, 1.0).terminal()];
        let tr = integrate(&sys, lift(u), 0.0, cap, &icfg, &ev)?;
        if !tr.stopped_by_event() {
            return Err(OrbitError::NotBursting { spikes: 0 });
        }
        let y = tr.y_end();
        Ok(([y[0], y[1]], tr.t_end()))
    };
    let (u, residual, iters) = newton_2d([x0[0], x0[1]], ret, cfg)?;
    let anchor = lift(u);

    let full_cfg = cfg.integrator.clone().forward();
    let events = [
        hmin_event(p, 1.0).terminal(),
        hmax_event(p, 1.0),
        spike_event(&sys, 0.0),
        vmin_event(&sys, 0.0),
    ];
    let traj = integrate(&sys, anchor, 0.0, cap, &full_cfg, &events)?;
    let period = traj.t_end();
    let markers = collect_markers(&traj, period);
    if markers.spike_phases.len() < 2 {
        return Err(OrbitError::NotBursting {
            spikes: markers.spike_phases.len(),
        });
    }
    let samples = sample_table(&sys, &traj, period, anchor, cfg.n_samples);
    Ok(PeriodicOrbit {
        params: *p,
        h_frozen: None,
        period,
        anchor,
        samples,
        markers: OrbitMarkers {
            hmin_phase: Some(0.0),
            ..markers
        },
        residual,
        newton_iterations: iters,
        trajectory: traj,
    })
}

fn collect_markers<const N: usize>(traj: &Trajectory<N>, period: f64) -> OrbitMarkers {
    let phases = |id: &str| -> Vec<f64> {
        traj.events_with_id(id)
            .filter(|e| e.t < period)
            .map(|e| e.t / period)
            .collect()
    };
    OrbitMarkers {
        spike_phases: phases(SPIKE_EVENT),
        vmin_phases: phases(VMIN_EVENT),
        hmin_phase: None,
        hmax_phase: phases(HMAX_EVENT).first().copied(),
    }
}

fn sample_table<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    traj: &Trajectory<N>,
    period: f64,
    anchor: [f64; N],
    n: usize,
) -> Vec<OrbitSample<N>> {
    (0..n.max(1))
        .map(|k| {
            let theta = k as f64 / n as f64;
            let state = if k == 0 {
                anchor
            } else {
                traj.eval(theta * period).expect("inside span")
            };
            OrbitSample {
                theta,
                state,
                rhs: sys.rhs(0.0, &state),
            }
        })
        .collect()
}

/// Newton iteration on `u -> ret(u) - u` with a forward-difference Jacobian.
fn newton_2d(
    mut u: [f64; 2],
    ret: impl Fn([f64; 2]) -> Result<([f64; 2], f64), OrbitError>,
    cfg: &OrbitConfig,
) -> Result<([f64; 2], f64, usize), OrbitError> {
    let mut best = f64::INFINITY;
    for it in 0..cfg.max_newton_iter {
        let (pu, _) = ret(u)?;
        let r = [pu[0] - u[0], pu[1] - u[1]];
        let res = r[0].hypot(r[1]);
        if res <= cfg.newton_tol {
            return Ok((u, res, it));
        }
        best = best.min(res);
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let eps = cfg.fd_step * u[j].abs().max(1.0);
            let mut up = u;
            up[j] += eps;
            let (pp, _) = ret(up)?;
            for i in 0..2 {
                jac[i][j] = ((pp[i] - up[i]) - r[i]) / eps;
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return Err(OrbitError::NoConvergence { residual: res });
        }
        let du0 = (jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
        let du1 = (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det;
        u = [u[0] - du0, u[1] - du1];
    }
    Err(OrbitError::NoConvergence { residual: best })
}

/// Fast-subsystem limit cycle at frozen `h`, phase 0 at the spike peak.
pub fn find_fast_orbit(h: f64, p: &ModelParams, cfg: &OrbitConfig) -> Result<SpikeOrbit, OrbitError> {
    p.validate()?;
    if !h.is_finite() {
        return Err(OrbitError::NoOrbitAtThisH(h));
    }
    let sys = FastSystem { params: *p, h };
    let icfg = cfg.integrator.clone().forward().without_steps();
    // the cycle surrounds the upper (unstable) equilibrium; start just off it
    let v_up = crate::bifurcation::equilibria_at(p, h)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if !v_up.is_finite() {
        return Err(OrbitError::NoOrbitAtThisH(h));
    }
    let seed = [v_up + 1e-3, p.n_nullcline(v_up)];
    let transient_spikes = 10 * cfg.transient_periods.max(1);
    let cap = 2e4;
    let ev = [spike_event(&sys, 1e-3).terminal_after(transient_spikes)];
    let tr = integrate(&sys, seed, 0.0, cap, &icfg, &ev)?;
    if !tr.stopped_by_event() {
        return Err(OrbitError::NoOrbitAtThisH(h));
    }

    // section V' = 0 parametrized by V
    let lift = |v: f64| [v, p.a * v * v * v - p.b * v * v + h - p.i_app];
    let ret = |v: f64| -> Result<(f64, f64), OrbitError> {
        let ev = [spike_event(&sys, 1e-3).terminal()];
        let tr = integrate(&sys, lift(v), 0.0, cap, &icfg, &ev)?;
        if !tr.stopped_by_event() {
            return Err(OrbitError::NoOrbitAtThisH(h));
        }
        Ok((tr.y_end()[0], tr.t_end()))
    };
    let mut v = tr.y_end()[0];
    let mut converged = None;
    let mut best = f64::INFINITY;
    for it in 0..cfg.max_newton_iter {
        let (pv, _) = ret(v)?;
        let r = pv - v;
        // compare full state residual: n is a function of V on the section
        let dn = lift(pv)[1] - lift(v)[1];
        let res = r.hypot(dn);
        if res <= 0.1 * cfg.newton_tol {
            converged = Some((res, it));
            break;
        }
        best = best.min(res);
        let eps = cfg.fd_step * v.abs().max(1.0);
        let (pp, _) = ret(v + eps)?;
        let slope = ((pp - (v + eps)) - r) / eps;
        if slope.abs() < 1e-300 {
            break;
        }
        v -= r / slope;
    }
    let (residual, iters) = match converged {
        Some(c) => c,
        None if best <= cfg.newton_tol => (best, cfg.max_newton_iter),
        None => return Err(OrbitError::NoConvergence { residual: best }),
    };
    let anchor = lift(v);

    let full_cfg = cfg.integrator.clone().forward();
    let events = [spike_event(&sys, 1e-3).terminal(), vmin_event(&sys, 0.0)];
    let traj = integrate(&sys, anchor, 0.0, cap, &full_cfg, &events)?;
    let period = traj.t_end();
    let mut markers = collect_markers(&traj, period);
    markers.spike_phases = vec![0.0];
    let samples = sample_table(&sys, &traj, period, anchor, cfg.n_samples);
    Ok(PeriodicOrbit {
        params: *p,
        h_frozen: Some(h),
        period,
        anchor,
        samples,
        markers,
        residual,
        newton_iterations: iters,
        trajectory: traj,
    })
}

/// Voltage waveform of one spike, sampled uniformly from the V minimum before
/// its peak to the V minimum after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTemplate {
    pub duration: f64,
    pub dt: f64,
    pub voltage: Vec<f64>,
    /// One-based index of the source spike within the burst.
    pub source_spike: usize,
    /// Time of the spike peak measured from the template start.
    pub peak_offset: f64,
}

impl SpikeTemplate {
    /// Template voltage at time `t` after its start (linear interpolation);
    /// `None` outside the window.
    pub fn eval(&self, t: f64) -> Option<f64> {
        if !(t >= 0.0 && t <= self.duration) {
            return None;
        }
        let x = t / self.dt;
        let k = (x.floor() as usize).min(self.voltage.len() - 2);
        let w = x - k as f64;
        Some(self.voltage[k] * (1.0 - w) + self.voltage[k + 1] * w)
    }

    pub fn peak_voltage(&self) -> f64 {
        self.voltage.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.voltage.len()).map(move |k| k as f64 * self.dt)
    }
}

pub const TEMPLATE_SAMPLES: usize = 2048;

pub fn extract_spike_template(orbit: &BurstOrbit, spike_index: usize) -> Result<SpikeTemplate, OrbitError> {
    let spikes = orbit.spike_times();
    if spike_index == 0 || spikes.len() < spike_index {
        return Err(OrbitError::TooFewSpikes {
            found: spikes.len(),
            needed: spike_index.max(1),
        });
    }
    let t_peak = spikes[spike_index - 1];
    let vmins: Vec<f64> = orbit.markers.vmin_phases.iter().map(|p| p * orbit.period).collect();
    let before = vmins
        .iter()
        .copied()
        .filter(|&t| t < t_peak)
        .fold(f64::NEG_INFINITY, f64::max);
    let after = vmins
        .iter()
        .copied()
        .filter(|&t| t > t_peak)
        .fold(f64::INFINITY, f64::min);
    if !before.is_finite() || !after.is_finite() {
        return Err(OrbitError::TooFewSpikes {
            found: spikes.len(),
            needed: spike_index + 1,
        });
    }
    let duration = after - before;
    let n = TEMPLATE_SAMPLES;
    let dt = duration / (n - 1) as f64;
    let mut voltage: Vec<f64> = (0..n)
        .map(|k| {
            let t = if k == n - 1 { after } else { before + k as f64 * dt };
            orbit.state_at_time(t)[0]
        })
        .collect();
    // place the exact peak on the nearest sample so the maximum is preserved
    let peak_offset = t_peak - before;
    let kp = (peak_offset / dt).round() as usize;
    let v_peak = orbit.state_at_time(t_peak)[0];
    if (kp as f64 * dt - peak_offset).abs() < 1e-12 * duration.max(1.0) {
        voltage[kp] = v_peak;
    }
    Ok(SpikeTemplate {
        duration,
        dt,
        voltage,
        source_spike: spike_index,
        peak_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_interpolates_linearly() {
        let tpl = SpikeTemplate {
            duration: 2.0,
            dt: 1.0,
            voltage: vec![0.0, 2.0, 1.0],
            source_spike: 3,
            peak_offset: 1.0,
        };
        assert_eq!(tpl.eval(0.5), Some(1.0));
        assert_eq!(tpl.eval(1.5), Some(1.5));
        assert_eq!(tpl.eval(2.0), Some(1.0));
        assert_eq!(tpl.eval(-0.1), None);
        assert_eq!(tpl.eval(2.1), None);
        assert_eq!(tpl.peak_voltage(), 2.0);
    }

    #[test]
    fn fast_orbit_at_representative_h() {
        let p = ModelParams::default();
        let cfg = OrbitConfig {
            n_samples: 512,
            ..Default::default()
        };
        let o18 = find_fast_orbit(1.8, &p, &cfg).unwrap();
        let vmax = o18.samples.iter().map(|s| s.state[0]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(o18.samples[0].state[0], vmax);
        let o195 = find_fast_orbit(1.95, &p, &cfg).unwrap();
        let o2085 = find_fast_orbit(2.085, &p, &cfg).unwrap();
        assert!(o2085.period > o195.period && o195.period > o18.period);
        let sys = FastSystem { params: p, h: 1.95 };
        let back = integrate(&sys, o195.anchor, 0.0, o195.period, &IntegratorConfig::default(), &[]).unwrap();
        let y = back.y_end();
        assert!((y[0] - o195.anchor[0]).hypot(y[1] - o195.anchor[1]) <= 1e-9);
    }

    #[test]
    fn no_fast_orbit_past_homoclinic() {
        let p = ModelParams::default();
        assert!(matches!(
            find_fast_orbit(2.2, &p, &OrbitConfig::default()),
            Err(OrbitError::NoOrbitAtThisH(_))
        ));
    }
}
