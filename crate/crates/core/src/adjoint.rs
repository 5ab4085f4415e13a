//! Infinitesimal burst phase response via the periodic adjoint solution.
//!
//! `Z' = -J(x(t))^T Z` is integrated backward along the stored orbit one
//! period at a time, rescaling so that `<Z, f> = 1/T`, until the periodic
//! solution repeats. `Z` is the gradient of the asymptotic phase, so a small
//! V kick `dv` advances phase by `Z_V dv`; the delay-positive response curve
//! is therefore `-Z_V`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{integrate, Crossing, EventSpec, IntegrateError, IntegratorConfig, OdeSystem};
use crate::model::{full_jacobian, FullState, FullSystem, Polarity};
use crate::orbit::{BurstOrbit, HMIN_EVENT, SPIKE_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdjointError {
    #[error("periodic adjoint not reached in {periods} periods (last change {change:e})")]
    NoConvergence { periods: usize, change: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrcMethod {
    Adjoint,
    Direct,
}

/// Sampled map from perturbation phase to phase shift (positive = delay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResponseCurve {
    pub method: PrcMethod,
    pub polarity: Option<Polarity>,
    /// Synaptic conductance for direct curves, impulse size (1) for adjoint.
    pub strength: f64,
    pub order: usize,
    pub theta: Vec<f64>,
    /// `NaN` marks a missing sample.
    pub dtheta: Vec<f64>,
}

impl PhaseResponseCurve {
    pub fn max_abs(&self) -> f64 {
        self.dtheta
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Reflection across the phase axis.
    pub fn reflected(&self, polarity: Polarity) -> Self {
        Self {
            polarity: Some(polarity),
            dtheta: self.dtheta.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }

    /// Linear interpolation, periodic in theta.
    pub fn value_at(&self, theta: f64) -> f64 {
        let th = theta.rem_euclid(1.0);
        let n = self.theta.len();
        let k = self.theta.partition_point(|&t| t <= th);
        let (i0, i1, t0, t1) = if k == 0 {
            (n - 1, 0, self.theta[n - 1] - 1.0, self.theta[0])
        } else if k == n {
            (n - 1, 0, self.theta[n - 1], self.theta[0] + 1.0)
        } else {
            (k - 1, k, self.theta[k - 1], self.theta[k])
        };
        let w = if t1 > t0 { (th - t0) / (t1 - t0) } else { 0.0 };
        self.dtheta[i0] * (1.0 - w) + self.dtheta[i1] * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjointConfig {
    pub resolution: usize,
    pub min_periods: usize,
    pub max_periods: usize,
    pub tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        Self {
            resolution: 2500,
            min_periods: 5,
            max_periods: 50,
            tol: 1e-8,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointSolution {
    pub period: f64,
    pub theta: Vec<f64>,
    pub z: Vec<[f64; 3]>,
    /// Scale applied on the final period to enforce `<Z, f> = 1/T`.
    pub normalization: f64,
    pub periods_used: usize,
    pub final_change: f64,
}

impl AdjointSolution {
    /// Largest relative deviation of `<Z, f>` from `1/T` over the samples.
    pub fn normalization_error(&self, orbit: &BurstOrbit) -> f64 {
        let sys = FullSystem { params: orbit.params };
        let target = 1.0 / self.period;
        self.theta
            .iter()
            .zip(&self.z)
            .map(|(&th, z)| {
                let f = sys.rhs(0.0, &orbit.state_at_phase(th));
                ((z[0] * f[0] + z[1] * f[1] + z[2] * f[2]) - target).abs() / target
            })
            .fold(0.0, f64::max)
    }

    /// Delay-positive response to an excitatory unit V impulse.
    pub fn bprc(&self) -> PhaseResponseCurve {
        PhaseResponseCurve {
            method: PrcMethod::Adjoint,
            polarity: Some(Polarity::Excitatory),
            strength: 1.0,
            order: 1,
            theta: self.theta.clone(),
            dtheta: self.z.iter().map(|z| -z[0]).collect(),
        }
    }

    pub fn bprc_for(&self, polarity: Polarity) -> PhaseResponseCurve {
        match polarity {
            Polarity::Excitatory => self.bprc(),
            Polarity::Inhibitory => self.bprc().reflected(Polarity::Inhibitory),
        }
    }
}

struct AdjointSystem<'a> {
    orbit: &'a BurstOrbit,
}

impl OdeSystem<3> for AdjointSystem<'_> {
    fn rhs(&self, t: f64, z: &[f64; 3]) -> [f64; 3] {
        let x = self.orbit.state_at_time(t);
        let j = full_jacobian(&FullState::from(x), &self.orbit.params);
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = -(j[(0, i)] * z[0] + j[(1, i)] * z[1] + j[(2, i)] * z[2]);
        }
        out
    }

    fn jacobian(&self, t: f64, _z: &[f64; 3]) -> [[f64; 3]; 3] {
        let x = self.orbit.state_at_time(t);
        let j = full_jacobian(&FullState::from(x), &self.orbit.params);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = -j[(k, i)];
            }
        }
        out
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn adjoint_solution(orbit: &BurstOrbit, cfg: &AdjointConfig) -> Result<AdjointSolution, AdjointError> {
    let sys = AdjointSystem { orbit };
    let period = orbit.period;
    let f0 = FullSystem { params: orbit.params }.rhs(0.0, &orbit.anchor);
    let normalize = |z: [f64; 3]| {
        let s = 1.0 / (period * dot(&z, &f0));
        [z[0] * s, z[1] * s, z[2] * s]
    };
    let icfg = cfg.integrator.clone().backward().without_steps();
    let mut z = normalize([f0[0], f0[1], f0[2]]);
    let mut change = f64::INFINITY;
    let mut periods = 0;
    while periods < cfg.max_periods {
        let tr = integrate(&sys, z, period, 0.0, &icfg, &[])?;
        let next = normalize(tr.y_end());
        periods += 1;
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        change = (0..3).map(|i| (next[i] - z[i]).abs()).fold(0.0, f64::max) / scale;
        z = next;
        if periods >= cfg.min_periods && change <= cfg.tol {
            break;
        }
    }
    if change > cfg.tol {
        return Err(AdjointError::NoConvergence { periods, change });
    }

    let final_cfg = cfg.integrator.clone().backward();
    let tr = integrate(&sys, z, period, 0.0, &final_cfg, &[])?;
    let n = cfg.resolution.max(2);
    let theta: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
    let mut zs: Vec<[f64; 3]> = theta.iter().map(|&th| tr.eval(th * period)).collect::<Result<_, _>>()?;
    // pin <Z, f> = 1/T at the anchor; the flow carries it along the period
    let z0 = tr.y_end();
    let norm = 1.0 / (period * dot(&z0, &f0));
    for zk in zs.iter_mut() {
        for v in zk.iter_mut() {
            *v *= norm;
        }
    }
    Ok(AdjointSolution {
        period,
        theta,
        z: zs,
        normalization: norm,
        periods_used: periods,
        final_change: change,
    })
}

/// Adjoint solution and the excitatory (delay-positive) response curve.
pub fn adjoint_bprc(
    orbit: &BurstOrbit,
    cfg: &AdjointConfig,
) -> Result<(AdjointSolution, PhaseResponseCurve), AdjointError> {
    let sol = adjoint_solution(orbit, cfg)?;
    let prc = sol.bprc();
    Ok((sol, prc))
}

/// Phase shift (delay-positive) after kicking V by `eps` at phase `theta`,
/// measured from the burst-start event `periods` cycles later.
pub fn kick_phase_shift(
    orbit: &BurstOrbit,
    theta: f64,
    eps: f64,
    periods: usize,
    icfg: &IntegratorConfig,
) -> Result<f64, IntegrateError> {
    let sys = FullSystem { params: orbit.params };
    let mut x = orbit.state_at_phase(theta);
    x[0] += eps;
    let t0 = theta * orbit.period;
    let p = orbit.params;
    let k = periods.max(1);
    let ev = EventSpec::new(HMIN_EVENT, Crossing::Rising, move |_t, x: &[f64; 3]| {
        p.r * (p.sigma * (x[0] - p.v0) - x[2])
    })
    .with_guard(move |t, _x| t > t0 + 1.0)
    .terminal_after(k);
    let cfg = icfg.clone().forward().without_steps();
    let tr = integrate(&sys, x, t0, t0 + (k as f64 + 2.0) * orbit.period, &cfg, &[ev])?;
    let t_hit = tr.events().last().map(|e| e.t).unwrap_or(f64::NAN);
    Ok((t_hit - k as f64 * orbit.period) / orbit.period)
}

/// Segment boundaries (phases) of the three-part response structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segments {
    /// Active spiking response: [start, end].
    pub active: (f64, f64),
    /// Quiescent, negligible response: [start, end].
    pub quiescent: (f64, f64),
    /// Pre-onset response, wrapping through phase 0: [start, end].
    pub onset: (f64, f64),
    /// Magnitude threshold separating the quiescent floor from active response.
    pub floor: f64,
}

/// Fraction of the global maximum treated as the quiescent floor.
pub const QUIESCENT_FLOOR: f64 = 0.01;

/// Split a response curve into active, quiescent and pre-onset segments.
///
/// The active segment runs from the upswing of the first spike (V crossing
/// the spike threshold) until the delay response following the final spike
/// has decayed to the floor. The quiescent segment runs until the response
/// magnitude next exceeds the floor; the pre-onset segment wraps through 0.
pub fn segment_decomposition(prc: &PhaseResponseCurve, orbit: &BurstOrbit) -> Segments {
    let floor = QUIESCENT_FLOOR * prc.max_abs();
    let spikes = &orbit.markers.spike_phases;
    let first_spike = spikes.first().copied().unwrap_or(0.0);
    let last_spike = spikes.last().copied().unwrap_or(0.0);
    let pts: Vec<(f64, f64)> = prc
        .theta
        .iter()
        .copied()
        .zip(prc.dtheta.iter().copied())
        .filter(|p| p.1.is_finite())
        .collect();

    let start = orbit
        .samples
        .windows(2)
        .take_while(|w| w[1].theta <= first_spike)
        .filter(|w| w[0].state[0] < SPIKE_THRESHOLD && w[1].state[0] >= SPIKE_THRESHOLD)
        .last()
        .map(|w| w[1].theta)
        .unwrap_or(0.0);
    // delay peak after the final spike, then decay into the floor
    let peak = pts
        .iter()
        .filter(|p| p.0 > last_spike)
        .take_while(|p| p.1 > -floor)
        .fold(
            (last_spike, f64::NEG_INFINITY),
            |best, &(th, v)| if v > best.1 { (th, v) } else { best },
        )
        .0;
    let end = pts
        .iter()
        .find(|p| p.0 > peak && p.1.abs() <= floor)
        .map(|p| p.0)
        .unwrap_or(peak);
    let q_end = pts
        .iter()
        .find(|p| p.0 > end && p.1.abs() > floor)
        .map(|p| p.0)
        .unwrap_or(1.0);
    Segments {
        active: (start, end),
        quiescent: (end, q_end),
        onset: (q_end, start),
        floor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_and_interpolation() {
        let prc = PhaseResponseCurve {
            method: PrcMethod::Adjoint,
            polarity: Some(Polarity::Excitatory),
            strength: 1.0,
            order: 1,
            theta: vec![0.0, 0.25, 0.5, 0.75],
            dtheta: vec![0.0, 1.0, 0.0, -1.0],
        };
        assert_eq!(prc.value_at(0.125), 0.5);
        assert_eq!(prc.value_at(0.875), -0.5);
        assert_eq!(prc.value_at(1.25), 1.0);
        let inh = prc.reflected(Polarity::Inhibitory);
        assert_eq!(inh.dtheta, vec![-0.0, -1.0, -0.0, 1.0]);
        assert_eq!(prc.max_abs(), 1.0);
    }
}
