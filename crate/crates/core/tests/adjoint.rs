use std::sync::OnceLock;

use hrburst::adjoint::{adjoint_bprc, kick_phase_shift, segment_decomposition, AdjointSolution, PhaseResponseCurve};
use hrburst::{find_burst_orbit, BurstOrbit, IntegratorConfig, ModelParams, OrbitConfig, Polarity};

struct Fixture {
    orbit: BurstOrbit,
    sol: AdjointSolution,
    bprc: PhaseResponseCurve,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let orbit = find_burst_orbit(&ModelParams::default(), &OrbitConfig::default()).unwrap();
        let (sol, bprc) = adjoint_bprc(&orbit, &Default::default()).unwrap();
        Fixture { orbit, sol, bprc }
    })
}

#[test]
fn adjoint_is_periodic_and_normalized() {
    let f = fixture();
    assert!(f.sol.periods_used >= 5);
    assert!(f.sol.final_change <= 1e-8);
    assert!(f.sol.normalization_error(&f.orbit) <= 1e-6);
    assert_eq!(f.bprc.theta.len(), 2500);
    assert!(f.bprc.theta.windows(2).all(|w| w[1] > w[0]));
    assert!(f.bprc.theta[0] >= 0.0 && *f.bprc.theta.last().unwrap() < 1.0);
}

#[test]
fn finite_difference_kicks_match_wherever_the_response_is_resolvable() {
    let f = fixture();
    let eps = 1e-6;
    let icfg = IntegratorConfig::default();
    let zmax = f.bprc.max_abs();
    let stride = f.bprc.theta.len() / 50;
    let mut checked = 0;
    for k in (0..50).map(|i| i * stride) {
        let (theta, z) = (f.bprc.theta[k], f.bprc.dtheta[k]);
        let plus = kick_phase_shift(&f.orbit, theta, eps, 3, &icfg).unwrap();
        let minus = kick_phase_shift(&f.orbit, theta, -eps, 3, &icfg).unwrap();
        let fd = (plus - minus) / (2.0 * eps);
        // below 1e-3 of the peak the kick is swamped by event-timing noise
        if z.abs() > 1e-3 * zmax {
            checked += 1;
            assert!(
                (fd - z).abs() <= 0.05 * z.abs(),
                "theta {theta}: adjoint {z:e} finite difference {fd:e}"
            );
        }
    }
    assert!(checked >= 30, "only {checked} phases checked");
}

#[test]
fn inhibitory_curve_is_the_reflection() {
    let f = fixture();
    let inh = f.sol.bprc_for(Polarity::Inhibitory);
    assert!(inh.dtheta.iter().zip(&f.bprc.dtheta).all(|(a, b)| *a == -*b));
}

#[test]
fn three_segments_cover_the_cycle() {
    let f = fixture();
    let s = segment_decomposition(&f.bprc, &f.orbit);
    assert!(
        (s.active.0 - 0.04).abs() <= 0.05 && (s.active.1 - 0.45).abs() <= 0.05,
        "{s:?}"
    );
    assert!(
        (s.quiescent.0 - 0.45).abs() <= 0.05 && (s.quiescent.1 - 0.85).abs() <= 0.05,
        "{s:?}"
    );
    assert_eq!(s.active.1, s.quiescent.0);
    assert_eq!(s.quiescent.1, s.onset.0);
    assert_eq!(s.onset.1, s.active.0);
}

#[test]
fn active_segment_alternates_sign_spike_by_spike() {
    let f = fixture();
    let s = segment_decomposition(&f.bprc, &f.orbit);
    let vals: Vec<f64> = f
        .bprc
        .theta
        .iter()
        .zip(&f.bprc.dtheta)
        .filter(|(t, _)| **t >= s.active.0 && **t <= s.active.1)
        .map(|(_, d)| *d)
        .filter(|d| *d != 0.0)
        .collect();
    let crossings = vals.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
    assert!(crossings >= 10, "{crossings} sign changes");
}

#[test]
fn largest_response_follows_the_final_spike() {
    let f = fixture();
    let spikes = &f.orbit.markers.spike_phases;
    let last = spikes[spikes.len() - 1];
    let last_isi = last - spikes[spikes.len() - 2];
    let (theta_max, _) = f
        .bprc
        .theta
        .iter()
        .zip(&f.bprc.dtheta)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    assert!(
        (theta_max - last).abs() <= last_isi,
        "peak at {theta_max}, final spike at {last}"
    );
}
