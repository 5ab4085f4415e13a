use std::sync::OnceLock;

use hrburst::adjoint::{adjoint_bprc, AdjointConfig, PhaseResponseCurve};
use hrburst::direct::{
    direct_sweep, inject_and_measure, sweep_phases, Classification, DirectConfig, DirectError, PerturbationSpec,
};
use hrburst::{
    extract_spike_template, find_burst_orbit, BurstOrbit, ModelParams, OrbitConfig, Polarity, SpikeTemplate,
    SynapseParams,
};
use proptest::prelude::*;

struct Fixture {
    orbit: BurstOrbit,
    template: SpikeTemplate,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let orbit = find_burst_orbit(&ModelParams::default(), &OrbitConfig::default()).unwrap();
        let template = extract_spike_template(&orbit, 3).unwrap();
        Fixture { orbit, template }
    })
}

fn fine_adjoint() -> &'static PhaseResponseCurve {
    static A: OnceLock<PhaseResponseCurve> = OnceLock::new();
    A.get_or_init(|| {
        adjoint_bprc(
            &fixture().orbit,
            &AdjointConfig {
                resolution: 40_000,
                ..Default::default()
            },
        )
        .unwrap()
        .1
    })
}

fn measure(
    polarity: Polarity,
    gsyn: f64,
    theta: f64,
    n_orders: usize,
) -> Result<hrburst::direct::PerturbationResult, DirectError> {
    let f = fixture();
    let cfg = DirectConfig {
        n_orders,
        ..Default::default()
    };
    inject_and_measure(
        &f.orbit,
        &f.template,
        &PerturbationSpec::new(polarity, gsyn, theta),
        &cfg,
    )
}

/// Linear-response prediction per unit conductance: the delay-positive
/// adjoint curve weighted by the synaptic current along the unperturbed orbit,
/// with the gate integrated by classical RK4.
fn convolution_prediction(polarity: Polarity, theta: f64) -> f64 {
    let f = fixture();
    let (o, tpl) = (&f.orbit, &f.template);
    let sp = SynapseParams::with_polarity(polarity, 1.0);
    let bprc = fine_adjoint();
    let gate = |t: f64, s: f64| sp.alpha * sp.t_inf(tpl.eval(t.min(tpl.duration)).unwrap()) * (1.0 - s) - sp.beta * s;
    let drive = |t: f64, s: f64| {
        let v = o.state_at_time(theta * o.period + t)[0];
        bprc.value_at(theta + t / o.period) * s * (sp.vsyn - v)
    };
    let n = 20_000;
    let dt = tpl.duration / n as f64;
    let (mut s, mut acc) = (0.0, 0.0);
    for k in 0..n {
        let t = k as f64 * dt;
        let k1 = gate(t, s);
        let k2 = gate(t + 0.5 * dt, s + 0.5 * dt * k1);
        let k3 = gate(t + 0.5 * dt, s + 0.5 * dt * k2);
        let k4 = gate(t + dt, s + dt * k3);
        let s_next = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        acc += 0.5 * dt * (drive(t, s) + drive(t + dt, s_next));
        s = s_next;
    }
    acc
}

#[test]
fn weak_response_matches_the_adjoint_convolved_with_the_synaptic_current() {
    let g = 1e-4;
    for polarity in [Polarity::Excitatory, Polarity::Inhibitory] {
        for theta in [0.0, 0.1, 0.2, 0.27, 0.33, 0.36, 0.5, 0.7, 0.93] {
            let predicted = convolution_prediction(polarity, theta);
            // the second burst start has relaxed onto the asymptotic phase
            let measured = measure(polarity, g, theta, 2).unwrap().dtheta[1] / g;
            let scale = predicted.abs().max(1e-3);
            assert!(
                (measured - predicted).abs() <= 0.02 * scale,
                "{polarity:?} theta {theta}: measured {measured:e} predicted {predicted:e}"
            );
        }
    }
}

#[test]
fn null_perturbation_changes_nothing() {
    for theta in [0.0, 0.17, 0.41, 0.8] {
        let r = measure(Polarity::Inhibitory, 0.0, theta, 3).unwrap();
        assert!(r.dtheta.iter().all(|d| d.abs() < 1e-9), "{theta}: {:?}", r.dtheta);
        assert_eq!(r.spike_counts, vec![9; 4]);
        assert_eq!(r.classification, Classification::Shift);
    }
}

#[test]
fn higher_orders_carry_the_same_asymptotic_shift() {
    let r = measure(Polarity::Excitatory, 1e-3, 0.3, 3).unwrap();
    assert!((r.dtheta[1] - r.dtheta[2]).abs() < 1e-3 * r.dtheta[1].abs().max(1e-9));
    for (k, (d, per)) in r.dtheta.iter().zip(&r.dtheta_per_order).enumerate() {
        assert!((d / (k + 1) as f64 - per).abs() < 1e-15);
    }
}

#[test]
fn sweep_phase_layout() {
    let o = &fixture().orbit;
    let phases = sweep_phases(o, 500);
    let hmax = o.markers.hmax_phase.unwrap();
    assert_eq!(phases.len(), 500);
    assert_eq!(phases.iter().filter(|&&p| p < hmax).count(), 300);
    assert!(phases.windows(2).all(|w| w[1] > w[0]));
    assert!(phases[0] == 0.0 && *phases.last().unwrap() < 1.0);
}

#[test]
fn sweep_results_do_not_depend_on_scheduling() {
    let f = fixture();
    let phases = sweep_phases(&f.orbit, 16);
    let cfg = DirectConfig {
        n_orders: 1,
        ..Default::default()
    };
    let a = direct_sweep(&f.orbit, &f.template, Polarity::Excitatory, 0.1, &phases, &cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| direct_sweep(&f.orbit, &f.template, Polarity::Excitatory, 0.1, &phases, &cfg));
    let bits = |s: &hrburst::direct::DirectSweep| s.prc(1).dtheta.iter().map(|d| d.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.snrc(0), b.snrc(0));
}

#[test]
fn strong_inhibition_ends_the_burst_early() {
    let r = measure(Polarity::Inhibitory, 10.0, 0.17353846, 1).unwrap();
    assert_eq!(r.classification, Classification::EarlyTermination);
    assert!(r.spike_counts[0] < 9);
    assert!(r.dtheta[0] < -0.1);
}

#[test]
fn excitation_late_in_the_burst_adds_spikes() {
    let r = measure(Polarity::Excitatory, 1.0, 0.4, 1).unwrap();
    assert_eq!(r.classification, Classification::Addition);
    assert!(r.spike_counts[0] > 9);
}

#[test]
fn strong_excitation_in_quiescence_starts_the_next_burst_early() {
    let r = measure(Polarity::Excitatory, 10.0, 0.7, 1).unwrap();
    assert_eq!(r.classification, Classification::EarlyInitiation);
    assert!(r.dtheta[0] < 0.0);
}

#[test]
fn trajectory_is_kept_only_on_request() {
    let f = fixture();
    let spec = PerturbationSpec::new(Polarity::Excitatory, 1.0, 0.3);
    let kept = inject_and_measure(
        &f.orbit,
        &f.template,
        &spec,
        &DirectConfig {
            keep_trajectory: true,
            ..Default::default()
        },
    )
    .unwrap();
    let window = kept.window.as_ref().unwrap();
    assert!((window.t_end() - window.t_start() - f.template.duration).abs() < 1e-9);
    assert!(kept.post.is_some());
    let bare = measure(Polarity::Excitatory, 1.0, 0.3, 3).unwrap();
    assert!(bare.window.is_none() && bare.post.is_none());
    assert_eq!(bare.dtheta, kept.dtheta);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classification_agrees_with_spike_counts(theta in 0.0f64..1.0, log_g in -2.0f64..1.0, inhibitory in any::<bool>()) {
        let polarity = if inhibitory { Polarity::Inhibitory } else { Polarity::Excitatory };
        let hmax = fixture().orbit.markers.hmax_phase.unwrap();
        match measure(polarity, 10f64.powf(log_g), theta, 1) {
            Ok(r) => {
                let c0 = r.spike_counts[0];
                match r.classification {
                    Classification::Shift => prop_assert_eq!(c0, 9),
                    Classification::Addition => prop_assert!(c0 > 9),
                    Classification::Deletion | Classification::EarlyTermination => prop_assert!(c0 < 9),
                    Classification::EarlyInitiation => prop_assert!(theta >= hmax),
                    Classification::Silenced => prop_assert!(false, "silenced is reported as an error"),
                }
                prop_assert!(r.burst_starts.windows(2).all(|w| w[1] > w[0]));
                prop_assert!(r.spike_times.windows(2).all(|w| w[1] > w[0]));
            }
            Err(DirectError::Silenced { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
