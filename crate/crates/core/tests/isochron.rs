use hrburst::bifurcation::Stability;
use hrburst::isochron::{
    asymptotic_phase, compute_isochron, isochron_portrait, perturbation_trace, IsochronConfig, IsochronError,
    TraceStatus,
};
use hrburst::{find_fast_orbit, ModelParams, OrbitConfig, SpikeOrbit};

fn quick() -> IsochronConfig {
    IsochronConfig {
        seeds: 12,
        max_points: 40,
        ..Default::default()
    }
}

fn fast_orbit(h: f64) -> SpikeOrbit {
    find_fast_orbit(h, &ModelParams::default(), &OrbitConfig::default()).unwrap()
}

fn tenths() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

/// Phase shift of a V displacement at `theta`, positive = delay.
fn shift(o: &SpikeOrbit, theta: f64, eps: f64) -> Option<f64> {
    let x = o.state_at_phase(theta);
    let cfg = IsochronConfig::default();
    let new = asymptotic_phase(o, [x[0] + eps, x[1]], &cfg).unwrap()?;
    Some((theta - new + 0.5).rem_euclid(1.0) - 0.5)
}

#[test]
fn isochron_points_return_to_their_phase() {
    let o = fast_orbit(1.8);
    let iso = compute_isochron(&o, 0.3, &quick()).unwrap();
    assert_eq!(iso.inner[0].state(), iso.base);
    let retained: Vec<_> = iso.retained().collect();
    assert!(retained.len() >= 10);
    let pass = retained.iter().filter(|p| p.return_error <= 1e-2).count();
    assert!(pass as f64 >= 0.9 * retained.len() as f64, "{pass}/{}", retained.len());
}

#[test]
fn invalid_phase_is_rejected() {
    let o = fast_orbit(1.8);
    assert!(matches!(
        compute_isochron(&o, 1.0, &quick()),
        Err(IsochronError::InvalidPhase(_))
    ));
}

#[test]
fn portrait_reports_the_equilibria_inside_and_outside_the_fold() {
    let p = ModelParams::default();
    let one = isochron_portrait(1.8, &[0.0], &p, &OrbitConfig::default(), &quick()).unwrap();
    assert_eq!(one.equilibria.len(), 1);
    assert!(!one.equilibria[0].stability.is_stable());
    let three = isochron_portrait(1.95, &[0.0], &p, &OrbitConfig::default(), &quick()).unwrap();
    let kinds: Vec<Stability> = three.equilibria.iter().map(|e| e.stability).collect();
    assert_eq!(kinds.len(), 3);
    assert!(kinds[0].is_stable());
    assert_eq!(kinds[1], Stability::Saddle);
    assert!(!three.v_nullcline.is_empty() && !three.n_nullcline.is_empty());
}

#[test]
fn zero_displacement_gives_zero_shift() {
    let p = ModelParams::default();
    let set = isochron_portrait(1.8, &tenths(), &p, &OrbitConfig::default(), &quick()).unwrap();
    let prc = perturbation_trace(&set, 0.0, 20, &quick()).unwrap();
    assert!(prc
        .samples
        .iter()
        .all(|s| s.dtheta == Some(0.0) && s.status == TraceStatus::Ok));
    assert!(matches!(
        perturbation_trace(
            &isochron_portrait(1.8, &[0.0, 0.5], &p, &OrbitConfig::default(), &quick()).unwrap(),
            0.05,
            4,
            &quick()
        ),
        Err(IsochronError::TooFewIsochrons { .. })
    ));
}

#[test]
fn depolarization_advances_the_recovery_half_of_the_spike() {
    let o = fast_orbit(1.8);
    for k in 1..=14 {
        let theta = 0.1 + 0.05 * k as f64;
        let d = shift(&o, theta, 0.05).unwrap();
        assert!(d < 0.0, "theta {theta}: {d}");
    }
}

#[test]
fn displacement_near_the_homoclinic_can_leave_the_basin() {
    let near = fast_orbit(2.085);
    let far = fast_orbit(1.8);
    let grid: Vec<f64> = (0..40).map(|k| k as f64 / 40.0).collect();
    assert!(grid.iter().all(|&th| shift(&far, th, 0.05).is_some()));
    assert!(grid.iter().any(|&th| shift(&near, th, 0.05).is_none()));
}

#[test]
fn inner_branch_spirals_around_the_unstable_focus() {
    let p = ModelParams::default();
    let cfg = IsochronConfig {
        seeds: 400,
        max_points: 1000,
        ..Default::default()
    };
    let set = isochron_portrait(1.8, &[0.4], &p, &OrbitConfig::default(), &cfg).unwrap();
    let e = set.equilibria[0];
    let winding = set.isochrons[0].inner_winding([e.v, e.n]);
    assert!(winding.abs() > 2.0 * std::f64::consts::PI, "{winding}");
}

#[test]
#[ignore = "the largest delay sits at the same phase for h = 1.8 and h = 1.95"]
fn delay_peak_moves_toward_the_spike_as_h_grows() {
    let peak = |h: f64| {
        let o = fast_orbit(h);
        (0..200)
            .map(|k| 0.9 + 0.1 * k as f64 / 200.0)
            .filter_map(|th| shift(&o, th, 0.05).map(|d| (th, d)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    let (lo, hi) = (peak(1.8), peak(1.95));
    assert!(hi > lo, "peak at {lo} for h=1.8 and {hi} for h=1.95");
}

#[test]
#[ignore = "isochron clearance from the equilibrium is not monotone in h"]
fn clearance_shrinks_toward_the_homoclinic() {
    let p = ModelParams::default();
    let c: Vec<f64> = [1.8, 1.95, 2.085]
        .iter()
        .map(|&h| {
            let set = isochron_portrait(h, &tenths(), &p, &OrbitConfig::default(), &IsochronConfig::default()).unwrap();
            set.clearance(0.5, 0.1).unwrap()
        })
        .collect();
    assert!(c[0] > c[1] && c[1] > c[2], "{c:?}");
}
