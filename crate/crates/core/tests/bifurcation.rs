use hrburst::bifurcation::{
    cycle_family, equilibria_at, equilibrium_branches, homoclinic_h, hopf_points, saddle_at, saddle_node_points,
    CycleStepControl, EquilibriumSample, HomoclinicConfig, Stability,
};
use hrburst::{fast_jacobian, fast_rhs, find_fast_orbit, FastState, ModelParams, OrbitConfig, OrbitError};
use proptest::prelude::*;

fn hc() -> f64 {
    homoclinic_h(&ModelParams::default(), &HomoclinicConfig::default())
        .unwrap()
        .h
}

#[test]
fn special_points_satisfy_their_defining_conditions() {
    let p = ModelParams::default();
    for lp in saddle_node_points(&p) {
        let j = fast_jacobian(&FastState::new(lp.v, lp.n), lp.h, &p);
        assert!(j.determinant().abs() <= 1e-10, "{lp:?}");
    }
    for hp in hopf_points(&p).unwrap() {
        let j = fast_jacobian(&FastState::new(hp.v, hp.n), hp.h, &p);
        assert!(j.trace().abs() <= 1e-10, "{hp:?}");
        assert!(j.determinant() > 0.0, "Hopf needs a complex pair");
    }
}

#[test]
fn stability_changes_only_at_special_points() {
    let p = ModelParams::default();
    let branches = equilibrium_branches(&p, (-3.0, 3.0), 6001);
    let mut special: Vec<f64> = saddle_node_points(&p).iter().map(|b| b.v).collect();
    special.extend(hopf_points(&p).unwrap().iter().map(|b| b.v));
    let dv = 6.0 / 6000.0;
    for pair in branches.windows(2) {
        let a = pair[0].samples.last().unwrap();
        let b = pair[1].samples[0];
        let node_focus = |s: Stability| match s {
            Stability::StableNode | Stability::StableFocus => 0,
            Stability::UnstableNode | Stability::UnstableFocus => 1,
            Stability::Saddle => 2,
        };
        if node_focus(a.stability) == node_focus(b.stability) {
            continue;
        }
        assert!(
            special.iter().any(|&v| v >= a.v - dv && v <= b.v + dv),
            "stability change between V={} and V={} away from any special point",
            a.v,
            b.v
        );
    }
}

#[test]
fn three_equilibria_inside_the_fold_window() {
    let p = ModelParams::default();
    for h in [1.82, 2.0, 2.5, 2.99] {
        let vs = equilibria_at(&p, h);
        assert_eq!(vs.len(), 3, "h = {h}");
        let middle = EquilibriumSample::at_v(&p, vs[1]);
        assert_eq!(middle.stability, Stability::Saddle);
    }
    assert_eq!(equilibria_at(&p, 1.8).len(), 1);
}

#[test]
fn saddle_has_one_unstable_and_one_stable_direction() {
    let p = ModelParams::default();
    for k in 0..=20 {
        let h = 1.82 + (2.08 - 1.82) * k as f64 / 20.0;
        let s = saddle_at(&p, h).unwrap();
        assert!(s.lambda_unstable > 0.0 && s.lambda_stable < 0.0, "h = {h}");
        assert!(s.lambda_stable.abs() > s.lambda_unstable.abs());
    }
}

#[test]
fn cycle_family_ends_at_the_homoclinic() {
    let p = ModelParams::default();
    let fam = cycle_family(&p, 1.7, 2.2, &CycleStepControl::default()).unwrap();
    let end = fam.terminal_h.unwrap();
    assert!((end - 2.08560088198).abs() <= 1e-3, "{end}");
    let n = fam.samples.len();
    let tail = &fam.samples[n - n / 10..];
    assert!(tail.windows(2).all(|w| w[1].period > w[0].period));
    for h in [1.8, 1.95, 2.085] {
        assert!(
            fam.samples.iter().any(|s| (s.h - h).abs() < 0.006),
            "no sample near {h}"
        );
    }
}

#[test]
fn homoclinic_bracket() {
    let p = ModelParams::default();
    let cfg = OrbitConfig::default();
    let h = hc();
    assert!((h - 2.08560088198).abs() <= 1e-4, "{h}");
    let before = find_fast_orbit(h - 0.01, &p, &cfg).unwrap();
    assert!(matches!(
        find_fast_orbit(h + 0.01, &p, &cfg),
        Err(OrbitError::NoOrbitAtThisH(_))
    ));
    // the orbit approaches the saddle as h nears the homoclinic
    let gap = |o: &hrburst::SpikeOrbit, h: f64| {
        let s = saddle_at(&p, h).unwrap();
        o.samples
            .iter()
            .map(|q| (q.state[0] - s.v).hypot(q.state[1] - s.n))
            .fold(f64::INFINITY, f64::min)
    };
    let far = find_fast_orbit(h - 0.05, &p, &cfg).unwrap();
    let near = find_fast_orbit(h - 1e-4, &p, &cfg).unwrap();
    assert!(gap(&near, h - 1e-4) < gap(&before, h - 0.01));
    assert!(gap(&before, h - 0.01) < gap(&far, h - 0.05));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn equilibrium_samples_are_fixed_points(v in -3.0f64..3.0) {
        let p = ModelParams::default();
        let e = EquilibriumSample::at_v(&p, v);
        prop_assert_eq!(e.n, p.c - p.d * v * v);
        let f = fast_rhs(&FastState::new(e.v, e.n), e.h, &p);
        prop_assert!(f.v.abs() <= 1e-12 && f.n.abs() <= 1e-12);
    }

    #[test]
    fn equilibria_at_inverts_the_curve(h in 0.0f64..4.0) {
        let p = ModelParams::default();
        for v in equilibria_at(&p, h) {
            prop_assert!((p.equilibrium_h_of_v(v) - h).abs() <= 1e-10);
        }
    }
}
