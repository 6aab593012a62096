mod common;

use common::reference_families;
use pinbridge::ident::{route_consistency, Condition};
use pinbridge::quad::integrate_numeric;
use pinbridge::{
    check_pinning, identify_gaussian_bridge, same_bridges, BridgeVerdict, FamilySpec, IdentConfig,
    ItoSpec, PinningOutcome, SigmaTotal, TimeFunction,
};

#[test]
fn remark24_is_pinned_without_the_exponential_weight_condition() {
    let family = FamilySpec::new("remark24").build().unwrap();
    let v = check_pinning(&family, &IdentConfig::default()).unwrap();
    assert_eq!(v.overall, PinningOutcome::PinnedByA1A2);
    match v.sigma_total {
        SigmaTotal::Finite(s) => assert!((s - 1.0).abs() < 1e-8),
        other => panic!("{other:?}"),
    }
    assert_eq!(v.a2_prime, Condition::Fails);
    assert_eq!(v.a2_prime_profiles.len(), 5);
    assert!(v
        .a2_prime_profiles
        .iter()
        .all(|p| p.outcome == Condition::Fails));

    // exp(2 H(r)) with H(r) = r / (1 - r) - log(1 - r)
    let weight = TimeFunction::new("exp(2H)", |r: f64| {
        (2.0 * (r / (1.0 - r) - (-r).ln_1p())).exp()
    });
    for t in [0.3f64, 0.5, 0.7] {
        let closed = 0.5 * (2.0 * t / (1.0 - t)).exp_m1();
        let quad = integrate_numeric(&weight, 0.0, t, 1e-12).unwrap();
        assert!(
            (quad - closed).abs() <= 1e-6 * closed,
            "{t}: {quad} vs {closed}"
        );
    }
}

#[test]
fn bridge_identification_verdicts() {
    let cfg = IdentConfig::default();
    for spec in [
        FamilySpec::new("f_wiener"),
        FamilySpec::new("f_wiener").param("slope", 1.0),
    ] {
        let r = identify_gaussian_bridge(&spec.build().unwrap(), &cfg).unwrap();
        assert_eq!(r.verdict, BridgeVerdict::IsBridgeFamily);
        assert!(r.residual < 1e-7);
    }
    let alpha2 = FamilySpec::new("alpha_pinned")
        .param("alpha", 2.0)
        .build()
        .unwrap();
    let r = identify_gaussian_bridge(&alpha2, &cfg).unwrap();
    assert_eq!(r.verdict, BridgeVerdict::NotBridgeFamily);
    assert!(r.residual >= 0.5);
    assert_eq!(r.residual_profile[0].t, 0.0);
    assert!((r.residual_profile[0].residual.unwrap() - 1.0).abs() < 1e-6);

    let ag = FamilySpec::new("alpha_gamma_pinned")
        .param("alpha", 1.0)
        .param("gamma", 1.0)
        .build()
        .unwrap();
    let r = identify_gaussian_bridge(&ag, &cfg).unwrap();
    assert_eq!(r.verdict, BridgeVerdict::NotBridgeFamily);
    assert!(r.residual >= 0.5);
}

#[test]
fn numeric_only_families_reach_the_same_verdicts() {
    let cfg = IdentConfig::default();
    for family in reference_families() {
        let a = identify_gaussian_bridge(&family, &cfg).unwrap();
        let b = identify_gaussian_bridge(&family.numeric_only(), &cfg).unwrap();
        assert_eq!(a.verdict, b.verdict, "{}", family.name);
    }
}

#[test]
fn three_routes_agree_on_every_reference_family() {
    let cfg = IdentConfig::default();
    for family in reference_families() {
        let r = route_consistency(&family, &cfg).unwrap();
        assert!(r.agree, "{}: {r:?}", family.name);
        let bridge = family.name == "brownian_bridge" || family.name == "f_wiener";
        assert_eq!(
            r.identification == BridgeVerdict::IsBridgeFamily,
            bridge,
            "{}",
            family.name
        );
    }
}

#[test]
fn same_bridges_oracle() {
    let cfg = IdentConfig::default();
    let probe = cfg.probe_set().with_y_offsets(&[-1.0, 0.0, 1.0, 2.0]);
    let linear = FamilySpec::new("f_wiener")
        .param("slope", 1.0)
        .build()
        .unwrap();
    for y in [-1.0, 0.0, 2.0] {
        let r = same_bridges(
            &ItoSpec::driftless(&linear),
            &ItoSpec::pinned_drift(&linear, y),
            &probe,
            1e-6,
        )
        .unwrap();
        assert!(r.same, "y = {y}: {r:?}");
    }
    let alpha2 = FamilySpec::new("alpha_pinned")
        .param("alpha", 2.0)
        .build()
        .unwrap();
    let (a, b) = (
        ItoSpec::pinned_drift(&alpha2, 0.0),
        ItoSpec::pinned_drift(&alpha2, 1.0),
    );
    assert!(!same_bridges(&a, &b, &probe, 1e-6).unwrap().same);
    let origin = pinbridge::ProbeSet {
        times: vec![0.0],
        zs: vec![0.0],
    };
    let fa = pinbridge::reciprocal_char(&a, &origin)
        .unwrap()
        .f(0.0, 0.0)
        .unwrap();
    let fb = pinbridge::reciprocal_char(&b, &origin)
        .unwrap()
        .f(0.0, 0.0)
        .unwrap();
    assert!((fb - fa - (-2.0)).abs() < 1e-12);
    assert!((fa - fb).abs() >= 1.0);
}

#[test]
fn driftless_characteristics_on_probe_set() {
    let cfg = IdentConfig::default();
    let probe = cfg.probe_set();
    for family in reference_families() {
        let c = pinbridge::reciprocal_char(&ItoSpec::driftless(&family), &probe).unwrap();
        for (t, z) in probe.points() {
            assert_eq!(c.f(t, z).unwrap(), 0.0);
            let s2 = family.sigma_sq.value(t);
            assert!((c.rho_sq(t, z) - s2).abs() <= 1e-14 * s2);
        }
    }
}
