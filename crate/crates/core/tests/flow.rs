use std::f64::consts::PI;

use proptest::prelude::*;

use ymflow::field::{max_norm, AlgebraField, Connection, Lattice};
use ymflow::flow::*;
use ymflow::harness::InitialData;
use ymflow::lie::Group;

fn run(a0: Connection, cfg: FlowConfig) -> FlowState {
    let mut st = FlowState::new(a0, cfg).unwrap();
    st.run().unwrap();
    st
}

fn mode(lat: Lattice, group: Group, amplitude: f64) -> Connection {
    InitialData::AbelianMode {
        k: vec![0, 1],
        polarization: 0,
        amplitude,
    }
    .generate(lat, group)
    .unwrap()
}

/// Transverse mode `k = (0, 1)`: `d*d` acts as `λ = 4/h² sin²(π/L)`.
fn symbol(lat: &Lattice) -> f64 {
    let h = lat.spacing();
    4.0 / (h * h) * (PI / lat.extent(1) as f64).sin().powi(2)
}

#[test]
fn abelian_mode_decays_by_discrete_factor() {
    let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
    let lambda = symbol(&lat);
    for (scheme, amp) in [(Scheme::Euler, 1.0), (Scheme::Rk4, 1.0)] {
        let cfg = FlowConfig {
            scheme,
            t_end: 0.05,
            ..FlowConfig::default()
        };
        let st = run(mode(lat, Group::U1, amp), cfg);
        let z = st.dt() * lambda;
        let factor = match scheme {
            Scheme::Euler => 1.0 - z,
            Scheme::Rk4 => 1.0 - z + z * z / 2.0 - z.powi(3) / 6.0 + z.powi(4) / 24.0,
        };
        let expected = st.initial_energy() * factor.powi(2 * st.steps() as i32);
        assert!((st.energy() - expected).abs() <= 1e-12 * st.initial_energy(), "{scheme:?}");
    }
}

#[test]
fn su2_abelian_mode_matches_u1() {
    // Values along one generator never see the bracket.
    let lat = Lattice::cubic(2, 8, 1.0 / 8.0).unwrap();
    let cfg = FlowConfig {
        t_end: 0.05,
        ..FlowConfig::default()
    };
    let u = run(mode(lat, Group::U1, 0.7), cfg);
    let s = run(mode(lat, Group::Su2, 0.7), cfg);
    let ratio = u.energy() / u.initial_energy() - s.energy() / s.initial_energy();
    assert!(ratio.abs() <= 1e-13);
}

#[test]
fn zero_connection_is_stationary() {
    let lat = Lattice::cubic(3, 4, 0.25).unwrap();
    for variant in [Variant::Raw, Variant::DeTurck] {
        let cfg = FlowConfig {
            variant,
            t_end: 0.02,
            ..FlowConfig::default()
        };
        let st = run(Connection::zeros(lat, Group::Su2), cfg);
        assert_eq!(max_norm(st.connection()), 0.0);
        assert_eq!(st.energy_identity_residual(), 0.0);
    }
}

#[test]
fn deturck_reconstruction_tracks_raw_flow() {
    let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
    let a0 = InitialData::RandomSmooth {
        seed: 3,
        band: 1,
        amplitude: 0.5,
    }
    .generate(lat, Group::Su2)
    .unwrap();
    let raw = run(a0.clone(), FlowConfig::default());
    let dt = run(
        a0,
        FlowConfig {
            variant: Variant::DeTurck,
            ..FlowConfig::default()
        },
    );
    assert!(dt.gauge().is_some());
    let back = dt.raw_connection().unwrap();
    let err = ymflow::field::l2(&back.sub(raw.connection())) / ymflow::field::l2(raw.connection());
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn step_above_stability_bound_is_rejected() {
    let lat = Lattice::cubic(2, 8, 1.0 / 8.0).unwrap();
    let cfl = lat.cfl_bound();
    let ok = FlowConfig {
        scheme: Scheme::Rk4,
        dt: TimeStep::Fixed(1.3 * cfl),
        ..FlowConfig::default()
    };
    assert!(ok.step_size(&lat).is_ok());
    let euler = FlowConfig { scheme: Scheme::Euler, ..ok };
    assert!(matches!(euler.step_size(&lat), Err(FlowError::Cfl { .. })));
    let err = FlowState::new(Connection::zeros(lat, Group::U1), euler).unwrap_err();
    assert!(err.to_string().contains("h²/(2n)"));
}

#[test]
fn blow_up_stops_as_singular() {
    // Far outside the small-data regime the cubic term outruns the step.
    let lat = Lattice::cubic(2, 8, 1.0 / 8.0).unwrap();
    let a0 = InitialData::RandomSmooth {
        seed: 1,
        band: 1,
        amplitude: 1e4,
    }
    .generate(lat, Group::Su2)
    .unwrap();
    let cfg = FlowConfig {
        t_end: 1.0,
        ..FlowConfig::default()
    };
    let mut st = FlowState::new(a0, cfg).unwrap();
    let err = (0..200).find_map(|_| st.step().err());
    match err {
        Some(FlowError::Singular { sites, max_curvature, .. }) => {
            assert!(!sites.is_empty());
            assert!(max_curvature > OVERFLOW_GUARD || max_curvature.is_nan());
        }
        other => panic!("expected a singular stop, got {other:?}"),
    }
    assert!(st.connection().is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_never_increases(seed in any::<u64>(), amp in 0.05..1.5f64, rk4 in any::<bool>()) {
        let lat = Lattice::cubic(2, 8, 1.0 / 8.0).unwrap();
        let a0 = InitialData::RandomSmooth { seed, band: 1, amplitude: amp }.generate(lat, Group::Su2).unwrap();
        let cfg = FlowConfig {
            scheme: if rk4 { Scheme::Rk4 } else { Scheme::Euler },
            t_end: 0.03,
            ..FlowConfig::default()
        };
        let st = run(a0, cfg);
        let tol = 1e-12 * st.initial_energy().max(1.0);
        let mut prev = st.initial_energy();
        for row in st.history() {
            prop_assert!(row.ym_energy <= prev + tol);
            prev = row.ym_energy;
        }
    }

    #[test]
    fn gauge_composition_is_exact_on_links(seed in any::<u64>()) {
        let lat = Lattice::cubic(2, 6, 1.0 / 6.0).unwrap();
        let a = InitialData::RandomSmooth { seed, band: 1, amplitude: 0.3 }.generate(lat, Group::Su2).unwrap();
        let s1 = ymflow::field::GaugeTransform::exp_of(&ymflow::harness::smooth_section(lat, Group::Su2, seed ^ 1, 1, 0.2));
        let s2 = ymflow::field::GaugeTransform::exp_of(&ymflow::harness::smooth_section(lat, Group::Su2, seed ^ 2, 1, 0.2));
        let lhs = apply_gauge(&s2, &apply_gauge(&s1, &a).unwrap()).unwrap();
        let rhs = apply_gauge(&s1.compose(&s2), &a).unwrap();
        prop_assert!(max_norm(&lhs.sub(&rhs)) <= 1e-10);
    }
}
