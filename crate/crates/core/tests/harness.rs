use ymflow::field::{d_star_one_form, l2, max_norm, AlgebraField, Lattice};
use ymflow::harness::*;
use ymflow::lie::Group;

fn lat16() -> Lattice {
    Lattice::cubic(2, 16, 1.0 / 16.0).unwrap()
}

#[test]
fn band_must_fit_the_lattice() {
    let lat = Lattice::cubic(2, 8, 0.125).unwrap();
    let ok = InitialData::RandomSmooth { seed: 1, band: 1, amplitude: 0.1 };
    let bad = InitialData::RandomSmooth { seed: 1, band: 2, amplitude: 0.1 };
    assert!(ok.validate(&lat).is_ok());
    assert!(bad.validate(&lat).is_err());
    let tilted = InitialData::AbelianMode { k: vec![1, 1], polarization: 0, amplitude: 1.0 };
    assert!(tilted.validate(&lat).is_err());
}

#[test]
fn random_smooth_is_bounded_and_reproducible() {
    let init = InitialData::RandomSmooth { seed: 9, band: 2, amplitude: 0.3 };
    let a = init.generate(lat16(), Group::Su2).unwrap();
    assert_eq!(a, init.generate(lat16(), Group::Su2).unwrap());
    let coord_max = a.values().iter().flat_map(|v| v.coords()).fold(0.0f64, |m, c| m.max(c.abs()));
    assert!(coord_max <= 0.3 + 1e-15);
    let other = InitialData::RandomSmooth { seed: 10, band: 2, amplitude: 0.3 };
    assert_ne!(a, other.generate(lat16(), Group::Su2).unwrap());
}

#[test]
fn perturbation_is_divergence_free_with_unit_norm() {
    let b = divergence_free_perturbation(lat16(), Group::Su2, 3, 2).unwrap();
    assert!((l2(&b) - 1.0).abs() <= 1e-12);
    assert!(max_norm(&d_star_one_form(&b)) <= 1e-10);
}

#[test]
fn zero_data_passes_every_experiment() {
    let mut spec = ExperimentSpec::new("zero", Lattice::cubic(2, 8, 0.125).unwrap(), Group::Su2, InitialData::Zero);
    spec.levels = 2;
    spec.samples = 4;
    assert!(run_equivalence(&spec).unwrap().pass());
    assert!(run_energy_decay(&spec).unwrap().checks.iter().filter(|c| c.name.starts_with("monotone")).all(|c| c.pass));
    assert!(run_gauge_quality(&spec).unwrap().pass());
}

#[test]
fn uniqueness_twin_runs_are_bitwise_equal() {
    let mut spec = ExperimentSpec::new(
        "twins",
        lat16(),
        Group::Su2,
        InitialData::RandomSmooth { seed: 2, band: 1, amplitude: 0.05 },
    );
    spec.flow.t_end = 0.02;
    spec.samples = 5;
    let rep = run_uniqueness(&spec, &[0.0, 1e-3, 1e-4], 5).unwrap();
    let zero = rep.checks.iter().find(|c| c.name == "zero_delta_bitwise").unwrap();
    assert!(zero.pass);
    assert!(rep.pass(), "{:?}", rep.checks);
}

#[test]
fn reports_write_summary_and_tables() {
    let mut spec = ExperimentSpec::new(
        "written",
        Lattice::cubic(2, 8, 0.125).unwrap(),
        Group::Su2,
        InitialData::RandomSmooth { seed: 2, band: 1, amplitude: 0.2 },
    );
    spec.levels = 2;
    spec.refinement = Refinement::TimeStep;
    let rep = run_energy_decay(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rep.write(dir.path()).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "energy_decay");
    assert_eq!(json["levels"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("diagnostics_level0.csv").exists());
    assert_eq!(rep.order("identity_residual").unwrap().len(), 1);
}

#[test]
fn invalid_spec_is_refused() {
    let mut spec = ExperimentSpec::new("bad", lat16(), Group::U1, InitialData::Zero);
    spec.levels = 0;
    assert!(spec.validate().is_err());
    spec.levels = 1;
    spec.flow.t_end = -1.0;
    assert!(spec.validate().is_err());
}
