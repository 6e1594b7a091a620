use obsbench_core::harness::{generate_profile, ProfileKind};
use obsbench_core::loadfile::Loadfile;
use obsbench_core::model::simulate;
use obsbench_core::reference::{reference_cell, reference_ocv};
use proptest::prelude::*;

#[test]
fn generated_profile_round_trips_through_csv() {
    let lf = generate_profile(ProfileKind::Fuds, 100_000.0, 1.0, 116.0).unwrap();
    assert_eq!(lf.len(), 100_000);
    let truth = simulate(&reference_cell(), &reference_ocv(), 0.9, &lf).unwrap();
    let lf = lf.with_voltage(&truth.voltages()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fuds.csv");
    lf.to_path(&path).unwrap();
    assert_eq!(Loadfile::from_path(&path).unwrap(), lf);
}

proptest! {
    #[test]
    fn arbitrary_samples_round_trip(
        steps in prop::collection::vec((1e-3..100.0f64, -500.0..500.0f64, 2.0..4.5f64), 1..200),
        t0 in -1e6..1e6f64,
    ) {
        let mut t = t0;
        let rows: Vec<(f64, f64)> = steps.iter().map(|&(dt, i, _)| { t += dt; (t, i) }).collect();
        let volts: Vec<f64> = steps.iter().map(|s| s.2).collect();
        let lf = Loadfile::from_current(rows).unwrap().with_voltage(&volts).unwrap();
        let mut buf = Vec::new();
        lf.write_csv(&mut buf).unwrap();
        prop_assert_eq!(Loadfile::read_csv(buf.as_slice()).unwrap(), lf);
    }
}
