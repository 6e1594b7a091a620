use obsbench_core::characterization::{
    extract_ocv, fit_pulse_pso, fit_pulse_pso_from, pso_minimize, pulse_rmse, segment_slopes,
    detect_pulse, LowCurrentTest, PsoConfig,
};
use obsbench_core::loadfile::Loadfile;
use obsbench_core::model::{simulate, OcvCurve};
use obsbench_core::reference::{reference_cell, reference_ocv, reference_ocv_fn};
use obsbench_core::Error;
use proptest::prelude::*;

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

#[test]
fn midpoint_recovers_true_ocv() {
    let g = grid(21);
    let truth: Vec<f64> = g.iter().map(|&s| reference_ocv_fn(s)).collect();
    let test = LowCurrentTest {
        charge: g.iter().zip(&truth).map(|(&s, &v)| (s, v + 0.005)).collect(),
        discharge: g.iter().zip(&truth).map(|(&s, &v)| (s, v - 0.005)).collect(),
    };
    let curve = extract_ocv(&test, &g).unwrap();
    for (bp, v) in curve.breakpoints().iter().zip(&truth) {
        assert!((bp.ocv - v).abs() <= 4.0 * f64::EPSILON * v.abs(), "{} vs {v}", bp.ocv);
    }
}

#[test]
fn identical_branches_are_idempotent() {
    let branch: Vec<(f64, f64)> = grid(11).iter().map(|&s| (s, reference_ocv_fn(s))).collect();
    let test = LowCurrentTest {
        charge: branch.clone(),
        discharge: branch.iter().rev().copied().collect(),
    };
    let curve = extract_ocv(&test, &grid(11)).unwrap();
    for (bp, (s, v)) in curve.breakpoints().iter().zip(&branch) {
        assert_eq!(bp.soc, *s);
        assert_eq!(bp.ocv, *v);
    }
}

#[test]
fn partial_range_is_extended_to_full_soc() {
    let g: Vec<f64> = (1..=19).map(|k| k as f64 / 20.0).collect();
    let branch: Vec<(f64, f64)> = g.iter().map(|&s| (s, 3.0 + s)).collect();
    let test = LowCurrentTest {
        charge: branch.clone(),
        discharge: branch,
    };
    let curve = extract_ocv(&test, &g).unwrap();
    assert_eq!(curve.breakpoints()[0].soc, 0.0);
    assert!((curve.eval(0.0).unwrap() - 3.0).abs() < 1e-12);
    assert!((curve.eval(1.0).unwrap() - 4.0).abs() < 1e-12);
    assert!(extract_ocv(&test, &grid(5)).is_err());
}

/// C/30 charge and discharge of the reference cell, OCV recovered within 2 mV.
#[test]
fn slow_cycle_recovers_ocv() {
    let p = reference_cell();
    let ocv = reference_ocv();
    let i = p.capacity_ah() / 30.0;
    let secs = (30.0 * 3600.0) as usize;
    let step = 10.0;
    let n = (secs as f64 / step) as usize;
    let branch = |sign: f64, soc0: f64| {
        let lf = Loadfile::from_current((0..n).map(|k| (k as f64 * step, sign * i))).unwrap();
        let tr = simulate(&p, &ocv, soc0, &lf).unwrap();
        tr.points
            .iter()
            .filter(|pt| pt.state.soc > 0.0 && pt.state.soc < 1.0)
            .map(|pt| (pt.state.soc, pt.voltage))
            .collect::<Vec<_>>()
    };
    let test = LowCurrentTest {
        charge: branch(1.0, 0.0),
        discharge: branch(-1.0, 1.0),
    };
    let g: Vec<f64> = (1..=19).map(|k| k as f64 / 20.0).collect();
    let curve = extract_ocv(&test, &g).unwrap();
    for k in 0..=90 {
        let s = 0.05 + 0.01 * k as f64;
        let err = (curve.eval(s).unwrap() - ocv.eval(s).unwrap()).abs();
        assert!(err < 2e-3, "soc {s}: {err}");
    }
}

fn pulse_profile() -> Loadfile {
    let i = -58.0;
    Loadfile::from_current((0..1500).map(|k| {
        let t = k as f64;
        let cur = if (10..40).contains(&k) { i } else { 0.0 };
        (t, cur)
    }))
    .unwrap()
}

fn measured_pulse() -> Loadfile {
    let p = reference_cell();
    let lf = pulse_profile();
    let tr = simulate(&p, &reference_ocv(), 0.7, &lf).unwrap();
    lf.with_voltage(&tr.voltages()).unwrap()
}

#[test]
fn pulse_detection_and_jump_guess() {
    let lf = measured_pulse();
    let w = detect_pulse(&lf, 5.8).unwrap();
    assert_eq!(w.onset, 9);
    assert_eq!(w.end, 1499);
    assert!((w.r_ohm_guess / reference_cell().r_ohm - 1.0).abs() < 0.01);
    let flat = Loadfile::from_current((0..20).map(|k| (k as f64, 0.0)))
        .unwrap()
        .with_voltage(&[3.5; 20])
        .unwrap();
    assert!(matches!(fit_pulse_pso(&flat, &reference_ocv(), &PsoConfig::default()), Err(Error::Domain(_))));
}

#[test]
fn objective_vanishes_at_truth() {
    let lf = measured_pulse();
    let w = detect_pulse(&lf, 5.8).unwrap();
    let e = pulse_rmse(&lf, &reference_ocv(), &reference_cell(), 0.7, &w).unwrap();
    assert!(e < 1e-12, "{e}");
}

#[test]
fn pso_recovers_synthetic_pulse_parameters() {
    let truth = reference_cell();
    let lf = measured_pulse();
    let cfg = PsoConfig {
        seed: 7,
        ..PsoConfig::default()
    };
    let fit = fit_pulse_pso(&lf, &reference_ocv(), &cfg).unwrap();
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    assert!(rel(fit.params.r_ohm, truth.r_ohm) < 0.02, "{:?}", fit.params);
    assert!(rel(fit.params.tau_a(), truth.tau_a()) < 0.10, "{:?}", fit.params);
    assert!(rel(fit.params.tau_b(), truth.tau_b()) < 0.10, "{:?}", fit.params);
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    let again = fit_pulse_pso(&lf, &reference_ocv(), &cfg).unwrap();
    assert_eq!(fit, again);
}

#[test]
fn two_particles_at_optimum_stay_put() {
    let truth = reference_cell();
    let lf = measured_pulse();
    let cfg = PsoConfig {
        swarm_size: 2,
        iterations: 20,
        soc0: Some(0.7),
        ..PsoConfig::default()
    };
    let fit = fit_pulse_pso_from(&lf, &reference_ocv(), &cfg, &[truth, truth]).unwrap();
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    assert!(rel(fit.params.r_ohm, truth.r_ohm) < 1e-12);
    assert!(rel(fit.params.c_a, truth.c_a) < 1e-12);
    assert!(rel(fit.params.c_b, truth.c_b) < 1e-12);
    assert!(fit.rmse < 1e-12);
}

#[test]
fn pso_respects_bounds_and_is_monotone() {
    let bounds = [(-2.0, 3.0), (0.5, 1.5)];
    let cfg = PsoConfig {
        swarm_size: 20,
        iterations: 60,
        seed: 3,
        ..PsoConfig::default()
    };
    let out = pso_minimize(|x| (x[0] - 10.0).powi(2) + (x[1] - 1.0).powi(2), &bounds, &cfg, &[]).unwrap();
    assert!(out.best[0] <= 3.0 && 3.0 - out.best[0] < 1e-2, "{:?}", out.best);
    assert!(out.best_value - 49.0 < 1e-2, "{}", out.best_value);
    assert!((0.5..=1.5).contains(&out.best[1]));
    assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    let fail = pso_minimize(|_| f64::NAN, &bounds, &cfg, &[]);
    assert!(matches!(fail, Err(Error::Identification(_))));
}

fn monotone_curve() -> impl Strategy<Value = OcvCurve> {
    prop::collection::vec((0.01f64..1.0, 0.001f64..0.5), 1..30).prop_map(|steps| {
        let total: f64 = steps.iter().map(|s| s.0).sum();
        let mut s = 0.0;
        let mut v = 3.0;
        let mut pts = vec![(0.0, v)];
        for (k, (ds, dv)) in steps.iter().enumerate() {
            s = if k + 1 == steps.len() { 1.0 } else { s + ds / total };
            v += dv;
            pts.push((s, v));
        }
        OcvCurve::new(pts).unwrap()
    })
}

proptest! {
    #[test]
    fn segment_lines_are_continuous(curve in monotone_curve()) {
        let segs = segment_slopes(&curve);
        let bps = curve.breakpoints();
        for k in 1..bps.len() - 1 {
            let s = bps[k].soc;
            let left = segs[k - 1].0 * s + segs[k - 1].1;
            let right = segs[k].0 * s + segs[k].1;
            prop_assert!((left - right).abs() < 1e-12 * (1.0 + segs[k].0.abs().max(segs[k - 1].0.abs())));
        }
    }

    #[test]
    fn extraction_is_branch_symmetric(
        offs in prop::collection::vec(-0.02f64..0.02, 11),
        offs2 in prop::collection::vec(-0.02f64..0.02, 11),
    ) {
        let g = grid(11);
        let a: Vec<(f64, f64)> = g.iter().zip(&offs).map(|(&s, o)| (s, 3.0 + 0.5 * s + o * 0.01)).collect();
        let b: Vec<(f64, f64)> = g.iter().zip(&offs2).map(|(&s, o)| (s, 3.0 + 0.5 * s + o * 0.01)).collect();
        let fwd = extract_ocv(&LowCurrentTest { charge: a.clone(), discharge: b.clone() }, &g);
        let rev = extract_ocv(&LowCurrentTest { charge: b, discharge: a }, &g);
        prop_assert_eq!(fwd.is_ok(), rev.is_ok());
        if let (Ok(f), Ok(r)) = (fwd, rev) {
            prop_assert_eq!(f.breakpoints(), r.breakpoints());
        }
    }
}
