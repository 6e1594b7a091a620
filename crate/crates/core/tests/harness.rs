use obsbench_core::harness::report::{comparison_csv, metrics_json, trajectory_csv};
use obsbench_core::harness::*;
use obsbench_core::loadfile::Loadfile;
use obsbench_core::model::{simulate, Discretization};
use obsbench_core::observers::{ObserverGains, ObserverVariant};
use obsbench_core::reference::{reference_cell, reference_ocv};
use obsbench_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_metrics(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let mut max = 0.0f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for i in 0..a.len() {
        let d = (a[i] - b[i]).abs();
        max = max.max(d);
        sq += d * d;
        abs += d;
    }
    (max, (sq / n).sqrt(), abs / n)
}

#[test]
fn metrics_match_naive_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10_000 {
        let n = rng.random_range(1..64);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = compute_metrics(&a, &b).unwrap();
        let (max, rmse, mae) = naive_metrics(&a, &b);
        assert!((m.max_ae - max).abs() < 1e-12);
        assert!((m.rmse - rmse).abs() < 1e-12);
        assert!((m.mae - mae).abs() < 1e-12);
    }
}

#[test]
fn metrics_hand_example() {
    let m = compute_metrics(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
    assert_eq!(m.max_ae, 4.0);
    assert_eq!(m.mae, 3.5);
    assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-15);
    assert!(matches!(compute_metrics(&[], &[]), Err(Error::Domain(_))));
    assert!(matches!(compute_metrics(&[1.0], &[1.0, 2.0]), Err(Error::Domain(_))));
}

fn scan_oracle(t: &[f64], err: &[f64], band: f64, hold: f64) -> Option<f64> {
    let n = t.len();
    (0..n)
        .find(|&i| err[i..].iter().all(|e| e.abs() <= band) && t[n - 1] - t[i] >= hold)
        .map(|i| t[i] - t[0])
}

#[test]
fn convergence_matches_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..2000 {
        let n = rng.random_range(1..300);
        let mut t = Vec::with_capacity(n);
        let mut now = rng.random_range(0.0..100.0);
        for _ in 0..n {
            t.push(now);
            now += rng.random_range(0.1..3.0);
        }
        let cut = rng.random_range(0..=n);
        let err: Vec<f64> = (0..n)
            .map(|k| {
                if k >= cut || rng.random_bool(0.05) {
                    rng.random_range(-2.0..2.0)
                } else {
                    rng.random_range(-10.0..10.0)
                }
            })
            .collect();
        let hold = rng.random_range(0.0..120.0);
        assert_eq!(convergence_time_series(&t, &err, 2.0, hold), scan_oracle(&t, &err, 2.0, hold));
    }
}

#[test]
fn current_bias_statistics() {
    let lf = Loadfile::from_current((0..100_000).map(|k| (k as f64, 0.0))).unwrap();
    let out = inject_current_bias(&lf, 1.0, 0.01, 5).unwrap();
    let x: Vec<f64> = out.samples().iter().map(|s| s.current_a).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt();
    assert!((mean - 1.0).abs() < 1e-3);
    assert!((sd - 0.01).abs() < 1e-3);
    assert_eq!(out, inject_current_bias(&lf, 1.0, 0.01, 5).unwrap());
    assert_eq!(inject_current_bias(&lf, 0.0, 0.0, 9).unwrap(), lf);
}

#[test]
fn stationary_voltage_noise_statistics() {
    let lf = Loadfile::from_current((0..100_000).map(|k| (k as f64, 0.0)))
        .unwrap()
        .with_voltage(&vec![3.7; 100_000])
        .unwrap();
    let out = inject_voltage_noise(&lf, 0.004, 0.005, f64::INFINITY, 6).unwrap();
    let x: Vec<f64> = out.samples().iter().map(|s| s.voltage_v.unwrap() - 3.7).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt();
    assert!((mean - 0.004).abs() < 1e-4);
    assert!((sd - 0.005).abs() < 5e-4);
    assert_eq!(inject_voltage_noise(&lf, 0.0, 0.0, 100.0, 1).unwrap(), lf);
}

fn noisy_scenario() -> Scenario {
    let mut s = Scenario::reference(ScenarioKind::VoltageNoise, 1800.0, 0.8, 0.9);
    s.seed = Some(77);
    s.current_noise = Some(CurrentNoise { mean_a: 0.5, sd_a: 0.05 });
    s.voltage_noise = Some(VoltageNoise { mean_v: 0.004, sd_v: 0.01, damping_tau_s: None, damped: true });
    s
}

#[test]
fn reruns_are_byte_identical() {
    let s = noisy_scenario();
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(trajectory_csv(x), trajectory_csv(y));
    }
    assert_eq!(comparison_csv(&a), comparison_csv(&b));
    assert_eq!(metrics_json(&a).unwrap(), metrics_json(&b).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| run_scenario(&s)).unwrap();
    assert_eq!(comparison_csv(&a), comparison_csv(&c));
}

#[test]
fn run_outputs_are_self_consistent() {
    let out = run_scenario(&noisy_scenario()).unwrap();
    for r in &out.runs {
        assert_eq!(r.steps.len(), out.steps);
        let (soc, v) = r.recompute_metrics().unwrap();
        assert_eq!(soc, r.soc_metrics);
        assert_eq!(v, r.voltage_metrics);
        assert!(r.soc_metrics.mae <= r.soc_metrics.rmse && r.soc_metrics.rmse <= r.soc_metrics.max_ae);
    }
    // every estimator saw the same measured voltage
    let first: Vec<f64> = out.runs[0].steps.iter().map(|s| s.v_meas).collect();
    for r in &out.runs[1..] {
        assert!(r.steps.iter().zip(&first).all(|(s, v)| s.v_meas == *v));
    }
}

#[test]
fn zero_gain_observer_is_coulomb_counting() {
    let s = noisy_scenario();
    let stream = prepare_stream(&s).unwrap();
    let est = PreparedEstimator::Observer {
        label: "open_loop".into(),
        gains: ObserverGains::zero(ObserverVariant::Pi),
    };
    let run = run_estimator(&est, &stream, s.soc_est0, Discretization::Zoh, 2.0, 60.0).unwrap();
    let p = reference_cell();
    let samples = stream.measured.samples();
    let mut soc = s.soc_est0;
    for (k, step) in run.steps.iter().enumerate() {
        assert!((step.soc_hat - soc.clamp(0.0, 1.0)).abs() < 1e-12, "k={k}");
        if k + 1 < samples.len() {
            soc += p.eta * samples[k].current_a * (samples[k + 1].time_s - samples[k].time_s) / p.capacity_c;
        }
    }
}

#[test]
fn non_hurwitz_gains_are_a_design_error() {
    let mut s = Scenario::reference(ScenarioKind::Accuracy, 600.0, 0.5, 0.5);
    let mut spec = EstimatorSpec::named("luenberger");
    spec.gains = Some(ObserverGains::Luenberger { l: [0.0, 0.0, -0.01] });
    s.estimators = vec![spec];
    assert!(matches!(run_scenario(&s), Err(Error::Design(_))));
}

#[test]
fn stochastic_scenarios_need_a_seed() {
    let mut s = noisy_scenario();
    s.seed = None;
    assert!(s.validate().is_err());
}

#[test]
fn perturbation_leaves_estimator_model_nominal() {
    let mut s = Scenario::reference(ScenarioKind::Sensitivity, 1200.0, 0.7, 0.7);
    s.perturbation = Some(PerturbationSpec {
        parameter: ParamName::ROhm,
        relative_amp: 0.0,
        envelope: Envelope::Step,
        tau_s: None,
    });
    let out = run_scenario(&s).unwrap();
    let lf = generate_profile(ProfileKind::Dst, 1200.0, 1.0, 2.0 * reference_cell().capacity_ah()).unwrap();
    let truth = simulate(&reference_cell(), &reference_ocv(), 0.7, &lf).unwrap();
    for r in &out.runs {
        assert!(r.steps.iter().zip(&truth.points).all(|(s, p)| s.v_meas == p.voltage));
    }
}

#[test]
fn per_step_cost_scales_linearly() {
    let mut s = Scenario::reference(ScenarioKind::Timing, 1800.0, 0.8, 0.8);
    let single = timing_report_with(&s, 5, 0.05).unwrap();
    s.loadfile = LoadSource::Profile { profile: ProfileKind::Dst, duration_s: 3600.0, dt: 1.0, peak_c_rate: 2.0 };
    let double = timing_report_with(&s, 5, 0.05).unwrap();
    for e in &single.entries {
        let d = double.entry(&e.name).unwrap();
        let ratio = d.per_step_s / e.per_step_s;
        assert!((0.5..=1.5).contains(&ratio), "{}: ratio {ratio}", e.name);
    }
    let one = timing_report_with(&s, 1, 0.0).unwrap();
    assert!(one.entries.iter().all(|e| e.sd_s == 0.0 && e.repetitions == 1));
}

proptest! {
    #[test]
    fn metric_ordering(pairs in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..200)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&a, &b).unwrap();
        prop_assert!(0.0 <= m.mae && m.mae <= m.rmse && m.rmse <= m.max_ae);
    }

    #[test]
    fn damped_envelope_at_tau(tau in 1.0..1e4f64) {
        prop_assert!((damping_envelope(tau, tau) - (-1.0f64).exp()).abs() < 1e-15);
    }
}
