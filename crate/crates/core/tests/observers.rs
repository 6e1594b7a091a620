use nalgebra::{Complex, DMatrix};
use obsbench_core::harness::{generate_profile, ProfileKind};
use obsbench_core::model::{simulate, CellParams, StateVector};
use obsbench_core::observers::{
    design_observer, eigenvalues, error_matrix, is_hurwitz, observer_step, place_poles, sat, DesignOptions,
    ObserverGains, ObserverState, ObserverVariant,
};
use obsbench_core::reference::{default_design_options, default_poles, reference_cell, reference_ocv};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARIANTS: [ObserverVariant; 4] = [
    ObserverVariant::Luenberger,
    ObserverVariant::SlidingMode,
    ObserverVariant::Pi,
    ObserverVariant::Pid,
];

fn random_cell(rng: &mut ChaCha8Rng) -> CellParams {
    let r_a = rng.random_range(1e-4..5e-3);
    let r_b = rng.random_range(1e-4..5e-3);
    CellParams {
        r_ohm: rng.random_range(1e-4..5e-3),
        r_a,
        c_a: rng.random_range(2.0..40.0) / r_a,
        r_b,
        c_b: rng.random_range(80.0..1500.0) / r_b,
        capacity_c: rng.random_range(5.0..100.0) * 3600.0,
        eta: 1.0,
    }
}

/// Characteristic polynomial coefficients by Faddeev-LeVerrier, highest first.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * coeffs[k - 1];
        coeffs.push(-(a * &m).trace() / k as f64);
    }
    coeffs
}

fn poly_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut c = vec![Complex::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c.into_iter().map(|z| z.re).collect()
}

fn random_poles(rng: &mut ChaCha8Rng, p: &CellParams, variant: ObserverVariant) -> Vec<Complex<f64>> {
    let mut poles = vec![
        Complex::new(-rng.random_range(1.2..3.0) / p.tau_a(), 0.0),
        Complex::new(-rng.random_range(1.2..3.0) / p.tau_b(), 0.0),
    ];
    let w = rng.random_range(1e-3..1e-2);
    if variant.error_dim() == 3 {
        poles.push(Complex::new(-w, 0.0));
    } else {
        let im = rng.random_range(0.0..1.0) * w;
        poles.push(Complex::new(-w, im));
        poles.push(Complex::new(-w, -im));
    }
    poles
}

#[test]
fn placed_poles_round_trip_on_random_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let p = random_cell(&mut rng);
        let m = rng.random_range(0.1..2.0);
        for v in VARIANTS {
            let poles = random_poles(&mut rng, &p, v);
            let opts = DesignOptions {
                dt: Some(1.0),
                derivative_share: 0.3,
                ..DesignOptions::default()
            };
            let gains = place_poles(v, &p, m, &poles, &opts).unwrap();
            let ae = error_matrix(&gains, &p, m, Some(1.0)).unwrap();
            let mut eig = eigenvalues(&ae).unwrap();
            for want in &poles {
                let (k, d) = eig
                    .iter()
                    .enumerate()
                    .map(|(k, z)| (k, (z - want).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(d < 1e-8, "{v}: pole {want} missed by {d}");
                eig.remove(k);
            }
            for (a, b) in char_poly(&ae).iter().zip(poly_from_roots(&poles)) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "{v}: {a} vs {b}");
            }
            assert!(is_hurwitz(&ae).unwrap().hurwitz);
        }
    }
}

#[test]
fn matched_model_error_vanishes() {
    let p = reference_cell();
    let ocv = reference_ocv();
    for v in VARIANTS {
        let poles = default_poles(v);
        let opts = DesignOptions {
            dt: Some(1.0),
            ..default_design_options(v)
        };
        let design = design_observer(v, &p, &ocv, &poles, &opts).unwrap();
        let alpha = poles.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let settle = 10.0 / alpha.abs();
        let lf = generate_profile(ProfileKind::Dst, settle + 600.0, 1.0, 2.0 * 58.0).unwrap();
        let truth = simulate(&p, &ocv, 0.8, &lf).unwrap();
        let mut st = ObserverState::new(StateVector::at_rest(0.7));
        let mut worst_tail: f64 = 0.0;
        for (k, pt) in truth.points.iter().enumerate() {
            let out = observer_step(&design.gains, &p, &ocv, &st, pt.current, pt.voltage, lf.dt_at(k)).unwrap();
            if pt.t >= settle {
                worst_tail = worst_tail.max(out.e.abs());
            }
            st = out.state;
        }
        assert!(worst_tail < 1e-4, "{v}: |e| = {worst_tail} after {settle} s");
    }
}

#[test]
fn zero_switching_smo_is_luenberger_over_a_run() {
    let p = reference_cell();
    let ocv = reference_ocv();
    let lf = generate_profile(ProfileKind::Fuds, 1500.0, 1.0, 100.0).unwrap();
    let truth = simulate(&p, &ocv, 0.6, &lf).unwrap();
    let l = [0.02, 0.01, 0.004];
    let lue = ObserverGains::Luenberger { l };
    let smo = ObserverGains::SlidingMode { h: l, k_dc: 0.0, boundary_layer_phi: 0.01 };
    let (mut a, mut b) = (ObserverState::new(StateVector::at_rest(0.5)), ObserverState::new(StateVector::at_rest(0.5)));
    for pt in &truth.points {
        a = observer_step(&lue, &p, &ocv, &a, pt.current, pt.voltage, 1.0).unwrap().state;
        b = observer_step(&smo, &p, &ocv, &b, pt.current, pt.voltage, 1.0).unwrap().state;
        assert_eq!(a.x_hat, b.x_hat);
    }
}

#[test]
fn pid_without_derivative_tracks_pi_over_a_run() {
    let p = reference_cell();
    let ocv = reference_ocv();
    let lf = generate_profile(ProfileKind::Dst, 1500.0, 1.0, 100.0).unwrap();
    let truth = simulate(&p, &ocv, 0.6, &lf).unwrap();
    let (k_p, k_i2) = ([0.03, 0.01, 0.0], [1e-4, 0.0, 2e-5]);
    let pi = ObserverGains::Pi { k_p, k_i1: 1.0, k_i2 };
    let pid = ObserverGains::Pid { k_p, k_i1: 1.0, k_i2, k_d: [0.0; 3], d_filter_tau: 0.0 };
    let (mut a, mut b) = (ObserverState::new(StateVector::at_rest(0.5)), ObserverState::new(StateVector::at_rest(0.5)));
    for pt in &truth.points {
        a = observer_step(&pi, &p, &ocv, &a, pt.current, pt.voltage, 1.0).unwrap().state;
        b = observer_step(&pid, &p, &ocv, &b, pt.current, pt.voltage, 1.0).unwrap().state;
        assert_eq!(a.x_hat, b.x_hat);
        assert_eq!(a.c_pi, b.c_pi);
    }
}

#[test]
fn unobservable_cell_is_rejected_by_design() {
    let p = CellParams { c_b: reference_cell().tau_a() / reference_cell().r_b, ..reference_cell() };
    for v in VARIANTS {
        let opts = DesignOptions { dt: Some(1.0), ..DesignOptions::default() };
        assert!(design_observer(v, &p, &reference_ocv(), &default_poles(v), &opts).is_err());
    }
}

proptest! {
    #[test]
    fn sat_is_odd_bounded_and_monotone(e in -1.0..1.0f64, d in 0.0..0.5f64, phi in 1e-4..0.1f64) {
        let s = sat(e, phi).unwrap();
        prop_assert!(s.abs() <= 1.0);
        prop_assert_eq!(sat(-e, phi).unwrap(), -s);
        prop_assert!(sat(e + d, phi).unwrap() >= s);
    }
}
