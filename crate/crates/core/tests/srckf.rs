use nalgebra::{Matrix3, RowVector3, Vector3};
use obsbench_core::model::{CellParams, Discretization, OcvCurve, StateVector};
use obsbench_core::reference::{reference_cell, reference_ocv};
use obsbench_core::srckf::{srckf_step, SrckfConfig, SrckfState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cell() -> CellParams {
    reference_cell()
}

/// Conventional covariance-form Kalman filter for an affine measurement.
struct LinearKf {
    x: Vector3<f64>,
    p: Matrix3<f64>,
    q: Matrix3<f64>,
    r: f64,
}

impl LinearKf {
    fn step(&mut self, cell: &CellParams, v0: f64, m: f64, i: f64, v: f64, dt: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let h = RowVector3::new(1.0, 1.0, m);
        let z = (h * self.x)[0] + v0 + i * cell.r_ohm;
        let s = (h * self.p * h.transpose())[0] + self.r;
        let k = self.p * h.transpose() / s;
        let x_post = self.x + k * (v - z);
        let ikh = Matrix3::identity() - k * h;
        let p_post = ikh * self.p * ikh.transpose() + k * k.transpose() * self.r;

        let (phi, gamma) = Discretization::Zoh.transition(cell, dt);
        let f = Matrix3::from_diagonal(&phi);
        self.x = f * x_post + gamma * i;
        self.p = f * p_post * f.transpose() + self.q;
        (x_post, p_post)
    }
}

#[test]
fn affine_ocv_matches_linear_kalman_filter() {
    let p = cell();
    let (v0, m) = (3.2, 0.9);
    let ocv = OcvCurve::new(vec![(0.0, v0), (1.0, v0 + m)]).unwrap();
    let cfg = SrckfConfig {
        q_proc: [[1e-7, 2e-9, 0.0], [2e-9, 1e-7, 0.0], [0.0, 0.0, 1e-9]],
        r_meas: 4e-4,
        p0: [[1e-4, 0.0, 0.0], [0.0, 1e-4, 0.0], [0.0, 0.0, 0.02]],
    };
    let x0 = StateVector::new(0.01, -0.005, 0.7);
    let mut st = SrckfState::new(x0, &cfg).unwrap();
    let mut kf = LinearKf {
        x: x0.to_vector(),
        p: Matrix3::from_fn(|r, c| cfg.p0[r][c]),
        q: Matrix3::from_fn(|r, c| cfg.q_proc[r][c]),
        r: cfg.r_meas,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..1000 {
        let i: f64 = rng.random_range(-150.0..150.0);
        let v: f64 = v0 + 0.6 * m + rng.random_range(-0.05..0.05);
        let dt = if k % 7 == 0 { 0.5 } else { 1.0 };
        let out = srckf_step(&st, &p, &ocv, i, v, dt).unwrap();
        let (x_post, p_post) = kf.step(&p, v0, m, i, v, dt);
        assert!((out.posterior.to_vector() - x_post).amax() < 1e-6, "mean at step {k}");
        let p_sr = out.posterior_sqrt * out.posterior_sqrt.transpose();
        assert!((p_sr - p_post).amax() < 1e-6, "posterior covariance at step {k}");
        assert!((out.state.x_hat.to_vector() - kf.x).amax() < 1e-6, "prediction at step {k}");
        assert!((out.state.covariance() - kf.p).amax() < 1e-6, "predicted covariance at step {k}");
        st = out.state;
    }
}

fn assert_sqrt_psd(s: &Matrix3<f64>) {
    for r in 0..3 {
        assert!(s[(r, r)] >= 0.0);
        for c in (r + 1)..3 {
            assert_eq!(s[(r, c)], 0.0);
        }
    }
    let cov = s * s.transpose();
    assert!((cov - cov.transpose()).amax() == 0.0 || (cov - cov.transpose()).amax() < 1e-18);
    let eig = cov.symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-15 * cov.amax().max(1e-30)));
}

#[test]
fn square_root_stays_psd_over_long_random_run() {
    let p = cell();
    let ocv = reference_ocv();
    let mut st = SrckfState::new(StateVector::at_rest(0.5), &SrckfConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100_000 {
        let i: f64 = rng.random_range(-100.0..100.0);
        let soc = st.x_hat.soc.clamp(0.0, 1.0);
        let v = ocv.eval(soc).unwrap() + rng.random_range(-0.02..0.02);
        let out = srckf_step(&st, &p, &ocv, i, v, 1.0).unwrap();
        assert_sqrt_psd(&out.posterior_sqrt);
        assert_sqrt_psd(&out.state.s_sqrt);
        assert!((0.0..=1.0).contains(&out.soc));
        st = out.state;
    }
}

#[test]
fn noiseless_filter_tracks_truth() {
    let p = cell();
    let ocv = reference_ocv();
    let cfg = SrckfConfig {
        q_proc: [[0.0; 3]; 3],
        r_meas: 1e-12,
        p0: [[1e-12, 0.0, 0.0], [0.0, 1e-12, 0.0], [0.0, 0.0, 1e-12]],
    };
    let mut x = StateVector::at_rest(0.8);
    let mut st = SrckfState::new(x, &cfg).unwrap();
    for k in 0..3600 {
        let i = if (k / 120) % 2 == 0 { -58.0 } else { 20.0 };
        let v = obsbench_core::model::terminal_voltage(&p, &ocv, x, i).unwrap();
        let out = srckf_step(&st, &p, &ocv, i, v, 1.0).unwrap();
        assert!((out.soc - x.soc).abs() < 1e-6, "step {k}");
        x = Discretization::Zoh.step(&p, x, i, 1.0);
        st = out.state;
    }
}

#[test]
fn innovations_are_consistent_on_matched_gaussian_run() {
    let p = cell();
    let ocv = reference_ocv();
    let cfg = SrckfConfig {
        q_proc: [[1e-8, 0.0, 0.0], [0.0, 1e-8, 0.0], [0.0, 0.0, 1e-10]],
        r_meas: 1e-4,
        p0: [[1e-8, 0.0, 0.0], [0.0, 1e-8, 0.0], [0.0, 0.0, 1e-6]],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let wn = [Normal::new(0.0, 1e-4).unwrap(), Normal::new(0.0, 1e-4).unwrap(), Normal::new(0.0, 1e-5).unwrap()];
    let vn = Normal::new(0.0, 1e-2).unwrap();
    let mut x = StateVector::at_rest(0.6);
    let mut st = SrckfState::new(x, &cfg).unwrap();
    let mut nis = 0.0;
    let n = 20_000;
    for k in 0..n {
        let i = 30.0 * ((k as f64) / 200.0).sin();
        let v = obsbench_core::model::terminal_voltage(&p, &ocv, x, i).unwrap() + vn.sample(&mut rng);
        let out = srckf_step(&st, &p, &ocv, i, v, 1.0).unwrap();
        nis += out.nis();
        st = out.state;
        let mut next = Discretization::Zoh.step(&p, x, i, 1.0).to_vector();
        for (j, d) in wn.iter().enumerate() {
            next[j] += d.sample(&mut rng);
        }
        x = StateVector::from_vector(&next);
    }
    let mean = nis / n as f64;
    assert!((0.8..=1.2).contains(&mean), "mean NIS {mean}");
}

#[test]
fn rejects_bad_step_inputs() {
    let p = cell();
    let ocv = reference_ocv();
    let st = SrckfState::new(StateVector::at_rest(0.5), &SrckfConfig::default()).unwrap();
    assert!(srckf_step(&st, &p, &ocv, 1.0, 3.5, 0.0).is_err());
    assert!(srckf_step(&st, &p, &ocv, 1.0, f64::NAN, 1.0).is_err());
}
