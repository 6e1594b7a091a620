use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde::de::DeserializeOwned;

use obsbench_core::characterization::{extract_ocv, fit_pulse_pso, LowCurrentTest, PsoConfig};
use obsbench_core::harness::report::{comparison_csv, write_file, write_outcome, write_sweep};
use obsbench_core::harness::{
    compute_metrics, current_bias_sweep, mean_series, replicate, run_scenario, sensitivity_sweep, timing_report,
    voltage_noise_sweep, EstimatorKind, LoadSource, ParamName, Scenario, ScenarioKind, Sweep,
};
use obsbench_core::manifest::RunManifest;
use obsbench_core::model::{
    build_linear_system, simulate_with, CellParams, Discretization, OcvCurve, StateVector,
};
use obsbench_core::observability::{lie_observability_matrix, linear_observability, SmoothOcv};
use obsbench_core::observers::{
    check_segments, design_observer, observer_step, parse_poles, ObserverGains, ObserverState, ObserverVariant,
};
use obsbench_core::reference::{default_design_options, default_poles, reference_cell, reference_ocv};
use obsbench_core::srckf::{srckf_step, SrckfConfig, SrckfState};
use obsbench_core::{Error, Loadfile, Result};

use crate::config::Config;
use crate::{CellArgs, Command};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn to_json(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Writes `text` to `out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("not a number: {t:?}")))
        })
        .collect()
}

struct Cell {
    params: CellParams,
    ocv: OcvCurve,
    inputs: Vec<PathBuf>,
}

fn load_cell(args: &CellArgs, cfg: &Config) -> Result<Cell> {
    let mut inputs = Vec::new();
    let params = match args.params.as_ref().or(cfg.params.as_ref()) {
        Some(p) => {
            inputs.push(p.clone());
            read_json(p)?
        }
        None => reference_cell(),
    };
    params.validate()?;
    let ocv = match args.ocv.as_ref().or(cfg.ocv.as_ref()) {
        Some(p) => {
            inputs.push(p.clone());
            read_json(p)?
        }
        None => reference_ocv(),
    };
    Ok(Cell { params, ocv, inputs })
}

fn out_dir(out: Option<PathBuf>, cfg: &Config, default: &str) -> PathBuf {
    out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(default))
}

fn load_scenario(path: &Path, cfg: &Config) -> Result<Scenario> {
    let mut s = Scenario::from_path(path)?;
    if s.seed.is_none() {
        s.seed = cfg.seed;
    }
    Ok(s)
}

fn scenario_inputs(path: &Path, s: &Scenario) -> Vec<PathBuf> {
    let mut v = vec![path.to_path_buf()];
    if let LoadSource::Path { path } = &s.loadfile {
        v.push(path.clone());
    }
    v
}

fn write_manifest(dir: &Path, command: &str, inputs: &[PathBuf], record: &impl Serialize, seed: Option<u64>) -> Result<()> {
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    RunManifest::new(command, &refs, record, seed)?.write(dir)
}

pub fn dispatch(cmd: Command, cfg: &Config) -> Result<()> {
    match cmd {
        Command::Simulate { loadfile, cell, soc0, euler, out } => {
            let c = load_cell(&cell, cfg)?;
            let lf = Loadfile::from_path(&loadfile)?;
            let disc = if euler { Discretization::ForwardEuler } else { Discretization::Zoh };
            let traj = simulate_with(&c.params, &c.ocv, StateVector::at_rest(soc0), &lf, disc)?;
            let dir = out_dir(out, cfg, "simulation");
            fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
            lf.with_voltage(&traj.voltages())?.to_path(dir.join("loadfile.csv"))?;
            let mut csv = String::from("t,current_a,voltage_v,soc,v_a,v_b\n");
            for p in &traj.points {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.t, p.current, p.voltage, p.state.soc, p.state.v_a, p.state.v_b
                ));
            }
            write_file(&dir.join("truth.csv"), &csv)?;
            let mut inputs = c.inputs;
            inputs.push(loadfile);
            let record = serde_json::json!({ "soc0": soc0, "discretization": disc, "params": c.params });
            write_manifest(&dir, "simulate", &inputs, &record, None)?;
            if traj.saturated {
                eprintln!("obsbench: warning: SOC saturated during simulation");
            }
            Ok(())
        }
        Command::Design {
            variant,
            poles,
            cell,
            dt,
            k_dc,
            boundary_layer,
            derivative_share,
            d_filter_tau,
            out,
        } => {
            let variant: ObserverVariant = variant.parse()?;
            let c = load_cell(&cell, cfg)?;
            let poles = match poles {
                Some(text) => parse_poles(&text)?,
                None => default_poles(variant),
            };
            let mut opts = default_design_options(variant);
            opts.dt = Some(dt);
            if let Some(v) = k_dc {
                opts.k_dc = v;
            }
            if let Some(v) = boundary_layer {
                opts.boundary_layer_phi = v;
            }
            if let Some(v) = derivative_share {
                opts.derivative_share = v;
            }
            if let Some(v) = d_filter_tau {
                opts.d_filter_tau = v;
            }
            let design = design_observer(variant, &c.params, &c.ocv, &poles, &opts)?;
            if let Some(p) = out {
                write_file(&p, &to_json(&design.gains)?)?;
            }
            print!("{}", to_json(&design)?);
            Ok(())
        }
        Command::Estimate { gains, estimator, loadfile, cell, soc0, out } => {
            let c = load_cell(&cell, cfg)?;
            let lf = Loadfile::from_path(&loadfile)?;
            if !lf.has_voltage() {
                return Err(Error::Format {
                    row: None,
                    msg: "estimation needs a voltage_v column".into(),
                });
            }
            let dt = lf.dt_at(0);
            let mut inputs = c.inputs.clone();
            inputs.push(loadfile);
            let est = match (&gains, estimator.as_deref()) {
                (Some(path), _) => {
                    inputs.push(path.clone());
                    let g: ObserverGains = read_json(path)?;
                    g.validate()?;
                    let checks = check_segments(&g, &c.params, &c.ocv, Some(dt))?;
                    if let Some(bad) = checks.iter().find(|s| !s.hurwitz) {
                        return Err(Error::Design(format!(
                            "gains are not Hurwitz on OCV segment {} (abscissa {:.3e})",
                            bad.segment, bad.spectral_abscissa
                        )));
                    }
                    Estimator::Observer(g)
                }
                (None, name) => match name.unwrap_or("pi").parse::<EstimatorKind>()? {
                    EstimatorKind::Srckf => Estimator::Srckf(SrckfConfig::default()),
                    EstimatorKind::Observer(v) => {
                        let mut opts = default_design_options(v);
                        opts.dt = Some(dt);
                        Estimator::Observer(design_observer(v, &c.params, &c.ocv, &default_poles(v), &opts)?.gains)
                    }
                },
            };
            let rows = run_measured(&est, &c, &lf, soc0)?;
            let mut csv = String::from("t,soc_hat,v_meas,v_hat,e\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{},{},{}\n", r[0], 100.0 * r[1], r[2], r[3], r[4]));
            }
            let vm: Vec<f64> = rows.iter().map(|r| r[2]).collect();
            let vh: Vec<f64> = rows.iter().map(|r| r[3]).collect();
            let metrics = compute_metrics(&vm, &vh)?;
            let dir = out_dir(out, cfg, "estimate");
            write_file(&dir.join("estimate.csv"), &csv)?;
            let summary = serde_json::json!({ "steps": rows.len(), "voltage_metrics_v": metrics });
            write_file(&dir.join("metrics.json"), &to_json(&summary)?)?;
            let record = serde_json::json!({ "estimator": est.record(), "soc0": soc0 });
            write_manifest(&dir, "estimate", &inputs, &record, None)?;
            print!("{}", to_json(&summary)?);
            Ok(())
        }
        Command::Bench { scenario, out } => {
            let s = load_scenario(&scenario, cfg)?;
            let outcome = run_scenario(&s)?;
            let dir = out_dir(out, cfg, "results");
            write_outcome(&outcome, &dir)?;
            write_manifest(&dir, "bench", &scenario_inputs(&scenario, &s), &s, s.seed)?;
            print!("{}", comparison_csv(&outcome));
            Ok(())
        }
        Command::Convergence { scenario, soc_true0, soc_est0, out } => {
            let mut s = load_scenario(&scenario, cfg)?;
            s.kind = ScenarioKind::Convergence;
            s.soc_true0 = soc_true0.unwrap_or(s.soc_true0);
            s.soc_est0 = soc_est0.unwrap_or(s.soc_est0);
            let outcome = run_scenario(&s)?;
            let dir = out_dir(out, cfg, "convergence");
            write_outcome(&outcome, &dir)?;
            write_manifest(&dir, "convergence", &scenario_inputs(&scenario, &s), &s, s.seed)?;
            println!("estimator,convergence_s");
            for r in &outcome.runs {
                println!("{},{}", r.name, r.convergence_s.map(|c| c.to_string()).unwrap_or_default());
            }
            Ok(())
        }
        Command::Sensitivity { scenario, params, amps, envelope, tau, out } => {
            let s = load_scenario(&scenario, cfg)?;
            let names = params
                .split(',')
                .map(|n| n.trim().parse::<ParamName>())
                .collect::<Result<Vec<_>>>()?;
            let amps = parse_list(&amps)?;
            let sweep = sensitivity_sweep(&s, &names, &amps, envelope.parse()?, tau)?;
            let dir = out_dir(out, cfg, "sensitivity");
            write_sweep(&sweep, &dir)?;
            let record = serde_json::json!({
                "scenario": s, "params": names, "amps": amps, "envelope": envelope, "tau_s": tau
            });
            write_manifest(&dir, "sensitivity", &scenario_inputs(&scenario, &s), &record, s.seed)?;
            print!("{}", obsbench_core::harness::report::sweep_csv(&sweep));
            Ok(())
        }
        Command::NoiseSweep { scenario, axis, levels, fixed, tau, undamped, replicates, out } => {
            let s = load_scenario(&scenario, cfg)?;
            let seed = s.seed.ok_or_else(|| Error::Domain("noise sweeps need a seed".into()))?;
            if replicates == 0 {
                return Err(Error::Domain("replicates must be >= 1".into()));
            }
            let seeds: Vec<u64> = (0..replicates).map(|k| seed.wrapping_add(k)).collect();
            let (levels, fixed, sweep_fn): (Vec<f64>, f64, Box<dyn Fn(&Scenario, &[f64], f64) -> Result<Sweep>>) =
                match axis.as_str() {
                    "current" => (
                        levels.as_deref().map(parse_list).transpose()?.unwrap_or(vec![0.5, 1.0, 2.5, 5.0]),
                        fixed.unwrap_or(0.01),
                        Box::new(|s: &Scenario, l: &[f64], sd: f64| current_bias_sweep(s, l, sd)),
                    ),
                    "voltage" => (
                        levels.as_deref().map(parse_list).transpose()?.unwrap_or(vec![0.005, 0.01, 0.1, 0.2]),
                        fixed.unwrap_or(0.004),
                        Box::new(move |s: &Scenario, l: &[f64], mean: f64| voltage_noise_sweep(s, l, mean, tau, !undamped)),
                    ),
                    other => return Err(Error::Domain(format!("unknown axis {other:?} (expected current or voltage)"))),
                };
            let reps = replicate(&s, &seeds, |sc| sweep_fn(sc, &levels, fixed))?;
            let dir = out_dir(out, cfg, "noise_sweep");
            write_sweep(&reps[0], &dir)?;
            let names: Vec<String> = s.estimators.iter().map(|e| e.label().to_string()).collect();
            let mut csv = format!("estimator,{},mean_soc_rmse_pct,replicates\n", reps[0].axis);
            for n in &names {
                for (v, m) in mean_series(&reps, n, |r| r.soc_metrics.rmse) {
                    csv.push_str(&format!("{n},{v},{m},{replicates}\n"));
                }
            }
            write_file(&dir.join("replicates.csv"), &csv)?;
            let record = serde_json::json!({
                "scenario": s, "axis": axis, "levels": levels, "fixed": fixed,
                "tau_s": tau, "damped": !undamped, "seeds": seeds
            });
            write_manifest(&dir, "noise-sweep", &scenario_inputs(&scenario, &s), &record, Some(seed))?;
            print!("{csv}");
            Ok(())
        }
        Command::Timing { scenario, repetitions, out } => {
            let s = load_scenario(&scenario, cfg)?;
            let report = timing_report(&s, repetitions)?;
            let dir = out_dir(out, cfg, "timing");
            write_file(&dir.join("timing.json"), &to_json(&report)?)?;
            let record = serde_json::json!({ "scenario": s, "repetitions": repetitions });
            write_manifest(&dir, "timing", &scenario_inputs(&scenario, &s), &record, s.seed)?;
            println!("estimator,mean_s,sd_s,per_step_s");
            for e in &report.entries {
                println!("{},{},{},{}", e.name, e.mean_s, e.sd_s, e.per_step_s);
            }
            Ok(())
        }
        Command::Identify { pulse, ocv, pso, seed, out } => {
            let lf = Loadfile::from_path(&pulse)?;
            let curve = match ocv.as_ref().or(cfg.ocv.as_ref()) {
                Some(p) => read_json(p)?,
                None => reference_ocv(),
            };
            let mut pcfg: PsoConfig = match &pso {
                Some(p) => read_json(p)?,
                None => PsoConfig::default(),
            };
            if let Some(s) = seed.or(cfg.seed) {
                pcfg.seed = s;
            }
            let fit = fit_pulse_pso(&lf, &curve, &pcfg)?;
            if let Some(p) = out {
                write_file(&p, &to_json(&fit.params)?)?;
            }
            print!("{}", to_json(&fit)?);
            Ok(())
        }
        Command::Ocv { test, points, out } => {
            if points < 2 {
                return Err(Error::Domain("need at least 2 grid points".into()));
            }
            let t = LowCurrentTest::from_path(&test)?;
            let (lo, hi) = t.common_range()?;
            let grid: Vec<f64> = (0..points)
                .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
                .collect();
            let curve = extract_ocv(&t, &grid)?;
            emit(out.as_deref(), &to_json(&curve)?)
        }
        Command::Observability { cell, scenario, soc, order, q, degree } => {
            let c = load_cell(&cell, cfg)?;
            let text = if scenario == "linear" {
                to_json(&linear_observability(&build_linear_system(&c.params, &c.ocv, soc)?))?
            } else {
                let q = parse_list(&q)?;
                let q: [f64; 3] = q
                    .try_into()
                    .map_err(|_| Error::Domain("--q needs exactly three values".into()))?;
                let smooth = SmoothOcv::fit(&c.ocv, degree)?;
                let derivs = smooth.derivatives(soc, (order as usize).max(3));
                to_json(&lie_observability_matrix(scenario.parse()?, &c.params, &derivs, q, order)?)?
            };
            print!("{text}");
            Ok(())
        }
    }
}

enum Estimator {
    Observer(ObserverGains),
    Srckf(SrckfConfig),
}

impl Estimator {
    fn record(&self) -> serde_json::Value {
        match self {
            Estimator::Observer(g) => serde_json::json!({ "gains": g }),
            Estimator::Srckf(c) => serde_json::json!({ "srckf": c }),
        }
    }
}

/// `[t, soc_hat, v_meas, v_hat, e]` per sample.
fn run_measured(est: &Estimator, c: &Cell, lf: &Loadfile, soc0: f64) -> Result<Vec<[f64; 5]>> {
    let x0 = StateVector::at_rest(soc0);
    let mut rows = Vec::with_capacity(lf.len());
    match est {
        Estimator::Observer(g) => {
            let mut st = ObserverState::new(x0);
            for (k, s) in lf.samples().iter().enumerate() {
                let v = s.voltage_v.unwrap_or(f64::NAN);
                let o = observer_step(g, &c.params, &c.ocv, &st, s.current_a, v, lf.dt_at(k))?;
                rows.push([s.time_s, o.soc, v, o.v_hat, o.e]);
                st = o.state;
            }
        }
        Estimator::Srckf(cfg) => {
            let mut st = SrckfState::new(x0, cfg)?;
            for (k, s) in lf.samples().iter().enumerate() {
                let v = s.voltage_v.unwrap_or(f64::NAN);
                let o = srckf_step(&st, &c.params, &c.ocv, s.current_a, v, lf.dt_at(k))?;
                rows.push([s.time_s, o.soc, v, o.v_hat, o.innovation]);
                st = o.state;
            }
        }
    }
    Ok(rows)
}
