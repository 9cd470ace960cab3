use magflow::epdiff::{decay_monitor, integrate_epdiff_with, DecayReport, EpdiffOptions};
use magflow::finsler::{connect_at_energy, ConnectOptions, MinimizerOptions};
use magflow::flow::{integrate_hamiltonian, integrate_magnetic, legendre, PhasePoint};
use magflow::{mane_critical_value, AlgebraVector, Covector, GroupKind, MagneticSystem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{Output, PLOT_CONNECT, PLOT_EPDIFF, PLOT_FLOW};
use crate::suites;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManeReport {
    pub group: GroupKind,
    pub system_hash: String,
    pub critical_value: f64,
    pub beta: Covector,
    pub optimal_alpha: Covector,
    /// `½|α|²_*` for the configured primitive.
    pub upper_bound: f64,
    pub annihilator_dim: usize,
    pub certificate: f64,
}

pub fn mane_report(sys: &MagneticSystem) -> ManeReport {
    let m = mane_critical_value(sys);
    ManeReport {
        group: sys.algebra().kind(),
        system_hash: sys.fingerprint(),
        critical_value: m.value,
        beta: m.beta,
        optimal_alpha: m.optimal_alpha,
        upper_bound: m.upper_bound,
        annihilator_dim: m.annihilator_dim,
        certificate: m.certificate,
    }
}

pub fn mane(cfg: &ExperimentConfig, out: &Output) -> CliResult<()> {
    let report = mane_report(&cfg.system()?);
    out.write_json("mane.json", &report)?;
    out.say(format!(
        "c = {:.12}, bound = {:.12}, annihilator dim = {}",
        report.critical_value, report.upper_bound, report.annihilator_dim
    ));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub group: GroupKind,
    pub system_hash: String,
    pub final_time: f64,
    pub dt: f64,
    pub steps: usize,
    pub initial_energy: f64,
    pub energy_drift: f64,
    pub drift_tol: f64,
    pub drift_ok: bool,
    /// Sup error of the velocity against `exp(−tY) u0`; reported when the
    /// metric is bi-invariant on so3, where the coadjoint term vanishes.
    pub oracle_error: Option<f64>,
    pub dual: Option<DualSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSummary {
    pub velocity_gap: f64,
    pub point_gap: f64,
    pub hamiltonian_drift: f64,
}

pub fn flow(cfg: &ExperimentConfig, out: &Output, dual: bool) -> CliResult<()> {
    let sys = cfg.system()?;
    let block = cfg.flow.as_ref().ok_or_else(|| CliError::Config("missing block `flow`".into()))?;
    let n = sys.dim();
    if block.u0.len() != n {
        return Err(CliError::Config(format!("flow.u0 has {} entries, expected {n}", block.u0.len())));
    }
    let u0 = AlgebraVector::new(block.u0.clone());
    let e = sys.algebra().identity();
    let g0 = cfg.point(&sys, block.g0.as_ref(), &e)?;
    let traj = integrate_magnetic(&sys, &u0, &g0, block.t, block.dt)?;
    out.write("trajectory.csv", &traj.to_csv())?;
    out.write("plot_flow.py", PLOT_FLOW)?;

    let dual = if dual {
        let pp = PhasePoint {
            g: g0,
            p: legendre(&sys, &u0)?,
        };
        let ham = integrate_hamiltonian(&sys, &pp, block.t, block.dt)?;
        out.write("trajectory_dual.csv", &ham.to_csv())?;
        Some(DualSummary {
            velocity_gap: traj.velocity_distance(&ham)?,
            point_gap: traj.point_distance(&ham)?,
            hamiltonian_drift: ham.energy_drift(),
        })
    } else {
        None
    };

    let drift = traj.energy_drift();
    let summary = FlowSummary {
        group: sys.algebra().kind(),
        system_hash: sys.fingerprint(),
        final_time: *traj.times.last().expect("nonempty"),
        dt: traj.meta.dt,
        steps: traj.len() - 1,
        initial_energy: traj.energies[0],
        energy_drift: drift,
        drift_tol: block.drift_tol,
        drift_ok: drift <= block.drift_tol,
        oracle_error: so3_oracle_error(&sys, &u0, &traj.times, &traj.velocities),
        dual,
    };
    out.write_json("summary.json", &summary)?;
    out.say(format!("energy drift {drift:.3e} (tolerance {:.1e})", block.drift_tol));
    if let Some(err) = summary.oracle_error {
        out.say(format!("closed-form velocity error {err:.3e}"));
    }
    if let Some(d) = &summary.dual {
        out.say(format!("conjugacy gap: velocity {:.3e}, group {:.3e}", d.velocity_gap, d.point_gap));
    }
    if summary.drift_ok {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("energy drift {drift:.3e} exceeds {:.1e}", block.drift_tol)))
    }
}

fn so3_oracle_error(sys: &MagneticSystem, u0: &AlgebraVector, times: &[f64], us: &[AlgebraVector]) -> Option<f64> {
    let a = sys.inertia().matrix();
    let bi_invariant = (a - DMatrix::identity(3, 3) * a[(0, 0)]).amax() == 0.0;
    if sys.algebra().kind() != GroupKind::So3 || !bi_invariant {
        return None;
    }
    let y = sys.lorentz_matrix();
    let worst = times
        .iter()
        .zip(us)
        .map(|(t, u)| ((y * -*t).exp() * &u0.0 - &u.0).amax())
        .fold(0.0, f64::max);
    Some(worst)
}

pub fn connect(cfg: &ExperimentConfig, out: &Output) -> CliResult<()> {
    let sys = cfg.system()?;
    let block = cfg.connect.as_ref().ok_or_else(|| CliError::Config("missing block `connect`".into()))?;
    let kappa = cfg.kappa(&sys)?;
    let critical = mane_critical_value(&sys).value;
    if !(kappa > critical) {
        return Err(CliError::Subcritical { kappa, critical });
    }
    let e = sys.algebra().identity();
    let x = cfg.point(&sys, block.x.as_ref(), &e)?;
    let y = cfg.point(&sys, Some(&block.y), &x)?;
    let opts = ConnectOptions {
        minimizer: MinimizerOptions {
            steps: block.steps,
            seeds: block.seeds,
            seed: cfg.seed,
            ..MinimizerOptions::default()
        },
        polish: block.polish,
        ..ConnectOptions::default()
    };
    let conn = connect_at_energy(&sys, kappa, &x, &y, &opts)?;
    let r = &conn.report;
    out.write_json("control_path.json", &conn.minimizer.path)?;
    out.write("trajectory.csv", &conn.trajectory.to_csv())?;
    out.write("minimizer_trajectory.csv", &conn.minimizer.trajectory.to_csv())?;
    out.write_json("report.json", r)?;
    out.write("plot_connect.py", PLOT_CONNECT)?;
    out.say(format!(
        "kappa {kappa} (c = {critical:.6}): T = {:.6}, endpoint error {:.2e}, speed error {:.2e}, residual {:.2e}",
        r.travel_time, r.endpoint_error, r.speed_error, r.residual
    ));
    if r.endpoint_error <= 1e-6 && r.residual <= 1e-4 {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "endpoint error {:.2e} (need 1e-6), residual {:.2e} (need 1e-4), minimizer converged: {}, \
             stationarity {:.2e}",
            r.endpoint_error, r.residual, r.minimizer.converged, r.minimizer.stationarity
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpdiffSummary {
    pub modes: usize,
    pub sobolev_order: f64,
    pub final_time: f64,
    pub dt: f64,
    pub dealias: bool,
    pub initial_energy: f64,
    pub energy_drift: f64,
    pub final_max_abs: f64,
    pub decay: Option<DecayReport>,
    pub decay_note: Option<String>,
}

pub fn epdiff(cfg: &ExperimentConfig, out: &Output) -> CliResult<()> {
    let (u0, a, inertia) = cfg.epdiff_inputs()?;
    let block = cfg.epdiff.as_ref().expect("checked by epdiff_inputs");
    let opts = EpdiffOptions {
        dealias: block.dealias,
        snapshot_every: block.snapshot_every,
    };
    let traj = integrate_epdiff_with(&u0, &inertia, &a, block.t, block.dt, &opts)?;
    out.write("energy.csv", &traj.energy_csv())?;
    out.write("snapshots.csv", &traj.snapshots_csv())?;
    out.write("final_state.csv", &traj.final_state().to_csv())?;
    out.write("plot_epdiff.py", PLOT_EPDIFF)?;
    let (decay, decay_note) = match block.band {
        None => (None, None),
        Some(band) => match decay_monitor(&traj, band) {
            Ok(report) => (Some(report), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    let summary = EpdiffSummary {
        modes: u0.modes(),
        sobolev_order: inertia.order(),
        final_time: *traj.times.last().expect("nonempty"),
        dt: traj.dt,
        dealias: block.dealias,
        initial_energy: traj.energies[0],
        energy_drift: traj.energy_drift(),
        final_max_abs: traj.final_state().max_abs(),
        decay,
        decay_note,
    };
    out.write_json("summary.json", &summary)?;
    out.say(format!("energy drift {:.3e}", summary.energy_drift));
    if let Some(d) = &summary.decay {
        out.say(format!("spectral slope deviation {:.3} over modes {:?}", d.max_deviation, d.band));
    }
    Ok(())
}

pub fn check(cfg: &ExperimentConfig, out: &Output, suite: Option<&str>) -> CliResult<()> {
    let block = cfg.check.clone().unwrap_or_default();
    let names: Vec<String> = match suite {
        Some(s) => vec![s.to_string()],
        None if !block.suites.is_empty() => block.suites.clone(),
        None => suites::SUITES.iter().map(|s| s.to_string()).collect(),
    };
    for name in &names {
        if !suites::SUITES.contains(&name.as_str()) {
            return Err(CliError::Config(format!(
                "unknown suite `{name}`; available: {}",
                suites::SUITES.join(", ")
            )));
        }
    }
    let ctx = suites::Context {
        seed: cfg.seed,
        samples: block.samples.unwrap_or(10_000),
    };
    let results: Vec<suites::SuiteResult> = names.iter().map(|n| suites::run(n, &ctx)).collect();
    out.write_json("check.json", &results)?;
    let mut failed = Vec::new();
    for r in &results {
        for p in &r.properties {
            out.say(format!("{} {}/{}: {}", if p.passed { "PASS" } else { "FAIL" }, r.suite, p.name, p.detail));
        }
        if !r.passed {
            failed.push(r.suite.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
