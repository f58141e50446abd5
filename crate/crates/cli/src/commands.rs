use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use mecanum_reconfig::control::{
    run_scenario, velocity_clamp, write_track_csv, Feasibility, Scenario, TrackMetrics,
};
use mecanum_reconfig::controllability::{
    sweep as run_sweep, Analysis, GridSpec, Statistic, GSI_SINGULAR_RATIO, KCM_RANK_TOL,
};
use mecanum_reconfig::dynamics::{write_trace_csv, Simulator};
use mecanum_reconfig::geometry::geometry_report;
use mecanum_reconfig::params::Friction;
use mecanum_reconfig::{stack_maps, ModelError, Pose};

use crate::output::{sha256_hex, OutputDir};
use crate::profile::Profile;
use crate::{plots, ClampArgs, CliError, GeometryArgs, LoadedParams, SimulateArgs, SweepArgs, TrackArgs};

const SQUARE: &str = include_str!("../scenarios/square.json");
const SQUARE_HALVED: &str = include_str!("../scenarios/square-halved-limits.json");

fn csv_bytes<F>(write: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

fn read_named(arg: &str, bundled: Option<&'static str>, what: &str) -> Result<String, CliError> {
    match bundled {
        Some(text) => Ok(text.to_string()),
        None => std::fs::read_to_string(arg)
            .map_err(|e| CliError::Usage(format!("cannot read {what} {arg}: {e}"))),
    }
}

#[derive(Serialize)]
struct SweepSidecar<'a> {
    params_sha256: String,
    analysis: Analysis,
    statistic: Option<Statistic>,
    combos: Vec<String>,
    /// Singular-value ratio for gsi, relative rank tolerance for kcm.
    threshold: Option<f64>,
    grid: GridSpec,
    cells: usize,
    min: f64,
    max: f64,
    mirror_asymmetry: Option<f64>,
    csv: &'a str,
}

pub fn sweep(args: &SweepArgs, p: LoadedParams) -> Result<(), CliError> {
    let limit = args.limit_deg.unwrap_or(match args.analysis {
        Analysis::Kcm => p.params.joint_limit.to_degrees(),
        _ => 180.0,
    });
    let spec = GridSpec::symmetric(limit, args.grid_deg);
    spec.axis()?;
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let grid = run_sweep(&p.params, args.analysis, args.statistic, &spec, args.workers)?;

    let stem = match args.analysis {
        Analysis::Gsi => format!("gsi_{}", stat_name(args.statistic)),
        Analysis::Det => format!("det_{}", stat_name(args.statistic)),
        Analysis::Kcm => "kcm_rank".to_string(),
    };
    let csv_name = format!("{stem}.csv");
    let mut out = OutputDir::create(&args.out)?;
    out.record_input("params", &p.source, &p.bytes);
    out.write(&csv_name, &csv_bytes(|b| grid.write_csv(b))?)?;
    let sidecar = SweepSidecar {
        params_sha256: sha256_hex(&p.bytes),
        analysis: grid.analysis,
        statistic: grid.statistic,
        combos: grid.combos.iter().map(|c| c.to_string()).collect(),
        threshold: match args.analysis {
            Analysis::Gsi => Some(GSI_SINGULAR_RATIO),
            Analysis::Kcm => Some(KCM_RANK_TOL),
            Analysis::Det => None,
        },
        grid: spec,
        cells: grid.values.iter().map(Vec::len).sum(),
        min: grid.min_value(),
        max: grid.max_value(),
        mirror_asymmetry: grid.mirror_asymmetry(),
        csv: &csv_name,
    };
    out.write_json(&format!("{stem}.json"), &sidecar)?;
    out.write("plot_sweep.py", plots::SWEEP.as_bytes())?;
    out.finish(
        "sweep",
        json!({ "analysis": args.analysis, "statistic": args.statistic, "grid": spec, "workers": args.workers }),
    )?;
    println!(
        "{stem}: {} cells, min {:e}, max {:e}, mirror asymmetry {:?}",
        sidecar.cells, sidecar.min, sidecar.max, sidecar.mirror_asymmetry
    );
    Ok(())
}

fn stat_name(s: Statistic) -> &'static str {
    match s {
        Statistic::Min => "min",
        Statistic::Max => "max",
    }
}

#[derive(Serialize)]
struct TrackSummary<'a> {
    scenario: &'a str,
    params_sha256: String,
    scenario_sha256: String,
    total_time: f64,
    durations: &'a [f64],
    scaling_iterations: usize,
    scaling_factors: &'a [f64],
    initial_feasibility: Feasibility,
    final_feasibility: Feasibility,
    metrics: TrackMetrics,
}

pub fn track(args: &TrackArgs, p: LoadedParams) -> Result<(), CliError> {
    let bundled = match args.scenario.as_str() {
        "square" => Some(SQUARE),
        "square-halved-limits" => Some(SQUARE_HALVED),
        _ => None,
    };
    let text = read_named(&args.scenario, bundled, "scenario")?;
    let scenario = Scenario::from_json_str(&text)
        .map_err(|e| CliError::Usage(format!("scenario {}: {e}", args.scenario)))?;
    if scenario.waypoints.len() < 2 {
        return Err(CliError::Usage(format!(
            "scenario {} needs at least two waypoints, got {}",
            args.scenario,
            scenario.waypoints.len()
        )));
    }
    let run = run_scenario(&scenario, &p.params)?;

    let mut out = OutputDir::create(&args.out)?;
    out.record_input("params", &p.source, &p.bytes);
    out.record_input("scenario", &args.scenario, text.as_bytes());
    out.write("trace.csv", &csv_bytes(|b| write_track_csv(&run.result.rows, b))?)?;
    let summary = TrackSummary {
        scenario: &scenario.name,
        params_sha256: sha256_hex(&p.bytes),
        scenario_sha256: sha256_hex(text.as_bytes()),
        total_time: run.trajectory.total_time(),
        durations: &run.trajectory.durations,
        scaling_iterations: run.scaling.iterations,
        scaling_factors: &run.scaling.factors,
        initial_feasibility: run.scaling.initial,
        final_feasibility: run.scaling.last,
        metrics: run.result.metrics,
    };
    out.write_json("metrics.json", &summary)?;
    out.write("plot_trace.py", plots::TRACE.as_bytes())?;
    out.finish("track", json!({ "scenario": scenario }))?;
    let m = &run.result.metrics;
    println!(
        "{}: T = {:.3} s, ATE {:.3e} m, max position error {:.3e} m, max heading error {:.3e} deg, clamp activations {}",
        scenario.name,
        summary.total_time,
        m.ate,
        m.max_position_error,
        m.max_heading_error_deg,
        m.clamp_activations
    );
    Ok(())
}

/// Energy drift bound for an unforced, frictionless run.
const ENERGY_DRIFT_BOUND: f64 = 1e-3;

#[derive(Serialize)]
struct SimSummary<'a> {
    profile: &'a str,
    params_sha256: String,
    profile_sha256: String,
    mode: mecanum_reconfig::InputMode,
    status: &'static str,
    /// Last time reached without divergence.
    final_time: f64,
    final_pose: [f64; 5],
    final_rate: [f64; 5],
    energy_drift: f64,
    /// `PASS`/`FAIL` for unforced frictionless runs that never reach a joint
    /// stop, `n/a` otherwise.
    energy_check: &'static str,
    max_constraint_residual: f64,
    joint_clamps: usize,
    trace_rows: usize,
}

pub fn simulate(args: &SimulateArgs, p: LoadedParams) -> Result<(), CliError> {
    let text = read_named(&args.profile, Profile::bundled(&args.profile), "profile")?;
    let profile = Profile::from_json_str(&text)
        .map_err(|e| CliError::Usage(format!("profile {}: {e}", args.profile)))?;
    let mode = args.mode.map(Into::into).unwrap_or(profile.mode);
    let mut params = p.params.clone();
    if profile.frictionless {
        params.friction = Friction::default();
    }
    let conservative = profile.is_unforced() && params.friction == Friction::default();

    let mut sim = Simulator::new(params, profile.initial_state(), profile.dt)?
        .with_decimation(profile.decimation);
    let outcome = sim.run(profile.duration, |t| profile.input_at(t, mode));
    let diverged = match outcome {
        Ok(()) => None,
        Err(e @ ModelError::Diverged { .. }) => Some(e),
        Err(e) => return Err(e.into()),
    };

    let drift = sim.energy_drift();
    let summary = SimSummary {
        profile: &profile.name,
        params_sha256: sha256_hex(&p.bytes),
        profile_sha256: sha256_hex(text.as_bytes()),
        mode,
        status: if diverged.is_some() { "diverged" } else { "ok" },
        final_time: sim.time,
        final_pose: sim.state.x.into(),
        final_rate: sim.state.xdot.into(),
        energy_drift: drift,
        energy_check: match (conservative && sim.joint_clamps == 0, drift < ENERGY_DRIFT_BOUND) {
            (false, _) => "n/a",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        },
        max_constraint_residual: sim.max_residual,
        joint_clamps: sim.joint_clamps,
        trace_rows: sim.trace.len(),
    };

    let mut out = OutputDir::create(&args.out)?;
    out.record_input("params", &p.source, &p.bytes);
    out.record_input("profile", &args.profile, text.as_bytes());
    out.write("trace.csv", &csv_bytes(|b| write_trace_csv(&sim.trace, b))?)?;
    out.write_json("summary.json", &summary)?;
    out.write("plot_trace.py", plots::TRACE.as_bytes())?;
    out.finish("simulate", json!({ "profile": profile, "mode": mode }))?;
    println!(
        "{}: {} at t = {} s, energy drift {:.3e} ({}), max residual {:.3e}",
        summary.profile, summary.status, summary.final_time, drift, summary.energy_check, sim.max_residual
    );
    match diverged {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn geometry(args: &GeometryArgs, p: LoadedParams) -> Result<(), CliError> {
    if !args.phi1.is_finite() || !args.phi2.is_finite() {
        return Err(CliError::Usage("joint angles must be finite".into()));
    }
    let report = geometry_report(&p.params, args.phi1.to_radians(), args.phi2.to_radians());
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    if let Some(dir) = &args.out {
        let mut out = OutputDir::create(dir)?;
        out.record_input("params", &p.source, &p.bytes);
        out.write_json("geometry.json", &report)?;
        out.finish("geometry", json!({ "phi1_deg": args.phi1, "phi2_deg": args.phi2 }))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClampSummary {
    seed: u64,
    cases: usize,
    activations: usize,
    min_beta: f64,
    /// Largest `|u_i| / u_lim,i` after clamping.
    max_ratio_after: f64,
    all_within_limits: bool,
}

pub fn clamp_demo(args: &ClampArgs, p: LoadedParams) -> Result<(), CliError> {
    let params = &p.params;
    let limits = &params.actuator_limits;
    let lim = params.joint_limit;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let ratio = |u: &nalgebra::Vector6<f64>| (0..6).map(|i| u[i].abs() / limits[i]).fold(0.0, f64::max);

    let mut csv = String::from(
        "case,theta,phi1,phi2,cmd_vx,cmd_vy,cmd_omega,cmd_phi1_rate,cmd_phi2_rate,beta,ratio_before,ratio_after\n",
    );
    let mut summary = ClampSummary {
        seed: args.seed,
        cases: args.cases,
        activations: 0,
        min_beta: 1.0,
        max_ratio_after: 0.0,
        all_within_limits: true,
    };
    for case in 0..args.cases {
        let x = Pose::new(
            0.0,
            0.0,
            rng.random_range(-3.0..3.0),
            rng.random_range(-lim..lim),
            rng.random_range(-lim..lim),
        );
        let scale = rng.random_range(0.01..4.0);
        let xdot_c = Pose::from_fn(|_, _| rng.random_range(-1.0..1.0) * scale);
        let maps = stack_maps(params, &x, false)?;
        let before = ratio(&(maps.a * xdot_c));
        let c = velocity_clamp(&xdot_c, &maps, limits);
        let after = ratio(&c.u);
        summary.activations += (c.beta < 1.0) as usize;
        summary.min_beta = summary.min_beta.min(c.beta);
        summary.max_ratio_after = summary.max_ratio_after.max(after);
        summary.all_within_limits &= c.u.iter().zip(limits).all(|(u, l)| u.abs() <= *l);
        let fields: Vec<String> = [x[2], x[3], x[4]]
            .into_iter()
            .chain(xdot_c.iter().copied())
            .chain([c.beta, before, after])
            .map(|v| format!("{v:.9e}"))
            .collect();
        csv.push_str(&format!("{case},{}\n", fields.join(",")));
    }

    let mut out = OutputDir::create(&args.out)?;
    out.record_input("params", &p.source, &p.bytes);
    out.write("clamp.csv", csv.as_bytes())?;
    out.write_json("summary.json", &summary)?;
    out.finish("clamp-demo", json!({ "seed": args.seed, "cases": args.cases }))?;
    println!(
        "{} cases, {} clamped, min beta {:.4}, max ratio after clamp {:.6}",
        summary.cases, summary.activations, summary.min_beta, summary.max_ratio_after
    );
    if !summary.all_within_limits {
        return Err(CliError::Failed("clamped command exceeded an actuator limit".into()));
    }
    Ok(())
}
