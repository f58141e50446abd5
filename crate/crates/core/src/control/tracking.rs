use std::io::Write;

use serde::{Deserialize, Serialize};

use super::law::{pd_law, pose_error, velocity_clamp, GainSet};
use super::trajectory::{generate_trajectory, time_scale_until_feasible, ScalingOutcome, Trajectory5D};
use crate::dynamics::{Simulator, TraceRow, TRACE_HEADER};
use crate::error::{ModelError, Result};
use crate::kinematics::stack_maps;
use crate::params::RobotParams;
use crate::state::{ControlInput, InputMode, Pose, RobotState, THETA};

/// Gain of the inner actuator-rate loop used in torque mode (N m s/rad).
pub const DEFAULT_RATE_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub gains: GainSet,
    pub mode: InputMode,
    /// Controller period (s).
    pub dt: f64,
    pub limits: [f64; 6],
    /// Torque mode: `tau = rate_gain (u_ref - A x_dot)`.
    pub rate_gain: f64,
    /// Torque mode: simulator steps per controller period.
    pub substeps: usize,
}

impl TrackConfig {
    pub fn kinematic(params: &RobotParams) -> Self {
        TrackConfig {
            gains: GainSet::default(),
            mode: InputMode::Velocity,
            dt: 0.01,
            limits: params.actuator_limits,
            rate_gain: DEFAULT_RATE_GAIN,
            substeps: 10,
        }
    }
}

/// One controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub sim: TraceRow,
    pub x_d: Pose,
    pub xdot_c: Pose,
    pub xdot_f: Pose,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackMetrics {
    /// m
    pub ate: f64,
    /// m
    pub max_position_error: f64,
    /// deg
    pub max_heading_error_deg: f64,
    /// deg
    pub max_joint_error_deg: f64,
    /// Steps with `beta < 1`.
    pub clamp_activations: usize,
    pub min_beta: f64,
    pub steps: usize,
    pub duration: f64,
    pub max_constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub rows: Vec<TrackRow>,
    pub metrics: TrackMetrics,
}

/// Closed-loop tracking of `traj` from `initial` (the trajectory start when
/// `None`). Each controller step samples the reference, applies the
/// proportional law and the limit clamp, maps to actuator rates and advances
/// the simulator for one period.
pub fn track(
    traj: &Trajectory5D,
    params: &RobotParams,
    config: &TrackConfig,
    initial: Option<Pose>,
) -> Result<TrackResult> {
    if !(config.dt > 0.0) {
        return Err(ModelError::InvalidParams(format!("controller period must be positive, got {}", config.dt)));
    }
    if !config.gains.is_valid() {
        return Err(ModelError::InvalidParams("gains must be non-negative".into()));
    }
    let x0 = initial.unwrap_or_else(|| traj.eval(0.0).x);
    let substeps = match config.mode {
        InputMode::Velocity => 1,
        InputMode::Torque => config.substeps.max(1),
    };
    let mut sim = Simulator::new(params.clone(), RobotState::at_rest(x0), config.dt / substeps as f64)?;
    let steps = (traj.total_time() / config.dt).ceil() as usize;
    let mut rows = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * config.dt;
        let reference = traj.eval(t);
        let state = sim.state.clone();
        let xdot_c = pd_law(&reference.x, &reference.xdot, &state.x, &config.gains);
        let maps = stack_maps(params, &state.x, false)?;
        let clamped = velocity_clamp(&xdot_c, &maps, &config.limits);
        let (residual, energy) = crate::dynamics::diagnostics(params, &state)?;
        rows.push(TrackRow {
            sim: TraceRow { time: t, x: state.x, xdot: state.xdot, u: clamped.u, residual, energy },
            x_d: reference.x,
            xdot_c,
            xdot_f: clamped.xdot,
            beta: clamped.beta,
        });
        if k == steps {
            break;
        }
        match config.mode {
            InputMode::Velocity => {
                sim.advance(&ControlInput::velocity(clamped.u))?;
            }
            InputMode::Torque => {
                for _ in 0..substeps {
                    let a = stack_maps(params, &sim.state.x, false)?.a;
                    let tau = (clamped.u - a * sim.state.xdot) * config.rate_gain;
                    sim.advance(&ControlInput::torque(tau))?;
                }
            }
        }
    }

    let metrics = summarize(&rows, sim.max_residual)?;
    Ok(TrackResult { rows, metrics })
}

fn summarize(rows: &[TrackRow], max_residual: f64) -> Result<TrackMetrics> {
    let executed: Vec<Pose> = rows.iter().map(|r| r.sim.x).collect();
    let reference: Vec<Pose> = rows.iter().map(|r| r.x_d).collect();
    let mut m = TrackMetrics {
        ate: ate(&executed, &reference)?,
        max_position_error: 0.0,
        max_heading_error_deg: 0.0,
        max_joint_error_deg: 0.0,
        clamp_activations: 0,
        min_beta: 1.0,
        steps: rows.len().saturating_sub(1),
        duration: rows.last().map_or(0.0, |r| r.sim.time),
        max_constraint_residual: max_residual,
    };
    for r in rows {
        let e = pose_error(&r.x_d, &r.sim.x);
        m.max_position_error = m.max_position_error.max(e.x.hypot(e.y));
        m.max_heading_error_deg = m.max_heading_error_deg.max(e[THETA].abs().to_degrees());
        m.max_joint_error_deg = m.max_joint_error_deg.max(e[3].abs().max(e[4].abs()).to_degrees());
        if r.beta < 1.0 {
            m.clamp_activations += 1;
        }
        m.min_beta = m.min_beta.min(r.beta);
    }
    Ok(m)
}

/// Root-mean-square planar distance between time-aligned poses.
pub fn ate(executed: &[Pose], reference: &[Pose]) -> Result<f64> {
    if executed.is_empty() || reference.is_empty() {
        return Err(ModelError::EmptyTrace);
    }
    if executed.len() != reference.len() {
        return Err(ModelError::InvalidParams(format!(
            "traces not aligned: {} vs {} samples",
            executed.len(),
            reference.len()
        )));
    }
    let sum: f64 = executed
        .iter()
        .zip(reference)
        .map(|(a, b)| (a.x - b.x).powi(2) + (a.y - b.y).powi(2))
        .sum();
    Ok((sum / executed.len() as f64).sqrt())
}

pub fn track_header() -> String {
    format!(
        "{TRACE_HEADER},xd_px,xd_py,xd_theta,xd_phi1,xd_phi2,\
cmd_vx,cmd_vy,cmd_omega,cmd_phi1_rate,cmd_phi2_rate,\
clamped_vx,clamped_vy,clamped_omega,clamped_phi1_rate,clamped_phi2_rate,beta"
    )
}

pub fn write_track_csv<W: Write>(rows: &[TrackRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", track_header())?;
    for r in rows {
        let mut fields = r.sim.csv_fields();
        fields.extend(
            r.x_d
                .iter()
                .chain(r.xdot_c.iter())
                .chain(r.xdot_f.iter())
                .chain(std::iter::once(&r.beta))
                .map(|v| format!("{v:.9e}")),
        );
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Tracking scenario file. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// `[px, py, theta_deg, phi1_deg, phi2_deg]`
    pub waypoints: Vec<[f64; 5]>,
    #[serde(default)]
    pub durations: Option<Vec<f64>>,
    #[serde(default)]
    pub gains: Option<[f64; 5]>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_mode")]
    pub mode: InputMode,
    /// Actuator limits used while tracking; planning keeps the parameter-file limits.
    #[serde(default)]
    pub limits_override: Option<[f64; 6]>,
    #[serde(default = "default_dt")]
    pub dt_check: f64,
}

fn default_dt() -> f64 {
    0.01
}

fn default_mode() -> InputMode {
    InputMode::Velocity
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn waypoints_rad(&self) -> Vec<Pose> {
        self.waypoints
            .iter()
            .map(|w| Pose::new(w[0], w[1], w[2].to_radians(), w[3].to_radians(), w[4].to_radians()))
            .collect()
    }

    pub fn config(&self, params: &RobotParams) -> TrackConfig {
        TrackConfig {
            gains: self.gains.map_or_else(GainSet::default, |kp| GainSet { kp }),
            mode: self.mode,
            dt: self.dt,
            limits: self.limits_override.unwrap_or(params.actuator_limits),
            ..TrackConfig::kinematic(params)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trajectory: Trajectory5D,
    pub scaling: ScalingOutcome,
    pub result: TrackResult,
}

/// Generate, check and time-scale against the parameter limits, then track.
pub fn run_scenario(scenario: &Scenario, params: &RobotParams) -> Result<ScenarioRun> {
    let waypoints = scenario.waypoints_rad();
    let traj = generate_trajectory(&waypoints, scenario.durations.as_deref())?;
    let (trajectory, scaling) =
        time_scale_until_feasible(&traj, params, &params.actuator_limits, scenario.dt_check)?;
    let result = track(&trajectory, params, &scenario.config(params), None)?;
    Ok(ScenarioRun { trajectory, scaling, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::trajectory::generate_trajectory;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(side: f64) -> Vec<Pose> {
        vec![
            Pose::zeros(),
            Pose::new(side, 0.0, 0.0, 0.0, 0.0),
            Pose::new(side, side, 0.0, 0.0, 0.0),
            Pose::new(0.0, side, 0.0, 0.0, 0.0),
            Pose::zeros(),
        ]
    }

    fn feasible_square(params: &RobotParams) -> Trajectory5D {
        let traj = generate_trajectory(&square(1.0), None).unwrap();
        time_scale_until_feasible(&traj, params, &params.actuator_limits, 0.01).unwrap().0
    }

    #[test]
    fn ate_basics() {
        let a: Vec<Pose> = (0..10).map(|k| Pose::new(k as f64, 0.0, 0.0, 0.0, 0.0)).collect();
        assert_eq!(ate(&a, &a).unwrap(), 0.0);
        let shifted: Vec<Pose> = a.iter().map(|p| p + Pose::new(0.3, 0.0, 1.0, 0.0, 0.0)).collect();
        assert!((ate(&shifted, &a).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(ate(&[], &[]), Err(ModelError::EmptyTrace)));
        assert!(ate(&a[..3], &a).is_err());
    }

    #[test]
    fn ate_matches_direct_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 257;
        let a: Vec<Pose> = (0..n).map(|_| Pose::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect();
        let b: Vec<Pose> = (0..n).map(|_| Pose::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect();
        let mut acc = 0.0;
        for i in 0..n {
            let dx = a[i][0] - b[i][0];
            let dy = a[i][1] - b[i][1];
            acc += dx * dx + dy * dy;
        }
        let direct = (acc / n as f64).sqrt();
        assert!((ate(&a, &b).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn kinematic_square_tracking() {
        let p = RobotParams::default();
        let traj = feasible_square(&p);
        let out = track(&traj, &p, &TrackConfig::kinematic(&p), None).unwrap();
        assert!(out.metrics.max_position_error < 0.005, "{:?}", out.metrics);
        assert!(out.metrics.max_heading_error_deg < 0.2);
        assert_eq!(out.metrics.clamp_activations, 0);
        assert!(out.metrics.max_constraint_residual < 1e-8);
    }

    #[test]
    fn feedforward_alone_follows() {
        let p = RobotParams::default();
        let traj = feasible_square(&p);
        let config = TrackConfig { gains: GainSet::uniform(0.0), ..TrackConfig::kinematic(&p) };
        let out = track(&traj, &p, &config, None).unwrap();
        assert!(out.metrics.max_position_error < 0.02, "{:?}", out.metrics);
    }

    #[test]
    fn clamped_motion_stays_parallel() {
        let p = RobotParams::default();
        let traj = feasible_square(&p);
        let mut config = TrackConfig::kinematic(&p);
        config.limits = p.actuator_limits.map(|l| 0.5 * l);
        let out = track(&traj, &p, &config, None).unwrap();
        assert!(out.metrics.clamp_activations > 0);
        for w in out.rows.windows(2) {
            let (cmd, realized) = (w[0].xdot_c, w[1].sim.xdot);
            assert!(w[0].beta <= 1.0);
            // realized rate equals beta * commanded rate
            assert!((realized - cmd * w[0].beta).norm() < 1e-12 * (1.0 + cmd.norm()));
        }
    }

    #[test]
    fn step_reference_error_decreases() {
        let p = RobotParams::default();
        let target = Pose::new(0.2, -0.1, 0.3, 0.2, -0.1);
        let traj = generate_trajectory(&[target, target], Some(&[3.0])).unwrap();
        let out = track(&traj, &p, &TrackConfig::kinematic(&p), Some(Pose::zeros())).unwrap();
        let errors: Vec<f64> = out.rows.iter().map(|r| pose_error(&r.x_d, &r.sim.x).norm()).collect();
        let first_unclamped = out.rows.iter().position(|r| r.beta == 1.0).unwrap();
        assert!(errors[first_unclamped..].windows(2).all(|w| w[1] < w[0]));
        assert!(errors.last().unwrap() < &1e-2);
    }

    #[test]
    fn torque_mode_follows_loosely() {
        let p = RobotParams::default();
        let traj = feasible_square(&p);
        let config = TrackConfig { mode: InputMode::Torque, ..TrackConfig::kinematic(&p) };
        let out = track(&traj, &p, &config, None).unwrap();
        assert!(out.metrics.max_position_error < 0.1, "{:?}", out.metrics);
    }

    #[test]
    fn scenario_defaults_and_validation() {
        let s = Scenario::from_json_str(r#"{"waypoints": [[0,0,0,0,0],[1,0,90,0,0]]}"#).unwrap();
        assert_eq!(s.dt, 0.01);
        assert_eq!(s.mode, InputMode::Velocity);
        assert!((s.waypoints_rad()[1][2] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(Scenario::from_json_str(r#"{"waypoints": [], "bogus": 1}"#).is_err());
        let empty = Scenario::from_json_str(r#"{"waypoints": []}"#).unwrap();
        assert!(run_scenario(&empty, &RobotParams::default()).is_err());
    }

    #[test]
    fn track_csv_columns() {
        let p = RobotParams::default();
        let traj = generate_trajectory(&[Pose::zeros(), Pose::new(0.1, 0.0, 0.0, 0.0, 0.0)], None).unwrap();
        let out = track(&traj, &p, &TrackConfig::kinematic(&p), None).unwrap();
        let mut buf = Vec::new();
        write_track_csv(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let width = track_header().split(',').count();
        assert_eq!(width, 35);
        assert!(text.lines().all(|l| l.split(',').count() == width));
    }
}
