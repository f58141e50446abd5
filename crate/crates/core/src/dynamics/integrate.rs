use std::io::Write;

use nalgebra::{SVector, Vector6};
use serde::Serialize;

use super::model::{forward_dynamics, kinetic_energy, nullspace_n, pfaffian, reduced_model};
use crate::error::{ModelError, Result};
use crate::kinematics::{forward_map, stack_maps};
use crate::params::RobotParams;
use crate::state::{ControlInput, FullCoords, InputMode, Pose, RobotState, PHI1};

/// Integration state: full coordinates followed by reduced rates.
type Flow = SVector<f64, 18>;

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    /// `|Lambda q_dot|` with `q_dot = N x_dot`.
    pub constraint_residual: f64,
    pub energy: f64,
    /// Velocity mode only: `|A x_dot - u_v|`, nonzero when the command would slip.
    pub mapping_residual: f64,
    /// A joint angle left the limit and was clamped back.
    pub joint_clamped: bool,
}

fn pack(state: &RobotState) -> Flow {
    let mut y = Flow::zeros();
    y.fixed_rows_mut::<13>(0).copy_from(&state.q());
    y.fixed_rows_mut::<5>(13).copy_from(&state.xdot);
    y
}

fn unpack(y: &Flow) -> RobotState {
    RobotState {
        x: Pose::from_fn(|i, _| y[i]),
        xdot: Pose::from_fn(|i, _| y[13 + i]),
        sigma: y.fixed_rows::<4>(5).into_owned(),
        psi: y.fixed_rows::<4>(9).into_owned(),
    }
}

fn torque_rhs(params: &RobotParams, y: &Flow, u: &Vector6<f64>) -> Result<Flow> {
    let q = FullCoords::from_fn(|i, _| y[i]);
    let xdot = Pose::from_fn(|i, _| y[13 + i]);
    let red = reduced_model(params, &q, &xdot)?;
    let xddot = forward_dynamics(&red, u)?;
    let mut dy = Flow::zeros();
    dy.fixed_rows_mut::<13>(0).copy_from(&(red.n * xdot));
    dy.fixed_rows_mut::<5>(13).copy_from(&xddot);
    Ok(dy)
}

fn velocity_rhs(params: &RobotParams, y: &Flow, u: &Vector6<f64>) -> Result<Flow> {
    let x = Pose::from_fn(|i, _| y[i]);
    let maps = stack_maps(params, &x, false)?;
    let (xdot, _) = forward_map(&maps, u);
    let (n, _) = nullspace_n(params, &x, &Pose::zeros())?;
    let mut dy = Flow::zeros();
    dy.fixed_rows_mut::<13>(0).copy_from(&(n * xdot));
    Ok(dy)
}

fn rk4<F>(y: &Flow, dt: f64, f: F) -> Result<Flow>
where
    F: Fn(&Flow) -> Result<Flow>,
{
    // a non-finite stage is divergence, not a modelling error
    let stage = |y: &Flow| -> Result<Flow> {
        if !y.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Diverged { time: f64::NAN });
        }
        let k = f(y)?;
        if !k.iter().all(|v| v.is_finite()) {
            return Err(ModelError::Diverged { time: f64::NAN });
        }
        Ok(k)
    };
    let k1 = stage(y)?;
    let k2 = stage(&(y + k1 * (dt / 2.0)))?;
    let k3 = stage(&(y + k2 * (dt / 2.0)))?;
    let k4 = stage(&(y + k3 * dt))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Constraint residual and kinetic energy at a state.
pub fn diagnostics(params: &RobotParams, state: &RobotState) -> Result<(f64, f64)> {
    let (n, _) = nullspace_n(params, &state.x, &Pose::zeros())?;
    let residual = (pfaffian(params, &state.x)? * (n * state.xdot)).norm();
    Ok((residual, kinetic_energy(params, &state.x, &state.xdot)?))
}

/// Advances one fixed RK4 step. Torque mode integrates the reduced dynamics;
/// velocity mode integrates `x_dot = A^+ u_v` and stores that rate in the
/// returned state.
pub fn step(
    params: &RobotParams,
    state: &RobotState,
    input: &ControlInput,
    dt: f64,
) -> Result<(RobotState, StepReport)> {
    if !(dt > 0.0) {
        return Err(ModelError::InvalidParams(format!("time step must be positive, got {dt}")));
    }
    if !state.is_finite() || !input.is_finite() {
        return Err(ModelError::Diverged { time: f64::NAN });
    }
    let u = input.values;
    let y = pack(state);
    let (next, mapping_residual) = match input.mode {
        InputMode::Torque => (rk4(&y, dt, |y| torque_rhs(params, y, &u))?, 0.0),
        InputMode::Velocity => {
            let mut next = rk4(&y, dt, |y| velocity_rhs(params, y, &u))?;
            let x = Pose::from_fn(|i, _| next[i]);
            let (xdot, residual) = forward_map(&stack_maps(params, &x, false)?, &u);
            next.fixed_rows_mut::<5>(13).copy_from(&xdot);
            (next, residual)
        }
    };
    let mut out = unpack(&next);
    if !out.is_finite() {
        return Err(ModelError::Diverged { time: f64::NAN });
    }
    let mut joint_clamped = false;
    for k in 0..2 {
        let phi = out.x[PHI1 + k];
        if phi.abs() > params.joint_limit {
            out.x[PHI1 + k] = phi.clamp(-params.joint_limit, params.joint_limit);
            out.xdot[PHI1 + k] = 0.0;
            joint_clamped = true;
        }
    }
    let (constraint_residual, energy) = diagnostics(params, &out)?;
    Ok((
        out,
        StepReport { constraint_residual, energy, mapping_residual, joint_clamped },
    ))
}

/// One row of a simulation trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    pub x: Pose,
    pub xdot: Pose,
    pub u: Vector6<f64>,
    pub residual: f64,
    pub energy: f64,
}

pub const TRACE_HEADER: &str = "time,px,py,theta,phi1,phi2,\
vx,vy,omega,phi1_rate,phi2_rate,u1,u2,u3,u4,u5,u6,residual,energy";

impl TraceRow {
    pub fn csv_fields(&self) -> Vec<String> {
        std::iter::once(self.time)
            .chain(self.x.iter().copied())
            .chain(self.xdot.iter().copied())
            .chain(self.u.iter().copied())
            .chain([self.residual, self.energy])
            .map(|v| format!("{v:.9e}"))
            .collect()
    }
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_fields().join(","))?;
    }
    Ok(())
}

/// Owns one simulation run.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub params: RobotParams,
    pub state: RobotState,
    pub time: f64,
    pub dt: f64,
    /// Keep every n-th step in the trace (the initial state is always kept).
    pub decimation: usize,
    pub trace: Vec<TraceRow>,
    pub max_residual: f64,
    pub joint_clamps: usize,
    steps: usize,
}

impl Simulator {
    pub fn new(params: RobotParams, state: RobotState, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(ModelError::InvalidParams(format!("time step must be positive, got {dt}")));
        }
        let (residual, energy) = diagnostics(&params, &state)?;
        let trace = vec![TraceRow {
            time: 0.0,
            x: state.x,
            xdot: state.xdot,
            u: Vector6::zeros(),
            residual,
            energy,
        }];
        Ok(Simulator {
            params,
            state,
            time: 0.0,
            dt,
            decimation: 1,
            trace,
            max_residual: residual,
            joint_clamps: 0,
            steps: 0,
        })
    }

    pub fn with_decimation(mut self, every: usize) -> Self {
        self.decimation = every.max(1);
        self
    }

    pub fn advance(&mut self, input: &ControlInput) -> Result<StepReport> {
        let (next, report) = step(&self.params, &self.state, input, self.dt).map_err(|e| match e {
            ModelError::Diverged { .. } => ModelError::Diverged { time: self.time },
            other => other,
        })?;
        self.state = next;
        self.steps += 1;
        self.time = self.steps as f64 * self.dt;
        self.max_residual = self.max_residual.max(report.constraint_residual);
        self.joint_clamps += report.joint_clamped as usize;
        if self.steps.is_multiple_of(self.decimation) {
            self.trace.push(TraceRow {
                time: self.time,
                x: self.state.x,
                xdot: self.state.xdot,
                u: input.values,
                residual: report.constraint_residual,
                energy: report.energy,
            });
        }
        Ok(report)
    }

    /// Runs until `duration` with the input chosen per step from the current time.
    pub fn run<F>(&mut self, duration: f64, mut input: F) -> Result<()>
    where
        F: FnMut(f64) -> ControlInput,
    {
        let steps = (duration / self.dt).round() as usize;
        for _ in 0..steps {
            let u = input(self.time);
            self.advance(&u)?;
        }
        Ok(())
    }

    /// Largest relative deviation of the trace energy from its initial value.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.trace[0].energy;
        self.trace
            .iter()
            .map(|r| (r.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}
