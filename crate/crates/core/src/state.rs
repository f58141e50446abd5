use nalgebra::{SVector, Vector4, Vector5, Vector6};
use serde::{Deserialize, Serialize};

/// Reduced coordinates `[px, py, theta, phi1, phi2]` (m, m, rad, rad, rad).
pub type Pose = Vector5<f64>;

/// Full coordinates `[px, py, theta, phi1, phi2, sigma1..4, psi1..4]`.
pub type FullCoords = SVector<f64, 13>;

pub const THETA: usize = 2;
pub const PHI1: usize = 3;
pub const PHI2: usize = 4;

/// Simulation state. Angles are never wrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: Pose,
    pub xdot: Pose,
    /// Wheel spin angles (rad).
    pub sigma: Vector4<f64>,
    /// Roller angles (rad).
    pub psi: Vector4<f64>,
}

impl RobotState {
    pub fn at_rest(x: Pose) -> Self {
        RobotState {
            x,
            xdot: Pose::zeros(),
            sigma: Vector4::zeros(),
            psi: Vector4::zeros(),
        }
    }

    pub fn q(&self) -> FullCoords {
        let mut q = FullCoords::zeros();
        q.fixed_rows_mut::<5>(0).copy_from(&self.x);
        q.fixed_rows_mut::<4>(5).copy_from(&self.sigma);
        q.fixed_rows_mut::<4>(9).copy_from(&self.psi);
        q
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter()
            .chain(self.xdot.iter())
            .chain(self.sigma.iter())
            .chain(self.psi.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Wheel and joint rates (rad/s).
    Velocity,
    /// Wheel and joint torques (N m).
    Torque,
}

/// Actuator command, wheels 1..4 then joints 1..2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub mode: InputMode,
    pub values: Vector6<f64>,
}

impl ControlInput {
    pub fn velocity(values: Vector6<f64>) -> Self {
        ControlInput { mode: InputMode::Velocity, values }
    }

    pub fn torque(values: Vector6<f64>) -> Self {
        ControlInput { mode: InputMode::Torque, values }
    }

    pub fn zero(mode: InputMode) -> Self {
        ControlInput { mode, values: Vector6::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// True when every entry respects the matching limit.
    pub fn within(&self, limits: &[f64; 6]) -> bool {
        self.values.iter().zip(limits).all(|(u, l)| u.abs() <= *l)
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
