use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use mecanum_reconfig::{ControlInput, InputMode, Pose, RobotState};

pub const STATIC: &str = include_str!("../profiles/static.json");
pub const COAST: &str = include_str!("../profiles/coast.json");
pub const WHEEL_PULSE: &str = include_str!("../profiles/wheel-pulse.json");

/// Piecewise-constant open-loop input. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default)]
    pub name: String,
    pub mode: InputMode,
    /// s
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub decimation: usize,
    /// `[px, py, theta_deg, phi1_deg, phi2_deg]`
    #[serde(default)]
    pub initial_pose: [f64; 5],
    /// `[vx, vy, omega, phi1_rate, phi2_rate]` in m/s and rad/s.
    #[serde(default)]
    pub initial_rate: [f64; 5],
    /// Zero every friction coefficient before simulating.
    #[serde(default)]
    pub frictionless: bool,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

/// `u` applies on `start <= t < end`; overlapping segments add.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub u: [f64; 6],
}

fn default_dt() -> f64 {
    1e-3
}

fn one() -> usize {
    1
}

impl Profile {
    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let p: Profile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !(p.duration >= 0.0 && p.duration.is_finite()) {
            return Err(format!("duration must be non-negative, got {}", p.duration));
        }
        if !(p.dt > 0.0 && p.dt.is_finite()) {
            return Err(format!("dt must be positive, got {}", p.dt));
        }
        if let Some(s) = p.segments.iter().find(|s| !(s.end >= s.start)) {
            return Err(format!("segment ends before it starts: {} .. {}", s.start, s.end));
        }
        Ok(p)
    }

    pub fn bundled(name: &str) -> Option<&'static str> {
        match name {
            "static" => Some(STATIC),
            "coast" => Some(COAST),
            "wheel-pulse" => Some(WHEEL_PULSE),
            _ => None,
        }
    }

    pub fn initial_state(&self) -> RobotState {
        let w = self.initial_pose;
        let mut s = RobotState::at_rest(Pose::new(w[0], w[1], w[2].to_radians(), w[3].to_radians(), w[4].to_radians()));
        s.xdot = Pose::from_row_slice(&self.initial_rate);
        s
    }

    pub fn input_at(&self, t: f64, mode: InputMode) -> ControlInput {
        let mut u = Vector6::zeros();
        for s in self.segments.iter().filter(|s| s.start <= t && t < s.end) {
            u += Vector6::from_row_slice(&s.u);
        }
        ControlInput { mode, values: u }
    }

    /// No actuation at all, so energy can only change through friction.
    pub fn is_unforced(&self) -> bool {
        self.segments.iter().all(|s| s.u.iter().all(|v| *v == 0.0))
    }
}
