//! Robot parameters: geometry, inertial properties, actuator limits and friction.
//!
//! On disk the parameters are a versioned JSON document (`"schema": 1`) with
//! lengths in meters, masses in kilograms and angles in degrees. In memory all
//! angles are radians.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_JSON: &str = include_str!("../params/default.json");
pub const DEPLOYMENT_FIT_JSON: &str = include_str!("../params/deployment-fit.json");

/// Rigid link with planar inertia about its own center of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    /// Yaw inertia about the link CoM (kg m^2).
    pub inertia: f64,
    /// CoM in the link frame (m).
    pub com: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub mass: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelInertia {
    pub mass: f64,
    /// About the vertical axis through the hub.
    pub yaw_inertia: f64,
    /// About the axle.
    pub spin_inertia: f64,
}

/// Arm payload, carried by the body. Used by the mass-balance analysis only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub mass: f64,
    /// Position in the base frame (m).
    pub position: [f64; 2],
}

/// Viscous friction coefficients (N m s), stored positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Friction {
    #[serde(default)]
    pub joint: f64,
    #[serde(default)]
    pub wheel: f64,
    #[serde(default)]
    pub roller: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    pub name: String,
    /// Base origin to leg joint distance along the body (m).
    pub l1: f64,
    /// Joint to inner wheel (wheels 1 and 2 in zero-based order) along the leg (m).
    pub l2: f64,
    /// Joint to outer wheel (wheels 0 and 3) along the leg (m).
    pub l3: f64,
    pub wheel_radius: f64,
    pub roller_radius: f64,
    /// Wheel thickness along the axle (m).
    pub wheel_width: f64,
    /// Joint to leg tip, where counterbalance masses are mounted (m).
    pub leg_length: f64,
    /// Roller angle per wheel (rad).
    pub roller_angles: [f64; 4],
    /// Symmetric leg-joint travel bound (rad).
    pub joint_limit: f64,
    /// Actuator velocity limits, four wheels then two joints (rad/s).
    pub actuator_limits: [f64; 6],
    pub body: Link,
    pub legs: [Link; 2],
    pub joint: PointMass,
    pub wheel: WheelInertia,
    pub roller_inertia: f64,
    pub payload: Payload,
    pub friction: Friction,
}

impl Default for RobotParams {
    /// Clean fitted geometry with link CoMs at their geometric centers.
    fn default() -> Self {
        let (l1, l2, l3) = (0.20, 0.15, 0.44);
        let (wheel_radius, wheel_width, leg_length) = (0.065, 0.08, 0.48);
        let body_len = 2.0 * l1;
        let wheel_mass = 1.15;
        let leg = |mass: f64| Link {
            mass,
            inertia: mass * leg_length * leg_length / 12.0,
            com: [0.0, 0.5 * leg_length],
        };
        let deg = std::f64::consts::PI / 180.0;
        RobotParams {
            name: "default".into(),
            l1,
            l2,
            l3,
            wheel_radius,
            roller_radius: 0.012,
            wheel_width,
            leg_length,
            roller_angles: [45.0 * deg, -45.0 * deg, 45.0 * deg, -45.0 * deg],
            joint_limit: 95.0 * deg,
            actuator_limits: [12.0, 12.0, 12.0, 12.0, 3.0, 3.0],
            body: Link {
                mass: 3.1,
                inertia: 3.1 * body_len * body_len / 12.0,
                com: [0.0, 0.0],
            },
            legs: [leg(0.7), leg(0.8)],
            joint: PointMass {
                mass: 0.3,
                inertia: 1e-4,
            },
            wheel: WheelInertia {
                mass: wheel_mass,
                yaw_inertia: wheel_mass
                    * (3.0 * wheel_radius * wheel_radius + wheel_width * wheel_width)
                    / 12.0,
                spin_inertia: 0.5 * wheel_mass * wheel_radius * wheel_radius,
            },
            roller_inertia: 1e-5,
            payload: Payload {
                mass: 2.0,
                position: [0.0, 0.0],
            },
            friction: Friction::default(),
        }
    }
}

impl RobotParams {
    /// The bundled `default.json`.
    pub fn bundled_default() -> Self {
        Self::from_json_str(DEFAULT_JSON).expect("bundled default.json is valid")
    }

    /// The bundled `deployment-fit.json`: same geometry, with the body CoM and
    /// payload position shifted laterally to match the measured counterbalance.
    pub fn bundled_deployment_fit() -> Self {
        Self::from_json_str(DEPLOYMENT_FIT_JSON).expect("bundled deployment-fit.json is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Parses and validates a parameter document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)?;
        if file.schema != SCHEMA_VERSION {
            return Err(ModelError::Schema(file.schema));
        }
        let params = Self::from(file);
        params.validate()?;
        Ok(params)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ParamsFile::from(self)).expect("params serialize")
    }

    pub fn total_mass(&self) -> f64 {
        self.body.mass
            + self.legs[0].mass
            + self.legs[1].mass
            + 2.0 * self.joint.mass
            + 4.0 * self.wheel.mass
    }

    /// Offset of wheel `i` from its leg joint, along the leg.
    pub fn leg_offset(&self, wheel: usize) -> f64 {
        match wheel {
            0 | 3 => self.l3,
            _ => self.l2,
        }
    }

    /// Leg joint position in the base frame for leg 0 or 1.
    pub fn joint_position(&self, leg: usize) -> [f64; 2] {
        if leg == 0 {
            [-self.l1, 0.0]
        } else {
            [self.l1, 0.0]
        }
    }

    /// Copy with every mass and inertia multiplied by `k`.
    pub fn scaled_inertia(&self, k: f64) -> Self {
        let mut p = self.clone();
        let scale_link = |l: &mut Link| {
            l.mass *= k;
            l.inertia *= k;
        };
        scale_link(&mut p.body);
        p.legs.iter_mut().for_each(scale_link);
        p.joint.mass *= k;
        p.joint.inertia *= k;
        p.wheel.mass *= k;
        p.wheel.yaw_inertia *= k;
        p.wheel.spin_inertia *= k;
        p.roller_inertia *= k;
        p.payload.mass *= k;
        p
    }

    /// Checks ranges and that the inverse map is full column rank at the
    /// zero leg configuration.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        for (name, v) in [
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("wheel_radius", self.wheel_radius),
            ("roller_radius", self.roller_radius),
            ("joint_limit", self.joint_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.wheel_width >= 0.0 && self.leg_length >= 0.0) {
            return bad("wheel_width and leg_length must be non-negative".into());
        }
        for (i, a) in self.roller_angles.iter().enumerate() {
            let abs = a.abs();
            if !(abs > 0.0 && abs < std::f64::consts::FRAC_PI_2) {
                return bad(format!("roller angle {i} must lie strictly inside (0, 90) deg in magnitude"));
            }
        }
        if let Some(i) = self.actuator_limits.iter().position(|u| !(*u > 0.0)) {
            return bad(format!("actuator limit {i} must be positive"));
        }
        let masses = [
            self.body.mass,
            self.legs[0].mass,
            self.legs[1].mass,
            self.joint.mass,
            self.wheel.mass,
            self.payload.mass,
        ];
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return bad("masses must be non-negative".into());
        }
        if !(self.total_mass() > 0.0) {
            return bad("total mass must be positive".into());
        }
        let inertias = [
            self.body.inertia,
            self.legs[0].inertia,
            self.legs[1].inertia,
            self.joint.inertia,
            self.wheel.yaw_inertia,
        ];
        if inertias.iter().any(|i| !(*i >= 0.0)) {
            return bad("inertias must be non-negative".into());
        }
        if !(self.wheel.spin_inertia > 0.0 && self.roller_inertia > 0.0) {
            return bad("wheel spin and roller inertias must be positive".into());
        }
        let f = self.friction;
        if !(f.joint >= 0.0 && f.wheel >= 0.0 && f.roller >= 0.0) {
            return bad("friction coefficients are stored positive".into());
        }
        let maps = crate::kinematics::stack_maps(self, &crate::state::Pose::zeros(), false)?;
        if maps.rank != 5 {
            return bad(format!(
                "roller angle pattern leaves the inverse map rank {} at zero leg angles",
                maps.rank
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsFile {
    schema: u32,
    #[serde(default)]
    name: String,
    geometry: GeometryFile,
    limits: LimitsFile,
    inertia: InertiaFile,
    #[serde(default)]
    friction: Friction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeometryFile {
    l1: f64,
    l2: f64,
    l3: f64,
    wheel_radius: f64,
    roller_radius: f64,
    wheel_width: f64,
    leg_length: f64,
    roller_angles_deg: [f64; 4],
    joint_limit_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LimitsFile {
    /// rad/s
    wheel_rate: [f64; 4],
    /// rad/s
    joint_rate: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InertiaFile {
    body: Link,
    legs: [Link; 2],
    joint: PointMass,
    wheel: WheelInertia,
    roller_inertia: f64,
    payload: Payload,
}

impl From<ParamsFile> for RobotParams {
    fn from(f: ParamsFile) -> Self {
        let g = f.geometry;
        let l = f.limits;
        RobotParams {
            name: f.name,
            l1: g.l1,
            l2: g.l2,
            l3: g.l3,
            wheel_radius: g.wheel_radius,
            roller_radius: g.roller_radius,
            wheel_width: g.wheel_width,
            leg_length: g.leg_length,
            roller_angles: g.roller_angles_deg.map(f64::to_radians),
            joint_limit: g.joint_limit_deg.to_radians(),
            actuator_limits: [
                l.wheel_rate[0],
                l.wheel_rate[1],
                l.wheel_rate[2],
                l.wheel_rate[3],
                l.joint_rate[0],
                l.joint_rate[1],
            ],
            body: f.inertia.body,
            legs: f.inertia.legs,
            joint: f.inertia.joint,
            wheel: f.inertia.wheel,
            roller_inertia: f.inertia.roller_inertia,
            payload: f.inertia.payload,
            friction: f.friction,
        }
    }
}

impl From<&RobotParams> for ParamsFile {
    fn from(p: &RobotParams) -> Self {
        let u = p.actuator_limits;
        ParamsFile {
            schema: SCHEMA_VERSION,
            name: p.name.clone(),
            geometry: GeometryFile {
                l1: p.l1,
                l2: p.l2,
                l3: p.l3,
                wheel_radius: p.wheel_radius,
                roller_radius: p.roller_radius,
                wheel_width: p.wheel_width,
                leg_length: p.leg_length,
                roller_angles_deg: p.roller_angles.map(f64::to_degrees),
                joint_limit_deg: p.joint_limit.to_degrees(),
            },
            limits: LimitsFile {
                wheel_rate: [u[0], u[1], u[2], u[3]],
                joint_rate: [u[4], u[5]],
            },
            inertia: InertiaFile {
                body: p.body,
                legs: p.legs,
                joint: p.joint,
                wheel: p.wheel,
                roller_inertia: p.roller_inertia,
                payload: p.payload,
            },
            friction: p.friction,
        }
    }
}
