//! Footprint, center of mass and leg-tip counterbalance.

use nalgebra::Vector2;
use serde::Serialize;

use crate::dynamics::link_bodies;
use crate::kinematics::{geometric_center, leg_of, wheel_positions};
use crate::params::RobotParams;
use crate::state::{Pose, PHI1};

fn config(phi1: f64, phi2: f64) -> Pose {
    Pose::new(0.0, 0.0, 0.0, phi1, phi2)
}

/// Corners of each wheel's planform rectangle (diameter along the rolling
/// direction, width along the axle), base frame.
pub fn wheel_rectangles(params: &RobotParams, phi1: f64, phi2: f64) -> [[Vector2<f64>; 4]; 4] {
    let x = config(phi1, phi2);
    let hubs = wheel_positions(params, &x);
    std::array::from_fn(|w| {
        let (s, c) = x[PHI1 + leg_of(w)].sin_cos();
        let roll = Vector2::new(c, s) * params.wheel_radius;
        let axle = Vector2::new(-s, c) * (0.5 * params.wheel_width);
        [
            hubs[w] + roll + axle,
            hubs[w] + roll - axle,
            hubs[w] - roll + axle,
            hubs[w] - roll - axle,
        ]
    })
}

/// Lateral extent (base y) of the region covered by the four wheels.
pub fn footprint_width(params: &RobotParams, phi1: f64, phi2: f64) -> f64 {
    let ys = wheel_rectangles(params, phi1, phi2)
        .into_iter()
        .flatten()
        .map(|p| p.y);
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    hi - lo
}

/// Leg end points, base frame.
pub fn leg_tips(params: &RobotParams, phi1: f64, phi2: f64) -> [Vector2<f64>; 2] {
    let phi = [phi1, phi2];
    std::array::from_fn(|leg| {
        let (s, c) = phi[leg].sin_cos();
        Vector2::from(params.joint_position(leg)) + Vector2::new(-s, c) * params.leg_length
    })
}

/// Total mass and planar CoM in the base frame.
pub fn center_of_mass(params: &RobotParams, phi1: f64, phi2: f64, with_payload: bool) -> (f64, Vector2<f64>) {
    let mut mass = 0.0;
    let mut moment = Vector2::zeros();
    for link in link_bodies(params, &config(phi1, phi2)) {
        mass += link.mass;
        moment += link.com * link.mass;
    }
    if with_payload {
        mass += params.payload.mass;
        moment += Vector2::from(params.payload.position) * params.payload.mass;
    }
    (mass, moment / mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counterbalance {
    /// Mass added at each leg end (kg); negative means the CoM is already
    /// past the center and no counterbalance at the leg ends can help.
    pub per_leg: f64,
    pub total: f64,
    /// Distance between the balanced CoM and the geometric center (m).
    pub residual: f64,
}

/// Equal masses at both leg ends that bring the CoM closest to the geometric
/// center, in the least-squares sense.
pub fn counterbalance(params: &RobotParams, phi1: f64, phi2: f64, with_payload: bool) -> Counterbalance {
    let (mass, com) = center_of_mass(params, phi1, phi2, with_payload);
    let g = geometric_center(params, &config(phi1, phi2));
    let [e1, e2] = leg_tips(params, phi1, phi2);
    let d = e1 + e2 - g * 2.0;
    let per_leg = if d.norm_squared() > 0.0 {
        mass * (g - com).dot(&d) / d.norm_squared()
    } else {
        0.0
    };
    let balanced = (com * mass + (e1 + e2) * per_leg) / (mass + 2.0 * per_leg);
    Counterbalance {
        per_leg,
        total: 2.0 * per_leg,
        residual: (balanced - g).norm(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub phi_deg: [f64; 2],
    pub footprint_width: f64,
    pub mass: f64,
    pub center_of_mass: [f64; 2],
    pub geometric_center: [f64; 2],
    pub counterbalance: Counterbalance,
    pub payload_mass: f64,
    pub counterbalance_with_payload: Counterbalance,
}

pub fn geometry_report(params: &RobotParams, phi1: f64, phi2: f64) -> GeometryReport {
    let (mass, com) = center_of_mass(params, phi1, phi2, false);
    let g = geometric_center(params, &config(phi1, phi2));
    GeometryReport {
        phi_deg: [phi1.to_degrees(), phi2.to_degrees()],
        footprint_width: footprint_width(params, phi1, phi2),
        mass,
        center_of_mass: [com.x, com.y],
        geometric_center: [g.x, g.y],
        counterbalance: counterbalance(params, phi1, phi2, false),
        payload_mass: params.payload.mass,
        counterbalance_with_payload: counterbalance(params, phi1, phi2, true),
    }
}

/// Shifts the body CoM along base y so the zero-configuration counterbalance
/// totals `total`, then places the payload along base y so the per-leg
/// counterbalance with payload is `per_leg_with_payload`. Both quantities are
/// affine in the shifted coordinate, so a two-point secant is exact.
pub fn fit_counterbalance(params: &RobotParams, total: f64, per_leg_with_payload: f64) -> RobotParams {
    fn solve(f: impl Fn(f64) -> f64, target: f64) -> f64 {
        let (f0, f1) = (f(0.0), f(1.0));
        (target - f0) / (f1 - f0)
    }
    let mut fitted = params.clone();
    let body_y = solve(
        |y| {
            let mut p = params.clone();
            p.body.com[1] = y;
            counterbalance(&p, 0.0, 0.0, false).total
        },
        total,
    );
    fitted.body.com[1] = body_y;
    let payload_y = solve(
        |y| {
            let mut p = fitted.clone();
            p.payload.position[1] = y;
            counterbalance(&p, 0.0, 0.0, true).per_leg
        },
        per_leg_with_payload,
    );
    fitted.payload.position[1] = payload_y;
    fitted
}
