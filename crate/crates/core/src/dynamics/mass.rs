use nalgebra::{SMatrix, Vector2};

use crate::kinematics::{leg_of, wheel_positions};
use crate::params::RobotParams;
use crate::state::{FullCoords, Pose, PHI1, THETA};

pub const NQ: usize = 13;
pub type MatQ = SMatrix<f64, NQ, NQ>;

/// A planar rigid body of the multibody model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBody {
    pub mass: f64,
    pub inertia: f64,
    /// CoM in the base frame.
    pub com: Vector2<f64>,
    /// Leg whose joint also rotates this body, if any.
    pub leg: Option<usize>,
}

/// Every massive body at configuration `x`: body, two joint housings, two legs
/// and four wheel hubs (wheel spin and roller inertias are handled separately).
pub fn link_bodies(params: &RobotParams, x: &Pose) -> Vec<LinkBody> {
    let mut out = Vec::with_capacity(9);
    out.push(LinkBody {
        mass: params.body.mass,
        inertia: params.body.inertia,
        com: Vector2::from(params.body.com),
        leg: None,
    });
    for leg in 0..2 {
        out.push(LinkBody {
            mass: params.joint.mass,
            inertia: params.joint.inertia,
            com: Vector2::from(params.joint_position(leg)),
            leg: None,
        });
    }
    for leg in 0..2 {
        let link = params.legs[leg];
        let joint = Vector2::from(params.joint_position(leg));
        let (s, c) = x[PHI1 + leg].sin_cos();
        let r = Vector2::new(c * link.com[0] - s * link.com[1], s * link.com[0] + c * link.com[1]);
        out.push(LinkBody {
            mass: link.mass,
            inertia: link.inertia,
            com: joint + r,
            leg: Some(leg),
        });
    }
    for (i, p) in wheel_positions(params, x).into_iter().enumerate() {
        out.push(LinkBody {
            mass: params.wheel.mass,
            inertia: params.wheel.yaw_inertia,
            com: p,
            leg: Some(leg_of(i)),
        });
    }
    out
}

/// Mass-inertia matrix in full coordinates. Depends on `theta`, `phi1`,
/// `phi2` only; wheel and roller angles are cyclic.
pub fn mass_matrix(params: &RobotParams, q: &FullCoords) -> MatQ {
    let x = Pose::from_fn(|i, _| q[i]);
    let (s, c) = x[THETA].sin_cos();
    let to_world = |v: Vector2<f64>| Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y);

    let mut m = MatQ::zeros();
    for link in link_bodies(params, &x) {
        // translational Jacobian columns of the CoM, world frame
        let mut jac = SMatrix::<f64, 2, 5>::zeros();
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        jac.set_column(THETA, &to_world(Vector2::new(-link.com.y, link.com.x)));
        let mut omega = SMatrix::<f64, 1, 5>::zeros();
        omega[THETA] = 1.0;
        if let Some(leg) = link.leg {
            let arm = link.com - Vector2::from(params.joint_position(leg));
            jac.set_column(PHI1 + leg, &to_world(Vector2::new(-arm.y, arm.x)));
            omega[PHI1 + leg] = 1.0;
        }
        let block = jac.transpose() * jac * link.mass + omega.transpose() * omega * link.inertia;
        let mut top = m.fixed_view_mut::<5, 5>(0, 0);
        top += block;
    }
    for i in 0..4 {
        m[(5 + i, 5 + i)] = params.wheel.spin_inertia;
        m[(9 + i, 9 + i)] = params.roller_inertia;
    }
    m
}
