//! Velocity mapping between reduced generalized velocities and actuator rates.
//!
//! Frames: the base frame sits at the body center with x along the body.
//! Leg 0 (joint `phi1`) is hinged at `(-l1, 0)`, leg 1 (joint `phi2`) at
//! `(l1, 0)`; at zero joint angle both legs point along base +y. Wheels 0 and
//! 1 ride on leg 0 at offsets `l3` and `l2` from the joint, wheels 2 and 3 ride
//! on leg 1 at offsets `l2` and `l3`. A wheel frame is aligned with its leg:
//! x is the rolling direction, y the axle, z up. Wheel indices are zero-based.
//!
//! Each wheel contributes two constraints on the roller contact point: no slip
//! along the roller axis `u_s = (cos a, sin a, 0)` and pure rolling along
//! `u_r = (sin a, -cos a, 0)`, both expressed in the wheel frame.

use nalgebra::{RowVector5, SMatrix, Vector2, Vector3, Vector6};

use crate::error::{ModelError, Result};
use crate::linalg;
use crate::params::RobotParams;
use crate::state::{Pose, PHI1, THETA};

/// Singular values below this fraction of the largest are dropped in `A^+`.
pub const PINV_REL_TOL: f64 = 1e-10;

pub type WheelMap = SMatrix<f64, 4, 5>;
pub type InverseMap = SMatrix<f64, 6, 5>;
pub type ForwardMap = SMatrix<f64, 5, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Rotation rates referred to the base frame origin.
    Base,
    /// Rotation rates referred to the geometric center of the four wheels.
    GeometricCenter,
}

pub fn leg_of(wheel: usize) -> usize {
    wheel / 2
}

fn check_wheel(wheel: usize) -> Result<()> {
    if wheel < 4 {
        Ok(())
    } else {
        Err(ModelError::WheelIndex(wheel))
    }
}

fn rot(a: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = a.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// `z x v` for a planar vector.
fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Planar wheel-hub positions in the base frame for all four wheels.
pub fn wheel_positions(params: &RobotParams, x: &Pose) -> [Vector2<f64>; 4] {
    std::array::from_fn(|i| {
        let leg = leg_of(i);
        let joint = Vector2::from(params.joint_position(leg));
        joint + rot(x[PHI1 + leg], Vector2::new(0.0, params.leg_offset(i)))
    })
}

/// Mean of the four wheel positions (origin of the geometric-center frame).
pub fn geometric_center(params: &RobotParams, x: &Pose) -> Vector2<f64> {
    let p = wheel_positions(params, x);
    (p[0] + p[1] + p[2] + p[3]) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelPose {
    /// Base frame origin to wheel hub, base frame (m).
    pub p_bw: Vector3<f64>,
    /// Geometric center to wheel hub, base frame (m).
    pub p_rw: Vector3<f64>,
    /// Wheel heading relative to the base: the owning leg's joint angle (rad).
    pub heading: f64,
}

pub fn wheel_pose(params: &RobotParams, x: &Pose, wheel: usize) -> Result<WheelPose> {
    check_wheel(wheel)?;
    let p = wheel_positions(params, x)[wheel];
    let r = p - geometric_center(params, x);
    Ok(WheelPose {
        p_bw: Vector3::new(p.x, p.y, 0.0),
        p_rw: Vector3::new(r.x, r.y, 0.0),
        heading: x[PHI1 + leg_of(wheel)],
    })
}

/// Linear velocity of the roller contact point, wheel frame (m/s).
pub fn contact_velocity(
    params: &RobotParams,
    x: &Pose,
    xdot: &Pose,
    sigma_dot: f64,
    wheel: usize,
) -> Result<Vector3<f64>> {
    check_wheel(wheel)?;
    let leg = leg_of(wheel);
    let theta = x[THETA];
    let phi = x[PHI1 + leg];
    let p_bw = wheel_positions(params, x)[wheel];
    let p_phi_w = Vector2::new(0.0, params.leg_offset(wheel));

    // hub velocity in the base frame
    let v_base = rot(-theta, Vector2::new(xdot[0], xdot[1]))
        + perp(p_bw) * xdot[THETA]
        + perp(rot(phi, p_phi_w)) * xdot[PHI1 + leg];
    let v_w = rot(-phi, v_base);
    let v_w = Vector3::new(v_w.x, v_w.y, 0.0);

    let p_wc = Vector3::new(0.0, 0.0, -params.wheel_radius);
    Ok(v_w + (Vector3::y() * sigma_dot).cross(&p_wc))
}

/// Roller no-slip and rolling unit vectors in the wheel frame.
pub fn roller_directions(alpha: f64) -> (Vector2<f64>, Vector2<f64>) {
    let (s, c) = alpha.sin_cos();
    (Vector2::new(c, s), Vector2::new(s, -c))
}

/// Wheel-frame hub velocity per unit of each reduced rate, and the derivative
/// of those coefficients with respect to `theta` and the owning joint angle.
struct HubCoefficients {
    c: [Vector2<f64>; 5],
    d_theta: [Vector2<f64>; 5],
    d_phi: [Vector2<f64>; 5],
}

fn hub_coefficients(params: &RobotParams, x: &Pose, wheel: usize, lever: Vector2<f64>) -> HubCoefficients {
    let leg = leg_of(wheel);
    let phi = x[PHI1 + leg];
    let heading = x[THETA] + phi;
    let (s, c) = heading.sin_cos();
    let p_phi_w = Vector2::new(0.0, params.leg_offset(wheel));
    let zero = Vector2::zeros();

    let mut coef = [zero; 5];
    coef[0] = Vector2::new(c, -s);
    coef[1] = Vector2::new(s, c);
    coef[THETA] = rot(-phi, perp(lever));
    coef[PHI1 + leg] = perp(p_phi_w);

    // Only meaningful for the base-frame lever, where
    // R(-phi) (z x p_bw) = z x (R(-phi) p_joint) + z x p_phi_w.
    let joint_in_wheel = rot(-phi, Vector2::from(params.joint_position(leg)));
    let mut d_theta = [zero; 5];
    d_theta[0] = Vector2::new(-s, -c);
    d_theta[1] = Vector2::new(c, -s);
    let mut d_phi = d_theta;
    d_phi[THETA] = joint_in_wheel;

    HubCoefficients { c: coef, d_theta, d_phi }
}

fn rows_from_coefficients(
    params: &RobotParams,
    wheel: usize,
    coef: &[Vector2<f64>; 5],
) -> Result<(RowVector5<f64>, RowVector5<f64>)> {
    let alpha = params.roller_angles[wheel];
    let cos_alpha = alpha.cos();
    if cos_alpha.abs() < 1e-12 {
        return Err(ModelError::SingularWheel { wheel, cos_alpha });
    }
    let (u_s, u_r) = roller_directions(alpha);
    let r_w = params.wheel_radius;
    let mut d_w = RowVector5::zeros();
    let mut d_r = RowVector5::zeros();
    for k in 0..5 {
        // no slip: (v_w - r_w sigma_dot e_x) . u_s = 0
        d_w[k] = coef[k].dot(&u_s) / (r_w * cos_alpha);
        // rolling: (v_w - r_w sigma_dot e_x) . u_r = psi_dot r_r
        d_r[k] = (coef[k].dot(&u_r) - r_w * alpha.sin() * d_w[k]) / params.roller_radius;
    }
    Ok((d_w, d_r))
}

fn lever(params: &RobotParams, x: &Pose, wheel: usize, frame: Frame) -> Vector2<f64> {
    let p = wheel_positions(params, x)[wheel];
    match frame {
        Frame::Base => p,
        Frame::GeometricCenter => p - geometric_center(params, x),
    }
}

/// Rows `d_w`, `d_r` with `sigma_dot = d_w x_dot` and `psi_dot = d_r x_dot`,
/// base frame.
pub fn constraint_rows(
    params: &RobotParams,
    x: &Pose,
    wheel: usize,
) -> Result<(RowVector5<f64>, RowVector5<f64>)> {
    constraint_rows_in(params, x, wheel, Frame::Base)
}

pub fn constraint_rows_in(
    params: &RobotParams,
    x: &Pose,
    wheel: usize,
    frame: Frame,
) -> Result<(RowVector5<f64>, RowVector5<f64>)> {
    check_wheel(wheel)?;
    let hub = hub_coefficients(params, x, wheel, lever(params, x, wheel, frame));
    rows_from_coefficients(params, wheel, &hub.c)
}

/// Time derivative of the base-frame rows along `xdot`.
pub fn constraint_rows_rate(
    params: &RobotParams,
    x: &Pose,
    xdot: &Pose,
    wheel: usize,
) -> Result<(RowVector5<f64>, RowVector5<f64>)> {
    check_wheel(wheel)?;
    let hub = hub_coefficients(params, x, wheel, lever(params, x, wheel, Frame::Base));
    let phi_rate = xdot[PHI1 + leg_of(wheel)];
    let rate: [Vector2<f64>; 5] =
        std::array::from_fn(|k| hub.d_theta[k] * xdot[THETA] + hub.d_phi[k] * phi_rate);
    // rows are linear in the coefficients
    rows_from_coefficients(params, wheel, &rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicMaps {
    pub dw: WheelMap,
    pub dr: WheelMap,
    /// `[D_w ; 0 I2]`
    pub a: InverseMap,
    pub a_pinv: ForwardMap,
    pub rank: usize,
    pub frame: Frame,
}

impl KinematicMaps {
    pub fn is_full_rank(&self) -> bool {
        self.rank == 5
    }
}

pub fn stack_maps(params: &RobotParams, x: &Pose, about_center: bool) -> Result<KinematicMaps> {
    let frame = if about_center {
        Frame::GeometricCenter
    } else {
        Frame::Base
    };
    let mut dw = WheelMap::zeros();
    let mut dr = WheelMap::zeros();
    for i in 0..4 {
        let (w, r) = constraint_rows_in(params, x, i, frame)?;
        dw.set_row(i, &w);
        dr.set_row(i, &r);
    }
    let mut a = InverseMap::zeros();
    a.fixed_rows_mut::<4>(0).copy_from(&dw);
    a[(4, PHI1)] = 1.0;
    a[(5, PHI1 + 1)] = 1.0;
    let (a_pinv, rank) = linalg::pseudo_inverse(&a, PINV_REL_TOL);
    Ok(KinematicMaps { dw, dr, a, a_pinv, rank, frame })
}

/// `u_v = A x_dot`.
pub fn inverse_map(maps: &KinematicMaps, xdot: &Pose) -> Vector6<f64> {
    maps.a * xdot
}

/// `x_dot = A^+ u_v`, with the residual `|A x_dot - u_v|`. A nonzero residual
/// means `u_v` is outside the range of `A` and cannot be realized without
/// slip.
pub fn forward_map(maps: &KinematicMaps, u: &Vector6<f64>) -> (Pose, f64) {
    let xdot = maps.a_pinv * u;
    let residual = (maps.a * xdot - u).norm();
    (xdot, residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> RobotParams {
        RobotParams::default()
    }

    fn random_pose(rng: &mut ChaCha8Rng, params: &RobotParams) -> Pose {
        let lim = params.joint_limit;
        Pose::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-4.0..4.0),
            rng.random_range(-lim..lim),
            rng.random_range(-lim..lim),
        )
    }

    fn random_rates(rng: &mut ChaCha8Rng) -> Pose {
        Pose::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    /// Closed-form rows for a rectangular-leg robot: body offset `l1`, leg
    /// offset `l` along the leg, with the wheel-rate map scaled by
    /// `1 / (r_w cos a)`.
    fn closed_form_dw(params: &RobotParams, x: &Pose, wheel: usize) -> RowVector5<f64> {
        let alpha = params.roller_angles[wheel];
        let phi = x[PHI1 + leg_of(wheel)];
        let a = alpha + phi + x[THETA];
        let b = alpha + phi;
        let l = params.leg_offset(wheel);
        let l1 = params.l1;
        let e = params.wheel_radius * alpha.cos();
        let sign = if leg_of(wheel) == 0 { -1.0 } else { 1.0 };
        let mut row = RowVector5::new(
            a.cos(),
            a.sin(),
            sign * l1 * b.sin() - l * alpha.cos(),
            0.0,
            0.0,
        );
        row[PHI1 + leg_of(wheel)] = -l * alpha.cos();
        row / e
    }

    #[test]
    fn wheel_rows_match_closed_form() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = random_pose(&mut rng, &params);
            for w in 0..4 {
                let (dw, _) = constraint_rows(&params, &x, w).unwrap();
                let expected = closed_form_dw(&params, &x, w);
                assert!((dw - expected).abs().max() < 1e-12, "wheel {w}: {dw} vs {expected}");
            }
        }
    }

    #[test]
    fn geometric_center_offsets_sum_to_zero() {
        let params = p();
        for x in [Pose::zeros(), Pose::new(0.3, -1.0, 0.4, 0.7, -1.2)] {
            let sum: Vector3<f64> = (0..4).map(|w| wheel_pose(&params, &x, w).unwrap().p_rw).sum();
            assert!(sum.norm() < 1e-15);
        }
    }

    #[test]
    fn wheel_zero_at_rest_configuration() {
        // frame chain evaluated by hand: joint (-l1, 0) plus l3 along +y
        let params = p();
        let pose = wheel_pose(&params, &Pose::zeros(), 0).unwrap();
        assert_eq!(pose.p_bw, Vector3::new(-0.20, 0.44, 0.0));
        assert_eq!(pose.heading, 0.0);
        let pose = wheel_pose(&params, &Pose::zeros(), 2).unwrap();
        assert_eq!(pose.p_bw, Vector3::new(0.20, 0.15, 0.0));
        let center = geometric_center(&params, &Pose::zeros());
        assert!((center - Vector2::new(0.0, 0.295)).norm() < 1e-15);
    }

    #[test]
    fn leg_rotation_rotates_leg_offsets() {
        let params = p();
        let a = 10f64.to_radians();
        let x = Pose::new(0.0, 0.0, 0.0, a, a);
        for w in 0..4 {
            let joint = Vector2::from(params.joint_position(leg_of(w)));
            let p0 = wheel_pose(&params, &Pose::zeros(), w).unwrap().p_bw.xy() - joint;
            let p1 = wheel_pose(&params, &x, w).unwrap().p_bw.xy() - joint;
            assert!((p1 - rot(a, p0)).norm() < 1e-15);
            assert_eq!(wheel_pose(&params, &x, w).unwrap().heading, a);
        }
    }

    #[test]
    fn wheel_index_out_of_range() {
        let params = p();
        assert!(matches!(
            wheel_pose(&params, &Pose::zeros(), 4),
            Err(ModelError::WheelIndex(4))
        ));
        assert!(constraint_rows(&params, &Pose::zeros(), 9).is_err());
    }

    #[test]
    fn contact_velocity_simple_cases() {
        let params = p();
        let x = Pose::new(0.1, 0.2, 0.3, 0.4, -0.5);
        for w in 0..4 {
            let v = contact_velocity(&params, &x, &Pose::zeros(), 0.0, w).unwrap();
            assert_eq!(v, Vector3::zeros());
            let v = contact_velocity(&params, &x, &Pose::zeros(), 1.0, w).unwrap();
            assert!((v - Vector3::new(-params.wheel_radius, 0.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn straight_and_lateral_rows() {
        let params = p();
        let v = 0.3;
        let maps = stack_maps(&params, &Pose::zeros(), false).unwrap();
        let fwd = inverse_map(&maps, &Pose::new(v, 0.0, 0.0, 0.0, 0.0));
        let lat = inverse_map(&maps, &Pose::new(0.0, v, 0.0, 0.0, 0.0));
        for w in 0..4 {
            let alpha = params.roller_angles[w];
            assert!((fwd[w] - v / params.wheel_radius).abs() < 1e-12);
            assert!((lat[w] - alpha.tan() * v / params.wheel_radius).abs() < 1e-12);
        }
        assert!(lat[0] > 0.0 && lat[1] < 0.0 && lat[2] > 0.0 && lat[3] < 0.0);
    }

    #[test]
    fn forward_speed_on_default_wheels() {
        let maps = stack_maps(&p(), &Pose::zeros(), false).unwrap();
        let u = inverse_map(&maps, &Pose::new(0.1, 0.0, 0.0, 0.0, 0.0));
        for w in 0..4 {
            assert!((u[w] - 1.5385).abs() < 5e-5, "{}", u[w]);
        }
    }

    #[test]
    fn both_constraints_hold_simultaneously() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = random_pose(&mut rng, &params);
            let xdot = random_rates(&mut rng);
            for w in 0..4 {
                let (dw, dr) = constraint_rows(&params, &x, w).unwrap();
                let sigma_dot = (dw * xdot)[0];
                let v_c = contact_velocity(&params, &x, &xdot, sigma_dot, w).unwrap();
                let (u_s, u_r) = roller_directions(params.roller_angles[w]);
                assert!(v_c.xy().dot(&u_s).abs() < 1e-12);
                let roll = (dr * xdot)[0] * params.roller_radius;
                assert!((v_c.xy().dot(&u_r) - roll).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leg_columns_follow_wheel_assignment() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let maps = stack_maps(&params, &random_pose(&mut rng, &params), false).unwrap();
            for m in [&maps.dw, &maps.dr] {
                assert_eq!(m[(2, 3)], 0.0);
                assert_eq!(m[(3, 3)], 0.0);
                assert_eq!(m[(0, 4)], 0.0);
                assert_eq!(m[(1, 4)], 0.0);
            }
        }
    }

    #[test]
    fn full_rank_at_zero_configuration() {
        let maps = stack_maps(&p(), &Pose::zeros(), false).unwrap();
        assert_eq!(maps.rank, 5);
        let dyn_a = linalg::to_dynamic(&maps.a);
        assert_eq!(linalg::numerical_rank(&dyn_a, 1e-10), 5);
        assert!((maps.a_pinv * maps.a - SMatrix::<f64, 5, 5>::identity()).norm() < 1e-9);
        assert_eq!(maps.a.fixed_rows::<4>(0), maps.dw);
        assert_eq!(maps.a.fixed_rows::<2>(4).fixed_columns::<3>(0), SMatrix::<f64, 2, 3>::zeros());
        assert_eq!(maps.a.fixed_rows::<2>(4).fixed_columns::<2>(3), SMatrix::<f64, 2, 2>::identity());
    }

    #[test]
    fn translation_columns_are_frame_independent() {
        let params = p();
        let x = Pose::new(0.0, 0.0, 0.7, 0.9, -0.2);
        let base = stack_maps(&params, &x, false).unwrap();
        let center = stack_maps(&params, &x, true).unwrap();
        assert_eq!(base.frame, Frame::Base);
        assert_eq!(center.frame, Frame::GeometricCenter);
        assert_eq!(base.a.fixed_columns::<2>(0), center.a.fixed_columns::<2>(0));
        let translation = Pose::new(0.2, -0.1, 0.0, 0.0, 0.0);
        assert_eq!(inverse_map(&base, &translation), inverse_map(&center, &translation));
    }

    #[test]
    fn leg_motion_spins_attached_wheels() {
        let params = p();
        let x = Pose::new(0.0, 0.0, 0.2, 0.3, -0.4);
        let maps = stack_maps(&params, &x, false).unwrap();
        let rate = 0.8;
        let u = inverse_map(&maps, &Pose::new(0.0, 0.0, 0.0, rate, 0.0));
        for w in 0..4 {
            assert_eq!(u[w], maps.dw[(w, 3)] * rate);
        }
        assert_eq!((u[4], u[5]), (rate, 0.0));
        assert!(u[0] != 0.0 && u[1] != 0.0 && u[2] == 0.0 && u[3] == 0.0);
    }

    #[test]
    fn forward_map_round_trip_and_inconsistent_input() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = random_pose(&mut rng, &params);
            let maps = stack_maps(&params, &x, false).unwrap();
            let xdot = random_rates(&mut rng);
            let (back, residual) = forward_map(&maps, &inverse_map(&maps, &xdot));
            assert!((back - xdot).norm() < 1e-9);
            assert!(residual < 1e-9);
        }
        let maps = stack_maps(&params, &Pose::zeros(), false).unwrap();
        let (zero, r0) = forward_map(&maps, &Vector6::zeros());
        assert_eq!(zero, Pose::zeros());
        assert_eq!(r0, 0.0);

        // Forward wheel pattern with the joints commanded: the legs would
        // drag the wheels, so the command leaves the range of A.
        let mut u = inverse_map(&maps, &Pose::new(0.2, 0.0, 0.0, 0.0, 0.0));
        u[4] = 1.0;
        u[5] = -1.0;
        let (_, residual) = forward_map(&maps, &u);
        let projector = SMatrix::<f64, 6, 6>::identity() - maps.a * maps.a_pinv;
        let expected = (projector * u).norm();
        assert!(residual > 0.1);
        assert!((residual - expected).abs() < 1e-12);
    }

    #[test]
    fn singular_wheel_is_reported() {
        let mut params = p();
        params.roller_angles[2] = std::f64::consts::FRAC_PI_2;
        assert!(matches!(
            constraint_rows(&params, &Pose::zeros(), 2),
            Err(ModelError::SingularWheel { wheel: 2, .. })
        ));
        assert!(stack_maps(&params, &Pose::zeros(), false).is_err());
    }

    #[test]
    fn rows_rate_matches_finite_difference() {
        let params = p();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for _ in 0..100 {
            let x = random_pose(&mut rng, &params);
            let xdot = random_rates(&mut rng);
            for w in 0..4 {
                let (rw, rr) = constraint_rows_rate(&params, &x, &xdot, w).unwrap();
                let (wp, rp) = constraint_rows(&params, &(x + xdot * h), w).unwrap();
                let (wm, rm) = constraint_rows(&params, &(x - xdot * h), w).unwrap();
                assert!((rw - (wp - wm) / (2.0 * h)).abs().max() < 1e-6);
                assert!((rr - (rp - rm) / (2.0 * h)).abs().max() < 1e-5);
            }
        }
    }
}
