use nalgebra::{SMatrix, Vector6};

use super::mass::{mass_matrix, MatQ, NQ};
use crate::error::{ModelError, Result};
use crate::kinematics::{constraint_rows, constraint_rows_rate};
use crate::linalg;
use crate::params::RobotParams;
use crate::state::{FullCoords, Pose};

/// Central-difference step for the Christoffel partials of the mass matrix.
pub const CHRISTOFFEL_STEP: f64 = 1e-6;
/// Reduced mass matrices above this condition number are rejected.
pub const MAX_MASS_CONDITION: f64 = 1e12;

pub type NullBasis = SMatrix<f64, NQ, 5>;
pub type Pfaffian = SMatrix<f64, 8, NQ>;
pub type Actuation = SMatrix<f64, NQ, 6>;

/// Constrained Euler-Lagrange model in full coordinates.
#[derive(Debug, Clone)]
pub struct FullModel {
    pub m_q: MatQ,
    pub c_q: MatQ,
    pub b: Actuation,
    pub lambda: Pfaffian,
    pub q_fric: MatQ,
    pub q: FullCoords,
    pub qdot: FullCoords,
}

/// Dynamics projected onto the constraint nullspace.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub m_x: SMatrix<f64, 5, 5>,
    pub c_x: SMatrix<f64, 5, 5>,
    pub b_x: SMatrix<f64, 5, 6>,
    pub q_x: SMatrix<f64, 5, 5>,
    pub n: NullBasis,
    pub ndot: NullBasis,
    pub xdot: Pose,
}

fn pose_of(q: &FullCoords) -> Pose {
    Pose::from_fn(|i, _| q[i])
}

/// `N = [I5; D_w; D_r]` and its time derivative along `xdot`.
pub fn nullspace_n(params: &RobotParams, x: &Pose, xdot: &Pose) -> Result<(NullBasis, NullBasis)> {
    let mut n = NullBasis::zeros();
    let mut ndot = NullBasis::zeros();
    n.fixed_view_mut::<5, 5>(0, 0).fill_with_identity();
    for w in 0..4 {
        let (dw, dr) = constraint_rows(params, x, w)?;
        let (dw_rate, dr_rate) = constraint_rows_rate(params, x, xdot, w)?;
        n.set_row(5 + w, &dw);
        n.set_row(9 + w, &dr);
        ndot.set_row(5 + w, &dw_rate);
        ndot.set_row(9 + w, &dr_rate);
    }
    Ok((n, ndot))
}

/// `Lambda(q)` with `Lambda q_dot = 0` encoding all eight wheel constraints.
pub fn pfaffian(params: &RobotParams, x: &Pose) -> Result<Pfaffian> {
    let mut lambda = Pfaffian::zeros();
    for w in 0..4 {
        let (dw, dr) = constraint_rows(params, x, w)?;
        lambda.fixed_view_mut::<1, 5>(w, 0).copy_from(&dw);
        lambda.fixed_view_mut::<1, 5>(4 + w, 0).copy_from(&dr);
        lambda[(w, 5 + w)] = -1.0;
        lambda[(4 + w, 9 + w)] = -1.0;
    }
    Ok(lambda)
}

/// Time derivative of `Lambda` along `xdot`.
pub fn pfaffian_rate(params: &RobotParams, x: &Pose, xdot: &Pose) -> Result<Pfaffian> {
    let mut rate = Pfaffian::zeros();
    for w in 0..4 {
        let (dw, dr) = constraint_rows_rate(params, x, xdot, w)?;
        rate.fixed_view_mut::<1, 5>(w, 0).copy_from(&dw);
        rate.fixed_view_mut::<1, 5>(4 + w, 0).copy_from(&dr);
    }
    Ok(rate)
}

/// Maps `[tau_sigma1..4, tau_phi1, tau_phi2]` onto the full coordinates.
pub fn actuation_map() -> Actuation {
    let mut b = Actuation::zeros();
    for w in 0..4 {
        b[(5 + w, w)] = 1.0;
    }
    b[(3, 4)] = 1.0;
    b[(4, 5)] = 1.0;
    b
}

/// Viscous friction, `+Q q_dot` on the right-hand side; dissipative so the
/// diagonal is negative.
pub fn friction_matrix(params: &RobotParams) -> MatQ {
    let f = params.friction;
    let mut q = MatQ::zeros();
    q[(3, 3)] = -f.joint;
    q[(4, 4)] = -f.joint;
    for w in 0..4 {
        q[(5 + w, 5 + w)] = -f.wheel;
        q[(9 + w, 9 + w)] = -f.roller;
    }
    q
}

/// `dM/dq_k` for the five configuration coordinates; the remaining
/// coordinates are cyclic and their partials vanish.
pub fn mass_matrix_partials(params: &RobotParams, q: &FullCoords) -> [MatQ; 5] {
    let h = CHRISTOFFEL_STEP;
    std::array::from_fn(|k| {
        let mut plus = *q;
        let mut minus = *q;
        plus[k] += h;
        minus[k] -= h;
        (mass_matrix(params, &plus) - mass_matrix(params, &minus)) / (2.0 * h)
    })
}

/// Christoffel-symbol Coriolis matrix of `M(q)`.
pub fn coriolis_matrix(params: &RobotParams, q: &FullCoords, qdot: &FullCoords) -> MatQ {
    coriolis_from_partials(&mass_matrix_partials(params, q), qdot)
}

fn coriolis_from_partials(dm: &[MatQ; 5], qdot: &FullCoords) -> MatQ {
    let partial = |k: usize, i: usize, j: usize| if k < 5 { dm[k][(i, j)] } else { 0.0 };
    let mut c = MatQ::zeros();
    for i in 0..NQ {
        for j in 0..NQ {
            let mut sum = 0.0;
            for k in 0..NQ {
                if qdot[k] == 0.0 {
                    continue;
                }
                sum += 0.5 * (partial(k, i, j) + partial(j, i, k) - partial(i, j, k)) * qdot[k];
            }
            c[(i, j)] = sum;
        }
    }
    c
}

/// `dM/dt` along `qdot`.
pub fn mass_matrix_rate(params: &RobotParams, q: &FullCoords, qdot: &FullCoords) -> MatQ {
    let dm = mass_matrix_partials(params, q);
    (0..5).fold(MatQ::zeros(), |acc, k| acc + dm[k] * qdot[k])
}

impl FullModel {
    pub fn assemble(params: &RobotParams, q: &FullCoords, qdot: &FullCoords) -> Result<Self> {
        let x = pose_of(q);
        Ok(FullModel {
            m_q: mass_matrix(params, q),
            c_q: coriolis_matrix(params, q, qdot),
            b: actuation_map(),
            lambda: pfaffian(params, &x)?,
            q_fric: friction_matrix(params),
            q: *q,
            qdot: *qdot,
        })
    }
}

pub fn reduce(full: &FullModel, n: &NullBasis, ndot: &NullBasis) -> ReducedModel {
    let nt = n.transpose();
    ReducedModel {
        m_x: nt * full.m_q * n,
        c_x: nt * full.c_q * n + nt * full.m_q * ndot,
        b_x: nt * full.b,
        q_x: nt * full.q_fric * n,
        n: *n,
        ndot: *ndot,
        xdot: pose_of(&full.qdot),
    }
}

/// Assembles the reduced model at `q` with full rates lifted as `N x_dot`.
pub fn reduced_model(params: &RobotParams, q: &FullCoords, xdot: &Pose) -> Result<ReducedModel> {
    let x = pose_of(q);
    let (n, ndot) = nullspace_n(params, &x, xdot)?;
    let qdot = n * xdot;
    let full = FullModel::assemble(params, q, &qdot)?;
    Ok(reduce(&full, &n, &ndot))
}

/// `x_ddot = M_x^-1 (B_x u + Q_x x_dot - C_x x_dot)`.
pub fn forward_dynamics(reduced: &ReducedModel, u_tau: &Vector6<f64>) -> Result<Pose> {
    let cond = linalg::spd_condition(&reduced.m_x);
    if !(cond <= MAX_MASS_CONDITION) {
        return Err(ModelError::NearSingularDynamics(cond));
    }
    let rhs = reduced.b_x * u_tau + reduced.q_x * reduced.xdot - reduced.c_x * reduced.xdot;
    let chol = reduced
        .m_x
        .cholesky()
        .ok_or(ModelError::NearSingularDynamics(f64::INFINITY))?;
    Ok(chol.solve(&rhs))
}

/// Reduced acceleration at `(x, x_dot)` under torque input.
pub fn acceleration(params: &RobotParams, x: &Pose, xdot: &Pose, u_tau: &Vector6<f64>) -> Result<Pose> {
    let mut q = FullCoords::zeros();
    q.fixed_rows_mut::<5>(0).copy_from(x);
    forward_dynamics(&reduced_model(params, &q, xdot)?, u_tau)
}

/// Kinetic energy `1/2 x_dot^T M_x x_dot`.
pub fn kinetic_energy(params: &RobotParams, x: &Pose, xdot: &Pose) -> Result<f64> {
    let mut q = FullCoords::zeros();
    q.fixed_rows_mut::<5>(0).copy_from(x);
    let (n, _) = nullspace_n(params, x, &Pose::zeros())?;
    let m_x = n.transpose() * mass_matrix(params, &q) * n;
    Ok(0.5 * (xdot.transpose() * m_x * xdot)[0])
}

/// Full-coordinate acceleration with the constraint forces resolved from the
/// KKT system `[M -L^T; L 0] [q_ddot; lambda] = [B u + Q q_dot - C q_dot; -L_dot q_dot]`.
/// Used to cross-check the nullspace reduction.
pub fn full_acceleration(
    params: &RobotParams,
    q: &FullCoords,
    qdot: &FullCoords,
    u_tau: &Vector6<f64>,
) -> Result<FullCoords> {
    let full = FullModel::assemble(params, q, qdot)?;
    let x = pose_of(q);
    let xdot = pose_of(qdot);
    let lambda_rate = pfaffian_rate(params, &x, &xdot)?;
    let mut kkt = SMatrix::<f64, 21, 21>::zeros();
    kkt.fixed_view_mut::<13, 13>(0, 0).copy_from(&full.m_q);
    kkt.fixed_view_mut::<13, 8>(0, 13).copy_from(&(-full.lambda.transpose()));
    kkt.fixed_view_mut::<8, 13>(13, 0).copy_from(&full.lambda);
    let mut rhs = SMatrix::<f64, 21, 1>::zeros();
    rhs.fixed_rows_mut::<13>(0)
        .copy_from(&(full.b * u_tau + full.q_fric * qdot - full.c_q * qdot));
    rhs.fixed_rows_mut::<8>(13).copy_from(&(-lambda_rate * qdot));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or(ModelError::NearSingularDynamics(f64::INFINITY))?;
    Ok(FullCoords::from_fn(|i, _| sol[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::stack_maps;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let lim = 95f64.to_radians();
        Pose::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-lim..lim),
            rng.random_range(-lim..lim),
        )
    }

    fn random_rates(rng: &mut ChaCha8Rng) -> Pose {
        Pose::from_fn(|_, _| rng.random_range(-0.5..0.5))
    }

    fn lift(x: &Pose) -> FullCoords {
        let mut q = FullCoords::zeros();
        q.fixed_rows_mut::<5>(0).copy_from(x);
        q
    }

    #[test]
    fn nullspace_annihilates_constraints() {
        let params = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let x = random_pose(&mut rng);
            let (n, _) = nullspace_n(&params, &x, &Pose::zeros()).unwrap();
            assert!((pfaffian(&params, &x).unwrap() * n).abs().max() < 1e-10);
        }
    }

    #[test]
    fn ndot_matches_flow_difference() {
        let params = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = 1e-6;
        for _ in 0..200 {
            let x = random_pose(&mut rng);
            let xdot = random_rates(&mut rng);
            let (_, ndot) = nullspace_n(&params, &x, &xdot).unwrap();
            let (np, _) = nullspace_n(&params, &(x + xdot * h), &xdot).unwrap();
            let (nm, _) = nullspace_n(&params, &(x - xdot * h), &xdot).unwrap();
            let fd = (np - nm) / (2.0 * h);
            assert!((ndot - fd).abs().max() < 1e-5);
        }
        let (_, ndot) = nullspace_n(&params, &Pose::new(0.1, 0.2, 0.3, 0.4, 0.5), &Pose::zeros()).unwrap();
        assert_eq!(ndot, NullBasis::zeros());
    }

    #[test]
    fn christoffel_skew_symmetry_full_and_reduced() {
        let params = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let x = random_pose(&mut rng);
            let xdot = random_rates(&mut rng);
            let q = lift(&x);
            let (n, ndot) = nullspace_n(&params, &x, &xdot).unwrap();
            let qdot = n * xdot;
            let c = coriolis_matrix(&params, &q, &qdot);
            let s = mass_matrix_rate(&params, &q, &qdot) - c * 2.0;
            assert!((s + s.transpose()).abs().max() < 1e-6);

            let red = reduced_model(&params, &q, &xdot).unwrap();
            let m = mass_matrix(&params, &q);
            let mx_rate = ndot.transpose() * m * n
                + n.transpose() * mass_matrix_rate(&params, &q, &qdot) * n
                + n.transpose() * m * ndot;
            let s = mx_rate - red.c_x * 2.0;
            assert!((s + s.transpose()).abs().max() < 1e-5);
        }
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let params = RobotParams::default();
        let q = lift(&Pose::new(0.0, 0.0, 0.3, 0.2, -0.7));
        assert_eq!(coriolis_matrix(&params, &q, &FullCoords::zeros()), MatQ::zeros());
    }

    #[test]
    fn reduced_structure() {
        let params = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..100 {
            let x = random_pose(&mut rng);
            let red = reduced_model(&params, &lift(&x), &random_rates(&mut rng)).unwrap();
            assert!((red.m_x - red.m_x.transpose()).abs().max() < 1e-12);
            assert!(red.m_x.symmetric_eigenvalues().min() > 0.0);
            // wheels drive the base; joint torques land on the joint rows
            assert!(red.b_x.fixed_view::<3, 4>(0, 0).abs().max() > 0.0);
            let maps = stack_maps(&params, &x, false).unwrap();
            assert!((red.b_x - maps.a.transpose()).abs().max() < 1e-15);
        }
    }

    #[test]
    fn equilibrium_and_mass_scaling() {
        let params = RobotParams::default();
        let x = Pose::new(0.0, 0.0, 0.1, 0.5, -0.3);
        let a = acceleration(&params, &x, &Pose::zeros(), &Vector6::zeros()).unwrap();
        assert_eq!(a, Pose::zeros());

        let u = Vector6::new(0.3, -0.1, 0.2, 0.05, 0.1, -0.2);
        let a1 = acceleration(&params, &x, &Pose::zeros(), &u).unwrap();
        let a3 = acceleration(&params.scaled_inertia(3.0), &x, &Pose::zeros(), &u).unwrap();
        assert!((a1 - a3 * 3.0).norm() < 1e-12 * a1.norm().max(1.0));
    }

    #[test]
    fn wheel_torque_patterns_follow_kinematic_directions() {
        let params = RobotParams::default();
        let maps = stack_maps(&params, &Pose::zeros(), false).unwrap();
        let patterns = [
            Vector6::new(1.0, 1.0, 1.0, 1.0, 0.0, 0.0),
            Vector6::new(1.0, -1.0, 1.0, -1.0, 0.0, 0.0),
        ];
        for (axis, u) in [0usize, 1].into_iter().zip(patterns) {
            let accel = acceleration(&params, &Pose::zeros(), &Pose::zeros(), &(u * 0.1)).unwrap();
            let kin = maps.a_pinv * u;
            assert!(accel[axis].signum() == kin[axis].signum() && accel[axis].abs() > 1e-3);
            let dominant = |v: &Pose| (0..2).max_by(|a, b| v[*a].abs().total_cmp(&v[*b].abs())).unwrap();
            assert_eq!(dominant(&accel), axis);
            assert_eq!(dominant(&kin), axis);
        }
    }

    #[test]
    fn single_wheel_torque_yaws_the_robot() {
        let params = RobotParams::default();
        let u = Vector6::new(0.2, 0.0, 0.0, 0.0, 0.0, 0.0);
        let a = acceleration(&params, &Pose::zeros(), &Pose::zeros(), &u).unwrap();
        assert!(a[2].abs() > 1e-3);
    }

    #[test]
    fn kkt_route_agrees_with_reduction() {
        let params = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..50 {
            let x = random_pose(&mut rng);
            let xdot = random_rates(&mut rng);
            let u = Vector6::from_fn(|_, _| rng.random_range(-0.3..0.3));
            let q = lift(&x);
            let red = reduced_model(&params, &q, &xdot).unwrap();
            let xddot = forward_dynamics(&red, &u).unwrap();
            let qddot = full_acceleration(&params, &q, &(red.n * xdot), &u).unwrap();
            let head = Pose::from_fn(|i, _| qddot[i]);
            assert!((head - xddot).norm() < 1e-6 * (1.0 + xddot.norm()), "{head} vs {xddot}");
        }
    }

    #[test]
    fn near_singular_mass_is_rejected() {
        let params = RobotParams::default();
        let mut red = reduced_model(&params, &FullCoords::zeros(), &Pose::zeros()).unwrap();
        red.m_x[(4, 4)] = 1e-14;
        red.m_x.fixed_view_mut::<1, 4>(4, 0).fill(0.0);
        red.m_x.fixed_view_mut::<4, 1>(0, 4).fill(0.0);
        assert!(matches!(
            forward_dynamics(&red, &Vector6::zeros()),
            Err(ModelError::NearSingularDynamics(_))
        ));
    }
}
