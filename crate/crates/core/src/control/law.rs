use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::kinematics::KinematicMaps;
use crate::state::{wrap_angle, Pose, PHI2, THETA};

/// Diagonal proportional gains (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub kp: [f64; 5],
}

impl Default for GainSet {
    fn default() -> Self {
        GainSet { kp: [2.0, 2.0, 2.0, 2.0, 2.0] }
    }
}

impl GainSet {
    pub fn uniform(k: f64) -> Self {
        GainSet { kp: [k; 5] }
    }

    pub fn is_valid(&self) -> bool {
        self.kp.iter().all(|k| *k >= 0.0 && k.is_finite())
    }
}

/// Tracking error `x_d - x` with heading and joint components wrapped.
pub fn pose_error(x_d: &Pose, x: &Pose) -> Pose {
    let mut e = x_d - x;
    for i in THETA..=PHI2 {
        e[i] = wrap_angle(e[i]);
    }
    e
}

/// `xdot_c = xdot_d + K_p (x_d - x)`.
pub fn pd_law(x_d: &Pose, xdot_d: &Pose, x: &Pose, gains: &GainSet) -> Pose {
    let e = pose_error(x_d, x);
    xdot_d + Pose::from_fn(|i, _| gains.kp[i] * e[i])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub xdot: Pose,
    pub beta: f64,
    /// Actuator rates `A xdot`, within the limits.
    pub u: Vector6<f64>,
}

/// Largest `beta` in [0, 1] with `|A beta xdot_c|_i <= u_lim,i` for every
/// actuator. This is the minimizer of `|xdot_f - xdot_c|^2` over the
/// parallel family `xdot_f = beta xdot_c`.
pub fn velocity_clamp(xdot_c: &Pose, maps: &KinematicMaps, limits: &[f64; 6]) -> Clamped {
    let u_c = maps.a * xdot_c;
    let mut beta = 1.0f64;
    for (u, lim) in u_c.iter().zip(limits) {
        if u.abs() > *lim {
            beta = beta.min(lim / u.abs());
        }
    }
    let mut xdot = xdot_c * beta;
    let mut u = maps.a * xdot;
    // rounding in the product can leave an entry an ulp over the limit
    while u.iter().zip(limits).any(|(v, l)| v.abs() > *l) {
        beta = beta * (1.0 - f64::EPSILON) - f64::MIN_POSITIVE;
        beta = beta.max(0.0);
        xdot = xdot_c * beta;
        u = maps.a * xdot;
    }
    Clamped { xdot, beta, u }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::stack_maps;
    use crate::params::RobotParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_error_passes_feedforward() {
        let x = Pose::new(0.3, 0.1, 2.0, 0.4, -0.2);
        let v = Pose::new(0.1, 0.2, 0.3, 0.4, 0.5);
        assert_eq!(pd_law(&x, &v, &x, &GainSet::uniform(3.0)), v);
    }

    #[test]
    fn proportional_action() {
        let gains = GainSet { kp: [1.0, 2.0, 3.0, 4.0, 5.0] };
        let e = Pose::new(0.1, -0.2, 0.3, -0.1, 0.05);
        let out = pd_law(&e, &Pose::zeros(), &Pose::zeros(), &gains);
        for i in 0..5 {
            assert!((out[i] - gains.kp[i] * e[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn heading_error_wraps() {
        let d = 179f64.to_radians();
        let x_d = Pose::new(0.0, 0.0, d, d, -d);
        let x = Pose::new(0.0, 0.0, -d, -d, d);
        let e = pose_error(&x_d, &x);
        for i in 2..5 {
            assert!((e[i].abs() - 2f64.to_radians()).abs() < 1e-12);
        }
        assert!(e[2] < 0.0);
        // positions are never wrapped
        let e = pose_error(&Pose::new(10.0, -10.0, 0.0, 0.0, 0.0), &Pose::zeros());
        assert_eq!((e[0], e[1]), (10.0, -10.0));
    }

    #[test]
    fn clamp_inactive_and_half() {
        let p = RobotParams::default();
        let maps = stack_maps(&p, &Pose::zeros(), false).unwrap();
        let slow = Pose::new(0.05, 0.0, 0.0, 0.0, 0.0);
        let c = velocity_clamp(&slow, &maps, &p.actuator_limits);
        assert_eq!((c.beta, c.xdot), (1.0, slow));

        // worst actuator at exactly twice its limit
        let dir = Pose::new(0.3, -0.1, 0.2, 0.1, 0.05);
        let u = maps.a * dir;
        let ratio = (0..6).map(|i| u[i].abs() / p.actuator_limits[i]).fold(0.0, f64::max);
        let c = velocity_clamp(&(dir * (2.0 / ratio)), &maps, &p.actuator_limits);
        assert!((c.beta - 0.5).abs() < 1e-12);

        let c = velocity_clamp(&Pose::zeros(), &maps, &p.actuator_limits);
        assert_eq!((c.beta, c.xdot), (1.0, Pose::zeros()));
    }

    /// Largest feasible beta on a grid, refined around the boundary.
    fn brute_force_beta(xdot_c: &Pose, maps: &KinematicMaps, limits: &[f64; 6]) -> f64 {
        let feasible = |b: f64| {
            (maps.a * (xdot_c * b))
                .iter()
                .zip(limits)
                .all(|(u, l)| u.abs() <= *l)
        };
        let objective = |b: f64| (xdot_c * b - xdot_c).norm_squared();
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut best = 0.0;
        for _ in 0..6 {
            let n = 200;
            let mut best_obj = f64::INFINITY;
            for k in 0..=n {
                let b = lo + (hi - lo) * k as f64 / n as f64;
                if feasible(b) && objective(b) < best_obj {
                    best_obj = objective(b);
                    best = b;
                }
            }
            let step = (hi - lo) / n as f64;
            lo = (best - step).max(0.0);
            hi = (best + step).min(1.0);
        }
        best
    }

    #[test]
    fn clamp_matches_brute_force_and_is_safe() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let lim = p.joint_limit;
        for _ in 0..1000 {
            let x = Pose::new(0.0, 0.0, rng.random_range(-3.0..3.0), rng.random_range(-lim..lim), rng.random_range(-lim..lim));
            let maps = stack_maps(&p, &x, false).unwrap();
            let scale = rng.random_range(0.01..4.0);
            let xdot_c = Pose::from_fn(|_, _| rng.random_range(-1.0..1.0) * scale);
            let c = velocity_clamp(&xdot_c, &maps, &p.actuator_limits);
            assert!(c.u.iter().zip(&p.actuator_limits).all(|(u, l)| u.abs() <= *l));
            assert!((0.0..=1.0).contains(&c.beta));
            assert_eq!(c.xdot, xdot_c * c.beta);
            let oracle = brute_force_beta(&xdot_c, &maps, &p.actuator_limits);
            assert!((c.beta - oracle).abs() < 1e-6, "{} vs {oracle}", c.beta);
        }
    }
}
