use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::kinematics::stack_maps;
use crate::params::RobotParams;
use crate::state::{Pose, THETA};

pub const POLY_ORDER: usize = 9;
const NCOEF: usize = POLY_ORDER + 1;
/// Highest derivative kept continuous across interior knots.
const CONTINUITY: usize = 6;
/// Derivative whose squared integral is minimized.
const COST_DERIVATIVE: usize = 4;
pub const SCALING_CAP: usize = 50;
pub const SCALING_MARGIN: f64 = 0.05;

/// Nominal rates used to pick segment durations when none are given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalRates {
    /// m/s
    pub linear: f64,
    /// rad/s
    pub yaw: f64,
    /// rad/s
    pub joint: f64,
    /// s
    pub min_duration: f64,
}

impl Default for NominalRates {
    fn default() -> Self {
        NominalRates { linear: 0.2, yaw: 0.5, joint: 0.5, min_duration: 0.5 }
    }
}

impl NominalRates {
    pub fn duration(&self, a: &Pose, b: &Pose) -> f64 {
        let d = b - a;
        let planar = d.x.hypot(d.y) / self.linear;
        let yaw = d[THETA].abs() / self.yaw;
        let joint = d[3].abs().max(d[4].abs()) / self.joint;
        planar.max(yaw).max(joint).max(self.min_duration)
    }
}

/// Piecewise polynomial through 5D waypoints. Each segment stores
/// coefficients in normalized time `tau = (t - t_k) / T_k`, so stretching the
/// durations reparameterizes time without moving the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory5D {
    pub waypoints: Vec<Pose>,
    pub durations: Vec<f64>,
    /// `coefficients[segment][coordinate][power]`
    pub coefficients: Vec<[[f64; NCOEF]; 5]>,
}

/// Position and its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub x: Pose,
    pub xdot: Pose,
    pub xddot: Pose,
}

/// `d^k/dtau^k tau^j` at `tau`.
fn basis(k: usize, j: usize, tau: f64) -> f64 {
    if j < k {
        return 0.0;
    }
    let falling: f64 = ((j - k + 1)..=j).map(|v| v as f64).product();
    falling * tau.powi((j - k) as i32)
}

/// Gram matrix of the cost derivative on [0, 1].
fn cost_hessian() -> [[f64; NCOEF]; NCOEF] {
    let k = COST_DERIVATIVE;
    let mut h = [[0.0; NCOEF]; NCOEF];
    for i in k..NCOEF {
        for j in k..NCOEF {
            let ci: f64 = ((i - k + 1)..=i).map(|v| v as f64).product();
            let cj: f64 = ((j - k + 1)..=j).map(|v| v as f64).product();
            h[i][j] = ci * cj / ((i + j - 2 * k + 1) as f64);
        }
    }
    h
}

pub fn generate_trajectory(waypoints: &[Pose], durations: Option<&[f64]>) -> Result<Trajectory5D> {
    generate_with_rates(waypoints, durations, &NominalRates::default())
}

pub fn generate_with_rates(
    waypoints: &[Pose],
    durations: Option<&[f64]>,
    rates: &NominalRates,
) -> Result<Trajectory5D> {
    if waypoints.len() < 2 {
        return Err(ModelError::Trajectory(format!(
            "need at least 2 waypoints, got {}",
            waypoints.len()
        )));
    }
    if waypoints.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(ModelError::Trajectory("non-finite waypoint".into()));
    }
    let segs = waypoints.len() - 1;
    let durations: Vec<f64> = match durations {
        Some(d) if d.len() != segs => {
            return Err(ModelError::Trajectory(format!(
                "{} durations for {segs} segments",
                d.len()
            )))
        }
        Some(d) => {
            for (k, t) in d.iter().enumerate() {
                if !(*t > 0.0) || !t.is_finite() {
                    let what = if waypoints[k] == waypoints[k + 1] { "duplicate waypoints with" } else { "segment with" };
                    return Err(ModelError::Trajectory(format!("{what} non-positive duration {t} at segment {k}")));
                }
            }
            d.to_vec()
        }
        None => waypoints.windows(2).map(|w| rates.duration(&w[0], &w[1])).collect(),
    };

    let n = segs * NCOEF;
    let n_con = 8 * segs;
    let mut kkt = DMatrix::<f64>::zeros(n + n_con, n + n_con);
    let h = cost_hessian();
    for s in 0..segs {
        let w = durations[s].powi(-(2 * COST_DERIVATIVE as i32 - 1));
        for i in 0..NCOEF {
            for j in 0..NCOEF {
                kkt[(s * NCOEF + i, s * NCOEF + j)] = h[i][j] * w;
            }
        }
    }
    let mut rhs = DMatrix::<f64>::zeros(n + n_con, 5);
    let mut row = n;
    let mut add = |kkt: &mut DMatrix<f64>, entries: &[(usize, f64)]| {
        for &(col, v) in entries {
            kkt[(row, col)] = v;
            kkt[(col, row)] = v;
        }
        row += 1;
        row - 1
    };
    for s in 0..segs {
        let c0 = s * NCOEF;
        let start: Vec<_> = (0..NCOEF).map(|j| (c0 + j, basis(0, j, 0.0))).collect();
        let r = add(&mut kkt, &start);
        rhs.row_mut(r).copy_from(&waypoints[s].transpose());
        let end: Vec<_> = (0..NCOEF).map(|j| (c0 + j, basis(0, j, 1.0))).collect();
        let r = add(&mut kkt, &end);
        rhs.row_mut(r).copy_from(&waypoints[s + 1].transpose());
    }
    for s in 0..segs.saturating_sub(1) {
        let (a, b) = (s * NCOEF, (s + 1) * NCOEF);
        let (ta, tb) = (durations[s], durations[s + 1]);
        for k in 1..=CONTINUITY {
            let mut entries: Vec<_> = (0..NCOEF)
                .map(|j| (a + j, basis(k, j, 1.0) / ta.powi(k as i32)))
                .collect();
            entries.extend((0..NCOEF).map(|j| (b + j, -basis(k, j, 0.0) / tb.powi(k as i32))));
            add(&mut kkt, &entries);
        }
    }
    for k in 1..=3 {
        let first: Vec<_> = (0..NCOEF).map(|j| (j, basis(k, j, 0.0))).collect();
        add(&mut kkt, &first);
        let last = (segs - 1) * NCOEF;
        let end: Vec<_> = (0..NCOEF).map(|j| (last + j, basis(k, j, 1.0))).collect();
        add(&mut kkt, &end);
    }
    debug_assert_eq!(row, n + n_con);

    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ModelError::Trajectory("spline system is singular".into()))?;
    let coefficients = (0..segs)
        .map(|s| std::array::from_fn(|c| std::array::from_fn(|j| sol[(s * NCOEF + j, c)])))
        .collect();
    Ok(Trajectory5D { waypoints: waypoints.to_vec(), durations, coefficients })
}

impl Trajectory5D {
    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Segment start times plus the final time.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        for d in &self.durations {
            t.push(t.last().unwrap() + d);
        }
        t
    }

    /// Samples at `t`, clamped to `[0, total_time]`.
    pub fn eval(&self, t: f64) -> TrajectorySample {
        let knots = self.knot_times();
        let t = t.clamp(0.0, *knots.last().unwrap());
        let seg = match knots[1..].iter().position(|k| t < *k) {
            Some(s) => s,
            None => self.durations.len() - 1,
        };
        let dur = self.durations[seg];
        let tau = ((t - knots[seg]) / dur).clamp(0.0, 1.0);
        let coef = &self.coefficients[seg];
        let deriv = |k: usize| {
            Pose::from_fn(|c, _| {
                (0..NCOEF).map(|j| coef[c][j] * basis(k, j, tau)).sum::<f64>() / dur.powi(k as i32)
            })
        };
        TrajectorySample { x: deriv(0), xdot: deriv(1), xddot: deriv(2) }
    }

    /// Same path traversed `s` times slower.
    pub fn scaled(&self, s: f64) -> Trajectory5D {
        Trajectory5D {
            waypoints: self.waypoints.clone(),
            durations: self.durations.iter().map(|d| d * s).collect(),
            coefficients: self.coefficients.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Largest `|u_i| / u_lim,i` over samples and actuators.
    pub worst_ratio: f64,
    pub t_worst: f64,
    pub actuator: usize,
}

/// Samples the trajectory every `dt_check` (and at the end) and maps each
/// rate through the inverse map at the trajectory's own configuration.
pub fn feasibility_check(traj: &Trajectory5D, params: &RobotParams, dt_check: f64) -> Result<Feasibility> {
    feasibility_with_limits(traj, params, &params.actuator_limits, dt_check)
}

pub fn feasibility_with_limits(
    traj: &Trajectory5D,
    params: &RobotParams,
    limits: &[f64; 6],
    dt_check: f64,
) -> Result<Feasibility> {
    if !(dt_check > 0.0) {
        return Err(ModelError::Trajectory(format!("check step must be positive, got {dt_check}")));
    }
    let total = traj.total_time();
    let n = (total / dt_check).floor() as usize;
    let times = (0..=n).map(|k| k as f64 * dt_check).chain(std::iter::once(total));
    let mut worst = Feasibility { feasible: true, worst_ratio: 0.0, t_worst: 0.0, actuator: 0 };
    for t in times {
        let sample = traj.eval(t);
        let u = stack_maps(params, &sample.x, false)?.a * sample.xdot;
        for (i, (ui, lim)) in u.iter().zip(limits).enumerate() {
            let ratio = ui.abs() / lim;
            if ratio > worst.worst_ratio {
                worst = Feasibility { feasible: true, worst_ratio: ratio, t_worst: t, actuator: i };
            }
        }
    }
    worst.feasible = worst.worst_ratio <= 1.0;
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingOutcome {
    pub iterations: usize,
    /// Factors applied, in order.
    pub factors: Vec<f64>,
    pub initial: Feasibility,
    pub last: Feasibility,
}

/// Stretches all durations by `worst_ratio + 0.05` until every sampled
/// actuator rate is within its limit.
pub fn time_scale_until_feasible(
    traj: &Trajectory5D,
    params: &RobotParams,
    limits: &[f64; 6],
    dt_check: f64,
) -> Result<(Trajectory5D, ScalingOutcome)> {
    let initial = feasibility_with_limits(traj, params, limits, dt_check)?;
    let mut current = traj.clone();
    let mut check = initial;
    let mut factors = Vec::new();
    while !check.feasible {
        if factors.len() >= SCALING_CAP || !check.worst_ratio.is_finite() {
            return Err(ModelError::ScalingNotConverged(factors.len()));
        }
        let s = check.worst_ratio + SCALING_MARGIN;
        current = current.scaled(s);
        factors.push(s);
        check = feasibility_with_limits(&current, params, limits, dt_check)?;
    }
    Ok((current, ScalingOutcome { iterations: factors.len(), factors, initial, last: check }))
}
