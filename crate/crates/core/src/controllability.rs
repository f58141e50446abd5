//! Configuration-space controllability: GSI and three-wheel determinant
//! sweeps over the leg angles, and Kalman rank of the linearized dynamics.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector2, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{acceleration, forward_dynamics, reduced_model};
use crate::error::{ModelError, Result};
use crate::kinematics::{constraint_rows, stack_maps, wheel_pose};
use crate::linalg;
use crate::params::RobotParams;
use crate::state::{FullCoords, Pose};

/// W is treated as singular below this ratio of extreme singular values.
pub const GSI_SINGULAR_RATIO: f64 = 1e-10;
pub const KCM_RANK_TOL: f64 = 1e-8;
pub const LINEARIZE_STEP: f64 = 1e-6;

/// Subset of wheels in ground contact (zero-based indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WheelCombo(pub Vec<usize>);

impl WheelCombo {
    /// c1..c4: the four three-wheel subsets.
    pub fn triples() -> Vec<WheelCombo> {
        vec![
            WheelCombo(vec![0, 1, 2]),
            WheelCombo(vec![0, 1, 3]),
            WheelCombo(vec![0, 2, 3]),
            WheelCombo(vec![1, 2, 3]),
        ]
    }

    /// c5: all wheels.
    pub fn all() -> WheelCombo {
        WheelCombo(vec![0, 1, 2, 3])
    }

    fn check(&self, min: usize) -> Result<()> {
        if self.0.len() < min {
            return Err(ModelError::ComboSize { min, got: self.0.len() });
        }
        match self.0.iter().find(|w| **w >= 4) {
            Some(w) => Err(ModelError::WheelIndex(*w)),
            None => Ok(()),
        }
    }
}

impl fmt::Display for WheelCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_based: Vec<String> = self.0.iter().map(|w| (w + 1).to_string()).collect();
        write!(f, "({})", one_based.join(","))
    }
}

/// `sqrt(tr(C C^T) / n)`.
fn gsi_norm(c: &DMatrix<f64>) -> f64 {
    ((c * c.transpose()).trace() / c.nrows() as f64).sqrt()
}

/// Global stiffness index of a wheel map restricted to some rows and columns.
fn gsi_of(w: &DMatrix<f64>) -> f64 {
    let s = linalg::singular_values(w);
    if s.len() < w.ncols() || s[0] == 0.0 || s[w.ncols() - 1] <= GSI_SINGULAR_RATIO * s[0] {
        return 0.0;
    }
    let c = w.transpose() * w;
    match c.clone().try_inverse() {
        Some(inv) => 1.0 / (gsi_norm(&c) * gsi_norm(&inv)),
        None => 0.0,
    }
}

/// GSI `n_c` from the translational and yaw columns of the base-frame wheel
/// map, rows restricted to `combo`.
pub fn gsi(params: &RobotParams, x: &Pose, combo: &WheelCombo) -> Result<f64> {
    combo.check(3)?;
    let mut w = DMatrix::zeros(combo.0.len(), 3);
    for (r, &wheel) in combo.0.iter().enumerate() {
        let (dw, _) = constraint_rows(params, x, wheel)?;
        for c in 0..3 {
            w[(r, c)] = dw[c];
        }
    }
    Ok(gsi_of(&w))
}

/// GSI evaluated on the whole 6x5 inverse map, joint columns included.
pub fn gsi_full_map(params: &RobotParams, x: &Pose) -> Result<f64> {
    let maps = stack_maps(params, x, false)?;
    Ok(gsi_of(&linalg::to_dynamic(&maps.a)))
}

/// Roller contact position relative to the geometric center and the no-slip
/// roller direction, both in the robot frame.
fn roller_geometry(params: &RobotParams, x: &Pose, wheel: usize) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let pose = wheel_pose(params, x, wheel)?;
    let dir = pose.heading + params.roller_angles[wheel];
    Ok((pose.p_rw.xy(), Vector2::new(dir.cos(), dir.sin())))
}

/// Three-wheel determinant `d_c`; zero means the three contacts cannot
/// generate every planar body twist.
pub fn determinant_criterion(params: &RobotParams, x: &Pose, combo: &WheelCombo) -> Result<f64> {
    combo.check(3)?;
    if combo.0.len() != 3 {
        return Err(ModelError::ComboSize { min: 3, got: combo.0.len() });
    }
    let mut m = Matrix3::zeros();
    for (col, &wheel) in combo.0.iter().enumerate() {
        let (p, a) = roller_geometry(params, x, wheel)?;
        let jp = Vector2::new(-p.y, p.x);
        m[(0, col)] = a.x;
        m[(1, col)] = a.y;
        m[(2, col)] = jp.dot(&a);
    }
    Ok(m.determinant())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Gsi,
    Det,
    Kcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Min,
    Max,
}

impl std::str::FromStr for Analysis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gsi" => Ok(Analysis::Gsi),
            "det" => Ok(Analysis::Det),
            "kcm" => Ok(Analysis::Kcm),
            other => Err(format!("unknown analysis `{other}` (gsi, det, kcm)")),
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "min" => Ok(Statistic::Min),
            "max" => Ok(Statistic::Max),
            other => Err(format!("unknown statistic `{other}` (min, max)")),
        }
    }
}

/// Square grid over both joint angles, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl GridSpec {
    pub fn symmetric(limit_deg: f64, step_deg: f64) -> Self {
        GridSpec { start_deg: -limit_deg, stop_deg: limit_deg, step_deg }
    }

    /// Axis values in radians; `start + i * step` up to `stop`.
    pub fn axis(&self) -> Result<Vec<f64>> {
        let GridSpec { start_deg, stop_deg, step_deg } = *self;
        if !(step_deg > 0.0) || !(stop_deg >= start_deg) || !start_deg.is_finite() || !stop_deg.is_finite() {
            return Err(ModelError::Grid(format!(
                "need step > 0 and stop >= start, got {start_deg}..{stop_deg} by {step_deg}"
            )));
        }
        let n = ((stop_deg - start_deg) / step_deg + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| (start_deg + i as f64 * step_deg).to_radians()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub analysis: Analysis,
    pub statistic: Option<Statistic>,
    pub combos: Vec<WheelCombo>,
    /// rad
    pub phi1_values: Vec<f64>,
    /// rad
    pub phi2_values: Vec<f64>,
    /// `values[i][j]` at `(phi1_values[i], phi2_values[j])`.
    pub values: Vec<Vec<f64>>,
}

impl SweepGrid {
    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|v(a, b) - v(-b, -a)|`: the mirror across the diagonal that
    /// runs top-left to bottom-right when phi1 is drawn upward and phi2 to
    /// the right. `None` if the axes are not symmetric about zero.
    pub fn mirror_asymmetry(&self) -> Option<f64> {
        let n = self.phi1_values.len();
        let symmetric = |axis: &[f64]| {
            axis.len() == n
                && axis.iter().zip(axis.iter().rev()).all(|(a, b)| (a + b).abs() < 1e-9)
        };
        if !symmetric(&self.phi1_values) || !symmetric(&self.phi2_values) {
            return None;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let d = (self.values[i][j] - self.values[n - 1 - j][n - 1 - i]).abs();
                worst = worst.max(d);
            }
        }
        Some(worst)
    }

    /// Header row of phi2 values (deg), then one row per phi1 value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = self.phi2_values.iter().map(|v| fmt_deg(*v)).collect();
        writeln!(out, "phi1_deg\\phi2_deg,{}", header.join(","))?;
        for (phi1, row) in self.phi1_values.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{},{}", fmt_deg(*phi1), cells.join(","))?;
        }
        Ok(())
    }
}

fn fmt_deg(rad: f64) -> String {
    let d = rad.to_degrees();
    let r = d.round();
    if (d - r).abs() < 1e-9 {
        format!("{r}")
    } else {
        format!("{d}")
    }
}

fn pose_at(phi1: f64, phi2: f64) -> Pose {
    Pose::new(0.0, 0.0, 0.0, phi1, phi2)
}

fn run_grid<F>(spec: &GridSpec, workers: usize, cell: F) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let axis = spec.axis()?;
    let n = axis.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ModelError::Grid(e.to_string()))?;
    let flat: Vec<f64> = pool.install(|| {
        (0..n * n)
            .into_par_iter()
            .map(|k| cell(axis[k / n], axis[k % n]))
            .collect()
    });
    let values = flat.chunks(n).map(|c| c.to_vec()).collect();
    Ok((axis, values))
}

/// Aggregates GSI over c1..c5 or `|d_c|` over c1..c4 at every grid cell.
pub fn sweep(
    params: &RobotParams,
    analysis: Analysis,
    statistic: Statistic,
    spec: &GridSpec,
    workers: usize,
) -> Result<SweepGrid> {
    let combos = match analysis {
        Analysis::Gsi => {
            let mut c = WheelCombo::triples();
            c.push(WheelCombo::all());
            c
        }
        Analysis::Det => WheelCombo::triples(),
        Analysis::Kcm => return stlc_sweep(params, spec, workers),
    };
    // surface parameter errors once instead of per cell
    for combo in &combos {
        match analysis {
            Analysis::Gsi => gsi(params, &Pose::zeros(), combo)?,
            _ => determinant_criterion(params, &Pose::zeros(), combo)?,
        };
    }
    let (axis, values) = run_grid(spec, workers, |a, b| {
        let x = pose_at(a, b);
        let vals = combos.iter().map(|c| match analysis {
            Analysis::Gsi => gsi(params, &x, c).unwrap_or(0.0),
            _ => determinant_criterion(params, &x, c).map(f64::abs).unwrap_or(0.0),
        });
        match statistic {
            Statistic::Min => vals.fold(f64::INFINITY, f64::min),
            Statistic::Max => vals.fold(f64::NEG_INFINITY, f64::max),
        }
    })?;
    Ok(SweepGrid {
        analysis,
        statistic: Some(statistic),
        combos,
        phi1_values: axis.clone(),
        phi2_values: axis,
        values,
    })
}

pub type StateMatrix = SMatrix<f64, 10, 10>;
pub type InputMatrix = SMatrix<f64, 10, 6>;

/// Linearization of the reduced dynamics about a rest configuration, with
/// `z = [x, x_dot]`.
pub fn linearize(params: &RobotParams, x_eq: &Pose) -> Result<(StateMatrix, InputMatrix)> {
    let h = LINEARIZE_STEP;
    let mut a = StateMatrix::zeros();
    let mut b = InputMatrix::zeros();
    a.fixed_view_mut::<5, 5>(0, 5).fill_with_identity();
    for i in 0..5 {
        let mut e = Pose::zeros();
        e[i] = h;
        let plus = acceleration(params, x_eq, &e, &Vector6::zeros())?;
        let minus = acceleration(params, x_eq, &(-e), &Vector6::zeros())?;
        a.fixed_view_mut::<5, 1>(5, 5 + i).copy_from(&((plus - minus) / (2.0 * h)));
    }
    let mut q = FullCoords::zeros();
    q.fixed_rows_mut::<5>(0).copy_from(x_eq);
    let red = reduced_model(params, &q, &Pose::zeros())?;
    for j in 0..6 {
        let mut e = Vector6::zeros();
        e[j] = h;
        let plus = forward_dynamics(&red, &e)?;
        let minus = forward_dynamics(&red, &(-e))?;
        b.fixed_view_mut::<5, 1>(5, j).copy_from(&((plus - minus) / (2.0 * h)));
    }
    Ok((a, b))
}

/// `[B, AB, ..., A^9 B]`.
pub fn controllability_matrix(a: &StateMatrix, b: &InputMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(10, 60);
    let mut block = *b;
    for k in 0..10 {
        out.view_mut((0, 6 * k), (10, 6)).copy_from(&block);
        block = a * block;
    }
    out
}

pub fn kcm_rank(params: &RobotParams, x_eq: &Pose) -> Result<usize> {
    let (a, b) = linearize(params, x_eq)?;
    Ok(linalg::numerical_rank(&controllability_matrix(&a, &b), KCM_RANK_TOL))
}

/// Kalman rank at each rest configuration; -1 where the linearization failed.
pub fn stlc_sweep(params: &RobotParams, spec: &GridSpec, workers: usize) -> Result<SweepGrid> {
    let (axis, values) = run_grid(spec, workers, |a, b| {
        kcm_rank(params, &pose_at(a, b)).map_or(-1.0, |r| r as f64)
    })?;
    Ok(SweepGrid {
        analysis: Analysis::Kcm,
        statistic: None,
        combos: vec![WheelCombo::all()],
        phi1_values: axis.clone(),
        phi2_values: axis,
        values,
    })
}
