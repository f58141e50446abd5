//! Small dense linear-algebra helpers shared by the analyses.

use nalgebra::{DMatrix, SMatrix};

pub fn to_dynamic<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Count of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&max) if max > 0.0 => s.iter().filter(|v| **v > rel_tol * max).count(),
        _ => 0,
    }
}

/// Moore-Penrose pseudoinverse with singular values below `rel_tol * sigma_max`
/// treated as zero. Returns the inverse and the numerical rank.
pub fn pseudo_inverse<const R: usize, const C: usize>(
    m: &SMatrix<f64, R, C>,
    rel_tol: f64,
) -> (SMatrix<f64, C, R>, usize) {
    let svd = to_dynamic(m).svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = SMatrix::<f64, C, R>::zeros();
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if max == 0.0 || s <= rel_tol * max {
            continue;
        }
        rank += 1;
        for i in 0..C {
            for j in 0..R {
                out[(i, j)] += v_t[(k, i)] * u[(j, k)] / s;
            }
        }
    }
    (out, rank)
}

/// Eigenvalue-based condition number of a symmetric matrix; infinite when
/// any eigenvalue is non-positive.
pub fn spd_condition<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let eig = to_dynamic(m).symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
