//! Dense matrix utilities: Padé matrix exponential, block placement,
//! condition numbers and grid interpolation of matrix-valued samples.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::TimeGrid;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix exponential input contains non-finite entries")]
    NonFinite,
    #[error("singular linear system in {context}")]
    Singular { context: &'static str },
}

/// Denominator/numerator coefficients of the order-13 diagonal Padé
/// approximant to exp(x).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Norm threshold below which the order-13 approximant is applied directly;
/// larger inputs are repeatedly halved first (scaling and squaring).
const EXPM_SCALING_THETA: f64 = 0.5;

/// Maximum column absolute sum (the induced 1-norm).
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|x| x.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling-and-squaring with an order-13 Padé
/// approximant. The scaling threshold is deliberately conservative (0.5)
/// so the approximant operates deep inside its accuracy region.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    assert_eq!(a.nrows(), a.ncols(), "expm requires a square matrix");
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > EXPM_SCALING_THETA {
        (norm / EXPM_SCALING_THETA).log2().ceil() as i32
    } else {
        0
    };
    let a1 = a.scale(0.5f64.powi(s));
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;

    let u_inner = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]))
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + id.scale(b[1]);
    let u = &a1 * u_inner;
    let v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]))
        + a6.scale(b[6])
        + a4.scale(b[4])
        + a2.scale(b[2])
        + id.scale(b[0]);

    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or(LinalgError::Singular { context: "Padé denominator" })?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// 2-norm condition number via singular values. Returns `f64::INFINITY`
/// for singular input.
pub fn cond_2(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Copy `block` into `dst` with its top-left corner at (`row`, `col`).
pub fn set_block(dst: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    dst.view_mut((row, col), (block.nrows(), block.ncols()))
        .copy_from(block);
}

/// Add `block` into `dst` at (`row`, `col`).
pub fn add_block(dst: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    let mut view = dst.view_mut((row, col), (block.nrows(), block.ncols()));
    view += block;
}

/// Piecewise-linear interpolation of matrix samples on a uniform grid.
pub fn linear_sample(samples: &[DMatrix<f64>], grid: &TimeGrid, t: f64) -> DMatrix<f64> {
    debug_assert_eq!(samples.len(), grid.len());
    let (k, w) = grid.locate(t);
    if w == 0.0 {
        samples[k].clone()
    } else {
        samples[k].scale(1.0 - w) + samples[k + 1].scale(w)
    }
}

/// Same as [`linear_sample`] for vector samples.
pub fn linear_sample_vec(samples: &[DVector<f64>], grid: &TimeGrid, t: f64) -> DVector<f64> {
    debug_assert_eq!(samples.len(), grid.len());
    let (k, w) = grid.locate(t);
    if w == 0.0 {
        samples[k].clone()
    } else {
        samples[k].scale(1.0 - w) + samples[k + 1].scale(w)
    }
}

/// Cubic (4-point Lagrange) interpolation of matrix samples on a uniform
/// grid. Used to evaluate solver output at Runge-Kutta stage times; the
/// O(dt^4) interpolation error matches the integrator order.
pub fn cubic_sample(samples: &[DMatrix<f64>], grid: &TimeGrid, t: f64) -> DMatrix<f64> {
    debug_assert_eq!(samples.len(), grid.len());
    let m = grid.steps;
    if m < 3 {
        return linear_sample(samples, grid, t);
    }
    let (k, w) = grid.locate(t);
    // Window [k0, k0+3] containing cell k, clamped to the grid.
    let k0 = k.saturating_sub(1).min(m - 3);
    let s = (k - k0) as f64 + w; // position within the window, in [0, 3]
    let xs = [0.0, 1.0, 2.0, 3.0];
    let mut out = DMatrix::zeros(samples[0].nrows(), samples[0].ncols());
    for (i, &xi) in xs.iter().enumerate() {
        let mut li = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                li *= (s - xj) / (xi - xj);
            }
        }
        out += samples[k0 + i].scale(li);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        let e = expm(&z).unwrap();
        assert_relative_eq!(e, DMatrix::identity(4, 4), epsilon = 1e-15);
    }

    #[test]
    fn expm_diagonal() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let e = expm(&d).unwrap();
        assert_relative_eq!(e[(0, 0)], 1.0f64.exp(), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 1)], 2.0f64.exp(), epsilon = 1e-12);
        assert!(e[(0, 1)].abs() < 1e-15 && e[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn expm_nilpotent_terminates_series() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_relative_eq!(e, expected, epsilon = 1e-14);
    }

    #[test]
    fn expm_matches_symmetric_eigendecomposition() {
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for scale in [0.3, 3.0, 40.0] {
            let raw = DMatrix::from_fn(5, 5, |_, _| next());
            let sym = (&raw + raw.transpose()).scale(0.5 * scale);
            let eig = sym.clone().symmetric_eigen();
            let exp_eig = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp))
                * eig.eigenvectors.transpose();
            let e = expm(&sym).unwrap();
            let err = one_norm(&(&e - &exp_eig)) / one_norm(&exp_eig);
            assert!(err < 1e-12, "relative error {err} at scale {scale}");
        }
    }

    #[test]
    fn expm_halving_identity() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 1.0, -0.3, 0.0, -0.5, 0.7, 0.4, 0.1, 0.9]);
        let whole = expm(&a).unwrap();
        let half = expm(&a.scale(0.5)).unwrap();
        let squared = &half * &half;
        assert_relative_eq!(whole, squared, epsilon = 1e-12);
    }

    #[test]
    fn expm_handles_norm_one_thousand() {
        // Skew-symmetric input keeps the exponential orthogonal, so the
        // rotation angle is an exact oracle even at norm 1e3.
        let w = 1000.0f64;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let e = expm(&a).unwrap();
        let expected =
            DMatrix::from_row_slice(2, 2, &[w.cos(), w.sin(), -w.sin(), w.cos()]);
        assert!((e - expected).amax() < 1e-11);
    }

    #[test]
    fn expm_rejects_non_finite() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(expm(&a), Err(LinalgError::NonFinite)));
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let grid = TimeGrid::new(1.0, 10);
        let f = |t: f64| 2.0 - t + 3.0 * t * t - 0.5 * t * t * t;
        let samples: Vec<DMatrix<f64>> = grid
            .times()
            .iter()
            .map(|&t| DMatrix::from_element(1, 1, f(t)))
            .collect();
        for &t in &[0.0, 0.03, 0.55, 0.949, 1.0] {
            let v = cubic_sample(&samples, &grid, t)[(0, 0)];
            assert_relative_eq!(v, f(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn cond_of_identity_is_one() {
        let id = DMatrix::<f64>::identity(6, 6);
        assert_relative_eq!(cond_2(&id), 1.0, epsilon = 1e-12);
    }
}
