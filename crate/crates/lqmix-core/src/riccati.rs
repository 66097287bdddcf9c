//! The coupled non-symmetric Riccati system behind the decentralized
//! feedback gains, solved by two independent routes:
//!
//!   P' + P(A + F) - (Htil + Bbar)P - P S P - (Abar + Ftil) = 0,  P(T) = 0,
//!   K' + K(A - S P) - (Bbar + P S)K + K S K + (P F - Ftil - Htil P) = 0,
//!   K(T) = 0,                      with S = B R^{-1} Btil^T (2n x 10n).
//!
//! Route 1 (`solve_closed_form`): P(t) = -[(0,I) e^{Psi (T-t)} (0;I)]^{-1}
//! (0,I) e^{Psi (T-t)} (I;0) with the constant fundamental matrix Psi, and
//! the same formula for K with the transition matrix of the time-varying
//! Phi(P(t)) in place of the exponential (accumulated by a fourth-order
//! commutator-free scheme, since Phi does not commute across times).
//!
//! Route 2 (`solve_integrated`): direct backward fixed-step RK4; the P
//! equation first, then the K equation with P cubically interpolated to the
//! Runge-Kutta stage times.
//!
//! Feedback gains: Theta1 = -R^{-1} Btil^T P, Theta2 = -R^{-1} Btil^T K.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::ccmat::{assemble_hamiltonian, CcError, CcMatrices};
use crate::grid::TimeGrid;
use crate::linalg::{cond_2, cubic_sample};

pub use crate::linalg::{expm, LinalgError};

/// Condition-number ceiling for the inverted 10n x 10n factor of the
/// closed-form solution. The solvability hypothesis is an existence
/// statement, not a constructive check, so near-singular factors are
/// reported instead of silently inverted.
pub const COND_MAX: f64 = 1e10;

/// Any entry of P or K beyond this magnitude during integration signals
/// finite-time escape (non-solvability on [0, T]).
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum RiccatiError {
    #[error("near-singular closed-form factor at t = {t}: condition number {cond:.3e} exceeds {max:.1e}")]
    NearSingularFactor { t: f64, cond: f64, max: f64 },
    #[error("solution entry exceeded {guard:.1e} at t = {t}: finite-time escape on the horizon")]
    BlowUp { t: f64, guard: f64 },
    #[error(transparent)]
    Cc(#[from] CcError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    ClosedForm,
    Integrated,
}

/// Time-sampled Riccati solution and feedback gains.
///
/// `p`, `k` hold 10n x 2n samples per grid point; `theta1`, `theta2` the
/// 2m x 2n gains. `cond_p` / `cond_k` log the condition numbers of the
/// inverted closed-form factors (empty for the integrated route).
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub method: SolveMethod,
    pub p: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub theta1: Vec<DMatrix<f64>>,
    pub theta2: Vec<DMatrix<f64>>,
    pub cond_p: Vec<f64>,
    pub cond_k: Vec<f64>,
}

struct Ingredients {
    /// A + F.
    drift: DMatrix<f64>,
    /// Htil + Bbar.
    costate_drift: DMatrix<f64>,
    /// Abar + Ftil.
    load: DMatrix<f64>,
    /// S = B R^{-1} Btil^T.
    kernel: DMatrix<f64>,
    /// R^{-1} Btil^T (for the gains).
    gain_map: DMatrix<f64>,
    f: DMatrix<f64>,
    f_til: DMatrix<f64>,
    h_til: DMatrix<f64>,
    b_bar: DMatrix<f64>,
    a: DMatrix<f64>,
}

fn ingredients(cc: &CcMatrices) -> Result<Ingredients, RiccatiError> {
    let kernel = cc.control_kernel()?;
    let r_inv = cc
        .r
        .clone()
        .lu()
        .try_inverse()
        .ok_or(CcError::SingularControlWeight)?;
    Ok(Ingredients {
        drift: &cc.a + &cc.f,
        costate_drift: &cc.h_til + &cc.b_bar,
        load: &cc.a_bar + &cc.f_til,
        kernel,
        gain_map: r_inv * cc.b_til.transpose(),
        f: cc.f.clone(),
        f_til: cc.f_til.clone(),
        h_til: cc.h_til.clone(),
        b_bar: cc.b_bar.clone(),
        a: cc.a.clone(),
    })
}

/// Extract M(t) = -[(0,I) Z (0;I)]^{-1} (0,I) Z (I;0) from a transition
/// matrix Z, i.e. solve Z22 M = -Z21. Returns the solution and the
/// condition number of Z22.
fn extract_from_transition(
    z: &DMatrix<f64>,
    xd: usize,
    yd: usize,
    t: f64,
) -> Result<(DMatrix<f64>, f64), RiccatiError> {
    let z21 = z.view((xd, 0), (yd, xd)).into_owned();
    let z22 = z.view((xd, xd), (yd, yd)).into_owned();
    let cond = cond_2(&z22);
    if !cond.is_finite() || cond > COND_MAX {
        return Err(RiccatiError::NearSingularFactor { t, cond, max: COND_MAX });
    }
    let sol = z22
        .lu()
        .solve(&(-z21))
        .ok_or(RiccatiError::NearSingularFactor { t, cond: f64::INFINITY, max: COND_MAX })?;
    Ok((sol, cond))
}

/// Gauss nodes and exponent weights of the fourth-order commutator-free
/// transition step for y' = M(t) y:
///   E = exp(h (w2 M1 + w1 M2)) * exp(h (w1 M1 + w2 M2)),
/// with M1, M2 evaluated at t + c1 h, t + c2 h.
const CF4_C1: f64 = 0.5 - 0.288_675_134_594_812_9; // 1/2 - sqrt(3)/6
const CF4_C2: f64 = 0.5 + 0.288_675_134_594_812_9;
const CF4_W1: f64 = 0.25 + 0.288_675_134_594_812_9; // 1/4 + sqrt(3)/6
const CF4_W2: f64 = 0.25 - 0.288_675_134_594_812_9;

fn cf4_step(m1: &DMatrix<f64>, m2: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>, RiccatiError> {
    let first = expm(&(m1.scale(h * CF4_W1) + m2.scale(h * CF4_W2)))?;
    let second = expm(&(m1.scale(h * CF4_W2) + m2.scale(h * CF4_W1)))?;
    Ok(second * first)
}

fn gains_from(
    ing: &Ingredients,
    p: &[DMatrix<f64>],
    k: &[DMatrix<f64>],
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let theta1 = p.iter().map(|pi| -(&ing.gain_map * pi)).collect();
    let theta2 = k.iter().map(|ki| -(&ing.gain_map * ki)).collect();
    (theta1, theta2)
}

/// Closed-form solve on a uniform grid of `steps` intervals over [0, horizon].
///
/// P is evaluated pointwise from the exponential of the constant Psi (each
/// grid point independent, computed in parallel). K follows from the
/// accumulated transition of Phi(P(t)), with P at the Gauss nodes taken from
/// the same closed form.
pub fn solve_closed_form(
    cc: &CcMatrices,
    horizon: f64,
    steps: usize,
) -> Result<RiccatiSolution, RiccatiError> {
    let grid = TimeGrid::new(horizon, steps);
    let ing = ingredients(cc)?;
    let (psi, phi_builder) = assemble_hamiltonian(cc)?;
    let xd = cc.x_dim();
    let yd = cc.y_dim();

    let p_at = |t: f64| -> Result<(DMatrix<f64>, f64), RiccatiError> {
        let z = expm(&psi.scale(horizon - t))?;
        extract_from_transition(&z, xd, yd, t)
    };

    let p_samples: Vec<(DMatrix<f64>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| p_at(grid.time(idx)))
        .collect::<Result<_, _>>()?;
    let (p, cond_p): (Vec<_>, Vec<_>) = p_samples.into_iter().unzip();

    // Local transitions of Phi over each cell, then a backward sweep
    // accumulating Z(t_k -> T) and extracting K(t_k).
    let dt = grid.dt();
    let local: Vec<DMatrix<f64>> = (0..steps)
        .into_par_iter()
        .map(|idx| -> Result<DMatrix<f64>, RiccatiError> {
            let t = grid.time(idx);
            let (p1, _) = p_at(t + CF4_C1 * dt)?;
            let (p2, _) = p_at(t + CF4_C2 * dt)?;
            cf4_step(&phi_builder.at(&p1), &phi_builder.at(&p2), dt)
        })
        .collect::<Result<_, _>>()?;

    let mut k = vec![DMatrix::zeros(yd, xd); grid.len()];
    let mut cond_k = vec![1.0; grid.len()];
    let mut z = DMatrix::<f64>::identity(xd + yd, xd + yd);
    for idx in (0..steps).rev() {
        z = &z * &local[idx];
        let (ki, ci) = extract_from_transition(&z, xd, yd, grid.time(idx))?;
        k[idx] = ki;
        cond_k[idx] = ci;
    }

    let (theta1, theta2) = gains_from(&ing, &p, &k);
    Ok(RiccatiSolution { grid, method: SolveMethod::ClosedForm, p, k, theta1, theta2, cond_p, cond_k })
}

fn p_rhs(ing: &Ingredients, p: &DMatrix<f64>) -> DMatrix<f64> {
    // P' = -P(A+F) + (Htil+Bbar)P + P S P + (Abar+Ftil)
    -(p * &ing.drift) + &ing.costate_drift * p + p * &ing.kernel * p + &ing.load
}

fn k_rhs(ing: &Ingredients, k: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    // K' = -K(A - S P) + (Bbar + P S)K - K S K - (P F - Ftil - Htil P)
    let sp = &ing.kernel * p;
    let ps = p * &ing.kernel;
    let forcing = p * &ing.f - &ing.f_til - &ing.h_til * p;
    -(k * (&ing.a - sp)) + (&ing.b_bar + ps) * k - k * &ing.kernel * k - forcing
}

fn guard(m: &DMatrix<f64>, t: f64) -> Result<(), RiccatiError> {
    let a = m.amax();
    if !a.is_finite() || a > OVERFLOW_GUARD {
        return Err(RiccatiError::BlowUp { t, guard: OVERFLOW_GUARD });
    }
    Ok(())
}

/// Backward fixed-step RK4 integration of both Riccati equations from the
/// zero terminal conditions. The P equation is integrated first; the K
/// stages interpolate the stored P samples cubically.
pub fn solve_integrated(
    cc: &CcMatrices,
    horizon: f64,
    steps: usize,
) -> Result<RiccatiSolution, RiccatiError> {
    let grid = TimeGrid::new(horizon, steps);
    let ing = ingredients(cc)?;
    let xd = cc.x_dim();
    let yd = cc.y_dim();
    let h = -grid.dt(); // backward step

    let mut p = vec![DMatrix::zeros(yd, xd); grid.len()];
    for idx in (0..steps).rev() {
        let cur = &p[idx + 1];
        let k1 = p_rhs(&ing, cur);
        let k2 = p_rhs(&ing, &(cur + k1.scale(h / 2.0)));
        let k3 = p_rhs(&ing, &(cur + k2.scale(h / 2.0)));
        let k4 = p_rhs(&ing, &(cur + k3.scale(h)));
        let next = cur + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
        guard(&next, grid.time(idx))?;
        p[idx] = next;
    }

    let mut k = vec![DMatrix::zeros(yd, xd); grid.len()];
    for idx in (0..steps).rev() {
        let t_hi = grid.time(idx + 1);
        let p_hi = &p[idx + 1];
        let p_mid = cubic_sample(&p, &grid, t_hi + h / 2.0);
        let p_lo = &p[idx];
        let cur = &k[idx + 1];
        let k1 = k_rhs(&ing, cur, p_hi);
        let k2 = k_rhs(&ing, &(cur + k1.scale(h / 2.0)), &p_mid);
        let k3 = k_rhs(&ing, &(cur + k2.scale(h / 2.0)), &p_mid);
        let k4 = k_rhs(&ing, &(cur + k3.scale(h)), p_lo);
        let next = cur + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
        guard(&next, grid.time(idx))?;
        k[idx] = next;
    }

    let (theta1, theta2) = gains_from(&ing, &p, &k);
    Ok(RiccatiSolution {
        grid,
        method: SolveMethod::Integrated,
        p,
        k,
        theta1,
        theta2,
        cond_p: Vec::new(),
        cond_k: Vec::new(),
    })
}

/// Max-norm residuals of the two Riccati equations along a solution, using
/// centered finite differences for the time derivatives on interior grid
/// points. Normalize by `cc.coefficient_scale()` when comparing against
/// tolerances.
pub fn residuals(cc: &CcMatrices, sol: &RiccatiSolution) -> Result<(f64, f64), RiccatiError> {
    let ing = ingredients(cc)?;
    let dt = sol.grid.dt();
    let mut max_p = 0.0f64;
    let mut max_k = 0.0f64;
    for idx in 1..sol.grid.steps {
        let pdot = (&sol.p[idx + 1] - &sol.p[idx - 1]).scale(1.0 / (2.0 * dt));
        let kdot = (&sol.k[idx + 1] - &sol.k[idx - 1]).scale(1.0 / (2.0 * dt));
        let rp = pdot - p_rhs(&ing, &sol.p[idx]);
        let rk = kdot - k_rhs(&ing, &sol.k[idx], &sol.p[idx]);
        max_p = max_p.max(rp.amax());
        max_k = max_k.max(rk.amax());
    }
    Ok((max_p, max_k))
}

/// Max over the grid of the entrywise difference between two solutions,
/// and the larger solution magnitude (for relative comparisons).
pub fn solution_distance(a: &RiccatiSolution, b: &RiccatiSolution) -> (f64, f64) {
    assert_eq!(a.grid, b.grid, "solutions must share a grid");
    let mut dist = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..a.grid.len() {
        dist = dist.max((&a.p[idx] - &b.p[idx]).amax());
        dist = dist.max((&a.k[idx] - &b.k[idx]).amax());
        scale = scale.max(a.p[idx].amax()).max(a.k[idx].amax());
    }
    (dist, scale)
}

impl RiccatiSolution {
    /// Flattened CSV: one row per grid point with t, P, K, Theta1, Theta2
    /// (row-major) and the closed-form factor condition numbers.
    pub fn export_csv(&self) -> String {
        let mut out = String::new();
        let (pr, pc) = (self.p[0].nrows(), self.p[0].ncols());
        let (tr, tc) = (self.theta1[0].nrows(), self.theta1[0].ncols());
        out.push('t');
        for (tag, rows, cols) in [("p", pr, pc), ("k", pr, pc), ("theta1", tr, tc), ("theta2", tr, tc)] {
            for i in 0..rows {
                for j in 0..cols {
                    out.push_str(&format!(",{tag}_{i}_{j}"));
                }
            }
        }
        out.push_str(",cond_p,cond_k\n");
        for idx in 0..self.grid.len() {
            out.push_str(&format!("{}", self.grid.time(idx)));
            for mat in [&self.p[idx], &self.k[idx], &self.theta1[idx], &self.theta2[idx]] {
                for i in 0..mat.nrows() {
                    for j in 0..mat.ncols() {
                        out.push_str(&format!(",{}", mat[(i, j)]));
                    }
                }
            }
            let cp = self.cond_p.get(idx).copied().unwrap_or(f64::NAN);
            let ck = self.cond_k.get(idx).copied().unwrap_or(f64::NAN);
            out.push_str(&format!(",{cp},{ck}\n"));
        }
        out
    }

    pub fn export_meta_json(&self) -> serde_json::Value {
        serde_json::json!({
            "horizon": self.grid.horizon,
            "steps": self.grid.steps,
            "dt": self.grid.dt(),
            "method": match self.method { SolveMethod::ClosedForm => "closed-form", SolveMethod::Integrated => "integrated" },
            "p_shape": [self.p[0].nrows(), self.p[0].ncols()],
            "gain_shape": [self.theta1[0].nrows(), self.theta1[0].ncols()],
            "cond_max": COND_MAX,
            "max_cond_p": self.cond_p.iter().cloned().fold(f64::NAN, f64::max),
            "max_cond_k": self.cond_k.iter().cloned().fold(f64::NAN, f64::max),
            "terminal_p_norm": self.p[self.grid.steps].amax(),
            "terminal_k_norm": self.k[self.grid.steps].amax(),
        })
    }

    /// Final-row sanity: both terminal conditions are exact zeros.
    pub fn terminal_norms(&self) -> (f64, f64) {
        (self.p[self.grid.steps].amax(), self.k[self.grid.steps].amax())
    }
}
