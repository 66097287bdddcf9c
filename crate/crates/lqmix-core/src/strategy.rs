//! Decentralized strategy synthesis: the deterministic mean-field path
//! (expectation of the representative pair), the feedback law
//!
//!   u = Theta1(t) x + Theta2(t) (E[x] - x),   x = (x_team1, x_team2),
//!
//! and a residual diagnostic checking that the costate ansatz
//! E[y] = P E[x] is consistent with the assembled backward equation.
//!
//! The expectation path is precomputed offline from the ODE
//! d E[x] / dt = (A + F + B Theta1(t)) E[x]; the Theta2 term is centered and
//! drops under expectation. Agents therefore act on their own state, one
//! partner state from the opposite team, and this offline path only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccmat::CcMatrices;
use crate::grid::TimeGrid;
use crate::linalg::{cubic_sample, linear_sample, linear_sample_vec};
use crate::model::ProblemSpec;
use crate::riccati::RiccatiSolution;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("grid mismatch: solution on horizon {got}, specification horizon {want}")]
    GridMismatch { got: f64, want: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Deterministic mean-field trajectories on the solver grid: the stacked
/// expectation ex = E[(x_i, x_j)], its team blocks m1, m2 and the
/// population mixture mbar = pi1 m1 + pi2 m2.
#[derive(Debug, Clone)]
pub struct MeanFieldPath {
    pub grid: TimeGrid,
    pub ex: Vec<DVector<f64>>,
    pub m1: Vec<DVector<f64>>,
    pub m2: Vec<DVector<f64>>,
    pub mbar: Vec<DVector<f64>>,
}

/// Propagate the expectation ODE with RK4 on the solver grid, from the
/// initial team means. Gains are interpolated cubically to stage times.
pub fn propagate_mean_field(
    cc: &CcMatrices,
    ric: &RiccatiSolution,
    spec: &ProblemSpec,
) -> Result<MeanFieldPath, StrategyError> {
    if (ric.grid.horizon - spec.horizon).abs() > 1e-12 {
        return Err(StrategyError::GridMismatch { got: ric.grid.horizon, want: spec.horizon });
    }
    if spec.init1.dim() != cc.n || spec.init2.dim() != cc.n {
        return Err(StrategyError::Dimension(format!(
            "initial laws must be {}-dimensional",
            cc.n
        )));
    }
    let grid = ric.grid;
    let n = cc.n;
    let base = &cc.a + &cc.f;
    let closed = |theta1: &DMatrix<f64>| &base + &cc.b * theta1;

    let mut ex = Vec::with_capacity(grid.len());
    let mut cur = DVector::zeros(2 * n);
    cur.rows_mut(0, n).copy_from(&spec.init1.mean);
    cur.rows_mut(n, n).copy_from(&spec.init2.mean);
    ex.push(cur.clone());
    let h = grid.dt();
    for idx in 0..grid.steps {
        let t = grid.time(idx);
        let a0 = closed(&ric.theta1[idx]);
        let am = closed(&cubic_sample(&ric.theta1, &grid, t + h / 2.0));
        let a1 = closed(&ric.theta1[idx + 1]);
        let k1 = &a0 * &cur;
        let k2 = &am * (&cur + k1.scale(h / 2.0));
        let k3 = &am * (&cur + k2.scale(h / 2.0));
        let k4 = &a1 * (&cur + k3.scale(h));
        cur += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0);
        ex.push(cur.clone());
    }

    let m1: Vec<DVector<f64>> = ex.iter().map(|v| v.rows(0, n).into_owned()).collect();
    let m2: Vec<DVector<f64>> = ex.iter().map(|v| v.rows(n, n).into_owned()).collect();
    let mbar: Vec<DVector<f64>> = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| a.scale(cc.pi1) + b.scale(cc.pi2))
        .collect();
    Ok(MeanFieldPath { grid, ex, m1, m2, mbar })
}

impl MeanFieldPath {
    /// CSV with columns t, m1_*, m2_*, mbar_*.
    pub fn export_csv(&self) -> String {
        let n = self.m1[0].len();
        let mut out = String::from("t");
        for tag in ["m1", "m2", "mbar"] {
            for i in 0..n {
                out.push_str(&format!(",{tag}_{i}"));
            }
        }
        out.push('\n');
        for idx in 0..self.grid.len() {
            out.push_str(&format!("{}", self.grid.time(idx)));
            for vec in [&self.m1[idx], &self.m2[idx], &self.mbar[idx]] {
                for v in vec.iter() {
                    out.push_str(&format!(",{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// How each agent is assigned its generic partner in the opposite team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartnerRule {
    /// Agent i of team 1 observes team-2 agent (i mod N2) and vice versa.
    /// By exchangeability any fixed assignment yields the same cost law;
    /// round-robin keeps runs reproducible.
    RoundRobin,
}

/// Everything an agent needs to act: sampled gains, the offline expectation
/// path, and the partner assignment rule.
#[derive(Debug, Clone)]
pub struct StrategyGains {
    pub grid: TimeGrid,
    pub n: usize,
    pub m: usize,
    pub theta1: Vec<DMatrix<f64>>,
    pub theta2: Vec<DMatrix<f64>>,
    pub ex: Vec<DVector<f64>>,
    pub partner_rule: PartnerRule,
}

impl StrategyGains {
    pub fn new(ric: &RiccatiSolution, mf: &MeanFieldPath) -> Self {
        assert_eq!(ric.grid, mf.grid, "gains and mean-field path must share a grid");
        let m2 = ric.theta1[0].nrows();
        let n2 = ric.theta1[0].ncols();
        Self {
            grid: ric.grid,
            n: n2 / 2,
            m: m2 / 2,
            theta1: ric.theta1.clone(),
            theta2: ric.theta2.clone(),
            ex: mf.ex.clone(),
            partner_rule: PartnerRule::RoundRobin,
        }
    }

    pub fn theta1_at(&self, t: f64) -> DMatrix<f64> {
        linear_sample(&self.theta1, &self.grid, t)
    }

    pub fn theta2_at(&self, t: f64) -> DMatrix<f64> {
        linear_sample(&self.theta2, &self.grid, t)
    }

    pub fn ex_at(&self, t: f64) -> DVector<f64> {
        linear_sample_vec(&self.ex, &self.grid, t)
    }

    /// Evaluate the feedback law on the stacked pair (x_team1, x_team2);
    /// returns the team-1 and team-2 control blocks.
    pub fn control(
        &self,
        t: f64,
        x_team1: &DVector<f64>,
        x_team2: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let n = self.n;
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(x_team1);
        x.rows_mut(n, n).copy_from(x_team2);
        let u = self.theta1_at(t) * &x + self.theta2_at(t) * (self.ex_at(t) - &x);
        (u.rows(0, self.m).into_owned(), u.rows(self.m, self.m).into_owned())
    }
}

/// Consistency diagnostic for the costate ansatz along the expectation
/// path. With v(t) = P(t) E[x](t), the mean of the backward equation reads
/// dv/dt = Abar E[x] + Bbar v + Ftil E[x] + Htil v; the report carries the
/// worst finite-difference defect of that identity over interior grid
/// points, plus the terminal value |v(T)| (exact zero by the terminal
/// condition) and the one-sided defect at T. Large residuals flag
/// internally inconsistent block assemblies.
#[derive(Debug, Clone, Copy)]
pub struct FbsdeReport {
    pub max_residual: f64,
    pub terminal_value: f64,
    pub terminal_residual: f64,
}

pub fn fbsde_residual(cc: &CcMatrices, ric: &RiccatiSolution, mf: &MeanFieldPath) -> FbsdeReport {
    assert_eq!(ric.grid, mf.grid, "solution and mean-field path must share a grid");
    let grid = ric.grid;
    let dt = grid.dt();
    let v: Vec<DVector<f64>> = (0..grid.len()).map(|k| &ric.p[k] * &mf.ex[k]).collect();
    let rhs = |k: usize| -> DVector<f64> {
        &cc.a_bar * &mf.ex[k] + &cc.b_bar * &v[k] + &cc.f_til * &mf.ex[k] + &cc.h_til * &v[k]
    };
    let mut max_residual = 0.0f64;
    for k in 1..grid.steps {
        let dv = (&v[k + 1] - &v[k - 1]).scale(1.0 / (2.0 * dt));
        max_residual = max_residual.max((dv - rhs(k)).amax());
    }
    let m = grid.steps;
    let terminal_value = v[m].amax();
    // Second-order one-sided derivative at T.
    let dv_t = (v[m].scale(3.0) - v[m - 1].scale(4.0) + v[m - 2].clone()).scale(1.0 / (2.0 * dt));
    let terminal_residual = (dv_t - rhs(m)).amax();
    FbsdeReport { max_residual, terminal_value, terminal_residual }
}
