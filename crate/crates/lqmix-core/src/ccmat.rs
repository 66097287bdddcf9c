//! Assembly of the consistency-condition (CC) block system.
//!
//! The CC system couples the representative pair x = (x_i, x_j) in R^{2n}
//! (one generic agent per team) with a 10n-dimensional costate vector y:
//!
//!   dx = (A x + B u + F E[x]) dt + s1 dW_i + s2 dW_j,
//!   dy = (Abar x + Bbar y + Ftil E[x] + Htil E[y]) dt + z1 dW_i + z2 dW_j,
//!   R u + Btil^T y = 0,   x(0) = (xi, eta),  y(T) = 0.
//!
//! Costate component ordering (frozen; every 10n index in this crate refers
//! to it). Blocks are n-dimensional each:
//!
//!   0  own-state costate of the team-1 agent
//!   1  team-1 aggregate adjoint driven by the team-1 mean
//!   2  team-1 aggregate adjoint driven by the team-2 mean
//!   3  generic team-1 member adjoint (its expectation feeds rows 0-2)
//!   4  generic team-2 member adjoint as seen from team 1
//!   5  own-state costate of the team-2 agent
//!   6  team-2 aggregate adjoint driven by the team-2 mean
//!   7  team-2 aggregate adjoint driven by the team-1 mean
//!   8  generic team-2 member adjoint (its expectation feeds rows 5-7)
//!   9  generic team-1 member adjoint as seen from team 2
//!
//! All limit matrices use the limiting fractions (pi1, pi2); the finite-N
//! simulator couples agents through the realized empirical average instead.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::set_block;
use crate::model::{PiecewiseConst, ProblemSpec};

/// Number of n-dimensional blocks in the costate vector.
pub const COSTATE_BLOCKS: usize = 10;

/// Costate block indices (see the module doc for the full ordering).
pub mod costate {
    pub const OWN_T1: usize = 0;
    pub const AGG_T1_BY_T1: usize = 1;
    pub const AGG_T1_BY_T2: usize = 2;
    pub const MEMBER_T1: usize = 3;
    pub const MEMBER_T2_SEEN_T1: usize = 4;
    pub const OWN_T2: usize = 5;
    pub const AGG_T2_BY_T2: usize = 6;
    pub const AGG_T2_BY_T1: usize = 7;
    pub const MEMBER_T2: usize = 8;
    pub const MEMBER_T1_SEEN_T2: usize = 9;
    /// The four aggregate adjoints that coincide under identical
    /// coefficients with alpha = beta = 1.
    pub const AGGREGATES: [usize; 4] = [AGG_T1_BY_T1, AGG_T1_BY_T2, AGG_T2_BY_T2, AGG_T2_BY_T1];
}

#[derive(Debug, Error)]
pub enum CcError {
    #[error("control weight block is singular; (H2) requires R1, R2 > 0")]
    SingularControlWeight,
}

/// Assembled CC block matrices. Shapes (with state dim n, control dim m):
/// a, f: 2n x 2n; b: 2n x 2m; r: 2m x 2m; a_bar, f_til: 10n x 2n;
/// b_til: 10n x 2m; b_bar, h_til: 10n x 10n.
#[derive(Debug, Clone, PartialEq)]
pub struct CcMatrices {
    pub n: usize,
    pub m: usize,
    pub pi1: f64,
    pub pi2: f64,
    /// Forward drift of the representative pair, diag(A1, A2).
    pub a: DMatrix<f64>,
    /// Control map of the representative pair, diag(B1, B2).
    pub b: DMatrix<f64>,
    /// Mean-field coupling of the forward drift, rows (pi1 Fk, pi2 Fk).
    pub f: DMatrix<f64>,
    /// Control weight, diag(R1, R2).
    pub r: DMatrix<f64>,
    /// State-to-costate load (cost gradients).
    pub a_bar: DMatrix<f64>,
    /// Costate-to-control map; the stationarity condition reads
    /// R u + b_til^T y = 0.
    pub b_til: DMatrix<f64>,
    /// Costate drift.
    pub b_bar: DMatrix<f64>,
    /// Mean-state coupling of the costate drift.
    pub f_til: DMatrix<f64>,
    /// Mean-costate coupling of the costate drift.
    pub h_til: DMatrix<f64>,
    /// Stacked noise columns (sigma1; 0) and (0; sigma2), each 2n-valued.
    pub sigma1: PiecewiseConst,
    pub sigma2: PiecewiseConst,
}

/// Assemble every CC block from the coefficients, with the limiting
/// fractions (pi1, pi2) in all mean-field couplings.
pub fn assemble(spec: &ProblemSpec) -> CcMatrices {
    let n = spec.n;
    let m = spec.m;
    let (p1, p2) = (spec.pi1, spec.pi2);
    let (al, be) = (spec.alpha, spec.beta);

    let a1t = spec.a1.transpose();
    let a2t = spec.a2.transpose();
    let f1t = spec.f1.transpose();
    let f2t = spec.f2.transpose();
    let g1tq1 = spec.gamma1.transpose() * &spec.q1;
    let g2tq2 = spec.gamma2.transpose() * &spec.q2;
    let q1g1 = &spec.q1 * &spec.gamma1;
    let q2g2 = &spec.q2 * &spec.gamma2;
    let g1tq1g1 = &g1tq1 * &spec.gamma1;
    let g2tq2g2 = &g2tq2 * &spec.gamma2;

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    set_block(&mut a, 0, 0, &spec.a1);
    set_block(&mut a, n, n, &spec.a2);

    let mut b = DMatrix::zeros(2 * n, 2 * m);
    set_block(&mut b, 0, 0, &spec.b1);
    set_block(&mut b, n, m, &spec.b2);

    let mut f = DMatrix::zeros(2 * n, 2 * n);
    set_block(&mut f, 0, 0, &spec.f1.scale(p1));
    set_block(&mut f, 0, n, &spec.f1.scale(p2));
    set_block(&mut f, n, 0, &spec.f2.scale(p1));
    set_block(&mut f, n, n, &spec.f2.scale(p2));

    let mut r = DMatrix::zeros(2 * m, 2 * m);
    set_block(&mut r, 0, 0, &spec.r1);
    set_block(&mut r, m, m, &spec.r2);

    let mut a_bar = DMatrix::zeros(COSTATE_BLOCKS * n, 2 * n);
    {
        use costate::*;
        set_block(&mut a_bar, OWN_T1 * n, 0, &(-&spec.q1));
        set_block(&mut a_bar, MEMBER_T1 * n, 0, &(-&spec.q1));
        set_block(&mut a_bar, MEMBER_T2_SEEN_T1 * n, n, &spec.q2.scale(-al));
        set_block(&mut a_bar, OWN_T2 * n, n, &(-&spec.q2));
        set_block(&mut a_bar, MEMBER_T2 * n, n, &(-&spec.q2));
        set_block(&mut a_bar, MEMBER_T1_SEEN_T2 * n, 0, &spec.q1.scale(-be));
    }

    let mut b_til = DMatrix::zeros(COSTATE_BLOCKS * n, 2 * m);
    set_block(&mut b_til, costate::OWN_T1 * n, 0, &spec.b1);
    set_block(&mut b_til, costate::OWN_T2 * n, m, &spec.b2);

    let mut b_bar = DMatrix::zeros(COSTATE_BLOCKS * n, COSTATE_BLOCKS * n);
    {
        use costate::*;
        let put = |mat: &mut DMatrix<f64>, row: usize, col: usize, block: DMatrix<f64>| {
            set_block(mat, row * n, col * n, &block);
        };
        put(&mut b_bar, OWN_T1, OWN_T1, -&a1t);
        put(&mut b_bar, OWN_T1, AGG_T1_BY_T1, f1t.scale(-p1));
        put(&mut b_bar, OWN_T1, AGG_T1_BY_T2, f2t.scale(-p2));

        put(&mut b_bar, AGG_T1_BY_T1, AGG_T1_BY_T1, -&a1t - f1t.scale(p1));
        put(&mut b_bar, AGG_T1_BY_T1, AGG_T1_BY_T2, f2t.scale(-p2));

        put(&mut b_bar, AGG_T1_BY_T2, AGG_T1_BY_T1, f1t.scale(-p1));
        put(&mut b_bar, AGG_T1_BY_T2, AGG_T1_BY_T2, -&a2t - f2t.scale(p2));

        put(&mut b_bar, MEMBER_T1, MEMBER_T1, -&a1t);
        put(&mut b_bar, MEMBER_T2_SEEN_T1, MEMBER_T2_SEEN_T1, -&a2t);

        put(&mut b_bar, OWN_T2, OWN_T2, -&a2t);
        put(&mut b_bar, OWN_T2, AGG_T2_BY_T2, f2t.scale(-p2));
        put(&mut b_bar, OWN_T2, AGG_T2_BY_T1, f1t.scale(-p1));

        put(&mut b_bar, AGG_T2_BY_T2, AGG_T2_BY_T2, -&a2t - f2t.scale(p2));
        put(&mut b_bar, AGG_T2_BY_T2, AGG_T2_BY_T1, f1t.scale(-p1));

        put(&mut b_bar, AGG_T2_BY_T1, AGG_T2_BY_T2, f2t.scale(-p2));
        put(&mut b_bar, AGG_T2_BY_T1, AGG_T2_BY_T1, -&a1t - f1t.scale(p1));

        put(&mut b_bar, MEMBER_T2, MEMBER_T2, -&a2t);
        put(&mut b_bar, MEMBER_T1_SEEN_T2, MEMBER_T1_SEEN_T2, -&a1t);
    }

    // Mean-state coupling. Rows 0-2 carry the team-1 cost gradients against
    // (E x_i, E x_j), rows 5-7 the team-2 ones; member-adjoint rows are free
    // of mean-field terms.
    let mut f_til = DMatrix::zeros(COSTATE_BLOCKS * n, 2 * n);
    {
        use costate::*;
        let row_t1 = [
            (&q1g1 + &g1tq1 - g1tq1g1.scale(p1) - g2tq2g2.scale(al * p2)).scale(p1),
            (&q1g1 + g2tq2.scale(al) - g1tq1g1.scale(p1) - g2tq2g2.scale(al * p2)).scale(p2),
        ];
        let row_t1_cross = [
            (&g1tq1 + q2g2.scale(al) - g1tq1g1.scale(p1) - g2tq2g2.scale(al * p2)).scale(p1),
            (q2g2.scale(al) + g2tq2.scale(al) - g1tq1g1.scale(p1) - g2tq2g2.scale(al * p2)).scale(p2),
        ];
        let row_t2 = [
            (&q2g2 + g1tq1.scale(be) - g1tq1g1.scale(be * p1) - g2tq2g2.scale(p2)).scale(p1),
            (&q2g2 + &g2tq2 - g1tq1g1.scale(be * p1) - g2tq2g2.scale(p2)).scale(p2),
        ];
        let row_t2_cross = [
            (q1g1.scale(be) + g1tq1.scale(be) - g1tq1g1.scale(p1) - g2tq2g2.scale(p2)).scale(p1),
            (q1g1.scale(be) + &g2tq2 - g1tq1g1.scale(p1) - g2tq2g2.scale(p2)).scale(p2),
        ];
        for row in [OWN_T1, AGG_T1_BY_T1] {
            set_block(&mut f_til, row * n, 0, &row_t1[0]);
            set_block(&mut f_til, row * n, n, &row_t1[1]);
        }
        set_block(&mut f_til, AGG_T1_BY_T2 * n, 0, &row_t1_cross[0]);
        set_block(&mut f_til, AGG_T1_BY_T2 * n, n, &row_t1_cross[1]);
        for row in [OWN_T2, AGG_T2_BY_T2] {
            set_block(&mut f_til, row * n, 0, &row_t2[0]);
            set_block(&mut f_til, row * n, n, &row_t2[1]);
        }
        set_block(&mut f_til, AGG_T2_BY_T1 * n, 0, &row_t2_cross[0]);
        set_block(&mut f_til, AGG_T2_BY_T1 * n, n, &row_t2_cross[1]);
    }

    // Mean-costate coupling: the costate drifts of rows 0-2 load the
    // expected member adjoints of both teams, rows 5-7 the hat-system ones.
    let mut h_til = DMatrix::zeros(COSTATE_BLOCKS * n, COSTATE_BLOCKS * n);
    {
        use costate::*;
        for row in [OWN_T1, AGG_T1_BY_T1, AGG_T1_BY_T2] {
            set_block(&mut h_til, row * n, MEMBER_T1 * n, &f1t.scale(-p1));
            set_block(&mut h_til, row * n, MEMBER_T2_SEEN_T1 * n, &f2t.scale(-p2));
        }
        for row in [OWN_T2, AGG_T2_BY_T2, AGG_T2_BY_T1] {
            set_block(&mut h_til, row * n, MEMBER_T2 * n, &f2t.scale(-p2));
            set_block(&mut h_til, row * n, MEMBER_T1_SEEN_T2 * n, &f1t.scale(-p1));
        }
    }

    let zero_n = PiecewiseConst::constant(nalgebra::DVector::zeros(n));
    let sigma1 = spec.sigma1.stack(&zero_n);
    let sigma2 = zero_n.stack(&spec.sigma2);

    CcMatrices {
        n,
        m,
        pi1: p1,
        pi2: p2,
        a,
        b,
        f,
        r,
        a_bar,
        b_til,
        b_bar,
        f_til,
        h_til,
        sigma1,
        sigma2,
    }
}

impl CcMatrices {
    /// State dimension of the representative pair (2n).
    pub fn x_dim(&self) -> usize {
        2 * self.n
    }

    /// Costate dimension (10n).
    pub fn y_dim(&self) -> usize {
        COSTATE_BLOCKS * self.n
    }

    /// B R^{-1} Btil^T, the 2n x 10n control-elimination kernel shared by
    /// the fundamental matrices.
    pub fn control_kernel(&self) -> Result<DMatrix<f64>, CcError> {
        let r_inv = self.r.clone().lu().try_inverse().ok_or(CcError::SingularControlWeight)?;
        Ok(&self.b * r_inv * self.b_til.transpose())
    }

    /// Scale of the assembled coefficients (largest absolute entry over all
    /// blocks); used to normalize residual tolerances.
    pub fn coefficient_scale(&self) -> f64 {
        [
            &self.a, &self.b, &self.f, &self.r, &self.a_bar, &self.b_til, &self.b_bar, &self.f_til,
            &self.h_til,
        ]
        .iter()
        .map(|m| m.amax())
        .fold(0.0f64, f64::max)
    }

    /// Debug dump of every assembled block, keyed by block name, for
    /// golden-file comparisons.
    pub fn dump_json(&self) -> serde_json::Value {
        use crate::model::matrix_rows;
        serde_json::json!({
            "n": self.n,
            "m": self.m,
            "pi": [self.pi1, self.pi2],
            "a": matrix_rows(&self.a),
            "b": matrix_rows(&self.b),
            "f": matrix_rows(&self.f),
            "r": matrix_rows(&self.r),
            "a_bar": matrix_rows(&self.a_bar),
            "b_til": matrix_rows(&self.b_til),
            "b_bar": matrix_rows(&self.b_bar),
            "f_til": matrix_rows(&self.f_til),
            "h_til": matrix_rows(&self.h_til),
            "sigma1": self.sigma1.knots().iter().map(|(t, v)| {
                serde_json::json!({"t": t, "value": v.iter().cloned().collect::<Vec<_>>()})
            }).collect::<Vec<_>>(),
            "sigma2": self.sigma2.knots().iter().map(|(t, v)| {
                serde_json::json!({"t": t, "value": v.iter().cloned().collect::<Vec<_>>()})
            }).collect::<Vec<_>>(),
        })
    }
}

/// Builds the state-dependent fundamental matrix for the second Riccati
/// equation once the first one is solved.
#[derive(Debug, Clone)]
pub struct PhiBuilder {
    a: DMatrix<f64>,
    f: DMatrix<f64>,
    b_bar: DMatrix<f64>,
    f_til: DMatrix<f64>,
    h_til: DMatrix<f64>,
    /// B R^{-1} Btil^T.
    kernel: DMatrix<f64>,
    n: usize,
}

impl PhiBuilder {
    /// Phi(P) = [[A - S P, S], [-(P F - Ftil - Htil P), Bbar + P S]] with
    /// S = B R^{-1} Btil^T; 12n x 12n.
    pub fn at(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let xd = 2 * self.n;
        let yd = COSTATE_BLOCKS * self.n;
        let mut phi = DMatrix::zeros(xd + yd, xd + yd);
        set_block(&mut phi, 0, 0, &(&self.a - &self.kernel * p));
        set_block(&mut phi, 0, xd, &self.kernel);
        let forcing = p * &self.f - &self.f_til - &self.h_til * p;
        set_block(&mut phi, xd, 0, &(-forcing));
        set_block(&mut phi, xd, xd, &(&self.b_bar + p * &self.kernel));
        phi
    }
}

/// The constant fundamental matrix Psi of the first Riccati equation and a
/// builder for the P-dependent one of the second.
///
/// Psi = [[A + F, -B R^{-1} Btil^T], [Abar + Ftil, Htil + Bbar]]; 12n x 12n.
pub fn assemble_hamiltonian(cc: &CcMatrices) -> Result<(DMatrix<f64>, PhiBuilder), CcError> {
    let kernel = cc.control_kernel()?;
    let xd = cc.x_dim();
    let yd = cc.y_dim();
    let mut psi = DMatrix::zeros(xd + yd, xd + yd);
    set_block(&mut psi, 0, 0, &(&cc.a + &cc.f));
    set_block(&mut psi, 0, xd, &(-&kernel));
    set_block(&mut psi, xd, 0, &(&cc.a_bar + &cc.f_til));
    set_block(&mut psi, xd, xd, &(&cc.h_til + &cc.b_bar));
    let builder = PhiBuilder {
        a: cc.a.clone(),
        f: cc.f.clone(),
        b_bar: cc.b_bar.clone(),
        f_til: cc.f_til.clone(),
        h_til: cc.h_til.clone(),
        kernel,
        n: cc.n,
    };
    Ok((psi, builder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn mean_field_drift_block_layout() {
        let mut spec = presets::scalar_decoupled();
        spec.f1 = DMatrix::from_element(1, 1, 3.0);
        spec.f2 = DMatrix::from_element(1, 1, 3.0);
        let cc = assemble(&spec);
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, 1.5, 1.5, 1.5]);
        assert_relative_eq!(cc.f, expected, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_costs_zero_the_mean_couplings() {
        // Every entry of f, f_til and h_til carries an F or Gamma factor.
        let spec = presets::scalar_decoupled();
        let cc = assemble(&spec);
        assert_eq!(cc.f.amax(), 0.0);
        assert_eq!(cc.f_til.amax(), 0.0);
        assert_eq!(cc.h_til.amax(), 0.0);
    }

    #[test]
    fn state_cost_rows_of_a_bar() {
        let mut spec = presets::coop();
        let q = 2.5;
        spec.q1 = DMatrix::from_element(1, 1, q);
        spec.q2 = DMatrix::from_element(1, 1, q);
        spec.alpha = 0.7;
        spec.beta = -0.4;
        let cc = assemble(&spec);
        assert_relative_eq!(cc.a_bar[(costate::OWN_T1, 0)], -q);
        assert_relative_eq!(cc.a_bar[(costate::MEMBER_T1, 0)], -q);
        assert_relative_eq!(cc.a_bar[(costate::MEMBER_T2_SEEN_T1, 1)], -spec.alpha * q);
        assert_relative_eq!(cc.a_bar[(costate::MEMBER_T1_SEEN_T2, 0)], -spec.beta * q);
    }

    /// Walks every block position of the assembled system against an
    /// independently transcribed layout table (scalar coefficients so block
    /// positions and entries coincide).
    #[test]
    fn dimension_audit_against_layout_table() {
        let mut spec = presets::coop();
        spec.a1 = DMatrix::from_element(1, 1, 0.3);
        spec.a2 = DMatrix::from_element(1, 1, -0.6);
        spec.b1 = DMatrix::from_element(1, 1, 1.1);
        spec.b2 = DMatrix::from_element(1, 1, 0.9);
        spec.f1 = DMatrix::from_element(1, 1, 0.25);
        spec.f2 = DMatrix::from_element(1, 1, -0.15);
        spec.gamma1 = DMatrix::from_element(1, 1, 0.5);
        spec.gamma2 = DMatrix::from_element(1, 1, -0.35);
        spec.q1 = DMatrix::from_element(1, 1, 1.2);
        spec.q2 = DMatrix::from_element(1, 1, 0.8);
        spec.r1 = DMatrix::from_element(1, 1, 1.5);
        spec.r2 = DMatrix::from_element(1, 1, 2.0);
        spec.alpha = 0.6;
        spec.beta = -0.8;
        spec.pi1 = 0.3;
        spec.pi2 = 0.7;
        let (a1, a2) = (0.3, -0.6);
        let (f1, f2) = (0.25, -0.15);
        let (g1, g2) = (0.5, -0.35);
        let (q1, q2) = (1.2, 0.8);
        let (al, be) = (0.6, -0.8);
        let (p1, p2) = (0.3, 0.7);

        let cc = assemble(&spec);

        assert_eq!(cc.a.shape(), (2, 2));
        assert_eq!(cc.b.shape(), (2, 2));
        assert_eq!(cc.f.shape(), (2, 2));
        assert_eq!(cc.r.shape(), (2, 2));
        assert_eq!(cc.a_bar.shape(), (10, 2));
        assert_eq!(cc.b_til.shape(), (10, 2));
        assert_eq!(cc.b_bar.shape(), (10, 10));
        assert_eq!(cc.f_til.shape(), (10, 2));
        assert_eq!(cc.h_til.shape(), (10, 10));

        let mut a_bar = DMatrix::zeros(10, 2);
        for (r, c, v) in [
            (0, 0, -q1),
            (3, 0, -q1),
            (4, 1, -al * q2),
            (5, 1, -q2),
            (8, 1, -q2),
            (9, 0, -be * q1),
        ] {
            a_bar[(r, c)] = v;
        }
        assert_relative_eq!(cc.a_bar, a_bar, epsilon = 1e-14);

        let mut b_til = DMatrix::zeros(10, 2);
        b_til[(0, 0)] = 1.1;
        b_til[(5, 1)] = 0.9;
        assert_relative_eq!(cc.b_til, b_til, epsilon = 1e-14);

        let mut b_bar = DMatrix::zeros(10, 10);
        for (r, c, v) in [
            (0, 0, -a1),
            (0, 1, -p1 * f1),
            (0, 2, -p2 * f2),
            (1, 1, -a1 - p1 * f1),
            (1, 2, -p2 * f2),
            (2, 1, -p1 * f1),
            (2, 2, -a2 - p2 * f2),
            (3, 3, -a1),
            (4, 4, -a2),
            (5, 5, -a2),
            (5, 6, -p2 * f2),
            (5, 7, -p1 * f1),
            (6, 6, -a2 - p2 * f2),
            (6, 7, -p1 * f1),
            (7, 6, -p2 * f2),
            (7, 7, -a1 - p1 * f1),
            (8, 8, -a2),
            (9, 9, -a1),
        ] {
            b_bar[(r, c)] = v;
        }
        assert_relative_eq!(cc.b_bar, b_bar, epsilon = 1e-14);

        let mut h_til = DMatrix::zeros(10, 10);
        for r in [0, 1, 2] {
            h_til[(r, 3)] = -p1 * f1;
            h_til[(r, 4)] = -p2 * f2;
        }
        for r in [5, 6, 7] {
            h_til[(r, 8)] = -p2 * f2;
            h_til[(r, 9)] = -p1 * f1;
        }
        assert_relative_eq!(cc.h_til, h_til, epsilon = 1e-14);

        let gq1 = g1 * q1; // Gamma1^T Q1 == Q1 Gamma1 in the scalar case
        let gq2 = g2 * q2;
        let gg1 = g1 * q1 * g1;
        let gg2 = g2 * q2 * g2;
        let mut f_til = DMatrix::zeros(10, 2);
        let t1 = [
            p1 * (2.0 * gq1 - p1 * gg1 - al * p2 * gg2),
            p2 * (gq1 + al * gq2 - p1 * gg1 - al * p2 * gg2),
        ];
        let t1c = [
            p1 * (gq1 + al * gq2 - p1 * gg1 - al * p2 * gg2),
            p2 * (2.0 * al * gq2 - p1 * gg1 - al * p2 * gg2),
        ];
        let t2 = [
            p1 * (gq2 + be * gq1 - be * p1 * gg1 - p2 * gg2),
            p2 * (2.0 * gq2 - be * p1 * gg1 - p2 * gg2),
        ];
        let t2c = [
            p1 * (2.0 * be * gq1 - p1 * gg1 - p2 * gg2),
            p2 * (be * gq1 + gq2 - p1 * gg1 - p2 * gg2),
        ];
        for r in [0, 1] {
            f_til[(r, 0)] = t1[0];
            f_til[(r, 1)] = t1[1];
        }
        f_til[(2, 0)] = t1c[0];
        f_til[(2, 1)] = t1c[1];
        for r in [5, 6] {
            f_til[(r, 0)] = t2[0];
            f_til[(r, 1)] = t2[1];
        }
        f_til[(7, 0)] = t2c[0];
        f_til[(7, 1)] = t2c[1];
        assert_relative_eq!(cc.f_til, f_til, epsilon = 1e-14);
    }

    #[test]
    fn assembly_is_deterministic() {
        let spec = presets::coop();
        let a = assemble(&spec);
        let b = assemble(&spec);
        assert_eq!(a, b);
    }

    #[test]
    fn cost_scaling_is_linear_in_q() {
        let mut spec = presets::coop();
        spec.beta = -0.3;
        let base = assemble(&spec);
        for c in [0.5, 2.0, 17.0] {
            let mut scaled = spec.clone();
            scaled.q1 = spec.q1.scale(c);
            scaled.q2 = spec.q2.scale(c);
            let cc = assemble(&scaled);
            assert_relative_eq!(cc.a_bar, base.a_bar.scale(c), epsilon = 1e-12 * c);
            assert_relative_eq!(cc.f_til, base.f_til.scale(c), epsilon = 1e-12 * c);
        }
    }

    #[test]
    fn hamiltonian_of_zero_coefficients_vanishes() {
        let mut spec = presets::scalar_decoupled();
        spec.a1 = DMatrix::zeros(1, 1);
        spec.a2 = DMatrix::zeros(1, 1);
        spec.b1 = DMatrix::zeros(1, 1);
        spec.b2 = DMatrix::zeros(1, 1);
        spec.q1 = DMatrix::zeros(1, 1);
        spec.q2 = DMatrix::zeros(1, 1);
        // R stays identity so the control weight is invertible.
        let cc = assemble(&spec);
        let (psi, _) = assemble_hamiltonian(&cc).unwrap();
        assert_eq!(psi.shape(), (12, 12));
        assert_eq!(psi.amax(), 0.0);
    }

    #[test]
    fn hamiltonian_control_block_placement() {
        // Scalar coefficients A = 0, B = 1, R = 1: the top-right block of
        // Psi is -B R^-1 Btil^T with a -1 against costate blocks 0 and 5.
        let spec = presets::scalar_decoupled();
        let cc = assemble(&spec);
        let (psi, _) = assemble_hamiltonian(&cc).unwrap();
        let mut expected = DMatrix::zeros(2, 10);
        expected[(0, 0)] = -1.0;
        expected[(1, 5)] = -1.0;
        assert_relative_eq!(psi.view((0, 2), (2, 10)).into_owned(), expected, epsilon = 1e-14);
        // Bottom-right equals Htil + Bbar (all zero here since A = F = 0).
        assert_eq!(psi.view((2, 2), (10, 10)).amax(), 0.0);
    }

    #[test]
    fn phi_builder_at_zero_p() {
        let spec = presets::coop();
        let cc = assemble(&spec);
        let (_, phi) = assemble_hamiltonian(&cc).unwrap();
        let p0 = DMatrix::zeros(cc.y_dim(), cc.x_dim());
        let phi0 = phi.at(&p0);
        let xd = cc.x_dim();
        assert_relative_eq!(phi0.view((0, 0), (xd, xd)).into_owned(), cc.a, epsilon = 1e-14);
        assert_relative_eq!(
            phi0.view((0, xd), (xd, cc.y_dim())).into_owned(),
            cc.control_kernel().unwrap(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            phi0.view((xd, 0), (cc.y_dim(), xd)).into_owned(),
            cc.f_til,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            phi0.view((xd, xd), (cc.y_dim(), cc.y_dim())).into_owned(),
            cc.b_bar,
            epsilon = 1e-14
        );
    }

    #[test]
    fn stacked_noise_columns() {
        let mut spec = presets::scalar_decoupled();
        spec.sigma1 = PiecewiseConst::constant(DVector::from_vec(vec![0.3]));
        spec.sigma2 = PiecewiseConst::from_knots(vec![
            (0.0, DVector::from_vec(vec![0.1])),
            (0.5, DVector::from_vec(vec![0.7])),
        ])
        .unwrap();
        let cc = assemble(&spec);
        assert_eq!(cc.sigma1.value(0.9).as_slice(), &[0.3, 0.0]);
        assert_eq!(cc.sigma2.value(0.0).as_slice(), &[0.0, 0.1]);
        assert_eq!(cc.sigma2.value(0.6).as_slice(), &[0.0, 0.7]);
    }
}
