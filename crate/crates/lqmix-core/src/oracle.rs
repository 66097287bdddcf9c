//! Exact finite-N best-response oracle and cost evaluation.
//!
//! One team is frozen at its decentralized feedback law; the other is
//! optimized over full-information controls by backward affine-LQ dynamic
//! programming on the stacked N*n-dimensional state. The discrete problem
//! is exactly the simulator's: the same Euler one-step map, the same
//! trapezoid/rectangle cost quadrature and the same gain samples, so
//! oracle values and simulated costs share their discretization bias and
//! the measured optimality gaps are nonnegative by construction.
//!
//! The oracle optimizes over a *larger* class (full information) than the
//! decentralized strategies it is compared against, so the reported
//! per-capita gaps are conservative upper bounds for the decentralized
//! optimality gap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::TimeGrid;
use crate::model::{PopulationSpec, ProblemSpec};
use crate::sim::{PartnerMap, SampledGains, Team};
use crate::stats::{kendall_tau_vs_index, loglog_slope, SlopeFit};
use crate::strategy::StrategyGains;

/// Stacked state dimension ceiling; the oracle is a desk-scale instrument.
pub const MAX_STACKED_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("stacked dimension {nn} exceeds the oracle ceiling {max}")]
    DimensionOverflow { nn: usize, max: usize },
    #[error("gains horizon {got} does not match specification horizon {want}")]
    GridMismatch { got: f64, want: f64 },
    #[error("singular control-weight factor in the backward recursion")]
    SingularFactor,
    #[error("invalid oracle request: {0}")]
    Config(String),
}

/// Shared stacked-system ingredients: constant drift and control maps,
/// per-team state weights of the running cost, and the sampled feedback of
/// both teams.
pub struct StackedParts {
    pub n: usize,
    pub m: usize,
    pub pop: PopulationSpec,
    pub grid: TimeGrid,
    /// blockdiag(A_team) plus the F_team / N empirical-average coupling.
    base_a: DMatrix<f64>,
    /// Control placements per team, Nn x (N_k m).
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    /// State weights: sum over team members of (E_a - Gamma Avg)^T Q (…).
    qbar1: DMatrix<f64>,
    qbar2: DMatrix<f64>,
    /// blockdiag R per team.
    r1big: DMatrix<f64>,
    r2big: DMatrix<f64>,
    alpha: f64,
    beta: f64,
    sampled: SampledGains,
    partners: PartnerMap,
    /// Noise loadings per step start, one n-vector per agent.
    sigma1: Vec<DVector<f64>>,
    sigma2: Vec<DVector<f64>>,
    init_mean: DVector<f64>,
    init_cov: DMatrix<f64>,
}

pub fn build_parts(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    pop: PopulationSpec,
    substeps: usize,
) -> Result<StackedParts, OracleError> {
    if (gains.grid.horizon - spec.horizon).abs() > 1e-12 {
        return Err(OracleError::GridMismatch { got: gains.grid.horizon, want: spec.horizon });
    }
    let n = spec.n;
    let m = spec.m;
    let total = pop.total();
    let nn = total * n;
    if nn > MAX_STACKED_DIM {
        return Err(OracleError::DimensionOverflow { nn, max: MAX_STACKED_DIM });
    }
    let sampled = SampledGains::from_gains(gains, substeps);
    let grid = sampled.grid;

    let mut base_a = DMatrix::zeros(nn, nn);
    for a in 0..total {
        let (am, fm) = if a < pop.n1 { (&spec.a1, &spec.f1) } else { (&spec.a2, &spec.f2) };
        for r in 0..n {
            for c in 0..n {
                base_a[(a * n + r, a * n + c)] += am[(r, c)];
            }
        }
        for b in 0..total {
            for r in 0..n {
                for c in 0..n {
                    base_a[(a * n + r, b * n + c)] += fm[(r, c)] / total as f64;
                }
            }
        }
    }

    let mut b1 = DMatrix::zeros(nn, pop.n1 * m);
    for i in 0..pop.n1 {
        for r in 0..n {
            for c in 0..m {
                b1[(i * n + r, i * m + c)] = spec.b1[(r, c)];
            }
        }
    }
    let mut b2 = DMatrix::zeros(nn, pop.n2 * m);
    for j in 0..pop.n2 {
        for r in 0..n {
            for c in 0..m {
                b2[((pop.n1 + j) * n + r, j * m + c)] = spec.b2[(r, c)];
            }
        }
    }

    // M_a = E_a - Gamma_team Avg; qbar_team = sum over the team of
    // M_a^T Q_team M_a.
    let team_weight = |members: std::ops::Range<usize>, gamma: &DMatrix<f64>, q: &DMatrix<f64>| {
        let mut qbar = DMatrix::zeros(nn, nn);
        for a in members {
            let mut ma = DMatrix::zeros(n, nn);
            for r in 0..n {
                ma[(r, a * n + r)] += 1.0;
                for b in 0..total {
                    for c in 0..n {
                        ma[(r, b * n + c)] -= gamma[(r, c)] / total as f64;
                    }
                }
            }
            qbar += ma.transpose() * q * ma;
        }
        qbar
    };
    let qbar1 = team_weight(0..pop.n1, &spec.gamma1, &spec.q1);
    let qbar2 = team_weight(pop.n1..total, &spec.gamma2, &spec.q2);

    let blockdiag = |count: usize, block: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(count * m, count * m);
        for a in 0..count {
            for r in 0..m {
                for c in 0..m {
                    out[(a * m + r, a * m + c)] = block[(r, c)];
                }
            }
        }
        out
    };

    let sigma1: Vec<DVector<f64>> = (0..grid.steps).map(|k| spec.sigma1.value(grid.time(k)).clone()).collect();
    let sigma2: Vec<DVector<f64>> = (0..grid.steps).map(|k| spec.sigma2.value(grid.time(k)).clone()).collect();

    let mut init_mean = DVector::zeros(nn);
    let mut init_cov = DMatrix::zeros(nn, nn);
    for a in 0..total {
        let law = if a < pop.n1 { &spec.init1 } else { &spec.init2 };
        init_mean.rows_mut(a * n, n).copy_from(&law.mean);
        init_cov.view_mut((a * n, a * n), (n, n)).copy_from(&law.cov);
    }

    Ok(StackedParts {
        n,
        m,
        pop,
        grid,
        base_a,
        b1,
        b2,
        qbar1,
        qbar2,
        r1big: blockdiag(pop.n1, &spec.r1),
        r2big: blockdiag(pop.n2, &spec.r2),
        alpha: spec.alpha,
        beta: spec.beta,
        sampled,
        partners: PartnerMap::round_robin(pop),
        sigma1,
        sigma2,
        init_mean,
        init_cov,
    })
}

impl StackedParts {
    /// Decentralized feedback of a whole team at step k as an affine map
    /// u_team = L X + l. Mirrors the agentwise law exactly: agent blocks of
    /// (Theta1 - Theta2) against (own, partner) states plus the Theta2 E[x]
    /// offset.
    pub fn team_feedback(&self, team: Team, k: usize) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let m = self.m;
        let th1 = &self.sampled.theta1[k];
        let th2 = &self.sampled.theta2[k];
        let exk = &self.sampled.ex[k];
        let (count, row0) = match team {
            Team::One => (self.pop.n1, 0),
            Team::Two => (self.pop.n2, m),
        };
        let mut l_mat = DMatrix::zeros(count * m, self.pop.total() * n);
        let mut l_vec = DVector::zeros(count * m);
        for a in 0..count {
            let (g1, g2) = match team {
                Team::One => (a, self.pop.n1 + self.partners.t1_partner[a]),
                Team::Two => (self.partners.t2_partner[a], self.pop.n1 + a),
            };
            for r in 0..m {
                for c in 0..n {
                    l_mat[(a * m + r, g1 * n + c)] += th1[(row0 + r, c)] - th2[(row0 + r, c)];
                    l_mat[(a * m + r, g2 * n + c)] += th1[(row0 + r, n + c)] - th2[(row0 + r, n + c)];
                }
                let mut off = 0.0;
                for c in 0..2 * n {
                    off += th2[(row0 + r, c)] * exk[c];
                }
                l_vec[a * m + r] = off;
            }
        }
        (l_mat, l_vec)
    }

    fn control_map(&self, team: Team) -> &DMatrix<f64> {
        match team {
            Team::One => &self.b1,
            Team::Two => &self.b2,
        }
    }

    fn control_weight(&self, team: Team) -> &DMatrix<f64> {
        match team {
            Team::One => &self.r1big,
            Team::Two => &self.r2big,
        }
    }

    /// Add the step-k process-noise covariance dt * blockdiag(sigma sigma^T)
    /// into `cov`.
    fn add_noise_cov(&self, k: usize, cov: &mut DMatrix<f64>) {
        let dt = self.grid.dt();
        let n = self.n;
        for a in 0..self.pop.total() {
            let s = if a < self.pop.n1 { &self.sigma1[k] } else { &self.sigma2[k] };
            for r in 0..n {
                for c in 0..n {
                    cov[(a * n + r, a * n + c)] += dt * s[r] * s[c];
                }
            }
        }
    }

    /// tr(Pi W_k) for the additive-noise value accumulation.
    fn noise_trace(&self, k: usize, pi: &DMatrix<f64>) -> f64 {
        let dt = self.grid.dt();
        let n = self.n;
        let mut acc = 0.0;
        for a in 0..self.pop.total() {
            let s = if a < self.pop.n1 { &self.sigma1[k] } else { &self.sigma2[k] };
            for r in 0..n {
                for c in 0..n {
                    acc += s[r] * pi[(a * n + r, a * n + c)] * s[c];
                }
            }
        }
        dt * acc
    }

}

/// Time-varying affine-quadratic problem for one optimizing team, the
/// other frozen at its decentralized law.
pub struct StackedLq {
    pub parts: StackedParts,
    pub team: Team,
}

/// Build the stacked problem from team `team`'s viewpoint (the other team
/// is folded into the drift as a frozen affine feedback).
pub fn build_stacked(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    pop: PopulationSpec,
    team: Team,
    substeps: usize,
) -> Result<StackedLq, OracleError> {
    Ok(StackedLq { parts: build_parts(spec, gains, pop, substeps)?, team })
}

impl StackedLq {
    fn frozen_team(&self) -> Team {
        match self.team {
            Team::One => Team::Two,
            Team::Two => Team::One,
        }
    }

    /// Mixed-cost ingredients of the optimizing team: state weight, frozen
    /// team weight (alpha or beta) and the team weights in the objective.
    fn objective(&self) -> (DMatrix<f64>, f64) {
        let p = &self.parts;
        match self.team {
            Team::One => (&p.qbar1 + p.qbar2.scale(p.alpha), p.alpha),
            Team::Two => (&p.qbar2 + p.qbar1.scale(p.beta), p.beta),
        }
    }

    /// Euler one-step map with the frozen team folded in:
    /// X_{k+1} = G_k X + H u + c_k (+ noise).
    fn one_step(&self, k: usize) -> (DMatrix<f64>, DVector<f64>) {
        let p = &self.parts;
        let dt = p.grid.dt();
        let frozen = self.frozen_team();
        let (l_mat, l_vec) = p.team_feedback(frozen, k);
        let bf = p.control_map(frozen);
        let nn = p.base_a.nrows();
        let g = DMatrix::identity(nn, nn) + (&p.base_a + bf * &l_mat).scale(dt);
        let c = (bf * &l_vec).scale(dt);
        (g, c)
    }

    /// Stage cost pieces at step k (everything except the free-control
    /// term): (1/2) X^T Qk X + qk^T X + kk.
    fn stage_cost(&self, k: usize) -> (DMatrix<f64>, DVector<f64>, f64) {
        let p = &self.parts;
        let dt = p.grid.dt();
        let (qbar, w_frozen) = self.objective();
        let w_state = crate::sim::state_weight(k, p.grid.steps, dt);
        let frozen = self.frozen_team();
        let (l_mat, l_vec) = p.team_feedback(frozen, k);
        let r_frozen = p.control_weight(frozen);
        let rl = r_frozen * &l_mat;
        let q = qbar.scale(w_state) + (l_mat.transpose() * &rl).scale(dt * w_frozen);
        let qlin = (l_mat.transpose() * (r_frozen * &l_vec)).scale(dt * w_frozen);
        let kconst = 0.5 * dt * w_frozen * (&l_vec.transpose() * r_frozen * &l_vec)[(0, 0)];
        (q, qlin, kconst)
    }

    fn terminal_cost(&self) -> DMatrix<f64> {
        let p = &self.parts;
        let (qbar, _) = self.objective();
        qbar.scale(crate::sim::state_weight(p.grid.steps, p.grid.steps, p.grid.dt()))
    }
}

/// Optimal value and (optionally) the feedback tables of the backward
/// affine-LQ recursion.
pub struct BestResponse {
    pub value: f64,
    /// Per-step optimal feedback u* = K X + d, present when requested.
    pub feedback: Option<Vec<(DMatrix<f64>, DVector<f64>)>>,
}

/// Exact expected optimal cost of the stacked problem under the Gaussian
/// initial law (additive noise enters through trace terms).
pub fn best_response_value(lq: &StackedLq, keep_feedback: bool) -> Result<BestResponse, OracleError> {
    let p = &lq.parts;
    let steps = p.grid.steps;
    let dt = p.grid.dt();
    let h = p.control_map(lq.team).scale(dt);
    let r_free = p.control_weight(lq.team).scale(dt);

    let mut pi = lq.terminal_cost();
    let mut r_vec = DVector::zeros(p.base_a.nrows());
    let mut s = 0.0f64;
    let mut feedback = if keep_feedback { Some(vec![None; steps]) } else { None };

    for k in (0..steps).rev() {
        let (g, c) = lq.one_step(k);
        let (q, qlin, kconst) = lq.stage_cost(k);
        let hp = h.transpose() * &pi; // (free) x nn
        let lambda = &r_free + &hp * &h;
        let lambda_lu = lambda.lu();
        let gvec = h.transpose() * (&pi * &c + &r_vec);
        let k_gain = lambda_lu
            .solve(&(-(&hp * &g)))
            .ok_or(OracleError::SingularFactor)?;
        let d_gain = lambda_lu.solve(&(-&gvec)).ok_or(OracleError::SingularFactor)?;

        let gt_pi = g.transpose() * &pi;
        let mut pi_new = &q + &gt_pi * &g + (&hp * &g).transpose() * &k_gain;
        pi_new = (&pi_new + pi_new.transpose()).scale(0.5);
        let r_new = &qlin + g.transpose() * (&pi * &c + &r_vec) + (&hp * &g).transpose() * &d_gain;
        let s_new = kconst
            + 0.5 * (&c.transpose() * &pi * &c)[(0, 0)]
            + r_vec.dot(&c)
            + s
            + 0.5 * p.noise_trace(k, &pi)
            + 0.5 * gvec.dot(&d_gain);

        if let Some(fb) = feedback.as_mut() {
            fb[k] = Some((k_gain, d_gain));
        }
        pi = pi_new;
        r_vec = r_new;
        s = s_new;
    }

    let mu = &p.init_mean;
    let value = 0.5 * ((&pi * &p.init_cov).trace() + (mu.transpose() * &pi * mu)[(0, 0)])
        + r_vec.dot(mu)
        + s;
    let feedback = feedback.map(|fb| fb.into_iter().map(Option::unwrap).collect());
    Ok(BestResponse { value, feedback })
}

/// Forward rollout of the optimal feedback from a deterministic start;
/// returns the open-loop control table of the optimizing team.
#[allow(clippy::needless_range_loop)]
pub fn optimal_open_loop(
    lq: &StackedLq,
    response: &BestResponse,
    x0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, OracleError> {
    let feedback = response
        .feedback
        .as_ref()
        .ok_or_else(|| OracleError::Config("best response was computed without feedback tables".into()))?;
    let p = &lq.parts;
    let h = p.control_map(lq.team).scale(p.grid.dt());
    let mut x = x0.clone();
    let mut controls = Vec::with_capacity(p.grid.steps);
    for k in 0..p.grid.steps {
        let (g, c) = lq.one_step(k);
        let (k_gain, d_gain) = &feedback[k];
        let u = k_gain * &x + d_gain;
        x = &g * &x + &h * &u + &c;
        controls.push(u);
    }
    Ok(controls)
}

/// Deterministic (noise-free) cost of a given open-loop control table for
/// the optimizing team, frozen opponents included. Exactly the discrete
/// objective the backward recursion minimizes (with zero noise).
pub fn rollout_cost(lq: &StackedLq, controls: &[DVector<f64>], x0: &DVector<f64>) -> f64 {
    let p = &lq.parts;
    assert_eq!(controls.len(), p.grid.steps, "one control per step");
    let dt = p.grid.dt();
    let h = p.control_map(lq.team).scale(dt);
    let r_free = p.control_weight(lq.team).scale(dt);
    let mut x = x0.clone();
    let mut cost = 0.0;
    for (k, u) in controls.iter().enumerate() {
        let (q, qlin, kconst) = lq.stage_cost(k);
        cost += 0.5 * (&x.transpose() * &q * &x)[(0, 0)] + qlin.dot(&x) + kconst;
        cost += 0.5 * (&u.transpose() * &r_free * u)[(0, 0)];
        let (g, c) = lq.one_step(k);
        x = &g * &x + &h * u + &c;
    }
    let qm = lq.terminal_cost();
    cost + 0.5 * (&x.transpose() * &qm * &x)[(0, 0)]
}

/// Exact expected costs of the fully decentralized closed loop (both teams
/// on their feedback laws), by mean/covariance propagation through the
/// same discrete system.
#[derive(Debug, Clone, Copy)]
pub struct ExactCosts {
    pub j1_soc: f64,
    pub j2_soc: f64,
    pub jmix1: f64,
    pub jmix2: f64,
}

pub fn decentralized_cost_exact(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    pop: PopulationSpec,
    substeps: usize,
) -> Result<ExactCosts, OracleError> {
    let p = build_parts(spec, gains, pop, substeps)?;
    let steps = p.grid.steps;
    let dt = p.grid.dt();
    let nn = p.base_a.nrows();
    let mut mu = p.init_mean.clone();
    let mut cov = p.init_cov.clone();
    let mut j1 = 0.0f64;
    let mut j2 = 0.0f64;

    let quad_mean = |q: &DMatrix<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>| -> f64 {
        (q * cov).trace() + (mu.transpose() * q * mu)[(0, 0)]
    };

    for k in 0..=steps {
        let w = crate::sim::state_weight(k, steps, dt);
        j1 += 0.5 * w * quad_mean(&p.qbar1, &mu, &cov);
        j2 += 0.5 * w * quad_mean(&p.qbar2, &mu, &cov);
        if k == steps {
            break;
        }
        let (l1, o1) = p.team_feedback(Team::One, k);
        let (l2, o2) = p.team_feedback(Team::Two, k);
        // E ||u||^2_R for an affine u = L X + o.
        let udist1 = &l1 * &mu + &o1;
        let udist2 = &l2 * &mu + &o2;
        j1 += 0.5
            * dt
            * ((&l1 * &cov * l1.transpose() * &p.r1big).trace()
                + (udist1.transpose() * &p.r1big * &udist1)[(0, 0)]);
        j2 += 0.5
            * dt
            * ((&l2 * &cov * l2.transpose() * &p.r2big).trace()
                + (udist2.transpose() * &p.r2big * &udist2)[(0, 0)]);

        let g = DMatrix::identity(nn, nn)
            + (&p.base_a + &p.b1 * &l1 + &p.b2 * &l2).scale(dt);
        let c = (&p.b1 * &o1 + &p.b2 * &o2).scale(dt);
        mu = &g * &mu + &c;
        cov = &g * &cov * g.transpose();
        cov = (&cov + cov.transpose()).scale(0.5);
        p.add_noise_cov(k, &mut cov);
    }

    Ok(ExactCosts {
        j1_soc: j1,
        j2_soc: j2,
        jmix1: j1 + spec.alpha * j2,
        jmix2: j2 + spec.beta * j1,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GapRow {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub eps_n: f64,
    /// Per-capita decentralized mixed costs.
    pub jmix1_pc: f64,
    pub jmix2_pc: f64,
    /// Per-capita best-response values.
    pub oracle1_pc: f64,
    pub oracle2_pc: f64,
    /// Per-capita optimality gaps (decentralized minus oracle).
    pub gap1: f64,
    pub gap2: f64,
}

#[derive(Debug, Clone)]
pub struct GapStudy {
    pub rows: Vec<GapRow>,
    pub slope1: SlopeFit,
    pub slope2: SlopeFit,
    pub tau1: f64,
    pub tau2: f64,
}

/// Sweep N in `n_list` and measure the per-capita optimality gap of both
/// teams against the centralized best-response oracle.
pub fn optimality_gap_study(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    n_list: &[usize],
    substeps: usize,
) -> Result<GapStudy, OracleError> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &total in n_list {
        let pop = PopulationSpec::from_total(total, spec.pi1);
        let dec = decentralized_cost_exact(spec, gains, pop, substeps)?;
        let or1 = best_response_value(&build_stacked(spec, gains, pop, Team::One, substeps)?, false)?;
        let or2 = best_response_value(&build_stacked(spec, gains, pop, Team::Two, substeps)?, false)?;
        let (n1, n2) = (pop.n1 as f64, pop.n2 as f64);
        rows.push(GapRow {
            n: total,
            n1: pop.n1,
            n2: pop.n2,
            eps_n: pop.eps_n(spec.pi1, spec.pi2),
            jmix1_pc: dec.jmix1 / n1,
            jmix2_pc: dec.jmix2 / n2,
            oracle1_pc: or1.value / n1,
            oracle2_pc: or2.value / n2,
            gap1: (dec.jmix1 - or1.value) / n1,
            gap2: (dec.jmix2 - or2.value) / n2,
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let g1: Vec<f64> = rows.iter().map(|r| r.gap1.max(f64::MIN_POSITIVE)).collect();
    let g2: Vec<f64> = rows.iter().map(|r| r.gap2.max(f64::MIN_POSITIVE)).collect();
    let fit = |ys: &[f64]| {
        if ys.len() >= 2 {
            loglog_slope(&ns, ys)
        } else {
            SlopeFit { slope: f64::NAN, intercept: f64::NAN, stderr: f64::NAN }
        }
    };
    Ok(GapStudy {
        slope1: fit(&g1),
        slope2: fit(&g2),
        tau1: kendall_tau_vs_index(&g1),
        tau2: kendall_tau_vs_index(&g2),
        rows,
    })
}

/// Numerical shape of the map u -> J(u, frozen opponents) around the
/// oracle minimizer (deterministic problems only): third differences
/// vanish for an exactly quadratic map, the directional derivative at the
/// minimizer vanishes, and the second-difference coefficient is the
/// curvature along the direction.
#[derive(Debug, Clone, Copy)]
pub struct QuadReport {
    pub max_third_diff_rel: f64,
    pub max_stationarity_rel: f64,
    pub min_second_diff: f64,
}

pub fn quadraticity_check(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    pop: PopulationSpec,
    substeps: usize,
    directions: usize,
    seed: u64,
) -> Result<QuadReport, OracleError> {
    if spec.sigma1.knots().iter().any(|(_, v)| v.amax() > 0.0)
        || spec.sigma2.knots().iter().any(|(_, v)| v.amax() > 0.0)
        || !spec.init1.is_deterministic()
        || !spec.init2.is_deterministic()
    {
        return Err(OracleError::Config(
            "quadraticity check requires zero noise and deterministic initial states".into(),
        ));
    }
    let lq = build_stacked(spec, gains, pop, Team::One, substeps)?;
    let response = best_response_value(&lq, true)?;
    let x0 = lq.parts.init_mean.clone();
    let u_star = optimal_open_loop(&lq, &response, &x0)?;
    let f_star = rollout_cost(&lq, &u_star, &x0);

    let steps = lq.parts.grid.steps;
    let udim = lq.parts.pop.n1 * lq.parts.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = u_star.iter().map(|u| u.norm_squared()).sum::<f64>().sqrt();
    let eps = 0.05 * scale.max(1.0);
    let f_scale = f_star.abs().max(1.0);

    let mut report = QuadReport {
        max_third_diff_rel: 0.0,
        max_stationarity_rel: 0.0,
        min_second_diff: f64::INFINITY,
    };
    for _ in 0..directions {
        let mut dir: Vec<DVector<f64>> = (0..steps)
            .map(|_| DVector::from_fn(udim, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let norm: f64 = dir.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
        for d in &mut dir {
            *d /= norm;
        }
        let f_at = |s: f64| {
            let shifted: Vec<DVector<f64>> = u_star
                .iter()
                .zip(&dir)
                .map(|(u, d)| u + d.scale(s))
                .collect();
            rollout_cost(&lq, &shifted, &x0)
        };
        let (fm, f1, f2, f3) = (f_at(-eps), f_at(eps), f_at(2.0 * eps), f_at(3.0 * eps));
        let third = (f3 - 3.0 * f2 + 3.0 * f1 - f_star).abs();
        let deriv = (f1 - fm).abs() / (2.0 * eps);
        let second = (f1 + fm - 2.0 * f_star) / (eps * eps);
        report.max_third_diff_rel = report.max_third_diff_rel.max(third / f_scale);
        report.max_stationarity_rel = report.max_stationarity_rel.max(deriv / f_scale);
        report.min_second_diff = report.min_second_diff.min(second);
    }
    Ok(report)
}
