//! Euler-Maruyama simulation of the full N-agent weakly-coupled system.
//!
//! Dynamics use the realized empirical average x^(N) (with the empirical
//! fractions it embeds); only the control law touches the offline
//! mean-field objects. Agents act on their own state, one partner state
//! from the opposite team, and the precomputed expectation path: the
//! information pattern is enforced by construction.
//!
//! Discretization conventions, shared bit-for-bit with the exact oracle in
//! [`crate::oracle`]:
//! * one-step map X_{k+1} = X_k + dt (drift) + sigma dW, dW ~ N(0, dt)
//!   per agent per step (scalar noise, n-vector loading);
//! * state cost by the trapezoidal rule (weights dt/2 at the endpoints,
//!   dt inside), control cost by the left rectangle rule (controls are
//!   piecewise constant on simulation cells).
//!
//! Noise streams are keyed by (path, team, member index), so enlarging a
//! team extends the population without reshuffling existing agents' noise;
//! sweeps over N share randomness across sizes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::TimeGrid;
use crate::model::{PopulationSpec, ProblemSpec};
use crate::stats::{loglog_slope, mean, pairwise_sum, standard_error, SlopeFit};
use crate::strategy::StrategyGains;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite state at path {path}, step {step}")]
    NonFiniteState { path: usize, step: usize },
    #[error("gains horizon {got} does not match specification horizon {want}")]
    GridMismatch { got: f64, want: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Team {
    One,
    Two,
}

/// Fixed assignment of opposite-team partners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartnerMap {
    /// For each team-1 member i, the observed team-2 member index.
    pub t1_partner: Vec<usize>,
    /// For each team-2 member j, the observed team-1 member index.
    pub t2_partner: Vec<usize>,
}

impl PartnerMap {
    pub fn round_robin(pop: PopulationSpec) -> Self {
        Self {
            t1_partner: (0..pop.n1).map(|i| i % pop.n2).collect(),
            t2_partner: (0..pop.n2).map(|j| j % pop.n1).collect(),
        }
    }
}

/// Where the controls come from.
#[derive(Debug, Clone)]
pub enum ControlSource {
    /// Every agent runs the decentralized feedback law.
    Decentralized,
    /// One team's controls are read from a table (stacked team controls per
    /// simulation step); the other team stays decentralized.
    ExternalTable { team: Team, controls: Vec<DVector<f64>> },
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub pop: PopulationSpec,
    /// Simulation substeps per solver-grid cell (dt_sim = dt_solver / substeps).
    pub substeps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub control: ControlSource,
    /// Defaults to round-robin.
    pub partners: Option<PartnerMap>,
    /// Per global agent index (team, member) stream keys; defaults to the
    /// natural (team, within-team index) labels.
    pub stream_keys: Option<Vec<(u64, u64)>>,
    /// Store thinned per-agent trajectories (stride in steps).
    pub store_trajectories: Option<usize>,
}

impl SimulationConfig {
    pub fn new(pop: PopulationSpec, n_paths: usize, seed: u64) -> Self {
        Self {
            pop,
            substeps: 1,
            n_paths,
            seed,
            control: ControlSource::Decentralized,
            partners: None,
            stream_keys: None,
            store_trajectories: None,
        }
    }
}

/// splitmix64 finalizer; the stream-key mixer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_rng(master: u64, path: u64, team: u64, member: u64) -> ChaCha8Rng {
    let a = mix64(master ^ 0x9e37_79b9_7f4a_7c15);
    let b = mix64(a ^ mix64(path.wrapping_add(0x1000_0000_0000_0001)));
    let c = mix64(b ^ mix64(team.wrapping_add(0x2000_0000_0000_0003)));
    let d = mix64(c ^ mix64(member.wrapping_add(0x3000_0000_0000_0007)));
    let mut seed = [0u8; 32];
    for (w, chunk) in [d, mix64(d ^ 1), mix64(d ^ 2), mix64(d ^ 3)]
        .iter()
        .zip(seed.chunks_exact_mut(8))
    {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller on the half-open unit interval; one draw per call keeps
    // the per-stream draw count independent of usage patterns.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gains resampled onto the simulation grid by linear interpolation; the
/// single source of gain samples for both the simulator and the oracle.
#[derive(Debug, Clone)]
pub struct SampledGains {
    pub grid: TimeGrid,
    pub theta1: Vec<DMatrix<f64>>,
    pub theta2: Vec<DMatrix<f64>>,
    pub ex: Vec<DVector<f64>>,
    pub n: usize,
    pub m: usize,
}

impl SampledGains {
    pub fn from_gains(gains: &StrategyGains, substeps: usize) -> Self {
        assert!(substeps >= 1, "substeps must be at least 1");
        let grid = gains.grid.refine(substeps);
        let times = grid.times();
        Self {
            grid,
            theta1: times.iter().map(|&t| gains.theta1_at(t)).collect(),
            theta2: times.iter().map(|&t| gains.theta2_at(t)).collect(),
            ex: times.iter().map(|&t| gains.ex_at(t)).collect(),
            n: gains.n,
            m: gains.m,
        }
    }
}

/// Trapezoid weight of grid point k on a grid of `steps` cells.
pub(crate) fn state_weight(k: usize, steps: usize, dt: f64) -> f64 {
    if k == 0 || k == steps {
        dt / 2.0
    } else {
        dt
    }
}

pub struct SimulationResult {
    pub grid: TimeGrid,
    pub pop: PopulationSpec,
    pub n_paths: usize,
    /// Path-means of the empirical averages per step.
    pub avg_all: Vec<DVector<f64>>,
    pub avg_t1: Vec<DVector<f64>>,
    pub avg_t2: Vec<DVector<f64>>,
    /// Path-means of ||x^(N_k) - m_k||^2 per step (against the offline
    /// mean-field path), plus per-step second moments for standard errors.
    pub coupling_sq_t1: Vec<f64>,
    pub coupling_sq_t2: Vec<f64>,
    coupling_sq_t1_m2: Vec<f64>,
    coupling_sq_t2_m2: Vec<f64>,
    /// Per-path per-agent costs J_i (team 1 first, then team 2).
    pub agent_costs: Vec<Vec<f64>>,
    /// Per-path team totals.
    pub j1_soc: Vec<f64>,
    pub j2_soc: Vec<f64>,
    pub jmix1: Vec<f64>,
    pub jmix2: Vec<f64>,
    /// Thinned trajectories [path][record][agent * n + coord] if requested.
    pub trajectories: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy)]
pub struct CouplingSup {
    pub value: f64,
    pub stderr: f64,
    pub at_time: f64,
}

impl SimulationResult {
    pub fn per_capita_jmix1(&self) -> (f64, f64) {
        let v: Vec<f64> = self.jmix1.iter().map(|j| j / self.pop.n1 as f64).collect();
        (mean(&v), standard_error(&v))
    }

    pub fn per_capita_jmix2(&self) -> (f64, f64) {
        let v: Vec<f64> = self.jmix2.iter().map(|j| j / self.pop.n2 as f64).collect();
        (mean(&v), standard_error(&v))
    }

    fn coupling_sup(&self, means: &[f64], m2: &[f64]) -> CouplingSup {
        let mut best = 0usize;
        for k in 0..means.len() {
            if means[k] > means[best] {
                best = k;
            }
        }
        let p = self.n_paths as f64;
        let var = (m2[best] - means[best] * means[best] * p) / (p - 1.0).max(1.0);
        CouplingSup {
            value: means[best],
            stderr: (var.max(0.0) / p).sqrt(),
            at_time: self.grid.time(best),
        }
    }

    /// sup_t of the team-1 coupling error curve, with the Monte-Carlo
    /// standard error at the maximizing time.
    pub fn coupling_sup_t1(&self) -> CouplingSup {
        self.coupling_sup(&self.coupling_sq_t1, &self.coupling_sq_t1_m2)
    }

    pub fn coupling_sup_t2(&self) -> CouplingSup {
        self.coupling_sup(&self.coupling_sq_t2, &self.coupling_sq_t2_m2)
    }

    /// Worst over steps of || x^(N) - pi1^(N) x^(N1) - pi2^(N) x^(N2) ||.
    pub fn average_identity_defect(&self) -> f64 {
        let p1 = self.pop.pi1_n();
        let p2 = self.pop.pi2_n();
        let mut worst = 0.0f64;
        for k in 0..self.avg_all.len() {
            let combo = self.avg_t1[k].scale(p1) + self.avg_t2[k].scale(p2);
            worst = worst.max((&self.avg_all[k] - combo).amax());
        }
        worst
    }
}

struct PathOutput {
    avg_all: Vec<DVector<f64>>,
    avg_t1: Vec<DVector<f64>>,
    avg_t2: Vec<DVector<f64>>,
    coupling_t1: Vec<f64>,
    coupling_t2: Vec<f64>,
    agent_costs: Vec<f64>,
    trajectory: Option<Vec<Vec<f64>>>,
}

struct TeamParams<'s> {
    a: &'s DMatrix<f64>,
    b: &'s DMatrix<f64>,
    f: &'s DMatrix<f64>,
    gamma: &'s DMatrix<f64>,
    q: &'s DMatrix<f64>,
    r: &'s DMatrix<f64>,
}

/// Simulate all N agents jointly under the decentralized strategy (or an
/// external control table for one team).
#[allow(clippy::needless_range_loop)]
pub fn simulate(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    config: &SimulationConfig,
) -> Result<SimulationResult, SimError> {
    if (gains.grid.horizon - spec.horizon).abs() > 1e-12 {
        return Err(SimError::GridMismatch { got: gains.grid.horizon, want: spec.horizon });
    }
    if config.n_paths == 0 {
        return Err(SimError::Config("n_paths must be at least 1".into()));
    }
    if config.substeps == 0 {
        return Err(SimError::Config("substeps must be at least 1".into()));
    }
    let pop = config.pop;
    let n = spec.n;
    let m = spec.m;
    let total = pop.total();
    let sampled = SampledGains::from_gains(gains, config.substeps);
    let grid = sampled.grid;
    let steps = grid.steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    let partners = config
        .partners
        .clone()
        .unwrap_or_else(|| PartnerMap::round_robin(pop));
    if partners.t1_partner.len() != pop.n1
        || partners.t2_partner.len() != pop.n2
        || partners.t1_partner.iter().any(|&j| j >= pop.n2)
        || partners.t2_partner.iter().any(|&i| i >= pop.n1)
    {
        return Err(SimError::Config("partner map does not match the population".into()));
    }
    let stream_keys: Vec<(u64, u64)> = match &config.stream_keys {
        Some(keys) => {
            if keys.len() != total {
                return Err(SimError::Config("stream_keys must cover every agent".into()));
            }
            keys.clone()
        }
        None => (0..total)
            .map(|a| {
                if a < pop.n1 {
                    (1u64, a as u64)
                } else {
                    (2u64, (a - pop.n1) as u64)
                }
            })
            .collect(),
    };
    if let ControlSource::ExternalTable { team, controls } = &config.control {
        let want = match team {
            Team::One => pop.n1 * m,
            Team::Two => pop.n2 * m,
        };
        if controls.len() < steps || controls.iter().any(|u| u.len() != want) {
            return Err(SimError::Config(format!(
                "external control table needs {steps} steps of dimension {want}"
            )));
        }
    }

    let team1 = TeamParams {
        a: &spec.a1,
        b: &spec.b1,
        f: &spec.f1,
        gamma: &spec.gamma1,
        q: &spec.q1,
        r: &spec.r1,
    };
    let team2 = TeamParams {
        a: &spec.a2,
        b: &spec.b2,
        f: &spec.f2,
        gamma: &spec.gamma2,
        q: &spec.q2,
        r: &spec.r2,
    };
    let init_factor1 = spec.init1.factor();
    let init_factor2 = spec.init2.factor();
    let sigma1: Vec<&DVector<f64>> = (0..steps).map(|k| spec.sigma1.value(grid.time(k))).collect();
    let sigma2: Vec<&DVector<f64>> = (0..steps).map(|k| spec.sigma2.value(grid.time(k))).collect();

    let run_path = |path: usize| -> Result<PathOutput, SimError> {
        let mut rngs: Vec<ChaCha8Rng> = (0..total)
            .map(|a| stream_rng(config.seed, path as u64, stream_keys[a].0, stream_keys[a].1))
            .collect();

        // Flat state layout: agent a occupies [a*n, (a+1)*n).
        let mut x = vec![0.0f64; total * n];
        let mut z = DVector::<f64>::zeros(n);
        for a in 0..total {
            for c in 0..n {
                z[c] = standard_normal(&mut rngs[a]);
            }
            let (mean_v, factor) = if a < pop.n1 {
                (&spec.init1.mean, &init_factor1)
            } else {
                (&spec.init2.mean, &init_factor2)
            };
            let draw = mean_v + factor * &z;
            x[a * n..(a + 1) * n].copy_from_slice(draw.as_slice());
        }

        let mut avg_all = Vec::with_capacity(steps + 1);
        let mut avg_t1 = Vec::with_capacity(steps + 1);
        let mut avg_t2 = Vec::with_capacity(steps + 1);
        let mut coupling_t1 = Vec::with_capacity(steps + 1);
        let mut coupling_t2 = Vec::with_capacity(steps + 1);
        let mut state_acc = vec![0.0f64; total];
        let mut control_acc = vec![0.0f64; total];
        let mut trajectory = config.store_trajectories.map(|_| Vec::new());

        let mut xbar = DVector::<f64>::zeros(n);
        let mut xbar1 = DVector::<f64>::zeros(n);
        let mut xbar2 = DVector::<f64>::zeros(n);
        let mut dev = DVector::<f64>::zeros(n);
        let mut pair = DVector::<f64>::zeros(2 * n);
        let mut drift = vec![0.0f64; total * n];
        let mut u_all = vec![0.0f64; total * m];

        for k in 0..=steps {
            // Empirical averages from team sums.
            xbar1.fill(0.0);
            xbar2.fill(0.0);
            for a in 0..pop.n1 {
                for c in 0..n {
                    xbar1[c] += x[a * n + c];
                }
            }
            for a in pop.n1..total {
                for c in 0..n {
                    xbar2[c] += x[a * n + c];
                }
            }
            for c in 0..n {
                xbar[c] = (xbar1[c] + xbar2[c]) / total as f64;
                xbar1[c] /= pop.n1 as f64;
                xbar2[c] /= pop.n2 as f64;
            }
            avg_all.push(xbar.clone());
            avg_t1.push(xbar1.clone());
            avg_t2.push(xbar2.clone());
            let exk = &sampled.ex[k];
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for c in 0..n {
                let e1 = xbar1[c] - exk[c];
                let e2 = xbar2[c] - exk[n + c];
                d1 += e1 * e1;
                d2 += e2 * e2;
            }
            coupling_t1.push(d1);
            coupling_t2.push(d2);

            if let (Some(records), Some(stride)) = (trajectory.as_mut(), config.store_trajectories)
            {
                if k % stride.max(1) == 0 || k == steps {
                    records.push(x.clone());
                }
            }

            // State-cost integrand at weight w_k.
            let w = state_weight(k, steps, dt);
            for a in 0..total {
                let team = if a < pop.n1 { &team1 } else { &team2 };
                for c in 0..n {
                    dev[c] = x[a * n + c];
                    for cc in 0..n {
                        dev[c] -= team.gamma[(c, cc)] * xbar[cc];
                    }
                }
                let mut s = 0.0;
                for r in 0..n {
                    for c in 0..n {
                        s += dev[r] * team.q[(r, c)] * dev[c];
                    }
                }
                state_acc[a] += w * s;
            }

            if k == steps {
                break;
            }

            // Controls at the step start.
            let th1 = &sampled.theta1[k];
            let th2 = &sampled.theta2[k];
            let assemble_control = |own_first: bool, pair: &DVector<f64>, out: &mut [f64]| {
                // u-block: rows [0, m) for team 1, [m, 2m) for team 2.
                let row0 = if own_first { 0 } else { m };
                for r in 0..m {
                    let mut v = 0.0;
                    for c in 0..2 * n {
                        v += th1[(row0 + r, c)] * pair[c] + th2[(row0 + r, c)] * (exk[c] - pair[c]);
                    }
                    out[r] = v;
                }
            };
            for a in 0..total {
                let external = match &config.control {
                    ControlSource::ExternalTable { team: Team::One, controls } if a < pop.n1 => {
                        Some(&controls[k].as_slice()[a * m..(a + 1) * m])
                    }
                    ControlSource::ExternalTable { team: Team::Two, controls } if a >= pop.n1 => {
                        let j = a - pop.n1;
                        Some(&controls[k].as_slice()[j * m..(j + 1) * m])
                    }
                    _ => None,
                };
                let out = &mut u_all[a * m..(a + 1) * m];
                if let Some(ext) = external {
                    out.copy_from_slice(ext);
                } else if a < pop.n1 {
                    let j = pop.n1 + partners.t1_partner[a];
                    pair.as_mut_slice()[..n].copy_from_slice(&x[a * n..(a + 1) * n]);
                    pair.as_mut_slice()[n..].copy_from_slice(&x[j * n..(j + 1) * n]);
                    assemble_control(true, &pair, out);
                } else {
                    let i = partners.t2_partner[a - pop.n1];
                    pair.as_mut_slice()[..n].copy_from_slice(&x[i * n..(i + 1) * n]);
                    pair.as_mut_slice()[n..].copy_from_slice(&x[a * n..(a + 1) * n]);
                    assemble_control(false, &pair, out);
                }
            }

            // Control cost (rectangle rule) and the Euler update.
            for a in 0..total {
                let team = if a < pop.n1 { &team1 } else { &team2 };
                let u = &u_all[a * m..(a + 1) * m];
                let mut cu = 0.0;
                for r in 0..m {
                    for c in 0..m {
                        cu += u[r] * team.r[(r, c)] * u[c];
                    }
                }
                control_acc[a] += dt * cu;

                let xa = &x[a * n..(a + 1) * n];
                let d = &mut drift[a * n..(a + 1) * n];
                for r in 0..n {
                    let mut v = 0.0;
                    for c in 0..n {
                        v += team.a[(r, c)] * xa[c] + team.f[(r, c)] * xbar[c];
                    }
                    for c in 0..m {
                        v += team.b[(r, c)] * u[c];
                    }
                    d[r] = v;
                }
            }
            for a in 0..total {
                let noise = standard_normal(&mut rngs[a]) * sqrt_dt;
                let sigma = if a < pop.n1 { sigma1[k] } else { sigma2[k] };
                for c in 0..n {
                    x[a * n + c] += dt * drift[a * n + c] + sigma[c] * noise;
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFiniteState { path, step: k + 1 });
            }
        }

        let agent_costs: Vec<f64> = (0..total)
            .map(|a| 0.5 * (state_acc[a] + control_acc[a]))
            .collect();
        Ok(PathOutput {
            avg_all,
            avg_t1,
            avg_t2,
            coupling_t1,
            coupling_t2,
            agent_costs,
            trajectory,
        })
    };

    let outputs: Vec<PathOutput> = (0..config.n_paths)
        .into_par_iter()
        .map(run_path)
        .collect::<Result<_, _>>()?;

    // Deterministic aggregation in path order; per-step means via pairwise
    // sums over paths.
    let paths = config.n_paths as f64;
    let npoints = steps + 1;
    let mut avg_all = vec![DVector::zeros(n); npoints];
    let mut avg_t1 = vec![DVector::zeros(n); npoints];
    let mut avg_t2 = vec![DVector::zeros(n); npoints];
    let mut coupling_sq_t1 = vec![0.0f64; npoints];
    let mut coupling_sq_t2 = vec![0.0f64; npoints];
    let mut coupling_sq_t1_m2 = vec![0.0f64; npoints];
    let mut coupling_sq_t2_m2 = vec![0.0f64; npoints];
    let mut buf = vec![0.0f64; outputs.len()];
    for k in 0..npoints {
        for c in 0..n {
            for (p, o) in outputs.iter().enumerate() {
                buf[p] = o.avg_all[k][c];
            }
            avg_all[k][c] = pairwise_sum(&buf) / paths;
            for (p, o) in outputs.iter().enumerate() {
                buf[p] = o.avg_t1[k][c];
            }
            avg_t1[k][c] = pairwise_sum(&buf) / paths;
            for (p, o) in outputs.iter().enumerate() {
                buf[p] = o.avg_t2[k][c];
            }
            avg_t2[k][c] = pairwise_sum(&buf) / paths;
        }
        for (p, o) in outputs.iter().enumerate() {
            buf[p] = o.coupling_t1[k];
        }
        coupling_sq_t1[k] = pairwise_sum(&buf) / paths;
        coupling_sq_t1_m2[k] = pairwise_sum(&buf.iter().map(|v| v * v).collect::<Vec<_>>());
        for (p, o) in outputs.iter().enumerate() {
            buf[p] = o.coupling_t2[k];
        }
        coupling_sq_t2[k] = pairwise_sum(&buf) / paths;
        coupling_sq_t2_m2[k] = pairwise_sum(&buf.iter().map(|v| v * v).collect::<Vec<_>>());
    }

    let mut agent_costs = Vec::with_capacity(outputs.len());
    let mut j1_soc = Vec::with_capacity(outputs.len());
    let mut j2_soc = Vec::with_capacity(outputs.len());
    let mut jmix1 = Vec::with_capacity(outputs.len());
    let mut jmix2 = Vec::with_capacity(outputs.len());
    for o in &outputs {
        let j1 = pairwise_sum(&o.agent_costs[..pop.n1]);
        let j2 = pairwise_sum(&o.agent_costs[pop.n1..]);
        j1_soc.push(j1);
        j2_soc.push(j2);
        jmix1.push(j1 + spec.alpha * j2);
        jmix2.push(j2 + spec.beta * j1);
        agent_costs.push(o.agent_costs.clone());
    }
    let trajectories = if config.store_trajectories.is_some() {
        Some(outputs.into_iter().map(|o| o.trajectory.unwrap()).collect())
    } else {
        None
    };

    Ok(SimulationResult {
        grid,
        pop,
        n_paths: config.n_paths,
        avg_all,
        avg_t1,
        avg_t2,
        coupling_sq_t1,
        coupling_sq_t2,
        coupling_sq_t1_m2,
        coupling_sq_t2_m2,
        agent_costs,
        j1_soc,
        j2_soc,
        jmix1,
        jmix2,
        trajectories,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CouplingRow {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub eps_n: f64,
    pub sup_t1: f64,
    pub se_t1: f64,
    pub sup_t2: f64,
    pub se_t2: f64,
}

#[derive(Debug, Clone)]
pub struct CouplingStudy {
    pub rows: Vec<CouplingRow>,
    pub slope_t1: SlopeFit,
    pub slope_t2: SlopeFit,
}

/// Sweep team sizes N in `n_list` (split by the limiting fractions) and
/// measure sup_t of the squared team-average deviations from the offline
/// mean-field path, with fitted log-log slopes.
pub fn coupling_error_study(
    spec: &ProblemSpec,
    gains: &StrategyGains,
    n_list: &[usize],
    base: &SimulationConfig,
) -> Result<CouplingStudy, SimError> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &total in n_list {
        let pop = PopulationSpec::from_total(total, spec.pi1);
        let config = SimulationConfig {
            pop,
            partners: None,
            stream_keys: None,
            ..base.clone()
        };
        let result = simulate(spec, gains, &config)?;
        let s1 = result.coupling_sup_t1();
        let s2 = result.coupling_sup_t2();
        rows.push(CouplingRow {
            n: total,
            n1: pop.n1,
            n2: pop.n2,
            eps_n: pop.eps_n(spec.pi1, spec.pi2),
            sup_t1: s1.value,
            se_t1: s1.stderr,
            sup_t2: s2.value,
            se_t2: s2.stderr,
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let e1: Vec<f64> = rows.iter().map(|r| r.sup_t1).collect();
    let e2: Vec<f64> = rows.iter().map(|r| r.sup_t2).collect();
    Ok(CouplingStudy {
        slope_t1: loglog_slope(&ns, &e1),
        slope_t2: loglog_slope(&ns, &e2),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccmat::assemble;
    use crate::presets;
    use crate::riccati::solve_closed_form;
    use crate::strategy::{propagate_mean_field, StrategyGains};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn gains_for(spec: &ProblemSpec, steps: usize) -> StrategyGains {
        let cc = assemble(spec);
        let ric = solve_closed_form(&cc, spec.horizon, steps).unwrap();
        let mf = propagate_mean_field(&cc, &ric, spec).unwrap();
        StrategyGains::new(&ric, &mf)
    }

    #[test]
    fn static_population_accumulates_pure_state_cost() {
        // B = 0, sigma = 0, A = F = 0, deterministic starts: states freeze,
        // J_i = (T/2) ||x_i(0) - Gamma1 x^(N)(0)||^2_{Q1}.
        let mut spec = presets::scalar_decoupled();
        spec.b1 = DMatrix::zeros(1, 1);
        spec.b2 = DMatrix::zeros(1, 1);
        spec.gamma1 = DMatrix::from_element(1, 1, 0.5);
        spec.gamma2 = DMatrix::from_element(1, 1, 0.25);
        spec.init1.mean[0] = 2.0;
        spec.init2.mean[0] = -1.0;
        let gains = gains_for(&spec, 50);
        let pop = PopulationSpec::new(2, 2);
        let mut config = SimulationConfig::new(pop, 1, 7);
        config.store_trajectories = Some(10);
        let result = simulate(&spec, &gains, &config).unwrap();

        let xbar0 = (2.0 * 2.0 - 2.0 * 1.0) / 4.0; // 0.5
        let traj = result.trajectories.as_ref().unwrap();
        for record in &traj[0] {
            assert_relative_eq!(record[0], 2.0, epsilon = 1e-12);
            assert_relative_eq!(record[1], 2.0, epsilon = 1e-12);
            assert_relative_eq!(record[2], -1.0, epsilon = 1e-12);
            assert_relative_eq!(record[3], -1.0, epsilon = 1e-12);
        }
        let expected_1 = 0.5 * (2.0 - 0.5 * xbar0) * (2.0 - 0.5 * xbar0);
        let expected_2 = 0.5 * (-1.0 - 0.25 * xbar0) * (-1.0 - 0.25 * xbar0);
        assert_relative_eq!(result.agent_costs[0][0], expected_1, epsilon = 1e-12);
        assert_relative_eq!(result.agent_costs[0][2], expected_2, epsilon = 1e-12);
    }

    #[test]
    fn pure_noise_variance_matches_formula() {
        // A = B = F = Gamma = 0: team-1 agents are Brownian motions around
        // their initial draws, so sup_t E||xbar1 - E xi||^2 = (V + s^2 T)/N1.
        let v = 0.5;
        let s = 0.4;
        let spec = presets::pure_noise(v, s);
        let gains = gains_for(&spec, 100);
        let pop = PopulationSpec::from_total(50, spec.pi1);
        let config = SimulationConfig::new(pop, 400, 20260810);
        let result = simulate(&spec, &gains, &config).unwrap();
        let sup = result.coupling_sup_t1();
        let predicted = (v + s * s * spec.horizon) / pop.n1 as f64;
        assert!(
            (sup.value - predicted).abs() <= 3.0 * sup.stderr,
            "sup {} vs predicted {predicted} (se {})",
            sup.value,
            sup.stderr
        );
    }

    #[test]
    fn scalar_deterministic_cost_matches_lq_value() {
        // sigma = 0, deterministic xi = 1: per-agent cost is the classical
        // LQ value (1/2) tanh(1).
        let spec = presets::scalar_decoupled();
        let gains = gains_for(&spec, 2000);
        let pop = PopulationSpec::new(1, 1);
        let mut config = SimulationConfig::new(pop, 1, 1);
        config.substeps = 10;
        let result = simulate(&spec, &gains, &config).unwrap();
        let value = 0.5 * 1.0f64.tanh();
        assert!(
            (result.agent_costs[0][0] - value).abs() < 1e-4,
            "cost {} vs value {value}",
            result.agent_costs[0][0]
        );
    }

    #[test]
    fn average_identity_holds_to_machine_precision() {
        let spec = presets::coop();
        let gains = gains_for(&spec, 100);
        let config = SimulationConfig::new(PopulationSpec::new(5, 3), 4, 99);
        let result = simulate(&spec, &gains, &config).unwrap();
        assert!(result.average_identity_defect() < 1e-13);
    }

    #[test]
    fn identical_seeds_reproduce_bit_identical_results() {
        let spec = presets::coop();
        let gains = gains_for(&spec, 100);
        let config = SimulationConfig::new(PopulationSpec::new(4, 4), 8, 424242);
        let a = simulate(&spec, &gains, &config).unwrap();
        let b = simulate(&spec, &gains, &config).unwrap();
        assert_eq!(a.jmix1, b.jmix1);
        assert_eq!(a.jmix2, b.jmix2);
        assert_eq!(a.coupling_sq_t1, b.coupling_sq_t1);
        for k in 0..a.avg_all.len() {
            assert_eq!(a.avg_all[k], b.avg_all[k]);
        }
    }

    #[test]
    fn within_team_relabeling_leaves_team_costs_unchanged() {
        // Permute team-1 members together with their noise streams and the
        // partner edges touching them: the physical system is unchanged, so
        // team costs agree to rounding.
        let spec = presets::coop();
        let gains = gains_for(&spec, 100);
        let pop = PopulationSpec::new(4, 3);
        let base = SimulationConfig::new(pop, 6, 777);
        let a = simulate(&spec, &gains, &base).unwrap();

        let perm = [2usize, 0, 3, 1]; // slot -> original member
        let mut config = base.clone();
        let default_partners = PartnerMap::round_robin(pop);
        let mut inv = [0usize; 4];
        for (slot, &orig) in perm.iter().enumerate() {
            inv[orig] = slot;
        }
        config.partners = Some(PartnerMap {
            t1_partner: perm.iter().map(|&orig| default_partners.t1_partner[orig]).collect(),
            t2_partner: default_partners.t2_partner.iter().map(|&i| inv[i]).collect(),
        });
        config.stream_keys = Some(
            (0..pop.total())
                .map(|a| {
                    if a < pop.n1 {
                        (1u64, perm[a] as u64)
                    } else {
                        (2u64, (a - pop.n1) as u64)
                    }
                })
                .collect(),
        );
        let b = simulate(&spec, &gains, &config).unwrap();
        for p in 0..6 {
            assert_relative_eq!(a.jmix1[p], b.jmix1[p], max_relative = 1e-12);
            assert_relative_eq!(a.jmix2[p], b.jmix2[p], max_relative = 1e-12);
        }
    }

    #[test]
    fn cost_decomposition_matches_recombination() {
        let spec = presets::coop();
        let gains = gains_for(&spec, 100);
        let pop = PopulationSpec::new(5, 4);
        let config = SimulationConfig::new(pop, 3, 5150);
        let r = simulate(&spec, &gains, &config).unwrap();
        for p in 0..3 {
            let j1: f64 = r.agent_costs[p][..pop.n1].iter().sum();
            let j2: f64 = r.agent_costs[p][pop.n1..].iter().sum();
            assert_relative_eq!(r.jmix1[p], j1 + spec.alpha * j2, max_relative = 1e-12);
            assert_relative_eq!(r.jmix2[p], j2 + spec.beta * j1, max_relative = 1e-12);
            // alpha >= 0 keeps the team-1 mixed cost a sum of nonnegative
            // per-agent costs.
            assert!(r.jmix1[p].is_finite() && r.jmix1[p] >= 0.0);
        }
    }

    #[test]
    fn homogeneous_noiseless_population_has_zero_coupling_error() {
        // sigma = 0, identical deterministic starts, F = 0: every agent of a
        // team follows the same path as the mean-field ODE.
        let mut spec = presets::coop();
        spec.sigma1 = crate::model::PiecewiseConst::constant(nalgebra::DVector::zeros(1));
        spec.sigma2 = crate::model::PiecewiseConst::constant(nalgebra::DVector::zeros(1));
        spec.f1 = DMatrix::zeros(1, 1);
        spec.f2 = DMatrix::zeros(1, 1);
        spec.init1.cov.fill(0.0);
        spec.init2.cov.fill(0.0);
        let gains = gains_for(&spec, 400);
        for total in [10usize, 20] {
            let pop = PopulationSpec::from_total(total, spec.pi1);
            let config = SimulationConfig::new(pop, 2, 3);
            let r = simulate(&spec, &gains, &config).unwrap();
            // The Euler path deviates from the RK4 mean-field path by O(dt),
            // identically across N; the coupling error is that bias alone.
            let sup = r.coupling_sup_t1().value.max(r.coupling_sup_t2().value);
            assert!(sup < 1e-4, "coupling error {sup} should be discretization-level");
        }
    }

    #[test]
    fn coupling_study_pure_noise_slope_is_minus_one() {
        let spec = presets::pure_noise(0.5, 0.4);
        let gains = gains_for(&spec, 50);
        let mut base = SimulationConfig::new(PopulationSpec::new(1, 1), 200, 11);
        base.substeps = 1;
        let study = coupling_error_study(&spec, &gains, &[25, 100, 400], &base).unwrap();
        assert!(
            (-1.15..=-0.85).contains(&study.slope_t1.slope),
            "slope {} out of range",
            study.slope_t1.slope
        );
        for row in &study.rows {
            assert_eq!(row.eps_n, 0.0);
            let predicted = (0.5 + 0.16) / row.n1 as f64;
            assert!((row.sup_t1 - predicted).abs() <= 3.0 * row.se_t1 + 1e-3 * predicted);
        }
    }

    #[test]
    fn mismatched_gains_are_rejected() {
        let spec = presets::coop();
        let mut short = spec.clone();
        short.horizon = 0.5;
        let gains = gains_for(&short, 50);
        let config = SimulationConfig::new(PopulationSpec::new(2, 2), 1, 1);
        assert!(matches!(
            simulate(&spec, &gains, &config),
            Err(SimError::GridMismatch { .. })
        ));
    }
}
