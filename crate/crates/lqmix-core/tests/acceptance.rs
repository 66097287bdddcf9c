//! Acceptance suite: every release criterion with its pinned tolerance,
//! one pass/fail line per criterion. Run with `--nocapture` to see them:
//!
//!   cargo test -p lqmix-core --test acceptance -- --nocapture

use lqmix_core::ccmat::{assemble, costate};
use lqmix_core::model::{GaussianLaw, PiecewiseConst, PopulationSpec, ProblemSpec};
use lqmix_core::oracle::{
    decentralized_cost_exact, optimality_gap_study, quadraticity_check,
};
use lqmix_core::presets;
use lqmix_core::riccati::{residuals, solution_distance, solve_closed_form, solve_integrated};
use lqmix_core::sim::{coupling_error_study, simulate, SimulationConfig};
use lqmix_core::strategy::{propagate_mean_field, StrategyGains};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn gains_for(spec: &ProblemSpec, steps: usize) -> StrategyGains {
    let cc = assemble(spec);
    let ric = solve_closed_form(&cc, spec.horizon, steps).expect("closed-form solve");
    let mf = propagate_mean_field(&cc, &ric, spec).expect("mean-field propagation");
    StrategyGains::new(&ric, &mf)
}

fn report(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {criterion}: {detail}");
    assert!(pass, "{criterion}: {detail}");
}

/// Criterion 1 — on randomized admissible instances (n, m <= 2) the
/// closed-form and RK4-integrated solutions agree to a relative 1e-5 at
/// M = 2000, finite-difference residuals stay below a relative 1e-4, and
/// each instance solves within 30 s.
#[test]
fn criterion_1_riccati_cross_method_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1001);
    let mut worst_rel = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut worst_secs = 0.0f64;
    for trial in 0..5 {
        let (n, m) = [(1, 1), (2, 1), (1, 2), (2, 2), (2, 2)][trial];
        let spec = presets::random_valid_spec(n, m, &mut rng);
        assert!(lqmix_core::validate(&spec).is_empty());
        let cc = assemble(&spec);
        let started = Instant::now();
        let closed = solve_closed_form(&cc, spec.horizon, 2000).expect("closed form");
        let integrated = solve_integrated(&cc, spec.horizon, 2000).expect("integration");
        let secs = started.elapsed().as_secs_f64();
        let (dist, scale) = solution_distance(&closed, &integrated);
        let rel = dist / (1.0 + scale);
        let coeff = 1.0 + cc.coefficient_scale();
        let (rp, rk) = residuals(&cc, &integrated).expect("residuals");
        let res = rp.max(rk) / coeff;
        worst_rel = worst_rel.max(rel);
        worst_res = worst_res.max(res);
        worst_secs = worst_secs.max(secs);
        assert!(secs <= 30.0, "instance {trial} took {secs:.1}s");
    }
    report(
        "criterion 1 (Riccati cross-method)",
        worst_rel <= 1e-5 && worst_res <= 1e-4,
        &format!(
            "max relative closed-vs-RK4 distance {worst_rel:.3e} (tol 1e-5), max relative residual {worst_res:.3e} (tol 1e-4), slowest instance {worst_secs:.1}s (limit 30s)"
        ),
    );
}

/// Criterion 2 — the decoupled scalar instance reproduces the tanh(1-t)
/// Riccati entry within 1e-6 (both routes) and the simulated deterministic
/// per-agent cost equals tanh(1)/2 within 1e-4.
#[test]
fn criterion_2_scalar_reduction_oracle() {
    let spec = presets::scalar_decoupled();
    let cc = assemble(&spec);
    let closed = solve_closed_form(&cc, 1.0, 2000).unwrap();
    let integrated = solve_integrated(&cc, 1.0, 2000).unwrap();
    let mut worst_p = 0.0f64;
    for sol in [&closed, &integrated] {
        for idx in 0..sol.grid.len() {
            let oracle = (1.0 - sol.grid.time(idx)).tanh();
            worst_p = worst_p.max((sol.p[idx][(costate::OWN_T1, 0)] - oracle).abs());
        }
    }

    let mf = propagate_mean_field(&cc, &closed, &spec).unwrap();
    let gains = StrategyGains::new(&closed, &mf);
    let mut config = SimulationConfig::new(PopulationSpec::new(1, 1), 1, 0);
    config.substeps = 10;
    let sim = simulate(&spec, &gains, &config).unwrap();
    let value = 0.5 * 1.0f64.tanh();
    let cost_err = (sim.agent_costs[0][0] - value).abs();

    report(
        "criterion 2 (scalar reduction)",
        worst_p <= 1e-6 && cost_err <= 1e-4,
        &format!("max |P - tanh(1-t)| = {worst_p:.3e} (tol 1e-6), |cost - tanh(1)/2| = {cost_err:.3e} (tol 1e-4)"),
    );
}

/// Criterion 3 — with exact team splits over N in {25,...,400} the
/// log-log slope of sup_t E||x^(N1) - m1||^2 lies in [-1.15, -0.85], and
/// for the pure-noise instance the absolute level matches
/// (Var(xi) + sigma^2 T)/N1 within 3 Monte-Carlo standard errors at 400
/// paths.
#[test]
fn criterion_3_mean_field_coupling_rate() {
    let started = Instant::now();
    let n_list = [25usize, 50, 100, 200, 400];

    // Pure noise: slope and closed-form level.
    let (v, s) = (0.5, 0.4);
    let noise_spec = presets::pure_noise(v, s);
    let noise_gains = gains_for(&noise_spec, 2000);
    let base = SimulationConfig::new(PopulationSpec::new(1, 1), 400, 0x2003);
    let noise = coupling_error_study(&noise_spec, &noise_gains, &n_list, &base).unwrap();
    let mut level_ok = true;
    let mut worst_level = 0.0f64;
    for row in &noise.rows {
        assert_eq!(row.eps_n, 0.0, "sweep must have exact team splits");
        let predicted = (v + s * s * noise_spec.horizon) / row.n1 as f64;
        let dev = (row.sup_t1 - predicted).abs() / (3.0 * row.se_t1);
        worst_level = worst_level.max(dev);
        level_ok &= dev <= 1.0;
    }

    // General coupled instance: slope only.
    let mut coupled_spec = presets::coop();
    coupled_spec.pi1 = 0.6;
    coupled_spec.pi2 = 0.4;
    let coupled_gains = gains_for(&coupled_spec, 2000);
    let coupled = coupling_error_study(&coupled_spec, &coupled_gains, &n_list, &base).unwrap();

    let slopes = [
        noise.slope_t1.slope,
        noise.slope_t2.slope,
        coupled.slope_t1.slope,
        coupled.slope_t2.slope,
    ];
    let slopes_ok = slopes.iter().all(|s| (-1.15..=-0.85).contains(s));
    let secs = started.elapsed().as_secs_f64();
    report(
        "criterion 3 (mean-field coupling rate)",
        slopes_ok && level_ok && secs <= 300.0,
        &format!(
            "slopes {:.3}/{:.3} (noise) {:.3}/{:.3} (coupled) in [-1.15,-0.85]; worst level deviation {worst_level:.2} of 3 SE; runtime {secs:.0}s (limit 300s)",
            slopes[0], slopes[1], slopes[2], slopes[3]
        ),
    );
}

/// Criterion 4 — per-capita optimality gaps against the centralized
/// best-response oracle are nonnegative at every N, decay monotonically
/// over {4, 8, 16, 32} (Kendall tau <= -0.5) with fitted slope <= -0.35
/// for both teams in the alpha = beta = 1 case, and vanish (within 1e-6)
/// for the fully decoupled instance.
#[test]
fn criterion_4_optimality_gap_rate() {
    let started = Instant::now();
    let spec = presets::coop();
    let gains = gains_for(&spec, 2000);
    let study = optimality_gap_study(&spec, &gains, &[4, 8, 16, 32], 1).unwrap();
    let nonneg = study.rows.iter().all(|r| r.gap1 >= -1e-10 && r.gap2 >= -1e-10);
    let monotone = study.tau1 <= -0.5 && study.tau2 <= -0.5;
    let steep = study.slope1.slope <= -0.35 && study.slope2.slope <= -0.35;

    let mut decoupled = presets::scalar_decoupled();
    decoupled.alpha = 0.0;
    decoupled.beta = 0.0;
    let dec_gains = gains_for(&decoupled, 2000);
    let dec = optimality_gap_study(&decoupled, &dec_gains, &[4, 8], 1).unwrap();
    let dec_zero = dec.rows.iter().all(|r| r.gap1.abs() <= 1e-6 && r.gap2.abs() <= 1e-6);

    let secs = started.elapsed().as_secs_f64();
    report(
        "criterion 4 (optimality-gap rate)",
        nonneg && monotone && steep && dec_zero && secs <= 600.0,
        &format!(
            "gaps nonnegative: {nonneg}; tau ({:.2}, {:.2}) <= -0.5; slopes ({:.3}, {:.3}) <= -0.35; decoupled gap <= 1e-6: {dec_zero}; runtime {secs:.0}s (limit 600s)",
            study.tau1, study.tau2, study.slope1.slope, study.slope2.slope
        ),
    );
}

/// Criterion 5 — along random control directions the map
/// u1 -> J_mix1(u1, frozen team 2) has relative third differences below
/// 1e-8 and the oracle minimizer is stationary to a relative 1e-6.
#[test]
fn criterion_5_quadraticity_and_stationarity() {
    let mut spec = presets::coop();
    spec.sigma1 = PiecewiseConst::constant(DVector::zeros(1));
    spec.sigma2 = PiecewiseConst::constant(DVector::zeros(1));
    spec.init1 = GaussianLaw::deterministic(DVector::from_element(1, 1.0));
    spec.init2 = GaussianLaw::deterministic(DVector::from_element(1, 1.0));
    let gains = gains_for(&spec, 2000);
    let report_q =
        quadraticity_check(&spec, &gains, PopulationSpec::new(3, 3), 1, 10, 0x5005).unwrap();
    report(
        "criterion 5 (quadraticity/convexity)",
        report_q.max_third_diff_rel <= 1e-8
            && report_q.max_stationarity_rel <= 1e-6
            && report_q.min_second_diff >= 0.0,
        &format!(
            "max relative third difference {:.3e} (tol 1e-8), stationarity {:.3e} (tol 1e-6), min curvature {:.3e} (>= 0 for alpha >= 0)",
            report_q.max_third_diff_rel, report_q.max_stationarity_rel, report_q.min_second_diff
        ),
    );
}

/// Criterion 6 — named-case diagnostics: (i) under identical coefficients
/// with alpha = beta = 1 the four aggregate adjoints of the CC solution
/// coincide within 1e-6; (ii) at alpha = beta = -1 the mixed costs cancel
/// to machine precision; (iii)/(iv) with beta = 0 team 2's mixed cost
/// reduces to its own social cost to machine precision.
#[test]
fn criterion_6_case_diagnostics() {
    // (i) homogeneity of the aggregate adjoints.
    let coop = presets::coop();
    let cc = assemble(&coop);
    let ric = solve_closed_form(&cc, coop.horizon, 2000).unwrap();
    let mf = propagate_mean_field(&cc, &ric, &coop).unwrap();
    let n = coop.n;
    let mut homogeneity = 0.0f64;
    for k in 0..ric.grid.len() {
        let ey = &ric.p[k] * &mf.ex[k];
        let blocks: Vec<DVector<f64>> = costate::AGGREGATES
            .iter()
            .map(|&b| ey.rows(b * n, n).into_owned())
            .collect();
        for a in 0..blocks.len() {
            for b in (a + 1)..blocks.len() {
                homogeneity = homogeneity.max((&blocks[a] - &blocks[b]).amax());
            }
        }
    }

    // (ii) zero-sum cancellation, exact cost evaluation.
    let zs = presets::zerosum();
    let zs_gains = gains_for(&zs, 400);
    let zs_cost = decentralized_cost_exact(&zs, &zs_gains, PopulationSpec::new(4, 4), 1).unwrap();
    let cancel = (zs_cost.jmix1 + zs_cost.jmix2).abs();
    let cancel_scale = zs_cost.j1_soc.abs() + zs_cost.j2_soc.abs();
    // The identity J_mix1 + J_mix2 = (1+alpha) J1 + (1+beta) J2.
    let identity = ((zs_cost.jmix1 + zs_cost.jmix2)
        - ((1.0 + zs.beta) * zs_cost.j1_soc + (1.0 + zs.alpha) * zs_cost.j2_soc))
        .abs();

    // (iii)/(iv) one-sided reductions.
    let mut reduction = 0.0f64;
    for spec in [presets::onesided_coop(), presets::onesided_comp()] {
        let g = gains_for(&spec, 400);
        let c = decentralized_cost_exact(&spec, &g, PopulationSpec::new(3, 3), 1).unwrap();
        reduction = reduction.max((c.jmix2 - c.j2_soc).abs() / c.j2_soc.abs().max(1.0));
    }

    report(
        "criterion 6 (case diagnostics)",
        homogeneity <= 1e-6
            && cancel <= 1e-12 * cancel_scale.max(1.0)
            && identity <= 1e-12 * cancel_scale.max(1.0)
            && reduction <= 1e-14,
        &format!(
            "aggregate-adjoint homogeneity {homogeneity:.3e} (tol 1e-6), zero-sum cancellation {cancel:.3e}, mix identity defect {identity:.3e}, one-sided reduction defect {reduction:.3e}"
        ),
    );
}

/// Criterion 7 — per-capita mixed cost J_mix1/N shows no upward trend
/// across the N sweep (Kendall tau <= 0.5).
///
/// Known red. The exact sequence converges to its finite bound from
/// below with increments halving at every doubling of N (a clean c/N
/// approach), so a direction-only rank statistic reads +1 even though the
/// sequence is bounded by an N-independent constant — the substance this
/// criterion verifies. The Monte-Carlo measurement at the default path
/// budget resolves the same upward approach (tau 0.6-0.8 across seeds),
/// so no honest estimator of this quantity can satisfy the pinned
/// threshold on this instance. The test keeps the pinned statistic and
/// reports the boundedness evidence alongside it.
#[test]
fn criterion_7_per_capita_boundedness() {
    let spec = presets::coop();
    let gains = gains_for(&spec, 1000);
    let mut per_capita = Vec::new();
    for total in [4usize, 8, 16, 32] {
        let pop = PopulationSpec::from_total(total, spec.pi1);
        let costs = decentralized_cost_exact(&spec, &gains, pop, 1).unwrap();
        per_capita.push(costs.jmix1 / total as f64);
    }
    let tau = lqmix_core::stats::kendall_tau_vs_index(&per_capita);
    let increments: Vec<f64> = per_capita.windows(2).map(|w| w[1] - w[0]).collect();
    let geometric = increments
        .windows(2)
        .all(|w| w[1].abs() <= 0.6 * w[0].abs().max(1e-12));
    let limit = per_capita[3] + increments[2];
    let below_limit = per_capita.iter().all(|&v| v <= limit + 1e-9);
    report(
        "criterion 7 (per-capita boundedness)",
        tau <= 0.5,
        &format!(
            "J_mix1/N over N = (4,8,16,32): {per_capita:?}, Kendall tau {tau:.2} (tol 0.5); increments {increments:?} decay geometrically: {geometric}, all values below the extrapolated constant {limit:.6}: {below_limit}"
        ),
    );
}

/// Criterion 8 (library side) — identical (spec, gains, config, seed)
/// reproduce bit-identical simulation output. The command-line determinism
/// check (re-running a manifest reproduces byte-identical CSV files) lives
/// in the CLI crate's integration tests.
#[test]
fn criterion_8_seed_determinism() {
    let spec = presets::coop();
    let gains = gains_for(&spec, 500);
    let config = SimulationConfig::new(PopulationSpec::new(6, 4), 16, 0xD5EED);
    let a = simulate(&spec, &gains, &config).unwrap();
    let b = simulate(&spec, &gains, &config).unwrap();
    let identical = a.jmix1 == b.jmix1
        && a.jmix2 == b.jmix2
        && a.agent_costs == b.agent_costs
        && a.coupling_sq_t1 == b.coupling_sq_t1
        && (0..a.avg_all.len()).all(|k| a.avg_all[k] == b.avg_all[k]);
    report(
        "criterion 8 (determinism, library)",
        identical,
        "two runs with one seed are bit-identical",
    );
}

/// Supporting check for criterion 1's randomized instances: the identity
/// state-weight scaling example stays bit-stable across assemble calls (the
/// assembled operator is a pure function of the specification).
#[test]
fn assembly_determinism_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x8008);
    let spec = presets::random_valid_spec(2, 2, &mut rng);
    let a = assemble(&spec);
    let b = assemble(&spec);
    assert_eq!(a, b);
    let mut scaled = spec.clone();
    scaled.q1 = spec.q1.scale(3.0);
    scaled.q2 = spec.q2.scale(3.0);
    let c = assemble(&scaled);
    assert!(((&c.a_bar - a.a_bar.scale(3.0)).amax()) < 1e-12);
    assert!(((&c.f_til - a.f_til.scale(3.0)).amax()) < 1e-12);
}
