//! Command implementations. Each runs a stage of the pipeline, writes its
//! artifacts, and (in check mode) gates on the declared tolerances.

use std::fs;
use std::path::Path;

use lqmix_core::ccmat::{assemble, costate, CcMatrices};
use lqmix_core::model::{ModelError, PopulationSpec, ProblemSpec};
use lqmix_core::oracle::{decentralized_cost_exact, optimality_gap_study, OracleError};
use lqmix_core::presets;
use lqmix_core::riccati::{
    residuals, solution_distance, solve_closed_form, solve_integrated, RiccatiError,
    RiccatiSolution,
};
use lqmix_core::sim::{coupling_error_study, simulate, SimError, SimulationConfig, SimulationResult};
use lqmix_core::strategy::{fbsde_residual, propagate_mean_field, MeanFieldPath, StrategyGains};
use lqmix_core::stats::kendall_tau_vs_index;

use crate::manifest::{sha256_hex, summarize_checks, CheckItem, Manifest, OutputWriter};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: specification violations, schema problems, bad manifests.
    Validation(String),
    /// Numerical failure: blow-up, near-singular factors, non-finite states.
    Numerical(String),
    /// Declared tolerance failed in check mode.
    Tolerance(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Tolerance(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Tolerance(_) => "tolerance",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::Tolerance(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RiccatiError> for CliError {
    fn from(e: RiccatiError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Validation(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::DimensionOverflow { .. } | OracleError::Config(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

pub fn load_spec(path: &Path) -> Result<(ProblemSpec, String), CliError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Validation("specification file is not UTF-8".into()))?;
    let spec = ProblemSpec::from_json_str(&text)?;
    Ok((spec, sha256_hex(&bytes)))
}

fn require_valid(spec: &ProblemSpec) -> Result<(), CliError> {
    let violations = lqmix_core::validate(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(CliError::Validation(lines.join("; ")))
    }
}

fn gate(checks: &[CheckItem], check_mode: bool) -> Result<(), CliError> {
    if check_mode {
        let failed: Vec<&CheckItem> = checks.iter().filter(|c| !c.pass).collect();
        if !failed.is_empty() {
            let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
            return Err(CliError::Tolerance(format!("checks failed: {}", names.join(", "))));
        }
    }
    Ok(())
}

pub struct Pipeline {
    pub cc: CcMatrices,
    pub closed: RiccatiSolution,
    pub mf: MeanFieldPath,
    pub gains: StrategyGains,
}

pub fn solve_pipeline(spec: &ProblemSpec, grid: usize) -> Result<Pipeline, CliError> {
    let cc = assemble(spec);
    let closed = solve_closed_form(&cc, spec.horizon, grid)?;
    let mf = propagate_mean_field(&cc, &closed, spec)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let gains = StrategyGains::new(&closed, &mf);
    Ok(Pipeline { cc, closed, mf, gains })
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub fn run_validate(spec_path: &Path) -> Result<(), CliError> {
    let (spec, _) = load_spec(spec_path)?;
    let violations = lqmix_core::validate(&spec);
    if violations.is_empty() {
        println!("ok: all standing assumptions hold (n={}, m={})", spec.n, spec.m);
        Ok(())
    } else {
        for v in &violations {
            println!("violation {v}");
        }
        Err(CliError::Validation(format!("{} violated assumption(s)", violations.len())))
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

/// Independent scalar reduction check: with n = m = 1 and no mean-field
/// coupling the own-state entries of P obey the classical scalar Riccati
/// equations; integrate them with a tiny standalone RK4 and compare.
#[allow(clippy::needless_range_loop)]
fn scalar_reduction_deviation(spec: &ProblemSpec, sol: &RiccatiSolution) -> Option<f64> {
    let decoupled = spec.n == 1
        && spec.m == 1
        && spec.f1.amax() == 0.0
        && spec.f2.amax() == 0.0
        && spec.gamma1.amax() == 0.0
        && spec.gamma2.amax() == 0.0;
    if !decoupled {
        return None;
    }
    let steps = sol.grid.steps;
    let h = -sol.grid.dt();
    let mut worst = 0.0f64;
    for (team, row, col) in [(0usize, costate::OWN_T1, 0usize), (1, costate::OWN_T2, 1)] {
        let (a, b, q, r) = if team == 0 {
            (spec.a1[(0, 0)], spec.b1[(0, 0)], spec.q1[(0, 0)], spec.r1[(0, 0)])
        } else {
            (spec.a2[(0, 0)], spec.b2[(0, 0)], spec.q2[(0, 0)], spec.r2[(0, 0)])
        };
        // Sign conventions of the costate load: p' = -2 a p + p^2 b^2/r - q.
        let f = |p: f64| -2.0 * a * p + p * p * b * b / r - q;
        let mut p = 0.0f64;
        let mut reference = vec![0.0f64; steps + 1];
        reference[steps] = 0.0;
        for idx in (0..steps).rev() {
            let k1 = f(p);
            let k2 = f(p + 0.5 * h * k1);
            let k3 = f(p + 0.5 * h * k2);
            let k4 = f(p + h * k3);
            p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            reference[idx] = p;
        }
        for idx in 0..=steps {
            worst = worst.max((sol.p[idx][(row, col)] - reference[idx]).abs());
        }
    }
    Some(worst)
}

pub fn run_solve(
    spec_path: &Path,
    out: &Path,
    grid: usize,
    seed: u64,
    check: bool,
) -> Result<(), CliError> {
    let (spec, spec_sha) = load_spec(spec_path)?;
    require_valid(&spec)?;
    let mut manifest = Manifest::new("solve");
    manifest.spec_path = Some(spec_path.display().to_string());
    manifest.spec_sha256 = Some(spec_sha);
    manifest.grid = grid;
    manifest.seed = seed;
    manifest.check = check;
    manifest.validate().map_err(CliError::Validation)?;
    let writer = OutputWriter::new(out, &manifest)?;

    let pipeline = solve_pipeline(&spec, grid)?;
    let integrated = solve_integrated(&pipeline.cc, spec.horizon, grid)?;
    let (dist, scale) = solution_distance(&pipeline.closed, &integrated);
    let rel = dist / (1.0 + scale);
    let coeff = 1.0 + pipeline.cc.coefficient_scale();
    let (rp, rk) = residuals(&pipeline.cc, &integrated)?;
    let res_rel = rp.max(rk) / coeff;
    let fbsde = fbsde_residual(&pipeline.cc, &pipeline.closed, &pipeline.mf);

    let mut checks = vec![
        CheckItem::new(
            "cross-method-agreement",
            rel <= 1e-5,
            format!("max relative distance closed-form vs RK4 = {rel:.3e} (tol 1e-5)"),
        ),
        CheckItem::new(
            "riccati-residual",
            res_rel <= 1e-4,
            format!("max relative finite-difference residual = {res_rel:.3e} (tol 1e-4)"),
        ),
        CheckItem::new(
            "costate-consistency",
            fbsde.max_residual <= 1e-3 * coeff,
            format!(
                "backward-equation defect along the mean path = {:.3e} (tol {:.1e})",
                fbsde.max_residual,
                1e-3 * coeff
            ),
        ),
    ];
    if let Some(dev) = scalar_reduction_deviation(&spec, &pipeline.closed) {
        checks.push(CheckItem::new(
            "scalar-reduction",
            dev <= 1e-6,
            format!("own-state entries vs standalone scalar Riccati = {dev:.3e} (tol 1e-6)"),
        ));
    }

    writer.write_csv("riccati.csv", &pipeline.closed.export_csv())?;
    writer.write_csv("meanfield.csv", &pipeline.mf.export_csv())?;
    writer.write_json("blocks.json", pipeline.cc.dump_json())?;
    let mut meta = pipeline.closed.export_meta_json();
    meta["cross_method_relative_distance"] = rel.into();
    meta["residual_relative"] = res_rel.into();
    meta["fbsde_max_residual"] = fbsde.max_residual.into();
    meta["checks"] = serde_json::to_value(&checks).unwrap();
    writer.write_json("riccati_meta.json", meta)?;
    let summary = summarize_checks("solve", &writer, &checks);
    writer.write_text("summary.txt", &summary)?;
    print!("{summary}");
    gate(&checks, check)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn averages_csv(result: &SimulationResult) -> String {
    let n = result.avg_all[0].len();
    let mut out = String::from("t");
    for tag in ["avg_all", "avg_t1", "avg_t2"] {
        for c in 0..n {
            out.push_str(&format!(",{tag}_{c}"));
        }
    }
    out.push_str(",coupling_sq_t1,coupling_sq_t2\n");
    for k in 0..result.grid.len() {
        out.push_str(&format!("{}", result.grid.time(k)));
        for vec in [&result.avg_all[k], &result.avg_t1[k], &result.avg_t2[k]] {
            for v in vec.iter() {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push_str(&format!(
            ",{},{}\n",
            result.coupling_sq_t1[k], result.coupling_sq_t2[k]
        ));
    }
    out
}

fn sim_report(spec: &ProblemSpec, result: &SimulationResult) -> serde_json::Value {
    let (pc1, se1) = result.per_capita_jmix1();
    let (pc2, se2) = result.per_capita_jmix2();
    let sup1 = result.coupling_sup_t1();
    let sup2 = result.coupling_sup_t2();
    serde_json::json!({
        "n1": result.pop.n1,
        "n2": result.pop.n2,
        "eps_n": result.pop.eps_n(spec.pi1, spec.pi2),
        "n_paths": result.n_paths,
        "steps": result.grid.steps,
        "dt": result.grid.dt(),
        "jmix1_per_capita": {"mean": pc1, "stderr": se1},
        "jmix2_per_capita": {"mean": pc2, "stderr": se2},
        "coupling_sup_t1": {"value": sup1.value, "stderr": sup1.stderr, "at_time": sup1.at_time},
        "coupling_sup_t2": {"value": sup2.value, "stderr": sup2.stderr, "at_time": sup2.at_time},
        "average_identity_defect": result.average_identity_defect(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_simulate(
    spec_path: &Path,
    out: &Path,
    n_list: &[usize],
    paths: usize,
    seed: u64,
    grid: usize,
    check: bool,
) -> Result<(), CliError> {
    let (spec, spec_sha) = load_spec(spec_path)?;
    require_valid(&spec)?;
    let total = *n_list.first().ok_or_else(|| CliError::Validation("need a population size".into()))?;
    let mut manifest = Manifest::new("simulate");
    manifest.spec_path = Some(spec_path.display().to_string());
    manifest.spec_sha256 = Some(spec_sha);
    manifest.n_list = vec![total];
    manifest.paths = paths;
    manifest.seed = seed;
    manifest.grid = grid;
    manifest.check = check;
    manifest.validate().map_err(CliError::Validation)?;
    let writer = OutputWriter::new(out, &manifest)?;

    let pipeline = solve_pipeline(&spec, grid)?;
    let pop = PopulationSpec::from_total(total, spec.pi1);
    let config = SimulationConfig::new(pop, paths, seed);
    let result = simulate(&spec, &pipeline.gains, &config)?;

    let defect = result.average_identity_defect();
    let checks = vec![CheckItem::new(
        "average-identity",
        defect <= 1e-12,
        format!("worst | x_all - pi1N x_t1 - pi2N x_t2 | = {defect:.3e} (tol 1e-12)"),
    )];
    writer.write_csv("averages.csv", &averages_csv(&result))?;
    writer.write_json("sim_summary.json", sim_report(&spec, &result))?;
    let mut summary = summarize_checks("simulate", &writer, &checks);
    let (pc1, se1) = result.per_capita_jmix1();
    let (pc2, se2) = result.per_capita_jmix2();
    summary.push_str(&format!(
        "\nN = {} (N1 = {}, N2 = {}), paths = {}\nJ_mix1/N1 = {pc1} +- {se1}\nJ_mix2/N2 = {pc2} +- {se2}\n",
        pop.total(),
        pop.n1,
        pop.n2,
        paths
    ));
    writer.write_text("summary.txt", &summary)?;
    print!("{summary}");
    gate(&checks, check)
}

// ---------------------------------------------------------------------------
// converge-mf
// ---------------------------------------------------------------------------

fn is_drift_free(spec: &ProblemSpec) -> bool {
    spec.a1.amax() == 0.0
        && spec.a2.amax() == 0.0
        && spec.b1.amax() == 0.0
        && spec.b2.amax() == 0.0
        && spec.f1.amax() == 0.0
        && spec.f2.amax() == 0.0
        && spec.gamma1.amax() == 0.0
        && spec.gamma2.amax() == 0.0
}

/// Var(init) + int_0^T ||sigma(s)||^2 ds for the closed-form pure-noise
/// coupling level.
fn noise_level_numerator(spec: &ProblemSpec, team: usize) -> f64 {
    let (law, sig) = if team == 1 { (&spec.init1, &spec.sigma1) } else { (&spec.init2, &spec.sigma2) };
    let mut integral = 0.0;
    let knots = sig.knots();
    for (i, (t0, v)) in knots.iter().enumerate() {
        let t1 = knots.get(i + 1).map(|(t, _)| *t).unwrap_or(spec.horizon).min(spec.horizon);
        if t1 > *t0 {
            integral += (t1 - t0) * v.norm_squared();
        }
    }
    law.variance_trace() + integral
}

#[allow(clippy::too_many_arguments)]
pub fn run_converge_mf(
    spec_path: &Path,
    out: &Path,
    n_list: &[usize],
    paths: usize,
    seed: u64,
    grid: usize,
    check: bool,
) -> Result<(), CliError> {
    let (spec, spec_sha) = load_spec(spec_path)?;
    require_valid(&spec)?;
    let mut manifest = Manifest::new("converge-mf");
    manifest.spec_path = Some(spec_path.display().to_string());
    manifest.spec_sha256 = Some(spec_sha);
    manifest.n_list = n_list.to_vec();
    manifest.paths = paths;
    manifest.seed = seed;
    manifest.grid = grid;
    manifest.check = check;
    manifest.validate().map_err(CliError::Validation)?;
    let writer = OutputWriter::new(out, &manifest)?;

    let pipeline = solve_pipeline(&spec, grid)?;
    let base = SimulationConfig::new(PopulationSpec::new(1, 1), paths, seed);
    let study = coupling_error_study(&spec, &pipeline.gains, n_list, &base)?;

    let mut csv = String::from("n,n1,n2,eps_n,sup_t1,se_t1,sup_t2,se_t2,predicted_t1,predicted_t2\n");
    let drift_free = is_drift_free(&spec);
    let mut level_checks_ok = true;
    let mut worst_level_dev = 0.0f64;
    for row in &study.rows {
        let (p1, p2) = if drift_free {
            (
                noise_level_numerator(&spec, 1) / row.n1 as f64,
                noise_level_numerator(&spec, 2) / row.n2 as f64,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        if drift_free {
            let dev1 = (row.sup_t1 - p1).abs() / (3.0 * row.se_t1 + 1e-3 * p1);
            let dev2 = (row.sup_t2 - p2).abs() / (3.0 * row.se_t2 + 1e-3 * p2);
            worst_level_dev = worst_level_dev.max(dev1).max(dev2);
            level_checks_ok &= dev1 <= 1.0 && dev2 <= 1.0;
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.n, row.n1, row.n2, row.eps_n, row.sup_t1, row.se_t1, row.sup_t2, row.se_t2, p1, p2
        ));
    }
    let slope_ok = (-1.15..=-0.85).contains(&study.slope_t1.slope)
        && (-1.15..=-0.85).contains(&study.slope_t2.slope);
    let mut checks = vec![CheckItem::new(
        "coupling-rate",
        slope_ok,
        format!(
            "log-log slopes {:.3} (team 1) / {:.3} (team 2), window [-1.15, -0.85]",
            study.slope_t1.slope, study.slope_t2.slope
        ),
    )];
    if drift_free {
        checks.push(CheckItem::new(
            "noise-level",
            level_checks_ok,
            format!(
                "worst deviation from (Var + int ||sigma||^2)/N_k = {worst_level_dev:.2} of the 3-SE budget"
            ),
        ));
    }

    writer.write_csv("mf_convergence.csv", &csv)?;
    writer.write_json(
        "mf_convergence.json",
        serde_json::json!({
            "rows": study.rows,
            "slope_t1": {"value": study.slope_t1.slope, "stderr": study.slope_t1.stderr},
            "slope_t2": {"value": study.slope_t2.slope, "stderr": study.slope_t2.stderr},
            "checks": checks,
        }),
    )?;
    let summary = summarize_checks("converge-mf", &writer, &checks);
    writer.write_text("summary.txt", &summary)?;
    print!("{summary}");
    gate(&checks, check)
}

// ---------------------------------------------------------------------------
// converge-gap
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn run_converge_gap(
    spec_path: &Path,
    out: &Path,
    n_list: &[usize],
    paths: usize,
    seed: u64,
    grid: usize,
    check: bool,
) -> Result<(), CliError> {
    let (spec, spec_sha) = load_spec(spec_path)?;
    require_valid(&spec)?;
    let mut manifest = Manifest::new("converge-gap");
    manifest.spec_path = Some(spec_path.display().to_string());
    manifest.spec_sha256 = Some(spec_sha);
    manifest.n_list = n_list.to_vec();
    manifest.paths = paths;
    manifest.seed = seed;
    manifest.grid = grid;
    manifest.check = check;
    manifest.validate().map_err(CliError::Validation)?;
    let writer = OutputWriter::new(out, &manifest)?;

    let pipeline = solve_pipeline(&spec, grid)?;
    let (checks, extra) = run_gap_study(&spec, &pipeline, n_list, &writer)?;
    let mut summary = summarize_checks("converge-gap", &writer, &checks);
    summary.push_str(&extra);
    writer.write_text("summary.txt", &summary)?;
    print!("{summary}");
    gate(&checks, check)
}

/// Runs the gap sweep, writes its table artifacts, and returns the check
/// items plus extra summary lines for the caller to compose.
fn run_gap_study(
    spec: &ProblemSpec,
    pipeline: &Pipeline,
    n_list: &[usize],
    writer: &OutputWriter,
) -> Result<(Vec<CheckItem>, String), CliError> {
    let study = optimality_gap_study(spec, &pipeline.gains, n_list, 1)?;
    let mut csv =
        String::from("n,n1,n2,eps_n,jmix1_pc,oracle1_pc,gap1,jmix2_pc,oracle2_pc,gap2\n");
    for row in &study.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.n,
            row.n1,
            row.n2,
            row.eps_n,
            row.jmix1_pc,
            row.oracle1_pc,
            row.gap1,
            row.jmix2_pc,
            row.oracle2_pc,
            row.gap2
        ));
    }
    let nonneg = study.rows.iter().all(|r| r.gap1 >= -1e-10 && r.gap2 >= -1e-10);
    let mut checks = vec![CheckItem::new(
        "gap-nonnegative",
        nonneg,
        "per-capita gaps against the exact oracle are nonnegative at every N".into(),
    )];
    // Rate gates are pinned for the fully cooperative configuration.
    if spec.alpha == 1.0 && spec.beta == 1.0 {
        checks.push(CheckItem::new(
            "gap-monotone",
            study.tau1 <= -0.5 && study.tau2 <= -0.5,
            format!("Kendall tau ({:.2}, {:.2}) <= -0.5", study.tau1, study.tau2),
        ));
        checks.push(CheckItem::new(
            "gap-rate",
            study.slope1.slope <= -0.35 && study.slope2.slope <= -0.35,
            format!(
                "fitted log-log slopes ({:.3}, {:.3}) <= -0.35",
                study.slope1.slope, study.slope2.slope
            ),
        ));
    }
    let per_capita: Vec<f64> = study.rows.iter().map(|r| r.jmix1_pc * r.n1 as f64 / r.n as f64).collect();
    let trend_tau = kendall_tau_vs_index(&per_capita);

    writer.write_csv("gap_study.csv", &csv)?;
    writer.write_json(
        "gap_study.json",
        serde_json::json!({
            "rows": study.rows,
            "slope1": {"value": study.slope1.slope, "stderr": study.slope1.stderr},
            "slope2": {"value": study.slope2.slope, "stderr": study.slope2.stderr},
            "tau1": study.tau1,
            "tau2": study.tau2,
            "per_capita_jmix1_over_n": per_capita,
            "per_capita_trend_tau": trend_tau,
            "checks": checks,
        }),
    )?;
    let extra = format!(
        "\nJ_mix1/N across the sweep: {per_capita:?} (Kendall tau {trend_tau:.2})\n"
    );
    Ok((checks, extra))
}

// ---------------------------------------------------------------------------
// case
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn run_case(
    name: &str,
    spec_path: Option<&Path>,
    out: &Path,
    n_list: &[usize],
    paths: usize,
    seed: u64,
    grid: usize,
    check: bool,
) -> Result<(), CliError> {
    let (mut spec, spec_sha) = match spec_path {
        Some(path) => {
            let (s, sha) = load_spec(path)?;
            (s, Some(sha))
        }
        None => (
            presets::by_case_name(name)
                .ok_or_else(|| CliError::Validation(format!("unknown case name {name:?}; known: {:?}", presets::CASE_NAMES)))?,
            None,
        ),
    };
    // The case fixes the coalition weights even over a supplied base spec.
    let (alpha, beta) = match name {
        "coop" => (1.0, 1.0),
        "zerosum" => (-1.0, -1.0),
        "onesided-coop" => (1.0, 0.0),
        "onesided-comp" => (-1.0, 0.0),
        _ => {
            return Err(CliError::Validation(format!(
                "unknown case name {name:?}; known: {:?}",
                presets::CASE_NAMES
            )))
        }
    };
    spec.alpha = alpha;
    spec.beta = beta;
    require_valid(&spec)?;

    let mut manifest = Manifest::new("case");
    manifest.case = Some(name.to_string());
    manifest.spec_path = spec_path.map(|p| p.display().to_string());
    manifest.spec_sha256 = spec_sha;
    manifest.n_list = n_list.to_vec();
    manifest.paths = paths;
    manifest.seed = seed;
    manifest.grid = grid;
    manifest.check = check;
    manifest.validate().map_err(CliError::Validation)?;
    let writer = OutputWriter::new(out, &manifest)?;

    let pipeline = solve_pipeline(&spec, grid)?;
    writer.write_csv("riccati.csv", &pipeline.closed.export_csv())?;
    writer.write_csv("meanfield.csv", &pipeline.mf.export_csv())?;
    writer.write_json("blocks.json", pipeline.cc.dump_json())?;

    let total = *n_list.last().unwrap_or(&32);
    let pop = PopulationSpec::from_total(total, spec.pi1);
    let config = SimulationConfig::new(pop, paths, seed);
    let result = simulate(&spec, &pipeline.gains, &config)?;
    writer.write_csv("averages.csv", &averages_csv(&result))?;
    writer.write_json("sim_summary.json", sim_report(&spec, &result))?;

    // Case-specific diagnostics.
    let mut checks = Vec::new();
    let identical = spec.a1 == spec.a2
        && spec.b1 == spec.b2
        && spec.f1 == spec.f2
        && spec.gamma1 == spec.gamma2
        && spec.q1 == spec.q2
        && spec.r1 == spec.r2
        && spec.init1 == spec.init2;
    let mut diagnostics = serde_json::Map::new();
    diagnostics.insert("case".into(), name.into());
    diagnostics.insert("alpha".into(), alpha.into());
    diagnostics.insert("beta".into(), beta.into());
    diagnostics.insert("identical_coefficients".into(), identical.into());

    if name == "coop" {
        // Homogeneity: the four aggregate adjoints of the costate solution
        // coincide under identical coefficients.
        let n = spec.n;
        let mut deviation = 0.0f64;
        for k in 0..pipeline.closed.grid.len() {
            let ey = &pipeline.closed.p[k] * &pipeline.mf.ex[k];
            for &a in &costate::AGGREGATES {
                for &b in &costate::AGGREGATES {
                    for c in 0..n {
                        deviation = deviation.max((ey[a * n + c] - ey[b * n + c]).abs());
                    }
                }
            }
        }
        diagnostics.insert("aggregate_adjoint_deviation".into(), deviation.into());
        if identical {
            checks.push(CheckItem::new(
                "homogeneity",
                deviation <= 1e-6,
                format!("max pairwise deviation of the aggregate adjoints = {deviation:.3e} (tol 1e-6)"),
            ));
        }
    }

    let exact = decentralized_cost_exact(&spec, &pipeline.gains, pop, 1)?;
    diagnostics.insert("j1_soc".into(), exact.j1_soc.into());
    diagnostics.insert("j2_soc".into(), exact.j2_soc.into());
    diagnostics.insert("jmix1".into(), exact.jmix1.into());
    diagnostics.insert("jmix2".into(), exact.jmix2.into());
    let scale = exact.j1_soc.abs() + exact.j2_soc.abs();
    let mix_identity =
        ((exact.jmix1 + exact.jmix2) - ((1.0 + beta) * exact.j1_soc + (1.0 + alpha) * exact.j2_soc)).abs();
    diagnostics.insert("mix_identity_defect".into(), mix_identity.into());
    checks.push(CheckItem::new(
        "mix-identity",
        mix_identity <= 1e-12 * scale.max(1.0),
        format!("J_mix1 + J_mix2 vs (1+alpha) J1 + (1+beta) J2: defect {mix_identity:.3e}"),
    ));
    if name == "zerosum" {
        let cancel = (exact.jmix1 + exact.jmix2).abs();
        diagnostics.insert("cancellation".into(), cancel.into());
        checks.push(CheckItem::new(
            "zero-sum-cancellation",
            cancel <= 1e-12 * scale.max(1.0),
            format!("|J_mix1 + J_mix2| = {cancel:.3e} on cost scale {scale:.3e}"),
        ));
    }
    if beta == 0.0 {
        let reduction = (exact.jmix2 - exact.j2_soc).abs();
        diagnostics.insert("team2_reduction_defect".into(), reduction.into());
        checks.push(CheckItem::new(
            "team2-social-reduction",
            reduction <= 1e-12 * exact.j2_soc.abs().max(1.0),
            format!("|J_mix2 - J2_soc| = {reduction:.3e}"),
        ));
    }

    writer.write_json("case_diagnostics.json", serde_json::Value::Object(diagnostics))?;

    // Gap study over the requested sweep; its tolerance checks join the
    // case diagnostics.
    let (gap_checks, extra) = run_gap_study(&spec, &pipeline, n_list, &writer)?;
    checks.extend(gap_checks);

    let mut summary = summarize_checks(&format!("case {name}"), &writer, &checks);
    summary.push_str(&extra);
    writer.write_text("summary.txt", &summary)?;
    print!("{summary}");
    gate(&checks, check)
}
