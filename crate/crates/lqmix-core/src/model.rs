//! Problem data for the two-team weakly-coupled linear-quadratic model,
//! validation of the standing assumptions (H1)-(H4), and coalition-matrix
//! algebra mapping nominal costs to effective costs.
//!
//! Team 1 agents follow dx_i = (A1 x_i + B1 u_i + F1 x^(N)) dt + sigma1 dW_i
//! with cost (1/2) E int ||x_i - Gamma1 x^(N)||^2_{Q1} + ||u_i||^2_{R1} dt,
//! and symmetrically for team 2, where x^(N) is the empirical average over
//! all N = N1 + N2 agents. The two teams weight each other's social costs by
//! the coalition scalars alpha (team 1 on team 2) and beta (team 2 on team 1).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative eigenvalue tolerance for the strict positivity checks of (H2):
/// lambda_min must exceed `PD_REL_TOL * max(lambda_max, 1)`.
pub const PD_REL_TOL: f64 = 1e-12;

/// Schema tag expected in serialized problem documents.
pub const SPEC_SCHEMA: &str = "mfgt-spec/1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: &'static str },
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("coalition matrix violates the covered block structure: {0}")]
    CoalitionStructure(String),
}

/// Gaussian initial-condition law (mean and covariance); samples are drawn
/// i.i.d. across the agents of a team.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    /// Point mass at `mean`.
    pub fn deterministic(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self { mean, cov: DMatrix::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.cov.iter().all(|&x| x == 0.0)
    }

    /// Square-root factor L with L L^T = cov, built from the symmetric
    /// eigendecomposition so that positive semi-definite covariances
    /// (including singular ones) are accepted.
    pub fn factor(&self) -> DMatrix<f64> {
        if self.is_deterministic() {
            return DMatrix::zeros(self.dim(), self.dim());
        }
        let sym = (&self.cov + self.cov.transpose()).scale(0.5);
        let eig = sym.symmetric_eigen();
        let roots = eig.eigenvalues.map(|l| if l > 0.0 { l.sqrt() } else { 0.0 });
        &eig.eigenvectors * DMatrix::from_diagonal(&roots)
    }

    pub fn variance_trace(&self) -> f64 {
        self.cov.trace()
    }
}

/// Piecewise-constant (in time) vector coefficient. The value on [t_k, t_{k+1})
/// is the value attached to the latest knot not exceeding t.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConst {
    knots: Vec<(f64, DVector<f64>)>,
}

impl PiecewiseConst {
    pub fn constant(value: DVector<f64>) -> Self {
        Self { knots: vec![(0.0, value)] }
    }

    pub fn from_knots(knots: Vec<(f64, DVector<f64>)>) -> Result<Self, ModelError> {
        if knots.is_empty() {
            return Err(ModelError::Dimension("piecewise coefficient needs at least one knot".into()));
        }
        if knots[0].0 != 0.0 {
            return Err(ModelError::Dimension("first knot must be at t = 0".into()));
        }
        let dim = knots[0].1.len();
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ModelError::Dimension("knot times must be strictly increasing".into()));
            }
        }
        if knots.iter().any(|(_, v)| v.len() != dim) {
            return Err(ModelError::Dimension("knot values must share one dimension".into()));
        }
        Ok(Self { knots })
    }

    pub fn dim(&self) -> usize {
        self.knots[0].1.len()
    }

    pub fn value(&self, t: f64) -> &DVector<f64> {
        let mut out = &self.knots[0].1;
        for (tk, v) in &self.knots {
            if *tk <= t {
                out = v;
            } else {
                break;
            }
        }
        out
    }

    pub fn knots(&self) -> &[(f64, DVector<f64>)] {
        &self.knots
    }

    pub fn is_finite(&self) -> bool {
        self.knots.iter().all(|(t, v)| t.is_finite() && v.iter().all(|x| x.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|(_, v)| v.iter().all(|&x| x == 0.0))
    }

    /// Stack two coefficients into one of dimension `self.dim() + other.dim()`,
    /// merging knot sets.
    pub fn stack(&self, other: &PiecewiseConst) -> PiecewiseConst {
        let mut times: Vec<f64> = self
            .knots
            .iter()
            .chain(other.knots.iter())
            .map(|(t, _)| *t)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let knots = times
            .into_iter()
            .map(|t| {
                let mut v = DVector::zeros(self.dim() + other.dim());
                v.rows_mut(0, self.dim()).copy_from(self.value(t));
                v.rows_mut(self.dim(), other.dim()).copy_from(other.value(t));
                (t, v)
            })
            .collect();
        PiecewiseConst { knots }
    }
}

/// Full coefficient set of the homogeneous two-team model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub sigma1: PiecewiseConst,
    pub sigma2: PiecewiseConst,
    /// Weight of team 2's social cost inside team 1's objective.
    pub alpha: f64,
    /// Weight of team 1's social cost inside team 2's objective.
    pub beta: f64,
    /// Horizon T.
    pub horizon: f64,
    /// Limiting population fractions (pi1, pi2), pi1 + pi2 = 1.
    pub pi1: f64,
    pub pi2: f64,
    pub init1: GaussianLaw,
    pub init2: GaussianLaw,
}

/// One violated standing assumption, with the offending field and the
/// measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Assumption tag: "H1".."H4", or "spec" for structural problems.
    pub assumption: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}): {}", self.assumption, self.message)
    }
}

fn violation(tag: &str, message: String) -> Violation {
    Violation { assumption: tag.to_string(), message }
}

fn min_max_eigenvalues(sym: &DMatrix<f64>) -> (f64, f64) {
    let s = (sym + sym.transpose()).scale(0.5);
    let ev = s.symmetric_eigen().eigenvalues;
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn check_pd(name: &str, mat: &DMatrix<f64>, out: &mut Vec<Violation>) {
    let asym = (mat - mat.transpose()).amax();
    let scale = mat.amax().max(1.0);
    if asym > 1e-10 * scale {
        out.push(violation("H2", format!("{name} not symmetric, max |M - M^T| = {asym:e}")));
        return;
    }
    let (min, max) = min_max_eigenvalues(mat);
    if min <= PD_REL_TOL * max.max(1.0) {
        out.push(violation(
            "H2",
            format!("{name} not positive definite, λ_min = {min}"),
        ));
    }
}

fn check_shape(name: &str, mat: &DMatrix<f64>, rows: usize, cols: usize, out: &mut Vec<Violation>) {
    if mat.nrows() != rows || mat.ncols() != cols {
        out.push(violation(
            "H1",
            format!("{name} must be {rows}x{cols}, got {}x{}", mat.nrows(), mat.ncols()),
        ));
    }
    if mat.iter().any(|x| !x.is_finite()) {
        out.push(violation("H1", format!("{name} contains non-finite entries")));
    }
}

fn check_law(tag: &str, name: &str, law: &GaussianLaw, n: usize, out: &mut Vec<Violation>) {
    if law.mean.len() != n || law.cov.nrows() != n || law.cov.ncols() != n {
        out.push(violation(tag, format!("{name} must have a {n}-dim mean and {n}x{n} covariance")));
        return;
    }
    let asym = (&law.cov - law.cov.transpose()).amax();
    if asym > 1e-10 * law.cov.amax().max(1.0) {
        out.push(violation(tag, format!("{name} covariance not symmetric, max |C - C^T| = {asym:e}")));
        return;
    }
    let (min, max) = min_max_eigenvalues(&law.cov);
    if min < -PD_REL_TOL * max.max(1.0) {
        out.push(violation(tag, format!("{name} covariance not positive semi-definite, λ_min = {min}")));
    }
}

/// Check the standing assumptions and structural consistency. Returns every
/// violated assumption; an empty list means the specification is admissible.
/// Purely diagnostic: never fails.
pub fn validate(spec: &ProblemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, m) = (spec.n, spec.m);
    if n == 0 || m == 0 {
        out.push(violation("spec", format!("state/control dimensions must be positive, got n={n}, m={m}")));
        return out;
    }

    // (H1): shapes, finiteness, bounded noise loadings.
    check_shape("A1", &spec.a1, n, n, &mut out);
    check_shape("A2", &spec.a2, n, n, &mut out);
    check_shape("F1", &spec.f1, n, n, &mut out);
    check_shape("F2", &spec.f2, n, n, &mut out);
    check_shape("Gamma1", &spec.gamma1, n, n, &mut out);
    check_shape("Gamma2", &spec.gamma2, n, n, &mut out);
    check_shape("B1", &spec.b1, n, m, &mut out);
    check_shape("B2", &spec.b2, n, m, &mut out);
    for (name, sig) in [("sigma1", &spec.sigma1), ("sigma2", &spec.sigma2)] {
        if sig.dim() != n {
            out.push(violation("H1", format!("{name} must be {n}-dimensional, got {}", sig.dim())));
        }
        if !sig.is_finite() {
            out.push(violation("H1", format!("{name} must be bounded on [0,T]; found non-finite knot")));
        }
    }

    // (H2): symmetric strictly positive definite weights.
    check_shape("Q1", &spec.q1, n, n, &mut out);
    check_shape("Q2", &spec.q2, n, n, &mut out);
    check_shape("R1", &spec.r1, m, m, &mut out);
    check_shape("R2", &spec.r2, m, m, &mut out);
    if spec.q1.nrows() == n && spec.q1.ncols() == n {
        check_pd("Q1", &spec.q1, &mut out);
    }
    if spec.q2.nrows() == n && spec.q2.ncols() == n {
        check_pd("Q2", &spec.q2, &mut out);
    }
    if spec.r1.nrows() == m && spec.r1.ncols() == m {
        check_pd("R1", &spec.r1, &mut out);
    }
    if spec.r2.nrows() == m && spec.r2.ncols() == m {
        check_pd("R2", &spec.r2, &mut out);
    }

    // (H3): well-formed initial laws.
    check_law("H3", "init1", &spec.init1, n, &mut out);
    check_law("H3", "init2", &spec.init2, n, &mut out);

    // (H4): limiting fractions form a strictly positive probability vector.
    if spec.pi1 <= 0.0 || spec.pi2 <= 0.0 {
        out.push(violation("H4", format!("min π_k must be > 0, got π = ({}, {})", spec.pi1, spec.pi2)));
    }
    if (spec.pi1 + spec.pi2 - 1.0).abs() > 1e-12 {
        out.push(violation("H4", format!("π_1 + π_2 must equal 1, got {}", spec.pi1 + spec.pi2)));
    }

    if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
        out.push(violation("spec", format!("horizon must be > 0, got {}", spec.horizon)));
    }
    if !(spec.alpha.is_finite() && spec.beta.is_finite()) {
        out.push(violation("spec", "coalition weights must be finite".into()));
    }
    out
}

/// Finite team sizes and their deviation from the limiting fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n1: usize,
    pub n2: usize,
}

impl PopulationSpec {
    pub fn new(n1: usize, n2: usize) -> Self {
        assert!(n1 > 0 && n2 > 0, "team sizes must be positive");
        Self { n1, n2 }
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn pi1_n(&self) -> f64 {
        self.n1 as f64 / self.total() as f64
    }

    pub fn pi2_n(&self) -> f64 {
        self.n2 as f64 / self.total() as f64
    }

    /// sup_k |pi_k^(N) - pi_k|.
    pub fn eps_n(&self, pi1: f64, pi2: f64) -> f64 {
        (self.pi1_n() - pi1).abs().max((self.pi2_n() - pi2).abs())
    }

    /// Split `n` by the limiting fractions, rounding team 1 to the nearest
    /// integer. The split is exact (eps_n = 0) whenever pi1 * n is integral.
    pub fn from_total(n: usize, pi1: f64) -> Self {
        let n1 = ((n as f64 * pi1).round() as usize).clamp(1, n - 1);
        Self::new(n1, n - n1)
    }
}

// ---------------------------------------------------------------------------
// Coalition matrices
// ---------------------------------------------------------------------------

/// Block-structured coalition matrix: the diagonal is covered by all-ones
/// square blocks of the declared sizes, and every off-diagonal block is a
/// constant multiple of the all-ones rectangle. Effective costs are
/// K = C * J for the nominal cost vector J.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionMatrix {
    block_sizes: Vec<usize>,
    /// Block-pair weights; diagonal entries are fixed to 1.
    weights: DMatrix<f64>,
}

/// Decision structure encoded by a coalition matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Coalition {
    /// Identity matrix: every agent targets only its own cost.
    MeanFieldGame,
    /// All-ones matrix: every agent targets the full social cost.
    MeanFieldTeam,
    /// Two diagonal blocks with scalar cross weights (alpha, beta).
    TwoTeam { alpha: f64, beta: f64, regime: Regime },
    /// Any other covered block structure.
    General { blocks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// alpha < 0 and beta < 0.
    Competitive,
    /// alpha > 0 and beta > 0.
    Cooperative,
    Asymmetric,
}

impl CoalitionMatrix {
    pub fn new(block_sizes: Vec<usize>, weights: DMatrix<f64>) -> Result<Self, ModelError> {
        let nc = block_sizes.len();
        if nc == 0 || block_sizes.contains(&0) {
            return Err(ModelError::CoalitionStructure("block sizes must be positive".into()));
        }
        if weights.nrows() != nc || weights.ncols() != nc {
            return Err(ModelError::Dimension(format!(
                "weights must be {nc}x{nc}, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if (0..nc).any(|i| weights[(i, i)] != 1.0) {
            return Err(ModelError::CoalitionStructure(
                "diagonal blocks are all-ones; their weight must be 1".into(),
            ));
        }
        Ok(Self { block_sizes, weights })
    }

    pub fn identity(n: usize) -> Self {
        let mut w = DMatrix::zeros(n, n);
        w.fill_diagonal(1.0);
        Self { block_sizes: vec![1; n], weights: w }
    }

    pub fn all_ones(n: usize) -> Self {
        assert!(n > 0);
        Self { block_sizes: vec![n], weights: DMatrix::from_element(1, 1, 1.0) }
    }

    /// Two-team structure: team sizes (n1, n2) with cross weights alpha
    /// (team 1 on team 2's costs) and beta (team 2 on team 1's costs).
    pub fn two_team(n1: usize, n2: usize, alpha: f64, beta: f64) -> Self {
        let weights = DMatrix::from_row_slice(2, 2, &[1.0, alpha, beta, 1.0]);
        Self { block_sizes: vec![n1, n2], weights }
    }

    pub fn size(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut c = DMatrix::zeros(n, n);
        let starts: Vec<usize> = self
            .block_sizes
            .iter()
            .scan(0usize, |acc, s| {
                let out = *acc;
                *acc += s;
                Some(out)
            })
            .collect();
        for (a, &ra) in starts.iter().enumerate() {
            for (b, &cb) in starts.iter().enumerate() {
                let w = self.weights[(a, b)];
                for i in 0..self.block_sizes[a] {
                    for j in 0..self.block_sizes[b] {
                        c[(ra + i, cb + j)] = w;
                    }
                }
            }
        }
        c
    }

    /// Recover the block representation from entries. Rejects matrices whose
    /// diagonal is not covered by all-ones blocks or whose off-diagonal
    /// blocks are not constant.
    pub fn from_dense(c: &DMatrix<f64>) -> Result<Self, ModelError> {
        let n = c.nrows();
        if n == 0 || c.ncols() != n {
            return Err(ModelError::CoalitionStructure("matrix must be square and non-empty".into()));
        }
        // Greedily extend each diagonal block while it stays all-ones.
        let mut sizes = Vec::new();
        let mut start = 0usize;
        while start < n {
            let mut end = start + 1;
            'grow: while end < n {
                for i in start..=end {
                    if c[(i, end)] != 1.0 || c[(end, i)] != 1.0 {
                        break 'grow;
                    }
                }
                end += 1;
            }
            if c[(start, start)] != 1.0 {
                return Err(ModelError::CoalitionStructure(format!(
                    "diagonal entry ({start},{start}) must be 1"
                )));
            }
            sizes.push(end - start);
            start = end;
        }
        let nc = sizes.len();
        let starts: Vec<usize> = sizes
            .iter()
            .scan(0usize, |acc, s| {
                let out = *acc;
                *acc += s;
                Some(out)
            })
            .collect();
        let mut weights = DMatrix::zeros(nc, nc);
        for a in 0..nc {
            for b in 0..nc {
                let w = c[(starts[a], starts[b])];
                for i in 0..sizes[a] {
                    for j in 0..sizes[b] {
                        if c[(starts[a] + i, starts[b] + j)] != w {
                            return Err(ModelError::CoalitionStructure(format!(
                                "off-diagonal block ({a},{b}) is not constant"
                            )));
                        }
                    }
                }
                // A maximal diagonal block must not continue into weight-1
                // neighbours both ways; if it does the greedy pass above
                // would have merged them, so reaching here with w == 1 on
                // both sides of the diagonal is fine (e.g. two-team with
                // alpha = 1, beta != 1).
                weights[(a, b)] = w;
            }
        }
        CoalitionMatrix::new(sizes, weights)
    }

    /// Classify by matrix entries alone (two structurally different
    /// representations of the same dense matrix classify identically).
    pub fn classify(&self) -> Coalition {
        Self::classify_dense(&self.to_dense()).expect("typed coalition matrices are structurally valid")
    }

    /// Classification of a raw dense matrix; rejects matrices without the
    /// covered block structure.
    pub fn classify_dense(c: &DMatrix<f64>) -> Result<Coalition, ModelError> {
        let canon = Self::from_dense(c)?;
        let n = canon.size();
        let nc = canon.block_sizes.len();
        if nc == n && canon.weights == DMatrix::identity(n, n) {
            return Ok(Coalition::MeanFieldGame);
        }
        if nc == 1 {
            return Ok(Coalition::MeanFieldTeam);
        }
        if nc == 2 {
            let alpha = canon.weights[(0, 1)];
            let beta = canon.weights[(1, 0)];
            let regime = if alpha < 0.0 && beta < 0.0 {
                Regime::Competitive
            } else if alpha > 0.0 && beta > 0.0 {
                Regime::Cooperative
            } else {
                Regime::Asymmetric
            };
            return Ok(Coalition::TwoTeam { alpha, beta, regime });
        }
        Ok(Coalition::General { blocks: nc })
    }

    /// Effective cost vector K = C * J.
    pub fn effective_costs(&self, nominal: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        if nominal.len() != self.size() {
            return Err(ModelError::Dimension(format!(
                "cost vector has length {}, coalition matrix has size {}",
                nominal.len(),
                self.size()
            )));
        }
        Ok(self.to_dense() * nominal)
    }
}

// ---------------------------------------------------------------------------
// JSON document (schema "mfgt-spec/1"); matrices are row-major nested arrays.
// ---------------------------------------------------------------------------

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ModelError> {
    let nr = rows.len();
    if nr == 0 {
        return Err(ModelError::Dimension("matrix must have at least one row".into()));
    }
    let nc = rows[0].len();
    if nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(ModelError::Dimension("matrix rows must be non-empty and equally long".into()));
    }
    let mut m = DMatrix::zeros(nr, nc);
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SigmaDoc {
    Constant(Vec<f64>),
    Steps(Vec<SigmaKnot>),
}

#[derive(Serialize, Deserialize)]
struct SigmaKnot {
    t: f64,
    value: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LawDoc {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SpecDoc {
    schema: String,
    n: usize,
    m: usize,
    a1: Vec<Vec<f64>>,
    a2: Vec<Vec<f64>>,
    b1: Vec<Vec<f64>>,
    b2: Vec<Vec<f64>>,
    f1: Vec<Vec<f64>>,
    f2: Vec<Vec<f64>>,
    gamma1: Vec<Vec<f64>>,
    gamma2: Vec<Vec<f64>>,
    q1: Vec<Vec<f64>>,
    q2: Vec<Vec<f64>>,
    r1: Vec<Vec<f64>>,
    r2: Vec<Vec<f64>>,
    sigma1: SigmaDoc,
    sigma2: SigmaDoc,
    alpha: f64,
    beta: f64,
    horizon: f64,
    pi: [f64; 2],
    init1: LawDoc,
    init2: LawDoc,
}

fn sigma_to_doc(s: &PiecewiseConst) -> SigmaDoc {
    if s.knots().len() == 1 {
        SigmaDoc::Constant(s.knots()[0].1.iter().cloned().collect())
    } else {
        SigmaDoc::Steps(
            s.knots()
                .iter()
                .map(|(t, v)| SigmaKnot { t: *t, value: v.iter().cloned().collect() })
                .collect(),
        )
    }
}

fn sigma_from_doc(doc: &SigmaDoc) -> Result<PiecewiseConst, ModelError> {
    match doc {
        SigmaDoc::Constant(v) => Ok(PiecewiseConst::constant(DVector::from_vec(v.clone()))),
        SigmaDoc::Steps(knots) => PiecewiseConst::from_knots(
            knots
                .iter()
                .map(|k| (k.t, DVector::from_vec(k.value.clone())))
                .collect(),
        ),
    }
}

impl ProblemSpec {
    pub fn to_json(&self) -> serde_json::Value {
        let doc = SpecDoc {
            schema: SPEC_SCHEMA.to_string(),
            n: self.n,
            m: self.m,
            a1: matrix_rows(&self.a1),
            a2: matrix_rows(&self.a2),
            b1: matrix_rows(&self.b1),
            b2: matrix_rows(&self.b2),
            f1: matrix_rows(&self.f1),
            f2: matrix_rows(&self.f2),
            gamma1: matrix_rows(&self.gamma1),
            gamma2: matrix_rows(&self.gamma2),
            q1: matrix_rows(&self.q1),
            q2: matrix_rows(&self.q2),
            r1: matrix_rows(&self.r1),
            r2: matrix_rows(&self.r2),
            sigma1: sigma_to_doc(&self.sigma1),
            sigma2: sigma_to_doc(&self.sigma2),
            alpha: self.alpha,
            beta: self.beta,
            horizon: self.horizon,
            pi: [self.pi1, self.pi2],
            init1: LawDoc { mean: self.init1.mean.iter().cloned().collect(), cov: matrix_rows(&self.init1.cov) },
            init2: LawDoc { mean: self.init2.mean.iter().cloned().collect(), cov: matrix_rows(&self.init2.cov) },
        };
        serde_json::to_value(doc).expect("spec document serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, ModelError> {
        let doc: SpecDoc = serde_json::from_value(value.clone())?;
        if doc.schema != SPEC_SCHEMA {
            return Err(ModelError::Schema { found: doc.schema, expected: SPEC_SCHEMA });
        }
        let spec = ProblemSpec {
            n: doc.n,
            m: doc.m,
            a1: matrix_from_rows(&doc.a1)?,
            a2: matrix_from_rows(&doc.a2)?,
            b1: matrix_from_rows(&doc.b1)?,
            b2: matrix_from_rows(&doc.b2)?,
            f1: matrix_from_rows(&doc.f1)?,
            f2: matrix_from_rows(&doc.f2)?,
            gamma1: matrix_from_rows(&doc.gamma1)?,
            gamma2: matrix_from_rows(&doc.gamma2)?,
            q1: matrix_from_rows(&doc.q1)?,
            q2: matrix_from_rows(&doc.q2)?,
            r1: matrix_from_rows(&doc.r1)?,
            r2: matrix_from_rows(&doc.r2)?,
            sigma1: sigma_from_doc(&doc.sigma1)?,
            sigma2: sigma_from_doc(&doc.sigma2)?,
            alpha: doc.alpha,
            beta: doc.beta,
            horizon: doc.horizon,
            pi1: doc.pi[0],
            pi2: doc.pi[1],
            init1: GaussianLaw::new(DVector::from_vec(doc.init1.mean), matrix_from_rows(&doc.init1.cov)?),
            init2: GaussianLaw::new(DVector::from_vec(doc.init2.mean), matrix_from_rows(&doc.init2.cov)?),
        };
        Ok(spec)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        Self::from_json(&value)
    }
}
