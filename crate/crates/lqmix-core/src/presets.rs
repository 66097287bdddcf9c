//! Built-in problem instances: the scalar reduction used as an analytic
//! anchor, a pure-noise population with a closed-form coupling level, the
//! four named coalition-weight cases, and randomized admissible instances
//! for solver cross-checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::model::{GaussianLaw, PiecewiseConst, ProblemSpec};

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Decoupled scalar instance: A = 0, B = Q = R = 1, F = Gamma = 0, T = 1,
/// deterministic unit starts, no noise. Its own-state Riccati entry is
/// tanh(1 - t), the closed-loop mean is cosh(1-t)/cosh(1) and the
/// per-agent cost is tanh(1)/2.
pub fn scalar_decoupled() -> ProblemSpec {
    ProblemSpec {
        n: 1,
        m: 1,
        a1: scalar(0.0),
        a2: scalar(0.0),
        b1: scalar(1.0),
        b2: scalar(1.0),
        f1: scalar(0.0),
        f2: scalar(0.0),
        gamma1: scalar(0.0),
        gamma2: scalar(0.0),
        q1: scalar(1.0),
        q2: scalar(1.0),
        r1: scalar(1.0),
        r2: scalar(1.0),
        sigma1: PiecewiseConst::constant(DVector::zeros(1)),
        sigma2: PiecewiseConst::constant(DVector::zeros(1)),
        alpha: 1.0,
        beta: 1.0,
        horizon: 1.0,
        pi1: 0.5,
        pi2: 0.5,
        init1: GaussianLaw::deterministic(DVector::from_element(1, 1.0)),
        init2: GaussianLaw::deterministic(DVector::from_element(1, 1.0)),
    }
}

/// Driftless controlled-by-nothing population: states are Brownian motions
/// around their initial draws, so the squared team-average deviation is
/// exactly (Var(init) + sigma^2 t) / N_k. Fractions (0.6, 0.4) keep the
/// default population sweeps at zero fraction deviation.
pub fn pure_noise(init_var: f64, sigma: f64) -> ProblemSpec {
    let mut spec = scalar_decoupled();
    spec.b1 = scalar(0.0);
    spec.b2 = scalar(0.0);
    spec.sigma1 = PiecewiseConst::constant(DVector::from_element(1, sigma));
    spec.sigma2 = PiecewiseConst::constant(DVector::from_element(1, sigma));
    spec.init1 = GaussianLaw::new(DVector::from_element(1, 0.3), DMatrix::from_element(1, 1, init_var));
    spec.init2 = GaussianLaw::new(DVector::from_element(1, 0.1), DMatrix::from_element(1, 1, init_var));
    spec.pi1 = 0.6;
    spec.pi2 = 0.4;
    spec
}

fn coupled_identical(alpha: f64, beta: f64) -> ProblemSpec {
    ProblemSpec {
        n: 1,
        m: 1,
        a1: scalar(-0.2),
        a2: scalar(-0.2),
        b1: scalar(1.0),
        b2: scalar(1.0),
        f1: scalar(0.4),
        f2: scalar(0.4),
        gamma1: scalar(0.5),
        gamma2: scalar(0.5),
        q1: scalar(1.0),
        q2: scalar(1.0),
        r1: scalar(1.0),
        r2: scalar(1.0),
        sigma1: PiecewiseConst::constant(DVector::from_element(1, 0.4)),
        sigma2: PiecewiseConst::constant(DVector::from_element(1, 0.4)),
        alpha,
        beta,
        horizon: 1.0,
        pi1: 0.5,
        pi2: 0.5,
        init1: GaussianLaw::new(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 0.25)),
        init2: GaussianLaw::new(DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 0.25)),
    }
}

/// Fully cooperative case (alpha = beta = 1) with identical coefficients
/// and a common initial law: the mixed costs coincide and the four
/// aggregate adjoints of the CC system collapse to one.
pub fn coop() -> ProblemSpec {
    coupled_identical(1.0, 1.0)
}

/// Zero-sum outer layer (alpha = beta = -1): the two mixed costs cancel
/// identically.
pub fn zerosum() -> ProblemSpec {
    coupled_identical(-1.0, -1.0)
}

/// One-sided cooperation (alpha = 1, beta = 0): team 2 runs a plain social
/// optimum while team 1 also internalizes team 2's cost.
pub fn onesided_coop() -> ProblemSpec {
    coupled_identical(1.0, 0.0)
}

/// One-sided competition (alpha = -1, beta = 0).
pub fn onesided_comp() -> ProblemSpec {
    coupled_identical(-1.0, 0.0)
}

/// Named case lookup used by the command-line runner.
pub fn by_case_name(name: &str) -> Option<ProblemSpec> {
    match name {
        "coop" => Some(coop()),
        "zerosum" => Some(zerosum()),
        "onesided-coop" => Some(onesided_coop()),
        "onesided-comp" => Some(onesided_comp()),
        _ => None,
    }
}

pub const CASE_NAMES: [&str; 4] = ["coop", "zerosum", "onesided-coop", "onesided-comp"];

/// A fixed two-dimensional instance for shape-sensitive tests.
pub fn coupled_two_dim(pi1: f64, pi2: f64) -> ProblemSpec {
    let n = 2;
    let m = 2;
    ProblemSpec {
        n,
        m,
        a1: DMatrix::from_row_slice(n, n, &[-0.3, 0.2, 0.0, -0.5]),
        a2: DMatrix::from_row_slice(n, n, &[-0.4, 0.1, -0.1, -0.2]),
        b1: DMatrix::from_row_slice(n, m, &[1.0, 0.0, 0.2, 0.8]),
        b2: DMatrix::from_row_slice(n, m, &[0.9, 0.1, 0.0, 1.0]),
        f1: DMatrix::from_row_slice(n, n, &[0.2, -0.1, 0.05, 0.15]),
        f2: DMatrix::from_row_slice(n, n, &[0.1, 0.0, -0.2, 0.25]),
        gamma1: DMatrix::from_row_slice(n, n, &[0.4, 0.0, 0.1, 0.3]),
        gamma2: DMatrix::from_row_slice(n, n, &[0.2, -0.1, 0.0, 0.5]),
        q1: DMatrix::from_row_slice(n, n, &[1.0, 0.2, 0.2, 0.8]),
        q2: DMatrix::from_row_slice(n, n, &[1.2, -0.1, -0.1, 0.9]),
        r1: DMatrix::from_row_slice(m, m, &[1.0, 0.1, 0.1, 1.1]),
        r2: DMatrix::from_row_slice(m, m, &[0.9, 0.0, 0.0, 1.0]),
        sigma1: PiecewiseConst::constant(DVector::from_vec(vec![0.3, 0.1])),
        sigma2: PiecewiseConst::constant(DVector::from_vec(vec![0.2, 0.2])),
        alpha: 0.8,
        beta: -0.6,
        horizon: 1.0,
        pi1,
        pi2,
        init1: GaussianLaw::new(
            DVector::from_vec(vec![1.0, -0.5]),
            DMatrix::from_row_slice(n, n, &[0.2, 0.05, 0.05, 0.3]),
        ),
        init2: GaussianLaw::new(
            DVector::from_vec(vec![0.5, 0.2]),
            DMatrix::from_row_slice(n, n, &[0.25, 0.0, 0.0, 0.15]),
        ),
    }
}

/// Randomized admissible instance (all standing assumptions hold by
/// construction); coefficient magnitudes stay desk-scale so the horizon
/// [0, 1] is well inside the solvable range.
pub fn random_valid_spec<R: Rng>(n: usize, m: usize, rng: &mut R) -> ProblemSpec {
    fn mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        DMatrix::from_row_slice(rows, cols, &data)
    }
    fn vec<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> DVector<f64> {
        DVector::from_vec((0..len).map(|_| rng.gen_range(lo..hi)).collect())
    }
    fn spd(raw: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
        let sym = &raw * raw.transpose();
        let size = raw.nrows();
        sym + DMatrix::identity(size, size).scale(floor)
    }
    let a1 = mat(rng, n, n, 0.6);
    let a2 = mat(rng, n, n, 0.6);
    let b1 = mat(rng, n, m, 1.0);
    let b2 = mat(rng, n, m, 1.0);
    let f1 = mat(rng, n, n, 0.3);
    let f2 = mat(rng, n, n, 0.3);
    let gamma1 = mat(rng, n, n, 0.5);
    let gamma2 = mat(rng, n, n, 0.5);
    let q1 = spd(mat(rng, n, n, 0.7), 0.3);
    let q2 = spd(mat(rng, n, n, 0.7), 0.3);
    let r1 = spd(mat(rng, m, m, 0.5), 0.5);
    let r2 = spd(mat(rng, m, m, 0.5), 0.5);
    let sigma1 = PiecewiseConst::constant(vec(rng, n, 0.0, 0.4));
    let sigma2 = PiecewiseConst::constant(vec(rng, n, 0.0, 0.4));
    let pi1 = rng.gen_range(0.3..0.7);
    let cov1 = spd(mat(rng, n, n, 0.3), 0.05);
    let cov2 = spd(mat(rng, n, n, 0.3), 0.05);
    let mean1 = vec(rng, n, -1.0, 1.0);
    let mean2 = vec(rng, n, -1.0, 1.0);
    ProblemSpec {
        n,
        m,
        a1,
        a2,
        b1,
        b2,
        f1,
        f2,
        gamma1,
        gamma2,
        q1,
        q2,
        r1,
        r2,
        sigma1,
        sigma2,
        alpha: rng.gen_range(-1.0..1.0),
        beta: rng.gen_range(-1.0..1.0),
        horizon: 1.0,
        pi1,
        pi2: 1.0 - pi1,
        init1: GaussianLaw::new(mean1, cov1),
        init2: GaussianLaw::new(mean2, cov2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use rand::SeedableRng;

    #[test]
    fn presets_satisfy_the_standing_assumptions() {
        for spec in [
            scalar_decoupled(),
            pure_noise(0.5, 0.4),
            coop(),
            zerosum(),
            onesided_coop(),
            onesided_comp(),
            coupled_two_dim(0.5, 0.5),
        ] {
            let violations = validate(&spec);
            assert!(violations.is_empty(), "{violations:?}");
        }
    }

    #[test]
    fn random_specs_are_admissible() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let spec = random_valid_spec(2, 2, &mut rng);
            assert!(validate(&spec).is_empty());
        }
    }

    #[test]
    fn case_lookup_knows_all_names() {
        for name in CASE_NAMES {
            assert!(by_case_name(name).is_some());
        }
        assert!(by_case_name("unknown").is_none());
    }
}
