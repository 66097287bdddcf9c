//! Small statistics helpers: pairwise summation, sample moments,
//! log-log slope fits and Kendall rank correlation.

/// Pairwise (cascade) summation; order-independent reduction for path
/// aggregates.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Monte-Carlo standard error of the mean (unbiased sample variance).
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - mu) * (x - mu)).collect();
    (pairwise_sum(&dev) / ((n - 1) as f64) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub stderr: f64,
}

/// Ordinary least squares of y on x.
pub fn ols(xs: &[f64], ys: &[f64]) -> SlopeFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "slope fit needs at least two points");
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = (n - 2.0).max(1.0);
    let stderr = (ss_res / dof / sxx).sqrt();
    SlopeFit { slope, intercept, stderr }
}

/// OLS slope of log(y) against log(x); the standard rate-fit diagnostic.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> SlopeFit {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols(&lx, &ly)
}

/// Kendall rank correlation between the sample order and the values:
/// -1 for strictly decreasing sequences, +1 for strictly increasing.
/// Ties count as neither concordant nor discordant.
pub fn kendall_tau_vs_index(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            if ys[j] > ys[i] {
                concordant += 1;
            } else if ys[j] < ys[i] {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    (concordant - discordant) as f64 / pairs
}
