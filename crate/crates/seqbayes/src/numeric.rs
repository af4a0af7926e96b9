//! Small numeric helpers shared by the Monte Carlo modules.

/// Pairwise (cascade) summation. Deterministic for a fixed input order and
/// independent of how replicates were produced, which keeps parallel Monte
/// Carlo aggregation reproducible.
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

/// Sample mean via pairwise summation.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (m, pairwise_sum(&sq) / (n - 1) as f64)
}

/// Standard error of the sample mean.
pub fn se_mean(xs: &[f64]) -> f64 {
    let (_, var) = mean_var(xs);
    (var / xs.len() as f64).sqrt()
}

/// Standard error of the sample variance, from the asymptotic formula
/// `SE(s^2) ~= sqrt((m4 - s^4) / n)` with `m4` the fourth central moment.
pub fn se_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    let (m, s2) = mean_var(xs);
    if n < 2 {
        return f64::INFINITY;
    }
    let fourth: Vec<f64> = xs.iter().map(|x| (x - m).powi(4)).collect();
    let m4 = pairwise_sum(&fourth) / n as f64;
    ((m4 - s2 * s2).max(0.0) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(pairwise_sum(&xs), 15.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mean_var_of_known_sample() {
        let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        let (m, v) = mean_var(&xs);
        assert!((m - 5.0).abs() < 1e-12);
        assert!((v - 32.0 / 7.0).abs() < 1e-12);
    }
}
