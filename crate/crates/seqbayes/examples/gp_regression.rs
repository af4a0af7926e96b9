//! Gaussian-process regression: one matrix solve vs many rank-1 updates.
//!
//! Run with: cargo run --example gp_regression
//!
//! The batch path solves an n x n system against the noisy Gram matrix. The
//! recursive path builds the joint over test and train coordinates once and
//! consumes one observation per step with the Kalman update (gain = cross
//! covariance over observed variance). Both give the same posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use seqbayes::gp::{
    append_train, batch_predictive, build_joint, condition_one, recursive_predictive, GpPrior,
};

fn main() -> seqbayes::Result<()> {
    let prior = GpPrior::rbf(1.0, 0.8, 0.05);
    let mut rng = ChaCha12Rng::seed_from_u64(4);

    // Noisy samples of a smooth function.
    let f = |x: f64| (1.5 * x).sin();
    let data: Vec<(f64, f64)> = (0..40)
        .map(|_| {
            let x = rng.random_range(-3.0..3.0);
            let eps: f64 = rng.sample(rand_distr::StandardNormal);
            (x, f(x) + 0.05f64.sqrt() * eps)
        })
        .collect();
    let tests: Vec<f64> = (-6..=6).map(|i| i as f64 / 2.0).collect();

    let batch = batch_predictive(&prior, &tests, &data)?;
    let recursive = recursive_predictive(&prior, &tests, &data)?;

    println!("   t      truth     mean      sd      |batch-recursive|");
    for (i, t) in tests.iter().enumerate() {
        let dev = (batch.mean()[i] - recursive.mean()[i]).abs();
        println!(
            "{:>6.2}  {:>8.4}  {:>8.4}  {:>7.4}  {:.2e}",
            t,
            f(*t),
            batch.mean()[i],
            batch.cov()[(i, i)].sqrt(),
            dev
        );
    }
    batch.validate()?;
    recursive.validate()?;

    // One conditioning step in slow motion: the scalar Kalman update.
    let belief = build_joint(&prior, &[0.0], &[0.4])?;
    let (cross, var_obs) = (belief.cov()[(0, 1)], belief.cov()[(1, 1)]);
    let y = 0.9;
    let after = condition_one(belief, 1, y)?;
    let gain = cross / var_obs;
    println!("\nscalar Kalman step: gain = {gain:.4}");
    assert!((after.mean()[0] - gain * y).abs() < 1e-12);
    assert!((after.cov()[(0, 0)] - (prior.cov_at(0.0, 0.0) - gain * cross)).abs() < 1e-12);

    // Streaming: append a train coordinate before conditioning and the
    // belief matches a from-scratch rebuild of the larger joint.
    let head: Vec<f64> = data[..39].iter().map(|&(x, _)| x).collect();
    let appended = append_train(&build_joint(&prior, &tests, &head)?, &prior, data[39].0)?;
    let all: Vec<f64> = data.iter().map(|&(x, _)| x).collect();
    let rebuilt = build_joint(&prior, &tests, &all)?;
    let dev = (appended.mean() - rebuilt.mean()).amax();
    println!("append-then-rebuild agreement: {dev:.2e}");
    assert!(dev < 1e-8);

    // Variance never grows as observations are consumed.
    let prior_block = build_joint(&prior, &tests, &[])?;
    for i in 0..tests.len() {
        assert!(recursive.cov()[(i, i)] <= prior_block.cov()[(i, i)] + 1e-9);
    }
    println!("posterior variance shrinks under conditioning: ok");
    Ok(())
}
