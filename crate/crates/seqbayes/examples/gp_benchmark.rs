//! Streaming cost: repeated batch refits vs rank-1 recursive updates.
//!
//! Run with: cargo run --release --example gp_benchmark -- [n]
//!
//! When observation n arrives, a batch learner refits on all n points
//! (another Cholesky solve); the recursive learner applies one rank-1
//! conditioning step to its prebuilt joint. This prints both cumulative
//! curves and the crossover beyond which streaming stays cheaper.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use seqbayes::gp::{benchmark, GpPrior};

fn main() -> seqbayes::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(200);
    let prior = GpPrior::rbf(1.0, 1.0, 0.1);
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let tests: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
    let data: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)))
        .collect();

    let table = benchmark(&prior, &tests, &data, 1)?;
    let (batch_cum, rec_cum) = table.cumulative();

    println!("one-off joint build: {:.6}s", table.build_s);
    println!("    n   cumulative batch   cumulative recursive");
    let step = (n / 10).max(1);
    for i in (step - 1..n).step_by(step) {
        println!(
            "{:>5}   {:>14.6}s   {:>18.6}s",
            i + 1,
            batch_cum[i],
            rec_cum[i]
        );
    }
    match table.crossover() {
        Some(k) => println!(
            "crossover at n = {k}: recursive stays cheaper from there on \
             ({:.1}x at n = {n})",
            batch_cum[n - 1] / rec_cum[n - 1]
        ),
        None => println!("no crossover up to n = {n}; try a larger n"),
    }
    Ok(())
}
