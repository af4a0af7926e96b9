//! Batch Bayesian inversion equals the online fold, exactly.
//!
//! Run with: cargo run --example batch_vs_online
//!
//! A supervised model assigns each parameter and input a label distribution.
//! Conditioning on all observations at once means inverting one product
//! kernel on Y^n; conditioning online means inverting one single-input
//! kernel per observation, feeding each posterior in as the next prior. In
//! exact rational arithmetic the two posteriors are identical, and the
//! inversion satisfies its defining operator equation with zero deviation.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use seqbayes::inversion::{
    batch_invert, brute_force_invert, sequential_invert, verify_inversion,
};
use seqbayes::measure::product_kernel;
use seqbayes::supervised::SupervisedModel;
use seqbayes::{Rat, Scalar};

fn main() -> seqbayes::Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let model = SupervisedModel::<Rat>::random(&mut rng, 4, 3, 3);
    let stream = model.random_pairs(&mut rng, 5);
    let refs: Vec<(&str, &str)> = stream.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
    println!("observations: {refs:?}");

    let xs: Vec<&str> = refs.iter().map(|(x, _)| *x).collect();
    let ys: Vec<&str> = refs.iter().map(|(_, y)| *y).collect();

    // One inversion on the product space Y^5.
    let batch = batch_invert(&model, &xs, &ys)?;
    println!("batch posterior:");
    for (t, w) in model.theta().labels().iter().zip(batch.weights()) {
        println!("  {t}: {w}");
    }

    // Five single-observation inversions, chained.
    let online = sequential_invert(&model, refs.iter().copied())?;
    assert_eq!(batch, online);
    println!("online fold gives the identical posterior: ok");

    // Watch the posterior sharpen as observations arrive.
    for k in 0..=refs.len() {
        let partial = sequential_invert(&model, refs[..k].iter().copied())?;
        let as_floats: Vec<f64> = partial.weights().iter().map(|w| w.to_f64()).collect();
        println!("  after {k} observations: {as_floats:?}");
    }

    // The defining operator equation: the swapped graph of the inversion
    // over the evidence equals the graph of the sampling kernel over the
    // prior. Zero deviation in rational mode.
    let kernels = xs
        .iter()
        .map(|x| model.sampling_kernel_at(x))
        .collect::<seqbayes::Result<Vec<_>>>()?;
    let product = product_kernel(&kernels)?;
    let inversion = brute_force_invert(&product, model.prior())?;
    let report = verify_inversion(&inversion.kernel, &product, model.prior())?;
    println!(
        "operator equation holds: {} (max deviation {})",
        report.holds, report.max_deviation
    );
    assert!(report.holds && report.max_deviation == 0.0);

    // Observations at a fixed input commute: identical updates reorder freely.
    let x = model.inputs().label(0);
    let (ya, yb) = (model.labels().label(0), model.labels().label(2));
    let fwd = sequential_invert(&model, [(x, ya), (x, yb)])?;
    let rev = sequential_invert(&model, [(x, yb), (x, ya)])?;
    assert_eq!(fwd, rev);
    println!("conditionally i.i.d. observations commute: ok");
    Ok(())
}
