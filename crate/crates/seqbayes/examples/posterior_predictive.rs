//! Recursive posterior predictive distributions on finite models.
//!
//! Run with: cargo run --example posterior_predictive
//!
//! The predictive at test inputs can be computed by pushing the batch
//! posterior through the sampling operator, or by building the joint label
//! distribution over test and training coordinates once and conditioning
//! out one training coordinate at a time (most recent first). Both agree
//! exactly, they agree with slicing the joint in a single step, dropping a
//! test coordinate marginalizes consistently, and restricting the model to
//! the inputs actually used changes nothing.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use seqbayes::measure::marginalize;
use seqbayes::supervised::{
    posterior_predictive_batch, posterior_predictive_recursive, prior_joint, restrict_model,
    SupervisedModel, TestInputs, TrainingSample,
};
use seqbayes::{Rat, Scalar};

fn main() -> seqbayes::Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let model = SupervisedModel::<Rat>::random(&mut rng, 4, 3, 3);
    let sample = TrainingSample::new(model.random_pairs(&mut rng, 3));
    let test = TestInputs::from_labels(&["x0", "x2"]);
    println!("training sample: {:?}", sample.pairs());

    let batch = posterior_predictive_batch(&model, &sample, &test)?;
    let recursive = posterior_predictive_recursive(&model, &sample, &test)?;
    assert_eq!(batch, recursive);
    println!("batch and recursive predictives agree exactly: ok");

    println!("predictive over (y at x0, y at x2):");
    for (flat, w) in batch.weights().iter().enumerate() {
        let idx = batch.multi_index(flat);
        let labels: Vec<&str> = idx
            .iter()
            .zip(batch.factors())
            .map(|(&i, f)| f.label(i))
            .collect();
        println!("  {labels:?}: {} = {:.4}", w, w.to_f64());
    }

    // The predictive is also the regular conditional of the full joint:
    // slice at the whole observed tuple in one step.
    let xs: Vec<&str> = sample.pairs().iter().map(|(x, _)| x.as_str()).collect();
    let ys: Vec<&str> = sample.pairs().iter().map(|(_, y)| y.as_str()).collect();
    let joint = prior_joint(&model, &test, &xs)?;
    assert_eq!(batch, joint.condition_suffix(&ys)?);
    println!("one-shot conditioning of the joint agrees: ok");

    // Consistency: adding a test point and marginalizing it out is a no-op.
    let bigger = TestInputs::from_labels(&["x0", "x2", "x1"]);
    let big = posterior_predictive_batch(&model, &sample, &bigger)?;
    assert_eq!(batch, marginalize(&big, &[0, 1])?);
    println!("predictive consistency under marginalization: ok");

    // Restriction: drop inputs that neither the sample nor the tests use.
    let restricted = restrict_model(&model, &["x0", "x1", "x2"])?;
    let same = posterior_predictive_batch(&restricted, &sample, &test)?;
    assert_eq!(batch, same);
    println!("restriction to the relevant inputs is invisible: ok");

    // A finite stand-in for the universal model: parameters enumerate a grid
    // of label-distribution tuples and the sampling map just evaluates them.
    let universal = SupervisedModel::<Rat>::universal_grid(
        seqbayes::measure::FiniteSpace::indexed("x", 2),
        seqbayes::measure::FiniteSpace::indexed("y", 2),
        4,
    )?;
    println!(
        "universal grid model: {} parameters over {} inputs",
        universal.theta().len(),
        universal.inputs().len()
    );
    let s = TrainingSample::from_pairs(&[("x0", "y1"), ("x0", "y1"), ("x1", "y0")]);
    let t = TestInputs::from_labels(&["x0"]);
    let pred = posterior_predictive_batch(&universal, &s, &t)?;
    println!(
        "universal-model predictive at x0 after seeing y1, y1 at x0: {:?}",
        pred.weights().iter().map(|w| w.to_f64()).collect::<Vec<_>>()
    );
    Ok(())
}
