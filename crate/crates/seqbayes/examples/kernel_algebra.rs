//! Finite Markov-kernel algebra: composition, pushforward, products, graphs.
//!
//! Run with: cargo run --example kernel_algebra
//!
//! Kernels between finite spaces are row-stochastic matrices. This example
//! walks through the core operations and checks the laws they obey, in exact
//! rational arithmetic so every equality is literal.

use seqbayes::measure::{
    compose_kernels, graph_joint, marginalize, product_kernel, pushforward, swap_joint,
    tensor_kernel, Dist, FiniteKernel, FiniteSpace, JointDist,
};
use seqbayes::Rat;
use seqbayes::Scalar;

fn r(n: i64, d: i64) -> Rat {
    Rat::ratio(n, d)
}

fn main() -> seqbayes::Result<()> {
    // A two-state weather chain: kernels are rows of label distributions.
    let weather = FiniteSpace::new(["sunny", "rainy"])?;
    let step = FiniteKernel::new(
        weather.clone(),
        weather.clone(),
        vec![vec![r(4, 5), r(1, 5)], vec![r(2, 5), r(3, 5)]],
    )?;

    // Composition is matrix multiplication: two days of weather.
    let two_days = compose_kernels(&step, &step)?;
    println!("two-day transition from sunny:");
    for (label, w) in weather.labels().iter().zip(two_days.row(0).weights()) {
        println!("  {label}: {w}");
    }

    // Pushforward moves a distribution through a kernel.
    let today = Dist::dirac(weather.clone(), "sunny")?;
    let tomorrow = pushforward(&step, &today)?;
    println!("tomorrow given sunny today: {:?}", tomorrow.weights());

    // Associativity holds exactly in rational mode.
    let three_a = compose_kernels(&step, &two_days)?;
    let three_b = compose_kernels(&two_days, &step)?;
    assert_eq!(three_a, three_b);
    println!("composition is associative: ok");

    // Functoriality: pushing through a composition equals pushing twice.
    let mu = Dist::new(weather.clone(), vec![r(1, 3), r(2, 3)])?;
    let via_compose = pushforward(&two_days, &mu)?;
    let via_steps = pushforward(&step, &pushforward(&step, &mu)?)?;
    assert_eq!(via_compose, via_steps);
    println!("pushforward is functorial: ok");

    // The graph of a kernel is the joint (input, output) distribution.
    let joint = graph_joint(&step, &mu)?;
    println!("joint weights (row-major): {:?}", joint.weights());
    assert_eq!(joint.marginal_dist(0)?, mu);
    assert_eq!(joint.marginal_dist(1)?, pushforward(&step, &mu)?);
    println!("graph marginals recover the prior and the pushforward: ok");

    // Swapping transposes the joint; marginalizing sums axes out.
    let swapped = swap_joint(&joint)?;
    assert_eq!(swap_joint(&swapped)?, joint);

    // Product kernels model conditionally independent observations.
    let sensor = FiniteKernel::new(
        weather.clone(),
        FiniteSpace::new(["dry", "wet"])?,
        vec![vec![r(9, 10), r(1, 10)], vec![r(3, 10), r(7, 10)]],
    )?;
    let two_sensors = product_kernel(&[sensor.clone(), sensor.clone()])?;
    println!(
        "two independent sensor readings given sunny: {:?}",
        two_sensors.row(0).weights()
    );

    // Graph of a composition = (id x second kernel) chained onto the graph.
    let lhs = graph_joint(&compose_kernels(&sensor, &step)?, &mu)?;
    let chain = tensor_kernel(&FiniteKernel::identity(weather.clone()), &sensor)?;
    let rhs_flat = pushforward(&chain, &graph_joint(&step, &mu)?.as_product_dist()?)?;
    let rhs = JointDist::from_product_dist(rhs_flat, vec![weather, sensor.target().clone()])?;
    assert_eq!(lhs, rhs);
    println!("graph of a composition law: ok");

    // Marginalization preserves mass exactly.
    let kept = marginalize(&lhs, &[0])?;
    assert_eq!(kept.total_mass(), Rat::from_int(1));
    println!("mass conserved under marginalization: ok");
    Ok(())
}
