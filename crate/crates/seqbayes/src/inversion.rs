//! Bayesian inversion on finite spaces, batch and sequential.
//!
//! An inversion of a kernel `p: Θ → 𝒫(X)` relative to a prior on `Θ` is a
//! kernel `q: X → 𝒫(Θ)` whose graph over the evidence, once swapped, equals
//! the graph of `p` over the prior. [`brute_force_invert`] constructs it by
//! elementary Bayes; [`verify_inversion`] checks the defining operator
//! equation directly; [`batch_invert`] and [`sequential_invert`] compute the
//! posterior of a supervised model in one shot and one observation at a
//! time. Their exact agreement in rational mode is the point of the crate.

use crate::error::{Error, Result};
use crate::measure::{
    graph_joint, product_kernel, pushforward, swap_joint, Dist, FiniteKernel, JointDist,
};
use crate::scalar::Scalar;
use crate::supervised::SupervisedModel;

/// A Bayesian inversion together with its evidence and the outcomes where
/// the evidence vanishes (whose rows fall back to the prior).
#[derive(Clone, Debug)]
pub struct InversionResult<S: Scalar> {
    /// Kernel from outcomes to parameter distributions.
    pub kernel: FiniteKernel<S>,
    /// Prior marginal of the outcome (the normalizing constants).
    pub evidence: Dist<S>,
    /// Outcome labels with zero evidence.
    pub null_outcomes: Vec<String>,
}

/// Outcome of checking the inversion operator equation.
#[derive(Clone, Copy, Debug)]
pub struct VerifyReport {
    /// True when the two sides agree within the scalar mode's tolerance.
    pub holds: bool,
    /// Largest elementwise deviation between the two sides.
    pub max_deviation: f64,
}

/// Inverts `p` relative to `prior` by Bayes' rule on every outcome.
///
/// Outcomes with zero evidence get the prior as their posterior row; any
/// such choice satisfies the operator equation, and the prior is the one
/// deterministic, testable pick.
pub fn brute_force_invert<S: Scalar>(
    p: &FiniteKernel<S>,
    prior: &Dist<S>,
) -> Result<InversionResult<S>> {
    if prior.space() != p.source() {
        return Err(Error::SpaceMismatch {
            context: "brute_force_invert",
            left: prior.space().describe(),
            right: p.source().describe(),
        });
    }
    let evidence = pushforward(p, prior)?;
    let n_theta = p.source().len();
    let mut rows = Vec::with_capacity(p.target().len());
    let mut null_outcomes = Vec::new();
    for (x, ev) in evidence.weights().iter().enumerate() {
        if ev.is_zero() {
            null_outcomes.push(p.target().label(x).to_string());
            rows.push(prior.clone());
            continue;
        }
        let mut row = Vec::with_capacity(n_theta);
        for theta in 0..n_theta {
            let w = p.entry(theta, x).clone() * prior.weight(theta).clone() / ev.clone();
            row.push(w);
        }
        rows.push(Dist::from_unnormalized(prior.space().clone(), row)?);
    }
    let kernel = FiniteKernel::from_rows(p.target().clone(), rows)?;
    Ok(InversionResult {
        kernel,
        evidence,
        null_outcomes,
    })
}

/// Checks the operator equation defining a Bayesian inversion: the swapped
/// graph of `q` over the evidence must equal the graph of `p` over the prior.
pub fn verify_inversion<S: Scalar>(
    q: &FiniteKernel<S>,
    p: &FiniteKernel<S>,
    prior: &Dist<S>,
) -> Result<VerifyReport> {
    if q.source() != p.target() || q.target() != p.source() {
        return Err(Error::SpaceMismatch {
            context: "verify_inversion",
            left: format!("q: {} -> {}", q.source().describe(), q.target().describe()),
            right: format!("p: {} -> {}", p.source().describe(), p.target().describe()),
        });
    }
    let evidence = pushforward(p, prior)?;
    let lhs = swap_joint(&graph_joint(q, &evidence)?)?;
    let rhs = graph_joint(p, prior)?;
    let max_deviation = lhs.max_dev(&rhs);
    Ok(VerifyReport {
        holds: max_deviation <= S::mode_tol(),
        max_deviation,
    })
}

/// Conditions a two-factor joint on an observed second-coordinate label:
/// slice and renormalize, falling back to the first marginal when the slice
/// has zero mass.
pub fn condition_joint<S: Scalar>(j: &JointDist<S>, observed: &str) -> Result<Dist<S>> {
    if j.num_factors() != 2 {
        return Err(Error::ShapeMismatch {
            context: "condition_joint",
            expected: "2 factors".into(),
            found: format!("{} factors", j.num_factors()),
        });
    }
    j.condition_last(observed)?.into_dist()
}

fn check_lengths(inputs: &[&str], observations: &[&str]) -> Result<()> {
    if inputs.len() != observations.len() {
        return Err(Error::ShapeMismatch {
            context: "batch_invert",
            expected: format!("{} observations", inputs.len()),
            found: observations.len().to_string(),
        });
    }
    Ok(())
}

/// Posterior after seeing all observations at once: builds the product
/// sampling kernel over `Y^n`, inverts it, and evaluates at the observed
/// tuple. `n = 0` returns the prior.
pub fn batch_invert<S: Scalar>(
    model: &SupervisedModel<S>,
    inputs: &[&str],
    observations: &[&str],
) -> Result<Dist<S>> {
    check_lengths(inputs, observations)?;
    if inputs.is_empty() {
        return Ok(model.prior().clone());
    }
    let kernels = inputs
        .iter()
        .map(|x| model.sampling_kernel_at(x))
        .collect::<Result<Vec<_>>>()?;
    let joint_kernel = product_kernel(&kernels)?;
    let inv = brute_force_invert(&joint_kernel, model.prior())?;

    // Row-major index of the observed tuple in the product outcome space.
    let mut flat = 0usize;
    for y in observations {
        flat = flat * model.labels().len() + model.labels().index_of(y)?;
    }
    Ok(inv.kernel.row(flat).clone())
}

/// Posterior computed one observation at a time, strictly in stream order:
/// each step inverts the single evaluated kernel against the running
/// posterior and evaluates it at the observed label.
pub fn sequential_invert<'a, S: Scalar>(
    model: &SupervisedModel<S>,
    stream: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<Dist<S>> {
    let mut posterior = model.prior().clone();
    for (x, y) in stream {
        let kernel = model.sampling_kernel_at(x)?;
        let step = brute_force_invert(&kernel, &posterior)?;
        let idx = model.labels().index_of(y)?;
        posterior = step.kernel.row(idx).clone();
    }
    Ok(posterior)
}
