//! Supervised Bayesian learning models on finite spaces.
//!
//! A model is a finite parameter space with a prior plus, for every
//! parameter and input, a sampling distribution over labels. The posterior
//! predictive at test inputs can be computed two ways: push the batch
//! posterior through the product sampling kernel, or build the joint label
//! distribution once and condition out the training coordinates one at a
//! time (most recent first). Theory says the two agree; the tests check it
//! exactly in rational mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::batch_invert;
use crate::measure::{product_kernel, pushforward, Dist, FiniteKernel, FiniteSpace, JointDist};
use crate::scalar::Scalar;

/// A finite supervised model: parameters, prior, inputs, labels, and one
/// sampling distribution per `(parameter, input)` pair.
#[derive(Clone, PartialEq, Debug)]
pub struct SupervisedModel<S: Scalar> {
    theta: FiniteSpace,
    prior: Dist<S>,
    inputs: FiniteSpace,
    labels: FiniteSpace,
    /// `sampling[θ][x]` is the label distribution at input `x` under `θ`.
    sampling: Vec<Vec<Dist<S>>>,
}

impl<S: Scalar> SupervisedModel<S> {
    pub fn new(
        theta: FiniteSpace,
        prior: Dist<S>,
        inputs: FiniteSpace,
        labels: FiniteSpace,
        sampling: Vec<Vec<Dist<S>>>,
    ) -> Result<Self> {
        if prior.space() != &theta {
            return Err(Error::SpaceMismatch {
                context: "SupervisedModel::new",
                left: prior.space().describe(),
                right: theta.describe(),
            });
        }
        if sampling.len() != theta.len() {
            return Err(Error::ShapeMismatch {
                context: "SupervisedModel::new",
                expected: format!("{} sampling rows", theta.len()),
                found: sampling.len().to_string(),
            });
        }
        for row in &sampling {
            if row.len() != inputs.len() {
                return Err(Error::ShapeMismatch {
                    context: "SupervisedModel::new",
                    expected: format!("{} sampling columns", inputs.len()),
                    found: row.len().to_string(),
                });
            }
            for d in row {
                if d.space() != &labels {
                    return Err(Error::SpaceMismatch {
                        context: "SupervisedModel::new",
                        left: d.space().describe(),
                        right: labels.describe(),
                    });
                }
            }
        }
        Ok(Self {
            theta,
            prior,
            inputs,
            labels,
            sampling,
        })
    }

    pub fn theta(&self) -> &FiniteSpace {
        &self.theta
    }

    pub fn prior(&self) -> &Dist<S> {
        &self.prior
    }

    pub fn inputs(&self) -> &FiniteSpace {
        &self.inputs
    }

    pub fn labels(&self) -> &FiniteSpace {
        &self.labels
    }

    pub fn sampling_dist(&self, theta: usize, input: usize) -> &Dist<S> {
        &self.sampling[theta][input]
    }

    /// The sampling kernel `Θ → 𝒫(Y)` evaluated at a single input.
    pub fn sampling_kernel_at(&self, input: &str) -> Result<FiniteKernel<S>> {
        let x = self.inputs.index_of(input)?;
        let rows = self.sampling.iter().map(|r| r[x].clone()).collect();
        FiniteKernel::from_rows(self.theta.clone(), rows)
    }

    /// Random strictly positive model, used by randomized checks and the
    /// `invert` subcommand. Weights are small integer ratios so rational
    /// arithmetic stays cheap and every outcome has positive evidence.
    pub fn random(rng: &mut impl Rng, n_theta: usize, n_inputs: usize, n_labels: usize) -> Self {
        let theta = FiniteSpace::indexed("t", n_theta);
        let inputs = FiniteSpace::indexed("x", n_inputs);
        let labels = FiniteSpace::indexed("y", n_labels);
        let random_dist = |rng: &mut dyn rand::RngCore, space: &FiniteSpace| {
            let counts: Vec<i64> = (0..space.len()).map(|_| rng.random_range(1..=9)).collect();
            let total: i64 = counts.iter().sum();
            let weights = counts.into_iter().map(|c| S::ratio(c, total)).collect();
            Dist::new(space.clone(), weights).expect("positive ratios sum to one")
        };
        let prior = random_dist(rng, &theta);
        let sampling = (0..n_theta)
            .map(|_| (0..n_inputs).map(|_| random_dist(rng, &labels)).collect())
            .collect();
        Self {
            theta,
            prior,
            inputs,
            labels,
            sampling,
        }
    }

    /// Random input/label pairs from this model's spaces.
    pub fn random_pairs(&self, rng: &mut impl Rng, n: usize) -> Vec<(String, String)> {
        (0..n)
            .map(|_| {
                let x = rng.random_range(0..self.inputs.len());
                let y = rng.random_range(0..self.labels.len());
                (
                    self.inputs.label(x).to_string(),
                    self.labels.label(y).to_string(),
                )
            })
            .collect()
    }

    /// Finite-scale stand-in for the universal model: the parameter space
    /// enumerates every tuple of grid distributions over the labels (weights
    /// are multiples of `1/resolution`), one distribution per input, and the
    /// sampling map evaluates the tuple. The prior is uniform on the grid.
    pub fn universal_grid(
        inputs: FiniteSpace,
        labels: FiniteSpace,
        resolution: usize,
    ) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidArgument(
                "grid resolution must be positive".into(),
            ));
        }
        let grid = compositions(resolution, labels.len());
        let per_input = grid.len();
        let n_theta = per_input
            .checked_pow(inputs.len() as u32)
            .filter(|&n| n <= 100_000)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "universal grid too large: {per_input}^{}",
                    inputs.len()
                ))
            })?;

        let grid_dists: Vec<Dist<S>> = grid
            .iter()
            .map(|counts| {
                let weights = counts
                    .iter()
                    .map(|&c| S::ratio(c as i64, resolution as i64))
                    .collect();
                Dist::new(labels.clone(), weights)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut theta_labels = Vec::with_capacity(n_theta);
        let mut sampling = Vec::with_capacity(n_theta);
        for flat in 0..n_theta {
            let mut rest = flat;
            let mut choice = vec![0usize; inputs.len()];
            for slot in (0..inputs.len()).rev() {
                choice[slot] = rest % per_input;
                rest /= per_input;
            }
            theta_labels.push(
                choice
                    .iter()
                    .map(|c| format!("g{c}"))
                    .collect::<Vec<_>>()
                    .join("|"),
            );
            sampling.push(choice.iter().map(|&c| grid_dists[c].clone()).collect());
        }
        let theta = FiniteSpace::new(theta_labels)?;
        let prior = Dist::uniform(theta.clone());
        Self::new(theta, prior, inputs, labels, sampling)
    }
}

/// All vectors of `parts` nonnegative integers summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(first);
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

/// An ordered list of observed `(input, label)` pairs.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct TrainingSample {
    pairs: Vec<(String, String)>,
}

impl TrainingSample {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Self { pairs }
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Self {
            pairs: pairs
                .iter()
                .map(|(x, y)| (x.to_string(), y.to_string()))
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate_against<S: Scalar>(&self, model: &SupervisedModel<S>) -> Result<()> {
        for (x, y) in &self.pairs {
            model.inputs().index_of(x)?;
            model.labels().index_of(y)?;
        }
        Ok(())
    }
}

/// An ordered list of test inputs; repetitions are allowed.
#[derive(Clone, PartialEq, Debug)]
pub struct TestInputs {
    points: Vec<String>,
}

impl TestInputs {
    pub fn new(points: Vec<String>) -> Self {
        Self { points }
    }

    pub fn from_labels(points: &[&str]) -> Self {
        Self {
            points: points.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The product sampling kernel `Θ → 𝒫(Y^m)` at the given test inputs:
/// `row(θ) = ⊗ᵢ sampling(θ)(xᵢ)`.
pub fn sampling_operator<S: Scalar>(
    model: &SupervisedModel<S>,
    test: &TestInputs,
) -> Result<FiniteKernel<S>> {
    if test.is_empty() {
        return Err(Error::EmptyInput("sampling_operator with no test inputs"));
    }
    let kernels = test
        .points()
        .iter()
        .map(|x| model.sampling_kernel_at(x))
        .collect::<Result<Vec<_>>>()?;
    product_kernel(&kernels)
}

/// Joint label distribution over `Y^{m+n}` for the test inputs followed by
/// the training inputs, under the prior. This is the object the recursive
/// predictive conditions, and doubles as the enumeration oracle for the
/// batch path.
pub fn prior_joint<S: Scalar>(
    model: &SupervisedModel<S>,
    test: &TestInputs,
    train_inputs: &[&str],
) -> Result<JointDist<S>> {
    let mut cols: Vec<usize> = Vec::with_capacity(test.len() + train_inputs.len());
    for x in test.points() {
        cols.push(model.inputs().index_of(x)?);
    }
    for x in train_inputs {
        cols.push(model.inputs().index_of(x)?);
    }
    if cols.is_empty() {
        return Err(Error::EmptyInput("prior_joint over zero coordinates"));
    }
    // Accumulate sum_theta prior(theta) * tensor(rows) directly; going
    // through product_kernel would validate every huge row twice.
    let size = model.labels().len().pow(cols.len() as u32);
    let mut weights = vec![S::zero(); size];
    for theta in 0..model.theta().len() {
        let mut acc = vec![model.prior().weight(theta).clone()];
        for &x in &cols {
            let row = model.sampling[theta][x].weights();
            let mut next = Vec::with_capacity(acc.len() * row.len());
            for a in &acc {
                for w in row {
                    next.push(a.clone() * w.clone());
                }
            }
            acc = next;
        }
        for (w, a) in weights.iter_mut().zip(acc) {
            *w = w.clone() + a;
        }
    }
    JointDist::new(vec![model.labels().clone(); cols.len()], weights)
}

/// Posterior predictive via the batch posterior: invert once on `Y^n`, then
/// push through the sampling operator at the test inputs.
pub fn posterior_predictive_batch<S: Scalar>(
    model: &SupervisedModel<S>,
    sample: &TrainingSample,
    test: &TestInputs,
) -> Result<JointDist<S>> {
    sample.validate_against(model)?;
    let xs: Vec<&str> = sample.pairs().iter().map(|(x, _)| x.as_str()).collect();
    let ys: Vec<&str> = sample.pairs().iter().map(|(_, y)| y.as_str()).collect();
    let posterior = batch_invert(model, &xs, &ys)?;
    let operator = sampling_operator(model, test)?;
    let flat = pushforward(&operator, &posterior)?;
    JointDist::from_product_dist(flat, vec![model.labels().clone(); test.len()])
}

/// Posterior predictive via the recursion: build the joint over `Y^{m+n}`
/// from the prior once, then condition out training coordinates one at a
/// time, most recent observation first. Conditioning an impossible label
/// drops that coordinate by marginalization (the zero-evidence convention).
pub fn posterior_predictive_recursive<S: Scalar>(
    model: &SupervisedModel<S>,
    sample: &TrainingSample,
    test: &TestInputs,
) -> Result<JointDist<S>> {
    sample.validate_against(model)?;
    let xs: Vec<&str> = sample.pairs().iter().map(|(x, _)| x.as_str()).collect();
    let mut joint = prior_joint(model, test, &xs)?;
    for (_, y) in sample.pairs().iter().rev() {
        joint = joint.condition_last(y)?;
    }
    Ok(joint)
}

/// Restricts the model to a subset of its inputs (kept in their original
/// order). Predictives for queries inside the subset are unchanged; queries
/// outside it fail with an unknown-label error.
pub fn restrict_model<S: Scalar>(
    model: &SupervisedModel<S>,
    keep: &[&str],
) -> Result<SupervisedModel<S>> {
    if keep.is_empty() {
        return Err(Error::EmptyInput("restrict_model to an empty input set"));
    }
    let mut indices = Vec::with_capacity(keep.len());
    for x in keep {
        indices.push(model.inputs.index_of(x)?);
    }
    indices.sort_unstable();
    indices.dedup();
    let inputs = FiniteSpace::new(
        indices
            .iter()
            .map(|&i| model.inputs.label(i).to_string()),
    )?;
    let sampling = model
        .sampling
        .iter()
        .map(|row| indices.iter().map(|&i| row[i].clone()).collect())
        .collect();
    SupervisedModel::new(
        model.theta.clone(),
        model.prior.clone(),
        inputs,
        model.labels.clone(),
        sampling,
    )
}

// ---------------------------------------------------------------------------
// Text serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingRowDoc {
    theta: String,
    /// One label distribution per input, in declared input order.
    dists: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    theta: Vec<String>,
    prior: Vec<String>,
    inputs: Vec<String>,
    labels: Vec<String>,
    sampling: Vec<SamplingRowDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleDoc {
    pairs: Vec<(String, String)>,
}

impl<S: Scalar> SupervisedModel<S> {
    pub fn to_text(&self) -> String {
        let doc = ModelDoc {
            theta: self.theta.labels().to_vec(),
            prior: self.prior.weights().iter().map(Scalar::render_text).collect(),
            inputs: self.inputs.labels().to_vec(),
            labels: self.labels.labels().to_vec(),
            sampling: self
                .theta
                .labels()
                .iter()
                .zip(&self.sampling)
                .map(|(t, row)| SamplingRowDoc {
                    theta: t.clone(),
                    dists: row
                        .iter()
                        .map(|d| d.weights().iter().map(Scalar::render_text).collect())
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("model documents always serialize")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: ModelDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let theta = FiniteSpace::new(doc.theta)?;
        let inputs = FiniteSpace::new(doc.inputs)?;
        let labels = FiniteSpace::new(doc.labels)?;
        let prior_w = doc
            .prior
            .iter()
            .map(|w| S::parse_text(w))
            .collect::<Result<Vec<_>>>()?;
        let prior = Dist::new(theta.clone(), prior_w)?;
        if doc.sampling.len() != theta.len() {
            return Err(Error::Validation(format!(
                "expected {} sampling rows, found {}",
                theta.len(),
                doc.sampling.len()
            )));
        }
        let mut sampling = vec![Vec::new(); theta.len()];
        for row in &doc.sampling {
            let t = theta.index_of(&row.theta)?;
            if !sampling[t].is_empty() {
                return Err(Error::Validation(format!(
                    "duplicate sampling row for `{}`",
                    row.theta
                )));
            }
            sampling[t] = row
                .dists
                .iter()
                .map(|d| {
                    let w = d
                        .iter()
                        .map(|s| S::parse_text(s))
                        .collect::<Result<Vec<_>>>()?;
                    Dist::new(labels.clone(), w)
                })
                .collect::<Result<Vec<_>>>()?;
        }
        Self::new(theta, prior, inputs, labels, sampling)
    }
}

impl TrainingSample {
    pub fn to_text(&self) -> String {
        toml::to_string(&SampleDoc {
            pairs: self.pairs.clone(),
        })
        .expect("sample documents always serialize")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: SampleDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Self { pairs: doc.pairs })
    }
}
