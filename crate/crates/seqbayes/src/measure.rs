//! Exact algebra of finite probability spaces and Markov kernels.
//!
//! A kernel from `X` to `Y` is a row-stochastic matrix: one distribution on
//! `Y` per label of `X`. Composition is matrix multiplication, pushforward is
//! a vector-matrix product, and joints over product spaces are stored as flat
//! tensors.
//!
//! # Index convention
//!
//! Product spaces and joint tensors are flattened **row-major** with factor
//! order equal to argument order: for factors of sizes `(n_0, .., n_k)` the
//! flat index of `(i_0, .., i_k)` is `((i_0 * n_1 + i_1) * n_2 + i_2) ...`.
//! The first factor is the most significant. Product labels join factor
//! labels with `,`, which is therefore reserved and rejected in label names.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Separator used when labelling points of a product space.
pub const PRODUCT_SEP: char = ',';

/// A finite measurable space: an ordered list of distinct labels.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FiniteSpace {
    labels: Vec<String>,
}

impl FiniteSpace {
    pub fn new<I, L>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyInput("FiniteSpace needs at least one label"));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::InvalidArgument("empty label".into()));
            }
            if l.contains(PRODUCT_SEP) {
                return Err(Error::InvalidArgument(format!(
                    "label `{l}` contains the reserved product separator `{PRODUCT_SEP}`"
                )));
            }
            if labels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// Space with labels `{prefix}0 .. {prefix}{n-1}`.
    pub fn indexed(prefix: &str, n: usize) -> Self {
        Self::new((0..n).map(|i| format!("{prefix}{i}"))).expect("generated labels are valid")
    }

    /// Product space; labels are the row-major tuples joined with `,`.
    pub fn product(factors: &[FiniteSpace]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptyInput("product of zero spaces"));
        }
        let mut labels = vec![String::new()];
        for f in factors {
            let mut next = Vec::with_capacity(labels.len() * f.len());
            for head in &labels {
                for l in f.labels() {
                    if head.is_empty() {
                        next.push(l.clone());
                    } else {
                        next.push(format!("{head}{PRODUCT_SEP}{l}"));
                    }
                }
            }
            labels = next;
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a constructed space always has at least one label
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
                space: self.describe(),
            })
    }

    /// Short description used in error messages.
    pub fn describe(&self) -> String {
        if self.labels.len() <= 6 {
            self.labels.join(" ")
        } else {
            format!("{} .. ({} labels)", self.labels[..3].join(" "), self.len())
        }
    }
}

/// A probability distribution on a [`FiniteSpace`].
#[derive(Clone, PartialEq, Debug)]
pub struct Dist<S: Scalar> {
    space: FiniteSpace,
    weights: Vec<S>,
}

impl<S: Scalar> Dist<S> {
    /// Validates nonnegativity and unit mass (exact in rational mode,
    /// within [`crate::tol::FLOAT_MODE`] otherwise).
    pub fn new(space: FiniteSpace, weights: Vec<S>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::ShapeMismatch {
                context: "Dist::new",
                expected: space.len().to_string(),
                found: weights.len().to_string(),
            });
        }
        let mut total = S::zero();
        for w in &weights {
            if *w < S::zero() {
                return Err(Error::InvalidDistribution(format!(
                    "negative weight {w:?}"
                )));
            }
            total = total + w.clone();
        }
        if total.abs_diff(&S::one()) > S::mode_tol() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {} (expected 1)",
                total.to_f64()
            )));
        }
        Ok(Self { space, weights })
    }

    /// Normalizes a nonnegative weight vector with positive total mass.
    pub fn from_unnormalized(space: FiniteSpace, weights: Vec<S>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::ShapeMismatch {
                context: "Dist::from_unnormalized",
                expected: space.len().to_string(),
                found: weights.len().to_string(),
            });
        }
        let mut total = S::zero();
        for w in &weights {
            if *w < S::zero() {
                return Err(Error::InvalidDistribution(format!(
                    "negative weight {w:?}"
                )));
            }
            total = total + w.clone();
        }
        if total <= S::zero() {
            return Err(Error::InvalidDistribution("zero total mass".into()));
        }
        let weights = weights.into_iter().map(|w| w / total.clone()).collect();
        Ok(Self { space, weights })
    }

    pub fn uniform(space: FiniteSpace) -> Self {
        let n = space.len() as i64;
        let w = vec![S::ratio(1, n); space.len()];
        Self { space, weights: w }
    }

    pub fn dirac(space: FiniteSpace, label: &str) -> Result<Self> {
        let idx = space.index_of(label)?;
        let mut w = vec![S::zero(); space.len()];
        w[idx] = S::one();
        Ok(Self { space, weights: w })
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> &S {
        &self.weights[i]
    }

    pub fn weight_of(&self, label: &str) -> Result<&S> {
        Ok(&self.weights[self.space.index_of(label)?])
    }

    /// Largest elementwise deviation from `other`, as an `f64`.
    pub fn max_dev(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a.abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// A Markov kernel between finite spaces: one `Dist` row per source label.
#[derive(Clone, PartialEq, Debug)]
pub struct FiniteKernel<S: Scalar> {
    source: FiniteSpace,
    target: FiniteSpace,
    rows: Vec<Dist<S>>,
}

impl<S: Scalar> FiniteKernel<S> {
    pub fn new(source: FiniteSpace, target: FiniteSpace, rows: Vec<Vec<S>>) -> Result<Self> {
        if rows.len() != source.len() {
            return Err(Error::ShapeMismatch {
                context: "FiniteKernel::new",
                expected: source.len().to_string(),
                found: rows.len().to_string(),
            });
        }
        let rows = rows
            .into_iter()
            .map(|r| Dist::new(target.clone(), r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            source,
            target,
            rows,
        })
    }

    /// Builds a kernel from per-source-label distributions on a shared target.
    pub fn from_rows(source: FiniteSpace, rows: Vec<Dist<S>>) -> Result<Self> {
        if rows.len() != source.len() {
            return Err(Error::ShapeMismatch {
                context: "FiniteKernel::from_rows",
                expected: source.len().to_string(),
                found: rows.len().to_string(),
            });
        }
        let target = match rows.first() {
            Some(r) => r.space().clone(),
            None => return Err(Error::EmptyInput("kernel with empty source")),
        };
        for r in &rows {
            if r.space() != &target {
                return Err(Error::SpaceMismatch {
                    context: "FiniteKernel::from_rows",
                    left: target.describe(),
                    right: r.space().describe(),
                });
            }
        }
        Ok(Self {
            source,
            target,
            rows,
        })
    }

    pub fn identity(space: FiniteSpace) -> Self {
        let rows = space
            .labels()
            .iter()
            .map(|l| Dist::dirac(space.clone(), l).expect("label is in its own space"))
            .collect();
        Self {
            source: space.clone(),
            target: space,
            rows,
        }
    }

    /// Kernel of a deterministic map, sending each source label to a Dirac row.
    pub fn deterministic(
        source: FiniteSpace,
        target: FiniteSpace,
        f: impl Fn(&str) -> String,
    ) -> Result<Self> {
        let rows = source
            .labels()
            .iter()
            .map(|l| Dist::dirac(target.clone(), &f(l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            source,
            target,
            rows,
        })
    }

    pub fn source(&self) -> &FiniteSpace {
        &self.source
    }

    pub fn target(&self) -> &FiniteSpace {
        &self.target
    }

    pub fn row(&self, i: usize) -> &Dist<S> {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Dist<S>] {
        &self.rows
    }

    pub fn entry(&self, src: usize, tgt: usize) -> &S {
        self.rows[src].weight(tgt)
    }

    pub fn max_dev(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.max_dev(b))
            .fold(0.0, f64::max)
    }
}

/// A joint distribution over a product of finite spaces, stored flat
/// row-major (see the module docs for the index convention).
#[derive(Clone, PartialEq, Debug)]
pub struct JointDist<S: Scalar> {
    factors: Vec<FiniteSpace>,
    weights: Vec<S>,
}

impl<S: Scalar> JointDist<S> {
    pub fn new(factors: Vec<FiniteSpace>, weights: Vec<S>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptyInput("JointDist needs at least one factor"));
        }
        let size: usize = factors.iter().map(FiniteSpace::len).product();
        if weights.len() != size {
            return Err(Error::ShapeMismatch {
                context: "JointDist::new",
                expected: size.to_string(),
                found: weights.len().to_string(),
            });
        }
        let mut total = S::zero();
        for w in &weights {
            if *w < S::zero() {
                return Err(Error::InvalidDistribution(format!(
                    "negative weight {w:?}"
                )));
            }
            total = total + w.clone();
        }
        if total.abs_diff(&S::one()) > S::mode_tol() {
            return Err(Error::InvalidDistribution(format!(
                "joint weights sum to {} (expected 1)",
                total.to_f64()
            )));
        }
        Ok(Self { factors, weights })
    }

    pub fn from_dist(d: Dist<S>) -> Self {
        Self {
            factors: vec![d.space.clone()],
            weights: d.weights,
        }
    }

    /// Reinterprets a distribution on a product space as a joint tensor.
    /// The factor sizes must multiply to the distribution's size.
    pub fn from_product_dist(d: Dist<S>, factors: Vec<FiniteSpace>) -> Result<Self> {
        let size: usize = factors.iter().map(FiniteSpace::len).product();
        if size != d.space.len() {
            return Err(Error::ShapeMismatch {
                context: "JointDist::from_product_dist",
                expected: size.to_string(),
                found: d.space.len().to_string(),
            });
        }
        Ok(Self {
            factors,
            weights: d.weights,
        })
    }

    pub fn factors(&self) -> &[FiniteSpace] {
        &self.factors
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    /// Flat row-major index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.factors.len());
        let mut flat = 0;
        for (i, f) in idx.iter().zip(&self.factors) {
            debug_assert!(*i < f.len());
            flat = flat * f.len() + i;
        }
        flat
    }

    /// Multi-index of a flat row-major index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.factors.len()];
        for (k, f) in self.factors.iter().enumerate().rev() {
            idx[k] = flat % f.len();
            flat /= f.len();
        }
        idx
    }

    pub fn weight_at(&self, idx: &[usize]) -> &S {
        &self.weights[self.flat_index(idx)]
    }

    pub fn total_mass(&self) -> S {
        let mut total = S::zero();
        for w in &self.weights {
            total = total + w.clone();
        }
        total
    }

    /// The same mass as a distribution on the flat product space.
    pub fn as_product_dist(&self) -> Result<Dist<S>> {
        let space = FiniteSpace::product(&self.factors)?;
        Dist::new(space, self.weights.clone())
    }

    /// Converts a single-factor joint into a plain distribution.
    pub fn into_dist(self) -> Result<Dist<S>> {
        if self.factors.len() != 1 {
            return Err(Error::ShapeMismatch {
                context: "JointDist::into_dist",
                expected: "1 factor".into(),
                found: format!("{} factors", self.factors.len()),
            });
        }
        Dist::new(self.factors.into_iter().next().unwrap(), self.weights)
    }

    /// Marginal distribution of a single axis.
    pub fn marginal_dist(&self, axis: usize) -> Result<Dist<S>> {
        marginalize(self, &[axis])?.into_dist()
    }

    /// Conditions on the last axis taking the given label: slices, then
    /// renormalizes. A zero-mass slice falls back to the marginal over the
    /// remaining axes (the zero-evidence convention).
    pub fn condition_last(&self, label: &str) -> Result<JointDist<S>> {
        if self.factors.len() < 2 {
            return Err(Error::ShapeMismatch {
                context: "JointDist::condition_last",
                expected: ">= 2 factors".into(),
                found: format!("{} factors", self.factors.len()),
            });
        }
        let last = self.factors.last().unwrap();
        let j = last.index_of(label)?;
        let stride = last.len();
        let rest: Vec<FiniteSpace> = self.factors[..self.factors.len() - 1].to_vec();
        let rest_size: usize = rest.iter().map(FiniteSpace::len).product();

        let mut slice = Vec::with_capacity(rest_size);
        let mut mass = S::zero();
        for r in 0..rest_size {
            let w = self.weights[r * stride + j].clone();
            mass = mass + w.clone();
            slice.push(w);
        }
        if mass > S::zero() {
            let weights = slice.into_iter().map(|w| w / mass.clone()).collect();
            JointDist::new(rest, weights)
        } else {
            let keep: Vec<usize> = (0..self.factors.len() - 1).collect();
            marginalize(self, &keep)
        }
    }

    /// Conditions on the last `labels.len()` axes jointly taking the given
    /// labels, in one slice-and-renormalize step. A zero-mass slice falls
    /// back to the marginal over the leading axes (the zero-evidence
    /// convention). This is the regular-conditional route; the recursive
    /// route applies [`JointDist::condition_last`] once per coordinate.
    pub fn condition_suffix(&self, labels: &[&str]) -> Result<JointDist<S>> {
        if labels.is_empty() {
            return Ok(self.clone());
        }
        if labels.len() >= self.factors.len() {
            return Err(Error::ShapeMismatch {
                context: "JointDist::condition_suffix",
                expected: format!("< {} labels", self.factors.len()),
                found: labels.len().to_string(),
            });
        }
        let split = self.factors.len() - labels.len();
        let mut offset = 0usize;
        let mut stride = 1usize;
        for (f, label) in self.factors[split..].iter().zip(labels) {
            offset = offset * f.len() + f.index_of(label)?;
            stride *= f.len();
        }
        let lead: Vec<FiniteSpace> = self.factors[..split].to_vec();
        let lead_size: usize = lead.iter().map(FiniteSpace::len).product();
        let mut slice = Vec::with_capacity(lead_size);
        let mut mass = S::zero();
        for r in 0..lead_size {
            let w = self.weights[r * stride + offset].clone();
            mass = mass + w.clone();
            slice.push(w);
        }
        if mass > S::zero() {
            let weights = slice.into_iter().map(|w| w / mass.clone()).collect();
            JointDist::new(lead, weights)
        } else {
            let keep: Vec<usize> = (0..split).collect();
            marginalize(self, &keep)
        }
    }

    pub fn max_dev(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a.abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Composition `k2 ∘ k1`: first `k1` from `X` to `Y`, then `k2` from `Y` to `Z`.
/// Rows of the result are the matrix product of `k1`'s rows with `k2`.
pub fn compose_kernels<S: Scalar>(
    k2: &FiniteKernel<S>,
    k1: &FiniteKernel<S>,
) -> Result<FiniteKernel<S>> {
    if k1.target != k2.source {
        return Err(Error::SpaceMismatch {
            context: "compose_kernels",
            left: k1.target.describe(),
            right: k2.source.describe(),
        });
    }
    let rows = k1
        .rows
        .iter()
        .map(|row| {
            let mut out = vec![S::zero(); k2.target.len()];
            for (y, w) in row.weights().iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                for (z, v) in k2.rows[y].weights().iter().enumerate() {
                    out[z] = out[z].clone() + w.clone() * v.clone();
                }
            }
            Dist::new(k2.target.clone(), out)
        })
        .collect::<Result<Vec<_>>>()?;
    FiniteKernel::from_rows(k1.source.clone(), rows)
}

/// Pushforward of `mu` through `k`: `result(B) = Σ_x k(B|x) mu(x)`.
pub fn pushforward<S: Scalar>(k: &FiniteKernel<S>, mu: &Dist<S>) -> Result<Dist<S>> {
    if mu.space != k.source {
        return Err(Error::SpaceMismatch {
            context: "pushforward",
            left: mu.space.describe(),
            right: k.source.describe(),
        });
    }
    let mut out = vec![S::zero(); k.target.len()];
    for (x, w) in mu.weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        for (y, v) in k.rows[x].weights().iter().enumerate() {
            out[y] = out[y].clone() + w.clone() * v.clone();
        }
    }
    Dist::new(k.target.clone(), out)
}

/// Product kernel over a common source: `row(θ) = ⊗ᵢ rowᵢ(θ)`.
/// The target is the row-major product of the individual targets.
pub fn product_kernel<S: Scalar>(kernels: &[FiniteKernel<S>]) -> Result<FiniteKernel<S>> {
    let first = kernels
        .first()
        .ok_or(Error::EmptyInput("product_kernel of zero kernels"))?;
    for k in kernels {
        if k.source != first.source {
            return Err(Error::SpaceMismatch {
                context: "product_kernel",
                left: first.source.describe(),
                right: k.source.describe(),
            });
        }
    }
    let targets: Vec<FiniteSpace> = kernels.iter().map(|k| k.target.clone()).collect();
    let target = FiniteSpace::product(&targets)?;
    let rows = (0..first.source.len())
        .map(|x| {
            let mut acc = vec![S::one()];
            for k in kernels {
                let row = k.rows[x].weights();
                let mut next = Vec::with_capacity(acc.len() * row.len());
                for a in &acc {
                    for w in row {
                        next.push(a.clone() * w.clone());
                    }
                }
                acc = next;
            }
            Dist::new(target.clone(), acc)
        })
        .collect::<Result<Vec<_>>>()?;
    FiniteKernel::from_rows(first.source.clone(), rows)
}

/// Joint distribution of input and output: `joint(x, y) = mu(x) k(y|x)`.
pub fn graph_joint<S: Scalar>(k: &FiniteKernel<S>, mu: &Dist<S>) -> Result<JointDist<S>> {
    if mu.space != k.source {
        return Err(Error::SpaceMismatch {
            context: "graph_joint",
            left: mu.space.describe(),
            right: k.source.describe(),
        });
    }
    let mut weights = Vec::with_capacity(k.source.len() * k.target.len());
    for (x, w) in mu.weights.iter().enumerate() {
        for v in k.rows[x].weights() {
            weights.push(w.clone() * v.clone());
        }
    }
    JointDist::new(vec![k.source.clone(), k.target.clone()], weights)
}

/// Transposes a two-factor joint.
pub fn swap_joint<S: Scalar>(j: &JointDist<S>) -> Result<JointDist<S>> {
    if j.factors.len() != 2 {
        return Err(Error::ShapeMismatch {
            context: "swap_joint",
            expected: "2 factors".into(),
            found: format!("{} factors", j.factors.len()),
        });
    }
    let (na, nb) = (j.factors[0].len(), j.factors[1].len());
    let mut weights = Vec::with_capacity(na * nb);
    for b in 0..nb {
        for a in 0..na {
            weights.push(j.weights[a * nb + b].clone());
        }
    }
    JointDist::new(vec![j.factors[1].clone(), j.factors[0].clone()], weights)
}

/// Sums out the axes not listed in `keep`. Indices must be strictly
/// increasing, so kept factors stay in their original order.
pub fn marginalize<S: Scalar>(j: &JointDist<S>, keep: &[usize]) -> Result<JointDist<S>> {
    if keep.is_empty() {
        return Err(Error::EmptyInput("marginalize with empty keep set"));
    }
    for w in keep.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "keep indices must be strictly increasing".into(),
            ));
        }
    }
    if *keep.last().unwrap() >= j.factors.len() {
        return Err(Error::InvalidArgument(format!(
            "keep index {} out of range for {} factors",
            keep.last().unwrap(),
            j.factors.len()
        )));
    }
    if keep.len() == j.factors.len() {
        return Ok(j.clone());
    }
    let kept: Vec<FiniteSpace> = keep.iter().map(|&i| j.factors[i].clone()).collect();
    let kept_size: usize = kept.iter().map(FiniteSpace::len).product();
    let mut out = vec![S::zero(); kept_size];
    for (flat, w) in j.weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let idx = j.multi_index(flat);
        let mut kept_flat = 0;
        for (&axis, f) in keep.iter().zip(&kept) {
            kept_flat = kept_flat * f.len() + idx[axis];
        }
        out[kept_flat] = out[kept_flat].clone() + w.clone();
    }
    JointDist::new(kept, out)
}

/// Tensor product of kernels acting independently on paired coordinates:
/// `(ka ⊗ kb)((a,b) | (x,y)) = ka(a|x) kb(b|y)`.
///
/// With `ka` the identity this is the `id × k` construction used to chain a
/// second kernel onto a graph.
pub fn tensor_kernel<S: Scalar>(
    ka: &FiniteKernel<S>,
    kb: &FiniteKernel<S>,
) -> Result<FiniteKernel<S>> {
    let source = FiniteSpace::product(&[ka.source.clone(), kb.source.clone()])?;
    let target = FiniteSpace::product(&[ka.target.clone(), kb.target.clone()])?;
    let mut rows = Vec::with_capacity(source.len());
    for xa in 0..ka.source.len() {
        for xb in 0..kb.source.len() {
            let ra = ka.rows[xa].weights();
            let rb = kb.rows[xb].weights();
            let mut out = Vec::with_capacity(ra.len() * rb.len());
            for a in ra {
                for b in rb {
                    out.push(a.clone() * b.clone());
                }
            }
            rows.push(Dist::new(target.clone(), out)?);
        }
    }
    FiniteKernel::from_rows(source, rows)
}

// ---------------------------------------------------------------------------
// Text serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistDoc {
    labels: Vec<String>,
    weights: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    source: Vec<String>,
    target: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    factors: Vec<Vec<String>>,
    weights: Vec<String>,
}

fn to_toml<T: Serialize>(doc: &T) -> String {
    toml::to_string(doc).expect("document types always serialize")
}

fn from_toml<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

impl FiniteSpace {
    pub fn to_text(&self) -> String {
        to_toml(&SpaceDoc {
            labels: self.labels.clone(),
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: SpaceDoc = from_toml(text)?;
        Self::new(doc.labels)
    }
}

impl<S: Scalar> Dist<S> {
    pub fn to_text(&self) -> String {
        to_toml(&DistDoc {
            labels: self.space.labels.clone(),
            weights: self.weights.iter().map(Scalar::render_text).collect(),
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: DistDoc = from_toml(text)?;
        let space = FiniteSpace::new(doc.labels)?;
        let weights = doc
            .weights
            .iter()
            .map(|w| S::parse_text(w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, weights)
    }
}

impl<S: Scalar> FiniteKernel<S> {
    pub fn to_text(&self) -> String {
        to_toml(&KernelDoc {
            source: self.source.labels.clone(),
            target: self.target.labels.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.weights().iter().map(Scalar::render_text).collect())
                .collect(),
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: KernelDoc = from_toml(text)?;
        let source = FiniteSpace::new(doc.source)?;
        let target = FiniteSpace::new(doc.target)?;
        let rows = doc
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|w| S::parse_text(w))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, rows)
    }
}

impl<S: Scalar> JointDist<S> {
    pub fn to_text(&self) -> String {
        to_toml(&JointDoc {
            factors: self.factors.iter().map(|f| f.labels.clone()).collect(),
            weights: self.weights.iter().map(Scalar::render_text).collect(),
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: JointDoc = from_toml(text)?;
        let factors = doc
            .factors
            .into_iter()
            .map(FiniteSpace::new)
            .collect::<Result<Vec<_>>>()?;
        let weights = doc
            .weights
            .iter()
            .map(|w| S::parse_text(w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rat;
    use proptest::prelude::*;

    fn space(labels: &[&str]) -> FiniteSpace {
        FiniteSpace::new(labels.iter().copied()).unwrap()
    }

    fn fdist(labels: &[&str], w: &[f64]) -> Dist<f64> {
        Dist::new(space(labels), w.to_vec()).unwrap()
    }

    fn fkernel(src: &[&str], tgt: &[&str], rows: &[&[f64]]) -> FiniteKernel<f64> {
        FiniteKernel::new(
            space(src),
            space(tgt),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn space_rejects_duplicates_and_separator() {
        assert!(FiniteSpace::new(["a", "a"]).is_err());
        assert!(FiniteSpace::new(["a,b"]).is_err());
        assert!(FiniteSpace::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn dist_rejects_bad_weights() {
        let s = space(&["a", "b"]);
        assert!(Dist::new(s.clone(), vec![0.5, 0.6]).is_err());
        assert!(Dist::new(s.clone(), vec![-0.1, 1.1]).is_err());
        assert!(Dist::new(s, vec![0.5]).is_err());
    }

    #[test]
    fn identity_composition_is_neutral() {
        let k = fkernel(&["a", "b"], &["u", "v"], &[&[0.2, 0.8], &[0.6, 0.4]]);
        let id_left = FiniteKernel::identity(space(&["u", "v"]));
        let id_right = FiniteKernel::identity(space(&["a", "b"]));
        assert_eq!(compose_kernels(&id_left, &k).unwrap(), k);
        assert_eq!(compose_kernels(&k, &id_right).unwrap(), k);
    }

    #[test]
    fn deterministic_kernels_compose_like_functions() {
        // f: {a,b} -> {0,1} with f(a)=0, f(b)=1; g: {0,1} -> {u,v} with g(0)=v, g(1)=u.
        let f = FiniteKernel::<Rat>::deterministic(space(&["a", "b"]), space(&["0", "1"]), |l| {
            if l == "a" { "0".into() } else { "1".into() }
        })
        .unwrap();
        let g = FiniteKernel::<Rat>::deterministic(space(&["0", "1"]), space(&["u", "v"]), |l| {
            if l == "0" { "v".into() } else { "u".into() }
        })
        .unwrap();
        let gf = compose_kernels(&g, &f).unwrap();
        let expected =
            FiniteKernel::<Rat>::deterministic(space(&["a", "b"]), space(&["u", "v"]), |l| {
                if l == "a" { "v".into() } else { "u".into() }
            })
            .unwrap();
        assert_eq!(gf, expected);
    }

    #[test]
    fn composition_matches_dense_matrix_product_oracle() {
        // Independent oracle: explicit triple loop over fixed stochastic matrices.
        let k1 = fkernel(
            &["x0", "x1"],
            &["y0", "y1", "y2"],
            &[&[0.5, 0.25, 0.25], &[0.1, 0.2, 0.7]],
        );
        let k2 = fkernel(
            &["y0", "y1", "y2"],
            &["z0", "z1"],
            &[&[0.3, 0.7], &[0.9, 0.1], &[0.5, 0.5]],
        );
        let got = compose_kernels(&k2, &k1).unwrap();
        for x in 0..2 {
            for z in 0..2 {
                let mut acc = 0.0;
                for y in 0..3 {
                    acc += k1.entry(x, y) * k2.entry(y, z);
                }
                assert!((got.entry(x, z) - acc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn composition_shape_error() {
        let k1 = fkernel(&["x"], &["y0", "y1"], &[&[0.5, 0.5]]);
        let k2 = fkernel(&["w0", "w1", "w2"], &["z"], &[&[1.0], &[1.0], &[1.0]]);
        assert!(matches!(
            compose_kernels(&k2, &k1),
            Err(Error::SpaceMismatch { .. })
        ));
    }

    #[test]
    fn pushforward_dirac_picks_a_row() {
        let k = fkernel(&["a", "b"], &["u", "v"], &[&[0.2, 0.8], &[0.6, 0.4]]);
        let mu = Dist::dirac(space(&["a", "b"]), "b").unwrap();
        let out = pushforward(&k, &mu).unwrap();
        assert_eq!(out.weights(), &[0.6, 0.4]);
    }

    #[test]
    fn pushforward_matches_weighted_row_average_oracle() {
        // Hand value: 0.5*[0.2,0.8] + 0.5*[0.6,0.4] = [0.4,0.6].
        let k = fkernel(&["t1", "t2"], &["u", "v"], &[&[0.2, 0.8], &[0.6, 0.4]]);
        let mu = fdist(&["t1", "t2"], &[0.5, 0.5]);
        let out = pushforward(&k, &mu).unwrap();
        assert!(out.max_dev(&fdist(&["u", "v"], &[0.4, 0.6])) < 1e-15);
    }

    #[test]
    fn pushforward_through_identity_is_identity() {
        let mu = fdist(&["a", "b", "c"], &[0.2, 0.3, 0.5]);
        let id = FiniteKernel::identity(mu.space().clone());
        assert_eq!(pushforward(&id, &mu).unwrap(), mu);
    }

    #[test]
    fn pushforward_space_mismatch() {
        let k = fkernel(&["a"], &["u"], &[&[1.0]]);
        let mu = fdist(&["z"], &[1.0]);
        assert!(pushforward(&k, &mu).is_err());
    }

    #[test]
    fn product_of_one_kernel_keeps_rows() {
        let k = fkernel(&["a"], &["u", "v"], &[&[0.3, 0.7]]);
        let p = product_kernel(std::slice::from_ref(&k)).unwrap();
        assert_eq!(p.row(0).weights(), k.row(0).weights());
    }

    #[test]
    fn product_of_two_copies_is_outer_square() {
        let p = 0.3f64;
        let k = fkernel(&["a"], &["h", "t"], &[&[p, 1.0 - p]]);
        let prod = product_kernel(&[k.clone(), k]).unwrap();
        let expected = [p * p, p * (1.0 - p), (1.0 - p) * p, (1.0 - p) * (1.0 - p)];
        for (got, want) in prod.row(0).weights().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn triple_product_matches_nested_loop_oracle() {
        let k1 = fkernel(&["a"], &["u", "v"], &[&[0.25, 0.75]]);
        let k2 = fkernel(&["a"], &["p", "q", "r"], &[&[0.5, 0.3, 0.2]]);
        let k3 = fkernel(&["a"], &["0", "1"], &[&[0.9, 0.1]]);
        let prod = product_kernel(&[k1.clone(), k2.clone(), k3.clone()]).unwrap();
        let mut flat = 0;
        for i in 0..2 {
            for j in 0..3 {
                for l in 0..2 {
                    let want = k1.entry(0, i) * k2.entry(0, j) * k3.entry(0, l);
                    assert!((prod.row(0).weight(flat) - want).abs() < 1e-15);
                    flat += 1;
                }
            }
        }
    }

    #[test]
    fn product_kernel_errors() {
        assert!(product_kernel::<f64>(&[]).is_err());
        let k1 = fkernel(&["a"], &["u"], &[&[1.0]]);
        let k2 = fkernel(&["b"], &["u"], &[&[1.0]]);
        assert!(product_kernel(&[k1, k2]).is_err());
    }

    #[test]
    fn graph_joint_matches_elementwise_product_oracle() {
        let k = fkernel(&["t1", "t2"], &["u", "v"], &[&[0.2, 0.8], &[0.6, 0.4]]);
        let mu = fdist(&["t1", "t2"], &[0.5, 0.5]);
        let j = graph_joint(&k, &mu).unwrap();
        assert_eq!(j.weights(), &[0.1, 0.4, 0.3, 0.2]);
        // Marginals recover mu and the pushforward.
        assert!(j.marginal_dist(0).unwrap().max_dev(&mu) < 1e-15);
        let push = pushforward(&k, &mu).unwrap();
        assert!(j.marginal_dist(1).unwrap().max_dev(&push) < 1e-15);
    }

    #[test]
    fn graph_of_dirac_prior_is_one_row() {
        let k = fkernel(&["a", "b"], &["u", "v"], &[&[0.2, 0.8], &[0.6, 0.4]]);
        let mu = Dist::dirac(space(&["a", "b"]), "a").unwrap();
        let j = graph_joint(&k, &mu).unwrap();
        assert_eq!(j.weights(), &[0.2, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn graph_of_deterministic_kernel_is_supported_on_graph() {
        let f = FiniteKernel::<f64>::deterministic(space(&["a", "b"]), space(&["u", "v"]), |l| {
            if l == "a" { "v".into() } else { "u".into() }
        })
        .unwrap();
        let mu = fdist(&["a", "b"], &[0.5, 0.5]);
        let j = graph_joint(&f, &mu).unwrap();
        assert_eq!(j.weights(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn swap_transposes_and_is_involutive() {
        let j = JointDist::new(
            vec![space(&["a", "b"]), space(&["u", "v"])],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        let s = swap_joint(&j).unwrap();
        assert_eq!(s.weights(), &[0.1, 0.3, 0.4, 0.2]);
        assert_eq!(swap_joint(&s).unwrap().weights(), j.weights());
        let sym = JointDist::new(
            vec![space(&["a", "b"]), space(&["x", "y"])],
            vec![0.25, 0.25, 0.25, 0.25],
        )
        .unwrap();
        assert_eq!(swap_joint(&sym).unwrap().weights(), sym.weights());
    }

    #[test]
    fn swap_requires_two_factors() {
        let j = JointDist::new(
            vec![space(&["a"]), space(&["u"]), space(&["p"])],
            vec![1.0],
        )
        .unwrap();
        assert!(swap_joint(&j).is_err());
    }

    #[test]
    fn marginalize_three_factor_matches_brute_force() {
        let f0 = space(&["a", "b"]);
        let f1 = space(&["u", "v", "w"]);
        let f2 = space(&["0", "1"]);
        let raw: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let j = JointDist::new(vec![f0, f1.clone(), f2], weights.clone()).unwrap();
        let m = marginalize(&j, &[1]).unwrap().into_dist().unwrap();
        for (k, _) in f1.labels().iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..2 {
                for l in 0..2 {
                    acc += weights[(i * 3 + k) * 2 + l];
                }
            }
            assert!((m.weight(k) - acc).abs() < 1e-15);
        }
        // keep-all returns the joint unchanged
        assert_eq!(marginalize(&j, &[0, 1, 2]).unwrap(), j);
        assert!(marginalize(&j, &[]).is_err());
        assert!(marginalize(&j, &[3]).is_err());
        assert!(marginalize(&j, &[1, 0]).is_err());
    }

    #[test]
    fn condition_last_slices_and_renormalizes() {
        let j = JointDist::new(
            vec![space(&["a", "b"]), space(&["u", "v"])],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        let c = j.condition_last("v").unwrap().into_dist().unwrap();
        assert!(c.max_dev(&fdist(&["a", "b"], &[4.0 / 6.0, 2.0 / 6.0])) < 1e-15);
    }

    #[test]
    fn flat_index_round_trips() {
        let j = JointDist::new(
            vec![space(&["a", "b"]), space(&["u", "v", "w"])],
            vec![0.0, 0.1, 0.2, 0.3, 0.2, 0.2],
        )
        .unwrap();
        for flat in 0..6 {
            assert_eq!(j.flat_index(&j.multi_index(flat)), flat);
        }
    }

    #[test]
    fn text_round_trip_is_stable() {
        let k = fkernel(
            &["a", "b"],
            &["u", "v", "w"],
            &[&[0.1, 0.2, 0.7], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
        );
        let back = FiniteKernel::<f64>::from_text(&k.to_text()).unwrap();
        assert_eq!(k, back);

        let d: Dist<Rat> = Dist::new(
            space(&["y1", "y2", "y3"]),
            vec![Rat::ratio(1, 6), Rat::ratio(1, 3), Rat::ratio(1, 2)],
        )
        .unwrap();
        assert_eq!(Dist::<Rat>::from_text(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn text_rejects_unknown_keys() {
        let text = "labels = [\"a\"]\nweights = [\"1\"]\nextra = 1\n";
        assert!(Dist::<f64>::from_text(text).is_err());
    }

    #[test]
    fn space_and_joint_text_round_trip() {
        let s = space(&["sun", "rain", "fog"]);
        assert_eq!(FiniteSpace::from_text(&s.to_text()).unwrap(), s);

        let j = JointDist::<f64>::new(
            vec![space(&["a", "b"]), space(&["u", "v"])],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        assert_eq!(JointDist::<f64>::from_text(&j.to_text()).unwrap(), j);
    }

    // --- randomized law checks -------------------------------------------

    fn arb_rat_weights(n: usize) -> impl Strategy<Value = Vec<Rat>> {
        proptest::collection::vec(1..=9i64, n).prop_map(|cs| {
            let total: i64 = cs.iter().sum();
            cs.into_iter().map(|c| Rat::ratio(c, total)).collect()
        })
    }

    fn arb_rat_kernel(
        src: FiniteSpace,
        tgt: FiniteSpace,
    ) -> impl Strategy<Value = FiniteKernel<Rat>> {
        proptest::collection::vec(arb_rat_weights(tgt.len()), src.len())
            .prop_map(move |rows| FiniteKernel::new(src.clone(), tgt.clone(), rows).unwrap())
    }

    fn arb_chain() -> impl Strategy<
        Value = (
            FiniteKernel<Rat>,
            FiniteKernel<Rat>,
            FiniteKernel<Rat>,
            Dist<Rat>,
        ),
    > {
        (1usize..=6, 1usize..=6, 1usize..=6, 1usize..=6).prop_flat_map(|(a, b, c, d)| {
            let (sa, sb, sc, sd) = (
                FiniteSpace::indexed("a", a),
                FiniteSpace::indexed("b", b),
                FiniteSpace::indexed("c", c),
                FiniteSpace::indexed("d", d),
            );
            (
                arb_rat_kernel(sa.clone(), sb.clone()),
                arb_rat_kernel(sb, sc.clone()),
                arb_rat_kernel(sc, sd),
                arb_rat_weights(a).prop_map(move |w| Dist::new(sa.clone(), w).unwrap()),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn composition_is_associative_exactly((k1, k2, k3, _mu) in arb_chain()) {
            let left = compose_kernels(&k3, &compose_kernels(&k2, &k1).unwrap()).unwrap();
            let right = compose_kernels(&compose_kernels(&k3, &k2).unwrap(), &k1).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn pushforward_is_functorial((k1, k2, _k3, mu) in arb_chain()) {
            let via_compose = pushforward(&compose_kernels(&k2, &k1).unwrap(), &mu).unwrap();
            let via_steps = pushforward(&k2, &pushforward(&k1, &mu).unwrap()).unwrap();
            prop_assert_eq!(via_compose, via_steps);
        }

        #[test]
        fn graph_composition_law_holds_exactly((k1, k2, _k3, mu) in arb_chain()) {
            // Graph of a composition equals chaining (id x k2) onto the graph of k1.
            let lhs = graph_joint(&compose_kernels(&k2, &k1).unwrap(), &mu).unwrap();
            let id_x = FiniteKernel::identity(k1.source().clone());
            let chain = tensor_kernel(&id_x, &k2).unwrap();
            let base = graph_joint(&k1, &mu).unwrap().as_product_dist().unwrap();
            let rhs_flat = pushforward(&chain, &base).unwrap();
            let rhs = JointDist::from_product_dist(
                rhs_flat,
                vec![k1.source().clone(), k2.target().clone()],
            )
            .unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn mass_is_conserved_in_float_mode(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.01f64..1.0, 4), 3),
            mu_raw in proptest::collection::vec(0.01f64..1.0, 3),
        ) {
            let src = FiniteSpace::indexed("x", 3);
            let tgt = FiniteSpace::indexed("y", 4);
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|w| w / s).collect()
            }).collect();
            let k = FiniteKernel::new(src.clone(), tgt, rows).unwrap();
            let mu = Dist::from_unnormalized(src, mu_raw).unwrap();
            let push = pushforward(&k, &mu).unwrap();
            let total: f64 = push.weights().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            let joint = graph_joint(&k, &mu).unwrap();
            prop_assert!((joint.total_mass() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn composition_is_associative_in_float_mode(
            rows1 in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 5), 6),
            rows2 in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 6), 5),
            rows3 in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 6),
        ) {
            let normalize = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                rows.into_iter().map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|w| w / s).collect()
                }).collect()
            };
            let a = FiniteSpace::indexed("a", 6);
            let b = FiniteSpace::indexed("b", 5);
            let c = FiniteSpace::indexed("c", 6);
            let d = FiniteSpace::indexed("d", 4);
            let k1 = FiniteKernel::new(a, b.clone(), normalize(rows1)).unwrap();
            let k2 = FiniteKernel::new(b, c.clone(), normalize(rows2)).unwrap();
            let k3 = FiniteKernel::new(c, d, normalize(rows3)).unwrap();
            let left = compose_kernels(&k3, &compose_kernels(&k2, &k1).unwrap()).unwrap();
            let right = compose_kernels(&compose_kernels(&k3, &k2).unwrap(), &k1).unwrap();
            prop_assert!(left.max_dev(&right) <= 1e-12);
        }

        #[test]
        fn serialization_round_trips(rows in proptest::collection::vec(
            proptest::collection::vec(1e-6f64..1.0, 3), 2))
        {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|w| w / s).collect()
            }).collect();
            let k = FiniteKernel::new(
                FiniteSpace::indexed("x", 2),
                FiniteSpace::indexed("y", 3),
                rows,
            ).unwrap();
            let back = FiniteKernel::<f64>::from_text(&k.to_text()).unwrap();
            prop_assert_eq!(k, back);
        }
    }
}
