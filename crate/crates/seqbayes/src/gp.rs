//! Gaussian-process regression with noisy (corrupted) measurements.
//!
//! Test coordinates carry the latent function value; train coordinates carry
//! the function value plus observation noise on the diagonal. The batch path
//! solves one `n x n` symmetric system. The recursive path builds the joint
//! over all `m + n` coordinates once and then consumes one observation per
//! step with a rank-1 update (the Kalman update), never factorizing a matrix.
//! The two paths agree to numerical precision; `benchmark` measures the
//! cumulative cost of each as observations arrive.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tol;

/// Prior over functions: mean, covariance kernel, and per-input observation
/// noise variance.
pub struct GpPrior {
    mean: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    cov: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    noise_var: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    describe: String,
}

impl std::fmt::Debug for GpPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GpPrior({})", self.describe)
    }
}

impl GpPrior {
    pub fn new(
        mean: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cov: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        noise_var: impl Fn(f64) -> f64 + Send + Sync + 'static,
        describe: impl Into<String>,
    ) -> Self {
        Self {
            mean: Box::new(mean),
            cov: Box::new(cov),
            noise_var: Box::new(noise_var),
            describe: describe.into(),
        }
    }

    /// Zero-mean squared-exponential kernel with homoscedastic noise.
    pub fn rbf(signal_var: f64, length_scale: f64, noise_var: f64) -> Self {
        let ls2 = 2.0 * length_scale * length_scale;
        Self::new(
            |_| 0.0,
            move |a, b| signal_var * (-(a - b) * (a - b) / ls2).exp(),
            move |_| noise_var,
            format!("rbf(sv={signal_var}, ls={length_scale}, noise={noise_var})"),
        )
    }

    /// Zero-mean Matern-3/2 kernel with homoscedastic noise.
    pub fn matern32(signal_var: f64, length_scale: f64, noise_var: f64) -> Self {
        let c = 3.0f64.sqrt() / length_scale;
        Self::new(
            |_| 0.0,
            move |a, b| {
                let r = (a - b).abs();
                signal_var * (1.0 + c * r) * (-c * r).exp()
            },
            move |_| noise_var,
            format!("matern32(sv={signal_var}, ls={length_scale}, noise={noise_var})"),
        )
    }

    /// Constant covariance `k(a,b) = value` with homoscedastic noise.
    /// Degenerate but handy: all function values are perfectly correlated.
    pub fn constant(value: f64, noise_var: f64) -> Self {
        Self::new(
            |_| 0.0,
            move |_, _| value,
            move |_| noise_var,
            format!("constant(k={value}, noise={noise_var})"),
        )
    }

    pub fn mean_at(&self, x: f64) -> f64 {
        (self.mean)(x)
    }

    pub fn cov_at(&self, a: f64, b: f64) -> f64 {
        (self.cov)(a, b)
    }

    pub fn noise_var_at(&self, x: f64) -> f64 {
        (self.noise_var)(x)
    }

    pub fn describe(&self) -> &str {
        &self.describe
    }
}

/// Whether a coordinate is a noiseless test value or a noisy observation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CoordKind {
    Test,
    Train,
}

/// One tracked coordinate: its input location and kind.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Coord {
    pub input: f64,
    pub kind: CoordKind,
}

/// A joint Gaussian over the currently tracked coordinates.
#[derive(Clone, Debug)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    coords: Vec<Coord>,
}

impl GaussianBelief {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    /// Index of the first remaining train coordinate, if any.
    pub fn next_train(&self) -> Option<usize> {
        self.coords.iter().position(|c| c.kind == CoordKind::Train)
    }

    /// Checks the stored-covariance invariants: symmetry within
    /// [`tol::COV_SYMMETRY`] and eigenvalues above `-(trace) *`
    /// [`tol::PSD_EIGEN_SCALE`].
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > tol::COV_SYMMETRY {
                    return Err(Error::Validation(format!(
                        "covariance asymmetry at ({i},{j}): {}",
                        (self.cov[(i, j)] - self.cov[(j, i)]).abs()
                    )));
                }
            }
        }
        let trace: f64 = self.cov.diagonal().iter().sum();
        let floor = -tol::PSD_EIGEN_SCALE * trace.max(f64::EPSILON);
        let eigs = self.cov.clone().symmetric_eigenvalues();
        for e in eigs.iter() {
            if *e < floor {
                return Err(Error::Validation(format!(
                    "covariance eigenvalue {e} below floor {floor}"
                )));
            }
        }
        Ok(())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Prior joint over test coordinates followed by train coordinates.
/// Train coordinates get the observation noise added on the diagonal only.
pub fn build_joint(prior: &GpPrior, tests: &[f64], trains: &[f64]) -> Result<GaussianBelief> {
    let d = tests.len() + trains.len();
    if d == 0 {
        return Err(Error::EmptyInput("build_joint over zero coordinates"));
    }
    let coords: Vec<Coord> = tests
        .iter()
        .map(|&x| Coord {
            input: x,
            kind: CoordKind::Test,
        })
        .chain(trains.iter().map(|&x| Coord {
            input: x,
            kind: CoordKind::Train,
        }))
        .collect();
    let mut mean = DVector::zeros(d);
    for (i, c) in coords.iter().enumerate() {
        mean[i] = prior.mean_at(c.input);
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let k = prior.cov_at(coords[i].input, coords[j].input);
            cov[(i, j)] = k;
            cov[(j, i)] = k;
        }
        if coords[i].kind == CoordKind::Train {
            cov[(i, i)] += prior.noise_var_at(coords[i].input);
        }
    }
    if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("build_joint kernel evaluation"));
    }
    Ok(GaussianBelief { mean, cov, coords })
}

fn remove_coord(belief: &GaussianBelief, idx: usize) -> GaussianBelief {
    let keep: Vec<usize> = (0..belief.dim()).filter(|&i| i != idx).collect();
    let mean = DVector::from_iterator(keep.len(), keep.iter().map(|&i| belief.mean[i]));
    let mut cov = DMatrix::zeros(keep.len(), keep.len());
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            cov[(a, b)] = belief.cov[(i, j)];
        }
    }
    let coords = keep.iter().map(|&i| belief.coords[i]).collect();
    GaussianBelief { mean, cov, coords }
}

/// Conditions on the train coordinate `coord` taking the value `y` and
/// removes it: `mean += gain (y - mean_o)`, `cov -= gain cov_o`, with
/// `gain = cov[:,o] / cov[o,o]`. Only vector products, no factorization.
///
/// A coordinate whose variance is below [`tol::OBS_VAR_FLOOR`] is
/// deterministic: the observation must match its mean within
/// [`tol::DETERMINISTIC_OBS_TOL`], and the coordinate is dropped with zero
/// gain.
pub fn condition_one(belief: GaussianBelief, coord: usize, y: f64) -> Result<GaussianBelief> {
    if coord >= belief.dim() {
        return Err(Error::InvalidArgument(format!(
            "coordinate {coord} out of range for belief of dim {}",
            belief.dim()
        )));
    }
    if belief.coords[coord].kind != CoordKind::Train {
        return Err(Error::InvalidArgument(format!(
            "coordinate {coord} is a test coordinate; only train coordinates are observable"
        )));
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    let var_o = belief.cov[(coord, coord)];
    if var_o <= tol::OBS_VAR_FLOOR {
        let predicted = belief.mean[coord];
        if (y - predicted).abs() > tol::DETERMINISTIC_OBS_TOL {
            return Err(Error::InconsistentObservation {
                predicted,
                observed: y,
            });
        }
        return Ok(remove_coord(&belief, coord));
    }
    let gain = belief.cov.column(coord) / var_o;
    let innovation = y - belief.mean[coord];
    let mean = &belief.mean + &gain * innovation;
    let mut cov = belief.cov.clone();
    // Rank-1 downdate: cov -= gain * cov[coord, :].
    let row = belief.cov.row(coord).clone_owned();
    cov -= &gain * &row;
    symmetrize(&mut cov);
    let next = GaussianBelief {
        mean,
        cov,
        coords: belief.coords,
    };
    Ok(remove_coord(&next, coord))
}

/// Cholesky of a symmetric matrix after adding the standard jitter
/// (`trace/dim *` [`tol::GRAM_JITTER_SCALE`]) to the diagonal.
fn jittered_cholesky(mut m: DMatrix<f64>, context: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let d = m.nrows();
    let trace: f64 = m.diagonal().iter().sum();
    let jitter = tol::GRAM_JITTER_SCALE * trace.max(f64::EPSILON) / d as f64;
    for i in 0..d {
        m[(i, i)] += jitter;
    }
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(context.to_string()))
}

/// Classical batch predictive: one symmetric solve against the noisy Gram
/// matrix. `n = 0` returns the prior test block.
pub fn batch_predictive(
    prior: &GpPrior,
    tests: &[f64],
    data: &[(f64, f64)],
) -> Result<GaussianBelief> {
    if data.is_empty() {
        return build_joint(prior, tests, &[]);
    }
    let m = tests.len();
    let n = data.len();
    let mut k_xx = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = prior.cov_at(data[i].0, data[j].0);
            k_xx[(i, j)] = k;
            k_xx[(j, i)] = k;
        }
        k_xx[(i, i)] += prior.noise_var_at(data[i].0);
    }
    let mut k_tx = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            k_tx[(i, j)] = prior.cov_at(tests[i], data[j].0);
        }
    }
    let mut k_tt = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let k = prior.cov_at(tests[i], tests[j]);
            k_tt[(i, j)] = k;
            k_tt[(j, i)] = k;
        }
    }
    if k_xx.iter().any(|v| !v.is_finite())
        || k_tx.iter().any(|v| !v.is_finite())
        || k_tt.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("batch_predictive kernel evaluation"));
    }

    let chol = jittered_cholesky(k_xx, "noisy Gram matrix in batch_predictive")?;
    let centered = DVector::from_iterator(n, data.iter().map(|&(x, y)| y - prior.mean_at(x)));
    let alpha = chol.solve(&centered);
    let mean_prior = DVector::from_iterator(m, tests.iter().map(|&t| prior.mean_at(t)));
    let mean = mean_prior + &k_tx * alpha;
    let solved = chol.solve(&k_tx.transpose());
    let mut cov = k_tt - &k_tx * solved;
    symmetrize(&mut cov);
    let coords = tests
        .iter()
        .map(|&x| Coord {
            input: x,
            kind: CoordKind::Test,
        })
        .collect();
    Ok(GaussianBelief { mean, cov, coords })
}

/// Recursive predictive: build the joint once, then fold the observations
/// in stream order, one rank-1 conditioning per observation.
pub fn recursive_predictive(
    prior: &GpPrior,
    tests: &[f64],
    data: &[(f64, f64)],
) -> Result<GaussianBelief> {
    let xs: Vec<f64> = data.iter().map(|&(x, _)| x).collect();
    let mut belief = build_joint(prior, tests, &xs)?;
    let m = tests.len();
    for &(_, y) in data {
        // After each removal the next pending observation sits at index m.
        belief = condition_one(belief, m, y)?;
    }
    Ok(belief)
}

/// Appends one train coordinate to a belief by regressing the new latent on
/// the retained coordinates under the prior kernel: with `A = k_new,C K_CC⁻¹`
/// the appended coordinate has mean `m(x) + A (mu_C - m_C)`, cross-covariance
/// `Sigma_C Aᵀ`, and variance `A Sigma_C Aᵀ + S + noise(x)` where `S` is the
/// prior Schur complement.
///
/// On a belief that has not yet consumed any observation this reproduces the
/// corresponding `build_joint` block exactly, so appending arrivals before
/// conditioning matches a from-scratch rebuild; once observations correlated
/// with `x` have been consumed the prior regression no longer carries their
/// information and the append is an approximation.
pub fn append_train(belief: &GaussianBelief, prior: &GpPrior, x: f64) -> Result<GaussianBelief> {
    let d = belief.dim();
    let mut k_cc = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let k = prior.cov_at(belief.coords[i].input, belief.coords[j].input);
            k_cc[(i, j)] = k;
            k_cc[(j, i)] = k;
        }
        if belief.coords[i].kind == CoordKind::Train {
            k_cc[(i, i)] += prior.noise_var_at(belief.coords[i].input);
        }
    }
    let k_new = DVector::from_iterator(
        d,
        belief.coords.iter().map(|c| prior.cov_at(x, c.input)),
    );
    let own = prior.cov_at(x, x) + prior.noise_var_at(x);
    if !own.is_finite() || k_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("append_train kernel evaluation"));
    }

    let chol = jittered_cholesky(k_cc.clone(), "retained-coordinate Gram in append_train")?;
    let a = chol.solve(&k_new); // K_CC^{-1} k_new, used transposed below
    let schur = (own - k_new.dot(&a)).max(0.0);

    let m_c = DVector::from_iterator(d, belief.coords.iter().map(|c| prior.mean_at(c.input)));
    let new_mean_val = prior.mean_at(x) + a.dot(&(&belief.mean - &m_c));
    let cross = &belief.cov * &a;
    let new_var = a.dot(&cross) + schur;

    let mut mean = DVector::zeros(d + 1);
    mean.rows_mut(0, d).copy_from(&belief.mean);
    mean[d] = new_mean_val;
    let mut cov = DMatrix::zeros(d + 1, d + 1);
    cov.view_mut((0, 0), (d, d)).copy_from(&belief.cov);
    for i in 0..d {
        cov[(i, d)] = cross[i];
        cov[(d, i)] = cross[i];
    }
    cov[(d, d)] = new_var;
    let mut coords = belief.coords.clone();
    coords.push(Coord {
        input: x,
        kind: CoordKind::Train,
    });
    Ok(GaussianBelief { mean, cov, coords })
}

/// Which update strategy a benchmark row measured.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BenchMethod {
    /// Full batch refit on all data seen so far.
    Batch,
    /// One rank-1 conditioning step of the prebuilt joint.
    Recursive,
}

impl BenchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::Batch => "batch",
            BenchMethod::Recursive => "recursive",
        }
    }
}

/// One timing measurement: the median over `reps` repetitions of the work
/// method `method` does when observation `n` arrives.
#[derive(Clone, Copy, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub method: BenchMethod,
    pub median_s: f64,
    pub reps: usize,
}

/// Timing table for streaming arrival of observations.
#[derive(Clone, Debug)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Median time to build the full joint once (charged to the recursive
    /// method's first step when accumulating).
    pub build_s: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Measures, for every `n` in `1..=data.len()`, the cost of (a) refitting
/// the batch predictive on the first `n` observations and (b) the single
/// conditioning step that consumes observation `n` in the streaming
/// recursion. Single-threaded; medians over `reps` repetitions.
pub fn benchmark(
    prior: &GpPrior,
    tests: &[f64],
    data: &[(f64, f64)],
    reps: usize,
) -> Result<BenchTable> {
    if data.is_empty() {
        return Err(Error::EmptyInput("benchmark with no observations"));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("benchmark needs reps >= 1".into()));
    }
    let n_max = data.len();
    let m = tests.len();
    let xs: Vec<f64> = data.iter().map(|&(x, _)| x).collect();

    let mut batch_times: Vec<Vec<f64>> = (0..n_max).map(|_| Vec::with_capacity(reps)).collect();
    let mut step_times: Vec<Vec<f64>> = (0..n_max).map(|_| Vec::with_capacity(reps)).collect();
    let mut build_times = Vec::with_capacity(reps);
    for _ in 0..reps {
        for n in 1..=n_max {
            let t0 = std::time::Instant::now();
            let fit = batch_predictive(prior, tests, &data[..n])?;
            batch_times[n - 1].push(t0.elapsed().as_secs_f64());
            std::hint::black_box(fit);
        }
        let t0 = std::time::Instant::now();
        let mut belief = build_joint(prior, tests, &xs)?;
        build_times.push(t0.elapsed().as_secs_f64());
        for (i, &(_, y)) in data.iter().enumerate() {
            let t0 = std::time::Instant::now();
            belief = condition_one(belief, m, y)?;
            step_times[i].push(t0.elapsed().as_secs_f64());
        }
        std::hint::black_box(&belief);
    }

    let mut rows = Vec::with_capacity(2 * n_max);
    for n in 1..=n_max {
        rows.push(BenchRow {
            n,
            method: BenchMethod::Batch,
            median_s: median(batch_times[n - 1].clone()),
            reps,
        });
        rows.push(BenchRow {
            n,
            method: BenchMethod::Recursive,
            median_s: median(step_times[n - 1].clone()),
            reps,
        });
    }
    Ok(BenchTable {
        rows,
        build_s: median(build_times),
    })
}

impl BenchTable {
    /// Cumulative wall time per method as observations arrive. The recursive
    /// series starts with the one-off joint build.
    pub fn cumulative(&self) -> (Vec<f64>, Vec<f64>) {
        let n_max = self.rows.iter().map(|r| r.n).max().unwrap_or(0);
        let mut batch = vec![0.0; n_max];
        let mut rec = vec![0.0; n_max];
        for r in &self.rows {
            match r.method {
                BenchMethod::Batch => batch[r.n - 1] += r.median_s,
                BenchMethod::Recursive => rec[r.n - 1] += r.median_s,
            }
        }
        let mut acc = 0.0;
        for b in batch.iter_mut() {
            acc += *b;
            *b = acc;
        }
        let mut acc = self.build_s;
        for r in rec.iter_mut() {
            acc += *r;
            *r = acc;
        }
        (batch, rec)
    }

    /// Smallest arrival index beyond which cumulative recursive time stays
    /// below cumulative batch-refit time, if it exists.
    pub fn crossover(&self) -> Option<usize> {
        let (batch, rec) = self.cumulative();
        let mut cross = None;
        for (i, (b, r)) in batch.iter().zip(&rec).enumerate() {
            if r < b {
                cross.get_or_insert(i + 1);
            } else {
                cross = None;
            }
        }
        cross
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn prior_scalar_belief() {
        let prior = GpPrior::rbf(2.0, 1.0, 0.5);
        let b = build_joint(&prior, &[0.3], &[]).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.mean()[0] - 0.0).abs() < 1e-15);
        assert!((b.cov()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_leaves_noise_on_train_diagonal_only() {
        let prior = GpPrior::constant(0.0, 1.0);
        let b = build_joint(&prior, &[0.0, 1.0], &[2.0, 3.0]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j && i >= 2 { 1.0 } else { 0.0 };
                assert!((b.cov()[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rbf_gram_matches_direct_kernel_evaluation() {
        let prior = GpPrior::rbf(1.5, 0.7, 0.0);
        let pts = [0.0, 0.4, -1.2];
        let b = build_joint(&prior, &pts, &[]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = 1.5 * (-(pts[i] - pts[j]).powi(2) / (2.0 * 0.49)).exp();
                assert!((b.cov()[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn independent_observation_changes_nothing() {
        let prior = GpPrior::constant(0.0, 1.0); // zero cross-covariances
        let b = build_joint(&prior, &[0.0], &[1.0]).unwrap();
        let after = condition_one(b.clone(), 1, 3.0).unwrap();
        assert!((after.mean()[0] - b.mean()[0]).abs() < 1e-15);
        assert!((after.cov()[(0, 0)] - b.cov()[(0, 0)]).abs() < 1e-15);
    }

    #[test]
    fn one_dim_conditioning_closed_form() {
        // K = 1 everywhere, noise 1, zero mean, y = 2:
        // posterior mean = k/(k+s) * y = 1, variance = 1 - 1/2 = 0.5.
        let prior = GpPrior::constant(1.0, 1.0);
        let b = build_joint(&prior, &[0.0], &[1.0]).unwrap();
        let after = condition_one(b, 1, 2.0).unwrap();
        assert!((after.mean()[0] - 1.0).abs() < 1e-12);
        assert!((after.cov()[(0, 0)] - 0.5).abs() < 1e-12);

        let batch = batch_predictive(&prior, &[0.0], &[(1.0, 2.0)]).unwrap();
        assert!((batch.mean()[0] - 1.0).abs() < 1e-9);
        assert!((batch.cov()[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn conditioning_rejects_test_coordinates_and_bad_indices() {
        let prior = GpPrior::rbf(1.0, 1.0, 0.1);
        let b = build_joint(&prior, &[0.0], &[1.0]).unwrap();
        assert!(condition_one(b.clone(), 0, 1.0).is_err());
        assert!(condition_one(b, 7, 1.0).is_err());
    }

    #[test]
    fn deterministic_coordinate_guards() {
        // Zero kernel and zero noise make the train coordinate deterministic.
        let prior = GpPrior::constant(0.0, 0.0);
        let b = build_joint(&prior, &[0.0], &[1.0]).unwrap();
        // Consistent observation: dropped with zero gain.
        let ok = condition_one(b.clone(), 1, 1e-9).unwrap();
        assert_eq!(ok.dim(), 1);
        // Inconsistent observation: explicit error.
        let err = condition_one(b, 1, 0.5);
        assert!(matches!(err, Err(Error::InconsistentObservation { .. })));
    }

    #[test]
    fn batch_no_data_returns_prior_block() {
        let prior = GpPrior::rbf(1.0, 1.0, 0.1);
        let b = batch_predictive(&prior, &[0.0, 1.0], &[]).unwrap();
        let j = build_joint(&prior, &[0.0, 1.0], &[]).unwrap();
        assert_eq!(b.mean(), j.mean());
        assert_eq!(b.cov(), j.cov());
    }

    #[test]
    fn batch_equals_recursive_on_random_rbf_instances() {
        let mut rng = StdRng::seed_from_u64(42);
        for trial in 0..20 {
            let ls = rng.random_range(0.3..2.0);
            let sv = rng.random_range(0.5..2.0);
            let noise = rng.random_range(0.05..0.5);
            let prior = if trial % 2 == 0 {
                GpPrior::rbf(sv, ls, noise)
            } else {
                GpPrior::matern32(sv, ls, noise)
            };
            let n = rng.random_range(5..60);
            let m = rng.random_range(1..=5);
            let tests: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let data: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)))
                .collect();
            let batch = batch_predictive(&prior, &tests, &data).unwrap();
            let rec = recursive_predictive(&prior, &tests, &data).unwrap();
            let scale = batch.mean().amax().max(1.0);
            for i in 0..m {
                assert!(
                    (batch.mean()[i] - rec.mean()[i]).abs() <= crate::tol::GP_MEAN_REL * scale,
                    "trial {trial} mean[{i}]: {} vs {}",
                    batch.mean()[i],
                    rec.mean()[i]
                );
            }
            assert!(
                max_abs_diff(batch.cov(), rec.cov()) <= crate::tol::GP_COV_ABS,
                "trial {trial} cov deviation {}",
                max_abs_diff(batch.cov(), rec.cov())
            );
            rec.validate().unwrap();
            batch.validate().unwrap();
            // Conditioning never inflates a test variance above the prior.
            let prior_block = build_joint(&prior, &tests, &[]).unwrap();
            for i in 0..m {
                assert!(rec.cov()[(i, i)] <= prior_block.cov()[(i, i)] + 1e-9);
            }
        }
    }

    #[test]
    fn permuting_the_stream_leaves_the_result() {
        let mut rng = StdRng::seed_from_u64(7);
        let prior = GpPrior::rbf(1.0, 0.8, 0.2);
        let tests = [0.0, 0.5];
        let mut data: Vec<(f64, f64)> = (0..30)
            .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)))
            .collect();
        let fwd = recursive_predictive(&prior, &tests, &data).unwrap();
        data.reverse();
        data.swap(3, 11);
        let perm = recursive_predictive(&prior, &tests, &data).unwrap();
        for i in 0..2 {
            assert!((fwd.mean()[i] - perm.mean()[i]).abs() <= crate::tol::GP_ORDER_TOL);
        }
        assert!(max_abs_diff(fwd.cov(), perm.cov()) <= crate::tol::GP_ORDER_TOL);
    }

    #[test]
    fn append_before_conditioning_matches_rebuild() {
        let mut rng = StdRng::seed_from_u64(11);
        let prior = GpPrior::rbf(1.2, 0.9, 0.15);
        let tests = [0.1, -0.4, 1.3];
        let data: Vec<(f64, f64)> = (0..12)
            .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5)))
            .collect();
        let xs_head: Vec<f64> = data[..11].iter().map(|&(x, _)| x).collect();
        let appended = append_train(
            &build_joint(&prior, &tests, &xs_head).unwrap(),
            &prior,
            data[11].0,
        )
        .unwrap();
        let rebuilt = build_joint(
            &prior,
            &tests,
            &data.iter().map(|&(x, _)| x).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((appended.mean() - rebuilt.mean()).amax() < 1e-8);
        assert!(max_abs_diff(appended.cov(), rebuilt.cov()) < 1e-8);

        // Folding the full stream through either belief gives the batch answer.
        let mut a = appended;
        let mut b = rebuilt;
        for &(_, y) in &data {
            a = condition_one(a, 3, y).unwrap();
            b = condition_one(b, 3, y).unwrap();
        }
        let batch = batch_predictive(&prior, &tests, &data).unwrap();
        assert!((a.mean() - batch.mean()).amax() < 1e-7);
        assert!((b.mean() - batch.mean()).amax() < 1e-7);
        assert!(max_abs_diff(a.cov(), batch.cov()) < 1e-7);
    }

    #[test]
    fn benchmark_table_is_well_formed_and_crossover_exists() {
        let mut rng = StdRng::seed_from_u64(3);
        let prior = GpPrior::rbf(1.0, 1.0, 0.1);
        let tests = [0.0, 1.0];
        let data: Vec<(f64, f64)> = (0..60)
            .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)))
            .collect();
        let table = benchmark(&prior, &tests, &data, 1).unwrap();
        // Both methods present for every n, n strictly ascending.
        let mut seen = 0;
        for n in 1..=60 {
            let b = table
                .rows
                .iter()
                .filter(|r| r.n == n && r.method == BenchMethod::Batch)
                .count();
            let r = table
                .rows
                .iter()
                .filter(|r| r.n == n && r.method == BenchMethod::Recursive)
                .count();
            assert_eq!((b, r), (1, 1));
            seen += 2;
        }
        assert_eq!(seen, table.rows.len());
        // At n large enough the rank-1 path must undercut repeated refits.
        let (batch_cum, rec_cum) = table.cumulative();
        assert!(rec_cum.last().unwrap() < batch_cum.last().unwrap());
        assert!(table.crossover().is_some());
    }

    #[test]
    fn benchmark_rejects_empty_input() {
        let prior = GpPrior::rbf(1.0, 1.0, 0.1);
        assert!(benchmark(&prior, &[0.0], &[], 1).is_err());
        assert!(benchmark(&prior, &[0.0], &[(0.0, 1.0)], 0).is_err());
    }

    #[test]
    fn non_finite_kernel_values_error() {
        let bad = GpPrior::new(|_| 0.0, |a, b| (a - b).ln(), |_| 0.1, "log distance");
        assert!(matches!(
            build_joint(&bad, &[0.0], &[1.0, 2.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn duplicate_points_survive_via_jitter_but_indefinite_kernels_error() {
        // Duplicate noiseless inputs leave a rank-deficient Gram; the
        // trace-scaled jitter is exactly what keeps the solve alive.
        let prior = GpPrior::rbf(1.0, 1.0, 0.0);
        let data = [(0.5, 1.0), (0.5, 1.0)];
        assert!(batch_predictive(&prior, &[0.0], &data).is_ok());

        // An indefinite "kernel" is singular beyond jitter and must fail loudly.
        let bad = GpPrior::new(|_| 0.0, |a, b| if a == b { 0.0 } else { 1.0 }, |_| 0.0, "bad");
        let got = batch_predictive(&bad, &[0.0], &[(1.0, 1.0), (2.0, -1.0)]);
        assert!(matches!(got, Err(Error::NotPositiveDefinite(_))));
    }
}
