//! Dependent Dirichlet Process sampling with copula-coupled sticks and atoms.
//!
//! Each stick index shares one latent Gaussian vector across the query sites;
//! a Gaussian copula turns it into per-site stick fractions `V_i(x) ~
//! Beta(1, alpha(x))` and another into per-site atoms `theta_i(x) ~ G0_x`.
//! Marginally every site is an ordinary Dirichlet process; the copulas only
//! couple sites. `finite_projection` and `mean_measure_check` verify the
//! marginal Dirichlet law and the mean-measure property by Monte Carlo;
//! `ddp_predictive_mc` estimates cellwise posterior predictives by
//! self-normalized importance sampling over path likelihoods.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dirichlet::{truncation_bias, CellMoments, Location, Partition, SampledMeasure};
use crate::error::{Error, Result};
use crate::numeric;
use crate::tol;

/// Gaussian copula over sites, described by a correlation function with
/// `corr(x, x) = 1`.
pub struct CopulaSpec {
    corr: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    describe: String,
}

impl std::fmt::Debug for CopulaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CopulaSpec({})", self.describe)
    }
}

impl CopulaSpec {
    pub fn new(
        corr: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        describe: impl Into<String>,
    ) -> Self {
        Self {
            corr: Box::new(corr),
            describe: describe.into(),
        }
    }

    /// Squared-exponential correlation `exp(-(a-b)^2 / (2 ls^2))`.
    pub fn gaussian_rbf(length_scale: f64) -> Self {
        let ls2 = 2.0 * length_scale * length_scale;
        Self::new(
            move |a, b| (-(a - b) * (a - b) / ls2).exp(),
            format!("gaussian-rbf(ls={length_scale})"),
        )
    }

    /// Constant cross-site correlation `rho` (1 on the diagonal).
    pub fn constant(rho: f64) -> Self {
        Self::new(
            move |a, b| if a == b { 1.0 } else { rho },
            format!("constant(rho={rho})"),
        )
    }

    /// Sites are independent.
    pub fn independent() -> Self {
        Self::constant(0.0)
    }

    /// Perfect dependence: one shared draw for all sites.
    pub fn comonotone() -> Self {
        Self::new(|_, _| 1.0, "comonotone")
    }

    pub fn corr_at(&self, a: f64, b: f64) -> f64 {
        (self.corr)(a, b)
    }

    pub fn describe(&self) -> &str {
        &self.describe
    }

    /// Factor `L` with `L Lᵀ = C` for the correlation matrix over `sites`,
    /// via a symmetric eigendecomposition. Eigenvalues in
    /// `[-dim * CORR_JITTER, 0]` clamp to zero (this keeps rank-deficient
    /// limits like the comonotone copula exact); anything lower errors.
    pub fn factor(&self, sites: &[f64]) -> Result<DMatrix<f64>> {
        let m = sites.len();
        let mut c = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let r = self.corr_at(sites[i], sites[j]);
                if !r.is_finite() || r.abs() > 1.0 + 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "correlation {r} at ({}, {}) outside [-1, 1]",
                        sites[i], sites[j]
                    )));
                }
                c[(i, j)] = r;
                c[(j, i)] = r;
            }
            if (c[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "corr(x, x) must be 1, got {} at {}",
                    c[(i, i)],
                    sites[i]
                )));
            }
        }
        if c.iter().all(|&r| r == 1.0) {
            // Exact comonotone limit: one shared standard-normal drives every
            // site. The rank-1 factor keeps the sites bit-identical.
            let mut l = DMatrix::zeros(m, m);
            for i in 0..m {
                l[(i, 0)] = 1.0;
            }
            return Ok(l);
        }
        let eig = c.symmetric_eigen();
        let floor = -(m as f64) * tol::CORR_JITTER;
        let mut scaled = eig.eigenvectors.clone();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < floor {
                return Err(Error::NotPositiveDefinite(format!(
                    "correlation matrix eigenvalue {lambda} below {floor}"
                )));
            }
            let s = lambda.max(0.0).sqrt();
            for i in 0..m {
                scaled[(i, k)] *= s;
            }
        }
        Ok(scaled)
    }
}

/// Per-site base distribution; both families have analytic cell masses and
/// exact latent-to-sample transforms.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum SiteBase {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl SiteBase {
    /// Probability of `[lo, hi)` under this base.
    pub fn cell_prob(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            SiteBase::Uniform { lo: a, hi: b } => (((hi.min(b)) - (lo.max(a))).max(0.0)) / (b - a),
            SiteBase::Normal { mean, sd } => {
                let n = Normal::standard();
                let top = if hi == f64::INFINITY {
                    1.0
                } else {
                    n.cdf((hi - mean) / sd)
                };
                let bot = if lo == f64::NEG_INFINITY {
                    0.0
                } else {
                    n.cdf((lo - mean) / sd)
                };
                top - bot
            }
        }
    }

    /// Maps a standard-normal latent to a sample: the Gaussian-copula
    /// quantile transform. For a normal base this is exact
    /// (`mean + sd * z`); the uniform base goes through the normal CDF.
    pub fn from_latent(&self, z: f64) -> f64 {
        match *self {
            SiteBase::Uniform { lo, hi } => lo + Normal::standard().cdf(z) * (hi - lo),
            SiteBase::Normal { mean, sd } => mean + sd * z,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SiteBase::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidArgument(format!(
                        "bad uniform base [{lo}, {hi})"
                    )));
                }
            }
            SiteBase::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "bad normal base (mean {mean}, sd {sd})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Hyperparameters of a dependent Dirichlet process: per-site concentration,
/// per-site base measure, copulas for sticks and atoms, truncation level.
pub struct DdpSpec {
    alpha: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    base: Box<dyn Fn(f64) -> SiteBase + Send + Sync>,
    pub copula_v: CopulaSpec,
    pub copula_theta: CopulaSpec,
    pub truncation: usize,
    describe: String,
}

impl std::fmt::Debug for DdpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DdpSpec({})", self.describe)
    }
}

impl DdpSpec {
    pub fn new(
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        base: impl Fn(f64) -> SiteBase + Send + Sync + 'static,
        copula_v: CopulaSpec,
        copula_theta: CopulaSpec,
        truncation: usize,
        describe: impl Into<String>,
    ) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidArgument("truncation must be >= 1".into()));
        }
        Ok(Self {
            alpha: Box::new(alpha),
            base: Box::new(base),
            copula_v,
            copula_theta,
            truncation,
            describe: describe.into(),
        })
    }

    pub fn alpha_at(&self, x: f64) -> f64 {
        (self.alpha)(x)
    }

    pub fn base_at(&self, x: f64) -> SiteBase {
        (self.base)(x)
    }

    pub fn describe(&self) -> &str {
        &self.describe
    }

    fn validate_sites(&self, sites: &[f64]) -> Result<()> {
        if sites.is_empty() {
            return Err(Error::EmptyInput("DDP query with no sites"));
        }
        for &x in sites {
            let a = self.alpha_at(x);
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "concentration alpha({x}) = {a} must be positive"
                )));
            }
            self.base_at(x).validate()?;
        }
        Ok(())
    }

    /// Worst per-site truncation bias bound `(alpha/(1+alpha))^N`.
    pub fn bias_bound(&self, sites: &[f64]) -> f64 {
        sites
            .iter()
            .map(|&x| truncation_bias(self.alpha_at(x), self.truncation))
            .fold(0.0, f64::max)
    }
}

/// One realized path: atoms and weights per stick and site. Stick `i` shares
/// its latent draws across sites; per-site weights sum to exactly one.
#[derive(Clone, Debug)]
pub struct DdpPath {
    pub sites: Vec<f64>,
    /// `weights[i][j]` is stick `i`'s weight at site `j`.
    pub weights: Vec<Vec<f64>>,
    /// `atoms[i][j]` is stick `i`'s atom location at site `j`.
    pub atoms: Vec<Vec<f64>>,
}

impl DdpPath {
    /// The realized measure at one site.
    pub fn site_measure(&self, site: usize) -> SampledMeasure {
        SampledMeasure {
            atoms: self
                .atoms
                .iter()
                .zip(&self.weights)
                .map(|(a, w)| (Location::Point(a[site]), w[site]))
                .collect(),
        }
    }

    /// Cell masses of the realized measure at one site.
    pub fn site_cell_masses(&self, site: usize, part: &Partition) -> Result<Vec<f64>> {
        self.site_measure(site).cell_masses(part)
    }
}

/// Reusable sampler for one `(spec, sites)` pair: the copula factors are
/// computed once, then each replicate draws from its own deterministic
/// substream `(seed, replicate)`.
pub struct DdpSampler<'a> {
    spec: &'a DdpSpec,
    sites: Vec<f64>,
    l_v: DMatrix<f64>,
    l_theta: DMatrix<f64>,
    alphas: Vec<f64>,
    bases: Vec<SiteBase>,
}

impl<'a> DdpSampler<'a> {
    pub fn new(spec: &'a DdpSpec, sites: &[f64]) -> Result<Self> {
        spec.validate_sites(sites)?;
        Ok(Self {
            spec,
            sites: sites.to_vec(),
            l_v: spec.copula_v.factor(sites)?,
            l_theta: spec.copula_theta.factor(sites)?,
            alphas: sites.iter().map(|&x| spec.alpha_at(x)).collect(),
            bases: sites.iter().map(|&x| spec.base_at(x)).collect(),
        })
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    /// Draws the path for replicate `stream` of `seed`.
    pub fn sample(&self, seed: u64, stream: u64) -> DdpPath {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        self.sample_with(&mut rng)
    }

    fn correlated(&self, l: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
        let m = self.sites.len();
        let eps = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        l * eps
    }

    fn sample_with(&self, rng: &mut impl Rng) -> DdpPath {
        let m = self.sites.len();
        let n = self.spec.truncation;
        let normal = Normal::standard();
        let mut weights = vec![vec![0.0; m]; n];
        let mut atoms = vec![vec![0.0; m]; n];
        let mut remaining = vec![1.0f64; m];
        let mut partial = vec![0.0f64; m];
        for i in 0..n {
            if i + 1 == n {
                // Residual folding: the last stick absorbs what is left, so
                // each site's weights sum to exactly one.
                for j in 0..m {
                    weights[i][j] = 1.0 - partial[j];
                }
            } else {
                let z = self.correlated(&self.l_v, rng);
                for j in 0..m {
                    let u = normal.cdf(z[j]);
                    let v = 1.0 - (1.0 - u).powf(1.0 / self.alphas[j]);
                    let w = v * remaining[j];
                    weights[i][j] = w;
                    partial[j] += w;
                    remaining[j] *= 1.0 - v;
                }
            }
            let z = self.correlated(&self.l_theta, rng);
            for j in 0..m {
                atoms[i][j] = self.bases[j].from_latent(z[j]);
            }
        }
        DdpPath {
            sites: self.sites.clone(),
            weights,
            atoms,
        }
    }
}

/// Samples one DDP path over the given sites. Deterministic in `seed`.
pub fn sample_path(spec: &DdpSpec, sites: &[f64], seed: u64) -> Result<DdpPath> {
    Ok(DdpSampler::new(spec, sites)?.sample(seed, 0))
}

/// Replicated cell masses: `out[rep][site][cell]`.
fn project_replicates(
    sampler: &DdpSampler,
    part: &Partition,
    seed: u64,
    replications: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..replications)
        .into_par_iter()
        .map(|rep| {
            let path = sampler.sample(seed, rep as u64);
            (0..sampler.sites.len())
                .map(|j| path.site_cell_masses(j, part))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Moment summary for one site of a finite projection.
#[derive(Clone, Debug)]
pub struct SiteMoments {
    pub site: f64,
    pub alpha: f64,
    pub bias_bound: f64,
    pub cells: Vec<CellMoments>,
}

/// Monte Carlo summary of the finite-dimensional projection of a DDP.
#[derive(Clone, Debug)]
pub struct ProjectionSummary {
    pub sites: Vec<SiteMoments>,
    pub replications: usize,
    pub truncation: usize,
    /// Fraction of (site, cell) z-scores at most 3, over means and variances.
    pub z_pass_rate: f64,
    pub pass: bool,
}

/// Samples `replications` paths, projects each site onto the partition, and
/// compares per-site cell means and variances against the marginal Dirichlet
/// distribution `Dir(alpha(x) G0_x(A_1), ..)`.
pub fn finite_projection(
    spec: &DdpSpec,
    sites: &[f64],
    part: &Partition,
    seed: u64,
    replications: usize,
) -> Result<ProjectionSummary> {
    if replications < 2 {
        return Err(Error::InvalidArgument("need >= 2 replications".into()));
    }
    let sampler = DdpSampler::new(spec, sites)?;
    let reps = project_replicates(&sampler, part, seed, replications)?;
    let names = part.cell_names();
    let k = part.num_cells();

    let mut out_sites = Vec::with_capacity(sites.len());
    let mut z_ok = 0usize;
    let mut z_total = 0usize;
    for (j, &x) in sites.iter().enumerate() {
        let alpha = spec.alpha_at(x);
        let base = spec.base_at(x);
        let mut cells = Vec::with_capacity(k);
        for c in 0..k {
            let (lo, hi) = part.real_cell_bounds(c)?;
            let p = base.cell_prob(lo, hi);
            let target_mean = p;
            let target_var = p * (1.0 - p) / (1.0 + alpha);
            let series: Vec<f64> = reps.iter().map(|r| r[j][c]).collect();
            let (m, v) = numeric::mean_var(&series);
            let z_mean = (m - target_mean).abs() / numeric::se_mean(&series).max(f64::MIN_POSITIVE);
            let z_var = (v - target_var).abs() / numeric::se_var(&series).max(f64::MIN_POSITIVE);
            z_total += 2;
            z_ok += usize::from(z_mean <= 3.0) + usize::from(z_var <= 3.0);
            cells.push(CellMoments {
                cell: names[c].clone(),
                target_mean,
                sample_mean: m,
                z_mean,
                target_var,
                sample_var: v,
                z_var,
            });
        }
        out_sites.push(SiteMoments {
            site: x,
            alpha,
            bias_bound: truncation_bias(alpha, spec.truncation),
            cells,
        });
    }
    let z_pass_rate = z_ok as f64 / z_total as f64;
    Ok(ProjectionSummary {
        sites: out_sites,
        replications,
        truncation: spec.truncation,
        z_pass_rate,
        pass: z_pass_rate >= 0.95,
    })
}

/// One `(site, cell)` line of the mean-measure check.
#[derive(Clone, Debug)]
pub struct MeanCheckLine {
    pub site: f64,
    pub cell: String,
    pub target: f64,
    pub sample_mean: f64,
    pub z: f64,
}

/// Report of the mean-measure property `E[G_x(A)] = G0_x(A)`.
#[derive(Clone, Debug)]
pub struct MeanMeasureReport {
    pub lines: Vec<MeanCheckLine>,
    pub replications: usize,
    pub truncation: usize,
    /// Worst per-site truncation bias bound, printed alongside the z-scores;
    /// residual folding keeps the mean itself unbiased.
    pub bias_bound: f64,
    pub max_z: f64,
    pub pass: bool,
}

/// Checks `|mean - G0_x(A)| / SE <= 3` for every site and cell.
pub fn mean_measure_check(
    spec: &DdpSpec,
    sites: &[f64],
    part: &Partition,
    seed: u64,
    replications: usize,
) -> Result<MeanMeasureReport> {
    if replications < 1000 {
        return Err(Error::InvalidArgument(
            "mean_measure_check needs >= 1000 replications".into(),
        ));
    }
    let sampler = DdpSampler::new(spec, sites)?;
    let reps = project_replicates(&sampler, part, seed, replications)?;
    let names = part.cell_names();
    let mut lines = Vec::new();
    let mut max_z = 0.0f64;
    for (j, &x) in sites.iter().enumerate() {
        let base = spec.base_at(x);
        for c in 0..part.num_cells() {
            let (lo, hi) = part.real_cell_bounds(c)?;
            let target = base.cell_prob(lo, hi);
            let series: Vec<f64> = reps.iter().map(|r| r[j][c]).collect();
            let m = numeric::mean(&series);
            let z = (m - target).abs() / numeric::se_mean(&series).max(f64::MIN_POSITIVE);
            max_z = max_z.max(z);
            lines.push(MeanCheckLine {
                site: x,
                cell: names[c].clone(),
                target,
                sample_mean: m,
                z,
            });
        }
    }
    Ok(MeanMeasureReport {
        lines,
        replications,
        truncation: spec.truncation,
        bias_bound: spec.bias_bound(sites),
        max_z,
        pass: max_z <= 3.0,
    })
}

/// Self-normalized importance estimate of the cellwise posterior predictive.
#[derive(Clone, Debug)]
pub struct PredictiveReport {
    pub test_sites: Vec<f64>,
    pub cell_names: Vec<String>,
    /// `cells[t][c]`: posterior predictive mass of cell `c` at test site `t`.
    pub cells: Vec<Vec<f64>>,
    /// Prior (mean-measure) cell masses for the same test sites.
    pub prior_cells: Vec<Vec<f64>>,
    pub effective_sample_size: f64,
    pub replications: usize,
    /// Set when the effective sample size drops below 100.
    pub low_ess_warning: bool,
}

/// Estimates the posterior predictive over partition cells at the test
/// sites: sample paths over all involved sites, weight each path by the
/// likelihood of the observed cells, and average the test-site cell masses.
/// Reports the effective sample size `(sum w)^2 / sum w^2`.
pub fn ddp_predictive_mc(
    spec: &DdpSpec,
    observations: &[(f64, f64)],
    test_sites: &[f64],
    part: &Partition,
    seed: u64,
    replications: usize,
) -> Result<PredictiveReport> {
    if test_sites.is_empty() {
        return Err(Error::EmptyInput("ddp_predictive_mc with no test sites"));
    }
    if replications < 2 {
        return Err(Error::InvalidArgument("need >= 2 replications".into()));
    }
    // Restriction to the relevant sites: one site entry per distinct input.
    let mut sites: Vec<f64> = Vec::new();
    let site_index = |x: f64, sites: &mut Vec<f64>| -> usize {
        match sites.iter().position(|&s| s == x) {
            Some(i) => i,
            None => {
                sites.push(x);
                sites.len() - 1
            }
        }
    };
    let test_idx: Vec<usize> = test_sites.iter().map(|&t| site_index(t, &mut sites)).collect();
    let obs_idx: Vec<usize> = observations
        .iter()
        .map(|&(x, _)| site_index(x, &mut sites))
        .collect();
    let obs_cells: Vec<usize> = observations
        .iter()
        .map(|&(_, y)| part.cell_of(&Location::Point(y)))
        .collect::<Result<Vec<_>>>()?;

    let sampler = DdpSampler::new(spec, &sites)?;
    let k = part.num_cells();
    let per_rep: Vec<(f64, Vec<Vec<f64>>)> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let path = sampler.sample(seed, rep as u64);
            let masses: Vec<Vec<f64>> = (0..sites.len())
                .map(|j| path.site_cell_masses(j, part))
                .collect::<Result<Vec<_>>>()?;
            let mut w = 1.0f64;
            for (&j, &c) in obs_idx.iter().zip(&obs_cells) {
                w *= masses[j][c];
            }
            let test_masses: Vec<Vec<f64>> =
                test_idx.iter().map(|&j| masses[j].clone()).collect();
            Ok((w, test_masses))
        })
        .collect::<Result<Vec<_>>>()?;

    let w: Vec<f64> = per_rep.iter().map(|(w, _)| *w).collect();
    let w_sum = numeric::pairwise_sum(&w);
    let w_sq: Vec<f64> = w.iter().map(|w| w * w).collect();
    let w_sq_sum = numeric::pairwise_sum(&w_sq);
    let ess = if w_sq_sum > 0.0 { w_sum * w_sum / w_sq_sum } else { 0.0 };

    let mut cells = vec![vec![0.0; k]; test_sites.len()];
    let mut prior_cells = vec![vec![0.0; k]; test_sites.len()];
    for t in 0..test_sites.len() {
        for c in 0..k {
            let weighted: Vec<f64> = per_rep
                .iter()
                .map(|(w, masses)| w * masses[t][c])
                .collect();
            let plain: Vec<f64> = per_rep.iter().map(|(_, masses)| masses[t][c]).collect();
            prior_cells[t][c] = numeric::mean(&plain);
            cells[t][c] = if w_sum > 0.0 {
                numeric::pairwise_sum(&weighted) / w_sum
            } else {
                // All paths miss some observed cell: fall back to the prior.
                prior_cells[t][c]
            };
        }
    }
    Ok(PredictiveReport {
        test_sites: test_sites.to_vec(),
        cell_names: part.cell_names(),
        cells,
        prior_cells,
        effective_sample_size: ess,
        replications,
        low_ess_warning: ess < 100.0,
    })
}

// ---------------------------------------------------------------------------
// Declarative configuration (shared by the CLI and config files)
// ---------------------------------------------------------------------------

/// A scalar field over the input: constant or affine in `x`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
}

impl FieldSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            FieldSpec::Constant { value } => value,
            FieldSpec::Affine { intercept, slope } => intercept + slope * x,
        }
    }
}

/// Base-measure family with possibly input-dependent parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum BaseConfig {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: FieldSpec, sd: FieldSpec },
}

/// Copula family selector.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "kebab-case", deny_unknown_fields)]
pub enum CopulaConfig {
    GaussianRbf { length_scale: f64 },
    Constant { rho: f64 },
    Independent,
    Comonotone,
}

impl CopulaConfig {
    pub fn build(&self) -> CopulaSpec {
        match *self {
            CopulaConfig::GaussianRbf { length_scale } => CopulaSpec::gaussian_rbf(length_scale),
            CopulaConfig::Constant { rho } => CopulaSpec::constant(rho),
            CopulaConfig::Independent => CopulaSpec::independent(),
            CopulaConfig::Comonotone => CopulaSpec::comonotone(),
        }
    }
}

/// Declarative DDP hyperparameters, deserializable from config files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DdpConfig {
    pub alpha: FieldSpec,
    pub base: BaseConfig,
    pub copula_v: CopulaConfig,
    pub copula_theta: CopulaConfig,
    pub truncation: usize,
}

impl DdpConfig {
    pub fn build(&self) -> Result<DdpSpec> {
        let alpha = self.alpha;
        let base = self.base;
        DdpSpec::new(
            move |x| alpha.eval(x),
            move |x| match base {
                BaseConfig::Uniform { lo, hi } => SiteBase::Uniform { lo, hi },
                BaseConfig::Normal { mean, sd } => SiteBase::Normal {
                    mean: mean.eval(x),
                    sd: sd.eval(x),
                },
            },
            self.copula_v.build(),
            self.copula_theta.build(),
            self.truncation,
            format!("{self:?}"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::{self, DiffuseBase, DirichletMeasure};

    fn simple_spec(copula_v: CopulaSpec, copula_theta: CopulaSpec, n: usize) -> DdpSpec {
        DdpSpec::new(
            |_| 2.0,
            |_| SiteBase::Uniform { lo: 0.0, hi: 1.0 },
            copula_v,
            copula_theta,
            n,
            "test spec",
        )
        .unwrap()
    }

    #[test]
    fn weights_sum_to_one_per_site() {
        let spec = simple_spec(CopulaSpec::gaussian_rbf(1.0), CopulaSpec::gaussian_rbf(0.5), 25);
        let path = sample_path(&spec, &[0.0, 0.3, 2.0], 42).unwrap();
        for j in 0..3 {
            let total: f64 = path.weights.iter().map(|w| w[j]).sum();
            assert_eq!(total, 1.0, "site {j}");
        }
    }

    #[test]
    fn same_seed_same_path() {
        let spec = simple_spec(CopulaSpec::constant(0.4), CopulaSpec::constant(0.6), 12);
        let a = sample_path(&spec, &[0.0, 1.0], 7).unwrap();
        let b = sample_path(&spec, &[0.0, 1.0], 7).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.atoms, b.atoms);
    }

    #[test]
    fn comonotone_copulas_give_identical_sites() {
        // corr = 1 with constant alpha and base: every site sees the same
        // sticks and the same atoms, exactly.
        let spec = simple_spec(CopulaSpec::comonotone(), CopulaSpec::comonotone(), 20);
        let path = sample_path(&spec, &[0.0, 0.7, -1.3], 11).unwrap();
        for i in 0..20 {
            for j in 1..3 {
                assert_eq!(path.weights[i][j], path.weights[i][0], "stick {i} site {j}");
                assert_eq!(path.atoms[i][j], path.atoms[i][0], "stick {i} site {j}");
            }
        }
    }

    #[test]
    fn independent_copulas_decorrelate_sites() {
        // corr = 0: cross-site covariance of G_x(A) within 3 SE of zero.
        let spec = simple_spec(CopulaSpec::independent(), CopulaSpec::independent(), 40);
        let part = Partition::real(vec![0.5]).unwrap();
        let sampler = DdpSampler::new(&spec, &[0.0, 1.0]).unwrap();
        let reps = 20_000;
        let pairs: Vec<(f64, f64)> = (0..reps)
            .map(|rep| {
                let p = sampler.sample(99, rep as u64);
                let a = p.site_cell_masses(0, &part).unwrap()[0];
                let b = p.site_cell_masses(1, &part).unwrap()[0];
                (a, b)
            })
            .collect();
        let xa: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let xb: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (ma, _) = numeric::mean_var(&xa);
        let (mb, _) = numeric::mean_var(&xb);
        let prods: Vec<f64> = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).collect();
        let cov = numeric::mean(&prods);
        let se = numeric::se_mean(&prods);
        assert!(cov.abs() <= 3.0 * se, "cov {cov} vs se {se}");
    }

    #[test]
    fn single_site_matches_dp_sampler_moments() {
        // |X| = 1 degenerates to the plain DP stick-breaking sampler; compare
        // projected first moments two-sample.
        let spec = DdpSpec::new(
            |_| 3.0,
            |_| SiteBase::Uniform { lo: 0.0, hi: 1.0 },
            CopulaSpec::gaussian_rbf(1.0),
            CopulaSpec::gaussian_rbf(1.0),
            40,
            "single site",
        )
        .unwrap();
        let part = Partition::real(vec![0.25, 0.5]).unwrap();
        let sampler = DdpSampler::new(&spec, &[0.4]).unwrap();
        let reps = 20_000;
        let ddp_series: Vec<Vec<f64>> = (0..reps)
            .map(|rep| sampler.sample(5, rep as u64).site_cell_masses(0, &part).unwrap())
            .collect();

        let alpha =
            DirichletMeasure::diffuse_only(DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 3.0)
                .unwrap();
        let dp_series: Vec<Vec<f64>> = (0..reps)
            .map(|seed| {
                dirichlet::stick_breaking_sample(&alpha, 40, 1_000_000 + seed as u64)
                    .unwrap()
                    .cell_masses(&part)
                    .unwrap()
            })
            .collect();

        for c in 0..3 {
            let a: Vec<f64> = ddp_series.iter().map(|s| s[c]).collect();
            let b: Vec<f64> = dp_series.iter().map(|s| s[c]).collect();
            let (ma, _) = numeric::mean_var(&a);
            let (mb, _) = numeric::mean_var(&b);
            let se = (numeric::se_mean(&a).powi(2) + numeric::se_mean(&b).powi(2)).sqrt();
            assert!((ma - mb).abs() <= 3.0 * se, "cell {c}: {ma} vs {mb} (se {se})");
        }
    }

    #[test]
    fn finite_projection_matches_marginal_dirichlet() {
        let spec = DdpSpec::new(
            |x| 2.0 + x,
            |x| SiteBase::Normal { mean: 0.5 * x, sd: 1.0 },
            CopulaSpec::gaussian_rbf(1.5),
            CopulaSpec::gaussian_rbf(0.8),
            60,
            "projection test",
        )
        .unwrap();
        let part = Partition::real(vec![-0.5, 0.5]).unwrap();
        let summary = finite_projection(&spec, &[0.0, 1.0], &part, 31, 30_000).unwrap();
        assert!(
            summary.pass,
            "z pass rate {} below 0.95",
            summary.z_pass_rate
        );

        // One-cell partition is degenerate: all mass in the single cell.
        let one = Partition::real(vec![]).unwrap();
        let path = sample_path(&spec, &[0.0], 3).unwrap();
        assert_eq!(path.site_cell_masses(0, &one).unwrap(), vec![1.0]);
    }

    #[test]
    fn mean_measure_holds_within_three_se() {
        let spec = simple_spec(CopulaSpec::constant(0.5), CopulaSpec::constant(0.5), 40);
        let part = Partition::real(vec![0.3, 0.7]).unwrap();
        let report = mean_measure_check(&spec, &[0.0, 2.0], &part, 17, 20_000).unwrap();
        assert!(report.pass, "max z {}", report.max_z);
        assert!(report.bias_bound < 1e-3);
        assert!(mean_measure_check(&spec, &[0.0], &part, 17, 10).is_err());
    }

    #[test]
    fn predictive_with_no_observations_is_the_mean_measure() {
        let spec = simple_spec(CopulaSpec::gaussian_rbf(1.0), CopulaSpec::gaussian_rbf(1.0), 40);
        let part = Partition::real(vec![0.5]).unwrap();
        let report = ddp_predictive_mc(&spec, &[], &[0.2], &part, 23, 20_000).unwrap();
        assert!((report.effective_sample_size - 20_000.0).abs() < 1e-6);
        for c in 0..2 {
            assert!((report.cells[0][c] - report.prior_cells[0][c]).abs() < 1e-12);
            // Mean measure of Uniform[0,1] split at 0.5.
            assert!((report.cells[0][c] - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn single_site_predictive_matches_dirichlet_multinomial() {
        // At one site the cellwise predictive is (alpha(A) + count) / (M + n).
        let spec = simple_spec(CopulaSpec::gaussian_rbf(1.0), CopulaSpec::gaussian_rbf(1.0), 60);
        let part = Partition::real(vec![0.5]).unwrap();
        let obs = [(0.0, 0.2), (0.0, 0.3), (0.0, 0.7)]; // cells 0, 0, 1
        let report = ddp_predictive_mc(&spec, &obs, &[0.0], &part, 41, 60_000).unwrap();
        // alpha = 2 * Uniform[0,1]: alpha(A0) = alpha(A1) = 1, M = 2, n = 3.
        let want = [(1.0 + 2.0) / 5.0, (1.0 + 1.0) / 5.0];
        assert!(report.effective_sample_size >= 100.0);
        for c in 0..2 {
            // Self-normalized IS noise at this ESS stays well under 0.02.
            assert!(
                (report.cells[0][c] - want[c]).abs() < 0.02,
                "cell {c}: {} vs {}",
                report.cells[0][c],
                want[c]
            );
        }
    }

    #[test]
    fn comonotone_observation_shifts_other_site_toward_observed_cell() {
        let spec = simple_spec(CopulaSpec::comonotone(), CopulaSpec::comonotone(), 40);
        let part = Partition::real(vec![0.5]).unwrap();
        let obs = [(0.0, 0.2), (0.0, 0.1), (0.0, 0.4)]; // all in cell 0
        let report = ddp_predictive_mc(&spec, &obs, &[1.0], &part, 13, 20_000).unwrap();
        assert!(
            report.cells[0][0] > report.prior_cells[0][0],
            "predictive {} should exceed prior {}",
            report.cells[0][0],
            report.prior_cells[0][0]
        );
    }

    #[test]
    fn copula_factor_rejects_bad_correlations() {
        let bad = CopulaSpec::new(|_, _| 1.5, "too big");
        assert!(bad.factor(&[0.0, 1.0]).is_err());
        let asym = CopulaSpec::new(|a, b| if a == b { 0.9 } else { 0.0 }, "diag != 1");
        assert!(asym.factor(&[0.0, 1.0]).is_err());
        // Strongly negative constant correlation over three sites is not PSD.
        let neg = CopulaSpec::constant(-0.9);
        assert!(neg.factor(&[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn ddp_config_round_trips_and_builds() {
        let cfg = DdpConfig {
            alpha: FieldSpec::Affine {
                intercept: 1.0,
                slope: 0.5,
            },
            base: BaseConfig::Normal {
                mean: FieldSpec::Constant { value: 0.0 },
                sd: FieldSpec::Constant { value: 1.0 },
            },
            copula_v: CopulaConfig::GaussianRbf { length_scale: 2.0 },
            copula_theta: CopulaConfig::Comonotone,
            truncation: 30,
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: DdpConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let spec = back.build().unwrap();
        assert_eq!(spec.alpha_at(2.0), 2.0);
        assert_eq!(spec.truncation, 30);
    }
}
