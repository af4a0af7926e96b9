//! Dirichlet distributions and Dirichlet-process conjugacy.
//!
//! A finite base measure (atoms plus an optional uniform or standard-normal
//! diffuse part) parametrizes a Dirichlet process. Conditioning on
//! observations adds unit atoms; projecting onto a finite partition gives an
//! ordinary Dirichlet whose parameters are the cell masses. The two routes
//! around that square commute, and coarsening partitions commutes with
//! posterior updates, which is what `check_projective` verifies cell by cell.
//!
//! `stick_breaking_sample` draws truncated stick-breaking realizations; the
//! residual after the last stick folds into the final atom so weights always
//! sum to one, with truncation bias bounded by `(M/(1+M))^N`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric;
use crate::tol;

/// A point of the sample space: a symbolic label or a real number.
#[derive(Clone, PartialEq, Debug)]
pub enum Location {
    Label(String),
    Point(f64),
}

impl Location {
    pub fn label(s: &str) -> Self {
        Location::Label(s.to_string())
    }

    pub fn point(x: f64) -> Self {
        Location::Point(x)
    }

    fn matches(&self, other: &Location) -> bool {
        match (self, other) {
            (Location::Label(a), Location::Label(b)) => a == b,
            (Location::Point(a), Location::Point(b)) => (a - b).abs() <= tol::REAL_ATOM_MERGE,
            _ => false,
        }
    }
}

/// Supported diffuse base components; both have analytic interval masses.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum DiffuseBase {
    Uniform { lo: f64, hi: f64 },
    StdNormal,
}

impl DiffuseBase {
    /// Probability mass the normalized base assigns to `[lo, hi)`.
    pub fn interval_prob(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            DiffuseBase::Uniform { lo: a, hi: b } => {
                let l = lo.max(a);
                let h = hi.min(b);
                ((h - l).max(0.0)) / (b - a)
            }
            DiffuseBase::StdNormal => {
                let n = Normal::standard();
                let top = if hi == f64::INFINITY { 1.0 } else { n.cdf(hi) };
                let bot = if lo == f64::NEG_INFINITY { 0.0 } else { n.cdf(lo) };
                top - bot
            }
        }
    }

    /// Quantile transform of `u` in `(0,1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            DiffuseBase::Uniform { lo, hi } => lo + u * (hi - lo),
            DiffuseBase::StdNormal => Normal::standard().inverse_cdf(u),
        }
    }
}

/// A finite nonnegative measure parametrizing a Dirichlet process:
/// positive-weight atoms plus an optional diffuse component.
#[derive(Clone, PartialEq, Debug)]
pub struct DirichletMeasure {
    atoms: Vec<(Location, f64)>,
    diffuse: Option<(DiffuseBase, f64)>,
}

impl DirichletMeasure {
    pub fn new(atoms: Vec<(Location, f64)>, diffuse: Option<(DiffuseBase, f64)>) -> Result<Self> {
        let mut real = diffuse.is_some();
        let mut labelled = false;
        for (loc, w) in &atoms {
            if !w.is_finite() || *w <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "atom weight {w} must be positive and finite"
                )));
            }
            match loc {
                Location::Label(_) => labelled = true,
                Location::Point(_) => real = true,
            }
        }
        if real && labelled {
            return Err(Error::InvalidArgument(
                "cannot mix labelled atoms with real-valued support".into(),
            ));
        }
        if let Some((base, mass)) = &diffuse {
            if !mass.is_finite() || *mass < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diffuse mass {mass} must be nonnegative and finite"
                )));
            }
            if let DiffuseBase::Uniform { lo, hi } = base {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidArgument(format!(
                        "bad uniform support [{lo}, {hi})"
                    )));
                }
            }
        }
        let m = Self { atoms, diffuse };
        if m.total_mass() <= 0.0 {
            return Err(Error::InvalidArgument(
                "base measure needs positive total mass".into(),
            ));
        }
        Ok(m)
    }

    /// Purely atomic measure on labels, e.g. a symmetric prior on a finite set.
    pub fn from_labels(pairs: &[(&str, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(l, w)| (Location::label(l), *w))
                .collect(),
            None,
        )
    }

    /// Diffuse-only measure `mass * base`.
    pub fn diffuse_only(base: DiffuseBase, mass: f64) -> Result<Self> {
        Self::new(Vec::new(), Some((base, mass)))
    }

    pub fn atoms(&self) -> &[(Location, f64)] {
        &self.atoms
    }

    pub fn diffuse(&self) -> Option<&(DiffuseBase, f64)> {
        self.diffuse.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        let atom_mass: f64 = self.atoms.iter().map(|(_, w)| w).sum();
        atom_mass + self.diffuse.as_ref().map_or(0.0, |(_, m)| *m)
    }

    fn is_real_valued(&self) -> bool {
        self.diffuse.is_some()
            || self
                .atoms
                .iter()
                .any(|(l, _)| matches!(l, Location::Point(_)))
    }
}

/// Posterior base measure after i.i.d. observations: one unit atom per
/// observation, merging weight into an existing atom at the same location
/// (labels compared exactly, reals within [`tol::REAL_ATOM_MERGE`]).
pub fn dp_posterior(alpha: &DirichletMeasure, observations: &[Location]) -> Result<DirichletMeasure> {
    let real = alpha.is_real_valued();
    let mut atoms = alpha.atoms.clone();
    for obs in observations {
        match (obs, real) {
            (Location::Point(_), true) | (Location::Label(_), false) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "observation type does not match the base measure's support".into(),
                ))
            }
        }
        match atoms.iter_mut().find(|(loc, _)| loc.matches(obs)) {
            Some((_, w)) => *w += 1.0,
            None => atoms.push((obs.clone(), 1.0)),
        }
    }
    DirichletMeasure::new(atoms, alpha.diffuse)
}

/// A finite measurable partition of the sample space. Real partitions are
/// given by strictly increasing cut points: `k` cuts define `k + 1`
/// half-open cells `(-inf, c_1), [c_1, c_2), .., [c_k, +inf)`. Finite
/// partitions group a label universe into disjoint, exhaustive cells.
#[derive(Clone, PartialEq, Debug)]
pub enum Partition {
    Real { cuts: Vec<f64> },
    Finite { universe: Vec<String>, cells: Vec<Vec<String>> },
}

impl Partition {
    pub fn real(cuts: Vec<f64>) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPartition("cut points must be finite".into()));
        }
        for w in cuts.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidPartition(
                    "cut points must be strictly increasing".into(),
                ));
            }
        }
        Ok(Partition::Real { cuts })
    }

    pub fn finite(universe: Vec<String>, cells: Vec<Vec<String>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidPartition("partition needs >= 1 cell".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for cell in &cells {
            for l in cell {
                if !universe.contains(l) {
                    return Err(Error::InvalidPartition(format!(
                        "cell label `{l}` outside the universe"
                    )));
                }
                if !seen.insert(l.clone()) {
                    return Err(Error::InvalidPartition(format!(
                        "label `{l}` appears in two cells"
                    )));
                }
            }
        }
        if seen.len() != universe.len() {
            return Err(Error::InvalidPartition(
                "cells do not cover the universe".into(),
            ));
        }
        Ok(Partition::Finite { universe, cells })
    }

    pub fn num_cells(&self) -> usize {
        match self {
            Partition::Real { cuts } => cuts.len() + 1,
            Partition::Finite { cells, .. } => cells.len(),
        }
    }

    /// Bounds `[lo, hi)` of a real cell.
    pub fn real_cell_bounds(&self, i: usize) -> Result<(f64, f64)> {
        match self {
            Partition::Real { cuts } => {
                let lo = if i == 0 { f64::NEG_INFINITY } else { cuts[i - 1] };
                let hi = if i == cuts.len() { f64::INFINITY } else { cuts[i] };
                Ok((lo, hi))
            }
            Partition::Finite { .. } => Err(Error::InvalidPartition(
                "real_cell_bounds on a finite partition".into(),
            )),
        }
    }

    /// Index of the cell containing a location.
    pub fn cell_of(&self, loc: &Location) -> Result<usize> {
        match (self, loc) {
            (Partition::Real { cuts }, Location::Point(x)) => {
                Ok(cuts.iter().take_while(|c| *c <= x).count())
            }
            (Partition::Finite { cells, .. }, Location::Label(l)) => cells
                .iter()
                .position(|cell| cell.contains(l))
                .ok_or_else(|| Error::UnknownLabel {
                    label: l.clone(),
                    space: "partition universe".into(),
                }),
            _ => Err(Error::InvalidPartition(
                "location type does not match the partition".into(),
            )),
        }
    }

    /// Human-readable cell names for reports.
    pub fn cell_names(&self) -> Vec<String> {
        match self {
            Partition::Real { .. } => (0..self.num_cells())
                .map(|i| {
                    let (lo, hi) = self.real_cell_bounds(i).expect("real partition");
                    format!("[{lo}, {hi})")
                })
                .collect(),
            Partition::Finite { cells, .. } => cells.iter().map(|c| c.join("|")).collect(),
        }
    }
}

/// Parameters of a finite Dirichlet distribution over partition cells.
#[derive(Clone, PartialEq, Debug)]
pub struct DirichletFinite {
    params: Vec<f64>,
}

impl DirichletFinite {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::EmptyInput("DirichletFinite with no cells"));
        }
        for p in &params {
            if !p.is_finite() || *p <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "Dirichlet parameter {p} must be positive"
                )));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn total(&self) -> f64 {
        self.params.iter().sum()
    }

    /// Mean of cell `i`.
    pub fn mean(&self, i: usize) -> f64 {
        self.params[i] / self.total()
    }

    /// Variance of cell `i`: `p (1 - p) / (1 + total)`.
    pub fn variance(&self, i: usize) -> f64 {
        let p = self.mean(i);
        p * (1.0 - p) / (1.0 + self.total())
    }

    pub fn max_dev(&self, other: &Self) -> f64 {
        self.params
            .iter()
            .zip(&other.params)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Projects a base measure onto a partition: cell parameter = atom mass in
/// the cell plus diffuse mass times the analytic cell probability.
pub fn project(alpha: &DirichletMeasure, part: &Partition) -> Result<DirichletFinite> {
    if let (Some(_), Partition::Finite { .. }) = (&alpha.diffuse, part) {
        return Err(Error::UnsupportedBase(
            "a diffuse base has no cell probabilities on a label partition".into(),
        ));
    }
    let mut params = vec![0.0; part.num_cells()];
    for (loc, w) in &alpha.atoms {
        params[part.cell_of(loc)?] += w;
    }
    if let Some((base, mass)) = &alpha.diffuse {
        for (i, p) in params.iter_mut().enumerate() {
            let (lo, hi) = part.real_cell_bounds(i)?;
            *p += mass * base.interval_prob(lo, hi);
        }
    }
    DirichletFinite::new(params)
}

/// Conjugate count update of a finite Dirichlet: add one to the observed cell.
pub fn count_update(d: &DirichletFinite, cell: usize) -> Result<DirichletFinite> {
    if cell >= d.params.len() {
        return Err(Error::InvalidArgument(format!(
            "cell {cell} out of range for {} cells",
            d.params.len()
        )));
    }
    let mut params = d.params.clone();
    params[cell] += 1.0;
    DirichletFinite::new(params)
}

/// Aggregates parameters along a cell-to-supercell mapping, which must be
/// surjective onto `0..n_coarse`.
pub fn coarsen(d: &DirichletFinite, mapping: &[usize], n_coarse: usize) -> Result<DirichletFinite> {
    if mapping.len() != d.params.len() {
        return Err(Error::ShapeMismatch {
            context: "coarsen",
            expected: format!("{} mapping entries", d.params.len()),
            found: mapping.len().to_string(),
        });
    }
    if n_coarse == 0 {
        return Err(Error::EmptyInput("coarsen onto zero cells"));
    }
    let mut params = vec![0.0; n_coarse];
    let mut hit = vec![false; n_coarse];
    for (i, &sup) in mapping.iter().enumerate() {
        if sup >= n_coarse {
            return Err(Error::InvalidArgument(format!(
                "mapping sends cell {i} to {sup}, beyond {n_coarse} supercells"
            )));
        }
        params[sup] += d.params[i];
        hit[sup] = true;
    }
    if hit.iter().any(|h| !h) {
        return Err(Error::InvalidArgument(
            "mapping is not surjective onto the coarser partition".into(),
        ));
    }
    DirichletFinite::new(params)
}

/// The cell-to-supercell mapping realizing `coarse` as a coarsening of
/// `fine`; errors unless every fine cell sits inside one coarse cell.
pub fn refinement_map(fine: &Partition, coarse: &Partition) -> Result<Vec<usize>> {
    match (fine, coarse) {
        (Partition::Real { cuts: fc }, Partition::Real { cuts: cc }) => {
            for c in cc {
                if !fc.contains(c) {
                    return Err(Error::InvalidPartition(format!(
                        "coarse cut {c} is not a fine cut; not a refinement"
                    )));
                }
            }
            (0..fine.num_cells())
                .map(|i| {
                    let (lo, _) = fine.real_cell_bounds(i)?;
                    // The fine cell starting at `lo` lies in the coarse cell
                    // whose cuts it falls between.
                    Ok(cc.iter().take_while(|c| **c <= lo).count())
                })
                .collect()
        }
        (
            Partition::Finite { cells: fc, .. },
            Partition::Finite { cells: cc, .. },
        ) => fc
            .iter()
            .map(|cell| {
                let lead = cell.first().ok_or_else(|| {
                    Error::InvalidPartition("empty fine cell".into())
                })?;
                let sup = cc
                    .iter()
                    .position(|sc| sc.contains(lead))
                    .ok_or_else(|| Error::InvalidPartition(format!(
                        "fine cell containing `{lead}` has no supercell"
                    )))?;
                for l in cell {
                    if !cc[sup].contains(l) {
                        return Err(Error::InvalidPartition(format!(
                            "fine cell splits across supercells at `{l}`"
                        )));
                    }
                }
                Ok(sup)
            })
            .collect(),
        _ => Err(Error::InvalidPartition(
            "cannot mix real and finite partitions in one chain".into(),
        )),
    }
}

/// Per-pair outcome of the projective commutativity check.
#[derive(Clone, Debug)]
pub struct ProjectivePair {
    /// Index of the finer partition in the chain.
    pub fine_index: usize,
    /// Deviation between coarsen-then-update and update-then-coarsen.
    pub diagram_dev: f64,
    /// Deviation between projecting the DP posterior and count-updating the
    /// projected prior, on the finer partition.
    pub conjugacy_dev: f64,
}

/// Report for [`check_projective`].
#[derive(Clone, Debug)]
pub struct ProjectiveReport {
    pub pairs: Vec<ProjectivePair>,
    pub max_dev: f64,
    pub pass: bool,
}

/// Verifies, over a refinement chain ordered coarse to fine, that posterior
/// updates commute with coarsening (the projective diagrams) and that the
/// DP posterior projects to the count-updated projection. Deviations must be
/// zero when the cell masses are exact in `f64`.
pub fn check_projective(
    alpha: &DirichletMeasure,
    chain: &[Partition],
    observations: &[Location],
) -> Result<ProjectiveReport> {
    if chain.is_empty() {
        return Err(Error::EmptyInput("check_projective with no partitions"));
    }
    let posterior = dp_posterior(alpha, observations)?;
    let mut pairs = Vec::new();
    let mut max_dev = 0.0f64;

    for i in 0..chain.len() {
        // Conjugacy on every level of the chain.
        let prior_proj = project(alpha, &chain[i])?;
        let mut counted = prior_proj.clone();
        for obs in observations {
            counted = count_update(&counted, chain[i].cell_of(obs)?)?;
        }
        let via_dp = project(&posterior, &chain[i])?;
        let conjugacy_dev = via_dp.max_dev(&counted);
        max_dev = max_dev.max(conjugacy_dev);

        if i + 1 < chain.len() {
            let (coarse, fine) = (&chain[i], &chain[i + 1]);
            let map = refinement_map(fine, coarse)?;

            let fine_prior = project(alpha, fine)?;
            let mut fine_post = fine_prior.clone();
            for obs in observations {
                fine_post = count_update(&fine_post, fine.cell_of(obs)?)?;
            }
            let coarsened_post = coarsen(&fine_post, &map, coarse.num_cells())?;

            let mut coarse_post = coarsen(&fine_prior, &map, coarse.num_cells())?;
            for obs in observations {
                coarse_post = count_update(&coarse_post, coarse.cell_of(obs)?)?;
            }
            let diagram_dev = coarsened_post.max_dev(&coarse_post);
            max_dev = max_dev.max(diagram_dev);
            pairs.push(ProjectivePair {
                fine_index: i + 1,
                diagram_dev,
                conjugacy_dev,
            });
        } else {
            pairs.push(ProjectivePair {
                fine_index: i,
                diagram_dev: 0.0,
                conjugacy_dev,
            });
        }
    }
    Ok(ProjectiveReport {
        pairs,
        max_dev,
        pass: max_dev == 0.0,
    })
}

/// A sampled discrete probability measure: one `(atom, weight)` per stick.
#[derive(Clone, Debug)]
pub struct SampledMeasure {
    pub atoms: Vec<(Location, f64)>,
}

impl SampledMeasure {
    /// Mass per partition cell.
    pub fn cell_masses(&self, part: &Partition) -> Result<Vec<f64>> {
        let mut out = vec![0.0; part.num_cells()];
        for (loc, w) in &self.atoms {
            out[part.cell_of(loc)?] += w;
        }
        Ok(out)
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }
}

/// Truncation bias bound `(M / (1 + M))^n`: the expected stick mass left
/// after `n` sticks.
pub fn truncation_bias(mass: f64, n_sticks: usize) -> f64 {
    (mass / (1.0 + mass)).powi(n_sticks as i32)
}

/// Smallest truncation level whose bias bound is below `target`.
pub fn sticks_for_bias(mass: f64, target: f64) -> usize {
    let r = mass / (1.0 + mass);
    ((target.ln() / r.ln()).ceil() as usize).max(1)
}

/// Draws `V_i ~ Beta(1, M)` via its closed-form quantile `1 - (1-u)^(1/M)`.
fn stick_fraction(u: f64, mass: f64) -> f64 {
    1.0 - (1.0 - u).powf(1.0 / mass)
}

/// Draws one atom location from the normalized base measure.
fn draw_atom(rng: &mut impl Rng, alpha: &DirichletMeasure) -> Location {
    let total = alpha.total_mass();
    let mut u = rng.random::<f64>() * total;
    for (loc, w) in &alpha.atoms {
        if u < *w {
            return loc.clone();
        }
        u -= w;
    }
    match &alpha.diffuse {
        Some((base, _)) => Location::Point(base.quantile(rng.random::<f64>())),
        // Rounding overshoot: fall back to the last atom.
        None => alpha.atoms.last().expect("positive mass").0.clone(),
    }
}

fn stick_breaking_with(rng: &mut impl Rng, alpha: &DirichletMeasure, n_sticks: usize) -> SampledMeasure {
    let mass = alpha.total_mass();
    let mut atoms = Vec::with_capacity(n_sticks);
    let mut remaining = 1.0f64;
    let mut partial = 0.0f64;
    for i in 0..n_sticks {
        let w = if i + 1 == n_sticks {
            // Residual folding keeps the weights summing to exactly one.
            1.0 - partial
        } else {
            let v = stick_fraction(rng.random::<f64>(), mass);
            let w = v * remaining;
            remaining *= 1.0 - v;
            w
        };
        partial += w;
        atoms.push((draw_atom(rng, alpha), w));
    }
    SampledMeasure { atoms }
}

/// Truncated stick-breaking draw from `DP(alpha)`: `n_sticks` weights from
/// `Beta(1, M)` sticks with the residual folded into the final atom, atom
/// locations i.i.d. from the normalized base. Deterministic in `seed`.
pub fn stick_breaking_sample(
    alpha: &DirichletMeasure,
    n_sticks: usize,
    seed: u64,
) -> Result<SampledMeasure> {
    if n_sticks == 0 {
        return Err(Error::InvalidArgument("need at least one stick".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok(stick_breaking_with(&mut rng, alpha, n_sticks))
}

// ---------------------------------------------------------------------------
// Text serialization
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    point: Option<f64>,
    weight: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct DiffuseDoc {
    base: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    mass: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureDoc {
    #[serde(default)]
    atoms: Vec<AtomDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diffuse: Option<DiffuseDoc>,
}

impl DirichletMeasure {
    pub fn to_text(&self) -> String {
        let doc = MeasureDoc {
            atoms: self
                .atoms
                .iter()
                .map(|(loc, w)| match loc {
                    Location::Label(l) => AtomDoc {
                        label: Some(l.clone()),
                        point: None,
                        weight: *w,
                    },
                    Location::Point(p) => AtomDoc {
                        label: None,
                        point: Some(*p),
                        weight: *w,
                    },
                })
                .collect(),
            diffuse: self.diffuse.as_ref().map(|(base, mass)| match base {
                DiffuseBase::Uniform { lo, hi } => DiffuseDoc {
                    base: "uniform".into(),
                    lo: Some(*lo),
                    hi: Some(*hi),
                    mass: *mass,
                },
                DiffuseBase::StdNormal => DiffuseDoc {
                    base: "std-normal".into(),
                    lo: None,
                    hi: None,
                    mass: *mass,
                },
            }),
        };
        toml::to_string(&doc).expect("measure documents always serialize")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: MeasureDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let atoms = doc
            .atoms
            .into_iter()
            .map(|a| match (a.label, a.point) {
                (Some(l), None) => Ok((Location::Label(l), a.weight)),
                (None, Some(p)) => Ok((Location::Point(p), a.weight)),
                _ => Err(Error::Validation(
                    "an atom needs exactly one of `label` or `point`".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        let diffuse = doc
            .diffuse
            .map(|d| -> Result<(DiffuseBase, f64)> {
                let base = match d.base.as_str() {
                    "uniform" => {
                        let (lo, hi) = match (d.lo, d.hi) {
                            (Some(lo), Some(hi)) => (lo, hi),
                            _ => {
                                return Err(Error::Validation(
                                    "uniform base needs `lo` and `hi`".into(),
                                ))
                            }
                        };
                        DiffuseBase::Uniform { lo, hi }
                    }
                    "std-normal" => DiffuseBase::StdNormal,
                    other => return Err(Error::UnsupportedBase(other.to_string())),
                };
                Ok((base, d.mass))
            })
            .transpose()?;
        Self::new(atoms, diffuse)
    }
}

/// Per-cell moment comparison between Monte Carlo stick-breaking projections
/// and the analytic Dirichlet marginals.
#[derive(Clone, Debug)]
pub struct CellMoments {
    pub cell: String,
    pub target_mean: f64,
    pub sample_mean: f64,
    pub z_mean: f64,
    pub target_var: f64,
    pub sample_var: f64,
    pub z_var: f64,
}

/// Monte Carlo moment report for projected stick-breaking samples.
#[derive(Clone, Debug)]
pub struct MomentReport {
    pub cells: Vec<CellMoments>,
    pub replications: usize,
    pub n_sticks: usize,
    pub bias_bound: f64,
    /// True when every z-score is at most 3.
    pub pass: bool,
}

/// Samples `replications` truncated DP draws (one deterministic substream per
/// replicate), projects each onto the partition, and compares cell means and
/// variances against the analytic Dirichlet values.
pub fn projection_moment_report(
    alpha: &DirichletMeasure,
    part: &Partition,
    n_sticks: usize,
    seed: u64,
    replications: usize,
) -> Result<MomentReport> {
    if replications < 2 {
        return Err(Error::InvalidArgument("need >= 2 replications".into()));
    }
    let analytic = project(alpha, part)?;
    let k = part.num_cells();
    let samples: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let draw = stick_breaking_with(&mut rng, alpha, n_sticks);
            draw.cell_masses(part)
        })
        .collect::<Result<Vec<_>>>()?;

    let names = part.cell_names();
    let mut cells = Vec::with_capacity(k);
    let mut pass = true;
    for c in 0..k {
        let series: Vec<f64> = samples.iter().map(|s| s[c]).collect();
        let (m, v) = numeric::mean_var(&series);
        let se_m = numeric::se_mean(&series);
        let se_v = numeric::se_var(&series);
        let z_mean = (m - analytic.mean(c)).abs() / se_m.max(f64::MIN_POSITIVE);
        let z_var = (v - analytic.variance(c)).abs() / se_v.max(f64::MIN_POSITIVE);
        pass &= z_mean <= 3.0 && z_var <= 3.0;
        cells.push(CellMoments {
            cell: names[c].clone(),
            target_mean: analytic.mean(c),
            sample_mean: m,
            z_mean,
            target_var: analytic.variance(c),
            sample_var: v,
            z_var,
        });
    }
    Ok(MomentReport {
        cells,
        replications,
        n_sticks,
        bias_bound: truncation_bias(alpha.total_mass(), n_sticks),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled_123() -> DirichletMeasure {
        DirichletMeasure::from_labels(&[("1", 1.0), ("2", 1.0), ("3", 1.0)]).unwrap()
    }

    #[test]
    fn posterior_adds_unit_atoms() {
        let alpha = labelled_123();
        // No observations: unchanged.
        assert_eq!(dp_posterior(&alpha, &[]).unwrap(), alpha);

        // One observation at "2": (1,1,1) -> (1,2,1).
        let post = dp_posterior(&alpha, &[Location::label("2")]).unwrap();
        let proj = project(
            &post,
            &Partition::finite(
                vec!["1".into(), "2".into(), "3".into()],
                vec![vec!["1".into()], vec!["2".into()], vec!["3".into()]],
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(proj.params(), &[1.0, 2.0, 1.0]);

        // Repetition grows one atom's weight by n.
        let post =
            dp_posterior(&alpha, &vec![Location::label("3"); 5]).unwrap();
        assert_eq!(post.total_mass(), 8.0);
        assert_eq!(
            post.atoms().iter().find(|(l, _)| l.matches(&Location::label("3"))).unwrap().1,
            6.0
        );
    }

    #[test]
    fn posterior_merges_close_real_atoms_and_rejects_type_mismatch() {
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 2.0)
            .unwrap();
        let post = dp_posterior(
            &alpha,
            &[Location::point(0.5), Location::point(0.5 + 1e-15)],
        )
        .unwrap();
        assert_eq!(post.atoms().len(), 1);
        assert_eq!(post.atoms()[0].1, 2.0);
        assert!(dp_posterior(&alpha, &[Location::label("x")]).is_err());
    }

    #[test]
    fn project_trivial_partition_gives_total_mass() {
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::StdNormal, 4.0).unwrap();
        let part = Partition::real(vec![]).unwrap();
        let proj = project(&alpha, &part).unwrap();
        assert_eq!(proj.params(), &[4.0]);
    }

    #[test]
    fn project_uniform_interval_masses() {
        // 3 * Uniform[0,1] split at 0.5 -> (1.5, 1.5).
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 3.0)
            .unwrap();
        let part = Partition::real(vec![0.5]).unwrap();
        let proj = project(&alpha, &part).unwrap();
        assert_eq!(proj.params(), &[1.5, 1.5]);

        // Adding an atom at 0.7 with weight 2 -> (1.5, 3.5).
        let with_atom = DirichletMeasure::new(
            vec![(Location::point(0.7), 2.0)],
            Some((DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 3.0)),
        )
        .unwrap();
        let proj = project(&with_atom, &part).unwrap();
        assert_eq!(proj.params(), &[1.5, 3.5]);
    }

    #[test]
    fn project_normal_base_uses_cdf() {
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::StdNormal, 2.0).unwrap();
        let part = Partition::real(vec![0.0]).unwrap();
        let proj = project(&alpha, &part).unwrap();
        assert!((proj.params()[0] - 1.0).abs() < 1e-12);
        assert!((proj.params()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn project_rejects_diffuse_on_label_partition() {
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::StdNormal, 1.0).unwrap();
        let part = Partition::finite(vec!["a".into()], vec![vec!["a".into()]]).unwrap();
        assert!(matches!(
            project(&alpha, &part),
            Err(Error::UnsupportedBase(_))
        ));
    }

    #[test]
    fn coarsen_sums_and_checks_surjectivity() {
        let d = DirichletFinite::new(vec![1.0, 2.0, 1.0]).unwrap();
        let merged = coarsen(&d, &[0, 0, 1], 2).unwrap();
        assert_eq!(merged.params(), &[3.0, 1.0]);
        assert_eq!(coarsen(&d, &[0, 1, 2], 3).unwrap().params(), d.params());
        assert!(coarsen(&d, &[0, 0, 0], 2).is_err());
        assert!(coarsen(&d, &[0, 0], 1).is_err());
    }

    #[test]
    fn posterior_and_coarsen_commute_for_single_observation() {
        let alpha = labelled_123();
        let universe: Vec<String> = vec!["1".into(), "2".into(), "3".into()];
        let fine = Partition::finite(
            universe.clone(),
            vec![vec!["1".into()], vec!["2".into()], vec!["3".into()]],
        )
        .unwrap();
        let coarse =
            Partition::finite(universe, vec![vec!["1".into(), "2".into()], vec!["3".into()]])
                .unwrap();
        let report =
            check_projective(&alpha, &[coarse, fine], &[Location::label("2")]).unwrap();
        assert!(report.pass, "max dev {}", report.max_dev);
        assert_eq!(report.max_dev, 0.0);
    }

    #[test]
    fn projective_chain_on_dyadic_intervals_is_exact() {
        // Uniform[0,1] base with dyadic cuts: all cell masses are exact dyadics,
        // so both composition orders agree bit for bit.
        let alpha = DirichletMeasure::new(
            vec![(Location::point(0.625), 0.75)],
            Some((DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 2.5)),
        )
        .unwrap();
        let coarse = Partition::real(vec![0.5]).unwrap();
        let mid = Partition::real(vec![0.25, 0.5]).unwrap();
        let fine = Partition::real(vec![0.125, 0.25, 0.5, 0.75]).unwrap();
        let obs = vec![
            Location::point(0.3),
            Location::point(0.8),
            Location::point(0.05),
            Location::point(0.3),
        ];
        let report = check_projective(&alpha, &[coarse, mid, fine], &obs).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_dev, 0.0);

        // Single-partition chain is vacuously commutative.
        let single = check_projective(&alpha, &[Partition::real(vec![0.5]).unwrap()], &obs).unwrap();
        assert!(single.pass);
    }

    #[test]
    fn refinement_map_rejects_non_refinements() {
        let a = Partition::real(vec![0.3]).unwrap();
        let b = Partition::real(vec![0.5]).unwrap();
        assert!(refinement_map(&a, &b).is_err());
        let fine = Partition::real(vec![0.25, 0.5]).unwrap();
        let coarse = Partition::real(vec![0.5]).unwrap();
        assert_eq!(refinement_map(&fine, &coarse).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn single_stick_is_a_dirac() {
        let alpha = labelled_123();
        let s = stick_breaking_sample(&alpha, 1, 9).unwrap();
        assert_eq!(s.atoms.len(), 1);
        assert_eq!(s.atoms[0].1, 1.0);
    }

    #[test]
    fn stick_weights_sum_to_exactly_one() {
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::StdNormal, 3.0).unwrap();
        for seed in 0..50 {
            let s = stick_breaking_sample(&alpha, 40, seed).unwrap();
            let total: f64 = s.atoms.iter().map(|(_, w)| w).sum();
            assert_eq!(total, 1.0, "seed {seed}");
            assert!(s.atoms.iter().all(|(_, w)| *w >= 0.0));
        }
    }

    #[test]
    fn stick_sampler_is_deterministic_per_seed() {
        let alpha = DirichletMeasure::diffuse_only(DiffuseBase::StdNormal, 2.0).unwrap();
        let a = stick_breaking_sample(&alpha, 25, 77).unwrap();
        let b = stick_breaking_sample(&alpha, 25, 77).unwrap();
        for ((la, wa), (lb, wb)) in a.atoms.iter().zip(&b.atoms) {
            assert!(la.matches(lb));
            assert_eq!(wa, wb);
        }
    }

    #[test]
    fn expected_stick_weights_follow_the_beta_moment_identity() {
        // E[W_i] = (1/(1+M)) (M/(1+M))^{i-1}; Monte Carlo within 3 SE.
        let mass = 2.0;
        let alpha =
            DirichletMeasure::diffuse_only(DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, mass)
                .unwrap();
        let n_sticks = 30;
        let reps = 20_000usize;
        let mut per_stick: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(reps)).collect();
        for rep in 0..reps {
            let mut rng = ChaCha12Rng::seed_from_u64(1234);
            rng.set_stream(rep as u64);
            let s = stick_breaking_with(&mut rng, &alpha, n_sticks);
            for i in 0..3 {
                per_stick[i].push(s.atoms[i].1);
            }
        }
        for (i, series) in per_stick.iter().enumerate() {
            let want = (1.0 / (1.0 + mass)) * (mass / (1.0 + mass)).powi(i as i32);
            let m = numeric::mean(series);
            let se = numeric::se_mean(series);
            assert!(
                (m - want).abs() <= 3.0 * se,
                "stick {i}: mean {m} vs {want} (se {se})"
            );
        }
    }

    #[test]
    fn projected_sticks_match_dirichlet_moments() {
        let alpha = DirichletMeasure::new(
            vec![(Location::point(0.7), 2.0)],
            Some((DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 3.0)),
        )
        .unwrap();
        let part = Partition::real(vec![0.5]).unwrap();
        let n = sticks_for_bias(alpha.total_mass(), 1e-6);
        let report = projection_moment_report(&alpha, &part, n, 5150, 40_000).unwrap();
        assert!(
            report.pass,
            "z-scores: {:?}",
            report
                .cells
                .iter()
                .map(|c| (c.z_mean, c.z_var))
                .collect::<Vec<_>>()
        );
        assert!(report.bias_bound < 1e-6);
    }

    #[test]
    fn measure_text_round_trips() {
        let alpha = DirichletMeasure::new(
            vec![(Location::point(0.7), 2.0)],
            Some((DiffuseBase::Uniform { lo: 0.0, hi: 1.0 }, 3.0)),
        )
        .unwrap();
        assert_eq!(DirichletMeasure::from_text(&alpha.to_text()).unwrap(), alpha);

        let labelled = labelled_123();
        assert_eq!(
            DirichletMeasure::from_text(&labelled.to_text()).unwrap(),
            labelled
        );
        assert!(DirichletMeasure::from_text("atoms = 3").is_err());
        assert!(
            DirichletMeasure::from_text("[diffuse]\nbase = \"cauchy\"\nmass = 1.0").is_err()
        );
    }

    #[test]
    fn bias_helpers_are_consistent() {
        let m = 2.0;
        let n = sticks_for_bias(m, 1e-4);
        assert!(truncation_bias(m, n) < 1e-4);
        assert!(truncation_bias(m, n - 1) >= 1e-4);
    }
}
