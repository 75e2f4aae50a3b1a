//! Replicated experiments: draw independent `(X, Y)` pairs, summarize the
//! association statistics and compare them with the limiting laws.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{
    build_covariance, tilde_spectrum, Basis, CovarianceHandle, CovarianceModel, EigenProfile,
    EigenSpec, GaussianError, Regime, SpectralSummary,
};
use crate::graphs::{build_interaction, FamilyTag, GraphError, GraphFamily};
use crate::ising::{
    CurieWeissSampler, GlauberStart, IsingError, IsingModel, IsingSampler, SamplerMethod,
};
use crate::stats::{self, normal_critical_value, ols_fit, AssociationSample, OlsFit};
use crate::theory::{
    self, ols_condition, Direction, Law, LimitPrediction, OlsConditionReport, OlsVerdict,
    Statistic, TheoryError,
};

pub const MIN_REPLICATES: usize = 100;
/// Largest tolerated fraction of replicates with a constant vector.
pub const DEGENERATE_LIMIT: f64 = 0.01;
/// Threshold for the raw-correlation mass near the Rademacher atoms.
pub const RADEMACHER_CUTOFF: f64 = 0.8;

const TAG_X: u64 = 0x5eed_0000_0000_0001;
const TAG_Y: u64 = 0x5eed_0000_0000_0002;

#[derive(Debug, Error)]
pub enum McError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("experiment aborted: {0}")]
    Abort(String),
}

impl From<GraphError> for McError {
    fn from(e: GraphError) -> Self {
        McError::Config(e.to_string())
    }
}

impl From<IsingError> for McError {
    fn from(e: IsingError) -> Self {
        McError::Config(e.to_string())
    }
}

impl From<GaussianError> for McError {
    fn from(e: GaussianError) -> Self {
        McError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Identity {
        #[serde(default = "one")]
        variance: f64,
    },
    Equicorrelation {
        rho: f64,
    },
    /// `lambda_i = f(i/n)`.
    Profile {
        profile: EigenProfile,
        #[serde(default)]
        basis: Basis,
    },
    Values {
        values: Vec<f64>,
        #[serde(default)]
        basis: Basis,
    },
    /// `ceil(n / sigma_sq)` unit tilde eigenvalues.
    SigmaSquared {
        sigma_sq: f64,
    },
    /// One tilde eigenvalue `n^exponent` over a unit bulk.
    Spike {
        #[serde(default = "spike_exponent")]
        exponent: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn spike_exponent() -> f64 {
    2.5
}

impl CovarianceSpec {
    pub fn resolve(&self, n: usize) -> Result<CovarianceModel, GaussianError> {
        Ok(match self {
            CovarianceSpec::Identity { variance } => CovarianceModel::IdentityScaled {
                n,
                variance: *variance,
            },
            CovarianceSpec::Equicorrelation { rho } => {
                CovarianceModel::Equicorrelation { n, rho: *rho }
            }
            CovarianceSpec::Profile { profile, basis } => {
                CovarianceModel::FromEigenSpec(EigenSpec::from_profile(n, profile, *basis)?)
            }
            CovarianceSpec::Values { values, basis } => {
                if values.len() != n {
                    return Err(GaussianError::Parameter(format!(
                        "{} eigenvalues given for n = {n}",
                        values.len()
                    )));
                }
                CovarianceModel::FromEigenSpec(EigenSpec::new(values.clone(), *basis)?)
            }
            CovarianceSpec::SigmaSquared { sigma_sq } => {
                CovarianceModel::FromEigenSpec(EigenSpec::sigma_squared(n, *sigma_sq)?)
            }
            CovarianceSpec::Spike { exponent } => {
                CovarianceModel::FromEigenSpec(EigenSpec::spike(n, *exponent)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ising {
        graph: GraphFamily,
        beta: f64,
        /// Defaults to exact sampling for Curie-Weiss, Wolff for lattices and Glauber otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sampler: Option<SamplerMethod>,
        /// Alternate all-plus and all-minus Glauber starts across replicates.
        /// Defaults to on for dense regular graphs above `beta = 1`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        two_well: Option<bool>,
    },
    Gaussian {
        covariance: CovarianceSpec,
    },
}

impl ModelSpec {
    pub fn ising(graph: GraphFamily, beta: f64) -> Self {
        ModelSpec::Ising {
            graph,
            beta,
            sampler: None,
            two_well: None,
        }
    }

    pub fn gaussian(covariance: CovarianceSpec) -> Self {
        ModelSpec::Gaussian { covariance }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            ModelSpec::Ising { beta, .. } => Some(*beta),
            ModelSpec::Gaussian { .. } => None,
        }
    }

    /// Replaces `beta` of an Ising model; Gaussian models are returned unchanged.
    pub fn with_beta(&self, new_beta: f64) -> Self {
        let mut out = self.clone();
        if let ModelSpec::Ising { beta, .. } = &mut out {
            *beta = new_beta;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    T,
    Rho,
    Ols,
}

fn default_stats() -> Vec<StatKind> {
    vec![StatKind::T, StatKind::Rho]
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default = "default_stats")]
    pub statistics: Vec<StatKind>,
    #[serde(default = "default_alpha")]
    pub nominal_alpha: f64,
    #[serde(default)]
    pub ols_beta_true: f64,
    pub model_x: ModelSpec,
    /// The noise `eps` when OLS is requested; then `Y = ols_beta_true X + eps`.
    pub model_y: ModelSpec,
}

impl ExperimentConfig {
    pub fn wants(&self, s: StatKind) -> bool {
        self.statistics.contains(&s)
    }
}

/// Per-replicate output, one CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub t_n: Option<f64>,
    pub scaled_t: Option<f64>,
    pub rho_n: Option<f64>,
    pub scaled_rho: Option<f64>,
    pub beta_hat: Option<f64>,
    pub naive_var: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub distance: f64,
    pub pvalue: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let pi2 = std::f64::consts::PI.powi(2);
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (1..=100)
                .map(|k| {
                    let j = (2 * k - 1) as f64;
                    (-j * j * pi2 / (8.0 * lambda * lambda)).exp()
                })
                .sum::<f64>();
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test with the asymptotic p-value at `sqrt(N) D`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, McError> {
    if samples.len() < MIN_REPLICATES {
        return Err(McError::Config(format!(
            "KS needs at least {MIN_REPLICATES} samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let distance = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        distance,
        pvalue: kolmogorov_sf(n.sqrt() * distance),
    })
}

pub fn ks_test_law(samples: &[f64], law: &Law) -> Result<KsResult, McError> {
    if law.cdf(0.0).is_none() {
        return Err(McError::Config("KS is not applicable to this law".into()));
    }
    ks_test(samples, |t| law.cdf(t).unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub var: f64,
    pub sd: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Self {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = stats::variance(x);
        Moments {
            count: x.len(),
            mean,
            var,
            sd: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub statistic: Statistic,
    #[serde(flatten)]
    pub moments: Moments,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<LimitPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<KsResult>,
    /// Fraction of `|stat| > z_{1-alpha/2}`, the naive test that assumes `N(0, 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type1_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCorrelationSummary {
    pub mean: f64,
    pub fraction_abs_above_cutoff: f64,
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSummary {
    pub coverage: f64,
    pub rejection_rate: f64,
    pub beta_hat: Moments,
    pub mean_naive_var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<OlsConditionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub valid_replicates: usize,
    pub degenerate_replicates: usize,
    pub summaries: Vec<StatSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_correlation: Option<RawCorrelationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ols: Option<OlsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumInfo>,
    /// Approximations in force, such as two-well Glauber starts.
    pub heuristics: Vec<String>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
    #[serde(skip)]
    pub spins: Vec<(Vec<i8>, Vec<i8>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumInfo {
    pub a_n: f64,
    pub regime: Regime,
    pub largest_tilde: f64,
    pub sum_sq_tilde: f64,
}

impl McReport {
    pub fn summary(&self, statistic: Statistic) -> Option<&StatSummary> {
        self.summaries.iter().find(|s| s.statistic == statistic)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Values of a per-replicate column for the valid replicates.
    pub fn column(&self, f: impl Fn(&ReplicateRecord) -> Option<f64>) -> Vec<f64> {
        self.records.iter().filter_map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep every spin vector for a binary dump.
    pub keep_spins: bool,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(master_seed, tag, replicate)`.
pub fn replicate_rng(master_seed: u64, tag: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(master_seed ^ splitmix(tag)));
    rng.set_stream(replicate as u64);
    rng
}

enum Source {
    CurieWeiss(CurieWeissSampler),
    Ising {
        model: IsingModel,
        method: SamplerMethod,
        /// Replicate `r` starts in the plus well when `(r / stride) % 2 == 0`.
        two_well_stride: Option<usize>,
    },
    Gaussian(Arc<CovarianceHandle>),
}

struct Drawn {
    values: Vec<f64>,
    spins: Option<Vec<i8>>,
}

impl Source {
    fn draw(&self, replicate: usize, mut rng: ChaCha8Rng, keep: bool) -> Drawn {
        let spins = match self {
            Source::CurieWeiss(s) => s.sample(&mut rng),
            Source::Ising {
                model,
                method,
                two_well_stride,
            } => {
                let mut method = method.clone();
                if let (Some(stride), SamplerMethod::Glauber { start, .. }) =
                    (two_well_stride, &mut method)
                {
                    *start = if (replicate / stride).is_multiple_of(2) {
                        GlauberStart::AllPlus
                    } else {
                        GlauberStart::AllMinus
                    };
                }
                IsingSampler::with_rng(model, &method, rng)
                    .expect("validated when the experiment was prepared")
                    .next_sample()
            }
            Source::Gaussian(h) => {
                return Drawn {
                    values: h.sample(&mut rng),
                    spins: None,
                }
            }
        };
        Drawn {
            values: spins.to_f64(),
            spins: keep.then(|| spins.into()),
        }
    }
}

/// Everything derived from a config before any sampling.
struct Prepared {
    x: Source,
    y: Source,
    prediction: Option<(LimitPrediction, LimitPrediction)>,
    spectral: Option<SpectralSummary>,
    ols_condition: Option<OlsConditionReport>,
    heuristics: Vec<String>,
    notes: Vec<String>,
}

struct IsingParts {
    tag: FamilyTag,
    beta: f64,
    heuristic: bool,
}

fn prepare_source(
    spec: &ModelSpec,
    n: usize,
    stride: usize,
    label: &str,
    heuristics: &mut Vec<String>,
) -> Result<(Source, Option<IsingParts>), McError> {
    match spec {
        ModelSpec::Ising {
            graph,
            beta,
            sampler,
            two_well,
        } => {
            if graph.vertex_count() != n {
                return Err(McError::Config(format!(
                    "{label}: graph has {} vertices but n = {n}",
                    graph.vertex_count()
                )));
            }
            let q = Arc::new(build_interaction(graph)?);
            let tag = q.family();
            let model = IsingModel::new(q, *beta)?;
            let method = sampler
                .clone()
                .unwrap_or_else(|| SamplerMethod::default_for(tag));
            // construct once so plan errors surface as configuration errors
            IsingSampler::with_rng(&model, &method, ChaCha8Rng::seed_from_u64(0))?;
            let glauber = matches!(method, SamplerMethod::Glauber { .. });
            let use_two_well = glauber && two_well.unwrap_or(tag.is_dense_regular() && *beta > 1.0);
            if two_well == &Some(true) && !glauber {
                return Err(McError::Config(format!(
                    "{label}: two_well requires the glauber sampler"
                )));
            }
            if use_two_well {
                heuristics.push(format!(
                    "{label}: Glauber chains alternate all-plus and all-minus starts (beta = {beta}); \
                     within-well sampling approximates the two-well mixture"
                ));
            }
            let source = match method {
                SamplerMethod::ExactCw => Source::CurieWeiss(CurieWeissSampler::new(n, *beta)),
                _ => Source::Ising {
                    model,
                    method,
                    two_well_stride: use_two_well.then_some(stride),
                },
            };
            Ok((
                source,
                Some(IsingParts {
                    tag,
                    beta: *beta,
                    heuristic: use_two_well,
                }),
            ))
        }
        ModelSpec::Gaussian { covariance } => {
            let handle = build_covariance(covariance.resolve(n)?)?;
            Ok((Source::Gaussian(Arc::new(handle)), None))
        }
    }
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared, McError> {
    if config.n < 2 {
        return Err(McError::Config(format!("n must be >= 2, got {}", config.n)));
    }
    if config.replicates < MIN_REPLICATES {
        return Err(McError::Config(format!(
            "replicates must be >= {MIN_REPLICATES}, got {}",
            config.replicates
        )));
    }
    if !(config.nominal_alpha > 0.0 && config.nominal_alpha < 1.0) {
        return Err(McError::Config(format!(
            "nominal_alpha must lie in (0, 1), got {}",
            config.nominal_alpha
        )));
    }
    if config.statistics.is_empty() {
        return Err(McError::Config("no statistics requested".into()));
    }
    if !config.ols_beta_true.is_finite() {
        return Err(McError::Config("ols_beta_true must be finite".into()));
    }
    let n = config.n;
    let mut heuristics = Vec::new();
    let mut notes = Vec::new();
    let (x, xi) = prepare_source(&config.model_x, n, 1, "model_x", &mut heuristics)?;
    let (y, yi) = prepare_source(&config.model_y, n, 2, "model_y", &mut heuristics)?;

    let mut spectral = None;
    let prediction = match (&xi, &yi, &x, &y) {
        (Some(a), Some(b), _, _) => ising_prediction(a, b, &mut notes),
        (None, None, Source::Gaussian(hx), Source::Gaussian(hy)) => {
            let (ModelSpec::Gaussian { covariance: cx }, ModelSpec::Gaussian { covariance: cy }) =
                (&config.model_x, &config.model_y)
            else {
                unreachable!()
            };
            if cx == cy && !config.wants(StatKind::Ols) {
                let s = tilde_spectrum(hx)?;
                let p = match theory::predict_gaussian(&s) {
                    Ok(p) => Some(p),
                    Err(TheoryError::NoPrediction) => {
                        notes.push("spectrum is in neither regime; no limit law attached".into());
                        None
                    }
                    Err(e) => return Err(McError::Config(e.to_string())),
                };
                if s.regime == Regime::Spike {
                    notes.push(format!(
                        "spike regime: largest tilde eigenvalue {:.6e}",
                        s.largest()
                    ));
                }
                spectral = Some(s);
                p
            } else {
                if hx.basis() != hy.basis() && config.wants(StatKind::Ols) {
                    return Err(McError::Config(
                        "OLS needs Sigma_X and Sigma_eps in a common eigenbasis".into(),
                    ));
                }
                None
            }
        }
        _ => None,
    };
    let prediction = match (
        prediction,
        white_variance(&config.model_x),
        white_variance(&config.model_y),
    ) {
        (None, Some(vx), Some(vy)) if !config.wants(StatKind::Ols) => {
            let (mut cov, mut cor) = theory::predict_curie_weiss(0.0, 0.0);
            cov.law = Law::Normal { variance: vx * vy };
            cov.source = "independent coordinates".into();
            cor.source = "independent coordinates".into();
            Some((cov, cor))
        }
        (p, _, _) => p,
    };

    let ols_condition = match (&x, &y) {
        (Source::Gaussian(hx), Source::Gaussian(hy)) if config.wants(StatKind::Ols) => {
            let f = EigenProfile::Values {
                path: "model_x".into(),
                values: hx.eigenvalues().to_vec(),
            };
            let g = EigenProfile::Values {
                path: "model_y".into(),
                values: hy.eigenvalues().to_vec(),
            };
            Some(ols_condition(&f, &g, n).map_err(|e| McError::Config(e.to_string()))?)
        }
        _ => None,
    };
    if xi.as_ref().is_some_and(|p| p.heuristic) || yi.as_ref().is_some_and(|p| p.heuristic) {
        notes.push("prediction compared against a heuristic sampler".into());
    }
    Ok(Prepared {
        x,
        y,
        prediction,
        spectral,
        ols_condition,
        heuristics,
        notes,
    })
}

/// Variance of a model with i.i.d. coordinates.
fn white_variance(spec: &ModelSpec) -> Option<f64> {
    match spec {
        ModelSpec::Gaussian {
            covariance: CovarianceSpec::Identity { variance },
        } => Some(*variance),
        ModelSpec::Ising { beta, .. } if *beta == 0.0 => Some(1.0),
        _ => None,
    }
}

fn ising_prediction(
    a: &IsingParts,
    b: &IsingParts,
    notes: &mut Vec<String>,
) -> Option<(LimitPrediction, LimitPrediction)> {
    if a.beta == 0.0 && b.beta == 0.0 {
        return Some(theory::predict_curie_weiss(0.0, 0.0));
    }
    match (a.tag, b.tag) {
        (FamilyTag::Lattice { dim: d1 }, FamilyTag::Lattice { dim: d2 }) if d1 == d2 => {
            match theory::predict_lattice(a.beta, b.beta, d1) {
                Ok(p) => Some(p),
                Err(e) => {
                    notes.push(format!("no lattice prediction: {e}"));
                    None
                }
            }
        }
        (s, t) if s == t && s.is_dense_regular() => {
            let (mut cov, mut cor) = theory::predict_curie_weiss(a.beta, b.beta);
            if s != FamilyTag::CurieWeiss {
                cov.source = "dense regular universality".into();
                cor.source = "dense regular universality".into();
            }
            Some((cov, cor))
        }
        _ => None,
    }
}

struct Outcome {
    record: Option<ReplicateRecord>,
    spins: Option<(Vec<i8>, Vec<i8>)>,
}

fn run_replicate(config: &ExperimentConfig, prep: &Prepared, r: usize, keep: bool) -> Outcome {
    let x = prep
        .x
        .draw(r, replicate_rng(config.master_seed, TAG_X, r), keep);
    let mut y = prep
        .y
        .draw(r, replicate_rng(config.master_seed, TAG_Y, r), keep);
    if config.ols_beta_true != 0.0 {
        for (yi, xi) in y.values.iter_mut().zip(&x.values) {
            *yi += config.ols_beta_true * xi;
        }
    }
    let spins = match (x.spins, y.spins) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let n = config.n as f64;
    let mut rec = ReplicateRecord {
        replicate: r,
        t_n: None,
        scaled_t: None,
        rho_n: None,
        scaled_rho: None,
        beta_hat: None,
        naive_var: None,
        ci_low: None,
        ci_high: None,
    };
    if config.wants(StatKind::Rho) {
        match AssociationSample::compute(&x.values, &y.values) {
            Ok(a) => {
                rec.rho_n = Some(a.rho_n);
                rec.scaled_rho = Some(a.scaled_rho);
            }
            Err(_) => {
                return Outcome {
                    record: None,
                    spins,
                }
            }
        }
    }
    if config.wants(StatKind::T) {
        let t = stats::sample_covariance(&x.values, &y.values).expect("lengths agree");
        rec.t_n = Some(t);
        rec.scaled_t = Some(n.sqrt() * t);
    }
    if config.wants(StatKind::Ols) {
        match ols_fit(&x.values, &y.values, config.nominal_alpha) {
            Ok(OlsFit {
                beta_hat,
                naive_var,
                ci_low,
                ci_high,
                ..
            }) => {
                rec.beta_hat = Some(beta_hat);
                rec.naive_var = Some(naive_var);
                rec.ci_low = Some(ci_low);
                rec.ci_high = Some(ci_high);
            }
            Err(_) => {
                return Outcome {
                    record: None,
                    spins,
                }
            }
        }
    }
    Outcome {
        record: Some(rec),
        spins,
    }
}

/// Checks a config without sampling.
pub fn validate(config: &ExperimentConfig) -> Result<(), McError> {
    prepare(config).map(|_| ())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<McReport, McError> {
    run_experiment_with(config, &RunOptions::default())
}

/// Runs all replicates in parallel; the report depends only on the config.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<McReport, McError> {
    let prep = prepare(config)?;
    let outcomes: Vec<Outcome> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, &prep, r, opts.keep_spins))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut spins = Vec::new();
    for o in outcomes {
        if let Some(rec) = o.record {
            records.push(rec);
        }
        if let Some(s) = o.spins {
            spins.push(s);
        }
    }
    let degenerate = config.replicates - records.len();
    if degenerate as f64 > DEGENERATE_LIMIT * config.replicates as f64 {
        return Err(McError::Abort(format!(
            "{degenerate} of {} replicates produced a constant vector; \
             the model is too far above its critical point for these statistics",
            config.replicates
        )));
    }
    let mut report = McReport {
        config: config.clone(),
        valid_replicates: records.len(),
        degenerate_replicates: degenerate,
        summaries: Vec::new(),
        raw_correlation: None,
        ols: None,
        spectrum: prep.spectral.as_ref().map(|s| SpectrumInfo {
            a_n: s.a_n,
            regime: s.regime,
            largest_tilde: s.largest(),
            sum_sq_tilde: s.sum_sq(),
        }),
        heuristics: prep.heuristics.clone(),
        notes: prep.notes.clone(),
        checks: Vec::new(),
        records,
        spins,
    };
    if degenerate > 0 {
        report
            .notes
            .push(format!("{degenerate} degenerate replicates dropped"));
    }
    summarize(&mut report, &prep)?;
    Ok(report)
}

fn summarize(report: &mut McReport, prep: &Prepared) -> Result<(), McError> {
    let config = &report.config;
    let z = normal_critical_value(config.nominal_alpha);
    let n = config.n as f64;
    let (cov_pred, cor_pred) = match &prep.prediction {
        Some((a, b)) => (Some(a.clone()), Some(b.clone())),
        None => (None, None),
    };
    let spike = cov_pred
        .as_ref()
        .is_some_and(|p| p.statistic == Statistic::SpikeCovariance);

    let mut summaries = Vec::new();
    let mut checks = Vec::new();
    let mut push = |statistic: Statistic, values: Vec<f64>, prediction: Option<LimitPrediction>| {
        let moments = Moments::of(&values);
        let ks = match &prediction {
            Some(p) if p.law.cdf(0.0).is_some() => Some(ks_test_law(&values, &p.law)?),
            _ => None,
        };
        let type1_rate = matches!(
            statistic,
            Statistic::ScaledCovariance | Statistic::ScaledCorrelation
        )
        .then(|| values.iter().filter(|v| v.abs() > z).count() as f64 / values.len() as f64);
        if let Some(p) = &prediction {
            generic_checks(statistic, &moments, p, ks, type1_rate, z, &mut checks);
        }
        summaries.push(StatSummary {
            statistic,
            moments,
            prediction,
            ks,
            type1_rate,
        });
        Ok::<(), McError>(())
    };

    if config.wants(StatKind::T) {
        let scaled = report.column(|r| r.scaled_t);
        if spike {
            let l1 = prep.spectral.as_ref().map(|s| s.largest()).unwrap();
            push(Statistic::ScaledCovariance, scaled, None)?;
            let spiked = report.column(|r| r.t_n.map(|t| n * t / l1));
            push(Statistic::SpikeCovariance, spiked, cov_pred.clone())?;
        } else {
            push(Statistic::ScaledCovariance, scaled, cov_pred.clone())?;
        }
    }
    if config.wants(StatKind::Rho) {
        let scaled = report.column(|r| r.scaled_rho);
        let raw = report.column(|r| r.rho_n);
        if spike {
            push(Statistic::ScaledCorrelation, scaled, None)?;
        } else {
            push(Statistic::ScaledCorrelation, scaled, cor_pred.clone())?;
        }
        let frac =
            raw.iter().filter(|v| v.abs() > RADEMACHER_CUTOFF).count() as f64 / raw.len() as f64;
        report.raw_correlation = Some(RawCorrelationSummary {
            mean: raw.iter().sum::<f64>() / raw.len() as f64,
            fraction_abs_above_cutoff: frac,
            cutoff: RADEMACHER_CUTOFF,
        });
    }
    if config.wants(StatKind::Ols) {
        let beta = config.ols_beta_true;
        let covered = report
            .records
            .iter()
            .filter(|r| r.ci_low.unwrap() <= beta && beta <= r.ci_high.unwrap())
            .count();
        let rejected = report
            .records
            .iter()
            .filter(|r| !(r.ci_low.unwrap() <= 0.0 && 0.0 <= r.ci_high.unwrap()))
            .count();
        let total = report.records.len() as f64;
        let coverage = covered as f64 / total;
        if let Some(cond) = &prep.ols_condition {
            let nominal = 1.0 - config.nominal_alpha;
            let agrees = match cond.verdict {
                OlsVerdict::Anticonservative => coverage < nominal,
                OlsVerdict::Valid => coverage >= nominal,
                OlsVerdict::Exact => (coverage - nominal).abs() <= 0.02,
            };
            checks.push(Check::new(
                "ols_direction",
                agrees,
                format!("condition {:?}, coverage {coverage:.4}", cond.verdict),
            ));
        }
        report.ols = Some(OlsSummary {
            coverage,
            rejection_rate: rejected as f64 / total,
            beta_hat: Moments::of(&report.column(|r| r.beta_hat)),
            mean_naive_var: report.column(|r| r.naive_var).iter().sum::<f64>() / total,
            condition: prep.ols_condition.clone(),
        });
    }
    report.summaries = summaries;
    report.checks = checks;
    Ok(())
}

/// Default verdicts: variance within 25%, KS `p > 0.001`, naive type-I rate
/// within 0.02 of `2 (1 - Phi(z / v))`.
fn generic_checks(
    statistic: Statistic,
    moments: &Moments,
    prediction: &LimitPrediction,
    ks: Option<KsResult>,
    type1_rate: Option<f64>,
    z: f64,
    checks: &mut Vec<Check>,
) {
    let label = format!("{statistic:?}");
    match prediction.law {
        Law::Normal { variance } => {
            let rel = (moments.var - variance).abs() / variance;
            checks.push(Check::new(
                format!("{label}_variance"),
                rel <= 0.25,
                format!("empirical {:.5} vs predicted {variance:.5}", moments.var),
            ));
            if let Some(rate) = type1_rate {
                let expected = 2.0 * (1.0 - stats::standard_normal_cdf(z / variance.sqrt()));
                checks.push(Check::new(
                    format!("{label}_type1"),
                    (rate - expected).abs() <= 0.02,
                    format!("rate {rate:.4} vs {expected:.4}"),
                ));
            }
        }
        Law::Unknown {
            direction: Direction::Inflated,
        } => checks.push(Check::new(
            format!("{label}_inflated"),
            moments.var > 1.0,
            format!("empirical variance {:.5}", moments.var),
        )),
        _ => {}
    }
    if let Some(ks) = ks {
        checks.push(Check::new(
            format!("{label}_ks"),
            ks.pvalue > 0.001,
            format!("D = {:.5}, p = {:.4}", ks.distance, ks.pvalue),
        ));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Both vectors share the grid value.
    #[default]
    Both,
    /// Only `model_x` moves; `model_y` keeps its own beta.
    X,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub sd: f64,
    pub var: f64,
    /// Bootstrap standard error of `sd`.
    pub sd_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub statistic: Statistic,
    pub points: Vec<SweepPoint>,
    pub spearman: f64,
    pub strictly_increasing: bool,
    #[serde(skip)]
    pub reports: Vec<McReport>,
}

pub const BOOTSTRAP_RESAMPLES: usize = 500;

/// One config per grid value, after checking the grid against the model.
pub fn sweep_configs(
    grid: &[f64],
    base: &ExperimentConfig,
    axis: SweepAxis,
) -> Result<Vec<ExperimentConfig>, McError> {
    if grid.len() < 2 {
        return Err(McError::Config(
            "sweep grid needs at least two points".into(),
        ));
    }
    let ModelSpec::Ising { graph, .. } = &base.model_x else {
        return Err(McError::Config("sweeps run over Ising models".into()));
    };
    if !base.wants(StatKind::Rho) {
        return Err(McError::Config("sweeps need the rho statistic".into()));
    }
    if let GraphFamily::Lattice { dim, .. } = graph {
        let critical = theory::beta_critical(*dim).map_err(|e| McError::Config(e.to_string()))?;
        if let Some(b) = grid.iter().find(|b| !(0.0..critical).contains(*b)) {
            return Err(McError::Config(format!(
                "grid value {b} outside [0, {critical})"
            )));
        }
    }
    Ok(grid
        .iter()
        .map(|&beta| {
            let mut cfg = base.clone();
            cfg.model_x = base.model_x.with_beta(beta);
            if axis == SweepAxis::Both {
                cfg.model_y = base.model_y.with_beta(beta);
            }
            cfg
        })
        .collect())
}

/// Runs `base` at each grid value of beta with the same master seed and
/// ranks the empirical sd of `sqrt(n) rho_n` against beta.
pub fn monotonicity_sweep(
    grid: &[f64],
    base: &ExperimentConfig,
    axis: SweepAxis,
) -> Result<TrendReport, McError> {
    let mut points = Vec::new();
    let mut reports = Vec::new();
    for cfg in sweep_configs(grid, base, axis)? {
        let beta = cfg.model_x.beta().unwrap_or(f64::NAN);
        let report = run_experiment(&cfg)?;
        let values = report.column(|r| r.scaled_rho);
        let m = Moments::of(&values);
        let mut rng = replicate_rng(base.master_seed, 0xb007, points.len());
        let sd_se = stats::bootstrap_se(
            &values,
            BOOTSTRAP_RESAMPLES,
            |v| stats::variance(v).sqrt(),
            &mut rng,
        );
        points.push(SweepPoint {
            beta,
            sd: m.sd,
            var: m.var,
            sd_se,
        });
        reports.push(report);
    }
    let betas: Vec<f64> = points.iter().map(|p| p.beta).collect();
    let sds: Vec<f64> = points.iter().map(|p| p.sd).collect();
    let spearman = stats::spearman(&betas, &sds).unwrap_or(f64::NAN);
    Ok(TrendReport {
        statistic: Statistic::ScaledCorrelation,
        strictly_increasing: sds.windows(2).all(|w| w[1] > w[0]),
        points,
        spearman,
        reports,
    })
}

/// OLS designs: `Sigma_X` eigenvalues `(i/n)^2` against the listed noise spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OlsScenario {
    /// Noise `e^{i / n^0.85}`.
    A,
    /// Noise `e^{i / n}`.
    B,
    /// Noise `e^{-i / n}`.
    C,
    /// Noise `e^{-i / n^0.85}`.
    D,
    /// `Sigma_X = I` with noise `e^{i / n}`.
    E,
}

impl OlsScenario {
    pub const ALL: [OlsScenario; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    pub fn profiles(self) -> (EigenProfile, EigenProfile) {
        let exp = |sign: f64, q: f64| EigenProfile::Exponential { sign, q };
        let x = EigenProfile::Power(2.0);
        match self {
            Self::A => (x, exp(1.0, 0.85)),
            Self::B => (x, exp(1.0, 1.0)),
            Self::C => (x, exp(-1.0, 1.0)),
            Self::D => (x, exp(-1.0, 0.85)),
            Self::E => (EigenProfile::Constant(1.0), exp(1.0, 1.0)),
        }
    }

    pub fn config(self, n: usize, replicates: usize, master_seed: u64) -> ExperimentConfig {
        let (f, g) = self.profiles();
        let model = |profile| {
            ModelSpec::gaussian(CovarianceSpec::Profile {
                profile,
                basis: Basis::CenteringAligned,
            })
        };
        ExperimentConfig {
            name: Some(format!("ols_{self:?}").to_lowercase()),
            n,
            replicates,
            master_seed,
            statistics: vec![StatKind::Ols],
            nominal_alpha: 0.05,
            ols_beta_true: 0.0,
            model_x: model(f),
            model_y: model(g),
        }
    }
}

pub fn ols_coverage_experiment(config: &ExperimentConfig) -> Result<McReport, McError> {
    if !config.wants(StatKind::Ols) {
        return Err(McError::Config(
            "OLS coverage needs the ols statistic".into(),
        ));
    }
    let (ModelSpec::Gaussian { .. }, ModelSpec::Gaussian { .. }) =
        (&config.model_x, &config.model_y)
    else {
        return Err(McError::Config(
            "OLS coverage runs on Gaussian designs".into(),
        ));
    };
    run_experiment(config)
}
