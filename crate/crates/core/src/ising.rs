//! Sampling from `P(x) ∝ exp((beta / 2) x' Q x)` on `{-1, +1}^n`.

use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{Coupling, FamilyTag, InteractionMatrix};

/// Largest model the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_MAX_N: usize = 20;

pub const WOLFF_DEFAULT_BURN_IN: usize = 200;
pub const GLAUBER_SUBCRITICAL_BURN_IN: usize = 500;
pub const GLAUBER_SUPERCRITICAL_BURN_IN: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsingError {
    #[error("invalid Ising parameter: {0}")]
    Parameter(String),
    #[error("the Wolff sampler supports lattice dimensions 1-3, got {0}")]
    UnsupportedDimension(usize),
    #[error("sampler {sampler} cannot run on a {family} interaction matrix")]
    WrongFamily {
        sampler: &'static str,
        family: String,
    },
    #[error("exhaustive enumeration is limited to n <= {BRUTE_FORCE_MAX_N}, got n = {0}")]
    TooLarge(usize),
}

/// One configuration in `{-1, +1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinVector(Vec<i8>);

impl SpinVector {
    pub fn new(spins: Vec<i8>) -> Result<Self, IsingError> {
        if let Some(bad) = spins.iter().find(|s| s.abs() != 1) {
            return Err(IsingError::Parameter(format!(
                "spin value {bad} is not +-1"
            )));
        }
        Ok(SpinVector(spins))
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().map(|&s| s as f64).sum::<f64>() / self.0.len() as f64
    }

    pub fn plus_count(&self) -> usize {
        self.0.iter().filter(|&&s| s > 0).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }

    /// Bit `i` is set when spin `i` is `+1`.
    pub fn state_index(&self) -> usize {
        assert!(self.0.len() < usize::BITS as usize);
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .fold(0, |acc, (i, _)| acc | (1 << i))
    }

    pub fn from_state_index(n: usize, index: usize) -> Self {
        SpinVector(
            (0..n)
                .map(|i| if index >> i & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }
}

impl From<SpinVector> for Vec<i8> {
    fn from(v: SpinVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone)]
pub struct IsingModel {
    q: Arc<InteractionMatrix>,
    beta: f64,
}

impl IsingModel {
    pub fn new(q: Arc<InteractionMatrix>, beta: f64) -> Result<Self, IsingError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(IsingError::Parameter(format!(
                "inverse temperature must be finite and >= 0, got {beta}"
            )));
        }
        Ok(IsingModel { q, beta })
    }

    pub fn interaction(&self) -> &InteractionMatrix {
        &self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.q.n()
    }

    /// Unnormalized log-density `(beta / 2) x' Q x`.
    pub fn log_weight(&self, x: &[i8]) -> f64 {
        0.5 * self.beta * self.q.quadratic_form(x)
    }
}

/// Initial state of a Glauber chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlauberStart {
    #[default]
    Random,
    AllPlus,
    AllMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SamplerMethod {
    /// Exact draw through the magnetization distribution (Curie-Weiss only).
    ExactCw,
    /// Wolff cluster flips from a uniform random start (lattices only).
    ///
    /// Burn-in lasts at least `burn_in_clusters` flips and until
    /// `min_burn_in_sweeps * n` spins have been flipped in total.
    Wolff {
        #[serde(default = "defaults::wolff_burn_in")]
        burn_in_clusters: usize,
        #[serde(default = "defaults::wolff_between")]
        clusters_between_samples: usize,
        #[serde(default = "defaults::wolff_min_sweeps")]
        min_burn_in_sweeps: usize,
    },
    /// Heat-bath updates in a fresh random order every sweep.
    Glauber {
        /// Defaults to 500 sweeps for `beta <= 1` and 2000 above.
        #[serde(default)]
        burn_in_sweeps: Option<usize>,
        #[serde(default = "defaults::one")]
        sweeps_between_samples: usize,
        #[serde(default)]
        start: GlauberStart,
    },
    /// Gibbs alternation through the Gaussian auxiliary variable of the
    /// Curie-Weiss model; a cross-check for [`SamplerMethod::ExactCw`].
    AuxiliaryCw {
        #[serde(default = "defaults::aux_burn_in")]
        burn_in_steps: usize,
        #[serde(default = "defaults::one")]
        steps_between_samples: usize,
    },
    /// Inverse-CDF draw from the enumerated distribution, `n <= 20`.
    BruteForce,
}

mod defaults {
    pub fn wolff_burn_in() -> usize {
        super::WOLFF_DEFAULT_BURN_IN
    }
    pub fn wolff_between() -> usize {
        10
    }
    pub fn wolff_min_sweeps() -> usize {
        20
    }
    pub fn aux_burn_in() -> usize {
        100
    }
    pub fn one() -> usize {
        1
    }
}

impl SamplerMethod {
    pub fn wolff() -> Self {
        SamplerMethod::Wolff {
            burn_in_clusters: defaults::wolff_burn_in(),
            clusters_between_samples: defaults::wolff_between(),
            min_burn_in_sweeps: defaults::wolff_min_sweeps(),
        }
    }

    pub fn glauber() -> Self {
        SamplerMethod::Glauber {
            burn_in_sweeps: None,
            sweeps_between_samples: 1,
            start: GlauberStart::Random,
        }
    }

    /// Exact sampler for Curie-Weiss, Wolff for lattices, Glauber otherwise.
    pub fn default_for(family: FamilyTag) -> Self {
        match family {
            FamilyTag::CurieWeiss => SamplerMethod::ExactCw,
            FamilyTag::Lattice { .. } => Self::wolff(),
            _ => Self::glauber(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerMethod::ExactCw => "exact_cw",
            SamplerMethod::Wolff { .. } => "wolff",
            SamplerMethod::Glauber { .. } => "glauber",
            SamplerMethod::AuxiliaryCw { .. } => "auxiliary_cw",
            SamplerMethod::BruteForce => "brute_force",
        }
    }

    /// True for the MCMC methods; exact methods draw independent samples.
    pub fn is_mcmc(&self) -> bool {
        matches!(
            self,
            SamplerMethod::Wolff { .. }
                | SamplerMethod::Glauber { .. }
                | SamplerMethod::AuxiliaryCw { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerPlan {
    #[serde(flatten)]
    pub method: SamplerMethod,
    pub seed: u64,
}

/// Positive root of `m = tanh(beta m)`, or 0 when `beta <= 1`.
pub fn solve_magnetization(beta: f64) -> f64 {
    assert!(beta >= 0.0, "beta must be non-negative");
    if beta <= 1.0 {
        return 0.0;
    }
    let g = |m: f64| (beta * m).tanh() - m;
    let (mut lo, mut hi) = (1e-12, 1.0);
    // g(lo) > 0 > g(hi)
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact distribution of the number of `+1` spins in the Curie-Weiss model.
pub fn curie_weiss_count_pmf(n: usize, beta: f64) -> Vec<f64> {
    let nf = n as f64;
    let mut log_binom = 0.0;
    let mut logw = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            log_binom += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let s = 2.0 * k as f64 - nf;
        logw.push(log_binom + beta * s * s / (2.0 * nf));
    }
    normalize_log_weights(&logw)
}

fn normalize_log_weights(logw: &[f64]) -> Vec<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn draw_index(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Exact Curie-Weiss sampler with the count distribution cached.
#[derive(Debug, Clone)]
pub struct CurieWeissSampler {
    n: usize,
    cdf: Vec<f64>,
}

impl CurieWeissSampler {
    pub fn new(n: usize, beta: f64) -> Self {
        assert!(n >= 2, "Curie-Weiss needs n >= 2");
        CurieWeissSampler {
            n,
            cdf: cumulative(&curie_weiss_count_pmf(n, beta)),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> SpinVector {
        let k = draw_index(&self.cdf, rng);
        let mut spins = vec![-1i8; self.n];
        for i in index::sample(rng, self.n, k) {
            spins[i] = 1;
        }
        SpinVector(spins)
    }
}

pub fn sample_curie_weiss(n: usize, beta: f64, rng: &mut impl Rng) -> SpinVector {
    CurieWeissSampler::new(n, beta).sample(rng)
}

/// Exact probabilities of all `2^n` states, indexed by [`SpinVector::state_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct StatePmf {
    n: usize,
    probs: Vec<f64>,
}

impl StatePmf {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &SpinVector) -> f64 {
        self.probs[x.state_index()]
    }

    /// Distribution of the number of `+1` spins.
    pub fn count_pmf(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 1];
        for (state, p) in self.probs.iter().enumerate() {
            out[state.count_ones() as usize] += p;
        }
        out
    }

    /// Relative frequencies of sampled states.
    pub fn empirical<'a>(n: usize, samples: impl IntoIterator<Item = &'a SpinVector>) -> StatePmf {
        let mut counts = vec![0.0; 1 << n];
        let mut total = 0.0;
        for s in samples {
            counts[s.state_index()] += 1.0;
            total += 1.0;
        }
        counts.iter_mut().for_each(|c| *c /= total);
        StatePmf { n, probs: counts }
    }

    pub fn from_counts(n: usize, counts: &[u64]) -> StatePmf {
        assert_eq!(counts.len(), 1 << n);
        let total: u64 = counts.iter().sum();
        StatePmf {
            n,
            probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        }
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Exhaustive evaluation of the model distribution; a test oracle.
pub fn brute_force_pmf(model: &IsingModel) -> Result<StatePmf, IsingError> {
    let n = model.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(IsingError::TooLarge(n));
    }
    let logw: Vec<f64> = (0..1usize << n)
        .map(|s| model.log_weight(SpinVector::from_state_index(n, s).spins()))
        .collect();
    Ok(StatePmf {
        n,
        probs: normalize_log_weights(&logw),
    })
}

fn random_spins(n: usize, rng: &mut impl Rng) -> Vec<i8> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Wolff cluster dynamics on a sparse interaction matrix.
#[derive(Debug, Clone)]
pub struct WolffChain {
    q: Arc<InteractionMatrix>,
    activation: Vec<f64>,
    spins: Vec<i8>,
    stack: Vec<u32>,
}

impl WolffChain {
    pub fn new(model: &IsingModel, rng: &mut impl Rng) -> Result<Self, IsingError> {
        let q = Arc::clone(&model.q);
        match q.family() {
            FamilyTag::Lattice { dim } if (1..=3).contains(&dim) => {}
            FamilyTag::Lattice { dim } => return Err(IsingError::UnsupportedDimension(dim)),
            other => {
                return Err(IsingError::WrongFamily {
                    sampler: "wolff",
                    family: other.to_string(),
                })
            }
        }
        let Coupling::Sparse { weights, .. } = q.coupling() else {
            unreachable!("lattices are stored as neighbour lists")
        };
        let activation = weights
            .iter()
            .map(|w| -(-2.0 * model.beta * w).exp_m1())
            .collect();
        let spins = random_spins(q.n(), rng);
        Ok(WolffChain {
            q,
            activation,
            spins,
            stack: Vec::new(),
        })
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Grows and flips one cluster; returns its size.
    pub fn flip_cluster(&mut self, rng: &mut impl Rng) -> usize {
        let Coupling::Sparse {
            offsets, neighbors, ..
        } = self.q.coupling()
        else {
            unreachable!()
        };
        let seed = rng.random_range(0..self.spins.len());
        let s = self.spins[seed];
        self.spins[seed] = -s;
        self.stack.push(seed as u32);
        let mut size = 1;
        while let Some(i) = self.stack.pop() {
            let i = i as usize;
            let edges = offsets[i]..offsets[i + 1];
            for (&j, &p) in neighbors[edges.clone()].iter().zip(&self.activation[edges]) {
                let j = j as usize;
                if self.spins[j] == s && rng.random::<f64>() < p {
                    self.spins[j] = -s;
                    self.stack.push(j as u32);
                    size += 1;
                }
            }
        }
        size
    }

    pub fn burn_in(&mut self, clusters: usize, min_sweeps: usize, rng: &mut impl Rng) {
        let target = min_sweeps.saturating_mul(self.spins.len());
        let (mut done, mut flipped) = (0usize, 0usize);
        while done < clusters || flipped < target {
            flipped += self.flip_cluster(rng);
            done += 1;
        }
    }
}

#[derive(Debug, Clone)]
enum FieldCache {
    /// `h = Q x` for neighbour-list and dense storage.
    Fields(Vec<f64>),
    /// Spin sums per block.
    Blocks(Vec<f64>),
}

/// Single-site heat-bath dynamics with incrementally maintained fields.
#[derive(Debug, Clone)]
pub struct GlauberChain {
    q: Arc<InteractionMatrix>,
    beta: f64,
    spins: Vec<i8>,
    cache: FieldCache,
    order: Vec<u32>,
}

impl GlauberChain {
    pub fn new(model: &IsingModel, start: GlauberStart, rng: &mut impl Rng) -> Self {
        let n = model.n();
        let spins = match start {
            GlauberStart::Random => random_spins(n, rng),
            GlauberStart::AllPlus => vec![1; n],
            GlauberStart::AllMinus => vec![-1; n],
        };
        let mut chain = GlauberChain {
            q: Arc::clone(&model.q),
            beta: model.beta,
            spins,
            cache: FieldCache::Fields(Vec::new()),
            order: (0..n as u32).collect(),
        };
        chain.refresh();
        chain
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Recomputes the cached fields from the current state.
    fn refresh(&mut self) {
        self.cache = match self.q.coupling() {
            Coupling::Block {
                groups,
                group_count,
                ..
            } => {
                let mut sums = vec![0.0; *group_count];
                for (i, &g) in groups.iter().enumerate() {
                    sums[g as usize] += self.spins[i] as f64;
                }
                FieldCache::Blocks(sums)
            }
            _ => FieldCache::Fields(
                (0..self.spins.len())
                    .map(|i| self.q.local_field(i, &self.spins))
                    .collect(),
            ),
        };
    }

    fn field(&self, i: usize) -> f64 {
        match (&self.cache, self.q.coupling()) {
            (
                FieldCache::Blocks(sums),
                Coupling::Block {
                    groups,
                    group_count,
                    block,
                },
            ) => {
                let gi = groups[i] as usize;
                let row = &block[gi * group_count..(gi + 1) * group_count];
                row.iter().zip(sums).map(|(b, s)| b * s).sum::<f64>()
                    - row[gi] * self.spins[i] as f64
            }
            (FieldCache::Fields(h), _) => h[i],
            _ => unreachable!("cache matches storage"),
        }
    }

    fn update_site(&mut self, i: usize, u: f64) {
        let p_plus = sigmoid(2.0 * self.beta * self.field(i));
        let new: i8 = if u < p_plus { 1 } else { -1 };
        if new == self.spins[i] {
            return;
        }
        self.spins[i] = new;
        let delta = 2.0 * new as f64;
        match (&mut self.cache, self.q.coupling()) {
            (FieldCache::Blocks(sums), Coupling::Block { groups, .. }) => {
                sums[groups[i] as usize] += delta;
            }
            (
                FieldCache::Fields(h),
                Coupling::Sparse {
                    offsets,
                    neighbors,
                    weights,
                },
            ) => {
                for e in offsets[i]..offsets[i + 1] {
                    h[neighbors[e] as usize] += weights[e] * delta;
                }
            }
            (FieldCache::Fields(h), Coupling::Dense { values }) => {
                let n = h.len();
                for (hk, q) in h.iter_mut().zip(&values[i * n..(i + 1) * n]) {
                    *hk += q * delta;
                }
            }
            _ => unreachable!("cache matches storage"),
        }
    }

    pub fn sweep(&mut self, rng: &mut impl Rng) {
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(rng);
        for &i in &order {
            let u = rng.random::<f64>();
            self.update_site(i as usize, u);
        }
        self.order = order;
    }

    pub fn run(&mut self, sweeps: usize, rng: &mut impl Rng) {
        for _ in 0..sweeps {
            self.sweep(rng);
        }
        self.refresh();
    }
}

/// Default burn-in for Glauber chains at inverse temperature `beta`.
pub fn glauber_default_burn_in(beta: f64) -> usize {
    if beta <= 1.0 {
        GLAUBER_SUBCRITICAL_BURN_IN
    } else {
        GLAUBER_SUPERCRITICAL_BURN_IN
    }
}

/// Data-augmentation chain for Curie-Weiss: `Z | X ~ N(mean(X), 1/(n beta))`,
/// then the spins are i.i.d. given `Z` with `P(+1) = sigmoid(2 beta Z)`.
#[derive(Debug, Clone)]
pub struct AuxiliaryChain {
    beta: f64,
    spins: Vec<i8>,
}

impl AuxiliaryChain {
    pub fn new(model: &IsingModel, rng: &mut impl Rng) -> Result<Self, IsingError> {
        if model.q.family() != FamilyTag::CurieWeiss {
            return Err(IsingError::WrongFamily {
                sampler: "auxiliary_cw",
                family: model.q.family().to_string(),
            });
        }
        Ok(AuxiliaryChain {
            beta: model.beta,
            spins: random_spins(model.n(), rng),
        })
    }

    pub fn step(&mut self, rng: &mut impl Rng) {
        let n = self.spins.len();
        if self.beta == 0.0 {
            self.spins = random_spins(n, rng);
            return;
        }
        let mean = self.spins.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
        let sd = (1.0 / (n as f64 * self.beta)).sqrt();
        let z = Normal::new(mean, sd).expect("finite sd").sample(rng);
        let p_plus = sigmoid(2.0 * self.beta * z);
        for s in &mut self.spins {
            *s = if rng.random::<f64>() < p_plus { 1 } else { -1 };
        }
    }
}

#[derive(Debug, Clone)]
enum ChainState {
    Exact(CurieWeissSampler),
    Enumerated {
        n: usize,
        cdf: Vec<f64>,
    },
    Wolff {
        chain: WolffChain,
        between: usize,
        burn: (usize, usize),
    },
    Glauber {
        chain: GlauberChain,
        between: usize,
        burn: usize,
    },
    Auxiliary {
        chain: AuxiliaryChain,
        between: usize,
        burn: usize,
    },
}

/// A stream of spin vectors from one model under one sampler plan.
///
/// MCMC streams burn in before the first draw and thin between later draws.
#[derive(Debug, Clone)]
pub struct IsingSampler {
    state: ChainState,
    rng: ChaCha8Rng,
    started: bool,
}

impl IsingSampler {
    pub fn new(model: &IsingModel, plan: &SamplerPlan) -> Result<Self, IsingError> {
        Self::with_rng(model, &plan.method, ChaCha8Rng::seed_from_u64(plan.seed))
    }

    pub fn with_rng(
        model: &IsingModel,
        method: &SamplerMethod,
        mut rng: ChaCha8Rng,
    ) -> Result<Self, IsingError> {
        let family = model.q.family();
        let state = match method {
            SamplerMethod::ExactCw => {
                if family != FamilyTag::CurieWeiss {
                    return Err(IsingError::WrongFamily {
                        sampler: "exact_cw",
                        family: family.to_string(),
                    });
                }
                ChainState::Exact(CurieWeissSampler::new(model.n(), model.beta))
            }
            SamplerMethod::BruteForce => ChainState::Enumerated {
                n: model.n(),
                cdf: cumulative(brute_force_pmf(model)?.probs()),
            },
            SamplerMethod::Wolff {
                burn_in_clusters,
                clusters_between_samples,
                min_burn_in_sweeps,
            } => ChainState::Wolff {
                chain: WolffChain::new(model, &mut rng)?,
                between: (*clusters_between_samples).max(1),
                burn: (*burn_in_clusters, *min_burn_in_sweeps),
            },
            SamplerMethod::Glauber {
                burn_in_sweeps,
                sweeps_between_samples,
                start,
            } => ChainState::Glauber {
                chain: GlauberChain::new(model, *start, &mut rng),
                between: (*sweeps_between_samples).max(1),
                burn: burn_in_sweeps.unwrap_or_else(|| glauber_default_burn_in(model.beta)),
            },
            SamplerMethod::AuxiliaryCw {
                burn_in_steps,
                steps_between_samples,
            } => ChainState::Auxiliary {
                chain: AuxiliaryChain::new(model, &mut rng)?,
                between: (*steps_between_samples).max(1),
                burn: *burn_in_steps,
            },
        };
        Ok(IsingSampler {
            state,
            rng,
            started: false,
        })
    }

    pub fn next_sample(&mut self) -> SpinVector {
        let first = !self.started;
        self.started = true;
        let rng = &mut self.rng;
        match &mut self.state {
            ChainState::Exact(s) => s.sample(rng),
            ChainState::Enumerated { n, cdf } => {
                SpinVector::from_state_index(*n, draw_index(cdf, rng))
            }
            ChainState::Wolff {
                chain,
                between,
                burn,
            } => {
                if first {
                    chain.burn_in(burn.0, burn.1, rng);
                } else {
                    for _ in 0..*between {
                        chain.flip_cluster(rng);
                    }
                }
                SpinVector(chain.spins.clone())
            }
            ChainState::Glauber {
                chain,
                between,
                burn,
            } => {
                chain.run(if first { *burn } else { *between }, rng);
                SpinVector(chain.spins.clone())
            }
            ChainState::Auxiliary {
                chain,
                between,
                burn,
            } => {
                for _ in 0..if first { *burn } else { *between } {
                    chain.step(rng);
                }
                SpinVector(chain.spins.clone())
            }
        }
    }
}

impl Iterator for IsingSampler {
    type Item = SpinVector;

    fn next(&mut self) -> Option<SpinVector> {
        Some(self.next_sample())
    }
}

/// One lattice draw after Wolff burn-in.
pub fn sample_lattice_wolff(
    model: &IsingModel,
    method: &SamplerMethod,
    rng: &mut impl Rng,
) -> Result<SpinVector, IsingError> {
    let SamplerMethod::Wolff {
        burn_in_clusters,
        min_burn_in_sweeps,
        ..
    } = method
    else {
        return Err(IsingError::Parameter(format!(
            "expected a Wolff plan, got {}",
            method.name()
        )));
    };
    let mut chain = WolffChain::new(model, rng)?;
    chain.burn_in(*burn_in_clusters, *min_burn_in_sweeps, rng);
    Ok(SpinVector(chain.spins))
}

/// One draw after Glauber burn-in from the given start.
pub fn sample_glauber(
    model: &IsingModel,
    burn_in_sweeps: usize,
    start: GlauberStart,
    rng: &mut impl Rng,
) -> SpinVector {
    let mut chain = GlauberChain::new(model, start, rng);
    chain.run(burn_in_sweeps, rng);
    SpinVector(chain.spins)
}
