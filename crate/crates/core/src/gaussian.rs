//! Gaussian vectors with covariance `V diag(lambda) V'` and the spectrum of `J Sigma J`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest dimension handed to the dense symmetric eigensolver.
pub const DENSE_EIGEN_CAP: usize = 4000;

/// Eigenvalues of `J Sigma J` in `[-NEGATIVE_EIGEN_TOL, 0)` are rounding noise.
pub const NEGATIVE_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("invalid covariance parameter: {0}")]
    Parameter(String),
    #[error("dense eigendecomposition is limited to n <= {DENSE_EIGEN_CAP}, got n = {0}")]
    TooLarge(usize),
    #[error("cannot read eigenvalue file {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Orthonormal eigenbasis shared by a family of covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// First vector `1/sqrt(n)`, completed by one Householder reflection.
    #[default]
    CenteringAligned,
    /// Haar-distributed basis from the QR factorization of a Gaussian matrix.
    RandomOrthogonal {
        seed: u64,
    },
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpec {
    values: Vec<f64>,
    basis: Basis,
}

impl EigenSpec {
    pub fn new(values: Vec<f64>, basis: Basis) -> Result<Self, GaussianError> {
        if values.is_empty() {
            return Err(GaussianError::Parameter("empty eigenvalue list".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(GaussianError::Parameter(format!(
                "eigenvalue {i} is {v}; all must be finite and >= 0"
            )));
        }
        Ok(EigenSpec { values, basis })
    }

    /// `lambda_i = f(i/n)` for `i = 1..=n`.
    pub fn from_profile(
        n: usize,
        profile: &EigenProfile,
        basis: Basis,
    ) -> Result<Self, GaussianError> {
        Self::new(profile.grid(n)?, basis)
    }

    /// `(1/n) 11'` plus `ceil(n / sigma_sq)` unit eigenvalues orthogonal to `1`,
    /// so that `a_n` is close to `1 / sigma`.
    pub fn sigma_squared(n: usize, sigma_sq: f64) -> Result<Self, GaussianError> {
        if !(sigma_sq >= 1.0 && sigma_sq.is_finite()) {
            return Err(GaussianError::Parameter(format!(
                "sigma^2 must be finite and >= 1, got {sigma_sq}"
            )));
        }
        let ones = ((n as f64 / sigma_sq).ceil() as usize).min(n.saturating_sub(1));
        let mut values = vec![0.0; n];
        values[0] = 1.0;
        values[1..=ones].fill(1.0);
        Self::new(values, Basis::CenteringAligned)
    }

    /// `(1/n) 11'` plus a single tilde eigenvalue `n^exponent` over a flat unit bulk.
    pub fn spike(n: usize, exponent: f64) -> Result<Self, GaussianError> {
        if n < 3 {
            return Err(GaussianError::Parameter(
                "spike spectrum needs n >= 3".into(),
            ));
        }
        let mut values = vec![1.0; n];
        values[1] = (n as f64).powf(exponent);
        Self::new(values, Basis::CenteringAligned)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// `(1 - rho) I + rho 11'`.
    Equicorrelation {
        n: usize,
        rho: f64,
    },
    FromEigenSpec(EigenSpec),
    IdentityScaled {
        n: usize,
        variance: f64,
    },
}

impl CovarianceModel {
    pub fn n(&self) -> usize {
        match self {
            CovarianceModel::Equicorrelation { n, .. }
            | CovarianceModel::IdentityScaled { n, .. } => *n,
            CovarianceModel::FromEigenSpec(spec) => spec.n(),
        }
    }
}

/// Eigenvalue profile `f` on `[0, 1]`, written `power:P`, `exp:Q`, `exp:-Q`,
/// `const:C` or `file:PATH`.
///
/// `exp:Q` is `e^{i / n^Q}` on the grid `x = i/n`, that is `f(x) = exp(x n^{1-Q})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EigenProfile {
    Power(f64),
    Exponential { sign: f64, q: f64 },
    Constant(f64),
    Values { path: PathBuf, values: Vec<f64> },
}

impl EigenProfile {
    /// Value at `x` for a grid of size `n`.
    pub fn eval(&self, x: f64, n: usize) -> f64 {
        match self {
            EigenProfile::Power(p) => x.powf(*p),
            EigenProfile::Exponential { sign, q } => (sign * x * (n as f64).powf(1.0 - q)).exp(),
            EigenProfile::Constant(c) => *c,
            EigenProfile::Values { values, .. } => {
                let m = values.len();
                let k = ((x * m as f64).ceil() as usize).clamp(1, m);
                values[k - 1]
            }
        }
    }

    /// `f(i/n)` for `i = 1..=n`; fails on negative or non-finite values.
    pub fn grid(&self, n: usize) -> Result<Vec<f64>, GaussianError> {
        if let EigenProfile::Values { values, path } = self {
            if values.len() != n {
                return Err(GaussianError::Parameter(format!(
                    "{} holds {} eigenvalues but n = {n}",
                    path.display(),
                    values.len()
                )));
            }
        }
        let out: Vec<f64> = (1..=n).map(|i| self.eval(i as f64 / n as f64, n)).collect();
        match out.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(GaussianError::Parameter(format!(
                "profile {self} is {} at i = {}",
                out[i],
                i + 1
            ))),
            None => Ok(out),
        }
    }

    /// Loads a one-column text file of eigenvalues.
    pub fn from_file(path: impl Into<PathBuf>) -> Result<Self, GaussianError> {
        let path = path.into();
        let io = |reason: String| GaussianError::Io {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(&path).map_err(|e| io(e.to_string()))?;
        let values = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| io(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(io("no values".into()));
        }
        Ok(EigenProfile::Values { path, values })
    }
}

impl fmt::Display for EigenProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EigenProfile::Power(p) => write!(f, "power:{p}"),
            EigenProfile::Exponential { sign, q } if *sign < 0.0 => write!(f, "exp:-{q}"),
            EigenProfile::Exponential { q, .. } => write!(f, "exp:{q}"),
            EigenProfile::Constant(c) => write!(f, "const:{c}"),
            EigenProfile::Values { path, .. } => write!(f, "file:{}", path.display()),
        }
    }
}

impl FromStr for EigenProfile {
    type Err = GaussianError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GaussianError::Parameter(format!("unrecognized eigenvalue profile {s:?}"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let num = || arg.trim().parse::<f64>().map_err(|_| bad());
        let profile = match kind.trim() {
            "power" => EigenProfile::Power(num()?),
            "exp" => {
                let q = num()?;
                EigenProfile::Exponential {
                    sign: if arg.trim().starts_with('-') {
                        -1.0
                    } else {
                        1.0
                    },
                    q: q.abs(),
                }
            }
            "const" => EigenProfile::Constant(num()?),
            "file" => return Self::from_file(arg.trim()),
            _ => return Err(bad()),
        };
        Ok(profile)
    }
}

impl TryFrom<String> for EigenProfile {
    type Error = GaussianError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EigenProfile> for String {
    fn from(p: EigenProfile) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone)]
enum BasisMatrix {
    Identity,
    /// `H = I - 2uu'`, mapping `e_1` to `1/sqrt(n)`.
    Householder(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl BasisMatrix {
    fn build(n: usize, basis: Basis) -> Self {
        match basis {
            Basis::Identity => BasisMatrix::Identity,
            Basis::CenteringAligned => {
                let w = 1.0 / (n as f64).sqrt();
                let mut u = vec![-w; n];
                u[0] += 1.0;
                let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return BasisMatrix::Identity;
                }
                u.iter_mut().for_each(|x| *x /= norm);
                BasisMatrix::Householder(u)
            }
            Basis::RandomOrthogonal { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let qr = g.qr();
                let mut q = qr.q();
                let r = qr.r();
                for j in 0..n {
                    if r[(j, j)] < 0.0 {
                        q.column_mut(j).neg_mut();
                    }
                }
                BasisMatrix::Dense(q)
            }
        }
    }

    /// `x <- V x`.
    fn apply(&self, x: &mut [f64]) {
        match self {
            BasisMatrix::Identity => {}
            BasisMatrix::Householder(u) => reflect(u, x),
            BasisMatrix::Dense(v) => {
                let y = v * nalgebra::DVector::from_column_slice(x);
                x.copy_from_slice(y.as_slice());
            }
        }
    }

    fn dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::identity(n, n);
        if !matches!(self, BasisMatrix::Identity) {
            for mut col in m.column_iter_mut() {
                self.apply(col.as_mut_slice());
            }
        }
        m
    }
}

fn reflect(u: &[f64], x: &mut [f64]) {
    let dot: f64 = u.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    for (xi, ui) in x.iter_mut().zip(u) {
        *xi -= 2.0 * dot * ui;
    }
}

/// An immutable covariance with its eigendecomposition, ready for sampling.
#[derive(Debug, Clone)]
pub struct CovarianceHandle {
    model: CovarianceModel,
    eigenvalues: Vec<f64>,
    sqrt_eigenvalues: Vec<f64>,
    basis: Basis,
    v: BasisMatrix,
}

pub fn build_covariance(model: CovarianceModel) -> Result<CovarianceHandle, GaussianError> {
    let (eigenvalues, basis) = match &model {
        CovarianceModel::Equicorrelation { n, rho } => {
            if !(*rho > 0.0 && *rho < 1.0) {
                return Err(GaussianError::Parameter(format!(
                    "equicorrelation needs 0 < rho < 1, got {rho}"
                )));
            }
            check_n(*n)?;
            let mut values = vec![1.0 - rho; *n];
            values[0] = 1.0 + (*n as f64 - 1.0) * rho;
            (values, Basis::CenteringAligned)
        }
        CovarianceModel::IdentityScaled { n, variance } => {
            if !(*variance > 0.0 && variance.is_finite()) {
                return Err(GaussianError::Parameter(format!(
                    "variance must be finite and > 0, got {variance}"
                )));
            }
            check_n(*n)?;
            (vec![*variance; *n], Basis::Identity)
        }
        CovarianceModel::FromEigenSpec(spec) => {
            check_n(spec.n())?;
            let spec = EigenSpec::new(spec.values.clone(), spec.basis)?;
            (spec.values, spec.basis)
        }
    };
    let n = eigenvalues.len();
    if matches!(basis, Basis::RandomOrthogonal { .. }) && n > DENSE_EIGEN_CAP {
        return Err(GaussianError::TooLarge(n));
    }
    Ok(CovarianceHandle {
        sqrt_eigenvalues: eigenvalues.iter().map(|v| v.sqrt()).collect(),
        v: BasisMatrix::build(n, basis),
        model,
        eigenvalues,
        basis,
    })
}

fn check_n(n: usize) -> Result<(), GaussianError> {
    if n < 2 {
        return Err(GaussianError::Parameter(format!("need n >= 2, got {n}")));
    }
    Ok(())
}

impl CovarianceHandle {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    /// Eigenvalues in basis order; the first pairs with the first basis vector.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Draws `V diag(sqrt(lambda)) z` with `z` standard normal.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .sqrt_eigenvalues
            .iter()
            .map(|s| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.v.apply(&mut x);
        x
    }

    /// Dense `Sigma`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        if let CovarianceModel::Equicorrelation { rho, .. } = self.model {
            return DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho });
        }
        // V D V' built column by column: column j of D V' is lambda .* V'e_j
        let vt = self.v.dense(n).transpose();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut col: Vec<f64> = (0..n).map(|i| self.eigenvalues[i] * vt[(i, j)]).collect();
            self.v.apply(&mut col);
            m.column_mut(j).copy_from_slice(&col);
        }
        m.fill_upper_triangle_with_lower_triangle();
        m
    }
}

pub fn sample_gaussian(handle: &CovarianceHandle, rng: &mut impl Rng) -> Vec<f64> {
    handle.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bulk,
    Spike,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Eigenvalues of `Sigma^{1/2} J Sigma^{1/2}`, non-increasing.
    pub tilde_eigs: Vec<f64>,
    pub a_n: f64,
    pub regime: Regime,
}

impl SpectralSummary {
    pub fn from_tilde(mut tilde_eigs: Vec<f64>) -> Self {
        tilde_eigs.sort_by(|a, b| b.total_cmp(a));
        let n = tilde_eigs.len() as f64;
        let sum: f64 = tilde_eigs.iter().sum();
        let sum_sq = tilde_eigs.iter().map(|v| v * v).sum::<f64>();
        let a_n = if sum_sq > 0.0 {
            sum / (n * sum_sq).sqrt()
        } else {
            0.0
        };
        let l1 = tilde_eigs.first().copied().unwrap_or(0.0);
        let l2 = tilde_eigs.get(1).copied().unwrap_or(0.0);
        let regime = if sum_sq > 0.0 && l1 * l1 <= 0.01 * sum_sq {
            Regime::Bulk
        } else if l1 > 0.0 && l1 >= 100.0 * n * l2 {
            Regime::Spike
        } else {
            Regime::Neither
        };
        SpectralSummary {
            tilde_eigs,
            a_n,
            regime,
        }
    }

    pub fn sum(&self) -> f64 {
        self.tilde_eigs.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.tilde_eigs.iter().map(|v| v * v).sum()
    }

    pub fn largest(&self) -> f64 {
        self.tilde_eigs[0]
    }
}

/// Spectrum of `J Sigma J`, which shares its nonzero eigenvalues with
/// `Sigma^{1/2} J Sigma^{1/2}`.
///
/// When the first basis vector is `1/sqrt(n)` the spectrum is read off the
/// eigenvalues directly; otherwise a dense symmetric eigensolve is used.
pub fn tilde_spectrum(handle: &CovarianceHandle) -> Result<SpectralSummary, GaussianError> {
    match handle.basis {
        Basis::CenteringAligned => {
            let mut tilde = handle.eigenvalues[1..].to_vec();
            tilde.push(0.0);
            Ok(SpectralSummary::from_tilde(tilde))
        }
        Basis::Identity if is_constant(&handle.eigenvalues) => {
            let mut tilde = vec![handle.eigenvalues[0]; handle.n()];
            tilde[0] = 0.0;
            Ok(SpectralSummary::from_tilde(tilde))
        }
        _ => tilde_spectrum_dense(handle),
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Always uses the dense eigensolver on `J Sigma J`.
pub fn tilde_spectrum_dense(handle: &CovarianceHandle) -> Result<SpectralSummary, GaussianError> {
    let n = handle.n();
    if n > DENSE_EIGEN_CAP {
        return Err(GaussianError::TooLarge(n));
    }
    let mut m = handle.matrix();
    let col_means: Vec<f64> = m.column_iter().map(|c| c.mean()).collect();
    let grand = col_means.iter().sum::<f64>() / n as f64;
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] += grand - col_means[i] - col_means[j];
        }
    }
    let eig = SymmetricEigen::new(m).eigenvalues;
    let mut worst = 0.0f64;
    let tilde: Vec<f64> = eig
        .iter()
        .map(|&v| {
            if v < 0.0 {
                worst = worst.min(v);
                0.0
            } else {
                v
            }
        })
        .collect();
    if worst < -NEGATIVE_EIGEN_TOL {
        log::warn!("J Sigma J has eigenvalue {worst:e}; clamped to 0");
    }
    Ok(SpectralSummary::from_tilde(tilde))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub reps: usize,
    /// Mean of `Z'AZ / E(Z'AZ)`.
    pub mean_ratio: f64,
    pub sd_ratio: f64,
    /// `5 sqrt(2 sum lambda^2) / sum lambda`.
    pub bound: f64,
    pub fraction_within_bound: f64,
    /// Empirical sd of the ratio below 0.1.
    pub concentrated: bool,
}

/// Simulates `Z'AZ = sum lambda_i z_i^2` against its mean `sum lambda_i`.
pub fn quadratic_form_concentration_check(
    eigs: &[f64],
    reps: usize,
    rng: &mut impl Rng,
) -> Result<ConcentrationReport, GaussianError> {
    let total: f64 = eigs.iter().sum();
    if eigs.iter().any(|v| v.is_nan() || *v < 0.0) || total <= 0.0 || reps < 2 {
        return Err(GaussianError::Parameter(
            "need nonnegative eigenvalues, not all zero, and reps >= 2".into(),
        ));
    }
    let bound = 5.0 * (2.0 * eigs.iter().map(|v| v * v).sum::<f64>()).sqrt() / total;
    let ratios: Vec<f64> = (0..reps)
        .map(|_| {
            eigs.iter()
                .map(|l| {
                    let z: f64 = rng.sample(StandardNormal);
                    l * z * z
                })
                .sum::<f64>()
                / total
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / reps as f64;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let within = ratios.iter().filter(|r| (*r - 1.0).abs() < bound).count();
    Ok(ConcentrationReport {
        reps,
        mean_ratio: mean,
        sd_ratio: var.sqrt(),
        bound,
        fraction_within_bound: within as f64 / reps as f64,
        concentrated: var.sqrt() < 0.1,
    })
}
