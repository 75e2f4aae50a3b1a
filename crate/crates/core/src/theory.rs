//! Limiting laws for the scaled association statistics and the OLS validity condition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{EigenProfile, Regime, SpectralSummary};
use crate::ising::solve_magnetization;
use crate::stats::standard_normal_cdf;

/// Relative tolerance for calling the OLS condition an equality.
pub const EXACT_TOL: f64 = 1e-9;
/// Intervals of the fine Simpson rule behind the asymptotic OLS verdict.
pub const SIMPSON_INTERVALS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error(
        "beta = {beta} is outside the high-temperature regime beta < {critical} for d = {dim}"
    )]
    OutOfRegime {
        beta: f64,
        critical: f64,
        dim: usize,
    },
    #[error("no closed-form critical point for lattice dimension {0}")]
    UnsupportedDimension(usize),
    #[error("spectrum lies between the bulk and spike regimes; no limit law is attached")]
    NoPrediction,
    #[error("invalid argument: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `sqrt(n) T_n`
    ScaledCovariance,
    /// `sqrt(n) rho_n`
    ScaledCorrelation,
    RawCorrelation,
    /// `n T_n / lambda_1` in the spike regime.
    SpikeCovariance,
    OlsValidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Inflated,
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Normal {
        variance: f64,
    },
    /// Product `A B` of independent `N(0,1)` and `sqrt(chi^2_1)`.
    NormalTimesChi,
    Rademacher,
    Unknown {
        direction: Direction,
    },
}

impl Law {
    pub fn cdf(&self, t: f64) -> Option<f64> {
        match *self {
            Law::Normal { variance } => Some(standard_normal_cdf(t / variance.sqrt())),
            Law::NormalTimesChi => Some(ab_cdf(t)),
            Law::Rademacher | Law::Unknown { .. } => None,
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match *self {
            Law::Normal { variance } => Some(variance),
            Law::NormalTimesChi | Law::Rademacher => Some(1.0),
            Law::Unknown { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPrediction {
    pub statistic: Statistic,
    #[serde(flatten)]
    pub law: Law,
    pub source: String,
}

impl LimitPrediction {
    fn new(statistic: Statistic, law: Law, source: &str) -> Self {
        LimitPrediction {
            statistic,
            law,
            source: source.to_string(),
        }
    }
}

/// Covariance and correlation limits for two independent Curie-Weiss vectors.
pub fn predict_curie_weiss(beta1: f64, beta2: f64) -> (LimitPrediction, LimitPrediction) {
    let (m1, m2) = (solve_magnetization(beta1), solve_magnetization(beta2));
    (
        LimitPrediction::new(
            Statistic::ScaledCovariance,
            Law::Normal {
                variance: (1.0 - m1 * m1) * (1.0 - m2 * m2),
            },
            "Curie-Weiss CLT",
        ),
        LimitPrediction::new(
            Statistic::ScaledCorrelation,
            Law::Normal { variance: 1.0 },
            "Curie-Weiss correlation CLT",
        ),
    )
}

/// Critical inverse temperature of the nearest-neighbour lattice model with
/// couplings `1/(2d)`.
pub fn beta_critical(dim: usize) -> Result<f64, TheoryError> {
    match dim {
        1 => Ok(f64::INFINITY),
        2 => Ok(2.0 * (1.0 + 2f64.sqrt()).ln()),
        d => Err(TheoryError::UnsupportedDimension(d)),
    }
}

/// Directional prediction: variance above 1 unless both vectors are independent.
pub fn predict_lattice(
    beta1: f64,
    beta2: f64,
    dim: usize,
) -> Result<(LimitPrediction, LimitPrediction), TheoryError> {
    let critical = beta_critical(dim)?;
    for beta in [beta1, beta2] {
        if !(0.0..critical).contains(&beta) {
            return Err(TheoryError::OutOfRegime {
                beta,
                critical,
                dim,
            });
        }
    }
    let law = if beta1 == 0.0 && beta2 == 0.0 {
        Law::Normal { variance: 1.0 }
    } else {
        Law::Unknown {
            direction: Direction::Inflated,
        }
    };
    Ok((
        LimitPrediction::new(Statistic::ScaledCovariance, law, "lattice CLT, v^2 > 1"),
        LimitPrediction::new(Statistic::ScaledCorrelation, law, "lattice CLT, v^2 > 1"),
    ))
}

/// Limits for two independent `N(0, Sigma)` vectors from the spectrum of `Sigma~`.
pub fn predict_gaussian(
    spectral: &SpectralSummary,
) -> Result<(LimitPrediction, LimitPrediction), TheoryError> {
    let n = spectral.tilde_eigs.len() as f64;
    match spectral.regime {
        Regime::Bulk => Ok((
            LimitPrediction::new(
                Statistic::ScaledCovariance,
                Law::Normal {
                    variance: spectral.sum_sq() / n,
                },
                "Gaussian bulk regime",
            ),
            LimitPrediction::new(
                Statistic::ScaledCorrelation,
                Law::Normal {
                    variance: 1.0 / (spectral.a_n * spectral.a_n),
                },
                "Gaussian bulk regime",
            ),
        )),
        Regime::Spike => Ok((
            LimitPrediction::new(
                Statistic::SpikeCovariance,
                Law::NormalTimesChi,
                "Gaussian spike regime",
            ),
            LimitPrediction::new(
                Statistic::RawCorrelation,
                Law::Rademacher,
                "Gaussian spike regime",
            ),
        )),
        Regime::Neither => Err(TheoryError::NoPrediction),
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals.max(2).next_multiple_of(2);
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + i as f64 * h)
        })
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `P(AB <= t) = int_0^inf 2 phi(b) Phi(t / b) db`.
pub fn ab_cdf(t: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    if t < 0.0 {
        return 1.0 - ab_cdf(-t);
    }
    let phi = |b: f64| (-0.5 * b * b).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // Phi(t/b) - 1/2 is smooth away from b = 0 and bounded by 1/2.
    let g = |b: f64| {
        if b == 0.0 {
            0.5 * 2.0 * phi(0.0)
        } else {
            2.0 * phi(b) * (standard_normal_cdf(t / b) - 0.5)
        }
    };
    let knee = t.min(9.0);
    0.5 + adaptive_simpson(&g, 0.0, knee, 1e-13) + adaptive_simpson(&g, knee, 40.0, 1e-13)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OlsVerdict {
    Valid,
    Exact,
    Anticonservative,
}

impl OlsVerdict {
    fn classify(int_fg: f64, int_f: f64, int_g: f64) -> Self {
        let prod = int_f * int_g;
        if (int_fg - prod).abs() < EXACT_TOL * prod {
            OlsVerdict::Exact
        } else if int_fg < prod {
            OlsVerdict::Valid
        } else {
            OlsVerdict::Anticonservative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrals {
    pub int_fg: f64,
    pub int_f: f64,
    pub int_g: f64,
    pub verdict: OlsVerdict,
}

impl Integrals {
    fn new(int_fg: f64, int_f: f64, int_g: f64) -> Self {
        Integrals {
            int_fg,
            int_f,
            int_g,
            verdict: OlsVerdict::classify(int_fg, int_f, int_g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsConditionReport {
    pub f: String,
    pub g: String,
    pub n: usize,
    /// Fine Simpson integrals; these decide `verdict`.
    pub int_fg: f64,
    pub int_f: f64,
    pub int_g: f64,
    pub verdict: OlsVerdict,
    /// Riemann sums `(1/n) sum f(i/n)` on the experiment's own grid.
    pub finite_n: Integrals,
}

/// Compares `int fg` with `int f int g` for eigenvalue profiles of `Sigma_X`
/// and `Sigma_eps`.
pub fn ols_condition(
    f: &EigenProfile,
    g: &EigenProfile,
    n: usize,
) -> Result<OlsConditionReport, TheoryError> {
    if n < 1 {
        return Err(TheoryError::Parameter("grid size must be positive".into()));
    }
    let param = |e: crate::gaussian::GaussianError| TheoryError::Parameter(e.to_string());
    let fv = f.grid(n).map_err(param)?;
    let gv = g.grid(n).map_err(param)?;
    let nf = n as f64;
    let finite_n = Integrals::new(
        fv.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>() / nf,
        fv.iter().sum::<f64>() / nf,
        gv.iter().sum::<f64>() / nf,
    );
    let fe = |x: f64| f.eval(x, n);
    let ge = |x: f64| g.eval(x, n);
    let fine = Integrals::new(
        simpson(|x| fe(x) * ge(x), 0.0, 1.0, SIMPSON_INTERVALS),
        simpson(fe, 0.0, 1.0, SIMPSON_INTERVALS),
        simpson(ge, 0.0, 1.0, SIMPSON_INTERVALS),
    );
    Ok(OlsConditionReport {
        f: f.to_string(),
        g: g.to_string(),
        n,
        int_fg: fine.int_fg,
        int_f: fine.int_f,
        int_g: fine.int_g,
        verdict: fine.verdict,
        finite_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(s: &str) -> EigenProfile {
        s.parse().unwrap()
    }

    #[test]
    fn curie_weiss_predictions() {
        let (cov, cor) = predict_curie_weiss(0.5, 0.9);
        assert_eq!(cov.law, Law::Normal { variance: 1.0 });
        assert_eq!(cor.law, Law::Normal { variance: 1.0 });
        let m = solve_magnetization(2.0);
        let v = predict_curie_weiss(2.0, 0.3).0.law.variance().unwrap();
        assert_abs_diff_eq!(v, 1.0 - m * m, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.083_18, epsilon = 1e-4);
        let v22 = predict_curie_weiss(2.0, 2.0).0.law.variance().unwrap();
        assert_abs_diff_eq!(v22, 0.006_919, epsilon = 1e-5);
        assert_eq!(predict_curie_weiss(2.0, 2.0).1.law.variance(), Some(1.0));
    }

    #[test]
    fn curie_weiss_variance_monotone() {
        let grid: Vec<f64> = (0..60).map(|i| i as f64 * 0.05).collect();
        for &b2 in &grid {
            let vs: Vec<f64> = grid
                .iter()
                .map(|&b1| predict_curie_weiss(b1, b2).0.law.variance().unwrap())
                .collect();
            assert!(vs.windows(2).all(|w| w[1] <= w[0]));
            for (&b1, v) in grid.iter().zip(&vs) {
                if b1 <= 1.0 && b2 <= 1.0 {
                    assert_eq!(*v, 1.0);
                } else {
                    assert!(*v < 1.0);
                }
            }
        }
    }

    #[test]
    fn lattice_predictions() {
        assert_eq!(
            predict_lattice(0.0, 0.0, 2).unwrap().0.law,
            Law::Normal { variance: 1.0 }
        );
        assert_eq!(
            predict_lattice(0.5, 0.5, 2).unwrap().1.law,
            Law::Unknown {
                direction: Direction::Inflated
            }
        );
        assert!(predict_lattice(1.7, 0.2, 2).is_ok());
        assert!(matches!(
            predict_lattice(1.8, 0.2, 2),
            Err(TheoryError::OutOfRegime { .. })
        ));
        assert!(predict_lattice(50.0, 0.2, 1).is_ok());
        assert_abs_diff_eq!(beta_critical(2).unwrap(), 1.762_747_174, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_predictions() {
        let equi =
            SpectralSummary::from_tilde(std::iter::repeat_n(0.5, 999).chain([0.0]).collect());
        let (cov, cor) = predict_gaussian(&equi).unwrap();
        assert_abs_diff_eq!(cov.law.variance().unwrap(), 0.25 * 0.999, epsilon = 1e-12);
        assert_abs_diff_eq!(cor.law.variance().unwrap(), 1000.0 / 999.0, epsilon = 1e-12);
        let sigma4 = SpectralSummary::from_tilde(
            std::iter::repeat_n(1.0, 250)
                .chain(std::iter::repeat_n(0.0, 750))
                .collect(),
        );
        assert_abs_diff_eq!(
            predict_gaussian(&sigma4).unwrap().1.law.variance().unwrap(),
            4.0,
            epsilon = 1e-12
        );
        let n = 100;
        let spike = SpectralSummary::from_tilde(
            [(n * n) as f64]
                .into_iter()
                .chain(std::iter::repeat_n(0.0, n - 1))
                .collect(),
        );
        let (cov, cor) = predict_gaussian(&spike).unwrap();
        assert_eq!(cov.law, Law::NormalTimesChi);
        assert_eq!(cor.law, Law::Rademacher);
        let neither = SpectralSummary::from_tilde(vec![1.0, 1.0, 0.0]);
        assert_eq!(predict_gaussian(&neither), Err(TheoryError::NoPrediction));
    }

    /// `K_0(x) = int_0^inf exp(-x cosh s) ds`.
    fn bessel_k0(x: f64) -> f64 {
        adaptive_simpson(&|s: f64| (-x * s.cosh()).exp(), 0.0, 30.0, 1e-14)
    }

    #[test]
    fn ab_cdf_matches_bessel_density() {
        // density of a product of independent standard normals is K_0(|x|) / pi
        for t in [0.1, 0.5, 1.0, 2.0, 4.0] {
            // x = t s^2 removes the logarithmic singularity at 0
            let density = |s: f64| {
                if s == 0.0 {
                    0.0
                } else {
                    bessel_k0(t * s * s) / std::f64::consts::PI * 2.0 * t * s
                }
            };
            let mass = adaptive_simpson(&density, 0.0, 1.0, 1e-10);
            assert_abs_diff_eq!(ab_cdf(t) - 0.5, mass, epsilon = 2e-6);
        }
        assert_eq!(ab_cdf(0.0), 0.5);
        assert_abs_diff_eq!(ab_cdf(-1.3), 1.0 - ab_cdf(1.3), epsilon = 1e-15);
        assert!(ab_cdf(30.0) > 1.0 - 1e-10);
    }

    #[test]
    fn quadrature() {
        assert_abs_diff_eq!(simpson(|x| x * x, 0.0, 1.0, 10), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12),
            2.0,
            epsilon = 1e-11
        );
    }

    #[test]
    fn ols_condition_examples() {
        let e = std::f64::consts::E;
        let r = ols_condition(&p("const:2.5"), &p("exp:1"), 200).unwrap();
        assert_eq!(r.verdict, OlsVerdict::Exact);
        assert_eq!(r.finite_n.verdict, OlsVerdict::Exact);
        let r = ols_condition(&p("power:2"), &p("exp:1"), 200).unwrap();
        assert_abs_diff_eq!(r.int_fg, e - 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.int_f * r.int_g, (e - 1.0) / 3.0, epsilon = 1e-10);
        assert_eq!(r.verdict, OlsVerdict::Anticonservative);
        let r = ols_condition(&p("power:2"), &p("exp:-1"), 200).unwrap();
        assert_abs_diff_eq!(r.int_fg, 2.0 - 5.0 / e, epsilon = 1e-10);
        assert_abs_diff_eq!(r.int_f * r.int_g, (1.0 - 1.0 / e) / 3.0, epsilon = 1e-10);
        assert_eq!(r.verdict, OlsVerdict::Valid);
        assert!(ols_condition(&p("const:-1"), &p("exp:1"), 10).is_err());
    }

    #[test]
    fn ols_condition_symmetry_scaling_and_monotone_pairs() {
        let increasing = ["power:1", "power:2", "power:0.5", "exp:1", "exp:0.85"];
        for a in increasing {
            for b in increasing {
                let r = ols_condition(&p(a), &p(b), 200).unwrap();
                assert_eq!(r.verdict, OlsVerdict::Anticonservative, "{a} {b}");
                let s = ols_condition(&p(b), &p(a), 200).unwrap();
                assert_eq!(r.verdict, s.verdict);
                assert_abs_diff_eq!(r.int_fg, s.int_fg, epsilon = 1e-12);
            }
        }
        for (a, b) in [("power:2", "exp:-1"), ("power:2", "exp:1")] {
            let base = ols_condition(&p(a), &p(b), 200).unwrap().verdict;
            let scaled = EigenProfile::Values {
                path: "scaled".into(),
                values: p(a).grid(200).unwrap().iter().map(|v| 7.0 * v).collect(),
            };
            assert_eq!(
                ols_condition(&scaled, &p(b), 200).unwrap().finite_n.verdict,
                base
            );
        }
    }
}
