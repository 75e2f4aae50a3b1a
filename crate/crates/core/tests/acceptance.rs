//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Run a subset with `cargo test -p nonsense-core --test acceptance -- 2 6`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nonsense_core::gaussian::{
    build_covariance, quadratic_form_concentration_check, tilde_spectrum, tilde_spectrum_dense,
    Basis, CovarianceModel, EigenSpec,
};
use nonsense_core::graphs::{build_interaction, check_assumptions, GraphFamily};
use nonsense_core::ising::{
    brute_force_pmf, total_variation, IsingModel, IsingSampler, SamplerMethod, SamplerPlan,
    SpinVector, StatePmf,
};
use nonsense_core::montecarlo::{
    ks_test, ks_test_law, monotonicity_sweep, ols_coverage_experiment, run_experiment,
    ExperimentConfig, McReport, OlsScenario, SweepAxis,
};
use nonsense_core::presets::{
    curie_weiss_config, dense_config, dense_families, equicorrelation_config, lattice_base,
    sigma_squared_config, spike_config, CURIE_WEISS_PAIRS, DEFAULT_SEED, LATTICE_GRID,
};
use nonsense_core::stats::{
    ols_fit, sample_correlation, sample_covariance, standard_normal_cdf, variance,
};
use nonsense_core::theory::{
    ab_cdf, ols_condition, predict_curie_weiss, Law, OlsVerdict, Statistic,
};

const SEED: u64 = DEFAULT_SEED;

/// One sub-check inside a criterion.
struct Item {
    ok: bool,
    text: String,
}

fn item(ok: bool, text: impl Into<String>) -> Item {
    Item {
        ok,
        text: text.into(),
    }
}

fn rel_within(label: &str, empirical: f64, target: f64, rel: f64) -> Item {
    let err = (empirical - target).abs() / target;
    item(
        err <= rel,
        format!(
            "{label} {empirical:.5} vs {target:.5} ({:.1}% of {:.0}%)",
            100.0 * err,
            100.0 * rel
        ),
    )
}

fn var_of(r: &McReport, s: Statistic) -> f64 {
    r.summary(s).unwrap().moments.var
}

fn oracle_tv(model: &IsingModel, method: SamplerMethod, samples: usize, seed: u64) -> f64 {
    let n = model.n();
    let exact = brute_force_pmf(model).unwrap();
    let mut counts = vec![0u64; 1 << n];
    let mut stream = IsingSampler::new(model, &SamplerPlan { method, seed }).unwrap();
    for _ in 0..samples {
        counts[stream.next_sample().state_index()] += 1;
    }
    total_variation(exact.probs(), StatePmf::from_counts(n, &counts).probs())
}

fn criterion_1() -> Vec<Item> {
    let mut out = Vec::new();
    let glauber = SamplerMethod::Glauber {
        burn_in_sweeps: None,
        sweeps_between_samples: 5,
        start: Default::default(),
    };
    let wolff = SamplerMethod::Wolff {
        burn_in_clusters: 200,
        clusters_between_samples: 5,
        min_burn_in_sweeps: 20,
    };
    for n in [4usize, 6] {
        let lattice = if n == 4 {
            GraphFamily::Lattice { side: 2, dim: 2 }
        } else {
            GraphFamily::Lattice { side: 6, dim: 1 }
        };
        for beta in [0.5, 1.5] {
            let cw = IsingModel::new(
                Arc::new(build_interaction(&GraphFamily::CurieWeiss { n }).unwrap()),
                beta,
            )
            .unwrap();
            let lat =
                IsingModel::new(Arc::new(build_interaction(&lattice).unwrap()), beta).unwrap();
            for (name, model, method, samples) in [
                ("exact_cw", &cw, SamplerMethod::ExactCw, 200_000),
                ("glauber", &cw, glauber.clone(), 200_000),
                ("wolff", &lat, wolff.clone(), 200_000),
            ] {
                let tv = oracle_tv(model, method, samples, SEED + n as u64);
                out.push(item(
                    tv < 0.02,
                    format!("{name} n={n} beta={beta} TV {tv:.4}"),
                ));
            }
        }
    }
    out
}

fn criterion_2() -> Vec<Item> {
    let mut out = Vec::new();
    for (b1, b2) in CURIE_WEISS_PAIRS {
        let r = run_experiment(&curie_weiss_config(b1, b2, SEED)).unwrap();
        let target = predict_curie_weiss(b1, b2).0.law.variance().unwrap();
        let tag = format!("({b1},{b2})");
        out.push(rel_within(
            &format!("{tag} Var sqrt(n)T"),
            var_of(&r, Statistic::ScaledCovariance),
            target,
            0.25,
        ));
        out.push(rel_within(
            &format!("{tag} Var sqrt(n)rho"),
            var_of(&r, Statistic::ScaledCorrelation),
            1.0,
            0.15,
        ));
        let t = r.column(|x| x.scaled_t);
        let ks = ks_test_law(&t, &Law::Normal { variance: target }).unwrap();
        out.push(item(
            ks.pvalue > 0.001,
            format!("{tag} KS T p={:.4}", ks.pvalue),
        ));
        let rho = r.column(|x| x.scaled_rho);
        let ks = ks_test_law(&rho, &Law::Normal { variance: 1.0 }).unwrap();
        out.push(item(
            ks.pvalue > 0.001,
            format!("{tag} KS rho p={:.4}", ks.pvalue),
        ));
    }
    out
}

fn criterion_3() -> Vec<Item> {
    let trend =
        monotonicity_sweep(&LATTICE_GRID, &lattice_base(500, SEED), SweepAxis::Both).unwrap();
    let mut out: Vec<Item> = trend
        .points
        .iter()
        .filter(|p| p.beta >= 0.8)
        .map(|p| {
            item(
                p.var > 1.1,
                format!("beta={} Var {:.4} > 1.1", p.beta, p.var),
            )
        })
        .collect();
    let sds: Vec<String> = trend
        .points
        .iter()
        .map(|p| format!("{:.4}", p.sd))
        .collect();
    out.push(item(
        trend.spearman == 1.0,
        format!("Spearman {:.2} (sds {})", trend.spearman, sds.join(" ")),
    ));
    out
}

fn criterion_4() -> Vec<Item> {
    let mut out = Vec::new();
    let m = nonsense_core::ising::solve_magnetization(1.5);
    for graph in dense_families() {
        let tag = graph.tag().to_string();
        let r = run_experiment(&dense_config(&graph, 0.5, SEED)).unwrap();
        out.push(rel_within(
            &format!("{tag} b=0.5 Var T"),
            var_of(&r, Statistic::ScaledCovariance),
            1.0,
            0.25,
        ));
        out.push(rel_within(
            &format!("{tag} b=0.5 Var rho"),
            var_of(&r, Statistic::ScaledCorrelation),
            1.0,
            0.15,
        ));
        let r = run_experiment(&dense_config(&graph, 1.5, SEED)).unwrap();
        out.push(rel_within(
            &format!("{tag} b=1.5 Var T"),
            var_of(&r, Statistic::ScaledCovariance),
            (1.0 - m * m).powi(2),
            0.35,
        ));
        out.push(item(
            !r.heuristics.is_empty(),
            format!("{tag} b=1.5 heuristic flagged"),
        ));
    }
    out
}

fn criterion_5() -> Vec<Item> {
    let r = run_experiment(&sigma_squared_config(SEED)).unwrap();
    let a_n = r.spectrum.as_ref().unwrap().a_n;
    let scaled: Vec<f64> = r.column(|x| x.scaled_rho.map(|v| v * a_n));
    let ks = ks_test(&scaled, standard_normal_cdf).unwrap();
    vec![
        rel_within(
            "Var sqrt(n)rho",
            var_of(&r, Statistic::ScaledCorrelation),
            4.0,
            0.20,
        ),
        item(
            ks.pvalue > 0.001,
            format!("KS rho a_n p={:.4} (a_n={a_n:.4})", ks.pvalue),
        ),
    ]
}

fn criterion_6() -> Vec<Item> {
    let r = run_experiment(&spike_config(SEED)).unwrap();
    let rho = r.column(|x| x.rho_n);
    let frac = rho.iter().filter(|v| v.abs() > 0.8).count() as f64 / rho.len() as f64;
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    let l1 = r.spectrum.as_ref().unwrap().largest_tilde;
    let n = r.config.n as f64;
    let spiked: Vec<f64> = r.column(|x| x.t_n.map(|t| n * t / l1));
    let ks = ks_test(&spiked, ab_cdf).unwrap();
    vec![
        item(frac >= 0.90, format!("P(|rho|>0.8) {frac:.4}")),
        item(mean.abs() <= 0.06, format!("mean rho {mean:.4}")),
        item(
            ks.pvalue > 0.001,
            format!("KS nT/l1 vs AB p={:.4}", ks.pvalue),
        ),
    ]
}

fn criterion_7() -> Vec<Item> {
    let mut out = Vec::new();
    for rho in [0.3, 0.7] {
        let r = run_experiment(&equicorrelation_config(rho, SEED)).unwrap();
        out.push(rel_within(
            &format!("rho={rho} Var T"),
            var_of(&r, Statistic::ScaledCovariance),
            (1.0 - rho) * (1.0 - rho),
            0.20,
        ));
        out.push(rel_within(
            &format!("rho={rho} Var rho"),
            var_of(&r, Statistic::ScaledCorrelation),
            1.0,
            0.15,
        ));
    }
    out
}

fn criterion_8() -> Vec<Item> {
    let mut out = Vec::new();
    for s in OlsScenario::ALL {
        let r = ols_coverage_experiment(&s.config(200, 500, SEED)).unwrap();
        let ols = r.ols.as_ref().unwrap();
        let c = ols.coverage;
        let ok = match s {
            OlsScenario::A | OlsScenario::B => c < 0.93,
            OlsScenario::C | OlsScenario::D => c > 0.95,
            OlsScenario::E => (0.93..=0.97).contains(&c),
        };
        out.push(item(ok, format!("({s:?}) coverage {c:.3}")));
        let verdict = ols.condition.as_ref().unwrap().verdict;
        let agrees = match verdict {
            OlsVerdict::Anticonservative => c < 0.95,
            OlsVerdict::Valid => c > 0.95,
            OlsVerdict::Exact => (0.93..=0.97).contains(&c),
        };
        out.push(item(agrees, format!("({s:?}) verdict {verdict:?}")));
    }
    out
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()
}

fn criterion_9() -> Vec<Item> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut out = Vec::new();

    // graphs: symmetry, hollow diagonal, regular row sums
    let mut graphs_ok = true;
    for family in [
        GraphFamily::CurieWeiss { n: 30 },
        GraphFamily::CompleteBipartite { n: 30 },
        GraphFamily::RandomRegular {
            n: 30,
            degree: 7,
            seed: 3,
        },
        GraphFamily::Lattice { side: 4, dim: 2 },
    ] {
        let q = build_interaction(&family).unwrap();
        for i in 0..30.min(q.n()) {
            graphs_ok &= q.get(i, i) == 0.0;
            for j in 0..q.n() {
                graphs_ok &= q.get(i, j) == q.get(j, i);
            }
        }
        if family.tag().is_dense_regular() {
            graphs_ok &= check_assumptions(&q).is_regular;
        }
    }
    out.push(item(graphs_ok, "graph symmetry/regularity"));

    // ising: spin-flip symmetry and stream determinism
    let model = IsingModel::new(
        Arc::new(
            build_interaction(&GraphFamily::RandomRegular {
                n: 10,
                degree: 3,
                seed: 5,
            })
            .unwrap(),
        ),
        0.9,
    )
    .unwrap();
    let pmf = brute_force_pmf(&model).unwrap();
    let flip_ok =
        (0..1usize << 10).all(|s| (pmf.probs()[s] - pmf.probs()[!s & 1023]).abs() < 1e-15);
    let plan = SamplerPlan {
        method: SamplerMethod::glauber(),
        seed: 4,
    };
    let a: Vec<SpinVector> = IsingSampler::new(&model, &plan).unwrap().take(3).collect();
    let b: Vec<SpinVector> = IsingSampler::new(&model, &plan).unwrap().take(3).collect();
    out.push(item(
        flip_ok && a == b,
        "spin-flip symmetry, sampler determinism",
    ));

    // stats: translation, bilinearity, |rho| <= 1, symmetry, J identity, OLS orthogonality
    let mut stats_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(2..300);
        let (x, y) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
        let (c, d, s) = (
            rng.random_range(-9.0..9.0),
            rng.random_range(-9.0..9.0),
            rng.random_range(-5.0..5.0),
        );
        let base = sample_covariance(&x, &y).unwrap();
        let shifted = sample_covariance(
            &x.iter().map(|v| v + c).collect::<Vec<_>>(),
            &y.iter().map(|v| v + d).collect::<Vec<_>>(),
        )
        .unwrap();
        stats_ok &= (shifted - base).abs() <= 1e-10 * (1.0 + base.abs());
        let scaled = sample_covariance(&x.iter().map(|v| s * v).collect::<Vec<_>>(), &y).unwrap();
        stats_ok &= (scaled - s * base).abs() <= 1e-9 * (1.0 + base.abs());
        let r = sample_correlation(&x, &y).unwrap();
        stats_ok &= r.abs() <= 1.0 && r == sample_correlation(&y, &x).unwrap();
        let j = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let xv = nalgebra::DVector::from_column_slice(&x);
        let yv = nalgebra::DVector::from_column_slice(&y);
        stats_ok &= (xv.dot(&(&j * &yv)) / n as f64 - base).abs() <= 1e-10 * (1.0 + base.abs());
        let fit = ols_fit(&x, &y, 0.05).unwrap();
        let xe: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| a * (b - fit.beta_hat * a))
            .sum();
        stats_ok &= xe.abs() <= 1e-8 * xv.norm() * yv.norm();
    }
    out.push(item(stats_ok, "stats invariants"));

    // gaussian: a_n <= 1, closed forms, symmetric Sigma, concentration
    let mut gauss_ok = true;
    for k in 0..30 {
        let n = rng.random_range(3..60);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let basis = if k % 2 == 0 {
            Basis::CenteringAligned
        } else {
            Basis::RandomOrthogonal { seed: k }
        };
        let h = build_covariance(CovarianceModel::FromEigenSpec(
            EigenSpec::new(values, basis).unwrap(),
        ))
        .unwrap();
        let m = h.matrix();
        gauss_ok &= (&m - m.transpose()).abs().max() < 1e-10;
        let s = tilde_spectrum(&h).unwrap();
        gauss_ok &= s.a_n <= 1.0 + 1e-10;
        gauss_ok &=
            s.tilde_eigs.windows(2).all(|w| w[0] >= w[1]) && s.tilde_eigs.iter().all(|v| *v >= 0.0);
    }
    let h = build_covariance(CovarianceModel::Equicorrelation { n: 200, rho: 0.4 }).unwrap();
    let dense = tilde_spectrum_dense(&h).unwrap();
    gauss_ok &= dense
        .tilde_eigs
        .iter()
        .enumerate()
        .all(|(i, v)| (v - if i < 199 { 0.6 } else { 0.0 }).abs() < 1e-8);
    let flat = quadratic_form_concentration_check(&vec![1.0; 10_000], 300, &mut rng).unwrap();
    let equi = quadratic_form_concentration_check(&vec![0.5; 1000], 300, &mut rng).unwrap();
    gauss_ok &= flat.fraction_within_bound >= 0.99 && equi.fraction_within_bound >= 0.99;
    gauss_ok &= flat.concentrated && equi.concentrated;
    out.push(item(gauss_ok, "gaussian invariants"));

    // sampling moments: n = 20, 1e5 replicates, entrywise within 0.05
    let spec = EigenSpec::new(
        (1..=20).map(|i| i as f64 / 10.0).collect(),
        Basis::RandomOrthogonal { seed: 8 },
    )
    .unwrap();
    let h = build_covariance(CovarianceModel::FromEigenSpec(spec)).unwrap();
    let mut acc = DMatrix::<f64>::zeros(20, 20);
    for _ in 0..100_000 {
        let v = nalgebra::DVector::from_vec(h.sample(&mut rng));
        acc += &v * v.transpose();
    }
    let err = (acc / 100_000.0 - h.matrix()).abs().max();
    out.push(item(err < 0.05, format!("Sigma-hat max error {err:.4}")));

    // theory: CW variance monotone, OLS condition symmetric and scale invariant
    let mut theory_ok = true;
    for b2 in [0.0, 0.7, 1.2, 2.0] {
        let v: Vec<f64> = (0..40)
            .map(|i| {
                predict_curie_weiss(i as f64 * 0.075, b2)
                    .0
                    .law
                    .variance()
                    .unwrap()
            })
            .collect();
        theory_ok &= v.windows(2).all(|w| w[1] <= w[0]);
    }
    for (f, g) in [
        ("power:2", "exp:1"),
        ("power:1", "exp:-1"),
        ("exp:0.85", "power:0.5"),
    ] {
        let (f, g) = (f.parse().unwrap(), g.parse().unwrap());
        let a = ols_condition(&f, &g, 200).unwrap();
        let b = ols_condition(&g, &f, 200).unwrap();
        theory_ok &= a.verdict == b.verdict;
    }
    out.push(item(theory_ok, "theory invariants"));

    // montecarlo: bitwise reproducibility across thread counts, type-I calibration
    let configs: Vec<ExperimentConfig> = vec![
        {
            let mut c = curie_weiss_config(1.5, 0.5, 3);
            c.replicates = 200;
            c
        },
        {
            let mut c = equicorrelation_config(0.5, 3);
            c.replicates = 200;
            c
        },
        {
            let mut c = lattice_base(100, 3);
            c.n = 256;
            c.model_x = nonsense_core::montecarlo::ModelSpec::ising(
                GraphFamily::Lattice { side: 16, dim: 2 },
                0.7,
            );
            c.model_y = c.model_x.clone();
            c
        },
    ];
    let mut repro = true;
    for c in &configs {
        let runs: Vec<String> = [1, 2, 4]
            .iter()
            .map(|&t| {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .unwrap();
                let r = pool.install(|| run_experiment(c)).unwrap();
                serde_json::to_string(&r).unwrap()
            })
            .collect();
        repro &= runs.windows(2).all(|w| w[0] == w[1]);
    }
    out.push(item(repro, "thread-count reproducibility"));

    let r = run_experiment(&equicorrelation_config(0.7, SEED)).unwrap();
    let t1 = r
        .checks
        .iter()
        .filter(|c| c.name.ends_with("_type1"))
        .all(|c| c.passed);
    out.push(item(t1, "type-I rate matches 2(1-Phi(1.96/v))"));

    let iid: Vec<f64> = (0..2000)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    out.push(item((variance(&iid) - 1.0).abs() < 0.1, "rng sanity"));
    out
}

struct Criterion {
    id: usize,
    title: &'static str,
    budget: Duration,
    run: fn() -> Vec<Item>,
}

fn main() {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion {
            id: 1,
            title: "oracle equivalence",
            budget: mins(2),
            run: criterion_1,
        },
        Criterion {
            id: 2,
            title: "Curie-Weiss CLT",
            budget: mins(3),
            run: criterion_2,
        },
        Criterion {
            id: 3,
            title: "lattice inflation and monotonicity",
            budget: mins(15),
            run: criterion_3,
        },
        Criterion {
            id: 4,
            title: "dense regular universality",
            budget: mins(20),
            run: criterion_4,
        },
        Criterion {
            id: 5,
            title: "Gaussian bulk regime, sigma^2 = 4",
            budget: mins(5),
            run: criterion_5,
        },
        Criterion {
            id: 6,
            title: "Gaussian spike regime",
            budget: mins(1),
            run: criterion_6,
        },
        Criterion {
            id: 7,
            title: "equicorrelation",
            budget: mins(3),
            run: criterion_7,
        },
        Criterion {
            id: 8,
            title: "OLS coverage",
            budget: mins(2),
            run: criterion_8,
        },
        Criterion {
            id: 9,
            title: "invariant suites",
            budget: mins(5),
            run: criterion_9,
        },
    ];
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.id))
    {
        let start = Instant::now();
        let items = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let ok = in_budget && items.iter().all(|i| i.ok);
        failed += usize::from(!ok);
        let detail: Vec<String> = items
            .iter()
            .map(|i| format!("{}{}", if i.ok { "" } else { "FAILED " }, i.text))
            .collect();
        println!(
            "criterion {} [{}] {} in {:.1}s (budget {}s): {}",
            c.id,
            c.title,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail.join("; ")
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
