use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nonsense_core::gaussian::EigenProfile;
use nonsense_core::graphs::{build_interaction, check_assumptions, GraphFamily};
use nonsense_core::montecarlo::{
    monotonicity_sweep, run_experiment_with, sweep_configs, validate, ExperimentConfig, McError,
    McReport, ModelSpec, RunOptions, TrendReport,
};
use nonsense_core::presets::{
    preset, verify as run_verification, Plan, RunSpec, TheoremId, DEFAULT_SEED,
};
use nonsense_core::theory::{ols_condition as condition, Law};
use serde::Serialize;

use crate::output::{self, Manifest, Run};
use crate::{AssumptionsArgs, OlsConditionArgs, SimulateArgs, VerifyArgs};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Abort(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Abort(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// `{"error": kind, "message": text}` on one line.
    pub fn machine_line(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Abort(m) => ("abort", m),
            CliError::Io(m) => ("io", m),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Config(m) => CliError::Config(m),
            McError::Abort(m) => CliError::Abort(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub fn read_spec(path: &Path) -> Result<RunSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.to_string().replace('\n', " ");
        CliError::Config(format!("{}: {}", path.display(), msg.trim()))
    })
}

fn resolve_plan(args: &SimulateArgs) -> Result<Plan, CliError> {
    let mut plan = match (&args.config, &args.preset) {
        (Some(path), None) => Plan::from_spec(&read_spec(path)?)?,
        (None, Some(name)) => {
            preset(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of --config and --preset".into(),
            ))
        }
    };
    if let Some(seed) = args.run.seed {
        plan.set_seed(seed);
    }
    Ok(plan)
}

/// File stem for an experiment, kept inside the output directory.
fn stem(config: &ExperimentConfig, index: usize) -> String {
    let raw = config
        .name
        .clone()
        .unwrap_or_else(|| format!("experiment_{index}"));
    let clean: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let clean = clean.trim_start_matches('.');
    if clean.is_empty() {
        format!("experiment_{index}")
    } else {
        clean.to_string()
    }
}

enum Job {
    Single {
        stem: String,
        config: ExperimentConfig,
    },
    Sweep {
        stem: String,
        grid: Vec<f64>,
        base: ExperimentConfig,
        axis: nonsense_core::montecarlo::SweepAxis,
    },
}

/// Every check that can fail before sampling starts.
fn plan_jobs(plan: &Plan, dump_spins: bool) -> Result<Vec<Job>, CliError> {
    let jobs = match plan {
        Plan::Single(c) => vec![Job::Single {
            stem: stem(c, 0),
            config: c.clone(),
        }],
        Plan::Batch(list) => list
            .iter()
            .enumerate()
            .map(|(i, c)| Job::Single {
                stem: stem(c, i),
                config: c.clone(),
            })
            .collect(),
        Plan::Sweep { base, grid, axis } => {
            if dump_spins {
                return Err(CliError::Config(
                    "--dump-spins is not available for sweeps".into(),
                ));
            }
            vec![Job::Sweep {
                stem: stem(base, 0),
                grid: grid.clone(),
                base: base.clone(),
                axis: *axis,
            }]
        }
    };
    let mut seen = BTreeSet::new();
    for job in &jobs {
        match job {
            Job::Single { stem, config } => {
                if !seen.insert(stem.clone()) {
                    return Err(CliError::Config(format!(
                        "two experiments share the name {stem:?}"
                    )));
                }
                validate(config).map_err(|e| CliError::Config(format!("{stem}: {e}")))?;
            }
            Job::Sweep {
                stem,
                grid,
                base,
                axis,
            } => {
                seen.insert(stem.clone());
                for c in sweep_configs(grid, base, *axis)? {
                    validate(&c).map_err(|e| CliError::Config(format!("{stem}: {e}")))?;
                }
            }
        }
    }
    Ok(jobs)
}

enum Outcome {
    Single {
        stem: String,
        report: Box<McReport>,
        secs: f64,
    },
    Sweep {
        stem: String,
        trend: TrendReport,
        secs: f64,
    },
}

pub fn simulate(args: &SimulateArgs) -> Result<ExitCode, CliError> {
    let plan = resolve_plan(args)?;
    let jobs = plan_jobs(&plan, args.dump_spins)?;
    let opts = RunOptions {
        keep_spins: args.dump_spins,
    };
    let mut outcomes = Vec::new();
    for job in jobs {
        let start = Instant::now();
        outcomes.push(match job {
            Job::Single { stem, config } => {
                log::info!("running {stem}");
                let report =
                    run_experiment_with(&config, &opts).map_err(|e| with_context(e, &stem))?;
                Outcome::Single {
                    stem,
                    report: Box::new(report),
                    secs: start.elapsed().as_secs_f64(),
                }
            }
            Job::Sweep {
                stem,
                grid,
                base,
                axis,
            } => {
                log::info!("sweeping {stem}");
                let trend =
                    monotonicity_sweep(&grid, &base, axis).map_err(|e| with_context(e, &stem))?;
                Outcome::Sweep {
                    stem,
                    trend,
                    secs: start.elapsed().as_secs_f64(),
                }
            }
        });
    }

    let out = &args.out_dir;
    fs::create_dir_all(out)?;
    let mut runs = Vec::new();
    for outcome in &outcomes {
        match outcome {
            Outcome::Single { stem, report, secs } => {
                let mut files = vec![output::write_report(out, stem, report)?];
                files.push(output::write_histograms(out, stem, report)?);
                if args.csv {
                    files.push(output::write_records(out, stem, report)?);
                }
                if args.dump_spins {
                    files.extend(output::write_spins(out, stem, report)?);
                }
                print_report(stem, report);
                runs.push(Run {
                    name: stem.clone(),
                    seconds: *secs,
                    outputs: files,
                });
            }
            Outcome::Sweep { stem, trend, secs } => {
                let mut files = vec![output::write_json(
                    out,
                    &format!("{stem}.trend.json"),
                    trend,
                )?];
                files.push(output::write_sweep_histogram(out, stem, trend)?);
                for (point, report) in trend.points.iter().zip(&trend.reports) {
                    let point_stem = format!("{stem}_beta{}", point.beta);
                    files.push(output::write_report(out, &point_stem, report)?);
                    if args.csv {
                        files.push(output::write_records(out, &point_stem, report)?);
                    }
                }
                print_trend(stem, trend);
                runs.push(Run {
                    name: stem.clone(),
                    seconds: *secs,
                    outputs: files,
                });
            }
        }
    }
    let resolved = plan.to_spec();
    let echo = toml::to_string(&resolved).map_err(|e| CliError::Io(e.to_string()))?;
    let echo_file = output::write_text(out, "config.resolved.toml", &echo)?;
    let manifest = Manifest {
        config_path: args.config.as_ref().map(|p| p.display().to_string()),
        preset: args.preset.clone(),
        resolved_config: resolved,
        resolved_config_file: echo_file,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        threads: rayon::current_num_threads(),
        runs,
    };
    output::write_json(out, "manifest.json", &manifest)?;
    println!("outputs in {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn with_context(e: McError, stem: &str) -> CliError {
    match e {
        McError::Config(m) => CliError::Config(format!("{stem}: {m}")),
        McError::Abort(m) => CliError::Abort(format!("{stem}: {m}")),
    }
}

fn law_text(law: &Law) -> String {
    match law {
        Law::Normal { variance } => format!("N(0, {variance:.6})"),
        Law::NormalTimesChi => "A*B".into(),
        Law::Rademacher => "Rademacher".into(),
        Law::Unknown { direction } => format!("unknown, {direction:?}").to_lowercase(),
    }
}

fn print_report(stem: &str, r: &McReport) {
    println!(
        "{stem}: n = {}, {} valid of {} replicates",
        r.config.n, r.valid_replicates, r.config.replicates
    );
    for s in &r.summaries {
        let predicted = s
            .prediction
            .as_ref()
            .map_or("none".into(), |p| law_text(&p.law));
        let ks =
            s.ks.map_or(String::new(), |k| format!(", KS p = {:.4}", k.pvalue));
        let t1 = s
            .type1_rate
            .map_or(String::new(), |t| format!(", type I = {t:.4}"));
        println!(
            "  {:<20} var {:.6} (predicted {predicted}){ks}{t1}",
            serde_json::to_value(s.statistic)
                .unwrap()
                .as_str()
                .unwrap_or_default(),
            s.moments.var
        );
    }
    if let Some(raw) = &r.raw_correlation {
        println!(
            "  raw correlation      mean {:.4}, P(|rho| > {}) = {:.4}",
            raw.mean, raw.cutoff, raw.fraction_abs_above_cutoff
        );
    }
    if let Some(ols) = &r.ols {
        let verdict = ols
            .condition
            .as_ref()
            .map_or("none".into(), |c| format!("{:?}", c.verdict));
        println!(
            "  ols                  coverage {:.4}, verdict {verdict}",
            ols.coverage
        );
    }
    for h in &r.heuristics {
        println!("  heuristic: {h}");
    }
    for c in &r.checks {
        println!(
            "  [{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
}

fn print_trend(stem: &str, t: &TrendReport) {
    println!("{stem}: sweep of sqrt(n) rho_n");
    for p in &t.points {
        println!(
            "  beta {:<6} sd {:.4} (se {:.4})  var {:.4}",
            p.beta, p.sd, p.sd_se, p.var
        );
    }
    println!(
        "  spearman {:.3}, strictly increasing: {}",
        t.spearman, t.strictly_increasing
    );
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode, CliError> {
    let id: TheoremId = args.theorem.parse().map_err(CliError::Config)?;
    let v = run_verification(id, args.run.seed.unwrap_or(DEFAULT_SEED))?;
    println!("{id}");
    for c in &v.checks {
        println!(
            "  [{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        for (i, r) in v.reports.iter().enumerate() {
            output::write_report(dir, &format!("verify_{id}_{}", stem(&r.config, i)), r)?;
        }
        if let Some(t) = &v.trend {
            output::write_json(dir, &format!("verify_{id}.trend.json"), t)?;
        }
    }
    let passed = v.passed();
    println!("{id} {}", if passed { "PASS" } else { "FAIL" });
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn ols_condition(args: &OlsConditionArgs) -> Result<ExitCode, CliError> {
    let parse = |s: &str| {
        s.parse::<EigenProfile>()
            .map_err(|e| CliError::Config(e.to_string()))
    };
    let (f, g) = (parse(&args.f)?, parse(&args.g)?);
    let report = condition(&f, &g, args.n).map_err(|e| CliError::Config(e.to_string()))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?
        );
    } else {
        println!("f = {}, g = {}", report.f, report.g);
        println!("  int f g      = {:.10}", report.int_fg);
        println!("  int f int g  = {:.10}", report.int_f * report.int_g);
        println!("  int f        = {:.10}", report.int_f);
        println!("  int g        = {:.10}", report.int_g);
        println!(
            "  n = {}: Riemann int f g = {:.10}, int f int g = {:.10}",
            report.n,
            report.finite_n.int_fg,
            report.finite_n.int_f * report.finite_n.int_g
        );
        println!("verdict: {:?}", report.verdict);
    }
    Ok(ExitCode::SUCCESS)
}

/// `kind key=value ...` with TOML values.
pub fn parse_graph(words: &[String]) -> Result<GraphFamily, CliError> {
    let (kind, params) = words
        .split_first()
        .ok_or_else(|| CliError::Config("missing graph kind".into()))?;
    let mut table = toml::Table::new();
    table.insert("kind".into(), toml::Value::String(kind.clone()));
    for p in params {
        let (key, value) = p
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {p:?}")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .map_err(|_| CliError::Config(format!("bad value in {p:?}")))?
            .remove("v")
            .expect("just inserted");
        table.insert(key.trim().to_string(), value);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim().replace('\n', " ")))
}

#[derive(Serialize)]
struct AssumptionRow {
    graph: GraphFamily,
    family: String,
    n: usize,
    #[serde(flatten)]
    report: nonsense_core::graphs::AssumptionReport,
}

pub fn assumptions(args: &AssumptionsArgs) -> Result<ExitCode, CliError> {
    let graphs: Vec<GraphFamily> = match &args.config {
        Some(path) => {
            let mut plan = Plan::from_spec(&read_spec(path)?)?;
            let mut out = Vec::new();
            for c in plan.configs_mut() {
                for m in [&c.model_x, &c.model_y] {
                    if let ModelSpec::Ising { graph, .. } = m {
                        if !out.contains(graph) {
                            out.push(graph.clone());
                        }
                    }
                }
            }
            if out.is_empty() {
                return Err(CliError::Config("the config has no Ising models".into()));
            }
            out
        }
        None => vec![parse_graph(&args.graph)?],
    };
    let mut rows = Vec::new();
    for g in graphs {
        let q = build_interaction(&g).map_err(|e| CliError::Config(e.to_string()))?;
        rows.push(AssumptionRow {
            family: q.family().to_string(),
            n: q.n(),
            report: check_assumptions(&q),
            graph: g,
        });
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&rows).map_err(|e| CliError::Io(e.to_string()))?
        );
    } else {
        for r in &rows {
            let row_sum = r
                .report
                .common_row_sum
                .map_or("varies".into(), |s| format!("{s:.6}"));
            let gap = match r.report.known_spectral_gap {
                Some(true) => "yes",
                Some(false) => "no",
                None => "unknown",
            };
            println!("{} (n = {})", r.family, r.n);
            println!(
                "  regular          {} (row sum {row_sum})",
                r.report.is_regular
            );
            println!("  n max |Q_ij|     {:.6}", r.report.max_entry_times_n);
            println!("  ||Q||_F^2        {:.6}", r.report.frobenius_sq);
            println!("  spectral gap     {gap}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
