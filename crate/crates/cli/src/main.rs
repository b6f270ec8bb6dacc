//! `scenario-cert` command-line front end.
//!
//! Exit codes: 0 certified (or validation passed), 1 not certified (or
//! validation failed), 2 usage or runtime error. The last line printed to
//! stdout is the path of the file written.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scenario_cert::assess::{draw_scenarios, solve_scenarios, ConfigFile, ScenarioData};
use scenario_cert::validate::{empirical_quantile, estimate_coverage, fresh_safety_levels, COVERAGE_CONFIDENCE};
use scenario_cert::{sample_size, AssessmentConfig, AssessmentReport, CoverClass, Verdict};
use serde_json::{json, Map, Value};

const SEED_ENV: &str = "SCENARIO_CERT_SEED";

#[derive(Parser)]
#[command(name = "scenario-cert", version, about = "Scenario-optimization robustness certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the number of samples needed for (eps, delta, p).
    SampleSize {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        p: usize,
    },
    /// Run one assessment and write its report.
    Assess {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        lambda: Option<String>,
        /// Report path.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Also write the scenario samples as CSV.
        #[arg(long)]
        samples_csv: Option<PathBuf>,
    },
    /// Run one assessment per lambda on a shared sample set.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated lambda values, e.g. `0,1e-4,1`.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<String>,
        /// Bundle path.
        #[arg(long, default_value = "sweep.json")]
        out: PathBuf,
        #[arg(long)]
        samples_csv: Option<PathBuf>,
    },
    /// Check a report against fresh samples and append a validation block.
    Validate {
        #[arg(long)]
        report: PathBuf,
        /// Number of fresh samples M.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Defaults to the report's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the augmented report; defaults to `--report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a report's scenario samples as CSV.
    ExportSamples {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RegKind {
    None,
    Radius,
    RadiusSquared,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeFitArg {
    SameSamples,
    FreshSplit,
}

/// Flags shared by `assess` and `sweep`. Each flag overrides the matching
/// config-file key.
#[derive(Args)]
struct RunArgs {
    /// JSON config bundling model/distribution/safe set (paths or inline) and settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long)]
    safe: Option<PathBuf>,
    /// `l1`, `l2`, `linf`, `q_pca`, `half_space`, or a JSON class object.
    #[arg(long)]
    class: Option<String>,
    #[arg(long, value_enum)]
    regularizer: Option<RegKind>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Falls back to the config file, then to $SCENARIO_CERT_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count; below the bound only with --allow-undersampled.
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long)]
    allow_undersampled: bool,
    #[arg(long, value_enum)]
    shape_fit: Option<ShapeFitArg>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Certified relative optimality gap of the ball solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    radius_cap_multiplier: Option<f64>,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn lambda_value(text: &str) -> Res<Value> {
    let t = text.trim();
    if matches!(t, "inf" | "infinity" | "Infinity") {
        return Ok(Value::String("inf".into()));
    }
    let v: f64 = t.parse().map_err(|_| Failure(format!("bad lambda `{t}`")))?;
    if v.is_infinite() && v > 0.0 {
        return Ok(Value::String("inf".into()));
    }
    Ok(json!(v))
}

fn object(v: &mut Value, key: &str) -> Res<Map<String, Value>> {
    match v.get(key) {
        None => Ok(Map::new()),
        Some(Value::Object(m)) => Ok(m.clone()),
        Some(_) => Err(Failure(format!("config key `{key}` must be an object"))),
    }
}

/// Merges the config file (if any) and the flags into one config.
fn build_config(run: &RunArgs, lambda: Option<&str>) -> Res<AssessmentConfig> {
    let mut root = match &run.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            let mut v: Value = serde_json::from_str(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            let Value::Object(map) = &mut v else {
                return Err(Failure(format!("{}: config must be a JSON object", path.display())));
            };
            for key in ["model", "distribution", "dist", "safe_set", "safe"] {
                if let Some(Value::String(p)) = map.get(key) {
                    let joined = base.join(p);
                    map.insert(key.into(), Value::String(joined.display().to_string()));
                }
            }
            v
        }
        None => json!({}),
    };
    let file_seed = root.get("seed").is_some();
    let map = root.as_object_mut().expect("object");
    let mut set_path = |keys: [&str; 2], p: &Option<PathBuf>| {
        if let Some(p) = p {
            map.remove(keys[1]);
            map.insert(keys[0].into(), Value::String(p.display().to_string()));
        }
    };
    set_path(["model", "model"], &run.model);
    set_path(["distribution", "dist"], &run.dist);
    set_path(["safe_set", "safe"], &run.safe);
    if let Some(c) = &run.class {
        map.insert("class".into(), serde_json::to_value(CoverClass::parse(c)?)?);
    }
    if let Some(e) = run.eps {
        map.insert("eps".into(), json!(e));
    }
    if let Some(d) = run.delta {
        map.insert("delta".into(), json!(d));
    }
    match (run.seed, file_seed) {
        (Some(s), _) => {
            map.insert("seed".into(), json!(s));
        }
        (None, false) => {
            if let Ok(text) = std::env::var(SEED_ENV) {
                let s: u64 = text.trim().parse().map_err(|_| Failure(format!("{SEED_ENV}=`{text}` is not a u64")))?;
                map.insert("seed".into(), json!(s));
            }
        }
        (None, true) => {}
    }
    if let Some(n) = run.n {
        map.insert("N".into(), json!(n));
    }
    if run.allow_undersampled {
        map.insert("allow_undersampled".into(), json!(true));
    }
    if let Some(sf) = run.shape_fit {
        let name = match sf {
            ShapeFitArg::SameSamples => "same_samples",
            ShapeFitArg::FreshSplit => "fresh_split",
        };
        map.insert("shape_fit".into(), json!(name));
    }

    let mut reg = object(&mut root, "regularizer")?;
    if let Some(k) = run.regularizer {
        let name = match k {
            RegKind::None => "none",
            RegKind::Radius => "radius",
            RegKind::RadiusSquared => "radius_squared",
        };
        reg.insert("kind".into(), json!(name));
    }
    if let Some(l) = lambda {
        reg.insert("lambda".into(), lambda_value(l)?);
    }
    if reg.contains_key("lambda") && !reg.contains_key("kind") {
        reg.insert("kind".into(), json!("radius_squared"));
    }
    if reg.contains_key("kind") && !reg.contains_key("lambda") {
        reg.insert("lambda".into(), json!(0.0));
    }
    let mut solver = object(&mut root, "solver")?;
    if let Some(m) = run.max_iter {
        solver.insert("max_iter".into(), json!(m));
    }
    if let Some(t) = run.tol {
        solver.insert("tol_obj".into(), json!(t));
    }
    if let Some(r) = run.radius_cap_multiplier {
        solver.insert("radius_cap_multiplier".into(), json!(r));
    }
    let map = root.as_object_mut().expect("object");
    if !reg.is_empty() {
        map.insert("regularizer".into(), Value::Object(reg));
    }
    if !solver.is_empty() {
        map.insert("solver".into(), Value::Object(solver));
    }
    for (key, flag) in [("model", "--model"), ("class", "--class"), ("eps", "--eps"), ("delta", "--delta")] {
        if !map.contains_key(key) {
            return Err(Failure(format!("missing {key}: pass {flag} or set it in --config")));
        }
    }
    if !map.contains_key("distribution") && !map.contains_key("dist") {
        return Err(Failure("missing distribution: pass --dist or set it in --config".into()));
    }
    if !map.contains_key("safe_set") && !map.contains_key("safe") {
        return Err(Failure("missing safe set: pass --safe or set it in --config".into()));
    }
    let file: ConfigFile = serde_json::from_value(root)?;
    Ok(file.resolve(Path::new(""))?)
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write_samples(path: &Path, data: &ScenarioData, cfg: &AssessmentConfig) -> Res<()> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf, &cfg.safe_set)?;
    write_text(path, &String::from_utf8(buf).expect("csv is utf-8"))
}

fn summarize(r: &AssessmentReport) {
    println!(
        "lambda={} N={} p={} r_hat={:.6} verdict={}",
        if r.lambda.is_infinite() { "inf".to_string() } else { r.lambda.to_string() },
        r.n,
        r.p,
        r.r_hat,
        if r.verdict == Verdict::Certified { "certified" } else { "not_certified" }
    );
}

fn cmd_assess(run: &RunArgs, lambda: Option<&str>, out: &Path, samples_csv: Option<&Path>) -> Res<bool> {
    let started = Instant::now();
    let cfg = build_config(run, lambda)?;
    let data = draw_scenarios(&cfg.model, &cfg)?;
    let mut report = solve_scenarios(&cfg, &data, started)?;
    if let Some(csv) = samples_csv {
        write_samples(csv, &data, &cfg)?;
        report.provenance.samples_file = Some(csv.display().to_string());
    }
    if !report.guarantee {
        eprintln!("warning: {}", report.statement);
    }
    write_text(out, &report.to_json())?;
    summarize(&report);
    println!("{}", out.display());
    Ok(report.verdict == Verdict::Certified)
}

fn cmd_sweep(run: &RunArgs, lambdas: &[String], out: &Path, samples_csv: Option<&Path>) -> Res<bool> {
    let started = Instant::now();
    let mut values: Vec<(f64, String)> = Vec::new();
    for text in lambdas {
        let v = match lambda_value(text)? {
            Value::String(_) => f64::INFINITY,
            n => n.as_f64().expect("number"),
        };
        if v.is_nan() || v < 0.0 {
            return Err(Failure(format!("lambda must be >= 0, got {text}")));
        }
        values.push((v, text.clone()));
    }
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let before = values.len();
    values.dedup_by(|a, b| a.0 == b.0);
    if values.len() < before {
        eprintln!("warning: dropped {} duplicate lambda value(s)", before - values.len());
    }
    // The first lambda builds the shared config; the others only swap λ.
    let cfg = build_config(run, Some(&values[0].1))?;
    let data = draw_scenarios(&cfg.model, &cfg)?;
    let samples_file = match samples_csv {
        Some(csv) => {
            write_samples(csv, &data, &cfg)?;
            Some(csv.display().to_string())
        }
        None => None,
    };
    let mut reports = Vec::new();
    for (lambda, _) in &values {
        let mut c = cfg.clone();
        c.settings.regularizer.lambda = *lambda;
        c.settings.regularizer.validate()?;
        let mut r = solve_scenarios(&c, &data, started)?;
        r.provenance.samples_file = samples_file.clone();
        summarize(&r);
        reports.push(r);
    }
    let lambdas_json: Vec<Value> = values
        .iter()
        .map(|(v, _)| if v.is_infinite() { json!("inf") } else { json!(v) })
        .collect();
    let bundle = json!({ "lambdas": lambdas_json, "reports": reports });
    write_text(out, &serde_json::to_string_pretty(&bundle)?)?;
    println!("{}", out.display());
    Ok(reports.iter().all(|r| r.verdict == Verdict::Certified))
}

fn read_report(path: &Path) -> Res<(Value, AssessmentReport)> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    if raw.get("reports").is_some() {
        return Err(Failure(format!("{} is a sweep bundle; pass a single report", path.display())));
    }
    let report: AssessmentReport =
        serde_json::from_value(raw.clone()).map_err(|e| Failure(format!("{}: malformed report: {e}", path.display())))?;
    Ok((raw, report))
}

fn cmd_validate(path: &Path, m: usize, seed: Option<u64>, out: Option<&Path>) -> Res<bool> {
    let (mut raw, report) = read_report(path)?;
    let cfg = &report.config;
    let eps = report.eps;
    let needed = (100.0 / eps).ceil() as usize;
    if m < needed {
        return Err(Failure(format!("--samples {m} is too small for eps = {eps}; need at least {needed}")));
    }
    let seed = seed.unwrap_or(report.seed);
    let mut rows = Vec::new();
    let mut ok = true;
    for (row, result) in cfg.safe_set.rows().iter().zip(&report.rows) {
        let cov = estimate_coverage(&cfg.model, &cfg.distribution, &result.theta_star, row, m, seed)?;
        let levels = fresh_safety_levels(&cfg.model, &cfg.distribution, row, m, seed)?;
        let prl = empirical_quantile(&levels, eps)?;
        let min_level = levels.iter().copied().fold(f64::INFINITY, f64::min);
        let covered = cov.p_hat >= 1.0 - eps;
        ok &= covered;
        println!(
            "row coverage p_hat={:.5} ci_low={:.5} prl_estimate={:.6} r_hat={:.6}",
            cov.p_hat, cov.ci_low, prl, result.r_hat
        );
        rows.push(json!({
            "p_hat": cov.p_hat,
            "ci_low": cov.ci_low,
            "prl_estimate": prl,
            "empirical_min_safety": min_level,
            "r_hat_below_prl": result.r_hat <= prl,
            "covered": covered,
        }));
    }
    let block = json!({
        "M": m,
        "seed": seed,
        "stream": "validation",
        "confidence": COVERAGE_CONFIDENCE,
        "target_coverage": 1.0 - eps,
        "rows": rows,
        "passed": ok,
    });
    raw.as_object_mut().expect("report object").insert("validation".into(), block);
    let out = out.unwrap_or(path);
    write_text(out, &serde_json::to_string_pretty(&raw)?)?;
    println!("{}", out.display());
    Ok(ok)
}

fn cmd_export_samples(path: &Path, out: &Path) -> Res<()> {
    let (_, report) = read_report(path)?;
    let data = draw_scenarios(&report.config.model, &report.config)?;
    write_samples(out, &data, &report.config)?;
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Res<bool> {
    match cli.command {
        Command::SampleSize { eps, delta, p } => {
            println!("{}", sample_size(eps, delta, p)?);
            Ok(true)
        }
        Command::Assess { run, lambda, out, samples_csv } => {
            cmd_assess(&run, lambda.as_deref(), &out, samples_csv.as_deref())
        }
        Command::Sweep { run, lambdas, out, samples_csv } => cmd_sweep(&run, &lambdas, &out, samples_csv.as_deref()),
        Command::Validate { report, samples, seed, out } => cmd_validate(&report, samples, seed, out.as_deref()),
        Command::ExportSamples { report, out } => cmd_export_samples(&report, &out).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
