//! End-to-end assessment: sample, evaluate, solve per safety row, report.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::InputDistribution;
use crate::error::{read_json, Error, Result};
use crate::geometry::{fit_pca_qnorm, BallShape, CoverClass, CoverParams, Regularizer};
use crate::model::{BlackBox, NetworkModel};
use crate::rng::Stream;
use crate::safeset::SafeSet;
use crate::scenario::{sample_size, solve, ProblemClass, ScenarioProblem, SolveStatus, SolverOptions};

pub const REPORT_VERSION: u32 = 1;

/// Where the ellipsoid shape of a `q_pca` class is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFit {
    /// Fit `Q` on the scenario samples themselves. `Q` then depends on the
    /// data that also constrains the cover.
    #[default]
    SameSamples,
    /// Fit `Q` on an independent batch of `N` samples, so the class is fixed
    /// before the scenario samples are drawn.
    FreshSplit,
}

/// Everything except the model, distribution and safe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub eps: f64,
    pub delta: f64,
    pub class: CoverClass,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default)]
    pub seed: u64,
    /// Explicit sample count; must not undercut the bound unless
    /// `allow_undersampled` is set.
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n_override: Option<usize>,
    #[serde(default)]
    pub allow_undersampled: bool,
    #[serde(default)]
    pub shape_fit: ShapeFit,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Settings {
    pub fn new(eps: f64, delta: f64, class: CoverClass, regularizer: Regularizer, seed: u64) -> Self {
        Settings {
            eps,
            delta,
            class,
            regularizer,
            seed,
            n_override: None,
            allow_undersampled: false,
            shape_fit: ShapeFit::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// A fully inlined, self-contained assessment request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentConfig {
    pub model: NetworkModel,
    pub distribution: InputDistribution,
    pub safe_set: SafeSet,
    #[serde(flatten)]
    pub settings: Settings,
}

impl AssessmentConfig {
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// A value given inline or as a path to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: serde::de::DeserializeOwned> Source<T> {
    pub fn resolve(self, base: &Path) -> Result<T> {
        match self {
            Source::Inline(v) => Ok(v),
            Source::Path(p) => read_json(&base.join(p)),
        }
    }
}

/// Config-file form of [`AssessmentConfig`]; relative paths resolve against
/// the file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    pub model: Source<NetworkModel>,
    #[serde(alias = "dist")]
    pub distribution: Source<InputDistribution>,
    #[serde(alias = "safe")]
    pub safe_set: Source<SafeSet>,
    #[serde(flatten)]
    pub settings: Settings,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<AssessmentConfig> {
        let path = path.as_ref();
        let file: ConfigFile = read_json(path)?;
        file.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(self, base: &Path) -> Result<AssessmentConfig> {
        let distribution = self.distribution.resolve(base)?;
        distribution.validate()?;
        Ok(AssessmentConfig {
            model: self.model.resolve(base)?,
            distribution,
            safe_set: self.safe_set.resolve(base)?,
            settings: self.settings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

/// Result for one safety row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReport {
    pub a: Vec<f64>,
    pub b: f64,
    pub theta_star: CoverParams,
    pub r_hat: f64,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    /// Smallest safety level among the scenario samples; `r_hat` never exceeds it.
    pub min_sample_safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub sample_stream: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_fit_stream: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub version: u32,
    pub config: AssessmentConfig,
    #[serde(rename = "N")]
    pub n: usize,
    /// The sample-size bound for `(ε, δ, p)`.
    pub n_required: usize,
    pub p: usize,
    pub eps: f64,
    pub delta: f64,
    #[serde(with = "crate::geometry::cover::lambda_serde")]
    pub lambda: f64,
    pub seed: u64,
    /// False when `N < n_required` (undersampled run): no high-probability guarantee.
    pub guarantee: bool,
    pub shape_fit: ShapeFit,
    pub rows: Vec<RowReport>,
    pub worst_row: usize,
    /// Minimum `r_hat` over rows.
    pub r_hat: f64,
    pub verdict: Verdict,
    pub statement: String,
    pub provenance: Provenance,
    pub wall_time_s: f64,
}

impl AssessmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// The scenario sample set shared by every row and every `λ`.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    pub n_required: usize,
    pub p: usize,
    pub class: ProblemClass,
}

impl ScenarioData {
    /// CSV with one row per sample: `x0..`, `y0..`, then one safety level per row of `safe`.
    pub fn write_csv<W: Write>(&self, mut w: W, safe: &SafeSet) -> Result<()> {
        let io = |e: std::io::Error| Error::Io { path: "samples csv".into(), source: e };
        let mut header: Vec<String> = (0..self.inputs.ncols()).map(|i| format!("x{i}")).collect();
        header.extend((0..self.outputs.ncols()).map(|i| format!("y{i}")));
        header.extend((0..safe.rows().len()).map(|i| format!("s{i}")));
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for j in 0..self.inputs.nrows() {
            let y: Vec<f64> = self.outputs.row(j).iter().copied().collect();
            let fields: Vec<String> = self
                .inputs
                .row(j)
                .iter()
                .chain(y.iter())
                .copied()
                .chain(safe.rows().iter().map(|r| r.level_unchecked(&y)))
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(w, "{}", fields.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

fn check_config(f: &dyn BlackBox, cfg: &AssessmentConfig) -> Result<()> {
    let s = &cfg.settings;
    if !(s.eps > 0.0 && s.eps <= 1.0) || !(s.delta > 0.0 && s.delta <= 1.0) {
        return Err(Error::invalid(format!("need eps, delta in (0, 1], got eps={}, delta={}", s.eps, s.delta)));
    }
    if cfg.distribution.dim() != f.input_dim() {
        return Err(Error::dim(f.input_dim(), cfg.distribution.dim(), "distribution vs model input"));
    }
    if cfg.safe_set.output_dim() != f.output_dim() {
        return Err(Error::dim(f.output_dim(), cfg.safe_set.output_dim(), "safe set vs model output"));
    }
    cfg.distribution.validate()?;
    s.regularizer.validate()?;
    s.solver.validate()?;
    match &s.class {
        CoverClass::HalfSpace if s.regularizer.is_active() => Err(Error::invalid(
            "volume regularizers need a radius; the half-space class has none",
        )),
        CoverClass::NormBall(BallShape::Fixed(norm)) => norm.check_dim(f.output_dim()),
        _ => Ok(()),
    }
}

/// Steps 1-3: sample size, scenario draws, and (for `q_pca`) the fitted shape.
pub fn draw_scenarios(f: &dyn BlackBox, cfg: &AssessmentConfig) -> Result<ScenarioData> {
    check_config(f, cfg)?;
    let s = &cfg.settings;
    let n_y = f.output_dim();
    let p = s.class.param_dim(n_y);
    let n_required = sample_size(s.eps, s.delta, p)?;
    let n = s.n_override.unwrap_or(n_required);
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    if n < n_required && !s.allow_undersampled {
        return Err(Error::invalid(format!(
            "N = {n} is below the required {n_required} for eps={}, delta={}, p={p}; \
             set allow_undersampled to run without the guarantee",
            s.eps, s.delta
        )));
    }
    let inputs = cfg.distribution.sample(n, s.seed)?;
    let outputs = f.evaluate_batch(&inputs)?;
    let class = match &s.class {
        CoverClass::HalfSpace => ProblemClass::HalfSpace,
        CoverClass::NormBall(BallShape::Fixed(norm)) => ProblemClass::NormBall(norm.clone()),
        CoverClass::NormBall(BallShape::PcaEllipsoid) => {
            let fit_outputs = match s.shape_fit {
                ShapeFit::SameSamples => outputs.clone(),
                ShapeFit::FreshSplit => {
                    let xs = cfg.distribution.sample_stream(n, s.seed, Stream::ShapeFit)?;
                    f.evaluate_batch(&xs)?
                }
            };
            ProblemClass::NormBall(fit_pca_qnorm(&fit_outputs)?)
        }
    };
    Ok(ScenarioData { inputs, outputs, n_required, p, class })
}

/// Steps 4-5 on pre-drawn scenarios.
pub fn solve_scenarios(cfg: &AssessmentConfig, data: &ScenarioData, started: Instant) -> Result<AssessmentReport> {
    let s = &cfg.settings;
    let rows = cfg
        .safe_set
        .rows()
        .par_iter()
        .map(|row| {
            let pr = ScenarioProblem::new(data.outputs.clone(), row.clone(), data.class.clone(), s.regularizer, s.solver)?;
            let sol = solve(&pr)?;
            let min_sample_safety = data
                .outputs
                .row_iter()
                .map(|y| row.level_unchecked(y.transpose().as_slice()))
                .fold(f64::INFINITY, f64::min);
            Ok(RowReport {
                a: row.a.clone(),
                b: row.b,
                theta_star: sol.theta_star,
                r_hat: sol.r_hat,
                status: sol.status,
                objective: sol.objective,
                iterations: sol.iterations,
                min_sample_safety,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (worst_row, r_hat) = rows
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, r)| if r.r_hat < bv { (i, r.r_hat) } else { (bi, bv) });
    let verdict = if rows.iter().all(|r| r.r_hat >= 0.0) { Verdict::Certified } else { Verdict::NotCertified };
    let n = data.outputs.nrows();
    let guarantee = n >= data.n_required;
    let statement = if guarantee {
        format!(
            "With probability at least {} over the {n} scenario samples, each row's cover h(theta*) contains \
             f(X) with probability at least {} and r_hat(theta*) <= rbar({}).",
            1.0 - s.delta,
            1.0 - s.eps,
            s.eps
        )
    } else {
        format!(
            "No sample-size guarantee: N = {n} is below the required {} (undersampled run).",
            data.n_required
        )
    };
    Ok(AssessmentReport {
        version: REPORT_VERSION,
        config: cfg.clone(),
        n,
        n_required: data.n_required,
        p: data.p,
        eps: s.eps,
        delta: s.delta,
        lambda: s.regularizer.lambda,
        seed: s.seed,
        guarantee,
        shape_fit: s.shape_fit,
        rows,
        worst_row,
        r_hat,
        verdict,
        statement,
        provenance: Provenance {
            config_hash: cfg.hash(),
            sample_stream: "scenario".into(),
            shape_fit_stream: match (&s.class, s.shape_fit) {
                (CoverClass::NormBall(BallShape::PcaEllipsoid), ShapeFit::SameSamples) => Some("scenario".into()),
                (CoverClass::NormBall(BallShape::PcaEllipsoid), ShapeFit::FreshSplit) => Some("shape_fit".into()),
                _ => None,
            },
            samples_file: None,
        },
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Runs the full pipeline with the config's own network.
pub fn assess(cfg: &AssessmentConfig) -> Result<AssessmentReport> {
    assess_with(&cfg.model, cfg)
}

/// Runs the full pipeline with an arbitrary black box in place of `cfg.model`.
pub fn assess_with(f: &dyn BlackBox, cfg: &AssessmentConfig) -> Result<AssessmentReport> {
    let started = Instant::now();
    let data = draw_scenarios(f, cfg)?;
    solve_scenarios(cfg, &data, started)
}

/// One report per `λ`, all on the same scenario samples (and fitted shape).
pub fn sweep_lambda(cfg: &AssessmentConfig, lambdas: &[f64]) -> Result<Vec<AssessmentReport>> {
    sweep_lambda_with(&cfg.model, cfg, lambdas)
}

pub fn sweep_lambda_with(f: &dyn BlackBox, cfg: &AssessmentConfig, lambdas: &[f64]) -> Result<Vec<AssessmentReport>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambda sweep needs at least one value"));
    }
    if lambdas.iter().any(|l| l.is_nan() || *l < 0.0) {
        return Err(Error::invalid("lambda values must be >= 0"));
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("lambda values must be sorted ascending"));
    }
    let started = Instant::now();
    let data = draw_scenarios(f, cfg)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let mut c = cfg.clone();
            c.settings.regularizer = Regularizer { kind: cfg.settings.regularizer.kind, lambda };
            c.settings.regularizer.validate()?;
            solve_scenarios(&c, &data, started)
        })
        .collect()
}
