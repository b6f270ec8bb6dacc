//! Sample-size bound and scenario-program solvers.
//!
//! The scenario program is
//!
//! ```text
//! maximize    r̂(θ) - λ v(θ)
//! subject to  y_j ∈ h(θ),  j = 1..N
//! ```
//!
//! For half-spaces along the safety row the optimum is the smallest sample
//! safety level. For norm balls the optimal radius for a fixed center is
//! `R(ȳ) = max_j ‖y_j - ȳ‖`, which leaves the convex, nonsmooth problem
//!
//! ```text
//! minimize over ȳ:  -aᵀȳ + ‖a‖_* R(ȳ) + λ v(R(ȳ))
//! ```
//!
//! solved here by a subgradient-driven ellipsoid method with best-iterate
//! tracking.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{approx_robustness, CoverParams, NormSpec, Regularizer, RegularizerKind};
use crate::safeset::SafetyRow;

/// Radius reported when every sample coincides with the optimal center.
pub const MIN_RADIUS: f64 = 1e-12;

/// Without a volume penalty the objective keeps improving, ever more slowly,
/// as the ball grows. A solution whose radius reaches this fraction of the cap
/// is reported as [`SolveStatus::RadiusCapped`]: its exact position depends on
/// the cap.
pub const CAPPED_FRACTION: f64 = 0.01;

/// `⌈(2/ε)(ln(1/δ) + p)⌉`: enough samples for the scenario solution to be an
/// `ε`-cover with confidence `1 - δ`.
pub fn sample_size(eps: f64, delta: f64, p: usize) -> Result<usize> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    if p == 0 {
        return Err(Error::invalid("parameter dimension p must be at least 1"));
    }
    let n = (2.0 / eps) * ((1.0 / delta).ln() + p as f64);
    Ok(n.ceil() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Iteration budget for the ball solver.
    pub max_iter: usize,
    /// Stop once the certified optimality gap is below `tol_obj · max(1, |objective|)`.
    pub tol_obj: f64,
    /// Stop once the search region shrinks below `tol_step` times its initial size.
    pub tol_step: f64,
    /// Radius cap as a multiple of the sample-set diameter.
    pub radius_cap_multiplier: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 50_000,
            tol_obj: 1e-12,
            tol_step: 1e-13,
            radius_cap_multiplier: 1e3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if !(self.tol_obj >= 0.0 && self.tol_step > 0.0 && self.tol_step < 1.0) {
            return Err(Error::invalid("tolerances must satisfy tol_obj >= 0 and 0 < tol_step < 1"));
        }
        if !(self.radius_cap_multiplier.is_finite() && self.radius_cap_multiplier > 0.0) {
            return Err(Error::invalid("radius cap multiplier must be positive"));
        }
        Ok(())
    }
}

/// Concrete cover family of a scenario problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemClass {
    NormBall(NormSpec),
    HalfSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Iteration budget exhausted; the best feasible iterate is returned.
    IterationLimit,
    /// The radius cap is active (unregularized ball problems have no finite maximizer).
    RadiusCapped,
}

#[derive(Debug, Clone)]
pub struct ScenarioProblem {
    /// One sampled output per row.
    outputs: DMatrix<f64>,
    row: SafetyRow,
    class: ProblemClass,
    regularizer: Regularizer,
    options: SolverOptions,
}

impl ScenarioProblem {
    pub fn new(
        outputs: DMatrix<f64>,
        row: SafetyRow,
        class: ProblemClass,
        regularizer: Regularizer,
        options: SolverOptions,
    ) -> Result<Self> {
        if outputs.nrows() == 0 {
            return Err(Error::invalid("scenario problem needs at least one sample"));
        }
        if outputs.ncols() != row.dim() {
            return Err(Error::dim(row.dim(), outputs.ncols(), "sample width vs safety row"));
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite output sample"));
        }
        regularizer.validate()?;
        options.validate()?;
        match &class {
            ProblemClass::NormBall(norm) => norm.check_dim(row.dim())?,
            ProblemClass::HalfSpace => {
                if regularizer.is_active() {
                    return Err(Error::invalid(
                        "volume regularizers need a radius; the half-space class has none",
                    ));
                }
            }
        }
        Ok(ScenarioProblem { outputs, row, class, regularizer, options })
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn row(&self) -> &SafetyRow {
        &self.row
    }

    pub fn class(&self) -> &ProblemClass {
        &self.class
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.outputs.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSolution {
    pub theta_star: CoverParams,
    pub r_hat: f64,
    /// `r̂(θ*) - λ v(θ*)`, or `-v(θ*)` in pure-localization mode.
    pub objective: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Exact solution for the half-space class: `ρ* = min_j aᵀy_j + b`.
pub fn solve_half_space(pr: &ScenarioProblem) -> Result<ScenarioSolution> {
    if pr.class != ProblemClass::HalfSpace {
        return Err(Error::invalid("solve_half_space called on a norm-ball problem"));
    }
    let rho = pr
        .outputs
        .row_iter()
        .map(|y| pr.row.level_unchecked(y.transpose().as_slice()))
        .fold(f64::INFINITY, f64::min);
    let theta_star = CoverParams::HalfSpace { offset: rho };
    Ok(ScenarioSolution {
        r_hat: approx_robustness(&theta_star, &pr.row),
        objective: rho,
        theta_star,
        iterations: 0,
        status: SolveStatus::Optimal,
    })
}

/// Farthest-sample radius and the lowest index attaining it.
fn enclosing_radius(norm: &NormSpec, points: &[Vec<f64>], center: &[f64], buf: &mut [f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, y) in points.iter().enumerate() {
        for ((b, y), c) in buf.iter_mut().zip(y).zip(center) {
            *b = y - c;
        }
        let d = norm.norm(buf);
        if d > best.0 {
            best = (d, j);
        }
    }
    best
}

/// Euclidean-to-norm constant: `‖v‖₂ <= κ ‖v‖` for every `v`.
fn euclid_factor(norm: &NormSpec, dim: usize) -> f64 {
    match norm {
        NormSpec::L1 | NormSpec::L2 => 1.0,
        NormSpec::Linf => (dim as f64).sqrt(),
        NormSpec::Q(q) => 1.0 / SymmetricEigen::new(q.matrix().clone()).eigenvalues.min().sqrt(),
    }
}

struct BallSolver<'a> {
    norm: &'a NormSpec,
    row: &'a SafetyRow,
    reg: &'a Regularizer,
    points: Vec<Vec<f64>>,
    dual: f64,
    cap: f64,
    buf: Vec<f64>,
    radius_grad: Vec<f64>,
}

impl BallSolver<'_> {
    /// Minimization objective at `center` given its enclosing radius.
    fn value(&self, center: &[f64], radius: f64) -> f64 {
        if self.reg.is_pure_localization() {
            radius
        } else {
            -self.row.level_unchecked(center) + self.dual * radius + self.reg.penalty(radius)
        }
    }

    /// Enclosing radius at `center`, leaving `∂R(center)` in `radius_grad`.
    fn radius_with_grad(&mut self, center: &[f64]) -> f64 {
        let (radius, far) = enclosing_radius(self.norm, &self.points, center, &mut self.buf);
        for ((b, c), y) in self.buf.iter_mut().zip(center).zip(&self.points[far]) {
            *b = c - y;
        }
        self.norm.subgradient(&self.buf, &mut self.radius_grad);
        radius
    }

    /// Subgradient of [`Self::value`] from `∂R`.
    fn gradient(&self, radius: f64, out: &mut [f64]) {
        if self.reg.is_pure_localization() {
            out.copy_from_slice(&self.radius_grad);
            return;
        }
        let weight = self.dual + if self.reg.is_active() { self.reg.lambda * self.reg.slope(radius) } else { 0.0 };
        for ((o, a), g) in out.iter_mut().zip(&self.row.a).zip(&self.radius_grad) {
            *o = -a + weight * g;
        }
    }
}

/// Norm-ball scenario program via the enclosing-radius reduction.
///
/// The reduced objective is minimized with a deep-cut ellipsoid method driven
/// by its subgradients. The starting ball provably contains a minimizer, and
/// every objective cut yields a lower bound `φ(x) - √(gᵀPg)` on the optimum,
/// so termination on `best - lower <= tol_obj · max(1, |best|)` certifies the
/// optimality gap. Only iterates inside the radius cap are kept as
/// candidates.
pub fn solve_norm_ball(pr: &ScenarioProblem) -> Result<ScenarioSolution> {
    let ProblemClass::NormBall(norm) = &pr.class else {
        return Err(Error::invalid("solve_norm_ball called on a half-space problem"));
    };
    let opts = &pr.options;
    let dim = pr.row.dim();
    let points = pr.points();
    let n = points.len() as f64;

    let mean: Vec<f64> = (0..dim).map(|k| points.iter().map(|y| y[k]).sum::<f64>() / n).collect();
    let mut buf = vec![0.0; dim];
    let (spread, _) = enclosing_radius(norm, &points, &mean, &mut buf);
    let diameter = if spread > 0.0 { 2.0 * spread } else { 1.0 };
    let kappa = euclid_factor(norm, dim);

    let mut solver = BallSolver {
        norm,
        row: &pr.row,
        reg: &pr.regularizer,
        points,
        dual: norm.dual_norm(&pr.row.a),
        cap: opts.radius_cap_multiplier * diameter,
        buf,
        radius_grad: vec![0.0; dim],
    };
    let unbounded = !solver.reg.is_active();

    // A minimizer has R(ȳ*) <= bound, hence ‖ȳ* - mean‖₂ <= κ (bound + spread).
    let start_value = solver.value(&mean, spread);
    let radius_bound = if solver.reg.is_pure_localization() {
        spread
    } else if unbounded {
        solver.cap
    } else {
        // φ(ȳ) >= -min_j s(y_j) + λ v(R(ȳ)) and φ(ȳ*) <= φ(mean).
        let min_level = solver.points.iter().map(|y| pr.row.level_unchecked(y)).fold(f64::INFINITY, f64::min);
        let budget = ((start_value + min_level) / solver.reg.lambda).max(0.0);
        match solver.reg.kind {
            RegularizerKind::Radius => budget,
            RegularizerKind::RadiusSquared => budget.sqrt(),
            RegularizerKind::None => unreachable!("active regularizer"),
        }
        .min(solver.cap)
    };
    let rho = 1.1 * kappa * (radius_bound + spread) + 1e-12 * diameter.max(1.0);

    let mut center = mean.clone();
    let mut best_center = mean.clone();
    let mut best_value = start_value;
    let mut lower = f64::NEG_INFINITY;
    let mut grad = vec![0.0; dim];
    let mut iterations = 0usize;
    let mut converged = false;

    // Ellipsoid {x : (x - center)ᵀ P⁻¹ (x - center) <= 1}; a segment in 1-D.
    let mut shape = DMatrix::<f64>::identity(dim, dim) * (rho * rho);
    let size_floor = opts.tol_step * rho;

    while iterations < opts.max_iter {
        iterations += 1;
        let radius = solver.radius_with_grad(&center);
        let cut_depth;
        if radius > solver.cap {
            grad.copy_from_slice(&solver.radius_grad);
            cut_depth = radius - solver.cap;
        } else {
            let value = solver.value(&center, radius);
            if value < best_value {
                best_value = value;
                best_center.copy_from_slice(&center);
            }
            solver.gradient(radius, &mut grad);
            let width = quad_width(&shape, &grad);
            if width == 0.0 {
                // Zero subgradient: the current point is a minimizer.
                converged = true;
                break;
            }
            lower = lower.max(value - width);
            cut_depth = value - best_value;
        }
        if best_value - lower <= opts.tol_obj * best_value.abs().max(1.0) {
            converged = true;
            break;
        }
        let width = quad_width(&shape, &grad);
        if width == 0.0 {
            break;
        }
        let alpha = cut_depth / width;
        if alpha >= 1.0 {
            // The cut removes the whole ellipsoid: only round-off can do this.
            converged = true;
            break;
        }
        let pg = &shape * DVector::from_column_slice(&grad) / width;
        if dim == 1 {
            let half = shape[(0, 0)].sqrt();
            let new_half = half * (1.0 - alpha) / 2.0;
            center[0] -= pg[0] * (half - new_half) / half.max(f64::MIN_POSITIVE);
            shape[(0, 0)] = new_half * new_half;
        } else {
            let nf = dim as f64;
            let step = (1.0 + nf * alpha) / (nf + 1.0);
            for (c, g) in center.iter_mut().zip(pg.iter()) {
                *c -= step * g;
            }
            let shrink = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);
            let rank_one = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
            shape = (&shape - (&pg * pg.transpose()) * rank_one) * shrink;
            shape = (&shape + shape.transpose()) * 0.5;
        }
        if shape.diagonal().max().sqrt() < size_floor {
            converged = true;
            break;
        }
    }

    let (radius, _) = enclosing_radius(norm, &solver.points, &best_center, &mut solver.buf);
    let capped = unbounded && radius >= CAPPED_FRACTION * solver.cap;
    let radius = radius.max(MIN_RADIUS);
    let theta_star = CoverParams::norm_ball(norm.clone(), best_center, radius)?;
    let r_hat = approx_robustness(&theta_star, &pr.row);
    let objective = if pr.regularizer.is_pure_localization() {
        -pr.regularizer.value(radius)
    } else {
        r_hat - pr.regularizer.penalty(radius)
    };
    let status = if capped {
        SolveStatus::RadiusCapped
    } else if converged {
        SolveStatus::Optimal
    } else {
        SolveStatus::IterationLimit
    };
    Ok(ScenarioSolution { theta_star, r_hat, objective, iterations, status })
}

/// `√(gᵀPg)`.
fn quad_width(shape: &DMatrix<f64>, g: &[f64]) -> f64 {
    let n = g.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[i] * shape[(i, j)] * g[j];
        }
    }
    acc.max(0.0).sqrt()
}

/// Dispatches to the solver for the problem's class.
pub fn solve(pr: &ScenarioProblem) -> Result<ScenarioSolution> {
    match pr.class {
        ProblemClass::HalfSpace => solve_half_space(pr),
        ProblemClass::NormBall(_) => solve_norm_ball(pr),
    }
}
