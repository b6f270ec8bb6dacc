//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use scenario_cert::assess::{assess, draw_scenarios, sweep_lambda, Verdict};
use scenario_cert::distributions::{BallNorm, InputDistribution};
use scenario_cert::experiments::{illustrative_config, random_relu_network, random_safety_row, relu2d_config};
use scenario_cert::geometry::{
    approx_robustness, approx_robustness_oracle, contains, BallShape, CoverClass, CoverParams, NormSpec, QNorm,
    Regularizer, RegularizerKind, MEMBERSHIP_TOL,
};
use scenario_cert::rng::{indexed_rng, Stream};
use scenario_cert::scenario::{
    sample_size, solve, solve_half_space, ProblemClass, ScenarioProblem, SolveStatus, SolverOptions,
};
use scenario_cert::validate::{estimate_coverage, estimate_prl};
use scenario_cert::SafetyRow;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn random_q<R: Rng>(rng: &mut R, n: usize) -> QNorm {
    let m = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    QNorm::new(&m * m.transpose() + DMatrix::identity(n, n) * 0.2).unwrap()
}

fn random_norm<R: Rng>(rng: &mut R, k: usize, n: usize) -> NormSpec {
    match k % 4 {
        0 => NormSpec::L1,
        1 => NormSpec::L2,
        2 => NormSpec::Linf,
        _ => NormSpec::Q(random_q(rng, n)),
    }
}

fn random_row<R: Rng>(rng: &mut R, n: usize) -> SafetyRow {
    loop {
        let a: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
        if a.iter().any(|v| v.abs() > 1e-3) {
            return SafetyRow::new(a, 3.0 * gauss(rng)).unwrap();
        }
    }
}

fn random_cloud<R: Rng>(rng: &mut R, n: usize, dim: usize) -> DMatrix<f64> {
    let offset: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
    let scale: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..3.0)).collect();
    DMatrix::from_fn(n, dim, |_, j| offset[j] + scale[j] * rng.random::<f64>())
}

fn sample_size_exact() -> Outcome {
    let t = Instant::now();
    let n = sample_size(0.1, 1e-5, 3).map_err(|e| e.to_string())?;
    let dt = t.elapsed();
    check(n == 291, || format!("got N = {n}"))?;
    check(dt < Duration::from_millis(1), || format!("took {dt:?}"))?;
    Ok("sample_size(0.1, 1e-5, 3) = 291".into())
}

/// Closed form vs boundary search with 2·10⁵ directions; the tolerance is
/// relative to `|b| + |aᵀȳ| + r‖a‖_*`.
fn closed_form_vs_oracle() -> Outcome {
    const DIRS: usize = 200_000;
    let mut rng = indexed_rng(1, Stream::Auxiliary, 0);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let n = 2 + k % 2;
        let norm = random_norm(&mut rng, k / 2, n);
        let center: Vec<f64> = (0..n).map(|_| 3.0 * gauss(&mut rng)).collect();
        let radius = rng.random_range(0.01..5.0);
        let row = random_row(&mut rng, n);
        let cover = CoverParams::norm_ball(norm.clone(), center.clone(), radius).unwrap();
        let closed = approx_robustness(&cover, &row);
        let oracle = approx_robustness_oracle(&cover, &row, DIRS).map_err(|e| e.to_string())?;
        let at: f64 = row.a.iter().zip(&center).map(|(a, c)| a * c).sum();
        let scale = row.b.abs() + at.abs() + radius * norm.dual_norm(&row.a);
        let rel = (closed - oracle).abs() / scale;
        worst = worst.max(rel);
        check(rel <= 1e-4, || format!("instance {k} ({}, n_y={n}): closed {closed}, oracle {oracle}", norm.name()))?;
    }
    Ok(format!("200 instances, worst relative gap {worst:.2e} (tol 1e-4)"))
}

/// Best `(t, R, r̂)` over centers `(1, t)` for the triangle `(0,0), (2,0), (1,1)`
/// with `ℓ2` balls, `a = (0, 1)`, `b = 0.5`, `v = r²`, `λ = 0.1`.
fn triangle_grid_oracle() -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..=300_000 {
        let t = 3.0 * i as f64 / 300_000.0;
        let r = (1.0 + t * t).sqrt().max((1.0 - t).abs());
        let r_hat = 0.5 + t - r;
        let obj = r_hat - 0.1 * r * r;
        if obj > best.3 {
            best = (t, r, r_hat, obj);
        }
    }
    (best.0, best.1, best.2)
}

/// Seed for the comparison instance. Sample fluctuation moves the radius by
/// up to about 0.1 from the whole-triangle values, so the seed is pinned.
const RELU2D_SEED: u64 = 42;

fn relu2d_reproduction() -> Outcome {
    let l2 = CoverClass::NormBall(BallShape::Fixed(NormSpec::L2));
    let cfg = relu2d_config(l2.clone(), Regularizer::radius_squared(0.1), RELU2D_SEED);
    let reg = assess(&cfg).map_err(|e| e.to_string())?;
    check(reg.n == 291, || format!("N = {}", reg.n))?;
    check(reg.r_hat > 0.0 && reg.verdict == Verdict::Certified, || {
        format!("regularized run: r_hat {} verdict {:?}", reg.r_hat, reg.verdict)
    })?;
    let loc = Regularizer::pure_localization(RegularizerKind::RadiusSquared);
    let min_ball = assess(&relu2d_config(l2, loc, RELU2D_SEED)).map_err(|e| e.to_string())?;
    check(min_ball.r_hat < 0.0 && min_ball.verdict == Verdict::NotCertified, || {
        format!("min-ball run: r_hat {} verdict {:?}", min_ball.r_hat, min_ball.verdict)
    })?;

    // The solver is exact on its own samples: compare with a 2-D grid over centers.
    let data = draw_scenarios(&cfg.model, &cfg).map_err(|e| e.to_string())?;
    let sample_obj = |c: [f64; 2]| {
        let r = data.outputs.row_iter().map(|y| ((y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2)).sqrt()).fold(0.0, f64::max);
        0.5 + c[1] - r - 0.1 * r * r
    };
    let mut grid_best = f64::NEG_INFINITY;
    for i in 0..=500 {
        for j in 0..=750 {
            grid_best = grid_best.max(sample_obj([0.5 + i as f64 * 0.002, 0.5 + j as f64 * 0.002]));
        }
    }
    check(reg.rows[0].objective >= grid_best - 1e-6, || {
        format!("solver objective {} below sample grid {grid_best}", reg.rows[0].objective)
    })?;

    let (t, r_star, r_hat_star) = triangle_grid_oracle();
    let theta = &reg.rows[0].theta_star;
    let c = theta.center().unwrap();
    let r = theta.radius().unwrap();
    let errs = [(c[0] - 1.0).abs(), (c[1] - t).abs(), (r - r_star).abs(), (reg.r_hat - r_hat_star).abs()];
    check(errs.iter().all(|e| *e <= 0.1), || {
        format!(
            "center ({:.4}, {:.4}) r {r:.4} r_hat {:.4} vs oracle (1, {t:.4}) r {r_star:.4} r_hat {r_hat_star:.4}",
            c[0], c[1], reg.r_hat
        )
    })?;
    Ok(format!(
        "λ=0.1: center ({:.3}, {:.3}) r {r:.3} r_hat {:.3} [oracle (1, {t:.3}) {r_star:.3} {r_hat_star:.3}]; min-ball r_hat {:.3}",
        c[0], c[1], reg.r_hat, min_ball.r_hat
    ))
}

fn coverage_frequency() -> Outcome {
    let l2 = CoverClass::NormBall(BallShape::Fixed(NormSpec::L2));
    let mut good = 0;
    let mut lowest = 1.0f64;
    let mut n = 0;
    for seed in 0..100 {
        let mut cfg = relu2d_config(l2.clone(), Regularizer::radius_squared(0.1), seed);
        cfg.settings.delta = 0.01;
        let report = assess(&cfg).map_err(|e| e.to_string())?;
        n = report.n;
        let cov = estimate_coverage(
            &cfg.model,
            &cfg.distribution,
            &report.rows[0].theta_star,
            &cfg.safe_set.rows()[0],
            100_000,
            seed,
        )
        .map_err(|e| e.to_string())?;
        lowest = lowest.min(cov.p_hat);
        if cov.p_hat >= 0.9 {
            good += 1;
        }
    }
    check(good >= 95, || format!("only {good}/100 runs reached coverage 0.9"))?;
    Ok(format!("{good}/100 runs with p_hat >= 0.9 (N = {n}, lowest p_hat {lowest:.4})"))
}

fn prl_ordering() -> Outcome {
    let mut good = 0;
    for k in 0..50u64 {
        let mut rng = indexed_rng(k, Stream::Auxiliary, 7);
        let n_x = rng.random_range(1..=5);
        let hidden = rng.random_range(3..=12);
        let f = random_relu_network(&[n_x, hidden, 2], 1000 + k);
        let center: Vec<f64> = (0..n_x).map(|_| gauss(&mut rng)).collect();
        let dist = InputDistribution::UniformNormBall { norm: BallNorm::Linf, center: center.clone(), radius: 0.5 };
        let row = random_safety_row(&f, &center, rng.random_range(-0.5..1.5), 2000 + k);
        let safe = scenario_cert::SafeSet::new(vec![row.clone()]).unwrap();
        let cfg = scenario_cert::AssessmentConfig {
            model: f.clone(),
            distribution: dist.clone(),
            safe_set: safe,
            settings: scenario_cert::Settings::new(
                0.1,
                1e-5,
                CoverClass::NormBall(BallShape::Fixed(NormSpec::L2)),
                Regularizer::radius_squared(0.1),
                k,
            ),
        };
        let report = assess(&cfg).map_err(|e| e.to_string())?;
        let prl = estimate_prl(&f, &dist, &row, 0.1, 100_000, k).map_err(|e| e.to_string())?;
        if report.r_hat <= prl {
            good += 1;
        }
    }
    check(good >= 49, || format!("only {good}/50 runs had r_hat <= estimated prl"))?;
    Ok(format!("{good}/50 networks with r_hat <= estimated r̄(0.1)"))
}

fn affinity_and_concavity() -> Outcome {
    let mut rng = indexed_rng(3, Stream::Auxiliary, 0);
    let mut worst_affine = 0.0f64;
    for k in 0..4 {
        for s in 0..10_000 {
            let n = 2 + s % 2;
            let norm = random_norm(&mut rng, k, n);
            let row = random_row(&mut rng, n);
            let theta = |rng: &mut rand_chacha::ChaCha8Rng| -> (Vec<f64>, f64) {
                ((0..n).map(|_| 3.0 * gauss(rng)).collect(), rng.random_range(0.01..5.0))
            };
            let (c0, r0) = theta(&mut rng);
            let (c1, r1) = theta(&mut rng);
            let t: f64 = rng.random();
            let ct: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            let rt = (1.0 - t) * r0 + t * r1;
            let level = |c: &[f64], r: f64| {
                approx_robustness(&CoverParams::norm_ball(norm.clone(), c.to_vec(), r).unwrap(), &row)
            };
            let gap = (level(&ct, rt) - ((1.0 - t) * level(&c0, r0) + t * level(&c1, r1))).abs();
            worst_affine = worst_affine.max(gap);
            check(gap <= 1e-10, || format!("{} segment {s}: affine gap {gap:e}", norm.name()))?;
        }
    }
    // Reduced scenario objective r̂(ȳ, R(ȳ)) - λ v(R(ȳ)) along center segments.
    let mut worst_concave = 0.0f64;
    let mut checked = 0;
    for kind in [RegularizerKind::Radius, RegularizerKind::RadiusSquared] {
        for lambda in [0.0, 0.1, 1.0] {
            let reg = Regularizer { kind, lambda };
            for s in 0..400 {
                let n = 2 + s % 2;
                let norm = random_norm(&mut rng, s, n);
                let row = random_row(&mut rng, n);
                let pts = random_cloud(&mut rng, 20, n);
                let obj = |c: &[f64]| {
                    let r = pts
                        .row_iter()
                        .map(|y| norm.norm(&y.iter().zip(c).map(|(y, c)| y - c).collect::<Vec<_>>()))
                        .fold(0.0, f64::max);
                    approx_robustness(&CoverParams::norm_ball(norm.clone(), c.to_vec(), r).unwrap(), &row)
                        - reg.penalty(r)
                };
                let c0: Vec<f64> = (0..n).map(|_| 3.0 * gauss(&mut rng)).collect();
                let c1: Vec<f64> = (0..n).map(|_| 3.0 * gauss(&mut rng)).collect();
                let (j0, j1) = (obj(&c0), obj(&c1));
                for t in [0.1, 0.25, 0.5, 0.75, 0.9] {
                    let ct: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                    let chord = (1.0 - t) * j0 + t * j1;
                    let excess = chord - obj(&ct);
                    worst_concave = worst_concave.max(excess);
                    checked += 1;
                    check(excess <= 1e-9 * (1.0 + chord.abs()), || {
                        format!("{} λ={lambda} {kind:?}: objective below chord by {excess:e}", norm.name())
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "40000 segments, worst affine gap {worst_affine:.1e}; {checked} concavity checks, worst chord excess {worst_concave:.1e}"
    ))
}

fn half_space_closed_form() -> Outcome {
    let mut rng = indexed_rng(4, Stream::Auxiliary, 0);
    for k in 0..1000 {
        let n_y = rng.random_range(1..=4);
        let count = rng.random_range(1..300);
        let pts = random_cloud(&mut rng, count, n_y);
        let row = random_row(&mut rng, n_y);
        let brute = pts.row_iter().map(|y| row.level(y.transpose().as_slice()).unwrap()).fold(f64::INFINITY, f64::min);
        let pr = ScenarioProblem::new(pts, row, ProblemClass::HalfSpace, Regularizer::none(), SolverOptions::default())
            .map_err(|e| e.to_string())?;
        let got = solve_half_space(&pr).map_err(|e| e.to_string())?.r_hat;
        check(got == brute, || format!("instance {k}: {got} != {brute}"))?;
    }
    Ok("1000 instances, exact equality".into())
}

fn illustrative_structure() -> Outcome {
    let cfg = illustrative_config(Regularizer::radius_squared(0.0), 7);
    let reports = sweep_lambda(&cfg, &[0.0, 1e-4, 1.0]).map_err(|e| e.to_string())?;
    let data = draw_scenarios(&cfg.model, &cfg).map_err(|e| e.to_string())?;
    check(data.outputs.nrows() == 291, || format!("N = {}", data.outputs.nrows()))?;
    let row = &cfg.safe_set.rows()[0];
    for rep in &reports {
        let theta = &rep.rows[0].theta_star;
        for y in data.outputs.row_iter() {
            check(contains(theta, row, &[y[0], y[1]], MEMBERSHIP_TOL), || format!("λ={}: sample outside cover", rep.lambda))?;
        }
    }
    let r_hats: Vec<f64> = reports.iter().map(|r| r.r_hat).collect();
    let radii: Vec<f64> = reports.iter().map(|r| r.rows[0].theta_star.radius().unwrap()).collect();
    check(r_hats.windows(2).all(|w| w[1] <= w[0]), || format!("r_hat not nonincreasing: {r_hats:?}"))?;
    check(radii.windows(2).all(|w| w[1] <= w[0]), || format!("radius not nonincreasing: {radii:?}"))?;
    check(reports[0].rows[0].status == SolveStatus::RadiusCapped, || {
        format!("λ=0 status {:?}", reports[0].rows[0].status)
    })?;
    Ok(format!(
        "r_hat {:.4} >= {:.4} >= {:.4}; radius {:.3e} >= {:.4} >= {:.4}; status at λ=0: {:?}",
        r_hats[0], r_hats[1], r_hats[2], radii[0], radii[1], radii[2], reports[0].rows[0].status
    ))
}

/// Solver-precision slack: `1e-7` relative on both `r̂` and the radius.
fn lambda_monotonicity() -> Outcome {
    let mut rng = indexed_rng(5, Stream::Auxiliary, 0);
    for k in 0..100 {
        let count = rng.random_range(5..60);
        let pts = random_cloud(&mut rng, count, 2);
        let row = random_row(&mut rng, 2);
        let norm = random_norm(&mut rng, k, 2);
        let kind = if k % 2 == 0 { RegularizerKind::RadiusSquared } else { RegularizerKind::Radius };
        let mut prev: Option<(f64, f64)> = None;
        for lambda in [0.001, 0.01, 0.1, 1.0, 10.0] {
            let pr = ScenarioProblem::new(
                pts.clone(),
                row.clone(),
                ProblemClass::NormBall(norm.clone()),
                Regularizer { kind, lambda },
                SolverOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            let sol = solve(&pr).map_err(|e| e.to_string())?;
            let r = sol.theta_star.radius().unwrap();
            if let Some((ph, pr_)) = prev {
                check(sol.r_hat <= ph + 1e-7 * (1.0 + ph.abs()), || {
                    format!("instance {k} λ={lambda}: r_hat {} > {ph}", sol.r_hat)
                })?;
                check(r <= pr_ * (1.0 + 1e-7), || format!("instance {k} λ={lambda}: radius {r} > {pr_}"))?;
            }
            prev = Some((sol.r_hat, r));
        }
    }
    Ok("100 clouds x 5 λ values".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("sample_size_exact", sample_size_exact, Duration::from_millis(1)),
        ("closed_form_vs_oracle", closed_form_vs_oracle, Duration::from_secs(30)),
        ("relu2d_reproduction", relu2d_reproduction, Duration::from_secs(10)),
        ("coverage_frequency", coverage_frequency, Duration::from_secs(300)),
        ("prl_ordering", prl_ordering, Duration::from_secs(300)),
        ("affinity_and_concavity", affinity_and_concavity, Duration::from_secs(300)),
        ("half_space_closed_form", half_space_closed_form, Duration::from_secs(60)),
        ("illustrative_structure", illustrative_structure, Duration::from_secs(60)),
        ("lambda_monotonicity", lambda_monotonicity, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let t = Instant::now();
        let outcome = run();
        let dt = t.elapsed();
        let outcome = match outcome {
            Ok(detail) if dt > budget && budget > Duration::from_millis(1) => {
                Err(format!("{detail}; over time budget {budget:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name} ({:.3}s): {detail}", dt.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({:.3}s): {why}", dt.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
