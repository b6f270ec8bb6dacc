//! Monte Carlo checks of what a scenario certificate promises.
//!
//! All estimators draw from [`Stream::Validation`], which never overlaps the
//! scenario samples for the same seed.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::distributions::InputDistribution;
use crate::error::{Error, Result};
use crate::geometry::{contains, CoverParams, MEMBERSHIP_TOL};
use crate::model::BlackBox;
use crate::rng::Stream;
use crate::safeset::SafetyRow;

const CHUNK: usize = 1 << 14;

/// Confidence level of [`Coverage::ci_low`].
pub const COVERAGE_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub p_hat: f64,
    /// One-sided Clopper–Pearson lower bound at [`COVERAGE_CONFIDENCE`].
    pub ci_low: f64,
    #[serde(rename = "M")]
    pub m: usize,
}

/// Evaluates `f` on `m` fresh inputs, chunk by chunk, handing each output to `visit`.
fn for_each_output(
    f: &dyn BlackBox,
    dist: &InputDistribution,
    m: usize,
    seed: u64,
    mut visit: impl FnMut(&[f64]),
) -> Result<()> {
    if dist.dim() != f.input_dim() {
        return Err(Error::dim(f.input_dim(), dist.dim(), "distribution vs model input"));
    }
    let mut start = 0;
    let mut y = vec![0.0; f.output_dim()];
    while start < m {
        let len = CHUNK.min(m - start);
        let xs = dist.sample_range(start, len, seed, Stream::Validation)?;
        let ys = f.evaluate_batch(&xs)?;
        for row in ys.row_iter() {
            for (dst, v) in y.iter_mut().zip(row.iter()) {
                *dst = *v;
            }
            visit(&y);
        }
        start += len;
    }
    Ok(())
}

/// Safety levels of `m` fresh outputs, in draw order.
pub fn fresh_safety_levels(
    f: &dyn BlackBox,
    dist: &InputDistribution,
    row: &SafetyRow,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if row.dim() != f.output_dim() {
        return Err(Error::dim(f.output_dim(), row.dim(), "safety row vs model output"));
    }
    let mut levels = Vec::with_capacity(m);
    for_each_output(f, dist, m, seed, |y| levels.push(row.level_unchecked(y)))?;
    Ok(levels)
}

/// Lower one-sided Clopper–Pearson bound for `k` successes in `m` trials.
pub fn clopper_pearson_lower(k: usize, m: usize, confidence: f64) -> f64 {
    if k == 0 || m == 0 {
        return 0.0;
    }
    let alpha = 1.0 - confidence;
    if k == m {
        return alpha.powf(1.0 / m as f64);
    }
    // Solve I_p(k, m - k + 1) = α by bisection.
    let (a, b) = (k as f64, (m - k + 1) as f64);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Fraction of `m` fresh outputs inside the cover.
pub fn estimate_coverage(
    f: &dyn BlackBox,
    dist: &InputDistribution,
    cover: &CoverParams,
    row: &SafetyRow,
    m: usize,
    seed: u64,
) -> Result<Coverage> {
    if m == 0 {
        return Err(Error::invalid("coverage needs at least one sample"));
    }
    if row.dim() != f.output_dim() {
        return Err(Error::dim(f.output_dim(), row.dim(), "safety row vs model output"));
    }
    let mut inside = 0usize;
    for_each_output(f, dist, m, seed, |y| {
        if contains(cover, row, y, MEMBERSHIP_TOL) {
            inside += 1;
        }
    })?;
    Ok(Coverage {
        p_hat: inside as f64 / m as f64,
        ci_low: clopper_pearson_lower(inside, m, COVERAGE_CONFIDENCE),
        m,
    })
}

/// The `(⌊εM⌋ + 1)`-th smallest level, clamped to `M`.
pub fn empirical_quantile(levels: &[f64], eps: f64) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {eps}")));
    }
    if levels.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN safety level"));
    }
    let k = ((eps * levels.len() as f64).floor() as usize + 1).min(levels.len());
    let mut sorted = levels.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Plug-in estimate of the probabilistic robustness level `r̄(ε)`: the
/// empirical `ε`-quantile of `m` fresh safety levels. Requires `m >= 100/ε`.
pub fn estimate_prl(
    f: &dyn BlackBox,
    dist: &InputDistribution,
    row: &SafetyRow,
    eps: f64,
    m: usize,
    seed: u64,
) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    let needed = (100.0 / eps).ceil() as usize;
    if m < needed {
        return Err(Error::invalid(format!(
            "M = {m} is too small for epsilon = {eps}; need at least {needed}"
        )));
    }
    empirical_quantile(&fresh_safety_levels(f, dist, row, m, seed)?, eps)
}

/// Smallest safety level among `m` fresh outputs: an upper bound on the
/// deterministic robustness level that tightens as `m` grows.
pub fn empirical_min_safety(
    f: &dyn BlackBox,
    dist: &InputDistribution,
    row: &SafetyRow,
    m: usize,
    seed: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    Ok(fresh_safety_levels(f, dist, row, m, seed)?.into_iter().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BallNorm, Marginal};
    use crate::geometry::NormSpec;
    use crate::model::NetworkModel;

    fn row(a: &[f64], b: f64) -> SafetyRow {
        SafetyRow::new(a.to_vec(), b).unwrap()
    }

    fn square() -> InputDistribution {
        InputDistribution::UniformNormBall { norm: BallNorm::Linf, center: vec![0.0, 0.0], radius: 1.0 }
    }

    #[test]
    fn quantile_order_statistic() {
        assert_eq!(empirical_quantile(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&[4.0, 1.0, 3.0, 2.0], 1e-9).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&[4.0, 1.0, 3.0, 2.0], 1.0).unwrap(), 4.0);
        assert!(empirical_quantile(&[], 0.1).is_err());
    }

    #[test]
    fn quantile_monotone_in_eps() {
        let levels: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..100 {
            let q = empirical_quantile(&levels, k as f64 / 100.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn coverage_extremes() {
        let m = NetworkModel::identity(2);
        let r = row(&[0.0, 1.0], 0.5);
        let huge = CoverParams::norm_ball(NormSpec::L2, vec![0.0, 0.0], 100.0).unwrap();
        let c = estimate_coverage(&m, &square(), &huge, &r, 1000, 1).unwrap();
        assert_eq!(c.p_hat, 1.0);
        assert!(c.ci_low > 0.99 && c.ci_low < 1.0);
        let far = CoverParams::norm_ball(NormSpec::L2, vec![10.0, 10.0], 1.0).unwrap();
        let c = estimate_coverage(&m, &square(), &far, &r, 1000, 1).unwrap();
        assert_eq!(c.p_hat, 0.0);
        assert_eq!(c.ci_low, 0.0);
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // Exact for k = m: α^{1/m}.
        assert!((clopper_pearson_lower(10, 10, 0.99) - 0.01f64.powf(0.1)).abs() < 1e-12);
        // k = 1: lower bound solves 1 - (1 - p)^m = α.
        let p = clopper_pearson_lower(1, 20, 0.99);
        assert!((1.0 - (1.0 - p).powi(20) - 0.01).abs() < 1e-9);
        // Bound sits below the point estimate.
        assert!(clopper_pearson_lower(900, 1000, 0.99) < 0.9);
    }

    #[test]
    fn prl_on_constant_network() {
        let text = r#"{"layers":[{"weights":[[0,0]],"bias":[2],"activation":"identity"}]}"#;
        let m = NetworkModel::from_json(text).unwrap();
        let r = row(&[3.0], -1.0);
        assert_eq!(estimate_prl(&m, &square(), &r, 0.1, 1000, 4).unwrap(), 5.0);
        assert!(estimate_prl(&m, &square(), &r, 0.1, 10, 4).is_err());
    }

    #[test]
    fn min_safety_point_mass() {
        let point = InputDistribution::Product {
            marginals: vec![Marginal::Constant { value: 0.25 }, Marginal::Constant { value: -2.0 }],
        };
        let v = empirical_min_safety(&NetworkModel::identity(2), &point, &row(&[1.0, 1.0], 0.5), 10, 0).unwrap();
        assert_eq!(v, 0.25 - 2.0 + 0.5);
    }

    #[test]
    fn min_safety_nested_prefixes() {
        let m = NetworkModel::identity(2);
        let r = row(&[1.0, 0.3], 0.0);
        let small = empirical_min_safety(&m, &square(), &r, 100, 9).unwrap();
        let big = empirical_min_safety(&m, &square(), &r, 5000, 9).unwrap();
        assert!(big <= small);
    }

    #[test]
    fn dimension_checks() {
        let m = NetworkModel::identity(3);
        assert!(fresh_safety_levels(&m, &square(), &row(&[1.0, 0.0, 0.0], 0.0), 10, 0).is_err());
    }
}
