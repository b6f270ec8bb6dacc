//! Input distributions and their seeded samplers.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, Error, Result};
use crate::rng::{indexed_rng, Stream};

/// Norms for which exact volume-uniform ball samplers exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BallNorm {
    L1,
    L2,
    Linf,
}

impl BallNorm {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            BallNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            BallNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            BallNorm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// One-dimensional marginal of a product distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
    Constant { value: f64 },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                Err(Error::invalid(format!("uniform marginal needs finite low <= high, got [{low}, {high}]")))
            }
            Marginal::Normal { mean, std } if !(mean.is_finite() && std.is_finite() && std >= 0.0) => {
                Err(Error::invalid(format!("normal marginal needs finite mean and std >= 0, got ({mean}, {std})")))
            }
            Marginal::Constant { value } if !value.is_finite() => Err(Error::invalid("non-finite constant marginal")),
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Marginal::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            Marginal::Constant { value } => value,
        }
    }
}

/// The law `ℙ_X` of the random input.
///
/// JSON form is tagged by `kind`, e.g.
/// `{"kind":"uniform_norm_ball","norm":"linf","center":[1,1],"radius":0.1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    UniformNormBall { norm: BallNorm, center: Vec<f64>, radius: f64 },
    Gaussian { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
    Product { marginals: Vec<Marginal> },
    Mixture { weights: Vec<f64>, components: Vec<InputDistribution> },
}

impl InputDistribution {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let d: InputDistribution = read_json(path.as_ref())?;
        d.validate()?;
        Ok(d)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: InputDistribution = serde_json::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            InputDistribution::UniformNormBall { center, .. } => center.len(),
            InputDistribution::Gaussian { mean, .. } => mean.len(),
            InputDistribution::Product { marginals } => marginals.len(),
            InputDistribution::Mixture { components, .. } => components.first().map_or(0, |c| c.dim()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("distribution dimension must be positive"));
        }
        match self {
            InputDistribution::UniformNormBall { center, radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::invalid(format!("ball radius must be > 0, got {radius}")));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::invalid("non-finite ball center"));
                }
            }
            InputDistribution::Gaussian { mean, covariance } => {
                GaussianFactor::new(mean, covariance)?;
            }
            InputDistribution::Product { marginals } => {
                for m in marginals {
                    m.validate()?;
                }
            }
            InputDistribution::Mixture { weights, components } => {
                if weights.len() != components.len() || components.is_empty() {
                    return Err(Error::invalid("mixture needs one weight per component"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::invalid("mixture weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
                }
                let dim = components[0].dim();
                for c in components {
                    if c.dim() != dim {
                        return Err(Error::dim(dim, c.dim(), "mixture component dimension"));
                    }
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Draws `n` samples (one per row) from the scenario stream.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        self.sample_stream(n, seed, Stream::Scenario)
    }

    /// Draws `n` samples from `stream`. Row `i` depends only on
    /// `(seed, stream, i)`, so prefixes are stable as `n` grows.
    pub fn sample_stream(&self, n: usize, seed: u64, stream: Stream) -> Result<DMatrix<f64>> {
        self.sample_range(0, n, seed, stream)
    }

    /// Rows `start..start + n` of the stream.
    pub fn sample_range(&self, start: usize, n: usize, seed: u64, stream: Stream) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        self.validate()?;
        let plan = SamplerPlan::compile(self)?;
        let dim = self.dim();
        let rows: Vec<Vec<f64>> = (start..start + n)
            .into_par_iter()
            .map(|i| {
                let mut rng = indexed_rng(seed, stream, i as u64);
                plan.draw(&mut rng)
            })
            .collect();
        Ok(DMatrix::from_fn(n, dim, |i, j| rows[i][j]))
    }

    /// `Some(true/false)` when the support has a closed-form membership test.
    pub fn in_support(&self, x: &[f64], tol: f64) -> Option<bool> {
        match self {
            InputDistribution::UniformNormBall { norm, center, radius } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                Some(norm.norm(&d) <= radius + tol)
            }
            InputDistribution::Product { marginals } => Some(marginals.iter().zip(x).all(|(m, &v)| match *m {
                Marginal::Uniform { low, high } => v >= low - tol && v <= high + tol,
                Marginal::Normal { .. } => true,
                Marginal::Constant { value } => (v - value).abs() <= tol,
            })),
            _ => None,
        }
    }
}

/// Exact volume-uniform sampler on the unit ball of an ℓp norm.
#[derive(Debug, Clone, Copy)]
pub struct UniformBallSampler {
    norm: BallNorm,
    dim: usize,
}

/// Returns the sampling rule for the unit `norm`-ball in `ℝ^dim`.
pub fn uniform_ball_sampler(norm: BallNorm, dim: usize) -> Result<UniformBallSampler> {
    if dim == 0 {
        return Err(Error::invalid("ball dimension must be at least 1"));
    }
    Ok(UniformBallSampler { norm, dim })
}

impl UniformBallSampler {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim;
        match self.norm {
            BallNorm::Linf => (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            BallNorm::L2 => {
                let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let len = BallNorm::L2.norm(&v);
                if len == 0.0 {
                    return vec![0.0; d];
                }
                let scale = rng.random::<f64>().powf(1.0 / d as f64) / len;
                v.iter_mut().for_each(|x| *x *= scale);
                v
            }
            BallNorm::L1 => {
                // Normalized exponential spacings are uniform on the simplex
                // surface; random signs and a U^{1/d} radius fill the ball.
                let mut v: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = v.iter().sum();
                let radial = rng.random::<f64>().powf(1.0 / d as f64);
                for x in v.iter_mut() {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *x = sign * radial * *x / total;
                }
                v
            }
        }
    }
}

struct GaussianFactor {
    mean: DVector<f64>,
    // x = mean + L z with L Lᵀ = Σ (eigen factor, tolerates singular Σ).
    factor: DMatrix<f64>,
}

impl GaussianFactor {
    fn new(mean: &[f64], covariance: &[Vec<f64>]) -> Result<Self> {
        let n = mean.len();
        if covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("covariance must be {n}x{n}")));
        }
        if mean.iter().chain(covariance.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite gaussian parameter"));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(Error::invalid("covariance is not positive semidefinite"));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(GaussianFactor { mean: DVector::from_column_slice(mean), factor })
    }
}

enum SamplerPlan {
    Ball { sampler: UniformBallSampler, center: Vec<f64>, radius: f64 },
    Gaussian(GaussianFactor),
    Product(Vec<Marginal>),
    Mixture { cumulative: Vec<f64>, components: Vec<SamplerPlan> },
}

impl SamplerPlan {
    fn compile(d: &InputDistribution) -> Result<Self> {
        Ok(match d {
            InputDistribution::UniformNormBall { norm, center, radius } => SamplerPlan::Ball {
                sampler: uniform_ball_sampler(*norm, center.len())?,
                center: center.clone(),
                radius: *radius,
            },
            InputDistribution::Gaussian { mean, covariance } => {
                SamplerPlan::Gaussian(GaussianFactor::new(mean, covariance)?)
            }
            InputDistribution::Product { marginals } => SamplerPlan::Product(marginals.clone()),
            InputDistribution::Mixture { weights, components } => {
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                SamplerPlan::Mixture {
                    cumulative,
                    components: components.iter().map(SamplerPlan::compile).collect::<Result<_>>()?,
                }
            }
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            SamplerPlan::Ball { sampler, center, radius } => sampler
                .draw(rng)
                .into_iter()
                .zip(center)
                .map(|(u, c)| c + radius * u)
                .collect(),
            SamplerPlan::Gaussian(g) => {
                let z = DVector::from_fn(g.mean.len(), |_, _| StandardNormal.sample(rng));
                (&g.mean + &g.factor * z).iter().copied().collect()
            }
            SamplerPlan::Product(ms) => ms.iter().map(|m| m.draw(rng)).collect(),
            SamplerPlan::Mixture { cumulative, components } => {
                let u: f64 = rng.random();
                let k = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(components.len() - 1);
                components[k].draw(rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn ball(norm: BallNorm, center: Vec<f64>, radius: f64) -> InputDistribution {
        InputDistribution::UniformNormBall { norm, center, radius }
    }

    #[test]
    fn linf_ball_support() {
        let d = ball(BallNorm::Linf, vec![1.0; 5], 0.1);
        let xs = d.sample(291, 3).unwrap();
        assert_eq!(xs.shape(), (291, 5));
        for row in xs.row_iter() {
            let x: Vec<f64> = row.iter().copied().collect();
            assert!(d.in_support(&x, 1e-12).unwrap());
        }
    }

    #[test]
    fn l1_ball_support() {
        let d = ball(BallNorm::L1, vec![1.0, 0.0], 1.0);
        let xs = d.sample(1000, 11).unwrap();
        for row in xs.row_iter() {
            assert!((row[0] - 1.0).abs() + row[1].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn degenerate_gaussian_is_point_mass() {
        let d = InputDistribution::Gaussian { mean: vec![0.0, 0.0], covariance: vec![vec![0.0; 2]; 2] };
        let xs = d.sample(5, 1).unwrap();
        assert!(xs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_radius_mean() {
        // E‖U‖ = d / (d + 1) for U uniform on the unit ball.
        let s = uniform_ball_sampler(BallNorm::L2, 2).unwrap();
        let mut rng = stream_rng(5, Stream::Auxiliary);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| BallNorm::L2.norm(&s.draw(&mut rng))).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01, "mean radius {mean}");
    }

    #[test]
    fn l1_inner_ball_fraction() {
        // Volume ratio of the radius-1/2 ball is (1/2)^2.
        let s = uniform_ball_sampler(BallNorm::L1, 2).unwrap();
        let mut rng = stream_rng(6, Stream::Auxiliary);
        let n = 100_000;
        let inside = (0..n).filter(|_| BallNorm::L1.norm(&s.draw(&mut rng)) <= 0.5).count();
        let frac = inside as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn linf_one_dim_is_interval() {
        let s = uniform_ball_sampler(BallNorm::Linf, 1).unwrap();
        let mut rng = stream_rng(9, Stream::Auxiliary);
        let n = 50_000;
        let draws: Vec<f64> = (0..n).map(|_| s.draw(&mut rng)[0]).collect();
        assert!(draws.iter().all(|x| (-1.0..=1.0).contains(x)));
        let below = draws.iter().filter(|&&x| x < -0.5).count() as f64 / n as f64;
        assert!((below - 0.25).abs() < 0.01);
    }

    #[test]
    fn seeds_are_reproducible() {
        let d = ball(BallNorm::L2, vec![0.0, 0.0, 0.0], 2.0);
        assert_eq!(d.sample(50, 42).unwrap(), d.sample(50, 42).unwrap());
        assert_ne!(d.sample(50, 42).unwrap(), d.sample(50, 43).unwrap());
        // Prefix stability: the first rows do not depend on n.
        let long = d.sample(80, 42).unwrap();
        assert_eq!(long.rows(0, 50), d.sample(50, 42).unwrap());
    }

    #[test]
    fn coordinate_means_within_three_standard_errors() {
        let d = InputDistribution::Product {
            marginals: vec![
                Marginal::Uniform { low: -1.0, high: 3.0 },
                Marginal::Normal { mean: 2.0, std: 0.5 },
            ],
        };
        let n = 20_000;
        let xs = d.sample(n, 8).unwrap();
        let se = [4.0 / 12f64.sqrt() / (n as f64).sqrt(), 0.5 / (n as f64).sqrt()];
        for (j, (mean, se)) in [1.0, 2.0].iter().zip(se).enumerate() {
            let m = xs.column(j).mean();
            assert!((m - mean).abs() < 3.0 * se, "coord {j}: {m}");
        }
    }

    #[test]
    fn gaussian_covariance_is_recovered() {
        let d = InputDistribution::Gaussian {
            mean: vec![1.0, -1.0],
            covariance: vec![vec![4.0, 1.0], vec![1.0, 1.0]],
        };
        let xs = d.sample(40_000, 2).unwrap();
        let mean = xs.row_mean();
        let centered = DMatrix::from_fn(xs.nrows(), 2, |i, j| xs[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (xs.nrows() as f64 - 1.0);
        assert!((cov[(0, 0)] - 4.0).abs() < 0.15);
        assert!((cov[(0, 1)] - 1.0).abs() < 0.1);
        assert!((cov[(1, 1)] - 1.0).abs() < 0.05);
    }

    #[test]
    fn mixture_picks_components() {
        let d = InputDistribution::Mixture {
            weights: vec![0.25, 0.75],
            components: vec![
                InputDistribution::Product { marginals: vec![Marginal::Constant { value: 0.0 }] },
                InputDistribution::Product { marginals: vec![Marginal::Constant { value: 1.0 }] },
            ],
        };
        let xs = d.sample(10_000, 4).unwrap();
        let ones = xs.iter().filter(|&&v| v == 1.0).count() as f64 / 10_000.0;
        assert!((ones - 0.75).abs() < 0.02);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ball(BallNorm::L2, vec![0.0], 0.0).validate().is_err());
        let bad_mix = InputDistribution::Mixture {
            weights: vec![0.5, 0.6],
            components: vec![
                InputDistribution::Product { marginals: vec![Marginal::Constant { value: 0.0 }] },
                InputDistribution::Product { marginals: vec![Marginal::Constant { value: 1.0 }] },
            ],
        };
        assert!(bad_mix.validate().is_err());
        let not_psd = InputDistribution::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(not_psd.validate().is_err());
        assert!(ball(BallNorm::L2, vec![0.0], 1.0).sample(0, 1).is_err());
    }

    #[test]
    fn json_form() {
        let d = InputDistribution::from_json(
            r#"{"kind":"uniform_norm_ball","norm":"linf","center":[1,1,1,1,1],"radius":0.1}"#,
        )
        .unwrap();
        assert_eq!(d.dim(), 5);
        assert!(InputDistribution::from_json(r#"{"kind":"cauchy","dim":2}"#).is_err());
    }
}
