//! Canned instances: the coordinate-wise ReLU comparison, the random
//! 5-35-30-2 network, and random small networks for property tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::assess::{AssessmentConfig, Settings};
use crate::distributions::{BallNorm, InputDistribution};
use crate::geometry::{BallShape, CoverClass, Regularizer};
use crate::model::{Activation, BlackBox, Layer, NetworkModel};
use crate::rng::{indexed_rng, Stream};
use crate::safeset::{SafeSet, SafetyRow};

/// `f_i(x) = max(0, x_i)` on `ℝ²`.
pub fn relu2d_network() -> NetworkModel {
    let layer = Layer::new(DMatrix::identity(2, 2), DVector::zeros(2), Activation::Relu).expect("valid layer");
    NetworkModel::new(vec![layer]).expect("valid network")
}

/// Uniform on the ℓ1 ball of radius 1 around `(1, 0)`.
pub fn relu2d_distribution() -> InputDistribution {
    InputDistribution::UniformNormBall { norm: BallNorm::L1, center: vec![1.0, 0.0], radius: 1.0 }
}

/// `y₂ + 0.5 >= 0`.
pub fn relu2d_safe_set() -> SafeSet {
    SafeSet::new(vec![SafetyRow::new(vec![0.0, 1.0], 0.5).expect("nonzero row")]).expect("one row")
}

/// The ReLU comparison instance with `ε = 0.1`, `δ = 1e-5`.
pub fn relu2d_config(class: CoverClass, regularizer: Regularizer, seed: u64) -> AssessmentConfig {
    AssessmentConfig {
        model: relu2d_network(),
        distribution: relu2d_distribution(),
        safe_set: relu2d_safe_set(),
        settings: Settings::new(0.1, 1e-5, class, regularizer, seed),
    }
}

/// ReLU network with the given layer widths and He-scaled Gaussian weights.
/// The last layer is linear.
pub fn random_relu_network(widths: &[usize], seed: u64) -> NetworkModel {
    assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0), "need at least two positive widths");
    let mut rng = indexed_rng(seed, Stream::Auxiliary, 0);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (n_in, n_out) = (w[0], w[1]);
            let weight = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
            let weights = DMatrix::from_fn(n_out, n_in, |_, _| weight.sample(&mut rng));
            let bias = DVector::from_fn(n_out, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z
            });
            let last = k + 2 == widths.len();
            let act = if last { Activation::Identity } else { Activation::Relu };
            Layer::new(weights, bias, act).expect("consistent shapes")
        })
        .collect();
    NetworkModel::new(layers).expect("consistent widths")
}

/// A random unit-norm safety row whose level at `f(center)` is `margin`.
pub fn random_safety_row(f: &dyn BlackBox, center: &[f64], margin: f64, seed: u64) -> SafetyRow {
    let mut rng = indexed_rng(seed, Stream::Auxiliary, 1);
    let a: Vec<f64> = loop {
        let v: Vec<f64> = (0..f.output_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            break v.iter().map(|x| x / n).collect();
        }
    };
    let y = f.evaluate(center).expect("center has the model's input dimension");
    let b = margin - a.iter().zip(&y).map(|(ai, yi)| ai * yi).sum::<f64>();
    SafetyRow::new(a, b).expect("unit row")
}

/// Random 5-35-30-2 ReLU network, inputs uniform on the ℓ∞ ball of radius
/// 0.1 around the all-ones vector, `Q = Σ⁻¹` ellipsoids, `v = r²`.
pub fn illustrative_config(regularizer: Regularizer, seed: u64) -> AssessmentConfig {
    let model = random_relu_network(&[5, 35, 30, 2], seed);
    let center = vec![1.0; 5];
    let margin = 1.0 + indexed_rng(seed, Stream::Auxiliary, 2).random::<f64>();
    let row = random_safety_row(&model, &center, margin, seed);
    AssessmentConfig {
        model,
        distribution: InputDistribution::UniformNormBall { norm: BallNorm::Linf, center, radius: 0.1 },
        safe_set: SafeSet::new(vec![row]).expect("one row"),
        settings: Settings::new(0.1, 1e-5, CoverClass::NormBall(BallShape::PcaEllipsoid), regularizer, seed),
    }
}
