//! Brute-force reference for [`approx_robustness`](super::approx_robustness).
//!
//! Evaluates `aᵀy + b` at boundary points `ȳ + r·u` of a norm ball for a
//! finite set of unit directions `u` and returns the minimum. It never uses the
//! dual norm, so it is an independent check of the closed form. It is slow and
//! meant for tests.

use rand_distr::{Distribution, StandardNormal};

use super::{CoverParams, NormSpec};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::safeset::SafetyRow;

const ORACLE_SEED: u64 = 0x5EED_0AC1E;

/// Minimum safety level over `n_grid` boundary points of a norm-ball cover.
///
/// Directions: `n_grid == 1` uses `-a/‖a‖₂`; in 2-D an even angular grid; in
/// 3-D a Fibonacci lattice; in higher dimensions seeded Gaussian directions.
/// Vertices of ℓ1 and ℓ∞ balls are always added when `n_grid > 1`. The result
/// upper-bounds the closed form and converges to it as `n_grid` grows.
pub fn approx_robustness_oracle(cover: &CoverParams, row: &SafetyRow, n_grid: usize) -> Result<f64> {
    let CoverParams::NormBall { norm, center, radius } = cover else {
        return Err(Error::Unsupported("the boundary oracle only handles norm-ball covers".into()));
    };
    if n_grid == 0 {
        return Err(Error::invalid("n_grid must be at least 1"));
    }
    let dim = center.len();
    if dim != row.dim() {
        return Err(Error::dim(row.dim(), dim, "cover center"));
    }
    // Q-balls are images of the Euclidean ball under L⁻ᵀ (Q = LLᵀ), so
    // directions are spread evenly on the sphere and then mapped.
    let warp = match norm {
        NormSpec::Q(q) => {
            let chol = q.matrix().clone().cholesky().ok_or_else(|| Error::invalid("Q is not positive definite"))?;
            Some(chol.l().transpose().try_inverse().ok_or_else(|| Error::invalid("singular Q factor"))?)
        }
        _ => None,
    };
    let mut best = f64::INFINITY;
    let mut warped = vec![0.0; dim];
    let mut visit = |dir: &[f64]| {
        let dir = match &warp {
            Some(w) => {
                for (i, out) in warped.iter_mut().enumerate() {
                    *out = (0..dim).map(|j| w[(i, j)] * dir[j]).sum();
                }
                &warped[..]
            }
            None => dir,
        };
        let len = norm.norm(dir);
        if len > 0.0 {
            let y: Vec<f64> = center.iter().zip(dir).map(|(c, u)| c + radius * u / len).collect();
            best = best.min(row.level_unchecked(&y));
        }
    };

    if n_grid == 1 {
        let dir: Vec<f64> = row.a.iter().map(|v| -v).collect();
        visit(&dir);
        return Ok(best);
    }

    if dim == 2 {
        for k in 0..n_grid {
            let t = std::f64::consts::TAU * k as f64 / n_grid as f64;
            visit(&[t.cos(), t.sin()]);
        }
    } else if dim == 3 {
        // Fibonacci lattice: near-uniform spacing on the sphere.
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for k in 0..n_grid {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n_grid as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            visit(&[rho * phi.cos(), rho * phi.sin(), z]);
        }
    } else {
        let mut rng = stream_rng(ORACLE_SEED, Stream::Auxiliary);
        let mut dir = vec![0.0; dim];
        for _ in 0..n_grid {
            dir.iter_mut().for_each(|d| *d = StandardNormal.sample(&mut rng));
            visit(&dir);
        }
    }

    match norm {
        NormSpec::L1 => {
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[i] = s;
                    visit(&e);
                }
            }
        }
        NormSpec::Linf if dim <= 20 => {
            for mask in 0u32..(1 << dim) {
                let v: Vec<f64> = (0..dim).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                visit(&v);
            }
        }
        _ => {}
    }
    Ok(best)
}
