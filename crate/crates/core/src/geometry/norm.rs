use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted for a shape matrix `Q`.
pub const Q_EIGEN_TOL: f64 = 1e-10;

/// Norm defining a ball cover: ℓ1, ℓ2, ℓ∞, or `‖y‖_Q = √(yᵀQy)`.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    L1,
    L2,
    Linf,
    Q(QNorm),
}

/// A quadratic norm with its precomputed inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct QNorm {
    q: DMatrix<f64>,
    q_inv: DMatrix<f64>,
}

impl QNorm {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::Dimension(format!("Q must be square, got {}x{}", q.nrows(), q.ncols())));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Q has non-finite entries"));
        }
        let scale = q.amax().max(f64::MIN_POSITIVE);
        if (&q - q.transpose()).amax() > 1e-12 * scale.max(1.0) {
            return Err(Error::invalid("Q is not symmetric"));
        }
        let q = (&q + q.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(q.clone()).eigenvalues.min();
        if min_eig <= Q_EIGEN_TOL {
            return Err(Error::invalid(format!("Q is not positive definite (min eigenvalue {min_eig:e})")));
        }
        let q_inv = Cholesky::new(q.clone())
            .ok_or_else(|| Error::invalid("Q is singular"))?
            .inverse();
        Ok(QNorm { q, q_inv })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.q_inv
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc.max(0.0)
}

impl NormSpec {
    /// Dimension constraint, if the norm carries one.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            NormSpec::Q(q) => Some(q.dim()),
            _ => None,
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(d) if d != n => Err(Error::dim(d, n, "Q-norm dimension")),
            _ => Ok(()),
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            NormSpec::L1 => v.iter().map(|x| x.abs()).sum(),
            NormSpec::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormSpec::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormSpec::Q(q) => quad_form(&q.q, v).sqrt(),
        }
    }

    /// `‖a‖_* = sup_{‖x‖≤1} xᵀa`.
    pub fn dual_norm(&self, a: &[f64]) -> f64 {
        match self {
            NormSpec::L1 => NormSpec::Linf.norm(a),
            NormSpec::L2 => NormSpec::L2.norm(a),
            NormSpec::Linf => NormSpec::L1.norm(a),
            NormSpec::Q(q) => quad_form(&q.q_inv, a).sqrt(),
        }
    }

    /// Writes a subgradient of `‖·‖` at `v` into `out` (zero at the origin).
    /// Ties pick the lowest coordinate.
    pub fn subgradient(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            NormSpec::L1 => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = if *x > 0.0 {
                        1.0
                    } else if *x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            NormSpec::L2 => {
                let n = self.norm(v);
                if n > 0.0 {
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = x / n;
                    }
                }
            }
            NormSpec::Linf => {
                let mut best = 0usize;
                for (i, x) in v.iter().enumerate() {
                    if x.abs() > v[best].abs() {
                        best = i;
                    }
                }
                if v[best] != 0.0 {
                    out[best] = v[best].signum();
                }
            }
            NormSpec::Q(q) => {
                let n = self.norm(v);
                if n > 0.0 {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = (0..v.len()).map(|j| q.q[(i, j)] * v[j]).sum::<f64>() / n;
                    }
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NormSpec::L1 => "l1",
            NormSpec::L2 => "l2",
            NormSpec::Linf => "linf",
            NormSpec::Q(_) => "q",
        }
    }
}

/// `‖a‖_*` for `n`; fails if `a` does not match a Q-norm's dimension.
pub fn dual_norm(n: &NormSpec, a: &[f64]) -> Result<f64> {
    n.check_dim(a.len())?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite vector"));
    }
    Ok(n.dual_norm(a))
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NormRepr {
    Named(String),
    Q { q: Vec<Vec<f64>> },
}

impl Serialize for NormSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormSpec::Q(q) => NormRepr::Q {
                q: q.q.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
            other => NormRepr::Named(other.name().to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NormSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match NormRepr::deserialize(d)? {
            NormRepr::Named(name) => match name.as_str() {
                "l1" => Ok(NormSpec::L1),
                "l2" => Ok(NormSpec::L2),
                "linf" => Ok(NormSpec::Linf),
                other => Err(D::Error::custom(format!("unknown norm `{other}`"))),
            },
            NormRepr::Q { q } => {
                let n = q.len();
                if q.iter().any(|r| r.len() != n) {
                    return Err(D::Error::custom("Q must be square"));
                }
                let m = DMatrix::from_fn(n, n, |i, j| q[i][j]);
                QNorm::new(m).map(NormSpec::Q).map_err(D::Error::custom)
            }
        }
    }
}

/// Fits the principal-component ellipsoid norm `Q = (Σ + γI)⁻¹` to output
/// samples (one per row), with `Σ` the unbiased sample covariance and ridge
/// `γ = 1e-8 · tr(Σ) / n_y`.
pub fn fit_pca_qnorm(samples: &DMatrix<f64>) -> Result<NormSpec> {
    let (n, dim) = samples.shape();
    if n <= dim {
        return Err(Error::invalid(format!(
            "need more samples than dimensions to fit a covariance ({n} samples, {dim} dims)"
        )));
    }
    let mean = samples.row_mean();
    let centered = DMatrix::from_fn(n, dim, |i, j| samples[(i, j)] - mean[j]);
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let ridge = 1e-8 * cov.trace() / dim as f64;
    let ridge = if ridge > 0.0 { ridge } else { 1e-12 };
    for i in 0..dim {
        cov[(i, i)] += ridge;
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    let q = Cholesky::new(cov)
        .ok_or_else(|| Error::invalid("sample covariance is not positive definite"))?
        .inverse();
    QNorm::new((&q + q.transpose()) * 0.5).map(NormSpec::Q)
}

/// Principal axes of a Q-norm ball as `(eigenvalues of Q⁻¹, eigenvectors)`.
pub fn principal_axes(q: &QNorm) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(q.q_inv.clone());
    (eig.eigenvalues, eig.eigenvectors)
}
