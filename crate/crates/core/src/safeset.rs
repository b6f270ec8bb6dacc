//! Polyhedral safe sets `{y : Ay + b >= 0}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, Error, Result};

/// A single half-space constraint `aᵀy + b >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyRow {
    pub a: Vec<f64>,
    pub b: f64,
}

impl SafetyRow {
    pub fn new(a: Vec<f64>, b: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::invalid("safety row has no coefficients"));
        }
        if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("safety row has non-finite entries"));
        }
        if a.iter().all(|&v| v == 0.0) {
            let hint = if b >= 0.0 { "always safe" } else { "never safe" };
            return Err(Error::invalid(format!(
                "safety row with a = 0 is degenerate ({hint}); remove it from the safe set"
            )));
        }
        Ok(SafetyRow { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// The safety level `aᵀy + b`.
    pub fn level(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.a.len() {
            return Err(Error::dim(self.a.len(), y.len(), "output for safety level"));
        }
        Ok(self.level_unchecked(y))
    }

    #[inline]
    pub(crate) fn level_unchecked(&self, y: &[f64]) -> f64 {
        self.a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>() + self.b
    }
}

/// `s(y) = aᵀy + b` for a single row.
pub fn safety_level(row: &SafetyRow, y: &[f64]) -> Result<f64> {
    row.level(y)
}

/// The matrix form `{y : Ay + b >= 0}`; JSON `{"A":[[..]],"b":[..]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeSet {
    rows: Vec<SafetyRow>,
}

impl SafeSet {
    pub fn new(rows: Vec<SafetyRow>) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("safe set has no rows"))?;
        let n_y = first.dim();
        for (i, r) in rows.iter().enumerate() {
            if r.dim() != n_y {
                return Err(Error::Dimension(format!("row {i} has {} columns, expected {n_y}", r.dim())));
            }
        }
        Ok(SafeSet { rows })
    }

    pub fn from_matrix(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::dim(a.len(), b.len(), "safe-set offset vector"));
        }
        let rows = a
            .into_iter()
            .zip(b)
            .enumerate()
            .map(|(i, (a, b))| SafetyRow::new(a, b).map_err(|e| Error::invalid(format!("row {i}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        SafeSet::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn output_dim(&self) -> usize {
        self.rows[0].dim()
    }

    /// The independent single-row problems.
    pub fn rows(&self) -> &[SafetyRow] {
        &self.rows
    }

    /// `min_i (a_iᵀy + b_i)`; nonnegative iff `y` is in the safe set.
    pub fn min_level(&self, y: &[f64]) -> Result<f64> {
        self.rows
            .iter()
            .map(|r| r.level(y))
            .try_fold(f64::INFINITY, |m, l| Ok(m.min(l?)))
    }

    pub fn contains(&self, y: &[f64]) -> Result<bool> {
        Ok(self.min_level(y)? >= 0.0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SafeSetFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Serialize for SafeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SafeSetFile {
            a: self.rows.iter().map(|r| r.a.clone()).collect(),
            b: self.rows.iter().map(|r| r.b).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SafeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = SafeSetFile::deserialize(d)?;
        SafeSet::from_matrix(f.a, f.b).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(a: &[f64], b: f64) -> SafetyRow {
        SafetyRow::new(a.to_vec(), b).unwrap()
    }

    #[test]
    fn safety_level_examples() {
        assert_eq!(safety_level(&row(&[0.0, 1.0], 0.5), &[1.3, 0.0]).unwrap(), 0.5);
        assert_eq!(safety_level(&row(&[0.0, 1.0], 0.5), &[0.0, -0.5]).unwrap(), 0.0);
        assert_eq!(safety_level(&row(&[2.0, -1.0], 1.0), &[1.0, 4.0]).unwrap(), -1.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(row(&[1.0, 0.0], 0.0).level(&[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn rows_of_identity() {
        let s = SafeSet::from_json(r#"{"A":[[1,0],[0,1]],"b":[0,0]}"#).unwrap();
        assert_eq!(s.rows(), &[row(&[1.0, 0.0], 0.0), row(&[0.0, 1.0], 0.0)]);
        let single = SafeSet::from_json(r#"{"A":[[0,1]],"b":[0.5]}"#).unwrap();
        assert_eq!(single.rows().len(), 1);
    }

    #[test]
    fn zero_row_rejected() {
        let err = SafeSet::from_json(r#"{"A":[[1,0],[0,0]],"b":[0,1]}"#).unwrap_err();
        assert!(err.to_string().contains("always safe"), "{err}");
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(SafeSet::from_json(r#"{"A":[[1,0],[1]],"b":[0,0]}"#).is_err());
        assert!(SafeSet::from_json(r#"{"A":[[1,0]],"b":[0,0]}"#).is_err());
    }

    proptest! {
        #[test]
        fn level_is_affine(
            a in prop::collection::vec(-5.0..5.0f64, 3),
            b in -5.0..5.0f64,
            y1 in prop::collection::vec(-10.0..10.0f64, 3),
            y2 in prop::collection::vec(-10.0..10.0f64, 3),
            t in 0.0..1.0f64,
        ) {
            prop_assume!(a.iter().any(|&v| v != 0.0));
            let r = SafetyRow::new(a, b).unwrap();
            let mix: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| t * p + (1.0 - t) * q).collect();
            let lhs = r.level(&mix).unwrap();
            let rhs = t * r.level(&y1).unwrap() + (1.0 - t) * r.level(&y2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn min_level_matches_componentwise(
            a in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 3),
            b in prop::collection::vec(-2.0..2.0f64, 3),
            y in prop::collection::vec(-3.0..3.0f64, 2),
        ) {
            prop_assume!(a.iter().all(|r| r.iter().any(|&v| v != 0.0)));
            let s = SafeSet::from_matrix(a.clone(), b.clone()).unwrap();
            let componentwise = a.iter().zip(&b).all(|(r, bi)| r[0] * y[0] + r[1] * y[1] + bi >= 0.0);
            prop_assert_eq!(s.contains(&y).unwrap(), componentwise);
        }
    }
}
