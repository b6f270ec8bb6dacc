use serde::{Deserialize, Serialize};

use super::norm::NormSpec;
use crate::error::{Error, Result};
use crate::safeset::SafetyRow;

/// Default absolute membership tolerance on the norm value.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Which ball shape a norm-ball class uses.
#[derive(Debug, Clone, PartialEq)]
pub enum BallShape {
    Fixed(NormSpec),
    /// `Q = Σ⁻¹` fitted to the output samples.
    PcaEllipsoid,
}

/// The family `{h(θ)}` a scenario program searches over.
///
/// JSON: `{"class":"norm_ball","norm":"l2"}`, `{"norm":"q_pca"}`,
/// `{"class":"norm_ball","norm":{"q":[[..]]}}` or `{"class":"half_space"}`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoverClass {
    NormBall(BallShape),
    HalfSpace,
}

impl CoverClass {
    /// Number of free parameters `p`: `n_y + 1` for balls, `1` for half-spaces.
    pub fn param_dim(&self, n_y: usize) -> usize {
        match self {
            CoverClass::NormBall(_) => n_y + 1,
            CoverClass::HalfSpace => 1,
        }
    }

    /// Parses the short CLI names `l1`, `l2`, `linf`, `q_pca`, `half_space`
    /// or a JSON object.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.starts_with('{') {
            return Ok(serde_json::from_str(t)?);
        }
        Ok(match t {
            "l1" => CoverClass::NormBall(BallShape::Fixed(NormSpec::L1)),
            "l2" => CoverClass::NormBall(BallShape::Fixed(NormSpec::L2)),
            "linf" => CoverClass::NormBall(BallShape::Fixed(NormSpec::Linf)),
            "q_pca" => CoverClass::NormBall(BallShape::PcaEllipsoid),
            "half_space" => CoverClass::HalfSpace,
            other => return Err(Error::Parse(format!("unknown cover class `{other}`"))),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CoverClassRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<serde_json::Value>,
}

impl Serialize for CoverClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            CoverClass::HalfSpace => CoverClassRepr { class: Some("half_space".into()), norm: None },
            CoverClass::NormBall(BallShape::PcaEllipsoid) => CoverClassRepr {
                class: Some("norm_ball".into()),
                norm: Some(serde_json::Value::String("q_pca".into())),
            },
            CoverClass::NormBall(BallShape::Fixed(n)) => CoverClassRepr {
                class: Some("norm_ball".into()),
                norm: Some(serde_json::to_value(n).map_err(serde::ser::Error::custom)?),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoverClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = CoverClassRepr::deserialize(d)?;
        match (repr.class.as_deref(), repr.norm) {
            (Some("half_space"), None) => Ok(CoverClass::HalfSpace),
            (Some("half_space"), Some(_)) => Err(D::Error::custom("half_space class takes no norm")),
            (Some("norm_ball") | None, Some(norm)) => {
                if norm.as_str() == Some("q_pca") {
                    Ok(CoverClass::NormBall(BallShape::PcaEllipsoid))
                } else {
                    let n: NormSpec = serde_json::from_value(norm).map_err(D::Error::custom)?;
                    Ok(CoverClass::NormBall(BallShape::Fixed(n)))
                }
            }
            (Some("norm_ball"), None) => Err(D::Error::custom("norm_ball class needs a norm")),
            (Some(other), _) => Err(D::Error::custom(format!("unknown cover class `{other}`"))),
            (None, None) => Err(D::Error::custom("cover class needs `class` or `norm`")),
        }
    }
}

/// A concrete cover `h(θ)`.
///
/// * norm ball: `{y : ‖y - ȳ‖ <= r}` with `θ = (ȳ, r)`, `r > 0`;
/// * half-space: `{y : aᵀy + b >= ρ}` along the safety row itself, `θ = ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum CoverParams {
    NormBall { norm: NormSpec, center: Vec<f64>, radius: f64 },
    HalfSpace { offset: f64 },
}

impl CoverParams {
    pub fn norm_ball(norm: NormSpec, center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("ball radius must be > 0, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite ball center"));
        }
        norm.check_dim(center.len())?;
        Ok(CoverParams::NormBall { norm, center, radius })
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            CoverParams::NormBall { radius, .. } => Some(*radius),
            CoverParams::HalfSpace { .. } => None,
        }
    }

    pub fn center(&self) -> Option<&[f64]> {
        match self {
            CoverParams::NormBall { center, .. } => Some(center),
            CoverParams::HalfSpace { .. } => None,
        }
    }
}

/// Whether `y ∈ h(θ)` up to `tol`.
pub fn contains(cover: &CoverParams, row: &SafetyRow, y: &[f64], tol: f64) -> bool {
    match cover {
        CoverParams::NormBall { norm, center, radius } => {
            let d: Vec<f64> = y.iter().zip(center).map(|(y, c)| y - c).collect();
            norm.norm(&d) <= radius + tol
        }
        CoverParams::HalfSpace { offset } => row.level_unchecked(y) >= offset - tol,
    }
}

/// `inf_{y ∈ h(θ)} aᵀy + b` in closed form.
///
/// For a norm ball this is `b + aᵀȳ - r‖a‖_*`, affine in `θ`; for the
/// half-space class it is the offset `ρ`.
pub fn approx_robustness(cover: &CoverParams, row: &SafetyRow) -> f64 {
    match cover {
        CoverParams::NormBall { norm, center, radius } => {
            row.level_unchecked(center) - radius * norm.dual_norm(&row.a)
        }
        CoverParams::HalfSpace { offset } => *offset,
    }
}

/// Volume proxy `v(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    #[default]
    None,
    Radius,
    RadiusSquared,
}

/// `λ · v(θ)`. `λ = ∞` selects pure localization: only `v` is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    #[serde(with = "lambda_serde")]
    pub lambda: f64,
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer { kind: RegularizerKind::None, lambda: 0.0 }
    }
}

impl Regularizer {
    pub fn new(kind: RegularizerKind, lambda: f64) -> Result<Self> {
        let r = Regularizer { kind, lambda };
        r.validate()?;
        Ok(r)
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn radius_squared(lambda: f64) -> Self {
        Regularizer { kind: RegularizerKind::RadiusSquared, lambda }
    }

    /// Minimum-volume covering with no certification term.
    pub fn pure_localization(kind: RegularizerKind) -> Self {
        Regularizer { kind, lambda: f64::INFINITY }
    }

    pub fn is_pure_localization(&self) -> bool {
        self.lambda == f64::INFINITY
    }

    /// True when the penalty term is actually present.
    pub fn is_active(&self) -> bool {
        self.kind != RegularizerKind::None && self.lambda > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.is_pure_localization() && self.kind == RegularizerKind::None {
            return Err(Error::invalid("pure localization needs a volume regularizer"));
        }
        Ok(())
    }

    /// `v` as a function of the radius.
    pub fn value(&self, r: f64) -> f64 {
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::Radius => r,
            RegularizerKind::RadiusSquared => r * r,
        }
    }

    /// `dv/dr`.
    pub fn slope(&self, r: f64) -> f64 {
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::Radius => 1.0,
            RegularizerKind::RadiusSquared => 2.0 * r,
        }
    }

    /// `λ · v(r)`, with `0 · ∞` read as zero.
    pub fn penalty(&self, r: f64) -> f64 {
        if self.kind == RegularizerKind::None || self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.value(r)
        }
    }
}

/// The unweighted volume proxy `v(θ)` of a cover.
pub fn volume_penalty(reg: &Regularizer, cover: &CoverParams) -> Result<f64> {
    match (reg.kind, cover) {
        (RegularizerKind::None, _) => Ok(0.0),
        (_, CoverParams::NormBall { radius, .. }) => Ok(reg.value(*radius)),
        (_, CoverParams::HalfSpace { .. }) => {
            Err(Error::invalid("volume regularizers need a radius; the half-space class has none"))
        }
    }
}

pub(crate) mod lambda_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("lambda must be a number or \"inf\", got `{s}`"))),
        }
    }
}
