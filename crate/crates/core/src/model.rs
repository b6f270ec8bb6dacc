//! Feed-forward networks and the black-box evaluation interface.
//!
//! The assessment pipeline never looks inside the function it certifies; it
//! only calls [`BlackBox::evaluate`]. [`NetworkModel`] is the shipped
//! implementation: a chain of affine layers, each followed by an elementwise
//! activation.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, Error, Result};

/// Anything that maps `ℝ^{n_x}` to `ℝ^{n_y}`.
pub trait BlackBox: Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Evaluates every row of `inputs` (one sample per row). Rows are evaluated
    /// independently, so the result matches per-sample evaluation bit for bit.
    fn evaluate_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), inputs.ncols(), "batch input width"));
        }
        let rows: Vec<Vec<f64>> = (0..inputs.nrows())
            .into_par_iter()
            .map(|i| {
                let x: Vec<f64> = inputs.row(i).iter().copied().collect();
                self.evaluate(&x)
            })
            .collect::<Result<_>>()?;
        let n_y = self.output_dim();
        Ok(DMatrix::from_fn(rows.len(), n_y, |i, j| rows[i][j]))
    }
}

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Identity,
    Tanh,
    Sigmoid,
    LeakyRelu(f64),
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::LeakyRelu(slope) => {
                if z >= 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::LeakyRelu(_) => "leaky_relu",
        }
    }

    pub fn parse(name: &str, slope: Option<f64>) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "leaky_relu" => Ok(Activation::LeakyRelu(slope.unwrap_or(Self::DEFAULT_LEAKY_SLOPE))),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }
}

/// One affine layer `z = W x + b` followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `n_out × n_in`, row = output neuron.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::dim(weights.nrows(), bias.len(), "bias length"));
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Dimension("layer with an empty weight matrix".into()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite weight or bias"));
        }
        if let Activation::LeakyRelu(s) = activation {
            if !s.is_finite() {
                return Err(Error::invalid("non-finite leaky_relu slope"));
            }
        }
        Ok(Layer { weights, bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|i| {
                let mut z = self.bias[i];
                for (j, xj) in x.iter().enumerate() {
                    z += self.weights[(i, j)] * xj;
                }
                self.activation.apply(z)
            })
            .collect()
    }
}

/// A validated layered network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    layers: Vec<Layer>,
}

impl NetworkModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k,
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(NetworkModel { layers })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: NetworkFile = read_json(path.as_ref())?;
        file.try_into()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from(self)).expect("network serializes")
    }

    /// The identity map on `ℝ^dim`, as a single identity-activation layer.
    pub fn identity(dim: usize) -> Self {
        let layer = Layer::new(DMatrix::identity(dim, dim), DVector::zeros(dim), Activation::Identity)
            .expect("identity layer is valid");
        NetworkModel { layers: vec![layer] }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }
}

impl BlackBox for NetworkModel {
    fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), x.len(), "network input"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network input"));
        }
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        Ok(h)
    }
}

/// On-disk layout: `{"layers":[{"weights":[[..]],"bias":[..],"activation":"relu"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
}

impl TryFrom<NetworkFile> for NetworkModel {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let n_out = l.weights.len();
                let n_in = l.weights.first().map_or(0, Vec::len);
                if let Some(bad) = l.weights.iter().position(|row| row.len() != n_in) {
                    return Err(Error::Dimension(format!(
                        "layer {k}: weight row {bad} has {} entries, expected {n_in}",
                        l.weights[bad].len()
                    )));
                }
                let weights = DMatrix::from_fn(n_out, n_in, |i, j| l.weights[i][j]);
                let activation = Activation::parse(&l.activation, l.slope)?;
                Layer::new(weights, DVector::from_vec(l.bias), activation)
                    .map_err(|e| Error::Dimension(format!("layer {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkModel::new(layers)
    }
}

impl From<&NetworkModel> for NetworkFile {
    fn from(m: &NetworkModel) -> Self {
        NetworkFile {
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    bias: l.bias.iter().copied().collect(),
                    activation: l.activation.name().to_string(),
                    slope: match l.activation {
                        Activation::LeakyRelu(s) => Some(s),
                        _ => None,
                    },
                })
                .collect(),
        }
    }
}

impl Serialize for NetworkModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = NetworkFile::deserialize(d)?;
        NetworkModel::try_from(file).map_err(serde::de::Error::custom)
    }
}
