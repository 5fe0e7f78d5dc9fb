use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::NnError;

/// One affine layer: `weight` is `out × in`, `bias` has `out` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.as_slice().iter().chain(self.bias.iter())
    }
}

/// Weights of a ReLU MLP with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    layers: Vec<Layer>,
}

/// Partial derivatives of a scalar loss, shaped like the [`NetParams`] they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) layers: Vec<Layer>,
}

impl NetParams {
    /// Glorot-uniform weights, zero biases. Deterministic in `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self, NnError> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect();
                Layer {
                    weight: Matrix::from_vec(fan_out, fan_in, data),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NnError> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layers: layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Builds parameters from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyLayers);
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(NnError::Shape(format!(
                    "layer {k}: bias has {} entries, weight has {} rows",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(NnError::ZeroSize);
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let params = Self { layers };
        if !params.is_finite() {
            return Err(NnError::NonFinite);
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.in_dim()];
        sizes.extend(self.layers.iter().map(Layer::out_dim));
        sizes
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|v| v.is_finite()))
    }

    /// Flattened view in layer order: weights (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    /// Mutable access to the `idx`-th entry of [`NetParams::flatten`].
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.as_slice().len();
            if idx < nw {
                return &mut layer.weight.as_mut_slice()[idx];
            }
            idx -= nw;
            if idx < layer.bias.len() {
                return &mut layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ParamsDoc::from(self)).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let doc: ParamsDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        crate::io::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|v| v.is_finite()))
    }

    pub fn is_congruent(&self, params: &NetParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weight.shape() == p.weight.shape() && g.bias.len() == p.bias.len())
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<(), NnError> {
    if layer_sizes.len() < 2 {
        return Err(NnError::EmptyLayers);
    }
    if layer_sizes.contains(&0) {
        return Err(NnError::ZeroSize);
    }
    Ok(())
}

/// On-disk JSON form: `{"layer_sizes": [...], "weights": [[row-major...]], "biases": [[...]]}`.
#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<&NetParams> for ParamsDoc {
    fn from(p: &NetParams) -> Self {
        Self {
            layer_sizes: p.layer_sizes(),
            weights: p.layers.iter().map(|l| l.weight.as_slice().to_vec()).collect(),
            biases: p.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }
}

impl TryFrom<ParamsDoc> for NetParams {
    type Error = NnError;

    fn try_from(doc: ParamsDoc) -> Result<Self, NnError> {
        check_sizes(&doc.layer_sizes)?;
        let n = doc.layer_sizes.len() - 1;
        if doc.weights.len() != n || doc.biases.len() != n {
            return Err(NnError::Shape(format!(
                "{} layer sizes imply {n} layers, found {} weight and {} bias arrays",
                doc.layer_sizes.len(),
                doc.weights.len(),
                doc.biases.len()
            )));
        }
        let layers = doc
            .layer_sizes
            .windows(2)
            .zip(doc.weights.into_iter().zip(doc.biases))
            .enumerate()
            .map(|(k, (dims, (w, b)))| {
                if w.len() != dims[0] * dims[1] {
                    return Err(NnError::Shape(format!(
                        "layer {k}: expected {} weights, found {}",
                        dims[0] * dims[1],
                        w.len()
                    )));
                }
                Ok(Layer {
                    weight: Matrix::from_vec(dims[1], dims[0], w),
                    bias: b,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        NetParams::from_layers(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_sized_init_shapes() {
        let p = NetParams::init(&[2, 32, 32, 2], 0).unwrap();
        let shapes: Vec<_> = p.layers().iter().map(|l| (l.weight.shape(), l.bias.len())).collect();
        assert_eq!(shapes, vec![((32, 2), 32), ((32, 32), 32), ((2, 32), 2)]);
        assert!(p.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn degenerate_single_layer() {
        let p = NetParams::init(&[1, 1], 7).unwrap();
        assert_eq!(p.layers().len(), 1);
        assert_eq!(p.layers()[0].weight.shape(), (1, 1));
        assert_eq!(p.layers()[0].bias, vec![0.0]);
    }

    #[test]
    fn init_is_deterministic_and_within_glorot_bound() {
        let a = NetParams::init(&[4, 8, 3], 11).unwrap();
        let b = NetParams::init(&[4, 8, 3], 11).unwrap();
        assert_eq!(a, b);
        let c = NetParams::init(&[4, 8, 3], 12).unwrap();
        assert_ne!(a, c);
        let limit0 = (6.0f64 / 12.0).sqrt();
        assert!(a.layers()[0].weight.as_slice().iter().all(|w| w.abs() <= limit0));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(NetParams::init(&[], 0), Err(NnError::EmptyLayers)));
        assert!(matches!(NetParams::init(&[3], 0), Err(NnError::EmptyLayers)));
        assert!(matches!(NetParams::init(&[3, 0, 2], 0), Err(NnError::ZeroSize)));
    }

    #[test]
    fn json_round_trip() {
        let p = NetParams::init(&[2, 5, 2], 3).unwrap();
        let text = p.to_json();
        assert!(text.starts_with("{\"layer_sizes\":[2,5,2]"));
        assert_eq!(NetParams::from_json(&text).unwrap(), p);
    }

    #[test]
    fn json_rejects_inconsistent_document() {
        let bad = r#"{"layer_sizes":[2,2],"weights":[[1,2,3]],"biases":[[0,0]]}"#;
        assert!(matches!(NetParams::from_json(bad), Err(NnError::Shape(_))));
        let chain = r#"{"layer_sizes":[1,2],"weights":[[1,2]],"biases":[[0]]}"#;
        assert!(matches!(NetParams::from_json(chain), Err(NnError::Shape(_))));
        assert!(matches!(NetParams::from_json("{"), Err(NnError::Json(_))));
    }
}
