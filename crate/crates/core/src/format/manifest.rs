use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`; odd totals put the
    /// extra row/column on the high side.
    Same,
    Valid,
}

/// Kind-specific layer parameters. Serialized inline next to the layer name
/// with a `"kind"` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    Softmax,
    Dropout {
        rate: f64,
    },
    Flatten,
    Conv2d {
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: Padding,
    },
    Maxpool2d {
        kernel: usize,
        stride: usize,
    },
    Batchnorm {
        epsilon: f64,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::Softmax => "softmax",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Maxpool2d { .. } => "maxpool2d",
            LayerKind::Batchnorm { .. } => "batchnorm",
        }
    }

    pub fn weight_roles(&self) -> &'static [&'static str] {
        match self {
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } => &["kernel", "bias"],
            LayerKind::Batchnorm { .. } => &["gamma", "beta", "moving_mean", "moving_var"],
            _ => &[],
        }
    }

    fn check_params(&self) -> std::result::Result<(), String> {
        match *self {
            LayerKind::Dense { in_dim, out_dim } if in_dim == 0 || out_dim == 0 => {
                Err("dense dimensions must be positive".into())
            }
            LayerKind::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                Err(format!("dropout rate {rate} outside [0, 1)"))
            }
            LayerKind::Conv2d {
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                stride,
                ..
            } if out_channels == 0
                || in_channels == 0
                || kernel_h == 0
                || kernel_w == 0
                || stride == 0 =>
            {
                Err("conv2d parameters must be positive".into())
            }
            LayerKind::Maxpool2d { kernel, stride } if kernel == 0 || stride == 0 => {
                Err("maxpool2d parameters must be positive".into())
            }
            LayerKind::Batchnorm { epsilon } if !(epsilon.is_finite() && epsilon >= 0.0) => Err(
                format!("batchnorm epsilon {epsilon} must be finite and non-negative"),
            ),
            _ => Ok(()),
        }
    }

    /// Output shape for a given input shape, or the reason the input is not
    /// accepted. Image tensors are `[height, width, channels]`.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match *self {
            LayerKind::Dense { in_dim, out_dim } => {
                if input != [in_dim] {
                    return Err(format!("dense expects [{in_dim}], got {input:?}"));
                }
                Ok(vec![out_dim])
            }
            LayerKind::Relu | LayerKind::Softmax | LayerKind::Dropout { .. } => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Conv2d {
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                let [h, w, c] = image_dims(input, "conv2d")?;
                if c != in_channels {
                    return Err(format!("conv2d expects {in_channels} channels, got {c}"));
                }
                let oh = conv_out(h, kernel_h, stride, padding)
                    .ok_or_else(|| format!("kernel height {kernel_h} exceeds input height {h}"))?;
                let ow = conv_out(w, kernel_w, stride, padding)
                    .ok_or_else(|| format!("kernel width {kernel_w} exceeds input width {w}"))?;
                Ok(vec![oh, ow, out_channels])
            }
            LayerKind::Maxpool2d { kernel, stride } => {
                let [h, w, c] = image_dims(input, "maxpool2d")?;
                let oh = conv_out(h, kernel, stride, Padding::Valid)
                    .ok_or_else(|| format!("pool size {kernel} exceeds input height {h}"))?;
                let ow = conv_out(w, kernel, stride, Padding::Valid)
                    .ok_or_else(|| format!("pool size {kernel} exceeds input width {w}"))?;
                Ok(vec![oh, ow, c])
            }
            LayerKind::Batchnorm { .. } => Ok(input.to_vec()),
        }
    }

    /// Shapes the weight tensors must have, by role, for the given input.
    pub fn weight_shapes(&self, input: &[usize]) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerKind::Dense { in_dim, out_dim } => {
                vec![("kernel", vec![out_dim, in_dim]), ("bias", vec![out_dim])]
            }
            LayerKind::Conv2d {
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => vec![
                (
                    "kernel",
                    vec![out_channels, in_channels, kernel_h, kernel_w],
                ),
                ("bias", vec![out_channels]),
            ],
            LayerKind::Batchnorm { .. } => {
                let c = *input.last().unwrap_or(&0);
                ["gamma", "beta", "moving_mean", "moving_var"]
                    .into_iter()
                    .map(|r| (r, vec![c]))
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

fn image_dims(input: &[usize], kind: &str) -> std::result::Result<[usize; 3], String> {
    match *input {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(format!(
            "{kind} expects [height, width, channels], got {input:?}"
        )),
    }
}

/// Spatial output extent, or `None` when the window does not fit.
fn conv_out(size: usize, kernel: usize, stride: usize, padding: Padding) -> Option<usize> {
    match padding {
        Padding::Same => Some(size.div_ceil(stride)),
        Padding::Valid if kernel <= size => Some((size - kernel) / stride + 1),
        Padding::Valid => None,
    }
}

/// Leading (low-side) zero padding for `same` convolution.
pub(crate) fn same_pad_low(size: usize, kernel: usize, stride: usize) -> usize {
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(size);
    total / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    /// Role (`kernel`, `bias`, ...) to tensor name in the weights blob.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, String>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        let name = name.into();
        let weights = kind
            .weight_roles()
            .iter()
            .map(|role| (role.to_string(), format!("{name}/{role}")))
            .collect();
        Self {
            name,
            kind,
            weights,
        }
    }

    pub fn weight_ref(&self, role: &str) -> Option<&str> {
        self.weights.get(role).map(String::as_str)
    }
}

/// A model description plus its weights, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub name: String,
    pub task: Task,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    #[serde(skip)]
    pub weights: BTreeMap<String, Tensor>,
}

impl ModelManifest {
    /// Checks every structural invariant and returns the output shape of
    /// each layer.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.layers.is_empty() {
            return Err(Error::Schema("model has no layers".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Schema(format!(
                "input_shape {:?} must be non-empty with positive dimensions",
                self.input_shape
            )));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if layer.name.is_empty() {
                return Err(Error::Schema("layer with empty name".into()));
            }
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
            layer
                .kind
                .check_params()
                .map_err(|e| Error::Schema(format!("layer `{}`: {e}", layer.name)))?;
            let roles = layer.kind.weight_roles();
            for role in roles {
                if !layer.weights.contains_key(*role) {
                    return Err(Error::Schema(format!(
                        "layer `{}` is missing weight role `{role}`",
                        layer.name
                    )));
                }
            }
            if let Some(extra) = layer.weights.keys().find(|r| !roles.contains(&r.as_str())) {
                return Err(Error::Schema(format!(
                    "layer `{}` ({}) has unexpected weight role `{extra}`",
                    layer.name,
                    layer.kind.name()
                )));
            }
        }

        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape.clone();
        for layer in &self.layers {
            for (role, expected) in layer.kind.weight_shapes(&current) {
                let tensor_name = &layer.weights[role];
                let tensor = self
                    .weights
                    .get(tensor_name)
                    .ok_or_else(|| Error::UnresolvedWeight(tensor_name.clone()))?;
                if tensor.shape() != expected.as_slice() {
                    return Err(Error::WeightShape {
                        name: tensor_name.clone(),
                        expected,
                        found: tensor.shape().to_vec(),
                    });
                }
            }
            current = layer
                .kind
                .output_shape(&current)
                .map_err(|reason| Error::ShapeChain {
                    layer: layer.name.clone(),
                    reason,
                })?;
            shapes.push(current.clone());
        }

        for (name, tensor) in &self.weights {
            tensor.check_finite(&format!("weight `{name}`"))?;
        }

        let ends_in_softmax = matches!(
            self.layers.last().map(|l| &l.kind),
            Some(LayerKind::Softmax)
        );
        match (self.task, ends_in_softmax) {
            (Task::Classification, false) => {
                return Err(Error::Schema(
                    "classification models must end in softmax".into(),
                ))
            }
            (Task::Regression, true) => {
                return Err(Error::Schema(
                    "regression models must not end in softmax".into(),
                ))
            }
            _ => {}
        }
        Ok(shapes)
    }
}

/// A validated model: every weight resolves and layer shapes chain.
#[derive(Debug, Clone)]
pub struct Model {
    manifest: ModelManifest,
    shapes: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(manifest: ModelManifest) -> Result<Self> {
        let shapes = manifest.validate()?;
        Ok(Self { manifest, shapes })
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    pub fn into_manifest(self) -> ModelManifest {
        self.manifest
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn task(&self) -> Task {
        self.manifest.task
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.manifest.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.manifest.layers
    }

    /// Output shape of layer `i`.
    pub fn layer_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("validated models have layers")
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.manifest.layers.iter().position(|l| l.name == name)
    }

    pub fn weight(&self, layer: &LayerSpec, role: &str) -> &Tensor {
        let name = &layer.weights[role];
        &self.manifest.weights[name]
    }

    pub fn has_dropout(&self) -> bool {
        self.layers()
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Dropout { .. }))
    }

    /// Name of the layer feeding the final softmax, or of the final layer
    /// for models without one. This is the default trace layer.
    pub fn default_trace_layer(&self) -> &str {
        let layers = self.layers();
        let idx = match layers.last().map(|l| &l.kind) {
            Some(LayerKind::Softmax) if layers.len() > 1 => layers.len() - 2,
            _ => layers.len() - 1,
        };
        &layers[idx].name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(name: &str, i: usize, o: usize) -> LayerSpec {
        LayerSpec::new(
            name,
            LayerKind::Dense {
                in_dim: i,
                out_dim: o,
            },
        )
    }

    fn weights_for(layers: &[LayerSpec], input: &[usize]) -> BTreeMap<String, Tensor> {
        let mut shape = input.to_vec();
        let mut out = BTreeMap::new();
        for l in layers {
            for (role, s) in l.kind.weight_shapes(&shape) {
                out.insert(l.weights[role].clone(), Tensor::zeros(s).unwrap());
            }
            shape = l.kind.output_shape(&shape).unwrap();
        }
        out
    }

    fn mlp() -> ModelManifest {
        let layers = vec![
            dense("dense1", 784, 10),
            LayerSpec::new("relu1", LayerKind::Relu),
            dense("dense2", 10, 3),
            LayerSpec::new("softmax", LayerKind::Softmax),
        ];
        ModelManifest {
            name: "mlp".into(),
            task: Task::Classification,
            input_shape: vec![784],
            weights: weights_for(&layers, &[784]),
            layers,
        }
    }

    #[test]
    fn valid_mlp_shapes() {
        let m = Model::new(mlp()).unwrap();
        assert_eq!(m.output_shape(), &[3]);
        assert_eq!(m.default_trace_layer(), "dense2");
    }

    #[test]
    fn missing_tensor_is_unresolved() {
        let mut m = mlp();
        m.weights.remove("dense1/bias");
        assert!(matches!(m.validate(), Err(Error::UnresolvedWeight(n)) if n == "dense1/bias"));
    }

    #[test]
    fn wrong_weight_shape() {
        let mut m = mlp();
        m.weights.insert(
            "dense1/kernel".into(),
            Tensor::zeros(vec![10, 783]).unwrap(),
        );
        assert!(matches!(m.validate(), Err(Error::WeightShape { .. })));
    }

    #[test]
    fn shape_chain_break() {
        let mut m = mlp();
        m.layers[2] = dense("dense2", 11, 3);
        m.weights = weights_for(&m.layers[..2], &[784]);
        m.weights
            .insert("dense2/kernel".into(), Tensor::zeros(vec![3, 11]).unwrap());
        m.weights
            .insert("dense2/bias".into(), Tensor::zeros(vec![3]).unwrap());
        assert!(matches!(m.validate(), Err(Error::ShapeChain { layer, .. }) if layer == "dense2"));
    }

    #[test]
    fn schema_violations() {
        let mut m = mlp();
        m.layers.clear();
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = mlp();
        m.layers
            .insert(1, LayerSpec::new("d", LayerKind::Dropout { rate: 1.0 }));
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = mlp();
        m.task = Task::Regression;
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = mlp();
        m.layers.pop();
        assert!(matches!(m.validate(), Err(Error::Schema(_))));

        let mut m = mlp();
        m.layers[1].name = "dense1".into();
        assert!(matches!(m.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn non_finite_weight() {
        let mut m = mlp();
        m.weights.get_mut("dense2/bias").unwrap().data_mut()[1] = f32::NAN;
        assert!(matches!(m.validate(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn conv_shapes() {
        let same = LayerKind::Conv2d {
            out_channels: 4,
            in_channels: 1,
            kernel_h: 3,
            kernel_w: 2,
            stride: 2,
            padding: Padding::Same,
        };
        assert_eq!(same.output_shape(&[5, 5, 1]).unwrap(), vec![3, 3, 4]);
        let valid = LayerKind::Conv2d {
            out_channels: 4,
            in_channels: 1,
            kernel_h: 3,
            kernel_w: 2,
            stride: 2,
            padding: Padding::Valid,
        };
        assert_eq!(valid.output_shape(&[5, 5, 1]).unwrap(), vec![2, 2, 4]);
        assert!(valid.output_shape(&[2, 5, 1]).is_err());
        assert!(valid.output_shape(&[5, 5, 2]).is_err());
        let pool = LayerKind::Maxpool2d {
            kernel: 2,
            stride: 2,
        };
        assert_eq!(pool.output_shape(&[5, 4, 3]).unwrap(), vec![2, 2, 3]);
        assert_eq!(
            LayerKind::Flatten.output_shape(&[2, 2, 3]).unwrap(),
            vec![12]
        );
        // 5 wide, kernel 2, stride 2 -> out 3, total pad 1, all on the high side
        assert_eq!(same_pad_low(5, 2, 2), 0);
        assert_eq!(same_pad_low(5, 3, 1), 1);
        assert_eq!(same_pad_low(4, 4, 1), 1);
    }

    #[test]
    fn layer_json_shape() {
        let l = dense("fc", 2, 3);
        let json = serde_json::to_value(&l).unwrap();
        assert_eq!(json["kind"], "dense");
        assert_eq!(json["name"], "fc");
        assert_eq!(json["in_dim"], 2);
        assert_eq!(json["weights"]["kernel"], "fc/kernel");
        let back: LayerSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, l);

        let d: LayerSpec =
            serde_json::from_str(r#"{"kind":"dropout","name":"d","rate":0.5}"#).unwrap();
        assert_eq!(d.kind, LayerKind::Dropout { rate: 0.5 });
    }
}
