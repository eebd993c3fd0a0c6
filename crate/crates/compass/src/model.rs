//! Serializable feed-forward classifier: layer specs, parameters, forward
//! pass on the autodiff tape, and the on-disk model format.
//!
//! Models emit raw logits; softmax is applied by the caller that needs
//! probabilities. On disk a model is a directory with a `manifest` (JSON)
//! and a `weights.bin` blob of little-endian f32 in declared layer order
//! (weight then bias per parameterized layer).

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tape::{GradientSet, NodeId, Tape, TapeError};
use crate::tensor::{Tensor, TensorError};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),
    #[error("weights blob holds {got} bytes, manifest declares {expected}")]
    BlobLength { expected: usize, got: usize },
    #[error("layer {index}: shapes do not compose ({detail})")]
    BadLayerChain { index: usize, detail: String },
    #[error("batch input shape {got:?} does not match model input {expected:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("class count must be >= 2, got {0}")]
    BadClassCount(usize),
    #[error("missing fixture file: {0}")]
    MissingFixture(String),
}

/// One layer of the network, dimensions only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        padding: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
    },
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Dense { input, output } => input * output + output,
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel.0 * kernel.1 + out_channels,
            _ => 0,
        }
    }

    /// Output shape given an input shape, or a composition error message.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            LayerSpec::Dense { input: din, output } => match input {
                [n] if n == din => Ok(vec![*output]),
                other => Err(format!("dense expects [{din}], got {other:?}")),
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => match input {
                [c, h, w] if c == in_channels => {
                    let oh = (h + 2 * padding).checked_sub(kernel.0 - 1);
                    let ow = (w + 2 * padding).checked_sub(kernel.1 - 1);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => {
                            Ok(vec![*out_channels, oh, ow])
                        }
                        _ => Err(format!("kernel {kernel:?} too large for {input:?}")),
                    }
                }
                other => Err(format!(
                    "conv2d expects [{in_channels},H,W], got {other:?}"
                )),
            },
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
            LayerSpec::MaxPool2d { window } => match input {
                [c, h, w] if h / window > 0 && w / window > 0 => {
                    Ok(vec![*c, h / window, w / window])
                }
                other => Err(format!("max-pool2d window {window} on {other:?}")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// Parameters of a single layer; `None` for parameter-free kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Dense { weight: Tensor, bias: Tensor },
    Conv2d { kernel: Tensor, bias: Tensor },
    None,
}

impl LayerParams {
    /// The layer's tensors in (weight, bias) order; empty for `None`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::Conv2d { kernel, bias } => vec![kernel, bias],
            LayerParams::None => vec![],
        }
    }

    /// Rebuild a value of the same variant as `like` from tensors in
    /// (weight, bias) order — used to reshape gradient lists into the
    /// parameter layout.
    pub fn from_tensors(like: &LayerParams, tensors: &[Tensor]) -> LayerParams {
        match like {
            LayerParams::Dense { .. } => LayerParams::Dense {
                weight: tensors[0].clone(),
                bias: tensors[1].clone(),
            },
            LayerParams::Conv2d { .. } => LayerParams::Conv2d {
                kernel: tensors[0].clone(),
                bias: tensors[1].clone(),
            },
            LayerParams::None => LayerParams::None,
        }
    }
}

/// Immutable classifier: spec, parameters, and the dataset-facing metadata.
#[derive(Debug, Clone)]
pub struct Model {
    name: String,
    input_shape: Vec<usize>,
    class_count: usize,
    spec: Vec<LayerSpec>,
    params: Vec<LayerParams>,
}

/// Tape handles for one recorded forward pass.
pub struct ForwardTape {
    pub tape: Tape,
    pub input: NodeId,
    pub logits: NodeId,
    /// Per layer: parameter node ids in (weight, bias) order.
    pub layer_params: Vec<Vec<NodeId>>,
}

impl Model {
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        class_count: usize,
        spec: Vec<LayerSpec>,
        params: Vec<LayerParams>,
    ) -> Result<Self, ModelError> {
        if class_count < 2 {
            return Err(ModelError::BadClassCount(class_count));
        }
        let model = Model {
            name: name.into(),
            input_shape,
            class_count,
            spec,
            params,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.spec.len() != self.params.len() {
            return Err(ModelError::CorruptManifest(format!(
                "{} layer specs but {} parameter sets",
                self.spec.len(),
                self.params.len()
            )));
        }
        let mut shape = self.input_shape.clone();
        for (index, (spec, params)) in self.spec.iter().zip(&self.params).enumerate() {
            shape = spec
                .output_shape(&shape)
                .map_err(|detail| ModelError::BadLayerChain { index, detail })?;
            let ok = match (spec, params) {
                (LayerSpec::Dense { input, output }, LayerParams::Dense { weight, bias }) => {
                    weight.shape() == [*output, *input] && bias.shape() == [*output]
                }
                (
                    LayerSpec::Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                        ..
                    },
                    LayerParams::Conv2d { kernel: k, bias },
                ) => {
                    k.shape() == [*out_channels, *in_channels, kernel.0, kernel.1]
                        && bias.shape() == [*out_channels]
                }
                (
                    LayerSpec::Relu
                    | LayerSpec::MaxPool2d { .. }
                    | LayerSpec::Flatten
                    | LayerSpec::Softmax,
                    LayerParams::None,
                ) => true,
                _ => false,
            };
            if !ok {
                return Err(ModelError::BadLayerChain {
                    index,
                    detail: "parameter shapes do not match spec".into(),
                });
            }
        }
        if shape != [self.class_count] {
            return Err(ModelError::BadLayerChain {
                index: self.spec.len(),
                detail: format!(
                    "final layer emits {shape:?}, expected [{}]",
                    self.class_count
                ),
            });
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.spec.iter().map(LayerSpec::param_count).sum()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Model {
        self.name = name.into();
        self
    }

    /// Record the forward pass for one sample onto a fresh tape.
    pub fn record_forward(&self) -> ForwardTape {
        let mut tape = Tape::new();
        let input = tape.input(self.input_shape.clone());
        let mut cur = input;
        let mut cur_shape = self.input_shape.clone();
        let mut layer_params = Vec::with_capacity(self.spec.len());
        for (spec, params) in self.spec.iter().zip(&self.params) {
            let mut ids = Vec::new();
            cur = match (spec, params) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
                    let w = tape.parameter(weight.clone());
                    let b = tape.parameter(bias.clone());
                    ids.push(w);
                    ids.push(b);
                    let mm = tape.matmul(w, cur);
                    tape.add(mm, b)
                }
                (
                    LayerSpec::Conv2d { padding, .. },
                    LayerParams::Conv2d { kernel, bias },
                ) => {
                    let k = tape.parameter(kernel.clone());
                    let b = tape.parameter(bias.clone());
                    ids.push(k);
                    ids.push(b);
                    tape.conv2d(cur, k, b, *padding)
                }
                (LayerSpec::Relu, _) => tape.relu(cur),
                (LayerSpec::MaxPool2d { window }, _) => tape.max_pool2d(cur, *window),
                // flatten is a pure reshape; matmul accepts flat operands
                (LayerSpec::Flatten, _) => cur,
                (LayerSpec::Softmax, _) => tape.softmax(cur),
                _ => unreachable!("validated at construction"),
            };
            cur_shape = spec.output_shape(&cur_shape).expect("validated");
            layer_params.push(ids);
        }
        let _ = cur_shape;
        ForwardTape {
            tape,
            input,
            logits: cur,
            layer_params,
        }
    }

    fn bind(&self, sample: &Tensor) -> Result<HashMap<NodeId, Tensor>, ModelError> {
        if sample.shape() != self.input_shape.as_slice() {
            return Err(ModelError::InputShape {
                expected: self.input_shape.clone(),
                got: sample.shape().to_vec(),
            });
        }
        Ok(HashMap::new())
    }

    /// Logits for a single sample.
    pub fn logits(&self, sample: &Tensor) -> Result<Tensor, ModelError> {
        self.bind(sample)?;
        let mut fwd = self.record_forward();
        let mut bindings = HashMap::new();
        bindings.insert(fwd.input, sample.clone());
        Ok(fwd.tape.evaluate(fwd.logits, &bindings)?)
    }

    /// Logits for a batch of samples; predicted class per sample is the
    /// argmax with ties broken toward the lowest index.
    pub fn predict_logits(&self, batch: &[Tensor]) -> Result<Vec<Tensor>, ModelError> {
        batch.iter().map(|s| self.logits(s)).collect()
    }

    /// Softmax probabilities for one sample.
    pub fn probabilities(&self, sample: &Tensor) -> Result<Tensor, ModelError> {
        let logits = self.logits(sample)?;
        Ok(softmax(&logits))
    }

    pub fn predict_class(&self, sample: &Tensor) -> Result<usize, ModelError> {
        Ok(self.logits(sample)?.argmax())
    }

    /// Gradient of the cross-entropy loss (softmax over logits, true label
    /// `label`) with respect to the input; also returns the loss value.
    pub fn input_loss_gradient(
        &self,
        sample: &Tensor,
        label: usize,
    ) -> Result<(f64, Tensor), ModelError> {
        self.bind(sample)?;
        let mut fwd = self.record_forward();
        let probs = fwd.tape.softmax(fwd.logits);
        let loss = fwd.tape.cross_entropy(probs, label);
        let mut bindings = HashMap::new();
        bindings.insert(fwd.input, sample.clone());
        let loss_value = fwd.tape.evaluate(loss, &bindings)?.scalar_value();
        let grads = fwd.tape.backward(loss)?;
        let g = grads.get_or_zero(fwd.input, &self.input_shape);
        Ok((loss_value, g))
    }

    /// Gradient of a single pre-softmax logit with respect to the input,
    /// together with the logit value.
    pub fn input_logit_gradient(
        &self,
        sample: &Tensor,
        class: usize,
    ) -> Result<(f64, Tensor), ModelError> {
        self.bind(sample)?;
        let mut fwd = self.record_forward();
        // select logit `class` as 1xC onehot . logits
        let mut onehot = Tensor::zeros(vec![1, self.class_count]);
        onehot.data_mut()[class] = 1.0;
        let sel = fwd.tape.parameter(onehot);
        let picked = fwd.tape.matmul(sel, fwd.logits);
        let scalar = fwd.tape.mean(picked);
        let mut bindings = HashMap::new();
        bindings.insert(fwd.input, sample.clone());
        let value = fwd.tape.evaluate(scalar, &bindings)?.scalar_value();
        let grads = fwd.tape.backward(scalar)?;
        Ok((value, grads.get_or_zero(fwd.input, &self.input_shape)))
    }

    /// Mean-loss gradient with respect to every parameter tensor, summed over
    /// the given samples and divided by their count. Returns gradients in the
    /// same (layer, weight-then-bias) order as `params`.
    pub fn parameter_loss_gradients(
        &self,
        samples: &[(Tensor, usize)],
    ) -> Result<Vec<Vec<Tensor>>, ModelError> {
        let mut acc: Vec<Vec<Tensor>> = self
            .params
            .iter()
            .map(|p| match p {
                LayerParams::Dense { weight, bias } => vec![
                    Tensor::zeros(weight.shape().to_vec()),
                    Tensor::zeros(bias.shape().to_vec()),
                ],
                LayerParams::Conv2d { kernel, bias } => vec![
                    Tensor::zeros(kernel.shape().to_vec()),
                    Tensor::zeros(bias.shape().to_vec()),
                ],
                LayerParams::None => vec![],
            })
            .collect();
        let n = samples.len() as f64;
        for (sample, label) in samples {
            let grads = self.loss_param_grads(sample, *label)?;
            for (layer_acc, layer_g) in acc.iter_mut().zip(grads) {
                for (a, g) in layer_acc.iter_mut().zip(layer_g) {
                    *a = a.add(&g.scale(1.0 / n))?;
                }
            }
        }
        Ok(acc)
    }

    fn loss_param_grads(
        &self,
        sample: &Tensor,
        label: usize,
    ) -> Result<Vec<Vec<Tensor>>, ModelError> {
        self.bind(sample)?;
        let mut fwd = self.record_forward();
        let probs = fwd.tape.softmax(fwd.logits);
        let loss = fwd.tape.cross_entropy(probs, label);
        let mut bindings = HashMap::new();
        bindings.insert(fwd.input, sample.clone());
        fwd.tape.evaluate(loss, &bindings)?;
        let grads: GradientSet = fwd.tape.backward(loss)?;
        let mut out = Vec::with_capacity(self.params.len());
        for (ids, params) in fwd.layer_params.iter().zip(&self.params) {
            let shapes: Vec<&Tensor> = match params {
                LayerParams::Dense { weight, bias } => vec![weight, bias],
                LayerParams::Conv2d { kernel, bias } => vec![kernel, bias],
                LayerParams::None => vec![],
            };
            out.push(
                ids.iter()
                    .zip(shapes)
                    .map(|(&id, t)| grads.get_or_zero(id, t.shape()))
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Mean cross-entropy loss over samples.
    pub fn mean_loss(&self, samples: &[(Tensor, usize)]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (sample, label) in samples {
            let probs = self.probabilities(sample)?;
            total += -probs.data()[*label].ln();
        }
        Ok(total / samples.len() as f64)
    }

    // ---- serialization ----

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::create_dir_all(path).map_err(|e| io_err(path, e))?;
        let manifest = Manifest {
            format_version: MODEL_FORMAT_VERSION,
            name: self.name.clone(),
            input_shape: self.input_shape.clone(),
            class_count: self.class_count,
            layers: self.spec.clone(),
            param_count: self.param_count(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| ModelError::CorruptManifest(e.to_string()))?;
        fs::write(path.join("manifest"), text).map_err(|e| io_err(path, e))?;

        let mut blob = Vec::with_capacity(4 * manifest.param_count);
        for params in &self.params {
            for tensor in param_tensors(params) {
                for &v in tensor.data() {
                    blob.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        fs::write(path.join("weights.bin"), blob).map_err(|e| io_err(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model, ModelError> {
        let manifest_path = path.join("manifest");
        let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| ModelError::CorruptManifest(e.to_string()))?;
        if manifest.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(manifest.format_version));
        }
        let blob_path = path.join("weights.bin");
        let blob = fs::read(&blob_path).map_err(|e| io_err(&blob_path, e))?;
        let declared: usize = manifest.layers.iter().map(LayerSpec::param_count).sum();
        if blob.len() != 4 * declared {
            return Err(ModelError::BlobLength {
                expected: 4 * declared,
                got: blob.len(),
            });
        }
        let mut floats = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut params = Vec::with_capacity(manifest.layers.len());
        for spec in &manifest.layers {
            params.push(match spec {
                LayerSpec::Dense { input, output } => LayerParams::Dense {
                    weight: take(&mut floats, vec![*output, *input])?,
                    bias: take(&mut floats, vec![*output])?,
                },
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => LayerParams::Conv2d {
                    kernel: take(
                        &mut floats,
                        vec![*out_channels, *in_channels, kernel.0, kernel.1],
                    )?,
                    bias: take(&mut floats, vec![*out_channels])?,
                },
                _ => LayerParams::None,
            });
        }
        Model::new(
            manifest.name,
            manifest.input_shape,
            manifest.class_count,
            manifest.layers,
            params,
        )
    }
}

fn take(
    iter: &mut impl Iterator<Item = f64>,
    shape: Vec<usize>,
) -> Result<Tensor, ModelError> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = iter.take(n).collect();
    if data.len() != n {
        return Err(ModelError::BlobLength {
            expected: n,
            got: data.len(),
        });
    }
    Ok(Tensor::new(shape, data)?)
}

fn param_tensors(params: &LayerParams) -> Vec<&Tensor> {
    match params {
        LayerParams::Dense { weight, bias } => vec![weight, bias],
        LayerParams::Conv2d { kernel, bias } => vec![kernel, bias],
        LayerParams::None => vec![],
    }
}

fn io_err(path: &Path, source: io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    name: String,
    input_shape: Vec<usize>,
    class_count: usize,
    layers: Vec<LayerSpec>,
    param_count: usize,
}

/// Softmax of a logit vector (numerically shifted).
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::new(
        logits.shape().to_vec(),
        exps.into_iter().map(|e| e / sum).collect(),
    )
    .expect("softmax of finite logits is finite")
}

/// Embedded reference fixtures: two pre-fitted tiny models over the bundled
/// synthetic 8x8 4-class dataset. Weights are repository files compiled into
/// the binary, byte-identical across runs.
pub mod reference {
    use super::*;

    const MLP_MANIFEST: &str = include_str!("../fixtures/tiny_mlp.model/manifest");
    const MLP_WEIGHTS: &[u8] = include_bytes!("../fixtures/tiny_mlp.model/weights.bin");
    const CNN_MANIFEST: &str = include_str!("../fixtures/tiny_cnn.model/manifest");
    const CNN_WEIGHTS: &[u8] = include_bytes!("../fixtures/tiny_cnn.model/weights.bin");

    fn from_embedded(manifest: &str, blob: &[u8]) -> Result<Model, ModelError> {
        let manifest: Manifest = serde_json::from_str(manifest)
            .map_err(|e| ModelError::CorruptManifest(e.to_string()))?;
        if manifest.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(manifest.format_version));
        }
        let declared: usize = manifest.layers.iter().map(LayerSpec::param_count).sum();
        if blob.len() != 4 * declared {
            return Err(ModelError::BlobLength {
                expected: 4 * declared,
                got: blob.len(),
            });
        }
        let mut floats = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut params = Vec::new();
        for spec in &manifest.layers {
            params.push(match spec {
                LayerSpec::Dense { input, output } => LayerParams::Dense {
                    weight: super::take(&mut floats, vec![*output, *input])?,
                    bias: super::take(&mut floats, vec![*output])?,
                },
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => LayerParams::Conv2d {
                    kernel: super::take(
                        &mut floats,
                        vec![*out_channels, *in_channels, kernel.0, kernel.1],
                    )?,
                    bias: super::take(&mut floats, vec![*out_channels])?,
                },
                _ => LayerParams::None,
            });
        }
        Model::new(
            manifest.name,
            manifest.input_shape,
            manifest.class_count,
            manifest.layers,
            params,
        )
    }

    pub fn tiny_mlp() -> Result<Model, ModelError> {
        from_embedded(MLP_MANIFEST, MLP_WEIGHTS)
    }

    pub fn tiny_cnn() -> Result<Model, ModelError> {
        from_embedded(CNN_MANIFEST, CNN_WEIGHTS)
    }

    /// Both frozen reference models.
    pub fn reference_models() -> Result<Vec<Model>, ModelError> {
        Ok(vec![tiny_mlp()?, tiny_cnn()?])
    }
}
