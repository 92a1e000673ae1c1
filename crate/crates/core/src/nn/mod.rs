//! Minimal differentiable layer stack.
//!
//! Every layer operates on a single example; batching happens in
//! [`train`]. Activations are channel-major: a 1-D signal is `[channels,
//! length]`, an image is `[channels, height, width]`.

mod gradcheck;
mod layers;
mod train;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ssmd::{ModelFile, SsmdError};
use crate::tensor::{Tensor, TensorError};

pub use gradcheck::{grad_check, GradCheckReport};
pub use train::{softmax_cross_entropy, train, TrainConfig, TrainReport};

pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("layer {layer}: expected input shape {expected}, got {found:?}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        found: Vec<usize>,
    },
    #[error("invalid layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} output classes")]
    BadLabel { label: usize, classes: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid training configuration: {0}")]
    BadConfig(&'static str),
    #[error("model file is missing record `{0}`")]
    MissingRecord(String),
    #[error("model file is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Format(#[from] SsmdError),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

/// One stage of a network together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    AvgPool1d {
        size: usize,
        stride: usize,
    },
    AvgPool2d {
        size: usize,
        stride: usize,
    },
    /// Elman cell over a `[features, time]` sequence; emits the final hidden state.
    Recurrent {
        inputs: usize,
        hidden: usize,
    },
    Relu,
    Sigmoid,
    Softmax,
}

/// `floor((extent - kernel) / stride) + 1`, or `None` when the window does not fit.
pub fn window_extent(extent: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > extent {
        return None;
    }
    Some((extent - kernel) / stride + 1)
}

impl LayerSpec {
    pub fn conv1d(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
        }
    }

    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
        }
    }

    pub fn avgpool1d(size: usize) -> Self {
        Self::AvgPool1d { size, stride: size }
    }

    pub fn avgpool2d(size: usize) -> Self {
        Self::AvgPool2d { size, stride: size }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self::Dense { inputs, outputs }
    }

    pub fn recurrent(inputs: usize, hidden: usize) -> Self {
        Self::Recurrent { inputs, hidden }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dense { .. } => "dense",
            Self::Conv1d { .. } => "conv1d",
            Self::Conv2d { .. } => "conv2d",
            Self::AvgPool1d { .. } => "avgpool1d",
            Self::AvgPool2d { .. } => "avgpool2d",
            Self::Recurrent { .. } => "recurrent",
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
            Self::Softmax => "softmax",
        }
    }

    /// Output shape for a given input shape, computed without touching data.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let fit = |extent, kernel, stride| {
            window_extent(extent, kernel, stride)
                .ok_or_else(|| format!("window {kernel} (stride {stride}) does not fit extent {extent}"))
        };
        match *self {
            Self::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(format!("{inputs} flattened inputs"));
                }
                Ok(vec![outputs])
            }
            Self::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => match input {
                [c, l] if *c == in_channels => Ok(vec![out_channels, fit(*l, kernel, stride)?]),
                _ => Err(format!("[{in_channels}, length]")),
            },
            Self::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => match input {
                [c, h, w] if *c == in_channels => {
                    Ok(vec![out_channels, fit(*h, kernel, stride)?, fit(*w, kernel, stride)?])
                }
                _ => Err(format!("[{in_channels}, height, width]")),
            },
            Self::AvgPool1d { size, stride } => match input {
                [c, l] => Ok(vec![*c, fit(*l, size, stride)?]),
                _ => Err("[channels, length]".into()),
            },
            Self::AvgPool2d { size, stride } => match input {
                [c, h, w] => Ok(vec![*c, fit(*h, size, stride)?, fit(*w, size, stride)?]),
                _ => Err("[channels, height, width]".into()),
            },
            Self::Recurrent { inputs, hidden } => match input {
                [f, _t] if *f == inputs => Ok(vec![hidden]),
                _ => Err(format!("[{inputs}, time]")),
            },
            Self::Relu | Self::Sigmoid | Self::Softmax => Ok(input.to_vec()),
        }
    }

    /// Parameter names and shapes in initialization order, with (fan_in, fan_out).
    fn parameter_shapes(&self) -> Vec<(&'static str, Vec<usize>, usize, usize)> {
        match *self {
            Self::Dense { inputs, outputs } => vec![
                ("weight", vec![outputs, inputs], inputs, outputs),
                ("bias", vec![outputs], inputs, outputs),
            ],
            Self::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let (fi, fo) = (in_channels * kernel, out_channels * kernel);
                vec![
                    ("weight", vec![out_channels, in_channels, kernel], fi, fo),
                    ("bias", vec![out_channels], fi, fo),
                ]
            }
            Self::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let k2 = kernel * kernel;
                let (fi, fo) = (in_channels * k2, out_channels * k2);
                vec![
                    ("weight", vec![out_channels, in_channels, kernel, kernel], fi, fo),
                    ("bias", vec![out_channels], fi, fo),
                ]
            }
            Self::Recurrent { inputs, hidden } => vec![
                ("w_in", vec![hidden, inputs], inputs, hidden),
                ("w_rec", vec![hidden, hidden], hidden, hidden),
                ("bias", vec![hidden], inputs, hidden),
            ],
            _ => Vec::new(),
        }
    }
}

pub(crate) fn param_name(layer: usize, name: &str) -> String {
    format!("{layer}.{name}")
}

/// A layer stack, its parameters, and the seed they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: BTreeMap<String, Tensor>,
    rng_seed: u64,
}

impl Model {
    /// Validates the shape chain and draws uniform weights: He scaling for
    /// layers that feed a ReLU, Glorot otherwise. Biases start at zero.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, rng_seed: u64) -> Result<Self> {
        use rand::Rng;

        let shapes = shape_chain(&input_shape, &layers)?;
        debug_assert_eq!(shapes.len(), layers.len() + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut params = BTreeMap::new();
        for (idx, layer) in layers.iter().enumerate() {
            let feeds_relu = matches!(layers.get(idx + 1), Some(LayerSpec::Relu));
            for (name, shape, fan_in, fan_out) in layer.parameter_shapes() {
                let n: usize = shape.iter().product();
                let data = if name == "bias" {
                    vec![0.0; n]
                } else {
                    let s = if feeds_relu {
                        (6.0 / fan_in as f64).sqrt()
                    } else {
                        (6.0 / (fan_in + fan_out) as f64).sqrt()
                    };
                    (0..n).map(|_| rng.random_range(-s..s)).collect()
                };
                params.insert(param_name(idx, name), Tensor::new(shape, data)?);
            }
        }
        Ok(Self {
            input_shape,
            layers,
            params,
            rng_seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        shape_chain(&self.input_shape, &self.layers)
            .expect("validated at construction")
            .pop()
            .expect("chain includes the input shape")
    }

    fn param(&self, layer: usize, name: &str) -> &Tensor {
        &self.params[&param_name(layer, name)]
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("{:?}", self.input_shape),
                found: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for idx in 0..self.layers.len() {
            x = layers::forward(self, idx, &x)?;
        }
        Ok(x)
    }

    /// Inputs to every layer plus the final output.
    fn trace(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for idx in 0..self.layers.len() {
            let next = layers::forward(self, idx, &acts[idx])?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `loss_grad` = dLoss/dOutput.
    pub fn backward(&self, input: &Tensor, loss_grad: &Tensor) -> Result<Gradients> {
        Ok(self.backward_with_output(input, |_| Ok(loss_grad.clone()))?.1)
    }

    /// Runs the forward pass, asks `grad_of` for dLoss/dOutput, then backpropagates.
    pub(crate) fn backward_with_output<F>(&self, input: &Tensor, grad_of: F) -> Result<(Tensor, Gradients)>
    where
        F: FnOnce(&Tensor) -> Result<Tensor>,
    {
        let acts = self.trace(input)?;
        let output = acts.last().expect("trace is never empty").clone();
        let mut grad = grad_of(&output)?;
        if grad.shape() != output.shape() {
            return Err(NnError::ShapeMismatch {
                layer: self.layers.len(),
                expected: format!("loss gradient of shape {:?}", output.shape()),
                found: grad.shape().to_vec(),
            });
        }
        let mut grads = Gradients::new();
        for idx in (0..self.layers.len()).rev() {
            grad = layers::backward(self, idx, &acts[idx], &acts[idx + 1], &grad, &mut grads)?;
        }
        Ok((output, grads))
    }

    /// Writes the model as an SSMD record set.
    pub fn to_file(&self) -> ModelFile {
        let mut file = ModelFile::default();
        let arch: Vec<f64> = self.layers.iter().flat_map(encode_layer).collect();
        file.push(
            "arch",
            Tensor::new(vec![self.layers.len().max(1), 5], pad_arch(arch, self.layers.len()))
                .expect("arch rows are five wide"),
        );
        file.push(
            "input_shape",
            Tensor::vector(self.input_shape.iter().map(|&d| d as f64).collect()),
        );
        file.push(
            "seed",
            Tensor::vector(vec![(self.rng_seed >> 32) as f64, (self.rng_seed & 0xffff_ffff) as f64]),
        );
        for (name, t) in &self.params {
            file.push(&format!("param.{name}"), t.clone());
        }
        file
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let get = |name: &str| file.get(name).ok_or_else(|| NnError::MissingRecord(name.to_string()));
        let arch = get("arch")?;
        let layers = if arch.data().iter().all(|&v| v == -1.0) {
            Vec::new()
        } else {
            arch.data().chunks(5).map(decode_layer).collect::<Result<Vec<_>>>()?
        };
        let input_shape = get("input_shape")?
            .data()
            .iter()
            .map(|&v| as_count(v))
            .collect::<Result<Vec<_>>>()?;
        let seed = get("seed")?.data();
        if seed.len() != 2 {
            return Err(NnError::Malformed("seed record must hold two words".into()));
        }
        let rng_seed = ((as_count(seed[0])? as u64) << 32) | as_count(seed[1])? as u64;

        let template = Model::new(input_shape, layers, rng_seed)?;
        let mut params = BTreeMap::new();
        for (name, expected) in &template.params {
            let t = get(&format!("param.{name}"))?;
            if t.shape() != expected.shape() {
                return Err(NnError::Malformed(format!(
                    "parameter {name} has shape {:?}, architecture needs {:?}",
                    t.shape(),
                    expected.shape()
                )));
            }
            params.insert(name.clone(), t.clone());
        }
        Ok(Self { params, ..template })
    }
}

fn shape_chain(input: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if input.is_empty() || input.contains(&0) {
        return Err(NnError::InvalidLayer {
            layer: 0,
            reason: format!("input shape {input:?} must be non-empty and positive"),
        });
    }
    let mut shapes = vec![input.to_vec()];
    for (idx, layer) in layers.iter().enumerate() {
        validate_hyperparameters(idx, layer)?;
        let current = shapes.last().expect("non-empty");
        let next = layer.output_shape(current).map_err(|expected| NnError::ShapeMismatch {
            layer: idx,
            expected,
            found: current.clone(),
        })?;
        shapes.push(next);
    }
    Ok(shapes)
}

fn validate_hyperparameters(idx: usize, layer: &LayerSpec) -> Result<()> {
    let positive = match *layer {
        LayerSpec::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
        }
        | LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0,
        LayerSpec::AvgPool1d { size, stride } | LayerSpec::AvgPool2d { size, stride } => size > 0 && stride > 0,
        LayerSpec::Recurrent { inputs, hidden } => inputs > 0 && hidden > 0,
        LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Softmax => true,
    };
    if positive {
        Ok(())
    } else {
        Err(NnError::InvalidLayer {
            layer: idx,
            reason: format!("{} hyperparameters must be positive", layer.name()),
        })
    }
}

fn encode_layer(layer: &LayerSpec) -> [f64; 5] {
    let f = |v: usize| v as f64;
    match *layer {
        LayerSpec::Dense { inputs, outputs } => [0.0, f(inputs), f(outputs), 0.0, 0.0],
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => [1.0, f(in_channels), f(out_channels), f(kernel), f(stride)],
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => [2.0, f(in_channels), f(out_channels), f(kernel), f(stride)],
        LayerSpec::AvgPool1d { size, stride } => [3.0, f(size), f(stride), 0.0, 0.0],
        LayerSpec::AvgPool2d { size, stride } => [4.0, f(size), f(stride), 0.0, 0.0],
        LayerSpec::Recurrent { inputs, hidden } => [5.0, f(inputs), f(hidden), 0.0, 0.0],
        LayerSpec::Relu => [6.0, 0.0, 0.0, 0.0, 0.0],
        LayerSpec::Sigmoid => [7.0, 0.0, 0.0, 0.0, 0.0],
        LayerSpec::Softmax => [8.0, 0.0, 0.0, 0.0, 0.0],
    }
}

// A layerless model still needs a non-empty arch record; a row of -1 marks it.
fn pad_arch(arch: Vec<f64>, layers: usize) -> Vec<f64> {
    if layers == 0 {
        vec![-1.0; 5]
    } else {
        arch
    }
}

fn as_count(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(NnError::Malformed(format!("{v} is not a count")))
    }
}

fn decode_layer(row: &[f64]) -> Result<LayerSpec> {
    let a = as_count(row[1])?;
    let b = as_count(row[2])?;
    let c = as_count(row[3])?;
    let d = as_count(row[4])?;
    Ok(match row[0] as i64 {
        0 => LayerSpec::Dense { inputs: a, outputs: b },
        1 => LayerSpec::Conv1d {
            in_channels: a,
            out_channels: b,
            kernel: c,
            stride: d,
        },
        2 => LayerSpec::Conv2d {
            in_channels: a,
            out_channels: b,
            kernel: c,
            stride: d,
        },
        3 => LayerSpec::AvgPool1d { size: a, stride: b },
        4 => LayerSpec::AvgPool2d { size: a, stride: b },
        5 => LayerSpec::Recurrent { inputs: a, hidden: b },
        6 => LayerSpec::Relu,
        7 => LayerSpec::Sigmoid,
        8 => LayerSpec::Softmax,
        other => return Err(NnError::Malformed(format!("unknown layer kind {other}"))),
    })
}
