//! Layer descriptors, shape propagation and flat parameter packing.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape of a single sample flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    /// Number of scalars in one sample.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[d]` becomes `Flat(d)`, `[c, h, w]` becomes an image.
    pub fn from_dims(dims: &[usize]) -> Result<Shape> {
        let shape = match *dims {
            [d] => Shape::Flat(d),
            [channels, height, width] => Shape::Image {
                channels,
                height,
                width,
            },
            _ => {
                return Err(Error::Shape(format!(
                    "sample dims {dims:?} are neither flat nor channel-height-width"
                )))
            }
        };
        if shape.is_empty() {
            return Err(Error::Shape(format!("sample dims {dims:?} are empty")));
        }
        Ok(shape)
    }
}

/// One layer of a feed-forward network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    /// Non-overlapping `kernel × kernel` max pooling (stride = kernel).
    MaxPool2d {
        kernel: usize,
    },
    Relu,
    Tanh,
    Flatten,
}

impl Layer {
    pub fn dense(inputs: usize, outputs: usize) -> Layer {
        Layer::Dense {
            inputs,
            outputs,
            bias: true,
        }
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Layer {
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            bias: true,
        }
    }

    /// Number of weights (excluding bias).
    pub fn weight_count(&self) -> usize {
        match *self {
            Layer::Dense {
                inputs, outputs, ..
            } => inputs * outputs,
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => in_channels * out_channels * kernel * kernel,
            _ => 0,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            Layer::Dense {
                outputs,
                bias: true,
                ..
            } => outputs,
            Layer::Conv2d {
                out_channels,
                bias: true,
                ..
            } => out_channels,
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Fan-in of one output unit, used for initialization bounds.
    pub fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    fn output_shape(&self, input: Shape) -> Result<Shape> {
        let mismatch = || Error::Shape(format!("layer {self:?} cannot consume input {input:?}"));
        match (*self, input) {
            (
                Layer::Dense {
                    inputs, outputs, ..
                },
                Shape::Flat(d),
            ) if d == inputs && outputs > 0 => Ok(Shape::Flat(outputs)),
            (
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) if channels == in_channels
                && out_channels > 0
                && kernel > 0
                && stride > 0
                && height + 2 * padding >= kernel
                && width + 2 * padding >= kernel =>
            {
                Ok(Shape::Image {
                    channels: out_channels,
                    height: (height + 2 * padding - kernel) / stride + 1,
                    width: (width + 2 * padding - kernel) / stride + 1,
                })
            }
            (
                Layer::MaxPool2d { kernel },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) if kernel > 0 && height >= kernel && width >= kernel => Ok(Shape::Image {
                channels,
                height: height / kernel,
                width: width / kernel,
            }),
            (Layer::Relu | Layer::Tanh, s) => Ok(s),
            (Layer::Flatten, s) => Ok(Shape::Flat(s.len())),
            _ => Err(mismatch()),
        }
    }
}

/// Borrowed view of one layer's parameters inside a flat vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerParams<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

/// A validated layer stack with precomputed shapes and parameter offsets.
///
/// Parameters are packed layer by layer, weights first then bias. Dense
/// weights are `[out][in]` row-major and convolution kernels are
/// `[out_ch][in_ch][ky][kx]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    input: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
}

impl ModelSpec {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::Shape("empty input shape".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        shapes.push(input);
        offsets.push(0);
        for layer in &layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
            offsets.push(offsets.last().unwrap() + layer.param_count());
        }
        Ok(ModelSpec {
            input,
            layers,
            shapes,
            offsets,
        })
    }

    /// Total parameter count `m`.
    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    /// Shape entering layer `i` (`i == layers().len()` gives the output).
    pub fn shape_at(&self, i: usize) -> Shape {
        self.shapes[i]
    }

    /// Parameter range of layer `i` inside the flat vector.
    pub fn param_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub(crate) fn check_params(&self, omega: &[f64]) -> Result<()> {
        if omega.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, model expects {}",
                omega.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Splits a flat vector into per-layer views.
    pub fn unpack<'a>(&self, omega: &'a [f64]) -> Result<Vec<LayerParams<'a>>> {
        self.check_params(omega)?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let (w, b) = omega[self.param_range(i)].split_at(layer.weight_count());
                LayerParams {
                    weights: w,
                    bias: b,
                }
            })
            .collect())
    }

    /// Inverse of [`ModelSpec::unpack`].
    pub fn pack(&self, params: &[LayerParams<'_>]) -> Result<Vec<f64>> {
        if params.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} layer blocks given for {} layers",
                params.len(),
                self.layers.len()
            )));
        }
        let mut out = Vec::with_capacity(self.param_count());
        for (layer, p) in self.layers.iter().zip(params) {
            if p.weights.len() != layer.weight_count() || p.bias.len() != layer.bias_count() {
                return Err(Error::Shape(format!(
                    "layer {layer:?} got {} weights and {} biases",
                    p.weights.len(),
                    p.bias.len()
                )));
            }
            out.extend_from_slice(p.weights);
            out.extend_from_slice(p.bias);
        }
        Ok(out)
    }
}

/// Named target architectures.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelPreset {
    /// `flatten → dense(d, hidden) → relu → dense(hidden, classes)`.
    ///
    /// With 32 input features, 48 hidden units and 3 classes this has
    /// 32·48 + 48 + 48·3 + 3 = 1731 parameters.
    MlpTiny {
        #[serde(default = "default_tiny_hidden")]
        hidden: usize,
    },
    /// Two conv blocks and a dense head, sized for 3×32×32 inputs.
    ///
    /// | layer                       | parameters          |
    /// |-----------------------------|---------------------|
    /// | conv 3→32, 3×3, pad 1       | 3·32·9 + 32 = 896   |
    /// | relu, maxpool 2             | 0                   |
    /// | conv 32→64, 3×3, pad 1      | 32·64·9 + 64 = 18496|
    /// | relu, maxpool 2             | 0                   |
    /// | flatten, dense 4096→64      | 4096·64 + 64 = 262208|
    /// | relu, dense 64→10           | 64·10 + 10 = 650    |
    /// | **total**                   | **282250**          |
    VggSmall,
}

fn default_tiny_hidden() -> usize {
    48
}

impl Default for ModelPreset {
    fn default() -> Self {
        ModelPreset::MlpTiny {
            hidden: default_tiny_hidden(),
        }
    }
}

impl ModelPreset {
    pub fn build(&self, input: Shape, n_classes: usize) -> Result<ModelSpec> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        match *self {
            ModelPreset::MlpTiny { hidden } => {
                let d = input.len();
                let mut layers = Vec::new();
                if matches!(input, Shape::Image { .. }) {
                    layers.push(Layer::Flatten);
                }
                layers.extend([
                    Layer::dense(d, hidden),
                    Layer::Relu,
                    Layer::dense(hidden, n_classes),
                ]);
                ModelSpec::new(input, layers)
            }
            ModelPreset::VggSmall => {
                let Shape::Image {
                    channels,
                    height,
                    width,
                } = input
                else {
                    return Err(Error::Shape("vgg_small needs image inputs".into()));
                };
                if height % 4 != 0 || width % 4 != 0 {
                    return Err(Error::Shape(format!(
                        "vgg_small needs sides divisible by 4, got {height}×{width}"
                    )));
                }
                ModelSpec::new(
                    input,
                    vec![
                        Layer::conv2d(channels, 32, 3, 1, 1),
                        Layer::Relu,
                        Layer::MaxPool2d { kernel: 2 },
                        Layer::conv2d(32, 64, 3, 1, 1),
                        Layer::Relu,
                        Layer::MaxPool2d { kernel: 2 },
                        Layer::Flatten,
                        Layer::dense(64 * (height / 4) * (width / 4), 64),
                        Layer::Relu,
                        Layer::dense(64, n_classes),
                    ],
                )
            }
        }
    }
}
