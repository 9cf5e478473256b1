use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Width multiplier for desk-scale variants of the VGG-16 layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scale {
    Full,
    Quarter,
    Eighth,
}

impl Scale {
    pub fn divisor(self) -> usize {
        match self {
            Scale::Full => 1,
            Scale::Quarter => 4,
            Scale::Eighth => 8,
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "1/1" | "1.0" | "full" => Ok(Scale::Full),
            "1/4" | "0.25" | "quarter" => Ok(Scale::Quarter),
            "1/8" | "0.125" | "eighth" => Ok(Scale::Eighth),
            other => Err(Error::InvalidArgument(format!("scale must be one of 1, 1/4, 1/8; got `{other}`"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Full => f.write_str("1"),
            s => write!(f, "1/{}", s.divisor()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    /// 2x2 window, stride 2.
    AvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    /// Identity at inference; the rate comes from the training config.
    Dropout,
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Linear { .. })
    }

    /// Shapes of the weight and bias tensors.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            LayerKind::Linear {
                in_features,
                out_features,
            } => vec![vec![out_features, in_features], vec![out_features]],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerDesc {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerDesc {
            name: name.into(),
            kind,
        }
    }

    pub fn conv3x3(name: impl Into<String>, in_channels: usize, out_channels: usize) -> Self {
        Self::new(
            name,
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
        )
    }
}

/// Where a named tap reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TapPoint {
    Input,
    /// Output of the layer at this index.
    Layer(usize),
}

pub const INPUT_TAP: &str = "input";
pub const STYLE_LAYERS: [&str; 5] = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"];
pub const CONTENT_LAYER: &str = "conv5_2";
pub const DESCRIPTOR_LAYER: &str = "fc6";

const VGG16_BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];
const VGG16_FC_WIDTH: usize = 4096;

/// Ordered layer list plus the input geometry it was validated against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerDesc>,
    /// `channels x height x width`.
    input: [usize; 3],
    /// Per-layer output shape without the batch axis.
    output_shapes: Vec<Vec<usize>>,
    class_count: usize,
}

impl NetworkSpec {
    /// VGG-16 layout with average pooling. The number of pooling stages is
    /// the largest `k <= 5` such that `2^k` divides both sides of the input;
    /// stages beyond it are dropped.
    pub fn vgg16(scale: Scale, height: usize, width: usize, class_count: usize) -> Result<Self> {
        let depth = (0..=5u32)
            .rev()
            .find(|&k| height % (1 << k) == 0 && width % (1 << k) == 0)
            .unwrap_or(0) as usize;
        Self::vgg16_with_pool_depth(scale, height, width, class_count, depth)
    }

    pub fn vgg16_with_pool_depth(
        scale: Scale,
        height: usize,
        width: usize,
        class_count: usize,
        pool_depth: usize,
    ) -> Result<Self> {
        if pool_depth > 5 {
            return Err(Error::InvalidArgument(format!("pool depth {pool_depth} exceeds 5")));
        }
        let d = scale.divisor();
        let mut layers = Vec::new();
        let mut channels = 3;
        for (block, &(width_full, convs)) in VGG16_BLOCKS.iter().enumerate() {
            let out = width_full / d;
            for i in 1..=convs {
                let name = format!("conv{}_{}", block + 1, i);
                layers.push(LayerDesc::conv3x3(&name, channels, out));
                layers.push(LayerDesc::new(format!("{name}_relu"), LayerKind::Relu));
                channels = out;
            }
            if block < pool_depth {
                layers.push(LayerDesc::new(format!("pool{}", block + 1), LayerKind::AvgPool));
            }
        }
        if height % (1 << pool_depth) != 0 || width % (1 << pool_depth) != 0 {
            return Err(Error::InvalidArgument(format!(
                "input {height}x{width} is not divisible by 2^{pool_depth}"
            )));
        }
        let flat = channels * (height >> pool_depth) * (width >> pool_depth);
        let fc = VGG16_FC_WIDTH / d;
        layers.push(LayerDesc::new("fc6", LayerKind::Linear { in_features: flat, out_features: fc }));
        layers.push(LayerDesc::new("fc6_relu", LayerKind::Relu));
        layers.push(LayerDesc::new("drop6", LayerKind::Dropout));
        layers.push(LayerDesc::new("fc7", LayerKind::Linear { in_features: fc, out_features: fc }));
        layers.push(LayerDesc::new("fc7_relu", LayerKind::Relu));
        layers.push(LayerDesc::new("drop7", LayerKind::Dropout));
        layers.push(LayerDesc::new(
            "fc8",
            LayerKind::Linear {
                in_features: fc,
                out_features: class_count,
            },
        ));
        Self::from_layers(layers, [3, height, width], class_count)
    }

    /// Validates an arbitrary layer chain: unique names, matching channel
    /// counts, even sizes before each pooling stage, and linear fan-ins.
    pub fn from_layers(layers: Vec<LayerDesc>, input: [usize; 3], class_count: usize) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        if input.contains(&0) {
            return Err(Error::InvalidArgument(format!("input shape {input:?} has a zero dimension")));
        }
        let mut seen = HashSet::new();
        let mut shape = input.to_vec();
        let mut output_shapes = Vec::with_capacity(layers.len());
        for layer in &layers {
            if layer.name == INPUT_TAP || !seen.insert(layer.name.as_str()) {
                return Err(Error::Validation(format!("duplicate or reserved layer name `{}`", layer.name)));
            }
            shape = match layer.kind {
                LayerKind::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let [c, h, w] = shape[..] else {
                        return Err(Error::Validation(format!("{}: convolution after a flattening layer", layer.name)));
                    };
                    if c != in_channels || kernel == 0 || stride == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return Err(Error::Validation(format!(
                            "{}: conv {in_channels}->{out_channels} k{kernel} does not fit input {c}x{h}x{w}",
                            layer.name
                        )));
                    }
                    vec![
                        out_channels,
                        (h + 2 * padding - kernel) / stride + 1,
                        (w + 2 * padding - kernel) / stride + 1,
                    ]
                }
                LayerKind::AvgPool => {
                    let [c, h, w] = shape[..] else {
                        return Err(Error::Validation(format!("{}: pooling after a flattening layer", layer.name)));
                    };
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::Validation(format!(
                            "{}: spatial size {h}x{w} is odd; resize the input",
                            layer.name
                        )));
                    }
                    vec![c, h / 2, w / 2]
                }
                LayerKind::Linear {
                    in_features,
                    out_features,
                } => {
                    let flat: usize = shape.iter().product();
                    if flat != in_features {
                        return Err(Error::Validation(format!(
                            "{}: expects {in_features} features, previous layer yields {flat}",
                            layer.name
                        )));
                    }
                    vec![out_features]
                }
                LayerKind::Relu | LayerKind::Dropout => shape,
            };
            output_shapes.push(shape.clone());
        }
        Ok(NetworkSpec {
            layers,
            input,
            output_shapes,
            class_count,
        })
    }

    pub fn layers(&self) -> &[LayerDesc] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Output shape of layer `index`, without the batch axis.
    pub fn output_shape(&self, index: usize) -> &[usize] {
        &self.output_shapes[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Resolves a tap name. Naming a conv or linear layer that is directly
    /// followed by a ReLU reads the post-activation output.
    pub fn tap(&self, name: &str) -> Result<TapPoint> {
        if name == INPUT_TAP {
            return Ok(TapPoint::Input);
        }
        let i = self.index_of(name).ok_or_else(|| Error::UnknownLayer(name.to_string()))?;
        let followed_by_relu = self.layers[i].kind.has_params()
            && self.layers.get(i + 1).is_some_and(|l| l.kind == LayerKind::Relu);
        Ok(TapPoint::Layer(if followed_by_relu { i + 1 } else { i }))
    }

    /// Shape (without batch) of the tensor a tap yields.
    pub fn tap_shape(&self, tap: TapPoint) -> Vec<usize> {
        match tap {
            TapPoint::Input => self.input.to_vec(),
            TapPoint::Layer(i) => self.output_shapes[i].clone(),
        }
    }

    /// Length of the descriptor read at `fc6`.
    pub fn descriptor_len(&self) -> Result<usize> {
        let tap = self.tap(DESCRIPTOR_LAYER)?;
        Ok(self.tap_shape(tap).iter().product())
    }

    /// Name of the final linear layer (the training head).
    pub fn head_name(&self) -> Option<&str> {
        self.layers
            .iter()
            .rev()
            .find(|l| matches!(l.kind, LayerKind::Linear { .. }))
            .map(|l| l.name.as_str())
    }

    pub fn param_layers(&self) -> impl Iterator<Item = &LayerDesc> {
        self.layers.iter().filter(|l| l.kind.has_params())
    }
}
