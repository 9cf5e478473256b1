//! VGG-16-shaped network: layer layout, weights, forward passes with named
//! taps, descriptor extraction and fine-tuning of the classifier.
//!
//! Conv and linear taps read the activation after the ReLU that follows
//! them, so `conv3_1` means "relu(conv3_1(x))". The descriptor is read at
//! `fc6` (after its ReLU), the first fully-connected output.

mod forward;
mod spec;
mod train;
mod weights;

pub use forward::{backward, extract_descriptor, forward_collect, forward_trace, Backward, ForwardTrace, Mode, ParamGrads};
pub use spec::{
    LayerDesc, LayerKind, NetworkSpec, Scale, TapPoint, CONTENT_LAYER, DESCRIPTOR_LAYER, INPUT_TAP, STYLE_LAYERS,
};
pub use train::{evaluate_classifier, fine_tune, LabeledImage, TrainConfig, TrainReport};
pub use weights::{load_weights, load_weights_for, save_weights, WeightStore, HEAD_INIT_BOUND, WEIGHT_MAGIC, WEIGHT_VERSION};

pub(crate) use weights::ByteReader;
