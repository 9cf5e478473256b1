pub mod error;
pub mod image_io;
pub mod nst;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod vgg;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;

pub type TensorF32 = tensor::Tensor<f32>;
pub type TensorF64 = tensor::Tensor<f64>;
pub type WeightStoreF32 = vgg::WeightStore<f32>;
pub type WeightStoreF64 = vgg::WeightStore<f64>;
pub type DescriptorSetF32 = retrieval::DescriptorSet<f32>;
pub type DescriptorSetF64 = retrieval::DescriptorSet<f64>;
