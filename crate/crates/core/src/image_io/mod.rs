//! Raster ingestion (binary PPM, PNG), bilinear resizing and pixel
//! normalization to and from tensors.

mod normalize;
mod raster;

pub use normalize::{
    from_tensor, resize_bilinear, to_tensor, Normalization, NormalizationSpec, PixelRange, IMAGENET_MEAN,
};
pub use raster::{read_image, write_image, RasterImage};
