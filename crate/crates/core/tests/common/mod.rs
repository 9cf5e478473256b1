#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use egoreid::image_io::{write_image, RasterImage};
use egoreid::pipeline::JobConfig;
use egoreid::rng::rng_from;
use rand::Rng;

pub const SIDE: usize = 16;

/// Identity `id` as a base colour plus stripes whose direction and period
/// depend on the id; `variant` adds pixel noise and a brightness shift.
pub fn person_image(id: usize, variant: u64) -> RasterImage {
    let base = [[200, 60, 60], [60, 180, 70], [70, 80, 210], [210, 200, 60]][id % 4];
    let mut rng = rng_from(1000 * id as u64 + variant);
    let shift: i32 = rng.gen_range(-20..=20);
    let mut pixels = Vec::with_capacity(SIDE * SIDE * 3);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let coord = if id % 2 == 0 { x } else { y };
            let stripe = if (coord / (2 + id / 2)) % 2 == 0 { 40 } else { -40 };
            for c in base {
                let v = c + stripe + shift + rng.gen_range(-15..=15);
                pixels.push(v.clamp(0, 255) as u8);
            }
        }
    }
    RasterImage::new(SIDE, SIDE, pixels).unwrap()
}

/// Dark, blue-tinted checkerboard standing in for a first-person camera look.
pub fn style_image() -> RasterImage {
    let mut pixels = Vec::with_capacity(SIDE * SIDE * 3);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let on = (x / 4 + y / 4) % 2 == 0;
            pixels.extend_from_slice(if on { &[30, 40, 90] } else { &[120, 110, 160] });
        }
    }
    RasterImage::new(SIDE, SIDE, pixels).unwrap()
}

/// Writes `ids x per_id` person images and a style image into `dir` and
/// returns manifest text with one `content` record per image, paired with
/// the style image.
pub fn write_content_set(dir: &Path, ids: usize, per_id: usize) -> String {
    write_image(&style_image(), dir.join("style.ppm")).unwrap();
    let mut m = String::from("image_path,person_id,role,pair_hint\n");
    for id in 0..ids {
        for v in 0..per_id {
            let name = format!("p{id}_{v}.ppm");
            write_image(&person_image(id, v as u64), dir.join(&name)).unwrap();
            writeln!(m, "{name},{id},content,style.ppm").unwrap();
        }
    }
    m
}

/// Manifest rows `name,id,role,` for the person images written by
/// [`write_content_set`].
pub fn role_manifest(ids: usize, per_id: usize, role: &str) -> String {
    let mut m = String::from("image_path,person_id,role,pair_hint\n");
    for id in 0..ids {
        for v in 0..per_id {
            writeln!(m, "p{id}_{v}.ppm,{id},{role},").unwrap();
        }
    }
    m
}

/// Scale-1/8 network on 16x16 inputs.
pub fn toy_config(seed: u64, out: &Path) -> JobConfig {
    JobConfig::from_text(&format!(
        "seed = {seed}\nscale = 1/8\ntarget_height = {SIDE}\ntarget_width = {SIDE}\nout = {}\n",
        out.display()
    ))
    .unwrap()
}

pub struct ToyTransfer {
    pub spec: egoreid::vgg::NetworkSpec,
    pub store: egoreid::WeightStoreF32,
    pub content: egoreid::TensorF32,
    pub style: egoreid::TensorF32,
    pub cfg: egoreid::nst::NstConfig,
}

/// Scale-1/8 network, 16x16 person and style images in unit pixel scale,
/// default loss weights, white-noise start.
pub fn toy_transfer(iterations: usize, seed: u64) -> ToyTransfer {
    use egoreid::image_io::{to_tensor, Normalization, NormalizationSpec};
    use egoreid::nst::NstConfig;
    use egoreid::vgg::{NetworkSpec, Scale, WeightStore};

    let norm = NormalizationSpec {
        mode: Normalization::Scale { factor: 1.0 / 255.0 },
        ..NormalizationSpec::toy()
    };
    let spec = NetworkSpec::vgg16(Scale::Eighth, SIDE, SIDE, 2).unwrap();
    ToyTransfer {
        store: WeightStore::random(&spec, 1).unwrap(),
        content: to_tensor(&person_image(0, 0), &norm).unwrap(),
        style: to_tensor(&style_image(), &norm).unwrap(),
        cfg: NstConfig {
            iterations,
            pixel_range: norm.pixel_range(),
            seed,
            ..NstConfig::default()
        },
        spec,
    }
}
