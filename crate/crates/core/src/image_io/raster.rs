use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image size {width}x{height} must be positive")));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                3 * width * height,
                pixels.len()
            )));
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, rgb.repeat(width * height))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Binary PPM (`P6`, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        match magic {
            b"P6" => {}
            b"P1" | b"P2" | b"P3" | b"P4" | b"P5" => {
                return Err(Error::UnsupportedFormat(format!(
                    "netpbm variant {} (only binary P6 is supported)",
                    String::from_utf8_lossy(magic)
                )))
            }
            _ => return Err(Error::format("PPM header", "missing P6 magic")),
        }
        let width = header_number(bytes, &mut pos, "width")?;
        let height = header_number(bytes, &mut pos, "height")?;
        let maxval = header_number(bytes, &mut pos, "maxval")?;
        if maxval != 255 {
            return Err(Error::UnsupportedFormat(format!("PPM maxval {maxval} (only 255 is supported)")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(Error::format("PPM header", "no whitespace after maxval")),
        }
        let need = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::format("PPM header", "image dimensions overflow"))?;
        let payload = &bytes[pos..];
        if payload.len() < need {
            return Err(Error::Truncated { what: "PPM payload" });
        }
        if payload.len() > need {
            return Err(Error::format("PPM payload", "trailing bytes after raster"));
        }
        Self::new(width, height, payload.to_vec()).map_err(|e| Error::format("PPM header", e.to_string()))
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Truncated { what: "PPM header" }),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, field: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::format("PPM header", format!("bad {field} `{}`", String::from_utf8_lossy(tok))))
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn is_png_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a P6 PPM or a PNG, chosen by content.
pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(PNG_MAGIC) {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::format("PNG", e.to_string()))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        return RasterImage::new(w as usize, h as usize, img.into_raw());
    }
    if bytes.first() == Some(&b'P') {
        return RasterImage::from_ppm(&bytes);
    }
    Err(Error::UnsupportedFormat(format!("{}: not a P6 PPM or PNG", path.display())))
}

/// Writes PNG for a `.png` extension and P6 PPM otherwise.
pub fn write_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_png_path(path) {
        let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
            .expect("validated buffer length");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::format("PNG", e.to_string()))?;
        out.into_inner()
    } else {
        img.to_ppm()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fixed_fixture() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 0, 255]);
        let img = RasterImage::from_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
        assert_eq!(img.pixel(1, 0), [0, 0, 255]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 # w\n1\n255 ".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(RasterImage::from_ppm(&bytes).unwrap().pixel(0, 0), [1, 2, 3]);
    }

    #[test]
    fn rejects_ascii_and_truncated() {
        let ascii = b"P3\n1 1\n255\n0 0 0\n";
        assert!(matches!(RasterImage::from_ppm(ascii), Err(Error::UnsupportedFormat(_))));
        let mut short = b"P6\n2 2\n255\n".to_vec();
        short.extend_from_slice(&[0; 11]);
        assert!(matches!(RasterImage::from_ppm(&short), Err(Error::Truncated { .. })));
        assert!(matches!(RasterImage::from_ppm(b"P6\n2 x\n255\n"), Err(Error::Format { .. })));
        assert!(matches!(RasterImage::from_ppm(b"P6\n2"), Err(Error::Truncated { .. })));
    }

    #[test]
    fn ppm_bytes_round_trip() {
        let img = RasterImage::new(3, 2, (0..18).collect()).unwrap();
        assert_eq!(RasterImage::from_ppm(&img.to_ppm()).unwrap(), img);
    }
}
