use std::io::Cursor;

use image::{ImageFormat, RgbImage};

use crate::error::VisionError;

pub type Rgb = [u8; 3];

pub const MIN_SIDE: usize = 16;

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, VisionError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(VisionError::TooSmall { width: width as u32, height: height as u32 });
        }
        if pixels.len() != width * height {
            return Err(VisionError::Decode(format!("pixel count {} does not match {width}x{height}", pixels.len())));
        }
        Ok(ImageBuffer { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, px: Rgb) -> Result<Self, VisionError> {
        Self::new(width, height, vec![px; width * height])
    }

    /// Builds an image from `f(col, row)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self, VisionError> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(c, r));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, px: Rgb) {
        self.pixels[row * self.width + col] = px;
    }

    /// Rec. 601 luma in [0, 1], row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| luma(p)).collect()
    }

    /// Rotates 90 degrees clockwise.
    pub fn rotate90(&self) -> ImageBuffer {
        let (w, h) = (self.height, self.width);
        let mut pixels = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                pixels.push(self.get(r, self.height - 1 - c));
            }
        }
        ImageBuffer { width: w, height: h, pixels }
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer size matches dimensions")
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image().write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory");
        out.into_inner()
    }

    pub fn encode_jpeg(&self, quality: u8) -> Vec<u8> {
        let mut out = Vec::new();
        let mut enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality);
        enc.encode_image(&self.to_rgb_image()).expect("JPEG encoding into memory");
        out
    }
}

pub fn luma(p: Rgb) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Decodes a PNG or JPEG payload to RGB, dropping alpha and expanding gray.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer, VisionError> {
    let format = image::guess_format(bytes).map_err(|e| VisionError::Decode(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(VisionError::Decode(format!("unsupported format {format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| VisionError::Decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels = rgb.pixels().map(|p| p.0).collect();
    ImageBuffer::new(w, h, pixels)
}
