//! Binary PGM/PPM decoding and the retina preprocessing chain.

use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ImageError {
    #[error("not a binary PGM (P5) or PPM (P6) file")]
    BadMagic,
    #[error("malformed image header: {0}")]
    BadHeader(&'static str),
    #[error("maxval must be 255, got {0}")]
    UnsupportedMaxval(u32),
    #[error("image payload truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("image is {width}x{height}; need at least {min} pixels on each side")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("pixel buffer does not match {width}x{height}")]
    BadDimensions { width: usize, height: usize },
}

pub type Result<T, E = ImageError> = std::result::Result<T, E>;

/// Side length of the network input.
pub const INPUT_SIDE: usize = 64;
pub const MIN_SIDE: usize = 8;
const STD_FLOOR: f64 = 1e-6;

/// Grayscale image with pixels in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(ImageError::BadDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels: pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(ImageError::BadHeader(what))
    }
}

/// Decodes P5 (gray) or P6 (RGB → luma 0.299R + 0.587G + 0.114B), maxval 255.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(ImageError::BadMagic),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::BadHeader("zero dimension"));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::BadHeader("missing separator after maxval"));
    }
    let start = h.pos + 1;
    let needed = width * height * channels;
    let have = bytes.len().saturating_sub(start);
    if have < needed {
        return Err(ImageError::Truncated { needed, have });
    }
    let raster = &bytes[start..start + needed];
    let pixels = if channels == 1 {
        raster.iter().map(|&v| f64::from(v) / 255.0).collect()
    } else {
        raster
            .chunks_exact(3)
            .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0)
            .collect()
    };
    Image::new(width, height, pixels)
}

/// Encodes as P5 with a minimal header.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| (p * 255.0).round() as u8));
    out
}

/// 3×3 median with replicated borders.
pub fn median3x3(img: &Image) -> Image {
    let (w, h) = (img.width as isize, img.height as isize);
    let mut out = Vec::with_capacity(img.pixels.len());
    let mut window = [0.0f64; 9];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    let sy = (y + dy).clamp(0, h - 1) as usize;
                    window[k] = img.at(sx, sy);
                    k += 1;
                }
            }
            window.sort_by(f64::total_cmp);
            out.push(window[4]);
        }
    }
    Image {
        width: img.width,
        height: img.height,
        pixels: out,
    }
}

/// Bilinear resize using pixel-center alignment; samples beyond the edge clamp.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Vec<f64> {
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let mut out = Vec::with_capacity(width * height);
    for oy in 0..height {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for ox in 0..width {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let top = img.at(x0, y0) * (1.0 - tx) + img.at(x1, y0) * tx;
            let bottom = img.at(x0, y1) * (1.0 - tx) + img.at(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Median denoise, resize to 64×64, and standardize to zero mean / unit
/// deviation. Output shape `[1, 64, 64]`.
pub fn preprocess(img: &Image) -> Result<Tensor> {
    if img.width < MIN_SIDE || img.height < MIN_SIDE {
        return Err(ImageError::TooSmall {
            width: img.width,
            height: img.height,
            min: MIN_SIDE,
        });
    }
    let denoised = median3x3(img);
    let mut px = resize_bilinear(&denoised, INPUT_SIDE, INPUT_SIDE);
    let n = px.len() as f64;
    let mean = px.iter().sum::<f64>() / n;
    let sd = (px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let sd = sd.max(STD_FLOOR);
    px.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    Ok(Tensor::new(vec![1, INPUT_SIDE, INPUT_SIDE], px).expect("64×64 raster"))
}
