//! Down-sampled, patch-normalized pixel descriptor, plus a minimal binary
//! PGM (P5) codec for grayscale frames.

use std::io::{Read, Write};

use super::{normalize, Descriptor, DescriptorError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, DescriptorError> {
        if width == 0 || height == 0 {
            return Err(DescriptorError::EmptyImage);
        }
        if pixels.len() != width * height {
            return Err(DescriptorError::DimMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self, DescriptorError> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelDescriptorConfig {
    pub target_width: usize,
    pub target_height: usize,
    pub patch_size: usize,
}

impl Default for PixelDescriptorConfig {
    fn default() -> Self {
        Self {
            target_width: 64,
            target_height: 32,
            patch_size: 8,
        }
    }
}

impl PixelDescriptorConfig {
    pub fn validate(&self) -> Result<(), DescriptorError> {
        if self.target_width == 0 || self.target_height == 0 || self.patch_size == 0 {
            return Err(DescriptorError::BadConfig("dimensions must be positive".into()));
        }
        if !self.target_width.is_multiple_of(self.patch_size) || !self.target_height.is_multiple_of(self.patch_size) {
            return Err(DescriptorError::BadConfig(format!(
                "{}x{} is not divisible into {}-pixel patches",
                self.target_width, self.target_height, self.patch_size
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.target_width * self.target_height
    }
}

/// Source contributions `(index, weight)` for each of `dst` output cells when
/// box-filtering `src` cells. Weights of one output cell sum to 1.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    // Work in units of 1/dst source pixels so interval ends are integers.
    (0..dst)
        .map(|o| {
            let lo = o * src;
            let hi = (o + 1) * src;
            let mut taps = Vec::new();
            let mut s = lo / dst;
            while s * dst < hi {
                let cell_lo = (s * dst).max(lo);
                let cell_hi = ((s + 1) * dst).min(hi);
                taps.push((s, (cell_hi - cell_lo) as f64 / src as f64));
                s += 1;
            }
            taps
        })
        .collect()
}

/// Area-average resampling to `width` x `height`, returning row-major f64.
fn resample_area(image: &GrayImage, width: usize, height: usize) -> Vec<f64> {
    let wx = area_weights(image.width, width);
    let wy = area_weights(image.height, height);

    let mut horizontal = vec![0.0; image.height * width];
    for y in 0..image.height {
        let src_row = &image.pixels[y * image.width..(y + 1) * image.width];
        for (x, taps) in wx.iter().enumerate() {
            horizontal[y * width + x] = taps.iter().map(|&(s, w)| w * f64::from(src_row[s])).sum();
        }
    }

    let mut out = vec![0.0; width * height];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..width {
            out[y * width + x] = taps.iter().map(|&(s, w)| w * horizontal[s * width + x]).sum();
        }
    }
    out
}

/// Down-samples `image`, min-max rescales each patch to [0, 255] and returns
/// the unit-normalized, row-major flattening.
///
/// Constant patches become all zeros, so a featureless frame fails with
/// [`DescriptorError::ZeroVector`].
pub fn pixel_descriptor(
    image: &GrayImage,
    config: &PixelDescriptorConfig,
) -> Result<Descriptor, DescriptorError> {
    config.validate()?;
    if image.width == 0 || image.height == 0 {
        return Err(DescriptorError::EmptyImage);
    }
    let (w, h, p) = (config.target_width, config.target_height, config.patch_size);
    let mut small = resample_area(image, w, h);

    for py in (0..h).step_by(p) {
        for px in (0..w).step_by(p) {
            let cells = || (py..py + p).flat_map(move |y| (px..px + p).map(move |x| y * w + x));
            let (lo, hi) = cells().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                (lo.min(small[i]), hi.max(small[i]))
            });
            let range = hi - lo;
            for i in cells() {
                small[i] = if range > 0.0 {
                    (small[i] - lo) / range * 255.0
                } else {
                    0.0
                };
            }
        }
    }
    normalize(&small)
}

fn pgm_token<R: Read>(bytes: &mut std::iter::Peekable<std::io::Bytes<R>>) -> Result<String, DescriptorError> {
    let mut token = String::new();
    loop {
        let b = match bytes.next() {
            Some(b) => b?,
            None if token.is_empty() => return Err(DescriptorError::BadPgm("unexpected end of header".into())),
            None => return Ok(token),
        };
        match b {
            b'#' if token.is_empty() => {
                for b in bytes.by_ref() {
                    if b? == b'\n' {
                        break;
                    }
                }
            }
            b' ' | b'\t' | b'\n' | b'\r' => {
                if !token.is_empty() {
                    return Ok(token);
                }
            }
            _ => token.push(b as char),
        }
    }
}

/// Reads a binary (P5) PGM with maxval at most 255.
pub fn read_pgm<R: Read>(reader: R) -> Result<GrayImage, DescriptorError> {
    let mut bytes = std::io::BufReader::new(reader).bytes().peekable();
    let magic = pgm_token(&mut bytes)?;
    if magic != "P5" {
        return Err(DescriptorError::BadPgm(format!("unsupported magic {magic:?}")));
    }
    let mut num = |what: &str| -> Result<usize, DescriptorError> {
        let t = pgm_token(&mut bytes)?;
        t.parse()
            .map_err(|_| DescriptorError::BadPgm(format!("bad {what} {t:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(DescriptorError::BadPgm(format!("maxval {maxval} is not 8-bit")));
    }
    if width == 0 || height == 0 {
        return Err(DescriptorError::EmptyImage);
    }
    // The single whitespace byte after maxval was consumed by the tokenizer.
    let mut pixels = Vec::with_capacity(width * height);
    for b in bytes.take(width * height) {
        pixels.push(b?);
    }
    if pixels.len() != width * height {
        return Err(DescriptorError::BadPgm(format!(
            "expected {} pixels, found {}",
            width * height,
            pixels.len()
        )));
    }
    GrayImage::new(width, height, pixels)
}

pub fn write_pgm<W: Write>(mut writer: W, image: &GrayImage) -> std::io::Result<()> {
    write!(writer, "P5\n{} {}\n255\n", image.width, image.height)?;
    writer.write_all(&image.pixels)
}
