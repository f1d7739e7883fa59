//! Pixel preprocessing: grayscale conversion, adaptive binarization and the
//! optional 3x3 closing/opening repair pass.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit luminance image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, 1, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// An image filled with one luminance value.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    /// Converts any decoded image through [`to_grayscale`].
    pub fn from_dynamic(img: &image::DynamicImage) -> Result<Self> {
        let rgb = img.to_rgb8();
        to_grayscale(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("dimensions checked at construction")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> image::ImageResult<()> {
        self.to_image()
            .save_with_format(path, image::ImageFormat::Png)
    }

    /// PNG-encodes the image in memory.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_image()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }
}

/// Row-major 1-bit image stored one byte per pixel: 0 = black, 1 = white.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, 1, data.len())?;
        let data = data.into_iter().map(|v| (v != 0) as u8).collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn is_white(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// White test that treats everything outside the image as white.
    #[inline]
    pub fn is_white_at(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return true;
        }
        self.data[y as usize * self.width + x as usize] != 0
    }

    /// Bilinear interpolation of the white indicator at a continuous point
    /// whose pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let v = |dx: isize, dy: isize| self.is_white_at(x0 + dx, y0 + dy) as u8 as f64;
        let top = v(0, 0) * (1.0 - tx) + v(1, 0) * tx;
        let bottom = v(0, 1) * (1.0 - tx) + v(1, 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }

    pub fn count_white(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Renders the mask as a 0/255 grayscale image.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v * 255).collect(),
        }
    }
}

fn check_dims(width: usize, height: usize, channels: usize, actual: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    if width * height * channels != actual {
        return Err(Error::BufferSize {
            width,
            height,
            channels,
            actual,
        });
    }
    Ok(())
}

/// Converts packed 8-bit RGB to luma `round(0.299R + 0.587G + 0.114B)`.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage> {
    check_dims(width, height, 3, rgb.len())?;
    let data = rgb
        .chunks_exact(3)
        .map(|p| {
            let l = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((l + 500) / 1000).min(255) as u8
        })
        .collect();
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

/// Moving-average window used by [`binarize_adaptive`].
pub fn adaptive_window(width: usize) -> usize {
    (width / 8).max(8)
}

/// Percentage below the running mean at which a pixel turns black.
const BIAS_PERCENT: u64 = 5;

/// Wellner-style adaptive threshold.
///
/// A running sum over the last `w = max(8, width/8)` pixels is carried along
/// the rows in boustrophedon order (alternate rows run right to left). A
/// pixel is white iff its luma exceeds 95% of the running mean. The sum is
/// seeded from the first pixel so a constant image is its own mean.
pub fn binarize_adaptive(g: &GrayImage) -> BinaryImage {
    let (width, height) = (g.width, g.height);
    let w = adaptive_window(width) as u64;
    let mut out = vec![0u8; width * height];
    let mut sum = g.data[0] as u64 * w;
    let mut step = |idx: usize| {
        let p = g.data[idx] as u64;
        sum = sum - sum / w + p;
        out[idx] = (100 * p * w > (100 - BIAS_PERCENT) * sum) as u8;
    };
    for y in 0..height {
        let row = y * width;
        if y % 2 == 0 {
            (0..width).for_each(|x| step(row + x));
        } else {
            (0..width).rev().for_each(|x| step(row + x));
        }
    }
    BinaryImage {
        width,
        height,
        data: out,
    }
}

#[derive(Clone, Copy)]
enum Op {
    Dilate,
    Erode,
}

// 3x3 square element with edge replication, done as two 1-D passes.
fn morph3(b: &BinaryImage, op: Op) -> BinaryImage {
    let (w, h) = (b.width, b.height);
    let pick = |a: u8, c: u8, d: u8| match op {
        Op::Dilate => a | c | d,
        Op::Erode => a & c & d,
    };
    let mut tmp = vec![0u8; w * h];
    for y in 0..h {
        let row = &b.data[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        for x in 0..w {
            let l = row[x.saturating_sub(1)];
            let r = row[(x + 1).min(w - 1)];
            dst[x] = pick(l, row[x], r);
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let up = &tmp[y.saturating_sub(1) * w..][..w];
        let mid = &tmp[y * w..][..w];
        let down = &tmp[(y + 1).min(h - 1) * w..][..w];
        let dst = &mut out[y * w..(y + 1) * w];
        for x in 0..w {
            dst[x] = pick(up[x], mid[x], down[x]);
        }
    }
    BinaryImage {
        width: w,
        height: h,
        data: out,
    }
}

pub fn dilate(b: &BinaryImage) -> BinaryImage {
    morph3(b, Op::Dilate)
}

pub fn erode(b: &BinaryImage) -> BinaryImage {
    morph3(b, Op::Erode)
}

/// Binary closing followed by binary opening, 3x3 square element.
///
/// The closing seals one-pixel black gaps in white areas; the opening then
/// removes one-pixel white lines and specks from black areas.
pub fn morph_close_open(b: &BinaryImage) -> BinaryImage {
    let closed = erode(&dilate(b));
    dilate(&erode(&closed))
}
