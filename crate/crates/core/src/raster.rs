//! Raster side: 8-bit image buffers, inverse-mapped affine warping, scanline
//! polygon fill, mask IoU, and the mask-based reference augmentation.
//!
//! Pixel `(i, j)` is sampled at its center `(i + 0.5, j + 0.5)` both when
//! rasterizing and when warping, so the two paths agree at edges.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageEncoder, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AffineMap, Point2, Polygon};
use crate::label_io::LabelFile;
use crate::transforms::AffineAugmentation;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("buffer of {got} bytes does not match {width}x{height}x{channels}")]
    BadBuffer {
        width: u32,
        height: u32,
        channels: u8,
        got: usize,
    },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    BadChannels(u8),
    #[error("mask dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::BadChannels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if width == 0 || height == 0 || data.len() != expected {
            return Err(RasterError::BadBuffer {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, RasterError> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// Grayscale sources stay single-channel; everything else becomes RGB.
    pub fn from_dynamic(img: DynamicImage) -> Self {
        let (width, height) = (img.width(), img.height());
        if img.color().has_color() {
            let data = img.into_rgb8().into_raw();
            Self::new(width, height, 3, data).expect("rgb8 buffer")
        } else {
            let data = img.into_luma8().into_raw();
            Self::new(width, height, 1, data).expect("luma8 buffer")
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()?
            .decode()?;
        Ok(Self::from_dynamic(img))
    }

    pub fn open(path: &Path) -> Result<Self, RasterError> {
        let img = ImageReader::open(path)?.with_guessed_format()?.decode()?;
        Ok(Self::from_dynamic(img))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Vec::new();
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &self.data,
            self.width,
            self.height,
            color,
        )?;
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// One byte per pixel, 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize] != 0
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = u8::from(on);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

// Destination pixel center mapped back into the source frame.
#[inline]
fn source_point(inv: &AffineMap, i: u32, j: u32) -> (f64, f64) {
    let p = inv.apply(Point2::new(f64::from(i) + 0.5, f64::from(j) + 0.5));
    (p.x, p.y)
}

fn warp_plane(
    src: &[u8],
    src_dims: (u32, u32),
    channels: usize,
    inv: &AffineMap,
    out_dims: (u32, u32),
    interpolation: Interpolation,
    fill: u8,
) -> Vec<u8> {
    let (sw, sh) = src_dims;
    let (fw, fh) = (f64::from(sw), f64::from(sh));
    let (ow, oh) = out_dims;
    let mut out = vec![fill; ow as usize * oh as usize * channels];
    let stride = sw as usize * channels;
    for j in 0..oh {
        let row = &mut out[j as usize * ow as usize * channels..][..ow as usize * channels];
        for i in 0..ow {
            let (sx, sy) = source_point(inv, i, j);
            if !(sx >= 0.0 && sx < fw && sy >= 0.0 && sy < fh) {
                continue;
            }
            let dst = &mut row[i as usize * channels..][..channels];
            match interpolation {
                Interpolation::Nearest => {
                    let off = sy as usize * stride + sx as usize * channels;
                    dst.copy_from_slice(&src[off..off + channels]);
                }
                Interpolation::Bilinear => {
                    let u = sx - 0.5;
                    let v = sy - 0.5;
                    let (x0f, y0f) = (u.floor(), v.floor());
                    let (fu, fv) = (u - x0f, v - y0f);
                    let clamp_x = |x: f64| x.clamp(0.0, fw - 1.0) as usize;
                    let clamp_y = |y: f64| y.clamp(0.0, fh - 1.0) as usize;
                    let (x0, x1) = (clamp_x(x0f), clamp_x(x0f + 1.0));
                    let (y0, y1) = (clamp_y(y0f), clamp_y(y0f + 1.0));
                    let w00 = (1.0 - fu) * (1.0 - fv);
                    let w10 = fu * (1.0 - fv);
                    let w01 = (1.0 - fu) * fv;
                    let w11 = fu * fv;
                    for (c, d) in dst.iter_mut().enumerate() {
                        let px = |x: usize, y: usize| f64::from(src[y * stride + x * channels + c]);
                        let val = px(x0, y0) * w00
                            + px(x1, y0) * w10
                            + px(x0, y1) * w01
                            + px(x1, y1) * w11;
                        *d = val.round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
    }
    out
}

/// Warps `src` into the augmentation's output frame by inverse mapping
/// every destination pixel center. Samples falling outside the source take
/// `fill`.
pub fn warp_image(
    src: &ImageBuffer,
    aug: &AffineAugmentation,
    interpolation: Interpolation,
    fill: u8,
) -> ImageBuffer {
    let (ow, oh) = aug.out_dims();
    let data = warp_plane(
        &src.data,
        (src.width, src.height),
        src.channels as usize,
        &aug.inverse_map(),
        (ow, oh),
        interpolation,
        fill,
    );
    ImageBuffer {
        width: ow,
        height: oh,
        channels: src.channels,
        data,
    }
}

/// Nearest-neighbour mask warp with zero fill.
pub fn warp_mask(mask: &BinaryMask, aug: &AffineAugmentation) -> BinaryMask {
    let (ow, oh) = aug.out_dims();
    let bits = warp_plane(
        &mask.bits,
        mask.dims(),
        1,
        &aug.inverse_map(),
        (ow, oh),
        Interpolation::Nearest,
        0,
    );
    BinaryMask {
        width: ow,
        height: oh,
        bits,
    }
}

/// Even-odd scanline fill: a pixel is set iff its center lies inside `p`.
pub fn rasterize_polygon(p: &Polygon, width: u32, height: u32) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    let v = p.vertices();
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for q in v {
        ymin = ymin.min(q.y);
        ymax = ymax.max(q.y);
    }
    // Rows whose center y lies in [ymin, ymax].
    let j0 = (ymin - 0.5).ceil().max(0.0);
    let j1 = (ymax - 0.5).floor().min(f64::from(height) - 1.0);
    if j0.is_nan() || j1.is_nan() || j0 > j1 {
        return mask;
    }
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for j in j0 as u32..=j1 as u32 {
        let y = f64::from(j) + 0.5;
        xs.clear();
        let mut prev = v[v.len() - 1];
        for &cur in v {
            if (cur.y > y) != (prev.y > y) {
                xs.push(prev.x + (y - prev.y) * (cur.x - prev.x) / (cur.y - prev.y));
            }
            prev = cur;
        }
        xs.sort_by(f64::total_cmp);
        let row = &mut mask.bits[j as usize * width as usize..][..width as usize];
        for span in xs.chunks_exact(2) {
            // Centers with span[0] <= i + 0.5 < span[1].
            let start = (span[0] - 0.5).ceil().clamp(0.0, f64::from(width)) as usize;
            let end = (span[1] - 0.5).ceil().clamp(0.0, f64::from(width)) as usize;
            if start < end {
                row[start..end].fill(1);
            }
        }
    }
    mask
}

/// `|a & b| / |a | b|`, defined as 1 for two empty masks.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, RasterError> {
    if a.dims() != b.dims() {
        return Err(RasterError::DimensionMismatch(a.dims(), b.dims()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        let (x, y) = (x != 0, y != 0);
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub instance_id: usize,
    pub class_id: u32,
    /// Warped set-pixel count over the expected count `|det| * original`.
    pub retention_ratio: f64,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub image: ImageBuffer,
    pub kept: Vec<OracleInstance>,
    /// `(instance_id, retention_ratio)` of dropped masks.
    pub dismissed: Vec<(usize, f64)>,
}

/// Reference augmentation through per-instance masks: rasterize each
/// polygon over the full source frame, warp the mask with nearest sampling,
/// and keep it when it still has pixels and its retention ratio reaches
/// `threshold`.
pub fn oracle_augment(
    image: &ImageBuffer,
    lf: &LabelFile,
    aug: &AffineAugmentation,
    threshold: f64,
) -> OracleOutcome {
    let out_image = warp_image(image, aug, Interpolation::Bilinear, 0);
    let det = aug.map().det().abs();
    let mut kept = Vec::new();
    let mut dismissed = Vec::new();
    for (instance_id, ann) in lf.annotations.iter().enumerate() {
        let poly = ann.to_pixels(image.width, image.height);
        let mask = rasterize_polygon(&poly, image.width, image.height);
        let original = mask.count();
        let warped = warp_mask(&mask, aug);
        let visible = warped.count();
        let ratio = if original == 0 {
            0.0
        } else {
            (visible as f64 / (det * original as f64)).min(1.0)
        };
        if visible > 0 && ratio >= threshold {
            kept.push(OracleInstance {
                instance_id,
                class_id: ann.class_id(),
                retention_ratio: ratio,
                mask: warped,
            });
        } else {
            dismissed.push((instance_id, ratio));
        }
    }
    OracleOutcome {
        image: out_image,
        kept,
        dismissed,
    }
}

/// Storage cost of polygon labels: two `f64` per vertex plus an 8-byte
/// header per instance.
pub fn annotation_bytes(lf: &LabelFile) -> u64 {
    lf.annotations
        .iter()
        .map(|a| 2 * a.vertices().len() as u64 * 8 + 8)
        .sum()
}

/// Storage cost of masks at one byte per pixel.
pub fn mask_bytes<'a, I>(masks: I) -> u64
where
    I: IntoIterator<Item = &'a BinaryMask>,
{
    masks
        .into_iter()
        .map(|m| u64::from(m.width) * u64::from(m.height))
        .sum()
}
