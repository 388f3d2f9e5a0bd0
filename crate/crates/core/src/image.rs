//! In-memory image and error-map tensors, patch blending, bilinear resize.

use crate::error::{Error, Result};

/// Dense float image, row-major, channels interleaved (`[y][x][c]`).
/// Pixel values live in `[0, 1]`; constructors enforce this.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    /// Builds a tensor from raw interleaved samples.
    ///
    /// Fails if the buffer length does not equal `height * width * channels`,
    /// if `channels` is not 1 or 3, or if any value is outside `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions {
                detail: format!("image dimensions {height}x{width} must be positive"),
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                actual: channels,
            });
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidDimensions {
                detail: format!(
                    "buffer holds {} samples, {}x{}x{} needs {}",
                    data.len(),
                    height,
                    width,
                    channels,
                    height * width * channels
                ),
            });
        }
        for &v in &data {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::PixelRange { value: v });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// All-zero (black) image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.idx(y, x, c)]
    }

    /// Rearranges to planar layout (`[c][y][x]`), the shape the autoencoder
    /// consumes.
    pub fn to_planes(&self) -> Vec<f32> {
        let hw = self.height * self.width;
        let mut planes = vec![0.0f32; hw * self.channels];
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                planes[c * hw + i] = v;
            }
        }
        planes
    }

    /// Inverse of [`to_planes`](Self::to_planes). Values are clamped to
    /// `[0, 1]` so reconstructions straight out of the network are accepted.
    pub fn from_planes(height: usize, width: usize, channels: usize, planes: &[f32]) -> Result<Self> {
        let hw = height * width;
        if planes.len() != hw * channels {
            return Err(Error::InvalidDimensions {
                detail: format!(
                    "plane buffer holds {} samples, {}x{}x{} needs {}",
                    planes.len(),
                    height,
                    width,
                    channels,
                    hw * channels
                ),
            });
        }
        let mut data = vec![0.0f32; hw * channels];
        for c in 0..channels {
            for i in 0..hw {
                data[i * channels + c] = planes[c * hw + i].clamp(0.0, 1.0);
            }
        }
        Self::new(height, width, channels, data)
    }
}

/// Per-pixel scalar map (reconstruction errors). Same row-major layout as
/// [`ImageTensor`] with a single channel; values are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ErrorMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidDimensions {
                detail: format!(
                    "error map {}x{} with buffer of {}",
                    height,
                    width,
                    data.len()
                ),
            });
        }
        for &v in &data {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDimensions {
                    detail: format!("error map value {v} is not a finite non-negative number"),
                });
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Alpha-blends `patch` over `base` with its top-left corner at `(x, y)`:
/// `out = (1 - alpha) * base + alpha * patch`, clamped to `[0, 1]`.
///
/// Pixels outside the patch region are copied bitwise. Fails if the patch
/// does not fit at that position, if channel counts differ, or if `alpha`
/// is outside `[0, 1]`.
pub fn blend_patch(
    base: &ImageTensor,
    patch: &ImageTensor,
    x: usize,
    y: usize,
    alpha: f32,
) -> Result<ImageTensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam {
            name: "alpha",
            detail: format!("{alpha} is outside [0, 1]"),
        });
    }
    if base.channels != patch.channels {
        return Err(Error::ChannelMismatch {
            expected: base.channels,
            actual: patch.channels,
        });
    }
    if x + patch.width > base.width || y + patch.height > base.height {
        return Err(Error::PatchPlacement {
            detail: format!(
                "{}x{} patch at ({x}, {y}) exceeds {}x{} image",
                patch.width, patch.height, base.width, base.height
            ),
        });
    }
    // Blend in f64 and round once, so stored pixels sit within an f32 ulp
    // of the exact formula instead of accumulating f32 rounding per op.
    let a = alpha as f64;
    let mut out = base.clone();
    for py in 0..patch.height {
        for px in 0..patch.width {
            for c in 0..base.channels {
                let i = out.idx(y + py, x + px, c);
                let blended =
                    (1.0 - a) * base.data[i] as f64 + a * patch.get(py, px, c) as f64;
                out.data[i] = blended.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(out)
}

/// Bilinear resize with half-pixel centers: a destination pixel `d` samples
/// the source at `(d + 0.5) * in/out - 0.5`, clamped to the valid range.
/// Interpolation runs in f64. Aspect ratio is not preserved; callers pick
/// both output sides. Resizing to the input size returns a bitwise copy.
pub fn resize_bilinear(img: &ImageTensor, out_height: usize, out_width: usize) -> Result<ImageTensor> {
    if out_height == 0 || out_width == 0 {
        return Err(Error::InvalidDimensions {
            detail: "resize target must have positive dimensions".to_string(),
        });
    }
    let (ih, iw, ch) = (img.height, img.width, img.channels);
    let scale_y = ih as f64 / out_height as f64;
    let scale_x = iw as f64 / out_width as f64;

    let sample_axis = |d: usize, scale: f64, in_len: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(in_len - 1);
        (lo, hi, s - lo as f64)
    };

    let mut data = vec![0.0f32; out_height * out_width * ch];
    for dy in 0..out_height {
        let (y0, y1, fy) = sample_axis(dy, scale_y, ih);
        for dx in 0..out_width {
            let (x0, x1, fx) = sample_axis(dx, scale_x, iw);
            for c in 0..ch {
                let v00 = img.get(y0, x0, c) as f64;
                let v01 = img.get(y0, x1, c) as f64;
                let v10 = img.get(y1, x0, c) as f64;
                let v11 = img.get(y1, x1, c) as f64;
                let top = v00 + (v01 - v00) * fx;
                let bot = v10 + (v11 - v10) * fx;
                let v = top + (bot - top) * fy;
                data[(dy * out_width + dx) * ch + c] = (v as f32).clamp(0.0, 1.0);
            }
        }
    }
    ImageTensor::new(out_height, out_width, ch, data)
}
