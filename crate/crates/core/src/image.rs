//! Image container and the snapshot (appearance + mask) pair.
//!
//! Pixel data is stored planar (one plane per channel, row-major) as f64 in
//! [0, 1]. Positions are `(x, y)` = (column, row) with pixel centers at
//! integer coordinates.

use crate::error::{Error, Result};

/// Dense image with 1 or 3 channels and values in [0, 1].
#[derive(Debug, Clone)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data, validating the value range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_shape(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {}x{}x{}, got {}",
                height * width * channels,
                height,
                width,
                channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidInput(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Builds an image from planar data, clamping values into [0, 1].
    ///
    /// Intended for outputs of floating-point pipelines whose results are in
    /// range up to roundoff. Non-finite values are rejected.
    pub fn from_data_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel value".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(height, width, channels, data)
    }

    /// All-zero image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::check_shape(height, width, channels)?;
        Ok(Self { height, width, channels, data: vec![0.0; height * width * channels] })
    }

    /// Fills each pixel from `f(x, y, channel)`; values are validated.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = vec![0.0; height * width * channels];
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data[(c * height + y) * width + x] = f(x, y, c);
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    fn check_shape(height: usize, width: usize, channels: usize) -> Result<()> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("empty image".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "unsupported channel count {channels}"
            )));
        }
        Ok(())
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

    /// (height, width).
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Sum of one plane.
    pub fn plane_sum(&self, c: usize) -> f64 {
        self.plane(c).iter().sum()
    }

    /// Bilinear sample of channel `c` at continuous position `(x, y)`.
    /// Outside the image the value is taken as 0.
    pub fn bilinear(&self, c: usize, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let plane = self.plane(c);
        let mut acc = 0.0;
        for (dy, wy) in [(0isize, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0isize, 1.0 - fx), (1, fx)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let xi = x0 as isize + dx;
                let yi = y0 as isize + dy;
                if xi >= 0 && yi >= 0 && (xi as usize) < self.width && (yi as usize) < self.height {
                    acc += w * plane[yi as usize * self.width + xi as usize];
                }
            }
        }
        acc
    }

    /// Copies the axis-aligned window with top-left `(left, top)` and the
    /// given size. The window must lie inside the image.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::DimensionMismatch(format!(
                "crop {}x{}+{}+{} exceeds {}x{}",
                height, width, top, left, self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for y in top..top + height {
                data.extend_from_slice(&plane[y * self.width + left..y * self.width + left + width]);
            }
        }
        Image::new(height, width, self.channels, data)
    }

    /// Largest absolute per-sample difference to another image of equal shape.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(
            (self.height, self.width, self.channels),
            (other.height, other.width, other.channels),
            "shape mismatch"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean absolute per-sample difference to another image of equal shape.
    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(
            (self.height, self.width, self.channels),
            (other.height, other.width, other.channels),
            "shape mismatch"
        );
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        total / self.data.len() as f64
    }
}

/// Object appearance and opacity mask over a common raster.
///
/// The appearance is premultiplied by the mask, hence the elementwise
/// constraint 0 <= F <= M <= 1 across all channels.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub appearance: Image,
    pub mask: Image,
}

impl Snapshot {
    /// Validates shapes and the elementwise ordering constraint exactly.
    pub fn new(appearance: Image, mask: Image) -> Result<Self> {
        if mask.channels() != 1 {
            return Err(Error::InvalidInput("mask must have one channel".into()));
        }
        if appearance.dims() != mask.dims() {
            return Err(Error::DimensionMismatch(format!(
                "appearance {:?} vs mask {:?}",
                appearance.dims(),
                mask.dims()
            )));
        }
        let m = mask.plane(0);
        for c in 0..appearance.channels() {
            let f = appearance.plane(c);
            if f.iter().zip(m).any(|(fv, mv)| fv > mv) {
                return Err(Error::InvalidInput(
                    "appearance exceeds mask (premultiplication violated)".into(),
                ));
            }
        }
        Ok(Self { appearance, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.appearance.dims()
    }

    /// Mask centroid as `(x, y)`, or the raster center for an all-zero mask.
    pub fn mask_centroid(&self) -> (f64, f64) {
        mask_centroid(&self.mask)
    }
}

/// Centroid of a single-channel mask as `(x, y)`; raster center if empty.
pub fn mask_centroid(mask: &Image) -> (f64, f64) {
    let (h, w) = mask.dims();
    let plane = mask.plane(0);
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sm = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = plane[y * w + x];
            sx += v * x as f64;
            sy += v * y as f64;
            sm += v;
        }
    }
    if sm <= 1e-12 {
        ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
    } else {
        (sx / sm, sy / sm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_out_of_range() {
        assert!(Image::new(2, 2, 1, vec![0.0, 0.5, 1.0, 1.1]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0, 0.5, 1.0, -0.1]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0, 0.5, 1.0, f64::NAN]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0, 0.5, 1.0, 1.0]).is_ok());
    }

    #[test]
    fn clamped_constructor_clips_roundoff() {
        let img = Image::from_data_clamped(1, 2, 1, vec![-1e-12, 1.0 + 1e-12]).unwrap();
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert_eq!(img.get(1, 0, 0), 1.0);
    }

    #[test]
    fn planar_indexing() {
        let img = Image::from_fn(2, 3, 3, |x, y, c| (c * 100 + y * 10 + x) as f64 / 255.0).unwrap();
        assert_eq!(img.get(2, 1, 1), 112.0 / 255.0);
        assert_eq!(img.plane(2)[0], 200.0 / 255.0);
    }

    #[test]
    fn bilinear_interpolates_and_zero_pads() {
        let img = Image::from_fn(2, 2, 1, |x, y, _| (x + y) as f64 / 2.0).unwrap();
        assert!((img.bilinear(0, 0.5, 0.0) - 0.25).abs() < 1e-12);
        assert!((img.bilinear(0, 0.5, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(img.bilinear(0, -1.5, 0.0), 0.0);
        // Half a pixel outside: only the in-bounds taps contribute.
        assert!((img.bilinear(0, -0.5, 0.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn crop_window() {
        let img = Image::from_fn(4, 5, 1, |x, y, _| (y * 5 + x) as f64 / 64.0).unwrap();
        let sub = img.crop(1, 2, 2, 3).unwrap();
        assert_eq!(sub.dims(), (2, 3));
        assert_eq!(sub.get(0, 0, 0), 7.0 / 64.0);
        assert_eq!(sub.get(2, 1, 0), 14.0 / 64.0);
        assert!(img.crop(3, 0, 2, 2).is_err());
    }

    #[test]
    fn snapshot_enforces_ordering() {
        let mask = Image::from_fn(2, 2, 1, |x, _, _| if x == 0 { 0.5 } else { 1.0 }).unwrap();
        let ok = Image::from_fn(2, 2, 3, |x, _, _| if x == 0 { 0.5 } else { 0.9 }).unwrap();
        assert!(Snapshot::new(ok, mask.clone()).is_ok());
        let bad = Image::from_fn(2, 2, 3, |_, _, _| 0.6).unwrap();
        assert!(Snapshot::new(bad, mask).is_err());
    }

    #[test]
    fn centroid_of_single_pixel() {
        let mut mask = Image::zeros(5, 7, 1).unwrap();
        mask.set(6, 2, 0, 1.0);
        assert_eq!(mask_centroid(&mask), (6.0, 2.0));
        let empty = Image::zeros(5, 7, 1).unwrap();
        assert_eq!(mask_centroid(&empty), (3.0, 2.0));
    }
}
