//! Rotational-symmetry operator: replace every pixel by the mean of its
//! radius bin about a center.
//!
//! Bins are hard (`bin = round(distance)`), which makes the operator an
//! orthogonal projector onto per-ring-constant images: applying it twice
//! equals applying it once exactly, and `(Id - R)` is the complementary
//! projector the mask-symmetry penalty needs.

use crate::error::{Error, Result};
use crate::image::{mask_centroid, Image};

/// Precomputed radius-bin partition of an `h x w` raster about a fixed
/// sub-pixel center.
pub struct RingIndex {
    bin_of: Vec<u32>,
    counts: Vec<f64>,
    len: usize,
}

impl RingIndex {
    pub fn new(height: usize, width: usize, cx: f64, cy: f64) -> Self {
        let mut bin_of = vec![0u32; height * width];
        let mut max_bin = 0u32;
        for y in 0..height {
            for x in 0..width {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let b = d.round() as u32;
                bin_of[y * width + x] = b;
                max_bin = max_bin.max(b);
            }
        }
        let mut counts = vec![0.0; max_bin as usize + 1];
        for &b in &bin_of {
            counts[b as usize] += 1.0;
        }
        Self { bin_of, counts, len: height * width }
    }

    /// Applies the ring-mean projector to `plane` in place.
    pub fn apply(&self, plane: &mut [f64]) {
        assert_eq!(plane.len(), self.len, "plane does not match the ring index");
        let mut sums = vec![0.0; self.counts.len()];
        for (v, &b) in plane.iter().zip(&self.bin_of) {
            sums[b as usize] += *v;
        }
        for (s, c) in sums.iter_mut().zip(&self.counts) {
            *s /= c;
        }
        for (v, &b) in plane.iter_mut().zip(&self.bin_of) {
            *v = sums[b as usize];
        }
    }

    /// `plane - R plane`, the symmetry defect, written into `out`.
    pub fn defect(&self, plane: &[f64], out: &mut [f64]) {
        let mut averaged = plane.to_vec();
        self.apply(&mut averaged);
        for ((o, p), a) in out.iter_mut().zip(plane).zip(&averaged) {
            *o = p - a;
        }
    }
}

/// Ring average of a single-channel mask about the raster's center pixel
/// `((w - 1) / 2, (h - 1) / 2)`.
pub fn circular_average(mask: &Image) -> Result<Image> {
    if mask.channels() != 1 {
        return Err(Error::InvalidInput("circular average expects one channel".into()));
    }
    let (h, w) = mask.dims();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    circular_average_about(mask, cx, cy)
}

/// Ring average about an explicit sub-pixel center.
pub fn circular_average_about(mask: &Image, cx: f64, cy: f64) -> Result<Image> {
    if mask.channels() != 1 {
        return Err(Error::InvalidInput("circular average expects one channel".into()));
    }
    let (h, w) = mask.dims();
    let index = RingIndex::new(h, w, cx, cy);
    let mut plane = mask.plane(0).to_vec();
    index.apply(&mut plane);
    Image::new(h, w, 1, plane)
}

/// Ring average about the mask's own centroid, the symmetry center the
/// shape penalty uses.
pub fn circular_average_centroid(mask: &Image) -> Result<Image> {
    let (cx, cy) = mask_centroid(mask);
    circular_average_about(mask, cx, cy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_constant_disk_is_fixed_point() {
        // A disk whose indicator is constant on every radius bin: value
        // depends only on round(distance).
        let disk = Image::from_fn(31, 31, 1, |x, y, _| {
            let d = ((x as f64 - 15.0).powi(2) + (y as f64 - 15.0).powi(2)).sqrt();
            if d.round() <= 10.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let averaged = circular_average(&disk).unwrap();
        assert!(disk.max_abs_diff(&averaged) <= 1e-6);
    }

    #[test]
    fn idempotent_within_1e9() {
        let noisy = Image::from_fn(25, 33, 1, |x, y, _| {
            (((x * 31 + y * 17) % 97) as f64 / 96.0).powi(2)
        })
        .unwrap();
        let once = circular_average(&noisy).unwrap();
        let twice = circular_average(&once).unwrap();
        assert!(once.max_abs_diff(&twice) <= 1e-9);
    }

    #[test]
    fn single_pixel_spreads_to_its_ring() {
        let (h, w) = (21, 21);
        let (px, py) = (14, 10);
        let mut m = Image::zeros(h, w, 1).unwrap();
        m.set(px, py, 0, 1.0);
        let averaged = circular_average(&m).unwrap();
        // Bin-count oracle recomputed from first principles.
        let cx = (w as f64 - 1.0) / 2.0;
        let cy = (h as f64 - 1.0) / 2.0;
        let target_bin =
            ((px as f64 - cx).powi(2) + (py as f64 - cy).powi(2)).sqrt().round() as i64;
        let mut count = 0usize;
        for y in 0..h {
            for x in 0..w {
                let b = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt().round() as i64;
                if b == target_bin {
                    count += 1;
                }
            }
        }
        let expect = 1.0 / count as f64;
        for y in 0..h {
            for x in 0..w {
                let b =
                    ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt().round() as i64;
                let v = averaged.get(x, y, 0);
                if b == target_bin {
                    assert!((v - expect).abs() <= 1e-12);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn mass_preserved() {
        let m = Image::from_fn(19, 23, 1, |x, y, _| ((x ^ y) % 7) as f64 / 7.0).unwrap();
        let averaged = circular_average(&m).unwrap();
        assert!((m.plane_sum(0) - averaged.plane_sum(0)).abs() <= 1e-9);
    }

    #[test]
    fn defect_is_orthogonal_to_ring_constants() {
        // (Id - R) output has zero mean on every ring, so applying R to it
        // gives zero.
        let m = Image::from_fn(17, 17, 1, |x, y, _| ((3 * x + 5 * y) % 11) as f64 / 10.0)
            .unwrap();
        let index = RingIndex::new(17, 17, 8.0, 8.0);
        let mut defect = vec![0.0; 17 * 17];
        index.defect(m.plane(0), &mut defect);
        index.apply(&mut defect);
        assert!(defect.iter().all(|v| v.abs() <= 1e-12));
    }
}
