//! 2D FFT plans and frequency-domain convolution.
//!
//! Everything here works on planar f64 buffers. Linear convolution is done by
//! zero-padding both operands to a common FFT size of at least
//! `image + kernel - 1` per axis (rounded up to a 2^a 3^b 5^c size), so the
//! circular wrap never touches the cropped output window.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Smallest 2^a * 3^b * 5^c size >= n.
pub fn good_size(n: usize) -> usize {
    debug_assert!(n >= 1);
    let mut best = usize::MAX;
    let mut p5 = 1usize;
    while p5 < n.saturating_mul(2) {
        let mut p53 = p5;
        while p53 < n.saturating_mul(2) {
            let mut m = p53;
            while m < n {
                m = m.saturating_mul(2);
            }
            best = best.min(m);
            p53 = p53.saturating_mul(3);
        }
        p5 = p5.saturating_mul(5);
    }
    best
}

/// Planned complex 2D FFT of a fixed `height x width` grid.
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    transpose_buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft(width, FftDirection::Forward);
        let row_inv = planner.plan_fft(width, FftDirection::Inverse);
        let col_fwd = planner.plan_fft(height, FftDirection::Forward);
        let col_inv = planner.plan_fft(height, FftDirection::Inverse);
        let scratch_len = row_fwd
            .get_inplace_scratch_len()
            .max(row_inv.get_inplace_scratch_len())
            .max(col_fwd.get_inplace_scratch_len())
            .max(col_inv.get_inplace_scratch_len());
        Fft2 {
            height,
            width,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            transpose_buf: vec![Complex64::default(); height * width],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    fn pass(&mut self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.len());
        let (row, col) = if inverse {
            (self.row_inv.clone(), self.col_inv.clone())
        } else {
            (self.row_fwd.clone(), self.col_fwd.clone())
        };
        row.process_with_scratch(buf, &mut self.scratch);
        transpose(buf, &mut self.transpose_buf, self.height, self.width);
        col.process_with_scratch(&mut self.transpose_buf, &mut self.scratch);
        transpose(&self.transpose_buf, buf, self.width, self.height);
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.pass(buf, false);
    }

    /// Inverse transform, normalized by `1 / (height * width)`.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        self.pass(buf, true);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Forward transform of a real plane embedded at `(top, left)`.
    pub fn spectrum(&mut self, src: &[f64], sh: usize, sw: usize, top: usize, left: usize) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.len()];
        embed_real(src, sh, sw, &mut buf, self.height, self.width, top, left);
        self.forward(&mut buf);
        buf
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Writes `src` (sh x sw) into the zeroed complex grid at offset `(top, left)`.
pub fn embed_real(
    src: &[f64],
    sh: usize,
    sw: usize,
    dst: &mut [Complex64],
    dh: usize,
    dw: usize,
    top: usize,
    left: usize,
) {
    assert!(top + sh <= dh && left + sw <= dw, "embed window exceeds grid");
    for v in dst.iter_mut() {
        *v = Complex64::default();
    }
    for y in 0..sh {
        let row = &src[y * sw..(y + 1) * sw];
        let out = &mut dst[(top + y) * dw + left..(top + y) * dw + left + sw];
        for (o, v) in out.iter_mut().zip(row) {
            o.re = *v;
        }
    }
}

/// Copies the real part of the window at `(top, left)` into `dst` (oh x ow).
pub fn crop_real(
    src: &[Complex64],
    sh: usize,
    sw: usize,
    top: usize,
    left: usize,
    dst: &mut [f64],
    oh: usize,
    ow: usize,
) {
    assert!(top + oh <= sh && left + ow <= sw, "crop window exceeds grid");
    for y in 0..oh {
        let row = &src[(top + y) * sw + left..(top + y) * sw + left + ow];
        let out = &mut dst[y * ow..(y + 1) * ow];
        for (o, v) in out.iter_mut().zip(row) {
            *o = v.re;
        }
    }
}

thread_local! {
    static PLAN_CACHE: RefCell<HashMap<(usize, usize), Fft2>> = RefCell::new(HashMap::new());
}

/// Linear "same" convolution of a plane with a kernel anchored at
/// `(anchor_y, anchor_x)`.
pub fn conv2_same(
    plane: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    anchor_y: usize,
    anchor_x: usize,
) -> Vec<f64> {
    let ph = good_size(h + kh - 1);
    let pw = good_size(w + kw - 1);
    PLAN_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        let fft = cache.entry((ph, pw)).or_insert_with(|| Fft2::new(ph, pw));
        let mut a = fft.spectrum(plane, h, w, 0, 0);
        let b = fft.spectrum(kernel, kh, kw, 0, 0);
        for (av, bv) in a.iter_mut().zip(&b) {
            *av *= bv;
        }
        fft.inverse(&mut a);
        let mut out = vec![0.0; h * w];
        crop_real(&a, ph, pw, anchor_y, anchor_x, &mut out, h, w);
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct spatial convolution with center anchoring; the independent
    /// reference for the frequency-domain path.
    fn conv2_same_direct(
        plane: &[f64],
        h: usize,
        w: usize,
        kernel: &[f64],
        kh: usize,
        kw: usize,
        ay: usize,
        ax: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for oy in 0..h {
            for ox in 0..w {
                let mut acc = 0.0;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let sy = oy as isize - (ky as isize - ay as isize);
                        let sx = ox as isize - (kx as isize - ax as isize);
                        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            acc += kernel[ky * kw + kx] * plane[sy as usize * w + sx as usize];
                        }
                    }
                }
                out[oy * w + ox] = acc;
            }
        }
        out
    }

    #[test]
    fn good_sizes() {
        assert_eq!(good_size(1), 1);
        assert_eq!(good_size(17), 18);
        assert_eq!(good_size(97), 100);
        assert_eq!(good_size(128), 128);
        assert_eq!(good_size(131), 135);
    }

    #[test]
    fn round_trip_identity() {
        let mut fft = Fft2::new(12, 10);
        let src: Vec<f64> = (0..120).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut buf = fft.spectrum(&src, 12, 10, 0, 0);
        fft.inverse(&mut buf);
        for (i, v) in buf.iter().enumerate() {
            assert!((v.re - src[i]).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn frequency_conv_matches_direct() {
        let h = 9;
        let w = 11;
        let kh = 5;
        let kw = 3;
        let plane: Vec<f64> = (0..h * w).map(|i| ((i * 7 % 13) as f64) / 13.0).collect();
        let kernel: Vec<f64> = (0..kh * kw).map(|i| ((i * 5 % 7) as f64) / 21.0).collect();
        let fast = conv2_same(&plane, h, w, &kernel, kh, kw, 2, 1);
        let slow = conv2_same_direct(&plane, h, w, &kernel, kh, kw, 2, 1);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let h = 7;
        let w = 7;
        let plane: Vec<f64> = (0..h * w).map(|i| (i as f64) / 48.0).collect();
        let mut kernel = vec![0.0; 9];
        kernel[4] = 1.0;
        let out = conv2_same(&plane, h, w, &kernel, 3, 3, 1, 1);
        for (a, b) in out.iter().zip(&plane) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_larger_than_image() {
        let h = 4;
        let w = 5;
        let plane: Vec<f64> = (0..h * w).map(|i| ((i % 5) as f64) / 5.0).collect();
        let kh = 7;
        let kw = 9;
        let kernel: Vec<f64> = (0..kh * kw).map(|i| ((i % 4) as f64) / 60.0).collect();
        let fast = conv2_same(&plane, h, w, &kernel, kh, kw, 3, 4);
        let slow = conv2_same_direct(&plane, h, w, &kernel, kh, kw, 3, 4);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
