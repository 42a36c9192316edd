//! Linear operators for the solvers: batched FFT convolution with an exact
//! adjoint, forward-difference gradients, and the segment-chain difference.
//!
//! Adjoint exactness matters: conjugate gradient on the normal equations is
//! only correct when the forward/adjoint pair used for `A` and `A^T` are
//! transposes of each other to rounding error, which the embed/crop offsets
//! below guarantee.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft2::{crop_real, embed_real, good_size, Fft2};
use crate::kernel::BlurKernel;

/// Shared-size convolution bank: one padded FFT grid, one spectrum per
/// blur kernel, operating on planes of a fixed domain size.
///
/// Forward: `C_i x = crop_anchor(ifft(K_i . fft(embed_0(x))))`.
/// Adjoint: `C_i^T y = crop_0(ifft(conj(K_i) . fft(embed_anchor(y))))`.
/// The padded grid is at least `domain + kernel - 1` per side, so circular
/// convolution equals linear convolution with no wrap contamination.
pub struct ConvBank {
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    anchor: (usize, usize),
    fft: Fft2,
    spectra: Vec<Vec<Complex64>>,
    scratch: Vec<Complex64>,
}

impl ConvBank {
    pub fn new(kernels: &[&BlurKernel], sh: usize, sw: usize) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::InvalidInput("convolution bank needs a kernel".into()))?;
        let (kh, kw) = first.dims();
        for k in kernels {
            if k.dims() != (kh, kw) {
                return Err(Error::DimensionMismatch(
                    "blur kernels must share one raster".into(),
                ));
            }
        }
        let ph = good_size(sh + kh - 1);
        let pw = good_size(sw + kw - 1);
        let mut fft = Fft2::new(ph, pw);
        let spectra = kernels
            .iter()
            .map(|k| fft.spectrum(k.weights(), kh, kw, 0, 0))
            .collect();
        Ok(Self {
            sh,
            sw,
            ph,
            pw,
            anchor: first.anchor(),
            fft,
            spectra,
            scratch: vec![Complex64::default(); ph * pw],
        })
    }

    /// `sum_i C_i x_i` for one plane per segment.
    pub fn forward_sum(&mut self, planes: &[&[f64]], out: &mut [f64]) {
        assert_eq!(planes.len(), self.spectra.len());
        let mut acc = vec![Complex64::default(); self.ph * self.pw];
        for (plane, spec) in planes.iter().zip(&self.spectra) {
            embed_real(plane, self.sh, self.sw, &mut self.scratch, self.ph, self.pw, 0, 0);
            self.fft.forward(&mut self.scratch);
            for ((a, s), k) in acc.iter_mut().zip(&self.scratch).zip(spec) {
                *a += s * k;
            }
        }
        self.fft.inverse(&mut acc);
        crop_real(&acc, self.ph, self.pw, self.anchor.0, self.anchor.1, out, self.sh, self.sw);
    }

    /// `C_i^T y` for every segment, appended into per-segment buffers.
    pub fn adjoint_each(&mut self, y: &[f64], outs: &mut [Vec<f64>]) {
        assert_eq!(outs.len(), self.spectra.len());
        embed_real(y, self.sh, self.sw, &mut self.scratch, self.ph, self.pw, self.anchor.0, self.anchor.1);
        self.fft.forward(&mut self.scratch);
        let base = self.scratch.clone();
        for (spec, out) in self.spectra.iter().zip(outs.iter_mut()) {
            let mut buf: Vec<Complex64> =
                base.iter().zip(spec).map(|(b, k)| b * k.conj()).collect();
            self.fft.inverse(&mut buf);
            out.resize(self.sh * self.sw, 0.0);
            crop_real(&buf, self.ph, self.pw, 0, 0, out, self.sh, self.sw);
        }
    }
}

/// Convolution of a kernel-sized unknown with a fixed domain-sized filter,
/// plus the exact adjoint; the kernel-estimation solver's operator.
///
/// Forward maps a `kh x kw` weight grid to a domain-sized plane:
/// `C h = crop_anchor(ifft(Fspec . fft(embed_0(h))))` where `Fspec` is the
/// spectrum of the filter plane embedded at the origin.
pub struct KernelConv {
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    anchor: (usize, usize),
    fft: Fft2,
    scratch: Vec<Complex64>,
}

impl KernelConv {
    pub fn new(sh: usize, sw: usize, kh: usize, kw: usize, anchor: (usize, usize)) -> Self {
        let ph = good_size(sh + kh - 1);
        let pw = good_size(sw + kw - 1);
        Self {
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            anchor,
            fft: Fft2::new(ph, pw),
            scratch: vec![Complex64::default(); ph * pw],
        }
    }

    /// Spectrum of a domain-sized filter plane, embedded at the origin.
    pub fn filter_spectrum(&mut self, plane: &[f64]) -> Vec<Complex64> {
        self.fft.spectrum(plane, self.sh, self.sw, 0, 0)
    }

    /// `crop_anchor(filter * h)` for a kernel-raster operand.
    pub fn forward(&mut self, filter_spec: &[Complex64], weights: &[f64], out: &mut [f64]) {
        embed_real(weights, self.kh, self.kw, &mut self.scratch, self.ph, self.pw, 0, 0);
        self.fft.forward(&mut self.scratch);
        let mut buf: Vec<Complex64> = self
            .scratch
            .iter()
            .zip(filter_spec)
            .map(|(s, k)| s * k)
            .collect();
        self.fft.inverse(&mut buf);
        crop_real(&buf, self.ph, self.pw, self.anchor.0, self.anchor.1, out, self.sh, self.sw);
    }

    /// Adjoint of `forward`, mapping a domain plane back to kernel weights;
    /// accumulates into `out`.
    pub fn adjoint_accumulate(
        &mut self,
        filter_spec: &[Complex64],
        y: &[f64],
        out: &mut [f64],
    ) {
        embed_real(y, self.sh, self.sw, &mut self.scratch, self.ph, self.pw, self.anchor.0, self.anchor.1);
        self.fft.forward(&mut self.scratch);
        let mut buf: Vec<Complex64> = self
            .scratch
            .iter()
            .zip(filter_spec)
            .map(|(s, k)| s * k.conj())
            .collect();
        self.fft.inverse(&mut buf);
        let mut cropped = vec![0.0; self.kh * self.kw];
        crop_real(&buf, self.ph, self.pw, 0, 0, &mut cropped, self.kh, self.kw);
        for (o, v) in out.iter_mut().zip(&cropped) {
            *o += v;
        }
    }
}

/// Forward differences with zero rows/columns at the far border. `gx` and
/// `gy` must each hold `h * w` values.
pub fn grad_forward(plane: &[f64], h: usize, w: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { plane[i + 1] - plane[i] } else { 0.0 };
            gy[i] = if y + 1 < h { plane[i + w] - plane[i] } else { 0.0 };
        }
    }
}

/// Exact adjoint of `grad_forward` (negative divergence), accumulated into
/// `out` scaled by `scale`.
pub fn grad_adjoint_accumulate(
    gx: &[f64],
    gy: &[f64],
    h: usize,
    w: usize,
    scale: f64,
    out: &mut [f64],
) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut v = 0.0;
            if x + 1 < w {
                v -= gx[i];
            }
            if x > 0 {
                v += gx[i - 1];
            }
            if y + 1 < h {
                v -= gy[i];
            }
            if y > 0 {
                v += gy[i - w];
            }
            out[i] += scale * v;
        }
    }
}
