//! Structural similarity index over Gaussian-weighted local windows.
//!
//! The score combines local mean, variance, and covariance of luminance and
//! is averaged over every window position that fits entirely inside both
//! frames. 1.0 means identical.

use super::Frame;
use crate::error::{Error, Result};

/// SSIM configuration. `c1`/`c2` default to the reference stabilizers
/// `(0.01 * L)^2` and `(0.03 * L)^2` for dynamic range `L = 255`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimParams {
    /// Window side length in pixels; odd and at least 3.
    pub window: usize,
    pub gaussian_sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams::for_dynamic_range(255.0)
    }
}

impl SsimParams {
    pub fn for_dynamic_range(dynamic_range: f64) -> Self {
        SsimParams {
            window: 11,
            gaussian_sigma: 1.5,
            c1: (0.01 * dynamic_range) * (0.01 * dynamic_range),
            c2: (0.03 * dynamic_range) * (0.03 * dynamic_range),
            dynamic_range,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::invalid("ssim window must be odd and >= 3"));
        }
        if self.gaussian_sigma <= 0.0 || self.c1 <= 0.0 || self.c2 <= 0.0 {
            return Err(Error::invalid("ssim sigma, c1, c2 must be positive"));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is applied separably.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(window: usize, sigma: f64) -> GaussianKernel {
        let radius = (window / 2) as f64;
        let mut taps: Vec<f64> = (0..window)
            .map(|i| {
                let d = i as f64 - radius;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= sum;
        }
        GaussianKernel { taps }
    }

    pub fn from_params(params: &SsimParams) -> GaussianKernel {
        GaussianKernel::new(params.window, params.gaussian_sigma)
    }

    fn len(&self) -> usize {
        self.taps.len()
    }
}

/// Per-frame filtered statistics reused across many pairings: the
/// Gaussian-filtered luminance and the filtered squared luminance over the
/// valid window region.
#[derive(Debug, Clone)]
pub struct FramePrep {
    mu: Vec<f64>,
    sq_filt: Vec<f64>,
    valid_w: usize,
    valid_h: usize,
}

impl FramePrep {
    /// `pixels` is a 1-channel raster of `w * h` samples, `w`, `h` at least
    /// the kernel length.
    pub fn compute(pixels: &[u8], w: usize, h: usize, kernel: &GaussianKernel) -> FramePrep {
        let as_f64: Vec<f64> = pixels.iter().map(|&p| p as f64).collect();
        let squared: Vec<f64> = as_f64.iter().map(|&p| p * p).collect();
        let mu = filter_valid(&as_f64, w, h, kernel);
        let sq_filt = filter_valid(&squared, w, h, kernel);
        FramePrep {
            mu,
            sq_filt,
            valid_w: w - kernel.len() + 1,
            valid_h: h - kernel.len() + 1,
        }
    }
}

/// Separable valid-region convolution: output is (w - k + 1) x (h - k + 1).
fn filter_valid(src: &[f64], w: usize, h: usize, kernel: &GaussianKernel) -> Vec<f64> {
    let k = kernel.len();
    let vw = w - k + 1;
    let vh = h - k + 1;

    // Horizontal pass.
    let mut tmp = vec![0.0f64; vw * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * vw..(y + 1) * vw];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &tap) in kernel.taps.iter().enumerate() {
                acc += row[x + t] * tap;
            }
            *o = acc;
        }
    }

    // Vertical pass, accumulated row by row so the inner loop stays
    // sequential in memory.
    let mut out = vec![0.0f64; vw * vh];
    for y in 0..vh {
        let dst = &mut out[y * vw..(y + 1) * vw];
        for (t, &tap) in kernel.taps.iter().enumerate() {
            let srow = &tmp[(y + t) * vw..(y + t + 1) * vw];
            for (d, &s) in dst.iter_mut().zip(srow.iter()) {
                *d += s * tap;
            }
        }
    }
    out
}

/// SSIM between two 1-channel frames of identical dimensions at least as
/// large as the window. Deterministic; symmetric in its arguments.
pub fn ssim(a: &Frame, b: &Frame, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::invalid("ssim operates on 1-channel frames"));
    }
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "ssim dimension mismatch: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w < params.window || h < params.window {
        return Err(Error::invalid(format!(
            "frames {w}x{h} are smaller than the {} px ssim window",
            params.window
        )));
    }

    let kernel = GaussianKernel::from_params(params);
    let prep_a = FramePrep::compute(a.pixels(), w, h, &kernel);
    let prep_b = FramePrep::compute(b.pixels(), w, h, &kernel);
    Ok(ssim_prepared(
        &prep_a,
        &prep_b,
        a.pixels(),
        b.pixels(),
        w,
        h,
        &kernel,
        params,
    ))
}

/// SSIM from precomputed per-frame statistics. Produces exactly the bits
/// [`ssim`] would for the same inputs; the frame sampler relies on this to
/// cache per-frame filtering across the pairwise table.
#[allow(clippy::too_many_arguments)]
pub fn ssim_prepared(
    prep_a: &FramePrep,
    prep_b: &FramePrep,
    pixels_a: &[u8],
    pixels_b: &[u8],
    w: usize,
    h: usize,
    kernel: &GaussianKernel,
    params: &SsimParams,
) -> f64 {
    debug_assert_eq!(prep_a.valid_w, prep_b.valid_w);
    debug_assert_eq!(prep_a.valid_h, prep_b.valid_h);

    // Cross term: products of u8 samples are exact integers below 2^17,
    // so the f64 product map is exact.
    let prod: Vec<f64> = pixels_a
        .iter()
        .zip(pixels_b.iter())
        .map(|(&pa, &pb)| pa as f64 * pb as f64)
        .collect();
    let cross = filter_valid(&prod, w, h, kernel);

    let c1 = params.c1;
    let c2 = params.c2;
    let mut sum = 0.0f64;
    for i in 0..cross.len() {
        let ma = prep_a.mu[i];
        let mb = prep_b.mu[i];
        let va = prep_a.sq_filt[i] - ma * ma;
        let vb = prep_b.sq_filt[i] - mb * mb;
        let cov = cross[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        sum += num / den;
    }
    sum / cross.len() as f64
}
