//! Frame representation, luminance conversion, resizing, and the structural
//! similarity index used by the frame sampler.

mod pnm;
mod ssim;

pub use pnm::{frame_filename, read_frame, write_frame};
pub use ssim::{ssim, ssim_prepared, FramePrep, GaussianKernel, SsimParams};

use crate::error::{Error, Result};

/// ITU-R BT.601 luminance weights.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// A raster screenshot: 1-channel grayscale or 3-channel RGB, 8 bits per
/// sample, row-major, stamped with virtual capture time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
    timestamp_ms: u64,
}

impl Frame {
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        pixels: Vec<u8>,
        timestamp_ms: u64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "frame must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel buffer length {} does not match {}x{}x{}",
                pixels.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            pixels,
            timestamp_ms,
        })
    }

    /// A 1-channel frame filled with a constant gray level.
    pub fn filled(width: u32, height: u32, value: u8, timestamp_ms: u64) -> Frame {
        Frame {
            width,
            height,
            channels: 1,
            pixels: vec![value; width as usize * height as usize],
            timestamp_ms,
        }
    }

    /// A 1-channel frame whose pixels are produced by `f(x, y)`.
    pub fn from_fn(
        width: u32,
        height: u32,
        timestamp_ms: u64,
        mut f: impl FnMut(u32, u32) -> u8,
    ) -> Frame {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Frame {
            width,
            height,
            channels: 1,
            pixels,
            timestamp_ms,
        }
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

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn set_timestamp_ms(&mut self, timestamp_ms: u64) {
        self.timestamp_ms = timestamp_ms;
    }

    /// Sample at (x, y, c). Panics on out-of-range coordinates.
    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.pixels[idx]
    }

    pub(crate) fn put(&mut self, x: u32, y: u32, c: u8, value: u8) {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.pixels[idx] = value;
    }

    pub fn same_dimensions(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// 64-bit FNV-1a over dimensions, channel count, and pixel bytes.
    /// Used to group identical content when splitting datasets.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for v in self
            .width
            .to_le_bytes()
            .into_iter()
            .chain(self.height.to_le_bytes())
        {
            eat(v);
        }
        eat(self.channels);
        for &b in &self.pixels {
            eat(b);
        }
        h
    }
}

/// Collapse a frame to a single luminance channel using BT.601 weights.
/// 1-channel input is returned unchanged.
pub fn to_luminance(frame: &Frame) -> Frame {
    if frame.channels == 1 {
        return frame.clone();
    }
    let mut pixels = Vec::with_capacity(frame.width as usize * frame.height as usize);
    for px in frame.pixels.chunks_exact(3) {
        let y = LUMA_R * px[0] as f64 + LUMA_G * px[1] as f64 + LUMA_B * px[2] as f64;
        pixels.push(y.round() as u8);
    }
    Frame {
        width: frame.width,
        height: frame.height,
        channels: 1,
        pixels,
        timestamp_ms: frame.timestamp_ms,
    }
}

/// Bilinear resize with edge clamping. Resizing to the input dimensions is
/// the identity.
pub fn resize_bilinear(frame: &Frame, out_w: u32, out_h: u32) -> Result<Frame> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize target dimensions must be positive"));
    }
    if out_w == frame.width && out_h == frame.height {
        return Ok(frame.clone());
    }

    let ch = frame.channels as usize;
    let (in_w, in_h) = (frame.width as usize, frame.height as usize);
    let scale_x = in_w as f64 / out_w as f64;
    let scale_y = in_h as f64 / out_h as f64;

    let mut pixels = vec![0u8; out_w as usize * out_h as usize * ch];
    for oy in 0..out_h as usize {
        // Pixel-center mapping, clamped to the source extent.
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w as usize {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = sx - x0 as f64;
            for c in 0..ch {
                let p00 = frame.pixels[(y0 * in_w + x0) * ch + c] as f64;
                let p01 = frame.pixels[(y0 * in_w + x1) * ch + c] as f64;
                let p10 = frame.pixels[(y1 * in_w + x0) * ch + c] as f64;
                let p11 = frame.pixels[(y1 * in_w + x1) * ch + c] as f64;
                let top = p00 * (1.0 - fx) + p01 * fx;
                let bottom = p10 * (1.0 - fx) + p11 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels[(oy * out_w as usize + ox) * ch + c] = v.round() as u8;
            }
        }
    }

    Ok(Frame {
        width: out_w,
        height: out_h,
        channels: frame.channels,
        pixels,
        timestamp_ms: frame.timestamp_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_wrong_buffer_length() {
        assert!(Frame::new(4, 4, 1, vec![0; 15], 0).is_err());
        assert!(Frame::new(4, 4, 2, vec![0; 32], 0).is_err());
        assert!(Frame::new(0, 4, 1, vec![], 0).is_err());
    }

    #[test]
    fn luminance_of_white_and_black() {
        let white = Frame::new(2, 2, 3, vec![255; 12], 0).unwrap();
        assert_eq!(to_luminance(&white).pixels(), &[255; 4]);
        let black = Frame::new(2, 2, 3, vec![0; 12], 0).unwrap();
        assert_eq!(to_luminance(&black).pixels(), &[0; 4]);
    }

    #[test]
    fn luminance_of_pure_red() {
        let red = Frame::new(1, 1, 3, vec![255, 0, 0], 0).unwrap();
        // round(0.299 * 255) = round(76.245) = 76
        assert_eq!(to_luminance(&red).pixels(), &[76]);
    }

    #[test]
    fn luminance_passes_gray_through() {
        let gray = Frame::filled(3, 2, 77, 9);
        let lum = to_luminance(&gray);
        assert_eq!(lum, gray);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let f = Frame::filled(10, 10, 123, 0);
        let g = resize_bilinear(&f, 7, 7).unwrap();
        assert!(g.pixels().iter().all(|&p| p == 123));
    }

    #[test]
    fn resize_identity_is_bit_identical() {
        let f = Frame::from_fn(9, 5, 0, |x, y| (x * 31 + y * 7) as u8);
        let g = resize_bilinear(&f, 9, 5).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn resize_zero_target_is_invalid() {
        let f = Frame::filled(4, 4, 0, 0);
        assert!(resize_bilinear(&f, 0, 4).is_err());
        assert!(resize_bilinear(&f, 4, 0).is_err());
    }

    #[test]
    fn upscale_of_ramp_is_monotone() {
        let f = Frame::new(2, 1, 1, vec![0, 255], 0).unwrap();
        let g = resize_bilinear(&f, 4, 1).unwrap();
        let px = g.pixels();
        assert!(px.windows(2).all(|w| w[0] <= w[1]), "not monotone: {px:?}");
        // Reference bilinear oracle: centers map to -0.25, 0.25, 0.75, 1.25.
        assert_eq!(px, &[0, 64, 191, 255]);
    }

    #[test]
    fn content_hash_distinguishes_frames() {
        let a = Frame::filled(4, 4, 1, 0);
        let b = Frame::filled(4, 4, 2, 0);
        let c = Frame::filled(4, 4, 1, 99); // timestamp not hashed
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), c.content_hash());
    }
}
