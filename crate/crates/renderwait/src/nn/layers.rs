//! Layer forward/backward implementations.
//!
//! Dot products and statistics accumulate in f64 and round once into the f32
//! activations, which keeps finite-difference gradient checks well clear of
//! float noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

pub const BN_DEFAULT_MOMENTUM: f32 = 0.1;
pub const BN_DEFAULT_EPS: f32 = 1e-5;

/// Anything with a forward pass, a backward pass, and learnable parameters.
pub trait Layer {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor>;
    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let data = (0..shape.iter().product())
        .map(|_| ((rng.random::<f64>() * 2.0 - 1.0) * bound) as f32)
        .collect();
    Tensor::from_vec(shape, data).expect("shape/data agree by construction")
}

fn conv_out_dim(input: usize, stride: usize) -> usize {
    // 3x3 kernel, padding 1: ceil(input / stride).
    (input + 2 - 3) / stride + 1
}

// ---------------------------------------------------------------------------
// Full 3x3 convolution (used by the stem), padding 1.
// ---------------------------------------------------------------------------

pub struct Conv3x3 {
    pub weight: Param,
    in_channels: usize,
    out_channels: usize,
    stride: usize,
    cached_input: Option<Tensor>,
}

impl Conv3x3 {
    pub fn new(in_channels: usize, out_channels: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Param::new(kaiming_uniform(
            &[out_channels, in_channels, 3, 3],
            in_channels * 9,
            rng,
        ));
        Conv3x3 {
            weight,
            in_channels,
            out_channels,
            stride,
            cached_input: None,
        }
    }
}

impl Layer for Conv3x3 {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::invalid(format!(
                "conv3x3 expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (oh, ow) = (conv_out_dim(h, self.stride), conv_out_dim(w, self.stride));
        let mut out = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        let wd = self.weight.value.data();
        let xd = x.data();
        let od = out.data_mut();
        for ni in 0..n {
            for co in 0..self.out_channels {
                let obase = (ni * self.out_channels + co) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0f64;
                        for ci in 0..c {
                            let xbase = (ni * c + ci) * h * w;
                            let wbase = (co * c + ci) * 9;
                            for ky in 0..3usize {
                                let iy = (oy * self.stride + ky) as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = (ox * self.stride + kx) as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wd[wbase + ky * 3 + kx] as f64
                                        * xd[xbase + iy as usize * w + ix as usize] as f64;
                                }
                            }
                        }
                        od[obase + oy * ow + ox] = acc as f32;
                    }
                }
            }
        }
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::invalid("backward before forward"))?;
        let (n, c, h, w) = x.dims4()?;
        let (_, _, oh, ow) = grad_out.dims4()?;
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let wd = self.weight.value.data().to_vec();
        let gd = grad_out.data();
        let xd = x.data();
        let dwd = self.weight.grad.data_mut();
        let dxd = dx.data_mut();
        for ni in 0..n {
            for co in 0..self.out_channels {
                let gbase = (ni * self.out_channels + co) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = gd[gbase + oy * ow + ox] as f64;
                        if g == 0.0 {
                            continue;
                        }
                        for ci in 0..c {
                            let xbase = (ni * c + ci) * h * w;
                            let wbase = (co * c + ci) * 9;
                            for ky in 0..3usize {
                                let iy = (oy * self.stride + ky) as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = (ox * self.stride + kx) as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = xbase + iy as usize * w + ix as usize;
                                    dwd[wbase + ky * 3 + kx] += (g * xd[xi] as f64) as f32;
                                    dxd[xi] += (g * wd[wbase + ky * 3 + kx] as f64) as f32;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight]
    }
}

// ---------------------------------------------------------------------------
// Depthwise 3x3 convolution, padding 1.
// ---------------------------------------------------------------------------

pub struct DepthwiseConv3x3 {
    pub weight: Param,
    channels: usize,
    stride: usize,
    cached_input: Option<Tensor>,
}

impl DepthwiseConv3x3 {
    pub fn new(channels: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Param::new(kaiming_uniform(&[channels, 1, 3, 3], 9, rng));
        DepthwiseConv3x3 {
            weight,
            channels,
            stride,
            cached_input: None,
        }
    }

    pub fn from_weights(weight: Tensor, stride: usize) -> Result<Self> {
        let channels = match weight.shape() {
            [c, 1, 3, 3] => *c,
            other => {
                return Err(Error::invalid(format!(
                    "depthwise weights must be [C,1,3,3], got {other:?}"
                )))
            }
        };
        Ok(DepthwiseConv3x3 {
            weight: Param::new(weight),
            channels,
            stride,
            cached_input: None,
        })
    }
}

impl Layer for DepthwiseConv3x3 {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels {
            return Err(Error::invalid(format!(
                "depthwise conv expects {} channels, got {c}",
                self.channels
            )));
        }
        let (oh, ow) = (conv_out_dim(h, self.stride), conv_out_dim(w, self.stride));
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let wd = self.weight.value.data();
        let xd = x.data();
        let od = out.data_mut();
        for ni in 0..n {
            for ci in 0..c {
                let xbase = (ni * c + ci) * h * w;
                let obase = (ni * c + ci) * oh * ow;
                let wbase = ci * 9;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0f64;
                        for ky in 0..3usize {
                            let iy = (oy * self.stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..3usize {
                                let ix = (ox * self.stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += wd[wbase + ky * 3 + kx] as f64
                                    * xd[xbase + iy as usize * w + ix as usize] as f64;
                            }
                        }
                        od[obase + oy * ow + ox] = acc as f32;
                    }
                }
            }
        }
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::invalid("backward before forward"))?;
        let (n, c, h, w) = x.dims4()?;
        let (_, _, oh, ow) = grad_out.dims4()?;
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let wd = self.weight.value.data().to_vec();
        let xd = x.data();
        let gd = grad_out.data();
        let dwd = self.weight.grad.data_mut();
        let dxd = dx.data_mut();
        for ni in 0..n {
            for ci in 0..c {
                let xbase = (ni * c + ci) * h * w;
                let gbase = (ni * c + ci) * oh * ow;
                let wbase = ci * 9;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = gd[gbase + oy * ow + ox] as f64;
                        if g == 0.0 {
                            continue;
                        }
                        for ky in 0..3usize {
                            let iy = (oy * self.stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..3usize {
                                let ix = (ox * self.stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = xbase + iy as usize * w + ix as usize;
                                dwd[wbase + ky * 3 + kx] += (g * xd[xi] as f64) as f32;
                                dxd[xi] += (g * wd[wbase + ky * 3 + kx] as f64) as f32;
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight]
    }
}

// ---------------------------------------------------------------------------
// Pointwise 1x1 convolution: per-pixel channel mixing.
// ---------------------------------------------------------------------------

pub struct PointwiseConv {
    pub weight: Param,
    in_channels: usize,
    out_channels: usize,
    cached_input: Option<Tensor>,
}

impl PointwiseConv {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Param::new(kaiming_uniform(
            &[out_channels, in_channels],
            in_channels,
            rng,
        ));
        PointwiseConv {
            weight,
            in_channels,
            out_channels,
            cached_input: None,
        }
    }

    pub fn from_weights(weight: Tensor) -> Result<Self> {
        let (out_channels, in_channels) = weight.dims2()?;
        Ok(PointwiseConv {
            weight: Param::new(weight),
            in_channels,
            out_channels,
            cached_input: None,
        })
    }
}

impl Layer for PointwiseConv {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::invalid(format!(
                "pointwise conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, self.out_channels, h, w]);
        let wd = self.weight.value.data();
        let xd = x.data();
        let od = out.data_mut();
        let mut row = vec![0.0f64; hw];
        for ni in 0..n {
            for co in 0..self.out_channels {
                row.iter_mut().for_each(|v| *v = 0.0);
                for ci in 0..c {
                    let wv = wd[co * c + ci] as f64;
                    let xrow = &xd[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    for (r, &xv) in row.iter_mut().zip(xrow) {
                        *r += wv * xv as f64;
                    }
                }
                let orow = &mut od[(ni * self.out_channels + co) * hw
                    ..(ni * self.out_channels + co + 1) * hw];
                for (o, &r) in orow.iter_mut().zip(row.iter()) {
                    *o = r as f32;
                }
            }
        }
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::invalid("backward before forward"))?;
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let wd = self.weight.value.data().to_vec();
        let xd = x.data();
        let gd = grad_out.data();
        let dwd = self.weight.grad.data_mut();
        let dxd = dx.data_mut();
        let mut row = vec![0.0f64; hw];
        for ni in 0..n {
            // dx[ci] = sum_co w[co][ci] * dy[co]
            for ci in 0..c {
                row.iter_mut().for_each(|v| *v = 0.0);
                for co in 0..self.out_channels {
                    let wv = wd[co * c + ci] as f64;
                    let grow = &gd[(ni * self.out_channels + co) * hw
                        ..(ni * self.out_channels + co + 1) * hw];
                    for (r, &gv) in row.iter_mut().zip(grow) {
                        *r += wv * gv as f64;
                    }
                }
                let drow = &mut dxd[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                for (d, &r) in drow.iter_mut().zip(row.iter()) {
                    *d += r as f32;
                }
            }
            // dw[co][ci] = sum_p x[ci][p] * dy[co][p]
            for co in 0..self.out_channels {
                let grow = &gd[(ni * self.out_channels + co) * hw
                    ..(ni * self.out_channels + co + 1) * hw];
                for ci in 0..c {
                    let xrow = &xd[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    let mut acc = 0.0f64;
                    for (&xv, &gv) in xrow.iter().zip(grow) {
                        acc += xv as f64 * gv as f64;
                    }
                    dwd[co * c + ci] += acc as f32;
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight]
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over [N, C, H, W] with per-channel parameters.
// ---------------------------------------------------------------------------

pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
    channels: usize,
    cache: Option<BnCache>,
}

struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    train: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(
                Tensor::from_vec(&[channels], vec![1.0; channels]).expect("sized vec"),
            ),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_DEFAULT_MOMENTUM,
            eps: BN_DEFAULT_EPS,
            channels,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels {
            return Err(Error::invalid(format!(
                "batch norm expects {} channels, got {c}",
                self.channels
            )));
        }
        if train && n == 0 {
            return Err(Error::invalid("batch norm cannot train on an empty batch"));
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let xd = x.data();
        let mut out = Tensor::zeros(&[n, c, h, w]);
        let mut x_hat = Tensor::zeros(&[n, c, h, w]);
        let mut inv_std = vec![0.0f64; c];

        for ci in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0f64;
                for ni in 0..n {
                    let row = &xd[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    for &v in row {
                        sum += v as f64;
                    }
                }
                let mean = sum / m;
                let mut sq = 0.0f64;
                for ni in 0..n {
                    let row = &xd[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    for &v in row {
                        let d = v as f64 - mean;
                        sq += d * d;
                    }
                }
                let var = sq / m;
                self.running_mean[ci] =
                    (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean as f32;
                self.running_var[ci] =
                    (1.0 - self.momentum) * self.running_var[ci] + self.momentum * var as f32;
                (mean, var)
            } else {
                (self.running_mean[ci] as f64, self.running_var[ci] as f64)
            };
            let istd = 1.0 / (var + self.eps as f64).sqrt();
            inv_std[ci] = istd;
            let g = self.gamma.value.data()[ci] as f64;
            let b = self.beta.value.data()[ci] as f64;
            for ni in 0..n {
                let base = (ni * c + ci) * hw;
                for p in 0..hw {
                    let xh = (xd[base + p] as f64 - mean) * istd;
                    x_hat.data_mut()[base + p] = xh as f32;
                    out.data_mut()[base + p] = (g * xh + b) as f32;
                }
            }
        }

        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            train,
        });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("backward before forward"))?;
        let (n, c, h, w) = grad_out.dims4()?;
        let hw = h * w;
        let m = (n * hw) as f64;
        let gd = grad_out.data();
        let xh = cache.x_hat.data();
        let mut dx = Tensor::zeros(&[n, c, h, w]);

        for ci in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for ni in 0..n {
                let base = (ni * c + ci) * hw;
                for p in 0..hw {
                    let dy = gd[base + p] as f64;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xh[base + p] as f64;
                }
            }
            self.gamma.grad.data_mut()[ci] += sum_dy_xhat as f32;
            self.beta.grad.data_mut()[ci] += sum_dy as f32;

            let g = self.gamma.value.data()[ci] as f64;
            let istd = cache.inv_std[ci];
            for ni in 0..n {
                let base = (ni * c + ci) * hw;
                for p in 0..hw {
                    let dy = gd[base + p] as f64;
                    let v = if cache.train {
                        g * istd * (dy - sum_dy / m - xh[base + p] as f64 * sum_dy_xhat / m)
                    } else {
                        g * istd * dy
                    };
                    dx.data_mut()[base + p] = v as f32;
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

// ---------------------------------------------------------------------------
// ReLU6: min(max(0, x), 6).
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Relu6 {
    pass_mask: Vec<bool>,
    shape: Vec<usize>,
}

impl Relu6 {
    pub fn new() -> Self {
        Relu6::default()
    }
}

impl Layer for Relu6 {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let mut out = x.clone();
        self.pass_mask.clear();
        self.pass_mask.reserve(x.numel());
        for v in out.data_mut() {
            self.pass_mask.push(*v > 0.0 && *v < 6.0);
            *v = v.clamp(0.0, 6.0);
        }
        self.shape = x.shape().to_vec();
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.numel() != self.pass_mask.len() {
            return Err(Error::invalid("relu6 backward shape mismatch"));
        }
        let mut dx = grad_out.clone();
        for (v, &pass) in dx.data_mut().iter_mut().zip(&self.pass_mask) {
            if !pass {
                *v = 0.0;
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// Global average pooling: [N, C, H, W] -> [N, C].
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct GlobalAvgPool {
    cached_dims: Option<(usize, usize, usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool::default()
    }
}

impl Layer for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, c]);
        for ni in 0..n {
            for ci in 0..c {
                let row = &x.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                let sum: f64 = row.iter().map(|&v| v as f64).sum();
                out.data_mut()[ni * c + ci] = (sum / hw as f64) as f32;
            }
        }
        self.cached_dims = Some((n, c, h, w));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = self
            .cached_dims
            .ok_or_else(|| Error::invalid("backward before forward"))?;
        let hw = h * w;
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        for ni in 0..n {
            for ci in 0..c {
                let g = grad_out.data()[ni * c + ci] / hw as f32;
                let row = &mut dx.data_mut()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                row.iter_mut().for_each(|v| *v = g);
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// Fully connected layer on [N, F] input.
// ---------------------------------------------------------------------------

pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
    cached_input: Option<Tensor>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: Param::new(kaiming_uniform(
                &[out_features, in_features],
                in_features,
                rng,
            )),
            bias: Param::new(Tensor::zeros(&[out_features])),
            in_features,
            out_features,
            cached_input: None,
        }
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let (n, f) = x.dims2()?;
        if f != self.in_features {
            return Err(Error::invalid(format!(
                "linear expects {} features, got {f}",
                self.in_features
            )));
        }
        let mut out = Tensor::zeros(&[n, self.out_features]);
        let wd = self.weight.value.data();
        let bd = self.bias.value.data();
        for ni in 0..n {
            let xrow = &x.data()[ni * f..(ni + 1) * f];
            for o in 0..self.out_features {
                let wrow = &wd[o * f..(o + 1) * f];
                let mut acc = bd[o] as f64;
                for (&wv, &xv) in wrow.iter().zip(xrow) {
                    acc += wv as f64 * xv as f64;
                }
                out.data_mut()[ni * self.out_features + o] = acc as f32;
            }
        }
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::invalid("backward before forward"))?;
        let (n, f) = x.dims2()?;
        let mut dx = Tensor::zeros(&[n, f]);
        let wd = self.weight.value.data().to_vec();
        for ni in 0..n {
            let xrow = &x.data()[ni * f..(ni + 1) * f];
            for o in 0..self.out_features {
                let g = grad_out.data()[ni * self.out_features + o] as f64;
                self.bias.grad.data_mut()[o] += g as f32;
                let wgrad = &mut self.weight.grad.data_mut()[o * f..(o + 1) * f];
                for (i, (&xv, wg)) in xrow.iter().zip(wgrad.iter_mut()).enumerate() {
                    *wg += (g * xv as f64) as f32;
                    dx.data_mut()[ni * f + i] += (g * wd[o * f + i] as f64) as f32;
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Inverted residual block: expand -> depthwise -> project, linear bottleneck,
// skip connection when the block preserves shape.
// ---------------------------------------------------------------------------

pub struct InvertedResidual {
    pub expand: PointwiseConv,
    pub bn_expand: BatchNorm,
    act_expand: Relu6,
    pub depthwise: DepthwiseConv3x3,
    pub bn_depthwise: BatchNorm,
    act_depthwise: Relu6,
    pub project: PointwiseConv,
    pub bn_project: BatchNorm,
    use_skip: bool,
}

impl InvertedResidual {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        expansion: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let hidden = in_channels * expansion;
        InvertedResidual {
            expand: PointwiseConv::new(in_channels, hidden, rng),
            bn_expand: BatchNorm::new(hidden),
            act_expand: Relu6::new(),
            depthwise: DepthwiseConv3x3::new(hidden, stride, rng),
            bn_depthwise: BatchNorm::new(hidden),
            act_depthwise: Relu6::new(),
            project: PointwiseConv::new(hidden, out_channels, rng),
            bn_project: BatchNorm::new(out_channels),
            use_skip: stride == 1 && in_channels == out_channels,
        }
    }

    pub fn uses_skip(&self) -> bool {
        self.use_skip
    }
}

impl Layer for InvertedResidual {
    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut y = self.expand.forward(x, train)?;
        y = self.bn_expand.forward(&y, train)?;
        y = self.act_expand.forward(&y, train)?;
        y = self.depthwise.forward(&y, train)?;
        y = self.bn_depthwise.forward(&y, train)?;
        y = self.act_depthwise.forward(&y, train)?;
        y = self.project.forward(&y, train)?;
        // Linear bottleneck: no activation after the projection.
        y = self.bn_project.forward(&y, train)?;
        if self.use_skip {
            for (o, &xv) in y.data_mut().iter_mut().zip(x.data()) {
                *o += xv;
            }
        }
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let mut g = self.bn_project.backward(grad_out)?;
        g = self.project.backward(&g)?;
        g = self.act_depthwise.backward(&g)?;
        g = self.bn_depthwise.backward(&g)?;
        g = self.depthwise.backward(&g)?;
        g = self.act_expand.backward(&g)?;
        g = self.bn_expand.backward(&g)?;
        g = self.expand.backward(&g)?;
        if self.use_skip {
            for (d, &go) in g.data_mut().iter_mut().zip(grad_out.data()) {
                *d += go;
            }
        }
        Ok(g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.expand.params_mut();
        out.extend(self.bn_expand.params_mut());
        out.extend(self.depthwise.params_mut());
        out.extend(self.bn_depthwise.params_mut());
        out.extend(self.project.params_mut());
        out.extend(self.bn_project.params_mut());
        out
    }
}
