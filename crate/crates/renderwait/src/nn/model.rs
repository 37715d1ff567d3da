//! The rendering-state classifier network.
//!
//! A 3x3 stride-2 stem followed by inverted residual blocks
//! (1x1 expand -> BN -> ReLU6 -> 3x3 depthwise -> BN -> ReLU6 -> 1x1 project
//! -> BN, skip when shape-preserving), global average pooling, and a single
//! logit head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    BatchNorm, Conv3x3, GlobalAvgPool, InvertedResidual, Layer, Linear, Relu6,
};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

/// Desk-scale default input (width, height): the 12:7 aspect of a portrait
/// phone screen at a size a CPU can train quickly.
pub const DEFAULT_INPUT: (u32, u32) = (56, 96);

/// Full-scale input available behind configuration.
pub const FULL_SCALE_INPUT: (u32, u32) = (448, 768);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub expansion: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_width: u32,
    pub input_height: u32,
    pub stem_channels: usize,
    pub blocks: Vec<BlockSpec>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let spec = |i, o, s| BlockSpec {
            in_channels: i,
            out_channels: o,
            stride: s,
            expansion: 6,
        };
        ClassifierConfig {
            input_width: DEFAULT_INPUT.0,
            input_height: DEFAULT_INPUT.1,
            stem_channels: 8,
            blocks: vec![spec(8, 16, 2), spec(16, 16, 1), spec(16, 24, 2), spec(24, 24, 1)],
        }
    }
}

impl ClassifierConfig {
    pub fn with_input(mut self, width: u32, height: u32) -> Self {
        self.input_width = width;
        self.input_height = height;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.input_height == 0 {
            return Err(Error::invalid("classifier input dimensions must be positive"));
        }
        if self.blocks.is_empty() {
            return Err(Error::invalid("classifier needs at least one block"));
        }
        let mut prev = self.stem_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.in_channels != prev {
                return Err(Error::invalid(format!(
                    "block {i} input channels {} do not chain from {prev}",
                    b.in_channels
                )));
            }
            if b.stride != 1 && b.stride != 2 {
                return Err(Error::invalid(format!("block {i} stride must be 1 or 2")));
            }
            if b.expansion == 0 {
                return Err(Error::invalid(format!("block {i} expansion must be >= 1")));
            }
            prev = b.out_channels;
        }
        Ok(())
    }

    fn head_inputs(&self) -> usize {
        self.blocks.last().map(|b| b.out_channels).unwrap_or(0)
    }
}

pub struct Classifier {
    config: ClassifierConfig,
    stem: Conv3x3,
    stem_bn: BatchNorm,
    stem_act: Relu6,
    blocks: Vec<InvertedResidual>,
    pool: GlobalAvgPool,
    head: Linear,
}

impl Classifier {
    /// Build a freshly initialized network; all weight draws come from the
    /// seed (Kaiming-uniform convolutions, identity-initialized BN).
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Classifier> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Conv3x3::new(1, config.stem_channels, 2, &mut rng);
        let blocks = config
            .blocks
            .iter()
            .map(|b| {
                InvertedResidual::new(b.in_channels, b.out_channels, b.stride, b.expansion, &mut rng)
            })
            .collect();
        let head = Linear::new(config.head_inputs(), 1, &mut rng);
        Ok(Classifier {
            stem_bn: BatchNorm::new(config.stem_channels),
            stem_act: Relu6::new(),
            stem,
            blocks,
            pool: GlobalAvgPool::new(),
            head,
            config,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    /// Forward pass over a [N, 1, H, W] batch to [N, 1] logits.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != 1 {
            return Err(Error::invalid("classifier input must be 1-channel"));
        }
        if (w as u32, h as u32) != (self.config.input_width, self.config.input_height) {
            return Err(Error::invalid(format!(
                "classifier expects {}x{} input, got {w}x{h}",
                self.config.input_width, self.config.input_height
            )));
        }
        let mut y = self.stem.forward(x, train)?;
        y = self.stem_bn.forward(&y, train)?;
        y = self.stem_act.forward(&y, train)?;
        for block in &mut self.blocks {
            y = block.forward(&y, train)?;
        }
        let pooled = self.pool.forward(&y, train)?;
        self.head.forward(&pooled, train)
    }

    /// Backpropagate from logit gradients, accumulating parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let mut g = self.head.backward(grad_logits)?;
        g = self.pool.backward(&g)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        g = self.stem_act.backward(&g)?;
        g = self.stem_bn.backward(&g)?;
        self.stem.backward(&g)?;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// All parameters in a stable order (also the checkpoint blob order).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = vec![
            &mut self.stem.weight,
            &mut self.stem_bn.gamma,
            &mut self.stem_bn.beta,
        ];
        for b in &mut self.blocks {
            out.push(&mut b.expand.weight);
            out.push(&mut b.bn_expand.gamma);
            out.push(&mut b.bn_expand.beta);
            out.push(&mut b.depthwise.weight);
            out.push(&mut b.bn_depthwise.gamma);
            out.push(&mut b.bn_depthwise.beta);
            out.push(&mut b.project.weight);
            out.push(&mut b.bn_project.gamma);
            out.push(&mut b.bn_project.beta);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Param)) {
        f("stem.weight".into(), &self.stem.weight);
        f("stem_bn.gamma".into(), &self.stem_bn.gamma);
        f("stem_bn.beta".into(), &self.stem_bn.beta);
        for (i, b) in self.blocks.iter().enumerate() {
            f(format!("block{i}.expand.weight"), &b.expand.weight);
            f(format!("block{i}.expand_bn.gamma"), &b.bn_expand.gamma);
            f(format!("block{i}.expand_bn.beta"), &b.bn_expand.beta);
            f(format!("block{i}.depthwise.weight"), &b.depthwise.weight);
            f(format!("block{i}.depthwise_bn.gamma"), &b.bn_depthwise.gamma);
            f(format!("block{i}.depthwise_bn.beta"), &b.bn_depthwise.beta);
            f(format!("block{i}.project.weight"), &b.project.weight);
            f(format!("block{i}.project_bn.gamma"), &b.bn_project.gamma);
            f(format!("block{i}.project_bn.beta"), &b.bn_project.beta);
        }
        f("head.weight".into(), &self.head.weight);
        f("head.bias".into(), &self.head.bias);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        f("stem.weight".into(), &mut self.stem.weight);
        f("stem_bn.gamma".into(), &mut self.stem_bn.gamma);
        f("stem_bn.beta".into(), &mut self.stem_bn.beta);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(format!("block{i}.expand.weight"), &mut b.expand.weight);
            f(format!("block{i}.expand_bn.gamma"), &mut b.bn_expand.gamma);
            f(format!("block{i}.expand_bn.beta"), &mut b.bn_expand.beta);
            f(format!("block{i}.depthwise.weight"), &mut b.depthwise.weight);
            f(format!("block{i}.depthwise_bn.gamma"), &mut b.bn_depthwise.gamma);
            f(format!("block{i}.depthwise_bn.beta"), &mut b.bn_depthwise.beta);
            f(format!("block{i}.project.weight"), &mut b.project.weight);
            f(format!("block{i}.project_bn.gamma"), &mut b.bn_project.gamma);
            f(format!("block{i}.project_bn.beta"), &mut b.bn_project.beta);
        }
        f("head.weight".into(), &mut self.head.weight);
        f("head.bias".into(), &mut self.head.bias);
    }

    pub fn visit_bn(&self, f: &mut dyn FnMut(String, &BatchNorm)) {
        f("stem_bn".into(), &self.stem_bn);
        for (i, b) in self.blocks.iter().enumerate() {
            f(format!("block{i}.expand_bn"), &b.bn_expand);
            f(format!("block{i}.depthwise_bn"), &b.bn_depthwise);
            f(format!("block{i}.project_bn"), &b.bn_project);
        }
    }

    pub fn visit_bn_mut(&mut self, f: &mut dyn FnMut(String, &mut BatchNorm)) {
        f("stem_bn".into(), &mut self.stem_bn);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(format!("block{i}.expand_bn"), &mut b.bn_expand);
            f(format!("block{i}.depthwise_bn"), &mut b.bn_depthwise);
            f(format!("block{i}.project_bn"), &mut b.bn_project);
        }
    }

    pub fn bn_momentum(&self) -> f32 {
        self.stem_bn.momentum
    }

    pub fn bn_eps(&self) -> f32 {
        self.stem_bn.eps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_topology_produces_single_logit() {
        let cfg = ClassifierConfig::default().with_input(16, 24);
        let mut model = Classifier::new(cfg, 1).unwrap();
        let x = Tensor::zeros(&[2, 1, 24, 16]);
        let y = model.forward(&x, true).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = ClassifierConfig::default().with_input(16, 24);
        let mut a = Classifier::new(cfg.clone(), 5).unwrap();
        let mut b = Classifier::new(cfg, 5).unwrap();
        let x = Tensor::from_vec(
            &[1, 1, 24, 16],
            (0..24 * 16).map(|v| (v % 7) as f32 / 7.0).collect(),
        )
        .unwrap();
        let ya = a.forward(&x, false).unwrap();
        let yb = b.forward(&x, false).unwrap();
        assert_eq!(ya.data(), yb.data());
    }

    #[test]
    fn config_chain_is_validated() {
        let mut cfg = ClassifierConfig::default();
        cfg.blocks[1].in_channels = 99;
        assert!(Classifier::new(cfg, 0).is_err());
    }

    #[test]
    fn param_walk_is_stable_and_complete() {
        let model = Classifier::new(ClassifierConfig::default(), 0).unwrap();
        let mut names = Vec::new();
        model.visit_params(&mut |n, _| names.push(n));
        assert_eq!(names.len(), 3 + 4 * 9 + 2);
        assert_eq!(names[0], "stem.weight");
        assert_eq!(names.last().unwrap(), "head.bias");
    }
}
