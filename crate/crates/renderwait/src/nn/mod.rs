//! Minimal dense-tensor engine for the rendering-state classifier: forward
//! and backward passes for the handful of layers the network needs, the Adam
//! optimizer with its halving learning-rate schedule, binary cross-entropy,
//! and checkpoint serialization.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod optim;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{
    BatchNorm, Conv3x3, DepthwiseConv3x3, GlobalAvgPool, InvertedResidual, Layer, Linear,
    PointwiseConv, Relu6,
};
pub use loss::{bce_with_logits, sigmoid_scalar};
pub use model::{BlockSpec, Classifier, ClassifierConfig, DEFAULT_INPUT, FULL_SCALE_INPUT};
pub use optim::{Adam, LrSchedule};
pub use tensor::{Param, Tensor};
