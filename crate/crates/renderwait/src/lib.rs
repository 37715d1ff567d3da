//! Record-and-replay engine for GUI usage scenarios with adaptive event
//! scheduling.
//!
//! Instead of replaying events with fixed inter-event delays, the replayer
//! watches screenshot frames, classifies whether the GUI is fully rendered,
//! and dispatches the next event only then (with a hard fallback timeout).
//! The crate contains the whole pipeline:
//!
//! - [`imaging`]: frames, luminance, bilinear resize, SSIM, PGM/PPM I/O
//! - [`sampling`]: SSIM-driven agglomerative frame deduplication
//! - [`augment`]: synthesis of partially-rendered frames (stitch, blend,
//!   loading injection)
//! - [`nn`]: a small dense-tensor engine with the layers, loss, and optimizer
//!   the rendering-state classifier needs
//! - [`renderstate`]: dataset assembly, classifier training, and inference
//! - [`sim`]: a deterministic virtual device + app driven by a virtual clock
//! - [`replay`]: the recorder, the replay scheduler with pluggable waiting
//!   strategies, and the benchmark harness
//! - [`cli`]: the `renderwait` command-line entry point

pub mod augment;
pub mod cli;
pub mod error;
pub mod imaging;
pub mod nn;
pub mod renderstate;
pub mod replay;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
