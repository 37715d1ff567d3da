//! Rendering-state ground truth, the trained classifier's inference calls,
//! and the precision/recall/F1 evaluation over dataset splits.
//!
//! Predictions are binary (`FullyRendered` vs `Partial`) and never carry the
//! ground-truth sub-kind; the three-way [`RenderState`] exists only on the
//! simulator-oracle side. A frozen checkpoint can be loaded into any number
//! of per-caller [`Classifier`] instances; one instance serves one caller at
//! a time because forward passes cache activations.

mod dataset;

pub use dataset::{
    build_dataset, read_labeled_screencast, read_labels, write_labels, DatasetManifest,
    DatasetOptions, ManifestEntry, Origin, RenderLabel, Split, DEFAULT_AUGMENT_RATIO,
    DEFAULT_SPLIT_RATIOS, LABELS_FILE,
};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{read_frame, resize_bilinear, to_luminance, Frame};
use crate::nn::{
    bce_with_logits, save_checkpoint, Adam, Classifier, ClassifierConfig, LrSchedule, Tensor,
};

/// Ground-truth rendering state as the simulator oracle reports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RenderState {
    FullyRendered,
    /// Mid-transition composite of two screens.
    Transiting,
    /// Explicit progress indicator on screen.
    Loading,
}

impl RenderState {
    pub fn label(&self) -> RenderLabel {
        match self {
            RenderState::FullyRendered => RenderLabel::FullyRendered,
            _ => RenderLabel::Partial,
        }
    }

    pub fn is_fully_rendered(&self) -> bool {
        *self == RenderState::FullyRendered
    }

    pub(crate) fn slug(&self) -> &'static str {
        match self {
            RenderState::FullyRendered => "full",
            RenderState::Transiting => "transiting",
            RenderState::Loading => "loading",
        }
    }

    /// (label, kind) pair as written in ground-truth label files.
    pub fn as_label_kind(&self) -> (&'static str, &'static str) {
        match self {
            RenderState::FullyRendered => ("FullyRendered", ""),
            RenderState::Transiting => ("Partial", "Transiting"),
            RenderState::Loading => ("Partial", "Loading"),
        }
    }

    pub fn from_label_kind(label: &str, kind: &str) -> Result<RenderState> {
        match (label, kind) {
            ("FullyRendered", "") => Ok(RenderState::FullyRendered),
            ("Partial", "Transiting") => Ok(RenderState::Transiting),
            ("Partial", "Loading") => Ok(RenderState::Loading),
            _ => Err(Error::format(format!(
                "unknown ground truth label {label:?} kind {kind:?}"
            ))),
        }
    }
}

/// Decision threshold on the fully-rendered confidence; ties go to
/// FullyRendered.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Convert a frame to the model input tensor row: luminance, resize to the
/// model dimensions, scale to [0, 1].
pub fn frame_to_input(frame: &Frame, config: &ClassifierConfig) -> Result<Vec<f32>> {
    let lum = to_luminance(frame);
    let resized = resize_bilinear(&lum, config.input_width, config.input_height)?;
    Ok(resized.pixels().iter().map(|&p| p as f32 / 255.0).collect())
}

/// Classify one frame: returns the predicted label and the fully-rendered
/// confidence (the sigmoid of the logit).
pub fn predict(model: &mut Classifier, frame: &Frame) -> Result<(RenderLabel, f64)> {
    let config = model.config().clone();
    let input = frame_to_input(frame, &config)?;
    let x = Tensor::from_vec(
        &[1, 1, config.input_height as usize, config.input_width as usize],
        input,
    )?;
    let logits = model.forward(&x, false)?;
    let confidence = crate::nn::sigmoid_scalar(logits.data()[0] as f64);
    let label = if confidence >= DECISION_THRESHOLD {
        RenderLabel::FullyRendered
    } else {
        RenderLabel::Partial
    };
    Ok((label, confidence))
}

/// Evaluation result; positives are fully rendered GUIs. When nothing is
/// predicted positive, precision is undefined and reported as 0 with the
/// flag cleared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
}

/// Compute metrics from confusion counts.
pub fn metrics_from_counts(tp: usize, fp: usize, fn_: usize) -> Metrics {
    let precision_defined = tp + fp > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        precision,
        recall,
        f1,
        precision_defined,
    }
}

/// Evaluate a model over one split of a dataset rooted at `root`.
pub fn evaluate(
    model: &mut Classifier,
    manifest: &DatasetManifest,
    split: Split,
    root: &Path,
) -> Result<Metrics> {
    let entries: Vec<&ManifestEntry> = manifest.split_entries(split).collect();
    if entries.is_empty() {
        return Err(Error::invalid(format!("split {split:?} is empty")));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for entry in entries {
        let frame = read_frame(&root.join(&entry.path))?;
        let (predicted, _) = predict(model, &frame)?;
        match (predicted, entry.label) {
            (RenderLabel::FullyRendered, RenderLabel::FullyRendered) => tp += 1,
            (RenderLabel::FullyRendered, RenderLabel::Partial) => fp += 1,
            (RenderLabel::Partial, RenderLabel::FullyRendered) => fn_ += 1,
            (RenderLabel::Partial, RenderLabel::Partial) => {}
        }
    }
    Ok(metrics_from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: u32,
    pub seed: u64,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub model: ClassifierConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            seed: 0,
            batch_size: 32,
            schedule: LrSchedule::default(),
            model: ClassifierConfig::default(),
        }
    }
}

/// Train the classifier over a dataset manifest and return the checkpoint of
/// the epoch with the best validation loss.
pub fn train_classifier(
    manifest: &DatasetManifest,
    root: &Path,
    opts: &TrainOptions,
) -> Result<Vec<u8>> {
    let load = |split: Split| -> Result<(Vec<Vec<f32>>, Vec<f32>)> {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for entry in manifest.split_entries(split) {
            let frame = read_frame(&root.join(&entry.path))?;
            rows.push(frame_to_input(&frame, &opts.model)?);
            targets.push(match entry.label {
                RenderLabel::FullyRendered => 1.0,
                RenderLabel::Partial => 0.0,
            });
        }
        Ok((rows, targets))
    };
    let (train_rows, train_targets) = load(Split::Train)?;
    let (val_rows, val_targets) = load(Split::Val)?;
    if train_rows.is_empty() {
        return Err(Error::invalid("train split is empty"));
    }
    if train_targets.iter().all(|&t| t == 0.0) || train_targets.iter().all(|&t| t == 1.0) {
        return Err(Error::invalid("train split holds a single class"));
    }

    let mut model = Classifier::new(opts.model.clone(), opts.seed)?;
    let mut adam = Adam::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7e57_7e57_0bad_cafe);
    let (h, w) = (
        opts.model.input_height as usize,
        opts.model.input_width as usize,
    );

    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    for epoch in 0..opts.epochs {
        let lr = opts.schedule.rate(epoch);
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(opts.batch_size) {
            let (x, t) = gather_batch(&train_rows, &train_targets, chunk, h, w)?;
            let logits = model.forward(&x, true)?;
            let (loss, grad) = bce_with_logits(&logits, &t)?;
            model.zero_grad();
            model.backward(&grad)?;
            adam.step(lr, &mut model.params_mut())?;
            train_loss += loss;
            batches += 1;
        }
        train_loss /= batches.max(1) as f64;

        let val_loss = if val_rows.is_empty() {
            train_loss
        } else {
            batched_loss(&mut model, &val_rows, &val_targets, opts.batch_size, h, w)?
        };
        log::info!(
            "epoch {epoch}: lr {lr:.5} train loss {train_loss:.4} val loss {val_loss:.4}"
        );
        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, save_checkpoint(&model)));
        }
    }
    Ok(best.expect("at least one epoch ran").1)
}

fn gather_batch(
    rows: &[Vec<f32>],
    targets: &[f32],
    idxs: &[usize],
    h: usize,
    w: usize,
) -> Result<(Tensor, Tensor)> {
    let mut data = Vec::with_capacity(idxs.len() * h * w);
    let mut t = Vec::with_capacity(idxs.len());
    for &i in idxs {
        data.extend_from_slice(&rows[i]);
        t.push(targets[i]);
    }
    Ok((
        Tensor::from_vec(&[idxs.len(), 1, h, w], data)?,
        Tensor::from_vec(&[idxs.len(), 1], t)?,
    ))
}

/// Mean BCE over a split in eval mode.
pub fn batched_loss(
    model: &mut Classifier,
    rows: &[Vec<f32>],
    targets: &[f32],
    batch_size: usize,
    h: usize,
    w: usize,
) -> Result<f64> {
    let idxs: Vec<usize> = (0..rows.len()).collect();
    let mut total = 0.0;
    for chunk in idxs.chunks(batch_size) {
        let (x, t) = gather_batch(rows, targets, chunk, h, w)?;
        let logits = model.forward(&x, false)?;
        let (loss, _) = bce_with_logits(&logits, &t)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_for_hand_built_confusion() {
        // TP=2, FP=1, FN=1 -> P = R = F1 = 2/3.
        let m = metrics_from_counts(2, 1, 1);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(m.precision_defined);
    }

    #[test]
    fn perfect_predictor_scores_ones() {
        let m = metrics_from_counts(10, 0, 0);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_partial_predictor_has_zero_recall_and_flag() {
        let m = metrics_from_counts(0, 0, 5);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert!(!m.precision_defined);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let m = metrics_from_counts(7, 3, 2);
        let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        assert!((m.f1 - harmonic).abs() < 1e-12);
    }

    #[test]
    fn render_state_round_trips_label_kind() {
        for s in [
            RenderState::FullyRendered,
            RenderState::Transiting,
            RenderState::Loading,
        ] {
            let (label, kind) = s.as_label_kind();
            assert_eq!(RenderState::from_label_kind(label, kind).unwrap(), s);
        }
        assert!(RenderState::from_label_kind("Partial", "").is_err());
    }

    #[test]
    fn predicted_labels_are_binary() {
        // The prediction path returns RenderLabel, which cannot express a
        // partial sub-kind; this is the type-level invariant.
        let l: RenderLabel = RenderState::Loading.label();
        assert_eq!(l, RenderLabel::Partial);
    }

    #[test]
    fn predict_decision_boundary_prefers_fully_rendered() {
        let conf = DECISION_THRESHOLD;
        let label = if conf >= DECISION_THRESHOLD {
            RenderLabel::FullyRendered
        } else {
            RenderLabel::Partial
        };
        assert_eq!(label, RenderLabel::FullyRendered);
    }
}
