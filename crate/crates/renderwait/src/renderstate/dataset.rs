//! Dataset assembly: labeled screencast ingestion, per-state-group
//! deduplication, augmentation up to the partial:full target ratio, and the
//! stratified train/val/test split with a content-hash leakage guard.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RenderState;
use crate::augment::{AugmentKind, AugmentSpec};
use crate::error::{Error, Result};
use crate::imaging::{read_frame, write_frame, Frame};
use crate::sampling::{hac_sample_indices, SamplerConfig};

pub const DEFAULT_AUGMENT_RATIO: f64 = 1.38;
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Binary dataset / prediction label; positives are fully rendered GUIs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenderLabel {
    FullyRendered,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Captured,
    Stitched,
    Blended,
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Frame file path, relative to the dataset root.
    pub path: String,
    pub label: RenderLabel,
    pub origin: Origin,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

// ---------------------------------------------------------------------------
// Ground-truth labels files: one `timestamp_ms,label,kind` line per frame.
// ---------------------------------------------------------------------------

pub const LABELS_FILE: &str = "labels.csv";

pub fn write_labels(path: &Path, rows: &[(u64, RenderState)]) -> Result<()> {
    let mut out = String::new();
    for (ts, state) in rows {
        let (label, kind) = state.as_label_kind();
        out.push_str(&format!("{ts},{label},{kind}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<(u64, RenderState)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let ts: u64 = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::format(format!("bad timestamp on labels line {}", i + 1)))?;
        let label = parts
            .next()
            .ok_or_else(|| Error::format(format!("missing label on labels line {}", i + 1)))?;
        let kind = parts.next().unwrap_or("");
        rows.push((ts, RenderState::from_label_kind(label, kind)?));
    }
    Ok(rows)
}

/// Read a screencast directory: `frame_*.pgm`/`.ppm` rasters plus the
/// ground-truth labels file, matched by capture timestamp.
pub fn read_labeled_screencast(dir: &Path) -> Result<Vec<(Frame, RenderState)>> {
    let labels = read_labels(&dir.join(LABELS_FILE))?;
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("frame_") && (n.ends_with(".pgm") || n.ends_with(".ppm")))
        .collect();
    names.sort();
    if names.len() != labels.len() {
        return Err(Error::format(format!(
            "{} frames but {} label lines in {}",
            names.len(),
            labels.len(),
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(names.len());
    let mut last_ts = 0u64;
    for (name, (ts, state)) in names.iter().zip(labels) {
        let frame = read_frame(&dir.join(name))?;
        if frame.timestamp_ms() != ts {
            return Err(Error::format(format!(
                "frame {name} timestamp does not match labels line {ts}"
            )));
        }
        if frame.timestamp_ms() < last_ts {
            return Err(Error::format("screencast timestamps went backwards"));
        }
        last_ts = frame.timestamp_ms();
        out.push((frame, state));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// build_dataset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub epsilon: f64,
    pub ratio: f64,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            epsilon: crate::sampling::DEFAULT_EPSILON,
            ratio: DEFAULT_AUGMENT_RATIO,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Run the data pipeline over labeled screencast directories: deduplicate
/// each GUI-state group, synthesize partial frames until the partial:full
/// ratio is met, split 8:1:1 stratified by label, and write everything under
/// `out_dir` with a manifest at `out_dir/manifest.json`.
pub fn build_dataset(
    screencasts: &[PathBuf],
    out_dir: &Path,
    opts: &DatasetOptions,
) -> Result<DatasetManifest> {
    if screencasts.is_empty() {
        return Err(Error::invalid("no screencast directories given"));
    }
    let mut sampler = opts.sampler.clone();
    sampler.epsilon = opts.epsilon;
    if !(sampler.epsilon > 0.0 && sampler.epsilon <= 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1]"));
    }
    if opts.ratio <= 0.0 {
        return Err(Error::invalid("augment ratio must be positive"));
    }

    let mut groups: BTreeMap<RenderState, Vec<Frame>> = BTreeMap::new();
    for dir in screencasts {
        for (frame, state) in read_labeled_screencast(dir)? {
            groups.entry(state).or_default().push(frame);
        }
    }

    fs::create_dir_all(out_dir.join("captured"))?;
    fs::create_dir_all(out_dir.join("augmented"))?;

    let mut entries: Vec<(ManifestEntry, u64)> = Vec::new(); // entry + content hash
    let mut full_pool: Vec<Frame> = Vec::new();
    let mut partial_count = 0usize;

    for (state, frames) in &groups {
        let kept = hac_sample_indices(frames, &sampler)?;
        log::info!(
            "sampled {} of {} {:?} frames",
            kept.len(),
            frames.len(),
            state
        );
        for (seq, &idx) in kept.iter().enumerate() {
            let frame = &frames[idx];
            let rel = format!("captured/{}_{seq:05}.pgm", state.slug());
            write_frame(frame, &out_dir.join(&rel))?;
            entries.push((
                ManifestEntry {
                    path: rel,
                    label: state.label(),
                    origin: Origin::Captured,
                    split: Split::Train, // assigned below
                },
                frame.content_hash(),
            ));
            match state.label() {
                RenderLabel::FullyRendered => full_pool.push(frame.clone()),
                RenderLabel::Partial => partial_count += 1,
            }
        }
    }
    if full_pool.is_empty() {
        return Err(Error::invalid("screencasts contain no fully rendered frames"));
    }

    // Augment until partial:full reaches the target ratio.
    let target_partial = (opts.ratio * full_pool.len() as f64).round() as usize;
    let needed = target_partial.saturating_sub(partial_count);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xa5a5_5a5a_0f0f_f0f0);
    for k in 0..needed {
        let kind = if full_pool.len() < 2 {
            AugmentKind::LoadingInject
        } else {
            match rng.random_range(0..3u32) {
                0 => AugmentKind::Stitch,
                1 => AugmentKind::Blend,
                _ => AugmentKind::LoadingInject,
            }
        };
        let a = rng.random_range(0..full_pool.len());
        let b = if full_pool.len() < 2 {
            a
        } else {
            // Distinct partner so two-frame transforms never degenerate into
            // a fully rendered copy.
            let mut b = rng.random_range(0..full_pool.len() - 1);
            if b >= a {
                b += 1;
            }
            b
        };
        let spec = AugmentSpec {
            kind,
            seed: rng.random::<u64>(),
        };
        let frame = spec.apply(&full_pool[a], &full_pool[b])?;
        let (slug, origin) = match kind {
            AugmentKind::Stitch => ("stitch", Origin::Stitched),
            AugmentKind::Blend => ("blend", Origin::Blended),
            AugmentKind::LoadingInject => ("inject", Origin::Injected),
        };
        let rel = format!("augmented/{slug}_{k:05}.pgm");
        write_frame(&frame, &out_dir.join(&rel))?;
        entries.push((
            ManifestEntry {
                path: rel,
                label: RenderLabel::Partial,
                origin,
                split: Split::Train,
            },
            frame.content_hash(),
        ));
    }

    assign_splits(&mut entries, opts.seed);

    let manifest = DatasetManifest {
        seed: opts.seed,
        ratios: DEFAULT_SPLIT_RATIOS,
        entries: entries.into_iter().map(|(e, _)| e).collect(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Stratified 8:1:1 split. The unit of assignment is a content hash, not an
/// entry, so byte-identical frames can never straddle the test boundary.
/// Rounding: val and test get floor(0.1 n) entries each, train the rest.
fn assign_splits(entries: &mut [(ManifestEntry, u64)], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_1e55_0000_cafe);
    for label in [RenderLabel::FullyRendered, RenderLabel::Partial] {
        let idxs: Vec<usize> = entries
            .iter()
            .enumerate()
            .filter(|(_, (e, _))| e.label == label)
            .map(|(i, _)| i)
            .collect();
        let n = idxs.len();
        if n == 0 {
            continue;
        }
        let mut by_hash: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for &i in &idxs {
            by_hash.entry(entries[i].1).or_default().push(i);
        }
        let mut hash_groups: Vec<Vec<usize>> = by_hash.into_values().collect();
        hash_groups.shuffle(&mut rng);

        let val_target = (n as f64 * DEFAULT_SPLIT_RATIOS[1]).floor() as usize;
        let test_target = (n as f64 * DEFAULT_SPLIT_RATIOS[2]).floor() as usize;
        let (mut val_n, mut test_n) = (0usize, 0usize);
        for group in hash_groups {
            let split = if test_n < test_target {
                test_n += group.len();
                Split::Test
            } else if val_n < val_target {
                val_n += group.len();
                Split::Val
            } else {
                Split::Train
            };
            for i in group {
                entries[i].0.split = split;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LABELS_FILE);
        let rows = vec![
            (0, RenderState::FullyRendered),
            (100, RenderState::Transiting),
            (250, RenderState::Loading),
        ];
        write_labels(&path, &rows).unwrap();
        assert_eq!(read_labels(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "0,FullyRendered,\n100,Partial,Transiting\n250,Partial,Loading\n"
        );
    }

    fn write_screencast(dir: &Path, frames: &[(Frame, RenderState)]) {
        fs::create_dir_all(dir).unwrap();
        let rows: Vec<(u64, RenderState)> = frames
            .iter()
            .map(|(f, s)| (f.timestamp_ms(), *s))
            .collect();
        write_labels(&dir.join(LABELS_FILE), &rows).unwrap();
        for (f, _) in frames {
            write_frame(f, &dir.join(crate::imaging::frame_filename(f))).unwrap();
        }
    }

    fn textured(seed: u64, ts: u64) -> Frame {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        Frame::from_fn(24, 40, ts, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 24) as u8
        })
    }

    #[test]
    fn identical_captures_collapse_to_one_entry_plus_augmented_partials() {
        let tmp = tempfile::tempdir().unwrap();
        let cast = tmp.path().join("cast0");
        let base = textured(1, 0);
        let frames: Vec<(Frame, RenderState)> = (0..100)
            .map(|i| {
                let mut f = base.clone();
                f.set_timestamp_ms(i * 50);
                (f, RenderState::FullyRendered)
            })
            .collect();
        write_screencast(&cast, &frames);

        let out = tmp.path().join("dataset");
        let opts = DatasetOptions {
            sampler: SamplerConfig {
                working_size: None,
                ..SamplerConfig::default()
            },
            ..DatasetOptions::default()
        };
        let manifest = build_dataset(&[cast], &out, &opts).unwrap();

        let captured: Vec<_> = manifest
            .entries
            .iter()
            .filter(|e| e.origin == Origin::Captured)
            .collect();
        assert_eq!(captured.len(), 1);
        assert_eq!(captured[0].label, RenderLabel::FullyRendered);
        let partials = manifest
            .entries
            .iter()
            .filter(|e| e.label == RenderLabel::Partial)
            .count();
        assert!(partials >= 1, "augmented partials expected");
        // Single-source augmentation can only inject loading overlays.
        assert!(manifest
            .entries
            .iter()
            .filter(|e| e.label == RenderLabel::Partial)
            .all(|e| e.origin == Origin::Injected));
    }

    #[test]
    fn split_counts_follow_the_rounding_rule() {
        let mut entries: Vec<(ManifestEntry, u64)> = (0..1000u64)
            .map(|i| {
                (
                    ManifestEntry {
                        path: format!("{i}.pgm"),
                        label: RenderLabel::FullyRendered,
                        origin: Origin::Captured,
                        split: Split::Train,
                    },
                    i, // unique hashes
                )
            })
            .collect();
        assign_splits(&mut entries, 7);
        let count = |s: Split| entries.iter().filter(|(e, _)| e.split == s).count();
        assert_eq!(count(Split::Test), 100);
        assert_eq!(count(Split::Val), 100);
        assert_eq!(count(Split::Train), 800);
    }

    #[test]
    fn duplicate_content_never_straddles_test() {
        let mut entries: Vec<(ManifestEntry, u64)> = (0..200u64)
            .map(|i| {
                (
                    ManifestEntry {
                        path: format!("{i}.pgm"),
                        label: RenderLabel::Partial,
                        origin: Origin::Injected,
                        split: Split::Train,
                    },
                    i / 2, // every hash appears twice
                )
            })
            .collect();
        assign_splits(&mut entries, 3);
        let mut by_hash: BTreeMap<u64, Vec<Split>> = BTreeMap::new();
        for (e, h) in &entries {
            by_hash.entry(*h).or_default().push(e.split);
        }
        for (h, splits) in by_hash {
            assert!(
                splits.windows(2).all(|w| w[0] == w[1]),
                "hash {h} split across {splits:?}"
            );
        }
    }
}
