//! Checkpoint serialization.
//!
//! Layout: `RWNN` magic, format version (u32 LE), manifest length (u32 LE),
//! UTF-8 JSON manifest (topology, hyperparameters, parameter shapes), raw
//! little-endian f32 parameter blobs in manifest order, then BN running
//! statistics (mean then variance per layer). Round trips are bit-exact.

use serde::{Deserialize, Serialize};

use super::model::{Classifier, ClassifierConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RWNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ClassifierConfig,
    bn_momentum: f32,
    bn_eps: f32,
    params: Vec<ParamEntry>,
    bn_stats: Vec<BnEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct BnEntry {
    name: String,
    channels: usize,
}

pub fn save_checkpoint(model: &Classifier) -> Vec<u8> {
    let mut params = Vec::new();
    let mut blobs: Vec<f32> = Vec::new();
    model.visit_params(&mut |name, p| {
        params.push(ParamEntry {
            name,
            shape: p.value.shape().to_vec(),
        });
        blobs.extend_from_slice(p.value.data());
    });
    let mut bn_stats = Vec::new();
    let mut stats: Vec<f32> = Vec::new();
    model.visit_bn(&mut |name, bn| {
        bn_stats.push(BnEntry {
            name,
            channels: bn.channels(),
        });
        stats.extend_from_slice(&bn.running_mean);
        stats.extend_from_slice(&bn.running_var);
    });

    let manifest = Manifest {
        config: model.config().clone(),
        bn_momentum: model.bn_momentum(),
        bn_eps: model.bn_eps(),
        params,
        bn_stats,
    };
    let manifest_bytes = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut out = Vec::with_capacity(12 + manifest_bytes.len() + 4 * (blobs.len() + stats.len()));
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    for v in blobs.iter().chain(stats.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Classifier> {
    if bytes.len() < 12 {
        return Err(Error::format("checkpoint shorter than its header"));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + manifest_len {
        return Err(Error::format("truncated checkpoint manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..12 + manifest_len])
        .map_err(|e| Error::format(format!("bad checkpoint manifest: {e}")))?;

    let mut model = Classifier::new(manifest.config.clone(), 0)?;

    let mut cursor = 12 + manifest_len;
    let read_f32s = |count: usize, cursor: &mut usize| -> Result<Vec<f32>> {
        let need = count * 4;
        if bytes.len() < *cursor + need {
            return Err(Error::format("truncated checkpoint blob"));
        }
        let out = bytes[*cursor..*cursor + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *cursor += need;
        Ok(out)
    };

    let mut entries = manifest.params.iter();
    let mut fill_err = None;
    model.visit_params_mut(&mut |name, p| {
        if fill_err.is_some() {
            return;
        }
        let entry = match entries.next() {
            Some(e) => e,
            None => {
                fill_err = Some(Error::format("manifest lists too few parameters"));
                return;
            }
        };
        if entry.name != name || entry.shape != p.value.shape() {
            fill_err = Some(Error::format(format!(
                "parameter {name} does not match manifest entry {}",
                entry.name
            )));
            return;
        }
        match read_f32s(p.value.numel(), &mut cursor) {
            Ok(vals) => p.value.data_mut().copy_from_slice(&vals),
            Err(e) => fill_err = Some(e),
        }
    });
    if let Some(e) = fill_err {
        return Err(e);
    }
    if entries.next().is_some() {
        return Err(Error::format("manifest lists too many parameters"));
    }

    let mut bn_entries = manifest.bn_stats.iter();
    let mut bn_err = None;
    model.visit_bn_mut(&mut |name, bn| {
        if bn_err.is_some() {
            return;
        }
        let entry = match bn_entries.next() {
            Some(e) => e,
            None => {
                bn_err = Some(Error::format("manifest lists too few bn layers"));
                return;
            }
        };
        if entry.name != name || entry.channels != bn.channels() {
            bn_err = Some(Error::format(format!("bn layer {name} mismatch")));
            return;
        }
        bn.momentum = manifest.bn_momentum;
        bn.eps = manifest.bn_eps;
        match read_f32s(bn.channels(), &mut cursor) {
            Ok(mean) => bn.running_mean.copy_from_slice(&mean),
            Err(e) => {
                bn_err = Some(e);
                return;
            }
        }
        match read_f32s(bn.channels(), &mut cursor) {
            Ok(var) => bn.running_var.copy_from_slice(&var),
            Err(e) => bn_err = Some(e),
        }
    });
    if let Some(e) = bn_err {
        return Err(e);
    }
    if cursor != bytes.len() {
        return Err(Error::format("trailing bytes after checkpoint payload"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn small_model(seed: u64) -> Classifier {
        let cfg = ClassifierConfig::default().with_input(16, 24);
        Classifier::new(cfg, seed).unwrap()
    }

    #[test]
    fn save_load_save_is_identical() {
        let model = small_model(3);
        let bytes = save_checkpoint(&model);
        let reloaded = load_checkpoint(&bytes).unwrap();
        let bytes2 = save_checkpoint(&reloaded);
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let mut model = small_model(11);
        let x = Tensor::from_vec(
            &[1, 1, 24, 16],
            (0..24 * 16).map(|v| (v % 13) as f32 / 13.0).collect(),
        )
        .unwrap();
        let before = model.forward(&x, false).unwrap();
        let mut reloaded = load_checkpoint(&save_checkpoint(&model)).unwrap();
        let after = reloaded.forward(&x, false).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let mut bytes = save_checkpoint(&small_model(0));
        bytes[0] = b'X';
        assert!(matches!(load_checkpoint(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_a_format_error() {
        let bytes = save_checkpoint(&small_model(0));
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(load_checkpoint(cut), Err(Error::Format(_))));
        let padded: Vec<u8> = bytes.iter().copied().chain([0u8]).collect();
        assert!(matches!(load_checkpoint(&padded), Err(Error::Format(_))));
    }
}
