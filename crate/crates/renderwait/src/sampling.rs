//! Screencast frame deduplication via agglomerative clustering under SSIM.
//!
//! Every frame starts as a singleton cluster. Each round picks the most
//! similar cluster pair (similarity = SSIM of the cluster medoids). A pair at
//! or above the threshold is a duplicate find: the second cluster is
//! discarded and the first cluster's medoid is emitted as a sampled
//! representative (at most once per frame). A pair below the threshold is
//! merged and put back. The loop ends with a single cluster whose medoid is
//! also emitted, so even an all-distinct screencast yields one
//! representative.

use crate::error::{Error, Result};
use crate::imaging::{
    resize_bilinear, ssim, to_luminance, Frame, FramePrep, GaussianKernel, SsimParams,
};

/// Default working resolution for sampling-time SSIM (width, height).
/// A quarter of the classifier's full-scale input keeps the pairwise table
/// affordable; the 0.9 threshold is interpreted at this resolution.
pub const DEFAULT_SSIM_SIZE: (u32, u32) = (112, 192);

/// Default agglomerative similarity threshold.
pub const DEFAULT_EPSILON: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Similarity threshold in (0, 1]; pairs scoring at or above it collapse.
    pub epsilon: f64,
    pub ssim: SsimParams,
    /// Frames are converted to luminance and resized to this (width, height)
    /// before any SSIM evaluation; `None` keeps the native resolution.
    pub working_size: Option<(u32, u32)>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            epsilon: DEFAULT_EPSILON,
            ssim: SsimParams::default(),
            working_size: Some(DEFAULT_SSIM_SIZE),
        }
    }
}

impl SamplerConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SamplerConfig {
            epsilon,
            ..SamplerConfig::default()
        }
    }
}

/// A cluster of frame indices plus its representative member: the member
/// maximizing the row mean of the intra-cluster SSIM matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub medoid: usize,
}

impl Cluster {
    fn singleton(index: usize) -> Cluster {
        Cluster {
            members: vec![index],
            medoid: index,
        }
    }
}

/// Symmetric table of pairwise frame SSIM scores with a unit diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityTable {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Convert a frame to the sampler's working representation.
fn working_frame(frame: &Frame, config: &SamplerConfig) -> Result<Frame> {
    let lum = to_luminance(frame);
    match config.working_size {
        Some((w, h)) if (w, h) != (lum.width(), lum.height()) => resize_bilinear(&lum, w, h),
        _ => Ok(lum),
    }
}

/// Pairwise SSIM over all frames at the working resolution.
///
/// Per-frame filtered statistics are computed in blocks and reused across
/// pairings; every entry is bit-identical to an independent [`ssim`] call on
/// the same working frames.
pub fn pairwise_similarity_table(
    frames: &[Frame],
    config: &SamplerConfig,
) -> Result<SimilarityTable> {
    let n = frames.len();
    let working: Vec<Frame> = frames
        .iter()
        .map(|f| working_frame(f, config))
        .collect::<Result<_>>()?;
    let (w, h) = (working[0].width() as usize, working[0].height() as usize);
    if w < config.ssim.window || h < config.ssim.window {
        return Err(Error::invalid(format!(
            "working frames {w}x{h} are smaller than the ssim window"
        )));
    }

    let kernel = GaussianKernel::from_params(&config.ssim);
    let mut values = vec![0.0f64; n * n];
    for v in (0..n).map(|i| i * n + i) {
        values[v] = 1.0;
    }

    // Blocked so only two blocks of per-frame statistics are alive at once.
    const BLOCK: usize = 256;
    let blocks: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(BLOCK)
        .map(|s| s..(s + BLOCK).min(n))
        .collect();
    let prep_block = |range: &std::ops::Range<usize>| -> Vec<FramePrep> {
        range
            .clone()
            .map(|i| FramePrep::compute(working[i].pixels(), w, h, &kernel))
            .collect()
    };

    for (bi, ri) in blocks.iter().enumerate() {
        let prep_i = prep_block(ri);
        for rj in blocks.iter().skip(bi) {
            let prep_j = if rj == ri { None } else { Some(prep_block(rj)) };
            for i in ri.clone() {
                for j in rj.clone() {
                    if j <= i {
                        continue;
                    }
                    let pi = &prep_i[i - ri.start];
                    let pj = match &prep_j {
                        Some(p) => &p[j - rj.start],
                        None => &prep_i[j - ri.start],
                    };
                    let s = crate::imaging::ssim_prepared(
                        pi,
                        pj,
                        working[i].pixels(),
                        working[j].pixels(),
                        w,
                        h,
                        &kernel,
                        &config.ssim,
                    );
                    values[i * n + j] = s;
                    values[j * n + i] = s;
                }
            }
        }
    }

    Ok(SimilarityTable { n, values })
}

/// Medoid of a member list: the member with the largest row sum over the
/// intra-cluster SSIM matrix (self term included), ties to the smallest
/// frame index. Sums run in member-list order so cached and naive
/// evaluations agree bit for bit.
pub fn medoid_of(members: &[usize], table: &SimilarityTable) -> usize {
    let mut best = members[0];
    let mut best_sum = f64::NEG_INFINITY;
    for &m in members {
        let mut sum = 0.0f64;
        for &x in members {
            sum += table.get(m, x);
        }
        if sum > best_sum || (sum == best_sum && m < best) {
            best_sum = sum;
            best = m;
        }
    }
    best
}

/// SSIM between two clusters: the SSIM of their medoid frames.
pub fn cluster_similarity(
    a: &Cluster,
    b: &Cluster,
    frames: &[Frame],
    config: &SamplerConfig,
) -> Result<f64> {
    let fa = working_frame(&frames[a.medoid], config)?;
    let fb = working_frame(&frames[b.medoid], config)?;
    ssim(&fa, &fb, &config.ssim)
}

/// Deduplicate `frames`, returning the indices of sampled representatives in
/// emission order.
pub fn hac_sample_indices(frames: &[Frame], config: &SamplerConfig) -> Result<Vec<usize>> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot sample an empty frame list"));
    }
    if !(config.epsilon > 0.0 && config.epsilon <= 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, 1], got {}",
            config.epsilon
        )));
    }
    if let Some(first) = frames.first() {
        if frames.iter().any(|f| !f.same_dimensions(first)) {
            return Err(Error::invalid("all frames must share dimensions"));
        }
    }

    let n = frames.len();
    let mut sampled: Vec<usize> = Vec::new();
    let mut emitted = vec![false; n];
    let mut emit = |idx: usize, sampled: &mut Vec<usize>| {
        if !emitted[idx] {
            emitted[idx] = true;
            sampled.push(idx);
        }
    };

    if n == 1 {
        emit(0, &mut sampled);
        return Ok(sampled);
    }

    let table = pairwise_similarity_table(frames, config)?;
    let mut clusters: Vec<Cluster> = (0..n).map(Cluster::singleton).collect();

    while clusters.len() > 1 {
        // Most similar pair, ties to the lexicographically smallest (i, j).
        let (mut bi, mut bj, mut best) = (0, 1, f64::NEG_INFINITY);
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let s = table.get(clusters[i].medoid, clusters[j].medoid);
                if s > best {
                    best = s;
                    bi = i;
                    bj = j;
                }
            }
        }

        if best >= config.epsilon {
            // Duplicate pair: sample the first cluster's medoid, drop the
            // second cluster entirely; the first survives for further rounds.
            emit(clusters[bi].medoid, &mut sampled);
            clusters.remove(bj);
        } else {
            let mut merged = clusters[bi].members.clone();
            merged.extend_from_slice(&clusters[bj].members);
            let medoid = medoid_of(&merged, &table);
            clusters.remove(bj);
            clusters.remove(bi);
            clusters.push(Cluster {
                members: merged,
                medoid,
            });
        }

        #[cfg(debug_assertions)]
        {
            let mut seen = vec![false; n];
            for c in &clusters {
                assert!(c.members.contains(&c.medoid));
                for &m in &c.members {
                    assert!(!seen[m], "frame {m} appears in two clusters");
                    seen[m] = true;
                }
            }
        }
    }

    // The loop always ends with exactly one cluster; its medoid represents
    // whatever never hit a duplicate pair.
    emit(clusters[0].medoid, &mut sampled);
    Ok(sampled)
}

/// Deduplicate `frames`, returning clones of the sampled representatives.
pub fn hac_sample(frames: &[Frame], config: &SamplerConfig) -> Result<Vec<Frame>> {
    Ok(hac_sample_indices(frames, config)?
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SamplerConfig {
        SamplerConfig {
            epsilon: 0.9,
            ssim: SsimParams::default(),
            working_size: None,
        }
    }

    fn noise(seed: u64, w: u32, h: u32) -> Frame {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        Frame::from_fn(w, h, 0, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 24) as u8
        })
    }

    #[test]
    fn single_frame_is_its_own_sample() {
        let frames = vec![noise(1, 16, 16)];
        let s = hac_sample_indices(&frames, &small_config()).unwrap();
        assert_eq!(s, vec![0]);
    }

    #[test]
    fn three_identical_frames_collapse_to_one() {
        let f = noise(2, 16, 16);
        let frames = vec![f.clone(), f.clone(), f];
        let s = hac_sample_indices(&frames, &small_config()).unwrap();
        assert_eq!(s, vec![0]);
    }

    #[test]
    fn all_distinct_frames_collapse_to_final_medoid() {
        let frames: Vec<Frame> = (0..4).map(|i| noise(100 + i, 16, 16)).collect();
        let s = hac_sample_indices(&frames, &small_config()).unwrap();
        assert_eq!(s.len(), 1, "pure merging must leave a single medoid");
    }

    #[test]
    fn two_duplicate_groups_keep_one_representative_each() {
        let a = noise(7, 16, 16);
        let b = noise(8, 16, 16);
        let frames = vec![a.clone(), b.clone(), a, b];
        let s = hac_sample_indices(&frames, &small_config()).unwrap();
        assert_eq!(s, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(hac_sample_indices(&[], &small_config()).is_err());
        let frames = vec![noise(1, 16, 16), noise(2, 16, 12)];
        assert!(hac_sample_indices(&frames, &small_config()).is_err());
        let mut cfg = small_config();
        cfg.epsilon = 1.5;
        assert!(hac_sample_indices(&[noise(1, 16, 16)], &cfg).is_err());
        cfg.epsilon = 0.0;
        assert!(hac_sample_indices(&[noise(1, 16, 16)], &cfg).is_err());
    }

    #[test]
    fn singleton_cluster_similarity_is_plain_ssim() {
        let frames = vec![noise(3, 16, 16), noise(4, 16, 16)];
        let cfg = small_config();
        let ca = Cluster {
            members: vec![0],
            medoid: 0,
        };
        let cb = Cluster {
            members: vec![1],
            medoid: 1,
        };
        let sim = cluster_similarity(&ca, &cb, &frames, &cfg).unwrap();
        let direct = ssim(&frames[0], &frames[1], &cfg.ssim).unwrap();
        assert_eq!(sim.to_bits(), direct.to_bits());
    }

    #[test]
    fn duplicate_pair_cluster_similarity_is_one() {
        let f = noise(5, 16, 16);
        let frames = vec![f.clone(), f.clone(), f];
        let cfg = small_config();
        let pair = Cluster {
            members: vec![0, 1],
            medoid: 0,
        };
        let single = Cluster {
            members: vec![2],
            medoid: 2,
        };
        let sim = cluster_similarity(&pair, &single, &frames, &cfg).unwrap();
        assert!((sim - 1.0).abs() < 1e-9);
    }

    #[test]
    fn medoid_matches_brute_force_row_mean() {
        let frames: Vec<Frame> = (0..3).map(|i| noise(20 + i, 16, 16)).collect();
        let cfg = small_config();
        let table = pairwise_similarity_table(&frames, &cfg).unwrap();
        let members = vec![0, 1, 2];
        let picked = medoid_of(&members, &table);

        let mut best = usize::MAX;
        let mut best_mean = f64::NEG_INFINITY;
        for &m in &members {
            let mean: f64 = members.iter().map(|&x| table.get(m, x)).sum::<f64>() / 3.0;
            if mean > best_mean {
                best_mean = mean;
                best = m;
            }
        }
        assert_eq!(picked, best);
    }

    #[test]
    fn sampling_is_deterministic() {
        let frames: Vec<Frame> = (0..6).map(|i| noise(i / 2, 16, 16)).collect();
        let a = hac_sample_indices(&frames, &small_config()).unwrap();
        let b = hac_sample_indices(&frames, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_matches_direct_ssim_and_is_symmetric() {
        let frames: Vec<Frame> = (0..5).map(|i| noise(40 + i, 16, 16)).collect();
        let cfg = small_config();
        let table = pairwise_similarity_table(&frames, &cfg).unwrap();
        for i in 0..5 {
            assert_eq!(table.get(i, i), 1.0);
            for j in 0..5 {
                assert_eq!(table.get(i, j).to_bits(), table.get(j, i).to_bits());
                if i < j {
                    let direct = ssim(&frames[i], &frames[j], &cfg.ssim).unwrap();
                    assert_eq!(table.get(i, j).to_bits(), direct.to_bits());
                }
            }
        }
    }
}
