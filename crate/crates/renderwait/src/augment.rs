//! Synthesis of partially-rendered frames from fully-rendered ones.
//!
//! Three transforms: `stitch` imitates a mid-slide capture by hard column
//! concatenation, `blend` imitates a cross-fade by per-pixel weighted
//! averaging, and `inject_loading` dims the frame and rasterizes a spinner.
//! Every transform is a pure function; [`AugmentSpec`] adds a seed-driven
//! parameter draw on top so equal seeds give bit-identical frames on any
//! platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Frame;

/// Background darkening at full shadow intensity keeps 40% of the original
/// level, so text stays legible under the dimmed overlay.
pub const MAX_SHADOW_DARKENING: f64 = 0.6;

/// Seed-driven draws for stitch crop and blend opacity avoid the endpoints,
/// which would reproduce a fully-rendered frame under a partial label.
const TRANSITION_RANGE: (f64, f64) = (0.2, 0.8);

/// Number of radial ticks in the injected spinner.
pub const SPINNER_TICKS: usize = 12;

/// Unit directions for the 12 tick angles (30 degree steps), written out so
/// the raster never depends on platform trig.
const TICK_DIRS: [(f64, f64); SPINNER_TICKS] = [
    (1.0, 0.0),
    (0.8660254037844387, 0.5),
    (0.5, 0.8660254037844387),
    (0.0, 1.0),
    (-0.5, 0.8660254037844387),
    (-0.8660254037844387, 0.5),
    (-1.0, 0.0),
    (-0.8660254037844387, -0.5),
    (-0.5, -0.8660254037844387),
    (0.0, -1.0),
    (0.5, -0.8660254037844387),
    (0.8660254037844387, -0.5),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Stitch,
    Blend,
    LoadingInject,
}

/// One augmentation instance: a transform kind plus the seed that fixes all
/// of its randomized parameters.
#[derive(Debug, Clone, Copy)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub seed: u64,
}

/// Spinner placement for loading injection.
#[derive(Debug, Clone, Copy)]
pub struct LoadingSpec {
    pub center_x: u32,
    pub center_y: u32,
    pub radius: u32,
    /// In [0, 1]; scales the background darkening.
    pub shadow_intensity: f64,
    /// Rotation phase in whole ticks.
    pub phase: usize,
}

/// Columns `[0, k)` come from `a`, the rest from `b`, with
/// `k = round(crop_fraction * width)`.
pub fn stitch(a: &Frame, b: &Frame, crop_fraction: f64) -> Result<Frame> {
    if !a.same_dimensions(b) {
        return Err(Error::invalid("stitch inputs must share dimensions"));
    }
    if !(crop_fraction > 0.0 && crop_fraction < 1.0) {
        return Err(Error::invalid("stitch crop fraction must lie in (0, 1)"));
    }
    let k = (crop_fraction * a.width() as f64).round() as u32;
    let mut out = a.clone();
    for y in 0..a.height() {
        for x in k..a.width() {
            for c in 0..a.channels() {
                out.put(x, y, c, b.get(x, y, c));
            }
        }
    }
    Ok(out)
}

/// Per-pixel `round(alpha * a + (1 - alpha) * b)`.
pub fn blend(a: &Frame, b: &Frame, alpha: f64) -> Result<Frame> {
    if !a.same_dimensions(b) {
        return Err(Error::invalid("blend inputs must share dimensions"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("blend alpha must lie in [0, 1]"));
    }
    let mut out = a.clone();
    for (o, (&pa, &pb)) in out
        .pixels_mut()
        .iter_mut()
        .zip(a.pixels().iter().zip(b.pixels().iter()))
    {
        *o = (alpha * pa as f64 + (1.0 - alpha) * pb as f64).round() as u8;
    }
    Ok(out)
}

/// Darken the whole frame by `1 - shadow_intensity * 0.6`, then rasterize an
/// arc-style spinner of 12 graded radial ticks at the given center.
pub fn inject_loading(a: &Frame, spec: &LoadingSpec) -> Result<Frame> {
    if !(0.0..=1.0).contains(&spec.shadow_intensity) {
        return Err(Error::invalid("shadow intensity must lie in [0, 1]"));
    }
    if spec.radius == 0 {
        return Err(Error::invalid("spinner radius must be positive"));
    }
    let margin = spec.radius + spinner_thickness(spec.radius);
    let fits = spec.center_x >= margin
        && spec.center_y >= margin
        && spec.center_x + margin < a.width()
        && spec.center_y + margin < a.height();
    if !fits {
        return Err(Error::invalid("spinner does not fit inside the frame"));
    }

    let factor = 1.0 - spec.shadow_intensity * MAX_SHADOW_DARKENING;
    let mut out = a.clone();
    for p in out.pixels_mut() {
        *p = (*p as f64 * factor).round() as u8;
    }
    draw_spinner(&mut out, spec.center_x, spec.center_y, spec.radius, spec.phase);
    Ok(out)
}

fn spinner_thickness(radius: u32) -> u32 {
    (radius / 6).max(1)
}

/// Rasterize the spinner ticks. The tick at the phase position is darkest and
/// the trail fades; the whole glyph rotates one tick per phase step.
pub(crate) fn draw_spinner(frame: &mut Frame, cx: u32, cy: u32, radius: u32, phase: usize) {
    let thickness = spinner_thickness(radius) as i64;
    let inner = radius as f64 * 0.55;
    let outer = radius as f64;
    let steps = (outer - inner).ceil() as usize * 2 + 1;
    for t in 0..SPINNER_TICKS {
        let (dx, dy) = TICK_DIRS[(t + phase) % SPINNER_TICKS];
        // Leading tick darkest, fading along the trail.
        let level = (60.0 + 150.0 * t as f64 / (SPINNER_TICKS - 1) as f64).round() as u8;
        for s in 0..=steps {
            let r = inner + (outer - inner) * s as f64 / steps as f64;
            let px = cx as i64 + (dx * r).round() as i64;
            let py = cy as i64 + (dy * r).round() as i64;
            for oy in -thickness / 2..=thickness / 2 {
                for ox in -thickness / 2..=thickness / 2 {
                    let (x, y) = (px + ox, py + oy);
                    if x >= 0 && y >= 0 && (x as u32) < frame.width() && (y as u32) < frame.height()
                    {
                        for c in 0..frame.channels() {
                            frame.put(x as u32, y as u32, c, level);
                        }
                    }
                }
            }
        }
    }
}

impl AugmentSpec {
    /// Ground-truth partial sub-kind this transform imitates.
    pub fn imitated_state(&self) -> crate::renderstate::RenderState {
        match self.kind {
            AugmentKind::Stitch | AugmentKind::Blend => crate::renderstate::RenderState::Transiting,
            AugmentKind::LoadingInject => crate::renderstate::RenderState::Loading,
        }
    }

    /// Apply the transform with all randomized parameters drawn from the
    /// seed. `a` is the primary source; `b` is the partner for the two-frame
    /// transforms and ignored for loading injection.
    pub fn apply(&self, a: &Frame, b: &Frame) -> Result<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            AugmentKind::Stitch => {
                let f = draw_in(&mut rng, TRANSITION_RANGE);
                stitch(a, b, f)
            }
            AugmentKind::Blend => {
                let alpha = draw_in(&mut rng, TRANSITION_RANGE);
                blend(a, b, alpha)
            }
            AugmentKind::LoadingInject => {
                let min_dim = a.width().min(a.height());
                let radius = ((min_dim as f64 * draw_in(&mut rng, (0.08, 0.15))) as u32).max(3);
                let margin = radius + spinner_thickness(radius) + 1;
                let cx = margin + (rng.random::<u64>() % (a.width() - 2 * margin) as u64) as u32;
                let cy = margin + (rng.random::<u64>() % (a.height() - 2 * margin) as u64) as u32;
                let spec = LoadingSpec {
                    center_x: cx,
                    center_y: cy,
                    radius,
                    shadow_intensity: draw_in(&mut rng, (0.3, 1.0)),
                    phase: (rng.random::<u64>() % SPINNER_TICKS as u64) as usize,
                };
                inject_loading(a, &spec)
            }
        }
    }
}

fn draw_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patterned(seed: u64, w: u32, h: u32) -> Frame {
        Frame::from_fn(w, h, 0, |x, y| {
            (x.wrapping_mul(31) ^ y.wrapping_mul(17) ^ seed as u32) as u8
        })
    }

    #[test]
    fn self_stitch_is_identity() {
        let a = patterned(1, 20, 12);
        for f in [0.2, 0.5, 0.77] {
            assert_eq!(stitch(&a, &a, f).unwrap(), a);
        }
    }

    #[test]
    fn stitch_near_one_copies_a_entirely() {
        let a = patterned(1, 10, 8);
        let b = patterned(2, 10, 8);
        // k = round(0.96 * 10) = 10 = width
        assert_eq!(stitch(&a, &b, 0.96).unwrap().pixels(), a.pixels());
    }

    #[test]
    fn stitch_seam_columns_are_exact() {
        let a = patterned(3, 16, 10);
        let b = patterned(4, 16, 10);
        let f = 0.5f64;
        let k = (f * 16.0).round() as u32;
        let out = stitch(&a, &b, f).unwrap();
        for y in 0..10 {
            assert_eq!(out.get(k - 1, y, 0), a.get(k - 1, y, 0));
            assert_eq!(out.get(k, y, 0), b.get(k, y, 0));
        }
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let a = patterned(5, 12, 12);
        let b = patterned(6, 12, 12);
        assert_eq!(blend(&a, &b, 1.0).unwrap().pixels(), a.pixels());
        assert_eq!(blend(&a, &b, 0.0).unwrap().pixels(), b.pixels());
    }

    #[test]
    fn blend_midpoint_of_constants() {
        let a = Frame::filled(8, 8, 100, 0);
        let b = Frame::filled(8, 8, 200, 0);
        let out = blend(&a, &b, 0.5).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 150));
    }

    #[test]
    fn blend_rejects_bad_alpha_and_dims() {
        let a = Frame::filled(8, 8, 0, 0);
        let b = Frame::filled(8, 9, 0, 0);
        assert!(blend(&a, &b, 0.5).is_err());
        assert!(blend(&a, &a, 1.1).is_err());
        assert!(blend(&a, &a, -0.1).is_err());
    }

    #[test]
    fn zero_shadow_touches_only_spinner_ticks() {
        let a = Frame::filled(64, 64, 200, 0);
        let spec = LoadingSpec {
            center_x: 32,
            center_y: 32,
            radius: 12,
            shadow_intensity: 0.0,
            phase: 0,
        };
        let out = inject_loading(&a, &spec).unwrap();
        let changed: Vec<usize> = out
            .pixels()
            .iter()
            .zip(a.pixels())
            .enumerate()
            .filter(|(_, (o, i))| o != i)
            .map(|(idx, _)| idx)
            .collect();
        assert!(!changed.is_empty(), "spinner must draw something");
        // Every changed pixel lies within the spinner bounding box.
        for idx in changed {
            let x = (idx % 64) as i64;
            let y = (idx / 64) as i64;
            assert!((x - 32).abs() <= 15 && (y - 32).abs() <= 15, "({x},{y})");
        }
    }

    #[test]
    fn full_shadow_scales_background_by_point_four() {
        let a = Frame::filled(64, 64, 201, 0);
        let spec = LoadingSpec {
            center_x: 32,
            center_y: 32,
            radius: 10,
            shadow_intensity: 1.0,
            phase: 3,
        };
        let out = inject_loading(&a, &spec).unwrap();
        // Far corner is untouched by the spinner: round(201 * 0.4) = 80.
        assert_eq!(out.get(0, 0, 0), 80);
        assert_eq!(out.get(63, 63, 0), 80);
    }

    #[test]
    fn out_of_bounds_spinner_is_invalid() {
        let a = Frame::filled(32, 32, 0, 0);
        let spec = LoadingSpec {
            center_x: 2,
            center_y: 16,
            radius: 10,
            shadow_intensity: 0.5,
            phase: 0,
        };
        assert!(inject_loading(&a, &spec).is_err());
    }

    #[test]
    fn specs_are_deterministic_and_preserve_dimensions() {
        let a = patterned(9, 48, 80);
        let b = patterned(10, 48, 80);
        for kind in [AugmentKind::Stitch, AugmentKind::Blend, AugmentKind::LoadingInject] {
            let spec = AugmentSpec { kind, seed: 42 };
            let first = spec.apply(&a, &b).unwrap();
            let second = spec.apply(&a, &b).unwrap();
            assert_eq!(first, second);
            assert!(first.same_dimensions(&a));
            assert!(
                spec.imitated_state() != crate::renderstate::RenderState::FullyRendered,
                "augmented frames are partial by contract"
            );
        }
    }
}
