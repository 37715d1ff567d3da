//! Scenario definitions: screens, widgets, device profiles, latency models,
//! plus seeded generators for synthetic screen corpora and replay suites.
//!
//! Widget geometry lives in a fixed reference coordinate space and is scaled
//! to each device profile's resolution at render time, which is what lets
//! one recorded script replay across resolutions.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::replay::{Action, Selector};

/// Reference coordinate space for widget rectangles (width, height).
pub const REFERENCE_WIDTH: u32 = 144;
pub const REFERENCE_HEIGHT: u32 = 288;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidgetKind {
    Button,
    Text,
    Image,
    Input,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Widget {
    pub id: String,
    pub rect: Rect,
    pub kind: WidgetKind,
    /// Base gray level of the widget body.
    pub fill: u8,
    /// Seed for the deterministic glyph-hash raster inside the widget.
    #[serde(default)]
    pub text_pattern: u64,
    /// Destination screen for tappable widgets.
    #[serde(default)]
    pub target_screen: Option<String>,
    /// Caption used by the selector text fallback.
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Transition {
    #[default]
    Instant,
    Slide {
        duration_ms: u64,
    },
    Fade {
        duration_ms: u64,
    },
}

impl Transition {
    pub fn duration_ms(&self) -> u64 {
        match self {
            Transition::Instant => 0,
            Transition::Slide { duration_ms } | Transition::Fade { duration_ms } => *duration_ms,
        }
    }
}

/// Network latency before a tapped screen's content appears; the loading
/// overlay is shown meanwhile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum LatencyModel {
    Fixed { ms: u64 },
    Uniform { lo_ms: u64, hi_ms: u64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Fixed { ms: 0 }
    }
}

impl LatencyModel {
    /// Draw an unscaled latency in milliseconds.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            LatencyModel::Fixed { ms } => ms,
            LatencyModel::Uniform { lo_ms, hi_ms } => {
                if hi_ms <= lo_ms {
                    lo_ms
                } else {
                    rng.random_range(lo_ms..=hi_ms)
                }
            }
            LatencyModel::LogNormal { mu, sigma } => {
                // Box-Muller; written out so sampling never depends on a
                // distribution crate's internals.
                let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.random();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (mu + sigma * z).exp().round().max(0.0) as u64
            }
        }
    }
}

fn default_background() -> u8 {
    240
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub id: String,
    pub widgets: Vec<Widget>,
    #[serde(default)]
    pub entry_transition: Transition,
    #[serde(default)]
    pub network_delay: LatencyModel,
    #[serde(default = "default_background")]
    pub background: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub width: u32,
    pub height: u32,
    /// Multiplies every transition and network duration; models slower
    /// rendering and processing on weaker devices.
    pub render_scale: f64,
}

impl DeviceProfile {
    fn new(name: &str, width: u32, height: u32, render_scale: f64) -> DeviceProfile {
        DeviceProfile {
            name: name.to_string(),
            width,
            height,
            render_scale,
        }
    }

    /// The recording device: reference resolution, no slowdown.
    pub fn reference() -> DeviceProfile {
        DeviceProfile::new("reference", 144, 288, 1.0)
    }

    /// Four built-in profiles spanning resolution and speed diversity.
    pub fn builtins() -> Vec<DeviceProfile> {
        vec![
            DeviceProfile::reference(),
            DeviceProfile::new("compact", 126, 252, 1.3),
            DeviceProfile::new("budget", 96, 206, 1.6),
            DeviceProfile::new("aged", 120, 240, 2.0),
        ]
    }

    pub fn by_name(name: &str) -> Option<DeviceProfile> {
        DeviceProfile::builtins().into_iter().find(|p| p.name == name)
    }
}

/// One recordable step of a usage scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioAction {
    pub selector: Selector,
    pub action: Action,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub screens: Vec<ScreenSpec>,
    pub initial_screen: String,
    /// Custom device profiles usable by name alongside the built-ins.
    #[serde(default)]
    pub profiles: Vec<DeviceProfile>,
    #[serde(default)]
    pub actions: Vec<ScenarioAction>,
    /// Marks scenarios built around heavy-tail latencies.
    #[serde(default)]
    pub stress: bool,
}

impl ScenarioSpec {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ScenarioSpec> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

// ---------------------------------------------------------------------------
// Synthetic scenario generation.
// ---------------------------------------------------------------------------

/// A linear walk over `n_screens` procedurally distinct screens; every screen
/// carries a `next` button to the following one, and the action list taps
/// through the whole chain.
pub fn generate_walk_scenario(
    name: &str,
    seed: u64,
    n_screens: usize,
    latency_pool: &[LatencyModel],
    stress: bool,
) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backgrounds: Vec<u8> = (0..12).map(|i| 176 + i * 7).collect();
    let mut screens = Vec::with_capacity(n_screens);

    for s in 0..n_screens {
        let id = format!("s{s:04}");
        let mut widgets = Vec::new();

        // Grid placement: 7 rows of 2 slots below a header band.
        let slot_w = REFERENCE_WIDTH / 2;
        let slot_h = (REFERENCE_HEIGHT - 28) / 7;
        let mut slots: Vec<(u32, u32)> = (0..7u32)
            .flat_map(|r| (0..2u32).map(move |c| (c * slot_w, 28 + r * slot_h)))
            .collect();
        // Header bar, always present, gives each screen a distinct banner.
        widgets.push(Widget {
            id: format!("{id}_title"),
            rect: Rect {
                x: 4,
                y: 4,
                w: REFERENCE_WIDTH - 8,
                h: 20,
            },
            kind: WidgetKind::Text,
            fill: 120 + (rng.random::<u64>() % 100) as u8,
            text_pattern: rng.random(),
            target_screen: None,
            text: Some(format!("title {s}")),
        });

        let widget_count = 3 + (rng.random::<u64>() % 4) as usize;
        for w in 0..widget_count {
            let slot_idx = rng.random_range(0..slots.len());
            let (sx, sy) = slots.swap_remove(slot_idx);
            let kind = match rng.random_range(0..4u32) {
                0 => WidgetKind::Button,
                1 => WidgetKind::Text,
                2 => WidgetKind::Image,
                _ => WidgetKind::Input,
            };
            widgets.push(Widget {
                id: format!("{id}_w{w}"),
                rect: Rect {
                    x: sx + 2,
                    y: sy + 2,
                    w: slot_w - 8,
                    h: slot_h - 6,
                },
                kind,
                fill: 60 + (rng.random::<u64>() % 160) as u8,
                text_pattern: rng.random(),
                target_screen: None,
                text: None,
            });
        }

        if s + 1 < n_screens {
            let (sx, sy) = slots.swap_remove(rng.random_range(0..slots.len()));
            widgets.push(Widget {
                id: format!("{id}_next"),
                rect: Rect {
                    x: sx + 2,
                    y: sy + 2,
                    w: slot_w - 8,
                    h: slot_h - 6,
                },
                kind: WidgetKind::Button,
                fill: 96,
                text_pattern: rng.random(),
                target_screen: Some(format!("s{:04}", s + 1)),
                text: Some(format!("next {s}")),
            });
        }

        let entry_transition = match rng.random_range(0..3u32) {
            0 => Transition::Instant,
            1 => Transition::Slide {
                duration_ms: rng.random_range(200..=450),
            },
            _ => Transition::Fade {
                duration_ms: rng.random_range(200..=450),
            },
        };
        let network_delay = latency_pool[rng.random_range(0..latency_pool.len())];

        screens.push(ScreenSpec {
            id,
            widgets,
            entry_transition,
            network_delay,
            background: backgrounds[(s + (seed as usize % 5)) % backgrounds.len()],
        });
    }

    let actions = (0..n_screens.saturating_sub(1))
        .map(|s| ScenarioAction {
            selector: Selector {
                id: format!("s{s:04}_next"),
                text: None,
            },
            action: Action::Tap,
        })
        .collect();

    ScenarioSpec {
        name: name.to_string(),
        screens,
        initial_screen: "s0000".to_string(),
        profiles: Vec::new(),
        actions,
        stress,
    }
}

/// The screen corpus used to build training datasets: mild latencies, all
/// transition kinds represented.
pub fn generate_dataset_scenario(seed: u64, n_screens: usize) -> ScenarioSpec {
    let pool = [
        LatencyModel::Fixed { ms: 160 },
        LatencyModel::Fixed { ms: 320 },
        LatencyModel::Uniform {
            lo_ms: 120,
            hi_ms: 420,
        },
        LatencyModel::LogNormal {
            mu: 5.5,
            sigma: 0.3,
        },
    ];
    generate_walk_scenario("dataset", seed, n_screens, &pool, false)
}

/// Replay benchmark suite: `n` scenarios over small walks; roughly the last
/// 40% use wide heavy-tail latencies and carry the stress flag.
pub fn generate_replay_suite(seed: u64, n_scenarios: usize, screens_per: usize) -> Vec<ScenarioSpec> {
    let calm = [
        LatencyModel::Fixed { ms: 220 },
        LatencyModel::Fixed { ms: 380 },
        LatencyModel::Uniform {
            lo_ms: 150,
            hi_ms: 450,
        },
    ];
    // Bounded so a 10x wait always covers the worst draw on the slowest
    // profile: hi * 2.0 <= 10 * lo.
    let heavy = [
        LatencyModel::Uniform {
            lo_ms: 220,
            hi_ms: 1050,
        },
        LatencyModel::Uniform {
            lo_ms: 250,
            hi_ms: 1200,
        },
    ];
    (0..n_scenarios)
        .map(|i| {
            let stress = i >= n_scenarios - (n_scenarios * 2).div_ceil(5);
            let pool: &[LatencyModel] = if stress { &heavy } else { &calm };
            generate_walk_scenario(
                &format!("scenario{i:02}"),
                seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15),
                screens_per,
                pool,
                stress,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = generate_walk_scenario("t", 3, 4, &[LatencyModel::Fixed { ms: 100 }], false);
        let path = dir.path().join("scenario.json");
        spec.save(&path).unwrap();
        let loaded = ScenarioSpec::load(&path).unwrap();
        assert_eq!(loaded.name, spec.name);
        assert_eq!(loaded.screens.len(), spec.screens.len());
        assert_eq!(loaded.actions.len(), spec.actions.len());
    }

    #[test]
    fn generated_walk_links_every_screen() {
        let spec = generate_dataset_scenario(1, 6);
        assert_eq!(spec.screens.len(), 6);
        assert_eq!(spec.actions.len(), 5);
        for s in 0..5 {
            let screen = &spec.screens[s];
            assert!(screen
                .widgets
                .iter()
                .any(|w| w.target_screen.as_deref() == Some(&format!("s{:04}", s + 1))));
        }
    }

    #[test]
    fn suite_marks_a_stress_subset() {
        let suite = generate_replay_suite(7, 12, 6);
        let stress = suite.iter().filter(|s| s.stress).count();
        assert!(stress >= 4 && stress < 12, "stress count {stress}");
    }

    #[test]
    fn lognormal_sampling_is_deterministic() {
        let model = LatencyModel::LogNormal { mu: 5.5, sigma: 0.4 };
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<u64> = (0..16).map(|_| model.sample(&mut a)).collect();
        let ys: Vec<u64> = (0..16).map(|_| model.sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn builtin_profiles_cover_the_scale_range() {
        let scales: Vec<f64> = DeviceProfile::builtins()
            .iter()
            .map(|p| p.render_scale)
            .collect();
        assert_eq!(scales, vec![1.0, 1.3, 1.6, 2.0]);
        assert!(DeviceProfile::by_name("reference").is_some());
        assert!(DeviceProfile::by_name("nope").is_none());
    }
}
