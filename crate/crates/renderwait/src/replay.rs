//! Event scripts, the recorder, and the replay scheduler.
//!
//! Recording drives the simulator with oracle-perfect waiting and captures
//! each event's inter-event delay. Replaying re-executes the script under a
//! waiting strategy: fixed multiples of the recorded delays, the
//! screenshot-classify-dispatch loop (with a hard fallback threshold), or
//! oracle waiting as the lower bound on achievable time. Only recording and
//! the terminal verification consult the simulator's ground truth; the
//! adaptive loop sees nothing but screenshots and the classifier.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, Classifier};
use crate::renderstate::{predict, RenderLabel};
use crate::sim::{DeviceProfile, ScenarioAction, ScenarioSpec, Simulator};

pub const DEFAULT_POLL_INTERVAL_MS: u64 = 100;
pub const DEFAULT_MAX_WAIT_MS: u64 = 60_000;

/// Widget reference: id first, exact caption text as the fallback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "lowercase")]
pub enum Action {
    Tap,
    Input(String),
    Back,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub selector: Selector,
    pub action: Action,
    pub recorded_delay_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventScript {
    pub scenario: String,
    /// Device profile the script was recorded on.
    pub profile: String,
    pub expected_terminal: String,
    pub events: Vec<ScriptEvent>,
}

impl EventScript {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EventScript> {
        let script: EventScript = serde_json::from_slice(&fs::read(path)?)?;
        if script.events.is_empty() {
            return Err(Error::format("event script has no events"));
        }
        Ok(script)
    }
}

/// How the replayer waits before dispatching each event.
pub enum WaitStrategy {
    /// Advance `multiplier` times the recorded inter-event delay.
    Fixed { multiplier: u32 },
    /// Poll screenshots through the classifier until it reports a fully
    /// rendered GUI, dispatching anyway once `max_wait_ms` of waiting has
    /// accumulated for the current event.
    Adaptive {
        poll_interval_ms: u64,
        max_wait_ms: u64,
        model: Classifier,
    },
    /// Dispatch exactly when the ground truth turns fully rendered; the
    /// benchmark's lower bound on elapsed time.
    Oracle,
}

impl WaitStrategy {
    pub fn adaptive_default(model: Classifier) -> WaitStrategy {
        WaitStrategy::Adaptive {
            poll_interval_ms: DEFAULT_POLL_INTERVAL_MS,
            max_wait_ms: DEFAULT_MAX_WAIT_MS,
            model,
        }
    }

    pub fn id(&self) -> String {
        match self {
            WaitStrategy::Fixed { multiplier } => format!("fixed:{multiplier}"),
            WaitStrategy::Adaptive { .. } => "adaptive".to_string(),
            WaitStrategy::Oracle => "oracle".to_string(),
        }
    }

    fn max_wait(&self) -> u64 {
        match self {
            WaitStrategy::Adaptive { max_wait_ms, .. } => *max_wait_ms,
            _ => DEFAULT_MAX_WAIT_MS,
        }
    }
}

/// Strategy selector for benchmark configuration and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategySpec {
    Fixed(u32),
    Adaptive,
    Oracle,
}

impl std::str::FromStr for StrategySpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<StrategySpec> {
        if s == "adaptive" {
            return Ok(StrategySpec::Adaptive);
        }
        if s == "oracle" {
            return Ok(StrategySpec::Oracle);
        }
        if let Some(k) = s.strip_prefix("fixed:") {
            let k: u32 = k
                .parse()
                .map_err(|_| Error::invalid(format!("bad fixed multiplier in {s:?}")))?;
            if k == 0 {
                return Err(Error::invalid("fixed multiplier must be positive"));
            }
            return Ok(StrategySpec::Fixed(k));
        }
        Err(Error::invalid(format!(
            "unknown strategy {s:?}; expected adaptive, oracle, or fixed:<k>"
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EventOutcome {
    pub wait_ms: u64,
    pub dispatched: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub scenario: String,
    pub profile: String,
    pub strategy: String,
    pub reproduced: bool,
    /// Virtual time from the first dispatch through terminal verification.
    pub elapsed_ms: u64,
    pub events: Vec<EventOutcome>,
}

/// Record a scenario into an event script by dispatching each action exactly
/// when the ground truth turns fully rendered.
pub fn record(
    sim: &mut Simulator,
    actions: &[ScenarioAction],
    scenario_name: &str,
) -> Result<EventScript> {
    if actions.is_empty() {
        return Err(Error::invalid("cannot record an empty action list"));
    }
    let mut events = Vec::with_capacity(actions.len());
    for (i, step) in actions.iter().enumerate() {
        let wait = sim
            .ready_at_ms()
            .map(|r| r.saturating_sub(sim.now_ms()))
            .unwrap_or(0);
        sim.advance(wait);
        sim.dispatch(&step.selector, &step.action)
            .map_err(|e| Error::Record(format!("action {i} failed during recording: {e}")))?;
        events.push(ScriptEvent {
            selector: step.selector.clone(),
            action: step.action.clone(),
            recorded_delay_ms: wait,
        });
    }
    if let Some(ready) = sim.ready_at_ms() {
        let now = sim.now_ms();
        sim.advance(ready - now);
    }
    Ok(EventScript {
        scenario: scenario_name.to_string(),
        profile: sim.profile().name.clone(),
        expected_terminal: sim.current_screen_id().to_string(),
        events,
    })
}

/// Replay a script on a freshly initialized simulator. Dispatch failures are
/// recorded, not raised; the report is always returned.
pub fn replay(
    sim: &mut Simulator,
    script: &EventScript,
    strategy: &mut WaitStrategy,
) -> Result<ReplayReport> {
    let mut outcomes = Vec::with_capacity(script.events.len());
    let mut all_dispatched = true;
    let mut first_dispatch_at = None;

    for event in &script.events {
        let wait = match strategy {
            WaitStrategy::Fixed { multiplier } => {
                let wait = event.recorded_delay_ms.saturating_mul(*multiplier as u64);
                sim.advance(wait);
                wait
            }
            WaitStrategy::Oracle => {
                let wait = sim
                    .ready_at_ms()
                    .map(|r| r.saturating_sub(sim.now_ms()))
                    .unwrap_or(0);
                sim.advance(wait);
                wait
            }
            WaitStrategy::Adaptive {
                poll_interval_ms,
                max_wait_ms,
                model,
            } => {
                let mut waited = 0u64;
                loop {
                    let frame = sim.screenshot();
                    let (label, _) = predict(model, &frame)?;
                    if label == RenderLabel::FullyRendered {
                        break;
                    }
                    if waited >= *max_wait_ms {
                        // Fallback: dispatch anyway rather than hang on slow
                        // loads or misprediction.
                        break;
                    }
                    let step = (*poll_interval_ms).min(*max_wait_ms - waited);
                    sim.advance(step);
                    waited += step;
                }
                waited
            }
        };
        if first_dispatch_at.is_none() {
            first_dispatch_at = Some(sim.now_ms());
        }
        let dispatched = match sim.dispatch(&event.selector, &event.action) {
            Ok(()) => true,
            Err(_) => {
                all_dispatched = false;
                false
            }
        };
        outcomes.push(EventOutcome {
            wait_ms: wait,
            dispatched,
        });
    }

    // Terminal verification: wait (bounded) for the last sequence to settle,
    // then check the terminal screen. This check may read the oracle.
    let cap = strategy.max_wait();
    let mut verify_waited = 0u64;
    while !sim.ground_truth_state().is_fully_rendered() && verify_waited < cap {
        let step = match sim.ready_at_ms() {
            Some(ready) => (ready - sim.now_ms()).min(cap - verify_waited),
            None => break,
        };
        sim.advance(step);
        verify_waited += step;
    }
    let reproduced = all_dispatched
        && sim.current_screen_id() == script.expected_terminal
        && sim.ground_truth_state().is_fully_rendered();

    let elapsed_ms = first_dispatch_at.map_or(0, |t0| sim.now_ms() - t0);
    Ok(ReplayReport {
        scenario: script.scenario.clone(),
        profile: sim.profile().name.clone(),
        strategy: strategy.id(),
        reproduced,
        elapsed_ms,
        events: outcomes,
    })
}

// ---------------------------------------------------------------------------
// Benchmark harness.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub seed: u64,
    pub profiles: Vec<DeviceProfile>,
    pub strategies: Vec<StrategySpec>,
    pub poll_interval_ms: u64,
    pub max_wait_ms: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 0,
            profiles: DeviceProfile::builtins(),
            strategies: vec![
                StrategySpec::Fixed(1),
                StrategySpec::Fixed(2),
                StrategySpec::Fixed(5),
                StrategySpec::Fixed(10),
                StrategySpec::Adaptive,
                StrategySpec::Oracle,
            ],
            poll_interval_ms: DEFAULT_POLL_INTERVAL_MS,
            max_wait_ms: DEFAULT_MAX_WAIT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub profile: String,
    pub strategy: String,
    pub scenarios: usize,
    /// Fraction of scenarios reproduced, in [0, 1].
    pub reproducibility: f64,
    pub mean_elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub reports: Vec<ReplayReport>,
    pub aggregates: Vec<Aggregate>,
}

/// Cross-product run: each scenario is recorded once on the reference
/// profile, then replayed under every (profile, strategy) pair. Replay seeds
/// derive from (bench seed, scenario, profile) only, so every strategy faces
/// identical latency draws.
pub fn bench(
    scenarios: &[ScenarioSpec],
    checkpoint: Option<&[u8]>,
    config: &BenchConfig,
) -> Result<BenchResult> {
    if scenarios.is_empty() || config.profiles.is_empty() || config.strategies.is_empty() {
        return Err(Error::invalid("bench needs scenarios, profiles, strategies"));
    }
    let mut strategies: Vec<WaitStrategy> = Vec::new();
    for spec in &config.strategies {
        strategies.push(match spec {
            StrategySpec::Fixed(k) => WaitStrategy::Fixed { multiplier: *k },
            StrategySpec::Oracle => WaitStrategy::Oracle,
            StrategySpec::Adaptive => {
                let bytes = checkpoint
                    .ok_or_else(|| Error::invalid("adaptive strategy needs a checkpoint"))?;
                WaitStrategy::Adaptive {
                    poll_interval_ms: config.poll_interval_ms,
                    max_wait_ms: config.max_wait_ms,
                    model: load_checkpoint(bytes)?,
                }
            }
        });
    }

    let mut reports = Vec::new();
    for scenario in scenarios {
        let record_seed = derive_seed(config.seed, &scenario.name, "record");
        let mut recorder = Simulator::new(
            scenario.clone(),
            DeviceProfile::reference(),
            record_seed,
        )?;
        let script = record(&mut recorder, &scenario.actions, &scenario.name)?;

        for profile in &config.profiles {
            let replay_seed = derive_seed(config.seed, &scenario.name, &profile.name);
            for strategy in strategies.iter_mut() {
                let mut sim = Simulator::new(scenario.clone(), profile.clone(), replay_seed)?;
                reports.push(replay(&mut sim, &script, strategy)?);
            }
        }
    }
    let aggregates = aggregate(&reports);
    Ok(BenchResult {
        reports,
        aggregates,
    })
}

/// Reproducibility percentage and mean elapsed time per (profile, strategy),
/// in first-appearance order.
pub fn aggregate(reports: &[ReplayReport]) -> Vec<Aggregate> {
    let mut order: Vec<(String, String)> = Vec::new();
    for r in reports {
        let key = (r.profile.clone(), r.strategy.clone());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(profile, strategy)| {
            let group: Vec<&ReplayReport> = reports
                .iter()
                .filter(|r| r.profile == profile && r.strategy == strategy)
                .collect();
            let reproduced = group.iter().filter(|r| r.reproduced).count();
            let mean_elapsed_ms =
                group.iter().map(|r| r.elapsed_ms as f64).sum::<f64>() / group.len() as f64;
            Aggregate {
                profile,
                strategy,
                scenarios: group.len(),
                reproducibility: reproduced as f64 / group.len() as f64,
                mean_elapsed_ms,
            }
        })
        .collect()
}

/// CSV with one row per replay: scenario,profile,strategy,reproduced,elapsed_ms.
pub fn reports_to_csv(reports: &[ReplayReport]) -> String {
    let mut out = String::from("scenario,profile,strategy,reproduced,elapsed_ms\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.scenario, r.profile, r.strategy, r.reproduced, r.elapsed_ms
        ));
    }
    out
}

fn derive_seed(base: u64, a: &str, b: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ base;
    for byte in a.as_bytes().iter().chain(b"\x1f").chain(b.as_bytes()) {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_walk_scenario, LatencyModel};

    fn fixed_walk(ms: u64, n: usize) -> ScenarioSpec {
        generate_walk_scenario("walk", 11, n, &[LatencyModel::Fixed { ms }], false)
    }

    #[test]
    fn script_json_round_trips_with_spec_field_names() {
        let script = EventScript {
            scenario: "s".into(),
            profile: "reference".into(),
            expected_terminal: "end".into(),
            events: vec![
                ScriptEvent {
                    selector: Selector {
                        id: "a".into(),
                        text: None,
                    },
                    action: Action::Tap,
                    recorded_delay_ms: 120,
                },
                ScriptEvent {
                    selector: Selector {
                        id: "b".into(),
                        text: Some("go".into()),
                    },
                    action: Action::Input("hello".into()),
                    recorded_delay_ms: 0,
                },
            ],
        };
        let json = serde_json::to_value(&script).unwrap();
        assert_eq!(json["events"][0]["action"]["type"], "tap");
        assert_eq!(json["events"][1]["action"]["payload"], "hello");
        assert_eq!(json["events"][0]["recorded_delay_ms"], 120);
        assert!(json["events"][0]["selector"].get("text").is_none());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        script.save(&path).unwrap();
        let loaded = EventScript::load(&path).unwrap();
        assert_eq!(loaded.events.len(), 2);
    }

    #[test]
    fn record_captures_oracle_delays() {
        let scenario = fixed_walk(500, 3);
        let actions = scenario.actions.clone();
        let mut sim = Simulator::new(scenario, DeviceProfile::reference(), 3).unwrap();
        let script = record(&mut sim, &actions, "walk").unwrap();
        // First event fires on a settled initial screen.
        assert_eq!(script.events[0].recorded_delay_ms, 0);
        // Later delays cover the 500 ms network wait plus any transition.
        assert!(script.events[1].recorded_delay_ms >= 500);
        assert_eq!(script.expected_terminal, "s0002");
    }

    #[test]
    fn recording_is_deterministic() {
        let scenario = generate_walk_scenario(
            "walk",
            5,
            4,
            &[LatencyModel::Uniform {
                lo_ms: 100,
                hi_ms: 900,
            }],
            false,
        );
        let actions = scenario.actions.clone();
        let s1 = record(
            &mut Simulator::new(scenario.clone(), DeviceProfile::reference(), 9).unwrap(),
            &actions,
            "walk",
        )
        .unwrap();
        let s2 = record(
            &mut Simulator::new(scenario, DeviceProfile::reference(), 9).unwrap(),
            &actions,
            "walk",
        )
        .unwrap();
        let d1: Vec<u64> = s1.events.iter().map(|e| e.recorded_delay_ms).collect();
        let d2: Vec<u64> = s2.events.iter().map(|e| e.recorded_delay_ms).collect();
        assert_eq!(d1, d2);
    }

    #[test]
    fn oracle_replay_reproduces_and_fixed_elapsed_is_affine_in_k() {
        let scenario = fixed_walk(400, 4);
        let actions = scenario.actions.clone();
        let record_seed = 21;
        let mut rec =
            Simulator::new(scenario.clone(), DeviceProfile::reference(), record_seed).unwrap();
        let script = record(&mut rec, &actions, "walk").unwrap();
        let total_recorded: u64 = script.events.iter().map(|e| e.recorded_delay_ms).sum();

        let run = |k: u32| {
            let mut sim =
                Simulator::new(scenario.clone(), DeviceProfile::reference(), record_seed).unwrap();
            replay(&mut sim, &script, &mut WaitStrategy::Fixed { multiplier: k }).unwrap()
        };
        let r1 = run(1);
        let r10 = run(10);
        assert!(r1.reproduced, "fixed 1x on the recording profile and seed");
        assert!(r10.reproduced);
        assert_eq!(
            r10.elapsed_ms - r1.elapsed_ms,
            9 * total_recorded,
            "elapsed grows affinely in the multiplier"
        );

        let mut sim =
            Simulator::new(scenario, DeviceProfile::reference(), record_seed).unwrap();
        let oracle = replay(&mut sim, &script, &mut WaitStrategy::Oracle).unwrap();
        assert!(oracle.reproduced);
        assert!(oracle.elapsed_ms <= r1.elapsed_ms);
    }

    #[test]
    fn insufficient_fixed_wait_fails_on_scaled_profile() {
        let scenario = fixed_walk(400, 3);
        let actions = scenario.actions.clone();
        let mut rec = Simulator::new(scenario.clone(), DeviceProfile::reference(), 2).unwrap();
        let script = record(&mut rec, &actions, "walk").unwrap();
        let aged = DeviceProfile::by_name("aged").unwrap();
        let mut sim = Simulator::new(scenario.clone(), aged.clone(), 2).unwrap();
        let r1 = replay(&mut sim, &script, &mut WaitStrategy::Fixed { multiplier: 1 }).unwrap();
        assert!(!r1.reproduced, "1x wait cannot cover a 2x render scale");
        let mut sim = Simulator::new(scenario, aged, 2).unwrap();
        let r2 = replay(&mut sim, &script, &mut WaitStrategy::Fixed { multiplier: 2 }).unwrap();
        assert!(r2.reproduced, "2x wait exactly covers a 2x render scale");
    }

    #[test]
    fn aggregates_recompute_from_reports() {
        let scenario = fixed_walk(200, 3);
        let actions = scenario.actions.clone();
        let mut rec = Simulator::new(scenario.clone(), DeviceProfile::reference(), 4).unwrap();
        let script = record(&mut rec, &actions, "walk").unwrap();
        let mut reports = Vec::new();
        for k in [1u32, 10] {
            let mut sim =
                Simulator::new(scenario.clone(), DeviceProfile::reference(), 4).unwrap();
            reports.push(
                replay(&mut sim, &script, &mut WaitStrategy::Fixed { multiplier: k }).unwrap(),
            );
        }
        let aggs = aggregate(&reports);
        assert_eq!(aggs.len(), 2);
        for agg in &aggs {
            let group: Vec<&ReplayReport> = reports
                .iter()
                .filter(|r| r.profile == agg.profile && r.strategy == agg.strategy)
                .collect();
            let repro =
                group.iter().filter(|r| r.reproduced).count() as f64 / group.len() as f64;
            let mean =
                group.iter().map(|r| r.elapsed_ms as f64).sum::<f64>() / group.len() as f64;
            assert_eq!(agg.reproducibility, repro);
            assert_eq!(agg.mean_elapsed_ms, mean);
        }
    }

    #[test]
    fn strategy_specs_parse() {
        assert_eq!("adaptive".parse::<StrategySpec>().unwrap(), StrategySpec::Adaptive);
        assert_eq!("oracle".parse::<StrategySpec>().unwrap(), StrategySpec::Oracle);
        assert_eq!("fixed:5".parse::<StrategySpec>().unwrap(), StrategySpec::Fixed(5));
        assert!("fixed:0".parse::<StrategySpec>().is_err());
        assert!("warp".parse::<StrategySpec>().is_err());
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let reports = vec![ReplayReport {
            scenario: "s".into(),
            profile: "reference".into(),
            strategy: "fixed:1".into(),
            reproduced: true,
            elapsed_ms: 1234,
            events: vec![],
        }];
        let csv = reports_to_csv(&reports);
        assert_eq!(
            csv,
            "scenario,profile,strategy,reproduced,elapsed_ms\ns,reference,fixed:1,true,1234\n"
        );
    }
}
