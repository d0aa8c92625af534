#![allow(dead_code)]

use sqe::harness::Settings;
use sqe::synth::ScenarioRecipe;

/// Scenario family for the sweep and tuning suites: a few concurrent
/// targets, identities entering and leaving, noise varied across seeds.
pub fn sweep_recipe(seed: u64) -> ScenarioRecipe {
    const NOISE: [(f64, f64); 3] = [(0.35, 0.5), (0.4, 0.6), (0.5, 0.7)];
    ScenarioRecipe {
        seed,
        frames: 200 + (seed % 3) as u32 * 50,
        targets: 3 + (seed % 4) as usize,
        noise: NOISE[(seed / 3 % 3) as usize],
        turnover: Some((20, 60)),
        ..ScenarioRecipe::default()
    }
}

/// Smaller variant for per-trial checks.
pub fn small_recipe(seed: u64) -> ScenarioRecipe {
    ScenarioRecipe {
        seed,
        frames: 150,
        targets: 3,
        turnover: Some((15, 40)),
        ..ScenarioRecipe::default()
    }
}

pub fn fast_settings() -> Settings {
    Settings {
        max_pairs: Some(1000),
        ..Settings::default()
    }
}
