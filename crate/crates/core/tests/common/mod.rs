#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use corridor_core::topology::{load_scenario, parse_scenario, ScenarioConfig};
use rand::Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn load(name: &str) -> ScenarioConfig {
    load_scenario(scenario_path(name)).unwrap()
}

fn turns<R: Rng>(rng: &mut R) -> String {
    let left = rng.random_range(0..=3);
    let right = rng.random_range(0..=3);
    let through = 10 - left - right;
    format!(
        "{{ left = {:.1}, through = {:.1}, right = {:.1} }}",
        left as f64 / 10.0,
        through as f64 / 10.0,
        right as f64 / 10.0
    )
}

/// A valid scenario with 1 to 3 signals, 0 to 3 freeway cells, optional
/// ramps, random demand and an optional incident.
pub fn random_scenario_text<R: Rng>(rng: &mut R, duration: u64) -> String {
    let n = rng.random_range(1..=3usize);
    let m = rng.random_range(0..=3usize);
    let mut s = String::new();
    writeln!(s, "schema_version = 1\nduration_s = {duration}\nwarmup_s = 0").unwrap();
    writeln!(s, "seed = {}", rng.random_range(0..1000u64)).unwrap();
    writeln!(s, "frozen_demand = {}", rng.random_bool(0.3)).unwrap();
    for axis in ["corridor", "cross"] {
        writeln!(s, "[approach_defaults.{axis}]").unwrap();
        writeln!(s, "lanes = {}", rng.random_range(1..=3)).unwrap();
        writeln!(s, "turns = {}", turns(rng)).unwrap();
    }

    let offramp = m > 0 && rng.random_bool(0.7);
    let onramp = m > 1 && rng.random_bool(0.5);
    let mut ramps = Vec::new();
    if offramp {
        ramps.push("off");
    }
    if onramp {
        ramps.push("on");
    }
    for c in 0..m {
        let lanes = rng.random_range(2..=4);
        writeln!(s, "[[cells]]").unwrap();
        writeln!(s, "length_m = {}", rng.random_range(300..=1200)).unwrap();
        writeln!(s, "lanes = {lanes}").unwrap();
        writeln!(s, "capacity_vph = {}", 1800 * lanes).unwrap();
        if offramp && c == 0 {
            writeln!(s, "offramp = 0").unwrap();
        }
        if onramp && c == m - 1 {
            writeln!(s, "onramp = {}", ramps.len() - 1).unwrap();
        }
    }
    for &kind in &ramps {
        writeln!(s, "[[ramps]]\nkind = \"{kind}\"").unwrap();
        writeln!(s, "storage_m = {}", rng.random_range(100..=480)).unwrap();
        if kind == "off" {
            writeln!(s, "intersection = 0\ncell = 0").unwrap();
            writeln!(s, "lanes = {}", rng.random_range(1..=2)).unwrap();
            writeln!(s, "split = {:.2}", rng.random_range(0.05..0.4)).unwrap();
            writeln!(s, "turns = {}", turns(rng)).unwrap();
        } else {
            writeln!(s, "intersection = {}\ncell = {}", n - 1, m - 1).unwrap();
            writeln!(s, "split = {:.2}", rng.random_range(0.1..0.9)).unwrap();
        }
    }
    for _ in 0..n {
        writeln!(s, "[[intersections]]").unwrap();
    }
    for j in 0..n - 1 {
        writeln!(s, "[[links]]\nfrom = {j}\nto = {}", j + 1).unwrap();
        writeln!(s, "length_m = {}", rng.random_range(1000..=2500)).unwrap();
        writeln!(s, "lanes = {}", rng.random_range(1..=3)).unwrap();
    }
    if m > 0 {
        writeln!(s, "[[demands]]\nentrance = \"freeway\"\nrate_vph = {}", rng.random_range(0..7000)).unwrap();
    }
    let mut arterial = |s: &mut String, k: usize, bound: &str, hi: u32| {
        writeln!(
            s,
            "[[demands]]\nentrance = \"arterial\"\nintersection = {k}\nbound = \"{bound}\"\nrate_vph = {}",
            rng.random_range(0..hi)
        )
        .unwrap();
    };
    arterial(&mut s, 0, "north", 1200);
    arterial(&mut s, n - 1, "south", 1200);
    for k in 0..n {
        arterial(&mut s, k, "east", 500);
        arterial(&mut s, k, "west", 500);
    }
    if m > 0 {
        let mode = ["off", "fixed", "stochastic"][rng.random_range(0..3)];
        writeln!(s, "[incident]\nmode = \"{mode}\"\ncell = {}", rng.random_range(0..m)).unwrap();
        writeln!(s, "start_s = {}", rng.random_range(0..duration / 2)).unwrap();
        writeln!(s, "duration_s = {}", rng.random_range(60..duration)).unwrap();
    }
    s
}

pub fn random_scenario<R: Rng>(rng: &mut R, duration: u64) -> ScenarioConfig {
    let text = random_scenario_text(rng, duration);
    parse_scenario(&text).unwrap_or_else(|e| panic!("generated scenario rejected: {e}\n{text}"))
}

/// Least-squares slope of `ys` against their index.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}
