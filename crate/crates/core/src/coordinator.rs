//! Network-wide unification of TSC actions.
//!
//! Each variable (cycle, g1, g2) is unified on its own:
//!
//! 1. a value intended by more than half of the agents wins;
//! 2. otherwise the legal value closest to the mean of intentions wins,
//!    the larger one on an exact tie.
//!
//! Values are integers (seconds, tenths) so the mean comparison is exact.

use std::collections::BTreeMap;

use crate::signal::{TscAction, CYCLE_CHOICES, G1_CHOICES, G2_CHOICES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UnificationPolicy {
    pub enabled: bool,
}

/// Unifies one variable over its legal values.
pub fn unify_values(intended: &[u32], legal: &[u32]) -> u32 {
    assert!(!intended.is_empty(), "unify needs at least one intention");
    let n = intended.len() as u64;
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for &v in intended {
        *counts.entry(v).or_default() += 1;
    }
    if let Some((&v, _)) = counts.iter().find(|(_, &c)| 2 * c > n) {
        return v;
    }
    // |v - sum/n| compared as |n*v - sum|
    let sum: u64 = intended.iter().map(|&v| v as u64).sum();
    let dist = |v: u32| (n as i128 * v as i128 - sum as i128).unsigned_abs();
    legal
        .iter()
        .copied()
        .min_by(|&a, &b| dist(a).cmp(&dist(b)).then(b.cmp(&a)))
        .expect("nonempty legal set")
}

/// Returns the actions every agent executes: identity when disabled, the
/// unified triple for everyone otherwise.
pub fn unify(intended: &[TscAction], policy: UnificationPolicy) -> Vec<TscAction> {
    if !policy.enabled || intended.is_empty() {
        return intended.to_vec();
    }
    let cycles: Vec<u32> = intended.iter().map(|a| a.cycle).collect();
    let g1: Vec<u32> = intended.iter().map(|a| a.g1_tenths as u32).collect();
    let g2: Vec<u32> = intended.iter().map(|a| a.g2_tenths as u32).collect();
    let g1_legal: Vec<u32> = G1_CHOICES.iter().map(|&v| v as u32).collect();
    let g2_legal: Vec<u32> = G2_CHOICES.iter().map(|&v| v as u32).collect();
    let action = TscAction {
        cycle: unify_values(&cycles, &CYCLE_CHOICES),
        g1_tenths: unify_values(&g1, &g1_legal) as u8,
        g2_tenths: unify_values(&g2, &g2_legal) as u8,
    };
    vec![action; intended.len()]
}
