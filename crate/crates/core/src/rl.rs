//! Tabular Q-learning over opaque integer states and actions.
//!
//! The table is sparse. A pair that has never been updated reads as its
//! initial value, a Uniform[0,1) draw derived from `(seed, state, action)`
//! alone, so lookups never depend on the order in which pairs were touched.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

pub const DISCOUNT: f64 = 0.9;
pub const TEMPERATURE: f64 = 0.5;
pub const CONVERGENCE_THRESHOLD: f64 = 0.01;
pub const MIN_VISITS: u64 = 3;

pub const QTABLE_SCHEMA_VERSION: u32 = 1;

const LEARNING_RATE_EXPONENT: f64 = 0.6;

/// Per-pair step size `[1 / (1 + n(1-γ))]^0.6`.
pub fn learning_rate<S: Scalar>(visits: u64, discount: S) -> S {
    let one = S::one();
    let n = S::of(visits as f64);
    (one / (one + n * (one - discount))).powf(S::of(LEARNING_RATE_EXPONENT))
}

/// Boltzmann distribution over `values` at `temperature`, computed with the
/// maximum subtracted first.
pub fn softmax<S: Scalar>(values: &[S], temperature: S) -> Vec<S> {
    let max = values.iter().copied().fold(S::neg_infinity(), S::max);
    let weights: Vec<S> = values.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let total = weights.iter().copied().fold(S::zero(), |a, b| a + b);
    weights.into_iter().map(|w| w / total).collect()
}

/// Stateless 64-bit mixer (SplitMix64 finalizer).
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Entry<S: Scalar> {
    pub q: S,
    pub visits: u64,
    pub last_delta: S,
}

/// One observed step: took `action` in `state`, got `reward`, landed in
/// `next_state` where `next_actions` are admissible.
#[derive(Clone, Copy, Debug)]
pub struct Transition<'a, S> {
    pub state: u64,
    pub action: u32,
    pub reward: S,
    pub next_state: u64,
    pub next_actions: &'a [u32],
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable<S: Scalar> {
    discount: S,
    temperature: S,
    threshold: S,
    min_visits: u64,
    seed: u64,
    rows: HashMap<u64, BTreeMap<u32, Entry<S>>>,
}

impl<S: Scalar> QTable<S> {
    pub fn new(seed: u64) -> Self {
        QTable {
            discount: S::of(DISCOUNT),
            temperature: S::of(TEMPERATURE),
            threshold: S::of(CONVERGENCE_THRESHOLD),
            min_visits: MIN_VISITS,
            seed,
            rows: HashMap::new(),
        }
    }

    pub fn with_discount(mut self, discount: S) -> Self {
        assert!(discount >= S::zero() && discount < S::one(), "discount must lie in [0,1)");
        self.discount = discount;
        self
    }

    pub fn with_temperature(mut self, temperature: S) -> Self {
        assert!(temperature > S::zero(), "temperature must be positive");
        self.temperature = temperature;
        self
    }

    pub fn with_min_visits(mut self, min_visits: u64) -> Self {
        self.min_visits = min_visits;
        self
    }

    pub fn discount(&self) -> S {
        self.discount
    }

    pub fn temperature(&self) -> S {
        self.temperature
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Initial value of a pair, fixed by the table seed.
    pub fn initial_value(&self, state: u64, action: u32) -> S {
        let h = mix64(self.seed ^ mix64(state ^ mix64(action as u64 ^ 0xA5A5_0000_0000_0000)));
        S::of((h >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
    }

    pub fn q(&self, state: u64, action: u32) -> S {
        self.entry(state, action)
            .map(|e| e.q)
            .unwrap_or_else(|| self.initial_value(state, action))
    }

    pub fn entry(&self, state: u64, action: u32) -> Option<&Entry<S>> {
        self.rows.get(&state).and_then(|row| row.get(&action))
    }

    pub fn visits(&self, state: u64, action: u32) -> u64 {
        self.entry(state, action).map_or(0, |e| e.visits)
    }

    /// Number of materialized pairs.
    pub fn len(&self) -> usize {
        self.rows.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u32, &Entry<S>)> {
        self.rows
            .iter()
            .flat_map(|(&s, row)| row.iter().map(move |(&a, e)| (s, a, e)))
    }

    pub fn learning_rate(&self, visits: u64) -> S {
        learning_rate(visits, self.discount)
    }

    pub fn probabilities(&self, state: u64, actions: &[u32]) -> Result<Vec<S>> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let values: Vec<S> = actions.iter().map(|&a| self.q(state, a)).collect();
        Ok(softmax(&values, self.temperature))
    }

    /// Samples an action from the softmax policy.
    pub fn softmax_select<R: Rng + ?Sized>(&self, state: u64, actions: &[u32], rng: &mut R) -> Result<u32> {
        let probs = self.probabilities(state, actions)?;
        let u = S::of(rng.random::<f64>());
        let mut acc = S::zero();
        for (&a, &p) in actions.iter().zip(&probs) {
            acc = acc + p;
            if u < acc {
                return Ok(a);
            }
        }
        Ok(*actions.last().unwrap())
    }

    /// Highest-valued action; ties go to the earliest in `actions`.
    pub fn greedy(&self, state: u64, actions: &[u32]) -> Result<u32> {
        let mut best: Option<(u32, S)> = None;
        for &a in actions {
            let v = self.q(state, a);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a).ok_or(Error::EmptyActionSet)
    }

    pub fn max_q(&self, state: u64, actions: &[u32]) -> Result<S> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        Ok(actions
            .iter()
            .map(|&a| self.q(state, a))
            .fold(S::neg_infinity(), S::max))
    }

    /// One temporal-difference step; returns `|Q_new - Q_old|`.
    pub fn update(&mut self, t: &Transition<'_, S>) -> Result<S> {
        let future = self.max_q(t.next_state, t.next_actions)?;
        let old = self.q(t.state, t.action);
        let init = old;
        let entry = self
            .rows
            .entry(t.state)
            .or_default()
            .entry(t.action)
            .or_insert(Entry {
                q: init,
                visits: 0,
                last_delta: S::max_value(),
            });
        let eta = learning_rate(entry.visits, self.discount);
        let new = old + eta * (t.reward + self.discount * future - old);
        entry.q = new;
        entry.visits += 1;
        entry.last_delta = (new - old).abs();
        Ok(entry.last_delta)
    }

    /// Overwrites a pair (test and tooling hook).
    pub fn set(&mut self, state: u64, action: u32, q: S, visits: u64) {
        self.rows.entry(state).or_default().insert(
            action,
            Entry {
                q,
                visits,
                last_delta: S::max_value(),
            },
        );
    }

    /// True once every pair with at least the minimum number of visits had
    /// a most recent change below the threshold. Pairs with fewer visits are
    /// not counted; at least one pair must be counted.
    pub fn converged(&self) -> bool {
        let mut any = false;
        for (_, _, e) in self.entries().filter(|(_, _, e)| e.visits >= self.min_visits) {
            any = true;
            if !(e.last_delta < self.threshold) {
                return false;
            }
        }
        any
    }

    /// Fraction of counted pairs (enough visits) that pass the threshold.
    pub fn converged_fraction(&self) -> f64 {
        let (counted, ok) = self
            .entries()
            .filter(|(_, _, e)| e.visits >= self.min_visits)
            .fold((0usize, 0usize), |(n, ok), (_, _, e)| (n + 1, ok + (e.last_delta < self.threshold) as usize));
        if counted == 0 {
            0.0
        } else {
            ok as f64 / counted as f64
        }
    }

    pub fn to_file(&self) -> QTableFile<S> {
        let mut entries: Vec<(u64, u32, S, u64, S)> = self
            .entries()
            .map(|(s, a, e)| (s, a, e.q, e.visits, e.last_delta))
            .collect();
        entries.sort_by_key(|&(s, a, ..)| (s, a));
        QTableFile {
            schema_version: QTABLE_SCHEMA_VERSION,
            scalar: scalar_name::<S>().to_string(),
            discount: self.discount,
            temperature: self.temperature,
            threshold: self.threshold,
            min_visits: self.min_visits,
            seed: self.seed,
            entries,
        }
    }

    pub fn from_file(file: QTableFile<S>) -> Result<Self> {
        if file.schema_version != QTABLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: file.schema_version,
                expected: QTABLE_SCHEMA_VERSION,
            });
        }
        if file.scalar != scalar_name::<S>() {
            return Err(Error::Parse(format!(
                "table holds {} values, expected {}",
                file.scalar,
                scalar_name::<S>()
            )));
        }
        let mut rows: HashMap<u64, BTreeMap<u32, Entry<S>>> = HashMap::new();
        for (s, a, q, visits, last_delta) in file.entries {
            rows.entry(s).or_default().insert(a, Entry { q, visits, last_delta });
        }
        Ok(QTable {
            discount: file.discount,
            temperature: file.temperature,
            threshold: file.threshold,
            min_visits: file.min_visits,
            seed: file.seed,
            rows,
        })
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_file()).map_err(|e| Error::Serialize(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let version: VersionProbe = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if version.schema_version != QTABLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: version.schema_version,
                expected: QTABLE_SCHEMA_VERSION,
            });
        }
        let file: QTableFile<S> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }
}

fn scalar_name<S: Scalar>() -> &'static str {
    std::any::type_name::<S>()
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// On-disk layout of a Q-table. Entries are `[state, action, q, visits,
/// last_delta]`, sorted by `(state, action)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QTableFile<S: Scalar> {
    pub schema_version: u32,
    pub scalar: String,
    pub discount: S,
    pub temperature: S,
    pub threshold: S,
    pub min_visits: u64,
    pub seed: u64,
    pub entries: Vec<(u64, u32, S, u64, S)>,
}
