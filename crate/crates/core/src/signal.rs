//! Signal timing: turning a (cycle, g1, g2) action into six phase greens,
//! chaining offsets, and answering which movements are green at a time.
//!
//! Phase sequence (index 0..6, shown 1-based in dumps):
//!
//! | phase | movements                |
//! |-------|--------------------------|
//! | 1     | NB left                  |
//! | 2     | NB + SB through/right    |
//! | 3     | SB left                  |
//! | 4     | EB left                  |
//! | 5     | EB + WB through/right    |
//! | 6     | WB left                  |
//!
//! Phases 1-3 share `g1` of the green time, phases 1 and 3 (and 4 and 6) get
//! equal greens. The loss time is split evenly over the six transitions, each
//! slice following its phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::topology::{Bound, Turn};

pub const CYCLE_CHOICES: [u32; 15] = [
    40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150, 160, 170, 180,
];
/// g1 in tenths.
pub const G1_CHOICES: [u8; 7] = [2, 3, 4, 5, 6, 7, 8];
/// g2 in tenths.
pub const G2_CHOICES: [u8; 4] = [1, 2, 3, 4];

pub const NUM_TSC_ACTIONS: usize = CYCLE_CHOICES.len() * G1_CHOICES.len() * G2_CHOICES.len();

/// Loss time used when a scenario does not override it, s.
pub const DEFAULT_LOSS_TIME: u32 = 12;

pub const NUM_PHASES: usize = 6;

/// Cycle length and split ratios chosen by a TSC agent.
///
/// Ratios are stored in tenths so the action space stays exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TscAction {
    pub cycle: u32,
    pub g1_tenths: u8,
    pub g2_tenths: u8,
}

impl TscAction {
    pub fn new(cycle: u32, g1_tenths: u8, g2_tenths: u8) -> Result<Self> {
        let action = TscAction {
            cycle,
            g1_tenths,
            g2_tenths,
        };
        if action.is_legal() {
            Ok(action)
        } else {
            Err(Error::InvalidAction(format!(
                "({cycle} s, g1={:.1}, g2={:.1}) is outside the TSC action space",
                g1_tenths as f64 / 10.0,
                g2_tenths as f64 / 10.0
            )))
        }
    }

    pub fn is_legal(&self) -> bool {
        CYCLE_CHOICES.contains(&self.cycle)
            && G1_CHOICES.contains(&self.g1_tenths)
            && G2_CHOICES.contains(&self.g2_tenths)
    }

    pub fn g1<S: Scalar>(&self) -> S {
        S::of(self.g1_tenths as f64) / S::of(10.0)
    }

    pub fn g2<S: Scalar>(&self) -> S {
        S::of(self.g2_tenths as f64) / S::of(10.0)
    }

    /// Mixed-radix id: cycle slowest, then g1, then g2.
    pub fn encode(&self) -> u32 {
        let c = CYCLE_CHOICES.iter().position(|&v| v == self.cycle).expect("legal cycle");
        let a = G1_CHOICES.iter().position(|&v| v == self.g1_tenths).expect("legal g1");
        let b = G2_CHOICES.iter().position(|&v| v == self.g2_tenths).expect("legal g2");
        ((c * G1_CHOICES.len() + a) * G2_CHOICES.len() + b) as u32
    }

    pub fn decode(id: u32) -> Option<Self> {
        let id = id as usize;
        if id >= NUM_TSC_ACTIONS {
            return None;
        }
        let b = id % G2_CHOICES.len();
        let a = (id / G2_CHOICES.len()) % G1_CHOICES.len();
        let c = id / (G2_CHOICES.len() * G1_CHOICES.len());
        Some(TscAction {
            cycle: CYCLE_CHOICES[c],
            g1_tenths: G1_CHOICES[a],
            g2_tenths: G2_CHOICES[b],
        })
    }

    pub fn all() -> impl Iterator<Item = TscAction> {
        (0..NUM_TSC_ACTIONS as u32).map(|id| TscAction::decode(id).unwrap())
    }
}

/// A movement through an intersection, named by its approach heading.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Movement {
    pub bound: Bound,
    pub turn: Turn,
}

impl Movement {
    pub fn new(bound: Bound, turn: Turn) -> Self {
        Movement { bound, turn }
    }

    /// Phase index (0-based) serving this movement.
    pub fn phase(&self) -> usize {
        match (self.bound, self.turn) {
            (Bound::North, Turn::Left) => 0,
            (Bound::South, Turn::Left) => 2,
            (Bound::North | Bound::South, _) => 1,
            (Bound::East, Turn::Left) => 3,
            (Bound::West, Turn::Left) => 5,
            (Bound::East | Bound::West, _) => 4,
        }
    }

    pub fn all() -> impl Iterator<Item = Movement> {
        Bound::ALL
            .into_iter()
            .flat_map(|b| Turn::ALL.into_iter().map(move |t| Movement::new(b, t)))
    }
}

/// Movements released by phase `phase` (0-based).
pub fn phase_movements(phase: usize) -> Vec<Movement> {
    Movement::all().filter(|m| m.phase() == phase).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseQuery {
    pub intersection: usize,
    pub movement: Movement,
    /// s since simulation start
    pub time: f64,
}

/// Six-phase fixed-sequence timing for one intersection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignalPlan {
    pub cycle: u32,
    pub loss_time: u32,
    /// Integer-second greens for phases 1..6.
    pub greens: [u32; NUM_PHASES],
    pub absolute_offset: u32,
}

/// Exact greens before rounding.
pub fn exact_greens<S: Scalar>(cycle: S, g1: S, g2: S, loss_time: S) -> [S; NUM_PHASES] {
    let effective = cycle - loss_time;
    let two = S::of(2.0);
    let one = S::one();
    let g13 = effective * g1 * g2;
    let g2_ = effective * g1 * (one - two * g2);
    let g46 = effective * (one - g1) * g2;
    let g5 = effective * (one - g1) * (one - two * g2);
    [g13, g2_, g13, g46, g5, g46]
}

/// Rounds exact greens to whole seconds, then absorbs the residual in the
/// larger of the two unpaired phases (2 or 5) so paired phases stay equal
/// and the total equals `target`.
fn round_greens(exact: [f64; NUM_PHASES], target: u32) -> Result<[u32; NUM_PHASES]> {
    let mut rounded = exact.map(|g| g.round() as i64);
    let residual = target as i64 - rounded.iter().sum::<i64>();
    let slot = if rounded[4] > rounded[1] { 4 } else { 1 };
    rounded[slot] += residual;
    if rounded.iter().any(|&g| g < 0) {
        return Err(Error::InfeasiblePlan(format!(
            "rounding left a negative green: {rounded:?}"
        )));
    }
    Ok(rounded.map(|g| g as u32))
}

impl SignalPlan {
    /// Builds a plan from arbitrary split ratios; used by baselines whose
    /// splits are not restricted to the agent action space.
    pub fn from_ratios(cycle: u32, g1: f64, g2: f64, loss_time: u32) -> Result<Self> {
        if loss_time >= cycle {
            return Err(Error::InfeasiblePlan(format!(
                "loss time {loss_time} s is not below cycle {cycle} s"
            )));
        }
        if !(0.0..=1.0).contains(&g1) || !(0.0..=0.5).contains(&g2) {
            return Err(Error::InfeasiblePlan(format!("split ratios g1={g1}, g2={g2}")));
        }
        let exact = exact_greens(cycle as f64, g1, g2, loss_time as f64);
        let greens = round_greens(exact, cycle - loss_time)?;
        Ok(SignalPlan {
            cycle,
            loss_time,
            greens,
            absolute_offset: 0,
        })
    }

    pub fn with_offset(mut self, offset: u32) -> Self {
        self.absolute_offset = offset % self.cycle;
        self
    }

    pub fn loss_slice(&self) -> f64 {
        self.loss_time as f64 / NUM_PHASES as f64
    }

    /// Start of phase `phase` within the cycle, s.
    pub fn phase_start(&self, phase: usize) -> f64 {
        self.greens[..phase].iter().map(|&g| g as f64).sum::<f64>() + phase as f64 * self.loss_slice()
    }

    /// Through-green window of the corridor (phase 2) within the cycle.
    pub fn corridor_window(&self) -> (f64, f64) {
        let start = self.phase_start(1);
        (start, start + self.greens[1] as f64)
    }

    /// Position within the cycle at absolute time `t`.
    pub fn cycle_position(&self, t: f64) -> f64 {
        (t - self.absolute_offset as f64).rem_euclid(self.cycle as f64)
    }

    /// Active phase at absolute time `t`, `None` during loss time.
    pub fn phase_at(&self, t: f64) -> Option<usize> {
        let pos = self.cycle_position(t);
        let slice = self.loss_slice();
        let mut start = 0.0;
        for (j, &g) in self.greens.iter().enumerate() {
            let end = start + g as f64;
            if pos >= start && pos < end {
                return Some(j);
            }
            start = end + slice;
        }
        None
    }

    pub fn green_movements(&self, t: f64) -> Vec<Movement> {
        self.phase_at(t).map(phase_movements).unwrap_or_default()
    }

    /// Per-second phase lookup for integer-time simulation.
    pub fn phase_table(&self) -> Vec<Option<u8>> {
        (0..self.cycle)
            .map(|p| self.phase_at(p as f64 + self.absolute_offset as f64).map(|j| j as u8))
            .collect()
    }
}

/// Converts a TSC action into a plan with zero offset.
pub fn compute_splits(action: &TscAction, loss_time: u32) -> Result<SignalPlan> {
    if !action.is_legal() {
        return Err(Error::InvalidAction(format!("{action:?}")));
    }
    if loss_time >= action.cycle {
        return Err(Error::InfeasiblePlan(format!(
            "loss time {loss_time} s is not below cycle {} s",
            action.cycle
        )));
    }
    SignalPlan::from_ratios(action.cycle, action.g1(), action.g2(), loss_time)
}

/// Legal relative offsets for an upstream cycle: 0, 5, ..., cycle-5.
pub fn offset_choices(upstream_cycle: u32) -> impl Iterator<Item = u32> {
    (0..upstream_cycle / 5).map(|i| i * 5)
}

/// Delays `plan`'s cycle start by `relative_offset` seconds after the
/// upstream signal's cycle start.
pub fn apply_offset(plan: &SignalPlan, relative_offset: u32, upstream: &SignalPlan) -> Result<SignalPlan> {
    if !relative_offset.is_multiple_of(5) || relative_offset + 5 > upstream.cycle {
        return Err(Error::InvalidAction(format!(
            "offset {relative_offset} s not in {{0, 5, ..., {}}}",
            upstream.cycle.saturating_sub(5)
        )));
    }
    let mut out = plan.clone();
    out.absolute_offset = (upstream.absolute_offset + relative_offset) % plan.cycle;
    Ok(out)
}

/// Answers whether the queried movement may proceed.
pub fn movement_is_green(plan: &SignalPlan, query: &PhaseQuery) -> Result<bool> {
    if !query.time.is_finite() || query.time < 0.0 {
        return Err(Error::InvalidQuery(format!("time {} s", query.time)));
    }
    Ok(plan.phase_at(query.time) == Some(query.movement.phase()))
}

/// Live signal head: the active plan plus a plan waiting for the next cycle
/// boundary.
#[derive(Clone, Debug)]
pub struct SignalHead {
    plan: SignalPlan,
    table: Vec<Option<u8>>,
    pending: Option<SignalPlan>,
}

impl SignalHead {
    pub fn new(plan: SignalPlan) -> Self {
        let table = plan.phase_table();
        SignalHead {
            plan,
            table,
            pending: None,
        }
    }

    pub fn plan(&self) -> &SignalPlan {
        &self.plan
    }

    pub fn pending(&self) -> Option<&SignalPlan> {
        self.pending.as_ref()
    }

    /// Queues `plan`; it replaces the active one at the next cycle boundary.
    pub fn request(&mut self, plan: SignalPlan) {
        if plan == self.plan {
            self.pending = None;
        } else {
            self.pending = Some(plan);
        }
    }

    /// Installs a plan immediately (used before the simulation starts).
    pub fn install(&mut self, plan: SignalPlan) {
        *self = SignalHead::new(plan);
    }

    /// Advances to integer second `t`, switching plans on a cycle boundary.
    pub fn tick(&mut self, t: u64) {
        if self.pending.is_some() && self.position(t) == 0 {
            let next = self.pending.take().unwrap();
            self.install(next);
        }
    }

    fn position(&self, t: u64) -> usize {
        let c = self.plan.cycle as i64;
        ((t as i64 - self.plan.absolute_offset as i64).rem_euclid(c)) as usize
    }

    pub fn phase(&self, t: u64) -> Option<usize> {
        self.table[self.position(t)].map(|p| p as usize)
    }

    pub fn is_green(&self, t: u64, movement: Movement) -> bool {
        self.phase(t) == Some(movement.phase())
    }
}
