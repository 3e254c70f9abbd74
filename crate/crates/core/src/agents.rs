//! State discretization, action spaces and rewards of the two agent classes.
//!
//! * TSC (one per intersection): observes the off-ramp queue and the four
//!   approach demands, picks `(cycle, g1, g2)`.
//! * DSO (one per link): observes both cycles, the two queues feeding the
//!   link and its length, picks a relative offset and one recommended speed
//!   per direction.
//!
//! Continuous observations snap to the nearest bin (ties upward) and clamp
//! at the top of each space. State ids are mixed-radix integers over the bin
//! indices in the order the fields are declared.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{kmh_to_mps, Scalar};
use crate::signal::{TscAction, CYCLE_CHOICES};

/// Evenly spaced bins `lo, lo+step, ..., hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinSpace {
    pub lo: f64,
    pub step: f64,
    pub hi: f64,
}

impl BinSpace {
    pub const fn new(lo: f64, step: f64, hi: f64) -> Self {
        BinSpace { lo, step, hi }
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the nearest bin; exact midpoints go to the upper bin.
    pub fn index(&self, value: f64) -> usize {
        let raw = ((value - self.lo) / self.step + 0.5).floor();
        raw.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    pub fn value(&self, index: usize) -> f64 {
        self.lo + self.step * index as f64
    }

    pub fn snap(&self, value: f64) -> f64 {
        self.value(self.index(value))
    }
}

/// Off-ramp queue, m.
pub const OFFRAMP_QUEUE_BINS: BinSpace = BinSpace::new(0.0, 50.0, 500.0);
/// Approach demand, veh/h.
pub const DEMAND_BINS: BinSpace = BinSpace::new(0.0, 100.0, 4000.0);
/// Cycle length, s.
pub const CYCLE_BINS: BinSpace = BinSpace::new(40.0, 10.0, 180.0);
/// Approach queue, m.
pub const APPROACH_QUEUE_BINS: BinSpace = BinSpace::new(0.0, 50.0, 250.0);
/// Link length, m.
pub const LINK_LENGTH_BINS: BinSpace = BinSpace::new(1000.0, 100.0, 2500.0);

/// Recommended speeds, km/h.
pub const SPEED_CHOICES: [u32; 9] = [40, 45, 50, 55, 60, 65, 70, 75, 80];
/// Largest offset slot: offsets are indexed by value, 0..=175 s.
pub const OFFSET_SLOTS: u32 = 180 / 5;
pub const NUM_DSO_ACTION_IDS: u32 = OFFSET_SLOTS * 81;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlParameters {
    /// Side of the square used for the TSC travel time, m.
    pub square_side: f64,
    /// Off-ramp reference queue w_s^r, m.
    pub offramp_reference: f64,
    /// Approach reference queue w_a^r, m.
    pub approach_reference: f64,
    /// Default arterial speed v_a, m/s.
    pub arterial_speed: f64,
    /// s
    pub control_cycle: f64,
    /// s
    pub measurement_interval: f64,
}

impl Default for ControlParameters {
    fn default() -> Self {
        ControlParameters {
            square_side: 400.0,
            offramp_reference: 400.0,
            approach_reference: 200.0,
            arterial_speed: kmh_to_mps(60.0),
            control_cycle: 300.0,
            measurement_interval: 30.0,
        }
    }
}

/// Raw TSC inputs: window-mean off-ramp queue (m) and approach demands
/// (veh/h) by heading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TscObservation {
    pub offramp_queue: f64,
    pub demand_south: f64,
    pub demand_east: f64,
    pub demand_north: f64,
    pub demand_west: f64,
}

impl TscObservation {
    fn fields(&self) -> [f64; 5] {
        [
            self.offramp_queue,
            self.demand_south,
            self.demand_east,
            self.demand_north,
            self.demand_west,
        ]
    }

    fn from_fields(f: [f64; 5]) -> Self {
        TscObservation {
            offramp_queue: f[0],
            demand_south: f[1],
            demand_east: f[2],
            demand_north: f[3],
            demand_west: f[4],
        }
    }
}

/// Bins an observation and returns it with its state id.
pub fn discretize_tsc(raw: &TscObservation) -> (TscObservation, u64) {
    let f = raw.fields();
    let mut idx = [0usize; 5];
    idx[0] = OFFRAMP_QUEUE_BINS.index(f[0]);
    for i in 1..5 {
        idx[i] = DEMAND_BINS.index(f[i]);
    }
    let mut binned = [0.0; 5];
    binned[0] = OFFRAMP_QUEUE_BINS.value(idx[0]);
    for i in 1..5 {
        binned[i] = DEMAND_BINS.value(idx[i]);
    }
    let radix = DEMAND_BINS.len() as u64;
    let id = idx[1..]
        .iter()
        .fold(idx[0] as u64, |acc, &i| acc * radix + i as u64);
    (TscObservation::from_fields(binned), id)
}

/// Raw DSO inputs for one link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DsoObservation {
    /// s
    pub cycle_upstream: f64,
    pub cycle_downstream: f64,
    /// m, window mean
    pub queue_upstream: f64,
    pub queue_downstream: f64,
    /// m
    pub link_length: f64,
}

pub fn discretize_dso(raw: &DsoObservation) -> (DsoObservation, u64) {
    let i = [
        CYCLE_BINS.index(raw.cycle_upstream),
        CYCLE_BINS.index(raw.cycle_downstream),
        APPROACH_QUEUE_BINS.index(raw.queue_upstream),
        APPROACH_QUEUE_BINS.index(raw.queue_downstream),
        LINK_LENGTH_BINS.index(raw.link_length),
    ];
    let radices = [
        CYCLE_BINS.len(),
        CYCLE_BINS.len(),
        APPROACH_QUEUE_BINS.len(),
        APPROACH_QUEUE_BINS.len(),
        LINK_LENGTH_BINS.len(),
    ];
    let id = i
        .iter()
        .zip(radices)
        .fold(0u64, |acc, (&idx, r)| acc * r as u64 + idx as u64);
    let binned = DsoObservation {
        cycle_upstream: CYCLE_BINS.value(i[0]),
        cycle_downstream: CYCLE_BINS.value(i[1]),
        queue_upstream: APPROACH_QUEUE_BINS.value(i[2]),
        queue_downstream: APPROACH_QUEUE_BINS.value(i[3]),
        link_length: LINK_LENGTH_BINS.value(i[4]),
    };
    (binned, id)
}

/// Recovers the upstream cycle from a DSO state id.
pub fn dso_state_upstream_cycle(state: u64) -> u32 {
    let per = (CYCLE_BINS.len() * APPROACH_QUEUE_BINS.len() * APPROACH_QUEUE_BINS.len() * LINK_LENGTH_BINS.len())
        as u64;
    CYCLE_BINS.value((state / per) as usize) as u32
}

/// Offset relative to the upstream signal plus the two speed recommendations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DsoAction {
    /// s
    pub offset: u32,
    /// km/h, traffic travelling from the upstream toward the downstream signal
    pub speed_downstream: u32,
    /// km/h, traffic travelling the other way
    pub speed_upstream: u32,
}

impl DsoAction {
    pub fn encode(&self) -> u32 {
        let vd = SPEED_CHOICES.iter().position(|&v| v == self.speed_downstream).expect("legal speed");
        let vu = SPEED_CHOICES.iter().position(|&v| v == self.speed_upstream).expect("legal speed");
        ((self.offset / 5) * 9 + vd as u32) * 9 + vu as u32
    }

    pub fn decode(id: u32) -> Option<Self> {
        if id >= NUM_DSO_ACTION_IDS {
            return None;
        }
        Some(DsoAction {
            offset: (id / 81) * 5,
            speed_downstream: SPEED_CHOICES[((id / 9) % 9) as usize],
            speed_upstream: SPEED_CHOICES[(id % 9) as usize],
        })
    }

    pub fn is_admissible(&self, upstream_cycle: u32) -> bool {
        self.offset.is_multiple_of(5)
            && self.offset < upstream_cycle
            && SPEED_CHOICES.contains(&self.speed_downstream)
            && SPEED_CHOICES.contains(&self.speed_upstream)
    }
}

/// Encoded ids of every DSO action legal under `upstream_cycle`.
pub fn admissible_dso_actions(upstream_cycle: u32) -> Vec<u32> {
    debug_assert!(CYCLE_CHOICES.contains(&upstream_cycle));
    (0..upstream_cycle / 5)
        .flat_map(|slot| (0..81).map(move |sv| slot * 81 + sv))
        .collect()
}

pub fn tsc_action_ids() -> Vec<u32> {
    TscAction::all().map(|a| a.encode()).collect()
}

fn clamp_unit<S: Scalar>(v: S) -> S {
    v.max(S::zero()).min(S::one())
}

fn queue_factor<S: Scalar>(queue: S, reference: S) -> S {
    (S::one() - queue / reference).max(S::zero())
}

/// TSC reward from the window-mean off-ramp queue and the mean travel time
/// through the intersection square.
pub fn tsc_reward<S: Scalar>(offramp_queue: S, travel_time: S, params: &ControlParameters) -> Result<S> {
    if !(travel_time > S::zero()) {
        return Err(Error::RewardInput(format!("travel time {travel_time} must be positive")));
    }
    let speed_term = S::of(params.square_side) / (travel_time * S::of(params.arterial_speed));
    Ok(clamp_unit(
        queue_factor(offramp_queue, S::of(params.offramp_reference)) * speed_term,
    ))
}

/// DSO reward from the two feeding queues and the link travel time.
pub fn dso_reward<S: Scalar>(
    queue_upstream: S,
    queue_downstream: S,
    travel_time: S,
    link_length: S,
    params: &ControlParameters,
) -> Result<S> {
    if !(travel_time > S::zero()) {
        return Err(Error::RewardInput(format!("travel time {travel_time} must be positive")));
    }
    let reference = S::of(params.approach_reference);
    let speed_term =
        S::of(3.0) * link_length / (S::of(4.0) * travel_time * S::of(params.arterial_speed));
    Ok(clamp_unit(
        queue_factor(queue_upstream, reference) * queue_factor(queue_downstream, reference) * speed_term,
    ))
}

/// Mean of `t_out - t_in` over completed traversals.
pub fn area_travel_time(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoTraversals);
    }
    if let Some(&(a, b)) = samples.iter().find(|(a, b)| b < a) {
        return Err(Error::RewardInput(format!("exit {b} precedes entry {a}")));
    }
    Ok(samples.iter().map(|(a, b)| b - a).sum::<f64>() / samples.len() as f64)
}
