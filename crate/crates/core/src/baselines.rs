//! Comparison strategies: fixed-time control and bandwidth-maximizing offsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::SignalPlan;

pub const FIXED_CYCLE: u32 = 120;
pub const FIXED_G1: f64 = 0.5;
pub const FIXED_G2: f64 = 0.25;
/// Progression speed, m/s.
pub const PROGRESSION_SPEED: f64 = 60.0 / 3.6;
/// Default number of ascent starts.
pub const DEFAULT_STARTS: usize = 16;
/// Offset grids up to this size are searched exhaustively.
pub const EXHAUSTIVE_LIMIT: u64 = 40_000;

/// The fixed-time plan used at every intersection: 120 s, even split, zero offset.
pub fn fixed_time_plan(loss_time: u32) -> Result<SignalPlan> {
    SignalPlan::from_ratios(FIXED_CYCLE, FIXED_G1, FIXED_G2, loss_time)
}

/// Recommended speed under fixed-time control, km/h.
pub fn fixed_time_speed_kmh() -> f64 {
    60.0
}

/// Share of green given to the corridor phases from per-lane critical flows,
/// bounded to the agent range [0.2, 0.8].
pub fn webster_g1(corridor_flow_per_lane: f64, cross_flow_per_lane: f64) -> f64 {
    let total = corridor_flow_per_lane + cross_flow_per_lane;
    if !(total > 0.0) {
        return FIXED_G1;
    }
    (corridor_flow_per_lane / total).clamp(0.2, 0.8)
}

/// Union of disjoint half-open intervals on `[0, cycle)`.
#[derive(Clone, Debug)]
struct CircularSet {
    cycle: f64,
    parts: Vec<(f64, f64)>,
}

impl CircularSet {
    fn full(cycle: f64) -> Self {
        CircularSet {
            cycle,
            parts: vec![(0.0, cycle)],
        }
    }

    fn window(cycle: f64, start: f64, len: f64) -> Self {
        if len >= cycle {
            return Self::full(cycle);
        }
        if len <= 0.0 {
            return CircularSet { cycle, parts: vec![] };
        }
        let s = start.rem_euclid(cycle);
        let e = s + len;
        let parts = if e <= cycle {
            vec![(s, e)]
        } else {
            vec![(0.0, e - cycle), (s, cycle)]
        };
        CircularSet { cycle, parts }
    }

    fn intersect(&self, other: &CircularSet) -> CircularSet {
        let mut parts = Vec::new();
        for &(a0, a1) in &self.parts {
            for &(b0, b1) in &other.parts {
                let lo = a0.max(b0);
                let hi = a1.min(b1);
                if hi > lo {
                    parts.push((lo, hi));
                }
            }
        }
        parts.sort_by(|x, y| x.0.total_cmp(&y.0));
        CircularSet {
            cycle: self.cycle,
            parts,
        }
    }

    /// Longest connected arc, joining the pieces touching 0 and `cycle`.
    fn longest(&self) -> f64 {
        let Some(&(first_lo, first_hi)) = self.parts.first() else {
            return 0.0;
        };
        let last = *self.parts.last().unwrap();
        let mut best = self.parts.iter().map(|(a, b)| b - a).fold(0.0, f64::max);
        if self.parts.len() > 1 && first_lo <= 0.0 && last.1 >= self.cycle {
            best = best.max(first_hi - first_lo + last.1 - last.0);
        }
        best
    }
}

/// Per-signal through windows and the cumulative travel times of a corridor.
#[derive(Clone, Debug, PartialEq)]
pub struct BandGeometry {
    pub cycle: u32,
    /// (start, end) of the corridor green within the cycle, before offset.
    pub windows: Vec<(f64, f64)>,
    /// Travel time from signal 0 to signal k at the progression speed, s.
    pub arrival: Vec<f64>,
}

impl BandGeometry {
    pub fn new(plans: &[SignalPlan], link_lengths: &[f64], speed: f64) -> Result<Self> {
        let Some(first) = plans.first() else {
            return Err(Error::Config("bandwidth needs at least one signal".into()));
        };
        if let Some(p) = plans.iter().find(|p| p.cycle != first.cycle) {
            return Err(Error::CycleMismatch(first.cycle, p.cycle));
        }
        if link_lengths.len() + 1 != plans.len() {
            return Err(Error::Config(format!(
                "{} signals need {} link lengths, got {}",
                plans.len(),
                plans.len() - 1,
                link_lengths.len()
            )));
        }
        if !(speed > 0.0) {
            return Err(Error::Config("progression speed must be positive".into()));
        }
        let mut arrival = vec![0.0];
        for l in link_lengths {
            arrival.push(arrival.last().unwrap() + l / speed);
        }
        Ok(BandGeometry {
            cycle: first.cycle,
            windows: plans.iter().map(SignalPlan::corridor_window).collect(),
            arrival,
        })
    }

    /// (inbound, outbound) band widths for absolute offsets `offsets`.
    /// Outbound runs from signal 0 to the last signal.
    pub fn band(&self, offsets: &[f64]) -> (f64, f64) {
        let c = self.cycle as f64;
        let total = *self.arrival.last().unwrap();
        let mut out = CircularSet::full(c);
        let mut inb = CircularSet::full(c);
        for (k, &(s, e)) in self.windows.iter().enumerate() {
            let start = offsets[k] + s;
            out = out.intersect(&CircularSet::window(c, start - self.arrival[k], e - s));
            inb = inb.intersect(&CircularSet::window(c, start - (total - self.arrival[k]), e - s));
        }
        (inb.longest(), out.longest())
    }

    fn total(&self, offsets: &[f64]) -> f64 {
        let (i, o) = self.band(offsets);
        i + o
    }
}

/// (inbound, outbound) progression band widths, s.
pub fn bandwidth(offsets: &[u32], plans: &[SignalPlan], link_lengths: &[f64], speed: f64) -> Result<(f64, f64)> {
    let geo = BandGeometry::new(plans, link_lengths, speed)?;
    if offsets.len() != plans.len() {
        return Err(Error::Config("one offset per signal required".into()));
    }
    let o: Vec<f64> = offsets.iter().map(|&v| v as f64).collect();
    Ok(geo.band(&o))
}

/// Absolute offsets on a 1 s grid maximizing inbound + outbound band, with
/// signal 0 pinned at 0. Small grids are enumerated; larger ones use
/// multi-start coordinate ascent.
pub fn maxband_offsets(plans: &[SignalPlan], link_lengths: &[f64], speed: f64, seed: u64) -> Result<Vec<u32>> {
    maxband_offsets_with_starts(plans, link_lengths, speed, seed, DEFAULT_STARTS)
}

pub fn maxband_offsets_with_starts(
    plans: &[SignalPlan],
    link_lengths: &[f64],
    speed: f64,
    seed: u64,
    starts: usize,
) -> Result<Vec<u32>> {
    let geo = BandGeometry::new(plans, link_lengths, speed)?;
    let n = plans.len();
    let c = geo.cycle;
    if n == 1 {
        return Ok(vec![0]);
    }
    if (c as u64).checked_pow(n as u32 - 1).is_some_and(|g| g <= EXHAUSTIVE_LIMIT) {
        return Ok(enumerate(&geo));
    }
    let (s0, _) = geo.windows[0];
    let align = |k: usize, shift: f64| -> u32 { (shift + s0 - geo.windows[k].0).round().rem_euclid(c as f64) as u32 };
    let mut candidates: Vec<Vec<u32>> = vec![
        vec![0; n],
        (0..n).map(|k| align(k, geo.arrival[k])).collect(),
        (0..n).map(|k| align(k, -geo.arrival[k])).collect(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while candidates.len() < starts.max(8) {
        let mut o: Vec<u32> = (0..n).map(|_| rng.random_range(0..c)).collect();
        o[0] = 0;
        candidates.push(o);
    }

    let mut best: Option<(f64, Vec<u32>)> = None;
    for start in candidates {
        let (value, offsets) = ascend(&geo, start);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, offsets));
        }
    }
    Ok(best.unwrap().1)
}

/// First grid point with the largest total band; ties keep the earliest.
fn enumerate(geo: &BandGeometry) -> Vec<u32> {
    let n = geo.windows.len();
    let c = geo.cycle;
    let mut o = vec![0u32; n];
    let mut best = (f64::NEG_INFINITY, o.clone());
    loop {
        let v: Vec<f64> = o.iter().map(|&x| x as f64).collect();
        let t = geo.total(&v);
        if t > best.0 + 1e-9 {
            best = (t, o.clone());
        }
        let mut k = 1;
        while k < n {
            o[k] += 1;
            if o[k] < c {
                break;
            }
            o[k] = 0;
            k += 1;
        }
        if k == n {
            return best.1;
        }
    }
}

fn ascend(geo: &BandGeometry, mut offsets: Vec<u32>) -> (f64, Vec<u32>) {
    let c = geo.cycle;
    let as_f = |o: &[u32]| o.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let mut value = geo.total(&as_f(&offsets));
    loop {
        let mut improved = false;
        for k in 1..offsets.len() {
            let mut trial = offsets.clone();
            for v in 0..c {
                trial[k] = v;
                let t = geo.total(&as_f(&trial));
                if t > value + 1e-9 {
                    value = t;
                    offsets[k] = v;
                    improved = true;
                }
            }
        }
        if !improved {
            return (value, offsets);
        }
    }
}
