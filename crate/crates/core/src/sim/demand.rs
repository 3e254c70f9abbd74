//! Vehicle arrivals and route sampling.
//!
//! Every vehicle's full route is drawn when it is created, from the demand
//! stream alone, so the generated population does not depend on control.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::topology::{Bound, Entrance, ScenarioConfig, Turn, TurnRatios};

use super::Leg;

/// Index of the off-ramp queue among an intersection's approaches.
pub const RAMP_APPROACH: usize = 4;

/// Source of the uniform draws used for routing.
pub(crate) enum Draws<'a> {
    Random(&'a mut ChaCha8Rng),
    /// Golden-ratio sequence; used with frozen demand.
    Sequence(&'a mut u64),
}

impl Draws<'_> {
    fn next(&mut self) -> f64 {
        match self {
            Draws::Random(rng) => rng.random::<f64>(),
            Draws::Sequence(counter) => {
                **counter += 1;
                const PHI: f64 = 0.618_033_988_749_894_9;
                (**counter as f64 * PHI).fract()
            }
        }
    }
}

/// Arrival count for one second at `rate` veh/h.
pub(crate) fn arrivals(rate: f64, frozen: bool, acc: &mut f64, rng: &mut ChaCha8Rng) -> u32 {
    if !(rate > 0.0) {
        return 0;
    }
    let lambda = rate / 3600.0;
    if frozen {
        *acc += lambda;
        let n = acc.floor();
        *acc -= n;
        n as u32
    } else {
        Poisson::new(lambda).map(|p| p.sample(rng) as u32).unwrap_or(0)
    }
}

fn approach_turns(config: &ScenarioConfig, k: usize, approach: usize) -> TurnRatios {
    if approach == RAMP_APPROACH {
        config.offramp_at(k).map(|r| r.turns).unwrap_or(TurnRatios::THROUGH_ONLY)
    } else {
        config.intersections[k].approaches[approach].turns
    }
}

/// Heading of vehicles served by approach `approach`.
pub fn approach_bound(approach: usize) -> Bound {
    if approach == RAMP_APPROACH {
        Bound::West
    } else {
        Bound::ALL[approach]
    }
}

/// Continues a route from the stop line of `(k, approach)`.
fn arterial_tail(config: &ScenarioConfig, mut k: usize, mut approach: usize, draws: &mut Draws, legs: &mut Vec<Leg>) {
    let n = config.num_intersections();
    loop {
        let turn = approach_turns(config, k, approach).sample(draws.next());
        legs.push(Leg::Stop {
            intersection: k,
            approach,
            turn,
        });
        match approach_bound(approach).after(turn) {
            Bound::North if k + 1 < n => {
                k += 1;
                approach = Bound::North.index();
            }
            Bound::South if k > 0 => {
                k -= 1;
                approach = Bound::South.index();
            }
            Bound::East => {
                if let Some(r) = config.onramp_at(k) {
                    if draws.next() < r.split {
                        legs.push(Leg::OnRamp(r.id));
                        legs.extend((r.connected_cell..config.cells.len()).map(Leg::Cell));
                    }
                }
                return;
            }
            _ => return,
        }
    }
}

pub(crate) fn build_route(config: &ScenarioConfig, entrance: Entrance, draws: &mut Draws) -> Vec<Leg> {
    let mut legs = Vec::new();
    match entrance {
        Entrance::Freeway => {
            for cell in &config.cells {
                legs.push(Leg::Cell(cell.id));
                if let Some(r) = cell.offramp.map(|r| &config.ramps[r]) {
                    if draws.next() < r.split {
                        arterial_tail(config, r.connected_intersection, RAMP_APPROACH, draws, &mut legs);
                        return legs;
                    }
                }
            }
        }
        Entrance::Arterial { intersection, bound } => {
            arterial_tail(config, intersection, bound.index(), draws, &mut legs);
        }
    }
    legs
}

/// Whether a route crosses the whole corridor in one direction.
pub fn is_full_corridor(route: &[Leg], num_intersections: usize) -> bool {
    let n = num_intersections;
    if route.len() != n {
        return false;
    }
    let north = route.iter().enumerate().all(|(i, leg)| {
        matches!(leg, Leg::Stop { intersection, approach, turn: Turn::Through }
            if *intersection == i && *approach == Bound::North.index())
    });
    let south = route.iter().enumerate().all(|(i, leg)| {
        matches!(leg, Leg::Stop { intersection, approach, turn: Turn::Through }
            if *intersection == n - 1 - i && *approach == Bound::South.index())
    });
    north || south
}
