//! Arterial links and stop-line queues.
//!
//! A directed link holds in-transit vehicles in arrival order and a single
//! stop-line queue. Queued vehicles leave at the saturation rate while their
//! movement is green and their next link has storage. Held vehicles of one
//! movement stack in one lane: with `n` discharge lanes, traffic bypasses up
//! to `n - 1` held movements.

use crate::signal::Movement;
use crate::topology::Entrance;

use super::demand::{approach_bound, RAMP_APPROACH};
use super::{Leg, World, ENTRY_SPEED, EPS};

impl World {
    /// Moves waiting entrance vehicles onto their entry legs.
    pub(super) fn admit(&mut self, t: u64) {
        let tf = t as f64;
        for s in 0..self.sources.len() {
            let Entrance::Arterial { intersection, bound } = self.sources[s].entrance else {
                continue;
            };
            while let Some(&slot) = self.sources[s].pending.front() {
                if !self.approaches[intersection][bound.index()].has_room() {
                    break;
                }
                self.sources[s].pending.pop_front();
                self.enter_approach(slot, intersection, bound.index(), ENTRY_SPEED, tf);
            }
        }
    }

    fn enter_approach(&mut self, slot: usize, k: usize, a: usize, speed: f64, tf: f64) {
        let app = &self.approaches[k][a];
        let last = app.transit.back().map(|&s| self.vehicle(s).ready_at).unwrap_or(f64::MIN);
        let length = app.length;
        let v = self.vehicle_mut(slot);
        v.link_entry = tf;
        v.link_speed = speed;
        v.ready_at = (tf + length / speed).max(last);
        v.leg_times.push(tf);
        self.approaches[k][a].transit.push_back(slot);
    }

    /// Places a vehicle at the back of a stop-line queue. Arriving on red or
    /// behind a standing queue is a stop; joining a discharging queue is not.
    pub(super) fn join_queue(&mut self, slot: usize, k: usize, a: usize, t: u64) {
        let movement = self.movement_of(slot, a);
        let app = &self.approaches[k][a];
        let standing = !app.queue.is_empty() && !app.moving(t);
        let red = !self.heads[k].is_green(t, movement);
        if standing || red {
            let v = self.vehicle_mut(slot);
            v.stops += 1;
            v.queued_at = Some(v.ready_at.min(t as f64));
        }
        self.approaches[k][a].queue.push_back(slot);
        self.window.arrivals[k][a] += 1;
    }

    /// Off-ramp vehicles arrive straight at the stop line.
    pub(super) fn enter_offramp(&mut self, slot: usize, k: usize, t: u64) {
        let tf = t as f64;
        let half = self.config.intersections[k].square_side / 2.0;
        let v = self.vehicle_mut(slot);
        v.link_entry = tf - half / ENTRY_SPEED;
        v.link_speed = ENTRY_SPEED;
        v.ready_at = tf;
        v.leg_times.push(tf);
        self.join_queue(slot, k, RAMP_APPROACH, t);
    }

    /// A queued vehicle that is held counts one stop per stop line.
    fn hold(&mut self, slot: usize, t: u64) {
        let v = self.vehicle_mut(slot);
        if v.queued_at.is_none() {
            v.stops += 1;
            v.queued_at = Some(t as f64);
        }
    }

    fn movement_of(&self, slot: usize, a: usize) -> Movement {
        let v = self.vehicle(slot);
        match v.route[v.leg] {
            Leg::Stop { turn, .. } => Movement::new(approach_bound(a), turn),
            other => unreachable!("vehicle at a stop line is on leg {other:?}"),
        }
    }

    pub(super) fn arrive(&mut self, t: u64) {
        let tf = t as f64;
        for k in 0..self.approaches.len() {
            for a in 0..5 {
                while let Some(&slot) = self.approaches[k][a].transit.front() {
                    if self.vehicle(slot).ready_at > tf + EPS {
                        break;
                    }
                    self.approaches[k][a].transit.pop_front();
                    self.join_queue(slot, k, a, t);
                }
            }
        }
    }

    /// Where a vehicle goes after its current stop line, with the speed it
    /// will travel at: `Some((k, a, speed))` for another approach.
    fn next_approach(&self, slot: usize) -> Option<(usize, usize, f64)> {
        let v = self.vehicle(slot);
        match v.route.get(v.leg + 1) {
            Some(&Leg::Stop {
                intersection,
                approach,
                ..
            }) => {
                let (j, dir) = self.approaches[intersection][approach].link.expect("corridor approach");
                Some((intersection, approach, self.link_speed[j][dir]))
            }
            _ => None,
        }
    }

    fn can_leave(&self, slot: usize) -> bool {
        match self.next_approach(slot) {
            Some((k, a, _)) => self.approaches[k][a].has_room(),
            None => true,
        }
    }

    pub(super) fn discharge(&mut self, t: u64) {
        for k in 0..self.approaches.len() {
            let phase = self.heads[k].phase(t);
            for a in 0..5 {
                if !self.approaches[k][a].present {
                    continue;
                }
                let bound = approach_bound(a);
                let serves = phase.is_some_and(|p| Movement::all().any(|m| m.bound == bound && m.phase() == p));
                let app = &mut self.approaches[k][a];
                if !serves {
                    app.credit = 0.0;
                    let queue = std::mem::take(&mut app.queue);
                    for &slot in &queue {
                        self.hold(slot, t);
                    }
                    self.approaches[k][a].queue = queue;
                    continue;
                }
                let rate = app.discharge_rate;
                app.credit = (app.credit + rate).min(rate.max(1.0));
                if app.queue.is_empty() || app.credit < 1.0 {
                    continue;
                }
                let lanes = app.discharge_lanes as usize;
                let mut queue = std::mem::take(&mut app.queue);
                let mut i = 0;
                let mut held: Vec<Movement> = Vec::with_capacity(lanes);
                while i < queue.len() && held.len() < lanes && self.approaches[k][a].credit >= 1.0 {
                    let slot = queue[i];
                    let movement = self.movement_of(slot, a);
                    if held.contains(&movement) {
                        self.hold(slot, t);
                        i += 1;
                        continue;
                    }
                    if self.heads[k].is_green(t, movement) && self.can_leave(slot) {
                        queue.remove(i);
                        self.approaches[k][a].credit -= 1.0;
                        self.approaches[k][a].last_departure = Some(t);
                        self.cross(slot, k, a, t);
                    } else {
                        self.hold(slot, t);
                        held.push(movement);
                        i += 1;
                    }
                }
                if held.len() >= lanes {
                    for &slot in queue.range(i..) {
                        self.hold(slot, t);
                    }
                }
                self.approaches[k][a].queue = queue;
            }
        }
    }

    fn cross(&mut self, slot: usize, k: usize, a: usize, t: u64) {
        let tf = t as f64;
        let half = self.config.intersections[k].square_side / 2.0;
        let next = self.next_approach(slot);
        let link = self.approaches[k][a].link;
        let length = self.approaches[k][a].length;
        let out_speed = next.map(|(_, _, s)| s).unwrap_or(ENTRY_SPEED);

        let v = self.vehicle_mut(slot);
        if let Some(q) = v.queued_at.take() {
            v.idle += tf - q;
        }
        v.distance += length;
        let t_in = v.link_entry.max(v.ready_at - half / v.link_speed);
        let t_out = tf + half / out_speed;
        let link_sample = (v.link_entry, tf);
        v.leg += 1;
        let leg = v.leg;
        let next_leg = v.route.get(leg).copied();

        self.window.square[k].push((t_in.min(tf), t_out));
        if let Some((j, _)) = link {
            self.window.links[j].push(link_sample);
        }
        match (next_leg, next) {
            (None, _) => self.retire(slot, tf),
            (Some(Leg::OnRamp(r)), _) => {
                self.vehicle_mut(slot).leg_times.push(tf);
                self.onramp_queues[r].push_back(slot);
            }
            (Some(Leg::Stop { .. }), Some((k2, a2, speed))) => self.enter_approach(slot, k2, a2, speed, tf),
            (Some(other), _) => unreachable!("leg {other:?} cannot follow a stop line"),
        }
    }
}
