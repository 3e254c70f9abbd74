//! Cell transmission on the freeway mainline.
//!
//! Each cell keeps its vehicles in entry order. Per step a cell may send the
//! vehicles that have crossed it at free-flow speed, up to its capacity
//! credit; the next cell accepts up to `min(capacity, w/L * (N_jam - n))`.
//! Both budgets are fixed from the state at the start of the step.
//!
//! Vehicles bound for a blocked off-ramp stay in their cell and occupy the
//! side lane: mainline traffic passes them but the cell's outflow capacity
//! drops to `(lanes - 1) / lanes`.

use std::collections::VecDeque;

use super::incident::side_lane_factor;
use super::{Leg, World, CTM_STEP, EPS};

impl World {
    pub(super) fn ctm_step(&mut self, t: u64) {
        let n = self.cells.len();
        if n == 0 {
            return;
        }
        let tf = t as f64;
        let dt = CTM_STEP as f64;

        for i in 0..n {
            let ramp_blocked = self.offramp_of_cell(i).is_some_and(|r| self.offramp_blocked(r));
            let holds_exiting = ramp_blocked
                && self.cells[i]
                    .vehicles
                    .iter()
                    .any(|&s| self.next_leg_is_ramp(s));
            self.cells[i].overspill = holds_exiting;
        }

        let mut receive = vec![0usize; n];
        for i in 0..n {
            let cell = &self.config.cells[i];
            let factor = self.incident_factor(i, tf);
            let cap_in = cell.capacity * factor * dt / 3600.0;
            let mut cap_out = cap_in;
            if self.cells[i].overspill {
                cap_out *= side_lane_factor(cell);
            }
            let state = &mut self.cells[i];
            state.in_credit = (state.in_credit + cap_in).min(cap_in.max(1.0));
            state.out_credit = (state.out_credit + cap_out).min(cap_out.max(1.0));
            let room = cell.wave_speed() * dt / cell.length * (cell.jam_vehicles() - state.vehicles.len() as f64);
            receive[i] = state.in_credit.floor().min(room.max(0.0).floor()) as usize;
        }

        // Share of each merge cell's intake held back for its on-ramp.
        let mut reserve = vec![0usize; n];
        for i in 0..n {
            if let Some(r) = self.config.cells[i].onramp {
                let ramp = &self.config.ramps[r];
                let cap = ramp.saturation_flow * ramp.lanes as f64 * dt / 3600.0;
                self.onramp_credit[r] = (self.onramp_credit[r] + cap).min(cap.max(1.0));
                let share = ramp.lanes as f64 / (ramp.lanes + self.config.cells[i].lanes) as f64;
                let want = self.onramp_queues[r].len().min(self.onramp_credit[r].floor() as usize);
                reserve[i] = want.min((receive[i] as f64 * share).ceil() as usize);
            }
        }
        let mut used = vec![0usize; n];

        for i in (0..n).rev() {
            let budget = self.cells[i].out_credit.floor() as usize;
            let queue = std::mem::take(&mut self.cells[i].vehicles);
            let mut keep = VecDeque::with_capacity(queue.len());
            let mut moved = 0;
            let mut stuck = false;
            for slot in queue {
                if stuck || moved >= budget || self.vehicle(slot).ready_at > tf + EPS {
                    stuck = true;
                    keep.push_back(slot);
                    continue;
                }
                let v = self.vehicle(slot);
                match v.route.get(v.leg + 1).copied() {
                    None => {
                        moved += 1;
                        self.leave_cell(slot, i);
                        self.retire(slot, tf);
                    }
                    Some(Leg::Cell(j)) => {
                        if used[j] + reserve[j] < receive[j] {
                            used[j] += 1;
                            moved += 1;
                            self.leave_cell(slot, i);
                            self.enter_cell(slot, j, tf);
                        } else {
                            stuck = true;
                            keep.push_back(slot);
                        }
                    }
                    Some(Leg::Stop { intersection, .. }) => {
                        let r = self.offramp_of_cell(i).expect("exit leg follows an off-ramp cell");
                        if self.offramp_blocked(r) {
                            keep.push_back(slot);
                        } else {
                            moved += 1;
                            self.leave_cell(slot, i);
                            self.enter_offramp(slot, intersection, t);
                        }
                    }
                    Some(other) => unreachable!("leg {other:?} cannot follow a cell"),
                }
            }
            self.cells[i].vehicles = keep;
            self.cells[i].out_credit -= moved as f64;
        }

        for i in 0..n {
            let mut free = receive[i] - used[i];
            if let Some(r) = self.config.cells[i].onramp {
                let mut credit = self.onramp_credit[r];
                while free > 0 && credit >= 1.0 {
                    let Some(slot) = self.onramp_queues[r].pop_front() else { break };
                    credit -= 1.0;
                    free -= 1;
                    let v = self.vehicle_mut(slot);
                    v.leg += 1;
                    self.enter_cell(slot, i, tf);
                }
                self.onramp_credit[r] = credit;
            }
            if i == 0 {
                while free > 0 {
                    let Some(slot) = self.entrance_queue.pop_front() else { break };
                    free -= 1;
                    self.enter_cell(slot, 0, tf);
                }
            }
            self.cells[i].in_credit -= (receive[i] - free) as f64;
        }
    }

    fn next_leg_is_ramp(&self, slot: usize) -> bool {
        let v = self.vehicle(slot);
        matches!(v.route.get(v.leg + 1), Some(Leg::Stop { .. }))
    }

    fn leave_cell(&mut self, slot: usize, i: usize) {
        let length = self.config.cells[i].length;
        self.cells[i].outflow += 1;
        let v = self.vehicle_mut(slot);
        v.distance += length;
        v.leg += 1;
    }

    fn enter_cell(&mut self, slot: usize, i: usize, tf: f64) {
        let cell = &self.config.cells[i];
        let ready = tf + cell.length / cell.free_flow_speed;
        let v = self.vehicle_mut(slot);
        debug_assert!(matches!(v.route[v.leg], Leg::Cell(c) if c == i));
        v.ready_at = ready;
        v.leg_times.push(tf);
        self.cells[i].vehicles.push_back(slot);
    }
}
