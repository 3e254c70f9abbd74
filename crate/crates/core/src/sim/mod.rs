//! Coupled freeway/arterial simulation.
//!
//! Time advances in one-second ticks. Every [`CTM_STEP`] seconds the freeway
//! cells exchange vehicles; queues are sampled every [`SAMPLE_INTERVAL`]
//! seconds. Vehicles are discrete throughout, so conservation is exact:
//! `entered == exited + in_network` after every tick.
//!
//! Intersection approaches are indexed by heading ([`Bound::index`]); index
//! [`demand::RAMP_APPROACH`] is the off-ramp queue, which moves with the
//! westbound phases.

mod arterial;
pub mod demand;
mod freeway;
pub mod incident;

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{DsoObservation, TscObservation};
use crate::baselines::fixed_time_plan;
use crate::error::{Error, Result};
use crate::signal::{SignalHead, SignalPlan, DEFAULT_LOSS_TIME};
use crate::topology::{validate_topology, Bound, Entrance, IncidentSpec, RampKind, ScenarioConfig, Turn};

use demand::{build_route, Draws, RAMP_APPROACH};
use incident::{plan_incidents, IncidentState};

/// s
pub const CTM_STEP: u64 = 5;
/// s
pub const SAMPLE_INTERVAL: u64 = 30;
/// Speed on entry legs and ramps, m/s.
pub const ENTRY_SPEED: f64 = 60.0 / 3.6;

const EPS: f64 = 1e-9;

/// One element of a vehicle's route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leg {
    Cell(usize),
    OnRamp(usize),
    /// Queue at a stop line, left by performing `turn`.
    Stop { intersection: usize, approach: usize, turn: Turn },
}

#[derive(Clone, Debug)]
pub struct Vehicle {
    pub serial: u64,
    pub origin: Entrance,
    pub route: Vec<Leg>,
    /// Index of the current leg.
    pub leg: usize,
    pub created: f64,
    /// Entry time of each leg reached so far.
    pub leg_times: Vec<f64>,
    pub stops: u32,
    pub idle: f64,
    pub distance: f64,
    /// Freeway: earliest exit from the current cell. Arterial: stop-line arrival.
    ready_at: f64,
    link_entry: f64,
    link_speed: f64,
    queued_at: Option<f64>,
}

/// A vehicle that has left the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub serial: u64,
    pub origin: Entrance,
    pub created: f64,
    pub exited: f64,
    pub stops: u32,
    /// s
    pub idle: f64,
    /// m
    pub distance: f64,
    /// Entered and left on the freeway without using a ramp.
    pub mainline: bool,
    /// Crossed every intersection of the corridor in one direction.
    pub full_corridor: bool,
    pub leg_times: Vec<f64>,
}

impl VehicleRecord {
    pub fn travel_time(&self) -> f64 {
        self.exited - self.created
    }
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub seed: u64,
    /// Hour of day replayed at t = 0.
    pub start_hour: usize,
    /// s
    pub duration: u64,
    /// s
    pub warmup: u64,
    pub incident: IncidentSpec,
    pub keep_records: bool,
}

impl SimOptions {
    pub fn for_scenario(config: &ScenarioConfig) -> Self {
        SimOptions {
            seed: config.seed,
            start_hour: config.demand_level.start_hour(),
            duration: config.duration as u64,
            warmup: config.warmup as u64,
            incident: config.incident.clone(),
            keep_records: true,
        }
    }
}

struct Source {
    entrance: Entrance,
    hourly: Vec<f64>,
    acc: f64,
    pending: VecDeque<usize>,
}

#[derive(Clone, Debug, Default)]
struct ApproachState {
    length: f64,
    storage_lanes: u32,
    discharge_lanes: u32,
    /// veh/s
    discharge_rate: f64,
    spacing: f64,
    /// (link, 0 = northbound / 1 = southbound) feeding this approach
    link: Option<(usize, usize)>,
    transit: VecDeque<usize>,
    queue: VecDeque<usize>,
    credit: f64,
    /// Tick of the most recent departure.
    last_departure: Option<u64>,
    present: bool,
}

impl ApproachState {
    fn occupancy(&self) -> usize {
        self.transit.len() + self.queue.len()
    }

    fn has_room(&self) -> bool {
        (self.occupancy() + 1) as f64 * self.spacing <= self.length * self.storage_lanes as f64 + EPS
    }

    /// The queue discharged within one headway of `t`.
    fn moving(&self, t: u64) -> bool {
        let headway = (1.0 / self.discharge_rate).ceil() as u64;
        self.last_departure.is_some_and(|d| t <= d + headway)
    }

    fn queue_m(&self) -> f64 {
        self.queue.len() as f64 * self.spacing / self.storage_lanes as f64
    }
}

#[derive(Clone, Debug, Default)]
struct CellState {
    vehicles: VecDeque<usize>,
    out_credit: f64,
    in_credit: f64,
    outflow: u64,
    overspill: bool,
}

#[derive(Clone, Debug, Default)]
struct Window {
    start: u64,
    arrivals: Vec<[u64; 5]>,
    queue_sum: Vec<[f64; 5]>,
    samples: u64,
    square: Vec<Vec<(f64, f64)>>,
    links: Vec<Vec<(f64, f64)>>,
}

impl Window {
    fn new(start: u64, k: usize, links: usize) -> Self {
        Window {
            start,
            arrivals: vec![[0; 5]; k],
            queue_sum: vec![[0.0; 5]; k],
            samples: 0,
            square: vec![Vec::new(); k],
            links: vec![Vec::new(); links],
        }
    }
}

/// Raw measurements at one intersection over a control window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntersectionObservation {
    /// Mean of the 30 s off-ramp queue samples, m.
    pub offramp_queue: f64,
    /// Mean approach queues by heading, m.
    pub approach_queue: [f64; 4],
    /// Stop-line arrivals by heading; off-ramp arrivals count as westbound.
    pub arrivals: [u64; 4],
    /// (t_in, t_out) of vehicles crossing the square around the intersection.
    pub square_samples: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowObservation {
    pub start: f64,
    pub end: f64,
    pub intersections: Vec<IntersectionObservation>,
    /// (t_in, t_out) of vehicles traversing each link, both directions.
    pub links: Vec<Vec<(f64, f64)>>,
}

impl WindowObservation {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Arrival flow of an approach, veh/h.
    pub fn demand(&self, k: usize, bound: Bound) -> f64 {
        let len = self.length();
        if len <= 0.0 {
            return 0.0;
        }
        self.intersections[k].arrivals[bound.index()] as f64 * 3600.0 / len
    }

    /// Inputs of the TSC agent at intersection `k`; headings name the side
    /// the traffic comes from.
    pub fn tsc(&self, k: usize) -> TscObservation {
        TscObservation {
            offramp_queue: self.intersections[k].offramp_queue,
            demand_south: self.demand(k, Bound::North),
            demand_east: self.demand(k, Bound::West),
            demand_north: self.demand(k, Bound::South),
            demand_west: self.demand(k, Bound::East),
        }
    }

    /// Inputs of the DSO agent on link `j` (between `j` and `j + 1`).
    pub fn dso(&self, j: usize, cycle_upstream: u32, cycle_downstream: u32, length: f64) -> DsoObservation {
        DsoObservation {
            cycle_upstream: cycle_upstream as f64,
            cycle_downstream: cycle_downstream as f64,
            queue_upstream: self.intersections[j].approach_queue[Bound::North.index()],
            queue_downstream: self.intersections[j + 1].approach_queue[Bound::South.index()],
            link_length: length,
        }
    }
}

/// Queue series sampled after the warm-up.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueSeries {
    /// Per off-ramp (in ramp order), m.
    pub offramp: Vec<Vec<f64>>,
    /// Per intersection and heading, m.
    pub approach: Vec<[Vec<f64>; 4]>,
}

/// Everything the metrics need from a finished run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub warmup: f64,
    pub duration: f64,
    pub num_intersections: usize,
    pub records: Vec<VehicleRecord>,
    pub queues: QueueSeries,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub entered: u64,
    pub exited: u64,
    pub in_network: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.entered == self.exited + self.in_network
    }
}

pub struct World {
    config: ScenarioConfig,
    options: SimOptions,
    t: u64,
    slab: Vec<Option<Vehicle>>,
    free: Vec<usize>,
    next_serial: u64,
    rng: ChaCha8Rng,
    draw_counter: u64,
    sources: Vec<Source>,
    heads: Vec<SignalHead>,
    /// [northbound, southbound] recommended speed per link, m/s
    link_speed: Vec<[f64; 2]>,
    approaches: Vec<[ApproachState; 5]>,
    cells: Vec<CellState>,
    entrance_queue: VecDeque<usize>,
    onramp_queues: Vec<VecDeque<usize>>,
    onramp_credit: Vec<f64>,
    forced_block: Vec<bool>,
    incidents: Vec<IncidentState>,
    entered: u64,
    exited: u64,
    window: Window,
    series: QueueSeries,
    records: Vec<VehicleRecord>,
}

impl World {
    pub fn new(config: &ScenarioConfig, options: SimOptions) -> Result<Self> {
        let diags = validate_topology(config);
        if !diags.is_empty() {
            return Err(Error::Validation(diags));
        }
        if options.warmup >= options.duration {
            return Err(Error::Config(format!(
                "warm-up {} s must be shorter than duration {} s",
                options.warmup, options.duration
            )));
        }
        let dt = CTM_STEP as f64;
        for cell in &config.cells {
            if cell.free_flow_speed * dt > cell.length + EPS || cell.wave_speed() * dt > cell.length + EPS {
                return Err(Error::Config(format!(
                    "cell {} of {} m is shorter than one {CTM_STEP} s step of travel",
                    cell.id, cell.length
                )));
            }
        }
        let k = config.num_intersections();
        let base = fixed_time_plan(DEFAULT_LOSS_TIME)?;
        let approaches = (0..k).map(|i| Self::build_approaches(config, i)).collect();
        let incidents = plan_incidents(&options.incident, &config.cells, options.duration as f64, options.seed)?;
        let num_offramps = config.offramps().count();
        Ok(World {
            t: 0,
            slab: Vec::new(),
            free: Vec::new(),
            next_serial: 0,
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            draw_counter: 0,
            sources: config
                .demands
                .iter()
                .map(|d| Source {
                    entrance: d.entrance,
                    hourly: d.hourly.clone(),
                    acc: 0.0,
                    pending: VecDeque::new(),
                })
                .collect(),
            heads: vec![SignalHead::new(base); k],
            link_speed: config.links.iter().map(|l| [l.speed_limit; 2]).collect(),
            approaches,
            cells: vec![CellState::default(); config.cells.len()],
            entrance_queue: VecDeque::new(),
            onramp_queues: vec![VecDeque::new(); config.ramps.len()],
            onramp_credit: vec![0.0; config.ramps.len()],
            forced_block: vec![false; config.ramps.len()],
            incidents,
            entered: 0,
            exited: 0,
            window: Window::new(0, k, config.links.len()),
            series: QueueSeries {
                offramp: vec![Vec::new(); num_offramps],
                approach: vec![Default::default(); k],
            },
            records: Vec::new(),
            config: config.clone(),
            options,
        })
    }

    fn build_approaches(config: &ScenarioConfig, i: usize) -> [ApproachState; 5] {
        let k = config.num_intersections();
        let inter = &config.intersections[i];
        let mut out: [ApproachState; 5] = Default::default();
        for b in Bound::ALL {
            let a = inter.approach(b);
            let link = match b {
                Bound::North if i > 0 => Some((i - 1, 0)),
                Bound::South if i + 1 < k => Some((i, 1)),
                _ => None,
            };
            let (length, storage_lanes) = match link {
                Some((j, _)) => (config.links[j].length, config.links[j].lanes),
                None => (a.length, a.lanes),
            };
            out[b.index()] = ApproachState {
                length,
                storage_lanes,
                discharge_lanes: a.lanes,
                discharge_rate: a.saturation_flow * a.lanes as f64 / 3600.0,
                spacing: config.vehicle_spacing,
                link,
                present: true,
                ..Default::default()
            };
        }
        if let Some(r) = config.offramp_at(i) {
            out[RAMP_APPROACH] = ApproachState {
                length: r.storage_capacity,
                storage_lanes: r.lanes,
                discharge_lanes: r.lanes,
                discharge_rate: r.saturation_flow * r.lanes as f64 / 3600.0,
                spacing: r.vehicle_spacing,
                link: None,
                present: true,
                ..Default::default()
            };
        }
        out
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn options(&self) -> &SimOptions {
        &self.options
    }

    /// Seconds elapsed.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn finished(&self) -> bool {
        self.t >= self.options.duration
    }

    pub fn plan(&self, k: usize) -> &SignalPlan {
        self.heads[k].plan()
    }

    /// Replaces every plan immediately; for use before the run starts.
    pub fn install_plans(&mut self, plans: &[SignalPlan]) {
        for (h, p) in self.heads.iter_mut().zip(plans) {
            h.install(p.clone());
        }
    }

    /// Queues plans to take over at each signal's next cycle boundary.
    pub fn request_plans(&mut self, plans: &[SignalPlan]) {
        for (h, p) in self.heads.iter_mut().zip(plans) {
            h.request(p.clone());
        }
    }

    /// Sets the recommended speeds of link `j`, km/h, capped by the link's maximum.
    pub fn set_link_speeds(&mut self, j: usize, northbound_kmh: f64, southbound_kmh: f64) {
        let max = self.config.links[j].max_speed;
        self.link_speed[j] = [(northbound_kmh / 3.6).min(max), (southbound_kmh / 3.6).min(max)];
    }

    /// m/s
    pub fn link_speeds(&self, j: usize) -> [f64; 2] {
        self.link_speed[j]
    }

    pub fn incidents(&self) -> &[IncidentState] {
        &self.incidents
    }

    pub fn conservation(&self) -> Conservation {
        Conservation {
            entered: self.entered,
            exited: self.exited,
            in_network: self.entered - self.exited,
        }
    }

    /// Counts vehicles by walking every container; must agree with [`Self::conservation`].
    pub fn count_in_network(&self) -> u64 {
        let arterial: usize = self
            .approaches
            .iter()
            .flat_map(|a| a.iter())
            .map(|a| a.transit.len() + a.queue.len())
            .sum();
        let pending: usize = self.sources.iter().map(|s| s.pending.len()).sum();
        let cells: usize = self.cells.iter().map(|c| c.vehicles.len()).sum();
        let ramps: usize = self.onramp_queues.iter().map(|q| q.len()).sum();
        (arterial + pending + cells + ramps + self.entrance_queue.len()) as u64
    }

    pub fn cell_vehicles(&self, i: usize) -> usize {
        self.cells[i].vehicles.len()
    }

    /// veh/km/lane
    pub fn cell_density(&self, i: usize) -> f64 {
        let c = &self.config.cells[i];
        self.cells[i].vehicles.len() as f64 / (c.length / 1000.0 * c.lanes as f64)
    }

    /// Vehicles that have left cell `i` since the start.
    pub fn cell_outflow(&self, i: usize) -> u64 {
        self.cells[i].outflow
    }

    /// Queue on off-ramp `ramp`, m.
    pub fn offramp_queue(&self, ramp: usize) -> f64 {
        let r = &self.config.ramps[ramp];
        self.approaches[r.connected_intersection][RAMP_APPROACH].queue_m()
    }

    pub fn offramp_blocked(&self, ramp: usize) -> bool {
        let r = &self.config.ramps[ramp];
        self.forced_block[ramp] || self.offramp_queue(ramp) >= r.storage_capacity - EPS
    }

    /// Holds an off-ramp closed regardless of its queue.
    pub fn force_offramp_blocked(&mut self, ramp: usize, blocked: bool) {
        self.forced_block[ramp] = blocked;
    }

    /// Queue at an approach, m.
    pub fn approach_queue(&self, k: usize, bound: Bound) -> f64 {
        self.approaches[k][bound.index()].queue_m()
    }

    /// Advances `dt` seconds; `dt` must divide the freeway step.
    pub fn step(&mut self, dt: u64) -> Result<()> {
        if dt == 0 || !CTM_STEP.is_multiple_of(dt) {
            return Err(Error::Config(format!("step {dt} s must divide {CTM_STEP} s")));
        }
        for _ in 0..dt {
            self.tick();
        }
        Ok(())
    }

    /// Advances to absolute time `t`.
    pub fn run_until(&mut self, t: u64) {
        while self.t < t {
            self.tick();
        }
    }

    fn tick(&mut self) {
        let t = self.t;
        for h in &mut self.heads {
            h.tick(t);
        }
        self.generate(t);
        self.admit(t);
        self.arrive(t);
        self.discharge(t);
        if t.is_multiple_of(CTM_STEP) {
            self.ctm_step(t);
        }
        self.t += 1;
        if self.t.is_multiple_of(SAMPLE_INTERVAL) {
            self.sample();
        }
        debug_assert_eq!(self.count_in_network(), self.entered - self.exited);
    }

    fn hour(&self, t: u64) -> usize {
        (self.options.start_hour + (t / 3600) as usize) % 24
    }

    fn generate(&mut self, t: u64) {
        let hour = self.hour(t);
        let frozen = self.config.frozen_demand;
        for s in 0..self.sources.len() {
            let rate = self.sources[s].hourly[hour];
            let n = demand::arrivals(rate, frozen, &mut self.sources[s].acc, &mut self.rng);
            for _ in 0..n {
                let entrance = self.sources[s].entrance;
                let route = {
                    let mut draws = if frozen {
                        Draws::Sequence(&mut self.draw_counter)
                    } else {
                        Draws::Random(&mut self.rng)
                    };
                    build_route(&self.config, entrance, &mut draws)
                };
                let slot = self.spawn(entrance, route, t as f64);
                match entrance {
                    Entrance::Freeway => self.entrance_queue.push_back(slot),
                    Entrance::Arterial { .. } => self.sources[s].pending.push_back(slot),
                }
            }
        }
    }

    fn spawn(&mut self, origin: Entrance, route: Vec<Leg>, t: f64) -> usize {
        let v = Vehicle {
            serial: self.next_serial,
            origin,
            route,
            leg: 0,
            created: t,
            leg_times: Vec::new(),
            stops: 0,
            idle: 0.0,
            distance: 0.0,
            ready_at: t,
            link_entry: t,
            link_speed: ENTRY_SPEED,
            queued_at: None,
        };
        self.next_serial += 1;
        self.entered += 1;
        match self.free.pop() {
            Some(slot) => {
                self.slab[slot] = Some(v);
                slot
            }
            None => {
                self.slab.push(Some(v));
                self.slab.len() - 1
            }
        }
    }

    fn vehicle(&self, slot: usize) -> &Vehicle {
        self.slab[slot].as_ref().expect("live vehicle")
    }

    fn vehicle_mut(&mut self, slot: usize) -> &mut Vehicle {
        self.slab[slot].as_mut().expect("live vehicle")
    }

    fn retire(&mut self, slot: usize, t: f64) {
        let v = self.slab[slot].take().expect("live vehicle");
        self.free.push(slot);
        self.exited += 1;
        if !self.options.keep_records {
            return;
        }
        let n = self.config.num_intersections();
        let mainline = v.origin == Entrance::Freeway && v.route.iter().all(|l| matches!(l, Leg::Cell(_)));
        let full_corridor = matches!(v.origin, Entrance::Arterial { .. }) && demand::is_full_corridor(&v.route, n);
        self.records.push(VehicleRecord {
            serial: v.serial,
            origin: v.origin,
            created: v.created,
            exited: t,
            stops: v.stops,
            idle: v.idle,
            distance: v.distance,
            mainline,
            full_corridor,
            leg_times: v.leg_times,
        });
    }

    fn sample(&mut self) {
        let after_warmup = self.t > self.options.warmup;
        for (k, apps) in self.approaches.iter().enumerate() {
            for (a, app) in apps.iter().enumerate() {
                if app.present {
                    let q = app.queue_m();
                    self.window.queue_sum[k][a] += q;
                    if after_warmup && a < 4 {
                        self.series.approach[k][a].push(q);
                    }
                }
            }
        }
        if after_warmup {
            let ramps: Vec<usize> = self.config.offramps().map(|r| r.id).collect();
            for (i, r) in ramps.into_iter().enumerate() {
                let q = self.offramp_queue(r);
                self.series.offramp[i].push(q);
            }
        }
        self.window.samples += 1;
    }

    /// Starts a fresh measurement window at the current time.
    pub fn reset_window(&mut self) {
        self.window = Window::new(self.t, self.config.num_intersections(), self.config.links.len());
    }

    /// Measurements since the last reset; starts a new window.
    pub fn observe(&mut self) -> WindowObservation {
        let w = std::mem::replace(
            &mut self.window,
            Window::new(self.t, self.config.num_intersections(), self.config.links.len()),
        );
        let mean = |sum: f64| if w.samples == 0 { 0.0 } else { sum / w.samples as f64 };
        let intersections = (0..self.config.num_intersections())
            .map(|k| {
                let arr = w.arrivals[k];
                IntersectionObservation {
                    offramp_queue: mean(w.queue_sum[k][RAMP_APPROACH]),
                    approach_queue: std::array::from_fn(|a| mean(w.queue_sum[k][a])),
                    arrivals: [arr[0], arr[1], arr[2], arr[3] + arr[RAMP_APPROACH]],
                    square_samples: w.square[k].clone(),
                }
            })
            .collect();
        WindowObservation {
            start: w.start as f64,
            end: self.t as f64,
            intersections,
            links: w.links,
        }
    }

    /// Finished-vehicle records collected so far.
    pub fn records(&self) -> &[VehicleRecord] {
        &self.records
    }

    /// Consumes the world into the data the metrics need.
    pub fn into_trace(self) -> RunTrace {
        RunTrace {
            warmup: self.options.warmup as f64,
            duration: self.options.duration as f64,
            num_intersections: self.config.num_intersections(),
            records: self.records,
            queues: self.series,
        }
    }

    fn incident_factor(&self, cell: usize, t: f64) -> f64 {
        self.incidents
            .iter()
            .filter(|i| i.cell == cell && i.active(t))
            .map(|i| i.capacity_factor)
            .product()
    }

    /// Capacity of cell `i` at the current time, veh/h, incident included.
    pub fn cell_effective_capacity(&self, i: usize) -> f64 {
        let mut cap = self.config.cells[i].capacity * self.incident_factor(i, self.t as f64);
        if self.cells[i].overspill {
            cap *= incident::side_lane_factor(&self.config.cells[i]);
        }
        cap
    }

    pub(crate) fn offramp_of_cell(&self, i: usize) -> Option<usize> {
        self.config.cells[i]
            .offramp
            .filter(|&r| self.config.ramps[r].kind == RampKind::Off)
    }
}
