//! Training and evaluation loops.
//!
//! Control decisions happen every control cycle from the first cycle
//! boundary on. A transition is learned from only when its whole reward
//! window lies after the warm-up.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    admissible_dso_actions, area_travel_time, discretize_dso, discretize_tsc, dso_reward, dso_state_upstream_cycle,
    tsc_action_ids, tsc_reward, ControlParameters, DsoAction,
};
use crate::baselines::{fixed_time_plan, fixed_time_speed_kmh, maxband_offsets, webster_g1, FIXED_CYCLE, FIXED_G2, PROGRESSION_SPEED};
use crate::coordinator::{unify, UnificationPolicy};
use crate::error::{Error, Result};
use crate::metrics::{summarize, MetricsReport, StrategySummary};
use crate::rl::{mix64, QTable, QTableFile, Transition};
use crate::signal::{apply_offset, compute_splits, SignalPlan, TscAction, DEFAULT_LOSS_TIME};
use crate::sim::{RunTrace, SimOptions, WindowObservation, World};
use crate::topology::{ArterialStrategy, Bound, DemandLevel, Entrance, IncidentMode, IncidentSpec, ScenarioConfig};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Seed of replication `r` of an evaluation with base seed `base`.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    mix64(base ^ mix64(r as u64))
}

/// Seeds of training episode `e`: (simulation, action selection).
pub fn episode_seeds(base: u64, e: usize) -> (u64, u64) {
    let s = mix64(base.wrapping_add(0x7261_696e) ^ mix64(e as u64));
    (s, mix64(s))
}

/// The two shared Q-tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TableBundle {
    pub tsc: QTable<f64>,
    pub dso: QTable<f64>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    schema_version: u32,
    tsc: QTableFile<f64>,
    dso: QTableFile<f64>,
}

impl TableBundle {
    pub fn new(seed: u64) -> Self {
        TableBundle {
            tsc: QTable::new(mix64(seed ^ 0x74_7363)),
            dso: QTable::new(mix64(seed ^ 0x64_736f)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BundleFile {
            schema_version: BUNDLE_SCHEMA_VERSION,
            tsc: self.tsc.to_file(),
            dso: self.dso.to_file(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            schema_version: u32,
        }
        let probe: Probe = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if probe.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: probe.schema_version,
                expected: BUNDLE_SCHEMA_VERSION,
            });
        }
        let file: BundleFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(TableBundle {
            tsc: QTable::from_file(file.tsc)?,
            dso: QTable::from_file(file.dso)?,
        })
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

// ---------------------------------------------------------------------------
// Decisions

enum Selector<'a> {
    Softmax(&'a mut ChaCha8Rng),
    Greedy,
}

impl Selector<'_> {
    fn pick(&mut self, table: &QTable<f64>, state: u64, actions: &[u32]) -> Result<u32> {
        match self {
            Selector::Softmax(rng) => table.softmax_select(state, actions, &mut **rng),
            Selector::Greedy => table.greedy(state, actions),
        }
    }
}

/// What every signal and link runs for one control cycle.
#[derive(Clone, Debug, PartialEq)]
struct Decision {
    tsc_states: Vec<u64>,
    tsc_actions: Vec<u32>,
    dso_states: Vec<u64>,
    dso_actions: Vec<u32>,
    plans: Vec<SignalPlan>,
    /// km/h, [northbound, southbound] per link
    speeds: Vec<[f64; 2]>,
}

fn tsc_states(obs: &WindowObservation, k: usize) -> Vec<u64> {
    (0..k).map(|i| discretize_tsc(&obs.tsc(i)).1).collect()
}

fn dso_states(config: &ScenarioConfig, obs: &WindowObservation, cycles: &[u32]) -> Vec<u64> {
    config
        .links
        .iter()
        .enumerate()
        .map(|(j, l)| discretize_dso(&obs.dso(j, cycles[j], cycles[j + 1], l.length)).1)
        .collect()
}

/// Plans with relative offsets chained from signal 0, which stays at 0.
fn build_plans(applied: &[TscAction], dso: &[u32], loss_time: u32) -> Result<Vec<SignalPlan>> {
    let mut plans = applied
        .iter()
        .map(|a| compute_splits(a, loss_time))
        .collect::<Result<Vec<_>>>()?;
    for (j, &id) in dso.iter().enumerate() {
        let action = DsoAction::decode(id).ok_or_else(|| Error::InvalidAction(format!("DSO id {id}")))?;
        plans[j + 1] = apply_offset(&plans[j + 1], action.offset, &plans[j])?;
    }
    Ok(plans)
}

fn speeds_of(dso: &[u32]) -> Vec<[f64; 2]> {
    dso.iter()
        .map(|&id| {
            let a = DsoAction::decode(id).expect("selected from admissible ids");
            [a.speed_downstream as f64, a.speed_upstream as f64]
        })
        .collect()
}

fn apply(world: &mut World, d: &Decision) {
    world.request_plans(&d.plans);
    for (j, s) in d.speeds.iter().enumerate() {
        world.set_link_speeds(j, s[0], s[1]);
    }
}

/// Rewards of the window just observed, per signal and per link.
fn rewards(config: &ScenarioConfig, obs: &WindowObservation, params: &ControlParameters) -> Result<(Vec<f64>, Vec<f64>)> {
    let travel = |samples: &[(f64, f64)]| match area_travel_time(samples) {
        Err(Error::NoTraversals) => Ok(params.control_cycle),
        other => other,
    };
    let tsc = obs
        .intersections
        .iter()
        .map(|i| tsc_reward(i.offramp_queue, travel(&i.square_samples)?, params))
        .collect::<Result<Vec<f64>>>()?;
    let dso = config
        .links
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let up = obs.intersections[j].approach_queue[Bound::North.index()];
            let down = obs.intersections[j + 1].approach_queue[Bound::South.index()];
            dso_reward(up, down, travel(&obs.links[j])?, l.length, params)
        })
        .collect::<Result<Vec<f64>>>()?;
    for (what, r) in tsc.iter().map(|r| ("TSC", r)).chain(dso.iter().map(|r| ("DSO", r))) {
        if !r.is_finite() || !(0.0..=1.0).contains(r) {
            return Err(Error::Divergence(format!("{what} reward {r} at t = {}", obs.end)));
        }
    }
    Ok((tsc, dso))
}

// ---------------------------------------------------------------------------
// Training

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    /// s
    pub episode_length: u64,
    /// Hours the demand window advances between episodes.
    pub window_shift_hours: usize,
    /// s
    pub warmup: u64,
    /// s
    pub control_cycle: u64,
    pub incident_probability: f64,
    pub max_episodes: usize,
    /// Episodes between convergence checks.
    pub check_every: usize,
    pub seed: u64,
    pub loss_time: u32,
    pub params: ControlParameters,
    /// Hour of day of the first episode.
    pub start_hour: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            episode_length: 12 * 3600,
            window_shift_hours: 1,
            warmup: 600,
            control_cycle: 300,
            incident_probability: 0.25,
            max_episodes: 500,
            check_every: 1,
            seed: 0,
            loss_time: DEFAULT_LOSS_TIME,
            params: ControlParameters::default(),
            start_hour: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.episode_length {
            return Err(Error::Config("warm-up must be shorter than the episode".into()));
        }
        if !(0.0..=1.0).contains(&self.incident_probability) {
            return Err(Error::Config("incident probability must lie in [0,1]".into()));
        }
        if self.control_cycle == 0 || self.check_every == 0 {
            return Err(Error::Config("control cycle and check cadence must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub start_hour: usize,
    pub tsc_updates: usize,
    pub dso_updates: usize,
    pub tsc_mean_reward: f64,
    pub dso_mean_reward: f64,
    pub tsc_max_delta: f64,
    pub dso_max_delta: f64,
    pub tsc_converged_fraction: f64,
    pub dso_converged_fraction: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub tables: TableBundle,
    pub log: Vec<EpisodeLog>,
    pub converged: bool,
}

/// Both tables pass the convergence test; a table with nothing to learn
/// (no links) does not hold training back.
pub fn tables_converged(tables: &TableBundle, num_links: usize) -> bool {
    tables.tsc.converged() && (num_links == 0 || tables.dso.converged())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs training episodes until convergence or the episode budget.
/// `on_episode` sees each log entry as it is produced.
pub fn train(
    config: &ScenarioConfig,
    training: &TrainingConfig,
    tables: Option<TableBundle>,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<TrainingOutcome> {
    training.validate()?;
    let mut tables = tables.unwrap_or_else(|| TableBundle::new(training.seed));
    let mut log = Vec::new();
    let mut converged = false;
    for e in 0..training.max_episodes {
        let entry = train_episode(config, training, &mut tables, e)?;
        on_episode(&entry);
        converged = entry.converged;
        log.push(entry);
        if converged {
            break;
        }
    }
    Ok(TrainingOutcome { tables, log, converged })
}

fn train_episode(config: &ScenarioConfig, training: &TrainingConfig, tables: &mut TableBundle, e: usize) -> Result<EpisodeLog> {
    let k = config.num_intersections();
    let num_links = config.links.len();
    let (sim_seed, select_seed) = episode_seeds(training.seed, e);
    let start_hour = (training.start_hour + e * training.window_shift_hours) % 24;
    let incident = if config.cells.is_empty() || training.incident_probability == 0.0 {
        IncidentSpec::default()
    } else {
        IncidentSpec {
            mode: IncidentMode::Stochastic,
            probability_per_hour: training.incident_probability,
            ..config.incident.clone()
        }
    };
    let mut world = World::new(
        config,
        SimOptions {
            seed: sim_seed,
            start_hour,
            duration: training.episode_length,
            warmup: training.warmup,
            incident,
            keep_records: false,
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(select_seed);
    let all_tsc = tsc_action_ids();
    let policy = UnificationPolicy { enabled: false };

    let mut prev: Option<(u64, Decision)> = None;
    let (mut tsc_r, mut dso_r) = (Vec::new(), Vec::new());
    let (mut tsc_delta, mut dso_delta) = (0.0f64, 0.0f64);
    let cycle = training.control_cycle;
    let mut t = cycle;
    while t <= training.episode_length {
        world.run_until(t);
        let obs = world.observe();
        let learn = prev.as_ref().filter(|(start, _)| *start >= training.warmup).map(|(_, d)| d);
        let (r_tsc, r_dso) = match learn {
            Some(_) => rewards(config, &obs, &training.params)?,
            None => (Vec::new(), Vec::new()),
        };

        let states = tsc_states(&obs, k);
        if let Some(d) = learn {
            for i in 0..k {
                let delta = tables.tsc.update(&Transition {
                    state: d.tsc_states[i],
                    action: d.tsc_actions[i],
                    reward: r_tsc[i],
                    next_state: states[i],
                    next_actions: &all_tsc,
                })?;
                tsc_delta = tsc_delta.max(delta);
            }
            tsc_r.extend_from_slice(&r_tsc);
        }
        let last = t == training.episode_length;
        let mut selector = Selector::Softmax(&mut rng);
        let intended = if last {
            // terminal boundary: the running plans stand in for a next choice
            prev.as_ref().map(|(_, d)| d.tsc_actions.clone()).unwrap_or_default()
        } else {
            states
                .iter()
                .map(|&s| selector.pick(&tables.tsc, s, &all_tsc))
                .collect::<Result<Vec<u32>>>()?
        };
        let applied = unify(&decode_all(&intended)?, policy);
        let cycles: Vec<u32> = applied.iter().map(|a| a.cycle).collect();
        if last && cycles.is_empty() {
            break;
        }
        let dstates = dso_states(config, &obs, &cycles);
        if let Some(d) = learn {
            for j in 0..num_links {
                let next_actions = admissible_dso_actions(dso_state_upstream_cycle(dstates[j]));
                let delta = tables.dso.update(&Transition {
                    state: d.dso_states[j],
                    action: d.dso_actions[j],
                    reward: r_dso[j],
                    next_state: dstates[j],
                    next_actions: &next_actions,
                })?;
                dso_delta = dso_delta.max(delta);
            }
            dso_r.extend_from_slice(&r_dso);
        }
        if last {
            break;
        }
        let dso_actions = dstates
            .iter()
            .enumerate()
            .map(|(j, &s)| selector.pick(&tables.dso, s, &admissible_dso_actions(cycles[j])))
            .collect::<Result<Vec<u32>>>()?;
        let decision = Decision {
            plans: build_plans(&applied, &dso_actions, training.loss_time)?,
            speeds: speeds_of(&dso_actions),
            tsc_states: states,
            tsc_actions: intended,
            dso_states: dstates,
            dso_actions,
        };
        apply(&mut world, &decision);
        prev = Some((t, decision));
        t += cycle;
    }

    let check = (e + 1).is_multiple_of(training.check_every);
    let entry = EpisodeLog {
        episode: e,
        start_hour,
        tsc_updates: tsc_r.len(),
        dso_updates: dso_r.len(),
        tsc_mean_reward: mean(&tsc_r),
        dso_mean_reward: mean(&dso_r),
        tsc_max_delta: tsc_delta,
        dso_max_delta: dso_delta,
        tsc_converged_fraction: tables.tsc.converged_fraction(),
        dso_converged_fraction: tables.dso.converged_fraction(),
        converged: check && tables_converged(tables, num_links),
    };
    info!(
        "episode {e} (hour {start_hour}): TSC reward {:.4} over {} updates, DSO reward {:.4} over {} updates, converged {:.3}/{:.3}",
        entry.tsc_mean_reward,
        entry.tsc_updates,
        entry.dso_mean_reward,
        entry.dso_updates,
        entry.tsc_converged_fraction,
        entry.dso_converged_fraction
    );
    Ok(entry)
}

fn decode_all(ids: &[u32]) -> Result<Vec<TscAction>> {
    ids.iter()
        .map(|&id| TscAction::decode(id).ok_or_else(|| Error::InvalidAction(format!("TSC id {id}"))))
        .collect()
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationConfig {
    /// s
    pub duration: u64,
    /// s
    pub warmup: u64,
    /// s
    pub control_cycle: u64,
    pub incident: IncidentMode,
    /// s
    pub incident_start: f64,
    /// s
    pub incident_duration: f64,
    pub replications: usize,
    pub demand_level: DemandLevel,
    pub strategies: Vec<ArterialStrategy>,
    pub seed: u64,
    pub loss_time: u32,
    pub params: ControlParameters,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            duration: 2400,
            warmup: 600,
            control_cycle: 300,
            incident: IncidentMode::Off,
            incident_start: 600.0,
            incident_duration: 1200.0,
            replications: 10,
            demand_level: DemandLevel::Moderate,
            strategies: ArterialStrategy::ALL.to_vec(),
            seed: 0,
            loss_time: DEFAULT_LOSS_TIME,
            params: ControlParameters::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.duration {
            return Err(Error::Config("warm-up must be shorter than the run".into()));
        }
        if self.control_cycle == 0 || self.replications == 0 || self.strategies.is_empty() {
            return Err(Error::Config(
                "control cycle, replications and strategy list must be nonempty".into(),
            ));
        }
        Ok(())
    }

    fn incident_spec(&self, config: &ScenarioConfig) -> IncidentSpec {
        if self.incident == IncidentMode::Off || config.cells.is_empty() {
            return IncidentSpec::default();
        }
        IncidentSpec {
            mode: self.incident,
            start: self.incident_start,
            duration: self.incident_duration,
            ..config.incident.clone()
        }
    }
}

/// One control cycle as recorded in a trace file (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub strategy: ArterialStrategy,
    pub seed: u64,
    /// End of the observed window, s.
    pub t: f64,
    pub cycles: Vec<u32>,
    pub greens: Vec<[u32; 6]>,
    pub offsets: Vec<u32>,
    /// km/h, [northbound, southbound] per link
    pub speeds: Vec<[f64; 2]>,
    /// Rewards earned over the window ending at `t`.
    pub tsc_rewards: Vec<f64>,
    pub dso_rewards: Vec<f64>,
    /// Window-mean off-ramp queue per intersection, m.
    pub offramp_queue: Vec<f64>,
    /// Window-mean approach queues per intersection by heading, m.
    pub approach_queue: Vec<[f64; 4]>,
}

/// Webster-style split of the bandwidth baseline from the design-hour demand.
pub fn maxband_split(config: &ScenarioConfig, hour: usize) -> f64 {
    let k = config.num_intersections();
    let rate = |e: Entrance| config.demand_at(e, hour);
    let per_lane = |flow: f64, i: usize, b: Bound| flow / config.intersections[i].approach(b).lanes as f64;
    let north = per_lane(rate(Entrance::Arterial { intersection: 0, bound: Bound::North }), 0, Bound::North);
    let south = per_lane(
        rate(Entrance::Arterial { intersection: k - 1, bound: Bound::South }),
        k - 1,
        Bound::South,
    );
    let freeway = rate(Entrance::Freeway);
    let cross: Vec<f64> = (0..k)
        .map(|i| {
            let east = per_lane(rate(Entrance::Arterial { intersection: i, bound: Bound::East }), i, Bound::East);
            let ramp = config
                .offramp_at(i)
                .map(|r| freeway * r.split / r.lanes as f64)
                .unwrap_or(0.0);
            let west = per_lane(rate(Entrance::Arterial { intersection: i, bound: Bound::West }), i, Bound::West);
            east.max(west).max(ramp)
        })
        .collect();
    webster_g1(north.max(south), mean(&cross))
}

/// Plans of the bandwidth baseline.
pub fn maxband_plans(config: &ScenarioConfig, hour: usize, loss_time: u32, seed: u64) -> Result<Vec<SignalPlan>> {
    let g1 = maxband_split(config, hour);
    let base = SignalPlan::from_ratios(FIXED_CYCLE, g1, FIXED_G2, loss_time)?;
    let plans = vec![base.clone(); config.num_intersections()];
    let lengths: Vec<f64> = config.links.iter().map(|l| l.length).collect();
    let offsets = maxband_offsets(&plans, &lengths, PROGRESSION_SPEED, seed)?;
    Ok(offsets.into_iter().map(|o| base.clone().with_offset(o)).collect())
}

fn record(strategy: ArterialStrategy, seed: u64, world: &World, obs: &WindowObservation, r: (Vec<f64>, Vec<f64>)) -> CycleRecord {
    let k = world.config().num_intersections();
    CycleRecord {
        strategy,
        seed,
        t: obs.end,
        cycles: (0..k).map(|i| world.plan(i).cycle).collect(),
        greens: (0..k).map(|i| world.plan(i).greens).collect(),
        offsets: (0..k).map(|i| world.plan(i).absolute_offset).collect(),
        speeds: (0..world.config().links.len())
            .map(|j| world.link_speeds(j).map(|v| (v * 3.6 * 1e6).round() / 1e6))
            .collect(),
        tsc_rewards: r.0,
        dso_rewards: r.1,
        offramp_queue: obs.intersections.iter().map(|i| i.offramp_queue).collect(),
        approach_queue: obs.intersections.iter().map(|i| i.approach_queue).collect(),
    }
}

/// Runs one strategy for one replication.
pub fn run_strategy(
    config: &ScenarioConfig,
    eval: &EvaluationConfig,
    strategy: ArterialStrategy,
    seed: u64,
    tables: Option<&TableBundle>,
    mut trace: Option<&mut Vec<CycleRecord>>,
) -> Result<RunTrace> {
    let tables = match (strategy.is_learned(), tables) {
        (true, None) => return Err(Error::MissingTables(strategy.label().to_string())),
        (_, t) => t,
    };
    let hour = eval.demand_level.start_hour();
    let mut world = World::new(
        config,
        SimOptions {
            seed,
            start_hour: hour,
            duration: eval.duration,
            warmup: eval.warmup,
            incident: eval.incident_spec(config),
            keep_records: true,
        },
    )?;
    let k = config.num_intersections();
    match strategy {
        ArterialStrategy::Fac => world.install_plans(&vec![fixed_time_plan(eval.loss_time)?; k]),
        ArterialStrategy::Maxband => world.install_plans(&maxband_plans(config, hour, eval.loss_time, seed)?),
        ArterialStrategy::Qac | ArterialStrategy::Qacu => {
            world.install_plans(&vec![fixed_time_plan(eval.loss_time)?; k])
        }
    }
    for j in 0..config.links.len() {
        let v = fixed_time_speed_kmh();
        world.set_link_speeds(j, v, v);
    }
    let policy = UnificationPolicy {
        enabled: strategy == ArterialStrategy::Qacu,
    };
    let all_tsc = tsc_action_ids();
    let mut t = eval.control_cycle;
    while t <= eval.duration {
        world.run_until(t);
        let obs = world.observe();
        if let Some(trace) = trace.as_deref_mut() {
            let r = rewards(config, &obs, &eval.params)?;
            trace.push(record(strategy, seed, &world, &obs, r));
        }
        if t == eval.duration {
            break;
        }
        if let Some(tables) = tables.filter(|_| strategy.is_learned()) {
            let mut selector = Selector::Greedy;
            let states = tsc_states(&obs, k);
            let intended = states
                .iter()
                .map(|&s| selector.pick(&tables.tsc, s, &all_tsc))
                .collect::<Result<Vec<u32>>>()?;
            let applied = unify(&decode_all(&intended)?, policy);
            let cycles: Vec<u32> = applied.iter().map(|a| a.cycle).collect();
            let dstates = dso_states(config, &obs, &cycles);
            let dso_actions = dstates
                .iter()
                .enumerate()
                .map(|(j, &s)| selector.pick(&tables.dso, s, &admissible_dso_actions(cycles[j])))
                .collect::<Result<Vec<u32>>>()?;
            let decision = Decision {
                plans: build_plans(&applied, &dso_actions, eval.loss_time)?,
                speeds: speeds_of(&dso_actions),
                tsc_states: states,
                tsc_actions: intended,
                dso_states: dstates,
                dso_actions,
            };
            debug!("t = {t}: {:?}", decision.plans);
            apply(&mut world, &decision);
        }
        t += eval.control_cycle;
    }
    world.run_until(eval.duration);
    Ok(world.into_trace())
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Strategy-major, replication order within a strategy.
    pub reports: Vec<MetricsReport>,
    pub summaries: Vec<StrategySummary>,
    pub trace: Vec<CycleRecord>,
}

/// Evaluates every strategy over the same replication seeds.
pub fn evaluate(
    config: &ScenarioConfig,
    eval: &EvaluationConfig,
    tables: Option<&TableBundle>,
    keep_trace: bool,
) -> Result<Evaluation> {
    eval.validate()?;
    for s in &eval.strategies {
        if s.is_learned() && tables.is_none() {
            return Err(Error::MissingTables(s.label().to_string()));
        }
    }
    let mut reports = Vec::new();
    let mut trace = Vec::new();
    for &strategy in &eval.strategies {
        for r in 0..eval.replications {
            let seed = replication_seed(eval.seed, r);
            let run = run_strategy(config, eval, strategy, seed, tables, keep_trace.then_some(&mut trace))?;
            let report = MetricsReport::from_trace(&config.name, strategy, seed, &run, &config.emissions);
            info!(
                "{strategy} replication {r}: arterial {:.1} s, stops {:.2}, freeway {:.1} s, off-ramp queue {:.1} m",
                report.arterial_travel_time.value,
                report.stops.value,
                report.freeway_travel_time.value,
                report.offramp_queue.value
            );
            reports.push(report);
        }
    }
    let summaries = summarize(&reports);
    Ok(Evaluation {
        reports,
        summaries,
        trace,
    })
}

// ---------------------------------------------------------------------------
// Traces

pub fn write_trace<W: Write>(records: &[CycleRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Serialize(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<trace>", e))?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<CycleRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::CorruptTrace(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::CorruptTrace(format!("line {}: {e}", n + 1)))?;
        out.push(r);
    }
    Ok(out)
}

fn list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Human-readable timeline, one block per control cycle.
pub fn render_timeline(records: &[CycleRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{} seed {} t={:>6.0}s", r.strategy, r.seed, r.t);
        for (i, ((c, g), o)) in r.cycles.iter().zip(&r.greens).zip(&r.offsets).enumerate() {
            let _ = writeln!(
                out,
                "  I{}: cycle {:>3} greens [{}] offset {:>3} | off-ramp {:>6.1} m approach [{}] m | reward {:.3}",
                i + 1,
                c,
                list(g),
                o,
                r.offramp_queue.get(i).copied().unwrap_or(0.0),
                r.approach_queue
                    .get(i)
                    .map(|q| q.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(" "))
                    .unwrap_or_default(),
                r.tsc_rewards.get(i).copied().unwrap_or(0.0),
            );
        }
        for (j, s) in r.speeds.iter().enumerate() {
            let _ = writeln!(
                out,
                "  L{}: {:.0}/{:.0} km/h | reward {:.3}",
                j + 1,
                s[0],
                s[1],
                r.dso_rewards.get(j).copied().unwrap_or(0.0)
            );
        }
    }
    out
}
