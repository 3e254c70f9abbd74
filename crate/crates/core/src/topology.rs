//! Road-network data model and scenario files.
//!
//! A scenario describes one corridor: an ordered chain of signalized
//! intersections (index 0 at the south end) joined by arterial links, a
//! freeway of CTM cells running parallel to it, and the ramps that couple the
//! two. Ramps always attach to the east leg of an intersection.
//!
//! Elements are identified by their position in the scenario file. Speeds are
//! held in m/s; files may give them in km/h (`*_kmh`) or m/s (`*_mps`).
//! See `docs/scenario-format.md` for the file schema.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::kmh_to_mps;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_SATURATION_FLOW: f64 = 1800.0;
pub const DEFAULT_VEHICLE_SPACING: f64 = 7.5;
pub const DEFAULT_SQUARE_SIDE: f64 = 400.0;
pub const MIN_LINK_LENGTH: f64 = 1000.0;
pub const MAX_LINK_LENGTH: f64 = 2500.0;

const TURN_SUM_TOLERANCE: f64 = 1e-9;

/// Direction of travel of an approach or a vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    North,
    South,
    East,
    West,
}

impl Bound {
    pub const ALL: [Bound; 4] = [Bound::North, Bound::South, Bound::East, Bound::West];

    pub fn index(self) -> usize {
        match self {
            Bound::North => 0,
            Bound::South => 1,
            Bound::East => 2,
            Bound::West => 3,
        }
    }

    /// Heading after performing `turn`.
    pub fn after(self, turn: Turn) -> Bound {
        use Bound::*;
        match (self, turn) {
            (b, Turn::Through) => b,
            (North, Turn::Left) => West,
            (North, Turn::Right) => East,
            (South, Turn::Left) => East,
            (South, Turn::Right) => West,
            (East, Turn::Left) => North,
            (East, Turn::Right) => South,
            (West, Turn::Left) => South,
            (West, Turn::Right) => North,
        }
    }

    /// Whether this heading runs along the corridor (north-south).
    pub fn is_corridor(self) -> bool {
        matches!(self, Bound::North | Bound::South)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Bound::North => "NB",
            Bound::South => "SB",
            Bound::East => "EB",
            Bound::West => "WB",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRatios {
    pub left: f64,
    pub through: f64,
    pub right: f64,
}

impl TurnRatios {
    pub const THROUGH_ONLY: TurnRatios = TurnRatios {
        left: 0.0,
        through: 1.0,
        right: 0.0,
    };

    pub fn sum(&self) -> f64 {
        self.left + self.through + self.right
    }

    pub fn get(&self, turn: Turn) -> f64 {
        match turn {
            Turn::Left => self.left,
            Turn::Through => self.through,
            Turn::Right => self.right,
        }
    }

    /// Maps a uniform draw in `[0,1)` to a turn.
    pub fn sample(&self, u: f64) -> Turn {
        if u < self.left {
            Turn::Left
        } else if u < self.left + self.through {
            Turn::Through
        } else {
            Turn::Right
        }
    }

    fn is_valid(&self) -> bool {
        [self.left, self.through, self.right]
            .iter()
            .all(|r| r.is_finite() && *r >= 0.0)
            && (self.sum() - 1.0).abs() <= TURN_SUM_TOLERANCE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FreewayCell {
    pub id: usize,
    pub length: f64,
    pub lanes: u32,
    /// m/s
    pub free_flow_speed: f64,
    /// veh/h over all lanes
    pub capacity: f64,
    /// veh/km/lane
    pub jam_density: f64,
    pub onramp: Option<usize>,
    pub offramp: Option<usize>,
}

impl FreewayCell {
    /// Critical density of the triangular fundamental diagram, veh/km/lane.
    pub fn critical_density(&self) -> f64 {
        self.capacity / (self.free_flow_speed * 3.6 * self.lanes as f64)
    }

    /// Vehicles the cell holds at jam density.
    pub fn jam_vehicles(&self) -> f64 {
        self.jam_density * self.lanes as f64 * self.length / 1000.0
    }

    /// Backward wave speed in m/s.
    pub fn wave_speed(&self) -> f64 {
        let per_lane = self.capacity / self.lanes as f64;
        per_lane / (self.jam_density - self.critical_density()) / 3.6
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampKind {
    On,
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ramp {
    pub id: usize,
    pub kind: RampKind,
    /// m of queue storage
    pub storage_capacity: f64,
    pub connected_intersection: usize,
    /// Leg of the intersection the ramp meets; must be the east leg.
    pub leg: Bound,
    pub connected_cell: usize,
    /// m/veh
    pub vehicle_spacing: f64,
    pub lanes: u32,
    /// veh/h/lane
    pub saturation_flow: f64,
    /// Off-ramp: share of mainline vehicles in the cell that exit here.
    /// On-ramp: share of eastbound leavers at the intersection that enter the freeway.
    pub split: f64,
    /// Movements taken at the stop line (off-ramps only).
    pub turns: TurnRatios,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Approach {
    pub lanes: u32,
    pub saturation_flow: f64,
    pub turns: TurnRatios,
    /// Length of the entry link when this approach is a network entrance, m.
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    pub id: usize,
    /// Indexed by [`Bound::index`].
    pub approaches: [Approach; 4],
    pub square_side: f64,
}

impl Intersection {
    pub fn approach(&self, bound: Bound) -> &Approach {
        &self.approaches[bound.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArterialLink {
    pub id: usize,
    pub upstream_intersection: usize,
    pub downstream_intersection: usize,
    pub length: f64,
    pub lanes: u32,
    /// Default speed limit v_a, m/s.
    pub speed_limit: f64,
    /// Highest speed a recommendation may raise traffic to, m/s.
    pub max_speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Entrance {
    Freeway,
    Arterial { intersection: usize, bound: Bound },
}

impl fmt::Display for Entrance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entrance::Freeway => f.write_str("freeway"),
            Entrance::Arterial {
                intersection,
                bound,
            } => write!(f, "I{}-{}", intersection + 1, bound),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile {
    pub entrance: Entrance,
    /// veh/h for each hour of the day, index 0 = midnight.
    pub hourly: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandLevel {
    Low,
    #[default]
    Moderate,
    High,
}

impl DemandLevel {
    /// Hour of day whose demand the evaluation runs replay.
    pub fn start_hour(self) -> usize {
        match self {
            DemandLevel::Low => 1,
            DemandLevel::Moderate => 12,
            DemandLevel::High => 17,
        }
    }
}

impl std::str::FromStr for DemandLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(DemandLevel::Low),
            "moderate" => Ok(DemandLevel::Moderate),
            "high" => Ok(DemandLevel::High),
            other => Err(Error::Config(format!("unknown demand level {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncidentMode {
    Off,
    Fixed,
    Stochastic,
}

impl std::str::FromStr for IncidentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(IncidentMode::Off),
            "fixed" => Ok(IncidentMode::Fixed),
            "stochastic" => Ok(IncidentMode::Stochastic),
            other => Err(Error::Config(format!("unknown incident mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidentSpec {
    pub mode: IncidentMode,
    pub cell: usize,
    /// Capacity multiplier while active; `None` means a side-lane closure.
    pub capacity_factor: Option<f64>,
    /// Fixed mode start, s after simulation start.
    pub start: f64,
    pub duration: f64,
    /// Stochastic mode: chance of an incident at the top of each hour.
    pub probability_per_hour: f64,
}

impl Default for IncidentSpec {
    fn default() -> Self {
        IncidentSpec {
            mode: IncidentMode::Off,
            cell: 0,
            capacity_factor: None,
            start: 600.0,
            duration: 1200.0,
            probability_per_hour: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreewayControl {
    Nfc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArterialStrategy {
    Fac,
    Maxband,
    Qac,
    Qacu,
}

impl ArterialStrategy {
    pub const ALL: [ArterialStrategy; 4] = [
        ArterialStrategy::Fac,
        ArterialStrategy::Maxband,
        ArterialStrategy::Qac,
        ArterialStrategy::Qacu,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ArterialStrategy::Fac => "FAC",
            ArterialStrategy::Maxband => "MAXBAND",
            ArterialStrategy::Qac => "QAC",
            ArterialStrategy::Qacu => "QACU",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, ArterialStrategy::Qac | ArterialStrategy::Qacu)
    }
}

impl fmt::Display for ArterialStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ArterialStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fac" => Ok(ArterialStrategy::Fac),
            "maxband" => Ok(ArterialStrategy::Maxband),
            "qac" => Ok(ArterialStrategy::Qac),
            "qacu" => Ok(ArterialStrategy::Qacu),
            other => Err(Error::Config(format!("unknown arterial strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlRoster {
    pub freeway: FreewayControl,
    pub arterial: Vec<ArterialStrategy>,
}

impl Default for ControlRoster {
    fn default() -> Self {
        ControlRoster {
            freeway: FreewayControl::Nfc,
            arterial: ArterialStrategy::ALL.to_vec(),
        }
    }
}

/// Emission surrogate coefficients (see `metrics`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    /// g/s while queued
    pub idle_rate: f64,
    /// g/km travelled
    pub cruise_rate: f64,
    /// g per stop
    pub stop_penalty: f64,
}

impl Default for EmissionParams {
    fn default() -> Self {
        EmissionParams {
            idle_rate: 1.0,
            cruise_rate: 200.0,
            stop_penalty: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub cells: Vec<FreewayCell>,
    pub ramps: Vec<Ramp>,
    pub intersections: Vec<Intersection>,
    pub links: Vec<ArterialLink>,
    pub demands: Vec<DemandProfile>,
    pub demand_level: DemandLevel,
    pub incident: IncidentSpec,
    pub roster: ControlRoster,
    pub seed: u64,
    /// s
    pub duration: f64,
    /// s
    pub warmup: f64,
    /// m/veh on arterial approaches
    pub vehicle_spacing: f64,
    /// Accept link lengths outside 1000..=2500 m (they are clamped into the
    /// DSO state space).
    pub allow_wide_links: bool,
    /// Deterministic evenly spaced arrivals instead of Poisson.
    pub frozen_demand: bool,
    pub emissions: EmissionParams,
}

impl ScenarioConfig {
    pub fn num_intersections(&self) -> usize {
        self.intersections.len()
    }

    pub fn offramps(&self) -> impl Iterator<Item = &Ramp> {
        self.ramps.iter().filter(|r| r.kind == RampKind::Off)
    }

    /// Off-ramp attached to intersection `k`, if any.
    pub fn offramp_at(&self, k: usize) -> Option<&Ramp> {
        self.offramps().find(|r| r.connected_intersection == k)
    }

    pub fn onramp_at(&self, k: usize) -> Option<&Ramp> {
        self.ramps
            .iter()
            .find(|r| r.kind == RampKind::On && r.connected_intersection == k)
    }

    pub fn demand_at(&self, entrance: Entrance, hour: usize) -> f64 {
        self.demands
            .iter()
            .filter(|d| d.entrance == entrance)
            .map(|d| d.hourly[hour % 24])
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    DanglingReference,
    OutOfRange,
    Invariant,
}

/// One violated invariant, with where it was found.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

struct Diagnostics(Vec<Diagnostic>);

impl Diagnostics {
    fn push(&mut self, kind: DiagnosticKind, location: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            kind,
            location: location.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, kind: DiagnosticKind, location: &str, message: impl Into<String>) {
        if !ok {
            self.push(kind, location, message);
        }
    }
}

/// Checks every scenario invariant; an empty result means the config is usable.
pub fn validate_topology(config: &ScenarioConfig) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut d = Diagnostics(Vec::new());
    let k = config.intersections.len();

    d.check(k >= 1, Invariant, "scenario", "at least one intersection is required");
    d.check(
        config.duration > 0.0 && config.duration.is_finite(),
        OutOfRange,
        "scenario",
        "duration must be positive",
    );
    d.check(
        config.warmup >= 0.0 && config.warmup < config.duration,
        Invariant,
        "scenario",
        format!("warm-up {} s must be shorter than duration {} s", config.warmup, config.duration),
    );
    d.check(config.vehicle_spacing > 0.0, OutOfRange, "scenario", "vehicle spacing must be positive");

    for (i, cell) in config.cells.iter().enumerate() {
        let loc = format!("cells[{i}]");
        d.check(cell.length > 0.0, OutOfRange, &loc, "length must be positive");
        d.check(cell.lanes >= 1, OutOfRange, &loc, "at least one lane");
        d.check(cell.capacity > 0.0, OutOfRange, &loc, "capacity must be positive");
        d.check(cell.free_flow_speed > 0.0, OutOfRange, &loc, "free-flow speed must be positive");
        if cell.capacity > 0.0 && cell.free_flow_speed > 0.0 && cell.lanes >= 1 {
            d.check(
                cell.jam_density > cell.critical_density(),
                Invariant,
                &loc,
                format!(
                    "jam density {} must exceed critical density {:.2} veh/km/lane",
                    cell.jam_density,
                    cell.critical_density()
                ),
            );
        }
        for (slot, kind) in [(cell.onramp, RampKind::On), (cell.offramp, RampKind::Off)] {
            let Some(r) = slot else { continue };
            match config.ramps.get(r) {
                None => d.push(DanglingReference, &loc, format!("ramp {r} does not exist")),
                Some(ramp) => {
                    d.check(ramp.kind == kind, Invariant, &loc, format!("ramp {r} is not a {kind:?}-ramp"));
                    d.check(
                        ramp.connected_cell == i,
                        Invariant,
                        &loc,
                        format!("ramp {r} names cell {} instead", ramp.connected_cell),
                    );
                }
            }
        }
    }

    for (i, ramp) in config.ramps.iter().enumerate() {
        let loc = format!("ramps[{i}]");
        d.check(ramp.storage_capacity > 0.0, OutOfRange, &loc, "storage capacity must be positive");
        d.check(ramp.vehicle_spacing > 0.0, OutOfRange, &loc, "vehicle spacing must be positive");
        d.check(ramp.lanes >= 1, OutOfRange, &loc, "at least one lane");
        d.check(ramp.saturation_flow > 0.0, OutOfRange, &loc, "saturation flow must be positive");
        d.check((0.0..=1.0).contains(&ramp.split), OutOfRange, &loc, "split must lie in [0,1]");
        d.check(
            ramp.connected_intersection < k,
            DanglingReference,
            &loc,
            format!("intersection {} does not exist", ramp.connected_intersection),
        );
        d.check(
            ramp.connected_cell < config.cells.len(),
            DanglingReference,
            &loc,
            format!("cell {} does not exist", ramp.connected_cell),
        );
        d.check(ramp.leg == Bound::East, Invariant, &loc, "ramps must connect to the east leg");
        if ramp.kind == RampKind::Off {
            d.check(ramp.turns.is_valid(), Invariant, &loc, "turn ratios must sum to 1");
        }
        if let Some(cell) = config.cells.get(ramp.connected_cell) {
            let back = match ramp.kind {
                RampKind::On => cell.onramp,
                RampKind::Off => cell.offramp,
            };
            d.check(
                back == Some(i),
                Invariant,
                &loc,
                format!("cell {} does not reference this ramp", ramp.connected_cell),
            );
        }
    }
    for kind in [RampKind::On, RampKind::Off] {
        for j in 0..k {
            let n = config
                .ramps
                .iter()
                .filter(|r| r.kind == kind && r.connected_intersection == j)
                .count();
            d.check(
                n <= 1,
                Invariant,
                &format!("intersections[{j}]"),
                format!("at most one {kind:?}-ramp per intersection"),
            );
        }
    }

    for (i, inter) in config.intersections.iter().enumerate() {
        let loc = format!("intersections[{i}]");
        d.check(inter.square_side > 0.0, OutOfRange, &loc, "square side must be positive");
        for b in Bound::ALL {
            let a = inter.approach(b);
            let aloc = format!("{loc}.{}", format!("{b:?}").to_lowercase());
            d.check(a.turns.is_valid(), Invariant, &aloc, format!("turn ratios sum to {}", a.turns.sum()));
            d.check(a.lanes >= 1, OutOfRange, &aloc, "at least one lane");
            d.check(a.saturation_flow > 0.0, OutOfRange, &aloc, "saturation flow must be positive");
            d.check(a.length > 0.0, OutOfRange, &aloc, "length must be positive");
        }
    }

    d.check(
        k == 0 || config.links.len() == k - 1,
        Invariant,
        "links",
        format!("{} intersections need {} links", k, k.saturating_sub(1)),
    );
    for (j, link) in config.links.iter().enumerate() {
        let loc = format!("links[{j}]");
        let ends_exist = link.upstream_intersection < k && link.downstream_intersection < k;
        d.check(ends_exist, DanglingReference, &loc, "link names a nonexistent intersection");
        d.check(
            !ends_exist || (link.upstream_intersection == j && link.downstream_intersection == j + 1),
            Invariant,
            &loc,
            format!("link {j} must join intersections {j} and {}", j + 1),
        );
        d.check(link.lanes >= 1, OutOfRange, &loc, "at least one lane");
        d.check(
            link.speed_limit > 0.0 && link.max_speed >= link.speed_limit,
            OutOfRange,
            &loc,
            "speeds must be positive with max speed at least the limit",
        );
        d.check(
            config.allow_wide_links || (MIN_LINK_LENGTH..=MAX_LINK_LENGTH).contains(&link.length),
            OutOfRange,
            &loc,
            format!(
                "length {} m outside the link state range [{MIN_LINK_LENGTH}, {MAX_LINK_LENGTH}]",
                link.length
            ),
        );
        d.check(link.length > 0.0, OutOfRange, &loc, "length must be positive");
    }

    for (i, dem) in config.demands.iter().enumerate() {
        let loc = format!("demands[{i}]");
        d.check(dem.hourly.len() == 24, Invariant, &loc, "exactly 24 hourly values required");
        d.check(
            dem.hourly.iter().all(|v| v.is_finite() && *v >= 0.0),
            OutOfRange,
            &loc,
            "demand must be nonnegative",
        );
        match dem.entrance {
            Entrance::Freeway => {
                d.check(!config.cells.is_empty(), DanglingReference, &loc, "freeway entrance without cells")
            }
            Entrance::Arterial { intersection, bound } => {
                if intersection >= k {
                    d.push(DanglingReference, &loc, format!("intersection {intersection} does not exist"));
                } else {
                    let ok = match bound {
                        Bound::North => intersection == 0,
                        Bound::South => intersection + 1 == k,
                        Bound::East | Bound::West => true,
                    };
                    d.check(ok, Invariant, &loc, format!("no {bound} entrance at intersection {intersection}"));
                }
            }
        }
    }

    let inc = &config.incident;
    if inc.mode != IncidentMode::Off {
        d.check(
            inc.cell < config.cells.len(),
            DanglingReference,
            "incident",
            format!("cell {} does not exist", inc.cell),
        );
        if let Some(f) = inc.capacity_factor {
            d.check(f > 0.0 && f <= 1.0, OutOfRange, "incident", "capacity factor must lie in (0,1]");
        }
        d.check(inc.duration > 0.0, OutOfRange, "incident", "duration must be positive");
        d.check(inc.start >= 0.0, OutOfRange, "incident", "start must be nonnegative");
        d.check(
            (0.0..=1.0).contains(&inc.probability_per_hour),
            OutOfRange,
            "incident",
            "probability must lie in [0,1]",
        );
    }

    d.check(!config.roster.arterial.is_empty(), Invariant, "roster", "at least one arterial strategy");
    d.0
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    #[serde(default)]
    seed: u64,
    duration_s: f64,
    warmup_s: f64,
    #[serde(default = "default_level")]
    demand_level: DemandLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vehicle_spacing_m: Option<f64>,
    #[serde(default)]
    allow_wide_links: bool,
    #[serde(default)]
    frozen_demand: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hourly_factors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    approach_defaults: Option<ApproachDefaults>,
    #[serde(default)]
    cells: Vec<CellFile>,
    #[serde(default)]
    ramps: Vec<RampFile>,
    intersections: Vec<IntersectionFile>,
    #[serde(default)]
    links: Vec<LinkFile>,
    #[serde(default)]
    demands: Vec<DemandFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    incident: Option<IncidentFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roster: Option<RosterFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emissions: Option<EmissionParams>,
}

fn default_level() -> DemandLevel {
    DemandLevel::Moderate
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproachDefaults {
    #[serde(default)]
    corridor: ApproachFile,
    #[serde(default)]
    cross: ApproachFile,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproachFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lanes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    saturation_flow_vphpl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turns: Option<TurnRatios>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_m: Option<f64>,
}

impl ApproachFile {
    fn overlay(&self, base: &ApproachFile) -> ApproachFile {
        ApproachFile {
            lanes: self.lanes.or(base.lanes),
            saturation_flow_vphpl: self.saturation_flow_vphpl.or(base.saturation_flow_vphpl),
            turns: self.turns.or(base.turns),
            length_m: self.length_m.or(base.length_m),
        }
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntersectionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    square_side_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    north: Option<ApproachFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    south: Option<ApproachFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    east: Option<ApproachFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    west: Option<ApproachFile>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFile {
    length_m: f64,
    lanes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    free_flow_speed_kmh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    free_flow_speed_mps: Option<f64>,
    capacity_vph: f64,
    #[serde(default = "default_jam")]
    jam_density_vpkmpl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    onramp: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offramp: Option<usize>,
}

fn default_jam() -> f64 {
    150.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RampFile {
    kind: RampKind,
    storage_m: f64,
    intersection: usize,
    #[serde(default = "default_leg")]
    leg: Bound,
    cell: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vehicle_spacing_m: Option<f64>,
    #[serde(default = "default_lanes")]
    lanes: u32,
    #[serde(default = "default_sat")]
    saturation_flow_vphpl: f64,
    split: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turns: Option<TurnRatios>,
}

fn default_leg() -> Bound {
    Bound::East
}
fn default_lanes() -> u32 {
    1
}
fn default_sat() -> f64 {
    DEFAULT_SATURATION_FLOW
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    from: usize,
    to: usize,
    length_m: f64,
    #[serde(default = "default_link_lanes")]
    lanes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_limit_kmh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_limit_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_speed_kmh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_speed_mps: Option<f64>,
}

fn default_link_lanes() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandFile {
    entrance: EntranceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intersection: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bound: Option<Bound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate_vph: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hourly_vph: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EntranceKind {
    Freeway,
    Arterial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IncidentFile {
    mode: IncidentMode,
    #[serde(default)]
    cell: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity_factor: Option<f64>,
    #[serde(default = "default_inc_start")]
    start_s: f64,
    #[serde(default = "default_inc_duration")]
    duration_s: f64,
    #[serde(default = "default_inc_p")]
    probability_per_hour: f64,
}

fn default_inc_start() -> f64 {
    600.0
}
fn default_inc_duration() -> f64 {
    1200.0
}
fn default_inc_p() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RosterFile {
    #[serde(default = "default_fw")]
    freeway: FreewayControl,
    arterial: Vec<ArterialStrategy>,
}

fn default_fw() -> FreewayControl {
    FreewayControl::Nfc
}

fn speed(kmh: Option<f64>, mps: Option<f64>, default_kmh: Option<f64>, what: &str) -> Result<f64> {
    match (kmh, mps) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("{what}: give km/h or m/s, not both"))),
        (Some(v), None) => Ok(kmh_to_mps(v)),
        (None, Some(v)) => Ok(v),
        (None, None) => default_kmh
            .map(kmh_to_mps)
            .ok_or_else(|| Error::Parse(format!("{what}: speed is required"))),
    }
}

fn resolve_approach(file: &ApproachFile, loc: &str) -> Result<Approach> {
    Ok(Approach {
        lanes: file.lanes.unwrap_or(1),
        saturation_flow: file.saturation_flow_vphpl.unwrap_or(DEFAULT_SATURATION_FLOW),
        turns: file
            .turns
            .ok_or_else(|| Error::Parse(format!("{loc}: turn ratios are required")))?,
        length: file.length_m.unwrap_or(DEFAULT_SQUARE_SIDE),
    })
}

impl ScenarioFile {
    fn into_config(self) -> Result<ScenarioConfig> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let spacing = self.vehicle_spacing_m.unwrap_or(DEFAULT_VEHICLE_SPACING);
        let factors = match &self.hourly_factors {
            Some(f) if f.len() != 24 => {
                return Err(Error::Parse("hourly_factors needs 24 values".into()))
            }
            Some(f) => f.clone(),
            None => vec![1.0; 24],
        };

        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(FreewayCell {
                    id: i,
                    length: c.length_m,
                    lanes: c.lanes,
                    free_flow_speed: speed(
                        c.free_flow_speed_kmh,
                        c.free_flow_speed_mps,
                        Some(105.0),
                        &format!("cells[{i}]"),
                    )?,
                    capacity: c.capacity_vph,
                    jam_density: c.jam_density_vpkmpl,
                    onramp: c.onramp,
                    offramp: c.offramp,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let ramps = self
            .ramps
            .iter()
            .enumerate()
            .map(|(i, r)| Ramp {
                id: i,
                kind: r.kind,
                storage_capacity: r.storage_m,
                connected_intersection: r.intersection,
                leg: r.leg,
                connected_cell: r.cell,
                vehicle_spacing: r.vehicle_spacing_m.unwrap_or(spacing),
                lanes: r.lanes,
                saturation_flow: r.saturation_flow_vphpl,
                split: r.split,
                turns: r.turns.unwrap_or(TurnRatios::THROUGH_ONLY),
            })
            .collect();

        let defaults = self.approach_defaults.clone().unwrap_or_default();
        let intersections = self
            .intersections
            .iter()
            .enumerate()
            .map(|(i, inter)| {
                let pick = |b: Bound| -> Result<Approach> {
                    let own = match b {
                        Bound::North => &inter.north,
                        Bound::South => &inter.south,
                        Bound::East => &inter.east,
                        Bound::West => &inter.west,
                    };
                    let base = if b.is_corridor() {
                        &defaults.corridor
                    } else {
                        &defaults.cross
                    };
                    let merged = own.clone().unwrap_or_default().overlay(base);
                    resolve_approach(&merged, &format!("intersections[{i}].{b:?}"))
                };
                Ok(Intersection {
                    id: i,
                    approaches: [
                        pick(Bound::North)?,
                        pick(Bound::South)?,
                        pick(Bound::East)?,
                        pick(Bound::West)?,
                    ],
                    square_side: inter.square_side_m.unwrap_or(DEFAULT_SQUARE_SIDE),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let loc = format!("links[{j}]");
                Ok(ArterialLink {
                    id: j,
                    upstream_intersection: l.from,
                    downstream_intersection: l.to,
                    length: l.length_m,
                    lanes: l.lanes,
                    speed_limit: speed(l.speed_limit_kmh, l.speed_limit_mps, Some(60.0), &loc)?,
                    max_speed: speed(l.max_speed_kmh, l.max_speed_mps, Some(80.0), &loc)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let demands = self
            .demands
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let loc = format!("demands[{i}]");
                let entrance = match d.entrance {
                    EntranceKind::Freeway => Entrance::Freeway,
                    EntranceKind::Arterial => Entrance::Arterial {
                        intersection: d
                            .intersection
                            .ok_or_else(|| Error::Parse(format!("{loc}: intersection required")))?,
                        bound: d
                            .bound
                            .ok_or_else(|| Error::Parse(format!("{loc}: bound required")))?,
                    },
                };
                let hourly = match (&d.hourly_vph, d.rate_vph) {
                    (Some(h), None) => h.clone(),
                    (None, Some(rate)) => factors.iter().map(|f| rate * f).collect(),
                    _ => {
                        return Err(Error::Parse(format!(
                            "{loc}: give exactly one of rate_vph or hourly_vph"
                        )))
                    }
                };
                Ok(DemandProfile { entrance, hourly })
            })
            .collect::<Result<Vec<_>>>()?;

        let incident = match self.incident {
            None => IncidentSpec::default(),
            Some(i) => IncidentSpec {
                mode: i.mode,
                cell: i.cell,
                capacity_factor: i.capacity_factor,
                start: i.start_s,
                duration: i.duration_s,
                probability_per_hour: i.probability_per_hour,
            },
        };
        let roster = match self.roster {
            None => ControlRoster::default(),
            Some(r) => ControlRoster {
                freeway: r.freeway,
                arterial: r.arterial,
            },
        };

        Ok(ScenarioConfig {
            name: self.name,
            cells,
            ramps,
            intersections,
            links,
            demands,
            demand_level: self.demand_level,
            incident,
            roster,
            seed: self.seed,
            duration: self.duration_s,
            warmup: self.warmup_s,
            vehicle_spacing: spacing,
            allow_wide_links: self.allow_wide_links,
            frozen_demand: self.frozen_demand,
            emissions: self.emissions.unwrap_or_default(),
        })
    }

    fn from_config(c: &ScenarioConfig) -> ScenarioFile {
        let approach = |a: &Approach| ApproachFile {
            lanes: Some(a.lanes),
            saturation_flow_vphpl: Some(a.saturation_flow),
            turns: Some(a.turns),
            length_m: Some(a.length),
        };
        ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name: c.name.clone(),
            seed: c.seed,
            duration_s: c.duration,
            warmup_s: c.warmup,
            demand_level: c.demand_level,
            vehicle_spacing_m: Some(c.vehicle_spacing),
            allow_wide_links: c.allow_wide_links,
            frozen_demand: c.frozen_demand,
            hourly_factors: None,
            approach_defaults: None,
            cells: c
                .cells
                .iter()
                .map(|cell| CellFile {
                    length_m: cell.length,
                    lanes: cell.lanes,
                    free_flow_speed_kmh: None,
                    free_flow_speed_mps: Some(cell.free_flow_speed),
                    capacity_vph: cell.capacity,
                    jam_density_vpkmpl: cell.jam_density,
                    onramp: cell.onramp,
                    offramp: cell.offramp,
                })
                .collect(),
            ramps: c
                .ramps
                .iter()
                .map(|r| RampFile {
                    kind: r.kind,
                    storage_m: r.storage_capacity,
                    intersection: r.connected_intersection,
                    leg: r.leg,
                    cell: r.connected_cell,
                    vehicle_spacing_m: Some(r.vehicle_spacing),
                    lanes: r.lanes,
                    saturation_flow_vphpl: r.saturation_flow,
                    split: r.split,
                    turns: Some(r.turns),
                })
                .collect(),
            intersections: c
                .intersections
                .iter()
                .map(|i| IntersectionFile {
                    square_side_m: Some(i.square_side),
                    north: Some(approach(i.approach(Bound::North))),
                    south: Some(approach(i.approach(Bound::South))),
                    east: Some(approach(i.approach(Bound::East))),
                    west: Some(approach(i.approach(Bound::West))),
                })
                .collect(),
            links: c
                .links
                .iter()
                .map(|l| LinkFile {
                    from: l.upstream_intersection,
                    to: l.downstream_intersection,
                    length_m: l.length,
                    lanes: l.lanes,
                    speed_limit_kmh: None,
                    speed_limit_mps: Some(l.speed_limit),
                    max_speed_kmh: None,
                    max_speed_mps: Some(l.max_speed),
                })
                .collect(),
            demands: c
                .demands
                .iter()
                .map(|d| {
                    let (entrance, intersection, bound) = match d.entrance {
                        Entrance::Freeway => (EntranceKind::Freeway, None, None),
                        Entrance::Arterial {
                            intersection,
                            bound,
                        } => (EntranceKind::Arterial, Some(intersection), Some(bound)),
                    };
                    DemandFile {
                        entrance,
                        intersection,
                        bound,
                        rate_vph: None,
                        hourly_vph: Some(d.hourly.clone()),
                    }
                })
                .collect(),
            incident: Some(IncidentFile {
                mode: c.incident.mode,
                cell: c.incident.cell,
                capacity_factor: c.incident.capacity_factor,
                start_s: c.incident.start,
                duration_s: c.incident.duration,
                probability_per_hour: c.incident.probability_per_hour,
            }),
            roster: Some(RosterFile {
                freeway: c.roster.freeway,
                arterial: c.roster.arterial.clone(),
            }),
            emissions: Some(c.emissions),
        }
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let config = file.into_config()?;
    let diags = validate_topology(&config);
    if diags.is_empty() {
        Ok(config)
    } else {
        Err(Error::Validation(diags))
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

/// Renders a config in the scenario file format, with every default spelled out.
pub fn serialize_scenario(config: &ScenarioConfig) -> Result<String> {
    toml::to_string(&ScenarioFile::from_config(config)).map_err(|e| Error::Serialize(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
duration_s = 600
warmup_s = 60

[[intersections]]
north = { turns = { left = 0.1, through = 0.8, right = 0.1 } }
south = { turns = { left = 0.1, through = 0.8, right = 0.1 } }
east = { turns = { left = 0.2, through = 0.6, right = 0.2 } }
west = { turns = { left = 0.2, through = 0.6, right = 0.2 } }
"#;

    #[test]
    fn minimal_scenario_has_one_intersection() {
        let c = parse_scenario(MINIMAL).unwrap();
        assert_eq!(c.num_intersections(), 1);
        assert!(c.cells.is_empty());
        assert_eq!(c.intersections[0].square_side, 400.0);
        assert_eq!(c.intersections[0].approach(Bound::North).saturation_flow, 1800.0);
        assert_eq!(c.vehicle_spacing, 7.5);
    }

    #[test]
    fn bad_turn_ratios_fail_validation() {
        let text = MINIMAL.replace(
            "east = { turns = { left = 0.2, through = 0.6, right = 0.2 } }",
            "east = { turns = { left = 0.2, through = 0.5, right = 0.2 } }",
        );
        match parse_scenario(&text) {
            Err(Error::Validation(d)) => {
                assert_eq!(d.len(), 1);
                assert!(d[0].location.contains("east"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(
            parse_scenario(&text),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(matches!(parse_scenario("schema_version = ["), Err(Error::Parse(_))));
    }

    #[test]
    fn speeds_convert_from_kmh() {
        assert!((speed(Some(72.0), None, None, "x").unwrap() - 20.0).abs() < 1e-12);
        assert!(speed(Some(72.0), Some(20.0), None, "x").is_err());
    }

    #[test]
    fn bound_turns() {
        assert_eq!(Bound::West.after(Turn::Left), Bound::South);
        assert_eq!(Bound::West.after(Turn::Right), Bound::North);
        assert_eq!(Bound::North.after(Turn::Right), Bound::East);
        assert_eq!(Bound::South.after(Turn::Through), Bound::South);
    }
}
