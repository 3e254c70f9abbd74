//! Freeway incidents: temporary capacity reductions of one cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::topology::{FreewayCell, IncidentMode, IncidentSpec};

/// Clearance time of a stochastic incident, s.
pub const STOCHASTIC_DURATION: f64 = 1200.0;

#[derive(Clone, Debug, PartialEq)]
pub struct IncidentState {
    pub cell: usize,
    pub capacity_factor: f64,
    pub start: f64,
    pub end: f64,
}

impl IncidentState {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Capacity multiplier of a side-lane closure.
pub fn side_lane_factor(cell: &FreewayCell) -> f64 {
    if cell.lanes <= 1 {
        1.0
    } else {
        (cell.lanes - 1) as f64 / cell.lanes as f64
    }
}

/// Adds `incident` to `schedule`, rejecting any overlap with existing ones.
pub fn schedule_incident(schedule: &mut Vec<IncidentState>, incident: IncidentState) -> Result<()> {
    if !(incident.capacity_factor > 0.0 && incident.capacity_factor <= 1.0) {
        return Err(Error::Incident(format!(
            "capacity factor {} outside (0,1]",
            incident.capacity_factor
        )));
    }
    if !(incident.end > incident.start) {
        return Err(Error::Incident("incident must end after it starts".into()));
    }
    if let Some(o) = schedule
        .iter()
        .find(|o| incident.start < o.end && o.start < incident.end)
    {
        return Err(Error::Incident(format!(
            "[{}, {}) overlaps the incident at [{}, {})",
            incident.start, incident.end, o.start, o.end
        )));
    }
    schedule.push(incident);
    schedule.sort_by(|a, b| a.start.total_cmp(&b.start));
    Ok(())
}

/// Incidents a run of `duration` seconds experiences under `spec`.
///
/// Stochastic mode draws once at the top of every hour from its own stream.
pub fn plan_incidents(spec: &IncidentSpec, cells: &[FreewayCell], duration: f64, seed: u64) -> Result<Vec<IncidentState>> {
    let mut out = Vec::new();
    if spec.mode == IncidentMode::Off {
        return Ok(out);
    }
    let cell = cells
        .get(spec.cell)
        .ok_or_else(|| Error::Incident(format!("cell {} does not exist", spec.cell)))?;
    let factor = spec.capacity_factor.unwrap_or_else(|| side_lane_factor(cell));
    match spec.mode {
        IncidentMode::Off => {}
        IncidentMode::Fixed => schedule_incident(
            &mut out,
            IncidentState {
                cell: spec.cell,
                capacity_factor: factor,
                start: spec.start,
                end: spec.start + spec.duration,
            },
        )?,
        IncidentMode::Stochastic => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1c1d_e475);
            let hours = (duration / 3600.0).ceil() as u64;
            for h in 0..hours {
                if rng.random::<f64>() < spec.probability_per_hour {
                    let start = h as f64 * 3600.0;
                    schedule_incident(
                        &mut out,
                        IncidentState {
                            cell: spec.cell,
                            capacity_factor: factor,
                            start,
                            end: start + STOCHASTIC_DURATION,
                        },
                    )?;
                }
            }
        }
    }
    Ok(out)
}
