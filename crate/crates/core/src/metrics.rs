//! Evaluation criteria computed from finished runs, and their reports.
//!
//! Only vehicles created at or after the warm-up count. Sums run over sorted
//! values so every metric is independent of record order.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::sim::{RunTrace, VehicleRecord};
use crate::topology::{ArterialStrategy, EmissionParams};

/// A mean together with the number of samples behind it. `samples == 0`
/// marks a metric with nothing to measure; its value is then 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub samples: usize,
}

impl Metric {
    pub const EMPTY: Metric = Metric { value: 0.0, samples: 0 };

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn mean_of(mut values: Vec<f64>) -> Metric {
    if values.is_empty() {
        return Metric::EMPTY;
    }
    let n = values.len();
    Metric {
        value: sorted_sum(&mut values) / n as f64,
        samples: n,
    }
}

fn counted(trace: &RunTrace) -> impl Iterator<Item = &VehicleRecord> {
    trace.records.iter().filter(move |r| r.created >= trace.warmup)
}

fn corridor_vehicles(trace: &RunTrace) -> impl Iterator<Item = &VehicleRecord> {
    counted(trace).filter(|r| r.full_corridor)
}

/// Mean end-to-end time of vehicles that crossed the whole corridor, s.
pub fn arterial_travel_time(trace: &RunTrace) -> Metric {
    mean_of(corridor_vehicles(trace).map(VehicleRecord::travel_time).collect())
}

/// Mean time of vehicles that entered and left on the freeway mainline, s.
pub fn freeway_travel_time(trace: &RunTrace) -> Metric {
    mean_of(
        counted(trace)
            .filter(|r| r.mainline)
            .map(VehicleRecord::travel_time)
            .collect(),
    )
}

/// Mean stops per full-corridor vehicle.
pub fn average_stops(trace: &RunTrace) -> Metric {
    mean_of(corridor_vehicles(trace).map(|r| r.stops as f64).collect())
}

/// Emissions of one vehicle, g.
pub fn vehicle_emissions(record: &VehicleRecord, params: &EmissionParams) -> f64 {
    params.idle_rate * record.idle + params.cruise_rate * record.distance / 1000.0 + params.stop_penalty * record.stops as f64
}

/// Total emissions over total distance of full-corridor vehicles, g/km.
pub fn surrogate_emissions(trace: &RunTrace, params: &EmissionParams) -> Metric {
    let mut grams = Vec::new();
    let mut km = Vec::new();
    for r in corridor_vehicles(trace) {
        grams.push(vehicle_emissions(r, params));
        km.push(r.distance / 1000.0);
    }
    let distance = sorted_sum(&mut km);
    if !(distance > 0.0) {
        return Metric::EMPTY;
    }
    Metric {
        value: sorted_sum(&mut grams) / distance,
        samples: grams.len(),
    }
}

/// Time-mean queue of each series, then the mean over series.
fn mean_of_series(series: &[&Vec<f64>]) -> Metric {
    let means: Vec<f64> = series
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| sorted_sum(&mut s.to_vec()) / s.len() as f64)
        .collect();
    if means.len() < series.len() || series.is_empty() {
        return Metric::EMPTY;
    }
    let samples = series.iter().map(|s| s.len()).sum();
    Metric {
        samples,
        ..mean_of(means)
    }
}

/// (off-ramp queue over all off-ramps, approach queue over all 4K approaches), m.
pub fn average_queues(trace: &RunTrace) -> (Metric, Metric) {
    let ramps: Vec<&Vec<f64>> = trace.queues.offramp.iter().collect();
    let approaches: Vec<&Vec<f64>> = trace.queues.approach.iter().flat_map(|a| a.iter()).collect();
    (mean_of_series(&ramps), mean_of_series(&approaches))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub strategy: ArterialStrategy,
    pub seed: u64,
    pub freeway_travel_time: Metric,
    pub arterial_travel_time: Metric,
    pub stops: Metric,
    pub emissions: Metric,
    pub offramp_queue: Metric,
    pub approach_queue: Metric,
    /// False when the scenario has no off-ramps, so an empty off-ramp metric is expected.
    pub has_offramps: bool,
}

impl MetricsReport {
    pub fn from_trace(
        scenario: &str,
        strategy: ArterialStrategy,
        seed: u64,
        trace: &RunTrace,
        params: &EmissionParams,
    ) -> Self {
        let (offramp_queue, approach_queue) = average_queues(trace);
        MetricsReport {
            scenario: scenario.to_string(),
            strategy,
            seed,
            freeway_travel_time: freeway_travel_time(trace),
            arterial_travel_time: arterial_travel_time(trace),
            stops: average_stops(trace),
            emissions: surrogate_emissions(trace, params),
            offramp_queue,
            approach_queue,
            has_offramps: !trace.queues.offramp.is_empty(),
        }
    }

    /// Metrics in report order, with their column stems.
    pub fn metrics(&self) -> [(MetricKind, Metric); 6] {
        [
            (MetricKind::FreewayTravelTime, self.freeway_travel_time),
            (MetricKind::ArterialTravelTime, self.arterial_travel_time),
            (MetricKind::Stops, self.stops),
            (MetricKind::Emissions, self.emissions),
            (MetricKind::OfframpQueue, self.offramp_queue),
            (MetricKind::ApproachQueue, self.approach_queue),
        ]
    }

    /// Names of metrics that should have had samples but did not.
    pub fn flagged(&self) -> Vec<MetricKind> {
        self.metrics()
            .into_iter()
            .filter(|(kind, m)| m.is_empty() && (self.has_offramps || *kind != MetricKind::OfframpQueue))
            .map(|(kind, _)| kind)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    FreewayTravelTime,
    ArterialTravelTime,
    Stops,
    Emissions,
    OfframpQueue,
    ApproachQueue,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::FreewayTravelTime,
        MetricKind::ArterialTravelTime,
        MetricKind::Stops,
        MetricKind::Emissions,
        MetricKind::OfframpQueue,
        MetricKind::ApproachQueue,
    ];

    /// CSV column stem.
    pub fn column(self) -> &'static str {
        match self {
            MetricKind::FreewayTravelTime => "freeway_tt_s",
            MetricKind::ArterialTravelTime => "arterial_tt_s",
            MetricKind::Stops => "stops_per_veh",
            MetricKind::Emissions => "emissions_g_per_km",
            MetricKind::OfframpQueue => "offramp_queue_m",
            MetricKind::ApproachQueue => "approach_queue_m",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::FreewayTravelTime => "freeway travel time (s)",
            MetricKind::ArterialTravelTime => "arterial travel time (s)",
            MetricKind::Stops => "stops per vehicle",
            MetricKind::Emissions => "emissions (g/veh/km)",
            MetricKind::OfframpQueue => "off-ramp queue (m)",
            MetricKind::ApproachQueue => "approach queue (m)",
        }
    }
}

/// CSV column names, in order.
pub fn csv_header() -> Vec<String> {
    let mut cols = vec!["scenario".to_string(), "strategy".to_string(), "seed".to_string()];
    for kind in MetricKind::ALL {
        cols.push(kind.column().to_string());
        cols.push(format!("{}_n", kind.column()));
    }
    cols.push("flagged".to_string());
    cols
}

/// Writes one row per report under [`csv_header`].
pub fn write_csv<W: io::Write>(reports: &[MetricsReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for r in reports {
        let mut row = vec![r.scenario.clone(), r.strategy.label().to_string(), r.seed.to_string()];
        for (_, m) in r.metrics() {
            row.push(format!("{:.6}", m.value));
            row.push(m.samples.to_string());
        }
        let flagged: Vec<&str> = r.flagged().iter().map(|k| k.column()).collect();
        row.push(flagged.join(";"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation of one metric over replications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
    /// Replications with at least one sample.
    pub runs: usize,
}

pub fn aggregate(values: &[Metric]) -> Aggregate {
    let mut xs: Vec<f64> = values.iter().filter(|m| !m.is_empty()).map(|m| m.value).collect();
    let n = xs.len();
    if n == 0 {
        return Aggregate { mean: 0.0, sd: 0.0, runs: 0 };
    }
    let mean = sorted_sum(&mut xs) / n as f64;
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let sd = if n > 1 { (sorted_sum(&mut dev) / (n - 1) as f64).sqrt() } else { 0.0 };
    Aggregate { mean, sd, runs: n }
}

/// Aggregated results of one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: ArterialStrategy,
    pub metrics: Vec<(MetricKind, Aggregate)>,
}

impl StrategySummary {
    pub fn get(&self, kind: MetricKind) -> Aggregate {
        self.metrics
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, a)| *a)
            .expect("every metric is summarized")
    }
}

/// Groups reports by strategy in first-seen order.
pub fn summarize(reports: &[MetricsReport]) -> Vec<StrategySummary> {
    let mut order: Vec<ArterialStrategy> = Vec::new();
    for r in reports {
        if !order.contains(&r.strategy) {
            order.push(r.strategy);
        }
    }
    order
        .into_iter()
        .map(|s| {
            let rows: Vec<&MetricsReport> = reports.iter().filter(|r| r.strategy == s).collect();
            let metrics = MetricKind::ALL
                .iter()
                .enumerate()
                .map(|(i, &kind)| {
                    let values: Vec<Metric> = rows.iter().map(|r| r.metrics()[i].1).collect();
                    (kind, aggregate(&values))
                })
                .collect();
            StrategySummary { strategy: s, metrics }
        })
        .collect()
}

/// Reduction relative to `baseline` in percent; positive is better.
pub fn improvement(value: f64, baseline: f64) -> Option<f64> {
    (baseline > 0.0).then(|| (baseline - value) / baseline * 100.0)
}

/// One row per strategy and metric: `mean (sd) [improvement vs FAC]`.
pub fn text_report(title: &str, summaries: &[StrategySummary]) -> String {
    let fac = summaries.iter().find(|s| s.strategy == ArterialStrategy::Fac);
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<26} {:<8} {:>10} {:>9} {:>9} {:>5}", "metric", "strategy", "mean", "sd", "vs FAC", "runs");
    for kind in MetricKind::ALL {
        for s in summaries {
            let a = s.get(kind);
            let pct = fac
                .filter(|f| f.strategy != s.strategy)
                .and_then(|f| improvement(a.mean, f.get(kind).mean))
                .map(|p| format!("{p:+.1}%"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<26} {:<8} {:>10.2} {:>9.2} {:>9} {:>5}",
                kind.label(),
                s.strategy.label(),
                a.mean,
                a.sd,
                pct,
                a.runs
            );
        }
    }
    out
}
