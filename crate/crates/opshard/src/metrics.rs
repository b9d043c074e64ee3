//! Job metrics and their CSV report format.
//!
//! The report is a three-column CSV (`metric,slot_or_task,value`). Timing
//! rows (durations, delays, solver time) vary run to run, so they are only
//! written when explicitly requested; everything else is deterministic
//! given seed and configuration.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SchedulerKind;

/// Everything a job run reports about balance, timing and protocol cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsBundle {
    pub scheduler: SchedulerKind,
    /// Pair count assigned to each Reduce slot.
    pub slot_loads: Vec<u64>,
    pub max_load: u64,
    /// `total / m`.
    pub ideal: f64,
    /// `max_load / ideal` (1.0 when the job moved no pairs).
    pub ratio: f64,
    /// Wall seconds per Map task.
    pub map_durations: Vec<f64>,
    /// Wall seconds per Reduce slot pipeline.
    pub reduce_durations: Vec<f64>,
    /// Per-slot sort delay, seconds past the Map barrier.
    pub sort_delays: Vec<f64>,
    /// Per-slot run delay, seconds past the Map barrier.
    pub run_delays: Vec<f64>,
    pub solver_time: f64,
    /// Measured statistics-collection payload bytes.
    pub collect_bytes: u64,
    /// Measured schedule-broadcast payload bytes.
    pub broadcast_bytes: u64,
    /// Analytic bound on collection bytes (16Mn).
    pub collect_bound: u64,
    /// Analytic bound on broadcast bytes (4n(t+r)).
    pub broadcast_bound: u64,
}

impl MetricsBundle {
    pub fn empty(scheduler: SchedulerKind) -> MetricsBundle {
        MetricsBundle {
            scheduler,
            slot_loads: Vec::new(),
            max_load: 0,
            ideal: 0.0,
            ratio: 1.0,
            map_durations: Vec::new(),
            reduce_durations: Vec::new(),
            sort_delays: Vec::new(),
            run_delays: Vec::new(),
            solver_time: 0.0,
            collect_bytes: 0,
            broadcast_bytes: 0,
            collect_bound: 0,
            broadcast_bound: 0,
        }
    }

    /// `(metric, slot_or_task, value)` rows in a fixed order. Values are
    /// formatted with round-trip precision, so parsing them back yields the
    /// exact same numbers.
    pub fn to_rows(&self, include_timings: bool) -> Vec<(String, String, String)> {
        let mut rows: Vec<(String, String, String)> = Vec::new();
        let mut push = |metric: &str, who: String, value: String| {
            rows.push((metric.to_string(), who, value));
        };
        push("scheduler", String::new(), self.scheduler.to_string());
        for (i, load) in self.slot_loads.iter().enumerate() {
            push("slot_load", format!("slot-{}", i + 1), load.to_string());
        }
        push("max_load", String::new(), self.max_load.to_string());
        push("ideal", String::new(), self.ideal.to_string());
        push("ratio", String::new(), self.ratio.to_string());
        push("collect_bytes", String::new(), self.collect_bytes.to_string());
        push(
            "broadcast_bytes",
            String::new(),
            self.broadcast_bytes.to_string(),
        );
        push("collect_bound", String::new(), self.collect_bound.to_string());
        push(
            "broadcast_bound",
            String::new(),
            self.broadcast_bound.to_string(),
        );
        if include_timings {
            for (i, d) in self.map_durations.iter().enumerate() {
                push("map_duration_s", format!("task-{i}"), d.to_string());
            }
            for (i, d) in self.reduce_durations.iter().enumerate() {
                push("reduce_duration_s", format!("slot-{}", i + 1), d.to_string());
            }
            for (i, d) in self.sort_delays.iter().enumerate() {
                push("sort_delay_s", format!("slot-{}", i + 1), d.to_string());
            }
            for (i, d) in self.run_delays.iter().enumerate() {
                push("run_delay_s", format!("slot-{}", i + 1), d.to_string());
            }
            push("solver_time_s", String::new(), self.solver_time.to_string());
            push(
                "map_duration_mean_s",
                String::new(),
                mean(&self.map_durations).to_string(),
            );
            push(
                "map_duration_sdm",
                String::new(),
                stddev_over_mean(&self.map_durations).to_string(),
            );
            push(
                "reduce_duration_mean_s",
                String::new(),
                mean(&self.reduce_durations).to_string(),
            );
            push(
                "reduce_duration_sdm",
                String::new(),
                stddev_over_mean(&self.reduce_durations).to_string(),
            );
        }
        rows
    }

    /// Inverse of [`MetricsBundle::to_rows`] for rows produced with
    /// timings enabled (timing rows absent simply leave zeros).
    pub fn from_rows(rows: &[(String, String, String)]) -> Result<MetricsBundle> {
        let mut b = MetricsBundle::empty(SchedulerKind::Os4m);
        let bad = |metric: &str, value: &str| {
            Error::InvalidInput(format!("unparsable metrics row {metric}={value}"))
        };
        for (metric, _who, value) in rows {
            match metric.as_str() {
                "scheduler" => {
                    b.scheduler = match value.as_str() {
                        "hash" => SchedulerKind::Hash,
                        "lpt" => SchedulerKind::Lpt,
                        "os4m" => SchedulerKind::Os4m,
                        other => return Err(bad(metric, other)),
                    }
                }
                "slot_load" => b
                    .slot_loads
                    .push(value.parse().map_err(|_| bad(metric, value))?),
                "max_load" => b.max_load = value.parse().map_err(|_| bad(metric, value))?,
                "ideal" => b.ideal = value.parse().map_err(|_| bad(metric, value))?,
                "ratio" => b.ratio = value.parse().map_err(|_| bad(metric, value))?,
                "collect_bytes" => {
                    b.collect_bytes = value.parse().map_err(|_| bad(metric, value))?
                }
                "broadcast_bytes" => {
                    b.broadcast_bytes = value.parse().map_err(|_| bad(metric, value))?
                }
                "collect_bound" => {
                    b.collect_bound = value.parse().map_err(|_| bad(metric, value))?
                }
                "broadcast_bound" => {
                    b.broadcast_bound = value.parse().map_err(|_| bad(metric, value))?
                }
                "map_duration_s" => b
                    .map_durations
                    .push(value.parse().map_err(|_| bad(metric, value))?),
                "reduce_duration_s" => b
                    .reduce_durations
                    .push(value.parse().map_err(|_| bad(metric, value))?),
                "sort_delay_s" => b
                    .sort_delays
                    .push(value.parse().map_err(|_| bad(metric, value))?),
                "run_delay_s" => b
                    .run_delays
                    .push(value.parse().map_err(|_| bad(metric, value))?),
                "solver_time_s" => {
                    b.solver_time = value.parse().map_err(|_| bad(metric, value))?
                }
                // Derived rows; recomputed from the vectors.
                "map_duration_mean_s" | "map_duration_sdm" | "reduce_duration_mean_s"
                | "reduce_duration_sdm" => {}
                other => return Err(bad(other, value)),
            }
        }
        Ok(b)
    }

    pub fn write_csv(&self, path: &Path, include_timings: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "slot_or_task", "value"])?;
        for (metric, who, value) in self.to_rows(include_timings) {
            w.write_record([&metric, &who, &value])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<MetricsBundle> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    message: format!("expected 3 columns, got {}", record.len()),
                });
            }
            rows.push((
                record[0].to_string(),
                record[1].to_string(),
                record[2].to_string(),
            ));
        }
        MetricsBundle::from_rows(&rows)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation divided by the mean; 0 for empty or
/// zero-mean input.
pub fn stddev_over_mean(xs: &[f64]) -> f64 {
    let m = mean(xs);
    if xs.is_empty() || m == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    var.sqrt() / m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsBundle {
        MetricsBundle {
            scheduler: SchedulerKind::Lpt,
            slot_loads: vec![10, 12, 9],
            max_load: 12,
            ideal: 31.0 / 3.0,
            ratio: 12.0 / (31.0 / 3.0),
            map_durations: vec![0.1, 0.2],
            reduce_durations: vec![0.5, 0.25, 0.125],
            sort_delays: vec![0.01, 0.02, 0.03],
            run_delays: vec![0.02, 0.04, 0.06],
            solver_time: 0.001,
            collect_bytes: 640,
            broadcast_bytes: 160,
            collect_bound: 1280,
            broadcast_bound: 320,
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let bundle = sample();
        bundle.write_csv(&path, true).unwrap();
        let back = MetricsBundle::read_csv(&path).unwrap();
        assert_eq!(bundle, back);
    }

    #[test]
    fn default_csv_carries_no_timing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        sample().write_csv(&path, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("duration"));
        assert!(!text.contains("delay"));
        assert!(!text.contains("solver_time"));
        assert!(text.contains("slot_load,slot-1,10"));
    }

    #[test]
    fn mean_and_spread() {
        assert_eq!(mean(&[]), 0.0);
        assert_eq!(mean(&[2.0, 4.0]), 3.0);
        assert_eq!(stddev_over_mean(&[5.0, 5.0, 5.0]), 0.0);
        // Population stddev of {2,4} is 1; mean 3.
        assert!((stddev_over_mean(&[2.0, 4.0]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_metric_is_rejected() {
        let rows = vec![("bogus".into(), String::new(), "1".into())];
        assert!(MetricsBundle::from_rows(&rows).is_err());
    }
}
