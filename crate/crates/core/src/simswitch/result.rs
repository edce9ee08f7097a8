use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::read_rows;
use crate::units::format_seconds;

pub(crate) const PS_PER_NS: u64 = 1_000;

/// Aggregate state at the end of one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub time_ps: u64,
    /// Bytes reaching the switch during the interval, as a rate.
    pub agg_rate_bps: f64,
    pub backlog_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkerSample {
    /// Permitted rate `R_C`.
    pub rc_bps: f64,
    /// Rate the worker is pacing at: the smaller of its offered and
    /// permitted rate, 0 when paused or idle.
    pub send_rate_bps: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub bytes_sent: u64,
    pub marks: u64,
    pub cnps: u64,
    pub pauses: u64,
    pub resumes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub sample_interval_ps: u64,
    pub samples: Vec<Sample>,
    /// `workers[k][w]`: state of worker `w` at sample `k`.
    pub workers: Vec<Vec<WorkerSample>>,
    pub counts: EventCounts,
    pub peak_backlog_bytes: u64,
    pub max_ingress_bytes: u64,
    pub first_mark_ps: Option<u64>,
    /// First time a notification pushed some busy worker's permitted rate
    /// below the rate its application offers.
    pub first_effective_cut_ps: Option<u64>,
    /// Notifications that worker had received by then, the cutting one
    /// included.
    pub cnps_before_effective_cut: Option<u32>,
}

/// Start of the plateau window used to estimate the initial aggregate rate;
/// the first interval still contains the propagation delay.
pub const PLATEAU_START_PS: u64 = 20_000_000;
pub const PLATEAU_END_PS: u64 = 100_000_000;
/// An interval counts as reduced once its rate falls below this fraction of
/// the initial rate.
pub const REDUCTION_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reduction {
    /// Start of the first reduced interval.
    pub time_ps: u64,
    pub backlog_bytes: u64,
}

impl SimResult {
    pub(crate) fn empty(sample_interval_ps: u64) -> Self {
        Self {
            sample_interval_ps,
            samples: Vec::new(),
            workers: Vec::new(),
            counts: EventCounts::default(),
            peak_backlog_bytes: 0,
            max_ingress_bytes: 0,
            first_mark_ps: None,
            first_effective_cut_ps: None,
            cnps_before_effective_cut: None,
        }
    }

    /// Mean aggregate arrival rate over the plateau window.
    pub fn initial_rate_bps(&self) -> Option<f64> {
        let plateau: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| (PLATEAU_START_PS..=PLATEAU_END_PS).contains(&s.time_ps))
            .map(|s| s.agg_rate_bps)
            .collect();
        if plateau.is_empty() {
            return None;
        }
        Some(plateau.iter().sum::<f64>() / plateau.len() as f64)
    }

    /// First interval after the plateau starts whose aggregate rate drops
    /// below [`REDUCTION_FRACTION`] of the initial rate, with the backlog at
    /// its start.
    pub fn first_reduction(&self) -> Option<Reduction> {
        let threshold = REDUCTION_FRACTION * self.initial_rate_bps()?;
        let k = self
            .samples
            .iter()
            .position(|s| s.time_ps >= PLATEAU_START_PS && s.agg_rate_bps < threshold)?;
        let start = self.samples[k].time_ps - self.sample_interval_ps;
        let backlog = if k == 0 { 0 } else { self.samples[k - 1].backlog_bytes };
        Some(Reduction {
            time_ps: start,
            backlog_bytes: backlog,
        })
    }

    pub fn reaction_delay_ps(&self) -> Option<u64> {
        Some(self.first_effective_cut_ps? - self.first_mark_ps?)
    }

    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "agg_rate_bps", "backlog_bytes"])?;
        for s in &self.samples {
            w.write_record([
                format_seconds((s.time_ps / PS_PER_NS).into()),
                s.agg_rate_bps.to_string(),
                s.backlog_bytes.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<series csv>", e))
    }

    pub fn write_worker_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "worker", "rc_bps", "send_rate_bps", "alpha"])?;
        for (s, row) in self.samples.iter().zip(&self.workers) {
            let t = format_seconds((s.time_ps / PS_PER_NS).into());
            for (i, ws) in row.iter().enumerate() {
                w.write_record([
                    t.clone(),
                    i.to_string(),
                    ws.rc_bps.to_string(),
                    ws.send_rate_bps.to_string(),
                    ws.alpha.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<worker csv>", e))
    }

    pub fn summary(&self) -> Summary {
        let secs = |ps: u64| ps as f64 * 1e-12;
        let reduction = self.first_reduction();
        Summary {
            counts: self.counts,
            initial_rate_bps: self.initial_rate_bps(),
            first_reduction_s: reduction.map(|r| secs(r.time_ps)),
            backlog_at_first_reduction_bytes: reduction.map(|r| r.backlog_bytes),
            peak_backlog_bytes: self.peak_backlog_bytes,
            max_ingress_bytes: self.max_ingress_bytes,
            first_mark_s: self.first_mark_ps.map(secs),
            first_effective_cut_s: self.first_effective_cut_ps.map(secs),
            cnps_before_effective_cut: self.cnps_before_effective_cut,
        }
    }
}

/// Reads a table written by [`SimResult::write_series_csv`].
pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<Sample>> {
    read_rows(input, "<series csv>", &["time_s", "agg_rate_bps", "backlog_bytes"])?
        .iter()
        .map(|r| {
            Ok(Sample {
                time_ps: r.seconds(0)? * PS_PER_NS,
                agg_rate_bps: r.get(1)?,
                backlog_bytes: r.get(2)?,
            })
        })
        .collect()
}

/// Reads a table written by [`SimResult::write_worker_csv`] as
/// `(time in ps, worker, state)` rows.
pub fn read_worker_csv<R: Read>(input: R) -> Result<Vec<(u64, usize, WorkerSample)>> {
    read_rows(input, "<worker csv>", &["time_s", "worker", "rc_bps", "send_rate_bps", "alpha"])?
        .iter()
        .map(|r| {
            let state = WorkerSample {
                rc_bps: r.get(2)?,
                send_rate_bps: r.get(3)?,
                alpha: r.get(4)?,
            };
            Ok((r.seconds(0)? * PS_PER_NS, r.get(1)?, state))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub counts: EventCounts,
    pub initial_rate_bps: Option<f64>,
    pub first_reduction_s: Option<f64>,
    pub backlog_at_first_reduction_bytes: Option<u64>,
    pub peak_backlog_bytes: u64,
    pub max_ingress_bytes: u64,
    pub first_mark_s: Option<f64>,
    pub first_effective_cut_s: Option<f64>,
    pub cnps_before_effective_cut: Option<u32>,
}
