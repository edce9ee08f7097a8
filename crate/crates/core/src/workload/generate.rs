use std::io::{Read, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{allgather_chunk, reduce_scatter_chunk};
use super::manifest::{load_manifest, LayerManifest, BYTES_PER_PARAM};
use crate::error::{Error, Result};
use crate::netcalc::Rate;
use crate::table::read_rows;
use crate::trace::{ingest_with_horizon, ArrivalFunction, PacketRecord};
use crate::units::seconds_to_ns;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub low: f64,
    pub high: f64,
}

impl UniformRange {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn check(&self, field: &str) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low >= 0.0 && self.low <= self.high) {
            return Err(Error::config(field, format!("[{}, {}] is not a valid range", self.low, self.high)));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(self.low..=self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Linear,
    Ring,
}

/// Traffic description of one data-parallel training job.
///
/// Times are in seconds and rates in bits per second. The layer manifest is
/// the bundled ResNet-50 unless `manifest_path` or `layers` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub mode: Mode,
    pub n_workers: usize,
    pub rounds: usize,
    /// Idle time before each backward pass.
    pub forward_gap_s: f64,
    /// Pause after each layer's transmissions.
    pub layer_gap_s: UniformRange,
    /// Sending rate of each burst, drawn per burst.
    pub burst_rate_bps: UniformRange,
    pub line_rate_bps: f64,
    pub packet_bytes: u64,
    /// Ring only: processing time between receiving a chunk and forwarding
    /// the dependent one.
    pub ring_step_delay_s: f64,
    /// Linear only: also emit the aggregated gradients sent back to each
    /// worker.
    pub return_traffic: bool,
    pub manifest_path: Option<PathBuf>,
    pub layers: Option<Vec<u64>>,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Linear,
            n_workers: 3,
            rounds: 10,
            // a round of the bundled model with 3 workers spans about 2.5 s
            forward_gap_s: 1.07,
            layer_gap_s: UniformRange::new(0.020, 0.030),
            burst_rate_bps: UniformRange::new(25e9, 35e9),
            line_rate_bps: 100e9,
            packet_bytes: 1500,
            ring_step_delay_s: 0.0,
            return_traffic: false,
            manifest_path: None,
            layers: None,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn manifest(&self) -> Result<LayerManifest> {
        match (&self.manifest_path, &self.layers) {
            (Some(_), Some(_)) => Err(Error::config("layers", "give either `manifest_path` or `layers`, not both")),
            (Some(path), None) => load_manifest(path),
            (None, Some(layers)) => LayerManifest::new(layers.clone(), BYTES_PER_PARAM),
            (None, None) => Ok(LayerManifest::resnet50()),
        }
    }

    fn validate(&self) -> Result<Params> {
        let min_workers = match self.mode {
            Mode::Linear => 1,
            Mode::Ring => 2,
        };
        if self.n_workers < min_workers {
            return Err(Error::config(
                "n_workers",
                format!("{:?} mode needs at least {min_workers} workers", self.mode),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.packet_bytes == 0 {
            return Err(Error::config("packet_bytes", "must be positive"));
        }
        self.layer_gap_s.check("layer_gap_s")?;
        self.burst_rate_bps.check("burst_rate_bps")?;
        if !(self.line_rate_bps.is_finite() && self.line_rate_bps > 0.0) {
            return Err(Error::config("line_rate_bps", "must be positive"));
        }
        if self.burst_rate_bps.low < 1.0 || self.burst_rate_bps.high > self.line_rate_bps {
            return Err(Error::config(
                "burst_rate_bps",
                format!("must lie within (0, {}] bit/s", self.line_rate_bps),
            ));
        }
        if self.mode == Mode::Ring && self.return_traffic {
            return Err(Error::config("return_traffic", "only applies to linear mode"));
        }
        Ok(Params {
            manifest: self.manifest()?,
            forward_gap_ns: seconds_to_ns("forward_gap_s", self.forward_gap_s)?,
            ring_step_delay_ns: seconds_to_ns("ring_step_delay_s", self.ring_step_delay_s)?,
        })
    }
}

struct Params {
    manifest: LayerManifest,
    forward_gap_ns: u64,
    ring_step_delay_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Worker to server.
    Linear,
    /// Server back to worker.
    Return,
    ReduceScatter,
    Allgather,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Linear => "linear",
            Phase::Return => "return",
            Phase::ReduceScatter => "reduce-scatter",
            Phase::Allgather => "allgather",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Phase::Linear, Phase::Return, Phase::ReduceScatter, Phase::Allgather]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown phase `{s}`")))
    }
}

/// One constant-rate transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BurstEvent {
    /// Sender, or the receiving worker for return traffic.
    pub worker: usize,
    pub round: usize,
    /// Layer index in forward order.
    pub layer: usize,
    pub phase: Phase,
    /// Ring step `0..2(N-1)`; 0 otherwise.
    pub step: usize,
    pub chunk: Option<usize>,
    pub start_ns: u64,
    pub end_ns: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedWorkload {
    pub spec: WorkloadSpec,
    pub manifest: LayerManifest,
    /// Packets sent by each worker, toward the server (linear) or the ring
    /// successor (ring), in time order.
    pub workers: Vec<Vec<PacketRecord>>,
    /// Packets the server sends to each worker; empty unless requested.
    pub returns: Vec<Vec<PacketRecord>>,
    pub events: Vec<BurstEvent>,
    /// End of the last round, including its trailing layer gap.
    pub end_ns: u64,
}

impl GeneratedWorkload {
    pub fn worker_bytes(&self, worker: usize) -> u64 {
        self.workers[worker].iter().map(|p| p.size).sum()
    }

    /// Per-worker arrival functions on a common grid covering all rounds.
    pub fn arrivals(&self, bin_width_ns: u64) -> Result<Vec<ArrivalFunction>> {
        let horizon = self.end_ns.div_ceil(bin_width_ns.max(1)) as usize;
        self.workers
            .iter()
            .map(|p| ingest_with_horizon(p.iter().copied(), bin_width_ns, horizon))
            .collect()
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["worker", "layer", "phase", "start_ns", "bytes"])?;
        for e in &self.events {
            w.write_record([
                e.worker.to_string(),
                e.layer.to_string(),
                e.phase.as_str().to_string(),
                e.start_ns.to_string(),
                e.bytes.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<events csv>", e))
    }
}

/// One row of the event log written by [`GeneratedWorkload::write_events_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub worker: usize,
    pub layer: usize,
    pub phase: Phase,
    pub start_ns: u64,
    pub bytes: u64,
}

impl From<&BurstEvent> for EventRecord {
    fn from(e: &BurstEvent) -> Self {
        Self {
            worker: e.worker,
            layer: e.layer,
            phase: e.phase,
            start_ns: e.start_ns,
            bytes: e.bytes,
        }
    }
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRecord>> {
    read_rows(input, "<events csv>", &["worker", "layer", "phase", "start_ns", "bytes"])?
        .iter()
        .map(|r| {
            Ok(EventRecord {
                worker: r.get(0)?,
                layer: r.get(1)?,
                phase: r.str(2).parse().map_err(|e: Error| r.invalid(e.to_string()))?,
                start_ns: r.get(3)?,
                bytes: r.get(4)?,
            })
        })
        .collect()
}

pub fn generate(spec: &WorkloadSpec) -> Result<GeneratedWorkload> {
    match spec.mode {
        Mode::Linear => gen_linear(spec),
        Mode::Ring => gen_ring(spec),
    }
}

/// Appends MTU-sized packets of a burst sent at `rate` from `start`; returns
/// the time the last byte leaves.
fn packetize(out: &mut Vec<PacketRecord>, start: u64, bytes: u64, rate: Rate, mtu: u64) -> u64 {
    let at = |offset: u64| start + (offset as u128 * rate.scale() / rate.numer()) as u64;
    let mut offset = 0;
    while offset < bytes {
        let size = mtu.min(bytes - offset);
        out.push(PacketRecord::new(at(offset), size));
        offset += size;
    }
    start + (bytes as u128 * rate.scale()).div_ceil(rate.numer()) as u64
}

fn sample_rate(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> Rate {
    let bps = spec.burst_rate_bps.sample(rng).round().max(1.0) as u64;
    Rate::bits_per_sec(bps).expect("positive rate")
}

fn sample_gap(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> u64 {
    (spec.layer_gap_s.sample(rng) * 1e9).round() as u64
}

/// Workers send each layer's gradients to the server one after another,
/// last layer first.
pub fn gen_linear(spec: &WorkloadSpec) -> Result<GeneratedWorkload> {
    if spec.mode != Mode::Linear {
        return Err(Error::config("mode", "expected linear"));
    }
    let p = spec.validate()?;
    let n = spec.n_workers;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut workers = vec![Vec::new(); n];
    let mut returns = vec![Vec::new(); if spec.return_traffic { n } else { 0 }];
    let mut events = Vec::new();
    let mut t = 0u64;
    for round in 0..spec.rounds {
        t += p.forward_gap_ns;
        for layer in (0..p.manifest.len()).rev() {
            let bytes = p.manifest.layer_bytes(layer);
            let mut send = |dst: &mut Vec<PacketRecord>, worker: usize, phase: Phase, t: &mut u64| {
                let rate = sample_rate(spec, &mut rng);
                let end = packetize(dst, *t, bytes, rate, spec.packet_bytes);
                events.push(BurstEvent {
                    worker,
                    round,
                    layer,
                    phase,
                    step: 0,
                    chunk: None,
                    start_ns: *t,
                    end_ns: end,
                    bytes,
                });
                *t = end;
            };
            for (w, out) in workers.iter_mut().enumerate() {
                send(out, w, Phase::Linear, &mut t);
            }
            for (w, out) in returns.iter_mut().enumerate() {
                send(out, w, Phase::Return, &mut t);
            }
            t += sample_gap(spec, &mut rng);
        }
    }
    Ok(GeneratedWorkload {
        spec: spec.clone(),
        manifest: p.manifest,
        workers,
        returns,
        events,
        end_ns: t,
    })
}

/// Bytes of one ring chunk for a layer: a `1/N` share rounded up, or the
/// whole layer when it has fewer parameters than workers.
pub fn ring_chunk_bytes(manifest: &LayerManifest, layer: usize, n: usize) -> u64 {
    let bytes = manifest.layer_bytes(layer);
    if manifest.layers()[layer] < n as u64 {
        bytes
    } else {
        bytes.div_ceil(n as u64)
    }
}

/// Every worker sends `2(N-1)` chunks per layer to its successor. A worker
/// starts step `s` once its own link is free and the chunk of step `s - 1`
/// from its predecessor has fully arrived.
pub fn gen_ring(spec: &WorkloadSpec) -> Result<GeneratedWorkload> {
    if spec.mode != Mode::Ring {
        return Err(Error::config("mode", "expected ring"));
    }
    let p = spec.validate()?;
    let n = spec.n_workers;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut workers = vec![Vec::new(); n];
    let mut events = Vec::new();
    let mut t = 0u64;
    for round in 0..spec.rounds {
        t += p.forward_gap_ns;
        for layer in (0..p.manifest.len()).rev() {
            let bytes = ring_chunk_bytes(&p.manifest, layer, n);
            let mut link_free = vec![t; n];
            let mut received = vec![t; n];
            for step in 0..2 * (n - 1) {
                let mut sent_end = vec![0u64; n];
                for w in 0..n {
                    let ready = if step == 0 {
                        t
                    } else {
                        received[w] + p.ring_step_delay_ns
                    };
                    let start = link_free[w].max(ready);
                    let rate = sample_rate(spec, &mut rng);
                    let end = packetize(&mut workers[w], start, bytes, rate, spec.packet_bytes);
                    let (phase, chunk) = if step < n - 1 {
                        (Phase::ReduceScatter, reduce_scatter_chunk(w, step, n))
                    } else {
                        (Phase::Allgather, allgather_chunk(w, step - (n - 1), n))
                    };
                    events.push(BurstEvent {
                        worker: w,
                        round,
                        layer,
                        phase,
                        step,
                        chunk: Some(chunk),
                        start_ns: start,
                        end_ns: end,
                        bytes,
                    });
                    link_free[w] = end;
                    sent_end[w] = end;
                }
                for w in 0..n {
                    received[(w + 1) % n] = sent_end[w];
                }
            }
            t = link_free.iter().copied().max().expect("n >= 2") + sample_gap(spec, &mut rng);
        }
    }
    Ok(GeneratedWorkload {
        spec: spec.clone(),
        manifest: p.manifest,
        workers,
        returns: Vec::new(),
        events,
        end_ns: t,
    })
}
