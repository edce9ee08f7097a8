//! Event loop: workers, one shared-memory switch and one destination.
//!
//! Time is kept in integer picoseconds. Events at equal times run in the
//! order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{pfc_thresholds, BurstSchedule, FastReaction, SimConfig};
use super::dcqcn::{red_mark_probability, IncreaseSource, RateState};
use super::result::{SimResult, WorkerSample, PS_PER_NS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Packet {
    worker: usize,
    size: u64,
    marked: bool,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    BurstStart(usize),
    HostSend(usize),
    SwitchArrive(Packet),
    EgressDone,
    DestArrive(Packet),
    Cnp(usize),
    Pause(usize),
    Resume(usize),
    AlphaTimer(usize, u64),
    RateTimer(usize, u64),
    Sample,
    Clamp(f64),
}

struct Scheduled {
    time: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Host {
    rate: RateState,
    offered: f64,
    clamp: Option<f64>,
    /// Bursts still to send, next first.
    bursts: VecDeque<u64>,
    remaining: u64,
    paused: bool,
    /// Wanted to send while paused.
    blocked: bool,
    bytes_since_increase: u64,
    alpha_gen: u64,
    rate_gen: u64,
    recovering: bool,
    cnps_received: u32,
}

impl Host {
    fn send_rate(&self, dcqcn: bool) -> f64 {
        let mut r = self.offered;
        if dcqcn {
            r = r.min(self.rate.current);
        }
        if let Some(c) = self.clamp {
            r = r.min(c);
        }
        r
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: u64,
    end: u64,
    prop: u64,
    hosts: Vec<Host>,
    queue: VecDeque<Packet>,
    egress_busy: bool,
    buffer_used: u64,
    ingress: Vec<u64>,
    pause_sent: Vec<bool>,
    last_cnp: Vec<Option<u64>>,
    xoff: f64,
    xon: f64,
    interval_bytes: u64,
    in_flight_up: u64,
    in_flight_down: u64,
    clamp_scheduled: bool,
    result: SimResult,
}

/// Serialization time of `bytes` at `rate_bps`, in picoseconds.
fn ser_ps(bytes: u64, rate_bps: f64) -> u64 {
    (bytes as f64 * 8e12 / rate_bps).round() as u64
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        let n = cfg.n_workers;
        let manifest = cfg.workload.manifest()?;
        let backward: Vec<u64> = (0..manifest.len()).rev().map(|l| manifest.layer_bytes(l)).collect();
        let schedule: VecDeque<u64> = match cfg.workload.bursts {
            BurstSchedule::LastLayer => backward[..1].iter().copied().collect(),
            BurstSchedule::FullRound => backward.into_iter().collect(),
        };
        let (xoff, xon) = pfc_thresholds(&cfg.pfc, cfg.line_rate_gbps())?;
        let hosts = (0..n)
            .map(|_| Host {
                rate: RateState::at_line_rate(cfg.line_rate_bps, &cfg.dcqcn),
                offered: 0.0,
                clamp: None,
                bursts: schedule.clone(),
                remaining: 0,
                paused: false,
                blocked: false,
                bytes_since_increase: 0,
                alpha_gen: 0,
                rate_gen: 0,
                recovering: false,
                cnps_received: 0,
            })
            .collect();
        Ok(Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            end: cfg.sim_duration_ns * PS_PER_NS,
            prop: cfg.prop_delay_ns * PS_PER_NS,
            hosts,
            queue: VecDeque::new(),
            egress_busy: false,
            buffer_used: 0,
            ingress: vec![0; n],
            pause_sent: vec![false; n],
            last_cnp: vec![None; n],
            xoff,
            xon,
            interval_bytes: 0,
            in_flight_up: 0,
            in_flight_down: 0,
            clamp_scheduled: false,
            result: SimResult::empty(cfg.sample_interval_ns * PS_PER_NS),
        })
    }

    fn schedule(&mut self, delay: u64, event: Event) {
        self.heap.push(Scheduled {
            time: self.now + delay,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    fn run(mut self) -> Result<SimResult> {
        for w in 0..self.hosts.len() {
            self.schedule(0, Event::BurstStart(w));
        }
        self.schedule(self.result.sample_interval_ps, Event::Sample);
        while let Some(next) = self.heap.pop() {
            if next.time > self.end {
                break;
            }
            self.now = next.time;
            self.handle(next.event)?;
        }
        self.check_conservation()?;
        Ok(self.result)
    }

    fn handle(&mut self, event: Event) -> Result<()> {
        match event {
            Event::BurstStart(w) => self.burst_start(w),
            Event::HostSend(w) => self.host_send(w)?,
            Event::SwitchArrive(p) => self.switch_arrive(p)?,
            Event::EgressDone => self.egress_done(),
            Event::DestArrive(p) => self.dest_arrive(p),
            Event::Cnp(w) => self.cnp(w)?,
            Event::Pause(w) => self.hosts[w].paused = true,
            Event::Resume(w) => {
                let h = &mut self.hosts[w];
                h.paused = false;
                if h.blocked {
                    h.blocked = false;
                    self.schedule(0, Event::HostSend(w));
                }
            }
            Event::AlphaTimer(w, gen) => {
                if gen == self.hosts[w].alpha_gen {
                    self.hosts[w].rate.on_alpha_timer(&self.cfg.dcqcn);
                    self.schedule(self.cfg.dcqcn.alpha_timer_ns * PS_PER_NS, Event::AlphaTimer(w, gen));
                }
            }
            Event::RateTimer(w, gen) => {
                if gen == self.hosts[w].rate_gen {
                    self.increase(w, IncreaseSource::Timer)?;
                    if self.hosts[w].recovering {
                        self.schedule(self.cfg.dcqcn.rate_timer_ns * PS_PER_NS, Event::RateTimer(w, gen));
                    }
                }
            }
            Event::Sample => self.sample(),
            Event::Clamp(rate) => {
                for h in &mut self.hosts {
                    h.clamp = Some(rate);
                }
            }
        }
        Ok(())
    }

    fn burst_start(&mut self, w: usize) {
        let range = self.cfg.workload.offered_rate_bps;
        let offered = self.rng.gen_range(range.low..=range.high);
        let h = &mut self.hosts[w];
        if let Some(bytes) = h.bursts.pop_front() {
            h.remaining = bytes;
            h.offered = offered;
            self.schedule(0, Event::HostSend(w));
        }
    }

    fn host_send(&mut self, w: usize) -> Result<()> {
        let dcqcn = self.cfg.dcqcn.enabled;
        let mtu = self.cfg.mtu;
        let h = &mut self.hosts[w];
        if h.remaining == 0 {
            return Ok(());
        }
        if h.paused {
            h.blocked = true;
            return Ok(());
        }
        let size = mtu.min(h.remaining);
        h.remaining -= size;
        let gap = ser_ps(size, h.send_rate(dcqcn));
        let more = h.remaining > 0;
        let next_burst = !more && !h.bursts.is_empty();
        self.result.counts.packets_sent += 1;
        self.result.counts.bytes_sent += size;
        self.in_flight_up += 1;
        let arrive = ser_ps(size, self.cfg.line_rate_bps) + self.prop;
        self.schedule(
            arrive,
            Event::SwitchArrive(Packet {
                worker: w,
                size,
                marked: false,
            }),
        );
        if more {
            self.schedule(gap, Event::HostSend(w));
        } else if next_burst {
            let range = self.cfg.workload.layer_gap_s;
            let idle = (self.rng.gen_range(range.low..=range.high) * 1e12).round() as u64;
            self.schedule(gap + idle, Event::BurstStart(w));
        }
        if dcqcn && self.hosts[w].recovering {
            let h = &mut self.hosts[w];
            h.bytes_since_increase += size;
            if h.bytes_since_increase >= self.cfg.dcqcn.byte_counter_bytes {
                h.bytes_since_increase = 0;
                self.increase(w, IncreaseSource::ByteCounter)?;
            }
        }
        Ok(())
    }

    fn switch_arrive(&mut self, mut p: Packet) -> Result<()> {
        self.in_flight_up -= 1;
        self.interval_bytes += p.size;
        if self.buffer_used + p.size > self.cfg.buffer_bytes {
            self.result.counts.packets_dropped += 1;
            return Ok(());
        }
        if self.cfg.dcqcn.enabled {
            let prob = red_mark_probability(self.buffer_used, &self.cfg.dcqcn);
            if prob > 0.0 && self.rng.gen::<f64>() < prob {
                p.marked = true;
                self.result.counts.marks += 1;
                if self.result.first_mark_ps.is_none() {
                    self.result.first_mark_ps = Some(self.now);
                }
                self.maybe_schedule_clamp();
            }
        }
        self.buffer_used += p.size;
        self.ingress[p.worker] += p.size;
        self.result.peak_backlog_bytes = self.result.peak_backlog_bytes.max(self.buffer_used);
        self.result.max_ingress_bytes = self.result.max_ingress_bytes.max(self.ingress[p.worker]);
        if self.buffer_used > self.cfg.buffer_bytes {
            return Err(Error::Invariant(format!(
                "buffer holds {} bytes, above its {} byte capacity",
                self.buffer_used, self.cfg.buffer_bytes
            )));
        }
        self.queue.push_back(p);
        if self.cfg.pfc.enabled && !self.pause_sent[p.worker] && self.ingress[p.worker] as f64 >= self.xoff {
            self.pause_sent[p.worker] = true;
            self.result.counts.pauses += 1;
            self.schedule(self.prop, Event::Pause(p.worker));
        }
        if !self.egress_busy {
            self.start_tx();
        }
        Ok(())
    }

    fn maybe_schedule_clamp(&mut self) {
        if self.clamp_scheduled {
            return;
        }
        if let Some(FastReaction { delay_ns, rate_bps }) = self.cfg.fast_reaction {
            self.clamp_scheduled = true;
            let rate = rate_bps.unwrap_or(self.cfg.line_rate_bps / self.cfg.n_workers as f64);
            self.schedule(delay_ns * PS_PER_NS, Event::Clamp(rate));
        }
    }

    fn start_tx(&mut self) {
        let head = self.queue.front().expect("called with a nonempty queue");
        self.egress_busy = true;
        let t = ser_ps(head.size, self.cfg.line_rate_bps);
        self.schedule(t, Event::EgressDone);
    }

    fn egress_done(&mut self) {
        let p = self.queue.pop_front().expect("transmission in progress");
        self.buffer_used -= p.size;
        self.ingress[p.worker] -= p.size;
        self.in_flight_down += 1;
        self.schedule(self.prop, Event::DestArrive(p));
        if self.pause_sent[p.worker] && self.ingress[p.worker] as f64 <= self.xon {
            self.pause_sent[p.worker] = false;
            self.result.counts.resumes += 1;
            self.schedule(self.prop, Event::Resume(p.worker));
        }
        if self.queue.is_empty() {
            self.egress_busy = false;
        } else {
            self.start_tx();
        }
    }

    fn dest_arrive(&mut self, p: Packet) {
        self.in_flight_down -= 1;
        self.result.counts.packets_delivered += 1;
        if !(p.marked && self.cfg.dcqcn.enabled) {
            return;
        }
        let interval = self.cfg.dcqcn.cnp_interval_ns * PS_PER_NS;
        if self.last_cnp[p.worker].is_none_or(|t| self.now >= t + interval) {
            self.last_cnp[p.worker] = Some(self.now);
            self.result.counts.cnps += 1;
            // back through the switch to the sender
            self.schedule(2 * self.prop, Event::Cnp(p.worker));
        }
    }

    fn cnp(&mut self, w: usize) -> Result<()> {
        let p = self.cfg.dcqcn;
        let h = &mut self.hosts[w];
        h.rate.on_cnp(&p);
        h.bytes_since_increase = 0;
        h.recovering = true;
        h.alpha_gen += 1;
        h.rate_gen += 1;
        h.cnps_received += 1;
        let (ag, rg) = (h.alpha_gen, h.rate_gen);
        if h.remaining > 0 && h.rate.current < h.offered && self.result.first_effective_cut_ps.is_none() {
            self.result.first_effective_cut_ps = Some(self.now);
            self.result.cnps_before_effective_cut = Some(h.cnps_received);
        }
        self.check_rate(w)?;
        self.schedule(p.alpha_timer_ns * PS_PER_NS, Event::AlphaTimer(w, ag));
        self.schedule(p.rate_timer_ns * PS_PER_NS, Event::RateTimer(w, rg));
        Ok(())
    }

    fn increase(&mut self, w: usize, source: IncreaseSource) -> Result<()> {
        let p = self.cfg.dcqcn;
        let h = &mut self.hosts[w];
        h.rate.on_increase(source, &p);
        h.recovering = !h.rate.is_at_line_rate();
        self.check_rate(w)
    }

    fn check_rate(&self, w: usize) -> Result<()> {
        let r = &self.hosts[w].rate;
        if !(r.current > 0.0 && r.current <= self.cfg.line_rate_bps) || !(0.0..=1.0).contains(&r.alpha) {
            return Err(Error::Invariant(format!(
                "worker {w} has rate {} bit/s and alpha {}",
                r.current, r.alpha
            )));
        }
        Ok(())
    }

    fn sample(&mut self) {
        let interval = self.result.sample_interval_ps;
        let dcqcn = self.cfg.dcqcn.enabled;
        self.result.samples.push(super::result::Sample {
            time_ps: self.now,
            agg_rate_bps: self.interval_bytes as f64 * 8e12 / interval as f64,
            backlog_bytes: self.buffer_used,
        });
        self.interval_bytes = 0;
        let row = self
            .hosts
            .iter()
            .map(|h| WorkerSample {
                rc_bps: h.rate.current,
                send_rate_bps: if h.remaining > 0 && !h.paused { h.send_rate(dcqcn) } else { 0.0 },
                alpha: h.rate.alpha,
            })
            .collect();
        self.result.workers.push(row);
        if self.now + interval <= self.end {
            self.schedule(interval, Event::Sample);
        }
    }

    fn check_conservation(&self) -> Result<()> {
        let c = &self.result.counts;
        let accounted = c.packets_delivered
            + c.packets_dropped
            + self.in_flight_up
            + self.in_flight_down
            + self.queue.len() as u64;
        if accounted != c.packets_sent {
            return Err(Error::Invariant(format!(
                "{} packets sent but {accounted} accounted for",
                c.packets_sent
            )));
        }
        Ok(())
    }
}

/// Simulates the configured fan-in for `sim_duration_ns`.
pub fn run_fanin(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if cfg.n_workers == 0 {
        return Ok(SimResult::empty(cfg.sample_interval_ns * PS_PER_NS));
    }
    Sim::new(cfg)?.run()
}

/// The same scenario with every sender clamped to an even share of the
/// line rate shortly after the first congestion mark.
pub fn run_counterfactual_fast_reaction(cfg: &SimConfig) -> Result<SimResult> {
    let mut cfg = cfg.clone();
    cfg.fast_reaction.get_or_insert_with(FastReaction::default);
    run_fanin(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::UniformRange;

    fn short(n_workers: usize) -> SimConfig {
        SimConfig {
            n_workers,
            sim_duration_ns: 500_000,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_workers_is_empty() {
        let r = run_fanin(&short(0)).unwrap();
        assert!(r.samples.is_empty());
        assert_eq!(r.counts, Default::default());
    }

    #[test]
    fn single_underloaded_worker_never_queues() {
        let mut cfg = short(1);
        cfg.workload.offered_rate_bps = UniformRange::new(30e9, 30e9);
        let r = run_fanin(&cfg).unwrap();
        assert!(r.peak_backlog_bytes <= cfg.mtu);
        assert_eq!(r.counts.marks, 0);
        let rate = r.initial_rate_bps().unwrap();
        assert!((rate - 30e9).abs() < 0.01 * 30e9, "{rate}");
    }

    #[test]
    fn lossless_with_bounded_ingress() {
        let cfg = SimConfig {
            sim_duration_ns: 2_000_000,
            ..SimConfig::default()
        };
        let r = run_fanin(&cfg).unwrap();
        assert_eq!(r.counts.packets_dropped, 0);
        assert!(r.counts.pauses > 0);
        let (xoff, _) = pfc_thresholds(&cfg.pfc, cfg.line_rate_gbps()).unwrap();
        // pause takes one propagation delay; the wire holds one more
        let in_flight = cfg.line_rate_bps / 8.0 * 2.0 * cfg.prop_delay_ns as f64 * 1e-9;
        assert!((r.max_ingress_bytes as f64) <= xoff + cfg.mtu as f64 + in_flight);
        assert!(r.samples.iter().all(|s| s.backlog_bytes <= cfg.buffer_bytes));
        for row in &r.workers {
            for w in row {
                assert!(w.rc_bps > 0.0 && w.rc_bps <= cfg.line_rate_bps);
                assert!((0.0..=1.0).contains(&w.alpha));
            }
        }
    }

    #[test]
    fn small_buffer_without_pfc_drops() {
        let mut cfg = short(30);
        cfg.pfc.enabled = false;
        cfg.buffer_bytes = 1_000_000;
        let r = run_fanin(&cfg).unwrap();
        assert!(r.counts.packets_dropped > 0);
        assert!(r.peak_backlog_bytes <= cfg.buffer_bytes);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = short(30);
        assert_eq!(run_fanin(&cfg).unwrap(), run_fanin(&cfg).unwrap());
        let other = SimConfig { seed: 2, ..cfg.clone() };
        assert_ne!(run_fanin(&cfg).unwrap().samples, run_fanin(&other).unwrap().samples);
    }

    #[test]
    fn full_round_schedule_runs() {
        let mut cfg = short(4);
        cfg.workload.bursts = BurstSchedule::FullRound;
        cfg.workload.layers = Some(vec![1_000, 2_000, 3_000]);
        cfg.workload.layer_gap_s = UniformRange::new(10e-6, 20e-6);
        let r = run_fanin(&cfg).unwrap();
        assert_eq!(r.counts.bytes_sent, 4 * 24_000);
        assert_eq!(r.counts.packets_delivered, r.counts.packets_sent);
    }
}
