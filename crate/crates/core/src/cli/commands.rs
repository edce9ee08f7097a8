use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::manifest::{digest_file, FileDigest, Outputs, RunManifest, MANIFEST_FILE};
use super::svg::{self, Panel};
use super::{Cli, Command, Common};
use crate::error::{Error, Result};
use crate::metrics::{
    bmax_sweep, burstiness_curve, burstiness_potential, interval_bmax, peak_to_mean_of, rate_for_utilization,
    utilization_ppm, LagSet,
};
use crate::netcalc::TimeGrid;
use crate::simswitch::{run_counterfactual_fast_reaction, run_fanin, SimConfig};
use crate::trace::{
    ingest, ingest_with_horizon, read_trace_csv, splice, splice_packets, write_trace_csv, ArrivalFunction, Interval,
};
use crate::units::{format_seconds, parse_duration, parse_seconds};
use crate::workload::{even_partition, generate, ring_allreduce_with_fault, Fault, WorkloadSpec};

/// Rejected flag values map to the usage exit code like parse errors do.
pub(crate) enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

struct Run {
    command: &'static str,
    args: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
}

impl Run {
    fn new(command: &'static str, args: &[String], seed: Option<u64>) -> Self {
        Self {
            command,
            args: args.to_vec(),
            seed,
            inputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    fn finish(self, out: Outputs) -> Result<RunManifest> {
        out.finish(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            args: self.args,
            seed: self.seed,
            inputs: self.inputs,
            outputs: Vec::new(),
        })
    }
}

pub(crate) fn execute(command: Command, args: &[String]) -> Outcome<String> {
    match command {
        Command::Analyze {
            trace,
            binning,
            lags,
            utilizations,
            interval_utilization,
            binned,
            svg,
            common,
        } => analyze(
            args,
            &AnalyzeOpts {
                trace,
                bin: binning.bin,
                lags,
                utilizations,
                interval_utilization,
                binned,
                svg,
            },
            &common,
        ),
        Command::Splice {
            trace,
            remove,
            source,
            binning,
            common,
        } => splice_cmd(args, &trace, &remove, &source, binning.bin, &common),
        Command::Generate { spec, binning, common } => generate_cmd(args, spec.as_deref(), binning.bin, &common),
        Command::Potential {
            traces,
            binning,
            lags,
            common,
        } => potential_cmd(args, &traces, binning.bin, &lags, &common),
        Command::Simulate {
            config,
            workers,
            duration,
            counterfactual,
            common,
        } => simulate_cmd(args, config.as_deref(), workers, duration, counterfactual, &common),
        Command::RingVerify {
            n,
            len,
            drop_transfer,
            common,
        } => ring_verify(args, n, len, drop_transfer.as_deref(), &common),
        Command::Replay { manifest, out_dir } => replay(&manifest, &out_dir),
    }
}

fn parse_lags(spec: &str, grid: TimeGrid) -> Outcome<LagSet> {
    match spec {
        "default" => Ok(LagSet::default_for(grid)),
        "full" => Ok(LagSet::full(grid)),
        list => {
            let durations = list
                .split(',')
                .map(parse_duration)
                .collect::<Result<Vec<u64>>>()
                .map_err(|e| Failure::Usage(format!("--lags: {e}")))?;
            Ok(LagSet::from_durations(grid, &durations)?)
        }
    }
}

fn parse_window(flag: &str, text: &str) -> Outcome<Interval> {
    let Some((a, b)) = text.split_once(',') else {
        return usage(format!("{flag} expects `start,end` in seconds, got `{text}`"));
    };
    let bound = |s: &str| parse_seconds(s).map_err(|e| Failure::Usage(format!("{flag}: {e}")));
    Interval::new(bound(a)?, bound(b)?).map_err(|e| Failure::Usage(format!("{flag}: {e}")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn tau_seconds(grid: &TimeGrid, k: usize) -> f64 {
    grid.time_ns(k) as f64 * 1e-9
}

struct AnalyzeOpts {
    trace: PathBuf,
    bin: u64,
    lags: String,
    utilizations: Vec<f64>,
    interval_utilization: f64,
    binned: bool,
    svg: bool,
}

#[derive(Serialize)]
struct TraceSummary {
    bin_width_ns: u64,
    bins: usize,
    nonempty_bins: usize,
    total_bytes: u64,
    duration_s: String,
    mean_rate_bps: f64,
    lags: usize,
    interval_bmax_peak_tau_s: Option<String>,
    interval_bmax_peak_bytes: Option<f64>,
}

fn analyze(args: &[String], o: &AnalyzeOpts, common: &Common) -> Outcome<String> {
    for &u in o.utilizations.iter().chain([&o.interval_utilization]) {
        if !(u.is_finite() && u > 0.0) {
            return usage(format!("utilization {u} is not positive"));
        }
    }
    let mut run = Run::new("analyze", args, common.seed);
    run.input(&o.trace)?;
    let a = ingest(read_trace_csv(&o.trace)?, o.bin)?;
    let grid = *a.grid();
    let lags = parse_lags(&o.lags, grid)?;
    let e = burstiness_curve(&a, &lags)?;
    let ptm = peak_to_mean_of(&a, &e)?;
    let sweep = bmax_sweep(&a, &o.utilizations)?;
    let rate = rate_for_utilization(&a, utilization_ppm(o.interval_utilization)?)?;
    let ib = interval_bmax(&e, rate);
    let peak = ib.argmax();

    let mut out = Outputs::new(&common.out_dir)?;
    out.write("envelope.csv", |b| e.write_csv(b))?;
    out.write("ptm.csv", |b| ptm.write_csv(b))?;
    out.write("bmax.csv", |b| sweep.write_csv(b))?;
    out.write("interval_bmax.csv", |b| ib.write_csv(b))?;
    if o.binned {
        out.write("binned.csv", |b| a.write_binned_csv(b))?;
    }
    if o.svg {
        let panels = [
            Panel {
                title: "Burstiness envelope".into(),
                x_label: "lag (s)".into(),
                y_label: "bytes".into(),
                log_x: true,
                points: e.points().map(|(k, v)| (tau_seconds(&grid, k), v as f64)).collect(),
            },
            Panel {
                title: "Peak-to-mean ratio".into(),
                x_label: "lag (s)".into(),
                y_label: "ratio".into(),
                log_x: true,
                points: ptm
                    .points()
                    .iter()
                    .map(|p| (tau_seconds(&grid, p.lag_bins), p.ratio()))
                    .collect(),
            },
            Panel {
                title: "Max backlog".into(),
                x_label: "1 / utilization".into(),
                y_label: "bytes".into(),
                log_x: false,
                points: sweep.points.iter().map(|p| (p.inv_utilization(), p.bmax.bytes())).collect(),
            },
            Panel {
                title: "Interval backlog".into(),
                x_label: "lag (s)".into(),
                y_label: "bytes".into(),
                log_x: true,
                points: ib
                    .lags()
                    .bins()
                    .iter()
                    .zip(ib.values())
                    .map(|(&k, v)| (tau_seconds(&grid, k), v.bytes()))
                    .collect(),
            },
        ];
        out.write("panels.svg", |b| {
            b.extend_from_slice(svg::render(&panels).as_bytes());
            Ok(())
        })?;
    }
    let summary = TraceSummary {
        bin_width_ns: grid.bin_width_ns(),
        bins: grid.bin_count(),
        nonempty_bins: a.nonempty().len(),
        total_bytes: a.total_bytes(),
        duration_s: format_seconds(a.duration_ns()),
        mean_rate_bps: a.mean_rate_bps(),
        lags: lags.len(),
        interval_bmax_peak_tau_s: peak.map(|(k, _)| format_seconds(grid.time_ns(k))),
        interval_bmax_peak_bytes: peak.map(|(_, b)| b.bytes()),
    };
    out.write_json("summary.json", &summary)?;
    let dir = out.dir().display().to_string();
    run.finish(out)?;
    Ok(format!(
        "analyzed {} bytes over {} s ({} lags); outputs in {dir}",
        summary.total_bytes,
        summary.duration_s,
        summary.lags
    ))
}

fn splice_cmd(args: &[String], trace: &Path, remove: &str, source: &str, bin: u64, common: &Common) -> Outcome<String> {
    let remove = parse_window("--remove", remove)?;
    let source = parse_window("--source", source)?;
    let mut run = Run::new("splice", args, common.seed);
    run.input(trace)?;
    let records = read_trace_csv(trace)?;
    let spliced = splice_packets(&records, remove, source)?;
    // on bin-aligned windows the packet splice must agree with the binned one
    let a = ingest(records.iter().copied(), bin)?;
    let binned = splice(&a, remove, source)?;
    let aligned = [remove.start_ns, remove.end_ns, source.start_ns, source.end_ns]
        .iter()
        .all(|t| t % bin == 0);
    if aligned && !spliced.is_empty() {
        let check = ingest_with_horizon(spliced.iter().copied(), bin, a.grid().bin_count())?;
        if check.per_bin() != binned.per_bin() {
            return Err(Error::Invariant("packet splice disagrees with binned splice".into()).into());
        }
    }
    let mut out = Outputs::new(&common.out_dir)?;
    out.write("spliced.csv", |b| write_trace_csv(&spliced, b))?;
    let dir = out.dir().display().to_string();
    run.finish(out)?;
    Ok(format!(
        "spliced {} packets ({} before); output in {dir}",
        spliced.len(),
        records.len()
    ))
}

#[derive(Serialize)]
struct WorkerSummary {
    worker: usize,
    packets: usize,
    bytes: u64,
    max_bin_bytes: u64,
}

#[derive(Serialize)]
struct GenerateSummary {
    bin_width_ns: u64,
    end_s: String,
    events: usize,
    workers: Vec<WorkerSummary>,
}

fn generate_cmd(args: &[String], spec_path: Option<&Path>, bin: u64, common: &Common) -> Outcome<String> {
    let mut run = Run::new("generate", args, None);
    let mut spec = match spec_path {
        Some(p) => {
            run.input(p)?;
            WorkloadSpec::from_json(&read_text(p)?)?
        }
        None => WorkloadSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    run.seed = Some(spec.seed);
    if let Some(m) = &spec.manifest_path {
        run.input(m)?;
    }
    let g = generate(&spec)?;
    let arrivals = g.arrivals(bin)?;
    let mut out = Outputs::new(&common.out_dir)?;
    out.write_json("spec.json", &g.spec)?;
    for (w, packets) in g.workers.iter().enumerate() {
        out.write(&format!("worker_{w}.csv"), |b| write_trace_csv(packets, b))?;
    }
    for (w, packets) in g.returns.iter().enumerate().filter(|(_, p)| !p.is_empty()) {
        out.write(&format!("return_{w}.csv"), |b| write_trace_csv(packets, b))?;
    }
    out.write("events.csv", |b| g.write_events_csv(b))?;
    let summary = GenerateSummary {
        bin_width_ns: bin,
        end_s: format_seconds(g.end_ns.into()),
        events: g.events.len(),
        workers: arrivals
            .iter()
            .enumerate()
            .map(|(w, a)| WorkerSummary {
                worker: w,
                packets: g.workers[w].len(),
                bytes: a.total_bytes(),
                max_bin_bytes: a.max_bin_bytes(),
            })
            .collect(),
    };
    out.write_json("summary.json", &summary)?;
    let dir = out.dir().display().to_string();
    run.finish(out)?;
    Ok(format!(
        "generated {} workers, {} bursts over {} s; outputs in {dir}",
        g.workers.len(),
        g.events.len(),
        summary.end_s
    ))
}

fn potential_cmd(args: &[String], traces: &[PathBuf], bin: u64, lags: &str, common: &Common) -> Outcome<String> {
    let mut run = Run::new("potential", args, common.seed);
    let mut flows: Vec<ArrivalFunction> = Vec::with_capacity(traces.len());
    for t in traces {
        run.input(t)?;
        flows.push(ingest(read_trace_csv(t)?, bin)?);
    }
    let n = flows.iter().map(|f| f.grid().bin_count()).max().expect("at least 2 traces");
    let lags = parse_lags(lags, TimeGrid::new(bin, n)?)?;
    let p = burstiness_potential(&flows, &lags)?;
    let mut out = Outputs::new(&common.out_dir)?;
    let (mut sum, mut agg, mut pot) = (Vec::new(), Vec::new(), Vec::new());
    p.write_csvs(&mut sum, &mut agg, &mut pot)?;
    for (name, bytes) in [("sum_envelope.csv", sum), ("agg_envelope.csv", agg), ("potential.csv", pot)] {
        out.write(name, |b| {
            *b = bytes;
            Ok(())
        })?;
    }
    let peak = p.potential.iter().max().copied().unwrap_or(0);
    let dir = out.dir().display().to_string();
    run.finish(out)?;
    Ok(format!(
        "potential of {} flows over {} lags, peak {peak} bytes; outputs in {dir}",
        flows.len(),
        lags.len()
    ))
}

fn simulate_cmd(
    args: &[String],
    config: Option<&Path>,
    workers: Option<usize>,
    duration: Option<u64>,
    counterfactual: bool,
    common: &Common,
) -> Outcome<String> {
    let mut run = Run::new("simulate", args, None);
    let mut cfg = match config {
        Some(p) => {
            run.input(p)?;
            SimConfig::from_json(&read_text(p)?)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = workers {
        cfg.n_workers = n;
        if cfg.switch_ports < n + 1 {
            info!("raising switch_ports to {} for {n} workers", n + 1);
            cfg.switch_ports = n + 1;
        }
    }
    if let Some(d) = duration {
        cfg.sim_duration_ns = d;
    }
    run.seed = Some(cfg.seed);
    if let Some(m) = &cfg.workload.manifest_path {
        run.input(m)?;
    }
    let result = if counterfactual {
        run_counterfactual_fast_reaction(&cfg)?
    } else {
        run_fanin(&cfg)?
    };
    let summary = result.summary();
    let mut out = Outputs::new(&common.out_dir)?;
    out.write_json("config.json", &cfg)?;
    out.write("series.csv", |b| result.write_series_csv(b))?;
    out.write("workers.csv", |b| result.write_worker_csv(b))?;
    out.write_json("summary.json", &summary)?;
    let dir = out.dir().display().to_string();
    run.finish(out)?;
    let mut report = format!(
        "simulated {} workers for {} s: peak backlog {} bytes, {} drops",
        cfg.n_workers,
        format_seconds(cfg.sim_duration_ns.into()),
        summary.peak_backlog_bytes,
        summary.counts.packets_dropped
    );
    if let (Some(t), Some(b)) = (summary.first_reduction_s, summary.backlog_at_first_reduction_bytes) {
        let _ = write!(report, "; first reduction at {:.1} us with {b} bytes queued", t * 1e6);
    }
    let _ = write!(report, "; outputs in {dir}");
    Ok(report)
}

#[derive(Serialize)]
struct Mismatch {
    worker: usize,
    index: usize,
    expected: i64,
    actual: i64,
}

#[derive(Serialize)]
struct RingReport {
    n: usize,
    len: usize,
    seed: u64,
    transfers: usize,
    pass: bool,
    first_mismatch: Option<Mismatch>,
}

fn ring_verify(args: &[String], n: usize, len: usize, drop: Option<&str>, common: &Common) -> Outcome<String> {
    if n == 0 {
        return usage("--n must be at least 1");
    }
    let fault = match drop {
        None => Fault::default(),
        Some(text) => {
            let parsed = text
                .split_once(',')
                .and_then(|(w, s)| Some((w.trim().parse().ok()?, s.trim().parse().ok()?)));
            match parsed {
                Some(d) => Fault { drop: Some(d) },
                None => return usage(format!("--drop-transfer expects `worker,step`, got `{text}`")),
            }
        }
    };
    let seed = common.seed.unwrap_or(0);
    let run = Run::new("ring-verify", args, Some(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..len).map(|_| rng.gen_range(-1_000_000..=1_000_000)).collect())
        .collect();
    let expected: Vec<i64> = (0..len).map(|i| vectors.iter().map(|v| v[i]).sum()).collect();
    let output = ring_allreduce_with_fault(&vectors, &even_partition(len, n), fault)?;
    let first_mismatch = output.vectors.iter().enumerate().find_map(|(w, v)| {
        v.iter()
            .zip(&expected)
            .position(|(a, e)| a != e)
            .map(|i| Mismatch {
                worker: w,
                index: i,
                expected: expected[i],
                actual: v[i],
            })
    });
    let report = RingReport {
        n,
        len,
        seed,
        transfers: output.transfers.len(),
        pass: first_mismatch.is_none(),
        first_mismatch,
    };
    let mut out = Outputs::new(&common.out_dir)?;
    out.write_json("report.json", &report)?;
    run.finish(out)?;
    match &report.first_mismatch {
        None => Ok(format!(
            "ring-verify n={n} len={len} seed={seed}: pass ({} transfers)",
            report.transfers
        )),
        Some(m) => Err(Error::Invariant(format!(
            "ring-verify n={n} len={len} seed={seed}: worker {} differs at index {}: expected {}, got {}",
            m.worker, m.index, m.expected, m.actual
        ))
        .into()),
    }
}

fn replay(manifest_path: &Path, out_dir: &Path) -> Outcome<String> {
    let recorded = RunManifest::load(manifest_path)?;
    for input in &recorded.inputs {
        let now = digest_file(Path::new(&input.path))?;
        if now.sha256 != input.sha256 {
            return Err(Error::InvalidArgument(format!("input {} changed since the recorded run", input.path)).into());
        }
    }
    let mut args: Vec<String> = recorded.args.clone();
    args.push("--out-dir".into());
    args.push(out_dir.display().to_string());
    let cli = Cli::try_parse_from(std::iter::once(OsString::from("mlburst")).chain(args.iter().map(OsString::from)))
        .map_err(|e| Failure::Usage(format!("recorded arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Replay { .. }) {
        return usage("a replay cannot replay another replay");
    }
    execute(cli.command, &args)?;
    let fresh = RunManifest::load(out_dir.join(MANIFEST_FILE))?;
    if fresh.outputs != recorded.outputs {
        let differing: Vec<&str> = recorded
            .outputs
            .iter()
            .filter(|o| !fresh.outputs.contains(o))
            .map(|o| o.path.as_str())
            .collect();
        return Err(Error::Invariant(format!("replay outputs differ: {}", differing.join(", "))).into());
    }
    Ok(format!(
        "replayed `{}`: {} outputs identical",
        recorded.command,
        recorded.outputs.len()
    ))
}
