//! Packet traces and their binned cumulative arrival functions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcalc::{Curve, Rate, TimeGrid};
use crate::table::read_rows;
use crate::units::format_seconds;

/// One captured packet: arrival time since capture start and size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketRecord {
    pub timestamp_ns: u64,
    pub size: u64,
}

impl PacketRecord {
    pub fn new(timestamp_ns: u64, size: u64) -> Self {
        Self { timestamp_ns, size }
    }
}

/// Half-open time interval `[start, end)` in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start_ns: u64,
    pub end_ns: u64,
}

impl Interval {
    pub fn new(start_ns: u64, end_ns: u64) -> Result<Self> {
        if end_ns <= start_ns {
            return Err(Error::InvalidInterval(format!(
                "[{}, {}) is empty",
                format_seconds(start_ns.into()),
                format_seconds(end_ns.into())
            )));
        }
        Ok(Self { start_ns, end_ns })
    }

    pub fn len_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }

    pub fn contains(&self, t: u64) -> bool {
        (self.start_ns..self.end_ns).contains(&t)
    }

    /// Bins covered on a grid of width `w`: starting at the bin holding
    /// `start`, spanning `ceil(len / w)` bins.
    fn bins(&self, w: u64) -> (usize, usize) {
        let first = (self.start_ns / w) as usize;
        (first, first + self.len_ns().div_ceil(w) as usize)
    }
}

/// Cumulative bytes of a flow on a uniform grid.
///
/// Stored sparsely (only bins that received bytes) because captures span
/// minutes at microsecond resolution while most bins are empty. Grid point
/// `k` of the cumulative function counts bytes in bins `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalFunction {
    grid: TimeGrid,
    bins: Vec<usize>,
    bytes: Vec<u64>,
    prefix: Vec<u64>,
}

impl ArrivalFunction {
    /// Builds from `(bin, bytes)` pairs; bins must be strictly increasing and
    /// inside the grid. Zero-byte entries are dropped.
    pub fn from_sparse(grid: TimeGrid, entries: impl IntoIterator<Item = (usize, u64)>) -> Result<Self> {
        let mut bins = Vec::new();
        let mut bytes = Vec::new();
        for (bin, b) in entries {
            if bin >= grid.bin_count() {
                return Err(Error::InvalidArgument(format!(
                    "bin {bin} outside grid of {} bins",
                    grid.bin_count()
                )));
            }
            if bins.last().is_some_and(|&last| last >= bin) {
                return Err(Error::InvalidArgument("bins must be strictly increasing".into()));
            }
            if b > 0 {
                bins.push(bin);
                bytes.push(b);
            }
        }
        Ok(Self::from_parts(grid, bins, bytes))
    }

    pub fn from_per_bin(grid: TimeGrid, per_bin: &[u64]) -> Result<Self> {
        if per_bin.len() != grid.bin_count() {
            return Err(Error::InvalidArgument(format!(
                "{} bin values for {} bins",
                per_bin.len(),
                grid.bin_count()
            )));
        }
        Self::from_sparse(grid, per_bin.iter().copied().enumerate())
    }

    pub fn from_curve(curve: &Curve) -> Result<Self> {
        if !curve.starts_at_zero() {
            return Err(Error::InvalidArgument("arrival function must start at 0".into()));
        }
        Self::from_per_bin(*curve.grid(), &curve.increments())
    }

    fn from_parts(grid: TimeGrid, bins: Vec<usize>, bytes: Vec<u64>) -> Self {
        let mut prefix = Vec::with_capacity(bytes.len() + 1);
        prefix.push(0);
        let mut acc = 0u64;
        for &b in &bytes {
            acc += b;
            prefix.push(acc);
        }
        Self {
            grid,
            bins,
            bytes,
            prefix,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn total_bytes(&self) -> u64 {
        *self.prefix.last().expect("prefix is never empty")
    }

    pub fn duration_ns(&self) -> u128 {
        self.grid.duration_ns()
    }

    /// Mean rate `total_bytes / duration` as an exact rate.
    pub fn mean_rate(&self) -> Result<Rate> {
        if self.total_bytes() == 0 || self.grid.bin_count() == 0 {
            return Err(Error::EmptyTrace);
        }
        Rate::new(self.total_bytes() as u128, self.duration_ns())
    }

    pub fn mean_rate_bps(&self) -> f64 {
        if self.grid.bin_count() == 0 {
            return 0.0;
        }
        self.total_bytes() as f64 * 8e9 / self.duration_ns() as f64
    }

    /// Nonempty bins in increasing order.
    pub fn nonempty(&self) -> impl ExactSizeIterator<Item = (usize, u64)> + '_ {
        self.bins.iter().copied().zip(self.bytes.iter().copied())
    }

    pub(crate) fn bin_indices(&self) -> &[usize] {
        &self.bins
    }

    pub(crate) fn prefix(&self) -> &[u64] {
        &self.prefix
    }

    /// Cumulative bytes at grid point `k` (bytes in bins `0..k`).
    pub fn cumulative_at(&self, k: usize) -> u64 {
        self.prefix[self.bins.partition_point(|&b| b < k)]
    }

    /// Bytes in bins `start..end`.
    pub fn window_bytes(&self, start: usize, end: usize) -> u64 {
        self.cumulative_at(end) - self.cumulative_at(start)
    }

    pub fn max_bin_bytes(&self) -> u64 {
        self.bytes.iter().copied().max().unwrap_or(0)
    }

    /// Dense per-bin byte counts.
    pub fn per_bin(&self) -> Vec<u64> {
        let mut out = vec![0; self.grid.bin_count()];
        for (bin, b) in self.nonempty() {
            out[bin] = b;
        }
        out
    }

    /// Dense cumulative curve `A(0), ..., A(n)`.
    pub fn cumulative(&self) -> Curve {
        Curve::from_increments(self.grid, &self.per_bin()).expect("per-bin length matches grid")
    }

    /// Same arrivals on a longer horizon (trailing empty bins).
    pub fn extend_to(&self, bin_count: usize) -> Result<Self> {
        if bin_count < self.grid.bin_count() {
            return Err(Error::InvalidArgument(format!(
                "cannot shrink {} bins to {bin_count}",
                self.grid.bin_count()
            )));
        }
        Ok(Self {
            grid: self.grid.with_bin_count(bin_count),
            ..self.clone()
        })
    }

    /// Re-bins onto a coarser grid whose width is a multiple of the current
    /// one.
    pub fn rebin(&self, bin_width_ns: u64) -> Result<Self> {
        let w = self.grid.bin_width_ns();
        if bin_width_ns == 0 || bin_width_ns % w != 0 {
            return Err(Error::InvalidArgument(format!(
                "bin width {bin_width_ns} ns is not a multiple of {w} ns"
            )));
        }
        let factor = (bin_width_ns / w) as usize;
        let grid = TimeGrid::new(bin_width_ns, self.grid.bin_count().div_ceil(factor))?;
        let mut bins: Vec<usize> = Vec::new();
        let mut bytes: Vec<u64> = Vec::new();
        for (bin, b) in self.nonempty() {
            let nb = bin / factor;
            if bins.last() == Some(&nb) {
                *bytes.last_mut().expect("parallel vectors") += b;
            } else {
                bins.push(nb);
                bytes.push(b);
            }
        }
        Ok(Self::from_parts(grid, bins, bytes))
    }

    /// Writes every bin as `bin_start_s,bytes`.
    pub fn write_binned_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start_s", "bytes"])?;
        for (k, b) in self.per_bin().into_iter().enumerate() {
            w.write_record([format_seconds(self.grid.time_ns(k)), b.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<binned csv>", e))?;
        Ok(())
    }
}

/// Reads a table written by [`ArrivalFunction::write_binned_csv`]. The bin
/// width is the spacing of the first two rows.
pub fn read_binned_csv<R: Read>(input: R) -> Result<ArrivalFunction> {
    let rows = read_rows(input, "<binned csv>", &["bin_start_s", "bytes"])?;
    let starts = rows.iter().map(|r| r.seconds(0)).collect::<Result<Vec<u64>>>()?;
    let bytes = rows.iter().map(|r| r.get(1)).collect::<Result<Vec<u64>>>()?;
    let width = match starts.as_slice() {
        [0] => return Err(Error::InvalidArgument("a single bin does not determine the bin width".into())),
        [0, next, ..] => *next,
        _ => return Err(Error::InvalidArgument("binned csv must start at 0 with two or more rows".into())),
    };
    if let Some(k) = (0..starts.len()).find(|&k| starts[k] != width * k as u64) {
        return Err(rows[k].invalid("bins are not evenly spaced"));
    }
    ArrivalFunction::from_per_bin(TimeGrid::new(width, bytes.len())?, &bytes)
}

/// Bins packets into an arrival function. Each packet lands in the bin that
/// contains its timestamp; the grid ends with the bin of the last packet.
///
/// Unsorted input is stably sorted with a warning.
pub fn ingest<I>(records: I, bin_width_ns: u64) -> Result<ArrivalFunction>
where
    I: IntoIterator<Item = PacketRecord>,
{
    ingest_with_horizon(records, bin_width_ns, 0)
}

/// Like [`ingest`], with the grid extended to at least `min_bins` bins.
pub fn ingest_with_horizon<I>(records: I, bin_width_ns: u64, min_bins: usize) -> Result<ArrivalFunction>
where
    I: IntoIterator<Item = PacketRecord>,
{
    if bin_width_ns == 0 {
        return Err(Error::InvalidArgument("bin width must be positive".into()));
    }
    let mut records: Vec<PacketRecord> = records.into_iter().collect();
    if records.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(bad) = records.iter().position(|r| r.size == 0) {
        return Err(Error::InvalidArgument(format!("packet {bad} has zero size")));
    }
    let inversions = records
        .windows(2)
        .filter(|w| w[1].timestamp_ns < w[0].timestamp_ns)
        .count();
    if inversions > 0 {
        warn!("trace has {inversions} out-of-order timestamps; sorting");
        records.sort_by_key(|r| r.timestamp_ns);
    }
    let mut bins: Vec<usize> = Vec::new();
    let mut bytes: Vec<u64> = Vec::new();
    for r in &records {
        let bin = usize::try_from(r.timestamp_ns / bin_width_ns)
            .map_err(|_| Error::InvalidArgument("timestamp too large".into()))?;
        if bins.last() == Some(&bin) {
            *bytes.last_mut().expect("parallel vectors") += r.size;
        } else {
            bins.push(bin);
            bytes.push(r.size);
        }
    }
    let bin_count = (bins.last().expect("nonempty") + 1).max(min_bins);
    let grid = TimeGrid::new(bin_width_ns, bin_count)?;
    Ok(ArrivalFunction::from_parts(grid, bins, bytes))
}

/// Replaces the bins of `remove` with a copy of the bins of `source`.
///
/// Both intervals must have the same length and lie inside the trace.
pub fn splice(a: &ArrivalFunction, remove: Interval, source: Interval) -> Result<ArrivalFunction> {
    if remove.len_ns() != source.len_ns() {
        return Err(Error::InvalidInterval(format!(
            "intervals differ in length ({} ns vs {} ns)",
            remove.len_ns(),
            source.len_ns()
        )));
    }
    let w = a.grid().bin_width_ns();
    let n = a.grid().bin_count();
    let (r0, r1) = remove.bins(w);
    let (s0, s1) = source.bins(w);
    if r1 > n || s1 > n {
        return Err(Error::InvalidInterval(format!(
            "interval extends past the end of the trace ({})",
            format_seconds(a.duration_ns())
        )));
    }
    let mut entries: Vec<(usize, u64)> = a.nonempty().filter(|&(b, _)| b < r0 || b >= r1).collect();
    entries.extend(
        a.nonempty()
            .filter(|&(b, _)| b >= s0 && b < s1)
            .map(|(b, bytes)| (b - s0 + r0, bytes)),
    );
    entries.sort_unstable_by_key(|&(b, _)| b);
    ArrivalFunction::from_sparse(*a.grid(), entries)
}

/// Packet-level splice: drops packets in `remove` and inserts copies of the
/// packets in `source`, shifted into `remove`.
pub fn splice_packets(records: &[PacketRecord], remove: Interval, source: Interval) -> Result<Vec<PacketRecord>> {
    if remove.len_ns() != source.len_ns() {
        return Err(Error::InvalidInterval(format!(
            "intervals differ in length ({} ns vs {} ns)",
            remove.len_ns(),
            source.len_ns()
        )));
    }
    let end = records.iter().map(|r| r.timestamp_ns).max().ok_or(Error::EmptyTrace)?;
    if remove.start_ns > end || source.start_ns > end {
        return Err(Error::InvalidInterval("interval starts after the end of the trace".into()));
    }
    let mut out: Vec<PacketRecord> = records.iter().copied().filter(|r| !remove.contains(r.timestamp_ns)).collect();
    out.extend(
        records
            .iter()
            .filter(|r| source.contains(r.timestamp_ns))
            .map(|r| PacketRecord::new(r.timestamp_ns - source.start_ns + remove.start_ns, r.size)),
    );
    out.sort_by_key(|r| r.timestamp_ns);
    Ok(out)
}

fn lcm(a: u64, b: u64) -> Option<u64> {
    let g = {
        let (mut x, mut y) = (a, b);
        while y != 0 {
            (x, y) = (y, x % y);
        }
        x
    };
    (a / g).checked_mul(b)
}

/// Sums flows bin by bin. Flows on different grids are re-binned to the
/// smallest width that all widths divide and padded to the longest horizon.
pub fn aggregate(flows: &[ArrivalFunction]) -> Result<ArrivalFunction> {
    let first = flows.first().ok_or_else(|| Error::InvalidArgument("no flows to aggregate".into()))?;
    let mut width = first.grid().bin_width_ns();
    for f in &flows[1..] {
        width = lcm(width, f.grid().bin_width_ns())
            .ok_or_else(|| Error::InvalidArgument("bin widths have no common multiple".into()))?;
    }
    let rebinned: Vec<ArrivalFunction> = flows
        .iter()
        .map(|f| if f.grid().bin_width_ns() == width { Ok(f.clone()) } else { f.rebin(width) })
        .collect::<Result<_>>()?;
    if flows.iter().any(|f| f.grid().bin_width_ns() != width) {
        warn!("re-binned flows to a common width of {width} ns");
    }
    let bin_count = rebinned.iter().map(|f| f.grid().bin_count()).max().expect("nonempty");
    let mut merged: Vec<(usize, u64)> = rebinned.iter().flat_map(|f| f.nonempty()).collect();
    merged.sort_unstable_by_key(|&(b, _)| b);
    let mut entries: Vec<(usize, u64)> = Vec::with_capacity(merged.len());
    for (bin, b) in merged {
        match entries.last_mut() {
            Some((last, acc)) if *last == bin => *acc += b,
            _ => entries.push((bin, b)),
        }
    }
    ArrivalFunction::from_sparse(TimeGrid::new(width, bin_count)?, entries)
}

/// Reads `timestamp_ns,bytes` rows. A header row is detected and skipped.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<PacketRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(BufReader::new(file), &path.display().to_string())
}

pub fn parse_trace_csv<R: Read>(input: R, name: &str) -> Result<Vec<PacketRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row?;
        let err = |reason: String| Error::Parse {
            path: name.to_string(),
            line,
            reason,
        };
        if row.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", row.len())));
        }
        let ts = row[0].parse::<u64>();
        if i == 0 && ts.is_err() && row[0].chars().any(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let ts = ts.map_err(|e| err(format!("bad timestamp `{}`: {e}", &row[0])))?;
        let size = row[1]
            .parse::<u64>()
            .map_err(|e| err(format!("bad size `{}`: {e}", &row[1])))?;
        if size == 0 {
            return Err(err("packet size must be positive".into()));
        }
        out.push(PacketRecord::new(ts, size));
    }
    if out.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(records: &[PacketRecord], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let io = |e| Error::io("<trace csv>", e);
    writeln!(w, "timestamp_ns,bytes").map_err(io)?;
    for r in records {
        writeln!(w, "{},{}", r.timestamp_ns, r.size).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    const US: u64 = 1_000;

    fn pkts(list: &[(u64, u64)]) -> Vec<PacketRecord> {
        list.iter().map(|&(t, s)| PacketRecord::new(t, s)).collect()
    }

    #[test]
    fn ingest_bins_packets() {
        let a = ingest(pkts(&[(0, 1500), (500, 1500), (2_000, 1500)]), US).unwrap();
        assert_eq!(a.per_bin(), vec![3000, 0, 1500]);
        assert_eq!(a.cumulative().values(), &[0, 3000, 3000, 4500]);
        assert_eq!(a.total_bytes(), 4500);
        assert_eq!(a.duration_ns(), 3_000);
    }

    #[test]
    fn ingest_single_packet() {
        let a = ingest(pkts(&[(0, 9000)]), US).unwrap();
        assert_eq!(a.total_bytes(), 9000);
        assert_eq!(a.grid().bin_count(), 1);
        assert_eq!(a.mean_rate().unwrap(), Rate::new(9000, 1000).unwrap());
    }

    #[test]
    fn ingest_errors() {
        assert!(matches!(ingest(Vec::new(), US), Err(Error::EmptyTrace)));
        assert!(ingest(pkts(&[(0, 0)]), US).is_err());
        assert!(ingest(pkts(&[(0, 10)]), 0).is_err());
    }

    #[test]
    fn ingest_sorts_out_of_order_input() {
        let a = ingest(pkts(&[(2_500, 7), (100, 3), (1_200, 5)]), US).unwrap();
        assert_eq!(a.per_bin(), vec![3, 5, 7]);
    }

    #[test]
    fn cumulative_queries() {
        let a = ingest(pkts(&[(0, 4), (5_000, 6), (9_999, 1)]), US).unwrap();
        assert_eq!(a.grid().bin_count(), 10);
        assert_eq!(a.cumulative_at(0), 0);
        assert_eq!(a.cumulative_at(1), 4);
        assert_eq!(a.cumulative_at(5), 4);
        assert_eq!(a.cumulative_at(6), 10);
        assert_eq!(a.cumulative_at(10), 11);
        assert_eq!(a.window_bytes(1, 9), 6);
    }

    #[test]
    fn splice_identity_when_intervals_match() {
        let a = ingest(pkts(&[(0, 4), (3_000, 6), (7_000, 1)]), US).unwrap();
        let iv = Interval::new(2_000, 5_000).unwrap();
        assert_eq!(splice(&a, iv, iv).unwrap(), a);
    }

    #[test]
    fn splice_rejects_bad_intervals() {
        let a = ingest(pkts(&[(0, 4), (9_000, 6)]), US).unwrap();
        let r = Interval::new(0, 2_000).unwrap();
        let s = Interval::new(5_000, 8_000).unwrap();
        assert!(matches!(splice(&a, r, s), Err(Error::InvalidInterval(_))));
        let late = Interval::new(9_000, 11_000).unwrap();
        assert!(splice(&a, r, late).is_err());
        assert!(Interval::new(5, 5).is_err());
    }

    #[test]
    fn splice_removes_spike() {
        // 1 KB per ms of background over 10 s, plus a 10 MB spike at 5 s.
        let ms = 1_000_000;
        let mut recs: Vec<PacketRecord> = (0..10_000).map(|k| PacketRecord::new(k * ms, 1_000)).collect();
        recs.push(PacketRecord::new(5_000 * ms + 10, 10_000_000));
        recs.sort();
        let a = ingest(recs, ms).unwrap();
        let remove = Interval::new(4_900 * ms, 5_100 * ms).unwrap();
        let source = Interval::new(1_000 * ms, 1_200 * ms).unwrap();
        let b = splice(&a, remove, source).unwrap();
        assert_eq!(a.total_bytes() - b.total_bytes(), 10_000_000);
        assert_eq!(b.max_bin_bytes(), 1_000);
        // bytes outside the removed interval are untouched
        assert_eq!(a.window_bytes(0, 4_900), b.window_bytes(0, 4_900));
        assert_eq!(a.window_bytes(5_100, 10_000), b.window_bytes(5_100, 10_000));
    }

    #[test]
    fn packet_splice_matches_bin_splice_on_aligned_intervals() {
        let recs = pkts(&[(100, 5), (1_100, 7), (2_500, 9), (4_000, 2), (4_999, 3), (6_000, 11)]);
        let remove = Interval::new(1_000, 3_000).unwrap();
        let source = Interval::new(4_000, 6_000).unwrap();
        let spliced = splice_packets(&recs, remove, source).unwrap();
        let via_packets = ingest(spliced, US).unwrap();
        let via_bins = splice(&ingest(recs, US).unwrap(), remove, source).unwrap();
        assert_eq!(via_packets, via_bins);
    }

    #[test]
    fn aggregate_sums_and_rebins() {
        let a = ingest(pkts(&[(0, 1), (2_500, 2)]), US).unwrap();
        let b = ingest(pkts(&[(1_000, 10), (5_000, 20)]), 2 * US).unwrap();
        let agg = aggregate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(agg.grid().bin_width_ns(), 2 * US);
        assert_eq!(agg.per_bin(), vec![11, 2, 20]);
        assert_eq!(agg.total_bytes(), a.total_bytes() + b.total_bytes());
        assert!(aggregate(&[]).is_err());
        let doubled = aggregate(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(doubled.per_bin(), vec![2, 0, 4]);
    }

    #[test]
    fn trace_csv_with_and_without_header() {
        let with = "timestamp_ns,bytes\n0,100\n1500,200\n";
        let without = "0,100\n1500,200\n";
        let a = parse_trace_csv(with.as_bytes(), "a").unwrap();
        let b = parse_trace_csv(without.as_bytes(), "b").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, pkts(&[(0, 100), (1500, 200)]));
        let mut buf = Vec::new();
        write_trace_csv(&a, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), with);
    }

    #[test]
    fn trace_csv_reports_line_numbers() {
        let bad = "timestamp_ns,bytes\n0,100\n12,x\n";
        match parse_trace_csv(bad.as_bytes(), "t.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_trace_csv("timestamp_ns,bytes\n".as_bytes(), "e"), Err(Error::EmptyTrace)));
    }

    #[test]
    fn binned_csv() {
        let a = ingest(pkts(&[(0, 1), (2_500, 2)]), US).unwrap();
        let mut buf = Vec::new();
        a.write_binned_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bin_start_s,bytes\n0.000000000,1\n0.000001000,0\n0.000002000,2\n"
        );
    }
}
