//! Copies a spike into the quiet window right after it. The mean rate barely
//! moves; the worst-case backlog behind a fixed drain doubles.

use mlburst::metrics::{burstiness_curve, max_backlog, LagSet};
use mlburst::netcalc::Rate;
use mlburst::trace::{ingest, splice_packets, Interval, PacketRecord};

fn main() -> mlburst::Result<()> {
    // steady 1 Gbit/s background with one 5 ms spike at 50 Gbit/s
    let mut packets: Vec<PacketRecord> = (0..100_000u64).map(|i| PacketRecord::new(i * 12_000, 1_500)).collect();
    packets.extend((0..20_000u64).map(|i| PacketRecord::new(400_000_000 + i * 240, 1_500)));
    packets.sort();

    let spike = Interval::new(400_000_000, 405_000_000)?;
    let after = Interval::new(405_000_000, 410_000_000)?;
    let spliced = splice_packets(&packets, after, spike)?;
    let drain = Rate::bits_per_sec(10_000_000_000)?;

    for (name, trace) in [("original", &packets), ("spliced", &spliced)] {
        let a = ingest(trace.iter().copied(), 1_000)?;
        let e = burstiness_curve(&a, &LagSet::from_durations(*a.grid(), &[5_000_000, 10_000_000])?)?;
        println!(
            "{name:>8}: mean {:.3} Gbit/s, E(5 ms) = {} B, E(10 ms) = {} B, Bmax at 10 Gbit/s = {:.0} B",
            a.mean_rate_bps() * 1e-9,
            e.values()[0],
            e.values()[1],
            max_backlog(&a, drain).bytes()
        );
    }
    Ok(())
}
