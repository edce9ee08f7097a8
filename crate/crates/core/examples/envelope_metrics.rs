//! Burstiness metrics of a synthetic on/off trace: envelope, peak-to-mean
//! ratio, maximum backlog against utilization and the interval backlog.

use mlburst::metrics::{
    bmax_sweep, burstiness_curve, interval_bmax, peak_to_mean_of, rate_for_utilization, LagSet,
};
use mlburst::trace::{ingest, PacketRecord};

fn main() -> mlburst::Result<()> {
    // 2 ms bursts at 40 Gbit/s every 100 ms, 1500-byte packets
    let gap_ns = 300;
    let packets: Vec<PacketRecord> = (0..20u64)
        .flat_map(|burst| {
            let start = burst * 100_000_000;
            (0..2_000_000 / gap_ns).map(move |i| PacketRecord::new(start + i * gap_ns, 1_500))
        })
        .collect();
    let a = ingest(packets, 1_000)?;
    println!(
        "{} bytes over {:.3} s, mean {:.2} Gbit/s",
        a.total_bytes(),
        a.duration_ns() as f64 * 1e-9,
        a.mean_rate_bps() * 1e-9
    );

    let lags = LagSet::default_for(*a.grid());
    let e = burstiness_curve(&a, &lags)?;
    let ptm = peak_to_mean_of(&a, &e)?;
    for tau_us in [1, 10, 100, 1_000, 10_000, 100_000] {
        if let (Some(bytes), Some(p)) = (e.at_lag(tau_us), ptm.at_lag(tau_us)) {
            println!("tau {tau_us:>6} us: E = {bytes:>10} B, PtM = {:>7.2}", p.ratio());
        }
    }

    let sweep = bmax_sweep(&a, &[0.05, 0.1, 0.25, 0.5, 0.9])?;
    for p in &sweep.points {
        println!(
            "U = {:>4.2}: drain {:>6.2} Gbit/s, Bmax = {:>10.0} B",
            1.0 / p.inv_utilization(),
            p.rate.bits_per_sec_f64() * 1e-9,
            p.bmax.bytes()
        );
    }

    let ib = interval_bmax(&e, rate_for_utilization(&a, 100_000)?);
    if let Some((k, b)) = ib.argmax() {
        println!("at U = 0.1 the backlog peaks for bursts of {k} us: {:.0} B", b.bytes());
    }
    Ok(())
}
