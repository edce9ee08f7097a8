//! Server-based Allreduce with the bundled model: one worker transmits at a
//! time, so the aggregate is much less bursty than its members.

use mlburst::metrics::{burstiness_curve, max_backlog, peak_to_mean_of, rate_for_utilization, LagSet};
use mlburst::trace::aggregate;
use mlburst::workload::{generate, WorkloadSpec};

fn main() -> mlburst::Result<()> {
    let spec = WorkloadSpec {
        rounds: 3,
        ..WorkloadSpec::default()
    };
    let g = generate(&spec)?;
    println!(
        "{} layers, {} gradient bytes per worker per round, {} bursts, {:.2} s",
        g.manifest.len(),
        g.manifest.gradient_bytes(),
        g.events.len(),
        g.end_ns as f64 * 1e-9
    );

    let mut flows = g.arrivals(10_000)?;
    let agg = aggregate(&flows)?;
    flows.truncate(1);
    let grid = *agg.grid();
    let lags = LagSet::new(grid, vec![0, 100, 500, 10_000])?;
    for (name, a) in [("worker 0", &flows[0]), ("aggregate", &agg)] {
        let e = burstiness_curve(a, &lags)?;
        let ptm = peak_to_mean_of(a, &e)?;
        let ratios: Vec<String> = ptm.points().iter().map(|p| format!("{:.1}", p.ratio())).collect();
        let bmax = max_backlog(a, rate_for_utilization(a, 50_000)?);
        println!(
            "{name:>9}: mean {:.3} Gbit/s, PtM at 1/5/100 ms = {}, Bmax at U = 0.05: {:.1} MB",
            a.mean_rate_bps() * 1e-9,
            ratios.join(" / "),
            bmax.bytes() * 1e-6
        );
    }
    Ok(())
}
