//! Thirty workers burst into one egress port. Congestion control reacts only
//! once its cuts fall below the rate the application offers, so the queue
//! builds for hundreds of microseconds; an idealized fast reaction does not.

use mlburst::simswitch::{run_counterfactual_fast_reaction, run_fanin, SimConfig};

fn main() -> mlburst::Result<()> {
    let cfg = SimConfig::default();
    let base = run_fanin(&cfg)?;
    let fast = run_counterfactual_fast_reaction(&cfg)?;

    println!("time_us  agg_gbps  backlog_mb");
    for s in base.samples.iter().step_by(5).take(40) {
        println!(
            "{:>7.0} {:>9.1} {:>11.2}",
            s.time_ps as f64 * 1e-6,
            s.agg_rate_bps * 1e-9,
            s.backlog_bytes as f64 * 1e-6
        );
    }
    let summary = base.summary();
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if let Some(r) = base.first_reduction() {
        println!(
            "first reduction after {:.0} us with {:.1} MB queued",
            r.time_ps as f64 * 1e-6,
            r.backlog_bytes as f64 * 1e-6
        );
    }
    println!(
        "peak backlog {:.1} MB, with a 10 us reaction {:.2} MB",
        base.peak_backlog_bytes as f64 * 1e-6,
        fast.peak_backlog_bytes as f64 * 1e-6
    );
    Ok(())
}
