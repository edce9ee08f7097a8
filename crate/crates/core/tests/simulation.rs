use mlburst::simswitch::{
    read_series_csv, read_worker_csv, run_counterfactual_fast_reaction, run_fanin, BurstSchedule, SimConfig,
    SimResult,
};
use mlburst::workload::UniformRange;
use proptest::prelude::*;

fn at_offered_rate(gbps: f64, seed: u64) -> SimResult {
    let mut cfg = SimConfig {
        seed,
        sim_duration_ns: 1_000_000,
        ..SimConfig::default()
    };
    cfg.workload.offered_rate_bps = UniformRange::new(gbps * 1e9, gbps * 1e9);
    run_fanin(&cfg).unwrap()
}

fn reaction(gbps: f64, seed: u64) -> (u32, u64) {
    let r = at_offered_rate(gbps, seed);
    (r.cnps_before_effective_cut.unwrap(), r.reaction_delay_ps().unwrap())
}

#[test]
fn reaction_delay_grows_as_offered_rate_falls() {
    let points: Vec<(u32, u64)> = [35.0, 30.0, 25.0, 20.0].iter().map(|&g| reaction(g, 1)).collect();
    for w in points.windows(2) {
        let ((r_hi, d_hi), (r_lo, d_lo)) = (w[0], w[1]);
        assert!(r_lo >= r_hi, "{points:?}");
        if r_lo > r_hi {
            assert!(d_lo > d_hi, "{points:?}");
        }
    }
    assert!(points[3].0 > points[0].0 && points[3].1 > points[0].1, "{points:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Notifications are paced, so the delay moves in whole pacing
    // intervals; within one interval it jitters with the first mark time.
    #[test]
    fn slower_senders_need_at_least_as_many_notifications(
        hi in 15.0f64..45.0, drop in 0.5f64..20.0, seed in 1u64..6,
    ) {
        let lo = (hi - drop).max(12.0);
        prop_assume!(lo < hi);
        let (r_hi, d_hi) = reaction(hi, seed);
        let (r_lo, d_lo) = reaction(lo, seed);
        prop_assert!(r_lo >= r_hi);
        if r_lo > r_hi {
            prop_assert!(d_lo > d_hi);
        }
    }
}

#[test]
fn sampled_state_stays_in_range() {
    let cfg = SimConfig::default();
    let r = run_fanin(&cfg).unwrap();
    assert_eq!(r.counts.packets_dropped, 0);
    assert!(r.peak_backlog_bytes <= cfg.buffer_bytes);
    for s in &r.samples {
        assert!(s.backlog_bytes <= cfg.buffer_bytes);
    }
    for row in &r.workers {
        for w in row {
            assert!(w.rc_bps > 0.0 && w.rc_bps <= cfg.line_rate_bps);
            assert!(w.send_rate_bps <= w.rc_bps);
            assert!((0.0..=1.0).contains(&w.alpha));
        }
    }
    assert!(r.counts.packets_delivered + r.counts.packets_dropped <= r.counts.packets_sent);
}

#[test]
fn fast_reaction_cuts_the_peak_fivefold() {
    let cfg = SimConfig::default();
    let slow = run_fanin(&cfg).unwrap();
    let fast = run_counterfactual_fast_reaction(&cfg).unwrap();
    assert!(5 * fast.peak_backlog_bytes <= slow.peak_backlog_bytes);
}

#[test]
fn underloaded_link_holds_at_most_one_packet() {
    let mut cfg = SimConfig {
        n_workers: 1,
        ..SimConfig::default()
    };
    cfg.workload.offered_rate_bps = UniformRange::new(30e9, 30e9);
    let r = run_fanin(&cfg).unwrap();
    assert!(r.peak_backlog_bytes <= cfg.mtu);
    assert_eq!(r.counts.marks, 0);
}

#[test]
fn reruns_are_identical_and_csvs_round_trip() {
    let mut cfg = SimConfig {
        n_workers: 8,
        sim_duration_ns: 2_000_000,
        ..SimConfig::default()
    };
    cfg.workload.bursts = BurstSchedule::FullRound;
    cfg.workload.layers = Some(vec![400_000, 50_000, 2_000_000]);
    cfg.workload.layer_gap_s = UniformRange::new(0.0002, 0.0003);
    let a = run_fanin(&cfg).unwrap();
    assert_eq!(a, run_fanin(&cfg).unwrap());

    let mut buf = Vec::new();
    a.write_series_csv(&mut buf).unwrap();
    assert_eq!(read_series_csv(&buf[..]).unwrap(), a.samples);
    let mut buf = Vec::new();
    a.write_worker_csv(&mut buf).unwrap();
    let rows = read_worker_csv(&buf[..]).unwrap();
    assert_eq!(rows.len(), a.samples.len() * cfg.n_workers);
    for ((s, states), row) in a.samples.iter().zip(&a.workers).zip(rows.chunks(cfg.n_workers)) {
        for (w, (t, idx, state)) in row.iter().enumerate() {
            assert_eq!((*t, *idx, *state), (s.time_ps, w, states[w]));
        }
    }
}
