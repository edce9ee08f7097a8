//! Property tests against brute-force oracles written independently of the
//! library's algorithms.

use std::collections::BTreeMap;

use mlburst::metrics::{
    backlog_series, burstiness_curve, burstiness_potential, envelope_bmax, max_backlog, peak_to_mean_of, Backlog,
    LagSet,
};
use mlburst::netcalc::{minplus_convolve, minplus_deconvolve, rate_curve, Curve, Rate, TimeGrid};
use mlburst::trace::{
    aggregate, ingest, parse_trace_csv, read_binned_csv, splice, splice_packets, write_trace_csv, ArrivalFunction,
    Interval, PacketRecord,
};
use mlburst::workload::{even_partition, ring_allreduce_partitioned};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

fn bins(max: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![3 => Just(0u64), 2 => 1u64..5_000], 1..=max).prop_map(|mut v| {
        if v.iter().all(|&b| b == 0) {
            v[0] = 1;
        }
        v
    })
}

fn arrival(per_bin: &[u64], width: u64) -> ArrivalFunction {
    ArrivalFunction::from_per_bin(TimeGrid::new(width, per_bin.len()).unwrap(), per_bin).unwrap()
}

fn curve(per_bin: &[u64]) -> Curve {
    Curve::from_increments(TimeGrid::new(1_000, per_bin.len()).unwrap(), per_bin).unwrap()
}

/// Equal-length curves for the algebraic properties.
fn curves(count: usize, max: usize) -> impl Strategy<Value = Vec<Vec<u64>>> {
    (1..=max).prop_flat_map(move |n| prop::collection::vec(prop::collection::vec(0u64..1_000, n), count))
}

fn ratio(b: Backlog) -> BigRational {
    BigRational::new(BigInt::from(b.scaled()), BigInt::from(b.scale()))
}

fn brute_envelope(per_bin: &[u64]) -> (Vec<u64>, Vec<usize>) {
    let n = per_bin.len();
    let mut values = vec![0u64; n + 1];
    let mut starts = vec![0usize; n + 1];
    for k in 1..=n {
        let mut best = None;
        for t in 0..=n - k {
            let sum: u64 = per_bin[t..t + k].iter().sum();
            if best.is_none_or(|b| sum > b) {
                best = Some(sum);
                starts[k] = t;
            }
        }
        values[k] = best.unwrap();
    }
    (values, starts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_commutes_and_associates(cs in curves(3, 64)) {
        let (f, g, h) = (curve(&cs[0]), curve(&cs[1]), curve(&cs[2]));
        prop_assert_eq!(minplus_convolve(&f, &g).unwrap(), minplus_convolve(&g, &f).unwrap());
        let left = minplus_convolve(&minplus_convolve(&f, &g).unwrap(), &h).unwrap();
        let right = minplus_convolve(&f, &minplus_convolve(&g, &h).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn convolution_and_deconvolution_match_pairwise_oracle(cs in curves(2, 80)) {
        let (f, g) = (curve(&cs[0]), curve(&cs[1]));
        let (fv, gv) = (f.values(), g.values());
        let n = fv.len();
        let mut conv = vec![u64::MAX; n];
        let mut deconv = vec![0i64; n];
        for a in 0..n {
            for b in 0..n {
                if a + b < n {
                    conv[a + b] = conv[a + b].min(fv[a] + gv[b]);
                }
                if b <= a {
                    deconv[a - b] = deconv[a - b].max(fv[a] as i64 - gv[b] as i64);
                }
            }
        }
        prop_assert_eq!(minplus_convolve(&f, &g).unwrap().values().to_vec(), conv);
        let want: Vec<u64> = deconv.iter().map(|&v| v as u64).collect();
        prop_assert_eq!(minplus_deconvolve(&f, &g).unwrap().values().to_vec(), want);
    }

    #[test]
    fn departures_follow_the_queue(per_bin in bins(300), drain in 1u64..4_000) {
        let a = arrival(&per_bin, 1_000);
        let rate = Rate::new(drain.into(), 1_000).unwrap();
        let arr = a.cumulative();
        let d = minplus_convolve(&arr, &rate_curve(rate, *a.grid())).unwrap();
        // queue recursion with an integral drain per bin
        let mut q = 0u64;
        let mut queue = vec![0u64];
        for &b in &per_bin {
            q = (q + b).saturating_sub(drain);
            queue.push(q);
        }
        for k in 0..d.values().len() {
            prop_assert!(d.at(k) <= arr.at(k));
            prop_assert_eq!(arr.at(k) - d.at(k), queue[k]);
        }
        prop_assert!(d.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn self_deconvolution_is_the_subadditive_envelope(per_bin in bins(200)) {
        let a = arrival(&per_bin, 1_000);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let d = minplus_deconvolve(&a.cumulative(), &a.cumulative()).unwrap();
        prop_assert_eq!(&d, &e.to_curve().unwrap());
        prop_assert!(d.is_subadditive());
        // the envelope is an arrival curve of the trace
        prop_assert_eq!(minplus_convolve(&a.cumulative(), &d).unwrap(), a.cumulative());
    }

    #[test]
    fn ingest_conserves_bytes(
        packets in prop::collection::vec((0u64..1_000_000, 1u64..9_000), 1..400),
        width in prop::sample::select(vec![1u64, 10, 1_000, 7_919, 100_000]),
    ) {
        let records: Vec<PacketRecord> = packets.iter().map(|&(t, s)| PacketRecord::new(t, s)).collect();
        let a = ingest(records.clone(), width).unwrap();
        prop_assert_eq!(a.total_bytes(), packets.iter().map(|p| p.1).sum::<u64>());
        let mut buckets: BTreeMap<u64, u64> = BTreeMap::new();
        for &(t, s) in &packets {
            *buckets.entry(t / width).or_default() += s;
        }
        let sparse: Vec<(usize, u64)> = buckets.into_iter().map(|(b, s)| (b as usize, s)).collect();
        prop_assert_eq!(a.nonempty().collect::<Vec<_>>(), sparse);
        prop_assert_eq!(a.grid().bin_count() as u64, packets.iter().map(|p| p.0).max().unwrap() / width + 1);
    }

    #[test]
    fn aggregate_is_order_independent(
        flows in prop::collection::vec((bins(120), prop::sample::select(vec![1_000u64, 2_000, 3_000])), 1..5),
        seed in any::<u64>(),
    ) {
        let fs: Vec<ArrivalFunction> = flows.iter().map(|(b, w)| arrival(b, *w)).collect();
        let total: u64 = fs.iter().map(|f| f.total_bytes()).sum();
        let agg = aggregate(&fs).unwrap();
        prop_assert_eq!(agg.total_bytes(), total);
        let mut shuffled = fs.clone();
        let k = (seed % shuffled.len() as u64) as usize;
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(aggregate(&shuffled).unwrap(), agg);
    }

    #[test]
    fn splice_replaces_only_the_removed_window(
        per_bin in bins(300),
        r in 0usize..300, s in 0usize..300, len in 1usize..60,
    ) {
        let n = per_bin.len();
        prop_assume!(r + len <= n && s + len <= n);
        let a = arrival(&per_bin, 1_000);
        let remove = Interval::new(r as u64 * 1_000, (r + len) as u64 * 1_000).unwrap();
        let source = Interval::new(s as u64 * 1_000, (s + len) as u64 * 1_000).unwrap();
        let out = splice(&a, remove, source).unwrap().per_bin();
        for k in 0..n {
            let want = if (r..r + len).contains(&k) { per_bin[k - r + s] } else { per_bin[k] };
            prop_assert_eq!(out[k], want);
        }
        let removed: u64 = per_bin[r..r + len].iter().sum();
        let copied: u64 = per_bin[s..s + len].iter().sum();
        prop_assert_eq!(out.iter().sum::<u64>(), a.total_bytes() - removed + copied);
    }

    #[test]
    fn packet_splice_keeps_packets_outside_the_window(
        packets in prop::collection::vec((0u64..10_000, 1u64..9_000), 1..200),
        r in 0u64..8_000, s in 0u64..8_000, len in 1u64..2_000,
    ) {
        let records: Vec<PacketRecord> = packets.iter().map(|&(t, z)| PacketRecord::new(t, z)).collect();
        let end = records.iter().map(|p| p.timestamp_ns).max().unwrap();
        prop_assume!(r <= end && s <= end);
        let remove = Interval::new(r, r + len).unwrap();
        let source = Interval::new(s, s + len).unwrap();
        let out = splice_packets(&records, remove, source).unwrap();
        let mut outside: Vec<_> = out.iter().filter(|p| !remove.contains(p.timestamp_ns)).copied().collect();
        let mut kept: Vec<_> = records.iter().filter(|p| !remove.contains(p.timestamp_ns)).copied().collect();
        outside.sort();
        kept.sort();
        prop_assert_eq!(outside, kept);
        let inside: u64 = out.iter().filter(|p| remove.contains(p.timestamp_ns)).map(|p| p.size).sum();
        let copied: u64 = records.iter().filter(|p| source.contains(p.timestamp_ns)).map(|p| p.size).sum();
        prop_assert_eq!(inside, copied);
    }

    #[test]
    fn trace_and_binned_csv_round_trip(
        packets in prop::collection::vec((0u64..u64::MAX / 2, 1u64..9_000), 1..100),
        per_bin in bins(50),
    ) {
        let records: Vec<PacketRecord> = packets.iter().map(|&(t, s)| PacketRecord::new(t, s)).collect();
        let mut buf = Vec::new();
        write_trace_csv(&records, &mut buf).unwrap();
        prop_assert_eq!(parse_trace_csv(&buf[..], "mem").unwrap(), records);
        prop_assume!(per_bin.len() >= 2);
        let a = arrival(&per_bin, 7_000);
        let mut buf = Vec::new();
        a.write_binned_csv(&mut buf).unwrap();
        prop_assert_eq!(read_binned_csv(&buf[..]).unwrap(), a);
    }

    #[test]
    fn kernel_is_independent_of_chunk_boundaries(
        n in 1usize..8,
        len in 0usize..300,
        cuts in prop::collection::vec(any::<prop::sample::Index>(), 8),
        seed in any::<i64>(),
    ) {
        let vectors: Vec<Vec<i64>> = (0..n)
            .map(|w| (0..len).map(|i| seed.wrapping_mul(31).wrapping_add((w * 1_000 + i) as i64) % 1_000_003).collect())
            .collect();
        let mut bounds: Vec<usize> = cuts[..n - 1].iter().map(|c| c.index(len + 1)).collect();
        bounds.push(0);
        bounds.push(len);
        bounds.sort_unstable();
        let even = ring_allreduce_partitioned(&vectors, &even_partition(len, n)).unwrap();
        let skewed = ring_allreduce_partitioned(&vectors, &bounds).unwrap();
        let sum: Vec<i64> = (0..len).map(|i| vectors.iter().map(|v| v[i]).sum()).collect();
        for w in 0..n {
            prop_assert_eq!(&even.vectors[w], &sum);
            prop_assert_eq!(&skewed.vectors[w], &sum);
        }
        prop_assert_eq!(even.transfers.len(), 2 * n * (n - 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn envelope_matches_brute_force(per_bin in bins(2_000)) {
        let a = arrival(&per_bin, 1_000);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let (values, starts) = brute_envelope(&per_bin);
        prop_assert_eq!(e.values(), &values[..]);
        prop_assert_eq!(e.starts(), &starts[..]);
        prop_assert!(e.is_subadditive() && e.is_nondecreasing());
    }

    #[test]
    fn backlog_three_ways(per_bin in bins(1_500), numer in 1u128..20_000, per_ns in 1u128..20_000) {
        let a = arrival(&per_bin, 1_000);
        let rate = Rate::new(numer, per_ns).unwrap();
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let dense = backlog_series(&a, rate).into_iter().max_by_key(|b| b.scaled()).unwrap();
        prop_assert_eq!(dense, envelope_bmax(&e, rate));
        prop_assert_eq!(dense, max_backlog(&a, rate));
        // with an integral drain the same value is max(A - A⊗S)
        let drain = (numer * 1_000).div_ceil(per_ns);
        let int_rate = Rate::new(drain, 1_000).unwrap();
        let arr = a.cumulative();
        let d = minplus_convolve(&arr, &rate_curve(int_rate, *a.grid())).unwrap();
        let gap = (0..arr.values().len()).map(|k| arr.at(k) - d.at(k)).max().unwrap();
        prop_assert_eq!(BigRational::from_integer(gap.into()), ratio(max_backlog(&a, int_rate)));
    }

    #[test]
    fn bmax_is_convex_and_nonincreasing(per_bin in bins(1_000), rates in prop::collection::btree_set(1u128..50_000, 3..10)) {
        let a = arrival(&per_bin, 1_000);
        // rates in bytes per 10 µs
        let pts: Vec<(BigRational, BigRational)> = rates
            .iter()
            .map(|&r| {
                let rate = Rate::new(r, 10_000).unwrap();
                (BigRational::new(r.into(), 10_000.into()), ratio(max_backlog(&a, rate)))
            })
            .collect();
        for w in pts.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                for k in j + 1..pts.len() {
                    let ((r1, b1), (r2, b2), (r3, b3)) = (&pts[i], &pts[j], &pts[k]);
                    prop_assert!((r3 - r1) * b2 <= (r3 - r2) * b1 + (r2 - r1) * b3);
                }
            }
        }
    }

    #[test]
    fn envelope_dominance_and_potential(flows in prop::collection::vec(bins(400), 2..5)) {
        let fs: Vec<ArrivalFunction> = flows.iter().map(|b| arrival(b, 1_000)).collect();
        let n = fs.iter().map(|f| f.grid().bin_count()).max().unwrap();
        let lags = LagSet::full(TimeGrid::new(1_000, n).unwrap());
        let p = burstiness_potential(&fs, &lags).unwrap();
        let padded: Vec<ArrivalFunction> = fs.iter().map(|f| f.extend_to(n).unwrap()).collect();
        let per_flow: Vec<Vec<u64>> = padded
            .iter()
            .map(|f| burstiness_curve(f, &lags).unwrap().values().to_vec())
            .collect();
        for k in 0..=n {
            let sum: u64 = per_flow.iter().map(|v| v[k]).sum();
            let max = per_flow.iter().map(|v| v[k]).max().unwrap();
            prop_assert_eq!(p.sum_env[k], sum);
            prop_assert!(p.agg_env[k] <= sum && p.agg_env[k] >= max);
            prop_assert_eq!(p.potential[k], sum - p.agg_env[k]);
        }
    }

    #[test]
    fn peak_to_mean_is_at_least_one_on_divisor_lags(per_bin in bins(500)) {
        let a = arrival(&per_bin, 1_000);
        let e = burstiness_curve(&a, &LagSet::full(*a.grid())).unwrap();
        let ptm = peak_to_mean_of(&a, &e).unwrap();
        // a lag dividing the duration tiles it, so some window carries at
        // least the mean; other lags can fall below it ([1, 0, 1] at 2 bins)
        for p in ptm.points().iter().filter(|p| per_bin.len() % p.lag_bins == 0) {
            prop_assert!(p.numer >= p.denom);
        }
        let last = ptm.points().last().unwrap();
        prop_assert_eq!(last.lag_bins, per_bin.len());
        prop_assert_eq!(last.numer, last.denom);
    }
}
